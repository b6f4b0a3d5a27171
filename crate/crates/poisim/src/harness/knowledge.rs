//! Access-control shim between the collaboration stage and the attack stage.
//!
//! An export carries exactly the artifact its protocol shares. Any attempt
//! to read the other kind is denied, so a misconfigured attack cannot
//! quietly see more than the protocol exposes.

use crate::collab::SoftDecisionSet;
use crate::error::Error;
use crate::recsys::ModelParams;
use crate::Result;

use super::Protocol;

/// One user's exported knowledge.
#[derive(Debug, Clone)]
pub struct KnowledgeExport {
    protocol: Protocol,
    params: Option<ModelParams>,
    soft: Option<SoftDecisionSet>,
}

impl KnowledgeExport {
    pub fn model_sharing(params: ModelParams) -> Self {
        KnowledgeExport {
            protocol: Protocol::ModelSharing,
            params: Some(params),
            soft: None,
        }
    }

    pub fn distillation(soft: SoftDecisionSet) -> Self {
        KnowledgeExport {
            protocol: Protocol::Distillation,
            params: None,
            soft: Some(soft),
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    /// Model parameters; denied under distillation.
    pub fn model_params(&self) -> Result<&ModelParams> {
        self.params.as_ref().ok_or_else(|| {
            Error::AccessDenied(
                "the distillation protocol exports soft decisions, not model parameters".into(),
            )
        })
    }

    /// Soft decisions; denied under model sharing.
    pub fn soft_decisions(&self) -> Result<&SoftDecisionSet> {
        self.soft.as_ref().ok_or_else(|| {
            Error::AccessDenied(
                "the model-sharing protocol exports parameters, not soft decisions".into(),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::{init_model, InitSpec};
    use ndarray::Array2;

    #[test]
    fn exports_grant_exactly_their_protocol_artifact() {
        let params = init_model(10, 8, &InitSpec::new(1)).unwrap();
        let ms = KnowledgeExport::model_sharing(params);
        assert!(ms.model_params().is_ok());
        assert!(matches!(ms.soft_decisions(), Err(Error::AccessDenied(_))));

        let kd = KnowledgeExport::distillation(SoftDecisionSet {
            reference_hash: [0u8; 32],
            probs: Array2::zeros((2, 10)),
        });
        assert!(kd.soft_decisions().is_ok());
        assert!(matches!(kd.model_params(), Err(Error::AccessDenied(_))));
    }
}
