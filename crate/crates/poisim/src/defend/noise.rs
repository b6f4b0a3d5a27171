//! Parameter-level defenses: Gaussian noise and embedding reset.

use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::recsys::ModelParams;
use crate::rng;
use crate::Result;

use super::SensitivePoiSet;

/// Add i.i.d. Gaussian noise of standard deviation `lambda` to every
/// parameter. `lambda` 0 leaves the parameters bit-identical.
pub fn apply_ldp(params: &ModelParams, lambda: f64, seed: u64) -> Result<ModelParams> {
    if lambda < 0.0 {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    let mut out = params.clone();
    if lambda == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, lambda).map_err(|e| Error::invalid(format!("bad noise: {e}")));
    let normal = normal?;
    let mut rng = rng::stream(seed, "ldp", &[]);
    for group in [
        &mut out.embeddings,
        &mut out.query_weights,
        &mut out.key_weights,
        &mut out.position_weights,
    ] {
        for v in group.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Overwrite the embedding rows of the sensitive POIs with their initial
/// values; every other parameter stays bit-identical.
pub fn apply_er(
    params: &ModelParams,
    init_params: &ModelParams,
    sensitive: &SensitivePoiSet,
) -> Result<ModelParams> {
    if params.embeddings.dim() != init_params.embeddings.dim() {
        return Err(Error::invalid("parameter shapes differ from the initial model"));
    }
    let mut out = params.clone();
    for &p in &sensitive.poi_ids {
        if p >= out.poi_count() {
            return Err(Error::invalid(format!("sensitive poi {p} out of range")));
        }
        out.embeddings.row_mut(p).assign(&init_params.embeddings.row(p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recsys::{init_model, InitSpec};

    fn sensitive(ids: &[usize]) -> SensitivePoiSet {
        SensitivePoiSet {
            user_id: 0,
            poi_ids: ids.to_vec(),
            truncated: false,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let params = init_model(20, 8, &InitSpec::new(1)).unwrap();
        let noisy = apply_ldp(&params, 0.0, 5).unwrap();
        assert_eq!(noisy, params);
    }

    #[test]
    fn noise_is_deterministic_and_preserves_shape() {
        let params = init_model(20, 8, &InitSpec::new(1)).unwrap();
        let a = apply_ldp(&params, 0.01, 5).unwrap();
        let b = apply_ldp(&params, 0.01, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.embeddings.dim(), params.embeddings.dim());
        assert_ne!(a, params);
    }

    #[test]
    fn empirical_noise_std_matches_lambda() {
        // 10^5+ entries: the sample std of (noisy - clean) must sit within
        // 2% of lambda.
        let params = init_model(2000, 64, &InitSpec::new(2)).unwrap();
        let lambda = 0.05;
        let noisy = apply_ldp(&params, lambda, 9).unwrap();
        let diffs: Vec<f64> = noisy
            .embeddings
            .iter()
            .zip(params.embeddings.iter())
            .map(|(a, b)| a - b)
            .collect();
        let n = diffs.len() as f64;
        assert!(n >= 1e5);
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(
            (std - lambda).abs() / lambda < 0.02,
            "std {std} vs lambda {lambda}"
        );
    }

    #[test]
    fn reset_restores_only_sensitive_rows() {
        let init = InitSpec::new(3);
        let start = init_model(10, 8, &init).unwrap();
        let mut trained = start.clone();
        trained.embeddings += 0.5;
        trained.query_weights += 0.1;
        let out = apply_er(&trained, &start, &sensitive(&[2, 7])).unwrap();
        for p in 0..10 {
            let want = if p == 2 || p == 7 {
                start.embeddings.row(p)
            } else {
                trained.embeddings.row(p)
            };
            assert_eq!(out.embeddings.row(p), want);
        }
        // Everything outside the embedding table is untouched.
        assert_eq!(out.query_weights, trained.query_weights);
        assert_eq!(out.position_weights, trained.position_weights);
    }

    #[test]
    fn empty_sensitive_set_is_identity() {
        let init = InitSpec::new(3);
        let start = init_model(10, 8, &init).unwrap();
        let mut trained = start.clone();
        trained.embeddings += 0.5;
        let out = apply_er(&trained, &start, &sensitive(&[])).unwrap();
        assert_eq!(out, trained);
    }

    #[test]
    fn full_sensitive_set_restores_the_table() {
        let init = InitSpec::new(3);
        let start = init_model(10, 8, &init).unwrap();
        let mut trained = start.clone();
        trained.embeddings += 0.5;
        let all: Vec<usize> = (0..10).collect();
        let out = apply_er(&trained, &start, &sensitive(&all)).unwrap();
        assert_eq!(out.embeddings, start.embeddings);
    }

    #[test]
    fn out_of_range_sensitive_poi_is_an_error() {
        let init = InitSpec::new(3);
        let start = init_model(10, 8, &init).unwrap();
        assert!(apply_er(&start, &start, &sensitive(&[10])).is_err());
    }
}
