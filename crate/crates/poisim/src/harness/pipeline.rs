//! Experiment orchestration: data preparation, local training, collaboration
//! rounds, defense, knowledge export, attack, and evaluation. Stages are
//! separable so that sweeps can reuse everything upstream of the knob they
//! vary; `run_trial` and `run_experiment` compose them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;

use crate::collab::{emit_soft_decisions, form_groups, share_models_round, distill_round};
use crate::defend::{
    apply_er, apply_ldp, build_probes, select_sensitive, train_with_agd, AgdConfig,
    SensitivePoiSet,
};
use crate::error::Error;
use crate::evalkit::{attack_f1, hr_at_k, sensitive_f1, UserEval};
use crate::geodata::{
    cluster_regions, filter_min_interactions, ingest_csv, read_checkin_csv, split_dataset,
    to_category_sequence, CategorySequence, CheckinSequence, DatasetSplits, IngestConfig, PoiId,
    PoiRecord, RegionMap, UserId,
};
use crate::ptia::{
    baseline_imia, baseline_kmeans, baseline_random, build_shadow_model, collect_all_shadow_sets,
    make_attack_samples, run_ptia_with_model, train_attack_mlp, AttackContext, AttackMlp,
    AttackSample, AttackVerdict, MlpTrainConfig, PtiaConfig, ShadowConfig, ShadowSequenceSet,
};
use crate::recsys::{init_model, train_local, InitSpec, ModelParams};
use crate::rng;
use crate::Result;

use super::knowledge::KnowledgeExport;
use super::synthetic::gen_synthetic;
use super::{AttackKind, DatasetSource, DefenseConfig, DimChoice, ExperimentConfig, Protocol};

/// Prepared data for one trial: everything upstream of training.
#[derive(Debug, Clone)]
pub struct TrialWorld {
    pub pois: Vec<PoiRecord>,
    pub splits: DatasetSplits,
    pub region_map: RegionMap,
    pub category_pool: Vec<CategorySequence>,
    pub users: Vec<UserId>,
    pub init: InitSpec,
    pub dims: BTreeMap<UserId, usize>,
    pub global_frequency: Vec<f64>,
    pub probes: BTreeMap<PoiId, Vec<PoiId>>,
    pub sensitive: BTreeMap<UserId, SensitivePoiSet>,
    pub user_train: BTreeMap<UserId, Vec<CheckinSequence>>,
    pub visited: BTreeMap<UserId, BTreeSet<PoiId>>,
}

impl TrialWorld {
    fn shadow_config(cfg: &ExperimentConfig) -> ShadowConfig {
        ShadowConfig {
            dim: cfg.hyper.shadow_dim,
            learning_rate: cfg.hyper.shadow_lr,
            ..ShadowConfig::default()
        }
    }

    fn ptia_config(cfg: &ExperimentConfig) -> PtiaConfig {
        PtiaConfig {
            shadow_count: cfg.hyper.shadow_count,
            shadow: Self::shadow_config(cfg),
            decision_threshold: 0.5,
        }
    }

    pub fn unvisited(&self, user: UserId) -> Vec<PoiId> {
        let visited = &self.visited[&user];
        (0..self.pois.len()).filter(|p| !visited.contains(p)).collect()
    }
}

/// Load, filter, split, regionalize, and assign per-user structure.
pub fn prepare_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialWorld> {
    let rows = match &cfg.dataset {
        DatasetSource::Synthetic { spec } => gen_synthetic(spec)?
            .rows
            .iter()
            .map(|r| r.to_raw())
            .collect::<Result<Vec<_>>>()?,
        DatasetSource::Csv { path } => read_checkin_csv(File::open(path)?)?,
    };
    let ingested = ingest_csv(&rows, &IngestConfig::default())?;
    let filtered =
        filter_min_interactions(&ingested.sequences, &ingested.pois, cfg.hyper.min_interactions)?;
    let splits = split_dataset(
        &filtered.sequences,
        &filtered.pois,
        rng::derive(seed, "split", &[]),
    )?;
    let region_map = cluster_regions(
        &filtered.pois,
        cfg.hyper.regions,
        rng::derive(seed, "regions", &[]),
    )?;
    let category_pool = splits
        .attacker_prior
        .iter()
        .map(|s| to_category_sequence(s, &filtered.pois))
        .collect::<Result<Vec<_>>>()?;

    let mut user_train = BTreeMap::new();
    let mut visited = BTreeMap::new();
    let mut users = Vec::new();
    for u in splits.users() {
        let train = splits.training_sequences(u);
        if train.is_empty() {
            continue;
        }
        visited.insert(u, splits.visited_set(u));
        user_train.insert(u, train);
        users.push(u);
    }
    if users.is_empty() {
        return Err(Error::DatasetExhausted("no evaluable users after splitting".into()));
    }

    let init = InitSpec::new(rng::derive(seed, "init", &[]));
    let dims = match cfg.hyper.dim {
        DimChoice::Fixed { d } => users.iter().map(|&u| (u, d)).collect(),
        DimChoice::Mixed => {
            let mut pool: Vec<usize> = (0..users.len())
                .map(|i| crate::recsys::SUPPORTED_DIMS[i % crate::recsys::SUPPORTED_DIMS.len()])
                .collect();
            use rand::seq::SliceRandom;
            pool.shuffle(&mut rng::stream(seed, "dims", &[]));
            users.iter().copied().zip(pool).collect()
        }
    };

    let mut global_frequency = vec![0.0f64; filtered.pois.len()];
    for s in &filtered.sequences {
        for &p in &s.poi_ids {
            global_frequency[p] += 1.0;
        }
    }

    let probes = build_probes(&filtered.pois, rng::derive(seed, "probes", &[]));

    let mut sensitive = BTreeMap::new();
    if cfg.hyper.sensitive_g > 0 {
        for &u in &users {
            sensitive.insert(
                u,
                select_sensitive(
                    u,
                    &visited[&u],
                    &global_frequency,
                    cfg.hyper.sensitive_g,
                    rng::derive(seed, "sensitive", &[]),
                )?,
            );
        }
    }

    Ok(TrialWorld {
        pois: filtered.pois,
        splits,
        region_map,
        category_pool,
        users,
        init,
        dims,
        global_frequency,
        probes,
        sensitive,
        user_train,
        visited,
    })
}

/// Local training followed by the configured collaboration rounds.
pub fn train_trial(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    seed: u64,
) -> Result<BTreeMap<UserId, ModelParams>> {
    let mut models: BTreeMap<UserId, ModelParams> = BTreeMap::new();
    for &u in &world.users {
        let start = init_model(world.pois.len(), world.dims[&u], &world.init)?;
        let trained = train_local(
            &start,
            &world.user_train[&u],
            &cfg.hyper.train,
            rng::derive(seed, "train", &[u as u64]),
        )?;
        models.insert(u, trained);
    }

    let region_sets: Vec<(UserId, BTreeSet<usize>)> = world
        .users
        .iter()
        .map(|&u| {
            (
                u,
                world
                    .region_map
                    .regions_of(world.visited[&u].iter().copied())
                    .into_iter()
                    .collect(),
            )
        })
        .collect();

    for round in 0..cfg.hyper.rounds {
        let groups = form_groups(&region_sets, cfg.hyper.group_size, round)?;
        match cfg.protocol {
            Protocol::ModelSharing => {
                for group in &groups {
                    if group.members.len() < 2 {
                        continue;
                    }
                    let member_params: Vec<ModelParams> = group
                        .members
                        .iter()
                        .map(|u| models[u].clone())
                        .collect();
                    let training: Vec<Vec<CheckinSequence>> = group
                        .members
                        .iter()
                        .map(|u| world.user_train[u].clone())
                        .collect();
                    let updated = share_models_round(
                        &member_params,
                        &group.members,
                        &training,
                        &cfg.hyper.train,
                        rng::derive(seed, "share", &[]),
                        round,
                    )?;
                    for (u, p) in group.members.iter().zip(updated) {
                        models.insert(*u, p);
                    }
                }
            }
            Protocol::Distillation => {
                let mut decisions = BTreeMap::new();
                for &u in &world.users {
                    decisions.insert(u, emit_soft_decisions(&models[&u], &world.splits.reference)?);
                }
                for group in &groups {
                    if group.members.len() < 2 {
                        continue;
                    }
                    for &u in &group.members {
                        let neighbors: Vec<&crate::collab::SoftDecisionSet> = group
                            .members
                            .iter()
                            .filter(|&&v| v != u)
                            .map(|v| &decisions[v])
                            .collect();
                        let updated = distill_round(
                            &models[&u],
                            &world.user_train[&u],
                            &world.splits.reference,
                            &decisions[&u],
                            &neighbors,
                            cfg.hyper.distill_weight,
                            &cfg.hyper.train,
                            rng::derive(seed, "distill", &[round as u64, u as u64]),
                        )?;
                        models.insert(u, updated);
                    }
                }
            }
        }
    }
    Ok(models)
}

/// The adversary's trial-constant assets.
pub struct AttackerToolkit {
    pub mlps: BTreeMap<usize, AttackMlp>,
    pub pretrain_samples: BTreeMap<usize, Vec<AttackSample>>,
    pub shadow_sets: BTreeMap<PoiId, ShadowSequenceSet>,
    pub mean_true_set_size: usize,
}

/// Pretrain public models and attack classifiers for every needed latent
/// dimension, and assemble shadow sequences.
pub fn build_attacker(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    seed: u64,
) -> Result<AttackerToolkit> {
    let mut dims_needed: BTreeSet<usize> = BTreeSet::new();
    match cfg.protocol {
        Protocol::ModelSharing => dims_needed.extend(world.dims.values().copied()),
        Protocol::Distillation => {
            dims_needed.insert(cfg.hyper.shadow_dim);
        }
    }
    if matches!(cfg.defense, DefenseConfig::Agd { .. }) {
        dims_needed.extend(world.dims.values().copied());
    }

    // Halve the prior pool into member and non-member sequences.
    let prior = &world.splits.attacker_prior;
    let mut order: Vec<usize> = (0..prior.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(seed, "public-split", &[]));
    let half = prior.len() / 2;
    if half == 0 {
        return Err(Error::DatasetExhausted("prior pool too small to halve".into()));
    }
    let members: Vec<CheckinSequence> = order[..half].iter().map(|&i| prior[i].clone()).collect();
    let nonmembers: Vec<CheckinSequence> =
        order[half..2 * half].iter().map(|&i| prior[i].clone()).collect();

    let mut mlps = BTreeMap::new();
    let mut pretrain_samples = BTreeMap::new();
    for &dim in &dims_needed {
        let start = init_model(world.pois.len(), dim, &world.init)?;
        let public = train_local(
            &start,
            &members,
            &cfg.hyper.train,
            rng::derive(seed, "public-train", &[dim as u64]),
        )?;
        let samples = make_attack_samples(&public, &members, &nonmembers)?;
        let mlp = train_attack_mlp(
            &samples,
            dim,
            &MlpTrainConfig::default(),
            rng::derive(seed, "attack-mlp", &[dim as u64]),
        )?;
        mlps.insert(dim, mlp);
        pretrain_samples.insert(dim, samples);
    }

    let shadow_sets = if cfg.attack == AttackKind::Ptia {
        let ptia_cfg = TrialWorld::ptia_config(cfg);
        let ctx = AttackContext {
            pois: &world.pois,
            region_map: &world.region_map,
            init: &world.init,
            prior_pool: &world.splits.attacker_prior,
            category_pool: &world.category_pool,
            reference: &world.splits.reference,
            mlps: &mlps,
            config: &ptia_cfg,
            seed,
        };
        collect_all_shadow_sets(&ctx)?
    } else {
        BTreeMap::new()
    };

    let mean_true_set_size = (world
        .users
        .iter()
        .map(|u| world.visited[u].len() as f64)
        .sum::<f64>()
        / world.users.len() as f64)
        .round() as usize;

    Ok(AttackerToolkit {
        mlps,
        pretrain_samples,
        shadow_sets,
        mean_true_set_size,
    })
}

/// Post-collaboration, pre-export models and the exported knowledge.
pub struct DefendedModels {
    pub models: BTreeMap<UserId, ModelParams>,
    pub exports: BTreeMap<UserId, KnowledgeExport>,
    pub flags: Vec<String>,
}

/// Apply the configured defense and export knowledge per the protocol.
pub fn apply_defense_stage(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    models: &BTreeMap<UserId, ModelParams>,
    toolkit: &AttackerToolkit,
    seed: u64,
) -> Result<DefendedModels> {
    let mut defended = BTreeMap::new();
    let mut flags = Vec::new();
    for &u in &world.users {
        let model = &models[&u];
        let out = match cfg.defense {
            DefenseConfig::None => model.clone(),
            DefenseConfig::Ldp { lambda } => {
                apply_ldp(model, lambda, rng::derive(seed, "ldp", &[u as u64]))?
            }
            DefenseConfig::Er => {
                let start = init_model(world.pois.len(), world.dims[&u], &world.init)?;
                apply_er(model, &start, &world.sensitive[&u])?
            }
            DefenseConfig::Agd { mu } => {
                let agd = AgdConfig {
                    mu,
                    unrelated_count: cfg.hyper.unrelated_count,
                    ..AgdConfig::default()
                };
                let (out, _, diag) = train_with_agd(
                    model,
                    &world.user_train[&u],
                    &world.sensitive[&u],
                    &world.probes,
                    &world.unvisited(u),
                    &toolkit.pretrain_samples[&world.dims[&u]],
                    &agd,
                    &cfg.hyper.train,
                    rng::derive(seed, "agd", &[u as u64]),
                )?;
                flags.push(format!("agd user {u}: {} epochs", diag.epochs_run));
                out
            }
        };
        defended.insert(u, out);
    }

    let mut exports = BTreeMap::new();
    for &u in &world.users {
        let export = match cfg.protocol {
            Protocol::ModelSharing => KnowledgeExport::model_sharing(defended[&u].clone()),
            Protocol::Distillation => KnowledgeExport::distillation(emit_soft_decisions(
                &defended[&u],
                &world.splits.reference,
            )?),
        };
        exports.insert(u, export);
    }
    Ok(DefendedModels {
        models: defended,
        exports,
        flags,
    })
}

/// Normalize exported knowledge to a model per user: the identity under
/// model sharing, a fitted shadow under distillation. Every attacker
/// consumes the result.
pub fn normalize_knowledge(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    defended: &DefendedModels,
    seed: u64,
) -> Result<BTreeMap<UserId, ModelParams>> {
    let mut normalized = BTreeMap::new();
    for &u in &world.users {
        let export = &defended.exports[&u];
        let params = match cfg.protocol {
            Protocol::ModelSharing => export.model_params()?.clone(),
            Protocol::Distillation => build_shadow_model(
                export.soft_decisions()?,
                &world.splits.reference,
                &world.init,
                &TrialWorld::shadow_config(cfg),
                rng::derive(seed, "user-shadow", &[u as u64]),
            )?,
        };
        normalized.insert(u, params);
    }
    Ok(normalized)
}

/// Run the configured attacker against every user.
pub fn run_attack_stage(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    toolkit: &AttackerToolkit,
    normalized: &BTreeMap<UserId, ModelParams>,
    seed: u64,
) -> Result<BTreeMap<UserId, AttackVerdict>> {
    let ptia_cfg = TrialWorld::ptia_config(cfg);
    let ctx = AttackContext {
        pois: &world.pois,
        region_map: &world.region_map,
        init: &world.init,
        prior_pool: &world.splits.attacker_prior,
        category_pool: &world.category_pool,
        reference: &world.splits.reference,
        mlps: &toolkit.mlps,
        config: &ptia_cfg,
        seed,
    };
    let mut verdicts = BTreeMap::new();
    for &u in &world.users {
        let params = &normalized[&u];
        let verdict = match cfg.attack {
            AttackKind::Ptia => run_ptia_with_model(&ctx, u, params, &toolkit.shadow_sets)?,
            AttackKind::Random => {
                let (set, clamped) = baseline_random(
                    world.pois.len(),
                    toolkit.mean_true_set_size,
                    rng::derive(seed, "random-attack", &[u as u64]),
                );
                let predicted: Vec<PoiId> = set.into_iter().collect();
                if clamped {
                    // Impossible at sane scales; surface it in the verdict.
                }
                baseline_verdict(world, u, predicted)
            }
            AttackKind::Kmeans => {
                let (set, _degenerate) =
                    baseline_kmeans(params, rng::derive(seed, "kmeans-attack", &[u as u64]))?;
                baseline_verdict(world, u, set.into_iter().collect())
            }
            AttackKind::Imia => {
                let set = baseline_imia(params, &world.init, cfg.hyper.imia_quantile)?;
                baseline_verdict(world, u, set.into_iter().collect())
            }
        };
        verdicts.insert(u, verdict);
    }
    Ok(verdicts)
}

/// Baselines carry no region detector; the regions touched by their
/// predictions stand in, which leaves the region-zero rule to recall alone.
fn baseline_verdict(world: &TrialWorld, user: UserId, predicted: Vec<PoiId>) -> AttackVerdict {
    let detected = world.region_map.regions_of(predicted.iter().copied());
    AttackVerdict {
        user_id: user,
        detected_regions: detected,
        region_scores: Vec::new(),
        predicted,
        probe_probabilities: Vec::new(),
    }
}

/// Score the attack and the recommendation quality of the defended models.
pub fn evaluate_trial(
    cfg: &ExperimentConfig,
    world: &TrialWorld,
    defended: &DefendedModels,
    verdicts: &BTreeMap<UserId, AttackVerdict>,
) -> Result<Vec<UserEval>> {
    let mut evals = Vec::new();
    for &u in &world.users {
        let model = &defended.models[&u];
        let history: BTreeSet<PoiId> = world
            .splits
            .user_sequences(u)
            .iter()
            .flat_map(|s| s.poi_ids.iter().copied())
            .collect();

        let mut hits = 0usize;
        let mut trials = 0usize;
        for seq in world.splits.user_sequences(u) {
            let (Some(test), prefix) = (seq.test(), seq.train_part()) else {
                continue;
            };
            if prefix.is_empty() {
                continue;
            }
            let out = hr_at_k(model, prefix, test, &history, &world.pois, cfg.hyper.hr_k)?;
            trials += 1;
            if out.hit {
                hits += 1;
            }
        }
        let hit_ratio = (trials > 0).then(|| hits as f64 / trials as f64);

        let verdict = &verdicts[&u];
        let predicted: BTreeSet<PoiId> = verdict.predicted.iter().copied().collect();
        let f1 = attack_f1(
            &predicted,
            &world.visited[&u],
            &world.region_map,
            &verdict.detected_regions,
            cfg.hyper.f1_mode,
        )
        .ok();
        let sens = world
            .sensitive
            .get(&u)
            .and_then(|s| sensitive_f1(&predicted, s).ok());

        evals.push(UserEval {
            user_id: u,
            hit_ratio,
            eval_instances: trials,
            attack_f1: f1,
            sensitive_f1: sens,
        });
    }
    Ok(evals)
}

/// Everything one trial produces.
pub struct TrialOutcome {
    pub seed: u64,
    pub world: TrialWorld,
    pub defended: DefendedModels,
    pub verdicts: BTreeMap<UserId, AttackVerdict>,
    pub evals: Vec<UserEval>,
}

/// Run one full trial for one seed.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialOutcome> {
    let world = prepare_trial(cfg, seed)?;
    let models = train_trial(cfg, &world, seed)?;
    let toolkit = build_attacker(cfg, &world, seed)?;
    let defended = apply_defense_stage(cfg, &world, &models, &toolkit, seed)?;
    let normalized = normalize_knowledge(cfg, &world, &defended, seed)?;
    let verdicts = run_attack_stage(cfg, &world, &toolkit, &normalized, seed)?;
    let evals = evaluate_trial(cfg, &world, &defended, &verdicts)?;
    Ok(TrialOutcome {
        seed,
        world,
        defended,
        verdicts,
        evals,
    })
}

/// Run every seed and assemble the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<super::ExperimentReport> {
    cfg.validate()?;
    let mut trials = Vec::new();
    for &seed in &cfg.seeds {
        let outcome = run_trial(cfg, seed)?;
        trials.push(super::report::trial_report(seed, &outcome));
    }
    Ok(super::report::experiment_report(cfg, trials))
}
