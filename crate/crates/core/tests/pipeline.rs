use hcr_core::config::ExperimentConfig;
use hcr_core::eval::{causal_fidelity, non_train_candidates};
use hcr_core::experiment::{self, ABLATION_VARIANTS};
use hcr_core::{build_world, chronological_split, simulate_log, ItemId, UserId, WorldSpec};

#[test]
fn ground_truth_scorer_has_unit_fidelity() {
    let world = build_world(WorldSpec::default(), 2).unwrap();
    let log = simulate_log(&world, 2).unwrap();
    let split = chronological_split(&log, 0.7).unwrap();
    let truth = |u: UserId, i: ItemId| world.true_interventional(u, i);
    let fidelity = causal_fidelity(&truth, &world, &non_train_candidates(&split)).unwrap();
    assert!((fidelity - 1.0).abs() < 1e-12, "{fidelity}");
    let reversed = |u: UserId, i: ItemId| -world.true_interventional(u, i);
    let fidelity = causal_fidelity(&reversed, &world, &non_train_candidates(&split)).unwrap();
    assert!((fidelity + 1.0).abs() < 1e-12, "{fidelity}");
}

#[test]
fn ablation_hcr_not_below_mediator_head() {
    let cfg = ExperimentConfig::default();
    let table = experiment::ablate(&cfg, None).unwrap();
    assert_eq!(table.rows.len(), ABLATION_VARIANTS.len() * (cfg.seeds.len() + 1));
    let hcr = table.fidelities("HCR");
    let s2 = table.fidelities("HCR_S2");
    let wins = hcr.iter().zip(&s2).filter(|(h, s)| h >= s).count();
    assert!(wins >= 4, "HCR >= HCR_S2 in {wins}/5 seeds: {hcr:?} vs {s2:?}");
    let again = experiment::ablate(&cfg, None).unwrap();
    assert_eq!(table.to_csv(), again.to_csv());
}

#[test]
fn simulate_then_train_then_evaluate_round_trip() {
    let mut cfg = ExperimentConfig::default();
    cfg.world = WorldSpec { num_users: 40, num_items: 60, impressions_per_user: 30, ..WorldSpec::default() };
    for run in cfg.runs.values_mut() {
        run.max_epochs = 4;
    }
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let (summary, manifest) = experiment::simulate(&cfg, 3, &data).unwrap();
    assert_eq!(summary.records, 40 * 30);
    assert!(manifest.missing_files().is_empty());

    let models = dir.path().join("models");
    let outcome = experiment::train_run(&cfg, "hcr_ns", &data, &models, None).unwrap();
    assert!(!outcome.model.config.share_embeddings);
    assert!(outcome.manifest.missing_files().is_empty());
    assert_eq!(outcome.manifest.config_hash, cfg.hash());

    let mut opts = experiment::EvaluateOptions::new(&models.join("hcr_ns.ckpt"), &data);
    opts.ks = vec![5];
    opts.ground_truth = Some(data.join(experiment::GROUND_TRUTH_FILE));
    let report = experiment::evaluate(&opts).unwrap();
    assert!(report.find("HCR", "test", "all", "fidelity", None).is_some());
    assert!(report.find("HCR", "valid", "all", "ndcg", Some(5)).is_some());
}

#[test]
fn exposure_factor_needs_exposure_file() {
    let mut cfg = ExperimentConfig::default();
    cfg.world = WorldSpec { num_users: 20, num_items: 30, impressions_per_user: 20, ..WorldSpec::default() };
    for run in cfg.runs.values_mut() {
        run.max_epochs = 2;
        run.exposure_factor = true;
    }
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    experiment::simulate(&cfg, 1, &data).unwrap();
    let out = dir.path().join("m");
    let model = experiment::train_run(&cfg, "hcr", &data, &out, None).unwrap().model;
    assert!(model.config.exposure_factor);
    std::fs::remove_file(data.join(experiment::EXPOSURE_FILE)).unwrap();
    assert!(experiment::train_run(&cfg, "hcr", &data, &out, None).is_err());
}
