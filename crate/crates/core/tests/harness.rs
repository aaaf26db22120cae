//! End-to-end checks of the experiment pipeline and its exported files.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oa_reorder::error::Error;
use oa_reorder::harness::{export_report, files, load_scenario, run_baseline, run_experiment, Pipeline, Scenario};
use oa_reorder::reconfig::TransitionScenario;

fn quick(name: &str) -> Scenario {
    let mut s = load_scenario(name).unwrap();
    s.file.counts.extra_initials = 1;
    s
}

#[test]
fn monitored_set_follows_the_case() {
    for (name, size) in [("case1", 1), ("case2", 2)] {
        let r = run_experiment(quick(name)).unwrap();
        assert_eq!(r.monitored_batches.len(), size);
        assert_eq!(r.replay_trajectory.monitored.len(), size);
        assert!((0.0..=1.0).contains(&r.min_q_percentile));
        assert!((0.0..=1.0).contains(&r.mean_q_percentile));
        assert!(r.baseline.endpoints_match);
        assert_eq!(r.variants.len(), 1);
        assert_ne!(r.variants[0].initial, r.configs.initial);
    }
}

#[test]
fn flat_baseline_when_nothing_changes() {
    let p = Pipeline::new(quick("case2")).unwrap();
    let pair = p.select_configs().unwrap();
    let t = TransitionScenario::new(
        pair.target.clone(),
        pair.target.clone(),
        p.scenario().monitored().clone(),
        p.scenario().current_plan(),
    )
    .unwrap();
    let stats = run_baseline(&t, p.oracle(), 20, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(stats.len(), 20);
    let v = stats.records[0].min_q_db;
    assert!(stats.records.iter().all(|r| r.min_q_db == v && r.mean_q_db == v));
}

#[test]
fn baseline_is_seeded() {
    let p = Pipeline::new(quick("case1")).unwrap();
    let pair = p.select_configs().unwrap();
    let t = p.transition(&pair.initial, &pair.target).unwrap();
    let a = p.baseline(&t).unwrap();
    assert_eq!(a.len(), 100);
    assert_eq!(a, p.baseline(&t).unwrap());
}

#[test]
fn exported_files_have_the_documented_shape() {
    let r = run_experiment(quick("case2")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_report(&r, dir.path()).unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();

    let traj = read(files::TRAJ_REPLAY);
    assert_eq!(traj.lines().count(), 1 + 15);
    assert!(traj.starts_with("step,scalar_q_db,q_db_batch_2,q_db_batch_3\n"));
    assert_eq!(read(files::TRAJ_DT).lines().count(), 16);

    let cdf = read(files::BASELINE_CDF);
    for metric in ["min_q", "mean_q"] {
        let last = cdf.lines().rfind(|l| l.starts_with(metric)).unwrap();
        assert!(last.ends_with(",1.0"), "{last}");
    }
    assert_eq!(read(files::BASELINE_ORDERS).lines().count(), 101);

    let summary: serde_json::Value = serde_json::from_str(&read(files::SUMMARY)).unwrap();
    let seeds = r.scenario.seeds;
    for (k, v) in [
        ("sampling", seeds.sampling),
        ("training", seeds.training),
        ("ga", seeds.ga),
        ("baseline", seeds.baseline),
    ] {
        assert_eq!(summary["scenario"]["seeds"][k].as_u64(), Some(v));
    }
    assert_eq!(summary["decisions"]["degradation_tolerance_db"].as_f64(), Some(0.1));
    assert_eq!(summary["ga"]["order"].as_array().unwrap().len(), 14);
    assert!(dir.path().join("trajectory_variant_0_replay.csv").exists());
}

#[test]
fn stage_failures_name_the_stage() {
    let mut s = quick("case2");
    s.file.counts.dataset_size = 5;
    s.file.counts.train_size = 5;
    let err = run_experiment(s).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: "dataset", .. }), "{err}");
    assert!(err.to_string().contains("dataset"));
}
