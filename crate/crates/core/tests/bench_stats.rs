use rrt_mppi::bench::{aggregate, archive_to_string, normalized_cost, read_archive, run_benchmark, ArchiveRecord, BenchConfig, ControllerName};
use rrt_mppi::controller::{Outcome, TrialRecord};
use rrt_mppi::world::RobotKind;

fn rec(tree: usize, controller: ControllerName, trial: usize, outcome: Outcome, cost: f64) -> ArchiveRecord {
    ArchiveRecord {
        config_hash: "h".into(),
        env: "e".into(),
        robot: RobotKind::Point,
        tree,
        controller,
        trial,
        seed: 0,
        record: TrialRecord {
            outcome,
            failure: None,
            reached_goal: outcome != Outcome::Failure,
            collided: outcome == Outcome::Collision,
            first_collision_step: None,
            true_cost: cost,
            indicator_cost: 0.0,
            action_cost: cost,
            steps: 1,
            trajectory: vec![],
        },
    }
}

use ControllerName::{Full, Min, Naive};
use Outcome::{Collision, Failure, Success};

/// Worked by hand:
/// tree 0: min {10, 12, 14} → 12; full {9, 11, 10} → 10 → 0.8333…; naive {11, 11, 11, 99 collided} → 11/12.
/// tree 1: min {20, 20, 20} → 20; full {22, 24, 20, failure} → 22 → 1.1; naive only 2 clean → excluded.
/// tree 2: min only 2 clean → every controller present there is excluded.
fn sheet() -> Vec<ArchiveRecord> {
    let mut v = vec![];
    for (t, c) in [10.0, 12.0, 14.0].into_iter().enumerate() {
        v.push(rec(0, Min, t, Success, c));
    }
    for (t, c) in [9.0, 11.0, 10.0].into_iter().enumerate() {
        v.push(rec(0, Full, t, Success, c));
    }
    for (t, c) in [11.0, 11.0, 11.0].into_iter().enumerate() {
        v.push(rec(0, Naive, t, Success, c));
    }
    v.push(rec(0, Naive, 3, Collision, 99.0));
    for t in 0..3 {
        v.push(rec(1, Min, t, Success, 20.0));
    }
    for (t, c) in [22.0, 24.0, 20.0].into_iter().enumerate() {
        v.push(rec(1, Full, t, Success, c));
    }
    v.push(rec(1, Full, 3, Failure, 0.0));
    v.push(rec(1, Naive, 0, Success, 15.0));
    v.push(rec(1, Naive, 1, Success, 15.0));
    v.push(rec(1, Naive, 2, Collision, 15.0));
    v.push(rec(2, Min, 0, Success, 5.0));
    v.push(rec(2, Min, 1, Success, 5.0));
    v.push(rec(2, Min, 2, Failure, 5.0));
    for t in 0..3 {
        v.push(rec(2, Full, t, Success, 5.0));
    }
    v
}

#[test]
fn normalized_cost_matches_hand_sheet() {
    let n = normalized_cost(&sheet());
    let full = &n[&(RobotKind::Point, Full)];
    assert_eq!(full.trees_included, 2);
    assert_eq!(full.trees_excluded, 1);
    let (a, b) = (10.0 / 12.0, 22.0 / 20.0);
    assert!((full.ratios[0] - a).abs() < 1e-15 && (full.ratios[1] - b).abs() < 1e-15);
    let mean = (a + b) / 2.0;
    let sd = (((a - mean).powi(2) + (b - mean).powi(2)) / 1.0).sqrt();
    assert!((full.mean.unwrap() - mean).abs() < 1e-15);
    assert!((full.std.unwrap() - sd).abs() < 1e-15);

    let min = &n[&(RobotKind::Point, Min)];
    assert_eq!(min.mean, Some(1.0));
    assert_eq!(min.std, Some(0.0));
    assert_eq!((min.trees_included, min.trees_excluded), (2, 1));

    let naive = &n[&(RobotKind::Point, Naive)];
    assert_eq!((naive.trees_included, naive.trees_excluded), (1, 1));
    assert!((naive.mean.unwrap() - 11.0 / 12.0).abs() < 1e-15);
}

#[test]
fn failure_and_collision_percentages() {
    let stats = aggregate(&sheet());
    let full = stats.iter().find(|s| s.controller == Full).unwrap();
    // 10 trials, one failure, no collisions
    assert_eq!((full.trials, full.failures, full.collisions), (10, 1, 0));
    assert!((full.failure_pct - 10.0).abs() < 1e-12);
    let naive = stats.iter().find(|s| s.controller == Naive).unwrap();
    // 7 trials, none failed, two collided
    assert_eq!((naive.trials, naive.collisions), (7, 2));
    assert!((naive.collision_pct - 200.0 / 7.0).abs() < 1e-12);
    let min = stats.iter().find(|s| s.controller == Min).unwrap();
    assert_eq!(min.collision_pct, 0.0);
    assert!((min.failure_pct - 100.0 / 9.0).abs() < 1e-12);
}

#[test]
fn archive_round_trip_preserves_stats() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.jsonl");
    let records = sheet();
    std::fs::write(&p, archive_to_string(&records)).unwrap();
    let back = read_archive(&p).unwrap();
    assert_eq!(back, records);
    assert_eq!(aggregate(&back), aggregate(&records));
}

fn small_config(parallel: bool) -> BenchConfig {
    BenchConfig {
        environments: vec!["gate".into(), "forest".into()],
        trees_per_env: 2,
        trials_per_tree: 3,
        master_seed: 17,
        parallel,
        ..Default::default()
    }
}

#[test]
fn archive_is_byte_identical_across_runs_and_scheduling() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let ra = run_benchmark(&small_config(true), Some(&a)).unwrap();
    run_benchmark(&small_config(true), Some(&b)).unwrap();
    run_benchmark(&small_config(false), Some(&c)).unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("trials.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    // the config hash differs with the parallel flag; the records do not
    let strip = |d: &std::path::Path| -> Vec<ArchiveRecord> {
        read_archive(d.join("trials.jsonl"))
            .unwrap()
            .into_iter()
            .map(|mut r| {
                r.config_hash.clear();
                r
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&c));
    assert_eq!(ra.records.len(), 2 * 2 * 3 * 3);
    assert_eq!(aggregate(&read_archive(a.join("trials.jsonl")).unwrap()), ra.stats);
    let trees: Vec<_> = std::fs::read_dir(a.join("trees")).unwrap().collect();
    assert_eq!(trees.len(), 4);
}

#[test]
fn config_validation() {
    let mut c = BenchConfig {
        dynamic_obstacles: true,
        ..Default::default()
    };
    assert!(c.validate().is_err());
    c.controllers = vec![Min, Full];
    assert!(c.validate().is_ok());
    c.query.search_radius = 0.4;
    assert!(c.validate().is_err());
    let text = serde_json::to_string(&BenchConfig::default()).unwrap();
    let back: BenchConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, BenchConfig::default());
    assert!(serde_json::from_str::<BenchConfig>(r#"{"nonsense": 1}"#).is_err());
    assert_eq!(BenchConfig::default().full_scale().trees_per_env, 50);
}
