use std::path::PathBuf;

use oran_isac::harness::{
    run_experiment_a, run_experiment_b, run_sensing_accuracy, HarnessConfig, TransportKind,
};
use oran_isac::stats::percentile;

fn csv_rows(path: &std::path::Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn shipped_configs_load() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let cfg = HarnessConfig::load(&dir.join("harness.toml")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.sense.scene_files.len(), 2);
    assert!(oran_isac::harness::sense::load_scenes(&cfg).unwrap().len() == 2);
}

#[test]
fn single_segment_schedule() {
    let mut cfg = HarnessConfig::default();
    cfg.exp_a.schedule_ms = vec![50.0];
    cfg.exp_a.segment_s = 1.0;
    let out = run_experiment_a(&cfg).unwrap();
    let seg = &out.summary.segments[0];
    assert!((19..=22).contains(&seg.reports), "{} reports", seg.reports);
    assert!((seg.mean_interarrival_ms - 50.0).abs() < 2.5);
    assert_eq!(seg.transition_ms, None);
    assert_eq!(out.summary.sequence_gaps, 0);

    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    assert_eq!(csv_rows(&dir.path().join("interarrival.csv")), out.rows.len());
    assert_eq!(out.rows.len(), out.summary.samples);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["summary"]["percentile_method"], "nearest-rank");
}

#[test]
fn closed_loop_breakdown_tcp() {
    let mut cfg = HarnessConfig::default();
    cfg.transport = TransportKind::Tcp;
    cfg.exp_b.probes = 200;
    cfg.exp_b.period_ms = 5.0;
    let out = run_experiment_b(&cfg).unwrap();
    assert_eq!(out.breakdown.len(), 200);

    let sums: Vec<f64> = out.breakdown.iter().map(|r| r.telemetry_ms + r.control_ms).collect();
    for (r, s) in out.breakdown.iter().zip(&sums) {
        assert!((r.closed_loop_ms - s).abs() < 1e-9);
        assert!(r.t1_ns >= r.t0_ns && r.t_cmd_applied_ns >= r.t_cmd_issue_ns);
        assert!(r.t_cmd_issue_ns >= r.t1_ns);
    }
    let cl = out.summary.closed_loop_ms.unwrap();
    assert_eq!(cl.p50, percentile(&sums, 50.0).unwrap());
    let c = &out.summary.compliance;
    assert!(c["uav_tracking"] >= c["vehicular_perception"]);
    assert!(c["vehicular_perception"] >= c["beam_management"]);
    assert!(c["beam_management"] >= c["industrial_control"]);
    assert_eq!(out.summary.per_trial_medians_ms.len(), 1);

    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    assert_eq!(csv_rows(&dir.path().join("breakdown.csv")), 200);
    assert!(csv_rows(&dir.path().join("latency_cdf.csv")) > 0);
}

fn sense_csv(seed: u64) -> (String, oran_isac::harness::SenseOutput) {
    let mut cfg = HarnessConfig::default();
    cfg.seed = seed;
    cfg.sense.trials = 30;
    cfg.sense.calibration_reports = 10;
    let out = run_sensing_accuracy(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    (std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap(), out)
}

#[test]
fn sensing_accuracy_is_reproducible() {
    let (a, out) = sense_csv(11);
    let (b, _) = sense_csv(11);
    let (c, _) = sense_csv(12);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 31);
    let s = &out.summary;
    assert_eq!(s.scenes[0].trials, 30);
    assert!(s.scenes[0].within_half_bin >= 28);
    assert!(s.trigger_threshold_db > s.noise_floor_db);
    assert!(s.scenes[0].trigger_hits >= 1);
}
