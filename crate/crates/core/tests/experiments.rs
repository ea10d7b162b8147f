use std::collections::BTreeMap;

use hiersim::config::Scaling;
use hiersim::experiment::{run_experiment, sweep, SweepAxis};
use hiersim::metrics::CSV_HEADER;
use hiersim::workloads::{resolve, Shape, KERNELS};
use hiersim::{SimConfig, SimError};

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = SimConfig::default()
        .with_topology(vec![1, 3], 12)
        .with_kernel("jacobi", &[("iters", 2)]);
    cfg.bias = 70;
    cfg.scaling = Scaling::Weak;
    let back = SimConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn bad_configs_are_rejected_before_running() {
    assert!(matches!(SimConfig::from_toml("bias = 101"), Err(SimError::Config(_))));
    assert!(matches!(SimConfig::from_toml("colour = 1"), Err(SimError::Config(_))));
    let cfg = SimConfig::default().with_topology(vec![2], 4);
    assert!(matches!(run_experiment(&cfg), Err(SimError::Config(_))));
    let cfg = SimConfig::default().with_kernel("jacobi", &[("blocks", 7), ("groups", 2)]);
    assert!(matches!(run_experiment(&cfg), Err(SimError::Config(_))));
}

#[test]
fn every_kernel_runs_weak_and_strong_on_a_small_hierarchy() {
    for k in KERNELS {
        for scaling in [Scaling::Strong, Scaling::Weak] {
            let mut cfg = SimConfig::default()
                .with_topology(vec![1, 2], 8)
                .with_kernel(k.name, &[]);
            cfg.scaling = scaling;
            let e = run_experiment(&cfg).unwrap_or_else(|e| panic!("{} {scaling:?}: {e}", k.name));
            assert!(e.report.tasks > 1, "{}", k.name);
            assert!(e.report.makespan > 0);
        }
    }
}

#[test]
fn strong_scaling_speeds_up_with_workers() {
    let time = |w: usize, levels: Vec<usize>| {
        let cfg = SimConfig::default()
            .with_topology(levels, w)
            .with_kernel("raytrace_lite", &[]);
        run_experiment(&cfg).unwrap().report.makespan
    };
    let (one, eight, many) = (time(1, vec![1]), time(8, vec![1]), time(32, vec![1, 2]));
    assert!(one > 4 * eight, "{one} vs {eight}");
    assert!(eight > 2 * many, "{eight} vs {many}");
}

#[test]
fn sweep_csv_keeps_its_header_and_one_row_per_class() {
    let tmpl = SimConfig::default().with_kernel("synthetic_flat", &[("tasks", 8), ("task_cycles", 5000)]);
    let axes = [
        SweepAxis::Levels(vec![vec![1], vec![1, 2]]),
        SweepAxis::Workers(vec![2, 4]),
    ];
    let r = sweep(&tmpl, &axes, true);
    assert!(r.failed.is_none());
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // One worker row plus one row per scheduler level.
    assert_eq!(lines.count(), 2 * 2 + 2 * 3);
    assert!(r.points.iter().all(|p| p.report.speedup.unwrap() > 0.9));
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 4);
}

#[test]
fn experiment_writes_its_artifacts() {
    let dir = std::env::temp_dir().join(format!("hiersim-exp-{}", std::process::id()));
    let mut cfg = SimConfig::default()
        .with_topology(vec![1, 2], 4)
        .with_kernel("bitonic", &[]);
    cfg.debug.trace = true;
    cfg.debug.dump_deps = true;
    let e = run_experiment(&cfg).unwrap();
    e.write(&dir).unwrap();
    for f in ["report.json", "report.csv", "trace.log", "deps.dot"] {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(!text.is_empty(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["trace_hash"], e.report.trace_hash);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn explicit_parameters_override_presets() {
    let cfg = SimConfig::default()
        .with_topology(vec![1, 4], 64)
        .with_kernel("kmeans", &[("iters", 1)]);
    let p: BTreeMap<String, i64> = resolve(&cfg.kernel, cfg.scaling, Shape::of(&cfg.topology)).unwrap();
    assert_eq!(p["iters"], 1);
    assert_eq!(p["groups"], 4);
    assert_eq!(p["chunks"], 4 * 32);
}
