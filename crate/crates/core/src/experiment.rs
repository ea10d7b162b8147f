//! Experiment driver: one configured run, or a sweep over the cross
//! product of several axes. Sweep members run through [`crate::par::map`];
//! results are always ordered by axis order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::SimError;
use crate::metrics::{MetricsReport, CSV_HEADER};
use crate::runtime::run_parallel;
use crate::workloads::Shape;

/// A finished run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: MetricsReport,
    pub trace: Vec<String>,
    pub dep_dot: Option<String>,
}

impl Experiment {
    /// Write report.json, report.csv and, when present, trace.log and
    /// deps.dot into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        std::fs::write(dir.join("report.csv"), self.report.to_csv("run"))?;
        if self.report.config.debug.trace {
            std::fs::write(dir.join("trace.log"), self.trace.join("\n") + "\n")?;
        }
        if let Some(dot) = &self.dep_dot {
            std::fs::write(dir.join("deps.dot"), dot)?;
        }
        Ok(())
    }
}

/// Build the configured kernel, run it and check the report's conservation
/// laws.
pub fn run_experiment(cfg: &SimConfig) -> Result<Experiment, SimError> {
    cfg.validate()?;
    let prog = crate::workloads::build(&cfg.kernel, cfg.scaling, Shape::of(&cfg.topology))?;
    let out = run_parallel(&prog, cfg)?;
    let report = MetricsReport::from_run(cfg, &prog.name, &out);
    report.check().map_err(SimError::Audit)?;
    Ok(Experiment {
        report,
        trace: out.trace_lines,
        dep_dot: out.dep_dot,
    })
}

/// One dimension of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Workers(Vec<usize>),
    /// Scheduler counts per level, top first.
    Levels(Vec<Vec<usize>>),
    Bias(Vec<u32>),
    Seed(Vec<u64>),
    /// A kernel parameter, e.g. `task_cycles`.
    Param(String, Vec<i64>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::Workers(v) => v.len(),
            SweepAxis::Levels(v) => v.len(),
            SweepAxis::Bias(v) => v.len(),
            SweepAxis::Seed(v) => v.len(),
            SweepAxis::Param(_, v) => v.len(),
        }
    }

    /// Apply value `i`; returns its label.
    fn apply(&self, i: usize, cfg: &mut SimConfig) -> String {
        match self {
            SweepAxis::Workers(v) => {
                cfg.topology.workers = v[i];
                format!("workers={}", v[i])
            }
            SweepAxis::Levels(v) => {
                cfg.topology.levels = v[i].clone();
                let l: Vec<String> = v[i].iter().map(|x| x.to_string()).collect();
                format!("levels={}", l.join("-"))
            }
            SweepAxis::Bias(v) => {
                cfg.bias = v[i];
                format!("bias={}", v[i])
            }
            SweepAxis::Seed(v) => {
                cfg.seed = v[i];
                format!("seed={}", v[i])
            }
            SweepAxis::Param(name, v) => {
                cfg.kernel.params.insert(name.clone(), v[i]);
                format!("{name}={}", v[i])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Axis values joined by `;`, in axis order.
    pub label: String,
    pub report: MetricsReport,
}

#[derive(Debug)]
pub struct SweepResult {
    /// Completed points in axis order, up to the first failure.
    pub points: Vec<SweepPoint>,
    /// Label and error of the first failing point; later points are
    /// dropped even if they ran.
    pub failed: Option<(String, SimError)>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            for r in p.report.csv_rows(&p.label) {
                s.push_str(&r);
                s.push('\n');
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            points: Vec<(&'a str, &'a MetricsReport)>,
            failed: Option<(&'a str, String)>,
        }
        serde_json::to_string_pretty(&Out {
            points: self.points.iter().map(|p| (p.label.as_str(), &p.report)).collect(),
            failed: self.failed.as_ref().map(|(l, e)| (l.as_str(), e.to_string())),
        })
        .expect("sweep serializes")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.csv"), self.to_csv())
    }

    pub fn get(&self, label: &str) -> Option<&MetricsReport> {
        self.points.iter().find(|p| p.label == label).map(|p| &p.report)
    }
}

/// Every configuration of the cross product of `axes`, last axis fastest.
pub fn sweep_points(template: &SimConfig, axes: &[SweepAxis]) -> Vec<(String, SimConfig)> {
    let mut points = vec![(Vec::<String>::new(), template.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for (labels, cfg) in &points {
            for i in 0..axis.len() {
                let mut c = cfg.clone();
                let mut l = labels.clone();
                l.push(axis.apply(i, &mut c));
                next.push((l, c));
            }
        }
        points = next;
    }
    points.into_iter().map(|(l, c)| (l.join(";"), c)).collect()
}

/// Run the cross product of `axes` over `template`. When `speedup` is set,
/// each point is also run with one worker under a single scheduler, on the
/// same problem, and its report carries the ratio.
pub fn sweep(template: &SimConfig, axes: &[SweepAxis], speedup: bool) -> SweepResult {
    let points = sweep_points(template, axes);
    let results = crate::par::map(points, |(label, cfg)| {
        let run = run_experiment(&cfg).and_then(|mut e| {
            if speedup {
                let mut r = cfg.clone();
                r.kernel.params = crate::workloads::resolve(&cfg.kernel, cfg.scaling, Shape::of(&cfg.topology))?;
                r.topology = crate::sim::TopologyConfig {
                    levels: vec![1],
                    workers: 1,
                    mesh: None,
                    ..cfg.topology.clone()
                };
                let base = run_experiment(&r)?;
                e.report.speedup = Some(base.report.makespan as f64 / e.report.makespan.max(1) as f64);
            }
            Ok(e.report)
        });
        (label, run)
    });
    let mut out = SweepResult {
        points: Vec::new(),
        failed: None,
    };
    for (label, r) in results {
        match r {
            Ok(report) => out.points.push(SweepPoint { label, report }),
            Err(e) => {
                out.failed = Some((label, e));
                break;
            }
        }
    }
    out
}
