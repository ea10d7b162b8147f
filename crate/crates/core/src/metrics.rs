//! Plot-ready run reports: time breakdown and traffic per core class, task
//! distribution, load balance, and the conservation checks every report
//! must pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dependency::DepStats;
use crate::runtime::{CoreStats, RunOutput};
use crate::sim::Role;

/// Aggregate over the cores of one class: all workers, or the schedulers
/// of one level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// `worker` or `sched_l<level>` (level 0 is the top).
    pub class: String,
    pub cores: usize,
    /// Cycles summed over the class. Schedulers have no task time, and
    /// their runtime is the time spent in handlers.
    pub task: u64,
    pub runtime: u64,
    /// Workers only: waiting for the DMA fetch of the next task.
    pub fetch_stall: u64,
    pub idle: u64,
    pub tasks_run: u64,
    pub msg_bytes_sent: u64,
    pub msg_bytes_recv: u64,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
    pub credit_stalls: u64,
}

impl ClassMetrics {
    pub fn total(&self) -> u64 {
        self.task + self.runtime + self.fetch_stall + self.idle
    }

    fn pct(&self, v: u64) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * v as f64 / t as f64,
        }
    }

    /// Percentages of task, runtime, fetch stall and idle time.
    pub fn breakdown(&self) -> [f64; 4] {
        [
            self.pct(self.task),
            self.pct(self.runtime),
            self.pct(self.fetch_stall),
            self.pct(self.idle),
        ]
    }

    /// Fraction of time not idle (schedulers: in handlers).
    pub fn busy_fraction(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => (self.task + self.runtime) as f64 / t as f64,
        }
    }

    pub fn idle_fraction(&self) -> f64 {
        self.pct(self.idle) / 100.0
    }

    fn add(&mut self, c: &CoreStats, makespan: u64) {
        self.cores += 1;
        match c.role {
            Some(Role::Worker) => {
                self.task += c.time.task;
                self.runtime += c.time.runtime;
                self.fetch_stall += c.time.fetch_stall;
                self.idle += c.time.idle;
            }
            _ => {
                self.runtime += c.busy;
                self.idle += makespan - c.busy;
            }
        }
        self.tasks_run += c.tasks_run;
        self.msg_bytes_sent += c.msg_bytes_sent;
        self.msg_bytes_recv += c.msg_bytes_recv;
        self.dma_bytes_in += c.dma_bytes_in;
        self.dma_bytes_out += c.dma_bytes_out;
        self.credit_stalls += c.credit_stalls;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub worker_msg_bytes: u64,
    pub worker_dma_bytes: u64,
    pub scheduler_msg_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: SimConfig,
    pub kernel: String,
    pub makespan: u64,
    pub tasks: u64,
    /// Workers first, then scheduler levels top down.
    pub classes: Vec<ClassMetrics>,
    pub worker_tasks: Vec<u64>,
    /// 100 when every worker runs the same number of tasks, 0 when one
    /// worker runs them all.
    pub balance: f64,
    pub traffic: Traffic,
    /// Makespan of the one-worker reference over this makespan, when a
    /// reference was run.
    pub speedup: Option<f64>,
    pub dep: DepStats,
    pub dma_retries: u64,
    pub trace_hash: String,
    pub audits: BTreeMap<String, u64>,
}

/// Load balance as 100·(1 − mean deviation / worst mean deviation), where
/// the worst case is one worker running everything.
pub fn balance(tasks: &[u64]) -> f64 {
    let w = tasks.len() as f64;
    let total: u64 = tasks.iter().sum();
    if tasks.len() < 2 || total == 0 {
        return 100.0;
    }
    let fair = total as f64 / w;
    let dev = tasks.iter().map(|&t| (t as f64 - fair).abs()).sum::<f64>() / w;
    let worst = 2.0 * total as f64 * (w - 1.0) / (w * w);
    100.0 * (1.0 - dev / worst)
}

/// Frozen column order of [`MetricsReport::csv_rows`].
pub const CSV_HEADER: &str = "point,kernel,levels,workers,bias,seed,class,cores,makespan,tasks,\
task_pct,runtime_pct,fetch_pct,idle_pct,busy_frac,tasks_run,msg_bytes_sent,msg_bytes_recv,\
dma_bytes_in,dma_bytes_out,credit_stalls,balance,speedup";

impl MetricsReport {
    pub fn from_run(config: &SimConfig, kernel: &str, out: &RunOutput) -> Self {
        let mut classes: BTreeMap<(u8, usize), ClassMetrics> = BTreeMap::new();
        let mut worker_tasks = Vec::new();
        let mut traffic = Traffic::default();
        for c in &out.cores {
            let is_worker = c.role == Some(Role::Worker);
            let key = if is_worker { (0, 0) } else { (1, c.level) };
            let m = classes.entry(key).or_insert_with(|| ClassMetrics {
                class: if is_worker {
                    "worker".into()
                } else {
                    format!("sched_l{}", c.level)
                },
                ..Default::default()
            });
            m.add(c, out.makespan);
            if is_worker {
                worker_tasks.push(c.tasks_run);
                traffic.worker_msg_bytes += c.msg_bytes_sent;
                traffic.worker_dma_bytes += c.dma_bytes_in;
            } else {
                traffic.scheduler_msg_bytes += c.msg_bytes_sent;
            }
        }
        MetricsReport {
            config: config.clone(),
            kernel: kernel.to_string(),
            makespan: out.makespan,
            tasks: out.tasks,
            classes: classes.into_values().collect(),
            balance: balance(&worker_tasks),
            worker_tasks,
            traffic,
            speedup: None,
            dep: out.dep,
            dma_retries: out.dma_retries,
            trace_hash: out.trace_hash.clone(),
            audits: out.audits.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn workers(&self) -> &ClassMetrics {
        self.class("worker").expect("every run has workers")
    }

    /// All scheduler classes merged.
    pub fn schedulers(&self) -> ClassMetrics {
        let mut s = ClassMetrics {
            class: "sched".into(),
            ..Default::default()
        };
        for c in self.classes.iter().filter(|c| c.class != "worker") {
            s.cores += c.cores;
            s.runtime += c.runtime;
            s.idle += c.idle;
            s.msg_bytes_sent += c.msg_bytes_sent;
            s.msg_bytes_recv += c.msg_bytes_recv;
        }
        s
    }

    pub fn dma_bytes(&self) -> u64 {
        self.traffic.worker_dma_bytes
    }

    /// Conservation laws: every class's time partitions cores × makespan,
    /// breakdowns sum to 100, message and DMA bytes balance.
    pub fn check(&self) -> Result<(), String> {
        for c in &self.classes {
            if c.total() != c.cores as u64 * self.makespan {
                return Err(format!(
                    "{}: time {} != {} cores x makespan {}",
                    c.class,
                    c.total(),
                    c.cores,
                    self.makespan
                ));
            }
            let sum: f64 = c.breakdown().iter().sum();
            if self.makespan > 0 && (sum - 100.0).abs() > 1e-6 {
                return Err(format!("{}: breakdown sums to {sum}", c.class));
            }
        }
        let sent: u64 = self.classes.iter().map(|c| c.msg_bytes_sent).sum();
        let recv: u64 = self.classes.iter().map(|c| c.msg_bytes_recv).sum();
        if sent != recv {
            return Err(format!("message bytes sent {sent} != received {recv}"));
        }
        let din: u64 = self.classes.iter().map(|c| c.dma_bytes_in).sum();
        let dout: u64 = self.classes.iter().map(|c| c.dma_bytes_out).sum();
        if din != dout {
            return Err(format!("DMA bytes in {din} != out {dout}"));
        }
        if self.worker_tasks.iter().sum::<u64>() != self.tasks {
            return Err(format!("worker task counts do not add up to {}", self.tasks));
        }
        Ok(())
    }

    /// One row per core class, columns as in [`CSV_HEADER`].
    pub fn csv_rows(&self, point: &str) -> Vec<String> {
        let t = &self.config.topology;
        let levels: Vec<String> = t.levels.iter().map(|l| l.to_string()).collect();
        self.classes
            .iter()
            .map(|c| {
                let [task, rt, fetch, idle] = c.breakdown();
                let mut row = String::new();
                let _ = write!(
                    row,
                    "{},{},{},{},{},{},{},{},{},{},{task:.3},{rt:.3},{fetch:.3},{idle:.3},{:.5},{},{},{},{},{},{},{:.3},{}",
                    csv_field(point),
                    self.kernel,
                    levels.join("-"),
                    t.workers,
                    self.config.bias,
                    self.config.seed,
                    c.class,
                    c.cores,
                    self.makespan,
                    self.tasks,
                    c.busy_fraction(),
                    c.tasks_run,
                    c.msg_bytes_sent,
                    c.msg_bytes_recv,
                    c.dma_bytes_in,
                    c.dma_bytes_out,
                    c.credit_stalls,
                    self.balance,
                    self.speedup.map(|s| format!("{s:.4}")).unwrap_or_default(),
                );
                row
            })
            .collect()
    }

    pub fn to_csv(&self, point: &str) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.csv_rows(point) {
            s.push_str(&r);
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_end_points() {
        assert_eq!(balance(&[5, 5, 5, 5]), 100.0);
        assert!(balance(&[20, 0, 0, 0]).abs() < 1e-9);
        assert_eq!(balance(&[7]), 100.0);
        let mid = balance(&[10, 10, 0, 0]);
        assert!(mid > 0.0 && mid < 100.0);
    }

    #[test]
    fn balance_matches_brute_force_definition() {
        // Mean |t_i - T/W| normalised by the value for (T, 0, ..., 0).
        let tasks = [3u64, 9, 1, 7, 0, 4];
        let w = tasks.len() as f64;
        let t: f64 = tasks.iter().sum::<u64>() as f64;
        let dev: f64 = tasks.iter().map(|&x| (x as f64 - t / w).abs()).sum::<f64>() / w;
        let mut worst = vec![0.0; tasks.len()];
        worst[0] = t;
        let wdev: f64 = worst.iter().map(|&x: &f64| (x - t / w).abs()).sum::<f64>() / w;
        assert!((balance(&tasks) - 100.0 * (1.0 - dev / wdev)).abs() < 1e-9);
    }

    #[test]
    fn header_matches_row_width() {
        let cols = CSV_HEADER.split(',').count();
        let report = MetricsReport {
            config: SimConfig::default(),
            kernel: "k".into(),
            makespan: 10,
            tasks: 1,
            classes: vec![ClassMetrics {
                class: "worker".into(),
                cores: 1,
                task: 4,
                idle: 6,
                tasks_run: 1,
                ..Default::default()
            }],
            worker_tasks: vec![1],
            balance: 100.0,
            traffic: Traffic::default(),
            speedup: Some(1.0),
            dep: DepStats::default(),
            dma_retries: 0,
            trace_hash: String::new(),
            audits: BTreeMap::new(),
        };
        report.check().unwrap();
        for row in report.csv_rows("a,b") {
            let mut n = 1;
            let mut quoted = false;
            for ch in row.chars() {
                match ch {
                    '"' => quoted = !quoted,
                    ',' if !quoted => n += 1,
                    _ => {}
                }
            }
            assert_eq!(n, cols);
        }
    }
}
