//! Run configuration: topology, latencies, runtime costs, scheduling bias,
//! kernel selection and reproducibility knobs. Loaded from TOML and copied
//! verbatim into every report.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::memory::LoadThresholds;
use crate::sim::{LatencyModel, NocConfig, TopologyConfig};

/// Software costs of runtime operations, in fast-core cycles. Work done on a
/// slow core is scaled by `latency.slow_core_factor`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Scheduler: handling one spawn request, plus per argument.
    pub spawn: u64,
    pub spawn_per_arg: u64,
    /// Scheduler: one dependency-queue operation at one node.
    pub dep_step: u64,
    /// Scheduler: relaying a message that is only passing through.
    pub forward: u64,
    /// Scheduler: per object visited while packing.
    pub pack_obj: u64,
    /// Scheduler: per candidate child or worker scored.
    pub score_candidate: u64,
    pub dispatch: u64,
    pub complete: u64,
    pub alloc: u64,
    pub ralloc: u64,
    pub free: u64,
    pub load_report: u64,
    /// Worker: issuing any runtime call, plus per argument it carries.
    pub worker_call: u64,
    pub worker_per_arg: u64,
    /// Worker: draining one incoming message.
    pub worker_msg: u64,
    /// Worker: setting up a task before its body runs.
    pub task_start: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            spawn: 1400,
            spawn_per_arg: 60,
            dep_step: 120,
            forward: 150,
            pack_obj: 20,
            score_candidate: 40,
            dispatch: 300,
            complete: 250,
            alloc: 250,
            ralloc: 600,
            free: 150,
            load_report: 80,
            worker_call: 100,
            worker_per_arg: 20,
            worker_msg: 60,
            task_start: 40,
        }
    }
}

/// Benchmark selection. Parameters are kernel specific; missing ones take
/// the kernel's defaults for the chosen scaling mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub name: String,
    pub params: BTreeMap<String, i64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            name: "synthetic_flat".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Fixed problem sized for a few tasks per worker per step.
    #[default]
    Strong,
    /// Minimum-sized tasks; the problem grows with the worker count.
    Weak,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugConfig {
    /// Record a human-readable trace (always hashed, kept only if set).
    pub trace: bool,
    /// Emit a DOT dump of the dependency queues when the run ends.
    pub dump_deps: bool,
    /// Probability that a DMA transfer attempt fails and is retried.
    pub dma_fail_rate: f64,
    /// Run the omniscient audits on every event rather than at the end.
    pub audit_every_event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologyConfig,
    pub latency: LatencyModel,
    pub noc: NocConfig,
    pub costs: CostModel,
    pub load: LoadThresholds,
    /// Locality bias p in 0..=100.
    pub bias: u32,
    pub kernel: KernelConfig,
    pub scaling: Scaling,
    pub seed: u64,
    pub cycle_budget: u64,
    /// Size of the global address space in 1 MB pages.
    pub pages: u64,
    /// Pages a scheduler asks its parent for when it runs dry.
    pub page_batch: u64,
    pub debug: DebugConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: TopologyConfig::default(),
            latency: LatencyModel::default(),
            noc: NocConfig::default(),
            costs: CostModel::default(),
            load: LoadThresholds::default(),
            bias: 20,
            kernel: KernelConfig::default(),
            scaling: Scaling::Strong,
            seed: 1,
            cycle_budget: 50_000_000_000,
            pages: 4096,
            page_batch: 4,
            debug: DebugConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.topology.validate()?;
        self.latency.validate().map_err(SimError::Config)?;
        if self.noc.msg_size == 0 || self.noc.buffer_slots == 0 {
            return bad("noc.msg_size and noc.buffer_slots must be positive".into());
        }
        if self.bias > 100 {
            return bad(format!("bias must be in 0..=100, got {}", self.bias));
        }
        if self.load.tasks == 0 || self.load.regions == 0 {
            return bad("load thresholds must be positive".into());
        }
        if self.pages == 0 || self.page_batch == 0 {
            return bad("pages and page_batch must be positive".into());
        }
        if self.cycle_budget == 0 {
            return bad("cycle_budget must be positive".into());
        }
        if !(0.0..1.0).contains(&self.debug.dma_fail_rate) {
            return bad("debug.dma_fail_rate must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Convenience for tests and sweeps.
    pub fn with_topology(mut self, levels: Vec<usize>, workers: usize) -> Self {
        self.topology.levels = levels;
        self.topology.workers = workers;
        self
    }

    pub fn with_kernel(mut self, name: &str, params: &[(&str, i64)]) -> Self {
        self.kernel = KernelConfig {
            name: name.into(),
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        };
        self
    }
}

/// Independent random stream for one consumer, derived from the run seed
/// and a stable name. Adding a stream never perturbs the others.
pub fn rng_stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    rng.set_stream(h);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_toml_takes_defaults() {
        let c = SimConfig::from_toml("bias = 70\n[topology]\nlevels = [1, 2]\nworkers = 8\n").unwrap();
        assert_eq!(c.bias, 70);
        assert_eq!(c.topology.workers, 8);
        assert_eq!(c.costs, CostModel::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(SimConfig::from_toml("bias = 101").is_err());
        assert!(SimConfig::from_toml("nonsense = 1").is_err());
        assert!(SimConfig::from_toml("[topology]\nlevels = [2]\n").is_err());
        assert!(SimConfig::from_toml("[topology]\nlevels = [1, 4]\nworkers = 3\n").is_err());
        assert!(SimConfig::from_toml("[latency]\nmsg_base_cycles = 0\n").is_err());
    }

    #[test]
    fn streams_are_independent_and_stable() {
        let a: u64 = rng_stream(7, "noc").gen();
        let b: u64 = rng_stream(7, "dma").gen();
        let a2: u64 = rng_stream(7, "noc").gen();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, rng_stream(8, "noc").gen::<u64>());
    }
}
