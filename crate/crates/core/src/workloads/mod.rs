//! Benchmark kernels as [`Program`]s.
//!
//! Bodies only see scalar arguments, so every kernel passes its sizes
//! through `root_args` and hands object handles to intermediate tasks as
//! SAFE pass-through arguments. Compute costs are declared cycle counts; no
//! arithmetic is actually performed.

mod bitonic;
mod jacobi;
mod kmeans;
mod matmul;
mod raytrace;
mod synthetic;

use std::collections::BTreeMap;

use crate::api::{Op, Operand, Program};
use crate::config::{KernelConfig, Scaling};
use crate::dependency::ArgFlags;
use crate::error::SimError;

pub use bitonic::{bitonic, bitonic_steps};
pub use jacobi::jacobi;
pub use kmeans::kmeans;
pub use matmul::matmul;
pub use raytrace::{pixel_cost, raytrace_lite};
pub use synthetic::{synthetic_flat, synthetic_hierarchical};

pub(crate) const RW: ArgFlags = ArgFlags::INOUT;
pub(crate) const IN: ArgFlags = ArgFlags::IN;
pub(crate) const SAFE: ArgFlags = ArgFlags::SAFE;
pub(crate) const REGION_RW: ArgFlags = ArgFlags::INOUT.union(ArgFlags::REGION);
pub(crate) const REGION_IN: ArgFlags = ArgFlags::IN.union(ArgFlags::REGION);
pub(crate) const REGION_SAFE: ArgFlags = ArgFlags::SAFE.union(ArgFlags::REGION);

/// Appends ops and hands back the index later operands use to refer to
/// their results.
#[derive(Default)]
pub(crate) struct Ops(pub Vec<Op>);

impl Ops {
    pub fn push(&mut self, op: Op) -> usize {
        self.0.push(op);
        self.0.len() - 1
    }

    pub fn compute(&mut self, cycles: i64) {
        if cycles > 0 {
            self.0.push(Op::Compute(cycles as u64));
        }
    }

    pub fn spawn(&mut self, func: usize, args: Vec<(Operand, ArgFlags)>) {
        self.0.push(Op::Spawn { func, args });
    }
}

pub(crate) fn scalar(v: i64) -> (Operand, ArgFlags) {
    (Operand::Scalar(v), SAFE)
}

/// Generic leaf: argument 0 is a cycle count, argument 1 is written, the
/// rest are read.
pub(crate) fn update(t: &crate::api::TaskView) -> Vec<Op> {
    let mut ops = Ops::default();
    for i in 2..t.arity() {
        ops.push(Op::Read(Operand::Arg(i)));
    }
    ops.push(Op::Read(Operand::Arg(1)));
    ops.compute(t.scalar(0));
    ops.push(Op::Write(Operand::Arg(1)));
    ops.0
}

/// Kernel parameters with defaults; unknown names are rejected.
pub struct Params<'a> {
    kernel: &'a str,
    given: &'a BTreeMap<String, i64>,
    defaults: BTreeMap<&'static str, i64>,
}

impl<'a> Params<'a> {
    fn new(
        kernel: &'a str,
        given: &'a BTreeMap<String, i64>,
        defaults: &[(&'static str, i64)],
    ) -> Result<Self, SimError> {
        let defaults: BTreeMap<_, _> = defaults.iter().copied().collect();
        if let Some(k) = given.keys().find(|k| !defaults.contains_key(k.as_str())) {
            let known: Vec<_> = defaults.keys().collect();
            return Err(SimError::Config(format!(
                "{kernel}: unknown parameter {k:?} (known: {known:?})"
            )));
        }
        Ok(Params {
            kernel,
            given,
            defaults,
        })
    }

    pub fn get(&self, name: &str) -> i64 {
        self.given.get(name).copied().unwrap_or(self.defaults[name])
    }

    /// A parameter that must be at least `min`.
    pub fn at_least(&self, name: &str, min: i64) -> Result<i64, SimError> {
        let v = self.get(name);
        if v < min {
            return Err(self.error(format!("{name} must be at least {min}, got {v}")));
        }
        Ok(v)
    }

    pub fn error(&self, why: String) -> SimError {
        SimError::Config(format!("{}: {why}", self.kernel))
    }
}

pub(crate) fn is_pow2(v: i64) -> bool {
    v > 0 && v & (v - 1) == 0
}

type Build = fn(&Params) -> Result<Program, SimError>;
type Preset = fn(Scaling, Shape) -> Vec<(&'static str, i64)>;

/// A registered kernel.
pub struct Kernel {
    pub name: &'static str,
    pub about: &'static str,
    /// Every parameter with its default.
    pub defaults: &'static [(&'static str, i64)],
    build: Build,
    preset: Preset,
}

impl Kernel {
    /// Parameters for a scaling mode on a machine shape, before overrides.
    pub fn preset(&self, scaling: Scaling, shape: Shape) -> BTreeMap<String, i64> {
        let mut m: BTreeMap<String, i64> = self.defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        for (k, v) in (self.preset)(scaling, shape) {
            m.insert(k.to_string(), v);
        }
        m
    }

    pub fn build(&self, params: &BTreeMap<String, i64>) -> Result<Program, SimError> {
        (self.build)(&Params::new(self.name, params, self.defaults)?)
    }
}

fn no_preset(_: Scaling, _: Shape) -> Vec<(&'static str, i64)> {
    Vec::new()
}

/// Smallest power of `base` that is at least `v`.
fn pow_at_least(base: i64, v: i64) -> i64 {
    let mut p = 1;
    while p < v {
        p *= base;
    }
    p
}

/// Smallest task the weak presets use, and the default leaf size: about
/// 65 times the measured per-task overhead of one scheduler.
pub const MIN_TASK: i64 = 1 << 18;
/// Strong scaling keeps the problem fixed: this much compute per step and
/// this much data in total, split over about two tasks per worker.
pub const STEP_CYCLES: i64 = 1 << 28;
pub const DATA_BYTES: i64 = 1 << 22;

/// What the presets size a problem for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub workers: usize,
    /// Schedulers at the lowest level.
    pub leaves: usize,
}

impl Shape {
    pub fn of(t: &crate::sim::TopologyConfig) -> Self {
        Shape {
            workers: t.workers,
            leaves: t.levels.last().copied().unwrap_or(1),
        }
    }

    /// Coarse groups: one per leaf scheduler, or one per eight workers
    /// under a single scheduler.
    fn groups(self) -> i64 {
        if self.leaves > 1 {
            self.leaves as i64
        } else {
            (self.workers as i64 / 8).max(1)
        }
    }

    /// Tasks per step: two per worker of the smallest group's share, so
    /// no group needs a third round when workers do not split evenly.
    fn tasks(self, groups: i64) -> i64 {
        groups * (2 * (self.workers as i64 / groups)).max(1)
    }

    /// Power-of-two groups at least four per leaf, so leaves differ by at
    /// most one group in five.
    fn pow2_groups(self, parts: i64) -> i64 {
        let want = if self.leaves > 1 {
            4 * self.leaves as i64
        } else {
            self.workers as i64 / 8
        };
        pow_at_least(2, want.max(1)).min(parts)
    }
}

fn split_bytes(n: i64) -> i64 {
    (DATA_BYTES / n).clamp(1, crate::memory::MAX_OBJECT as i64)
}

/// Groups and per-step tasks for the kernels with free group counts,
/// plus the strong-scaling sizes.
fn grouped(s: Scaling, sh: Shape, count: &'static str, bytes: &'static str) -> (i64, Vec<(&'static str, i64)>) {
    let g = sh.groups();
    let t = sh.tasks(g);
    let mut v = vec![(count, t), ("groups", g)];
    if s == Scaling::Strong {
        v.push((bytes, split_bytes(t)));
    }
    (t, v)
}

pub static KERNELS: &[Kernel] = &[
    Kernel {
        name: "synthetic_flat",
        about: "independent tasks on distinct objects, spawned by the root",
        defaults: synthetic::FLAT_DEFAULTS,
        build: synthetic::build_flat,
        preset: |s, sh| match s {
            Scaling::Strong => vec![],
            Scaling::Weak => vec![("tasks", 4 * sh.workers as i64)],
        },
    },
    Kernel {
        name: "synthetic_hierarchical",
        about: "a tree of small regions with empty tasks at the leaves",
        defaults: synthetic::HIER_DEFAULTS,
        build: synthetic::build_hier,
        preset: no_preset,
    },
    Kernel {
        name: "jacobi",
        about: "row-block stencil with nearest-neighbour exchange",
        defaults: jacobi::DEFAULTS,
        build: jacobi::build,
        preset: |s, sh| {
            let (t, mut v) = grouped(s, sh, "blocks", "block_bytes");
            if s == Scaling::Strong {
                v.push(("task_cycles", STEP_CYCLES / t));
            }
            v
        },
    },
    Kernel {
        name: "matmul",
        about: "blocked matrix multiplication, phases of partial products",
        defaults: matmul::DEFAULTS,
        build: matmul::build,
        preset: |s, sh| {
            let parts = pow_at_least(4, 2 * sh.workers as i64);
            match s {
                // Fixed matrices: side^3 products share the total work.
                Scaling::Strong => {
                    let side = (parts as f64).sqrt().round() as i64;
                    vec![
                        ("parts", parts),
                        ("block_bytes", split_bytes(parts)),
                        ("task_cycles", STEP_CYCLES / (side * side * side)),
                    ]
                }
                Scaling::Weak => vec![("parts", parts)],
            }
        },
    },
    Kernel {
        name: "bitonic",
        about: "bitonic sorting network over data parts",
        defaults: bitonic::DEFAULTS,
        build: bitonic::build,
        preset: |s, sh| {
            let t = pow_at_least(2, 2 * sh.workers as i64).max(2);
            let mut v = vec![("parts", t), ("groups", sh.pow2_groups(t))];
            if s == Scaling::Strong {
                v.extend([("part_bytes", split_bytes(t)), ("task_cycles", STEP_CYCLES / t)]);
            }
            v
        },
    },
    Kernel {
        name: "kmeans",
        about: "clustering with per-iteration reductions and a broadcast",
        defaults: kmeans::DEFAULTS,
        build: kmeans::build,
        preset: |s, sh| {
            let (t, mut v) = grouped(s, sh, "chunks", "chunk_bytes");
            if s == Scaling::Strong {
                v.push(("cycles_per_cluster", STEP_CYCLES / t / kmeans::CLUSTERS));
            }
            v
        },
    },
    Kernel {
        name: "raytrace_lite",
        about: "independent tiles of pixel lines with a synthetic per-pixel cost",
        defaults: raytrace::DEFAULTS,
        build: raytrace::build,
        preset: |s, sh| {
            let g = sh.groups();
            let t = sh.tasks(g);
            match s {
                // The frame keeps its size up to rounding to whole lines
                // per tile.
                Scaling::Strong => {
                    let lines = ((raytrace::STRONG_HEIGHT + t / 2) / t).max(1);
                    vec![
                        ("width", raytrace::STRONG_WIDTH),
                        ("height", t * lines),
                        ("tile_lines", lines),
                        ("groups", g),
                        ("pixel_cycles", raytrace::strong_pixel_cycles()),
                    ]
                }
                Scaling::Weak => vec![("height", 4 * t), ("tile_lines", 4), ("groups", g)],
            }
        },
    },
];

pub fn kernel(name: &str) -> Option<&'static Kernel> {
    KERNELS.iter().find(|k| k.name == name)
}

fn lookup(name: &str) -> Result<&'static Kernel, SimError> {
    kernel(name).ok_or_else(|| {
        let names: Vec<_> = KERNELS.iter().map(|k| k.name).collect();
        SimError::Config(format!("unknown kernel {name:?} (known: {names:?})"))
    })
}

/// Every parameter a config resolves to: the preset for its scaling mode
/// and machine shape, then the explicit parameters on top.
pub fn resolve(cfg: &KernelConfig, scaling: Scaling, shape: Shape) -> Result<BTreeMap<String, i64>, SimError> {
    let mut params = lookup(&cfg.name)?.preset(scaling, shape);
    for (key, v) in &cfg.params {
        params.insert(key.clone(), *v);
    }
    Ok(params)
}

pub fn build(cfg: &KernelConfig, scaling: Scaling, shape: Shape) -> Result<Program, SimError> {
    lookup(&cfg.name)?.build(&resolve(cfg, scaling, shape)?)
}
