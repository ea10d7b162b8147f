//! Deterministic discrete-event simulator of a non-coherent manycore chip,
//! running a hierarchical task-dataflow runtime on top of it.
//!
//! The crate is layered bottom-up:
//!
//! * [`sim`]: event queue, core topology, NoC messages with credit flow and
//!   grouped DMA transfers.
//! * [`memory`]: region tree, slab/page allocation, routing tries, packing.
//! * [`dependency`]: per-node dependency queues, child/parent counters and
//!   the boundary reconciliation protocol.
//! * [`runtime`]: scheduler and worker event handlers driving the above.
//! * [`api`]: workload programs, the serial oracle and checksum lineage.
//! * [`workloads`]: benchmark kernels.
//! * [`config`], [`metrics`], [`experiment`]: experiment plumbing.

pub mod api;
pub mod audit;
pub mod config;
pub mod dependency;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod memory;
pub mod metrics;
pub mod par;
pub mod runtime;
pub mod sim;
pub mod workloads;

pub use config::SimConfig;
pub use error::{Fault, SimError};
pub use experiment::{run_experiment, sweep, SweepAxis};
pub use metrics::MetricsReport;
