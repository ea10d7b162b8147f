//! The task runtime running on the simulated chip: scheduler cores keep
//! dependency queues, pack and place tasks; worker cores run task bodies.

mod audit;
mod machine;
pub mod msg;
mod sched;
pub mod score;
mod worker;

pub use machine::{CoreStats, Machine, RunOutput, WorkerTime};

use crate::api::Program;
use crate::config::SimConfig;
use crate::error::SimError;

/// Run `prog` on the machine described by `cfg`.
pub fn run_parallel(prog: &Program, cfg: &SimConfig) -> Result<RunOutput, SimError> {
    Machine::new(cfg, prog)?.run()
}
