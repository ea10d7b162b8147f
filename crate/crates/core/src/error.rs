use crate::ids::{Addr, CoreId, ObjKey, RegionId, TaskPath};
use thiserror::Error;

/// Programming-model or resource faults raised by runtime calls.
///
/// The same fault is raised by the serial oracle and by the simulated
/// runtime for the same program.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error("root region cannot be freed")]
    FreeRoot,
    #[error("region {0} still has pending tasks in its subtree")]
    BusyRegion(RegionId),
    #[error("address {0} is not a live object")]
    UnknownObject(Addr),
    #[error("object {0} still has pending tasks")]
    BusyObject(ObjKey),
    #[error("balloc requires at least one object")]
    EmptyBulk,
    #[error("object size must be positive and at most {max} bytes, got {size}")]
    BadSize { size: u64, max: u64 },
    #[error("global address space exhausted")]
    OutOfMemory,
    #[error("task {task} accessed {what} without declaring it")]
    UndeclaredAccess { task: TaskPath, what: String },
    #[error("task {task} has malformed argument flags: {why}")]
    BadFlags { task: TaskPath, why: String },
    #[error("task {task} refers to an operand that does not exist: {why}")]
    BadOperand { task: TaskPath, why: String },
    #[error("unknown task function index {0}")]
    UnknownFunction(usize),
}

impl Fault {
    /// Variant name. Addresses differ between execution modes, so fault
    /// parity is checked on this.
    pub fn kind(&self) -> &'static str {
        match self {
            Fault::UnknownRegion(_) => "UnknownRegion",
            Fault::FreeRoot => "FreeRoot",
            Fault::BusyRegion(_) => "BusyRegion",
            Fault::UnknownObject(_) => "UnknownObject",
            Fault::BusyObject(_) => "BusyObject",
            Fault::EmptyBulk => "EmptyBulk",
            Fault::BadSize { .. } => "BadSize",
            Fault::OutOfMemory => "OutOfMemory",
            Fault::UndeclaredAccess { .. } => "UndeclaredAccess",
            Fault::BadFlags { .. } => "BadFlags",
            Fault::BadOperand { .. } => "BadOperand",
            Fault::UnknownFunction(_) => "UnknownFunction",
        }
    }
}

/// Top-level error type for simulations and experiments.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("program fault: {0}")]
    Fault(#[from] Fault),
    #[error("cycle budget of {budget} exceeded at cycle {now}; pending work:\n{dump}")]
    Deadlock { budget: u64, now: u64, dump: String },
    #[error("simulation quiesced with unfinished work:\n{0}")]
    Stalled(String),
    #[error("audit violation: {0}")]
    Audit(String),
    #[error("protocol violation on {0}: {1}")]
    Protocol(CoreId, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
