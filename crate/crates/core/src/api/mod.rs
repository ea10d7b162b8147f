//! Programming model: programs, access rules, checksum lineage and the
//! serial oracle.

pub mod access;
pub mod exec;
pub mod lineage;
pub mod program;
pub mod serial;

pub use access::{Footprint, TreeView};
pub use exec::{Action, TaskCtx};
pub use lineage::{Digest, LineageReport};
pub use program::{HandleVal, ObjRef, Op, Operand, Program, TaskView, Value};
pub use serial::{run_serial, SerialRun};

#[cfg(test)]
mod tests;
