//! Step-by-step decoding of a task body. Both execution modes drive the
//! same decoder, so they raise the same faults at the same operations.

use crate::api::access::{validate_flags, Footprint, TreeView};
use crate::api::lineage::TaskLineage;
use crate::api::program::{object_key, resolve, HandleVal, Op, Program, TaskView, Value};
use crate::dependency::ArgFlags;
use crate::error::Fault;
use crate::ids::{NodeId, ObjKey, RegionId, TaskId, TaskPath};
use crate::memory::MAX_OBJECT;

/// What the executor has to carry out for the current operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Compute(u64),
    Read(ObjKey),
    Write(ObjKey),
    /// `alloc` (one key) or `balloc` (several, `bulk` set).
    Alloc {
        region: RegionId,
        size: u64,
        keys: Vec<ObjKey>,
        bulk: bool,
    },
    Ralloc {
        parent: RegionId,
        level: u32,
    },
    Free(ObjKey),
    Rfree(RegionId),
    Realloc {
        key: ObjKey,
        size: u64,
        region: RegionId,
    },
    Spawn {
        path: TaskPath,
        func: usize,
        args: Vec<(Value, ArgFlags)>,
    },
    /// Wait on `args`; `key` orders it among the parent's children.
    Wait {
        key: TaskPath,
        args: Vec<(Value, ArgFlags)>,
        nodes: Vec<NodeId>,
    },
}

pub fn check_size(size: u64) -> Result<(), Fault> {
    if size == 0 || size > MAX_OBJECT {
        Err(Fault::BadSize { size, max: MAX_OBJECT })
    } else {
        Ok(())
    }
}

/// A task in flight: its body, program counter and bookkeeping.
#[derive(Debug, Clone)]
pub struct TaskCtx {
    pub path: TaskPath,
    pub tid: TaskId,
    pub func: usize,
    pub args: Vec<(Value, ArgFlags)>,
    pub lineage: TaskLineage,
    ops: Vec<Op>,
    pc: usize,
    handles: Vec<HandleVal>,
    fp: Footprint,
    next_seq: u32,
    alloc_ordinal: u32,
}

impl TaskCtx {
    /// Instantiate `func` with `args`; runs the body to obtain its ops.
    pub fn new(prog: &Program, path: TaskPath, func: usize, args: Vec<(Value, ArgFlags)>) -> Result<Self, Fault> {
        let body = prog.body(func)?;
        for &(v, f) in &args {
            validate_flags(&path, v, f)?;
        }
        let values: Vec<Value> = args.iter().map(|a| a.0).collect();
        let ops = body(&TaskView::new(&path, &values));
        let tid = path.id();
        Ok(TaskCtx {
            fp: Footprint::new(path.clone(), &args),
            lineage: TaskLineage::new(tid),
            handles: Vec::with_capacity(ops.len()),
            tid,
            func,
            args,
            ops,
            pc: 0,
            path,
            next_seq: 0,
            alloc_ordinal: 0,
        })
    }

    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn finished(&self) -> bool {
        self.pc >= self.ops.len()
    }

    pub fn footprint(&self) -> &Footprint {
        &self.fp
    }

    fn value(&self, op: crate::api::Operand) -> Result<Value, Fault> {
        resolve(&self.path, &self.args, &self.handles, op)
    }

    fn region(&self, tree: &impl TreeView, op: crate::api::Operand) -> Result<RegionId, Fault> {
        match self.fp.node(tree, self.value(op)?, true)? {
            NodeId::Region(r) => Ok(r),
            NodeId::Object(_) => unreachable!(),
        }
    }

    fn object(&self, tree: &impl TreeView, op: crate::api::Operand) -> Result<ObjKey, Fault> {
        match self.fp.node(tree, self.value(op)?, false)? {
            NodeId::Object(k) => Ok(k),
            NodeId::Region(_) => unreachable!(),
        }
    }

    fn values(&self, args: &[(crate::api::Operand, ArgFlags)]) -> Result<Vec<(Value, ArgFlags)>, Fault> {
        args.iter().map(|&(o, f)| Ok((self.value(o)?, f))).collect()
    }

    /// Validate the operation at the program counter and describe it.
    /// `None` once the body is exhausted. Must be followed by `complete`.
    pub fn decode(&mut self, prog: &Program, tree: &impl TreeView) -> Result<Option<Action>, Fault> {
        let Some(op) = self.ops.get(self.pc).cloned() else {
            return Ok(None);
        };
        let a = match op {
            Op::Compute(c) => Action::Compute(c),
            Op::Read(o) => {
                let k = self.object(tree, o)?;
                self.fp.check_data(tree, NodeId::Object(k), ArgFlags::IN)?;
                Action::Read(k)
            }
            Op::Write(o) => {
                let k = self.object(tree, o)?;
                self.fp.check_data(tree, NodeId::Object(k), ArgFlags::OUT)?;
                Action::Write(k)
            }
            Op::Alloc { size, region } => self.alloc(tree, size, region, 1, false)?,
            Op::Balloc { size, region, count } => self.alloc(tree, size, region, count, true)?,
            Op::Ralloc { parent, level } => {
                let r = self.region(tree, parent)?;
                self.fp.check_alloc(tree, r)?;
                Action::Ralloc { parent: r, level }
            }
            Op::Free(o) => {
                let k = self.object(tree, o)?;
                self.fp.check_free(tree, NodeId::Object(k))?;
                self.fp.forget(NodeId::Object(k));
                Action::Free(k)
            }
            Op::Rfree(o) => {
                let r = self.region(tree, o)?;
                self.fp.check_free(tree, NodeId::Region(r))?;
                self.fp.forget(NodeId::Region(r));
                Action::Rfree(r)
            }
            Op::Realloc { obj, size, region } => {
                let k = self.object(tree, obj)?;
                self.fp.check_free(tree, NodeId::Object(k))?;
                let r = self.region(tree, region)?;
                check_size(size)?;
                self.fp.check_alloc(tree, r)?;
                Action::Realloc {
                    key: k,
                    size,
                    region: r,
                }
            }
            Op::Spawn { func, args } => {
                prog.body(func)?;
                let args = self.values(&args)?;
                self.fp.spawn(tree, &args)?;
                let path = self.path.child(self.next_seq);
                self.next_seq += 1;
                Action::Spawn { path, func, args }
            }
            Op::Wait { args } => {
                let args = self.values(&args)?;
                let nodes = self.fp.wait(tree, &args)?;
                let key = self.path.child(self.next_seq);
                self.next_seq += 1;
                Action::Wait { key, args, nodes }
            }
        };
        Ok(Some(a))
    }

    fn alloc(
        &mut self,
        tree: &impl TreeView,
        size: u64,
        region: crate::api::Operand,
        count: usize,
        bulk: bool,
    ) -> Result<Action, Fault> {
        let r = self.region(tree, region)?;
        if count == 0 {
            return Err(Fault::EmptyBulk);
        }
        check_size(size)?;
        self.fp.check_alloc(tree, r)?;
        let keys = (0..count)
            .map(|_| {
                self.alloc_ordinal += 1;
                object_key(&self.path, self.alloc_ordinal - 1)
            })
            .collect();
        Ok(Action::Alloc {
            region: r,
            size,
            keys,
            bulk,
        })
    }

    /// Record the result of the decoded operation and advance.
    pub fn complete(&mut self, result: HandleVal) {
        debug_assert!(self.pc < self.ops.len());
        self.handles.push(result);
        self.pc += 1;
    }
}
