//! Workload programs: a table of task functions whose bodies are lists of
//! runtime calls and compute steps.

use serde::{Deserialize, Serialize};

use crate::dependency::ArgFlags;
use crate::error::Fault;
use crate::ids::{Addr, ObjKey, RegionId, TaskPath};

/// Handle to an object as seen by a task. The address is placement
/// specific; the key is stable across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjRef {
    pub key: ObjKey,
    pub addr: Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Region(RegionId),
    Object(ObjRef),
    Scalar(i64),
}

/// Where an operation takes a value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    /// The task's own argument.
    Arg(usize),
    /// The result of an earlier operation of the same body.
    Handle(usize),
    /// Element `k` of an earlier `Balloc`.
    Elem(usize, usize),
    Scalar(i64),
    /// The root region.
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    /// Busy the worker for this many cycles.
    Compute(u64),
    Read(Operand),
    Write(Operand),
    Alloc {
        size: u64,
        region: Operand,
    },
    Balloc {
        size: u64,
        region: Operand,
        count: usize,
    },
    Ralloc {
        parent: Operand,
        level: u32,
    },
    Free(Operand),
    Rfree(Operand),
    Realloc {
        obj: Operand,
        size: u64,
        region: Operand,
    },
    Spawn {
        func: usize,
        args: Vec<(Operand, ArgFlags)>,
    },
    Wait {
        args: Vec<(Operand, ArgFlags)>,
    },
}

/// Read-only view a body gets of its task. Only scalars are exposed so that
/// bodies cannot depend on placement.
pub struct TaskView<'a> {
    pub path: &'a TaskPath,
    args: &'a [Value],
}

impl<'a> TaskView<'a> {
    pub fn new(path: &'a TaskPath, args: &'a [Value]) -> Self {
        TaskView { path, args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Scalar argument `i`; panics if it is not a scalar.
    pub fn scalar(&self, i: usize) -> i64 {
        match self.args.get(i) {
            Some(Value::Scalar(v)) => *v,
            other => panic!("argument {i} of {} is not a scalar: {other:?}", self.path),
        }
    }
}

pub type Body = fn(&TaskView) -> Vec<Op>;

#[derive(Clone)]
pub struct Func {
    pub name: &'static str,
    pub body: Body,
}

impl std::fmt::Debug for Func {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name)
    }
}

/// A complete workload. The root task receives the root region
/// (read-write) as argument 0 followed by `root_args` as scalars.
#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub funcs: Vec<Func>,
    pub root: usize,
    pub root_args: Vec<i64>,
}

impl Program {
    pub fn new(name: impl Into<String>) -> Self {
        Program {
            name: name.into(),
            funcs: Vec::new(),
            root: 0,
            root_args: Vec::new(),
        }
    }

    /// Register a function; returns its index.
    pub fn func(&mut self, name: &'static str, body: Body) -> usize {
        self.funcs.push(Func { name, body });
        self.funcs.len() - 1
    }

    pub fn body(&self, idx: usize) -> Result<Body, Fault> {
        self.funcs.get(idx).map(|f| f.body).ok_or(Fault::UnknownFunction(idx))
    }

    pub fn root_task_args(&self) -> Vec<(Value, ArgFlags)> {
        let mut v = vec![(Value::Region(RegionId::ROOT), ArgFlags::INOUT | ArgFlags::REGION)];
        v.extend(self.root_args.iter().map(|&s| (Value::Scalar(s), ArgFlags::SAFE)));
        v
    }
}

/// Result of an operation that later operands may refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandleVal {
    None,
    One(Value),
    Many(Vec<Value>),
}

/// Resolve an operand against the task's arguments and earlier results.
pub fn resolve(
    task: &TaskPath,
    args: &[(Value, ArgFlags)],
    handles: &[HandleVal],
    op: Operand,
) -> Result<Value, Fault> {
    let bad = |why: String| Fault::BadOperand {
        task: task.clone(),
        why,
    };
    match op {
        Operand::Arg(i) => args.get(i).map(|a| a.0).ok_or_else(|| bad(format!("argument {i}"))),
        Operand::Handle(i) => match handles.get(i) {
            Some(HandleVal::One(v)) => Ok(*v),
            _ => Err(bad(format!("result of operation {i}"))),
        },
        Operand::Elem(i, k) => match handles.get(i) {
            Some(HandleVal::Many(v)) => v
                .get(k)
                .copied()
                .ok_or_else(|| bad(format!("element {k} of operation {i}"))),
            _ => Err(bad(format!("bulk result of operation {i}"))),
        },
        Operand::Scalar(s) => Ok(Value::Scalar(s)),
        Operand::Root => Ok(Value::Region(RegionId::ROOT)),
    }
}

/// Stable key of the `ordinal`-th object allocated by `task`.
pub fn object_key(task: &TaskPath, ordinal: u32) -> ObjKey {
    ObjKey(crate::ids::mix64(task.id().0 ^ (u64::from(ordinal) << 32 | 0x0b1e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operands_resolve() {
        let t = TaskPath::root();
        let args = vec![(Value::Scalar(4), ArgFlags::SAFE)];
        let r = Value::Region(RegionId(9));
        let handles = vec![
            HandleVal::One(r),
            HandleVal::Many(vec![Value::Scalar(1), Value::Scalar(2)]),
        ];
        assert_eq!(resolve(&t, &args, &handles, Operand::Arg(0)), Ok(Value::Scalar(4)));
        assert_eq!(resolve(&t, &args, &handles, Operand::Handle(0)), Ok(r));
        assert_eq!(resolve(&t, &args, &handles, Operand::Elem(1, 1)), Ok(Value::Scalar(2)));
        assert!(resolve(&t, &args, &handles, Operand::Arg(3)).is_err());
        assert!(resolve(&t, &args, &handles, Operand::Handle(1)).is_err());
    }

    #[test]
    fn object_keys_are_distinct() {
        let a = TaskPath(vec![0]);
        let b = TaskPath(vec![1]);
        assert_ne!(object_key(&a, 0), object_key(&a, 1));
        assert_ne!(object_key(&a, 0), object_key(&b, 0));
    }
}
