use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;

use super::{scalar, update, Ops, Params, REGION_RW, RW};

pub(super) const FLAT_DEFAULTS: &[(&str, i64)] = &[("tasks", 512), ("task_cycles", 0), ("object_bytes", 64)];

pub(super) const HIER_DEFAULTS: &[(&str, i64)] = &[
    ("depth", 2),
    ("fanout", 8),
    ("leaf_tasks", 16),
    ("task_cycles", 0),
    ("object_bytes", 64),
];

const LEAF: usize = 1;
const NODE: usize = 2;

/// Allocate `n` objects in `region` and spawn one leaf per object.
fn spawn_leaves(ops: &mut Ops, region: Operand, n: i64, cycles: i64, bytes: i64) {
    let objs = ops.push(Op::Balloc {
        size: bytes as u64,
        region,
        count: n as usize,
    });
    for i in 0..n as usize {
        ops.spawn(LEAF, vec![scalar(cycles), (Operand::Elem(objs, i), RW)]);
    }
}

/// Root of both synthetic programs. Arguments: depth, fanout, leaf tasks,
/// cycles, object bytes. Depth 1 spawns the leaves directly.
fn root(t: &TaskView) -> Vec<Op> {
    let (depth, fanout, leaves, cycles, bytes) = (t.scalar(1), t.scalar(2), t.scalar(3), t.scalar(4), t.scalar(5));
    let mut ops = Ops::default();
    if depth <= 1 {
        spawn_leaves(&mut ops, Operand::Root, leaves, cycles, bytes);
    } else {
        expand(&mut ops, Operand::Root, 1, depth - 1, fanout, leaves, cycles, bytes);
    }
    ops.0
}

#[allow(clippy::too_many_arguments)]
fn expand(ops: &mut Ops, parent: Operand, level: i64, below: i64, fanout: i64, leaves: i64, cycles: i64, bytes: i64) {
    for _ in 0..fanout {
        let r = ops.push(Op::Ralloc {
            parent,
            level: level as u32,
        });
        ops.spawn(
            NODE,
            vec![
                (Operand::Handle(r), REGION_RW),
                scalar(level),
                scalar(below),
                scalar(fanout),
                scalar(leaves),
                scalar(cycles),
                scalar(bytes),
            ],
        );
    }
}

/// Interior task owning one region: `below` more region levels under it.
fn node(t: &TaskView) -> Vec<Op> {
    let (level, below, fanout, leaves, cycles, bytes) = (
        t.scalar(1),
        t.scalar(2),
        t.scalar(3),
        t.scalar(4),
        t.scalar(5),
        t.scalar(6),
    );
    let mut ops = Ops::default();
    if below <= 1 {
        spawn_leaves(&mut ops, Operand::Arg(0), leaves, cycles, bytes);
    } else {
        expand(
            &mut ops,
            Operand::Arg(0),
            level + 1,
            below - 1,
            fanout,
            leaves,
            cycles,
            bytes,
        );
    }
    ops.0
}

fn program(name: &str, args: Vec<i64>) -> Program {
    let mut p = Program::new(name);
    p.root = p.func("root", root);
    p.func("leaf", update);
    p.func("node", node);
    p.root_args = args;
    p
}

fn bytes(p: &Params) -> Result<i64, SimError> {
    let b = p.at_least("object_bytes", 1)?;
    if b as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error(format!("object_bytes exceeds {}", crate::memory::MAX_OBJECT)));
    }
    Ok(b)
}

pub(super) fn build_flat(p: &Params) -> Result<Program, SimError> {
    Ok(synthetic_flat(
        p.at_least("tasks", 1)?,
        p.at_least("task_cycles", 0)?,
        bytes(p)?,
    ))
}

pub(super) fn build_hier(p: &Params) -> Result<Program, SimError> {
    Ok(synthetic_hierarchical(
        p.at_least("depth", 1)?,
        p.at_least("fanout", 1)?,
        p.at_least("leaf_tasks", 1)?,
        p.at_least("task_cycles", 0)?,
        bytes(p)?,
    ))
}

/// The root spawns `n` independent tasks, each writing its own object
/// after `cycles` of compute.
pub fn synthetic_flat(n: i64, cycles: i64, object_bytes: i64) -> Program {
    program("synthetic_flat", vec![1, 1, n, cycles, object_bytes])
}

/// `depth` levels of regions: every interior task allocates `fanout`
/// subregions and hands each to a child task; the last level spawns
/// `leaf_tasks` tasks on objects of its region. Depth 1 is the flat
/// program with `leaf_tasks` tasks.
pub fn synthetic_hierarchical(depth: i64, fanout: i64, leaf_tasks: i64, cycles: i64, object_bytes: i64) -> Program {
    program(
        "synthetic_hierarchical",
        vec![depth, fanout, leaf_tasks, cycles, object_bytes],
    )
}
