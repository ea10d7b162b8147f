//! Bitonic sort over `parts` data parts (a power of two) held in `groups`
//! coarse regions. Every part is sorted locally, then each step of the
//! merging network pairs part i with part i xor 2^j. Steps that pair parts
//! of the same group are spawned by per-group tasks, the rest by the root.

use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;

use super::{is_pow2, scalar, update, Ops, Params, REGION_RW, RW, SAFE};

pub(super) const DEFAULTS: &[(&str, i64)] = &[
    ("parts", 64),
    ("groups", 8),
    ("part_bytes", 4096),
    ("task_cycles", super::MIN_TASK),
];

const PART: usize = 1;
const GROUP: usize = 2;

/// Compare-exchange partners of the merging network, one list per step.
pub fn bitonic_steps(parts: usize) -> Vec<Vec<(usize, usize)>> {
    let log = parts.trailing_zeros();
    let mut steps = Vec::new();
    for k in 1..=log {
        for j in (0..k).rev() {
            let d = 1 << j;
            steps.push((0..parts).filter(|i| i & d == 0).map(|i| (i, i | d)).collect());
        }
    }
    steps
}

fn root(t: &TaskView) -> Vec<Op> {
    let (parts, groups, bytes, cycles) = (t.scalar(1) as usize, t.scalar(2) as usize, t.scalar(3), t.scalar(4));
    let per = parts / groups;
    let mut ops = Ops::default();
    let mut regions = Vec::new();
    let mut objs = Vec::new();
    for _ in 0..groups {
        let r = ops.push(Op::Ralloc {
            parent: Operand::Root,
            level: 1,
        });
        regions.push(r);
        objs.push(ops.push(Op::Balloc {
            size: bytes as u64,
            region: Operand::Handle(r),
            count: per,
        }));
    }
    let part = |i: usize| Operand::Elem(objs[i / per], i % per);
    // Runs of steps whose pairs stay inside one group go to one task per
    // group; distance 0 stands for the local sort.
    let mut local = vec![0];
    let flush = |ops: &mut Ops, local: &mut Vec<usize>| {
        if local.is_empty() {
            return;
        }
        for g in 0..groups {
            let mut args = vec![
                (Operand::Handle(regions[g]), REGION_RW),
                scalar(cycles),
                scalar(per as i64),
                scalar(local.len() as i64),
            ];
            args.extend(local.iter().map(|&d| scalar(d as i64)));
            args.extend((0..per).map(|j| (Operand::Elem(objs[g], j), SAFE)));
            ops.spawn(GROUP, args);
        }
        local.clear();
    };
    for step in bitonic_steps(parts) {
        let d = step[0].1 - step[0].0;
        if d < per {
            local.push(d);
            continue;
        }
        flush(&mut ops, &mut local);
        for (i, j) in step {
            ops.spawn(PART, vec![scalar(cycles), (part(i), RW), (part(j), RW)]);
        }
    }
    flush(&mut ops, &mut local);
    ops.0
}

/// Arguments: the group region, cycles, parts in the group, the number of
/// steps, their distances, then the part handles.
fn group(t: &TaskView) -> Vec<Op> {
    let (cycles, per, n) = (t.scalar(1), t.scalar(2) as usize, t.scalar(3) as usize);
    let part = |j: usize| Operand::Arg(4 + n + j);
    let mut ops = Ops::default();
    for s in 0..n {
        let d = t.scalar(4 + s) as usize;
        for j in 0..per {
            if d == 0 {
                ops.spawn(PART, vec![scalar(cycles), (part(j), RW)]);
            } else if j & d == 0 {
                ops.spawn(PART, vec![scalar(cycles), (part(j), RW), (part(j | d), RW)]);
            }
        }
    }
    ops.0
}

/// Local sort on one part or a merge of two.
fn merge(t: &TaskView) -> Vec<Op> {
    let mut ops = update(t);
    if t.arity() == 3 {
        ops.push(Op::Write(Operand::Arg(2)));
    }
    ops
}

pub(super) fn build(p: &Params) -> Result<Program, SimError> {
    let parts = p.at_least("parts", 2)?;
    let groups = p.at_least("groups", 1)?;
    if !is_pow2(parts) || !is_pow2(groups) || groups > parts {
        return Err(p.error(format!(
            "parts and groups must be powers of two with groups <= parts, got {parts} and {groups}"
        )));
    }
    let bytes = p.at_least("part_bytes", 1)?;
    if bytes as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error("part_bytes exceeds the object size limit".into()));
    }
    Ok(bitonic(parts, groups, bytes, p.at_least("task_cycles", 0)?))
}

pub fn bitonic(parts: i64, groups: i64, part_bytes: i64, cycles: i64) -> Program {
    let mut p = Program::new("bitonic");
    p.root = p.func("root", root);
    p.func("part", merge);
    p.func("group", group);
    p.root_args = vec![parts, groups, part_bytes, cycles];
    p
}
