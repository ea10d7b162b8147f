//! K-means. Every group of point chunks has a region holding the chunks,
//! their partial sums, a copy of the centres and the group sum. Per
//! iteration one task per group assigns its chunks against its copy and
//! reduces the partials into the group sum; the root then folds the group
//! sums into the centres and broadcasts them back into every copy.

use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;

use super::{scalar, update, Ops, Params, IN, REGION_IN, REGION_RW, REGION_SAFE, RW, SAFE};

pub(super) const CLUSTERS: i64 = 8;

pub(super) const DEFAULTS: &[(&str, i64)] = &[
    ("chunks", 64),
    ("groups", 8),
    ("clusters", CLUSTERS),
    ("iters", 3),
    ("chunk_bytes", 4096),
    ("cycles_per_cluster", super::MIN_TASK / CLUSTERS),
];

const UPDATE: usize = 1;
const REDUCE: usize = 2;
const GROUP: usize = 3;

fn root(t: &TaskView) -> Vec<Op> {
    let (chunks, groups, clusters, iters, bytes, cpc) = (
        t.scalar(1),
        t.scalar(2) as usize,
        t.scalar(3),
        t.scalar(4),
        t.scalar(5),
        t.scalar(6),
    );
    let per = chunks as usize / groups;
    let centre_bytes = (clusters * 32) as u64;
    let mut ops = Ops::default();
    let mut args = Vec::new();
    // Per group: the group task's arguments after the leading scalars,
    // and the handles of its centre copy and group sum.
    let mut copies = Vec::new();
    for _ in 0..groups {
        let g = ops.push(Op::Ralloc {
            parent: Operand::Root,
            level: 1,
        });
        let points = ops.push(Op::Ralloc {
            parent: Operand::Handle(g),
            level: 2,
        });
        let chunk = ops.push(Op::Balloc {
            size: bytes as u64,
            region: Operand::Handle(points),
            count: per,
        });
        let partials = ops.push(Op::Ralloc {
            parent: Operand::Handle(g),
            level: 2,
        });
        let partial = ops.push(Op::Balloc {
            size: centre_bytes,
            region: Operand::Handle(partials),
            count: per,
        });
        let copy = ops.push(Op::Alloc {
            size: centre_bytes,
            region: Operand::Handle(g),
        });
        let sum = ops.push(Op::Alloc {
            size: centre_bytes,
            region: Operand::Handle(g),
        });
        let mut a = vec![
            (Operand::Handle(g), REGION_RW),
            (Operand::Handle(copy), SAFE),
            (Operand::Handle(sum), SAFE),
            (Operand::Handle(partials), REGION_SAFE),
        ];
        a.extend((0..per).map(|j| (Operand::Elem(chunk, j), SAFE)));
        a.extend((0..per).map(|j| (Operand::Elem(partial, j), SAFE)));
        args.push(a);
        copies.push((copy, sum));
    }
    let centres = ops.push(Op::Alloc {
        size: centre_bytes,
        region: Operand::Root,
    });
    let group_task = |ops: &mut Ops, g: usize, init: bool| {
        let mut a = vec![
            scalar(per as i64),
            scalar(cpc),
            scalar(clusters),
            scalar(i64::from(init)),
        ];
        a.extend(args[g].iter().cloned());
        ops.spawn(GROUP, a);
    };
    let broadcast = |ops: &mut Ops| {
        for &(copy, _) in &copies {
            ops.spawn(
                UPDATE,
                vec![scalar(cpc), (Operand::Handle(copy), RW), (Operand::Handle(centres), IN)],
            );
        }
    };
    for g in 0..groups {
        group_task(&mut ops, g, true);
    }
    ops.spawn(UPDATE, vec![scalar(cpc), (Operand::Handle(centres), RW)]);
    broadcast(&mut ops);
    for _ in 0..iters {
        for g in 0..groups {
            group_task(&mut ops, g, false);
        }
        let mut a = vec![scalar(cpc * groups as i64), (Operand::Handle(centres), RW)];
        a.extend(copies.iter().map(|&(_, sum)| (Operand::Handle(sum), IN)));
        ops.spawn(UPDATE, a);
        broadcast(&mut ops);
    }
    ops.0
}

/// Arguments: chunks in the group, cycles per cluster, clusters, whether
/// this is the initialisation pass, the group region, its centre copy, its
/// sum, the partials region, then the chunk and partial handles.
fn group(t: &TaskView) -> Vec<Op> {
    let (per, cpc, clusters, init) = (t.scalar(0) as usize, t.scalar(1), t.scalar(2), t.scalar(3) == 1);
    let chunk = |j: usize| Operand::Arg(8 + j);
    let partial = |j: usize| Operand::Arg(8 + per + j);
    let mut ops = Ops::default();
    if init {
        for j in 0..per {
            ops.spawn(UPDATE, vec![scalar(cpc), (chunk(j), RW)]);
        }
        return ops.0;
    }
    for j in 0..per {
        ops.spawn(
            UPDATE,
            vec![
                scalar(cpc * clusters),
                (chunk(j), RW),
                (partial(j), RW),
                (Operand::Arg(5), IN),
            ],
        );
    }
    let mut a = vec![scalar(cpc), (Operand::Arg(6), RW), (Operand::Arg(7), REGION_IN)];
    a.extend((0..per).map(|j| (partial(j), SAFE)));
    ops.spawn(REDUCE, a);
    ops.0
}

/// Arguments: cycles, the accumulator, a region of inputs and handles to
/// every input in it.
fn reduce(t: &TaskView) -> Vec<Op> {
    let mut ops = Ops::default();
    for i in 3..t.arity() {
        ops.push(Op::Read(Operand::Arg(i)));
    }
    ops.push(Op::Read(Operand::Arg(1)));
    ops.compute(t.scalar(0) * (t.arity() as i64 - 3));
    ops.push(Op::Write(Operand::Arg(1)));
    ops.0
}

pub(super) fn build(p: &Params) -> Result<Program, SimError> {
    let chunks = p.at_least("chunks", 1)?;
    let groups = p.at_least("groups", 1)?;
    if chunks % groups != 0 {
        return Err(p.error(format!("{chunks} chunks do not split into {groups} groups")));
    }
    let clusters = p.at_least("clusters", 1)?;
    let bytes = p.at_least("chunk_bytes", 1)?;
    if bytes as u64 > crate::memory::MAX_OBJECT || (clusters * 32) as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error("chunk or centre size exceeds the object size limit".into()));
    }
    Ok(kmeans(
        chunks,
        groups,
        clusters,
        p.at_least("iters", 0)?,
        bytes,
        p.at_least("cycles_per_cluster", 0)?,
    ))
}

/// `chunks` point chunks (a multiple of `groups`), `clusters` centres.
pub fn kmeans(
    chunks: i64,
    groups: i64,
    clusters: i64,
    iters: i64,
    chunk_bytes: i64,
    cycles_per_cluster: i64,
) -> Program {
    let mut p = Program::new("kmeans");
    p.root = p.func("root", root);
    p.func("update", update);
    p.func("reduce", reduce);
    p.func("group", group);
    p.root_args = vec![chunks, groups, clusters, iters, chunk_bytes, cycles_per_cluster];
    p
}
