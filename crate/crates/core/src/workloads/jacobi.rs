//! Jacobi iteration over a table split into row blocks. Every group of
//! consecutive blocks has its own region holding both copies of its blocks
//! (source and destination alternate) and two ghost blocks for the rows of
//! its neighbours. Per iteration the root spawns the halo exchanges, which
//! copy neighbour boundary blocks into the ghosts, and one task per group,
//! which spawns one task per block. Group tasks only touch their own
//! region, so their spawns stay with the scheduler owning it.

use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;

use super::{scalar, update, Ops, Params, IN, REGION_RW, RW, SAFE};

pub(super) const DEFAULTS: &[(&str, i64)] = &[
    ("blocks", 64),
    ("groups", 8),
    ("iters", 4),
    ("block_bytes", 4096),
    ("task_cycles", super::MIN_TASK),
];

const BLOCK: usize = 1;
const GROUP: usize = 2;

struct Group {
    region: usize,
    /// Bulk allocations of the two table copies.
    copy: [usize; 2],
    /// Bulk allocation of the ghosts: 0 above, 1 below.
    ghosts: usize,
}

fn root(t: &TaskView) -> Vec<Op> {
    let (blocks, groups, iters, bytes, cycles) = (t.scalar(1), t.scalar(2), t.scalar(3), t.scalar(4), t.scalar(5));
    let per = (blocks / groups) as usize;
    let n = groups as usize;
    let mut ops = Ops::default();
    let mut gs = Vec::new();
    for _ in 0..n {
        let region = ops.push(Op::Ralloc {
            parent: Operand::Root,
            level: 1,
        });
        let mut copy = [0; 2];
        for c in &mut copy {
            let sub = ops.push(Op::Ralloc {
                parent: Operand::Handle(region),
                level: 2,
            });
            *c = ops.push(Op::Balloc {
                size: bytes as u64,
                region: Operand::Handle(sub),
                count: per,
            });
        }
        let ghosts = ops.push(Op::Balloc {
            size: bytes as u64,
            region: Operand::Handle(region),
            count: 2,
        });
        gs.push(Group { region, copy, ghosts });
    }
    let group_task = |ops: &mut Ops, g: &Group, src: usize, cycles: i64, init: bool| {
        let mut args = vec![
            (Operand::Handle(g.region), REGION_RW),
            scalar(per as i64),
            scalar(cycles),
            scalar(i64::from(init)),
            (Operand::Elem(g.ghosts, 0), SAFE),
            (Operand::Elem(g.ghosts, 1), SAFE),
        ];
        args.extend((0..per).map(|j| (Operand::Elem(g.copy[1 - src], j), SAFE)));
        args.extend((0..per).map(|j| (Operand::Elem(g.copy[src], j), SAFE)));
        ops.spawn(GROUP, args);
    };
    // Iteration 0 reads copy 0, which is the destination here.
    for g in &gs {
        group_task(&mut ops, g, 1, cycles / 4, true);
    }
    for it in 0..iters as usize {
        let src = it % 2;
        for (i, g) in gs.iter().enumerate() {
            if i > 0 {
                let from = Operand::Elem(gs[i - 1].copy[src], per - 1);
                ops.spawn(
                    BLOCK,
                    vec![scalar(cycles / 16), (Operand::Elem(g.ghosts, 0), RW), (from, IN)],
                );
            }
            if i + 1 < n {
                let from = Operand::Elem(gs[i + 1].copy[src], 0);
                ops.spawn(
                    BLOCK,
                    vec![scalar(cycles / 16), (Operand::Elem(g.ghosts, 1), RW), (from, IN)],
                );
            }
        }
        for g in &gs {
            group_task(&mut ops, g, src, cycles, false);
        }
    }
    ops.0
}

/// Arguments: the group region, blocks per group, cycles, whether this is
/// the initialisation pass, the two ghosts, then the destination and source
/// block handles. The initialisation pass writes the destination blocks and
/// both ghosts; edge groups keep reading a ghost nobody refreshes, which
/// stands for the fixed border.
fn group(t: &TaskView) -> Vec<Op> {
    let (per, cycles, init) = (t.scalar(1) as usize, t.scalar(2), t.scalar(3) == 1);
    let dst = |j: usize| Operand::Arg(6 + j);
    let src = |j: usize| Operand::Arg(6 + per + j);
    let mut ops = Ops::default();
    if init {
        for a in (0..per).map(dst).chain([Operand::Arg(4), Operand::Arg(5)]) {
            ops.spawn(BLOCK, vec![scalar(cycles), (a, RW)]);
        }
        return ops.0;
    }
    for j in 0..per {
        let up = if j > 0 { src(j - 1) } else { Operand::Arg(4) };
        let down = if j + 1 < per { src(j + 1) } else { Operand::Arg(5) };
        ops.spawn(
            BLOCK,
            vec![scalar(cycles), (dst(j), RW), (src(j), IN), (up, IN), (down, IN)],
        );
    }
    ops.0
}

pub(super) fn build(p: &Params) -> Result<Program, SimError> {
    let blocks = p.at_least("blocks", 1)?;
    let groups = p.at_least("groups", 1)?;
    if blocks % groups != 0 {
        return Err(p.error(format!("{blocks} blocks do not split into {groups} groups")));
    }
    let bytes = p.at_least("block_bytes", 1)?;
    if bytes as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error("block_bytes exceeds the object size limit".into()));
    }
    Ok(jacobi(
        blocks,
        groups,
        p.at_least("iters", 0)?,
        bytes,
        p.at_least("task_cycles", 0)?,
    ))
}

/// `blocks` row blocks of `block_bytes`, split over `groups` regions.
/// `blocks` must be a multiple of `groups`.
pub fn jacobi(blocks: i64, groups: i64, iters: i64, block_bytes: i64, cycles: i64) -> Program {
    let mut p = Program::new("jacobi");
    p.root = p.func("root", root);
    p.func("block", update);
    p.func("group", group);
    p.root_args = vec![blocks, groups, iters, block_bytes, cycles];
    p
}
