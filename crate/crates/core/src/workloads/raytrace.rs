//! Ray tracing stand-in: the frame is split into tiles of pixel lines,
//! grouped into regions. Each group loads its own copy of the scene, then
//! every tile reads that copy and writes its pixels; its cost is the sum of a deterministic per-pixel function of
//! the scene seed, so tiles differ in cost the way real rays do.

use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;
use crate::ids::mix64;

use super::{scalar, Ops, Params, IN, REGION_RW, RW, SAFE};

pub(super) const DEFAULTS: &[(&str, i64)] = &[
    ("width", 64),
    ("height", 256),
    ("scene_seed", 7),
    ("groups", 8),
    ("tile_lines", 4),
    ("pixel_cycles", 228),
];

pub(super) const STRONG_WIDTH: i64 = 256;
pub(super) const STRONG_HEIGHT: i64 = 2048;

/// Pixel cost giving the strong-scaling frame one step of work; a pixel
/// costs 4.5 times the base on average.
pub(super) fn strong_pixel_cycles() -> i64 {
    super::STEP_CYCLES * 2 / (9 * STRONG_WIDTH * STRONG_HEIGHT)
}

const TILE: usize = 1;
const GROUP: usize = 2;
const SCENE: usize = 3;

/// Cycles to shade pixel (x, y): between 1 and 8 times `base`.
pub fn pixel_cost(seed: i64, x: i64, y: i64, base: i64) -> i64 {
    let h = mix64((seed as u64) << 40 ^ (y as u64) << 20 ^ x as u64);
    base * (1 + (h % 8) as i64)
}

fn root(t: &TaskView) -> Vec<Op> {
    let (w, h, seed, groups, lines, px) = (
        t.scalar(1),
        t.scalar(2),
        t.scalar(3),
        t.scalar(4) as usize,
        t.scalar(5),
        t.scalar(6),
    );
    let tiles = (h / lines) as usize;
    let per = tiles / groups;
    let mut ops = Ops::default();
    for g in 0..groups {
        let r = ops.push(Op::Ralloc {
            parent: Operand::Root,
            level: 1,
        });
        let scene = ops.push(Op::Alloc {
            size: 2048,
            region: Operand::Handle(r),
        });
        let objs = ops.push(Op::Balloc {
            size: (w * lines * 4) as u64,
            region: Operand::Handle(r),
            count: per,
        });
        let mut args = vec![
            (Operand::Handle(r), REGION_RW),
            (Operand::Handle(scene), SAFE),
            scalar(w),
            scalar(seed),
            scalar(lines),
            scalar(px),
            scalar((g * per) as i64 * lines),
        ];
        args.extend((0..per).map(|j| (Operand::Elem(objs, j), SAFE)));
        ops.spawn(GROUP, args);
    }
    ops.0
}

/// Arguments: region, its scene copy, width, seed, lines per tile, pixel
/// cycles, first line, then the tile handles.
fn group(t: &TaskView) -> Vec<Op> {
    let (w, seed, lines, px, y0) = (t.scalar(2), t.scalar(3), t.scalar(4), t.scalar(5), t.scalar(6));
    let mut ops = Ops::default();
    ops.spawn(SCENE, vec![(Operand::Arg(1), RW)]);
    for j in 0..t.arity() - 7 {
        let y = y0 + j as i64 * lines;
        ops.spawn(
            TILE,
            vec![
                (Operand::Arg(7 + j), RW),
                (Operand::Arg(1), IN),
                scalar(w),
                scalar(seed),
                scalar(y),
                scalar(lines),
                scalar(px),
            ],
        );
    }
    ops.0
}

fn tile(t: &TaskView) -> Vec<Op> {
    let (w, seed, y0, lines, px) = (t.scalar(2), t.scalar(3), t.scalar(4), t.scalar(5), t.scalar(6));
    let cost: i64 = (y0..y0 + lines)
        .flat_map(|y| (0..w).map(move |x| pixel_cost(seed, x, y, px)))
        .sum();
    let mut ops = Ops::default();
    ops.push(Op::Read(Operand::Arg(1)));
    ops.compute(cost);
    ops.push(Op::Write(Operand::Arg(0)));
    ops.0
}

fn scene(_: &TaskView) -> Vec<Op> {
    vec![Op::Compute(5000), Op::Write(Operand::Arg(0))]
}

pub(super) fn build(p: &Params) -> Result<Program, SimError> {
    let w = p.at_least("width", 1)?;
    let h = p.at_least("height", 1)?;
    let groups = p.at_least("groups", 1)?;
    let lines = p.at_least("tile_lines", 1)?;
    if h % lines != 0 || (h / lines) % groups != 0 {
        return Err(p.error(format!(
            "{h} lines do not split into tiles of {lines} lines spread over {groups} groups"
        )));
    }
    if (w * lines * 4) as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error("tile size exceeds the object size limit".into()));
    }
    Ok(raytrace_lite(
        w,
        h,
        p.get("scene_seed"),
        groups,
        lines,
        p.at_least("pixel_cycles", 0)?,
    ))
}

/// A `w`×`h` frame in tiles of `tile_lines` lines, `groups` regions.
pub fn raytrace_lite(w: i64, h: i64, scene_seed: i64, groups: i64, tile_lines: i64, pixel_cycles: i64) -> Program {
    let mut p = Program::new("raytrace_lite");
    p.root = p.func("root", root);
    p.func("tile", tile);
    p.func("group", group);
    p.func("scene", scene);
    p.root_args = vec![w, h, scene_seed, groups, tile_lines, pixel_cycles];
    p
}
