//! Blocked C += A·B. Each matrix is an s×s grid of blocks (s² = `parts`),
//! one region per block row of A and C and per block column of B. Phase k
//! adds A[i][k]·B[k][j] into every C[i][j]; the blocks of row k of B and
//! column k of A are shared by a whole phase.

use crate::api::{Op, Operand, Program, TaskView};
use crate::error::SimError;

use super::{scalar, update, Ops, Params, IN, RW};

pub(super) const DEFAULTS: &[(&str, i64)] = &[
    ("parts", 64),
    ("block_bytes", 65536),
    ("task_cycles", 2 * super::MIN_TASK),
];

const BLOCK: usize = 1;

fn root(t: &TaskView) -> Vec<Op> {
    let (parts, bytes, cycles) = (t.scalar(1), t.scalar(2), t.scalar(3));
    let s = (parts as f64).sqrt().round() as usize;
    let mut ops = Ops::default();
    // bands[m][b]: the bulk allocation of band b of matrix m (A, B, C).
    let mut bands = [vec![], vec![], vec![]];
    for band in &mut bands {
        for _ in 0..s {
            let r = ops.push(Op::Ralloc {
                parent: Operand::Root,
                level: 1,
            });
            band.push(ops.push(Op::Balloc {
                size: bytes as u64,
                region: Operand::Handle(r),
                count: s,
            }));
        }
    }
    let a = |i: usize, k: usize| Operand::Elem(bands[0][i], k);
    let b = |k: usize, j: usize| Operand::Elem(bands[1][j], k);
    let c = |i: usize, j: usize| Operand::Elem(bands[2][i], j);
    for i in 0..s {
        for j in 0..s {
            for m in [a(i, j), b(i, j), c(i, j)] {
                ops.spawn(BLOCK, vec![scalar(cycles / 8), (m, RW)]);
            }
        }
    }
    for k in 0..s {
        for i in 0..s {
            for j in 0..s {
                ops.spawn(BLOCK, vec![scalar(cycles), (c(i, j), RW), (a(i, k), IN), (b(k, j), IN)]);
            }
        }
    }
    ops.0
}

pub(super) fn build(p: &Params) -> Result<Program, SimError> {
    let parts = p.at_least("parts", 1)?;
    let mut q = 1;
    while q < parts {
        q *= 4;
    }
    if q != parts {
        return Err(p.error(format!("parts must be a power of 4, got {parts}")));
    }
    let bytes = p.at_least("block_bytes", 1)?;
    if bytes as u64 > crate::memory::MAX_OBJECT {
        return Err(p.error("block_bytes exceeds the object size limit".into()));
    }
    Ok(matmul(parts, bytes, p.at_least("task_cycles", 0)?))
}

/// `parts` must be a power of 4: the block grid is square with a power of
/// two per side.
pub fn matmul(parts: i64, block_bytes: i64, cycles: i64) -> Program {
    let mut p = Program::new("matmul");
    p.root = p.func("root", root);
    p.func("block", update);
    p.root_args = vec![parts, block_bytes, cycles];
    p
}
