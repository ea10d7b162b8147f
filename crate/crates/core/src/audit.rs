//! Randomized protocol audits: generated region-tree programs executed both
//! serially and on the simulated machine, with every end-of-run audit on.
//!
//! A generated program is a single task function whose body is derived
//! from a seed and the task's path. Everything a body must know about its
//! arguments travels in two trailing scalars: the seed and a packed
//! descriptor of the node arguments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::api::{run_serial, Op, Operand, Program, TaskView};
use crate::config::SimConfig;
use crate::dependency::{ArgFlags, DepStats};
use crate::error::SimError;
use crate::ids::mix64;
use crate::runtime::run_parallel;

pub const MAX_REGION_DEPTH: u8 = 4;
/// Task depth 3 with at most 3 spawns per task bounds a program at 40 tasks.
const MAX_TASK_DEPTH: usize = 3;
const MAX_SPAWNS: usize = 3;

/// What a body knows about one node argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ArgDesc {
    region: bool,
    ro: bool,
    nt: bool,
    depth: u8,
}

fn pack_meta(args: &[ArgDesc]) -> i64 {
    let mut m = args.len() as u64;
    for (i, a) in args.iter().enumerate() {
        let bits = u64::from(a.region) | u64::from(a.ro) << 1 | u64::from(a.nt) << 2 | u64::from(a.depth) << 3;
        m |= bits << (4 + 6 * i);
    }
    m as i64
}

fn unpack_meta(m: i64) -> Vec<ArgDesc> {
    let m = m as u64;
    (0..(m & 0xf) as usize)
        .map(|i| {
            let b = m >> (4 + 6 * i);
            ArgDesc {
                region: b & 1 != 0,
                ro: b & 2 != 0,
                nt: b & 4 != 0,
                depth: ((b >> 3) & 7) as u8,
            }
        })
        .collect()
}

/// A node the body can name: an argument or the result of one of its ops.
#[derive(Debug, Clone)]
struct Item {
    op: Operand,
    desc: ArgDesc,
    arg: bool,
    container: Option<usize>,
    delegated: bool,
    gone: bool,
}

struct Gen {
    items: Vec<Item>,
    ops: Vec<Op>,
}

impl Gen {
    /// `i` and every item containing it.
    fn chain(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![i];
        while let Some(p) = self.items[i].container {
            c.push(p);
            i = p;
        }
        c
    }

    fn within(&self, anc: usize, i: usize) -> bool {
        self.chain(i).contains(&anc)
    }

    fn blocked(&self, i: usize) -> bool {
        self.chain(i).iter().any(|&j| self.items[j].delegated)
    }

    fn holds_delegated(&self, i: usize) -> bool {
        (0..self.items.len()).any(|j| self.items[j].delegated && self.within(i, j))
    }

    fn live(&self) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| !self.items[i].gone).collect()
    }

    fn writable(&self, i: usize) -> bool {
        !self.items[i].desc.ro
    }

    fn pick<F: Fn(&Item, usize) -> bool>(&self, rng: &mut ChaCha8Rng, f: F) -> Option<usize> {
        let c: Vec<usize> = self.live().into_iter().filter(|&i| f(&self.items[i], i)).collect();
        c.choose(rng).copied()
    }

    fn flags(d: ArgDesc, want_write: bool) -> ArgFlags {
        let mut f = if want_write && !d.ro {
            ArgFlags::INOUT
        } else {
            ArgFlags::IN
        };
        if d.region {
            f |= ArgFlags::REGION;
        }
        if d.nt {
            f |= ArgFlags::NOTRANSFER;
        }
        f
    }

    fn new_item(&mut self, op: Operand, desc: ArgDesc, container: usize) {
        self.items.push(Item {
            op,
            desc,
            arg: false,
            container: Some(container),
            delegated: false,
            gone: false,
        });
    }

    fn wait_on(&mut self, targets: &[usize]) {
        let args = targets
            .iter()
            .map(|&i| (self.items[i].op, Self::flags(self.items[i].desc, true)))
            .collect();
        self.ops.push(Op::Wait { args });
        for j in 0..self.items.len() {
            if targets.iter().any(|&t| self.within(t, j)) {
                self.items[j].delegated = false;
            }
        }
    }
}

fn object_size(rng: &mut ChaCha8Rng) -> u64 {
    *[64u64, 200, 1000, 5000].choose(rng).unwrap()
}

/// Body of every generated task.
fn random_task(t: &TaskView) -> Vec<Op> {
    let n = t.arity();
    let seed = t.scalar(n - 2) as u64;
    let descs = unpack_meta(t.scalar(n - 1));
    let mut h = seed;
    for &s in &t.path.0 {
        h = mix64(h ^ u64::from(s));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let mut g = Gen {
        items: descs
            .iter()
            .enumerate()
            .map(|(i, &desc)| Item {
                op: Operand::Arg(i),
                desc,
                arg: true,
                container: None,
                delegated: false,
                gone: false,
            })
            .collect(),
        ops: Vec::new(),
    };
    let can_spawn = t.path.0.len() < MAX_TASK_DEPTH;
    let mut spawns = 0;
    let steps = rng.gen_range(3..10);
    for _ in 0..steps {
        let k = g.ops.len();
        match rng.gen_range(0..14) {
            0 => g.ops.push(Op::Compute(rng.gen_range(100..3000))),
            1 => {
                let Some(i) = g.pick(&mut rng, |it, i| !it.desc.region && !it.desc.nt && !g.blocked(i)) else {
                    continue;
                };
                g.ops.push(Op::Read(g.items[i].op));
            }
            2 => {
                let Some(i) = g.pick(&mut rng, |it, i| {
                    !it.desc.region && !it.desc.nt && !it.desc.ro && !g.blocked(i)
                }) else {
                    continue;
                };
                g.ops.push(Op::Write(g.items[i].op));
            }
            3 | 4 => {
                let Some(r) = g.pick(&mut rng, |it, i| it.desc.region && g.writable(i) && !g.blocked(i)) else {
                    continue;
                };
                let size = object_size(&mut rng);
                let d = ArgDesc {
                    region: false,
                    depth: 0,
                    ..g.items[r].desc
                };
                if rng.gen_bool(0.5) {
                    g.ops.push(Op::Alloc {
                        size,
                        region: g.items[r].op,
                    });
                    g.new_item(Operand::Handle(k), d, r);
                } else {
                    let count = rng.gen_range(1..5);
                    g.ops.push(Op::Balloc {
                        size,
                        region: g.items[r].op,
                        count,
                    });
                    for e in 0..count {
                        g.new_item(Operand::Elem(k, e), d, r);
                    }
                }
            }
            5 => {
                let Some(r) = g.pick(&mut rng, |it, i| {
                    it.desc.region && it.desc.depth < MAX_REGION_DEPTH && g.writable(i) && !g.blocked(i)
                }) else {
                    continue;
                };
                let level = rng.gen_range(0..4);
                g.ops.push(Op::Ralloc {
                    parent: g.items[r].op,
                    level,
                });
                let d = ArgDesc {
                    depth: g.items[r].desc.depth + 1,
                    ..g.items[r].desc
                };
                g.new_item(Operand::Handle(k), d, r);
            }
            6..=10 if can_spawn && spawns < MAX_SPAWNS => {
                let mut live = g.live();
                live.shuffle(&mut rng);
                let want = rng.gen_range(1..4);
                let mut chosen: Vec<usize> = Vec::new();
                for i in live {
                    if chosen.len() == want {
                        break;
                    }
                    if chosen.iter().all(|&c| !g.within(c, i) && !g.within(i, c)) {
                        chosen.push(i);
                    }
                }
                if chosen.is_empty() {
                    continue;
                }
                let mut args = Vec::new();
                let mut child = Vec::new();
                for &i in &chosen {
                    let write = rng.gen_bool(0.6);
                    let mut f = Gen::flags(g.items[i].desc, write);
                    if !f.contains(ArgFlags::NOTRANSFER) && rng.gen_bool(0.05) {
                        f |= ArgFlags::NOTRANSFER;
                    }
                    args.push((g.items[i].op, f));
                    child.push(ArgDesc {
                        ro: !f.contains(ArgFlags::OUT),
                        nt: f.contains(ArgFlags::NOTRANSFER),
                        ..g.items[i].desc
                    });
                    g.items[i].delegated = true;
                }
                args.push((Operand::Scalar(rng.gen::<u32>() as i64), ArgFlags::SAFE));
                args.push((Operand::Scalar(pack_meta(&child)), ArgFlags::SAFE));
                g.ops.push(Op::Spawn { func: 0, args });
                spawns += 1;
            }
            11 => {
                if rng.gen_bool(0.5) {
                    let args: Vec<usize> = (0..g.items.len()).filter(|&i| g.items[i].arg).collect();
                    g.wait_on(&args);
                } else if let Some(i) = g.pick(&mut rng, |_, _| true) {
                    g.wait_on(&[i]);
                }
            }
            12 => {
                let Some(i) = g.pick(&mut rng, |it, i| {
                    !it.arg && g.writable(i) && !g.blocked(i) && !g.holds_delegated(i)
                }) else {
                    continue;
                };
                if g.items[i].desc.region {
                    g.ops.push(Op::Rfree(g.items[i].op));
                    for j in 0..g.items.len() {
                        if g.within(i, j) {
                            g.items[j].gone = true;
                        }
                    }
                } else {
                    g.ops.push(Op::Free(g.items[i].op));
                    g.items[i].gone = true;
                }
            }
            _ => {
                let Some(o) = g.pick(&mut rng, |it, i| {
                    !it.arg && !it.desc.region && g.writable(i) && !g.blocked(i)
                }) else {
                    continue;
                };
                let Some(r) = g.pick(&mut rng, |it, i| it.desc.region && g.writable(i) && !g.blocked(i)) else {
                    continue;
                };
                let size = object_size(&mut rng);
                g.ops.push(Op::Realloc {
                    obj: g.items[o].op,
                    size,
                    region: g.items[r].op,
                });
                g.items[o].gone = true;
                let d = ArgDesc {
                    region: false,
                    depth: 0,
                    ..g.items[r].desc
                };
                g.new_item(Operand::Handle(k), d, r);
            }
        }
    }
    if rng.gen_bool(0.5) {
        let args: Vec<usize> = (0..g.items.len()).filter(|&i| g.items[i].arg).collect();
        g.wait_on(&args);
        if let Some(i) = g.pick(&mut rng, |it, _| !it.desc.region && !it.desc.nt) {
            g.ops.push(Op::Read(g.items[i].op));
        }
    }
    // Root only: occasionally one deliberate misuse, to check fault parity.
    if t.path.0.is_empty() && seed.is_multiple_of(16) {
        let at = rng.gen_range(0..=g.ops.len());
        let bad = match rng.gen_range(0..4) {
            0 => Op::Rfree(Operand::Arg(0)),
            1 => Op::Alloc {
                size: 0,
                region: Operand::Arg(0),
            },
            2 => Op::Balloc {
                size: 64,
                region: Operand::Arg(0),
                count: 0,
            },
            _ => Op::Read(Operand::Handle(999)),
        };
        g.ops.insert(at.min(g.ops.len()), bad);
    }
    g.ops
}

/// The generated program for `seed`.
pub fn random_program(seed: u64) -> Program {
    let mut p = Program::new(format!("random-{seed}"));
    p.root = p.func("random_task", random_task);
    let root = ArgDesc {
        region: true,
        ro: false,
        nt: false,
        depth: 0,
    };
    p.root_args = vec![seed as i64, pack_meta(&[root])];
    p
}

/// A small machine with randomized shape, buffer sizes, jitter and bias.
pub fn random_config(seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0xc0f1));
    let (levels, workers) = match rng.gen_range(0..4) {
        0 => (vec![1], rng.gen_range(1..5)),
        1 => (vec![1, 2], rng.gen_range(2..9)),
        2 => (vec![1, 3], rng.gen_range(3..13)),
        _ => (vec![1, 2, 4], rng.gen_range(4..17)),
    };
    let mut cfg = SimConfig::default().with_topology(levels, workers);
    cfg.seed = seed;
    cfg.noc.buffer_slots = rng.gen_range(1..5);
    cfg.noc.jitter_cycles = *[0u64, 5, 50, 400].choose(&mut rng).unwrap();
    cfg.bias = rng.gen_range(0..=100);
    cfg.load.tasks = rng.gen_range(1..4);
    cfg.page_batch = rng.gen_range(1..4);
    cfg.pages = 256;
    if rng.gen_bool(0.2) {
        cfg.debug.dma_fail_rate = 0.2;
    }
    cfg
}

/// Outcome of one audited program.
#[derive(Debug, Clone, Default)]
pub struct Audited {
    pub tasks: u64,
    pub fault: Option<&'static str>,
    pub dep: DepStats,
}

/// Run `prog` both ways and compare. Errors describe the first mismatch
/// or audit violation.
pub fn audit_program(prog: &Program, cfg: &SimConfig) -> Result<Audited, String> {
    let serial = run_serial(prog);
    let parallel = run_parallel(prog, cfg);
    match (serial, parallel) {
        (Ok(s), Ok(p)) => {
            let diff = p.lineage.diff(&s.lineage);
            if !diff.is_empty() {
                return Err(format!("lineage differs: {}", diff.join("; ")));
            }
            if p.tasks != s.tasks {
                return Err(format!("{} tasks ran, serial ran {}", p.tasks, s.tasks));
            }
            Ok(Audited {
                tasks: p.tasks,
                fault: None,
                dep: p.dep,
            })
        }
        (Err(fs), Err(SimError::Fault(fp))) if fs.kind() == fp.kind() => Ok(Audited {
            tasks: 0,
            fault: Some(fs.kind()),
            dep: DepStats::default(),
        }),
        (s, p) => Err(format!(
            "serial {:?} vs parallel {:?}",
            s.map(|r| r.tasks),
            p.map(|r| r.tasks).map_err(|e| e.to_string())
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trips() {
        let a = [
            ArgDesc {
                region: true,
                ro: false,
                nt: false,
                depth: 4,
            },
            ArgDesc {
                region: false,
                ro: true,
                nt: true,
                depth: 0,
            },
        ];
        assert_eq!(unpack_meta(pack_meta(&a)), a.to_vec());
    }

    #[test]
    fn generated_programs_run_serially() {
        let mut faults = 0;
        for seed in 0..200 {
            match run_serial(&random_program(seed)) {
                Ok(r) => assert!(r.tasks <= 40),
                Err(_) => faults += 1,
            }
        }
        // Only the deliberate misuses fault.
        assert!(faults <= 200 / 16 + 1, "{faults} faults");
    }

    #[test]
    fn a_few_programs_audit_clean() {
        for seed in 0..40 {
            let r = audit_program(&random_program(seed), &random_config(seed));
            assert!(r.is_ok(), "seed {seed}: {}", r.unwrap_err());
        }
    }
}
