use super::*;
use crate::dependency::ArgFlags;

const RW: ArgFlags = ArgFlags::INOUT;
const RWR: ArgFlags = ArgFlags::INOUT.union(ArgFlags::REGION);

fn prog(root: fn(&TaskView) -> Vec<Op>, extra: &[fn(&TaskView) -> Vec<Op>]) -> Program {
    let mut p = Program::new("t");
    p.func("root", root);
    for (i, f) in extra.iter().enumerate() {
        p.func(["a", "b", "c", "d"][i], *f);
    }
    p
}

fn fault_of(p: &Program) -> &'static str {
    run_serial(p).expect_err("expected a fault").kind()
}

fn writer(_: &TaskView) -> Vec<Op> {
    vec![Op::Read(Operand::Arg(0)), Op::Write(Operand::Arg(0)), Op::Compute(10)]
}

#[test]
fn spawn_tree_runs_depth_first() {
    fn root(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Alloc {
                size: 64,
                region: Operand::Root,
            },
            Op::Spawn {
                func: 1,
                args: vec![(Operand::Handle(0), RW)],
            },
            Op::Spawn {
                func: 1,
                args: vec![(Operand::Handle(0), RW)],
            },
            Op::Wait {
                args: vec![(Operand::Handle(0), RW)],
            },
            Op::Read(Operand::Handle(0)),
        ]
    }
    let p = prog(root, &[writer]);
    let a = run_serial(&p).unwrap();
    assert_eq!(a.tasks, 3);
    assert_eq!(a.work, 20);
    assert_eq!(a.writes, 2);
    assert_eq!(a.reads, 3);
    assert_eq!(a.lineage, run_serial(&p).unwrap().lineage);
    assert_eq!(a.lineage.objects.len(), 1);
}

#[test]
fn bulk_and_region_lifecycle() {
    fn root(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Ralloc {
                parent: Operand::Root,
                level: 1,
            },
            Op::Ralloc {
                parent: Operand::Handle(0),
                level: 2,
            },
            Op::Balloc {
                size: 100,
                region: Operand::Handle(1),
                count: 3,
            },
            Op::Write(Operand::Elem(2, 2)),
            Op::Alloc {
                size: 5000,
                region: Operand::Handle(0),
            },
            Op::Realloc {
                obj: Operand::Handle(4),
                size: 10,
                region: Operand::Handle(1),
            },
            Op::Write(Operand::Handle(5)),
            Op::Rfree(Operand::Handle(0)),
        ]
    }
    let r = run_serial(&prog(root, &[])).unwrap();
    assert_eq!(r.lineage.objects.len(), 4);
    assert_eq!(r.live_objects, 0);
    assert_eq!(r.live_regions, 1);
}

#[test]
fn faults_are_raised() {
    fn bad_size(_: &TaskView) -> Vec<Op> {
        vec![Op::Alloc {
            size: 0,
            region: Operand::Root,
        }]
    }
    fn too_big(_: &TaskView) -> Vec<Op> {
        vec![Op::Alloc {
            size: (1 << 20) + 1,
            region: Operand::Root,
        }]
    }
    fn empty_bulk(_: &TaskView) -> Vec<Op> {
        vec![Op::Balloc {
            size: 8,
            region: Operand::Root,
            count: 0,
        }]
    }
    fn free_root(_: &TaskView) -> Vec<Op> {
        vec![Op::Rfree(Operand::Root)]
    }
    fn use_after_free(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Alloc {
                size: 8,
                region: Operand::Root,
            },
            Op::Free(Operand::Handle(0)),
            Op::Read(Operand::Handle(0)),
        ]
    }
    fn unknown_fn(_: &TaskView) -> Vec<Op> {
        vec![Op::Spawn { func: 9, args: vec![] }]
    }
    fn undeclared(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Alloc {
                size: 8,
                region: Operand::Root,
            },
            Op::Spawn {
                func: 1,
                args: vec![(Operand::Handle(0), ArgFlags::IN)],
            },
        ]
    }
    fn delegated(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Alloc {
                size: 8,
                region: Operand::Root,
            },
            Op::Spawn {
                func: 1,
                args: vec![(Operand::Handle(0), RW)],
            },
            Op::Read(Operand::Handle(0)),
        ]
    }
    fn busy_free(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Ralloc {
                parent: Operand::Root,
                level: 0,
            },
            Op::Spawn {
                func: 2,
                args: vec![(Operand::Handle(0), RWR)],
            },
        ]
    }
    fn free_own(_: &TaskView) -> Vec<Op> {
        vec![Op::Rfree(Operand::Arg(0))]
    }
    fn scalar_flags(_: &TaskView) -> Vec<Op> {
        vec![Op::Spawn {
            func: 1,
            args: vec![(Operand::Scalar(3), ArgFlags::IN)],
        }]
    }
    fn bad_operand(_: &TaskView) -> Vec<Op> {
        vec![Op::Read(Operand::Handle(5))]
    }
    assert_eq!(fault_of(&prog(bad_size, &[])), "BadSize");
    assert_eq!(fault_of(&prog(too_big, &[])), "BadSize");
    assert_eq!(fault_of(&prog(empty_bulk, &[])), "EmptyBulk");
    assert_eq!(fault_of(&prog(free_root, &[])), "FreeRoot");
    assert_eq!(fault_of(&prog(use_after_free, &[])), "UnknownObject");
    assert_eq!(fault_of(&prog(unknown_fn, &[])), "UnknownFunction");
    assert_eq!(fault_of(&prog(undeclared, &[writer])), "UndeclaredAccess");
    assert_eq!(fault_of(&prog(delegated, &[writer])), "UndeclaredAccess");
    assert_eq!(fault_of(&prog(busy_free, &[writer, free_own])), "BusyRegion");
    assert_eq!(fault_of(&prog(scalar_flags, &[writer])), "BadFlags");
    assert_eq!(fault_of(&prog(bad_operand, &[])), "BadOperand");
}

#[test]
fn wait_returns_delegated_nodes() {
    fn root(_: &TaskView) -> Vec<Op> {
        vec![
            Op::Ralloc {
                parent: Operand::Root,
                level: 0,
            },
            Op::Alloc {
                size: 8,
                region: Operand::Handle(0),
            },
            Op::Spawn {
                func: 1,
                args: vec![(Operand::Handle(1), RW)],
            },
            Op::Wait {
                args: vec![(Operand::Handle(0), RWR)],
            },
            Op::Write(Operand::Handle(1)),
            Op::Rfree(Operand::Handle(0)),
        ]
    }
    run_serial(&prog(root, &[writer])).unwrap();
}
