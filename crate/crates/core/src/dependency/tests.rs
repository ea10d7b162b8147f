use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ids::{CoreId, ObjKey, RegionId, TaskId, TaskPath};

fn r(i: u64) -> NodeId {
    NodeId::Region(RegionId(i))
}

fn o(i: u64) -> NodeId {
    NodeId::Object(ObjKey(i))
}

fn trav(key: &[u32], mode: Mode, rest: Vec<NodeId>) -> Traversal {
    let key = TaskPath(key.to_vec());
    Traversal {
        tid: key.id(),
        key,
        arg: 0,
        mode,
        notify: CoreId(0),
        rest,
    }
}

fn ready_keys(out: &[DepOut]) -> Vec<TaskPath> {
    out.iter()
        .filter_map(|d| match d {
            DepOut::Ready { key, .. } => Some(key.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn single_task_single_arg() {
    let mut st = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    st.arrive(
        o(1),
        Some(r(0)),
        trav(&[0], Mode::Rw, vec![]),
        true,
        &mut stats,
        &mut out,
    );
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![0])]);
    out.clear();
    assert!(st.pop(o(1), Some(r(0)), &TaskPath(vec![0]), &mut stats, &mut out));
    assert!(st.is_quiescent());
    assert_eq!(
        out,
        vec![DepOut::Drained {
            parent: r(0),
            child: o(1),
            rw: 1,
            ro: 0
        }]
    );
}

#[test]
fn readers_share_then_writer_waits() {
    let mut st = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    for (k, m) in [(0, Mode::Ro), (1, Mode::Ro), (2, Mode::Rw), (3, Mode::Ro)] {
        st.arrive(o(1), None, trav(&[k], m, vec![]), false, &mut stats, &mut out);
    }
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![0]), TaskPath(vec![1])]);
    out.clear();
    st.pop(o(1), None, &TaskPath(vec![1]), &mut stats, &mut out);
    assert!(out.is_empty());
    st.pop(o(1), None, &TaskPath(vec![0]), &mut stats, &mut out);
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![2])]);
    out.clear();
    st.pop(o(1), None, &TaskPath(vec![2]), &mut stats, &mut out);
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![3])]);
}

/// Region B has children D and E. Two tasks enqueue below B through
/// different children: both edges count, and completing one leaves the
/// other busy.
#[test]
fn child_counters_track_busy_subtrees() {
    let mut b = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    b.arrive(
        r(2),
        Some(r(1)),
        trav(&[1], Mode::Rw, vec![r(4)]),
        true,
        &mut stats,
        &mut out,
    );
    b.arrive(
        r(2),
        Some(r(1)),
        trav(&[0, 0], Mode::Rw, vec![r(5)]),
        true,
        &mut stats,
        &mut out,
    );
    assert_eq!(b.child_rw(), 2);
    out.clear();
    // D drains after its single request.
    b.on_drained(r(2), Some(r(1)), r(4), 1, 0, &mut stats, &mut out);
    assert_eq!(b.child_rw(), 1);
    assert!(out.is_empty());
    // A whole-region task on B waits for E's subtree.
    b.arrive(
        r(2),
        Some(r(1)),
        trav(&[2], Mode::Rw, vec![]),
        true,
        &mut stats,
        &mut out,
    );
    assert!(ready_keys(&out).is_empty());
    b.on_drained(r(2), Some(r(1)), r(5), 1, 0, &mut stats, &mut out);
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![2])]);
}

#[test]
fn blocked_traversal_parks_and_resumes() {
    let mut f = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    // Task 0 holds F; task 1 heads for object 1 below F.
    f.arrive(r(6), None, trav(&[0], Mode::Rw, vec![]), false, &mut stats, &mut out);
    f.arrive(
        r(6),
        None,
        trav(&[1], Mode::Rw, vec![o(1)]),
        false,
        &mut stats,
        &mut out,
    );
    assert_eq!(f.queue.len(), 2);
    assert!(matches!(f.queue[1].kind, EntryKind::Parked { .. }));
    out.clear();
    f.pop(r(6), None, &TaskPath(vec![0]), &mut stats, &mut out);
    assert!(matches!(&out[0], DepOut::Forward { to, .. } if *to == o(1)));
    assert_eq!(f.child_rw(), 1);
}

#[test]
fn descendants_pass_their_ancestor() {
    let mut st = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    st.arrive(r(1), None, trav(&[0], Mode::Rw, vec![]), false, &mut stats, &mut out);
    st.arrive(r(1), None, trav(&[1], Mode::Rw, vec![]), false, &mut stats, &mut out);
    out.clear();
    // Child of task 0 on an object below: passes through.
    st.arrive(
        r(1),
        None,
        trav(&[0, 0], Mode::Rw, vec![o(3)]),
        false,
        &mut stats,
        &mut out,
    );
    assert!(matches!(&out[0], DepOut::Forward { .. }));
    // Child of task 0 on the region itself: queued after task 0, ready.
    out.clear();
    st.arrive(r(1), None, trav(&[0, 1], Mode::Rw, vec![]), false, &mut stats, &mut out);
    assert!(ready_keys(&out).is_empty(), "must wait for the busy child edge");
    st.on_drained(r(1), None, o(3), 1, 0, &mut stats, &mut out);
    assert_eq!(ready_keys(&out), vec![TaskPath(vec![0, 1])]);
    assert_eq!(stats.inversions, 0);
}

#[test]
fn mismatched_drain_is_dropped_then_reconciled() {
    let mut p = DepState::default();
    let mut stats = DepStats::default();
    let mut out = Vec::new();
    p.arrive(
        r(1),
        None,
        trav(&[0], Mode::Rw, vec![o(1)]),
        false,
        &mut stats,
        &mut out,
    );
    p.arrive(
        r(1),
        None,
        trav(&[1], Mode::Rw, vec![o(1)]),
        false,
        &mut stats,
        &mut out,
    );
    // The child drained after the first request only; the second crossed
    // the report in flight.
    p.on_drained(r(1), None, o(1), 1, 0, &mut stats, &mut out);
    assert_eq!(stats.drains_dropped, 1);
    assert_eq!(p.child_rw(), 1);
    p.on_drained(r(1), None, o(1), 2, 0, &mut stats, &mut out);
    assert_eq!(stats.drains_applied, 1);
    assert_eq!(p.child_rw(), 0);
}

// ---------------------------------------------------------------------
// Interleaving harness: several owners exchange dependency messages over
// FIFO links delivered in random order.

#[derive(Debug, Clone)]
enum HMsg {
    Launch {
        anchor: NodeId,
        trav: Traversal,
    },
    Arrive {
        node: NodeId,
        trav: Traversal,
    },
    Drained {
        parent: NodeId,
        child: NodeId,
        rw: u64,
        ro: u64,
    },
    Pop {
        node: NodeId,
        key: TaskPath,
    },
}

#[derive(Debug, Clone)]
struct HTask {
    key: TaskPath,
    target: NodeId,
    mode: Mode,
    children: Vec<usize>,
}

struct Harness {
    parent: BTreeMap<NodeId, NodeId>,
    owner: BTreeMap<NodeId, u8>,
    deps: BTreeMap<NodeId, DepState>,
    links: BTreeMap<(u8, u8), VecDeque<HMsg>>,
    tasks: Vec<HTask>,
    by_tid: BTreeMap<TaskId, usize>,
    running: BTreeSet<usize>,
    done: BTreeSet<usize>,
    stats: DepStats,
}

impl Harness {
    fn contains(&self, anc: NodeId, mut n: NodeId) -> bool {
        loop {
            if n == anc {
                return true;
            }
            match self.parent.get(&n) {
                Some(p) => n = *p,
                None => return false,
            }
        }
    }

    fn path(&self, anchor: NodeId, target: NodeId) -> Vec<NodeId> {
        let mut v = Vec::new();
        let mut n = target;
        while n != anchor {
            v.push(n);
            n = self.parent[&n];
        }
        v.reverse();
        v
    }

    fn send(&mut self, from: u8, to_node: NodeId, m: HMsg) {
        let to = self.owner[&to_node];
        self.links.entry((from, to)).or_default().push_back(m);
    }

    fn apply(&mut self, outs: Vec<DepOut>, at: NodeId) -> Result<(), String> {
        let here = self.owner[&at];
        for d in outs {
            match d {
                DepOut::Forward { to, trav, .. } => self.send(here, to, HMsg::Arrive { node: to, trav }),
                DepOut::Drained { parent, child, rw, ro } => {
                    self.send(here, parent, HMsg::Drained { parent, child, rw, ro })
                }
                DepOut::Ready { tid, .. } => self.start(self.by_tid[&tid])?,
            }
        }
        Ok(())
    }

    fn conflicts(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.tasks[a], &self.tasks[b]);
        if x.key.is_ancestor_of(&y.key) || y.key.is_ancestor_of(&x.key) {
            return false;
        }
        let overlap = self.contains(x.target, y.target) || self.contains(y.target, x.target);
        overlap && x.mode.conflicts(y.mode)
    }

    fn start(&mut self, t: usize) -> Result<(), String> {
        for u in 0..self.tasks.len() {
            if u == t || !self.conflicts(t, u) {
                continue;
            }
            if self.running.contains(&u) {
                return Err(format!("{} and {} run together", self.tasks[t].key, self.tasks[u].key));
            }
            if self.tasks[u].key < self.tasks[t].key && !self.done.contains(&u) {
                return Err(format!("{} started before {}", self.tasks[t].key, self.tasks[u].key));
            }
        }
        self.running.insert(t);
        // Children are spawned while the task runs; their launches travel
        // on the same link as the task's later completion.
        for c in self.tasks[t].children.clone() {
            let ct = &self.tasks[c];
            let trav = Traversal {
                key: ct.key.clone(),
                tid: ct.key.id(),
                arg: 0,
                mode: ct.mode,
                notify: CoreId(0),
                rest: self.path(self.tasks[t].target, ct.target),
            };
            let anchor = self.tasks[t].target;
            self.send(0, anchor, HMsg::Launch { anchor, trav });
        }
        Ok(())
    }

    fn complete(&mut self, t: usize) {
        self.running.remove(&t);
        self.done.insert(t);
        let target = self.tasks[t].target;
        let key = self.tasks[t].key.clone();
        self.send(0, target, HMsg::Pop { node: target, key });
    }

    fn deliver(&mut self, m: HMsg) -> Result<(), String> {
        let mut out = Vec::new();
        let node = match &m {
            HMsg::Launch { anchor, .. } => *anchor,
            HMsg::Arrive { node, .. } => *node,
            HMsg::Drained { parent, .. } => *parent,
            HMsg::Pop { node, .. } => *node,
        };
        let parent = self.parent.get(&node).copied();
        let st = self.deps.entry(node).or_default();
        match m {
            HMsg::Launch { trav, .. } => st.arrive(node, parent, trav, false, &mut self.stats, &mut out),
            HMsg::Arrive { trav, .. } => st.arrive(node, parent, trav, true, &mut self.stats, &mut out),
            HMsg::Drained { child, rw, ro, .. } => {
                st.on_drained(node, parent, child, rw, ro, &mut self.stats, &mut out)
            }
            HMsg::Pop { key, .. } => {
                if !st.pop(node, parent, &key, &mut self.stats, &mut out) {
                    return Err(format!("pop of {key} at {node} found nothing"));
                }
            }
        }
        self.apply(out, node)
    }

    /// Every child edge with pending work underneath must be counted busy.
    fn audit_counters(&self) -> Result<(), String> {
        let mut pending: Vec<(NodeId, Mode)> = Vec::new();
        for (n, st) in &self.deps {
            for e in &st.queue {
                pending.push((*n, e.mode));
            }
            let (rw, ro) = st.recount();
            if (rw, ro) != (st.child_rw(), st.child_ro()) {
                return Err(format!("cached counters diverge at {n}"));
            }
        }
        for q in self.links.values() {
            for m in q {
                if let HMsg::Arrive { node, trav } = m {
                    pending.push((*node, trav.mode));
                }
            }
        }
        for (n, mode) in pending {
            let mut child = n;
            while let Some(&p) = self.parent.get(&child) {
                // Work below `child` stems from a traversal that crossed
                // this edge: the argument itself or a task that spawned it
                // (whose mode covers the child's).
                let edge = self
                    .deps
                    .get(&p)
                    .and_then(|st| st.edges.get(&child))
                    .copied()
                    .unwrap_or_default();
                let busy = match mode {
                    Mode::Rw => edge.busy_rw(),
                    Mode::Ro => edge.busy_ro() || edge.busy_rw(),
                };
                if !busy {
                    return Err(format!("edge {p}->{child} idle with {mode:?} work below"));
                }
                child = p;
            }
        }
        Ok(())
    }
}

/// Random region tree (regions 0..nr, objects after), random owners and a
/// two-level task tree under a root task holding region 0.
fn build(seed: u64) -> Harness {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owners = rng.gen_range(1..=3u8);
    let nr = rng.gen_range(1..6u64);
    let no = rng.gen_range(1..8u64);
    let mut parent = BTreeMap::new();
    let mut owner = BTreeMap::new();
    owner.insert(r(0), 0);
    let mut regions = vec![r(0)];
    for i in 1..nr {
        let p = regions[rng.gen_range(0..regions.len())];
        parent.insert(r(i), p);
        owner.insert(r(i), rng.gen_range(0..owners));
        regions.push(r(i));
    }
    let mut nodes = regions.clone();
    for i in 0..no {
        let p = regions[rng.gen_range(0..regions.len())];
        parent.insert(o(i), p);
        owner.insert(o(i), owner[&p]);
        nodes.push(o(i));
    }
    let mut h = Harness {
        parent,
        owner,
        deps: BTreeMap::new(),
        links: BTreeMap::new(),
        tasks: Vec::new(),
        by_tid: BTreeMap::new(),
        running: BTreeSet::new(),
        done: BTreeSet::new(),
        stats: DepStats::default(),
    };
    let root = HTask {
        key: TaskPath::root(),
        target: r(0),
        mode: Mode::Rw,
        children: Vec::new(),
    };
    h.tasks.push(root);
    let n1 = rng.gen_range(1..8u32);
    for s in 0..n1 {
        let target = nodes[rng.gen_range(0..nodes.len())];
        let mode = if rng.gen_bool(0.4) { Mode::Ro } else { Mode::Rw };
        let idx = h.tasks.len();
        h.tasks.push(HTask {
            key: TaskPath(vec![s]),
            target,
            mode,
            children: Vec::new(),
        });
        h.tasks[0].children.push(idx);
        let below: Vec<NodeId> = nodes.iter().copied().filter(|n| h.contains(target, *n)).collect();
        for c in 0..rng.gen_range(0..4u32) {
            let ct = below[rng.gen_range(0..below.len())];
            let cm = if mode == Mode::Ro || rng.gen_bool(0.3) {
                Mode::Ro
            } else {
                Mode::Rw
            };
            let ci = h.tasks.len();
            h.tasks.push(HTask {
                key: TaskPath(vec![s, c]),
                target: ct,
                mode: cm,
                children: Vec::new(),
            });
            h.tasks[idx].children.push(ci);
        }
    }
    for (i, t) in h.tasks.iter().enumerate() {
        h.by_tid.insert(t.key.id(), i);
    }
    // The root task already holds region 0.
    let mut out = Vec::new();
    h.deps.entry(r(0)).or_default().arrive(
        r(0),
        None,
        Traversal {
            key: TaskPath::root(),
            tid: TaskPath::root().id(),
            arg: 0,
            mode: Mode::Rw,
            notify: CoreId(0),
            rest: vec![],
        },
        false,
        &mut h.stats,
        &mut out,
    );
    h.start(0).unwrap();
    h
}

fn run_harness(seed: u64) -> Result<Harness, String> {
    let mut h = build(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for _ in 0..100_000 {
        let links: Vec<(u8, u8)> = h.links.iter().filter(|(_, q)| !q.is_empty()).map(|(k, _)| *k).collect();
        let runnable: Vec<usize> = h.running.iter().copied().filter(|&t| t != 0).collect();
        let n = links.len() + runnable.len();
        if n == 0 {
            break;
        }
        let pick = rng.gen_range(0..n);
        if pick < links.len() {
            let m = h.links.get_mut(&links[pick]).unwrap().pop_front().unwrap();
            h.deliver(m)?;
        } else {
            h.complete(runnable[pick - links.len()]);
        }
        h.audit_counters()?;
    }
    if h.done.len() != h.tasks.len() - 1 {
        let stuck: Vec<String> = (1..h.tasks.len())
            .filter(|t| !h.done.contains(t))
            .map(|t| h.tasks[t].key.to_string())
            .collect();
        return Err(format!("lost wakeups: {stuck:?}"));
    }
    for (n, st) in &h.deps {
        let expect = usize::from(*n == r(0));
        if st.queue.len() != expect || st.child_rw() != 0 || st.child_ro() != 0 {
            return Err(format!("{n} not quiescent at the end"));
        }
        for (c, e) in &st.edges {
            if e.sent_rw != e.acked_rw || e.sent_ro != e.acked_ro {
                return Err(format!("edge {n}->{c} unreconciled"));
            }
        }
    }
    if h.stats.inversions != 0 {
        return Err("queue order inversion".into());
    }
    Ok(h)
}

#[test]
fn harness_smoke() {
    for seed in 0..200 {
        if let Err(e) = run_harness(seed) {
            panic!("seed {seed}: {e}");
        }
    }
}

#[test]
fn harness_exercises_dropped_reports() {
    let dropped: u64 = (0..300).map(|s| run_harness(s).unwrap().stats.drains_dropped).sum();
    assert!(dropped > 0, "no crossing of enqueue and drain report was produced");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]
    #[test]
    fn interleavings_preserve_serial_order(seed in any::<u64>()) {
        if let Err(e) = run_harness(seed) {
            prop_assert!(false, "{}", e);
        }
    }
}
