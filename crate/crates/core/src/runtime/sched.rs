//! Scheduler cores: task descriptors, dependency queues of owned nodes,
//! packing, hierarchical placement and memory management.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::api::access::node_of;
use crate::api::{ObjRef, Value};
use crate::dependency::{ArgFlags, DepOut, Edge, Mode, Traversal};
use crate::error::Fault;
use crate::ids::{Addr, CoreId, NodeId, ObjKey, RegionId, TaskId, TaskPath};
use crate::memory::load::Load;
use crate::memory::pack::local_pack;
use crate::memory::{coalesce, page_of, LoadReporter, ObjectMeta, PackEntry, PagePool, RegionHeap, RouteTrie};

use super::machine::Machine;
use super::msg::{Envelope, MemOp, Msg, RouteKey, TaskInit};
use super::score;

/// Set in `Traversal::arg` for the entries of a `wait`. Such an entry
/// leaves its queue as soon as it is granted.
pub(super) const WAIT_BIT: u16 = 0x8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum DescState {
    Waiting,
    Packing,
    Placing,
    Dispatched,
}

#[derive(Debug, Clone)]
pub(super) enum DescKind {
    Task,
    /// A suspended task's wait, resumed on its worker when ready.
    Wait {
        task: TaskId,
        worker: CoreId,
    },
}

/// A task or wait whose arguments this scheduler tracks.
#[derive(Debug, Clone)]
pub(super) struct Desc {
    pub init: TaskInit,
    pub kind: DescKind,
    pub state: DescState,
    /// Non-safe arguments not yet granted.
    pub pending: u32,
    /// Pack requests not yet answered.
    pub packing: u32,
    pub fetch: Vec<PackEntry>,
    pub worker: Option<CoreId>,
}

#[derive(Debug, Clone)]
pub(super) enum AnchorOp {
    Launch {
        trav: Traversal,
        path: Option<Vec<NodeId>>,
        ticket: u64,
    },
    Pop {
        key: TaskPath,
    },
}

#[derive(Debug, Clone)]
struct PendingAlloc {
    worker: CoreId,
    region: RegionId,
    size: u64,
    keys: VecDeque<ObjKey>,
    producer: Option<CoreId>,
    bulk: bool,
    done: Vec<Value>,
}

#[derive(Debug, Default)]
pub struct Sched {
    pub(super) id: CoreId,
    children: Vec<CoreId>,
    leaf: bool,
    pub(super) busy_until: u64,
    pub(super) busy: u64,
    pub(super) handled: u64,
    pub(super) tasks: BTreeMap<TaskId, Desc>,
    early_ready: BTreeMap<TaskId, u32>,
    pub(super) anchors: BTreeMap<NodeId, VecDeque<AnchorOp>>,
    draining: BTreeSet<NodeId>,
    packs: BTreeMap<u64, TaskId>,
    next_ticket: u64,
    /// Leaf only: tasks dispatched to each worker and not yet completed.
    worker_load: Vec<u64>,
    /// Last load reported by each child scheduler.
    child_view: Vec<Load>,
    reporter: LoadReporter,
    pub(super) pool: PagePool,
    pub(super) my_pages: BTreeSet<u64>,
    region_trie: RouteTrie,
    page_trie: RouteTrie,
    pending_allocs: VecDeque<PendingAlloc>,
    page_waiters: VecDeque<(CoreId, u64)>,
    page_req_out: bool,
    region_counter: u64,
    own_regions: u64,
}

impl Sched {
    pub(super) fn new(id: CoreId, children: Vec<CoreId>, leaf: bool) -> Self {
        let n = children.len();
        Sched {
            id,
            children,
            leaf,
            worker_load: if leaf { vec![0; n] } else { Vec::new() },
            child_view: vec![Load::default(); n],
            ..Default::default()
        }
    }

    fn child_idx(&self, c: CoreId) -> usize {
        self.children.iter().position(|&x| x == c).expect("not a child")
    }

    fn ticket(&mut self) -> u64 {
        self.next_ticket += 1;
        self.next_ticket
    }

    pub(super) fn pages_held(&self) -> u64 {
        self.pool.held()
    }

    pub(super) fn idle(&self) -> bool {
        self.tasks.is_empty()
            && self.early_ready.is_empty()
            && self.anchors.values().all(|q| q.is_empty())
            && self.packs.is_empty()
            && self.pending_allocs.is_empty()
            && self.page_waiters.is_empty()
    }

    /// Handle one message delivered to this core at `now`.
    pub(super) fn handle(&mut self, m: &mut Machine, now: u64, hop_src: CoreId, env: Envelope) {
        let start = now.max(self.busy_until);
        m.cost = m.eng.latency.msg_process_cycles;
        m.outbox.clear();
        if m.eng.trace.enabled() {
            m.eng.trace.record(
                start,
                self.id,
                "handle",
                format_args!("{} from {}", env.msg.kind(), env.origin),
            );
        }
        if env.dst != self.id {
            self.intercept(m, hop_src, &env);
            m.charge(m.scaled(self.id, m.cfg.costs.forward));
            m.relay(env);
        } else {
            self.dispatch(m, env.origin, env.msg);
        }
        self.flush(m, start, Some(hop_src));
    }

    /// First event of the run: create the root task at the top scheduler.
    pub(super) fn boot(&mut self, m: &mut Machine, now: u64) {
        m.cost = 0;
        m.outbox.clear();
        let path = TaskPath::root();
        let init = TaskInit {
            tid: path.id(),
            path: path.clone(),
            func: m.prog.root,
            args: m.prog.root_task_args(),
        };
        let trav = Traversal {
            key: path.clone(),
            tid: path.id(),
            arg: 0,
            mode: Mode::Rw,
            notify: self.id,
            rest: Vec::new(),
        };
        self.create(m, init, DescKind::Task);
        let root = NodeId::Region(RegionId::ROOT);
        self.register(m, root, root, trav);
        self.flush(m, now, None);
    }

    fn flush(&mut self, m: &mut Machine, start: u64, hop_src: Option<CoreId>) {
        self.report_load(m);
        let end = start + m.cost;
        self.busy_until = end;
        self.busy += m.cost;
        self.handled += 1;
        if let Some(src) = hop_src {
            m.eng.release(end, src, self.id);
        }
        for (origin, dst, msg) in std::mem::take(&mut m.outbox) {
            m.send_from(end, self.id, origin.unwrap_or(self.id), dst, msg);
        }
        m.cost = 0;
    }

    fn charge(&self, m: &mut Machine, cycles: u64) {
        m.charge(m.scaled(self.id, cycles));
    }

    /// Deliver `msg` to `dst`, handling it inline when that is this core.
    fn to(&mut self, m: &mut Machine, dst: CoreId, msg: Msg) {
        if dst == self.id {
            self.dispatch(m, self.id, msg);
        } else {
            m.emit(dst, msg);
        }
    }

    /// Bookkeeping on messages that only pass through.
    fn intercept(&mut self, m: &mut Machine, hop_src: CoreId, env: &Envelope) {
        match &env.msg {
            Msg::MemReply { announce: Some(id), .. } if self.children.contains(&hop_src) => {
                let i = self.child_idx(hop_src);
                self.region_trie.insert(id.0, i as u32);
                let toward = m.eng.topo.next_hop(self.id, env.dst);
                if toward != m.eng.topo.core(self.id).parent {
                    if let Some(p) = m.eng.topo.core(self.id).parent {
                        m.emit(p, Msg::RegionAnnounce { id: *id });
                    }
                }
            }
            Msg::RfreeDown { regions } => {
                for (id, _) in regions {
                    self.region_trie.remove(id.0);
                }
            }
            _ => {}
        }
    }

    fn dispatch(&mut self, m: &mut Machine, origin: CoreId, msg: Msg) {
        match msg {
            Msg::Spawn { parent, init } => self.on_spawn(m, parent, init),
            Msg::Wait { task, key, args } => self.on_wait(m, origin, task, key, args),
            Msg::Create { init, .. } => {
                self.charge(m, m.cfg.costs.dep_step);
                self.create(m, init, DescKind::Task);
            }
            Msg::Register { anchor, target, trav } => self.register(m, anchor, target, trav),
            Msg::Discover {
                anchor,
                target,
                ticket,
                reply_to,
            } => {
                self.charge(m, m.cfg.costs.dep_step);
                let path = m.forest.path_down(anchor, target).unwrap_or_else(|| {
                    panic!("{target} is not below anchor {anchor}");
                });
                self.to(m, reply_to, Msg::Discovered { anchor, ticket, path });
            }
            Msg::Discovered { anchor, ticket, path } => {
                let q = self.anchors.get_mut(&anchor).expect("anchor queue");
                for op in q.iter_mut() {
                    if let AnchorOp::Launch {
                        path: p @ None,
                        ticket: t,
                        ..
                    } = op
                    {
                        if *t == ticket {
                            *p = Some(path);
                            break;
                        }
                    }
                }
                self.drain_anchor(m, anchor);
            }
            Msg::Arrive { node, trav } => self.dep_arrive(m, node, trav),
            Msg::Drained { parent, child, rw, ro } => self.dep_drained(m, parent, child, rw, ro),
            Msg::Pop { node, key } => {
                self.anchors.entry(node).or_default().push_back(AnchorOp::Pop { key });
                self.drain_anchor(m, node);
            }
            Msg::ArgReady { tid, arg: _ } => self.arg_ready(m, tid),
            Msg::PackReq { node, ticket, reply_to } => {
                let (entries, remote) = local_pack(&m.forest, node, self.id);
                self.charge(m, m.cfg.costs.pack_obj * (entries.len() as u64 + 1));
                self.to(
                    m,
                    reply_to,
                    Msg::PackReply {
                        ticket,
                        entries,
                        remote,
                    },
                );
            }
            Msg::PackReply {
                ticket,
                entries,
                remote,
            } => self.pack_reply(m, ticket, entries, remote),
            Msg::Place {
                tid,
                sched,
                init,
                fetch,
            } => self.place(m, tid, sched, init, fetch),
            Msg::Chosen { tid, worker } => self.chosen(m, tid, worker),
            Msg::SetProducer { node, worker: _ } => {
                let n = match node {
                    NodeId::Region(r) => m.forest.region(r).map_or(0, |x| x.objects.len() as u64),
                    NodeId::Object(_) => 1,
                };
                self.charge(m, m.cfg.costs.pack_obj * n);
            }
            Msg::Complete { tid, sched, worker } => self.on_complete(m, tid, sched, worker),
            Msg::LoadReport { tasks, regions } => {
                self.charge(m, m.cfg.costs.load_report);
                let i = self.child_idx(origin);
                self.child_view[i] = Load { tasks, regions };
            }
            Msg::MemReq { worker, op } => self.mem_req(m, worker, op),
            Msg::RallocPlace {
                id,
                parent,
                depth,
                level,
                worker,
            } => self.ralloc_place(m, id, parent, depth, level, worker),
            Msg::RfreeDown { regions } => {
                self.charge(m, m.cfg.costs.free * regions.len() as u64);
                for (id, mut heap) in regions {
                    self.region_trie.remove(id.0);
                    heap.release_all(&mut self.pool);
                    self.own_regions -= 1;
                }
            }
            Msg::RegionAnnounce { id } => {
                self.charge(m, m.cfg.costs.forward);
                let i = self.child_idx(origin);
                self.region_trie.insert(id.0, i as u32);
                if let Some(p) = m.eng.topo.core(self.id).parent {
                    m.emit(p, Msg::RegionAnnounce { id });
                }
            }
            Msg::RegionRetire { ids } => {
                self.charge(m, m.cfg.costs.forward);
                for id in &ids {
                    self.region_trie.remove(id.0);
                }
                if let Some(p) = m.eng.topo.core(self.id).parent {
                    m.emit(p, Msg::RegionRetire { ids });
                }
            }
            Msg::PageReq { n } => {
                self.charge(m, m.cfg.costs.alloc);
                self.page_waiters.push_back((origin, n));
                self.serve_pages(m);
            }
            Msg::PageGrant { pages } => {
                self.charge(m, m.cfg.costs.alloc);
                m.pages_in_flight -= pages.len() as u64;
                self.page_req_out = false;
                self.my_pages.extend(pages.iter().copied());
                self.pool.add_pages(pages);
                self.retry_allocs(m);
                self.serve_pages(m);
            }
            Msg::Dispatch { .. } | Msg::Resume { .. } | Msg::MemReply { .. } => {
                unreachable!("worker message delivered to scheduler {}", self.id)
            }
        }
    }

    // ---- tasks -------------------------------------------------------

    fn create(&mut self, m: &mut Machine, init: TaskInit, kind: DescKind) {
        let id = match kind {
            DescKind::Task => init.tid,
            DescKind::Wait { .. } => init.path.id(),
        };
        let mut pending = init.args.iter().filter(|(_, f)| !f.contains(ArgFlags::SAFE)).count() as u32;
        if let Some(n) = self.early_ready.remove(&id) {
            pending -= n;
        }
        let d = Desc {
            init,
            kind,
            state: DescState::Waiting,
            pending,
            packing: 0,
            fetch: Vec::new(),
            worker: None,
        };
        self.tasks.insert(id, d);
        if pending == 0 {
            self.start_pack(m, id);
        }
    }

    /// The parent argument a child argument hangs from. Arguments of one
    /// task never overlap, so at most one contains `n`.
    fn anchor_of(m: &Machine, parent: &TaskInit, n: NodeId) -> Option<NodeId> {
        parent
            .args
            .iter()
            .filter(|(_, f)| !f.contains(ArgFlags::SAFE))
            .filter_map(|&(v, _)| node_of(v))
            .find(|&a| m.forest.contains(a, n))
    }

    fn on_spawn(&mut self, m: &mut Machine, parent: TaskId, init: TaskInit) {
        let c = &m.cfg.costs;
        self.charge(m, c.spawn + c.spawn_per_arg * init.args.len() as u64);
        let pinit = self.tasks.get(&parent).expect("spawn from unknown parent").init.clone();
        let mut owners = Vec::new();
        let mut regs = Vec::new();
        for (i, &(v, f)) in init.args.iter().enumerate() {
            let Some(mode) = f.mode() else { continue };
            let n = node_of(v).expect("non-safe argument is a node");
            let anchor = Self::anchor_of(m, &pinit, n).expect("argument outside the parent's footprint");
            owners.push(m.owner(n));
            regs.push((anchor, n, i as u16, mode));
        }
        let d = if owners.is_empty() { self.id } else { m.lca(&owners) };
        for (anchor, n, arg, mode) in regs {
            let trav = Traversal {
                key: init.path.clone(),
                tid: init.tid,
                arg,
                mode,
                notify: d,
                rest: Vec::new(),
            };
            let o = m.owner(anchor);
            self.to(
                m,
                o,
                Msg::Register {
                    anchor,
                    target: n,
                    trav,
                },
            );
        }
        if d == self.id {
            self.create(m, init, DescKind::Task);
        } else {
            m.emit(
                d,
                Msg::Create {
                    init,
                    parent_sched: self.id,
                },
            );
        }
    }

    fn on_wait(&mut self, m: &mut Machine, worker: CoreId, task: TaskId, key: TaskPath, args: Vec<(Value, ArgFlags)>) {
        let c = &m.cfg.costs;
        self.charge(m, c.spawn + c.spawn_per_arg * args.len() as u64);
        let tinit = self.tasks.get(&task).expect("wait from unknown task").init.clone();
        let init = TaskInit {
            tid: task,
            path: key.clone(),
            func: tinit.func,
            args,
        };
        let wid = key.id();
        for (i, &(v, f)) in init.args.iter().enumerate() {
            let Some(mode) = f.mode() else { continue };
            let n = node_of(v).expect("non-safe argument is a node");
            let anchor = Self::anchor_of(m, &tinit, n).expect("wait outside the task's footprint");
            let trav = Traversal {
                key: key.clone(),
                tid: wid,
                arg: i as u16 | WAIT_BIT,
                mode,
                notify: self.id,
                rest: Vec::new(),
            };
            let o = m.owner(anchor);
            self.to(
                m,
                o,
                Msg::Register {
                    anchor,
                    target: n,
                    trav,
                },
            );
        }
        self.create(m, init, DescKind::Wait { task, worker });
    }

    fn arg_ready(&mut self, m: &mut Machine, id: TaskId) {
        self.charge(m, m.cfg.costs.dep_step);
        match self.tasks.get_mut(&id) {
            Some(d) => {
                d.pending -= 1;
                if d.pending == 0 {
                    self.start_pack(m, id);
                }
            }
            None => *self.early_ready.entry(id).or_default() += 1,
        }
    }

    fn start_pack(&mut self, m: &mut Machine, id: TaskId) {
        let d = self.tasks.get_mut(&id).unwrap();
        d.state = DescState::Packing;
        let nodes: Vec<NodeId> = d
            .init
            .args
            .iter()
            .filter(|(_, f)| !f.intersects(ArgFlags::SAFE | ArgFlags::NOTRANSFER))
            .filter_map(|&(v, _)| node_of(v))
            .collect();
        d.packing = 1;
        for n in nodes {
            self.pack_node(m, id, n);
        }
        self.pack_done_one(m, id);
    }

    fn pack_node(&mut self, m: &mut Machine, id: TaskId, n: NodeId) {
        self.tasks.get_mut(&id).unwrap().packing += 1;
        let o = m.owner(n);
        let t = self.ticket();
        self.packs.insert(t, id);
        self.to(
            m,
            o,
            Msg::PackReq {
                node: n,
                ticket: t,
                reply_to: self.id,
            },
        );
    }

    fn pack_reply(&mut self, m: &mut Machine, ticket: u64, entries: Vec<PackEntry>, remote: Vec<RegionId>) {
        let id = self.packs.remove(&ticket).expect("unknown pack ticket");
        self.charge(m, m.cfg.costs.pack_obj * entries.len() as u64);
        self.tasks.get_mut(&id).unwrap().fetch.extend(entries);
        for r in remote {
            self.pack_node(m, id, NodeId::Region(r));
        }
        self.pack_done_one(m, id);
    }

    fn pack_done_one(&mut self, m: &mut Machine, id: TaskId) {
        let d = self.tasks.get_mut(&id).unwrap();
        d.packing -= 1;
        if d.packing > 0 {
            return;
        }
        d.fetch = coalesce(std::mem::take(&mut d.fetch));
        match d.kind {
            DescKind::Task => {
                d.state = DescState::Placing;
                let (init, fetch) = (d.init.clone(), d.fetch.clone());
                self.place(m, id, self.id, init, fetch);
            }
            DescKind::Wait { task, worker } => {
                let d = self.tasks.remove(&id).unwrap();
                self.set_producers(m, &d.init.args, worker);
                m.emit(
                    worker,
                    Msg::Resume {
                        tid: task,
                        fetch: d.fetch,
                    },
                );
            }
        }
    }

    /// Choose a child (or, at a leaf, a worker) for a ready task.
    fn place(&mut self, m: &mut Machine, tid: TaskId, sched: CoreId, init: TaskInit, fetch: Vec<PackEntry>) {
        let c = &m.cfg.costs;
        let n = self.children.len() as u64;
        self.charge(m, c.score_candidate * n + c.pack_obj * fetch.len() as u64);
        let topo = &m.eng.topo;
        let bytes: Vec<u64> = self
            .children
            .iter()
            .map(|&ch| {
                fetch
                    .iter()
                    .filter(|e| e.producer.is_some_and(|p| topo.in_subtree(ch, p)))
                    .map(|e| e.size)
                    .sum()
            })
            .collect();
        if self.leaf {
            let i = score::choose(m.cfg.bias, &bytes, &self.worker_load);
            self.worker_load[i] += 1;
            let w = self.children[i];
            self.charge(m, m.cfg.costs.dispatch);
            m.emit(
                w,
                Msg::Dispatch {
                    tid,
                    sched,
                    init,
                    fetch,
                },
            );
            self.to(m, sched, Msg::Chosen { tid, worker: w });
        } else {
            let loads: Vec<u64> = self.child_view.iter().map(|l| l.tasks).collect();
            let i = score::choose(m.cfg.bias, &bytes, &loads);
            self.child_view[i].tasks += 1;
            m.emit(
                self.children[i],
                Msg::Place {
                    tid,
                    sched,
                    init,
                    fetch,
                },
            );
        }
    }

    fn chosen(&mut self, m: &mut Machine, tid: TaskId, worker: CoreId) {
        self.charge(m, m.cfg.costs.dep_step);
        let d = self.tasks.get_mut(&tid).expect("chosen for unknown task");
        d.state = DescState::Dispatched;
        d.worker = Some(worker);
        let args = d.init.args.clone();
        self.set_producers(m, &args, worker);
    }

    /// Record `worker` as last producer of every object under the OUT
    /// arguments. The shared arena is updated at once; owners of remote
    /// parts are notified.
    fn set_producers(&mut self, m: &mut Machine, args: &[(Value, ArgFlags)], worker: CoreId) {
        for &(v, f) in args {
            if !f.contains(ArgFlags::OUT) || f.intersects(ArgFlags::SAFE | ArgFlags::NOTRANSFER) {
                continue;
            }
            let n = node_of(v).unwrap();
            let keys: Vec<ObjKey> = m.forest.subtree_objects(n).iter().map(|o| o.key).collect();
            for k in &keys {
                m.forest.object_mut(*k).unwrap().producer = Some(worker);
            }
            self.charge(m, m.cfg.costs.pack_obj * keys.len() as u64);
            let mut owners = BTreeSet::new();
            if let NodeId::Region(r) = n {
                for x in m.forest.subtree_regions(r) {
                    let o = m.owner(NodeId::Region(x));
                    if o != self.id && owners.insert(o) {
                        m.emit(
                            o,
                            Msg::SetProducer {
                                node: NodeId::Region(x),
                                worker,
                            },
                        );
                    }
                }
            } else {
                let o = m.owner(n);
                if o != self.id {
                    m.emit(o, Msg::SetProducer { node: n, worker });
                }
            }
        }
    }

    fn on_complete(&mut self, m: &mut Machine, tid: TaskId, sched: CoreId, worker: CoreId) {
        self.charge(m, m.cfg.costs.complete);
        if m.eng.topo.core(worker).parent == Some(self.id) {
            let i = self.child_idx(worker);
            self.worker_load[i] -= 1;
        }
        if sched != self.id {
            m.emit(sched, Msg::Complete { tid, sched, worker });
            return;
        }
        let d = self.tasks.remove(&tid).expect("complete for unknown task");
        for &(v, f) in &d.init.args {
            if f.contains(ArgFlags::SAFE) {
                continue;
            }
            let n = node_of(v).unwrap();
            let o = m.owner(n);
            self.to(
                m,
                o,
                Msg::Pop {
                    node: n,
                    key: d.init.path.clone(),
                },
            );
        }
        m.tasks_done += 1;
        if d.init.path.0.is_empty() {
            m.root_done = true;
        }
    }

    // ---- dependency queues --------------------------------------------

    /// Queue a traversal at its anchor, behind earlier launches and pops.
    fn register(&mut self, m: &mut Machine, anchor: NodeId, target: NodeId, trav: Traversal) {
        self.charge(m, m.cfg.costs.dep_step);
        let ticket = self.ticket();
        let path = if anchor == target {
            Some(Vec::new())
        } else {
            let o = m.owner(target);
            if o == self.id {
                Some(m.forest.path_down(anchor, target).expect("target below anchor"))
            } else {
                m.emit(
                    o,
                    Msg::Discover {
                        anchor,
                        target,
                        ticket,
                        reply_to: self.id,
                    },
                );
                None
            }
        };
        self.anchors
            .entry(anchor)
            .or_default()
            .push_back(AnchorOp::Launch { trav, path, ticket });
        self.drain_anchor(m, anchor);
    }

    fn drain_anchor(&mut self, m: &mut Machine, node: NodeId) {
        if !self.draining.insert(node) {
            return;
        }
        loop {
            let q = self.anchors.get_mut(&node).unwrap();
            let Some(head) = q.front() else { break };
            if matches!(head, AnchorOp::Launch { path: None, .. }) {
                break;
            }
            let op = q.pop_front().unwrap();
            let mut out = Vec::new();
            let parent = m.forest.parent(node);
            self.charge(m, m.cfg.costs.dep_step);
            match op {
                AnchorOp::Launch { mut trav, path, .. } => {
                    trav.rest = path.unwrap();
                    m.deps
                        .entry(node)
                        .or_default()
                        .arrive(node, parent, trav, false, &mut m.dep_stats, &mut out);
                }
                AnchorOp::Pop { key } => {
                    let ok = m
                        .deps
                        .entry(node)
                        .or_default()
                        .pop(node, parent, &key, &mut m.dep_stats, &mut out);
                    if !ok {
                        m.violation(format!("pop of {key} at {node}: no entry"));
                    }
                }
            }
            self.dep_outputs(m, out);
        }
        self.draining.remove(&node);
        if self.anchors.get(&node).is_some_and(|q| q.is_empty()) {
            self.anchors.remove(&node);
        }
    }

    fn dep_arrive(&mut self, m: &mut Machine, node: NodeId, trav: Traversal) {
        self.charge(m, m.cfg.costs.dep_step);
        let parent = m.forest.parent(node);
        let mut out = Vec::new();
        m.deps
            .entry(node)
            .or_default()
            .arrive(node, parent, trav, true, &mut m.dep_stats, &mut out);
        self.dep_outputs(m, out);
    }

    fn dep_drained(&mut self, m: &mut Machine, node: NodeId, child: NodeId, rw: u64, ro: u64) {
        self.charge(m, m.cfg.costs.dep_step);
        let parent = m.forest.parent(node);
        let mut out = Vec::new();
        match m.deps.get_mut(&node) {
            Some(d) => d.on_drained(node, parent, child, rw, ro, &mut m.dep_stats, &mut out),
            None => m.violation(format!("drain report for {node}, which has no state")),
        }
        self.dep_outputs(m, out);
    }

    /// Act on dependency outputs; work on locally owned nodes continues
    /// inline, in order.
    fn dep_outputs(&mut self, m: &mut Machine, out: Vec<DepOut>) {
        let mut work: VecDeque<DepOut> = out.into();
        while let Some(o) = work.pop_front() {
            match o {
                DepOut::Forward { to, trav, .. } => {
                    let owner = m.owner(to);
                    if owner == self.id {
                        self.charge(m, m.cfg.costs.dep_step);
                        let parent = m.forest.parent(to);
                        let mut more = Vec::new();
                        m.deps
                            .entry(to)
                            .or_default()
                            .arrive(to, parent, trav, true, &mut m.dep_stats, &mut more);
                        work.extend(more);
                    } else {
                        m.emit(owner, Msg::Arrive { node: to, trav });
                    }
                }
                DepOut::Ready {
                    node,
                    tid,
                    key,
                    arg,
                    notify,
                } => {
                    if arg & WAIT_BIT != 0 {
                        let parent = m.forest.parent(node);
                        let mut more = Vec::new();
                        let ok = m
                            .deps
                            .get_mut(&node)
                            .unwrap()
                            .pop(node, parent, &key, &mut m.dep_stats, &mut more);
                        debug_assert!(ok);
                        work.extend(more);
                    }
                    self.to(
                        m,
                        notify,
                        Msg::ArgReady {
                            tid,
                            arg: arg & !WAIT_BIT,
                        },
                    );
                }
                DepOut::Drained { parent, child, rw, ro } => {
                    let owner = m.owner(parent);
                    if owner == self.id {
                        self.charge(m, m.cfg.costs.dep_step);
                        let pp = m.forest.parent(parent);
                        let mut more = Vec::new();
                        m.deps
                            .get_mut(&parent)
                            .expect("drain into a node without state")
                            .on_drained(parent, pp, child, rw, ro, &mut m.dep_stats, &mut more);
                        work.extend(more);
                    } else {
                        m.emit(owner, Msg::Drained { parent, child, rw, ro });
                    }
                }
            }
        }
    }

    // ---- load -----------------------------------------------------------

    fn report_load(&mut self, m: &mut Machine) {
        let Some(p) = m.eng.topo.core(self.id).parent else {
            return;
        };
        let load = if self.leaf {
            Load {
                tasks: self.worker_load.iter().sum(),
                regions: self.own_regions,
            }
        } else {
            Load {
                tasks: self.child_view.iter().map(|l| l.tasks).sum(),
                regions: self.own_regions + self.child_view.iter().map(|l| l.regions).sum::<u64>(),
            }
        };
        if let Some(l) = self.reporter.observe(load, m.cfg.load) {
            self.charge(m, m.cfg.costs.load_report);
            m.emit(
                p,
                Msg::LoadReport {
                    tasks: l.tasks,
                    regions: l.regions,
                },
            );
        }
    }

    // ---- memory -----------------------------------------------------------

    fn owns(&self, m: &Machine, key: RouteKey) -> bool {
        match key {
            RouteKey::Region(r) => m.forest.owner(NodeId::Region(r)) == Some(self.id),
            RouteKey::Addr(a) => self.my_pages.contains(&page_of(a.0)),
        }
    }

    fn mem_req(&mut self, m: &mut Machine, worker: CoreId, op: MemOp) {
        let key = op.route_key();
        if self.owns(m, key) {
            return self.mem_op(m, worker, op);
        }
        self.charge(m, m.cfg.costs.forward);
        let down = match key {
            RouteKey::Region(r) => self.region_trie.get(r.0),
            RouteKey::Addr(a) => self.page_trie.get(page_of(a.0)),
        };
        let next = match (down, m.eng.topo.core(self.id).parent) {
            (Some(i), _) => self.children[i as usize],
            (None, Some(p)) => p,
            (None, None) => {
                // Announcements may still be in flight; fall back to the
                // shared arena before declaring the target unknown.
                m.audits.entry("route_fallbacks").and_modify(|x| *x += 1).or_insert(1);
                let holder = match key {
                    RouteKey::Region(r) => m.forest.owner(NodeId::Region(r)).ok_or(Fault::UnknownRegion(r)),
                    RouteKey::Addr(a) => m
                        .forest
                        .object_at(a)
                        .map(|o| m.owner(NodeId::Region(o.region)))
                        .ok_or(Fault::UnknownObject(a)),
                };
                match holder {
                    Ok(h) if h != self.id => m.eng.topo.next_hop(self.id, h).unwrap(),
                    Ok(_) => unreachable!("owner check failed at the owner"),
                    Err(f) => return m.fault(f),
                }
            }
        };
        m.emit(next, Msg::MemReq { worker, op });
    }

    fn mem_op(&mut self, m: &mut Machine, worker: CoreId, op: MemOp) {
        let c = m.cfg.costs.clone();
        match op {
            MemOp::Alloc {
                region,
                size,
                keys,
                bulk,
            } => {
                self.charge(m, c.alloc + c.pack_obj * (keys.len() as u64 - 1));
                self.pending_allocs.push_back(PendingAlloc {
                    worker,
                    region,
                    size,
                    keys: keys.into(),
                    producer: None,
                    bulk,
                    done: Vec::new(),
                });
                self.retry_allocs(m);
            }
            MemOp::Insert {
                key,
                size,
                producer,
                region,
            } => {
                self.charge(m, c.alloc);
                self.pending_allocs.push_back(PendingAlloc {
                    worker,
                    region,
                    size,
                    keys: VecDeque::from([key]),
                    producer,
                    bulk: false,
                    done: Vec::new(),
                });
                self.retry_allocs(m);
            }
            MemOp::Ralloc { parent, level } => {
                self.charge(m, c.ralloc);
                self.region_counter += 1;
                let id = RegionId((u64::from(self.id.0) + 1) << 32 | self.region_counter);
                let leaf_level = m.eng.topo.sched_levels.len() - 1;
                let mine = m.eng.topo.core(self.id).level;
                let depth = (level as usize).clamp(mine, leaf_level);
                self.ralloc_place(m, id, parent, depth, level, worker);
            }
            MemOp::Free { addr } => {
                self.charge(m, c.free);
                let Some(o) = m.forest.object_at(addr).cloned() else {
                    return m.fault(Fault::UnknownObject(addr));
                };
                self.release_object(m, &o, false);
            }
            MemOp::Rfree { region } => self.rfree(m, region),
            MemOp::Realloc { addr, size, region } => {
                self.charge(m, c.free);
                let Some(o) = m.forest.object_at(addr).cloned() else {
                    return m.fault(Fault::UnknownObject(addr));
                };
                self.release_object(m, &o, true);
                m.retired.remove(&o.key);
                let op = MemOp::Insert {
                    key: o.key,
                    size,
                    producer: o.producer,
                    region,
                };
                if self.owns(m, op.route_key()) {
                    self.mem_op(m, worker, op);
                } else {
                    self.mem_req(m, worker, op);
                }
            }
        }
    }

    /// Free an object's slot and drop it from the arena.
    fn release_object(&mut self, m: &mut Machine, o: &ObjectMeta, moving: bool) {
        let node = NodeId::Object(o.key);
        let busy = if moving {
            m.deps.get(&node).is_some_and(|d| !d.is_quiescent())
        } else {
            m.deps.remove(&node).is_some_and(|d| !d.is_quiescent())
        };
        if busy {
            m.violation(format!("object {} freed with queued tasks", o.key));
        }
        let heap = &mut m.forest.region_mut(o.region).expect("object's region").heap;
        heap.free(o.addr.0, o.size, &mut self.pool);
        m.forest.remove_object(o.key);
        m.retired.insert(o.key, o.producer);
    }

    fn rfree(&mut self, m: &mut Machine, region: RegionId) {
        let regions = m.forest.subtree_regions(region);
        let objs: Vec<ObjectMeta> = m
            .forest
            .subtree_objects(NodeId::Region(region))
            .into_iter()
            .cloned()
            .collect();
        let c = m.cfg.costs.free;
        self.charge(m, c * (regions.len() + objs.len()) as u64);
        for o in &objs {
            let node = NodeId::Object(o.key);
            if m.deps.remove(&node).is_some_and(|d| !d.is_quiescent()) {
                m.violation(format!("object {} freed with queued tasks", o.key));
            }
            m.forest.remove_object(o.key);
            m.retired.insert(o.key, o.producer);
        }
        let mut remote: BTreeMap<CoreId, Vec<(RegionId, RegionHeap)>> = BTreeMap::new();
        for &r in regions.iter().rev() {
            let node = NodeId::Region(r);
            if m.deps.remove(&node).is_some_and(|d| !d.is_quiescent()) {
                m.violation(format!("region {r} freed with queued tasks"));
            }
            let mut meta = m.forest.remove_region(r);
            if meta.owner == self.id {
                meta.heap.release_all(&mut self.pool);
                self.own_regions -= 1;
            } else {
                remote.entry(meta.owner).or_default().push((r, meta.heap));
            }
            self.region_trie.remove(r.0);
        }
        for (o, list) in remote {
            m.emit(o, Msg::RfreeDown { regions: list });
        }
        if let Some(p) = m.eng.topo.core(self.id).parent {
            m.emit(p, Msg::RegionRetire { ids: regions });
        }
    }

    fn ralloc_place(
        &mut self,
        m: &mut Machine,
        id: RegionId,
        parent: RegionId,
        depth: usize,
        level: u32,
        worker: CoreId,
    ) {
        let here = m.eng.topo.core(self.id).level;
        if here >= depth {
            self.charge(m, m.cfg.costs.ralloc);
            if let Err(f) = m.forest.add_region(id, parent, self.id, level) {
                return m.fault(f);
            }
            self.own_regions += 1;
            m.emit(
                worker,
                Msg::MemReply {
                    result: vec![Value::Region(id)],
                    announce: Some(id),
                },
            );
            if m.eng.topo.in_subtree(self.id, worker) {
                if let Some(p) = m.eng.topo.core(self.id).parent {
                    m.emit(p, Msg::RegionAnnounce { id });
                }
            }
            return;
        }
        self.charge(m, m.cfg.costs.score_candidate * self.children.len() as u64);
        let i = (0..self.children.len())
            .min_by_key(|&i| (self.child_view[i].regions, i))
            .unwrap();
        self.child_view[i].regions += 1;
        self.region_trie.insert(id.0, i as u32);
        m.emit(
            self.children[i],
            Msg::RallocPlace {
                id,
                parent,
                depth,
                level,
                worker,
            },
        );
    }

    /// Satisfy queued allocations in order, asking for pages when the pool
    /// runs dry.
    fn retry_allocs(&mut self, m: &mut Machine) {
        while let Some(p) = self.pending_allocs.front_mut() {
            let region = p.region;
            let Some(meta) = m.forest.region_mut(region) else {
                return m.fault(Fault::UnknownRegion(region));
            };
            while let Some(&key) = p.keys.front() {
                match meta.heap.alloc(p.size, &mut self.pool) {
                    Ok(a) => {
                        p.keys.pop_front();
                        p.done.push(Value::Object(ObjRef { key, addr: Addr(a) }));
                    }
                    Err(_) => break,
                }
            }
            let short = !p.keys.is_empty();
            if short {
                self.ask_pages(m, 1);
                return;
            }
            let p = self.pending_allocs.pop_front().unwrap();
            for v in &p.done {
                let Value::Object(r) = *v else { unreachable!() };
                m.forest.add_object(ObjectMeta {
                    key: r.key,
                    addr: r.addr,
                    size: p.size,
                    region: p.region,
                    producer: p.producer,
                });
                // A moved object keeps its counters; the new parent edge
                // starts out reconciled with them.
                let node = NodeId::Object(r.key);
                if let Some(d) = m.deps.get(&node) {
                    let (rw, ro) = (d.recv_rw, d.recv_ro);
                    let e = Edge {
                        sent_rw: rw,
                        sent_ro: ro,
                        acked_rw: rw,
                        acked_ro: ro,
                    };
                    m.deps
                        .entry(NodeId::Region(p.region))
                        .or_default()
                        .edges
                        .insert(node, e);
                }
            }
            let _ = p.bulk;
            m.emit(
                p.worker,
                Msg::MemReply {
                    result: p.done,
                    announce: None,
                },
            );
        }
    }

    fn ask_pages(&mut self, m: &mut Machine, n: u64) {
        if self.page_req_out {
            return;
        }
        match m.eng.topo.core(self.id).parent {
            Some(p) => {
                self.page_req_out = true;
                m.emit(p, Msg::PageReq { n });
            }
            None => m.fault(Fault::OutOfMemory),
        }
    }

    /// Grant pages to children that asked, fetching more from above when
    /// the pool has no whole page left.
    fn serve_pages(&mut self, m: &mut Machine) {
        while let Some(&(child, n)) = self.page_waiters.front() {
            let want = n.max(m.cfg.page_batch);
            let pages = self.pool.take_pages(want);
            if pages.is_empty() {
                self.ask_pages(m, want);
                return;
            }
            self.page_waiters.pop_front();
            let i = self.child_idx(child) as u32;
            for &pg in &pages {
                self.my_pages.remove(&pg);
                self.page_trie.insert(pg, i);
            }
            m.pages_in_flight += pages.len() as u64;
            m.emit(child, Msg::PageGrant { pages });
        }
    }
}
