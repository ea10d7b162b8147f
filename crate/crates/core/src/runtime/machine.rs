//! The simulated chip: engine, per-core runtime state, and the shared
//! region-tree arena. Handlers for individual cores live in `sched` and
//! `worker`; this file holds the event loop, routing and bookkeeping.

use std::collections::BTreeMap;

use crate::api::lineage::initial_digest;
use crate::api::{Digest, LineageReport, Program, Value};
use crate::config::{rng_stream, SimConfig};
use crate::dependency::{ArgFlags, DepState, DepStats, Mode};
use crate::error::{Fault, SimError};
use crate::ids::{CoreId, NodeId, ObjKey, TaskId, TaskPath};
use crate::memory::{Forest, PagePool};
use crate::sim::{build_topology, Engine, Role, SpeedClass, Step};

use super::msg::{Envelope, Msg};
use super::sched::Sched;
use super::worker::Worker;

/// Timer tags.
pub(super) const BOOT: u64 = u64::MAX;
pub(super) const CONTINUE: u64 = u64::MAX - 1;

/// One task's declared footprint, for the conflict audit.
#[derive(Debug, Clone)]
pub(super) struct Active {
    pub path: TaskPath,
    pub args: Vec<(NodeId, Mode)>,
}

/// Per-worker time partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerTime {
    pub task: u64,
    pub runtime: u64,
    pub fetch_stall: u64,
    pub idle: u64,
}

impl WorkerTime {
    pub fn total(&self) -> u64 {
        self.task + self.runtime + self.fetch_stall + self.idle
    }
}

/// Per-core counters collected during a run.
#[derive(Debug, Clone, Default)]
pub struct CoreStats {
    pub id: CoreId,
    pub role: Option<Role>,
    pub level: usize,
    /// Schedulers: cycles spent in handlers. Workers: see `time`.
    pub busy: u64,
    pub time: WorkerTime,
    pub tasks_run: u64,
    pub msgs_handled: u64,
    pub msgs_sent: u64,
    pub msg_bytes_sent: u64,
    pub msg_bytes_recv: u64,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
    pub credit_stalls: u64,
}

/// Everything a parallel run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub makespan: u64,
    pub lineage: LineageReport,
    pub cores: Vec<CoreStats>,
    pub tasks: u64,
    pub dep: DepStats,
    pub dma_retries: u64,
    pub trace_hash: String,
    pub trace_lines: Vec<String>,
    pub dep_dot: Option<String>,
    /// Audit counters that were checked and found clean.
    pub audits: BTreeMap<&'static str, u64>,
}

pub(super) enum Wake {
    Msg { hop_src: CoreId, env: Envelope },
    Dma { group: u64 },
    Timer(u64),
}

pub struct Machine<'p> {
    pub(super) cfg: &'p SimConfig,
    pub(super) prog: &'p Program,
    pub(super) eng: Engine<Envelope>,
    pub(super) forest: Forest,
    pub(super) deps: BTreeMap<NodeId, DepState>,
    pub(super) dep_stats: DepStats,
    pub(super) scheds: BTreeMap<CoreId, Sched>,
    pub(super) workers: BTreeMap<CoreId, Worker>,
    pub(super) fault: Option<SimError>,
    pub(super) root_done: bool,
    /// Producer of every freed object at the time it was freed.
    pub(super) retired: BTreeMap<ObjKey, Option<CoreId>>,
    pub(super) observations: BTreeMap<TaskId, Digest>,
    pub(super) pages_in_flight: u64,
    pub(super) active: BTreeMap<TaskId, Active>,
    pub(super) violations: Vec<String>,
    pub(super) audits: BTreeMap<&'static str, u64>,
    pub(super) tasks_spawned: u64,
    pub(super) tasks_done: u64,
    /// Scheduler outbox: messages emitted by the running handler, sent
    /// when it finishes.
    pub(super) outbox: Vec<(Option<CoreId>, CoreId, Msg)>,
    pub(super) cost: u64,
}

impl<'p> Machine<'p> {
    pub fn new(cfg: &'p SimConfig, prog: &'p Program) -> Result<Self, SimError> {
        cfg.validate()?;
        let topo = build_topology(&cfg.topology)?;
        let noc_seed = rand::Rng::gen(&mut rng_stream(cfg.seed, "noc"));
        let mut eng = Engine::new(topo, cfg.latency.clone(), cfg.noc.clone(), noc_seed, cfg.cycle_budget);
        eng.trace = crate::sim::Trace::new(true, cfg.debug.trace);
        eng.faults.fail_rate = cfg.debug.dma_fail_rate;
        let top = eng.topo.top();
        let mut scheds = BTreeMap::new();
        let mut workers = BTreeMap::new();
        for c in &eng.topo.cores {
            match c.role {
                Role::Scheduler => {
                    let leaf = c.children.iter().all(|&k| eng.topo.core(k).role == Role::Worker);
                    scheds.insert(c.id, Sched::new(c.id, c.children.clone(), leaf));
                }
                Role::Worker => {
                    workers.insert(c.id, Worker::new(c.id, c.parent.expect("worker has a leaf")));
                }
            }
        }
        let first_page = 1;
        let s = scheds.get_mut(&top).unwrap();
        s.pool = PagePool::with_pages(first_page, cfg.pages);
        s.my_pages = (first_page..first_page + cfg.pages).collect();
        eng.timer(0, top, BOOT);
        Ok(Machine {
            cfg,
            prog,
            eng,
            forest: Forest::new(top),
            deps: BTreeMap::new(),
            dep_stats: DepStats::default(),
            scheds,
            workers,
            fault: None,
            root_done: false,
            retired: BTreeMap::new(),
            observations: BTreeMap::new(),
            pages_in_flight: 0,
            active: BTreeMap::new(),
            violations: Vec::new(),
            audits: BTreeMap::new(),
            tasks_spawned: 1,
            tasks_done: 0,
            outbox: Vec::new(),
            cost: 0,
        })
    }

    pub(super) fn class(&self, c: CoreId) -> SpeedClass {
        self.eng.topo.core(c).speed_class
    }

    /// Runtime-code cycles on core `c`.
    pub(super) fn scaled(&self, c: CoreId, cycles: u64) -> u64 {
        self.eng.latency.runtime_cost(cycles, self.class(c))
    }

    pub(super) fn charge(&mut self, cycles: u64) {
        self.cost += cycles;
    }

    /// Queue a message from the running scheduler handler.
    pub(super) fn emit(&mut self, dst: CoreId, msg: Msg) {
        self.outbox.push((None, dst, msg));
    }

    /// Pass on a message that only transits the running handler's core.
    pub(super) fn relay(&mut self, env: Envelope) {
        self.outbox.push((Some(env.origin), env.dst, env.msg));
    }

    /// Send `msg` from `src` toward `dst`, leaving at `depart`.
    pub(super) fn send(&mut self, depart: u64, src: CoreId, dst: CoreId, msg: Msg) {
        self.send_from(depart, src, src, dst, msg);
    }

    pub(super) fn send_from(&mut self, depart: u64, src: CoreId, origin: CoreId, dst: CoreId, msg: Msg) {
        assert_ne!(src, dst, "message to self: {msg:?}");
        let hop = self.eng.topo.next_hop(src, dst).expect("distinct cores");
        let kind = msg.kind();
        let len = msg.len();
        self.eng
            .send_at(depart, src, hop, kind, len, Envelope { origin, dst, msg });
    }

    pub(super) fn owner(&self, node: NodeId) -> CoreId {
        self.forest
            .owner(node)
            .unwrap_or_else(|| panic!("node {node} has no owner"))
    }

    /// Lowest scheduler whose subtree contains every core in `cores`.
    pub(super) fn lca(&self, cores: &[CoreId]) -> CoreId {
        let topo = &self.eng.topo;
        let mut cur = cores[0];
        for &c in &cores[1..] {
            while !topo.in_subtree(cur, c) {
                cur = topo.core(cur).parent.expect("common root");
            }
        }
        cur
    }

    pub(super) fn abort(&mut self, e: SimError) {
        if self.fault.is_none() {
            self.fault = Some(e);
        }
    }

    pub(super) fn fault(&mut self, f: Fault) {
        self.abort(SimError::Fault(f));
    }

    pub(super) fn violation(&mut self, what: String) {
        if self.violations.len() < 20 {
            self.violations.push(what);
        }
    }

    pub(super) fn count(&mut self, audit: &'static str) {
        *self.audits.entry(audit).or_default() += 1;
    }

    /// Conflict audit when a task starts or resumes executing.
    pub(super) fn audit_start(&mut self, tid: TaskId, path: &TaskPath, args: &[(Value, ArgFlags)]) {
        let mine: Vec<(NodeId, Mode)> = args
            .iter()
            .filter(|(_, f)| !f.contains(ArgFlags::SAFE))
            .filter_map(|&(v, f)| Some((crate::api::access::node_of(v)?, f.mode()?)))
            .collect();
        let mut bad = Vec::new();
        for (other, a) in &self.active {
            if *other == tid || a.path.is_ancestor_of(path) || path.is_ancestor_of(&a.path) {
                continue;
            }
            for &(n, m) in &mine {
                for &(n2, m2) in &a.args {
                    let overlap = self.forest.contains(n, n2) || self.forest.contains(n2, n);
                    if overlap && m.conflicts(m2) {
                        bad.push(format!("{path} and {} both hold {n}/{n2}", a.path));
                    }
                }
            }
        }
        for b in bad {
            self.violation(format!("conflict: {b}"));
        }
        self.count("conflict_checks");
        self.active.insert(
            tid,
            Active {
                path: path.clone(),
                args: mine,
            },
        );
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while self.fault.is_none() {
            let step = match self.eng.next_step() {
                Ok(Some(s)) => s,
                Ok(None) => break,
                Err(e) => return Err(e),
            };
            let (core, wake) = match step {
                Step::Message(m) => (
                    m.dst,
                    Wake::Msg {
                        hop_src: m.src,
                        env: m.body.expect("final fragment carries the body"),
                    },
                ),
                Step::DmaDone { target, group, .. } => (target, Wake::Dma { group }),
                Step::Timer { target, tag } => (target, Wake::Timer(tag)),
            };
            let now = self.eng.now();
            if let Some(mut st) = self.scheds.remove(&core) {
                match wake {
                    Wake::Timer(BOOT) => st.boot(&mut self, now),
                    Wake::Msg { hop_src, env } => st.handle(&mut self, now, hop_src, env),
                    _ => unreachable!("schedulers get no timers or DMA"),
                }
                self.scheds.insert(core, st);
            } else {
                let mut wk = self.workers.remove(&core).expect("core exists");
                wk.wake(&mut self, now, wake);
                self.workers.insert(core, wk);
            }
        }
        if let Some(e) = self.fault.take() {
            return Err(e);
        }
        self.finish()
    }

    fn finish(mut self) -> Result<RunOutput, SimError> {
        let makespan = self.eng.now();
        if !self.root_done || self.tasks_done != self.tasks_spawned {
            return Err(SimError::Stalled(self.stall_dump()));
        }
        for wk in self.workers.values_mut() {
            wk.close(makespan);
        }
        super::audit::final_audits(&mut self, makespan);
        if !self.violations.is_empty() {
            return Err(SimError::Audit(self.violations.join("; ")));
        }
        let lineage = self.lineage();
        let dep_dot = self.cfg.debug.dump_deps.then(|| self.dep_dot());
        let cores = self.core_stats();
        Ok(RunOutput {
            makespan,
            lineage,
            cores,
            tasks: self.tasks_done,
            dep: self.dep_stats,
            dma_retries: self.eng.dma_retries,
            trace_hash: self.eng.trace.hash_hex(),
            trace_lines: self.eng.trace.lines().to_vec(),
            dep_dot,
            audits: self.audits,
        })
    }

    fn lineage(&self) -> LineageReport {
        let digest_at = |key: ObjKey, producer: Option<CoreId>| -> Digest {
            producer
                .and_then(|p| self.workers.get(&p))
                .and_then(|w| w.store.get(&key).copied())
                .unwrap_or_else(|| initial_digest(key))
        };
        let mut objects = BTreeMap::new();
        for (&k, &p) in &self.retired {
            objects.insert(k, digest_at(k, p));
        }
        for o in self.forest.objects() {
            objects.insert(o.key, digest_at(o.key, o.producer));
        }
        LineageReport {
            objects,
            observations: self.observations.clone(),
        }
    }

    fn core_stats(&self) -> Vec<CoreStats> {
        let topo = &self.eng.topo;
        topo.cores
            .iter()
            .map(|c| {
                let t = &self.eng.traffic[c.id.index()];
                let mut s = CoreStats {
                    id: c.id,
                    role: Some(c.role),
                    level: c.level,
                    msgs_sent: t.msgs_sent,
                    msg_bytes_sent: t.msg_bytes_sent,
                    msg_bytes_recv: t.msg_bytes_recv,
                    dma_bytes_in: t.dma_bytes_in,
                    dma_bytes_out: t.dma_bytes_out,
                    credit_stalls: t.credit_stalls,
                    ..Default::default()
                };
                if let Some(st) = self.scheds.get(&c.id) {
                    s.busy = st.busy;
                    s.msgs_handled = st.handled;
                }
                if let Some(w) = self.workers.get(&c.id) {
                    s.time = w.time;
                    s.tasks_run = w.tasks_run;
                    s.msgs_handled = w.handled;
                    s.busy = w.time.task + w.time.runtime;
                }
                s
            })
            .collect()
    }

    fn dep_dot(&self) -> String {
        let mut out = String::from("digraph deps {\n");
        for (n, st) in &self.deps {
            crate::dependency::dot_node(&mut out, *n, st);
        }
        out.push_str("}\n");
        out
    }

    fn stall_dump(&self) -> String {
        let mut lines = vec![format!(
            "root done: {}, tasks {}/{} complete",
            self.root_done, self.tasks_done, self.tasks_spawned
        )];
        for (id, st) in &self.scheds {
            for (tid, d) in &st.tasks {
                lines.push(format!(
                    "{id}: task {} {tid} {:?} pending {}",
                    d.init.path, d.state, d.pending
                ));
            }
            for (n, q) in &st.anchors {
                lines.push(format!("{id}: anchor {n} has {} queued ops", q.len()));
            }
        }
        for (id, w) in &self.workers {
            lines.push(w.describe(*id));
        }
        for (n, d) in &self.deps {
            if !d.is_quiescent() {
                let q: Vec<String> = d.queue.iter().map(|e| format!("{}:{:?}", e.key, e.kind)).collect();
                let busy: Vec<String> = d
                    .edges
                    .iter()
                    .filter(|(_, e)| e.busy_rw() || e.busy_ro())
                    .map(|(c, e)| format!("{c} {e:?}"))
                    .collect();
                lines.push(format!("dep {n}: [{}] busy edges [{}]", q.join(", "), busy.join(", ")));
            }
        }
        lines.truncate(200);
        lines.join("\n")
    }
}
