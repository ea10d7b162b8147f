//! Worker cores: a FIFO of dispatched tasks, prefetch of the head task's
//! inputs, and execution of task bodies against local memory.

use std::collections::{BTreeMap, VecDeque};

use crate::api::exec::{Action, TaskCtx};
use crate::api::lineage::initial_digest;
use crate::api::{Digest, HandleVal};
use crate::ids::{CoreId, ObjKey, TaskId};
use crate::memory::PackEntry;
use crate::sim::DmaTransfer;

use super::machine::{Machine, Wake, WorkerTime, CONTINUE};
use super::msg::{MemOp, Msg, TaskInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fetch {
    Pending,
    InFlight(u64),
    Done,
}

#[derive(Debug)]
struct Run {
    tid: TaskId,
    sched: CoreId,
    /// `None` for a resumed task, which is found among the suspended.
    init: Option<TaskInit>,
    fetch: Vec<PackEntry>,
    state: Fetch,
}

#[derive(Debug)]
struct Running {
    ctx: TaskCtx,
    sched: CoreId,
    /// Waiting for the reply to a blocking memory call.
    blocked: bool,
    /// The pending reply is a bulk allocation.
    bulk: bool,
}

/// What the worker does while not executing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sleep {
    Idle,
    FetchStall,
    Runtime,
}

#[derive(Debug)]
pub struct Worker {
    id: CoreId,
    leaf: CoreId,
    queue: VecDeque<Run>,
    running: Option<Running>,
    suspended: BTreeMap<TaskId, Running>,
    inbox: VecDeque<(CoreId, Msg)>,
    /// Digest of every object version held in local memory.
    pub(super) store: BTreeMap<ObjKey, Digest>,
    timer_pending: bool,
    busy_until: u64,
    acct_at: u64,
    sleep: Sleep,
    pub(super) time: WorkerTime,
    pub(super) tasks_run: u64,
    pub(super) handled: u64,
}

impl Worker {
    pub(super) fn new(id: CoreId, leaf: CoreId) -> Self {
        Worker {
            id,
            leaf,
            queue: VecDeque::new(),
            running: None,
            suspended: BTreeMap::new(),
            inbox: VecDeque::new(),
            store: BTreeMap::new(),
            timer_pending: false,
            busy_until: 0,
            acct_at: 0,
            sleep: Sleep::Idle,
            time: WorkerTime::default(),
            tasks_run: 0,
            handled: 0,
        }
    }

    pub(super) fn idle(&self) -> bool {
        self.queue.is_empty() && self.running.is_none() && self.suspended.is_empty() && self.inbox.is_empty()
    }

    pub(super) fn describe(&self, id: CoreId) -> String {
        format!(
            "{id}: queue {}, running {:?}, suspended {}, inbox {}",
            self.queue.len(),
            self.running
                .as_ref()
                .map(|r| (r.ctx.path.to_string(), r.ctx.pc(), r.blocked)),
            self.suspended.len(),
            self.inbox.len()
        )
    }

    /// Close the time partition at the end of the run.
    pub(super) fn close(&mut self, end: u64) {
        let t = end.max(self.acct_at);
        self.account(t);
        debug_assert!(self.busy_until <= end);
    }

    fn account(&mut self, t: u64) {
        let gap = t.saturating_sub(self.acct_at);
        match self.sleep {
            Sleep::Idle => self.time.idle += gap,
            Sleep::FetchStall => self.time.fetch_stall += gap,
            Sleep::Runtime => self.time.runtime += gap,
        }
        self.acct_at = self.acct_at.max(t);
    }

    /// Spend `c` cycles of runtime code starting at `*t`.
    fn runtime(&mut self, t: &mut u64, c: u64) {
        self.time.runtime += c;
        *t += c;
        self.acct_at = *t;
    }

    pub(super) fn wake(&mut self, m: &mut Machine, now: u64, wake: Wake) {
        match wake {
            Wake::Msg { hop_src, env } => self.inbox.push_back((hop_src, env.msg)),
            Wake::Dma { group } => self.dma_done(m, group),
            Wake::Timer(CONTINUE) => self.timer_pending = false,
            Wake::Timer(t) => unreachable!("unexpected timer {t} on worker"),
        }
        if self.timer_pending {
            return;
        }
        self.pump(m, now);
    }

    fn dma_done(&mut self, m: &mut Machine, group: u64) {
        let Some(run) = self.queue.iter_mut().find(|r| r.state == Fetch::InFlight(group)) else {
            unreachable!("completion of unknown DMA group {group}");
        };
        run.state = Fetch::Done;
        let fetch = std::mem::take(&mut run.fetch);
        for e in &fetch {
            let Some(p) = e.producer.filter(|&p| p != self.id) else {
                continue;
            };
            let src = m.workers.get(&p).map(|w| &w.store);
            for &k in &e.keys {
                let d = src
                    .and_then(|s| s.get(&k).copied())
                    .unwrap_or_else(|| initial_digest(k));
                self.store.insert(k, d);
            }
        }
    }

    /// Start the head task's input transfer if it has not started yet.
    fn prefetch(&mut self, m: &mut Machine, at: u64) {
        let me = self.id;
        let Some(run) = self.queue.front_mut() else { return };
        if run.state != Fetch::Pending {
            return;
        }
        let transfers: Vec<DmaTransfer> = run
            .fetch
            .iter()
            .filter_map(|e| {
                let p = e.producer.filter(|&p| p != me)?;
                Some(DmaTransfer {
                    src_core: p,
                    dst_core: me,
                    src: e.addr,
                    dst: e.addr,
                    size: e.size,
                })
            })
            .collect();
        if transfers.is_empty() {
            run.state = Fetch::Done;
        } else {
            run.state = Fetch::InFlight(m.eng.issue_dma(at, me, run.tid.0, transfers));
        }
    }

    fn send(&self, m: &mut Machine, at: u64, dst: CoreId, msg: Msg) {
        m.send(at, self.id, dst, msg);
    }

    fn pump(&mut self, m: &mut Machine, now: u64) {
        let mut t = now.max(self.busy_until);
        self.account(t);
        let c = m.cfg.costs.clone();
        let scale = |x: u64| m.scaled(self.id, x);
        let (msg_cost, start_cost, call_cost, arg_cost) = (
            scale(c.worker_msg),
            scale(c.task_start),
            scale(c.worker_call),
            scale(c.worker_per_arg),
        );
        loop {
            while let Some((src, msg)) = self.inbox.pop_front() {
                self.runtime(&mut t, msg_cost);
                self.handled += 1;
                m.eng.release(t, src, self.id);
                self.on_msg(msg);
            }
            self.prefetch(m, t);
            if let Some(r) = self.running.as_mut() {
                if r.blocked {
                    self.sleep = Sleep::Runtime;
                    break;
                }
                let action = match r.ctx.decode(m.prog, &m.forest) {
                    Ok(a) => a,
                    Err(f) => {
                        m.fault(f);
                        return;
                    }
                };
                let sched = r.sched;
                match action {
                    Some(Action::Compute(cy)) => {
                        r.ctx.complete(HandleVal::None);
                        self.time.task += cy;
                        t += cy;
                        self.acct_at = t;
                        self.busy_until = t;
                        self.timer_pending = true;
                        m.eng.timer(t, self.id, CONTINUE);
                        return;
                    }
                    Some(Action::Read(k)) => {
                        let d = self.store.get(&k).copied().unwrap_or_else(|| initial_digest(k));
                        r.ctx.lineage.read(d);
                        r.ctx.complete(HandleVal::None);
                    }
                    Some(Action::Write(k)) => {
                        let d = self.store.get(&k).copied().unwrap_or_else(|| initial_digest(k));
                        let nd = r.ctx.lineage.write(d);
                        self.store.insert(k, nd);
                        // Objects the task allocated itself have no producer
                        // until their first write.
                        if let Some(o) = m.forest.object_mut(k) {
                            if o.producer.is_none() {
                                o.producer = Some(self.id);
                            }
                        }
                        r.ctx.complete(HandleVal::None);
                    }
                    Some(Action::Alloc {
                        region,
                        size,
                        keys,
                        bulk,
                    }) => {
                        r.blocked = true;
                        r.bulk = bulk;
                        self.runtime(&mut t, call_cost);
                        let op = MemOp::Alloc {
                            region,
                            size,
                            keys,
                            bulk,
                        };
                        self.send(m, t, self.leaf, Msg::MemReq { worker: self.id, op });
                    }
                    Some(Action::Ralloc { parent, level }) => {
                        r.blocked = true;
                        self.runtime(&mut t, call_cost);
                        let op = MemOp::Ralloc { parent, level };
                        self.send(m, t, self.leaf, Msg::MemReq { worker: self.id, op });
                    }
                    Some(Action::Realloc { key, size, region }) => {
                        r.blocked = true;
                        self.runtime(&mut t, call_cost);
                        let addr = m.forest.object(key).expect("live object").addr;
                        let op = MemOp::Realloc { addr, size, region };
                        self.send(m, t, self.leaf, Msg::MemReq { worker: self.id, op });
                    }
                    Some(Action::Free(k)) => {
                        r.ctx.complete(HandleVal::None);
                        self.runtime(&mut t, call_cost);
                        let addr = m.forest.object(k).expect("live object").addr;
                        let op = MemOp::Free { addr };
                        self.send(m, t, self.leaf, Msg::MemReq { worker: self.id, op });
                    }
                    Some(Action::Rfree(region)) => {
                        r.ctx.complete(HandleVal::None);
                        self.runtime(&mut t, call_cost);
                        let op = MemOp::Rfree { region };
                        self.send(m, t, self.leaf, Msg::MemReq { worker: self.id, op });
                    }
                    Some(Action::Spawn { path, func, args }) => {
                        r.ctx.complete(HandleVal::None);
                        let parent = r.ctx.tid;
                        self.runtime(&mut t, call_cost + arg_cost * args.len() as u64);
                        let init = TaskInit {
                            tid: path.id(),
                            path,
                            func,
                            args,
                        };
                        m.tasks_spawned += 1;
                        self.send(m, t, sched, Msg::Spawn { parent, init });
                    }
                    Some(Action::Wait { key, args, .. }) => {
                        r.ctx.complete(HandleVal::None);
                        let task = r.ctx.tid;
                        self.runtime(&mut t, call_cost + arg_cost * args.len() as u64);
                        m.active.remove(&task);
                        let r = self.running.take().unwrap();
                        self.suspended.insert(task, r);
                        self.send(m, t, sched, Msg::Wait { task, key, args });
                    }
                    None => {
                        let r = self.running.take().unwrap();
                        self.runtime(&mut t, call_cost);
                        m.active.remove(&r.ctx.tid);
                        m.observations.insert(r.ctx.tid, r.ctx.lineage.read_fp);
                        self.tasks_run += 1;
                        let msg = Msg::Complete {
                            tid: r.ctx.tid,
                            sched: r.sched,
                            worker: self.id,
                        };
                        self.send(m, t, self.leaf, msg);
                    }
                }
                continue;
            }
            match self.queue.front().map(|r| r.state) {
                Some(Fetch::Done) => {
                    let run = self.queue.pop_front().unwrap();
                    self.runtime(&mut t, start_cost);
                    let running = match run.init {
                        Some(init) => match TaskCtx::new(m.prog, init.path, init.func, init.args) {
                            Ok(ctx) => Running {
                                ctx,
                                sched: run.sched,
                                blocked: false,
                                bulk: false,
                            },
                            Err(f) => {
                                m.fault(f);
                                return;
                            }
                        },
                        None => self.suspended.remove(&run.tid).expect("resumed task is suspended"),
                    };
                    let ctx = &running.ctx;
                    m.audit_start(ctx.tid, &ctx.path, &ctx.args.clone());
                    self.running = Some(running);
                }
                Some(_) => {
                    self.sleep = Sleep::FetchStall;
                    break;
                }
                None => {
                    self.sleep = Sleep::Idle;
                    break;
                }
            }
        }
        self.busy_until = t;
        self.acct_at = t;
    }

    fn on_msg(&mut self, msg: Msg) {
        match msg {
            Msg::Dispatch {
                tid,
                sched,
                init,
                fetch,
            } => self.queue.push_back(Run {
                tid,
                sched,
                init: Some(init),
                fetch,
                state: Fetch::Pending,
            }),
            Msg::Resume { tid, fetch } => {
                let sched = self.suspended[&tid].sched;
                self.queue.push_front(Run {
                    tid,
                    sched,
                    init: None,
                    fetch,
                    state: Fetch::Pending,
                });
            }
            Msg::MemReply { result, .. } => {
                let r = self.running.as_mut().expect("memory reply with no running task");
                debug_assert!(r.blocked);
                r.blocked = false;
                let hv = if r.bulk {
                    HandleVal::Many(result)
                } else {
                    HandleVal::One(result[0])
                };
                r.bulk = false;
                r.ctx.complete(hv);
            }
            other => unreachable!("worker received {}", other.kind()),
        }
    }
}
