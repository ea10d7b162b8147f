//! Deterministic discrete-event engine and NoC model.
//!
//! The engine owns the event queue, the per-link credit state, the DMA
//! groups in progress and the trace. Higher layers pull [`Step`]s out of it
//! with [`Engine::next_step`] and push new work back in with
//! [`Engine::send_at`], [`Engine::issue_dma`] and [`Engine::timer`].

pub mod event;
pub mod latency;
pub mod noc;
pub mod topology;
pub mod trace;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::ids::CoreId;
pub use event::{EventQueue, SimEvent};
pub use latency::{LatencyModel, NocConfig};
pub use noc::{CoreTraffic, DmaGroup, DmaTransfer, NocMessage, PeerBuffer, TransferStatus};
pub use topology::{build_topology, hop_distance, Coord3D, CoreNode, Role, SpeedClass, Topology, TopologyConfig};
pub use trace::Trace;

#[derive(Debug)]
enum Body<P> {
    Fragment(NocMessage<P>),
    CreditReturn { sender: CoreId, receiver: CoreId },
    DmaAttempt { group: u64, idx: usize },
    DmaGroupDone { group: u64 },
    Timer(u64),
}

/// Something the layer above must react to.
#[derive(Debug)]
pub enum Step<P> {
    /// The last fragment of a message reached `msg.dst`. The receiver must
    /// call [`Engine::release`] once it has processed it.
    Message(NocMessage<P>),
    DmaDone {
        target: CoreId,
        group: u64,
        tag: u64,
        bytes: u64,
    },
    Timer {
        target: CoreId,
        tag: u64,
    },
}

/// Fault-injection hook for DMA transfers.
#[derive(Debug, Default, Clone)]
pub struct DmaFaults {
    /// `(group id, transfer index)` pairs whose next attempt fails once.
    pub fail_once: HashSet<(u64, usize)>,
    /// Probability that any attempt fails (simulated full destination queue).
    pub fail_rate: f64,
}

pub struct Engine<P> {
    pub topo: Topology,
    pub latency: LatencyModel,
    pub noc_cfg: NocConfig,
    queue: EventQueue<Body<P>>,
    links: BTreeMap<(CoreId, CoreId), PeerBuffer<P>>,
    groups: BTreeMap<u64, DmaGroup>,
    next_group: u64,
    next_msg_seq: u64,
    pub faults: DmaFaults,
    pub traffic: Vec<CoreTraffic>,
    pub trace: Trace,
    rng: ChaCha8Rng,
    now: u64,
    pub budget: u64,
    pub dma_retries: u64,
}

impl<P: std::fmt::Debug> Engine<P> {
    pub fn new(topo: Topology, latency: LatencyModel, noc_cfg: NocConfig, seed: u64, budget: u64) -> Self {
        let n = topo.len();
        Engine {
            topo,
            latency,
            noc_cfg,
            queue: EventQueue::new(),
            links: BTreeMap::new(),
            groups: BTreeMap::new(),
            next_group: 0,
            next_msg_seq: 0,
            faults: DmaFaults::default(),
            traffic: vec![CoreTraffic::default(); n],
            trace: Trace::new(false, false),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            budget,
            dma_retries: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn timer(&mut self, at: u64, target: CoreId, tag: u64) {
        self.queue.schedule(at.max(self.now), target, Body::Timer(tag));
    }

    /// Queue a runtime message of `len` bytes from `src` to `dst`, leaving no
    /// earlier than `depart`. Panics if the cores are not hierarchy peers.
    pub fn send_at(&mut self, depart: u64, src: CoreId, dst: CoreId, kind: &'static str, len: usize, body: P) {
        assert!(
            self.topo.is_peer(src, dst),
            "protocol violation: {src} -> {dst} are not peers ({kind})"
        );
        let size = self.noc_cfg.msg_size.max(1);
        let frags = len.div_ceil(size).max(1);
        assert!(frags <= u16::MAX as usize, "message of {len} bytes is too long");
        let depart = depart.max(self.now);
        let cap = self.noc_cfg.buffer_slots;
        let link = self.links.entry((src, dst)).or_insert_with(|| PeerBuffer::new(cap));
        let mut body = Some(body);
        for f in 0..frags {
            let payload_len = if f + 1 == frags { len - f * size } else { size };
            let seq = self.next_msg_seq;
            self.next_msg_seq += 1;
            link.queued.push_back((
                depart,
                NocMessage {
                    src,
                    dst,
                    kind,
                    payload_len,
                    seq,
                    frag: f as u16,
                    frags: frags as u16,
                    body: if f + 1 == frags { body.take() } else { None },
                },
            ));
        }
        let t = &mut self.traffic[src.index()];
        t.msgs_sent += frags as u64;
        t.msg_bytes_sent += (frags * size) as u64;
        self.pump(src, dst);
    }

    fn pump(&mut self, src: CoreId, dst: CoreId) {
        let hops = self.topo.hops(src, dst);
        let base = self.latency.message_latency(hops);
        let jitter_max = self.noc_cfg.jitter_cycles;
        let now = self.now;
        let link = self.links.get_mut(&(src, dst)).expect("link exists");
        if link.credits_available == 0 && !link.queued.is_empty() {
            self.traffic[src.index()].credit_stalls += 1;
        }
        while link.credits_available > 0 {
            let Some((ready, msg)) = link.queued.pop_front() else {
                break;
            };
            link.credits_available -= 1;
            link.consumed += 1;
            let jitter = if jitter_max > 0 {
                self.rng.gen_range(0..=jitter_max)
            } else {
                0
            };
            let arrive = (ready.max(now) + base + jitter).max(link.last_arrival);
            link.last_arrival = arrive;
            self.queue.schedule(arrive, dst, Body::Fragment(msg));
        }
    }

    /// Return the buffer slot of a processed message to its sender.
    pub fn release(&mut self, at: u64, msg_src: CoreId, msg_dst: CoreId) {
        let back = self.latency.message_latency(self.topo.hops(msg_src, msg_dst));
        self.queue.schedule(
            at.max(self.now) + back,
            msg_src,
            Body::CreditReturn {
                sender: msg_src,
                receiver: msg_dst,
            },
        );
    }

    /// Start a DMA group at cycle `at`; completion is reported as
    /// [`Step::DmaDone`] to `target`. Failed transfers are retried.
    pub fn issue_dma(&mut self, at: u64, target: CoreId, tag: u64, transfers: Vec<DmaTransfer>) -> u64 {
        let id = self.next_group;
        self.next_group += 1;
        let at = at.max(self.now);
        let n = transfers.len();
        for (idx, t) in transfers.iter().enumerate() {
            let lat = self.latency.dma_latency(t.size, self.topo.hops(t.src_core, t.dst_core));
            self.queue
                .schedule(at + lat, t.dst_core, Body::DmaAttempt { group: id, idx });
        }
        if n == 0 {
            self.queue.schedule(at, target, Body::DmaGroupDone { group: id });
        }
        self.groups.insert(
            id,
            DmaGroup {
                group_id: id,
                transfers,
                status: vec![TransferStatus::Pending; n],
                attempts: vec![1; n],
                completion_target: target,
                tag,
                issued_at: at,
                done_at: vec![0; n],
            },
        );
        id
    }

    pub fn group(&self, id: u64) -> Option<&DmaGroup> {
        self.groups.get(&id)
    }

    /// Advance to the next externally visible step, handling credit returns,
    /// non-final fragments and DMA attempts internally.
    pub fn next_step(&mut self) -> Result<Option<Step<P>>, SimError> {
        loop {
            let Some(ev) = self.queue.pop() else { return Ok(None) };
            if ev.fire_at > self.budget {
                let at = ev.fire_at;
                self.queue.schedule(at, ev.target, ev.body);
                let dump = self.pending_dump();
                self.now = at;
                return Err(SimError::Deadlock {
                    budget: self.budget,
                    now: at,
                    dump,
                });
            }
            self.now = ev.fire_at;
            match ev.body {
                Body::Fragment(msg) => {
                    let size = self.noc_cfg.msg_size as u64;
                    let t = &mut self.traffic[msg.dst.index()];
                    t.msgs_recv += 1;
                    t.msg_bytes_recv += size;
                    if msg.is_last() {
                        self.trace.record(
                            self.now,
                            msg.dst,
                            "msg",
                            format_args!("{} from={} seq={} frags={}", msg.kind, msg.src, msg.seq, msg.frags),
                        );
                        return Ok(Some(Step::Message(msg)));
                    }
                    // Intermediate fragments are copied out of the slot at once.
                    self.release(self.now, msg.src, msg.dst);
                }
                Body::CreditReturn { sender, receiver } => {
                    let link = self
                        .links
                        .get_mut(&(sender, receiver))
                        .expect("credit for unknown link");
                    link.credits_available += 1;
                    link.returned += 1;
                    debug_assert!(link.credits_available <= link.capacity);
                    self.pump(sender, receiver);
                }
                Body::DmaAttempt { group, idx } => {
                    let fail = self.faults.fail_once.remove(&(group, idx))
                        || (self.faults.fail_rate > 0.0 && self.rng.gen_bool(self.faults.fail_rate.min(1.0)));
                    let g = self.groups.get_mut(&group).expect("unknown dma group");
                    let t = g.transfers[idx].clone();
                    if fail {
                        g.status[idx] = TransferStatus::Failed;
                        g.attempts[idx] += 1;
                        self.dma_retries += 1;
                        let lat = self.latency.dma_latency(t.size, self.topo.hops(t.src_core, t.dst_core));
                        self.trace
                            .record(self.now, t.dst_core, "dma-retry", format_args!("g={group} i={idx}"));
                        self.queue
                            .schedule(self.now + lat, t.dst_core, Body::DmaAttempt { group, idx });
                        continue;
                    }
                    g.status[idx] = TransferStatus::Done;
                    g.done_at[idx] = self.now;
                    self.traffic[t.src_core.index()].dma_bytes_out += t.size;
                    self.traffic[t.dst_core.index()].dma_bytes_in += t.size;
                    if g.is_complete() {
                        let target = g.completion_target;
                        self.queue.schedule(self.now, target, Body::DmaGroupDone { group });
                    }
                }
                Body::DmaGroupDone { group } => {
                    let g = self.groups.remove(&group).expect("unknown dma group");
                    self.trace.record(
                        self.now,
                        g.completion_target,
                        "dma-done",
                        format_args!("g={group} n={} bytes={}", g.transfers.len(), g.bytes()),
                    );
                    return Ok(Some(Step::DmaDone {
                        target: g.completion_target,
                        group,
                        tag: g.tag,
                        bytes: g.bytes(),
                    }));
                }
                Body::Timer(tag) => return Ok(Some(Step::Timer { target: ev.target, tag })),
            }
        }
    }

    /// Drive the engine until the queue drains, passing each step to
    /// `handler`. Returns the final cycle.
    pub fn run<F>(&mut self, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, Step<P>),
    {
        while let Some(step) = self.next_step()? {
            handler(self, step);
        }
        Ok(self.now)
    }

    /// Per-core summary of everything still queued, for deadlock reports.
    pub fn pending_dump(&self) -> String {
        let mut per_core: BTreeMap<CoreId, Vec<String>> = BTreeMap::new();
        for ev in self.queue.iter() {
            let what = match &ev.body {
                Body::Fragment(m) => format!("@{} msg {} from {}", ev.fire_at, m.kind, m.src),
                Body::CreditReturn { receiver, .. } => format!("@{} credit from {receiver}", ev.fire_at),
                Body::DmaAttempt { group, idx } => format!("@{} dma g{group}#{idx}", ev.fire_at),
                Body::DmaGroupDone { group } => format!("@{} dma-done g{group}", ev.fire_at),
                Body::Timer(t) => format!("@{} timer {t}", ev.fire_at),
            };
            per_core.entry(ev.target).or_default().push(what);
        }
        for ((s, d), l) in &self.links {
            if !l.queued.is_empty() {
                per_core.entry(*s).or_default().push(format!(
                    "{} msgs held for {d} (credits {})",
                    l.queued.len(),
                    l.credits_available
                ));
            }
        }
        let mut out = String::new();
        for (c, items) in per_core {
            let _ = writeln!(out, "  {c}: {} pending", items.len());
            for it in items.iter().take(8) {
                let _ = writeln!(out, "    {it}");
            }
        }
        out
    }

    /// Check credit conservation on every link. Returns a description of
    /// the first violation.
    pub fn check_credits(&self) -> Result<(), String> {
        for ((s, d), l) in &self.links {
            let inflight = l.in_flight();
            if u64::from(l.credits_available) + inflight != u64::from(l.capacity) {
                return Err(format!(
                    "link {s}->{d}: credits {} + in flight {inflight} != capacity {}",
                    l.credits_available, l.capacity
                ));
            }
        }
        Ok(())
    }

    pub fn link(&self, src: CoreId, dst: CoreId) -> Option<&PeerBuffer<P>> {
        self.links.get(&(src, dst))
    }

    /// Total message bytes sent and received across all cores.
    pub fn byte_totals(&self) -> (u64, u64) {
        self.traffic
            .iter()
            .fold((0, 0), |(s, r), t| (s + t.msg_bytes_sent, r + t.msg_bytes_recv))
    }
}
