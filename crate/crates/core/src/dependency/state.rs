//! Per-node dependency state and the operations a node's owner applies to
//! it. Nothing here sends messages: every operation appends [`DepOut`]
//! records that the runtime turns into messages or local calls.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{CoreId, NodeId, TaskId, TaskPath};

use super::flags::Mode;

/// A task argument travelling down the region tree toward its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traversal {
    pub key: TaskPath,
    pub tid: TaskId,
    pub arg: u16,
    pub mode: Mode,
    /// Scheduler told when the traversal is granted at its target.
    pub notify: CoreId,
    /// Nodes still to visit below the current one; the last is the target.
    pub rest: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryKind {
    /// Waiting for (or holding) access to this node itself.
    Terminal { granted: bool },
    /// Suspended on the way to a deeper target.
    Parked { rest: Vec<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: TaskPath,
    pub tid: TaskId,
    pub arg: u16,
    pub mode: Mode,
    pub notify: CoreId,
    pub kind: EntryKind,
}

impl Entry {
    pub fn is_granted(&self) -> bool {
        matches!(self.kind, EntryKind::Terminal { granted: true })
    }
}

/// Enqueue requests sent down one child edge and the part of them the
/// child has reported back as drained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Edge {
    pub sent_rw: u64,
    pub sent_ro: u64,
    pub acked_rw: u64,
    pub acked_ro: u64,
}

impl Edge {
    pub fn busy_rw(&self) -> bool {
        self.sent_rw > self.acked_rw
    }

    pub fn busy_ro(&self) -> bool {
        self.sent_ro > self.acked_ro
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DepOut {
    /// Continue `trav` at child node `to` (owned by `to`'s scheduler).
    Forward { from: NodeId, to: NodeId, trav: Traversal },
    /// A terminal entry reached the head: argument `arg` of `tid` is ready.
    Ready {
        node: NodeId,
        tid: TaskId,
        key: TaskPath,
        arg: u16,
        notify: CoreId,
    },
    /// `child`'s subtree drained; `rw`/`ro` are its cumulative receive
    /// counts, for reconciliation at `parent`.
    Drained {
        parent: NodeId,
        child: NodeId,
        rw: u64,
        ro: u64,
    },
}

/// Counters of protocol events, for audits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepStats {
    pub drains_sent: u64,
    pub drains_applied: u64,
    pub drains_dropped: u64,
    pub parks: u64,
    /// Entries inserted ahead of an already granted conflicting entry.
    /// Always zero when the ordering discipline holds.
    pub inversions: u64,
}

#[derive(Debug, Clone, Default)]
pub struct DepState {
    pub queue: Vec<Entry>,
    pub edges: BTreeMap<NodeId, Edge>,
    /// Children with unreconciled read-write / read-only requests.
    child_rw: u32,
    child_ro: u32,
    /// Cumulative enqueue requests received from the parent node.
    pub recv_rw: u64,
    pub recv_ro: u64,
    reported: (u64, u64),
}

impl DepState {
    pub fn child_rw(&self) -> u32 {
        self.child_rw
    }

    pub fn child_ro(&self) -> u32 {
        self.child_ro
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty() && self.child_rw == 0 && self.child_ro == 0
    }

    /// True once every request received from the parent has been reported.
    pub fn fully_reported(&self) -> bool {
        self.reported == (self.recv_rw, self.recv_ro)
    }

    /// Forget the parent relationship (the node was moved to a new parent).
    pub fn reset_parent_counters(&mut self) {
        debug_assert!(self.is_quiescent() && self.fully_reported());
        self.recv_rw = 0;
        self.recv_ro = 0;
        self.reported = (0, 0);
    }

    /// Recount busy children from the edge table; must match the cached
    /// counters.
    pub fn recount(&self) -> (u32, u32) {
        let rw = self.edges.values().filter(|e| e.busy_rw()).count() as u32;
        let ro = self.edges.values().filter(|e| e.busy_ro()).count() as u32;
        (rw, ro)
    }

    fn insert_pos(&self, key: &TaskPath) -> usize {
        self.queue.partition_point(|e| e.key <= *key)
    }

    /// True if some entry before `pos` prevents an entry (`key`, `mode`)
    /// from proceeding. A reader may only pass unrelated readers that are
    /// already granted: one still waiting here could otherwise be starved
    /// by the later reader's presence below.
    fn blocked_before(&self, pos: usize, key: &TaskPath, mode: Mode) -> bool {
        self.queue[..pos]
            .iter()
            .any(|e| !e.key.is_ancestor_of(key) && (e.mode.conflicts(mode) || !e.is_granted()))
    }

    fn send_down(&mut self, from: NodeId, mut trav: Traversal, out: &mut Vec<DepOut>) {
        let to = trav.rest.remove(0);
        let edge = self.edges.entry(to).or_default();
        match trav.mode {
            Mode::Rw => {
                if !edge.busy_rw() {
                    self.child_rw += 1;
                }
                edge.sent_rw += 1;
            }
            Mode::Ro => {
                if !edge.busy_ro() {
                    self.child_ro += 1;
                }
                edge.sent_ro += 1;
            }
        }
        out.push(DepOut::Forward { from, to, trav });
    }

    /// A traversal reaches this node, either from the parent node or
    /// launched locally at the anchor.
    pub fn arrive(
        &mut self,
        node: NodeId,
        parent: Option<NodeId>,
        trav: Traversal,
        from_parent: bool,
        stats: &mut DepStats,
        out: &mut Vec<DepOut>,
    ) {
        if from_parent {
            match trav.mode {
                Mode::Rw => self.recv_rw += 1,
                Mode::Ro => self.recv_ro += 1,
            }
        }
        let pos = self.insert_pos(&trav.key);
        let blocked = self.blocked_before(pos, &trav.key, trav.mode);
        if self.queue[pos..]
            .iter()
            .any(|e| e.is_granted() && e.mode.conflicts(trav.mode) && !trav.key.is_ancestor_of(&e.key))
        {
            stats.inversions += 1;
        }
        if trav.rest.is_empty() {
            self.queue.insert(
                pos,
                Entry {
                    key: trav.key,
                    tid: trav.tid,
                    arg: trav.arg,
                    mode: trav.mode,
                    notify: trav.notify,
                    kind: EntryKind::Terminal { granted: false },
                },
            );
            self.evaluate(node, out);
        } else if blocked {
            stats.parks += 1;
            self.queue.insert(
                pos,
                Entry {
                    key: trav.key,
                    tid: trav.tid,
                    arg: trav.arg,
                    mode: trav.mode,
                    notify: trav.notify,
                    kind: EntryKind::Parked { rest: trav.rest },
                },
            );
        } else {
            self.send_down(node, trav, out);
        }
        self.check_drain(node, parent, stats, out);
    }

    /// Remove the terminal entry of task `key`. Returns false if absent.
    pub fn pop(
        &mut self,
        node: NodeId,
        parent: Option<NodeId>,
        key: &TaskPath,
        stats: &mut DepStats,
        out: &mut Vec<DepOut>,
    ) -> bool {
        let Some(i) = self
            .queue
            .iter()
            .position(|e| e.key == *key && matches!(e.kind, EntryKind::Terminal { .. }))
        else {
            return false;
        };
        self.queue.remove(i);
        self.evaluate(node, out);
        self.check_drain(node, parent, stats, out);
        true
    }

    /// A child reported its subtree drained. Applied only when the
    /// reported counts match what this node sent; otherwise a request is
    /// still in flight and the child will report again.
    #[allow(clippy::too_many_arguments)]
    pub fn on_drained(
        &mut self,
        node: NodeId,
        parent: Option<NodeId>,
        child: NodeId,
        rw: u64,
        ro: u64,
        stats: &mut DepStats,
        out: &mut Vec<DepOut>,
    ) {
        let Some(edge) = self.edges.get_mut(&child) else {
            stats.drains_dropped += 1;
            return;
        };
        if edge.sent_rw != rw || edge.sent_ro != ro {
            stats.drains_dropped += 1;
            return;
        }
        if edge.busy_rw() {
            self.child_rw -= 1;
        }
        if edge.busy_ro() {
            self.child_ro -= 1;
        }
        edge.acked_rw = rw;
        edge.acked_ro = ro;
        stats.drains_applied += 1;
        self.evaluate(node, out);
        self.check_drain(node, parent, stats, out);
    }

    /// Grant terminal entries and resume parked traversals that the queue
    /// order now allows.
    ///
    /// An entry may proceed when every entry ahead of it is one of its
    /// ancestors or, if it is read-only, a granted read-only entry. Entries ahead
    /// are tracked only while they still form an ancestor chain; once two
    /// unrelated read-write entries are seen nothing later can proceed.
    fn evaluate(&mut self, node: NodeId, out: &mut Vec<DepOut>) {
        'scan: loop {
            let mut chain: Option<Vec<usize>> = Some(Vec::new());
            let mut rw_chain: Vec<usize> = Vec::new();
            let mut pending: Vec<usize> = Vec::new();
            for i in 0..self.queue.len() {
                let e = &self.queue[i];
                let below = |set: &[usize]| set.iter().all(|&j| self.queue[j].key.is_ancestor_of(&e.key));
                let eligible = match e.mode {
                    Mode::Rw => chain.as_deref().is_some_and(below),
                    Mode::Ro => below(&rw_chain) && below(&pending),
                };
                if eligible {
                    match &e.kind {
                        EntryKind::Terminal { granted: true } => {}
                        EntryKind::Terminal { granted: false } => {
                            let ok = match e.mode {
                                Mode::Rw => self.child_rw == 0 && self.child_ro == 0,
                                Mode::Ro => self.child_rw == 0,
                            };
                            if ok {
                                let (tid, key, arg, notify) = (e.tid, e.key.clone(), e.arg, e.notify);
                                self.queue[i].kind = EntryKind::Terminal { granted: true };
                                out.push(DepOut::Ready {
                                    node,
                                    tid,
                                    key,
                                    arg,
                                    notify,
                                });
                            }
                        }
                        EntryKind::Parked { .. } => {
                            let e = self.queue.remove(i);
                            let EntryKind::Parked { rest } = e.kind else {
                                unreachable!()
                            };
                            let trav = Traversal {
                                key: e.key,
                                tid: e.tid,
                                arg: e.arg,
                                mode: e.mode,
                                notify: e.notify,
                                rest,
                            };
                            self.send_down(node, trav, out);
                            continue 'scan;
                        }
                    }
                }
                let e = &self.queue[i];
                if !e.is_granted() {
                    pending.push(i);
                }
                let related = |set: &[usize]| {
                    set.iter().all(|&j| {
                        let k = &self.queue[j].key;
                        k.is_ancestor_of(&e.key) || e.key.is_ancestor_of(k) || *k == e.key
                    })
                };
                if chain.as_deref().is_some_and(|c| !related(c)) {
                    chain = None;
                }
                if let Some(c) = chain.as_mut() {
                    c.push(i);
                }
                if e.mode == Mode::Rw {
                    if !related(&rw_chain) {
                        break;
                    }
                    rw_chain.push(i);
                }
            }
            break;
        }
    }

    fn check_drain(&mut self, node: NodeId, parent: Option<NodeId>, stats: &mut DepStats, out: &mut Vec<DepOut>) {
        if !self.is_quiescent() || self.fully_reported() {
            return;
        }
        let Some(parent) = parent else { return };
        self.reported = (self.recv_rw, self.recv_ro);
        stats.drains_sent += 1;
        out.push(DepOut::Drained {
            parent,
            child: node,
            rw: self.recv_rw,
            ro: self.recv_ro,
        });
    }
}
