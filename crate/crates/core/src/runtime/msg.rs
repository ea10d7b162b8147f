//! Runtime messages exchanged between cores. Messages between non-peers
//! travel hop by hop inside an [`Envelope`].

use crate::api::Value;
use crate::dependency::{ArgFlags, Traversal};
use crate::ids::{Addr, CoreId, NodeId, ObjKey, RegionId, TaskId, TaskPath};
use crate::memory::pack::PACK_ENTRY_BYTES;
use crate::memory::{PackEntry, RegionHeap};

/// Everything a scheduler needs to create a task descriptor.
#[derive(Debug, Clone)]
pub struct TaskInit {
    pub tid: TaskId,
    pub path: TaskPath,
    pub func: usize,
    pub args: Vec<(Value, ArgFlags)>,
}

/// Memory operations, routed to the scheduler owning the region or page.
#[derive(Debug, Clone)]
pub enum MemOp {
    Alloc {
        region: RegionId,
        size: u64,
        keys: Vec<ObjKey>,
        bulk: bool,
    },
    Ralloc {
        parent: RegionId,
        level: u32,
    },
    Free {
        addr: Addr,
    },
    Rfree {
        region: RegionId,
    },
    Realloc {
        addr: Addr,
        size: u64,
        region: RegionId,
    },
    /// Second half of a realloc that changes owner.
    Insert {
        key: ObjKey,
        size: u64,
        producer: Option<CoreId>,
        region: RegionId,
    },
}

impl MemOp {
    pub fn route_key(&self) -> RouteKey {
        match *self {
            MemOp::Alloc { region, .. } | MemOp::Rfree { region } | MemOp::Insert { region, .. } => {
                RouteKey::Region(region)
            }
            MemOp::Ralloc { parent, .. } => RouteKey::Region(parent),
            MemOp::Free { addr } | MemOp::Realloc { addr, .. } => RouteKey::Addr(addr),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MemOp::Alloc { bulk: false, .. } => "alloc",
            MemOp::Alloc { bulk: true, .. } => "balloc",
            MemOp::Ralloc { .. } => "ralloc",
            MemOp::Free { .. } => "free",
            MemOp::Rfree { .. } => "rfree",
            MemOp::Realloc { .. } => "realloc",
            MemOp::Insert { .. } => "realloc-insert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteKey {
    Region(RegionId),
    Addr(Addr),
}

#[derive(Debug, Clone)]
pub enum Msg {
    /// Worker to the parent's responsible scheduler.
    Spawn {
        parent: TaskId,
        init: TaskInit,
    },
    Wait {
        task: TaskId,
        key: TaskPath,
        args: Vec<(Value, ArgFlags)>,
    },
    /// Create the descriptor at the scheduler it was delegated to.
    Create {
        init: TaskInit,
        parent_sched: CoreId,
    },
    /// Queue a traversal at its anchor; `target` is the argument node.
    Register {
        anchor: NodeId,
        target: NodeId,
        trav: Traversal,
    },
    Discover {
        anchor: NodeId,
        target: NodeId,
        ticket: u64,
        reply_to: CoreId,
    },
    Discovered {
        anchor: NodeId,
        ticket: u64,
        path: Vec<NodeId>,
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
    ArgReady {
        tid: TaskId,
        arg: u16,
    },
    PackReq {
        node: NodeId,
        ticket: u64,
        reply_to: CoreId,
    },
    PackReply {
        ticket: u64,
        entries: Vec<PackEntry>,
        remote: Vec<RegionId>,
    },
    /// Scheduling descends one level.
    Place {
        tid: TaskId,
        sched: CoreId,
        init: TaskInit,
        fetch: Vec<PackEntry>,
    },
    Dispatch {
        tid: TaskId,
        sched: CoreId,
        init: TaskInit,
        fetch: Vec<PackEntry>,
    },
    Chosen {
        tid: TaskId,
        worker: CoreId,
    },
    SetProducer {
        node: NodeId,
        worker: CoreId,
    },
    /// Worker to its leaf, then on to the responsible scheduler.
    Complete {
        tid: TaskId,
        sched: CoreId,
        worker: CoreId,
    },
    Resume {
        tid: TaskId,
        fetch: Vec<PackEntry>,
    },
    LoadReport {
        tasks: u64,
        regions: u64,
    },
    MemReq {
        worker: CoreId,
        op: MemOp,
    },
    MemReply {
        result: Vec<Value>,
        announce: Option<RegionId>,
    },
    RallocPlace {
        id: RegionId,
        parent: RegionId,
        depth: usize,
        level: u32,
        worker: CoreId,
    },
    /// Tear down a remote part of an rfree'd subtree; heaps travel along.
    RfreeDown {
        regions: Vec<(RegionId, RegionHeap)>,
    },
    RegionAnnounce {
        id: RegionId,
    },
    RegionRetire {
        ids: Vec<RegionId>,
    },
    PageReq {
        n: u64,
    },
    PageGrant {
        pages: Vec<u64>,
    },
}

const HDR: usize = 16;
const ARG: usize = 16;

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Spawn { .. } => "spawn",
            Msg::Wait { .. } => "wait",
            Msg::Create { .. } => "create",
            Msg::Register { .. } => "register",
            Msg::Discover { .. } => "discover",
            Msg::Discovered { .. } => "discovered",
            Msg::Arrive { .. } => "arrive",
            Msg::Drained { .. } => "drained",
            Msg::Pop { .. } => "pop",
            Msg::ArgReady { .. } => "arg-ready",
            Msg::PackReq { .. } => "pack-req",
            Msg::PackReply { .. } => "pack-reply",
            Msg::Place { .. } => "place",
            Msg::Dispatch { .. } => "dispatch",
            Msg::Chosen { .. } => "chosen",
            Msg::SetProducer { .. } => "set-producer",
            Msg::Complete { .. } => "complete",
            Msg::Resume { .. } => "resume",
            Msg::LoadReport { .. } => "load",
            Msg::MemReq { .. } => "mem-req",
            Msg::MemReply { .. } => "mem-reply",
            Msg::RallocPlace { .. } => "ralloc-place",
            Msg::RfreeDown { .. } => "rfree-down",
            Msg::RegionAnnounce { .. } => "region-announce",
            Msg::RegionRetire { .. } => "region-retire",
            Msg::PageReq { .. } => "page-req",
            Msg::PageGrant { .. } => "page-grant",
        }
    }

    /// Encoded length in bytes.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        let task = |i: &TaskInit| 24 + ARG * i.args.len();
        let fetch = |f: &[PackEntry]| PACK_ENTRY_BYTES * f.len();
        HDR + match self {
            Msg::Spawn { init, .. } | Msg::Create { init, .. } => task(init),
            Msg::Wait { args, .. } => 16 + ARG * args.len(),
            Msg::Register { trav, .. } | Msg::Arrive { trav, .. } => 32 + 8 * trav.rest.len(),
            Msg::Discovered { path, .. } => 16 + 8 * path.len(),
            Msg::PackReply { entries, remote, .. } => fetch(entries) + 8 * remote.len(),
            Msg::Place { init, fetch: f, .. } | Msg::Dispatch { init, fetch: f, .. } => task(init) + fetch(f),
            Msg::Resume { fetch: f, .. } => 8 + fetch(f),
            Msg::MemReq { op, .. } => match op {
                MemOp::Alloc { .. } => 24,
                _ => 16,
            },
            Msg::MemReply { result, .. } => 8 * result.len(),
            Msg::RfreeDown { regions } => 8 * regions.len(),
            Msg::RegionRetire { ids } => 8 * ids.len(),
            Msg::PageGrant { pages } => 8 * pages.len(),
            Msg::Discover { .. } | Msg::Drained { .. } | Msg::RallocPlace { .. } => 24,
            _ => 8,
        }
    }
}

/// A message addressed to `dst`, possibly several hops away.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub origin: CoreId,
    pub dst: CoreId,
    pub msg: Msg,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bulk_requests_are_one_message() {
        let keys: Vec<ObjKey> = (0..64).map(ObjKey).collect();
        let m = Msg::MemReq {
            worker: CoreId(3),
            op: MemOp::Alloc {
                region: RegionId(1),
                size: 128,
                keys,
                bulk: true,
            },
        };
        assert!(m.len() <= 64, "a bulk request fits one NoC message");
        let reply = Msg::MemReply {
            result: vec![Value::Scalar(0); 64],
            announce: None,
        };
        assert_eq!(reply.len(), 16 + 8 * 64);
    }
}
