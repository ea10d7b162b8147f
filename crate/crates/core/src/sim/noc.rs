//! Message and DMA primitives between cores.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ids::{Addr, CoreId};

/// One fixed-size NoC message. Runtime messages longer than the configured
/// size travel as several fragments; only the last carries the decoded body.
#[derive(Debug, Clone)]
pub struct NocMessage<P> {
    pub src: CoreId,
    pub dst: CoreId,
    pub kind: &'static str,
    /// Bytes of payload carried by this fragment (at most the message size).
    pub payload_len: usize,
    pub seq: u64,
    pub frag: u16,
    pub frags: u16,
    pub body: Option<P>,
}

impl<P> NocMessage<P> {
    pub fn is_last(&self) -> bool {
        self.frag + 1 == self.frags
    }
}

/// Sender-side view of the receiver's buffer for one directed peer link.
#[derive(Debug)]
pub struct PeerBuffer<P> {
    pub capacity: u32,
    pub credits_available: u32,
    /// Messages held locally while no credit is available, with the
    /// earliest cycle they may leave.
    pub queued: VecDeque<(u64, NocMessage<P>)>,
    /// Delivery time of the latest fragment; keeps the link FIFO under jitter.
    pub(crate) last_arrival: u64,
    pub(crate) consumed: u64,
    pub(crate) returned: u64,
}

impl<P> PeerBuffer<P> {
    pub fn new(capacity: u32) -> Self {
        PeerBuffer {
            capacity,
            credits_available: capacity,
            queued: VecDeque::new(),
            last_arrival: 0,
            consumed: 0,
            returned: 0,
        }
    }

    /// Messages occupying receiver slots (in flight or not yet processed).
    pub fn in_flight(&self) -> u64 {
        self.consumed - self.returned
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferStatus {
    Pending,
    Failed,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaTransfer {
    pub src_core: CoreId,
    pub dst_core: CoreId,
    pub src: Addr,
    pub dst: Addr,
    pub size: u64,
}

/// A batch of transfers that completes as a unit.
#[derive(Debug, Clone)]
pub struct DmaGroup {
    pub group_id: u64,
    pub transfers: Vec<DmaTransfer>,
    pub status: Vec<TransferStatus>,
    pub attempts: Vec<u32>,
    pub completion_target: CoreId,
    /// Opaque value handed back on completion.
    pub tag: u64,
    pub issued_at: u64,
    pub done_at: Vec<u64>,
}

impl DmaGroup {
    pub fn is_complete(&self) -> bool {
        self.status.iter().all(|s| *s == TransferStatus::Done)
    }

    pub fn bytes(&self) -> u64 {
        self.transfers.iter().map(|t| t.size).sum()
    }
}

/// Per-core traffic counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreTraffic {
    pub msgs_sent: u64,
    pub msg_bytes_sent: u64,
    pub msgs_recv: u64,
    pub msg_bytes_recv: u64,
    pub dma_bytes_in: u64,
    pub dma_bytes_out: u64,
    pub credit_stalls: u64,
}
