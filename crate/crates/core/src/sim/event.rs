use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::ids::CoreId;

/// A scheduled event. Events dequeue in `(fire_at, seq)` order; `seq` is
/// assigned from a global counter at scheduling time, so the order is total.
#[derive(Debug, Clone)]
pub struct SimEvent<B> {
    pub fire_at: u64,
    pub seq: u64,
    pub target: CoreId,
    pub body: B,
}

impl<B> PartialEq for SimEvent<B> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<B> Eq for SimEvent<B> {}

impl<B> PartialOrd for SimEvent<B> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<B> Ord for SimEvent<B> {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Debug)]
pub struct EventQueue<B> {
    heap: BinaryHeap<SimEvent<B>>,
    next_seq: u64,
}

impl<B> Default for EventQueue<B> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<B> EventQueue<B> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, fire_at: u64, target: CoreId, body: B) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent {
            fire_at,
            seq,
            target,
            body,
        });
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent<B>> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.fire_at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimEvent<B>> {
        self.heap.iter()
    }
}
