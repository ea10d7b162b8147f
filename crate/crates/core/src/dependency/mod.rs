//! Hierarchical dependency analysis.
//!
//! Every region and object has a [`DepState`] holding a queue of task
//! entries sorted by serial order, per-child edge counters and the
//! cumulative count of requests received from its parent. A task argument
//! is enqueued by a [`Traversal`] that starts at the parent task's argument
//! (the anchor) and walks down to the target, parking wherever an earlier
//! conflicting entry sits. When a subtree drains, its root reports its
//! cumulative receive counts upward and the parent applies the report only
//! if they match what it sent on that edge.

pub mod flags;
pub mod state;

pub use flags::{ArgFlags, Mode};
pub use state::{DepOut, DepState, DepStats, Edge, Entry, EntryKind, Traversal};

use std::fmt::Write as _;

use crate::ids::NodeId;

/// DOT edges and labels describing one node's queue and busy child edges.
pub fn dot_node(out: &mut String, node: NodeId, st: &DepState) {
    let q: Vec<String> = st
        .queue
        .iter()
        .map(|e| {
            let state = match &e.kind {
                EntryKind::Terminal { granted: true } => "run",
                EntryKind::Terminal { granted: false } => "wait",
                EntryKind::Parked { .. } => "park",
            };
            format!("{}:{:?}:{state}", e.key, e.mode)
        })
        .collect();
    let _ = writeln!(
        out,
        "  \"{node}\" [label=\"{node}\\nrw={} ro={}\\n{}\"];",
        st.child_rw(),
        st.child_ro(),
        q.join("\\n")
    );
    for (child, e) in &st.edges {
        if e.busy_rw() || e.busy_ro() {
            let _ = writeln!(
                out,
                "  \"{node}\" -> \"{child}\" [label=\"rw {}/{} ro {}/{}\"];",
                e.acked_rw, e.sent_rw, e.acked_ro, e.sent_ro
            );
        }
    }
}

#[cfg(test)]
mod tests;
