//! End-of-run conservation and protocol checks.

use super::machine::Machine;

pub(super) fn final_audits(m: &mut Machine, makespan: u64) {
    // Dependency state: everything drained and every edge reconciled.
    let mut bad = Vec::new();
    for (n, d) in &m.deps {
        if !d.is_quiescent() {
            bad.push(format!("{n} not quiescent"));
        }
        if d.recount() != (d.child_rw(), d.child_ro()) {
            bad.push(format!("{n} child counters disagree with its edges"));
        }
        for (c, e) in &d.edges {
            if e.busy_rw() || e.busy_ro() {
                bad.push(format!("edge {n}->{c} unreconciled"));
            }
        }
    }
    let nodes = m.deps.len() as u64;
    *m.audits.entry("dep_nodes").or_default() += nodes;
    if m.dep_stats.inversions > 0 {
        bad.push(format!("{} queue-order inversions", m.dep_stats.inversions));
    }
    if !m.active.is_empty() {
        bad.push(format!("{} tasks still marked active", m.active.len()));
    }
    for (id, s) in &m.scheds {
        if !s.idle() {
            bad.push(format!("{id} has leftover runtime state"));
        }
        if s.my_pages.len() as u64 != s.pages_held() {
            bad.push(format!("{id} page list disagrees with its pool"));
        }
    }
    for (id, w) in &m.workers {
        if !w.idle() {
            bad.push(format!("{id} has leftover work"));
        }
        if w.time.total() != makespan {
            bad.push(format!("{id} time partition {} != makespan {makespan}", w.time.total()));
        }
    }
    let held: u64 = m.scheds.values().map(|s| s.pages_held()).sum();
    if held + m.pages_in_flight != m.cfg.pages {
        bad.push(format!(
            "pages: {held} held + {} in flight != {}",
            m.pages_in_flight, m.cfg.pages
        ));
    }
    if let Err(e) = m.forest.audit_addresses() {
        bad.push(e);
    }
    let (sent, recv) = m.eng.byte_totals();
    if sent != recv {
        bad.push(format!("message bytes sent {sent} != received {recv}"));
    }
    if let Err(e) = m.eng.check_credits() {
        bad.push(e);
    }
    for b in bad {
        m.violation(b);
    }
    for a in [
        "dep_quiescence",
        "page_conservation",
        "address_disjointness",
        "time_partition",
        "byte_conservation",
    ] {
        *m.audits.entry(a).or_default() += 1;
    }
}
