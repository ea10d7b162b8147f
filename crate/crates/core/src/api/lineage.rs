//! Checksum lineage: each object carries a digest folded over the writes it
//! received, and each task records a digest of everything it read.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{mix64, ObjKey, TaskId};

pub type Digest = u64;

pub fn initial_digest(key: ObjKey) -> Digest {
    mix64(key.0 ^ 0x5eed_0b1e_c7ed_0000)
}

/// Per-task accumulator.
#[derive(Debug, Clone, Copy)]
pub struct TaskLineage {
    pub tid: TaskId,
    pub read_fp: Digest,
    pub writes: u32,
}

impl TaskLineage {
    pub fn new(tid: TaskId) -> Self {
        TaskLineage {
            tid,
            read_fp: mix64(tid.0),
            writes: 0,
        }
    }

    pub fn read(&mut self, current: Digest) {
        self.read_fp = mix64(self.read_fp ^ current);
    }

    /// Digest of an object after this task writes it. Depends on the value
    /// it overwrites, on the writer and on what the writer read so far.
    pub fn write(&mut self, current: Digest) -> Digest {
        self.writes += 1;
        let stamp = mix64(self.tid.0 ^ (u64::from(self.writes) << 40) ^ self.read_fp);
        mix64(current ^ stamp)
    }
}

/// Final state used to compare runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageReport {
    /// Every object ever allocated, live or freed, with its final digest.
    pub objects: BTreeMap<ObjKey, Digest>,
    /// Every task with the fingerprint of what it read.
    pub observations: BTreeMap<TaskId, Digest>,
}

impl LineageReport {
    /// Human-readable summary of the first few differences.
    pub fn diff(&self, other: &LineageReport) -> Vec<String> {
        let mut out = Vec::new();
        for (k, d) in &self.objects {
            match other.objects.get(k) {
                Some(e) if e == d => {}
                Some(e) => out.push(format!("object {k}: {d:016x} vs {e:016x}")),
                None => out.push(format!("object {k} missing on the right")),
            }
        }
        for k in other.objects.keys().filter(|k| !self.objects.contains_key(k)) {
            out.push(format!("object {k} missing on the left"));
        }
        for (t, d) in &self.observations {
            match other.observations.get(t) {
                Some(e) if e == d => {}
                Some(e) => out.push(format!("task {t} read {d:016x} vs {e:016x}")),
                None => out.push(format!("task {t} missing on the right")),
            }
        }
        if other.observations.len() != self.observations.len() {
            out.push(format!(
                "{} tasks vs {}",
                self.observations.len(),
                other.observations.len()
            ));
        }
        out.truncate(10);
        out
    }
}
