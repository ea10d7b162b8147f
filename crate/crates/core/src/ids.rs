//! Identifier newtypes shared by every layer.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense core identifier; index into the topology's core table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoreId(pub u32);

impl CoreId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Region identifier. `0` is the root region, which always exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u64);

impl RegionId {
    pub const ROOT: RegionId = RegionId(0);

    pub fn is_root(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Global address of an object's first byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Addr(pub u64);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Placement-independent object identity.
///
/// Addresses differ between the serial oracle and the simulated runtime, so
/// lineage is keyed by the creating task and its allocation ordinal instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjKey(pub u64);

impl fmt::Display for ObjKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{:016x}", self.0)
    }
}

/// A node of the region tree: either a region or an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Region(RegionId),
    Object(ObjKey),
}

impl NodeId {
    pub fn is_region(self) -> bool {
        matches!(self, NodeId::Region(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Region(r) => write!(f, "{r}"),
            NodeId::Object(k) => write!(f, "o{k}"),
        }
    }
}

/// Position of a task in the spawn tree: the sequence of spawn ordinals
/// from the root task. Lexicographic order with prefixes first is exactly
/// the depth-first serial execution order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct TaskPath(pub Vec<u32>);

impl TaskPath {
    pub fn root() -> Self {
        TaskPath(Vec::new())
    }

    pub fn child(&self, seq: u32) -> Self {
        let mut v = self.0.clone();
        v.push(seq);
        TaskPath(v)
    }

    /// True if `self` is a strict ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &TaskPath) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }

    pub fn id(&self) -> TaskId {
        let mut h = 0x9e37_79b9_7f4a_7c15u64;
        for &s in &self.0 {
            h = mix64(h ^ u64::from(s).wrapping_add(0x51));
        }
        TaskId(mix64(h ^ self.0.len() as u64))
    }
}

impl fmt::Display for TaskPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t")?;
        for s in &self.0 {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}

/// Stable task identifier derived from the spawn path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{:x}", self.0 & 0xffff_ffff)
    }
}

/// SplitMix64 finalizer; used for stable, platform-independent hashing of
/// ids and checksum lineage.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_order_puts_ancestors_first() {
        let p = TaskPath(vec![1]);
        let c = p.child(0);
        let sib = TaskPath(vec![2]);
        assert!(p < c);
        assert!(c < sib);
        assert!(p.is_ancestor_of(&c));
        assert!(!c.is_ancestor_of(&p));
        assert!(!p.is_ancestor_of(&p));
        assert!(!p.is_ancestor_of(&sib));
    }

    #[test]
    fn task_ids_distinguish_paths() {
        let a = TaskPath(vec![0, 1]).id();
        let b = TaskPath(vec![1, 0]).id();
        let c = TaskPath(vec![0, 1]).id();
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_ne!(TaskPath::root().id(), TaskPath(vec![0]).id());
    }
}
