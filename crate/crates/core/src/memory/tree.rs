//! The global region tree.
//!
//! Metadata for all regions and objects lives in one arena keyed by id, but
//! each entry is mutated only from the event handler of its owner scheduler.
//! Other cores learn about it through messages.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Fault;
use crate::ids::{Addr, CoreId, NodeId, ObjKey, RegionId};

use super::slab::{reserved_bytes, RegionHeap};

#[derive(Debug, Clone)]
pub struct RegionMeta {
    pub id: RegionId,
    pub parent: Option<RegionId>,
    pub children: BTreeSet<RegionId>,
    pub objects: BTreeSet<ObjKey>,
    pub owner: CoreId,
    pub level_hint: u32,
    pub heap: RegionHeap,
}

#[derive(Debug, Clone)]
pub struct ObjectMeta {
    pub key: ObjKey,
    pub addr: Addr,
    pub size: u64,
    pub region: RegionId,
    /// Worker that last held write access; `None` until first written.
    pub producer: Option<CoreId>,
}

#[derive(Debug, Clone)]
pub struct Forest {
    regions: BTreeMap<RegionId, RegionMeta>,
    objects: BTreeMap<ObjKey, ObjectMeta>,
    by_addr: BTreeMap<u64, ObjKey>,
}

impl Forest {
    pub fn new(root_owner: CoreId) -> Self {
        let mut regions = BTreeMap::new();
        regions.insert(
            RegionId::ROOT,
            RegionMeta {
                id: RegionId::ROOT,
                parent: None,
                children: BTreeSet::new(),
                objects: BTreeSet::new(),
                owner: root_owner,
                level_hint: 0,
                heap: RegionHeap::default(),
            },
        );
        Forest {
            regions,
            objects: BTreeMap::new(),
            by_addr: BTreeMap::new(),
        }
    }

    pub fn region(&self, id: RegionId) -> Option<&RegionMeta> {
        self.regions.get(&id)
    }

    pub fn region_mut(&mut self, id: RegionId) -> Option<&mut RegionMeta> {
        self.regions.get_mut(&id)
    }

    pub fn object(&self, key: ObjKey) -> Option<&ObjectMeta> {
        self.objects.get(&key)
    }

    pub fn object_mut(&mut self, key: ObjKey) -> Option<&mut ObjectMeta> {
        self.objects.get_mut(&key)
    }

    pub fn object_at(&self, addr: Addr) -> Option<&ObjectMeta> {
        self.by_addr.get(&addr.0).and_then(|k| self.objects.get(k))
    }

    pub fn regions(&self) -> impl Iterator<Item = &RegionMeta> {
        self.regions.values()
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectMeta> {
        self.objects.values()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn exists(&self, node: NodeId) -> bool {
        match node {
            NodeId::Region(r) => self.regions.contains_key(&r),
            NodeId::Object(k) => self.objects.contains_key(&k),
        }
    }

    pub fn add_region(&mut self, id: RegionId, parent: RegionId, owner: CoreId, level_hint: u32) -> Result<(), Fault> {
        assert!(
            !id.is_root() && !self.regions.contains_key(&id),
            "region id {id} reused"
        );
        let p = self.regions.get_mut(&parent).ok_or(Fault::UnknownRegion(parent))?;
        p.children.insert(id);
        self.regions.insert(
            id,
            RegionMeta {
                id,
                parent: Some(parent),
                children: BTreeSet::new(),
                objects: BTreeSet::new(),
                owner,
                level_hint,
                heap: RegionHeap::default(),
            },
        );
        Ok(())
    }

    /// Register an object whose slot was already carved from its region's
    /// heap. Panics if the range overlaps a live object.
    pub fn add_object(&mut self, meta: ObjectMeta) {
        let (lo, hi) = (meta.addr.0, meta.addr.0 + reserved_bytes(meta.size));
        if let Some((&a, k)) = self.by_addr.range(..hi).next_back() {
            let other = &self.objects[k];
            assert!(
                a + reserved_bytes(other.size) <= lo,
                "address overlap: {} and {}",
                meta.addr,
                other.addr
            );
        }
        self.regions
            .get_mut(&meta.region)
            .expect("object in unknown region")
            .objects
            .insert(meta.key);
        self.by_addr.insert(meta.addr.0, meta.key);
        self.objects.insert(meta.key, meta);
    }

    pub fn remove_object(&mut self, key: ObjKey) -> ObjectMeta {
        let meta = self.objects.remove(&key).expect("unknown object");
        self.by_addr.remove(&meta.addr.0);
        if let Some(r) = self.regions.get_mut(&meta.region) {
            r.objects.remove(&key);
        }
        meta
    }

    /// Detach an empty region from the tree.
    pub fn remove_region(&mut self, id: RegionId) -> RegionMeta {
        let meta = self.regions.remove(&id).expect("unknown region");
        assert!(
            meta.children.is_empty() && meta.objects.is_empty(),
            "region {id} not empty"
        );
        if let Some(p) = meta.parent.and_then(|p| self.regions.get_mut(&p)) {
            p.children.remove(&id);
        }
        meta
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        match node {
            NodeId::Region(r) => self.regions.get(&r)?.parent.map(NodeId::Region),
            NodeId::Object(k) => self.objects.get(&k).map(|o| NodeId::Region(o.region)),
        }
    }

    pub fn owner(&self, node: NodeId) -> Option<CoreId> {
        match node {
            NodeId::Region(r) => self.regions.get(&r).map(|m| m.owner),
            NodeId::Object(k) => self
                .objects
                .get(&k)
                .and_then(|o| self.regions.get(&o.region))
                .map(|m| m.owner),
        }
    }

    /// True if `node` equals `anc` or lies in its subtree.
    pub fn contains(&self, anc: NodeId, node: NodeId) -> bool {
        let mut cur = Some(node);
        while let Some(n) = cur {
            if n == anc {
                return true;
            }
            cur = self.parent(n);
        }
        false
    }

    /// Downward chain from just below `anchor` to `target` inclusive, found
    /// by walking parent pointers up from the target. Empty if they are
    /// equal, `None` if `target` is not under `anchor`.
    pub fn path_down(&self, anchor: NodeId, target: NodeId) -> Option<Vec<NodeId>> {
        let mut chain = Vec::new();
        let mut cur = target;
        while cur != anchor {
            chain.push(cur);
            cur = self.parent(cur)?;
        }
        chain.reverse();
        Some(chain)
    }

    /// Regions of the subtree rooted at `r`, parents before children.
    pub fn subtree_regions(&self, r: RegionId) -> Vec<RegionId> {
        let mut out = Vec::new();
        let mut stack = vec![r];
        while let Some(x) = stack.pop() {
            if let Some(m) = self.regions.get(&x) {
                out.push(x);
                stack.extend(m.children.iter().rev());
            }
        }
        out
    }

    /// Objects of the subtree rooted at `node`, in address order.
    pub fn subtree_objects(&self, node: NodeId) -> Vec<&ObjectMeta> {
        let mut out: Vec<&ObjectMeta> = match node {
            NodeId::Object(k) => self.objects.get(&k).into_iter().collect(),
            NodeId::Region(r) => self
                .subtree_regions(r)
                .into_iter()
                .flat_map(|x| self.regions[&x].objects.iter().map(|k| &self.objects[k]))
                .collect(),
        };
        out.sort_by_key(|o| o.addr);
        out
    }

    /// Depth of a node below the root region.
    pub fn depth(&self, node: NodeId) -> usize {
        let mut d = 0;
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Verify that live objects occupy pairwise-disjoint address ranges and
    /// that every slab holds a single size class from a single region.
    pub fn audit_addresses(&self) -> Result<(), String> {
        let mut prev_end = 0u64;
        for (&a, k) in &self.by_addr {
            let o = &self.objects[k];
            if a < prev_end {
                return Err(format!("object {} at {} overlaps its predecessor", o.key, o.addr));
            }
            prev_end = a + reserved_bytes(o.size);
        }
        let mut slab_owner: BTreeMap<u64, RegionId> = BTreeMap::new();
        for r in self.regions.values() {
            for (base, _) in r.heap.slab_classes() {
                if let Some(prev) = slab_owner.insert(base, r.id) {
                    return Err(format!("slab {base:#x} shared by {prev} and {}", r.id));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(k: u64, addr: u64, region: RegionId) -> ObjectMeta {
        ObjectMeta {
            key: ObjKey(k),
            addr: Addr(addr),
            size: 64,
            region,
            producer: None,
        }
    }

    fn sample() -> Forest {
        // root - a - b - o1
        //          \ o2
        let mut f = Forest::new(CoreId(0));
        f.add_region(RegionId(1), RegionId::ROOT, CoreId(0), 1).unwrap();
        f.add_region(RegionId(2), RegionId(1), CoreId(1), 2).unwrap();
        f.add_object(obj(1, 0, RegionId(2)));
        f.add_object(obj(2, 64, RegionId(1)));
        f
    }

    #[test]
    fn paths_walk_parent_pointers() {
        let f = sample();
        let a = NodeId::Region(RegionId(1));
        let o1 = NodeId::Object(ObjKey(1));
        assert_eq!(f.path_down(a, a), Some(vec![]));
        assert_eq!(f.path_down(a, o1), Some(vec![NodeId::Region(RegionId(2)), o1]));
        assert_eq!(f.path_down(o1, a), None);
        assert!(f.contains(NodeId::Region(RegionId::ROOT), o1));
        assert!(!f.contains(NodeId::Object(ObjKey(2)), o1));
        assert_eq!(f.owner(o1), Some(CoreId(1)));
        assert_eq!(f.depth(o1), 3);
    }

    #[test]
    fn subtree_listing() {
        let f = sample();
        assert_eq!(f.subtree_regions(RegionId(1)), vec![RegionId(1), RegionId(2)]);
        let keys: Vec<_> = f
            .subtree_objects(NodeId::Region(RegionId(1)))
            .iter()
            .map(|o| o.key.0)
            .collect();
        assert_eq!(keys, vec![1, 2]);
    }

    #[test]
    #[should_panic(expected = "overlap")]
    fn overlapping_objects_rejected() {
        let mut f = sample();
        f.add_object(obj(3, 32, RegionId(1)));
    }

    #[test]
    fn unknown_parent_is_a_fault() {
        let mut f = sample();
        assert_eq!(
            f.add_region(RegionId(9), RegionId(7), CoreId(0), 0),
            Err(Fault::UnknownRegion(RegionId(7)))
        );
    }
}
