//! Packing: the coalesced list of address ranges a task needs, grouped by
//! last producer.

use serde::{Deserialize, Serialize};

use crate::ids::{Addr, CoreId, NodeId, ObjKey, RegionId};

use super::tree::Forest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackEntry {
    pub addr: Addr,
    pub size: u64,
    pub producer: Option<CoreId>,
    /// Objects covered by the range. Bookkeeping for checksum lineage; not
    /// counted in message sizes.
    pub keys: Vec<ObjKey>,
}

/// Encoded size of one entry on the wire: base, length, producer.
pub const PACK_ENTRY_BYTES: usize = 16;

/// Sort by address and merge adjacent ranges with the same producer.
pub fn coalesce(mut entries: Vec<PackEntry>) -> Vec<PackEntry> {
    entries.sort_by_key(|e| e.addr);
    let mut out: Vec<PackEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        if let Some(last) = out.last_mut() {
            if last.producer == e.producer && last.addr.0 + last.size == e.addr.0 {
                last.size += e.size;
                last.keys.extend(e.keys);
                continue;
            }
        }
        out.push(e);
    }
    out
}

/// The part of `node`'s subtree that `owner` can pack from its own
/// metadata, plus the child regions owned by other schedulers that must be
/// asked separately.
pub fn local_pack(forest: &Forest, node: NodeId, owner: CoreId) -> (Vec<PackEntry>, Vec<RegionId>) {
    let mut entries = Vec::new();
    let mut remote = Vec::new();
    let entry = |o: &super::tree::ObjectMeta| PackEntry {
        addr: o.addr,
        size: o.size,
        producer: o.producer,
        keys: vec![o.key],
    };
    match node {
        NodeId::Object(k) => {
            if let Some(o) = forest.object(k) {
                entries.push(entry(o));
            }
        }
        NodeId::Region(r) => {
            let mut stack = vec![r];
            while let Some(x) = stack.pop() {
                let Some(m) = forest.region(x) else { continue };
                debug_assert_eq!(m.owner, owner);
                for k in &m.objects {
                    entries.push(entry(forest.object(*k).unwrap()));
                }
                for c in m.children.iter().rev() {
                    if forest.region(*c).map(|cm| cm.owner) == Some(owner) {
                        stack.push(*c);
                    } else {
                        remote.push(*c);
                    }
                }
            }
        }
    }
    (entries, remote)
}

/// Reference packing by walking the whole subtree centrally.
pub fn central_pack(forest: &Forest, node: NodeId) -> Vec<PackEntry> {
    coalesce(
        forest
            .subtree_objects(node)
            .into_iter()
            .map(|o| PackEntry {
                addr: o.addr,
                size: o.size,
                producer: o.producer,
                keys: vec![o.key],
            })
            .collect(),
    )
}

/// Total bytes per producer.
pub fn bytes_by_producer(entries: &[PackEntry]) -> Vec<(Option<CoreId>, u64)> {
    let mut m = std::collections::BTreeMap::new();
    for e in entries {
        *m.entry(e.producer).or_insert(0) += e.size;
    }
    m.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::tree::ObjectMeta;

    fn e(addr: u64, size: u64, p: Option<u32>) -> PackEntry {
        PackEntry {
            addr: Addr(addr),
            size,
            producer: p.map(CoreId),
            keys: vec![ObjKey(addr)],
        }
    }

    #[test]
    fn single_object_is_one_entry() {
        assert_eq!(coalesce(vec![e(0, 64, Some(1))]).len(), 1);
    }

    #[test]
    fn adjacent_same_producer_merge() {
        let out = coalesce(vec![
            e(128, 64, Some(1)),
            e(0, 64, Some(1)),
            e(64, 64, Some(1)),
            e(192, 64, Some(2)),
        ]);
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].addr, out[0].size, out[0].keys.len()), (Addr(0), 192, 3));
        // A gap prevents merging.
        assert_eq!(coalesce(vec![e(0, 64, Some(1)), e(128, 64, Some(1))]).len(), 2);
    }

    /// Eight objects produced by four workers, two each, interleaved; a
    /// reduction on worker w0 needs everything not produced by w0.
    #[test]
    fn reduction_fetch_set() {
        let mut f = Forest::new(CoreId(100));
        let a = RegionId(1);
        f.add_region(a, RegionId::ROOT, CoreId(100), 0).unwrap();
        let producers = [0, 1, 0, 2, 3, 1, 2, 3];
        for (i, p) in producers.iter().enumerate() {
            f.add_object(ObjectMeta {
                key: ObjKey(i as u64 + 1),
                addr: Addr(i as u64 * 64),
                size: 64,
                region: a,
                producer: Some(CoreId(*p)),
            });
        }
        let packed = central_pack(&f, NodeId::Region(a));
        let fetch: Vec<u64> = packed
            .iter()
            .filter(|e| e.producer != Some(CoreId(0)))
            .flat_map(|e| e.keys.iter().map(|k| k.0))
            .collect();
        assert_eq!(fetch, vec![2, 4, 5, 6, 7, 8]);
        let by = bytes_by_producer(&packed);
        assert_eq!(by.iter().map(|x| x.1).sum::<u64>(), 512);
    }

    #[test]
    fn split_pack_equals_central() {
        let mut f = Forest::new(CoreId(0));
        f.add_region(RegionId(1), RegionId::ROOT, CoreId(0), 0).unwrap();
        f.add_region(RegionId(2), RegionId(1), CoreId(1), 1).unwrap();
        f.add_region(RegionId(3), RegionId(1), CoreId(2), 1).unwrap();
        f.add_region(RegionId(4), RegionId(2), CoreId(1), 2).unwrap();
        let mut addr = 0;
        for (k, r) in [(1, 1), (2, 2), (3, 3), (4, 4), (5, 4), (6, 1)] {
            f.add_object(ObjectMeta {
                key: ObjKey(k),
                addr: Addr(addr),
                size: 64,
                region: RegionId(r),
                producer: Some(CoreId(7)),
            });
            addr += 64;
        }
        let mut all = Vec::new();
        let mut todo = vec![(NodeId::Region(RegionId(1)), CoreId(0))];
        let mut messages = 0;
        while let Some((n, owner)) = todo.pop() {
            let (ents, remote) = local_pack(&f, n, owner);
            all.extend(ents);
            for r in remote {
                messages += 1;
                todo.push((NodeId::Region(r), f.region(r).unwrap().owner));
            }
        }
        assert_eq!(messages, 2);
        assert_eq!(coalesce(all), central_pack(&f, NodeId::Region(RegionId(1))));
    }
}
