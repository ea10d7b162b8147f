//! Nibble trie over 64-bit keys, used by non-leaf schedulers to route
//! region ids and page indices to the child subtree that owns them.

const FANOUT: usize = 16;
const DEPTH: usize = 16;

#[derive(Debug, Clone, Default)]
struct Node {
    next: [u32; FANOUT],
    value: Option<u32>,
}

/// Maps `u64` keys to child indices. Node 0 is the root; slot value 0 in
/// `next` means "absent" because the root can never be a child.
#[derive(Debug, Clone)]
pub struct RouteTrie {
    nodes: Vec<Node>,
    free: Vec<u32>,
    len: usize,
}

impl Default for RouteTrie {
    fn default() -> Self {
        Self::new()
    }
}

fn nibble(key: u64, level: usize) -> usize {
    ((key >> (4 * (DEPTH - 1 - level))) & 0xf) as usize
}

impl RouteTrie {
    pub fn new() -> Self {
        RouteTrie {
            nodes: vec![Node::default()],
            free: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn alloc(&mut self) -> u32 {
        if let Some(i) = self.free.pop() {
            self.nodes[i as usize] = Node::default();
            i
        } else {
            self.nodes.push(Node::default());
            (self.nodes.len() - 1) as u32
        }
    }

    /// Insert or overwrite; returns the previous value.
    pub fn insert(&mut self, key: u64, child: u32) -> Option<u32> {
        let mut cur = 0usize;
        for level in 0..DEPTH {
            let n = nibble(key, level);
            let mut nxt = self.nodes[cur].next[n];
            if nxt == 0 {
                nxt = self.alloc();
                self.nodes[cur].next[n] = nxt;
            }
            cur = nxt as usize;
        }
        let old = self.nodes[cur].value.replace(child);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    pub fn get(&self, key: u64) -> Option<u32> {
        let mut cur = 0usize;
        for level in 0..DEPTH {
            let nxt = self.nodes[cur].next[nibble(key, level)];
            if nxt == 0 {
                return None;
            }
            cur = nxt as usize;
        }
        self.nodes[cur].value
    }

    /// Remove a key, pruning nodes left without children.
    pub fn remove(&mut self, key: u64) -> Option<u32> {
        let mut path = [0u32; DEPTH + 1];
        let mut cur = 0usize;
        for level in 0..DEPTH {
            let nxt = self.nodes[cur].next[nibble(key, level)];
            if nxt == 0 {
                return None;
            }
            path[level + 1] = nxt;
            cur = nxt as usize;
        }
        let old = self.nodes[cur].value.take()?;
        self.len -= 1;
        for level in (0..DEPTH).rev() {
            let node = path[level + 1] as usize;
            let empty = self.nodes[node].value.is_none() && self.nodes[node].next.iter().all(|&x| x == 0);
            if !empty {
                break;
            }
            let parent = path[level] as usize;
            self.nodes[parent].next[nibble(key, level)] = 0;
            self.free.push(node as u32);
        }
        Some(old)
    }

    /// All entries in ascending key order.
    pub fn entries(&self) -> Vec<(u64, u32)> {
        let mut out = Vec::with_capacity(self.len);
        let mut stack = vec![(0usize, 0usize, 0u64)];
        while let Some((node, level, prefix)) = stack.pop() {
            if level == DEPTH {
                if let Some(v) = self.nodes[node].value {
                    out.push((prefix, v));
                }
                continue;
            }
            for n in (0..FANOUT).rev() {
                let nxt = self.nodes[node].next[n];
                if nxt != 0 {
                    stack.push((nxt as usize, level + 1, (prefix << 4) | n as u64));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn insert_get_remove() {
        let mut t = RouteTrie::new();
        assert_eq!(t.get(5), None);
        assert_eq!(t.insert(5, 1), None);
        assert_eq!(t.insert(u64::MAX, 3), None);
        assert_eq!(t.insert(5, 2), Some(1));
        assert_eq!(t.get(5), Some(2));
        assert_eq!(t.len(), 2);
        assert_eq!(t.remove(5), Some(2));
        assert_eq!(t.remove(5), None);
        assert_eq!(t.get(u64::MAX), Some(3));
        assert_eq!(t.entries(), vec![(u64::MAX, 3)]);
    }

    proptest! {
        #[test]
        fn matches_btreemap(ops in proptest::collection::vec((0u8..3, 0u64..64, 0u32..8), 0..200)) {
            let mut t = RouteTrie::new();
            let mut m = BTreeMap::new();
            for (op, k, v) in ops {
                let k = k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                match op {
                    0 => prop_assert_eq!(t.insert(k, v), m.insert(k, v)),
                    1 => prop_assert_eq!(t.remove(k), m.remove(&k)),
                    _ => prop_assert_eq!(t.get(k), m.get(&k).copied()),
                }
            }
            prop_assert_eq!(t.entries(), m.into_iter().collect::<Vec<_>>());
        }
    }
}
