//! Region-local slab heap: power-of-two size classes inside 4 KB slabs and
//! dedicated slab runs for larger objects.

use std::collections::{BTreeMap, BTreeSet};

use super::pages::PagePool;
use super::{MAX_CLASS, MAX_OBJECT, MIN_CLASS, SLAB_SIZE};

/// Fully free slabs a region keeps before returning extras to its scheduler.
pub const FREE_SLAB_WATERMARK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    /// Slot size in bytes.
    Small(u64),
    /// Number of contiguous slabs.
    Large(u64),
}

pub fn size_class(size: u64) -> SizeClass {
    debug_assert!(size > 0 && size <= MAX_OBJECT);
    if size <= MAX_CLASS {
        SizeClass::Small(size.next_power_of_two().max(MIN_CLASS))
    } else {
        SizeClass::Large(size.div_ceil(SLAB_SIZE))
    }
}

/// Bytes actually reserved for an object of `size` bytes.
pub fn reserved_bytes(size: u64) -> u64 {
    match size_class(size) {
        SizeClass::Small(c) => c,
        SizeClass::Large(n) => n * SLAB_SIZE,
    }
}

#[derive(Debug, Clone)]
struct Slab {
    class: u64,
    /// Free slot indices; the lowest is handed out first.
    free: BTreeSet<u32>,
}

impl Slab {
    fn slots(&self) -> u32 {
        (SLAB_SIZE / self.class) as u32
    }

    fn is_empty(&self) -> bool {
        self.free.len() as u32 == self.slots()
    }
}

/// Slabs belonging to one region. Each slab holds objects of exactly one
/// size class, and slabs are never shared between regions.
#[derive(Debug, Clone, Default)]
pub struct RegionHeap {
    slabs: BTreeMap<u64, Slab>,
    /// Slabs with at least one free slot, by class.
    partial: BTreeMap<u64, BTreeSet<u64>>,
    large: BTreeMap<u64, u64>,
    empty_slabs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeedPages;

impl RegionHeap {
    pub fn slab_count(&self) -> usize {
        self.slabs.len() + self.large.values().sum::<u64>() as usize
    }

    pub fn alloc(&mut self, size: u64, pool: &mut PagePool) -> Result<u64, NeedPages> {
        match size_class(size) {
            SizeClass::Small(c) => {
                let base = match self.partial.get(&c).and_then(|s| s.first().copied()) {
                    Some(b) => b,
                    None => {
                        let b = pool.take_slab().ok_or(NeedPages)?;
                        let slots = (SLAB_SIZE / c) as u32;
                        self.slabs.insert(
                            b,
                            Slab {
                                class: c,
                                free: (0..slots).collect(),
                            },
                        );
                        self.partial.entry(c).or_default().insert(b);
                        self.empty_slabs += 1;
                        b
                    }
                };
                let slab = self.slabs.get_mut(&base).unwrap();
                if slab.is_empty() {
                    self.empty_slabs -= 1;
                }
                let slot = slab.free.pop_first().unwrap();
                if slab.free.is_empty() {
                    let set = self.partial.get_mut(&c).unwrap();
                    set.remove(&base);
                    if set.is_empty() {
                        self.partial.remove(&c);
                    }
                }
                Ok(base + u64::from(slot) * c)
            }
            SizeClass::Large(n) => {
                let base = pool.take_run(n).ok_or(NeedPages)?;
                self.large.insert(base, n);
                Ok(base)
            }
        }
    }

    /// Release an object. Fully free slabs above the watermark go back to
    /// the scheduler's pool.
    pub fn free(&mut self, addr: u64, size: u64, pool: &mut PagePool) {
        match size_class(size) {
            SizeClass::Small(c) => {
                let base = addr - addr % SLAB_SIZE;
                let slab = self
                    .slabs
                    .get_mut(&base)
                    .expect("free of an address outside this region");
                debug_assert_eq!(slab.class, c);
                let slot = ((addr - base) / c) as u32;
                let fresh = slab.free.insert(slot);
                assert!(fresh, "double free at {addr:#x}");
                self.partial.entry(c).or_default().insert(base);
                if slab.is_empty() {
                    self.empty_slabs += 1;
                    if self.empty_slabs > FREE_SLAB_WATERMARK {
                        self.slabs.remove(&base);
                        let set = self.partial.get_mut(&c).unwrap();
                        set.remove(&base);
                        if set.is_empty() {
                            self.partial.remove(&c);
                        }
                        self.empty_slabs -= 1;
                        pool.give_slab(base);
                    }
                }
            }
            SizeClass::Large(n) => {
                let got = self.large.remove(&addr).expect("free of an unknown large object");
                debug_assert_eq!(got, n);
                for i in 0..n {
                    pool.give_slab(addr + i * SLAB_SIZE);
                }
            }
        }
    }

    /// Return every slab to the pool (region destruction).
    pub fn release_all(&mut self, pool: &mut PagePool) {
        for (base, _) in std::mem::take(&mut self.slabs) {
            pool.give_slab(base);
        }
        for (base, n) in std::mem::take(&mut self.large) {
            for i in 0..n {
                pool.give_slab(base + i * SLAB_SIZE);
            }
        }
        self.partial.clear();
        self.empty_slabs = 0;
    }

    /// Fully free small slabs currently retained.
    pub fn empty_slab_count(&self) -> usize {
        self.empty_slabs
    }

    /// (slab base, class) pairs, for the slab-discipline audit.
    pub fn slab_classes(&self) -> Vec<(u64, u64)> {
        self.slabs.iter().map(|(b, s)| (*b, s.class)).collect()
    }
}
