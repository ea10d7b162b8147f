//! Region-based memory management: the distributed region tree, slab heaps
//! inside regions, page holdings per scheduler, routing tries, packing and
//! load reporting.

pub mod load;
pub mod pack;
pub mod pages;
pub mod slab;
pub mod tree;
pub mod trie;

pub use load::{Load, LoadReporter, LoadThresholds};
pub use pack::{coalesce, PackEntry};
pub use pages::PagePool;
pub use slab::{reserved_bytes, size_class, RegionHeap, SizeClass};
pub use tree::{Forest, ObjectMeta, RegionMeta};
pub use trie::RouteTrie;

pub const SLAB_SIZE: u64 = 4096;
pub const PAGE_SIZE: u64 = 1 << 20;
pub const SLABS_PER_PAGE: u64 = PAGE_SIZE / SLAB_SIZE;
pub const MIN_CLASS: u64 = 64;
pub const MAX_CLASS: u64 = 2048;
pub const MAX_OBJECT: u64 = PAGE_SIZE;

pub fn page_of(addr: u64) -> u64 {
    addr / PAGE_SIZE
}
