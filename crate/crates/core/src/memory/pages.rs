//! Per-scheduler page holdings and the pool of free slabs carved from them.

use std::collections::BTreeSet;

use super::{PAGE_SIZE, SLABS_PER_PAGE, SLAB_SIZE};

/// Pages held by one scheduler. Pages only move downward, from a parent to
/// the child that asked for them, so `held` summed over all schedulers is
/// constant.
#[derive(Debug, Clone, Default)]
pub struct PagePool {
    /// Untouched pages, available for carving or for granting to children.
    free_pages: BTreeSet<u64>,
    /// Page currently being carved into slabs and the next slab index in it.
    carving: Option<(u64, u64)>,
    free_slabs: BTreeSet<u64>,
    held: u64,
}

impl PagePool {
    /// Pool holding pages `[first, first + count)`.
    pub fn with_pages(first: u64, count: u64) -> Self {
        let mut p = PagePool::default();
        p.add_pages((first..first + count).collect());
        p
    }

    pub fn held(&self) -> u64 {
        self.held
    }

    pub fn free_page_count(&self) -> u64 {
        self.free_pages.len() as u64
    }

    pub fn free_slab_count(&self) -> usize {
        self.free_slabs.len()
    }

    pub fn add_pages(&mut self, pages: Vec<u64>) {
        self.held += pages.len() as u64;
        self.free_pages.extend(pages);
    }

    /// Remove up to `n` whole free pages for a child. Returns fewer if the
    /// pool runs short.
    pub fn take_pages(&mut self, n: u64) -> Vec<u64> {
        let out: Vec<u64> = self.free_pages.iter().take(n as usize).copied().collect();
        for p in &out {
            self.free_pages.remove(p);
        }
        self.held -= out.len() as u64;
        out
    }

    /// One 4 KB slab, preferring recycled slabs.
    pub fn take_slab(&mut self) -> Option<u64> {
        if let Some(s) = self.free_slabs.pop_first() {
            return Some(s);
        }
        self.take_run(1)
    }

    /// `n` contiguous slabs inside one page.
    pub fn take_run(&mut self, n: u64) -> Option<u64> {
        assert!((1..=SLABS_PER_PAGE).contains(&n));
        if let Some((page, next)) = self.carving {
            if next + n <= SLABS_PER_PAGE {
                self.carving = Some((page, next + n));
                return Some(page * PAGE_SIZE + next * SLAB_SIZE);
            }
        }
        let page = self.free_pages.pop_first()?;
        if let Some((old, next)) = self.carving.take() {
            for s in next..SLABS_PER_PAGE {
                self.free_slabs.insert(old * PAGE_SIZE + s * SLAB_SIZE);
            }
        }
        self.carving = Some((page, n));
        Some(page * PAGE_SIZE)
    }

    pub fn give_slab(&mut self, base: u64) {
        debug_assert_eq!(base % SLAB_SIZE, 0);
        let fresh = self.free_slabs.insert(base);
        debug_assert!(fresh, "slab {base:#x} returned twice");
    }

    /// True if a run of `n` slabs can be produced without new pages.
    pub fn can_supply(&self, n: u64) -> bool {
        if n == 1 && !self.free_slabs.is_empty() {
            return true;
        }
        let in_carving = self.carving.map_or(0, |(_, next)| SLABS_PER_PAGE - next);
        in_carving >= n || !self.free_pages.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slabs_come_from_held_pages() {
        let mut p = PagePool::with_pages(3, 1);
        let a = p.take_slab().unwrap();
        let b = p.take_slab().unwrap();
        assert_eq!(a, 3 * PAGE_SIZE);
        assert_eq!(b, a + SLAB_SIZE);
        p.give_slab(a);
        assert_eq!(p.take_slab(), Some(a));
    }

    #[test]
    fn runs_are_contiguous_and_spill_to_new_pages() {
        let mut p = PagePool::with_pages(0, 2);
        let r1 = p.take_run(200).unwrap();
        let r2 = p.take_run(100).unwrap();
        assert_eq!(r1, 0);
        assert_eq!(r2, PAGE_SIZE);
        // The 56 slabs left on page 0 were recycled.
        assert_eq!(p.free_slab_count(), 56);
        assert!(p.take_run(200).is_none());
    }

    #[test]
    fn page_grants_move_holdings() {
        let mut parent = PagePool::with_pages(0, 10);
        let mut child = PagePool::default();
        child.add_pages(parent.take_pages(4));
        assert_eq!(parent.held() + child.held(), 10);
        assert_eq!(child.take_slab(), Some(0));
    }
}
