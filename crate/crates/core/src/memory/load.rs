//! Upstream load reporting with a change threshold.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadThresholds {
    pub tasks: u64,
    pub regions: u64,
}

impl Default for LoadThresholds {
    fn default() -> Self {
        LoadThresholds { tasks: 2, regions: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Load {
    pub tasks: u64,
    pub regions: u64,
}

/// Remembers the last value sent upstream. A new report is due when either
/// component moved by at least its threshold (inclusive).
#[derive(Debug, Clone, Default)]
pub struct LoadReporter {
    last: Load,
    pub sent: u64,
}

impl LoadReporter {
    pub fn observe(&mut self, now: Load, th: LoadThresholds) -> Option<Load> {
        let due =
            now.tasks.abs_diff(self.last.tasks) >= th.tasks || now.regions.abs_diff(self.last.regions) >= th.regions;
        if due {
            self.last = now;
            self.sent += 1;
            Some(now)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(tasks: u64, regions: u64) -> Load {
        Load { tasks, regions }
    }

    #[test]
    fn unchanged_load_is_silent() {
        let mut r = LoadReporter::default();
        assert_eq!(r.observe(l(0, 0), LoadThresholds::default()), None);
    }

    #[test]
    fn boundary_is_inclusive() {
        let th = LoadThresholds::default();
        let mut r = LoadReporter::default();
        assert_eq!(r.observe(l(1, 0), th), None);
        assert_eq!(r.observe(l(2, 0), th), Some(l(2, 0)));
        assert_eq!(r.observe(l(2, 1), th), Some(l(2, 1)));
        assert_eq!(r.observe(l(1, 1), th), None);
        assert_eq!(r.observe(l(0, 1), th), Some(l(0, 1)));
    }

    #[test]
    fn report_rate_is_bounded_by_threshold() {
        let th = LoadThresholds { tasks: 4, regions: 1 };
        let mut r = LoadReporter::default();
        for t in 0..=400u64 {
            r.observe(l(t, 0), th);
        }
        assert_eq!(r.sent, 100);
    }
}
