//! Placement scores: locality L from packed bytes per candidate, balance B
//! from the load view, combined as p·L + (100 − p)·B.

/// Scale of both scores.
pub const SCORE_MAX: u64 = 1024;

/// L per candidate: share of packed bytes last produced inside it.
pub fn locality(bytes: &[u64]) -> Vec<u64> {
    let total: u64 = bytes.iter().sum();
    bytes
        .iter()
        .map(|&b| {
            if total == 0 {
                0
            } else {
                (u128::from(b) * 1024 / u128::from(total)) as u64
            }
        })
        .collect()
}

/// B per candidate: 1024 · (1 − load / highest load). Relative to the
/// highest load rather than the total, so it keeps separating candidates
/// when there are many of them.
pub fn balance(loads: &[u64]) -> Vec<u64> {
    let max = loads.iter().copied().max().unwrap_or(0);
    loads
        .iter()
        .map(|&l| {
            if max == 0 {
                SCORE_MAX
            } else {
                SCORE_MAX - (u128::from(l) * 1024 / u128::from(max)) as u64
            }
        })
        .collect()
}

/// Combined score times 100, so it stays an integer. Dividing by 100 would
/// keep it in [0, 1024] without changing the argmax.
pub fn total(p: u32, l: u64, b: u64) -> u64 {
    u64::from(p) * l + u64::from(100 - p) * b
}

/// Index of the best candidate; ties go to the lowest index.
pub fn choose(p: u32, bytes: &[u64], loads: &[u64]) -> usize {
    assert_eq!(bytes.len(), loads.len());
    assert!(!bytes.is_empty(), "no candidates");
    let l = locality(bytes);
    let b = balance(loads);
    let mut best = 0;
    let mut best_t = total(p, l[0], b[0]);
    for i in 1..bytes.len() {
        let t = total(p, l[i], b[i]);
        if t > best_t {
            best = i;
            best_t = t;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_biases() {
        assert_eq!(choose(100, &[0, 10, 5], &[0, 9, 0]), 1);
        assert_eq!(choose(0, &[0, 10, 5], &[3, 1, 2]), 1);
        assert_eq!(choose(0, &[100, 0, 0], &[3, 0, 0]), 1);
    }

    #[test]
    fn equal_totals_tie_to_lowest_index() {
        // X: L = 1024, B = 0. Y: L = 0, B = 1024.
        let l = locality(&[10, 0]);
        let b = balance(&[1, 0]);
        assert_eq!((l[0], b[0], l[1], b[1]), (1024, 0, 0, 1024));
        assert_eq!(total(50, l[0], b[0]), total(50, l[1], b[1]));
        assert_eq!(total(50, 1024, 0) / 100, 512);
        assert_eq!(choose(50, &[10, 0], &[1, 0]), 0);
    }

    #[test]
    fn balance_separates_many_candidates() {
        let mut loads = vec![4u64; 64];
        loads[0] = 5;
        loads[1] = 3;
        let b = balance(&loads);
        // 1024 - floor(1024·3/5) and 1024 - floor(1024·4/5).
        assert_eq!((b[0], b[1], b[2]), (0, 410, 205));
        // A locality holder loses to idle candidates at the usual bias.
        assert_eq!(choose(20, &[64, 0, 0], &[4, 4, 1]), 2);
    }

    #[test]
    fn no_data_and_no_load() {
        assert_eq!(locality(&[0, 0]), vec![0, 0]);
        assert_eq!(balance(&[0, 0]), vec![1024, 1024]);
        assert_eq!(choose(70, &[0, 0, 0], &[0, 0, 0]), 0);
    }

    proptest! {
        #[test]
        fn scores_are_bounded(bytes in prop::collection::vec(0u64..1 << 40, 1..12), loads in prop::collection::vec(0u64..1000, 1..12)) {
            let n = bytes.len().min(loads.len());
            for v in locality(&bytes[..n]).into_iter().chain(balance(&loads[..n])) {
                prop_assert!(v <= SCORE_MAX);
            }
        }

        #[test]
        fn pure_locality_ignores_byte_scale(bytes in prop::collection::vec(0u64..1 << 20, 1..10), k in 1u64..1000, loads in prop::collection::vec(0u64..50, 10)) {
            let n = bytes.len();
            let scaled: Vec<u64> = bytes.iter().map(|b| b * k).collect();
            prop_assert_eq!(choose(100, &bytes, &loads[..n]), choose(100, &scaled, &loads[..n]));
        }

        #[test]
        fn total_is_monotone_in_l(p in 1u32..=100, l in 0u64..1024, b in 0u64..=1024) {
            prop_assert!(total(p, l + 1, b) > total(p, l, b));
        }
    }
}
