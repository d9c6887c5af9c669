//! Pareto fronts over (primary, secondary) and successive-front ranking.
//!
//! Both objectives are maximized; a minimized quantity such as parameter
//! count enters negated. Only orderings matter, so nothing is normalized.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub primary: f64,
    /// Maximize-form secondary objective.
    pub secondary: f64,
    /// The secondary objective as measured (e.g. parameter count).
    pub raw_secondary: f64,
}

impl ObjectiveVector {
    /// Secondary objective to be minimized, stored negated.
    pub fn minimizing(primary: f64, raw_secondary: f64) -> Self {
        Self {
            primary,
            secondary: -raw_secondary,
            raw_secondary,
        }
    }
}

/// `a` is at least as good in both objectives and better in one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.primary >= b.primary && a.secondary >= b.secondary && (a.primary > b.primary || a.secondary > b.secondary)
}

fn by_primary_then_secondary(a: &ObjectiveVector, b: &ObjectiveVector) -> Ordering {
    b.primary.total_cmp(&a.primary).then(b.secondary.total_cmp(&a.secondary))
}

/// Indices of the first Pareto front of `points`, in construction order:
/// sort by primary descending (ties by secondary descending, then input
/// order), seed with the first point, and append every later point whose
/// secondary strictly exceeds that of the last one appended. Exact
/// duplicates therefore contribute a single member. With `secondary_sort`
/// the front is finally ordered by secondary descending.
pub fn pareto_front(points: &[ObjectiveVector], secondary_sort: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| by_primary_then_secondary(&points[i], &points[j]));
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        match front.last() {
            Some(&last) if points[i].secondary <= points[last].secondary => {}
            _ => front.push(i),
        }
    }
    if secondary_sort {
        front.sort_by(|&i, &j| points[j].secondary.total_cmp(&points[i].secondary));
    }
    front
}

/// Successive fronts: extract the front, remove it, repeat until empty.
/// The fronts partition `0..points.len()`.
pub fn peel_fronts(points: &[ObjectiveVector], secondary_sort: bool) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let subset: Vec<ObjectiveVector> = remaining.iter().map(|&i| points[i]).collect();
        let local = pareto_front(&subset, secondary_sort);
        let front: Vec<usize> = local.iter().map(|&k| remaining[k]).collect();
        let mut taken = alloc::vec![false; remaining.len()];
        for &k in &local {
            taken[k] = true;
        }
        remaining = remaining.iter().zip(&taken).filter(|(_, t)| !**t).map(|(i, _)| *i).collect();
        fronts.push(front);
    }
    fronts
}

/// Ranking by successive fronts, concatenated. A permutation of the input.
pub fn rank_by_fronts(points: &[ObjectiveVector], secondary_sort: bool) -> Vec<usize> {
    peel_fronts(points, secondary_sort).into_iter().flatten().collect()
}

/// Front number (0-based) of every point.
pub fn front_indices(points: &[ObjectiveVector]) -> Vec<usize> {
    let mut index = alloc::vec![0; points.len()];
    for (f, front) in peel_fronts(points, false).into_iter().enumerate() {
        for i in front {
            index[i] = f;
        }
    }
    index
}

/// Members kept after dropping the last fraction `f_l` of `n` ranked
/// members; at least one survives when `n > 0`.
pub fn survivors(n: usize, f_l: f64) -> usize {
    let removed = libm::floor(n as f64 * f_l.clamp(0.0, 1.0)) as usize;
    n.saturating_sub(removed).max(usize::from(n > 0))
}

/// Every point of `b` is weakly dominated by (or equal to) some point of `a`.
pub fn front_weakly_dominates(a: &[ObjectiveVector], b: &[ObjectiveVector]) -> bool {
    b.iter()
        .all(|q| a.iter().any(|p| p.primary >= q.primary && p.secondary >= q.secondary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use proptest::prelude::*;

    fn pts(xy: &[(f64, f64)]) -> Vec<ObjectiveVector> {
        xy.iter()
            .map(|&(x, y)| ObjectiveVector {
                primary: x,
                secondary: y,
                raw_secondary: -y,
            })
            .collect()
    }

    /// Brute-force oracle: objective pairs not dominated by any other point.
    fn non_dominated(points: &[ObjectiveVector]) -> BTreeSet<(u64, u64)> {
        points
            .iter()
            .filter(|p| !points.iter().any(|q| dominates(q, p)))
            .map(|p| (p.primary.to_bits(), p.secondary.to_bits()))
            .collect()
    }

    #[test]
    fn worked_example() {
        let p = pts(&[(3.0, 1.0), (2.0, 2.0), (2.0, 1.0), (1.0, 3.0)]);
        assert_eq!(pareto_front(&p, false), vec![0, 1, 3]);
        assert_eq!(pareto_front(&p, true), vec![3, 1, 0]);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(pareto_front(&pts(&[(0.5, -3.0)]), false), vec![0]);
        assert!(pareto_front(&[], false).is_empty());
        assert!(peel_fronts(&[], false).is_empty());
    }

    #[test]
    fn duplicates_collapse_to_one_member() {
        let p = pts(&[(2.0, 2.0), (2.0, 2.0)]);
        assert_eq!(pareto_front(&p, false), vec![0]);
        assert_eq!(peel_fronts(&p, false), vec![vec![0], vec![1]]);
    }

    #[test]
    fn chain_gives_singleton_fronts() {
        let p = pts(&[(2.0, 2.0), (4.0, 4.0), (1.0, 1.0), (3.0, 3.0)]);
        assert_eq!(peel_fronts(&p, false), vec![vec![1], vec![3], vec![0], vec![2]]);
        assert_eq!(rank_by_fronts(&p, false), vec![1, 3, 0, 2]);
    }

    #[test]
    fn antichain_is_one_front_in_construction_order() {
        let p = pts(&[(1.0, 4.0), (3.0, 2.0), (4.0, 1.0), (2.0, 3.0)]);
        assert_eq!(peel_fronts(&p, false), vec![vec![2, 1, 3, 0]]);
    }

    #[test]
    fn tied_primary_prefers_higher_secondary() {
        // without the secondary tie-break, (5,1) could enter before (5,2)
        let p = pts(&[(5.0, 1.0), (5.0, 2.0)]);
        assert_eq!(pareto_front(&p, false), vec![1]);
    }

    #[test]
    fn smaller_network_wins_a_primary_tie() {
        let p = vec![
            ObjectiveVector::minimizing(0.8, 125_000.0),
            ObjectiveVector::minimizing(0.8, 56_000.0),
        ];
        assert_eq!(rank_by_fronts(&p, false), vec![1, 0]);
        assert_eq!(ObjectiveVector::minimizing(0.1, 1000.0).secondary, -1000.0);
    }

    #[test]
    fn truncation_arithmetic() {
        assert_eq!(survivors(8, 0.5), 4);
        assert_eq!(survivors(10, 0.5), 5);
        assert_eq!(survivors(1, 0.5), 1);
        assert_eq!(survivors(3, 0.9), 1);
        assert_eq!(survivors(0, 0.5), 0);
    }

    fn arb_points(max: usize) -> impl Strategy<Value = Vec<ObjectiveVector>> {
        // a small grid forces ties and duplicates
        proptest::collection::vec((0u8..8, 0u8..8), 0..max)
            .prop_map(|v| {
                v.into_iter()
                    .map(|(x, y)| (f64::from(x) / 4.0, -f64::from(y) * 100.0))
                    .collect::<Vec<_>>()
            })
            .prop_map(|xy| pts(&xy))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn front_matches_brute_force(p in arb_points(65)) {
            let front: Vec<ObjectiveVector> = pareto_front(&p, false).into_iter().map(|i| p[i]).collect();
            let set: BTreeSet<(u64, u64)> = front.iter().map(|q| (q.primary.to_bits(), q.secondary.to_bits())).collect();
            prop_assert_eq!(set.len(), front.len(), "front holds duplicates");
            prop_assert_eq!(set, non_dominated(&p));
        }

        #[test]
        fn peeling_partitions_and_respects_dominance(p in arb_points(40)) {
            let fronts = peel_fronts(&p, false);
            prop_assert!(fronts.len() <= p.len());
            let mut all: Vec<usize> = fronts.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..p.len()).collect::<Vec<_>>());
            let rank = rank_by_fronts(&p, false);
            let pos: Vec<usize> = {
                let mut pos = vec![0; p.len()];
                for (k, &i) in rank.iter().enumerate() { pos[i] = k; }
                pos
            };
            for i in 0..p.len() {
                for j in 0..p.len() {
                    if dominates(&p[i], &p[j]) {
                        prop_assert!(pos[i] < pos[j]);
                    }
                }
            }
        }

        #[test]
        fn ranking_ignores_monotone_rescaling(raw in proptest::collection::vec((0u8..6, 1u32..100_000), 0..40)) {
            let lin: Vec<ObjectiveVector> = raw.iter().map(|&(x, r)| ObjectiveVector::minimizing(f64::from(x), f64::from(r))).collect();
            let log: Vec<ObjectiveVector> = raw.iter().map(|&(x, r)| ObjectiveVector::minimizing(f64::from(x), libm::log(f64::from(r)))).collect();
            prop_assert_eq!(rank_by_fronts(&lin, false), rank_by_fronts(&log, false));
        }
    }
}
