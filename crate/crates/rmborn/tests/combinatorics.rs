use proptest::prelude::*;
use rmborn::combinatorics::*;
use std::collections::BTreeMap;

/// All perfect matchings of `2k` points, filtered for "no edge inside one
/// interval" where points `2i` and `2i+1` belong to interval `i`.
fn brute_force_classes(k: usize) -> Vec<Vec<(usize, usize)>> {
    fn all_matchings(points: &[usize]) -> Vec<Vec<(usize, usize)>> {
        if points.is_empty() {
            return vec![Vec::new()];
        }
        let first = points[0];
        let mut out = Vec::new();
        for i in 1..points.len() {
            let rest: Vec<usize> = points[1..].iter().enumerate().filter(|&(j, _)| j + 1 != i).map(|(_, &p)| p).collect();
            for mut m in all_matchings(&rest) {
                m.push((first, points[i]));
                out.push(m);
            }
        }
        out
    }
    let points: Vec<usize> = (0..2 * k).collect();
    let all = all_matchings(&points);
    assert_eq!(all.len() as u128, double_factorial(2 * k as u64 - 1).unwrap());
    all.into_iter().filter(|m| m.iter().all(|&(a, b)| a / 2 != b / 2)).collect()
}

#[test]
fn brute_force_matchings_agree_with_enumeration() {
    for k in 2..=5usize {
        let labels: Vec<usize> = (0..k).collect();
        let brute = brute_force_classes(k);
        let classes = enumerate_contraction_classes(k, &labels).unwrap();
        assert_eq!(brute.len(), classes.len(), "k={k}");
        assert_eq!(classes.len() as u128, crossing_count(k as u64).unwrap());
        let mut as_sets: Vec<Vec<(usize, usize)>> = classes
            .iter()
            .map(|c| {
                let mut v: Vec<(usize, usize)> = c
                    .edges()
                    .iter()
                    .map(|(a, b)| {
                        let (p, q) = (2 * a.slot + a.end as usize, 2 * b.slot + b.end as usize);
                        (p.min(q), p.max(q))
                    })
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        let mut brute_sets: Vec<Vec<(usize, usize)>> = brute
            .into_iter()
            .map(|mut m| {
                m.sort_unstable();
                m
            })
            .collect();
        as_sets.sort();
        brute_sets.sort();
        assert_eq!(as_sets, brute_sets, "k={k}");
    }
}

#[test]
fn classes_are_canonically_ordered() {
    let classes = enumerate_contraction_classes(4, &[0, 1, 2, 3]).unwrap();
    let keys: Vec<_> = classes.iter().map(|c| c.edges().to_vec()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn three_interval_classes_are_irreducible() {
    let classes = enumerate_contraction_classes(3, &[2, 5, 7]).unwrap();
    assert_eq!(classes.len(), 8);
    assert!(classes.iter().all(|c| c.is_irreducible()));
}

#[test]
fn class_counts_per_partition_match_term_counts() {
    for k in 2..=6usize {
        let labels: Vec<usize> = (10..10 + k).collect();
        let classes = enumerate_contraction_classes(k, &labels).unwrap();
        let mut by_partition: BTreeMap<Vec<usize>, u128> = BTreeMap::new();
        for c in &classes {
            *by_partition.entry(c.partition().parts().to_vec()).or_default() += 1;
        }
        for p in restricted_partitions(k).unwrap() {
            assert_eq!(by_partition.get(p.parts()).copied().unwrap_or(0), partition_term_count(&p).unwrap(), "{p}");
        }
    }
}

#[test]
fn term_counts_sum_to_crossing_counts() {
    for k in 2..=8u64 {
        let s: u128 = restricted_partitions(k as usize)
            .unwrap()
            .iter()
            .map(|p| partition_term_count(p).unwrap())
            .sum();
        assert_eq!(s, crossing_count(k).unwrap(), "k={k}");
    }
}

#[test]
fn class_monomials_match_cyclic_bound_terms() {
    for k in 2..=5usize {
        let labels: Vec<usize> = vec![1, 4, 6, 9, 13][..k].to_vec();
        let classes = enumerate_contraction_classes(k, &labels).unwrap();
        for p in restricted_partitions(k).unwrap() {
            let mut from_classes: BTreeMap<Vec<(usize, usize)>, u128> = BTreeMap::new();
            for c in classes.iter().filter(|c| c.partition() == p) {
                *from_classes.entry(c.monomial()).or_default() += 1;
            }
            let mut from_terms: BTreeMap<Vec<(usize, usize)>, u128> = BTreeMap::new();
            for t in cyclic_bound_terms(&p, &labels).unwrap() {
                *from_terms.entry(t.pairs.clone()).or_default() += t.multiplicity;
            }
            assert_eq!(from_classes, from_terms, "k={k} partition {p}");
            let distinct = cyclic_bound_terms(&p, &labels).unwrap().len() as u128;
            assert_eq!(distinct, partition_monomial_count(&p).unwrap());
        }
    }
}

fn df_f64(n: u64) -> f64 {
    (1..=n).rev().step_by(2).map(|x| x as f64).product()
}

#[test]
fn crossing_growth_approaches_double_factorial_over_root_e() {
    // The relative gap behaves like 1/(4k), so it drops under 5% from k = 6.
    for k in 6..=29u64 {
        let c = crossing_count(k).unwrap() as f64;
        let df = df_f64(2 * k - 1);
        let ratio = c / (df / std::f64::consts::E.sqrt());
        assert!((ratio - 1.0).abs() < 0.05, "k={k}: {ratio}");
    }
    let r = |k: u64| crossing_count(k).unwrap() as f64 / (df_f64(2 * k - 1) / std::f64::consts::E.sqrt());
    assert!((2..29).all(|k| r(k + 1) > r(k)) || (3..29).all(|k| r(k + 1) > r(k)));
    assert!((r(29) - 1.0).abs() < 1.0 / 100.0);
}

#[test]
fn range_errors() {
    assert!(enumerate_contraction_classes(7, &[0, 1, 2, 3, 4, 5, 6]).is_err());
    assert!(enumerate_contraction_classes(1, &[0]).is_err());
    assert!(enumerate_contraction_classes(3, &[0, 0, 1]).is_err());
    assert!(wick_term_count(WICK_MAX_N + 1).is_err());
}

proptest! {
    #[test]
    fn partitions_are_restricted_and_sum_to_k(k in 2usize..30) {
        for p in restricted_partitions(k).unwrap() {
            prop_assert_eq!(p.total(), k);
            prop_assert!(p.parts().iter().all(|&x| x >= 2));
            prop_assert!(p.parts().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn restricted_count_is_partition_difference(k in 2usize..40) {
        // pi(k) - pi(k-1) by the pentagonal-free dynamic program.
        fn pi(n: usize) -> usize {
            let mut t = vec![0usize; n + 1];
            t[0] = 1;
            for part in 1..=n {
                for s in part..=n {
                    t[s] += t[s - part];
                }
            }
            t[n]
        }
        prop_assert_eq!(restricted_partitions(k).unwrap().len(), pi(k) - pi(k - 1));
    }

    #[test]
    fn crossing_recurrence_holds(k in 2u64..30) {
        let c = |n| crossing_count(n).unwrap();
        prop_assert_eq!(c(k), 2 * (k as u128 - 1) * (c(k - 1) + c(k - 2)));
    }

    #[test]
    fn every_fill_covers_labels_once(k in 2usize..7, offset in 0usize..50) {
        let labels: Vec<usize> = (offset..offset + k).collect();
        for p in restricted_partitions(k).unwrap() {
            for f in young_fills(&p, &labels).unwrap() {
                let mut all: Vec<usize> = f.rows.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(&all, &labels);
                prop_assert!(f.rows.iter().all(|r| r.len() >= 2));
            }
        }
    }
}
