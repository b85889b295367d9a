//! Exact integer enumeration behind the Wick expansion.
//!
//! A product of `2k` field operators sampled in `k` interaction intervals
//! (two operators per interval) expands into a sum over perfect matchings.
//! Matchings that never pair the two points of one interval are the
//! *contraction classes* that produce cross-interval corrections. Their number
//! is the crossing count `c(k)`, each class decomposes into cycles over the
//! intervals, and the cycle lengths form a partition of `k` with no part
//! equal to one.
//!
//! All counts are exact `u128` values with explicit overflow detection.

use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;

/// Largest `n` accepted by [`wick_term_count`].
pub const WICK_MAX_N: u64 = 20;

/// Largest `k` accepted by [`enumerate_contraction_classes`].
pub const CLASS_MAX_K: usize = 6;

/// Number of Wick pairings of `2n` operators, `(2n)!/(2^n n!) = (2n-1)!!`.
pub fn wick_term_count(n: u64) -> Result<u128> {
    if n > WICK_MAX_N {
        return Err(Error::Range { what: "wick_term_count", arg: n, max: WICK_MAX_N });
    }
    Ok((1..=n as u128).map(|j| 2 * j - 1).product())
}

/// Crossing count `c(k)`: `c(0) = 1`, `c(1) = 0`, `c(k) = 2(k-1)[c(k-1) + c(k-2)]`.
pub fn crossing_count(k: u64) -> Result<u128> {
    let (mut prev, mut cur): (u128, u128) = (1, 0);
    if k == 0 {
        return Ok(prev);
    }
    for j in 2..=k {
        let next = (prev.checked_add(cur))
            .and_then(|s| s.checked_mul(2 * (j as u128 - 1)))
            .ok_or(Error::Range { what: "crossing_count", arg: k, max: j - 1 })?;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) is divisible by (i + 1) after the multiplication.
        r = r.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(r)
}

/// Double factorial `n!!`, `None` on overflow. `0!! = 1`.
pub fn double_factorial(n: u64) -> Option<u128> {
    let mut r: u128 = 1;
    let mut j = n;
    while j > 1 {
        r = r.checked_mul(j as u128)?;
        j -= 2;
    }
    Some(r)
}

/// A partition of `k` whose parts are all at least two, stored in descending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RestrictedPartition {
    parts: Vec<usize>,
}

impl RestrictedPartition {
    /// Builds a partition from parts in any order.
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Input("partition needs at least one part".into()));
        }
        if let Some(p) = parts.iter().find(|&&p| p < 2) {
            return Err(Error::Input(format!("restricted partition part {p} < 2")));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// The integer being partitioned.
    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }
}

impl std::fmt::Display for RestrictedPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Number of unrestricted partitions `pi(k)`, `None` on overflow.
pub fn partition_count(k: usize) -> Option<u128> {
    let mut t = vec![0u128; k + 1];
    t[0] = 1;
    for part in 1..=k {
        for s in part..=k {
            t[s] = t[s].checked_add(t[s - part])?;
        }
    }
    Some(t[k])
}

/// All partitions of `k` without unit parts, in descending lexicographic order.
pub fn restricted_partitions(k: usize) -> Result<Vec<RestrictedPartition>> {
    if k < 2 {
        return Err(Error::Domain(format!("restricted partitions need k >= 2, got {k}")));
    }
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<RestrictedPartition>) {
        if rest == 0 {
            out.push(RestrictedPartition { parts: cur.clone() });
            return;
        }
        for p in (2..=max.min(rest)).rev() {
            if rest - p == 1 {
                continue;
            }
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Number of contraction classes whose cycle lengths form `p`:
/// `prod_c 1/sigma_c! * prod_r C(k - m_1 - ... - m_{r-1}, m_r) (2 m_r - 2)!!`.
pub fn partition_term_count(p: &RestrictedPartition) -> Result<u128> {
    let overflow = || Error::Range { what: "partition_term_count", arg: p.total() as u64, max: 0 };
    let mut rest = p.total() as u64;
    let mut num: u128 = 1;
    for &m in p.parts() {
        let m = m as u64;
        let c = binomial(rest, m).ok_or_else(overflow)?;
        let d = double_factorial(2 * m - 2).ok_or_else(overflow)?;
        num = num.checked_mul(c).and_then(|x| x.checked_mul(d)).ok_or_else(overflow)?;
        rest -= m;
    }
    let mut den: u128 = 1;
    for sigma in multiplicities(p.parts()) {
        den *= (1..=sigma as u128).product::<u128>();
    }
    Ok(num / den)
}

fn multiplicities(parts: &[usize]) -> Vec<usize> {
    let mut m: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in parts {
        *m.entry(p).or_default() += 1;
    }
    m.into_values().collect()
}

/// One endpoint of a contraction edge: interval slot and which of its two
/// times. `end == 0` is the later time `u`, `end == 1` the earlier `u - s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Endpoint {
    pub slot: usize,
    pub end: u8,
}

impl Endpoint {
    fn from_point(p: usize) -> Self {
        Self { slot: p / 2, end: (p % 2) as u8 }
    }

    fn point(self) -> usize {
        2 * self.slot + self.end as usize
    }
}

/// A perfect matching on the `2k` times of `k` intervals with no edge inside
/// one interval. `slot` indices refer to positions in `interval_labels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ContractionClass {
    interval_labels: Vec<usize>,
    edges: Vec<(Endpoint, Endpoint)>,
}

impl ContractionClass {
    pub fn interval_labels(&self) -> &[usize] {
        &self.interval_labels
    }

    /// Edges sorted lexicographically, each with its smaller endpoint first.
    pub fn edges(&self) -> &[(Endpoint, Endpoint)] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.interval_labels.len()
    }

    fn partner(&self) -> Vec<usize> {
        let mut m = vec![0; 2 * self.k()];
        for &(a, b) in &self.edges {
            m[a.point()] = b.point();
            m[b.point()] = a.point();
        }
        m
    }

    /// Cycles of the class as seen on the intervals. Each cycle lists the
    /// endpoints in traversal order: entry into a slot, then exit from the
    /// same slot through its other time, and so on.
    pub fn cycles(&self) -> Vec<Vec<Endpoint>> {
        let partner = self.partner();
        let mut seen = vec![false; self.k()];
        let mut out = Vec::new();
        for start in 0..self.k() {
            if seen[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut p = 2 * start;
            loop {
                seen[p / 2] = true;
                cyc.push(Endpoint::from_point(p));
                let exit = p ^ 1;
                cyc.push(Endpoint::from_point(exit));
                p = partner[exit];
                if p / 2 == start {
                    break;
                }
            }
            out.push(cyc);
        }
        out
    }

    /// Cycle lengths as a restricted partition.
    pub fn partition(&self) -> RestrictedPartition {
        let parts = self.cycles().iter().map(|c| c.len() / 2).collect();
        RestrictedPartition::new(parts).expect("cycles of a class have length >= 2")
    }

    /// True when the class is a single cycle through all of its intervals.
    pub fn is_irreducible(&self) -> bool {
        self.cycles().len() == 1
    }

    /// Interval-label pairs joined by the edges, sorted; a multiset.
    pub fn monomial(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|(a, b)| ordered(self.interval_labels[a.slot], self.interval_labels[b.slot]))
            .collect();
        v.sort_unstable();
        v
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_labels(k: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != k {
        return Err(Error::Input(format!("expected {k} interval labels, got {}", labels.len())));
    }
    let mut s = labels.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != k {
        return Err(Error::Input("interval labels must be distinct".into()));
    }
    Ok(())
}

/// All `c(k)` contraction classes over the given intervals, in canonical
/// (lexicographic on sorted edges) order.
pub fn enumerate_contraction_classes(k: usize, labels: &[usize]) -> Result<Vec<ContractionClass>> {
    if !(2..=CLASS_MAX_K).contains(&k) {
        return Err(Error::Range {
            what: "enumerate_contraction_classes",
            arg: k as u64,
            max: CLASS_MAX_K as u64,
        });
    }
    check_labels(k, labels)?;
    fn rec(used: &mut [bool], cur: &mut Vec<(Endpoint, Endpoint)>, out: &mut Vec<Vec<(Endpoint, Endpoint)>>) {
        let Some(p) = used.iter().position(|u| !u) else {
            out.push(cur.clone());
            return;
        };
        used[p] = true;
        for q in p + 1..used.len() {
            if used[q] || q / 2 == p / 2 {
                continue;
            }
            used[q] = true;
            cur.push((Endpoint::from_point(p), Endpoint::from_point(q)));
            rec(used, cur, out);
            cur.pop();
            used[q] = false;
        }
        used[p] = false;
    }
    let mut raw = Vec::new();
    rec(&mut vec![false; 2 * k], &mut Vec::new(), &mut raw);
    Ok(raw
        .into_iter()
        .map(|edges| ContractionClass { interval_labels: labels.to_vec(), edges })
        .collect())
}

/// Assignment of interval labels to the rows of a Young diagram; each row
/// becomes one cycle of the contraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YoungDiagramFill {
    pub rows: Vec<Vec<usize>>,
}

/// All fills of `p` with `labels`, rows of equal length deduplicated by
/// requiring increasing smallest labels.
pub fn young_fills(p: &RestrictedPartition, labels: &[usize]) -> Result<Vec<YoungDiagramFill>> {
    check_labels(p.total(), labels)?;
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    fn rec(
        parts: &[usize],
        i: usize,
        rest: &[usize],
        prev_min: Option<usize>,
        rows: &mut Vec<Vec<usize>>,
        out: &mut Vec<YoungDiagramFill>,
    ) {
        if i == parts.len() {
            out.push(YoungDiagramFill { rows: rows.clone() });
            return;
        }
        let m = parts[i];
        let floor = if i > 0 && parts[i - 1] == m { prev_min } else { None };
        for row in combinations(rest, m) {
            if floor.is_some_and(|f| row[0] <= f) {
                continue;
            }
            let left: Vec<usize> = rest.iter().copied().filter(|x| !row.contains(x)).collect();
            let min = row[0];
            rows.push(row);
            rec(parts, i + 1, &left, Some(min), rows, out);
            rows.pop();
        }
    }
    let mut out = Vec::new();
    rec(p.parts(), 0, &sorted, None, &mut Vec::new(), &mut out);
    Ok(out)
}

fn combinations(items: &[usize], m: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], m: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, m, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, m, 0, &mut Vec::new(), &mut out);
    out
}

/// Distinct undirected cycles through all of `labels`: one for two labels,
/// `(m-1)!/2` for `m >= 3`. Each cycle starts at the first label.
pub fn undirected_cycles(labels: &[usize]) -> Vec<Vec<usize>> {
    match labels.len() {
        0 | 1 => Vec::new(),
        2 => vec![labels.to_vec()],
        _ => {
            let first = labels[0];
            permutations(&labels[1..])
                .into_iter()
                .filter(|p| p[0] < p[p.len() - 1])
                .map(|p| std::iter::once(first).chain(p).collect())
                .collect()
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Number of contraction classes realising one undirected cycle of length `m`.
pub fn cycle_multiplicity(m: usize) -> u128 {
    if m == 2 {
        2
    } else {
        1u128 << m
    }
}

/// Label pairs along a closed cycle, sorted.
pub fn cycle_pairs(cycle: &[usize]) -> Vec<(usize, usize)> {
    let m = cycle.len();
    let mut v: Vec<(usize, usize)> = (0..m).map(|i| ordered(cycle[i], cycle[(i + 1) % m])).collect();
    v.sort_unstable();
    v
}

/// A product of pairwise kernel ratios with its multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundTerm {
    /// Label pairs of the monomial, sorted, with repetition.
    pub pairs: Vec<(usize, usize)>,
    pub multiplicity: u128,
}

impl BoundTerm {
    /// Value of the monomial for a pairwise ratio function.
    pub fn evaluate(&self, gamma: impl Fn(usize, usize) -> f64) -> f64 {
        self.multiplicity as f64 * self.pairs.iter().map(|&(i, j)| gamma(i, j)).product::<f64>()
    }
}

/// The distinct ratio monomials bounding the classes of partition `p` over
/// `labels`, each with the number of classes that map onto it.
pub fn cyclic_bound_terms(p: &RestrictedPartition, labels: &[usize]) -> Result<Vec<BoundTerm>> {
    let mut out = Vec::new();
    for fill in young_fills(p, labels)? {
        let mut acc: Vec<BoundTerm> = vec![BoundTerm { pairs: Vec::new(), multiplicity: 1 }];
        for row in &fill.rows {
            let mult = cycle_multiplicity(row.len());
            let mut next = Vec::new();
            for t in &acc {
                for cyc in undirected_cycles(row) {
                    let mut pairs = t.pairs.clone();
                    pairs.extend(cycle_pairs(&cyc));
                    pairs.sort_unstable();
                    next.push(BoundTerm { pairs, multiplicity: t.multiplicity * mult });
                }
            }
            acc = next;
        }
        out.extend(acc);
    }
    Ok(out)
}

/// Number of distinct monomials `B_P` for partition `p`.
pub fn partition_monomial_count(p: &RestrictedPartition) -> Result<u128> {
    let labels: Vec<usize> = (0..p.total()).collect();
    Ok(cyclic_bound_terms(p, &labels)?.len() as u128)
}
