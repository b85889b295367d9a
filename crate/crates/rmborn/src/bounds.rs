//! Tight and loose bounds on conditional excitation probabilities and the
//! horizon beyond which the loose bounds stop being probabilities.
//!
//! With `gamma_ij = W(T |N_i - N_j| - T_on) / W(T_on)` every cross-window
//! F-fraction over a set `S` of windows satisfies `|F_S| <= B_S`, where `B_S`
//! sums the cyclic monomials of `gamma_ij`, and `sign F_S = (-1)^|S|`. Splitting
//! numerator and denominator sums by parity gives the tight bounds. Replacing
//! every `gamma_ij` by the adjacent-window value `gamma` gives the loose bounds
//!
//! ```text
//! L(n; +-) = sum_{k even / odd, k <= n} C(n, k) c(k) gamma^k
//! ```

use crate::combinatorics::{cyclic_bound_terms, restricted_partitions};
use crate::kernel::{extreme_point_value, WightmanKernel};
use crate::response::HistoryRecord;
use crate::schedule::RepetitionSchedule;
use crate::{Error, Result};
use serde::Serialize;

/// Largest `n` examined by [`n_limit`].
pub const HORIZON_SEARCH_CAP: u64 = 10_000;

/// Largest history for which tight bounds are enumerated.
pub const TIGHT_MAX_N: usize = 4;

/// Which construction produced a bound pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Tight,
    Loose,
}

/// Lower and upper bound on a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub kind: BoundKind,
    /// False when `upper > 1`; the pair then carries no information.
    pub meaningful: bool,
    /// True when tight bounds were requested but loose ones returned.
    pub fell_back: bool,
}

impl BoundPair {
    fn new(lower: f64, upper: f64, kind: BoundKind, fell_back: bool) -> Self {
        Self { lower: lower.max(0.0), upper, kind, meaningful: upper <= 1.0, fell_back }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// True when `other` lies inside `self`, up to a relative slack.
    pub fn contains_pair(&self, other: &BoundPair, rel: f64) -> bool {
        other.lower >= self.lower * (1.0 - rel) && other.upper <= self.upper * (1.0 + rel)
    }
}

/// Checks that the kernel is negative and increasing on `[T_on, horizon]`
/// (so `|W|` decreases with separation), then returns `W(T_off) / W(T_on)`.
pub fn gamma_of(kernel: &WightmanKernel, schedule: &RepetitionSchedule) -> Result<f64> {
    check_monotone(kernel, schedule)?;
    Ok(kernel.limit(schedule.t_off()) / kernel.limit(schedule.t_on()))
}

fn check_monotone(kernel: &WightmanKernel, schedule: &RepetitionSchedule) -> Result<()> {
    let lo = schedule.t_off().min(schedule.t_on());
    let hi = schedule.period() * (schedule.count().max(2) as f64);
    let n = 256;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=n {
        let s = lo * (hi / lo).powf(i as f64 / n as f64);
        let w = kernel.limit(s);
        if !(w < 0.0) || w < prev {
            return Err(Error::Hypothesis(format!("kernel not negative and increasing at s = {s}")));
        }
        prev = w;
    }
    Ok(())
}

/// Pairwise ratio `gamma_ij`.
pub fn gamma_ij(kernel: &WightmanKernel, schedule: &RepetitionSchedule, i: usize, j: usize) -> Result<f64> {
    Ok(extreme_point_value(kernel, schedule, i, j)? / kernel.limit(schedule.t_on()))
}

/// `ln c(k)` for `k = 0..=n`; `-inf` at `k = 1`.
///
/// Uses `r_k = c(k) / (2k-1)!!`, which satisfies
/// `r_k = 2(k-1)/(2k-1) [r_{k-1} + r_{k-2}/(2k-3)]` and tends to `e^{-1/2}`.
fn ln_crossing_table(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut r2, mut r1) = (1.0f64, 0.0f64);
    let mut ln_df = 0.0f64;
    out.push(0.0);
    if n >= 1 {
        out.push(f64::NEG_INFINITY);
    }
    for k in 2..=n {
        let kf = k as f64;
        let r = 2.0 * (kf - 1.0) / (2.0 * kf - 1.0) * (r1 + r2 / (2.0 * kf - 3.0));
        ln_df += (2.0 * kf - 3.0).ln();
        // ln_df now holds ln (2k-3)!!; add ln(2k-1) for (2k-1)!!.
        out.push(ln_df + (2.0 * kf - 1.0).ln() + r.ln());
        r2 = r1;
        r1 = r;
    }
    out
}

/// `(L(n; +), L(n; -))`: even and odd parts of `sum_{k>=1} C(n,k) c(k) gamma^k`.
pub fn crossing_sums(n: u64, gamma: f64) -> (f64, f64) {
    crossing_sums_with(&ln_crossing_table(n as usize), n, gamma)
}

fn crossing_sums_with(ln_c: &[f64], n: u64, gamma: f64) -> (f64, f64) {
    if n < 2 || gamma <= 0.0 {
        return (0.0, 0.0);
    }
    let lg = gamma.ln();
    let mut ln_binom = 0.0f64;
    let mut terms = [Vec::new(), Vec::new()];
    for k in 1..=n {
        ln_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        if k >= 2 {
            terms[(k % 2) as usize].push(ln_binom + ln_c[k as usize] + k as f64 * lg);
        }
    }
    let lse = |v: &[f64]| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m.exp() * v.iter().map(|t| (t - m).exp()).sum::<f64>()
    };
    (lse(&terms[0]), lse(&terms[1]))
}

/// Relative deviations `(eps_n, delta_n)` of the loose bounds from `q`:
/// `upper = q (1 + eps_n)`, `lower = q (1 - delta_n)`.
pub fn loose_deviations(n: u64, gamma: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("loose bounds need n >= 1".into()));
    }
    let (plus_n, minus_n) = crossing_sums(n, gamma);
    let (plus_p, minus_p) = crossing_sums(n - 1, gamma);
    let den = 1.0 - minus_p;
    if den <= 0.0 {
        return Err(Error::HorizonExceeded { n });
    }
    let eps = (plus_n + minus_p) / den;
    let delta = (minus_n + plus_p) / (1.0 + plus_p);
    Ok((eps, delta))
}

/// History-independent loose bounds
/// `[q (1 - L(n;-)) / (1 + L(n-1;+)), q (1 + L(n;+)) / (1 - L(n-1;-))]`.
pub fn loose_bounds(n: u64, q: f64, gamma: f64) -> Result<BoundPair> {
    let (eps, delta) = loose_deviations(n, gamma)?;
    Ok(BoundPair::new(q * (1.0 - delta), q * (1.0 + eps), BoundKind::Loose, false))
}

/// The three horizon conditions and their minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Horizon {
    /// Largest `n` with `1 - L(n;-) > 0`.
    pub n1: u64,
    /// Largest `n` with `1 - L(n-1;-) > 0`.
    pub n2: u64,
    /// Largest `n` with loose upper bound below one.
    pub n3: u64,
    pub n_limit: u64,
}

/// Validity horizon `min{N1, N2, N3}`, searched up to [`HORIZON_SEARCH_CAP`].
pub fn horizon(q: f64, gamma: f64) -> Horizon {
    let cap = HORIZON_SEARCH_CAP;
    let ln_c = ln_crossing_table(cap as usize);
    let (mut f1, mut f2, mut f3) = (None, None, None);
    let mut prev = (0.0, 0.0);
    for n in 1..=cap {
        let cur = crossing_sums_with(&ln_c, n, gamma);
        if f1.is_none() && 1.0 - cur.1 <= 0.0 {
            f1 = Some(n);
        }
        let den = 1.0 - prev.1;
        if f2.is_none() && den <= 0.0 {
            f2 = Some(n);
        }
        if f3.is_none() && !(den > 0.0 && q * (1.0 + cur.0) / den < 1.0) {
            f3 = Some(n);
        }
        if f1.is_some() && f2.is_some() && f3.is_some() {
            break;
        }
        prev = cur;
    }
    let last = |f: Option<u64>| f.map_or(cap, |n| n - 1);
    let (n1, n2, n3) = (last(f1), last(f2), last(f3));
    Horizon { n1, n2, n3, n_limit: n1.min(n2).min(n3) }
}

/// Largest `n` for which the loose bounds remain meaningful.
pub fn n_limit(q: f64, gamma: f64) -> u64 {
    horizon(q, gamma).n_limit
}

/// Sum of the cyclic bound monomials for one window set.
fn set_bound(set: &[usize], gamma: &dyn Fn(usize, usize) -> f64) -> Result<f64> {
    let mut b = 0.0;
    for p in restricted_partitions(set.len())? {
        for t in cyclic_bound_terms(&p, set)? {
            b += t.evaluate(gamma);
        }
    }
    Ok(b)
}

/// Tight bounds from an explicit pairwise ratio function.
pub fn tight_bounds_with(h: &HistoryRecord, q: f64, gamma: &dyn Fn(usize, usize) -> f64) -> Result<BoundPair> {
    let all = h.windows();
    let n = all.len();
    let (mut num_even, mut num_odd, mut den_even, mut den_odd) = (0.0, 0.0, 0.0, 0.0);
    for mask in 1u32..(1 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
        let b = set_bound(&set, gamma)?;
        let even = set.len() % 2 == 0;
        let in_history = !set.contains(&h.query());
        if even {
            num_even += b;
        } else {
            num_odd += b;
        }
        if in_history {
            if even {
                den_even += b;
            } else {
                den_odd += b;
            }
        }
    }
    let den = 1.0 - den_odd;
    if den <= 0.0 {
        return Err(Error::HorizonExceeded { n: n as u64 });
    }
    Ok(BoundPair::new(
        q * (1.0 - num_odd) / (1.0 + den_even),
        q * (1.0 + num_even) / den,
        BoundKind::Tight,
        false,
    ))
}

/// Tight bounds for a history, built from `gamma_ij` of the kernel. Falls
/// back to loose bounds (flagged) beyond [`TIGHT_MAX_N`] windows or when the
/// kernel violates the monotonicity hypothesis.
pub fn tight_bounds(
    h: &HistoryRecord,
    q: f64,
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
) -> Result<BoundPair> {
    let n = h.n();
    let fallback = || -> Result<BoundPair> {
        let g = kernel.limit(schedule.t_off()) / kernel.limit(schedule.t_on());
        let mut b = loose_bounds(n as u64, q, g)?;
        b.fell_back = true;
        Ok(b)
    };
    if n > TIGHT_MAX_N {
        return fallback();
    }
    if check_monotone(kernel, schedule).is_err() {
        return fallback();
    }
    let w_on = kernel.limit(schedule.t_on());
    let gamma = |i: usize, j: usize| {
        extreme_point_value(kernel, schedule, i, j).map(|w| w / w_on).unwrap_or(f64::NAN)
    };
    tight_bounds_with(h, q, &gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::crossing_count;

    #[test]
    fn log_table_matches_exact_counts() {
        let t = ln_crossing_table(25);
        for k in 2..=25u64 {
            let exact = crossing_count(k).unwrap() as f64;
            assert!((t[k as usize] - exact.ln()).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn loose_small_n() {
        let g = 0.01;
        let b1 = loose_bounds(1, 0.1, g).unwrap();
        assert_eq!((b1.lower, b1.upper), (0.1, 0.1));
        let b2 = loose_bounds(2, 0.1, g).unwrap();
        assert!((b2.lower - 0.1).abs() < 1e-17);
        assert!((b2.upper - 0.1 * (1.0 + 2.0 * g * g)).abs() < 1e-16);
        let b3 = loose_bounds(3, 0.1, g).unwrap();
        let lo = 0.1 * (1.0 - 8.0 * g.powi(3)) / (1.0 + 2.0 * g * g);
        assert!((b3.lower - lo).abs() < 1e-16);
        assert!((b3.upper - 0.1 * (1.0 + 6.0 * g * g)).abs() < 1e-16);
    }

    #[test]
    fn tight_equals_loose_for_equal_ratios() {
        let g = 0.05;
        let h = HistoryRecord::new(vec![0, 1, 2], 3).unwrap();
        let t = tight_bounds_with(&h, 0.2, &|_, _| g).unwrap();
        let lo = 0.2 * (1.0 - 32.0 * g.powi(3)) / (1.0 + 6.0 * g * g);
        let up = 0.2 * (1.0 + 12.0 * g * g + 60.0 * g.powi(4)) / (1.0 - 8.0 * g.powi(3));
        assert!((t.lower - lo).abs() < 1e-15 && (t.upper - up).abs() < 1e-15);
        let l = loose_bounds(4, 0.2, g).unwrap();
        assert!((t.lower - l.lower).abs() < 1e-15 && (t.upper - l.upper).abs() < 1e-15);
    }

    #[test]
    fn horizon_grows_as_gamma_shrinks() {
        assert!(n_limit(0.1, 0.001) > n_limit(0.1, 0.01));
        assert_eq!(n_limit(0.1, 1e-9), HORIZON_SEARCH_CAP);
    }

    #[test]
    fn horizon_near_one_is_set_by_upper_bound() {
        let h = horizon(0.999, 0.01);
        assert_eq!(h.n_limit, h.n3);
        assert!(h.n3 < h.n1);
    }
}
