//! Outcome strings and their probabilities under independent Born statistics
//! and under repeated measurements with field memory.
//!
//! Bit `b_j` (1-based) records the outcome of window `j - 1`. In base-10
//! display `b_1` is the most significant bit, so `(1,1,0,0)` is 12.

use crate::bounds::loose_deviations;
use crate::kernel::{unruh_temperature, Worldline};
use crate::quadrature::{CompensatedSum, Estimate};
use crate::response::{HistoryRecord, Method, ProbabilityResult, ResponseModel};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Default cap on string length for repeated-measurement probabilities.
pub const DEFAULT_MAX_LENGTH: usize = 6;

/// Longest string representable by a `u64` id.
pub const MAX_ID_LENGTH: usize = 64;

/// Outcome string `b_1 ... b_L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Input("bit strings need at least one bit".into()));
        }
        Ok(Self { bits })
    }

    /// Parses digits such as `"1100"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Input(format!("invalid bit {c:?} in {s:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Self::new(bits)
    }

    /// String of length `len` with ones at the 1-based positions `ones`.
    pub fn from_positions(len: usize, ones: &[usize]) -> Result<Self> {
        let mut bits = vec![false; len];
        for &p in ones {
            if p == 0 || p > len {
                return Err(Error::Input(format!("position {p} outside 1..={len}")));
            }
            bits[p - 1] = true;
        }
        Self::new(bits)
    }

    /// String of length `len` whose base-10 value is `id`.
    pub fn from_id(id: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_ID_LENGTH || (len < 64 && id >> len != 0) {
            return Err(Error::Input(format!("id {id} does not fit in {len} bits")));
        }
        Self::new((0..len).map(|j| id >> (len - 1 - j) & 1 == 1).collect())
    }

    /// All strings of length `len`, ordered by id.
    pub fn all(len: usize) -> Result<Vec<Self>> {
        if len == 0 || len >= MAX_ID_LENGTH {
            return Err(Error::Input(format!("cannot enumerate strings of length {len}")));
        }
        (0..1u64 << len).map(|id| Self::from_id(id, len)).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Length `L`.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of ones `n`.
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 1-based positions of the ones, `N_1 < ... < N_n`.
    pub fn positions(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i + 1).collect()
    }

    /// Base-10 value with `b_1` most significant.
    pub fn id(&self) -> Result<u64> {
        if self.len() > MAX_ID_LENGTH {
            return Err(Error::Input("string too long for a u64 id".into()));
        }
        Ok(self.bits.iter().fold(0u64, |acc, &b| acc << 1 | b as u64))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `q^n (1 - q)^(L - n)`.
pub fn born_string_prob(q: f64, b: &BitString) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q = {q} is not a probability")));
    }
    let n = b.ones() as i32;
    Ok(q.powi(n) * (1.0 - q).powi(b.len() as i32 - n))
}

/// Repeated-measurement string probability with its Born reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmString {
    pub bits: BitString,
    pub born: f64,
    /// `ln(P_RM / P_Born)` with its error.
    pub log_ratio: Estimate,
    /// Relative correction `P_n / q - 1` of every step.
    pub step_corrections: Vec<Estimate>,
    pub probability: ProbabilityResult,
}

/// Probability of `b` under the conditional chain: each bit is drawn with the
/// excitation probability conditioned on the ones before it.
pub fn rm_string_prob(b: &BitString, model: &ResponseModel) -> Result<RmString> {
    rm_string_prob_capped(b, model, DEFAULT_MAX_LENGTH)
}

/// [`rm_string_prob`] with an explicit length cap.
pub fn rm_string_prob_capped(b: &BitString, model: &ResponseModel, max_len: usize) -> Result<RmString> {
    if b.len() > max_len {
        return Err(Error::Input(format!("string length {} exceeds the cap {max_len}", b.len())));
    }
    let q = model.q();
    let ratio = q.value / (1.0 - q.value);
    let mut log_ratio = CompensatedSum::new();
    let mut log_err = 0.0;
    let mut steps = Vec::with_capacity(b.len());
    let mut history = Vec::new();
    for (window, &bit) in b.bits().iter().enumerate() {
        let h = HistoryRecord::new(history.clone(), window)?;
        let c = model.conditional_excitation(&h)?.correction;
        if bit {
            log_ratio.add(c.value.ln_1p());
            log_err += c.error / (1.0 + c.value);
            history.push(window);
        } else {
            let x = -ratio * c.value;
            if x <= -1.0 {
                return Err(Error::BoundViolation(format!("conditional probability above one at window {window}")));
            }
            log_ratio.add(x.ln_1p());
            log_err += ratio * c.error / (1.0 + x);
        }
        steps.push(c);
    }
    let born = born_string_prob(q.value, b)?;
    let lr = log_ratio.value();
    let value = born * lr.exp();
    let n = b.ones() as f64;
    let rest = (b.len() - b.ones()) as f64;
    let born_rel = q.error * (n / q.value + rest / (1.0 - q.value));
    // Rounding of the chain: a few ulps per factor.
    let rounding = 4.0 * (b.len() + 1) as f64 * f64::EPSILON;
    let abs_error = value * (log_err + born_rel + rounding);
    Ok(RmString {
        bits: b.clone(),
        born,
        log_ratio: Estimate::new(lr, log_err),
        step_corrections: steps,
        probability: ProbabilityResult::new(value, abs_error, Method::Quadrature)?,
    })
}

/// [`rm_string_prob`] for every string of length `len`, ordered by id.
pub fn rm_string_table(model: &ResponseModel, len: usize) -> Result<Vec<RmString>> {
    let strings = BitString::all(len)?;
    // Warm the shared cycle cache once, then evaluate strings in parallel.
    let windows: Vec<usize> = (0..len).collect();
    let sets: Vec<Vec<usize>> = (1u32..(1 << len))
        .filter(|m| m.count_ones() >= 2 && m.count_ones() as usize <= DEFAULT_MAX_LENGTH)
        .map(|m| windows.iter().copied().filter(|i| m & (1 << i) != 0).collect())
        .collect();
    model.prefetch(&sets)?;
    strings.par_iter().map(|b| rm_string_prob(b, model)).collect()
}

/// Largest relative deviations `(U, L)` of the loose bounds over `n <= len`.
pub fn deviation_maxima(len: usize, gamma: f64) -> Result<(f64, f64)> {
    let mut u = 0.0f64;
    let mut l = 0.0f64;
    for n in 1..=len as u64 {
        let (eps, delta) = loose_deviations(n, gamma)?;
        u = u.max(eps);
        l = l.max(delta);
    }
    Ok((u, l))
}

/// Interval `[(1-L)^n (1-R U)^(L-n), (1+U)^n (1+R L)^(L-n)]` containing
/// `P_RM / P_Born`, with `R = q/(1-q)`. `horizon` is the validity horizon
/// of the loose bounds; strings reaching it are rejected.
pub fn ratio_bounds(b: &BitString, upper_dev: f64, lower_dev: f64, r: f64, horizon: u64) -> Result<(f64, f64)> {
    if b.len() as u64 >= horizon {
        return Err(Error::HorizonExceeded { n: b.len() as u64 });
    }
    if !(upper_dev >= 0.0 && lower_dev >= 0.0 && r >= 0.0) {
        return Err(Error::Domain("bound deviations and R must be non-negative".into()));
    }
    if lower_dev > 1.0 || r * upper_dev > 1.0 {
        return Err(Error::HorizonExceeded { n: b.len() as u64 });
    }
    let n = b.ones() as i32;
    let rest = b.len() as i32 - n;
    Ok((
        (1.0 - lower_dev).powi(n) * (1.0 - r * upper_dev).powi(rest),
        (1.0 + upper_dev).powi(n) * (1.0 + r * lower_dev).powi(rest),
    ))
}

/// Sampled, finite-window and infinite-time excitation-to-ground ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    /// `n / (L - n)`; infinite for an all-ones string.
    pub sampled: f64,
    /// `q / (1 - q)`.
    pub theoretical: f64,
    /// `0` for inertial motion, `exp(-omega / T_U)` for uniform acceleration.
    pub infinite_time: f64,
}

pub fn rate_report(b: &BitString, q: f64, worldline: &Worldline, omega: f64) -> Result<RateReport> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("q = {q} must lie in [0, 1)")));
    }
    let n = b.ones();
    let sampled = if n == b.len() { f64::INFINITY } else { n as f64 / (b.len() - n) as f64 };
    let infinite_time = unruh_temperature(worldline).map_or(0.0, |t| (-omega / t).exp());
    Ok(RateReport { sampled, theoretical: q / (1.0 - q), infinite_time })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for id in 0..16 {
            let b = BitString::from_id(id, 4).unwrap();
            assert_eq!(b.id().unwrap(), id);
            assert_eq!(BitString::from_positions(4, &b.positions()).unwrap(), b);
            assert_eq!(BitString::parse(&b.to_string()).unwrap(), b);
        }
        assert_eq!(BitString::parse("1100").unwrap().id().unwrap(), 12);
        assert_eq!(BitString::parse("0011").unwrap().id().unwrap(), 3);
        assert_eq!(BitString::parse("0110").unwrap().positions(), vec![2, 3]);
        assert!(BitString::from_id(16, 4).is_err());
    }

    #[test]
    fn born_examples() {
        let all = BitString::all(4).unwrap();
        for b in &all {
            assert_eq!(born_string_prob(0.5, b).unwrap(), 1.0 / 16.0);
        }
        let s: f64 = all.iter().map(|b| born_string_prob(0.3, b).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!((born_string_prob(0.3, &all[0]).unwrap() - 0.7f64.powi(4)).abs() < 1e-16);
    }

    #[test]
    fn ratio_bound_examples() {
        let b = BitString::parse("0000").unwrap();
        assert_eq!(ratio_bounds(&b, 0.0, 0.0, 0.1, 55).unwrap(), (1.0, 1.0));
        let (lo, hi) = ratio_bounds(&b, 0.1, 0.2, 0.5, 55).unwrap();
        assert!((lo - 0.95f64.powi(4)).abs() < 1e-15 && (hi - 1.1f64.powi(4)).abs() < 1e-15);
        assert!(ratio_bounds(&b, 0.1, 0.2, 0.5, 4).is_err());
    }

    #[test]
    fn rates() {
        let b = BitString::parse("1000").unwrap();
        let r = rate_report(&b, 0.1, &Worldline::Inertial, 0.2).unwrap();
        assert!((r.sampled - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.infinite_time, 0.0);
        let a = rate_report(&b, 0.1, &Worldline::Accelerated { alpha: 0.1 }, 0.2).unwrap();
        assert!((a.infinite_time - (-4.0 * std::f64::consts::PI).exp()).abs() < 1e-18);
        let ones = BitString::parse("11").unwrap();
        assert!(rate_report(&ones, 0.1, &Worldline::Inertial, 0.2).unwrap().sampled.is_infinite());
    }
}
