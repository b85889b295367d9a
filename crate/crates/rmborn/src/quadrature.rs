//! Quadrature building blocks: composite Gauss-Legendre rules, compensated
//! summation and randomly shifted Sobol integration.

use crate::{Error, Result};
use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use std::num::NonZeroUsize;

/// A value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error: error.abs() }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn scale(self, c: f64) -> Estimate {
        Estimate::new(self.value * c, self.error * c.abs())
    }
}

impl std::ops::Mul for Estimate {
    type Output = Estimate;

    /// Product with first-order error propagation.
    fn mul(self, other: Estimate) -> Estimate {
        Estimate::new(
            self.value * other.value,
            self.error * other.value.abs() + other.error * self.value.abs() + self.error * other.error,
        )
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;

    fn add(self, other: Estimate) -> Estimate {
        Estimate::new(self.value + other.value, self.error + other.error)
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let order = NonZeroUsize::new(order.max(2)).expect("order >= 2");
    GaussLegendre::new(order).iter().map(|(x, w)| (*x, *w)).collect()
}

/// Nodes and weights of a composite rule with `panels` equal panels on `[a, b]`.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(order);
    composite_from(&base, a, b, panels)
}

/// Composite rule from precomputed base nodes.
pub fn composite_from(base: &[(f64, f64)], a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * base.len());
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for &(x, w) in base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Number of panels so that each is at most `width` wide.
pub fn panel_count(len: f64, width: f64) -> usize {
    ((len / width).ceil() as usize).max(1)
}

/// Randomly shifted Sobol integration over `[0,1)^dims`.
///
/// Uses `points` points (a power of two) and reports the difference from the
/// estimate on the first half of the sequence as the error. The shift is drawn
/// from `seed`; the reduction order is fixed, so the result does not depend on
/// the number of worker threads.
pub fn qmc_integrate<F>(dims: usize, points: usize, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    const CHUNK: usize = 1 << 12;
    if !points.is_power_of_two() || points < 2 * CHUNK {
        return Err(Error::Input(format!(
            "qmc_points must be a power of two >= {}, got {points}",
            2 * CHUNK
        )));
    }
    let params = JoeKuoD6::minimal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (dims as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    let mut flat = Vec::with_capacity(points * dims);
    for p in Sobol::<f64>::new(dims, &params).take(points) {
        for (d, x) in p.into_iter().enumerate() {
            let y = x + shift[d];
            flat.push(if y >= 1.0 { y - 1.0 } else { y });
        }
    }
    let chunk_sums: Vec<f64> = flat
        .par_chunks(CHUNK * dims)
        .map(|chunk| compensated_sum(chunk.chunks_exact(dims).map(&f)))
        .collect();
    let half_chunks = chunk_sums.len() / 2;
    let half = compensated_sum(chunk_sums[..half_chunks].iter().copied()) / (points / 2) as f64;
    let full = compensated_sum(chunk_sums.iter().copied()) / points as f64;
    Ok(Estimate::new(full, (full - half).abs()))
}

/// Tensor-product quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes per panel.
    pub gl_order: usize,
    /// Panels per characteristic profile width.
    pub panels_per_scale: usize,
    /// Sobol points for cycles of three or more intervals.
    pub qmc_points: usize,
    /// Relative tolerance above which results are flagged.
    pub tolerance: f64,
    /// Seed of the random Sobol shift.
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { gl_order: 20, panels_per_scale: 1, qmc_points: 1 << 20, tolerance: 1e-6, seed: 0 }
    }
}
