//! Sequential Bayesian discrimination between exact Born statistics `H1(q)`
//! and Born statistics with small history-dependent corrections `H2(q)`.
//!
//! The posterior is a density over `(family, q)` on a uniform grid of `q`
//! values, normalised with the trapezoidal rule so that
//! `sum_i int P(H_i(q)) dq = 1`.

use crate::strings::{born_string_prob, BitString};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Default number of grid points in `q`.
pub const DEFAULT_GRID: usize = 1024;

/// Default verdict threshold: "much larger" read as "at least as large".
pub const DEFAULT_KAPPA: f64 = 1.0;

/// Hypothesis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Exact Born statistics.
    H1,
    /// Born statistics plus corrections.
    H2,
}

/// Posterior density over both families on a uniform `q` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    grid: Vec<f64>,
    weights: Vec<f64>,
    density: [Vec<f64>; 2],
}

impl Posterior {
    /// Uniform prior: density 1/2 for each family on `[0, 1]`.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Input("posterior grid needs at least two points".into()));
        }
        let h = 1.0 / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
        let weights = (0..points)
            .map(|i| if i == 0 || i == points - 1 { h / 2.0 } else { h })
            .collect();
        let half = vec![0.5; points];
        Ok(Self { grid, weights, density: [half.clone(), half] })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self, family: Family) -> &[f64] {
        &self.density[family as usize]
    }

    /// `int P(H_i(q)) dq` for one family.
    pub fn family_mass(&self, family: Family) -> f64 {
        self.integrate(&self.density[family as usize])
    }

    /// Total mass over both families.
    pub fn total_mass(&self) -> f64 {
        self.family_mass(Family::H1) + self.family_mass(Family::H2)
    }

    /// Marginal density in `q`, summed over families.
    pub fn q_marginal(&self) -> Vec<f64> {
        self.density[0].iter().zip(&self.density[1]).map(|(a, b)| a + b).collect()
    }

    /// Grid point where the `q` marginal peaks.
    pub fn q_mode(&self) -> f64 {
        let m = self.q_marginal();
        let i = (0..m.len()).fold(0, |best, i| if m[i] > m[best] { i } else { best });
        self.grid[i]
    }

    fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }
}

/// Order at which the correction enters the `H2` likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    /// `P_q(B) + eps Delta P_q(B)`.
    First,
    /// `P_q(B) + eps^2 Delta2_q(B)`.
    Second,
}

/// Correction function `(q, B) -> Delta` shared across threads.
pub type DeltaFn = Arc<dyn Fn(f64, &BitString) -> f64 + Send + Sync>;

/// The `H2` family: coupling, correction function and verdict threshold.
#[derive(Clone)]
pub struct CorrectionModel {
    pub epsilon: f64,
    pub order: Order,
    pub kappa: f64,
    delta: DeltaFn,
}

impl fmt::Debug for CorrectionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorrectionModel")
            .field("epsilon", &self.epsilon)
            .field("order", &self.order)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl CorrectionModel {
    pub fn new(epsilon: f64, order: Order, delta: DeltaFn) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("coupling epsilon must be non-negative, got {epsilon}")));
        }
        Ok(Self { epsilon, order, kappa: DEFAULT_KAPPA, delta })
    }

    /// Replaces the verdict threshold.
    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Model without corrections.
    pub fn none(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, Order::First, Arc::new(|_, _| 0.0))
    }

    pub fn delta(&self, q: f64, b: &BitString) -> f64 {
        (self.delta)(q, b)
    }

    fn weight(&self) -> f64 {
        match self.order {
            Order::First => self.epsilon,
            Order::Second => self.epsilon * self.epsilon,
        }
    }

    /// `P(B | H2(q))`.
    pub fn h2_likelihood(&self, q: f64, b: &BitString) -> Result<f64> {
        Ok(born_string_prob(q, b)? + self.weight() * self.delta(q, b))
    }
}

/// Bayes update of the posterior on the outcome string `b`.
pub fn update_posterior(p: &Posterior, b: &BitString, m: &CorrectionModel) -> Result<Posterior> {
    let likelihoods: Vec<(f64, f64)> = p
        .grid
        .par_iter()
        .map(|&q| Ok((born_string_prob(q, b)?, m.h2_likelihood(q, b)?)))
        .collect::<Result<_>>()?;
    if let Some((q, _)) = p.grid.iter().zip(&likelihoods).find(|(_, l)| !(l.1 >= 0.0 && l.1.is_finite())) {
        return Err(Error::Input(format!("H2 likelihood is negative or not finite at q = {q}")));
    }
    let mut next = p.clone();
    for (i, &(l1, l2)) in likelihoods.iter().enumerate() {
        next.density[0][i] *= l1;
        next.density[1][i] *= l2;
    }
    let total = next.total_mass();
    if !(total > 0.0) {
        return Err(Error::DegenerateEvidence);
    }
    for d in next.density.iter_mut() {
        for x in d.iter_mut() {
            *x /= total;
        }
    }
    Ok(next)
}

/// Whether the corrections can be resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Born statistics are adequate for all practical purposes.
    Indistinguishable,
    H2Selected,
}

/// `H2Selected` iff `|Delta| / P_q(B) >= kappa / eps` (first order) or
/// `>= kappa / eps^2` (second order).
pub fn fapp_verdict(q: f64, b: &BitString, m: &CorrectionModel) -> Result<Verdict> {
    let p = born_string_prob(q, b)?;
    if !(p > 0.0) {
        return Err(Error::Domain("Born probability of the string vanishes".into()));
    }
    let w = m.weight();
    let ratio = m.delta(q, b).abs() / p;
    Ok(if w > 0.0 && ratio * w >= m.kappa {
        Verdict::H2Selected
    } else {
        Verdict::Indistinguishable
    })
}

/// First-order corrections of one step, for outcomes 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepQ1 {
    pub zero: f64,
    pub one: f64,
}

impl StepQ1 {
    fn get(&self, bit: bool) -> f64 {
        if bit {
            self.one
        } else {
            self.zero
        }
    }
}

/// `Delta P_q(B) = sum_j Q1_{b_j}(j) prod_{j' != j} p_{b_j'}` with
/// `p_1 = q`, `p_0 = 1 - q`.
pub fn delta_p_first_order(q: f64, steps: &[StepQ1], b: &BitString) -> Result<f64> {
    if steps.len() != b.len() {
        return Err(Error::Input(format!("{} step corrections for a string of length {}", steps.len(), b.len())));
    }
    let p = |bit: bool| if bit { q } else { 1.0 - q };
    let bits = b.bits();
    Ok((0..bits.len())
        .map(|j| {
            let others: f64 = (0..bits.len()).filter(|&k| k != j).map(|k| p(bits[k])).product();
            steps[j].get(bits[j]) * others
        })
        .sum())
}

/// [`delta_p_first_order`] on every point of a `q` grid.
pub fn delta_p_on_grid(grid: &[f64], steps: &[StepQ1], b: &BitString) -> Result<Vec<f64>> {
    grid.iter().map(|&q| delta_p_first_order(q, steps, b)).collect()
}
