//! Detector worldlines and their pulled-back Wightman functions.
//!
//! For a static inertial detector the vacuum two-point function of a massless
//! scalar in 3+1 dimensions is
//!
//! ```text
//! W(s) = -1 / (4 pi^2 (s - i eps)^2)
//! ```
//!
//! and for uniform proper acceleration `alpha`
//!
//! ```text
//! W(s) = -alpha^2 / (16 pi^2 sinh^2(alpha s / 2 - i alpha eps))
//! ```
//!
//! with `s` the proper-time difference and `eps > 0` the regulator. Both depend
//! on `s` only (stationarity). Near `s = 0` both behave as
//! `-1 / (4 pi^2 (s - i delta)^2)` with `delta = eps` (inertial) or
//! `delta = 2 eps` (accelerated); [`WightmanKernel::singular_shift`] exposes
//! `delta` and [`WightmanKernel::smooth_part`] the regular remainder.

use crate::schedule::RepetitionSchedule;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Detector trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Worldline {
    /// Static detector at a fixed spatial point.
    Inertial,
    /// Uniform proper acceleration `alpha` (units of inverse time).
    Accelerated { alpha: f64 },
}

impl Worldline {
    /// Checks `alpha > 0` for accelerated motion.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Worldline::Accelerated { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::Domain(format!("acceleration must be positive, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

/// Unruh temperature `alpha / 2 pi`; `None` for the inertial detector.
pub fn unruh_temperature(w: &Worldline) -> Option<f64> {
    match *w {
        Worldline::Inertial => None,
        Worldline::Accelerated { alpha } => Some(alpha / (2.0 * PI)),
    }
}

/// Regularized Wightman function along a worldline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WightmanKernel {
    worldline: Worldline,
    regulator_epsilon: f64,
}

impl WightmanKernel {
    pub fn new(worldline: Worldline, regulator_epsilon: f64) -> Result<Self> {
        worldline.validate()?;
        if !(regulator_epsilon > 0.0 && regulator_epsilon.is_finite()) {
            return Err(Error::Domain(format!(
                "regulator_epsilon must be positive, got {regulator_epsilon}"
            )));
        }
        Ok(Self { worldline, regulator_epsilon })
    }

    pub fn worldline(&self) -> Worldline {
        self.worldline
    }

    pub fn regulator_epsilon(&self) -> f64 {
        self.regulator_epsilon
    }

    /// Same worldline with another regulator.
    pub fn with_regulator(&self, regulator_epsilon: f64) -> Result<Self> {
        Self::new(self.worldline, regulator_epsilon)
    }

    /// `W_eps(s)` at the kernel's regulator.
    pub fn eval(&self, s: f64) -> Complex64 {
        self.eval_at(s, self.regulator_epsilon)
    }

    /// `W(s)` with an arbitrary real regulator shift (any sign).
    pub fn eval_at(&self, s: f64, eps: f64) -> Complex64 {
        match self.worldline {
            Worldline::Inertial => {
                let z = Complex64::new(s, -eps);
                -1.0 / (FOUR_PI_SQ * z * z)
            }
            Worldline::Accelerated { alpha } => {
                let z = Complex64::new(alpha * s / 2.0, -alpha * eps);
                -alpha * alpha / (16.0 * PI * PI) * inv_sinh_sq(z)
            }
        }
    }

    /// Real `eps -> 0` limit at `s != 0`.
    pub fn limit(&self, s: f64) -> f64 {
        match self.worldline {
            Worldline::Inertial => -1.0 / (FOUR_PI_SQ * s * s),
            Worldline::Accelerated { alpha } => {
                let x = (alpha * s / 2.0).abs();
                let v = if x > 20.0 {
                    let w = (-2.0 * x).exp();
                    4.0 * w / ((1.0 - w) * (1.0 - w))
                } else {
                    let sh = x.sinh();
                    1.0 / (sh * sh)
                };
                -alpha * alpha / (16.0 * PI * PI) * v
            }
        }
    }

    /// Shift `delta` in the leading singularity `-1/(4 pi^2 (s - i delta)^2)`.
    pub fn singular_shift(&self) -> f64 {
        match self.worldline {
            Worldline::Inertial => self.regulator_epsilon,
            Worldline::Accelerated { .. } => 2.0 * self.regulator_epsilon,
        }
    }

    /// Regular remainder `W_0(s) + 1/(4 pi^2 s^2)` at `eps = 0`; finite at `s = 0`.
    pub fn smooth_part(&self, s: f64) -> f64 {
        match self.worldline {
            Worldline::Inertial => 0.0,
            Worldline::Accelerated { alpha } => {
                let x = alpha * s / 2.0;
                -alpha * alpha / (16.0 * PI * PI) * inv_sinh_sq_minus_pole(x)
            }
        }
    }

    /// Richardson estimate of the `eps -> 0` real part from the values at
    /// `eps`, `eps/2`, `eps/4`. Returns `(limit, error estimate)`.
    pub fn richardson_limit(&self, s: f64) -> (f64, f64) {
        let e = self.regulator_epsilon;
        let f: Vec<f64> = [e, e / 2.0, e / 4.0].iter().map(|&h| self.eval_at(s, h).re).collect();
        // The real part is even in eps, so the expansion runs in eps^2.
        let r1 = (4.0 * f[1] - f[0]) / 3.0;
        let r2 = (4.0 * f[2] - f[1]) / 3.0;
        let r = (16.0 * r2 - r1) / 15.0;
        (r, (r - r2).abs())
    }
}

/// `1 / sinh^2(z)` for complex `z`, stable for large `|Re z|`.
fn inv_sinh_sq(z: Complex64) -> Complex64 {
    let z = if z.re < 0.0 { -z } else { z };
    if z.re > 1.0 {
        let w = (-2.0 * z).exp();
        let d = Complex64::new(1.0, 0.0) - w;
        4.0 * w / (d * d)
    } else {
        let sh = z.sinh();
        1.0 / (sh * sh)
    }
}

/// `1/sinh^2(x) - 1/x^2` without cancellation near zero.
fn inv_sinh_sq_minus_pole(x: f64) -> f64 {
    let x = x.abs();
    if x < 0.1 {
        let y = x * x;
        -1.0 / 3.0 + y * (1.0 / 15.0 + y * (-2.0 / 189.0 + y * (1.0 / 675.0 + y * (-2.0 / 10395.0))))
    } else if x > 20.0 {
        let w = (-2.0 * x).exp();
        4.0 * w / ((1.0 - w) * (1.0 - w)) - 1.0 / (x * x)
    } else {
        let sh = x.sinh();
        1.0 / (sh * sh) - 1.0 / (x * x)
    }
}

/// Kernel value at the extreme points of two intervals,
/// `w_ij = W(T |N_i - N_j| - T_on)` at `eps -> 0`.
pub fn extreme_point_value(
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
    i: usize,
    j: usize,
) -> Result<f64> {
    let gap = schedule.period() * i.abs_diff(j) as f64 - schedule.t_on();
    if i == j || gap <= 0.0 {
        return Err(Error::Domain(format!("intervals {i} and {j} overlap")));
    }
    Ok(kernel.limit(gap))
}

/// Free-function form of [`WightmanKernel::eval`].
pub fn eval_kernel(kernel: &WightmanKernel, s: f64) -> Complex64 {
    kernel.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(alpha: f64, eps: f64) -> WightmanKernel {
        WightmanKernel::new(Worldline::Accelerated { alpha }, eps).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(WightmanKernel::new(Worldline::Inertial, 0.0).is_err());
        assert!(WightmanKernel::new(Worldline::Accelerated { alpha: -1.0 }, 1e-3).is_err());
    }

    #[test]
    fn inertial_limit_at_unit_separation() {
        let k = WightmanKernel::new(Worldline::Inertial, 1e-9).unwrap();
        let v = k.eval(1.0).re;
        assert!((v + 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!((k.limit(1.0) + 2.533_029_591_058_444e-2).abs() < 1e-15);
    }

    #[test]
    fn accelerated_small_alpha_approaches_inertial() {
        let a = acc(1e-3, 1e-9);
        let i = WightmanKernel::new(Worldline::Inertial, 1e-9).unwrap();
        let rel = (a.limit(1.0) - i.limit(1.0)) / i.limit(1.0);
        // 1/sinh^2 expansion: relative shift -alpha^2 s^2 / 12.
        assert!((rel + 1e-6 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_part_matches_difference() {
        let k = acc(0.7, 1e-3);
        for &s in &[0.05, 0.3, 1.0, 4.0, 40.0] {
            let d = k.limit(s) + 1.0 / (4.0 * PI * PI * s * s);
            assert!((k.smooth_part(s) - d).abs() < 1e-12 * (1.0 + d.abs()), "s={s}");
        }
        let at0 = 0.49 / (48.0 * PI * PI);
        assert!((k.smooth_part(0.0) - at0).abs() < 1e-15);
    }

    #[test]
    fn accelerated_singularity_shift() {
        let k = acc(0.5, 1e-4);
        let s = 1e-4;
        let w = k.eval(s);
        let z = Complex64::new(s, -k.singular_shift());
        let sing = -1.0 / (4.0 * PI * PI * z * z);
        let rel = ((w - sing) / sing).norm();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn unruh_temperatures() {
        assert!(unruh_temperature(&Worldline::Inertial).is_none());
        let t = unruh_temperature(&Worldline::Accelerated { alpha: 2.0 * PI }).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_separation_does_not_overflow() {
        let k = acc(1.0, 1e-3);
        let v = k.eval(3000.0);
        assert!(v.re.is_finite() && v.im.is_finite());
        assert!(k.limit(3000.0) <= 0.0);
    }
}
