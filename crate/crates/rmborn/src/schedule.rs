//! Switching profiles and the repetition grid.
//!
//! Repetition interval `k` spans `[kT, (k+1)T)` with `T = T_on + T_off`. The
//! detector interacts during `I_k = [kT, kT + T_on]` and is measured during
//! the remaining `T_off`. Every interaction window carries a copy of the same
//! switching profile centred at `kT + T_on/2`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Half-width, in units of sigma, of the integration window used for the
/// untruncated Gaussian; `chi^2` at the edge is `exp(-144)`.
pub const GAUSSIAN_REFERENCE_HALF_WIDTH: f64 = 12.0;

/// Shape of one switching window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SwitchingProfile {
    /// `exp(-x^2 / 2 sigma^2)` restricted to the interaction window.
    TruncatedGaussian { sigma: f64 },
    /// `exp(x^2 / (x^2 - delta^2))` for `|x| < delta`, zero elsewhere.
    Bump { delta: f64 },
    /// `exp(-x^2 / 2 sigma^2)` on the whole line; reference shape assumed by
    /// the closed-form response functions.
    Gaussian { sigma: f64 },
}

impl SwitchingProfile {
    /// Profile value at offset `x` from the window centre, ignoring truncation.
    pub fn shape(&self, x: f64) -> f64 {
        match *self {
            SwitchingProfile::TruncatedGaussian { sigma } | SwitchingProfile::Gaussian { sigma } => {
                (-x * x / (2.0 * sigma * sigma)).exp()
            }
            SwitchingProfile::Bump { delta } => {
                if x.abs() < delta {
                    (x * x / (x * x - delta * delta)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Declared support half-width: `4 sigma`, `delta`, or `None` for the
    /// untruncated Gaussian.
    pub fn support_half_width(&self) -> Option<f64> {
        match *self {
            SwitchingProfile::TruncatedGaussian { sigma } => Some(4.0 * sigma),
            SwitchingProfile::Bump { delta } => Some(delta),
            SwitchingProfile::Gaussian { .. } => None,
        }
    }

    /// Characteristic width used to size quadrature panels.
    pub fn scale(&self) -> f64 {
        match *self {
            SwitchingProfile::TruncatedGaussian { sigma } | SwitchingProfile::Gaussian { sigma } => sigma,
            SwitchingProfile::Bump { delta } => delta / 4.0,
        }
    }

    /// Gaussian width, if the profile is Gaussian.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            SwitchingProfile::TruncatedGaussian { sigma } | SwitchingProfile::Gaussian { sigma } => Some(sigma),
            SwitchingProfile::Bump { .. } => None,
        }
    }

    /// True when the profile vanishes identically outside a bounded window.
    pub fn is_compact(&self) -> bool {
        !matches!(self, SwitchingProfile::Gaussian { .. })
    }

    fn width(&self) -> f64 {
        match *self {
            SwitchingProfile::TruncatedGaussian { sigma } | SwitchingProfile::Gaussian { sigma } => sigma,
            SwitchingProfile::Bump { delta } => delta,
        }
    }
}

/// Interaction and measurement grid plus switching profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSchedule {
    t_on: f64,
    t_off: f64,
    count: usize,
    profile: SwitchingProfile,
}

impl RepetitionSchedule {
    pub fn new(profile: SwitchingProfile, t_on: f64, t_off: f64, count: usize) -> Result<Self> {
        let w = profile.width();
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("switching width must be positive, got {w}")));
        }
        if !(t_on > 0.0 && t_off > 0.0 && t_on.is_finite() && t_off.is_finite()) {
            return Err(Error::Domain(format!("t_on and t_off must be positive, got {t_on}, {t_off}")));
        }
        if count == 0 {
            return Err(Error::Domain("schedule needs at least one repetition".into()));
        }
        if let SwitchingProfile::Bump { delta } = profile {
            if 2.0 * delta > t_on {
                return Err(Error::Domain(format!("bump half-width {delta} exceeds t_on/2")));
            }
        }
        Ok(Self { t_on, t_off, count, profile })
    }

    /// Default grid for a truncated Gaussian: `T_on = 8 sigma`, `T_off = 10 T_on`.
    pub fn gaussian_default(sigma: f64, count: usize) -> Result<Self> {
        Self::new(SwitchingProfile::TruncatedGaussian { sigma }, 8.0 * sigma, 80.0 * sigma, count)
    }

    pub fn t_on(&self) -> f64 {
        self.t_on
    }

    pub fn t_off(&self) -> f64 {
        self.t_off
    }

    /// Period `T = T_on + T_off`.
    pub fn period(&self) -> f64 {
        self.t_on + self.t_off
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn profile(&self) -> SwitchingProfile {
        self.profile
    }

    /// Interaction window `I_k = [kT, kT + T_on]`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let a = k as f64 * self.period();
        (a, a + self.t_on)
    }

    /// Centre of window `k`.
    pub fn center(&self, k: usize) -> f64 {
        k as f64 * self.period() + self.t_on / 2.0
    }

    /// Integration window of profile `k`: the support of the profile, or a
    /// `12 sigma` half-width window for the untruncated Gaussian.
    pub fn window(&self, k: usize) -> (f64, f64) {
        let c = self.center(k);
        match self.profile {
            SwitchingProfile::TruncatedGaussian { .. } => self.interval(k),
            SwitchingProfile::Bump { delta } => (c - delta, c + delta),
            SwitchingProfile::Gaussian { sigma } => {
                let h = GAUSSIAN_REFERENCE_HALF_WIDTH * sigma;
                (c - h, c + h)
            }
        }
    }

    /// Profile `k` at time `tau`, zero outside its window.
    pub fn chi_k(&self, k: usize, tau: f64) -> f64 {
        match self.profile {
            SwitchingProfile::Gaussian { .. } => self.profile.shape(tau - self.center(k)),
            _ => {
                let (a, b) = self.interval(k);
                if tau < a || tau > b {
                    0.0
                } else {
                    self.profile.shape(tau - self.center(k))
                }
            }
        }
    }

    /// Full switching function: the profile of the window containing `tau`,
    /// zero in measurement intervals. The untruncated Gaussian sums all
    /// `count` profiles.
    pub fn chi_rm(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match self.profile {
            SwitchingProfile::Gaussian { .. } => (0..self.count).map(|k| self.chi_k(k, tau)).sum(),
            _ => {
                let k = (tau / self.period()).floor() as usize;
                if k >= self.count {
                    0.0
                } else {
                    self.chi_k(k, tau)
                }
            }
        }
    }
}

/// Admissible number of repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Repetitions {
    /// Compact profiles never leak into other windows.
    Unbounded,
    Bounded(u64),
}

/// Safety factor turning `N_max << 1/residual` into a number.
pub const NMAX_SAFETY_FACTOR: f64 = 1e-2;

/// Largest repetition count for which a non-compact profile is still
/// negligible outside its own window: `floor(0.01 / residual)`, where the
/// residual is the largest profile value outside the interaction window.
pub fn max_repetitions(schedule: &RepetitionSchedule) -> Repetitions {
    match schedule.profile() {
        SwitchingProfile::Gaussian { .. } => {
            let residual = schedule.profile().shape(schedule.t_on() / 2.0);
            Repetitions::Bounded((NMAX_SAFETY_FACTOR / residual).floor() as u64)
        }
        _ => Repetitions::Unbounded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_edges() {
        let s = RepetitionSchedule::gaussian_default(1.0, 8).unwrap();
        assert_eq!(s.chi_rm(3.0 * s.period() + 4.0), 1.0);
        assert!((s.chi_rm(2.0 * s.period()) - (-8.0f64).exp()).abs() < 1e-18);
        assert_eq!(s.chi_rm(2.0 * s.period() + 20.0), 0.0);
        assert_eq!(s.chi_rm(-1.0), 0.0);
    }

    #[test]
    fn validates() {
        assert!(RepetitionSchedule::new(SwitchingProfile::Bump { delta: 5.0 }, 8.0, 80.0, 1).is_err());
        assert!(RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: -1.0 }, 8.0, 80.0, 1).is_err());
        assert!(RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: 1.0 }, 8.0, 0.0, 1).is_err());
    }

    #[test]
    fn nmax_examples() {
        let g = RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: 1.0 }, 8.0, 80.0, 4).unwrap();
        assert_eq!(max_repetitions(&g), Repetitions::Bounded(29));
        let t = RepetitionSchedule::gaussian_default(1.0, 4).unwrap();
        assert_eq!(max_repetitions(&t), Repetitions::Unbounded);
    }

    #[test]
    fn bump_is_zero_at_edge() {
        let p = SwitchingProfile::Bump { delta: 2.0 };
        assert_eq!(p.shape(2.0), 0.0);
        assert_eq!(p.shape(0.0), 1.0);
        assert!(p.shape(1.9) > 0.0);
    }
}
