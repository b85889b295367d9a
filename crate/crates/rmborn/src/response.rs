//! Excitation probabilities, irreducible integrals and history-dependent
//! conditional probabilities.
//!
//! The single-window excitation probability is
//!
//! ```text
//! q = 2 lambda^2 int_0^W ds g(s) Re[exp(-i omega s) W_eps(s)],
//! g(s) = int du chi(u) chi(u - s)
//! ```
//!
//! The `eps -> 0` limit is taken analytically. The singular part
//! `-1/(4 pi^2 (s - i delta)^2)` is integrated in closed form against the
//! first two Taylor terms of `h(s) = g(s) exp(-i omega s)`, which leaves a
//! bounded remainder that Gauss-Legendre panels integrate at `eps = 0`. When
//! the profile jumps at the window edges (`g'(0) != 0`), a term proportional
//! to `ln(W/delta)` survives. It is evaluated at the kernel's own regulator
//! and reported separately.
//!
//! Cross-window corrections are sums over Wick contraction classes. Swapping
//! the two times inside one window maps classes onto classes, so the sum over
//! all classes equals a sum over undirected cycles of window-to-window
//! couplings. Each cycle is integrated over the full square of each window.

use crate::combinatorics::{cycle_multiplicity, restricted_partitions, undirected_cycles, young_fills, ContractionClass, Endpoint};
use crate::kernel::{WightmanKernel, Worldline};
use crate::quadrature::{composite_from, compensated_sum, gauss_legendre, panel_count, qmc_integrate, Estimate, QuadratureConfig};
use crate::schedule::{RepetitionSchedule, SwitchingProfile};
use crate::special::gaussian_excess_tail;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use statrs::function::erf::erf_inv;
use std::f64::consts::PI;
use std::sync::Mutex;

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Coupling above which the perturbative expansion is flagged.
pub const WEAK_COUPLING_LIMIT: f64 = 0.1;

/// Default history cap for conditional probabilities.
pub const DEFAULT_MAX_HISTORY: usize = 4;

/// Default relative tail tolerance of the accelerated closed form.
pub const ACCELERATED_TAIL_TOLERANCE: f64 = 1e-9;

/// Detector gap and coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub omega: f64,
    pub lambda: f64,
}

impl DetectorParams {
    pub fn new(omega: f64, lambda: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Domain(format!("omega must be positive, got {omega}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(Self { omega, lambda })
    }

    /// True when the coupling is above [`WEAK_COUPLING_LIMIT`].
    pub fn strong_coupling_warning(&self) -> bool {
        self.lambda > WEAK_COUPLING_LIMIT
    }
}

/// How a probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    BoundMidpoint,
}

/// A probability with its absolute error estimate and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityResult {
    pub value: f64,
    pub abs_error: f64,
    pub method: Method,
}

impl ProbabilityResult {
    pub fn new(value: f64, abs_error: f64, method: Method) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::BoundViolation(format!("probability {value} outside [0, 1]")));
        }
        Ok(Self { value, abs_error: abs_error.abs(), method })
    }
}

/// Excitation record `N_1 < ... < N_{n-1}` and query window `L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryRecord {
    excitations: Vec<usize>,
    query: usize,
}

impl HistoryRecord {
    pub fn new(excitations: Vec<usize>, query: usize) -> Result<Self> {
        if excitations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("excitation windows must be strictly increasing".into()));
        }
        if excitations.last().is_some_and(|&l| l >= query) {
            return Err(Error::Input("query window must follow every excitation".into()));
        }
        Ok(Self { excitations, query })
    }

    pub fn excitations(&self) -> &[usize] {
        &self.excitations
    }

    pub fn query(&self) -> usize {
        self.query
    }

    /// Number of windows involved, `n`.
    pub fn n(&self) -> usize {
        self.excitations.len() + 1
    }

    /// All windows, history first.
    pub fn windows(&self) -> Vec<usize> {
        let mut v = self.excitations.clone();
        v.push(self.query);
        v
    }
}

/// Closed-form excitation probability of a Gaussian-switched inertial detector:
/// `(lambda^2 / 4 pi) [exp(-w^2 s^2) - w s Gamma(1/2, w^2 s^2)]`.
pub fn q_closed_inertial(d: &DetectorParams, sigma: f64) -> Result<ProbabilityResult> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let x = d.omega * sigma;
    // Gamma(1/2, x^2) = sqrt(pi) erfc(x); the bracket equals 2 exp(-x^2) f(x)
    // with f the excess tail, which avoids cancellation at large x.
    let v = d.lambda * d.lambda / (2.0 * PI) * (-x * x).exp() * gaussian_excess_tail(x);
    ProbabilityResult::new(v, 4.0 * f64::EPSILON * v, Method::ClosedForm)
}

/// Closed-form excitation probability of a Gaussian-switched uniformly
/// accelerated detector, summed over `|n| <= n_max` thermal images, with a
/// rigorous bound on the omitted tail as the error. Fails when the tail
/// exceeds [`ACCELERATED_TAIL_TOLERANCE`] relative.
pub fn q_closed_accelerated(d: &DetectorParams, sigma: f64, alpha: f64, n_max: u64) -> Result<ProbabilityResult> {
    q_closed_accelerated_tol(d, sigma, alpha, n_max, ACCELERATED_TAIL_TOLERANCE)
}

/// [`q_closed_accelerated`] with an explicit relative tail tolerance.
pub fn q_closed_accelerated_tol(
    d: &DetectorParams,
    sigma: f64,
    alpha: f64,
    n_max: u64,
    tolerance: f64,
) -> Result<ProbabilityResult> {
    if !(sigma > 0.0) || !(alpha > 0.0) || n_max < 1 {
        return Err(Error::Domain(format!(
            "need sigma > 0, alpha > 0, n_max >= 1 (got {sigma}, {alpha}, {n_max})"
        )));
    }
    let ws = d.omega * sigma;
    let c = PI / (alpha * sigma);
    let pref = d.lambda * d.lambda / (2.0 * PI) * (-ws * ws).exp();
    // Image n contributes f(a_n) with a_n = -Xi_n r_n, r_n = ws + b_n/(2 sigma),
    // b_n = -2 pi n / alpha; for n > 0 that is c n - ws, for n = -m <= 0 it is ws + c m.
    let terms = std::iter::once(gaussian_excess_tail(ws)).chain((1..=n_max).flat_map(|m| {
        let m = m as f64;
        [gaussian_excess_tail(c * m - ws), gaussian_excess_tail(c * m + ws)]
    }));
    let mut v: Vec<f64> = terms.collect();
    let edge = c * n_max as f64 - ws;
    if edge <= 0.0 {
        return Err(Error::Truncation { tail: f64::INFINITY, tolerance, n_max });
    }
    // Omitted images m > n_max: f(a) = 1/(4a^2) + r(a) with -3/(8a^4) <= r <= 0.
    // The leading part is summed by the midpoint rule, which for this convex
    // summand overestimates by at most sum g''/24 with g'' = 3 c^2 / (2 a^4).
    let mid = c * (n_max as f64 + 0.5);
    v.push(1.0 / (4.0 * c * (mid - ws)) + 1.0 / (4.0 * c * (mid + ws)));
    // Sum smallest first.
    v.reverse();
    let sum = compensated_sum(v);
    let value = pref * sum;
    let quartic_tail = 2.0 / (3.0 * c * edge.powi(3));
    let tail = pref * (3.0 / 8.0 + c * c / 16.0) * quartic_tail;
    if tail > tolerance * value {
        return Err(Error::Truncation { tail: tail / value, tolerance, n_max });
    }
    ProbabilityResult::new(value, tail + 8.0 * f64::EPSILON * value, Method::ClosedForm)
}

/// [`q_closed_accelerated_tol`] with `n_max` doubled until the tail bound
/// drops below `tolerance` (relative).
pub fn q_closed_accelerated_adaptive(d: &DetectorParams, sigma: f64, alpha: f64, tolerance: f64) -> Result<ProbabilityResult> {
    let mut n_max = 16u64;
    loop {
        match q_closed_accelerated_tol(d, sigma, alpha, n_max, tolerance) {
            Err(Error::Truncation { .. }) if n_max < (1 << 28) => n_max *= 2,
            other => return other,
        }
    }
}

/// Closed form matching the kernel's worldline.
pub fn q_closed(kernel: &WightmanKernel, d: &DetectorParams, sigma: f64) -> Result<ProbabilityResult> {
    match kernel.worldline() {
        Worldline::Inertial => q_closed_inertial(d, sigma),
        Worldline::Accelerated { alpha } => q_closed_accelerated_adaptive(d, sigma, alpha, ACCELERATED_TAIL_TOLERANCE),
    }
}

/// Direct evaluation of `q` with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectResponse {
    pub result: ProbabilityResult,
    /// Value with the regulator-dependent logarithm removed.
    pub finite_part: f64,
    /// Size of the `ln(W/delta)` term at the kernel's regulator.
    pub log_term: f64,
    /// `delta` of the leading kernel singularity.
    pub singular_shift: f64,
}

fn direct_integral(
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
    omega: f64,
    k: usize,
    order: usize,
    panels_per_scale: usize,
) -> (f64, f64) {
    let (a, b) = schedule.window(k);
    let width = b - a;
    let chi = |t: f64| schedule.chi_k(k, t);
    let panel = schedule.profile().scale() / panels_per_scale.max(1) as f64;
    let base = gauss_legendre(order);
    let g = |s: f64| -> f64 {
        let lo = a + s;
        let rule = composite_from(&base, lo, b, panel_count(b - lo, panel));
        compensated_sum(rule.iter().map(|&(u, w)| w * chi(u) * chi(u - s)))
    };
    let g0 = g(0.0);
    let g1 = -(chi(a).powi(2) + chi(b).powi(2)) / 2.0;
    let h1 = Complex64::new(g1, -omega * g0);
    let outer = composite_from(&base, 0.0, width, panel_count(width, panel));
    let rem = compensated_sum(outer.iter().map(|&(s, w)| {
        let gs = g(s);
        let h = gs * Complex64::new(0.0, -omega * s).exp();
        let r = (h - g0 - h1 * s) / (s * s);
        w * (-r.re / FOUR_PI_SQ + gs * (omega * s).cos() * kernel.smooth_part(s))
    }));
    let analytic = -(-g0 / width + g1 * (width.ln() - 1.0) + omega * g0 * PI / 2.0) / FOUR_PI_SQ;
    // Coefficient of -ln(delta) is -g1/(4 pi^2).
    (analytic + rem, -g1 / FOUR_PI_SQ)
}

/// `q` by direct quadrature on window `k`, with diagnostics.
pub fn q_direct_on(
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
    d: &DetectorParams,
    cfg: &QuadratureConfig,
    k: usize,
) -> Result<DirectResponse> {
    let lam2 = d.lambda * d.lambda;
    let (fine, log_coef) = direct_integral(kernel, schedule, d.omega, k, cfg.gl_order, cfg.panels_per_scale);
    let coarse_order = (cfg.gl_order * 3 / 4).max(4);
    let (coarse, _) = direct_integral(kernel, schedule, d.omega, k, coarse_order, cfg.panels_per_scale);
    let delta = kernel.singular_shift();
    let log_term = 2.0 * lam2 * log_coef * -delta.ln();
    let finite_part = 2.0 * lam2 * fine;
    let value = finite_part + log_term;
    let error = 2.0 * lam2 * (fine - coarse).abs() + 4.0 * f64::EPSILON * value.abs();
    if error > cfg.tolerance * value.abs() {
        return Err(Error::Numerical {
            message: format!("q_direct on window {k} did not converge (log term {log_term:e})"),
            value,
            error,
        });
    }
    Ok(DirectResponse {
        result: ProbabilityResult::new(value, error, Method::Quadrature)?,
        finite_part,
        log_term,
        singular_shift: delta,
    })
}

/// `q` by direct quadrature on window 0.
pub fn q_direct(
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
    d: &DetectorParams,
    cfg: &QuadratureConfig,
) -> Result<ProbabilityResult> {
    Ok(q_direct_on(kernel, schedule, d, cfg, 0)?.result)
}

/// Source of the single-window response `Q = q / lambda^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSource {
    /// Gaussian closed forms (the default).
    #[default]
    ClosedForm,
    /// Direct quadrature over the schedule's profile.
    Direct,
}

/// `Q = q / lambda^2`.
pub fn cal_q(
    kernel: &WightmanKernel,
    schedule: &RepetitionSchedule,
    omega: f64,
    cfg: &QuadratureConfig,
    source: QSource,
) -> Result<Estimate> {
    let unit = DetectorParams::new(omega, 1.0)?;
    let r = match source {
        QSource::ClosedForm => {
            let sigma = schedule
                .profile()
                .sigma()
                .ok_or_else(|| Error::Input("closed-form Q needs a Gaussian profile".into()))?;
            q_closed(kernel, &unit, sigma)?
        }
        QSource::Direct => q_direct(kernel, schedule, &unit, cfg)?,
    };
    Ok(Estimate::new(r.value, r.abs_error))
}

/// How cycle integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMethod {
    /// Gauss-Legendre for two-window cycles, Sobol for longer ones.
    #[default]
    Auto,
    /// Gauss-Legendre tensor product for every cycle, contracted as a trace
    /// of transfer matrices.
    TensorTrace,
    /// Sobol for every cycle.
    Qmc,
}

/// Longest cycle integrated by Sobol sampling.
const MAX_QMC_CYCLE: usize = 16;

/// Maps a unit coordinate to a time in window 0 together with `chi dt / dx`.
enum WindowSampler {
    /// Inverse distribution function of the truncated Gaussian, so that the
    /// weight is the constant profile mass.
    Gaussian { center: f64, scale: f64, edge: f64, mass: f64 },
    /// Linear map with the profile carried in the weight.
    Uniform { a: f64, width: f64, schedule: RepetitionSchedule },
}

impl WindowSampler {
    fn sample(&self, x: f64) -> (f64, f64) {
        match *self {
            WindowSampler::Gaussian { center, scale, edge, mass } => {
                (center + scale * erf_inv(edge * (2.0 * x - 1.0)), mass)
            }
            WindowSampler::Uniform { a, width, ref schedule } => {
                let t = a + width * x;
                (t, width * schedule.chi_k(0, t))
            }
        }
    }
}

/// Per-window nodes: positions and `weight * chi` values.
struct WindowNodes {
    t: Vec<f64>,
    wchi: Vec<f64>,
}

/// Repeated-measurement response of one detector: caches cycle integrals and
/// evaluates F-fractions and conditional probabilities.
pub struct ResponseModel {
    kernel: WightmanKernel,
    schedule: RepetitionSchedule,
    detector: DetectorParams,
    quad: QuadratureConfig,
    cycle_method: CycleMethod,
    cal_q: Estimate,
    max_history: usize,
    cycles: Mutex<HashMap<Vec<usize>, Estimate>>,
}

impl ResponseModel {
    pub fn new(
        kernel: WightmanKernel,
        schedule: RepetitionSchedule,
        detector: DetectorParams,
        quad: QuadratureConfig,
        q_source: QSource,
        cycle_method: CycleMethod,
    ) -> Result<Self> {
        if !schedule.profile().is_compact() {
            return Err(Error::Input("cross-window integrals need a compactly supported profile".into()));
        }
        let cal_q = cal_q(&kernel, &schedule, detector.omega, &quad, q_source)?;
        Ok(Self {
            kernel,
            schedule,
            detector,
            quad,
            cycle_method,
            cal_q,
            max_history: DEFAULT_MAX_HISTORY,
            cycles: Mutex::new(HashMap::new()),
        })
    }

    /// Raises or lowers the history cap (default 4).
    pub fn with_max_history(mut self, n: usize) -> Self {
        self.max_history = n;
        self
    }

    pub fn kernel(&self) -> &WightmanKernel {
        &self.kernel
    }

    pub fn schedule(&self) -> &RepetitionSchedule {
        &self.schedule
    }

    pub fn detector(&self) -> &DetectorParams {
        &self.detector
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// `Q = q / lambda^2`.
    pub fn cal_q(&self) -> Estimate {
        self.cal_q
    }

    /// Single-window excitation probability `q = lambda^2 Q`.
    pub fn q(&self) -> Estimate {
        self.cal_q.scale(self.detector.lambda * self.detector.lambda)
    }

    fn check_windows(&self, labels: &[usize]) -> Result<()> {
        if let Some(&l) = labels.iter().find(|&&l| l >= self.schedule.count()) {
            return Err(Error::Input(format!(
                "window {l} beyond the schedule's {} repetitions",
                self.schedule.count()
            )));
        }
        Ok(())
    }

    fn window_nodes(&self, order: usize) -> WindowNodes {
        let (a, b) = self.schedule.window(0);
        let panel = self.schedule.profile().scale() / self.quad.panels_per_scale.max(1) as f64;
        let rule = composite_from(&gauss_legendre(order), a, b, panel_count(b - a, panel));
        let t: Vec<f64> = rule.iter().map(|r| r.0).collect();
        let wchi = rule.iter().map(|&(x, w)| w * self.schedule.chi_k(0, x)).collect();
        WindowNodes { t, wchi }
    }

    /// Trace of transfer matrices for a cycle, Gauss-Legendre nodes of `order`.
    fn cycle_trace(&self, cycle: &[usize], order: usize) -> f64 {
        let nodes = self.window_nodes(order);
        let n = nodes.t.len();
        let omega = self.detector.omega;
        let a = DMatrix::from_fn(n, n, |p, r| {
            nodes.wchi[p] * nodes.wchi[r] * (omega * (nodes.t[p] - nodes.t[r])).cos()
        });
        let period = self.schedule.period();
        let m = cycle.len();
        let mut acc = DMatrix::<f64>::identity(n, n);
        for i in 0..m {
            let shift = (cycle[(i + 1) % m] as f64 - cycle[i] as f64) * period;
            let k = DMatrix::from_fn(n, n, |p, r| self.kernel.limit(nodes.t[p] - nodes.t[r] - shift));
            acc = acc * &a * k;
        }
        acc.trace()
    }

    fn sampler(&self) -> WindowSampler {
        let (a, b) = self.schedule.window(0);
        match self.schedule.profile() {
            SwitchingProfile::TruncatedGaussian { sigma } => {
                let scale = sigma * std::f64::consts::SQRT_2;
                let edge = libm::erf((b - a) / 2.0 / scale);
                WindowSampler::Gaussian {
                    center: (a + b) / 2.0,
                    scale,
                    edge,
                    mass: sigma * (2.0 * PI).sqrt() * edge,
                }
            }
            _ => WindowSampler::Uniform { a, width: b - a, schedule: self.schedule },
        }
    }

    fn cycle_qmc(&self, cycle: &[usize], points: usize) -> Result<Estimate> {
        let m = cycle.len();
        if m > MAX_QMC_CYCLE {
            return Err(Error::Input(format!("cycles longer than {MAX_QMC_CYCLE} windows are not supported")));
        }
        let sampler = self.sampler();
        let period = self.schedule.period();
        let omega = self.detector.omega;
        let offsets: Vec<f64> = cycle.iter().map(|&c| c as f64 * period).collect();
        qmc_integrate(2 * m, points, self.quad.seed, |x| {
            let mut v = 1.0;
            let mut t = [0.0; MAX_QMC_CYCLE];
            let mut tp = [0.0; MAX_QMC_CYCLE];
            for j in 0..m {
                let (a, wa) = sampler.sample(x[2 * j]);
                let (b, wb) = sampler.sample(x[2 * j + 1]);
                v *= wa * wb * (omega * (a - b)).cos();
                t[j] = a + offsets[j];
                tp[j] = b + offsets[j];
            }
            for j in 0..m {
                v *= self.kernel.limit(tp[j] - t[(j + 1) % m]);
            }
            v
        })
    }

    /// Integral of one undirected cycle of window couplings over the full
    /// square of every window.
    pub fn cycle_integral(&self, cycle: &[usize]) -> Result<Estimate> {
        if cycle.len() < 2 {
            return Err(Error::Input("a cycle needs at least two windows".into()));
        }
        self.check_windows(cycle)?;
        let key = canonical_cycle(cycle);
        if let Some(e) = self.cycles.lock().expect("cache lock").get(&key) {
            return Ok(*e);
        }
        let use_qmc = match self.cycle_method {
            CycleMethod::Auto => key.len() >= 3,
            CycleMethod::TensorTrace => false,
            CycleMethod::Qmc => true,
        };
        let est = if use_qmc {
            self.cycle_qmc(&key, self.quad.qmc_points)?
        } else {
            let fine = self.cycle_trace(&key, self.quad.gl_order);
            let coarse = self.cycle_trace(&key, (self.quad.gl_order * 3 / 4).max(4));
            Estimate::new(fine, (fine - coarse).abs() + 1e-14 * fine.abs())
        };
        self.cycles.lock().expect("cache lock").insert(key, est);
        Ok(est)
    }

    /// Evaluates the cycle integrals needed by the given window sets in parallel.
    pub fn prefetch(&self, sets: &[Vec<usize>]) -> Result<()> {
        let mut keys: Vec<Vec<usize>> = Vec::new();
        for s in sets {
            self.check_windows(s)?;
            for c in cycles_of_set(s)? {
                let k = canonical_cycle(&c);
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
        }
        keys.par_iter().map(|k| self.cycle_integral(k).map(|_| ())).collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    /// Sum over all contraction classes of the windows in `set`, `C_k`.
    pub fn class_sum(&self, set: &[usize]) -> Result<Estimate> {
        let k = set.len();
        if k < 2 {
            return Err(Error::Input("class sums need at least two windows".into()));
        }
        self.check_windows(set)?;
        let mut total = Estimate::exact(0.0);
        for p in restricted_partitions(k)? {
            for fill in young_fills(&p, set)? {
                let mut prod = Estimate::exact(1.0);
                for row in &fill.rows {
                    let mut row_sum = Estimate::exact(0.0);
                    for cyc in undirected_cycles(row) {
                        row_sum = row_sum + self.cycle_integral(&cyc)?;
                    }
                    prod = prod * row_sum.scale(cycle_multiplicity(row.len()) as f64);
                }
                total = total + prod;
            }
        }
        Ok(total)
    }

    /// `F = C_k / Q^k` for the windows in `set`.
    pub fn f_fraction(&self, set: &[usize]) -> Result<Estimate> {
        let c = self.class_sum(set)?;
        let k = set.len() as i32;
        let qk = self.cal_q.value.powi(k);
        let rel_q = self.cal_q.error / self.cal_q.value;
        let value = c.value / qk;
        Ok(Estimate::new(value, c.error / qk + value.abs() * k as f64 * rel_q))
    }

    /// Single contraction class integrated over the `(u, s)` triangles of
    /// its windows with the per-window weight `2 chi(u) chi(u-s) cos(omega s)`.
    pub fn irreducible_integral(&self, class: &ContractionClass) -> Result<Estimate> {
        self.check_windows(class.interval_labels())?;
        let mut total = Estimate::exact(2f64.powi(class.k() as i32));
        for cyc in class.cycles() {
            let e = if cyc.len() == 4 && !matches!(self.cycle_method, CycleMethod::Qmc) {
                self.class_cycle_gl(class, &cyc)
            } else {
                self.class_cycle_qmc(class, &cyc)?
            };
            total = total * e;
        }
        Ok(total)
    }

    /// Endpoint times of one window from unit coordinates on its triangle.
    fn triangle_times(&self, label: usize, x: f64, y: f64) -> ([f64; 2], f64) {
        let (a, b) = self.schedule.window(label);
        let u = a + (b - a) * x;
        let s = (u - a) * y;
        let tau = [u, u - s];
        let w = (b - a) * (u - a)
            * self.schedule.chi_k(label, tau[0])
            * self.schedule.chi_k(label, tau[1])
            * (self.detector.omega * s).cos();
        (tau, w)
    }

    fn class_cycle_qmc(&self, class: &ContractionClass, cyc: &[Endpoint]) -> Result<Estimate> {
        let labels = class.interval_labels();
        let m = cyc.len() / 2;
        if m > MAX_QMC_CYCLE {
            return Err(Error::Input(format!("cycles longer than {MAX_QMC_CYCLE} windows are not supported")));
        }
        let sampler = self.sampler();
        let period = self.schedule.period();
        let omega = self.detector.omega;
        qmc_integrate(2 * m, self.quad.qmc_points, self.quad.seed, |x| {
            let mut v = 1.0;
            let mut times = [[0.0; 2]; MAX_QMC_CYCLE];
            for j in 0..m {
                // The triangle u >= u - s is half the square, visited twice
                // by ordering two independent samples.
                let (a, wa) = sampler.sample(x[2 * j]);
                let (b, wb) = sampler.sample(x[2 * j + 1]);
                let offset = labels[cyc[2 * j].slot] as f64 * period;
                times[j] = [a.max(b) + offset, a.min(b) + offset];
                v *= 0.5 * wa * wb * (omega * (a - b)).cos();
            }
            for j in 0..m {
                let exit = cyc[2 * j + 1];
                let jn = (j + 1) % m;
                let entry = cyc[2 * jn];
                v *= self.kernel.limit(times[j][exit.end as usize] - times[jn][entry.end as usize]);
            }
            v
        })
    }

    fn class_cycle_gl(&self, class: &ContractionClass, cyc: &[Endpoint]) -> Estimate {
        let eval = |order: usize| {
            let base = composite_from(&gauss_legendre(order), 0.0, 1.0, 2);
            let labels = class.interval_labels();
            let pts = |label: usize| -> Vec<([f64; 2], f64)> {
                let mut v = Vec::with_capacity(base.len() * base.len());
                for &(x, wx) in &base {
                    for &(y, wy) in &base {
                        let (tau, w) = self.triangle_times(label, x, y);
                        v.push((tau, w * wx * wy));
                    }
                }
                v
            };
            let p0 = pts(labels[cyc[0].slot]);
            let p1 = pts(labels[cyc[2].slot]);
            let (e0, n1, e1, n0) = (cyc[1].end as usize, cyc[2].end as usize, cyc[3].end as usize, cyc[0].end as usize);
            compensated_sum(p0.par_iter().map(|(t0, w0)| {
                compensated_sum(p1.iter().map(|(t1, w1)| {
                    w0 * w1 * self.kernel.limit(t0[e0] - t1[n1]) * self.kernel.limit(t1[e1] - t0[n0])
                }))
            }).collect::<Vec<f64>>())
        };
        let fine = eval(self.quad.gl_order);
        let coarse = eval((self.quad.gl_order * 3 / 4).max(4));
        Estimate::new(fine, (fine - coarse).abs() + 1e-14 * fine.abs())
    }

    /// `P_n = q (1 + sum F over all windows) / (1 + sum F over history windows)`,
    /// returned together with the correction `P_n / q - 1`, which is formed
    /// directly from the F-fractions that involve the query window.
    pub fn conditional_excitation(&self, h: &HistoryRecord) -> Result<Conditional> {
        let n = h.n();
        if n > self.max_history {
            return Err(Error::Input(format!("history of {n} windows exceeds the cap {}", self.max_history)));
        }
        let all = h.windows();
        self.check_windows(&all)?;
        let subsets: Vec<Vec<usize>> = (1u32..(1 << n))
            .filter(|m| m.count_ones() >= 2)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| all[i]).collect())
            .collect();
        self.prefetch(&subsets)?;
        let mut with_query = Estimate::exact(0.0);
        let mut history = Estimate::exact(0.0);
        for s in &subsets {
            let f = self.f_fraction(s)?;
            if s.contains(&h.query()) {
                with_query = with_query + f;
            } else {
                history = history + f;
            }
        }
        let den = 1.0 + history.value;
        if den <= 0.0 {
            return Err(Error::BoundViolation(format!("history normalisation {den} <= 0")));
        }
        let corr = with_query.value / den;
        let corr_err = (with_query.error + corr.abs() * history.error) / den;
        let q = self.q();
        let value = q.value * (1.0 + corr);
        let abs_error = q.error * (1.0 + corr).abs() + q.value * corr_err;
        Ok(Conditional {
            probability: ProbabilityResult::new(value, abs_error, Method::Quadrature)?,
            correction: Estimate::new(corr, corr_err),
        })
    }
}

/// Conditional probability with its relative correction to `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conditional {
    pub probability: ProbabilityResult,
    /// `P_n / q - 1`.
    pub correction: Estimate,
}

/// Canonical form of an undirected cycle under rotation, reversal,
/// translation of the labels and time reversal (`label -> max - label`),
/// all of which leave the cycle integral unchanged.
fn canonical_cycle(cycle: &[usize]) -> Vec<usize> {
    let min = *cycle.iter().min().expect("non-empty cycle");
    let max = *cycle.iter().max().expect("non-empty cycle");
    let m = cycle.len();
    let shifted: Vec<usize> = cycle.iter().map(|c| c - min).collect();
    let mirrored: Vec<usize> = cycle.iter().map(|c| max - c).collect();
    let mut best: Option<Vec<usize>> = None;
    for base in [&shifted, &mirrored] {
        for start in 0..m {
            for dir in [1isize, -1] {
                let v: Vec<usize> = (0..m)
                    .map(|i| base[((start as isize + dir * i as isize).rem_euclid(m as isize)) as usize])
                    .collect();
                if best.as_ref().map_or(true, |b| v < *b) {
                    best = Some(v);
                }
            }
        }
    }
    best.expect("at least one rotation")
}

fn cycles_of_set(set: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for p in restricted_partitions(set.len())? {
        for fill in young_fills(&p, set)? {
            for row in &fill.rows {
                out.extend(undirected_cycles(row));
            }
        }
    }
    Ok(out)
}

/// Free-function form of [`ResponseModel::f_fraction`].
pub fn f_fraction(model: &ResponseModel, set: &[usize]) -> Result<Estimate> {
    model.f_fraction(set)
}

/// Free-function form of [`ResponseModel::conditional_excitation`].
pub fn conditional_excitation(model: &ResponseModel, h: &HistoryRecord) -> Result<Conditional> {
    model.conditional_excitation(h)
}

/// Free-function form of [`ResponseModel::irreducible_integral`].
pub fn irreducible_integral(model: &ResponseModel, class: &ContractionClass) -> Result<Estimate> {
    model.irreducible_integral(class)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> DetectorParams {
        DetectorParams::new(0.2, 1e-2).unwrap()
    }

    #[test]
    fn inertial_closed_form_value() {
        let q = q_closed_inertial(&fig4(), 1.0).unwrap();
        assert!((q.value / 1e-4 - 0.054_530_039_131_486_5).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_scale_with_lambda_squared() {
        let d2 = DetectorParams::new(0.2, 2e-2).unwrap();
        let a = q_closed_inertial(&fig4(), 1.0).unwrap().value;
        let b = q_closed_inertial(&d2, 1.0).unwrap().value;
        assert!((b / a - 4.0).abs() < 1e-14);
        let a = q_closed_accelerated(&fig4(), 1.0, 0.1, 1 << 18).unwrap().value;
        let b = q_closed_accelerated(&d2, 1.0, 0.1, 1 << 18).unwrap().value;
        assert!((b / a - 4.0).abs() < 1e-14);
    }

    #[test]
    fn accelerated_truncation_reported() {
        assert!(matches!(
            q_closed_accelerated(&fig4(), 1.0, 0.1, 2),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn large_gap_vanishes() {
        let d = DetectorParams::new(40.0, 1e-2).unwrap();
        assert!(q_closed_inertial(&d, 1.0).unwrap().value < 1e-300);
    }

    #[test]
    fn canonical_cycles() {
        assert_eq!(canonical_cycle(&[3, 5, 4]), vec![0, 1, 2]);
        assert_eq!(canonical_cycle(&[7, 4, 6, 5]), canonical_cycle(&[0, 3, 1, 2]));
        assert_eq!(canonical_cycle(&[0, 1, 3]), canonical_cycle(&[0, 2, 3]));
        assert_ne!(canonical_cycle(&[0, 1, 3]), canonical_cycle(&[0, 1, 2]));
    }

    #[test]
    fn history_validation() {
        assert!(HistoryRecord::new(vec![2, 1], 3).is_err());
        assert!(HistoryRecord::new(vec![1, 2], 2).is_err());
        assert_eq!(HistoryRecord::new(vec![0, 2], 5).unwrap().n(), 3);
    }

    #[test]
    fn rejects_noncompact_model() {
        let k = WightmanKernel::new(Worldline::Inertial, 1e-3).unwrap();
        let s = RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: 1.0 }, 8.0, 80.0, 4).unwrap();
        let r = ResponseModel::new(k, s, fig4(), QuadratureConfig::default(), QSource::ClosedForm, CycleMethod::Auto);
        assert!(r.is_err());
    }
}
