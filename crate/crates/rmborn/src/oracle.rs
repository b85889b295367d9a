//! Exact state-vector simulation of repeated measurements on a two-level
//! detector coupled to a finite-dimensional environment.
//!
//! Step `k` applies `U_k = (U ⊗ 1) exp(-i lambda w_k H_k)` to `|0> ⊗ |f>`,
//! measures the detector and resets it to `|0>`. The environment keeps the
//! post-measurement state, so later outcomes depend on earlier ones. Product
//! basis index is `detector * d + environment`.
//!
//! With `H_k = sum_l a_l ⊗ b_l(k)` the step unitary expands as
//!
//! ```text
//! U_k = U ⊗ 1 + eps sum_l A_l ⊗ B_l(k) + eps^2 sum_{l,l'} C_{ll'} ⊗ D_{ll'}(k) + O(eps^3)
//! A_l = -i U a_l,  B_l(k) = w_k b_l(k),  C_{ll'} = -U a_l a_l' / 2,  D_{ll'}(k) = w_k^2 b_l(k) b_l'(k)
//! ```
//!
//! with `eps = lambda`.

use crate::strings::BitString;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// Largest environment dimension.
pub const MAX_ENV_DIM: usize = 64;

/// Longest string evaluated by [`exact_string_prob`].
pub const MAX_STRING_LENGTH: usize = 20;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_hermitian(m: &CMat, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Model(format!("{what} is not square")));
    }
    let d = max_abs(&(m - m.adjoint()));
    if d > HERMITIAN_TOL * (1.0 + max_abs(m)) {
        return Err(Error::Model(format!("{what} is not hermitian (deviation {d:e})")));
    }
    Ok(())
}

fn check_unitary(m: &CMat, what: &str) -> Result<()> {
    let n = m.nrows();
    let d = max_abs(&(m.adjoint() * m - CMat::identity(n, n)));
    if d > UNITARY_TOL {
        return Err(Error::Model(format!("{what} is not unitary (deviation {d:e})")));
    }
    Ok(())
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Decomposition `H_k = sum_l a_l ⊗ b_l(k)` into detector and environment
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakStructure {
    /// Hermitian 2x2 detector operators `a_l`.
    pub detector_ops: Vec<CMat>,
    /// Hermitian `d x d` environment operators, indexed `[k][l]`.
    pub env_ops: Vec<Vec<CMat>>,
}

impl WeakStructure {
    fn generator(&self, k: usize) -> CMat {
        let d = self.env_ops[k][0].nrows();
        let mut h = CMat::zeros(2 * d, 2 * d);
        for (a, b) in self.detector_ops.iter().zip(&self.env_ops[k]) {
            h += kron(a, b);
        }
        h
    }

    fn validate(&self, d: usize, steps: usize) -> Result<()> {
        if self.detector_ops.is_empty() {
            return Err(Error::Model("weak structure needs at least one term".into()));
        }
        if self.env_ops.len() != steps {
            return Err(Error::Model(format!("weak structure covers {} of {steps} steps", self.env_ops.len())));
        }
        for a in &self.detector_ops {
            if a.shape() != (2, 2) {
                return Err(Error::Model("detector operators must be 2x2".into()));
            }
            check_hermitian(a, "detector operator")?;
        }
        for row in &self.env_ops {
            if row.len() != self.detector_ops.len() {
                return Err(Error::Model("each step needs one environment operator per term".into()));
            }
            for b in row {
                if b.shape() != (d, d) {
                    return Err(Error::Model(format!("environment operators must be {d}x{d}")));
                }
                check_hermitian(b, "environment operator")?;
            }
        }
        Ok(())
    }
}

/// Detector, environment and per-step couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRmModel {
    omega: f64,
    lambda: f64,
    detector_unitary: CMat,
    generators: Vec<CMat>,
    weights: Vec<f64>,
    env0: CVec,
    weak: Option<WeakStructure>,
    unitaries: Vec<CMat>,
}

impl FiniteRmModel {
    /// Builds a model and its step unitaries. `generators[k]` acts on the
    /// `2d`-dimensional product space; `weights[k]` is the window weight of step `k`.
    pub fn new(
        omega: f64,
        lambda: f64,
        detector_unitary: CMat,
        generators: Vec<CMat>,
        weights: Vec<f64>,
        env0: CVec,
    ) -> Result<Self> {
        let d = env0.len();
        if d == 0 || d > MAX_ENV_DIM {
            return Err(Error::Model(format!("environment dimension {d} outside 1..={MAX_ENV_DIM}")));
        }
        if (env0.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::Model("initial environment state is not normalised".into()));
        }
        if detector_unitary.shape() != (2, 2) {
            return Err(Error::Model("detector unitary must be 2x2".into()));
        }
        check_unitary(&detector_unitary, "detector unitary")?;
        if generators.is_empty() || generators.len() != weights.len() {
            return Err(Error::Model("need one weight per generator and at least one step".into()));
        }
        for h in &generators {
            if h.shape() != (2 * d, 2 * d) {
                return Err(Error::Model(format!("generators must be {0}x{0}", 2 * d)));
            }
            check_hermitian(h, "generator")?;
        }
        if !(lambda >= 0.0 && lambda.is_finite() && omega.is_finite()) {
            return Err(Error::Model("lambda must be non-negative and finite".into()));
        }
        let u_full = kron(&detector_unitary, &CMat::identity(d, d));
        let unitaries = generators
            .iter()
            .zip(&weights)
            .map(|(h, &w)| {
                let u = &u_full * (h * Complex64::new(0.0, -lambda * w)).exp();
                check_unitary(&u, "step propagator").map(|_| u)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { omega, lambda, detector_unitary, generators, weights, env0, weak: None, unitaries })
    }

    /// Builds a model from a weak-structure decomposition.
    pub fn from_weak_structure(
        omega: f64,
        lambda: f64,
        detector_unitary: CMat,
        weak: WeakStructure,
        weights: Vec<f64>,
        env0: CVec,
    ) -> Result<Self> {
        weak.validate(env0.len(), weights.len())?;
        let generators = (0..weights.len()).map(|k| weak.generator(k)).collect();
        let mut m = Self::new(omega, lambda, detector_unitary, generators, weights, env0)?;
        m.weak = Some(weak);
        Ok(m)
    }

    /// Attaches a decomposition after checking it reproduces every generator.
    pub fn with_weak_structure(mut self, weak: WeakStructure) -> Result<Self> {
        weak.validate(self.env_dim(), self.steps())?;
        for (k, h) in self.generators.iter().enumerate() {
            let dev = max_abs(&(weak.generator(k) - h));
            if dev > 1e-10 * (1.0 + max_abs(h)) {
                return Err(Error::Model(format!("weak structure does not reproduce generator {k} (deviation {dev:e})")));
            }
        }
        self.weak = Some(weak);
        Ok(self)
    }

    /// Same model with a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let m = Self::new(
            self.omega,
            lambda,
            self.detector_unitary.clone(),
            self.generators.clone(),
            self.weights.clone(),
            self.env0.clone(),
        )?;
        Ok(Self { weak: self.weak.clone(), ..m })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn env_dim(&self) -> usize {
        self.env0.len()
    }

    pub fn steps(&self) -> usize {
        self.generators.len()
    }

    pub fn initial_env(&self) -> &CVec {
        &self.env0
    }

    pub fn detector_unitary(&self) -> &CMat {
        &self.detector_unitary
    }

    pub fn weak_structure(&self) -> Option<&WeakStructure> {
        self.weak.as_ref()
    }

    /// Step propagator `U_k`.
    pub fn step_unitary(&self, k: usize) -> Result<&CMat> {
        self.unitaries
            .get(k)
            .ok_or_else(|| Error::Input(format!("step {k} beyond the model's {} steps", self.steps())))
    }

    /// Fresh trajectory at the initial environment state.
    pub fn start(&self) -> TrajectoryState {
        TrajectoryState { env: self.env0.clone(), bits: Vec::new(), probability: 1.0 }
    }
}

/// Environment state, outcomes so far and their joint probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub env: CVec,
    pub bits: Vec<bool>,
    pub probability: f64,
}

/// Outcome probabilities of one step and the conditional environment states.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub p: [f64; 2],
    /// Normalised environment state after each outcome; `None` if impossible.
    pub post: [Option<CVec>; 2],
}

/// Outcome distribution of step `k` from the trajectory state `t`.
pub fn step_distribution(m: &FiniteRmModel, t: &TrajectoryState, k: usize) -> Result<StepDistribution> {
    let u = m.step_unitary(k)?;
    let d = m.env_dim();
    if (t.env.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Model("trajectory environment state is not normalised".into()));
    }
    // |0> ⊗ f occupies the first d components; U applied to it is its first d columns.
    let psi = u.columns(0, d) * &t.env;
    let mut p = [0.0; 2];
    let mut post = [None, None];
    for b in 0..2 {
        let amp: CVec = psi.rows(b * d, d).into_owned();
        let n2 = amp.norm_squared();
        p[b] = n2;
        if n2 > 0.0 {
            post[b] = Some(amp.unscale(n2.sqrt()));
        }
    }
    if (p[0] + p[1] - 1.0).abs() > 1e-12 {
        return Err(Error::Model(format!("step {k} probabilities sum to {}", p[0] + p[1])));
    }
    Ok(StepDistribution { p, post })
}

/// Advances a trajectory by one step with the given outcome.
pub fn advance(m: &FiniteRmModel, t: &TrajectoryState, bit: bool) -> Result<TrajectoryState> {
    let k = t.bits.len();
    let dist = step_distribution(m, t, k)?;
    let b = bit as usize;
    let mut bits = t.bits.clone();
    bits.push(bit);
    let env = dist.post[b].clone().unwrap_or_else(|| t.env.clone());
    Ok(TrajectoryState { env, bits, probability: t.probability * dist.p[b] })
}

/// Exact probability of the outcome string `b`.
pub fn exact_string_prob(m: &FiniteRmModel, b: &BitString) -> Result<f64> {
    if b.len() > MAX_STRING_LENGTH {
        return Err(Error::Input(format!("strings longer than {MAX_STRING_LENGTH} are not simulated")));
    }
    let mut t = m.start();
    for &bit in b.bits() {
        t = advance(m, &t, bit)?;
        if t.probability == 0.0 {
            break;
        }
    }
    Ok(t.probability)
}

/// Exact probabilities of every string of length `len`, ordered by id.
pub fn exact_string_table(m: &FiniteRmModel, len: usize) -> Result<Vec<f64>> {
    if len == 0 || len > MAX_STRING_LENGTH {
        return Err(Error::Input(format!("string length must lie in 1..={MAX_STRING_LENGTH}")));
    }
    // Breadth-first over the probability tree; children of id are 2 id and 2 id + 1.
    let mut level = vec![m.start()];
    for _ in 0..len {
        level = level
            .par_iter()
            .map(|t| Ok([advance(m, t, false)?, advance(m, t, true)?]))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    Ok(level.into_iter().map(|t| t.probability).collect())
}

/// Born probabilities and first- and second-order corrections of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbativeCorrections {
    /// `p_m = <0|U^† M_m U|0>`.
    pub born: [f64; 2],
    pub q1: [f64; 2],
    pub q2: [f64; 2],
}

impl PerturbativeCorrections {
    /// `p_m + eps Q1_m + eps^2 Q2_m`.
    pub fn predict(&self, m: usize, eps: f64) -> f64 {
        self.born[m] + eps * self.q1[m] + eps * eps * self.q2[m]
    }
}

fn expect(op: &CMat, f: &CVec) -> Complex64 {
    f.dotc(&(op * f))
}

/// Corrections of step `k` with the environment in state `f`.
pub fn perturbative_corrections(m: &FiniteRmModel, k: usize, f: &CVec) -> Result<PerturbativeCorrections> {
    let weak = m
        .weak
        .as_ref()
        .ok_or_else(|| Error::Model("perturbative corrections need a weak-structure decomposition".into()))?;
    if k >= m.steps() {
        return Err(Error::Input(format!("step {k} beyond the model's {} steps", m.steps())));
    }
    if f.len() != m.env_dim() {
        return Err(Error::Input("environment state has the wrong dimension".into()));
    }
    let u = &m.detector_unitary;
    let w = m.weights[k];
    let terms = weak.detector_ops.len();
    let a: Vec<CMat> = weak.detector_ops.iter().map(|al| u * al * -I).collect();
    let b: Vec<CMat> = weak.env_ops[k].iter().map(|bl| bl * Complex64::from(w)).collect();
    let ket0 = DVector::from_vec(vec![ONE, ZERO]);
    let mut born = [0.0; 2];
    let mut q1 = [0.0; 2];
    let mut q2 = [0.0; 2];
    for meas in 0..2 {
        let mut proj = CMat::zeros(2, 2);
        proj[(meas, meas)] = ONE;
        let sandwich = |x: &CMat, y: &CMat| ket0.dotc(&(x.adjoint() * &proj * y * &ket0));
        born[meas] = sandwich(u, u).re;
        let mut first = ZERO;
        for l in 0..terms {
            first += sandwich(&a[l], u) * expect(&b[l].adjoint(), f);
        }
        let mut second = ZERO;
        for l in 0..terms {
            for lp in 0..terms {
                second += sandwich(&a[l], &a[lp]) * expect(&(b[l].adjoint() * &b[lp]), f);
                let c = u * &weak.detector_ops[l] * &weak.detector_ops[lp] * Complex64::from(-0.5);
                let dd = &b[l] * &b[lp];
                second += 2.0 * (sandwich(&c, u) * expect(&dd.adjoint(), f)).re;
            }
        }
        q1[meas] = 2.0 * first.re;
        if second.im.abs() > 1e-10 * (1.0 + second.re.abs()) {
            return Err(Error::Model(format!("second-order correction not real ({:e})", second.im)));
        }
        q2[meas] = second.re;
    }
    Ok(PerturbativeCorrections { born, q1, q2 })
}

/// Largest entry of the difference between the step propagator and an RK4
/// integration of `dU/dt = -i lambda w H U` on `[0, 1]`, Richardson-combined
/// from `steps` and `2 steps` substeps.
pub fn propagator_ode_check(m: &FiniteRmModel, k: usize, steps: usize) -> Result<f64> {
    let u_exp = m.step_unitary(k)?;
    let n = u_exp.nrows();
    let gen = &m.generators[k] * Complex64::new(0.0, -m.lambda * m.weights[k]);
    let rk4 = |count: usize| {
        let h = Complex64::from(1.0 / count as f64);
        let mut y = CMat::identity(n, n);
        for _ in 0..count {
            let k1 = &gen * &y;
            let k2 = &gen * (&y + &k1 * (h / 2.0));
            let k3 = &gen * (&y + &k2 * (h / 2.0));
            let k4 = &gen * (&y + &k3 * h);
            let two = Complex64::from(2.0);
            y += (k1 + k2 * two + k3 * two + k4) * (h / 6.0);
        }
        y
    };
    let coarse = rk4(steps);
    let fine = rk4(2 * steps);
    let extrap = &fine + (&fine - &coarse) * Complex64::from(1.0 / 15.0);
    let u_full = kron(&m.detector_unitary, &CMat::identity(m.env_dim(), m.env_dim()));
    Ok(max_abs(&(u_exp - u_full * extrap)))
}

/// Random hermitian matrix with entries of order one.
pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&g + g.adjoint()) * Complex64::from(0.5)
}

/// Random unit vector.
pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> CVec {
    let v = CVec::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let norm = v.norm();
    v.unscale(norm)
}

/// Random detector unitary `exp(-i (omega sigma_z / 2 + theta sigma_x))`.
pub fn random_detector_unitary<R: Rng>(omega: f64, rng: &mut R) -> CMat {
    let theta = rng.gen_range(0.2..1.2);
    let h = CMat::from_row_slice(2, 2, &[
        Complex64::from(omega / 2.0),
        Complex64::from(theta),
        Complex64::from(theta),
        Complex64::from(-omega / 2.0),
    ]);
    (h * -I).exp()
}

/// Random instance with a weak-structure decomposition of `terms` terms.
pub fn random_weak_model(env_dim: usize, steps: usize, terms: usize, lambda: f64, seed: u64) -> Result<FiniteRmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = 1.0;
    let u = random_detector_unitary(omega, &mut rng);
    let detector_ops = (0..terms).map(|_| random_hermitian(2, &mut rng)).collect();
    let env_ops = (0..steps).map(|_| (0..terms).map(|_| random_hermitian(env_dim, &mut rng)).collect()).collect();
    let weights = (0..steps).map(|_| rng.gen_range(0.5..1.5)).collect();
    let env0 = random_state(env_dim, &mut rng);
    FiniteRmModel::from_weak_structure(omega, lambda, u, WeakStructure { detector_ops, env_ops }, weights, env0)
}

/// Random instance whose coupling acts on the detector alone, so outcomes
/// are independent and identically distributed.
pub fn random_iid_model(env_dim: usize, steps: usize, lambda: f64, seed: u64) -> Result<FiniteRmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = 1.0;
    let u = random_detector_unitary(omega, &mut rng);
    let a = random_hermitian(2, &mut rng);
    let h = kron(&a, &CMat::identity(env_dim, env_dim));
    let env0 = random_state(env_dim, &mut rng);
    FiniteRmModel::new(omega, lambda, u, vec![h; steps], vec![1.0; steps], env0)
}

/// Dense complex matrix as `[re, im]` pairs in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Input(format!(
                "matrix data has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(CMat::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&[re, im]| Complex64::new(re, im))))
    }
}

/// Serialisable form of [`FiniteRmModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub omega: f64,
    pub lambda: f64,
    pub detector_unitary: MatrixJson,
    pub generators: Vec<MatrixJson>,
    pub weights: Vec<f64>,
    pub initial_environment: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_structure: Option<WeakStructureJson>,
}

/// Serialisable form of [`WeakStructure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakStructureJson {
    pub detector_ops: Vec<MatrixJson>,
    pub env_ops: Vec<Vec<MatrixJson>>,
}

impl From<&FiniteRmModel> for ModelJson {
    fn from(m: &FiniteRmModel) -> Self {
        Self {
            omega: m.omega,
            lambda: m.lambda,
            detector_unitary: (&m.detector_unitary).into(),
            generators: m.generators.iter().map(Into::into).collect(),
            weights: m.weights.clone(),
            initial_environment: m.env0.iter().map(|z| [z.re, z.im]).collect(),
            weak_structure: m.weak.as_ref().map(|w| WeakStructureJson {
                detector_ops: w.detector_ops.iter().map(Into::into).collect(),
                env_ops: w.env_ops.iter().map(|row| row.iter().map(Into::into).collect()).collect(),
            }),
        }
    }
}

impl ModelJson {
    pub fn to_model(&self) -> Result<FiniteRmModel> {
        let env0 = CVec::from_iterator(
            self.initial_environment.len(),
            self.initial_environment.iter().map(|&[re, im]| Complex64::new(re, im)),
        );
        let m = FiniteRmModel::new(
            self.omega,
            self.lambda,
            self.detector_unitary.to_matrix()?,
            self.generators.iter().map(MatrixJson::to_matrix).collect::<Result<_>>()?,
            self.weights.clone(),
            env0,
        )?;
        match &self.weak_structure {
            None => Ok(m),
            Some(w) => m.with_weak_structure(WeakStructure {
                detector_ops: w.detector_ops.iter().map(MatrixJson::to_matrix).collect::<Result<_>>()?,
                env_ops: w
                    .env_ops
                    .iter()
                    .map(|row| row.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?,
            }),
        }
    }
}
