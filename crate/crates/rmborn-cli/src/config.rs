//! Run configuration. Field names carry their units; every block is optional
//! and defaults to the reference parameters `omega = 0.2`, `sigma = 1`,
//! `lambda = 1e-2`, `T_on = 8 sigma`, `T_off = 10 T_on`.

use anyhow::{bail, Context, Result};
use rmborn::bayes::{Order, StepQ1};
use rmborn::kernel::{WightmanKernel, Worldline};
use rmborn::quadrature::QuadratureConfig;
use rmborn::response::{CycleMethod, DetectorParams, QSource, ResponseModel};
use rmborn::schedule::{RepetitionSchedule, SwitchingProfile};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detector: DetectorConfig,
    pub worldline: WorldlineConfig,
    pub schedule: ScheduleConfig,
    pub regulator: RegulatorConfig,
    pub quadrature: QuadratureBlock,
    pub transition: TransitionConfig,
    pub string_probs: StringProbsConfig,
    pub bounds: BoundsConfig,
    pub bayes: BayesConfig,
    pub oracle: OracleConfig,
    pub combinatorics: CombinatoricsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub omega_inverse_propertime: f64,
    pub lambda_dimensionless: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { omega_inverse_propertime: 0.2, lambda_dimensionless: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldlineKind {
    #[default]
    Inertial,
    Accelerated,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldlineConfig {
    pub kind: WorldlineKind,
    pub alpha_inverse_propertime: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    TruncatedGaussian,
    Gaussian,
    Bump,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub profile: ProfileKind,
    pub sigma_propertime: f64,
    /// Half-width of the bump profile; defaults to `T_on / 2`.
    pub bump_half_width_propertime: Option<f64>,
    /// Defaults to `8 sigma`.
    pub t_on_propertime: Option<f64>,
    /// Defaults to `10 T_on`.
    pub t_off_propertime: Option<f64>,
    pub repetitions: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::TruncatedGaussian,
            sigma_propertime: 1.0,
            bump_half_width_propertime: None,
            t_on_propertime: None,
            t_off_propertime: None,
            repetitions: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegulatorConfig {
    pub epsilon_propertime: f64,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        Self { epsilon_propertime: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureBlock {
    pub gl_order: usize,
    pub panels_per_scale: usize,
    pub qmc_points: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub q_source: QSource,
    pub cycle_method: CycleMethod,
}

impl Default for QuadratureBlock {
    fn default() -> Self {
        let q = QuadratureConfig::default();
        Self {
            gl_order: q.gl_order,
            panels_per_scale: q.panels_per_scale,
            qmc_points: q.qmc_points,
            tolerance: q.tolerance,
            seed: q.seed,
            q_source: QSource::default(),
            cycle_method: CycleMethod::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionConfig {
    pub omega_values_inverse_propertime: Vec<f64>,
    pub alpha_values_inverse_propertime: Vec<f64>,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self {
            omega_values_inverse_propertime: (1..=20).map(|i| 0.05 * i as f64).collect(),
            alpha_values_inverse_propertime: vec![1e-3, 0.1, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StringProbsConfig {
    pub length: usize,
}

impl Default for StringProbsConfig {
    fn default() -> Self {
        Self { length: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Single-window probability; computed from the detector model when absent.
    pub q_probability: Option<f64>,
    /// Kernel ratio; computed from kernel and schedule when absent.
    pub gamma_ratio: Option<f64>,
    pub n_max: u64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { q_probability: None, gamma_ratio: None, n_max: 60 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub bits: String,
    /// First-order corrections of every step, for outcomes 0 and 1.
    #[serde(default)]
    pub step_corrections: Option<Vec<StepQ1>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    pub epsilon_dimensionless: f64,
    pub order: Order,
    pub grid_points: usize,
    pub kappa: f64,
    /// Emit the posterior after every `snapshot_every` updates; 0 keeps only the final one.
    pub snapshot_every: usize,
    pub outcomes: Vec<OutcomeConfig>,
    /// JSON file holding an array of outcomes, appended after `outcomes`.
    pub outcomes_path: Option<PathBuf>,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            epsilon_dimensionless: 1e-2,
            order: Order::First,
            grid_points: rmborn::bayes::DEFAULT_GRID,
            kappa: rmborn::bayes::DEFAULT_KAPPA,
            snapshot_every: 0,
            outcomes: Vec::new(),
            outcomes_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub env_dim: usize,
    pub length: usize,
    pub instances: usize,
    pub terms: usize,
    pub lambda_dimensionless: f64,
    /// Serialized model; when present its exact string table is emitted
    /// instead of the verification suite.
    pub model_path: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { env_dim: 8, length: 10, instances: 10, terms: 2, lambda_dimensionless: 0.3, model_path: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinatoricsConfig {
    pub k_max: usize,
}

impl Default for CombinatoricsConfig {
    fn default() -> Self {
        Self { k_max: 8 }
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        bail!("{field}: must be positive and finite, got {x}");
    }
    Ok(())
}

impl RunConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("{path}: {}", e.into_inner())
        })?;
        Ok(cfg)
    }

    /// Field-level checks on the physical parameters.
    pub fn validate(&self, allow_custom_t_on: bool) -> Result<()> {
        positive("detector.omega_inverse_propertime", self.detector.omega_inverse_propertime)?;
        positive("detector.lambda_dimensionless", self.detector.lambda_dimensionless)?;
        positive("schedule.sigma_propertime", self.schedule.sigma_propertime)?;
        positive("regulator.epsilon_propertime", self.regulator.epsilon_propertime)?;
        positive("quadrature.tolerance", self.quadrature.tolerance)?;
        match (self.worldline.kind, self.worldline.alpha_inverse_propertime) {
            (WorldlineKind::Accelerated, None) => bail!("worldline.alpha_inverse_propertime: required for accelerated motion"),
            (WorldlineKind::Accelerated, Some(a)) => positive("worldline.alpha_inverse_propertime", a)?,
            (WorldlineKind::Inertial, Some(_)) => bail!("worldline.alpha_inverse_propertime: only valid for accelerated motion"),
            _ => {}
        }
        if let Some(t) = self.schedule.t_on_propertime {
            positive("schedule.t_on_propertime", t)?;
            let want = 8.0 * self.schedule.sigma_propertime;
            if !allow_custom_t_on && (t - want).abs() > 1e-12 * want {
                bail!("schedule.t_on_propertime: {t} differs from 8 sigma = {want}; pass --allow-custom-t-on to override");
            }
        }
        if let Some(t) = self.schedule.t_off_propertime {
            positive("schedule.t_off_propertime", t)?;
        }
        if let Some(h) = self.schedule.bump_half_width_propertime {
            positive("schedule.bump_half_width_propertime", h)?;
        }
        if self.schedule.repetitions == 0 {
            bail!("schedule.repetitions: must be at least 1");
        }
        if self.quadrature.gl_order < 2 {
            bail!("quadrature.gl_order: must be at least 2");
        }
        if !self.quadrature.qmc_points.is_power_of_two() {
            bail!("quadrature.qmc_points: must be a power of two");
        }
        for (i, &w) in self.transition.omega_values_inverse_propertime.iter().enumerate() {
            positive(&format!("transition.omega_values_inverse_propertime[{i}]"), w)?;
        }
        for (i, &a) in self.transition.alpha_values_inverse_propertime.iter().enumerate() {
            positive(&format!("transition.alpha_values_inverse_propertime[{i}]"), a)?;
        }
        if let Some(q) = self.bounds.q_probability {
            if !(q > 0.0 && q < 1.0) {
                bail!("bounds.q_probability: must lie in (0, 1), got {q}");
            }
        }
        if let Some(g) = self.bounds.gamma_ratio {
            if !(g > 0.0 && g < 1.0) {
                bail!("bounds.gamma_ratio: must lie in (0, 1), got {g}");
            }
        }
        if self.bayes.epsilon_dimensionless < 0.0 {
            bail!("bayes.epsilon_dimensionless: must be non-negative");
        }
        if self.bayes.grid_points < 2 {
            bail!("bayes.grid_points: must be at least 2");
        }
        if self.string_probs.length == 0 {
            bail!("string_probs.length: must be at least 1");
        }
        Ok(())
    }

    pub fn worldline(&self) -> Worldline {
        match self.worldline.kind {
            WorldlineKind::Inertial => Worldline::Inertial,
            WorldlineKind::Accelerated => Worldline::Accelerated {
                alpha: self.worldline.alpha_inverse_propertime.unwrap_or(f64::NAN),
            },
        }
    }

    pub fn kernel(&self) -> Result<WightmanKernel> {
        WightmanKernel::new(self.worldline(), self.regulator.epsilon_propertime).context("worldline")
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        DetectorParams::new(self.detector.omega_inverse_propertime, self.detector.lambda_dimensionless).context("detector")
    }

    pub fn profile(&self) -> SwitchingProfile {
        let sigma = self.schedule.sigma_propertime;
        match self.schedule.profile {
            ProfileKind::TruncatedGaussian => SwitchingProfile::TruncatedGaussian { sigma },
            ProfileKind::Gaussian => SwitchingProfile::Gaussian { sigma },
            ProfileKind::Bump => SwitchingProfile::Bump {
                delta: self.schedule.bump_half_width_propertime.unwrap_or(self.t_on() / 2.0),
            },
        }
    }

    pub fn t_on(&self) -> f64 {
        self.schedule.t_on_propertime.unwrap_or(8.0 * self.schedule.sigma_propertime)
    }

    pub fn schedule(&self, repetitions: usize) -> Result<RepetitionSchedule> {
        let t_on = self.t_on();
        let t_off = self.schedule.t_off_propertime.unwrap_or(10.0 * t_on);
        RepetitionSchedule::new(self.profile(), t_on, t_off, repetitions).context("schedule")
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig {
            gl_order: self.quadrature.gl_order,
            panels_per_scale: self.quadrature.panels_per_scale,
            qmc_points: self.quadrature.qmc_points,
            tolerance: self.quadrature.tolerance,
            seed: self.quadrature.seed,
        }
    }

    /// Response model with at least `repetitions` windows.
    pub fn response_model(&self, repetitions: usize) -> Result<ResponseModel> {
        let model = ResponseModel::new(
            self.kernel()?,
            self.schedule(repetitions.max(self.schedule.repetitions))?,
            self.detector()?,
            self.quadrature(),
            self.quadrature.q_source,
            self.quadrature.cycle_method,
        )
        .context("response model")?;
        Ok(model.with_max_history(repetitions.max(rmborn::response::DEFAULT_MAX_HISTORY)))
    }
}
