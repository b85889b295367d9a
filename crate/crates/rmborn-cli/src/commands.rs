//! Subcommands, each producing one table.

use crate::config::RunConfig;
use crate::output::{Cell, Table};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use rmborn::bayes::{
    delta_p_first_order, fapp_verdict, update_posterior, CorrectionModel, Family, Posterior, Verdict,
};
use rmborn::bounds::{gamma_of, loose_bounds, n_limit};
use rmborn::combinatorics::{crossing_count, double_factorial, partition_count, restricted_partitions};
use rmborn::kernel::{WightmanKernel, Worldline};
use rmborn::oracle::{
    exact_string_table, perturbative_corrections, propagator_ode_check, random_iid_model, random_weak_model,
    step_distribution, ModelJson, TrajectoryState,
};
use rmborn::response::{q_closed, DetectorParams};
use rmborn::strings::{deviation_maxima, ratio_bounds, rm_string_table, BitString};
use std::sync::Arc;

/// `q` for every configured gap, inertial and for each acceleration.
pub fn transition(cfg: &RunConfig) -> Result<Table> {
    let sigma = cfg.schedule.sigma_propertime;
    let lambda = cfg.detector.lambda_dimensionless;
    let eps = cfg.regulator.epsilon_propertime;
    let mut worldlines = vec![Worldline::Inertial];
    worldlines.extend(cfg.transition.alpha_values_inverse_propertime.iter().map(|&alpha| Worldline::Accelerated { alpha }));
    let mut t = Table::new(&["omega", "worldline", "alpha", "q", "q_abs_error", "q_over_lambda_sq"]);
    for &omega in &cfg.transition.omega_values_inverse_propertime {
        let d = DetectorParams::new(omega, lambda)?;
        let rows: Vec<Vec<Cell>> = worldlines
            .par_iter()
            .map(|w| -> Result<Vec<Cell>> {
                let k = WightmanKernel::new(*w, eps)?;
                let r = q_closed(&k, &d, sigma).with_context(|| format!("q at omega = {omega}"))?;
                let (name, alpha) = match w {
                    Worldline::Inertial => ("inertial", None),
                    Worldline::Accelerated { alpha } => ("accelerated", Some(*alpha)),
                };
                Ok(vec![omega.into(), name.into(), alpha.into(), r.value.into(), r.abs_error.into(), (r.value / (lambda * lambda)).into()])
            })
            .collect::<Result<_>>()?;
        for r in rows {
            t.push(r);
        }
    }
    Ok(t)
}

/// Born and repeated-measurement probabilities of every string.
pub fn string_probs(cfg: &RunConfig) -> Result<Table> {
    let len = cfg.string_probs.length;
    let model = cfg.response_model(len)?;
    let q = model.q().value;
    let gamma = gamma_of(model.kernel(), model.schedule())?;
    let (u, l) = deviation_maxima(len, gamma)?;
    let horizon = n_limit(q, gamma);
    let r = q / (1.0 - q);
    let mut t = Table::new(&[
        "id", "bits", "ones", "p_born", "log_ratio", "log_ratio_error", "p_rm", "p_rm_abs_error", "ratio_lower", "ratio_upper",
    ]);
    for s in rm_string_table(&model, len)? {
        let (lo, hi) = ratio_bounds(&s.bits, u, l, r, horizon)?;
        t.push(vec![
            s.bits.id()?.into(),
            s.bits.to_string().into(),
            s.bits.ones().into(),
            s.born.into(),
            s.log_ratio.value.into(),
            s.log_ratio.error.into(),
            s.probability.value.into(),
            s.probability.abs_error.into(),
            lo.into(),
            hi.into(),
        ]);
    }
    Ok(t)
}

/// Loose bounds against the number of measurements.
pub fn bounds(cfg: &RunConfig) -> Result<Table> {
    let (q, gamma) = match (cfg.bounds.q_probability, cfg.bounds.gamma_ratio) {
        (Some(q), Some(g)) => (q, g),
        (q, g) => {
            let model = cfg.response_model(2)?;
            let q = q.unwrap_or(model.q().value);
            let g = match g {
                Some(g) => g,
                None => gamma_of(model.kernel(), model.schedule())?,
            };
            (q, g)
        }
    };
    let mut t = Table::new(&["n", "lower", "upper", "q", "gamma", "meaningful"]);
    for n in 1..=cfg.bounds.n_max {
        match loose_bounds(n, q, gamma) {
            Ok(b) => t.push(vec![n.into(), b.lower.into(), b.upper.into(), q.into(), gamma.into(), b.meaningful.into()]),
            Err(rmborn::Error::HorizonExceeded { .. }) => {
                t.push(vec![n.into(), Cell::Empty, f64::INFINITY.into(), q.into(), gamma.into(), false.into()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(t)
}

/// Posterior snapshots over a stream of outcome strings.
pub fn bayes(cfg: &RunConfig) -> Result<Table> {
    let b = &cfg.bayes;
    let mut outcomes = b.outcomes.clone();
    if let Some(path) = &b.outcomes_path {
        let text = std::fs::read_to_string(path).with_context(|| format!("bayes.outcomes_path: reading {}", path.display()))?;
        let more: Vec<crate::config::OutcomeConfig> =
            serde_json::from_str(&text).with_context(|| format!("bayes.outcomes_path: parsing {}", path.display()))?;
        outcomes.extend(more);
    }
    if outcomes.is_empty() {
        bail!("bayes.outcomes: no outcome strings given");
    }
    let mut p = Posterior::uniform(b.grid_points)?;
    let mut t = Table::new(&["update", "bits", "q", "density_h1", "density_h2", "mass_h1", "mass_h2", "verdict_at_q"]);
    let last = outcomes.len();
    for (i, o) in outcomes.iter().enumerate() {
        let bits = BitString::parse(&o.bits).with_context(|| format!("bayes.outcomes[{i}].bits"))?;
        let steps = o.step_corrections.clone().unwrap_or_default();
        if !steps.is_empty() && steps.len() != bits.len() {
            bail!("bayes.outcomes[{i}].step_corrections: {} entries for {} bits", steps.len(), bits.len());
        }
        let steps = Arc::new(steps);
        let delta = {
            let steps = steps.clone();
            Arc::new(move |q: f64, s: &BitString| if steps.is_empty() { 0.0 } else { delta_p_first_order(q, &steps, s).unwrap_or(f64::NAN) })
        };
        let model = CorrectionModel::new(b.epsilon_dimensionless, b.order, delta)?.with_kappa(b.kappa);
        p = update_posterior(&p, &bits, &model).with_context(|| format!("bayes.outcomes[{i}]"))?;
        let n = i + 1;
        let snapshot = n == last || (b.snapshot_every > 0 && n % b.snapshot_every == 0);
        if !snapshot {
            continue;
        }
        let (m1, m2) = (p.family_mass(Family::H1), p.family_mass(Family::H2));
        for (j, &q) in p.grid().iter().enumerate() {
            let verdict = match fapp_verdict(q, &bits, &model) {
                Ok(Verdict::H2Selected) => "h2_selected",
                Ok(Verdict::Indistinguishable) => "indistinguishable",
                Err(_) => "",
            };
            t.push(vec![
                n.into(),
                bits.to_string().into(),
                q.into(),
                p.density(Family::H1)[j].into(),
                p.density(Family::H2)[j].into(),
                m1.into(),
                m2.into(),
                verdict.into(),
            ]);
        }
    }
    Ok(t)
}

/// Verification suite of the exact finite-dimensional model, or the exact
/// string table of a serialized model.
pub fn oracle(cfg: &RunConfig, seed: u64) -> Result<Table> {
    let o = &cfg.oracle;
    if let Some(path) = &o.model_path {
        let text = std::fs::read_to_string(path).with_context(|| format!("oracle.model_path: reading {}", path.display()))?;
        let model: ModelJson = serde_json::from_str(&text).with_context(|| format!("oracle.model_path: parsing {}", path.display()))?;
        let m = model.to_model()?;
        let mut t = Table::new(&["id", "bits", "probability"]);
        for (id, p) in exact_string_table(&m, m.steps())?.into_iter().enumerate() {
            let b = BitString::from_id(id as u64, m.steps())?;
            t.push(vec![id.into(), b.to_string().into(), p.into()]);
        }
        return Ok(t);
    }
    let mut t = Table::new(&["check", "instance", "value", "threshold", "pass"]);
    let rows: Vec<Vec<Vec<Cell>>> = (0..o.instances as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<Cell>>> {
            let s = seed.wrapping_add(i);
            let mut rows = Vec::new();
            let m = random_weak_model(o.env_dim, o.length, o.terms, o.lambda_dimensionless, s)?;
            let dev = (exact_string_table(&m, o.length)?.iter().sum::<f64>() - 1.0).abs();
            rows.push(vec!["normalisation".into(), i.into(), dev.into(), 1e-10.into(), (dev < 1e-10).into()]);
            let base = m.with_lambda(1.0)?;
            let k = 1.min(o.length - 1);
            let f = base.initial_env().clone();
            let c = perturbative_corrections(&base, k, &f)?;
            let residual = |eps: f64| -> Result<f64> {
                let me = base.with_lambda(eps)?;
                let t = TrajectoryState { env: f.clone(), bits: vec![false; k], probability: 1.0 };
                Ok((step_distribution(&me, &t, k)?.p[1] - c.predict(1, eps)).abs())
            };
            let ratio = residual(1e-2)? / residual(5e-3)?;
            rows.push(vec!["third_order_ratio".into(), i.into(), ratio.into(), 8.0.into(), ((ratio / 8.0 - 1.0).abs() < 0.2).into()]);
            let ode = propagator_ode_check(&m, 0, 64)?;
            rows.push(vec!["propagator_ode".into(), i.into(), ode.into(), 1e-9.into(), (ode < 1e-9).into()]);
            let iid = random_iid_model(o.env_dim, 4, o.lambda_dimensionless, s)?;
            let table = exact_string_table(&iid, 4)?;
            let mut worst = 0.0f64;
            for (a, &pa) in table.iter().enumerate() {
                for (b, &pb) in table.iter().enumerate() {
                    if (a as u32).count_ones() == (b as u32).count_ones() {
                        worst = worst.max((pa - pb).abs());
                    }
                }
            }
            rows.push(vec!["iid_permutation".into(), i.into(), worst.into(), 1e-14.into(), (worst < 1e-14).into()]);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    for r in rows.into_iter().flatten() {
        t.push(r);
    }
    Ok(t)
}

/// Partition and crossing counts.
pub fn combinatorics(cfg: &RunConfig) -> Result<Table> {
    let k_max = cfg.combinatorics.k_max;
    if k_max > 29 {
        bail!("combinatorics.k_max: at most 29, got {k_max}");
    }
    let mut t = Table::new(&["k", "pi", "pi_r", "crossing_count", "double_factorial_over_sqrt_e"]);
    for k in 0..=k_max {
        let pi_r = if k >= 2 { Some(restricted_partitions(k)?.len()) } else { None };
        let df = if k == 0 { 1 } else { double_factorial(2 * k as u64 - 1).context("double factorial overflow")? };
        t.push(vec![
            k.into(),
            partition_count(k).into(),
            pi_r.into(),
            crossing_count(k as u64)?.into(),
            (df as f64 / std::f64::consts::E.sqrt()).into(),
        ]);
    }
    Ok(t)
}
