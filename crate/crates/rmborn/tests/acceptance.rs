//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Exits with status 0 even when criteria fail, so that the remaining test
//! targets of a workspace run still execute. Set `ACCEPTANCE_STRICT=1` to
//! exit with status 1 on any failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmborn::bayes::*;
use rmborn::bounds::{gamma_of, horizon, loose_bounds, tight_bounds};
use rmborn::combinatorics::*;
use rmborn::kernel::{WightmanKernel, Worldline};
use rmborn::oracle::*;
use rmborn::quadrature::QuadratureConfig;
use rmborn::response::*;
use rmborn::schedule::{RepetitionSchedule, SwitchingProfile};
use rmborn::strings::{born_string_prob, rm_string_table, BitString};
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn kernel(w: Worldline) -> WightmanKernel {
    WightmanKernel::new(w, 1e-3).unwrap()
}

fn fig_detector() -> DetectorParams {
    DetectorParams::new(0.2, 1e-2).unwrap()
}

fn fig_model(w: Worldline, count: usize, qmc_points: usize) -> ResponseModel {
    let quad = QuadratureConfig { qmc_points, ..QuadratureConfig::default() };
    ResponseModel::new(
        kernel(w),
        RepetitionSchedule::gaussian_default(1.0, count).unwrap(),
        fig_detector(),
        quad,
        QSource::ClosedForm,
        CycleMethod::Auto,
    )
    .unwrap()
}

fn combinatorics_golden() -> Outcome {
    let pi: Vec<usize> = (2..=8).map(|k| restricted_partitions(k).unwrap().len()).collect();
    let c: Vec<u128> = (2..=8).map(|k| crossing_count(k).unwrap()).collect();
    let n4 = partition_term_count(&RestrictedPartition::new(vec![4]).unwrap()).unwrap();
    let n22 = partition_term_count(&RestrictedPartition::new(vec![2, 2]).unwrap()).unwrap();
    let (w2, w3) = (wick_term_count(2).unwrap(), wick_term_count(3).unwrap());
    let ok = pi == [1, 1, 2, 2, 4, 4, 7]
        && c == [2, 8, 60, 544, 6040, 79008, 1190672]
        && (n4, n22, w2, w3) == (48, 12, 3, 15);
    check(ok, "tables match", format!("pi={pi:?} c={c:?} N4={n4} N22={n22} N(2)={w2} N(3)={w3}"))
}

fn decomposition_identity() -> Outcome {
    for n in 0..=12u64 {
        let s: u128 = (0..=n).map(|k| binomial(n, k).unwrap() * crossing_count(k).unwrap()).sum();
        if s != wick_term_count(n).unwrap() {
            return Err(format!("n={n}: {s} != {}", wick_term_count(n).unwrap()));
        }
    }
    Ok("n = 0..12 exact".into())
}

fn horizon_reproduction() -> Outcome {
    let h = horizon(0.1, 0.01);
    let first_over = (1..1000u64).find(|&n| loose_bounds(n, 0.1, 0.01).map_or(true, |b| b.upper > 1.0)).unwrap();
    let msg = format!("n_limit={} (N1={}, N2={}, N3={}), upper first > 1 at n={first_over}; expected 55 and 56", h.n_limit, h.n1, h.n2, h.n3);
    check(h.n_limit == 55 && first_over == 56, msg.clone(), msg)
}

fn closed_vs_quadrature() -> Outcome {
    let s = RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: 1.0 }, 8.0, 80.0, 1).unwrap();
    let d = fig_detector();
    let direct = q_direct(&kernel(Worldline::Inertial), &s, &d, &QuadratureConfig::default()).map_err(|e| e.to_string())?;
    let closed = q_closed_inertial(&d, 1.0).unwrap();
    let rel = ((direct.value - closed.value) / closed.value).abs();
    check(rel < 1e-6, format!("q={:.10e}, rel {rel:.1e}", closed.value), format!("rel {rel:.1e}"))
}

fn accelerated_consistency() -> Outcome {
    let d = fig_detector();
    let qi = q_closed_inertial(&d, 1.0).unwrap().value;
    let small = q_closed(&kernel(Worldline::Accelerated { alpha: 1e-3 }), &d, 1.0).unwrap().value;
    let r1 = ((small - qi) / qi).abs();
    let w = Worldline::Accelerated { alpha: 0.1 };
    let s = RepetitionSchedule::new(SwitchingProfile::Gaussian { sigma: 1.0 }, 8.0, 80.0, 1).unwrap();
    let direct = q_direct(&kernel(w), &s, &d, &QuadratureConfig::default()).map_err(|e| e.to_string())?.value;
    let closed = q_closed(&kernel(w), &d, 1.0).unwrap().value;
    let r2 = ((direct - closed) / closed).abs();
    let msg = format!("alpha=1e-3 rel {r1:.1e}; alpha=0.1 rel {r2:.1e}");
    check(r1 < 1e-6 && r2 < 1e-4, msg.clone(), msg)
}

fn bound_containment() -> Outcome {
    let mut checked = 0;
    for w in [Worldline::Inertial, Worldline::Accelerated { alpha: 0.1 }] {
        let m = fig_model(w, 8, 1 << 20);
        let q = m.q().value;
        let g = gamma_of(m.kernel(), m.schedule()).map_err(|e| e.to_string())?;
        for mask in 1u32..256 {
            if mask.count_ones() > 3 {
                continue;
            }
            let set: Vec<usize> = (0..8).filter(|i| mask & (1 << i) != 0).collect();
            let (query, hist) = set.split_last().unwrap();
            let h = HistoryRecord::new(hist.to_vec(), *query).unwrap();
            let p = m.conditional_excitation(&h).map_err(|e| e.to_string())?.probability.value;
            let t = tight_bounds(&h, q, m.kernel(), m.schedule()).map_err(|e| e.to_string())?;
            let l = loose_bounds(h.n() as u64, q, g).map_err(|e| e.to_string())?;
            if !(t.contains(p) && l.contains_pair(&t, 1e-14)) {
                return Err(format!("{w:?} {h:?}: P={p:e} tight={t:?} loose={l:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} histories, both worldlines"))
}

fn string_normalisation() -> Outcome {
    let mut parts = Vec::new();
    for w in [Worldline::Inertial, Worldline::Accelerated { alpha: 0.1 }] {
        let table = rm_string_table(&fig_model(w, 4, 1 << 20), 4).map_err(|e| e.to_string())?;
        let sum: f64 = table.iter().map(|r| r.probability.value).sum();
        let err: f64 = table.iter().map(|r| r.probability.abs_error).sum();
        if (sum - 1.0).abs() > 10.0 * err {
            return Err(format!("{w:?}: sum {sum} (error {err:e})"));
        }
        parts.push(format!("|sum-1|={:.1e} vs 10*err={:.1e}", (sum - 1.0).abs(), 10.0 * err));
    }
    Ok(parts.join("; "))
}

fn string_structure_inertial() -> Outcome {
    let table = rm_string_table(&fig_model(Worldline::Inertial, 4, 1 << 20), 4).map_err(|e| e.to_string())?;
    let bad: Vec<String> = table
        .iter()
        .filter(|r| r.log_ratio.value > r.log_ratio.error)
        .map(|r| format!("{}:{:+.3e}", r.bits.id().unwrap(), r.log_ratio.value))
        .collect();
    check(bad.is_empty(), "all 16 log ratios <= 0", format!("positive log ratios at {}", bad.join(" ")))
}

fn string_structure_accelerated() -> Outcome {
    let table = rm_string_table(&fig_model(Worldline::Accelerated { alpha: 0.1 }, 4, 1 << 20), 4).map_err(|e| e.to_string())?;
    let lr = |id: usize| table[id].log_ratio.value;
    let adjacent = [3, 6, 12].map(lr);
    let apart = [5, 9, 10].map(lr);
    let lo = adjacent.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = apart.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let msg = format!("min adjacent {lo:.4e}, max separated {hi:.4e}");
    check(lo > hi, msg.clone(), msg)
}

fn string_reproduction() -> Outcome {
    let a = string_structure_inertial();
    let b = string_structure_accelerated();
    match (&a, &b) {
        (Ok(x), Ok(y)) => Ok(format!("(a) {x}; (b) {y}")),
        _ => Err(format!(
            "(a) {}; (b) {}",
            a.as_ref().map_or_else(|e| format!("FAIL {e}"), |s| format!("PASS {s}")),
            b.as_ref().map_or_else(|e| format!("FAIL {e}"), |s| format!("PASS {s}"))
        )),
    }
}

fn oracle_suite() -> Outcome {
    let m = random_weak_model(8, 10, 3, 0.3, 11).unwrap();
    let total: f64 = exact_string_table(&m, 10).map_err(|e| e.to_string())?.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(format!("L=10 tree sums to {total}"));
    }
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let base = random_weak_model(4, 3, 2, 1.0, 300 + seed).unwrap();
        let f = base.initial_env().clone();
        let c = perturbative_corrections(&base, 1, &f).map_err(|e| e.to_string())?;
        let residual = |eps: f64| {
            let m = base.with_lambda(eps).unwrap();
            let t = TrajectoryState { env: f.clone(), bits: vec![false], probability: 1.0 };
            (step_distribution(&m, &t, 1).unwrap().p[1] - c.predict(1, eps)).abs()
        };
        ratios.push(residual(0.01) / residual(0.005));
    }
    if let Some(r) = ratios.iter().find(|r| (*r / 8.0 - 1.0).abs() > 0.2) {
        return Err(format!("residual ratio {r}"));
    }
    let iid = random_iid_model(4, 4, 0.7, 9).unwrap();
    let table = exact_string_table(&iid, 4).map_err(|e| e.to_string())?;
    for (id, &p) in table.iter().enumerate() {
        let b = BitString::from_id(id as u64, 4).unwrap();
        let same: Vec<f64> = table.iter().enumerate().filter(|(j, _)| (*j as u32).count_ones() == b.ones() as u32).map(|(_, &x)| x).collect();
        if same.iter().any(|x| (x - p).abs() > 1e-14) {
            return Err(format!("i.i.d. model not permutation invariant at {b}"));
        }
    }
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    Ok(format!("|sum-1|={:.1e}, residual ratios in [{rmin:.2}, {rmax:.2}]", (total - 1.0).abs()))
}

fn bayes_suite() -> Outcome {
    let delta: DeltaFn = Arc::new(|q: f64, b: &BitString| {
        let c = q * (1.0 - q);
        let steps = vec![StepQ1 { zero: -0.4 * q * c, one: 0.3 * c }; b.len()];
        delta_p_first_order(q, &steps, b).unwrap()
    });
    let zero = CorrectionModel::new(0.0, Order::First, delta.clone()).unwrap();
    let m = CorrectionModel::new(1e-2, Order::First, delta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p0 = Posterior::uniform(DEFAULT_GRID).unwrap();
    let mut p1 = Posterior::uniform(DEFAULT_GRID).unwrap();
    let mut worst_split = 0.0f64;
    let mut worst_norm = 0.0f64;
    for _ in 0..1000 {
        let b = BitString::new((0..4).map(|_| rng.gen::<f64>() < 0.3).collect()).unwrap();
        p0 = update_posterior(&p0, &b, &zero).map_err(|e| e.to_string())?;
        p1 = update_posterior(&p1, &b, &m).map_err(|e| e.to_string())?;
        let split = p0.density(Family::H1).iter().zip(p0.density(Family::H2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_split = worst_split.max(split);
        worst_norm = worst_norm.max((p1.total_mass() - 1.0).abs());
    }
    if worst_split > 1e-12 || worst_norm > 1e-12 {
        return Err(format!("eps=0 split {worst_split:e}, normalisation drift {worst_norm:e}"));
    }
    let len = 4;
    let mut ratios = Vec::new();
    for seed in 0..3u64 {
        let base = random_weak_model(4, len, 2, 1.0, seed).unwrap();
        let e0 = base.initial_env().clone();
        let mut steps = Vec::new();
        let mut q = 0.0;
        for k in 0..len {
            let c = perturbative_corrections(&base, k, &e0).map_err(|e| e.to_string())?;
            steps.push(StepQ1 { zero: c.q1[0], one: c.q1[1] });
            q = c.born[1];
        }
        let err = |eps: f64| {
            let m = base.with_lambda(eps).unwrap();
            BitString::all(len)
                .unwrap()
                .iter()
                .map(|b| {
                    let exact = exact_string_prob(&m, b).unwrap();
                    ((exact - born_string_prob(q, b).unwrap()) / eps - delta_p_first_order(q, &steps, b).unwrap()).abs()
                })
                .fold(0.0, f64::max)
        };
        ratios.push(err(1e-3) / err(5e-4));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 1.6 && **r < 2.4)) {
        return Err(format!("oracle-fed Delta P residual ratio {r}, expected 2"));
    }
    Ok(format!("eps=0 split {worst_split:.0e}, drift {worst_norm:.1e}, O(eps) ratios {ratios:.2?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("combinatorics golden values", Duration::from_secs(1), combinatorics_golden),
        ("decomposition identity", Duration::from_secs(1), decomposition_identity),
        ("horizon reproduction", Duration::from_secs(1), horizon_reproduction),
        ("closed form vs quadrature", Duration::from_secs(30), closed_vs_quadrature),
        ("accelerated consistency", Duration::from_secs(60), accelerated_consistency),
        ("bound containment", Duration::from_secs(300), bound_containment),
        ("string normalisation", Duration::from_secs(600), string_normalisation),
        ("string structure", Duration::from_secs(900), string_reproduction),
        ("oracle suite", Duration::from_secs(120), oracle_suite),
        ("bayes suite", Duration::from_secs(60), bayes_suite),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let over = if elapsed > *budget { " OVER BUDGET" } else { "" };
        let (tag, detail) = match (&outcome, over.is_empty()) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", d.clone()),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("{tag} {:>2} {name} [{:.2} s / {} s{over}]: {detail}", i + 1, elapsed.as_secs_f64(), budget.as_secs());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
