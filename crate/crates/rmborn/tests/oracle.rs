use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rmborn::oracle::*;
use rmborn::strings::{born_string_prob, BitString};

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;

/// Matrix exponential by scaling, a 30-term Taylor series and squaring.
fn taylor_exp(a: &CMat) -> CMat {
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let s = (norm.log2().ceil().max(0.0) as i32) + 1;
    let scaled = a * Complex64::from(0.5f64.powi(s));
    let n = a.nrows();
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled * Complex64::from(1.0 / k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[test]
fn probability_tree_is_normalised() {
    let m = random_weak_model(8, 10, 3, 0.3, 11).unwrap();
    let table = exact_string_table(&m, 10).unwrap();
    assert_eq!(table.len(), 1024);
    assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    for len in 1..=4 {
        let t = exact_string_table(&m, len).unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (id, &p) in t.iter().enumerate() {
            let b = BitString::from_id(id as u64, len).unwrap();
            assert!((exact_string_prob(&m, &b).unwrap() - p).abs() < 1e-15);
        }
    }
}

#[test]
fn step_distribution_matches_dense_amplitudes() {
    let d = 2;
    for seed in 0..5u64 {
        let m = random_weak_model(d, 3, 2, 0.4, 100 + seed).unwrap();
        let j = ModelJson::from(&m);
        let u = j.detector_unitary.to_matrix().unwrap();
        let mut env = m.initial_env().clone();
        let mut t = m.start();
        for k in 0..3 {
            let h = j.generators[k].to_matrix().unwrap();
            let step = u.kronecker(&CMat::identity(d, d)) * taylor_exp(&(h * Complex64::new(0.0, -m.lambda() * j.weights[k])));
            let mut psi0 = CVec::zeros(2 * d);
            psi0.rows_mut(0, d).copy_from(&env);
            let psi = step * psi0;
            let p1: f64 = (d..2 * d).map(|i| psi[i].norm_sqr()).sum();
            let dist = step_distribution(&m, &t, k).unwrap();
            assert!((dist.p[1] - p1).abs() < 1e-13, "seed {seed} step {k}");
            assert!((dist.p[0] + dist.p[1] - 1.0).abs() < 1e-12);
            // Follow the outcome 1 branch and compare post-measurement states.
            let post: CVec = psi.rows(d, d).unscale(p1.sqrt());
            let ours = dist.post[1].clone().unwrap();
            assert!((ours - &post).norm() < 1e-12);
            env = post;
            t = advance(&m, &t, true).unwrap();
        }
    }
}

#[test]
fn iid_models_give_born_strings() {
    let m = random_iid_model(4, 4, 0.7, 9).unwrap();
    let q = step_distribution(&m, &m.start(), 0).unwrap().p[1];
    let table = exact_string_table(&m, 4).unwrap();
    for (id, &p) in table.iter().enumerate() {
        let b = BitString::from_id(id as u64, 4).unwrap();
        assert!((p - born_string_prob(q, &b).unwrap()).abs() < 1e-14, "{b}");
        let mut rev = b.bits().to_vec();
        rev.reverse();
        let r = BitString::new(rev).unwrap();
        assert!((p - table[r.id().unwrap() as usize]).abs() < 1e-14);
    }
}

#[test]
fn coupled_models_depend_on_order() {
    let m = random_weak_model(2, 2, 2, 0.5, 21).unwrap();
    let p01 = exact_string_prob(&m, &BitString::parse("01").unwrap()).unwrap();
    let p10 = exact_string_prob(&m, &BitString::parse("10").unwrap()).unwrap();
    assert!((p01 - p10).abs() > 1e-6, "{p01} vs {p10}");
}

#[test]
fn perturbative_residual_is_third_order() {
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let base = random_weak_model(4, 3, 2, 1.0, 300 + seed).unwrap();
        let f = base.initial_env().clone();
        let c = perturbative_corrections(&base, 1, &f).unwrap();
        assert!(c.q1.iter().chain(&c.q2).all(|x| x.is_finite()));
        assert!((c.q1[0] + c.q1[1]).abs() < 1e-12 && (c.q2[0] + c.q2[1]).abs() < 1e-12);
        let residual = |eps: f64| {
            let m = base.with_lambda(eps).unwrap();
            let t = TrajectoryState { env: f.clone(), bits: vec![false], probability: 1.0 };
            let p = step_distribution(&m, &t, 1).unwrap().p[1];
            (p - c.predict(1, eps)).abs()
        };
        ratios.push(residual(0.01) / residual(0.005));
    }
    for r in &ratios {
        assert!((r / 8.0 - 1.0).abs() < 0.2, "{ratios:?}");
    }
}

#[test]
fn corrections_need_a_decomposition() {
    let m = random_iid_model(2, 2, 0.1, 1).unwrap();
    assert!(perturbative_corrections(&m, 0, m.initial_env()).is_err());
}

#[test]
fn exponential_matches_ode_integration() {
    for seed in 0..5u64 {
        let m = random_weak_model(6, 2, 3, 0.8, 500 + seed).unwrap();
        for k in 0..2 {
            let dev = propagator_ode_check(&m, k, 64).unwrap();
            assert!(dev < 1e-9, "seed {seed} step {k}: {dev:e}");
        }
    }
}

#[test]
fn inconsistent_decomposition_is_rejected() {
    let m = random_weak_model(2, 2, 2, 0.1, 7).unwrap();
    let mut w = m.weak_structure().unwrap().clone();
    w.env_ops[1][0] = w.env_ops[1][0].scale(2.0);
    let plain = ModelJson { weak_structure: None, ..ModelJson::from(&m) }.to_model().unwrap();
    assert!(plain.clone().with_weak_structure(w).is_err());
    assert!(plain.with_weak_structure(m.weak_structure().unwrap().clone()).is_ok());
}

#[test]
fn json_is_row_major_pairs() {
    let m = random_weak_model(2, 1, 1, 0.1, 3).unwrap();
    let j = ModelJson::from(&m);
    let text = serde_json::to_string(&j).unwrap();
    let back: ModelJson = serde_json::from_str(&text).unwrap();
    assert_eq!(back, j);
    let u = m.detector_unitary();
    assert_eq!(j.detector_unitary.data[1], [u[(0, 1)].re, u[(0, 1)].im]);
}
