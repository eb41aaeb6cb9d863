//! Library results against independent reference computations: explicit
//! inverses, dense projector formulas, planted spectra, grid searches and
//! direct Monte-Carlo replays.

use rand::Rng;
use rand_distr::StandardNormal;

use hyptest::distributions::{draw, hellinger_sq, tv, DiscreteDistribution};
use hyptest::harness::generators::random_invertible;
use hyptest::leverage::{leverage_pmf, leverage_pmf_derivative, leverage_sample, leverage_w};
use hyptest::numerics::{gram, min_eigenvalue, row_gram_gap, sym_eigenvalues, thin_qr, SymMatrix};
use hyptest::optimizer::{
    leverage_hellinger, leverage_variance, max_hellinger_leverage, max_hellinger_softmax,
    max_variance_leverage, max_variance_softmax, softmax_hellinger,
};
use hyptest::softmax::softmax_pmf;
use hyptest::tester::{
    estimate_sample_complexity, estimate_success_detail, run_test, ComplexityConfig, Hypothesis,
    ModelOracle, OracleSpec, Query, QuerySource,
};
use hyptest::{
    BoxConstraint, Constraint, EnergyConstraint, Execution, OptimizerConfig, ParamMatrix,
    ScaleQuery, Seed, SoftmaxQuery,
};

fn gaussian(rng: &mut impl Rng, n: usize, d: usize) -> ParamMatrix {
    ParamMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

type Dense = Vec<Vec<f64>>;

fn dense(a: &ParamMatrix) -> Dense {
    a.to_rows()
}

fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn inverse(mut g: Dense) -> Dense {
    let d = g.len();
    let mut inv: Dense = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for c in 0..d {
        let piv = (c..d).max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs())).unwrap();
        g.swap(c, piv);
        inv.swap(c, piv);
        let f = g[c][c];
        for j in 0..d {
            g[c][j] /= f;
            inv[c][j] /= f;
        }
        for r in 0..d {
            if r != c {
                let f = g[r][c];
                for j in 0..d {
                    g[r][j] -= f * g[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

fn scaled(a: &Dense, s: &[f64]) -> Dense {
    a.iter().zip(s).map(|(r, si)| r.iter().map(|v| v / si).collect()).collect()
}

/// `Π = A_s (A_sᵀA_s)⁻¹ A_sᵀ` formed densely.
fn projector(a: &Dense, s: &[f64]) -> Dense {
    let a_s = scaled(a, s);
    let gi = inverse(mat_mul(&transpose(&a_s), &a_s));
    mat_mul(&mat_mul(&a_s, &gi), &transpose(&a_s))
}

#[test]
fn gram_matches_triple_loop() {
    let mut rng = Seed(1).rng();
    for _ in 0..50 {
        let (n, d) = (rng.random_range(1..8), rng.random_range(1..6));
        let a = gaussian(&mut rng, n, d);
        let g = gram(&a);
        for j in 0..d {
            for k in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += a.get(i, j) * a.get(i, k);
                }
                assert!((g.get(j, k) - acc).abs() <= 1e-13 * (1.0 + acc.abs()));
            }
        }
    }
}

#[test]
fn min_eigenvalue_recovers_planted_spectrum() {
    let mut rng = Seed(2).rng();
    for trial in 0..40 {
        let d = rng.random_range(1..=6);
        let q = thin_qr(&gaussian(&mut rng, d, d)).unwrap().q;
        let mut lambda: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..5.0)).collect();
        let s = SymMatrix::from_upper(d, |i, j| (0..d).map(|k| q.get(i, k) * lambda[k] * q.get(j, k)).sum());
        lambda.sort_by(f64::total_cmp);
        assert!((min_eigenvalue(&s) - lambda[0]).abs() < 1e-10, "trial {trial}");
        let all = sym_eigenvalues(&s);
        for (x, y) in all.iter().zip(&lambda) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn thin_qr_reconstructs_with_orthonormal_q() {
    let mut rng = Seed(3).rng();
    for _ in 0..30 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(d..=9);
        let a = gaussian(&mut rng, n, d);
        let qr = thin_qr(&a).unwrap();
        assert!(qr.q.matmul(&qr.r).unwrap().max_abs_diff(&a) < 1e-12);
        let qtq = qr.q.transpose().matmul(&qr.q).unwrap();
        assert!(qtq.max_abs_diff(&ParamMatrix::identity(d)) < 1e-13);
        for i in 0..d {
            assert!(qr.r.get(i, i) >= 0.0);
            for j in 0..i {
                assert_eq!(qr.r.get(i, j), 0.0);
            }
        }
    }
}

/// Largest |eigenvalue| of a small symmetric matrix by power iteration.
fn spectral_norm(m: &Dense) -> f64 {
    let d = m.len();
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    for _ in 0..2000 {
        // iterate on m² so that ±λ converge together
        let mv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[i][j] * v[j]).sum()).collect();
        let mmv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[i][j] * mv[j]).sum()).collect();
        let nrm = mmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        v = mmv.iter().map(|x| x / nrm).collect();
    }
    let mv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[i][j] * v[j]).sum()).collect();
    mv.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn row_gram_gap_matches_dense_spectral_norms() {
    let mut rng = Seed(4).rng();
    for _ in 0..30 {
        let (n, d) = (rng.random_range(1..6), rng.random_range(1..5));
        let a = gaussian(&mut rng, n, d);
        let b = gaussian(&mut rng, n, d);
        let mut expected = 0.0;
        for i in 0..n {
            let m: Dense = (0..d)
                .map(|j| (0..d).map(|k| b.get(i, j) * b.get(i, k) - a.get(i, j) * a.get(i, k)).collect())
                .collect();
            expected += spectral_norm(&m);
        }
        let got = row_gram_gap(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-9 * (1.0 + expected), "{got} vs {expected}");
    }
}

#[test]
fn softmax_matches_unshifted_formula() {
    let mut rng = Seed(5).rng();
    let e = EnergyConstraint::new(2.0).unwrap();
    for _ in 0..100 {
        let a = gaussian(&mut rng, 5, 3);
        let xv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = SoftmaxQuery::new(xv.clone(), &e).unwrap();
        let logits = a.mul_vec(&xv).unwrap();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let p = softmax_pmf(&a, &x).unwrap();
        for (pi, l) in p.probs().iter().zip(&logits) {
            assert!((pi - l.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn leverage_matches_explicit_inverse() {
    let mut rng = Seed(6).rng();
    let bx = BoxConstraint::new(1.0, 2.0).unwrap();
    let sv = vec![1.0, 1.0, 2f64.sqrt()];
    for _ in 0..20 {
        let a = gaussian(&mut rng, 3, 2);
        let pi = projector(&dense(&a), &sv);
        let p = leverage_pmf(&a, &ScaleQuery::new(sv.clone(), &bx).unwrap()).unwrap();
        for i in 0..3 {
            assert!((p.probs()[i] - pi[i][i] / 2.0).abs() < 1e-10);
        }
    }
}

#[test]
fn leverage_w_matches_dense_formula() {
    let mut rng = Seed(7).rng();
    let bx = BoxConstraint::new(0.5, 2.0).unwrap();
    for _ in 0..20 {
        let a = gaussian(&mut rng, 4, 2);
        let m = gaussian(&mut rng, 4, 2);
        let sv: Vec<f64> = (0..4).map(|_| rng.random_range(0.5f64..2.0).sqrt()).collect();
        let s = ScaleQuery::new(sv.clone(), &bx).unwrap();
        let (ad, md) = (dense(&a), dense(&m));
        let a_s = scaled(&ad, &sv);
        let m_s = scaled(&md, &sv);
        let gi = inverse(mat_mul(&transpose(&a_s), &a_s));
        let pi = projector(&ad, &sv);
        let k = mat_mul(&mat_mul(&m_s, &gi), &transpose(&a_s));
        let i_minus_pi: Dense = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j)) - pi[i][j]).collect()).collect();
        let w_mat = mat_mul(&i_minus_pi, &k);
        let w = leverage_w(&a, &m, &s).unwrap();
        let deriv = leverage_pmf_derivative(&a, &m, &s).unwrap();
        for i in 0..4 {
            assert!((w[i] - w_mat[i][i] / pi[i][i]).abs() < 1e-10);
            assert!((deriv[i] - 2.0 * w_mat[i][i] / 2.0).abs() < 1e-10);
        }
    }
}

#[test]
fn leverage_frequencies_on_identity() {
    let bx = BoxConstraint::new(0.5, 2.0).unwrap();
    let s = ScaleQuery::new(vec![1.0, 0.9], &bx).unwrap();
    let ys = leverage_sample(&ParamMatrix::identity(2), &s, Seed(8), 20_000).unwrap();
    let f = ys.iter().filter(|&&y| y == 0).count() as f64 / 20_000.0;
    // 4σ ≈ 0.014 at m = 2·10⁴; the ±0.01 band is ≈ 2.8σ
    assert!((f - 0.5).abs() < 0.01, "{f}");
    assert_eq!(ys, leverage_sample(&ParamMatrix::identity(2), &s, Seed(8), 20_000).unwrap());
}

fn cfg(seed: u64) -> OptimizerConfig {
    OptimizerConfig { seed: Seed(seed), ..OptimizerConfig::default() }
}

#[test]
fn softmax_hellinger_matches_grid_search() {
    let a = ParamMatrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
    let b = ParamMatrix::from_rows(&[vec![0.1], vec![0.0]]).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let r = max_hellinger_softmax(&a, &b, &e, &cfg(9)).unwrap();
    let grid = (0..=100_000)
        .map(|k| -1.0 + 2.0 * k as f64 / 100_000.0)
        .map(|x| softmax_hellinger(&a, &b, &[x]).unwrap())
        .fold(0.0, f64::max);
    assert!((r.value - grid).abs() < 1e-6, "{} vs {grid}", r.value);
    assert!(r.constraint_active);
}

#[test]
fn shift_and_right_invariant_pairs_are_useless() {
    let mut rng = Seed(10).rng();
    let a = gaussian(&mut rng, 5, 3);
    let w: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
    let b = ParamMatrix::from_fn(5, 3, |i, j| a.get(i, j) + w[j]);
    let e = EnergyConstraint::new(2.0).unwrap();
    assert!(max_hellinger_softmax(&a, &b, &e, &cfg(1)).unwrap().value <= 1e-8);
    let shift_dir = ParamMatrix::from_fn(5, 3, |_, j| w[j]);
    assert!(max_variance_softmax(&a, &shift_dir, &e, &cfg(1)).unwrap().value <= 1e-10);

    let r = random_invertible(3, Seed(11), 1e3).unwrap();
    let bx = BoxConstraint::new(0.5, 2.0).unwrap();
    let v = max_hellinger_leverage(&a, &a.matmul(&r).unwrap(), &bx, &cfg(2)).unwrap().value;
    assert!(v <= 1e-8, "{v}");
}

#[test]
fn bernoulli_variance_matches_grid() {
    let a = ParamMatrix::zeros(2, 1);
    let m = ParamMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let r = max_variance_softmax(&a, &m, &e, &cfg(12)).unwrap();
    assert!((r.value - 0.25).abs() < 1e-9);
    assert!((r.argmax[0].abs() - 1.0).abs() < 1e-9);
}

fn leverage_grid_max(f: impl Fn(&[f64]) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    let pt = |i: usize| lo + (hi - lo) * i as f64 / (k - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                best = best.max(f(&[pt(i), pt(j), pt(l)]));
            }
        }
    }
    best
}

#[test]
fn leverage_optimizers_match_grid() {
    let a = ParamMatrix::from_rows(&[vec![1.0], vec![0.6], vec![-0.8]]).unwrap();
    let b = ParamMatrix::from_rows(&[vec![1.1], vec![0.4], vec![-0.9]]).unwrap();
    let m = b.sub(&a).unwrap();
    let bx = BoxConstraint::new(0.5, 2.0).unwrap();
    let (lo, hi) = bx.u_range();

    let r = max_hellinger_leverage(&a, &b, &bx, &cfg(13)).unwrap();
    let grid = leverage_grid_max(|u| leverage_hellinger(&a, &b, u).unwrap(), lo, hi, 50);
    assert!(r.value >= grid - 1e-5, "{} vs {grid}", r.value);
    assert!(r.value <= grid + 1e-3);

    let r = max_variance_leverage(&a, &m, &bx, &cfg(14)).unwrap();
    let grid = leverage_grid_max(|u| leverage_variance(&a, &m, u).unwrap(), lo, hi, 50);
    assert!(r.value >= grid - 1e-5, "{} vs {grid}", r.value);
}

#[test]
fn optimizer_is_monotone_in_restarts_and_energy() {
    let mut rng = Seed(15).rng();
    let a = gaussian(&mut rng, 5, 3);
    let b = a.add_scaled(&gaussian(&mut rng, 5, 3), 0.3).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let few = max_hellinger_softmax(&a, &b, &e, &OptimizerConfig { restarts: 4, ..cfg(16) }).unwrap();
    let many = max_hellinger_softmax(&a, &b, &e, &OptimizerConfig { restarts: 16, ..cfg(16) }).unwrap();
    assert!(many.value >= few.value);
    let big = max_hellinger_softmax(&a, &b, &EnergyConstraint::new(2.0).unwrap(), &cfg(16)).unwrap();
    assert!(big.value >= many.value - 1e-9);
}

fn separated_softmax() -> (OracleSpec, Query) {
    let a = ParamMatrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
    let b = ParamMatrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let q = Query::Softmax(SoftmaxQuery::new(vec![1.0], &e).unwrap());
    (OracleSpec::new(a, b, Constraint::Energy(e)).unwrap(), q)
}

#[test]
fn estimate_success_replays_model_oracle_trials() {
    let (spec, q) = separated_softmax();
    let seed = Seed(17);
    let (m, trials) = (3, 300);
    let est = estimate_success_detail(&spec, &q, m, trials, seed, Execution::Sequential).unwrap();
    for (truth, rate) in [(Hypothesis::H0, est.under_h0), (Hypothesis::H1, est.under_h1)] {
        let mut wins = 0;
        for k in 0..trials {
            let mut oracle = ModelOracle::new(spec.clone(), truth, seed.derive(&[u64::from(truth.index()), k as u64]));
            let rep = run_test(&mut oracle, m, &QuerySource::Fixed(q.clone())).unwrap();
            assert_eq!(rep.m, m as u64);
            wins += usize::from(rep.decision == oracle.reveal());
        }
        assert_eq!(wins as f64 / trials as f64, rate);
    }
}

#[test]
fn large_separation_is_decisive_and_one_sample_is_not() {
    let (spec, q) = separated_softmax();
    let r200 = estimate_success_detail(&spec, &q, 200, 1000, Seed(18), Execution::default()).unwrap();
    assert!(r200.under_h0 >= 0.99);
    let r1 = estimate_success_detail(&spec, &q, 1, 10_000, Seed(19), Execution::default()).unwrap();
    assert!(r1.min() > 0.5 && r1.min() < 1.0, "{r1:?}");
}

#[test]
fn decision_depends_only_on_samples() {
    let (spec, q) = separated_softmax();
    let (p0, p1) = spec.pmfs(&q).unwrap();
    let ys = draw(&p1, Seed(20), 7);
    let d1 = hyptest::tester::lrt_decide(&ys, &p0, &p1).unwrap();
    let d2 = hyptest::tester::lrt_decide(&ys, &p0, &p1).unwrap();
    assert_eq!(d1, d2);
}

#[test]
fn swapping_hypotheses_mirrors_error_rates() {
    let a = ParamMatrix::from_rows(&[vec![0.3], vec![0.0], vec![-0.2]]).unwrap();
    let b = ParamMatrix::from_rows(&[vec![0.0], vec![0.4], vec![-0.1]]).unwrap();
    let e = EnergyConstraint::new(1.0).unwrap();
    let q = Query::Softmax(SoftmaxQuery::new(vec![1.0], &e).unwrap());
    let spec = OracleSpec::new(a, b, Constraint::Energy(e)).unwrap();
    let fwd = estimate_success_detail(&spec, &q, 25, 4000, Seed(21), Execution::default()).unwrap();
    let rev = estimate_success_detail(&spec.swapped(), &q, 25, 4000, Seed(22), Execution::default()).unwrap();
    // exact ties have probability zero here, so the two runs agree up to
    // Monte-Carlo error (4σ ≈ 0.03 at 4000 trials)
    assert!((fwd.under_h0 - rev.under_h1).abs() < 0.04, "{fwd:?} {rev:?}");
    assert!((fwd.under_h1 - rev.under_h0).abs() < 0.04, "{fwd:?} {rev:?}");
}

#[test]
fn success_is_roughly_monotone_in_m() {
    let mut rng = Seed(23).rng();
    let e = EnergyConstraint::new(1.0).unwrap();
    for k in 0..5u64 {
        let a = gaussian(&mut rng, 4, 2);
        let b = a.add_scaled(&gaussian(&mut rng, 4, 2), 0.3).unwrap();
        let spec = OracleSpec::new(a, b, Constraint::Energy(e)).unwrap();
        let q = Query::Softmax(SoftmaxQuery::new(vec![0.6, 0.8], &e).unwrap());
        let trials = 2000;
        let s1 = estimate_success_detail(&spec, &q, 10, trials, Seed(100 + k), Execution::default()).unwrap().min();
        let s4 = estimate_success_detail(&spec, &q, 40, trials, Seed(200 + k), Execution::default()).unwrap().min();
        let se = (0.25f64 / trials as f64).sqrt();
        assert!(s4 >= s1 - 2.0 * se, "{s1} → {s4}");
    }
}

/// Normal approximation of the m-sample LRT in the small-perturbation
/// regime: success ≈ Φ(√(2 m H²)), so success 2/3 needs `m·H² ≈ 0.093`.
#[test]
fn sample_complexity_tracks_the_gaussian_prediction() {
    let e = EnergyConstraint::new(1.0).unwrap();
    let a = ParamMatrix::from_rows(&[vec![0.2, 0.0], vec![-0.1, 0.3], vec![0.0, -0.2], vec![0.1, 0.1]]).unwrap();
    let m = ParamMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -0.5]]).unwrap();
    let q = Query::Softmax(SoftmaxQuery::new(vec![0.6, 0.8], &e).unwrap());
    let mut m_stars = Vec::new();
    for &eps in &[0.1, 0.05] {
        let spec = OracleSpec::new(a.clone(), a.add_scaled(&m, eps).unwrap(), Constraint::Energy(e)).unwrap();
        let est = estimate_sample_complexity(
            &spec,
            &q,
            &ComplexityConfig { trials: 4000, seed: Seed(24), ..ComplexityConfig::default() },
        )
        .unwrap();
        let product = est.m_star as f64 * est.hellinger_sq;
        assert!((0.06..=0.14).contains(&product), "ε = {eps}: m*·H² = {product}");
        m_stars.push(est.m_star as f64);
    }
    // halving ε doubles H and should cut m* by roughly 4
    let ratio = m_stars[1] / m_stars[0];
    assert!((2.5..=6.0).contains(&ratio), "{m_stars:?}");
}

#[test]
fn metric_facts_on_random_pairs() {
    let mut rng = Seed(25).rng();
    for _ in 0..2000 {
        let n = rng.random_range(2..8);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let p = DiscreteDistribution::from_weights(&w).unwrap();
        let q = DiscreteDistribution::from_weights(&v).unwrap();
        let naive = 1.0 - p.probs().iter().zip(q.probs()).map(|(a, b)| (a * b).sqrt()).sum::<f64>();
        assert!((hellinger_sq(&p, &q).unwrap() - naive).abs() < 1e-14);
        let t = tv(&p, &q).unwrap();
        let l1: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum();
        assert!((t - 0.5 * l1).abs() < 1e-15);
    }
}
