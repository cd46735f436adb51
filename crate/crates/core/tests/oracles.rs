//! Library routines checked against independent reference implementations.

mod support;

use grand::dip::g_cdf;
use grand::latent::LatentEmbedding;
use grand::metrics::wasserstein1;
use grand::nodewise::{nodewise_logistic, nodewise_ols, NodewiseOptions};
use grand::seed::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;

use support::*;

#[test]
fn reference_helpers_are_sane() {
    // assignment against brute force over all permutations of 4
    let cost = vec![
        vec![4.0, 1.0, 3.0, 2.0],
        vec![2.0, 0.0, 5.0, 3.0],
        vec![3.0, 2.0, 2.0, 1.0],
        vec![1.0, 4.0, 3.0, 5.0],
    ];
    let mut best = f64::INFINITY;
    let idx = [0usize, 1, 2, 3];
    for a in idx {
        for b in idx {
            for c in idx {
                for d in idx {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    if p.iter().all(|&k| !std::mem::replace(&mut seen[k], true)) {
                        best = best.min((0..4).map(|r| cost[r][p[r]]).sum());
                    }
                }
            }
        }
    }
    assert_eq!(hungarian(&cost), best);
    // Kolmogorov tail at the familiar 5% critical value
    assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
    // G limit: no noise leaves the uniform CDF
    assert!((quadrature_g(0.3, 1e4) - 0.3).abs() < 1e-3);
}

#[test]
fn wasserstein_matches_transport_lp() {
    let mut rng = rng_from_seed(91);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let got = wasserstein1(&xs, &ys).unwrap();
        let want = transport_lp(&xs, &ys);
        assert!((got - want).abs() < 1e-9, "{xs:?} {ys:?}: {got} vs {want}");
    }
    let got = wasserstein1(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
    assert!((got - transport_lp(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).abs() < 1e-12);
    assert!((got - 2.0).abs() < 1e-12);
}

#[test]
fn wasserstein_triangle_inequality() {
    let mut rng = rng_from_seed(92);
    for _ in 0..200 {
        let draw = |rng: &mut grand::seed::SeededRng| -> Vec<f64> {
            let k = rng.random_range(1..=7);
            (0..k).map(|_| rng.random_range(-3.0..3.0)).collect()
        };
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let ab = wasserstein1(&a, &b).unwrap();
        let bc = wasserstein1(&b, &c).unwrap();
        let ac = wasserstein1(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-12);
        assert!((ab - wasserstein1(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn g_matches_numerical_convolution() {
    for eps in [0.5, 1.0, 2.0, 10.0] {
        for k in 0..50 {
            let t = -2.0 + 5.0 * k as f64 / 49.0;
            let got = g_cdf(t, eps);
            let want = quadrature_g(t, eps);
            assert!((got - want).abs() < 1e-6, "eps={eps} t={t}: {got} vs {want}");
        }
    }
    assert!((g_cdf(-2.0, 1.0) - quadrature_g(-2.0, 1.0)).abs() < 1e-6);
    assert!((g_cdf(0.3, 1000.0) - 0.3).abs() < 1e-3);
}

#[test]
fn ols_matches_normal_equation_solve() {
    let mut rng = rng_from_seed(93);
    for _ in 0..20 {
        let (m, d) = (40, 3);
        let h: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(0.0..0.6)).collect()).collect();
        let a: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let holdout = LatentEmbedding::from_rows(&h, None).unwrap();
        let got = nodewise_ols(&a, &holdout).unwrap();
        let want = normal_equations(&h, &a, 1e-10);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn logistic_matches_generic_optimizer() {
    let mut rng = rng_from_seed(94);
    for instance in 0..20 {
        let (m, d) = (50, 2);
        let h: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| 0.8 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let offsets: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..0.0)).collect();
        let x_true: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m)
            .map(|j| {
                let eta = -0.3 + offsets[j] + x_true[0] * h[j][0] + x_true[1] * h[j][1];
                if rng.random_bool(1.0 / (1.0 + (-eta).exp())) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let holdout = LatentEmbedding::from_rows(&h, Some(offsets.clone())).unwrap();
        let fit = nodewise_logistic(&y, &holdout, &NodewiseOptions::default()).unwrap();
        assert!(!fit.separated, "instance {instance} is separable");
        let oracle = bfgs_minimize(&|p: &[f64]| logistic_nll(p, &h, &offsets, &y), &[0.0; 3]);
        let mut got = fit.x.clone();
        got.push(fit.alpha);
        let err = got.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-4, "instance {instance}: {got:?} vs {oracle:?}");
    }
}
