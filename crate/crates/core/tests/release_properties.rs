//! Structural guarantees of the release pipeline: separability, A11
//! non-use, hold-out hygiene, determinism, and desk-scale utility.

mod support;

use grand::dip::PrivacyBudget;
use grand::graph::{partition, Graph, PartitionedGraph};
use grand::latent::{gen_lsm_truncgauss, gen_rdpg_uniform, MixtureSpec};
use grand::metrics::{LocalStatsReport, LogFlags, StatDistances};
use grand::nodewise::{nodewise_fit_all, NodewiseOptions};
use grand::release::{laplace_perturb, release_partitioned, run_method, Method, ReleaseOptions, ReleaseTrace};
use grand::seed::{derive_seed, rng_from_seed};
use grand::{LatentEmbedding, ModelKind};
use rand::Rng;

use support::median;

fn lsm_parts(n: usize, m: usize, dim: usize, seed: u64) -> PartitionedGraph {
    let (_, g, _) = gen_lsm_truncgauss(n + m, dim, &MixtureSpec::default(), 0.1, &mut rng_from_seed(seed)).unwrap();
    partition(&g, n, derive_seed(seed, "partition", 0)).unwrap()
}

fn rdpg_parts(n: usize, m: usize, dim: usize, rho: f64, seed: u64) -> PartitionedGraph {
    let (_, g, _) = gen_rdpg_uniform(n + m, dim, rho, &mut rng_from_seed(seed)).unwrap();
    partition(&g, n, derive_seed(seed, "partition", 0)).unwrap()
}

fn eps(e: f64) -> Option<PrivacyBudget> {
    Some(PrivacyBudget::new(e).unwrap())
}

fn same_rows_except(a: &LatentEmbedding, b: &LatentEmbedding, changed: usize) {
    assert_eq!(a.n(), b.n());
    for i in 0..a.n() {
        let same = a.augmented_row(i) == b.augmented_row(i);
        if i == changed {
            assert!(!same, "row {i} should change");
        } else {
            assert!(same, "row {i} changed");
        }
    }
}

#[test]
fn changing_one_cross_row_changes_only_that_node() {
    let opts = ReleaseOptions::default();
    for (k, (kind, parts)) in [
        (ModelKind::inner_product(2), lsm_parts(60, 80, 2, 1)),
        (ModelKind::rdpg(2), rdpg_parts(60, 80, 2, 0.2, 2)),
    ]
    .into_iter()
    .enumerate()
    {
        let (_, base) = release_partitioned(&parts, Method::Grand, kind, eps(1.0), 11, &opts).unwrap();
        let mut rng = rng_from_seed(50 + k as u64);
        let i = rng.random_range(0..parts.n_release());
        let mut changed = parts.clone();
        for h in 0..changed.n_holdout() {
            if rng.random_bool(0.3) {
                let bit = changed.a12.get(i, h);
                changed.a12.set(i, h, !bit);
            }
        }
        let (_, after) = release_partitioned(&changed, Method::Grand, kind, eps(1.0), 11, &opts).unwrap();
        assert_eq!(base.holdout, after.holdout);
        same_rows_except(base.estimated.as_ref().unwrap(), after.estimated.as_ref().unwrap(), i);
        same_rows_except(&base.released_latents, &after.released_latents, i);
        // pairs not touching node i keep their draw
        for a in 0..parts.n_release() {
            for b in (a + 1)..parts.n_release() {
                if a != i && b != i {
                    assert_eq!(base.unshuffled.has_edge(a, b), after.unshuffled.has_edge(a, b));
                }
            }
        }
    }
}

fn scrambled(parts: &PartitionedGraph, seed: u64) -> PartitionedGraph {
    let mut rng = rng_from_seed(seed);
    let mut out = parts.clone();
    out.a11 = Graph::from_pair_fn(parts.n_release(), |_, _| rng.random_bool(0.5));
    assert_ne!(out.a11, parts.a11);
    out
}

fn assert_same_trace(a: &ReleaseTrace, b: &ReleaseTrace) {
    assert_eq!(a.holdout, b.holdout);
    assert_eq!(a.estimated, b.estimated);
    assert_eq!(a.released_latents, b.released_latents);
    assert_eq!(a.unshuffled, b.unshuffled);
}

#[test]
fn release_block_is_never_read() {
    let opts = ReleaseOptions::default();
    let parts = lsm_parts(50, 70, 2, 3);
    for method in Method::ALL {
        let b = method.needs_budget().then(|| PrivacyBudget::new(2.0).unwrap());
        let (r1, t1) = release_partitioned(&parts, method, ModelKind::inner_product(2), b, 5, &opts).unwrap();
        let (r2, t2) = release_partitioned(&scrambled(&parts, 9), method, ModelKind::inner_product(2), b, 5, &opts).unwrap();
        assert_eq!(r1.released, r2.released, "{method}");
        assert_eq!(r1.content_hash(), r2.content_hash());
        assert_same_trace(&t1, &t2);
    }
}

#[test]
fn manifest_carries_no_holdout_payload() {
    let parts = lsm_parts(50, 70, 2, 4);
    let (report, trace) =
        release_partitioned(&parts, Method::Grand, ModelKind::inner_product(2), eps(1.0), 8, &ReleaseOptions::default())
            .unwrap();
    let json = serde_json::to_string(&report.manifest()).unwrap();
    for key in ["holdout_ids", "release_ids", "a12", "a22", "a11", "latent", "vectors", "alphas"] {
        assert!(!json.contains(key), "manifest mentions {key}");
    }
    let holdout = &trace.holdout;
    for i in 0..holdout.n() {
        for v in holdout.augmented_row(i) {
            if v == 0.0 || v.abs() == 10.0 {
                continue;
            }
            for text in [serde_json::to_string(&v).unwrap(), format!("{v}")] {
                assert!(!json.contains(&text), "hold-out value {text} leaked");
            }
        }
    }
}

#[test]
fn nodewise_fit_is_schedule_independent() {
    let parts = lsm_parts(3, 60, 2, 5);
    let holdout =
        grand::release::fit_holdout(&parts.a22, ModelKind::inner_product(2), &ReleaseOptions::default(), &mut Default::default())
            .unwrap();
    let serial = NodewiseOptions {
        parallel: false,
        ..Default::default()
    };
    let a = nodewise_fit_all(&parts.a12, &holdout, &ModelKind::inner_product(2), &serial).unwrap();
    let b = nodewise_fit_all(&parts.a12, &holdout, &ModelKind::inner_product(2), &NodewiseOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn releases_are_deterministic_and_well_formed() {
    let (_, g, _) = gen_rdpg_uniform(300, 2, 0.1, &mut rng_from_seed(6)).unwrap();
    for method in Method::ALL {
        let b = method.needs_budget().then(|| PrivacyBudget::new(1.0).unwrap());
        let r1 = run_method(&g, 150, method, ModelKind::rdpg(2), b, 42, &ReleaseOptions::default()).unwrap();
        let r2 = run_method(&g, 150, method, ModelKind::rdpg(2), b, 42, &ReleaseOptions::default()).unwrap();
        assert_eq!(grand::graph::edge_list_string(&r1.released), grand::graph::edge_list_string(&r2.released));
        assert_eq!(r1.released.n_nodes(), 150);
        for (i, j) in r1.released.edges() {
            assert!(i < j && r1.released.has_edge(j, i));
        }
        let r3 = run_method(&g, 150, method, ModelKind::rdpg(2), b, 43, &ReleaseOptions::default()).unwrap();
        assert_ne!(r1.content_hash(), r3.content_hash());
    }
}

#[test]
fn laplace_noise_vanishes_with_huge_budget() {
    let parts = rdpg_parts(40, 60, 2, 0.2, 7);
    let opts = ReleaseOptions::default();
    let (_, trace) = release_partitioned(&parts, Method::Grand, ModelKind::rdpg(2), eps(1.0), 1, &opts).unwrap();
    let est = trace.estimated.unwrap();
    let (noisy, scales) = laplace_perturb(&trace.holdout, &est, PrivacyBudget::new(1e12).unwrap(), 3).unwrap();
    assert!(scales.iter().all(|&s| s < 1e-10));
    for i in 0..est.n() {
        for (a, b) in noisy.augmented_row(i).iter().zip(est.augmented_row(i)) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn grand_preserves_edge_density_on_rdpg() {
    let opts = ReleaseOptions::default();
    let errors: Vec<f64> = (0..10)
        .map(|seed| {
            let parts = rdpg_parts(1000, 1000, 3, 0.1, 100 + seed);
            let (r, _) = release_partitioned(&parts, Method::Grand, ModelKind::rdpg(3), eps(5.0), seed, &opts).unwrap();
            (r.released.density() - parts.a11.density()).abs() / parts.a11.density()
        })
        .collect();
    let med = median(&errors);
    assert!(med < 0.3, "median relative density error {med}");
}

#[test]
fn hat_is_no_worse_than_grand_on_lsm() {
    let opts = ReleaseOptions::default();
    let kind = ModelKind::inner_product(3);
    let (mut hat, mut grand) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let parts = lsm_parts(1000, 1000, 3, 200 + seed);
        let truth = LocalStatsReport::compute(&parts.a11).unwrap();
        for (method, out) in [(Method::Hat, &mut hat), (Method::Grand, &mut grand)] {
            let b = method.needs_budget().then(|| PrivacyBudget::new(1.0).unwrap());
            let (r, _) = release_partitioned(&parts, method, kind, b, seed, &opts).unwrap();
            let stats = LocalStatsReport::compute(&r.released).unwrap();
            out.push(StatDistances::compare(&truth, &stats, LogFlags::default()).unwrap().degree);
        }
    }
    let (h, g) = (median(&hat), median(&grand));
    assert!(h <= g, "median degree distance: hat {h}, grand {g}");
}
