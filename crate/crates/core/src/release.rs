//! End-to-end release: the private mechanism and two comparison methods.
//!
//! Every method partitions the input, fits latent positions on the hold-out
//! block and draws a fresh release-sized network. They differ in how the
//! release latents are obtained:
//!
//! | method    | release latents                                              |
//! |-----------|--------------------------------------------------------------|
//! | `grand`   | node-wise estimates pushed through the privatization chain   |
//! | `laplace` | node-wise estimates plus Laplace noise of scale `d' * range / eps` |
//! | `hat`     | bootstrap draws from the hold-out estimates, no privacy      |
//!
//! Stage randomness comes from seeds derived from the run seed and a stage
//! tag, so each stage is reproducible on its own.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dip::{sample_laplace, CdfModel, CdfOptions, PrivacyBudget};
use crate::graph::{edge_list_string, partition, Graph, HoldoutBlocks, PartitionedGraph};
use crate::holdout::{ase_embed, fit_inner_product, InnerProductFitOptions};
use crate::latent::{sample_network, LatentEmbedding, ModelKind, ModelVariant};
use crate::linalg::SpectrumSelection;
use crate::nodewise::{nodewise_fit_all, NodewiseOptions};
use crate::seed::{derive_seed, derived_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grand,
    Laplace,
    Hat,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Grand, Method::Laplace, Method::Hat];

    pub fn name(self) -> &'static str {
        match self {
            Method::Grand => "grand",
            Method::Laplace => "laplace",
            Method::Hat => "hat",
        }
    }

    pub fn needs_budget(self) -> bool {
        !matches!(self, Method::Hat)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (expected grand, laplace or hat)")))
    }
}

/// Tuning knobs shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReleaseOptions {
    pub holdout_fit: InnerProductFitOptions,
    /// Eigenvalue selection for the dot-product spectral embedding.
    pub ase_selection: SpectrumSelection,
    pub cdf: CdfOptions,
    pub nodewise: NodewiseOptions,
    /// Order in which coordinates of `(x, alpha)` enter the privatization
    /// chain, as a permutation of `0..d'`. `None` keeps the natural order.
    pub chain_order: Option<Vec<usize>>,
}

impl Default for ReleaseOptions {
    fn default() -> Self {
        Self {
            holdout_fit: InnerProductFitOptions::default(),
            ase_selection: SpectrumSelection::Magnitude,
            cdf: CdfOptions::default(),
            nodewise: NodewiseOptions::default(),
            chain_order: None,
        }
    }
}

/// Everything needed to rerun a release bit-for-bit, given the same input graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseConfig {
    pub method: Method,
    pub model: ModelVariant,
    pub dim: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_release: usize,
    pub n_holdout: usize,
    pub options: ReleaseOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Fit and privatization diagnostics. Aggregates only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Likelihood fit on the hold-out block (inner-product model only).
    pub holdout_converged: Option<bool>,
    pub holdout_iterations: Option<usize>,
    pub holdout_gradient_norm: Option<f64>,
    /// Release nodes whose node-wise fit hit the clamp box.
    pub n_separated: usize,
    pub rank_deficient: bool,
    pub cdf_bandwidth: Option<f64>,
    /// Per-coordinate Laplace scales of the Laplace method.
    pub laplace_scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseReport {
    pub released: Graph,
    pub config: ReleaseConfig,
    pub timings: Vec<StageTiming>,
    pub diagnostics: Diagnostics,
}

/// Serializable summary of a release: the report without the graph itself,
/// plus the hash of its canonical edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub config: ReleaseConfig,
    pub n_released_nodes: usize,
    pub n_released_edges: usize,
    /// SHA-256 of the released edge list as written by `write_edge_list`.
    pub content_hash: String,
    pub timings: Vec<StageTiming>,
    pub diagnostics: Diagnostics,
}

impl ReleaseReport {
    /// SHA-256 of the released edge list in canonical text form.
    pub fn content_hash(&self) -> String {
        edge_list_sha256(&self.released)
    }

    pub fn manifest(&self) -> ReleaseManifest {
        ReleaseManifest {
            config: self.config.clone(),
            n_released_nodes: self.released.n_nodes(),
            n_released_edges: self.released.n_edges(),
            content_hash: self.content_hash(),
            timings: self.timings.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

pub fn edge_list_sha256(g: &Graph) -> String {
    let digest = Sha256::digest(edge_list_string(g).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Intermediate latents of one run, for tests and diagnostics. Holds
/// hold-out estimates, so it must never be written next to a release.
#[derive(Debug, Clone)]
pub struct ReleaseTrace {
    pub holdout: LatentEmbedding,
    /// Node-wise estimates, one row per release node (absent for `hat`).
    pub estimated: Option<LatentEmbedding>,
    /// Latents the network was drawn from, before relabeling.
    pub released_latents: LatentEmbedding,
    /// Released network before relabeling.
    pub unshuffled: Graph,
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.0.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Runs GRAND on `graph`: `n_release` randomly chosen nodes are released.
pub fn grand_release(
    graph: &Graph,
    n_release: usize,
    kind: ModelKind,
    budget: PrivacyBudget,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<ReleaseReport> {
    run_method(graph, n_release, Method::Grand, kind, Some(budget), seed, opts)
}

pub fn laplace_baseline(
    graph: &Graph,
    n_release: usize,
    kind: ModelKind,
    budget: PrivacyBudget,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<ReleaseReport> {
    run_method(graph, n_release, Method::Laplace, kind, Some(budget), seed, opts)
}

pub fn hat_baseline(
    graph: &Graph,
    n_release: usize,
    kind: ModelKind,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<ReleaseReport> {
    run_method(graph, n_release, Method::Hat, kind, None, seed, opts)
}

/// Partitions `graph` with the run seed and releases with `method`.
pub fn run_method(
    graph: &Graph,
    n_release: usize,
    method: Method,
    kind: ModelKind,
    budget: Option<PrivacyBudget>,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<ReleaseReport> {
    let start = Instant::now();
    let parts = partition(graph, n_release, derive_seed(seed, "partition", 0)).map_err(|e| e.in_stage("partition"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let (mut report, _) = release_partitioned(&parts, method, kind, budget, seed, opts)?;
    report.timings.insert(
        0,
        StageTiming {
            stage: "partition".into(),
            seconds: elapsed,
        },
    );
    Ok(report)
}

/// Releases from an existing partition. Only the hold-out and cross blocks
/// are handed to the estimation stages.
pub fn release_partitioned(
    parts: &PartitionedGraph,
    method: Method,
    kind: ModelKind,
    budget: Option<PrivacyBudget>,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<(ReleaseReport, ReleaseTrace)> {
    let (released, trace, timings, diagnostics) =
        release_from_blocks(parts.holdout_blocks(), parts.n_release(), method, kind, budget, seed, opts)?;
    let config = ReleaseConfig {
        method,
        model: kind.variant,
        dim: kind.dim,
        epsilon: budget.map(PrivacyBudget::epsilon),
        seed,
        n_nodes: parts.n_release() + parts.n_holdout(),
        n_release: parts.n_release(),
        n_holdout: parts.n_holdout(),
        options: opts.clone(),
    };
    Ok((
        ReleaseReport {
            released,
            config,
            timings,
            diagnostics,
        },
        trace,
    ))
}

/// Hold-out latent estimates: likelihood ascent for the inner-product
/// model, spectral embedding for the dot-product model.
pub fn fit_holdout(a22: &Graph, kind: ModelKind, opts: &ReleaseOptions, diag: &mut Diagnostics) -> Result<LatentEmbedding> {
    match kind.variant {
        ModelVariant::InnerProduct => {
            let fit = fit_inner_product(a22, kind.dim, &opts.holdout_fit)?;
            if !fit.converged {
                log::warn!(
                    "hold-out likelihood fit stopped after {} iterations (gradient {:.2e})",
                    fit.iterations,
                    fit.gradient_norm
                );
            }
            diag.holdout_converged = Some(fit.converged);
            diag.holdout_iterations = Some(fit.iterations);
            diag.holdout_gradient_norm = Some(fit.gradient_norm);
            Ok(fit.embedding)
        }
        ModelVariant::Rdpg => ase_embed(a22, kind.dim, opts.ase_selection),
    }
}

type BlockOutput = (Graph, ReleaseTrace, Vec<StageTiming>, Diagnostics);

fn release_from_blocks(
    blocks: HoldoutBlocks<'_>,
    n_release: usize,
    method: Method,
    kind: ModelKind,
    budget: Option<PrivacyBudget>,
    seed: u64,
    opts: &ReleaseOptions,
) -> Result<BlockOutput> {
    let m = blocks.a22.n_nodes();
    if kind.dim >= m {
        return Err(Error::invalid(format!(
            "latent dimension {} must be smaller than the hold-out size {m}",
            kind.dim
        )));
    }
    if method.needs_budget() && budget.is_none() {
        return Err(Error::invalid(format!("method {method} needs a privacy budget")));
    }
    let mut timer = Timer(Vec::new());
    let mut diag = Diagnostics::default();

    let holdout = timer.run("holdout-fit", || fit_holdout(blocks.a22, kind, opts, &mut diag))?;

    let (estimated, released_latents) = match method {
        Method::Hat => {
            let latents = timer.run("bootstrap", || {
                let mut rng = derived_rng(seed, "bootstrap", 0);
                let ids: Vec<usize> = (0..n_release).map(|_| rng.random_range(0..m)).collect();
                Ok(holdout.select(&ids))
            })?;
            (None, latents)
        }
        Method::Grand | Method::Laplace => {
            let fit = timer.run("nodewise-fit", || nodewise_fit_all(blocks.a12, &holdout, &kind, &opts.nodewise))?;
            diag.n_separated = fit.n_separated();
            diag.rank_deficient = fit.rank_deficient;
            let budget = budget.expect("checked above");
            let latents = if method == Method::Grand {
                timer.run("privatize", || {
                    privatize_with_order(&holdout, &fit.embedding, budget, seed, opts, &mut diag)
                })?
            } else {
                timer.run("laplace-noise", || {
                    let (noisy, scales) = laplace_perturb(&holdout, &fit.embedding, budget, seed)?;
                    diag.laplace_scales = Some(scales);
                    Ok(noisy)
                })?
            };
            (Some(fit.embedding), latents)
        }
    };

    let unshuffled = timer.run("sample-network", || {
        sample_network(&kind, &released_latents, &mut derived_rng(seed, "sample-network", 0))
    })?;
    let mut perm: Vec<usize> = (0..unshuffled.n_nodes()).collect();
    perm.shuffle(&mut derived_rng(seed, "relabel", 0));
    let released = unshuffled.relabeled(&perm);

    Ok((
        released,
        ReleaseTrace {
            holdout,
            estimated,
            released_latents,
            unshuffled,
        },
        timer.0,
        diag,
    ))
}

fn check_order(order: &[usize], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    if order.len() != dim {
        return Err(Error::invalid(format!("chain order has {} entries, expected {dim}", order.len())));
    }
    for &c in order {
        if c >= dim || std::mem::replace(&mut seen[c], true) {
            return Err(Error::invalid(format!("chain order {order:?} is not a permutation of 0..{dim}")));
        }
    }
    Ok(())
}

fn permute_rows(e: &LatentEmbedding, order: &[usize], inverse: bool) -> Result<LatentEmbedding> {
    let rows: Vec<Vec<f64>> = (0..e.n())
        .map(|i| {
            let row = e.augmented_row(i);
            let mut out = vec![0.0; row.len()];
            for (k, &c) in order.iter().enumerate() {
                if inverse {
                    out[c] = row[k];
                } else {
                    out[k] = row[c];
                }
            }
            out
        })
        .collect();
    if rows.is_empty() {
        return Ok(LatentEmbedding::empty(e.dim(), e.alphas().is_some()));
    }
    LatentEmbedding::from_augmented(&rows, e.alphas().is_some(), e.dim())
}

fn privatize_with_order(
    holdout: &LatentEmbedding,
    estimated: &LatentEmbedding,
    budget: PrivacyBudget,
    seed: u64,
    opts: &ReleaseOptions,
    diag: &mut Diagnostics,
) -> Result<LatentEmbedding> {
    let noise_seed = derive_seed(seed, "privatize", 0);
    match &opts.chain_order {
        None => {
            let model = CdfModel::fit(holdout, &opts.cdf)?;
            diag.cdf_bandwidth = Some(model.bandwidth());
            crate::dip::privatize_all(estimated, &model, budget, noise_seed)
        }
        Some(order) => {
            check_order(order, holdout.augmented_dim())?;
            let model = CdfModel::fit(&permute_rows(holdout, order, false)?, &opts.cdf)?;
            diag.cdf_bandwidth = Some(model.bandwidth());
            let private = crate::dip::privatize_all(&permute_rows(estimated, order, false)?, &model, budget, noise_seed)?;
            permute_rows(&private, order, true)
        }
    }
}

/// Laplace scale for one coordinate: `d' * range / eps`.
pub fn laplace_scale(privatized_dim: usize, range: f64, budget: PrivacyBudget) -> f64 {
    privatized_dim as f64 * range / budget.epsilon()
}

/// Adds independent Laplace noise to every coordinate of every release
/// vector, degree parameter included. Returns the noisy latents and the
/// per-coordinate scales.
pub fn laplace_perturb(
    holdout: &LatentEmbedding,
    estimated: &LatentEmbedding,
    budget: PrivacyBudget,
    seed: u64,
) -> Result<(LatentEmbedding, Vec<f64>)> {
    let d_prime = holdout.augmented_dim();
    if estimated.augmented_dim() != d_prime {
        return Err(Error::DimensionMismatch {
            expected: d_prime,
            got: estimated.augmented_dim(),
        });
    }
    let scales: Vec<f64> = (0..d_prime)
        .map(|l| {
            let (lo, hi) = (0..holdout.n())
                .map(|i| holdout.augmented_row(i)[l])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            laplace_scale(d_prime, (hi - lo).max(0.0), budget)
        })
        .collect();
    let noise_seed = derive_seed(seed, "laplace", 0);
    let rows: Vec<Vec<f64>> = (0..estimated.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(noise_seed, "laplace-noise", i as u64);
            estimated
                .augmented_row(i)
                .iter()
                .zip(&scales)
                .map(|(&z, &s)| z + if s > 0.0 { sample_laplace(1.0 / s, &mut rng) } else { 0.0 })
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Ok((LatentEmbedding::empty(estimated.dim(), estimated.alphas().is_some()), scales));
    }
    Ok((
        LatentEmbedding::from_augmented(&rows, estimated.alphas().is_some(), estimated.dim())?,
        scales,
    ))
}
