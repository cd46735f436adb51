//! Latent-position estimation on the hold-out block.
//!
//! Two standard estimators: adjacency spectral embedding for dot-product
//! graphs, and full-batch likelihood ascent for the inner-product model.
//! Procrustes alignment is provided for accuracy checks only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::latent::{dot, logit, sigmoid, LatentEmbedding};
use crate::linalg::{fix_signs, graph_top_eigenpairs, SpectrumSelection};
use crate::{Error, Result};

/// Adjacency spectral embedding: the `dim` eigenpairs of `A` selected by
/// `selection`, each eigenvector scaled by `|lambda|^{1/2}`.
///
/// Columns are ordered by the selection (descending `|lambda|` by default)
/// and each eigenvector's sign is fixed so its entries sum to a nonnegative
/// value.
pub fn ase_embed(a22: &Graph, dim: usize, selection: SpectrumSelection) -> Result<LatentEmbedding> {
    let m = a22.n_nodes();
    if dim == 0 || m < dim {
        return Err(Error::invalid(format!(
            "spectral embedding needs 1 <= d <= m, got d={dim}, m={m}"
        )));
    }
    let mut pairs = graph_top_eigenpairs(a22, dim, selection)?;
    fix_signs(&mut pairs.vectors);
    for (c, lambda) in pairs.values.iter().enumerate() {
        let s = lambda.abs().sqrt();
        pairs.vectors.column_mut(c).scale_mut(s);
    }
    LatentEmbedding::from_matrix(&pairs.vectors, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerProductFitOptions {
    pub max_iters: usize,
    /// Initial step, in units of `1 / m`.
    pub step_size: f64,
    /// Threshold on the mean per-node gradient norm, normalized by `m - 1`.
    pub tol: f64,
    /// Box constraint on every coordinate of `(x_i, alpha_i)`.
    pub clamp: f64,
}

impl Default for InnerProductFitOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_size: 1.0,
            tol: 1e-5,
            clamp: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProductFit {
    pub embedding: LatentEmbedding,
    /// Log-likelihood at the returned point.
    pub objective: f64,
    /// Log-likelihood at the spectral initialization.
    pub initial_objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

#[inline]
fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct Params {
    dim: usize,
    x: Vec<f64>,
    alpha: Vec<f64>,
}

impl Params {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Log-likelihood and gradient in one pass over the pairs.
    fn objective_and_gradient(&self, adj: &Graph, gx: &mut [f64], ga: &mut [f64]) -> f64 {
        let m = self.alpha.len();
        let d = self.dim;
        gx.iter_mut().for_each(|v| *v = 0.0);
        ga.iter_mut().for_each(|v| *v = 0.0);
        let mut ll = 0.0;
        for i in 0..m {
            let xi = self.row(i);
            for j in (i + 1)..m {
                let xj = self.row(j);
                let theta = dot(xi, xj) + self.alpha[i] + self.alpha[j];
                let a = if adj.has_edge(i, j) { 1.0 } else { 0.0 };
                ll += a * theta - log1pexp(theta);
                let r = a - sigmoid(theta);
                ga[i] += r;
                ga[j] += r;
                for k in 0..d {
                    gx[i * d + k] += r * xj[k];
                    gx[j * d + k] += r * xi[k];
                }
            }
        }
        ll
    }

    /// Moves column means of `x` to zero, absorbing the shift into `alpha`
    /// so every `theta_ij` is unchanged.
    fn center(&mut self) {
        let m = self.alpha.len();
        let d = self.dim;
        let mut mean = vec![0.0; d];
        for row in self.x.chunks_exact(d) {
            mean.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let half_sq = 0.5 * dot(&mean, &mean);
        for i in 0..m {
            self.x[i * d..(i + 1) * d].iter_mut().zip(&mean).for_each(|(v, mu)| *v -= mu);
            self.alpha[i] += dot(&mean, self.row(i)) + half_sq;
        }
    }

    fn clamp(&mut self, bound: f64) {
        self.x.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
        self.alpha.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
    }
}

fn mean_gradient_norm(gx: &[f64], ga: &[f64], dim: usize) -> f64 {
    let m = ga.len();
    if m < 2 {
        return 0.0;
    }
    let total: f64 = (0..m)
        .map(|i| {
            let sq: f64 = gx[i * dim..(i + 1) * dim].iter().map(|v| v * v).sum::<f64>() + ga[i] * ga[i];
            sq.sqrt()
        })
        .sum();
    total / (m as f64 * (m - 1) as f64)
}

/// Maximum-likelihood fit of the inner-product model
/// `sigmoid(x_i . x_j + alpha_i + alpha_j)` to `a22` by full-batch gradient
/// ascent with step halving.
///
/// Initialization: `x` from the spectral embedding of `a22`, `alpha_i =
/// logit((deg_i + 1) / (m + 1))` minus its mean. After every step `x` is
/// re-centered (translation is absorbed by `alpha`) and all coordinates are
/// clamped to `[-clamp, clamp]`.
pub fn fit_inner_product(a22: &Graph, dim: usize, opts: &InnerProductFitOptions) -> Result<InnerProductFit> {
    let m = a22.n_nodes();
    if dim == 0 || m < dim + 1 {
        return Err(Error::invalid(format!(
            "inner-product fit needs m >= d + 1, got d={dim}, m={m}"
        )));
    }
    let init = ase_embed(a22, dim, SpectrumSelection::Magnitude)?;
    let mut alpha: Vec<f64> = (0..m)
        .map(|i| logit((a22.degree(i) as f64 + 1.0) / (m as f64 + 1.0)))
        .collect();
    let mean_alpha = alpha.iter().sum::<f64>() / m as f64;
    alpha.iter_mut().for_each(|a| *a -= mean_alpha);
    let mut params = Params {
        dim,
        x: init.vectors().to_vec(),
        alpha,
    };
    params.center();
    params.clamp(opts.clamp);

    let mut gx = vec![0.0; m * dim];
    let mut ga = vec![0.0; m];
    let mut objective = params.objective_and_gradient(a22, &mut gx, &mut ga);
    if !objective.is_finite() {
        return Err(Error::NonFinite("inner-product log-likelihood at initialization".into()));
    }
    let initial_objective = objective;
    let mut trace = vec![objective];
    let mut grad_norm = mean_gradient_norm(&gx, &ga, dim);
    let mut step = opts.step_size / m as f64;
    let mut iterations = 0;
    let mut converged = grad_norm < opts.tol;

    let mut trial_gx = vec![0.0; m * dim];
    let mut trial_ga = vec![0.0; m];
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = Params {
                dim,
                x: params.x.iter().zip(&gx).map(|(p, g)| p + step * g).collect(),
                alpha: params.alpha.iter().zip(&ga).map(|(p, g)| p + step * g).collect(),
            };
            trial.center();
            trial.clamp(opts.clamp);
            let value = trial.objective_and_gradient(a22, &mut trial_gx, &mut trial_ga);
            if value.is_finite() && value >= objective {
                params = trial;
                objective = value;
                std::mem::swap(&mut gx, &mut trial_gx);
                std::mem::swap(&mut ga, &mut trial_ga);
                accepted = true;
                step *= 1.25;
                break;
            }
            step *= 0.5;
        }
        if !objective.is_finite() {
            return Err(Error::NonFinite(format!(
                "inner-product log-likelihood after {iterations} iterations"
            )));
        }
        if !accepted {
            // no ascent direction left inside the box
            break;
        }
        trace.push(objective);
        grad_norm = mean_gradient_norm(&gx, &ga, dim);
        converged = grad_norm < opts.tol;
    }
    log::debug!(
        "inner-product fit: {iterations} iterations, objective {objective:.6}, grad {grad_norm:.3e}"
    );

    let embedding = LatentEmbedding::new(dim, params.x, Some(params.alpha))?;
    Ok(InnerProductFit {
        embedding,
        objective,
        initial_objective,
        iterations,
        gradient_norm: grad_norm,
        converged,
        trace,
    })
}

/// Log-likelihood of the inner-product model at `embedding`.
pub fn inner_product_log_likelihood(a22: &Graph, embedding: &LatentEmbedding) -> f64 {
    let alphas = embedding.alphas().expect("inner-product embedding has alphas");
    let m = embedding.n();
    let mut ll = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let theta = dot(embedding.row(i), embedding.row(j)) + alphas[i] + alphas[j];
            let a = if a22.has_edge(i, j) { 1.0 } else { 0.0 };
            ll += a * theta - log1pexp(theta);
        }
    }
    ll
}

/// Orthogonal `Q` minimizing `||estimated Q - reference||_F`, and
/// `estimated Q`. Degree parameters, if any, are carried over unchanged.
pub fn procrustes_align(
    estimated: &LatentEmbedding,
    reference: &LatentEmbedding,
) -> Result<(LatentEmbedding, DMatrix<f64>)> {
    if estimated.n() != reference.n() || estimated.dim() != reference.dim() {
        return Err(Error::invalid(format!(
            "procrustes needs equal shapes, got {}x{} and {}x{}",
            estimated.n(),
            estimated.dim(),
            reference.n(),
            reference.dim()
        )));
    }
    let e = estimated.to_matrix();
    let r = reference.to_matrix();
    let svd = (e.transpose() * &r).svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let q = u * v_t;
    let aligned = LatentEmbedding::from_matrix(&(e * &q), estimated.alphas().map(<[f64]>::to_vec))?;
    Ok((aligned, q))
}
