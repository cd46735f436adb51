//! Per-node estimation of release latent positions.
//!
//! Each release node is fitted from its own row of the cross block only,
//! with the hold-out estimates held fixed as covariates. No release node's
//! estimate depends on any other release node's edges.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::BitMatrix;
use crate::latent::{dot, sigmoid, LatentEmbedding, ModelKind, ModelVariant};
use crate::{Error, Result};

const OLS_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodewiseOptions {
    /// Diagonal loading of the Newton Hessian.
    pub ridge: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient infinity-norm.
    pub tol: f64,
    /// Box constraint on every coordinate of `(x_i, alpha_i)`.
    pub clamp: f64,
    /// Solve rows on the rayon pool. Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iters: 100,
            tol: 1e-8,
            clamp: 10.0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub x: Vec<f64>,
    pub alpha: f64,
    /// Negative log-likelihood at the returned point.
    pub objective: f64,
    pub iterations: usize,
    /// Set when the solution sits on the clamp box, i.e. the unconstrained
    /// optimum diverges (complete or quasi-complete separation).
    pub separated: bool,
}

#[inline]
fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Negative log-likelihood of one release node against fixed hold-out estimates.
pub fn logistic_objective(row: &[f64], holdout: &LatentEmbedding, x: &[f64], alpha: f64) -> f64 {
    let offsets = holdout.alphas().expect("inner-product hold-out has alphas");
    row.iter()
        .enumerate()
        .map(|(j, &a)| {
            let eta = alpha + offsets[j] + dot(x, holdout.row(j));
            log1pexp(eta) - a * eta
        })
        .sum()
}

/// Logistic regression of one row of the cross block on the hold-out
/// positions, with the hold-out degree parameters as fixed offsets.
///
/// Minimizes `sum_j -[a_j log s(eta_j) + (1 - a_j) log(1 - s(eta_j))]` with
/// `eta_j = alpha + alpha_hat_j + x . x_hat_j` over `(x, alpha)` by damped
/// Newton steps, projected onto `[-clamp, clamp]`.
pub fn nodewise_logistic(row: &[f64], holdout: &LatentEmbedding, opts: &NodewiseOptions) -> Result<LogisticFit> {
    let m = holdout.n();
    let d = holdout.dim();
    let offsets = holdout
        .alphas()
        .ok_or_else(|| Error::invalid("logistic node-wise fit needs hold-out degree parameters"))?;
    if row.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: row.len(),
        });
    }
    if m < d + 1 {
        return Err(Error::invalid(format!("need m >= d + 1, got m={m}, d={d}")));
    }
    let p = d + 1;
    let mut beta = vec![0.0; p];
    let objective_at = |b: &[f64]| logistic_objective(row, holdout, &b[..d], b[d]);
    let mut objective = objective_at(&beta);
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for j in 0..m {
            let xj = holdout.row(j);
            let eta = beta[d] + offsets[j] + dot(&beta[..d], xj);
            let s = sigmoid(eta);
            let r = s - row[j];
            let w = s * (1.0 - s);
            for a in 0..p {
                let fa = if a < d { xj[a] } else { 1.0 };
                grad[a] += r * fa;
                for b in a..p {
                    let fb = if b < d { xj[b] } else { 1.0 };
                    hess[(a, b)] += w * fa * fb;
                }
            }
        }
        // projected gradient: ignore components pushing further into an active bound
        let proj_inf = (0..p)
            .map(|a| {
                let at_upper = beta[a] >= opts.clamp && grad[a] < 0.0;
                let at_lower = beta[a] <= -opts.clamp && grad[a] > 0.0;
                if at_upper || at_lower {
                    0.0
                } else {
                    grad[a].abs()
                }
            })
            .fold(0.0, f64::max);
        if proj_inf < opts.tol {
            break;
        }
        iterations += 1;
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
            hess[(a, a)] += opts.ridge;
        }
        let direction = match hess.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => -&grad,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = (0..p)
                .map(|a| (beta[a] + t * direction[a]).clamp(-opts.clamp, opts.clamp))
                .collect();
            let value = objective_at(&trial);
            if value.is_finite() && value <= objective {
                let moved = trial.iter().zip(&beta).any(|(x, y)| x != y);
                improved = moved && value < objective;
                beta = trial;
                objective = value;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let separated = beta.iter().any(|v| v.abs() >= opts.clamp);
    Ok(LogisticFit {
        x: beta[..d].to_vec(),
        alpha: beta[d],
        objective,
        iterations,
        separated,
    })
}

/// Least-squares solver for the dot-product model; the Gram matrix of the
/// hold-out positions is factored once and reused for every row.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    holdout: DMatrix<f64>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub rank_deficient: bool,
}

impl OlsSolver {
    pub fn new(holdout: &LatentEmbedding) -> Result<Self> {
        let h = holdout.to_matrix();
        let d = h.ncols();
        let raw_gram = h.transpose() * &h;
        let eig = raw_gram.clone().symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let rank_deficient = max <= 0.0 || min <= 1e-10 * max;
        let gram = (raw_gram + DMatrix::identity(d, d) * OLS_RIDGE)
            .cholesky()
            .ok_or_else(|| Error::NonFinite("hold-out Gram matrix".into()))?;
        Ok(Self {
            holdout: h,
            gram,
            rank_deficient,
        })
    }

    /// `(H^T H + 1e-10 I)^{-1} H^T a`.
    pub fn solve(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.holdout.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.holdout.nrows(),
                got: row.len(),
            });
        }
        let rhs = self.holdout.tr_mul(&DVector::from_column_slice(row));
        Ok(self.gram.solve(&rhs).iter().copied().collect())
    }
}

/// Least-squares fit of one row of the cross block on the hold-out positions.
pub fn nodewise_ols(row: &[f64], holdout: &LatentEmbedding) -> Result<Vec<f64>> {
    OlsSolver::new(holdout)?.solve(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseFit {
    pub embedding: LatentEmbedding,
    /// Per release node; always false for the dot-product model.
    pub separated: Vec<bool>,
    pub rank_deficient: bool,
}

impl NodewiseFit {
    pub fn n_separated(&self) -> usize {
        self.separated.iter().filter(|&&s| s).count()
    }
}

/// Fits every release node independently from its row of `a12`.
pub fn nodewise_fit_all(
    a12: &BitMatrix,
    holdout: &LatentEmbedding,
    kind: &ModelKind,
    opts: &NodewiseOptions,
) -> Result<NodewiseFit> {
    holdout.check_kind(kind)?;
    if a12.cols() != holdout.n() {
        return Err(Error::DimensionMismatch {
            expected: holdout.n(),
            got: a12.cols(),
        });
    }
    let n = a12.rows();
    let d = kind.dim;
    match kind.variant {
        ModelVariant::InnerProduct => {
            let solve = |r: usize| nodewise_logistic(&a12.row_f64(r), holdout, opts);
            let fits: Vec<LogisticFit> = if opts.parallel {
                (0..n).into_par_iter().map(solve).collect::<Result<_>>()?
            } else {
                (0..n).map(solve).collect::<Result<_>>()?
            };
            let mut vectors = Vec::with_capacity(n * d);
            let mut alphas = Vec::with_capacity(n);
            let mut separated = Vec::with_capacity(n);
            for f in fits {
                vectors.extend_from_slice(&f.x);
                alphas.push(f.alpha);
                separated.push(f.separated);
            }
            Ok(NodewiseFit {
                embedding: LatentEmbedding::new(d, vectors, Some(alphas))?,
                separated,
                rank_deficient: false,
            })
        }
        ModelVariant::Rdpg => {
            let solver = OlsSolver::new(holdout)?;
            let solve = |r: usize| solver.solve(&a12.row_f64(r));
            let rows: Vec<Vec<f64>> = if opts.parallel {
                (0..n).into_par_iter().map(solve).collect::<Result<_>>()?
            } else {
                (0..n).map(solve).collect::<Result<_>>()?
            };
            if solver.rank_deficient {
                log::warn!("hold-out Gram matrix is rank deficient; least-squares fits rely on the ridge");
            }
            Ok(NodewiseFit {
                embedding: LatentEmbedding::new(d, rows.concat(), None)?,
                separated: vec![false; n],
                rank_deficient: solver.rank_deficient,
            })
        }
    }
}
