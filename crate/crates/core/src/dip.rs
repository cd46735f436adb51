//! Distribution-invariant privatization of latent vectors.
//!
//! Each coordinate of a latent vector is mapped to the uniform scale through
//! its (conditional) CDF, perturbed with Laplace noise, re-uniformized with
//! the CDF of `Uniform(0,1) + Laplace(0, 1/eps)`, and mapped back through the
//! inverse (conditional) CDF. Coordinates are processed in chain order: the
//! forward CDF conditions on the original preceding coordinates, the inverse
//! conditions on the already-privatized ones.
//!
//! The conditional CDFs come from a kernel-weighted empirical CDF fitted on
//! hold-out estimates ([`CdfModel`]), or from any other [`ConditionalCdf`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::latent::LatentEmbedding;
use crate::seed::derived_rng;
use crate::{Error, Result};

/// Privacy budget `eps > 0`; noise on the uniform scale is `Laplace(0, 1/eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && !epsilon.is_nan() {
            Ok(Self(epsilon))
        } else {
            Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    pub fn noise_scale(self) -> f64 {
        1.0 / self.0
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

/// CDF of `U + L` with `U ~ Uniform(0,1)` and `L ~ Laplace(0, 1/eps)`.
///
/// With `b = 1/eps` and `H` an antiderivative of the Laplace CDF,
/// `G(t) = H(t) - H(t - 1)`, where `H(x) = b/2 e^{x/b}` for `x < 0` and
/// `H(x) = x + b/2 e^{-x/b}` for `x >= 0`.
pub fn g_cdf(t: f64, epsilon: f64) -> f64 {
    let b = 1.0 / epsilon;
    let h = |x: f64| {
        if x < 0.0 {
            0.5 * b * (x / b).exp()
        } else {
            x + 0.5 * b * (-x / b).exp()
        }
    };
    let upper = t;
    let lower = t - 1.0;
    let value = if lower >= 0.0 {
        // both pieces on the linear branch: 1 - b/2 (e^{-(t-1)/b} - e^{-t/b})
        1.0 - 0.5 * b * ((-lower / b).exp() - (-upper / b).exp())
    } else {
        h(upper) - h(lower)
    };
    value.clamp(0.0, 1.0)
}

/// Laplace(0, 1/eps) quantile at `u` in (0, 1).
pub fn laplace_quantile(u: f64, epsilon: f64) -> f64 {
    let b = 1.0 / epsilon;
    let centered = u - 0.5;
    -b * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

/// One Laplace(0, 1/eps) draw by inverse-CDF sampling.
pub fn sample_laplace<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return laplace_quantile(u, epsilon);
        }
    }
}

/// Conditional CDFs along a fixed coordinate chain.
///
/// `coord` is 0-based; `conditioning` holds the values of coordinates
/// `0..coord` and must have length `coord`.
pub trait ConditionalCdf: Sync {
    fn dim(&self) -> usize;

    fn cdf(&self, coord: usize, x: f64, conditioning: &[f64]) -> f64;

    fn quantile(&self, coord: usize, q: f64, conditioning: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Product standard normal density.
    #[default]
    Gaussian,
    /// Product of `3/4 (1 - u^2)` on `[-1, 1]`.
    Epanechnikov,
}

impl Kernel {
    fn log_density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * u * u - 0.5 * (std::f64::consts::TAU).ln(),
            Kernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    (0.75 * (1.0 - u * u)).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdfOptions {
    pub kernel: Kernel,
    /// Bandwidth is `(ln m)^(-c)`.
    pub bandwidth_exponent: f64,
    /// Added to the kernel-weight denominator of every conditional CDF.
    pub regularizer: f64,
}

impl Default for CdfOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth_exponent: 1.0,
            regularizer: 1e-12,
        }
    }
}

/// `(ln m)^(-c)`.
pub fn bandwidth_for(m: f64, c: f64) -> f64 {
    m.ln().powf(-c)
}

/// Kernel-smoothed conditional CDF estimator built from a fitting sample.
///
/// The first coordinate uses the plain empirical CDF. Coordinate `l >= 1`
/// uses the empirical CDF of coordinate `l` weighted by
/// `K((cond - z_{i,0..l}) / h)`, divided by `regularizer + sum of weights`.
/// Weights are rescaled so the largest is 1 before the regularizer is added,
/// which keeps far-away conditioning points from underflowing to an all-zero
/// weight vector. If every weight is exactly zero (compact kernel, isolated
/// conditioning point) the unweighted marginal of coordinate `l` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfModel {
    dim: usize,
    /// Row-major fitting sample, coordinates in chain order.
    sample: Vec<f64>,
    /// Per coordinate, sample indices sorted by that coordinate.
    sorted: Vec<Vec<u32>>,
    kernel: Kernel,
    bandwidth: f64,
    regularizer: f64,
}

impl CdfModel {
    /// Fits on the rows of `holdout` (degree parameters appended as the last
    /// coordinate, when present) with bandwidth `(ln m)^(-c)`.
    pub fn fit(holdout: &LatentEmbedding, opts: &CdfOptions) -> Result<Self> {
        let m = holdout.n();
        if m < 10 {
            return Err(Error::invalid(format!("CDF model needs at least 10 hold-out points, got {m}")));
        }
        if m < 100 {
            log::warn!("fitting conditional CDFs on only {m} hold-out points");
        }
        if opts.bandwidth_exponent.is_nan() || opts.bandwidth_exponent <= 0.0 {
            return Err(Error::invalid("bandwidth exponent must be positive"));
        }
        let rows: Vec<Vec<f64>> = (0..m).map(|i| holdout.augmented_row(i)).collect();
        Self::from_rows(&rows, opts.kernel, bandwidth_for(m as f64, opts.bandwidth_exponent), opts.regularizer)
    }

    pub fn from_rows(rows: &[Vec<f64>], kernel: Kernel, bandwidth: f64, regularizer: f64) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::invalid("empty CDF sample"))?;
        if dim == 0 {
            return Err(Error::invalid("CDF sample has zero-width rows"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CDF fitting sample".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if regularizer.is_nan() || regularizer < 0.0 {
            return Err(Error::invalid("regularizer must be nonnegative"));
        }
        let sample = rows.concat();
        let m = rows.len();
        let sorted = (0..dim)
            .map(|l| {
                let mut idx: Vec<u32> = (0..m as u32).collect();
                idx.sort_by(|&a, &b| sample[a as usize * dim + l].total_cmp(&sample[b as usize * dim + l]));
                idx
            })
            .collect();
        Ok(Self {
            dim,
            sample,
            sorted,
            kernel,
            bandwidth,
            regularizer,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_samples(&self) -> usize {
        self.sample.len() / self.dim
    }

    fn value(&self, i: usize, l: usize) -> f64 {
        self.sample[i * self.dim + l]
    }

    /// Max-normalized kernel weights for conditioning on coordinates `0..l`,
    /// or `None` for unit weights.
    fn weights(&self, conditioning: &[f64]) -> Option<Vec<f64>> {
        let l = conditioning.len();
        if l == 0 {
            return None;
        }
        let m = self.n_samples();
        let h = self.bandwidth;
        let log_w: Vec<f64> = (0..m)
            .map(|i| {
                conditioning
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| self.kernel.log_density((c - self.value(i, k)) / h))
                    .sum()
            })
            .collect();
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return None;
        }
        Some(log_w.into_iter().map(|lw| (lw - max).exp()).collect())
    }

    /// `(denominator, weight)` accessor for one coordinate's weighted ECDF.
    fn with_weights<T>(&self, conditioning: &[f64], f: impl FnOnce(&dyn Fn(usize) -> f64, f64) -> T) -> T {
        match self.weights(conditioning) {
            Some(w) => {
                let total: f64 = w.iter().sum();
                f(&|i| w[i], self.regularizer + total)
            }
            None => f(&|_| 1.0, self.n_samples() as f64),
        }
    }

    /// Distinct values of coordinate `l` carrying positive weight, with the
    /// CDF level attained at each.
    fn knots(&self, l: usize, conditioning: &[f64]) -> Vec<(f64, f64)> {
        self.with_weights(conditioning, |weight, denom| {
            let mut knots: Vec<(f64, f64)> = Vec::new();
            let mut cum = 0.0;
            for &i in &self.sorted[l] {
                let i = i as usize;
                let w = weight(i);
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                let v = self.value(i, l);
                let level = (cum / denom).min(1.0);
                match knots.last_mut() {
                    Some(last) if last.0 == v => last.1 = level,
                    _ => knots.push((v, level)),
                }
            }
            knots
        })
    }
}

impl ConditionalCdf for CdfModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cdf(&self, coord: usize, x: f64, conditioning: &[f64]) -> f64 {
        assert!(coord < self.dim, "coordinate {coord} out of range");
        assert_eq!(conditioning.len(), coord, "conditioning must cover the preceding coordinates");
        self.with_weights(conditioning, |weight, denom| {
            let below: f64 = self.sorted[coord]
                .iter()
                .map(|&i| i as usize)
                .take_while(|&i| self.value(i, coord) <= x)
                .map(weight)
                .sum();
            (below / denom).clamp(0.0, 1.0)
        })
    }

    /// Piecewise-linear generalized inverse through the attained CDF levels,
    /// clamped to the smallest and largest weighted sample values.
    fn quantile(&self, coord: usize, q: f64, conditioning: &[f64]) -> f64 {
        assert!(coord < self.dim, "coordinate {coord} out of range");
        assert_eq!(conditioning.len(), coord, "conditioning must cover the preceding coordinates");
        let knots = self.knots(coord, conditioning);
        let (first, last) = (knots[0], knots[knots.len() - 1]);
        if q <= first.1 {
            return first.0;
        }
        // levels can saturate before the last knot when trailing weights
        // vanish in floating point; the inverse takes the first knot that
        // reaches the top level
        let q = q.min(last.1);
        // first knot with level >= q; its predecessor has level < q
        let k = knots.partition_point(|&(_, level)| level < q);
        let (x0, c0) = knots[k - 1];
        let (x1, c1) = knots[k];
        if c1 <= c0 {
            return x1;
        }
        x0 + (q - c0) / (c1 - c0) * (x1 - x0)
    }
}

/// Known product-normal CDF, for checking the chain against an exact
/// reference distribution.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormalCdf {
    pub dim: usize,
}

impl ConditionalCdf for StandardNormalCdf {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cdf(&self, _coord: usize, x: f64, _conditioning: &[f64]) -> f64 {
        Normal::standard().cdf(x)
    }

    fn quantile(&self, _coord: usize, q: f64, _conditioning: &[f64]) -> f64 {
        let q = q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        Normal::standard().inverse_cdf(q)
    }
}

/// Privatizes one vector given explicit per-coordinate noise draws.
pub fn privatize_vector_with_noise<C: ConditionalCdf + ?Sized>(
    z_hat: &[f64],
    model: &C,
    budget: PrivacyBudget,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let d = model.dim();
    if z_hat.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z_hat.len(),
        });
    }
    if noise.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: noise.len(),
        });
    }
    let eps = budget.epsilon();
    let mut out = Vec::with_capacity(d);
    for l in 0..d {
        let u = model.cdf(l, z_hat[l], &z_hat[..l]);
        let w = g_cdf(u + noise[l], eps);
        out.push(model.quantile(l, w, &out[..l]));
    }
    Ok(out)
}

/// Privatizes one vector, drawing fresh Laplace noise for every coordinate.
pub fn privatize_vector<C: ConditionalCdf + ?Sized, R: Rng + ?Sized>(
    z_hat: &[f64],
    model: &C,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let noise: Vec<f64> = (0..model.dim())
        .map(|_| sample_laplace(budget.epsilon(), rng))
        .collect();
    privatize_vector_with_noise(z_hat, model, budget, &noise)
}

/// Privatizes every row of `rows` (augmented rows: vector then degree
/// parameter). Row `i` draws its noise from a stream derived from
/// `(noise_seed, i)` only, so output does not depend on scheduling.
pub fn privatize_rows<C: ConditionalCdf + ?Sized>(
    rows: &[Vec<f64>],
    model: &C,
    budget: PrivacyBudget,
    noise_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rng = derived_rng(noise_seed, "dip-noise", i as u64);
            privatize_vector(row, model, budget, &mut rng)
        })
        .collect()
}

/// Applies [`privatize_vector`] to every release node.
pub fn privatize_all<C: ConditionalCdf + ?Sized>(
    release: &LatentEmbedding,
    model: &C,
    budget: PrivacyBudget,
    noise_seed: u64,
) -> Result<LatentEmbedding> {
    if release.augmented_dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: release.augmented_dim(),
        });
    }
    let with_alphas = release.alphas().is_some();
    if release.n() == 0 {
        return Ok(LatentEmbedding::empty(release.dim(), with_alphas));
    }
    let rows: Vec<Vec<f64>> = (0..release.n()).map(|i| release.augmented_row(i)).collect();
    let private = privatize_rows(&rows, model, budget, noise_seed)?;
    LatentEmbedding::from_augmented(&private, with_alphas, release.dim())
}
