//! Latent-space link functions, Bernoulli network sampling and the synthetic
//! generators used by the simulation harness.

use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// `sigmoid(x_i . x_j + alpha_i + alpha_j)`
    InnerProduct,
    /// `clamp(z_i . z_j, 0, 1)`
    Rdpg,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::InnerProduct => "inner-product",
            ModelVariant::Rdpg => "rdpg",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner-product" | "lsm" => Ok(ModelVariant::InnerProduct),
            "rdpg" => Ok(ModelVariant::Rdpg),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

/// Generative model family plus latent dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelKind {
    pub variant: ModelVariant,
    pub dim: usize,
}

impl ModelKind {
    pub fn new(variant: ModelVariant, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        Ok(Self { variant, dim })
    }

    pub fn inner_product(dim: usize) -> Self {
        Self::new(ModelVariant::InnerProduct, dim).expect("dim >= 1")
    }

    pub fn rdpg(dim: usize) -> Self {
        Self::new(ModelVariant::Rdpg, dim).expect("dim >= 1")
    }

    pub fn has_alphas(&self) -> bool {
        self.variant == ModelVariant::InnerProduct
    }

    /// Number of coordinates that go through privatization: `dim`, plus one
    /// for the degree parameter of the inner-product model.
    pub fn privatized_dim(&self) -> usize {
        self.dim + usize::from(self.has_alphas())
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-node latent vectors, row-major, with optional degree parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEmbedding {
    dim: usize,
    vectors: Vec<f64>,
    alphas: Option<Vec<f64>>,
}

/// One node's latent position: the vector and, for the inner-product model,
/// its degree parameter.
#[derive(Debug, Clone, Copy)]
pub struct LatentPoint<'a> {
    pub x: &'a [f64],
    pub alpha: Option<f64>,
}

impl LatentEmbedding {
    pub fn new(dim: usize, vectors: Vec<f64>, alphas: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of length {dim}",
                vectors.len()
            )));
        }
        let n = vectors.len() / dim;
        if let Some(a) = &alphas {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.len(),
                });
            }
        }
        let emb = Self {
            dim,
            vectors,
            alphas,
        };
        if !emb.is_finite() {
            return Err(Error::NonFinite("latent embedding".into()));
        }
        Ok(emb)
    }

    pub fn from_rows(rows: &[Vec<f64>], alphas: Option<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(dim, rows.concat(), alphas)
    }

    /// Zero-row embedding of the given shape.
    pub fn empty(dim: usize, with_alphas: bool) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            alphas: with_alphas.then(Vec::new),
        }
    }

    /// Splits augmented rows `(x_1..x_d, alpha)` back into vectors and alphas.
    pub fn from_augmented(rows: &[Vec<f64>], with_alphas: bool, dim: usize) -> Result<Self> {
        let width = dim + usize::from(with_alphas);
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        let mut alphas = with_alphas.then(|| Vec::with_capacity(rows.len()));
        for row in rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
            vectors.extend_from_slice(&row[..dim]);
            if let Some(a) = alphas.as_mut() {
                a.push(row[dim]);
            }
        }
        Self::new(dim, vectors, alphas)
    }

    pub fn n(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn alphas(&self) -> Option<&[f64]> {
        self.alphas.as_deref()
    }

    pub fn alpha(&self, i: usize) -> Option<f64> {
        self.alphas.as_ref().map(|a| a[i])
    }

    pub fn point(&self, i: usize) -> LatentPoint<'_> {
        LatentPoint {
            x: self.row(i),
            alpha: self.alpha(i),
        }
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Row `i` with the degree parameter appended, when present.
    pub fn augmented_row(&self, i: usize) -> Vec<f64> {
        let mut row = self.row(i).to_vec();
        if let Some(a) = self.alpha(i) {
            row.push(a);
        }
        row
    }

    pub fn augmented_dim(&self) -> usize {
        self.dim + usize::from(self.alphas.is_some())
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|v| v.is_finite())
            && self
                .alphas
                .as_ref()
                .is_none_or(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Checks that the embedding has the shape the model expects.
    pub fn check_kind(&self, kind: &ModelKind) -> Result<()> {
        if self.dim != kind.dim {
            return Err(Error::DimensionMismatch {
                expected: kind.dim,
                got: self.dim,
            });
        }
        if self.alphas.is_some() != kind.has_alphas() {
            return Err(Error::invalid(format!(
                "degree parameters must be present exactly for the inner-product model ({})",
                kind.variant.name()
            )));
        }
        Ok(())
    }

    /// Rows selected by `ids`, in that order.
    pub fn select(&self, ids: &[usize]) -> Self {
        let mut vectors = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            vectors.extend_from_slice(self.row(i));
        }
        let alphas = self
            .alphas
            .as_ref()
            .map(|a| ids.iter().map(|&i| a[i]).collect());
        Self {
            dim: self.dim,
            vectors,
            alphas,
        }
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n(), self.dim, &self.vectors)
    }

    pub fn from_matrix(m: &nalgebra::DMatrix<f64>, alphas: Option<Vec<f64>>) -> Result<Self> {
        let mut vectors = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            vectors.extend(m.row(i).iter().copied());
        }
        Self::new(m.ncols(), vectors, alphas)
    }

    /// Link probability between rows `i` and `j` under `variant`.
    #[inline]
    pub fn pair_probability(&self, variant: ModelVariant, i: usize, j: usize) -> f64 {
        let ip = dot(self.row(i), self.row(j));
        match variant {
            ModelVariant::InnerProduct => {
                let a = self.alphas.as_ref().expect("inner-product model needs alphas");
                sigmoid(ip + (a[i] + a[j]))
            }
            ModelVariant::Rdpg => ip.clamp(0.0, 1.0),
        }
    }

    /// CSV with header `z1,...,zd[,alpha]`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("z{k}")).collect();
        if self.alphas.is_some() {
            header.push("alpha".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let record: Vec<String> = self.augmented_row(i).iter().map(|v| format!("{v:?}")).collect();
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(source: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(source);
        let headers = r.headers().map_err(csv_err)?.clone();
        let with_alphas = headers.iter().next_back() == Some("alpha");
        let dim = headers.len() - usize::from(with_alphas);
        let mut rows = Vec::new();
        for (k, record) in r.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let row = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: k + 2,
                    msg: e.to_string(),
                })?;
            rows.push(row);
        }
        Self::from_augmented(&rows, with_alphas, dim)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    }
}

/// `W(z_i, z_j)` for a single pair.
pub fn link_probability(kind: &ModelKind, a: LatentPoint<'_>, b: LatentPoint<'_>) -> Result<f64> {
    for p in [&a, &b] {
        if p.x.len() != kind.dim {
            return Err(Error::DimensionMismatch {
                expected: kind.dim,
                got: p.x.len(),
            });
        }
    }
    let ip = dot(a.x, b.x);
    match kind.variant {
        ModelVariant::InnerProduct => match (a.alpha, b.alpha) {
            (Some(ai), Some(aj)) => Ok(sigmoid(ip + (ai + aj))),
            _ => Err(Error::invalid("inner-product model needs degree parameters")),
        },
        ModelVariant::Rdpg => Ok(ip.clamp(0.0, 1.0)),
    }
}

/// Draws each pair `i < j` independently with its link probability.
/// Pairs are visited in lexicographic order, one uniform draw each.
pub fn sample_network<R: Rng + ?Sized>(
    kind: &ModelKind,
    latents: &LatentEmbedding,
    rng: &mut R,
) -> Result<Graph> {
    latents.check_kind(kind)?;
    let variant = kind.variant;
    Ok(Graph::from_pair_fn(latents.n(), |i, j| {
        let p = latents.pair_probability(variant, i, j);
        rng.random::<f64>() < p
    }))
}

/// Parameters of the truncated Gaussian mixture used for the inner-product
/// generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n_components: usize,
    /// Component means are uniform in `[-mean_range, mean_range]^d`.
    pub mean_range: f64,
    pub std_dev: f64,
    /// Samples are rejected until they fall in `[-truncation, truncation]^d`.
    pub truncation: f64,
    /// Degree parameters start uniform on this interval before the density shift.
    pub alpha_range: (f64, f64),
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            n_components: 3,
            mean_range: 1.0,
            std_dev: 0.5,
            truncation: 2.0,
            alpha_range: (-1.0, 0.0),
        }
    }
}

/// Outcome of the density calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Shift added to every degree parameter.
    pub shift: f64,
    /// Mean link probability after the shift, over the calibration pairs.
    pub achieved: f64,
    pub iterations: usize,
    pub n_pairs: usize,
}

/// Pairs up to this count are calibrated exactly; beyond it a random sample
/// of `CALIBRATION_SAMPLE` pairs is used.
const EXACT_CALIBRATION_PAIRS: usize = 4_000_000;
const CALIBRATION_SAMPLE: usize = 100_000;
const CALIBRATION_TOL: f64 = 1e-7;
const CALIBRATION_MAX_ITERS: usize = 60;

fn check_density(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("target density must lie in (0, 1), got {rho}")))
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Inner-product model with `X_i` from a truncated Gaussian mixture and
/// uniform degree parameters shifted so the expected density is `rho`.
pub fn gen_lsm_truncgauss<R: Rng + ?Sized>(
    n_nodes: usize,
    dim: usize,
    mixture: &MixtureSpec,
    rho: f64,
    rng: &mut R,
) -> Result<(LatentEmbedding, Graph, Calibration)> {
    check_density(rho)?;
    if dim == 0 || mixture.n_components == 0 {
        return Err(Error::invalid("dimension and component count must be positive"));
    }
    if n_nodes < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    if mixture.std_dev < 0.0 || mixture.truncation <= 0.0 {
        return Err(Error::invalid("mixture spread must be nonnegative and truncation positive"));
    }
    let means: Vec<Vec<f64>> = (0..mixture.n_components)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-mixture.mean_range..=mixture.mean_range))
                .collect()
        })
        .collect();
    let bound = mixture.truncation;
    let mut vectors = Vec::with_capacity(n_nodes * dim);
    for _ in 0..n_nodes {
        let mean = &means[rng.random_range(0..mixture.n_components)];
        let mut attempts = 0usize;
        loop {
            let draw: Vec<f64> = mean
                .iter()
                .map(|&mu| mu + mixture.std_dev * standard_normal(rng))
                .collect();
            if draw.iter().all(|v| v.abs() <= bound) {
                vectors.extend(draw);
                break;
            }
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::invalid(
                    "truncation region has negligible mass under the mixture",
                ));
            }
        }
    }
    let (lo, hi) = mixture.alpha_range;
    let alphas: Vec<f64> = (0..n_nodes)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();

    let mut latents = LatentEmbedding::new(dim, vectors, Some(alphas))?;
    let calibration = calibrate_alpha_shift(&latents, rho, rng)?;
    if let Some(a) = latents.alphas.as_mut() {
        a.iter_mut().for_each(|v| *v += calibration.shift);
    }
    let graph = sample_network(&ModelKind::inner_product(dim), &latents, rng)?;
    Ok((latents, graph, calibration))
}

fn calibration_pairs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    if total <= EXACT_CALIBRATION_PAIRS {
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect()
    } else {
        (0..CALIBRATION_SAMPLE)
            .map(|_| {
                let pair = index::sample(rng, n, 2);
                (pair.index(0), pair.index(1))
            })
            .collect()
    }
}

/// Bisection on a common shift `c` added to every degree parameter so the
/// mean of `sigmoid(x_i.x_j + alpha_i + alpha_j + 2c)` over the calibration
/// pairs equals `rho`.
pub fn calibrate_alpha_shift<R: Rng + ?Sized>(
    latents: &LatentEmbedding,
    rho: f64,
    rng: &mut R,
) -> Result<Calibration> {
    let alphas = latents
        .alphas()
        .ok_or_else(|| Error::invalid("calibration needs degree parameters"))?;
    let pairs = calibration_pairs(latents.n(), rng);
    let logits: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| dot(latents.row(i), latents.row(j)) + alphas[i] + alphas[j])
        .collect();
    let mean_at = |c: f64| logits.iter().map(|&t| sigmoid(t + 2.0 * c)).sum::<f64>() / logits.len() as f64;

    let (mut lo, mut hi) = (-40.0, 40.0);
    let (f_lo, f_hi) = (mean_at(lo), mean_at(hi));
    if f_lo > rho || f_hi < rho {
        return Err(Error::Calibration(format!(
            "target {rho} not bracketed: shift {lo} gives {f_lo:.3e}, shift {hi} gives {f_hi:.6}"
        )));
    }
    let mut mid = 0.0;
    let mut achieved = f64::NAN;
    let mut iterations = 0;
    while iterations < CALIBRATION_MAX_ITERS {
        iterations += 1;
        mid = 0.5 * (lo + hi);
        achieved = mean_at(mid);
        if (achieved - rho).abs() < CALIBRATION_TOL {
            break;
        }
        if achieved < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (achieved - rho).abs() > 1e-3 {
        return Err(Error::Calibration(format!(
            "bisection stalled at {achieved:.6} for target {rho}"
        )));
    }
    Ok(Calibration {
        shift: mid,
        achieved,
        iterations,
        n_pairs: pairs.len(),
    })
}

/// Scale applied to `Uniform[0,1]^d` draws so the expected inner product of
/// two independent draws is `rho`: `E[z.z'] = d/4` before scaling.
pub fn rdpg_uniform_scale(dim: usize, rho: f64) -> f64 {
    (rho / (dim as f64 / 4.0)).sqrt()
}

/// RDPG with scaled uniform latent positions. Returns the fraction of pairs
/// whose inner product had to be clamped to 1.
pub fn gen_rdpg_uniform<R: Rng + ?Sized>(
    n_nodes: usize,
    dim: usize,
    rho: f64,
    rng: &mut R,
) -> Result<(LatentEmbedding, Graph, f64)> {
    check_density(rho)?;
    if dim == 0 {
        return Err(Error::invalid("latent dimension must be at least 1"));
    }
    let s = rdpg_uniform_scale(dim, rho);
    let vectors: Vec<f64> = (0..n_nodes * dim).map(|_| s * rng.random::<f64>()).collect();
    let latents = LatentEmbedding::new(dim, vectors, None)?;

    // the largest possible product is s^2 d = 4 rho
    let clamped_fraction = if 4.0 * rho > 1.0 && n_nodes > 1 {
        let mut clamped = 0usize;
        for i in 0..n_nodes {
            for j in (i + 1)..n_nodes {
                if dot(latents.row(i), latents.row(j)) > 1.0 {
                    clamped += 1;
                }
            }
        }
        clamped as f64 / (n_nodes * (n_nodes - 1) / 2) as f64
    } else {
        0.0
    };
    if clamped_fraction > 0.01 {
        log::warn!(
            "{:.2}% of pairs have inner product above 1 and were clamped",
            100.0 * clamped_fraction
        );
    }
    let graph = sample_network(&ModelKind::rdpg(dim), &latents, rng)?;
    Ok((latents, graph, clamped_fraction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use approx::assert_relative_eq;

    fn three_sigma(p: f64, n: usize) -> f64 {
        let pairs = (n * (n - 1) / 2) as f64;
        3.0 * (p * (1.0 - p) / pairs).sqrt()
    }

    #[test]
    fn link_probability_examples() {
        let ip = ModelKind::inner_product(2);
        let zero = [0.0, 0.0];
        let p = LatentPoint { x: &zero, alpha: Some(0.0) };
        assert_eq!(link_probability(&ip, p, p).unwrap(), 0.5);

        let rdpg = ModelKind::rdpg(3);
        let e1 = [1.0, 0.0, 0.0];
        let q = LatentPoint { x: &e1, alpha: None };
        assert_eq!(link_probability(&rdpg, q, q).unwrap(), 1.0);

        let big = [1.3f64.sqrt(), 0.0, 0.0];
        let r = LatentPoint { x: &big, alpha: None };
        assert_eq!(link_probability(&rdpg, r, r).unwrap(), 1.0);

        let short = [1.0];
        let bad = LatentPoint { x: &short, alpha: None };
        assert!(matches!(
            link_probability(&rdpg, bad, q),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(link_probability(&ip, LatentPoint { x: &zero, alpha: None }, p).is_err());
    }

    #[test]
    fn link_probability_is_symmetric() {
        let mut rng = rng_from_seed(5);
        let kind = ModelKind::inner_product(3);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (aa, ab) = (rng.random_range(-2.0..1.0), rng.random_range(-2.0..1.0));
            let pa = LatentPoint { x: &a, alpha: Some(aa) };
            let pb = LatentPoint { x: &b, alpha: Some(ab) };
            assert_eq!(
                link_probability(&kind, pa, pb).unwrap(),
                link_probability(&kind, pb, pa).unwrap()
            );
        }
    }

    #[test]
    fn extreme_probabilities_give_complete_and_empty_graphs() {
        let kind = ModelKind::rdpg(1);
        let ones = LatentEmbedding::new(1, vec![1.0; 12], None).unwrap();
        let g = sample_network(&kind, &ones, &mut rng_from_seed(1)).unwrap();
        assert_eq!(g.n_edges(), 12 * 11 / 2);
        let zeros = LatentEmbedding::new(1, vec![0.0; 12], None).unwrap();
        let g = sample_network(&kind, &zeros, &mut rng_from_seed(1)).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn half_probability_density_concentrates() {
        let n = 2000;
        let kind = ModelKind::rdpg(1);
        let latents = LatentEmbedding::new(1, vec![0.5f64.sqrt(); n], None).unwrap();
        let g = sample_network(&kind, &latents, &mut rng_from_seed(17)).unwrap();
        assert!((g.density() - 0.5).abs() < three_sigma(0.5, n));
        for i in 0..n {
            assert!(!g.has_edge(i, i));
        }
    }

    #[test]
    fn lsm_generator_hits_target_density() {
        let n = 2000;
        let (latents, g, cal) =
            gen_lsm_truncgauss(n, 3, &MixtureSpec::default(), 0.05, &mut rng_from_seed(2024)).unwrap();
        assert!((cal.achieved - 0.05).abs() < 1e-3);
        assert!(
            (g.density() - 0.05).abs() < three_sigma(0.05, n),
            "density {}",
            g.density()
        );
        // fresh pairs, independent of the calibration set
        let mut rng = rng_from_seed(99);
        let mean = (0..100_000)
            .map(|_| {
                let pair = index::sample(&mut rng, n, 2);
                latents.pair_probability(ModelVariant::InnerProduct, pair.index(0), pair.index(1))
            })
            .sum::<f64>()
            / 100_000.0;
        assert!((mean - 0.05).abs() < 1e-2);
        let x = latents.vectors();
        assert!(x.iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn zero_variance_single_component_collapses() {
        let spec = MixtureSpec {
            n_components: 1,
            std_dev: 0.0,
            ..MixtureSpec::default()
        };
        let (latents, _, _) = gen_lsm_truncgauss(50, 2, &spec, 0.2, &mut rng_from_seed(4)).unwrap();
        let first = latents.row(0).to_vec();
        for i in 1..latents.n() {
            assert_eq!(latents.row(i), &first[..]);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = MixtureSpec::default();
        let a = gen_lsm_truncgauss(300, 3, &spec, 0.1, &mut rng_from_seed(8)).unwrap();
        let b = gen_lsm_truncgauss(300, 3, &spec, 0.1, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = gen_rdpg_uniform(300, 3, 0.1, &mut rng_from_seed(8)).unwrap();
        let d = gen_rdpg_uniform(300, 3, 0.1, &mut rng_from_seed(8)).unwrap();
        assert_eq!(c.0, d.0);
        assert_eq!(c.1, d.1);
    }

    #[test]
    fn rdpg_scale_closed_form() {
        assert_relative_eq!(rdpg_uniform_scale(3, 0.1), (2.0f64 / 15.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rdpg_generator_hits_target_density() {
        let n = 2000;
        let (latents, g, clamped) = gen_rdpg_uniform(n, 3, 0.1, &mut rng_from_seed(31)).unwrap();
        assert_eq!(clamped, 0.0);
        assert_eq!(latents.dim(), 3);
        // expected density given the drawn latents, then binomial noise around it
        let mut expected = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                expected += latents.pair_probability(ModelVariant::Rdpg, i, j);
            }
        }
        expected /= (n * (n - 1) / 2) as f64;
        assert!((g.density() - expected).abs() < three_sigma(0.1, n));
        // latent sampling noise on the mean is far below 1e-2
        assert!((expected - 0.1).abs() < 1e-2);
    }

    #[test]
    fn tiny_density_gives_near_empty_graph() {
        let (_, g, _) = gen_rdpg_uniform(200, 2, 1e-9, &mut rng_from_seed(1)).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn rejects_invalid_density() {
        let mut rng = rng_from_seed(0);
        assert!(gen_rdpg_uniform(10, 2, 1.5, &mut rng).is_err());
        assert!(gen_rdpg_uniform(10, 2, 0.0, &mut rng).is_err());
        assert!(gen_lsm_truncgauss(10, 2, &MixtureSpec::default(), 1.0, &mut rng).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let emb = LatentEmbedding::new(2, vec![0.1, -0.2, 1.5, 3.25], Some(vec![-1.0, 0.5])).unwrap();
        let mut buf = Vec::new();
        emb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z1,z2,alpha\n"));
        assert_eq!(LatentEmbedding::read_csv(&buf[..]).unwrap(), emb);
    }

    #[test]
    fn rejects_non_finite_and_wrong_alpha_shape() {
        assert!(LatentEmbedding::new(1, vec![f64::NAN], None).is_err());
        assert!(LatentEmbedding::new(1, vec![1.0, 2.0], Some(vec![0.0])).is_err());
        let emb = LatentEmbedding::new(1, vec![1.0], None).unwrap();
        assert!(emb.check_kind(&ModelKind::inner_product(1)).is_err());
        assert!(emb.check_kind(&ModelKind::rdpg(1)).is_ok());
    }
}
