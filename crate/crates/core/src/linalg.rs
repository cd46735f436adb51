//! Symmetric eigen-solvers for adjacency matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::graph::Graph;
use crate::{Error, Result};

/// Graphs up to this size are decomposed densely; larger ones use subspace iteration.
pub const DENSE_EIGEN_LIMIT: usize = 1500;

const SUBSPACE_MAX_ITERS: usize = 2000;
const SUBSPACE_TOL: f64 = 1e-9;

/// Which end of the spectrum to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSelection {
    /// Largest `|lambda|`.
    #[default]
    Magnitude,
    /// Largest positive `lambda`.
    Positive,
}

/// `k` eigenpairs, values in selection order, vectors as matrix columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn select_order(values: &[f64], selection: SpectrumSelection) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    match selection {
        SpectrumSelection::Magnitude => order.sort_by(|&a, &b| {
            values[b]
                .abs()
                .total_cmp(&values[a].abs())
                .then(values[b].total_cmp(&values[a]))
        }),
        SpectrumSelection::Positive => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    order
}

/// Flips each column so its entries sum to a nonnegative value.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        if col.sum() < 0.0 {
            col.neg_mut();
        }
    }
}

/// Dense decomposition, keeping `k` pairs.
pub fn dense_top_eigenpairs(a: &DMatrix<f64>, k: usize, selection: SpectrumSelection) -> EigenPairs {
    let eig = SymmetricEigen::new(a.clone());
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = select_order(&values, selection);
    let k = k.min(values.len());
    let mut vectors = DMatrix::zeros(a.nrows(), k);
    let mut kept = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(idx));
        kept.push(values[idx]);
    }
    EigenPairs {
        values: kept,
        vectors,
    }
}

/// Top `k` eigenpairs of the adjacency matrix of `graph`.
pub fn graph_top_eigenpairs(graph: &Graph, k: usize, selection: SpectrumSelection) -> Result<EigenPairs> {
    let n = graph.n_nodes();
    if n <= DENSE_EIGEN_LIMIT || k * 3 >= n {
        return Ok(dense_top_eigenpairs(&graph.to_dense(), k, selection));
    }
    subspace_iteration(graph, k, selection)
}

/// Block subspace iteration with Rayleigh-Ritz extraction.
fn subspace_iteration(graph: &Graph, k: usize, selection: SpectrumSelection) -> Result<EigenPairs> {
    let n = graph.n_nodes();
    let block = (2 * k + 10).min(n);
    // deterministic, well-spread start
    let mut q = DMatrix::from_fn(n, block, |i, j| {
        let x = ((i as f64 + 1.0) * (j as f64 + 1.5) * 0.618_033_988_749_895).fract();
        x - 0.5
    });
    q = q.qr().q();
    let apply = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, m.ncols());
        let mut y = vec![0.0; n];
        for c in 0..m.ncols() {
            let x: Vec<f64> = m.column(c).iter().copied().collect();
            graph.mul_vec(&x, &mut y);
            out.set_column(c, &DVector::from_column_slice(&y));
        }
        out
    };

    let mut residual = f64::INFINITY;
    for _ in 0..SUBSPACE_MAX_ITERS {
        let aq = apply(&q);
        let t = q.transpose() * &aq;
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let order = select_order(&values, selection);
        let ritz = &q * &eig.eigenvectors;
        let a_ritz = &aq * &eig.eigenvectors;
        let scale = values.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        residual = order
            .iter()
            .take(k)
            .map(|&idx| (a_ritz.column(idx) - ritz.column(idx) * values[idx]).norm())
            .fold(0.0, f64::max);
        if residual <= SUBSPACE_TOL * scale {
            let mut vectors = DMatrix::zeros(n, k);
            let mut kept = Vec::with_capacity(k);
            for (c, &idx) in order.iter().take(k).enumerate() {
                vectors.set_column(c, &ritz.column(idx));
                kept.push(values[idx]);
            }
            return Ok(EigenPairs {
                values: kept,
                vectors,
            });
        }
        // iterate on A^2 so eigenvalues of opposite sign and equal magnitude
        // do not stall the block
        q = apply(&aq).qr().q();
    }
    Err(Error::NoConvergence { residual })
}
