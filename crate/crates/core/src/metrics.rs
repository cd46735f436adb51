//! Node-level statistics, motif densities and distribution distances.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::linalg::{dense_top_eigenpairs, SpectrumSelection};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

pub fn degrees(g: &Graph) -> Vec<u64> {
    (0..g.n_nodes()).map(|i| g.degree(i) as u64).collect()
}

/// `C(deg_i, 2)`: V-shapes centered at each node, closed triangles included.
pub fn vshape_counts(g: &Graph) -> Vec<u64> {
    (0..g.n_nodes())
        .map(|i| {
            let d = g.degree(i) as u64;
            d * d.saturating_sub(1) / 2
        })
        .collect()
}

fn common_neighbors(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Number of triangles through each node.
pub fn triangle_counts(g: &Graph) -> Vec<u64> {
    let n = g.n_nodes();
    // each edge (i, j), i < j, contributes its common-neighbor count to both ends;
    // every triangle at i is then seen via both of its edges at i
    let per_edge: Vec<(usize, usize, u64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            g.neighbors(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i, j as usize, common_neighbors(g.neighbors(i), g.neighbors(j as usize))))
        })
        .collect();
    let mut counts = vec![0u64; n];
    for (i, j, c) in per_edge {
        counts[i] += c;
        counts[j] += c;
    }
    counts.iter_mut().for_each(|c| *c /= 2);
    counts
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1000;

/// Leading eigenvector of `A` by power iteration on `A + I`, started from
/// the degree vector, unit 2-norm, entry-sum nonnegative. The shift keeps
/// bipartite graphs from oscillating and leaves eigenvectors unchanged.
/// When the top eigenvalue is repeated the result is the normalized
/// projection of the degree vector onto its eigenspace. An edgeless graph
/// gives the zero vector.
pub fn eigen_centrality(g: &Graph) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    if n == 0 {
        return Err(Error::invalid("eigenvector centrality of an empty node set"));
    }
    if g.n_edges() == 0 {
        return Ok(vec![0.0; n]);
    }
    let mut x: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERS {
        g.mul_vec(&x, &mut y);
        y.iter_mut().zip(&x).for_each(|(yi, xi)| *yi += xi);
        normalize(&mut y);
        let change = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut x, &mut y);
        if change < POWER_TOL {
            if x.iter().sum::<f64>() < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(x);
        }
    }
    g.mul_vec(&x, &mut y);
    let lambda: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let residual = y.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    Err(Error::NoConvergence { residual })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Same convention as [`eigen_centrality`], computed from a dense
/// eigendecomposition. Used when power iteration stalls on a tiny spectral gap.
pub fn eigen_centrality_dense(g: &Graph) -> Vec<f64> {
    let n = g.n_nodes();
    if g.n_edges() == 0 {
        return vec![0.0; n];
    }
    let pairs = dense_top_eigenpairs(&g.to_dense(), n, SpectrumSelection::Positive);
    let top = pairs.values[0];
    let deg: nalgebra::DVector<f64> = nalgebra::DVector::from_iterator(n, (0..n).map(|i| g.degree(i) as f64));
    let mut proj = nalgebra::DVector::zeros(n);
    for (c, &v) in pairs.values.iter().enumerate() {
        if (v - top).abs() > 1e-9 * top.abs().max(1.0) {
            break;
        }
        let col = pairs.vectors.column(c);
        proj += col * col.dot(&deg);
    }
    let mut out: Vec<f64> = proj.iter().copied().collect();
    normalize(&mut out);
    if out.iter().sum::<f64>() < 0.0 {
        out.iter_mut().for_each(|v| *v = -*v);
    }
    out
}

/// `1 / sum_j d(i, j)` over nodes `j` reachable from `i`; zero for nodes
/// with no reachable peer.
pub fn harmonic_centrality(g: &Graph) -> Vec<f64> {
    let n = g.n_nodes();
    (0..n)
        .into_par_iter()
        .map_init(
            || (vec![u32::MAX; n], Vec::with_capacity(n)),
            |(dist, queue), s| {
                dist.iter_mut().for_each(|d| *d = u32::MAX);
                queue.clear();
                dist[s] = 0;
                queue.push(s);
                let mut head = 0;
                let mut total = 0u64;
                while head < queue.len() {
                    let u = queue[head];
                    head += 1;
                    for &v in g.neighbors(u) {
                        let v = v as usize;
                        if dist[v] == u32::MAX {
                            dist[v] = dist[u] + 1;
                            total += dist[v] as u64;
                            queue.push(v);
                        }
                    }
                }
                if total == 0 {
                    0.0
                } else {
                    1.0 / total as f64
                }
            },
        )
        .collect()
}

/// `ln(1 + x)` elementwise.
pub fn log_transform(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| x.ln_1p()).collect()
}

/// Wasserstein-1 distance between two empirical distributions on the line,
/// as the integral of `|F^{-1}(t) - G^{-1}(t)|` over `t in (0, 1)`.
pub fn wasserstein1(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("Wasserstein distance needs non-empty samples"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("Wasserstein input".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / a.len() as f64);
    }
    // walk the merged grid {k/n} U {l/m}; both quantile functions are
    // constant between consecutive grid points
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / n;
        let next_b = (j + 1) as f64 / m;
        let next = next_a.min(next_b);
        total += (next - t) * (a[i] - b[j]).abs();
        t = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    Ok(total)
}

/// Small pattern graph on at most five nodes, stored as adjacency bit rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallGraph {
    order: usize,
    rows: [u8; 5],
}

impl SmallGraph {
    pub fn new(order: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if !(1..=5).contains(&order) {
            return Err(Error::invalid(format!("motifs must have 1 to 5 nodes, got {order}")));
        }
        let mut rows = [0u8; 5];
        for &(a, b) in edges {
            if a >= order || b >= order || a == b {
                return Err(Error::invalid(format!("bad motif edge ({a}, {b})")));
            }
            rows[a] |= 1 << b;
            rows[b] |= 1 << a;
        }
        Ok(Self { order, rows })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.rows[a] >> b & 1 == 1
    }

    /// Upper-triangle bit code in `(0,1), (0,2), .., (r-2, r-1)` order.
    fn code(&self) -> u16 {
        let mut code = 0u16;
        let mut bit = 0;
        for a in 0..self.order {
            for b in (a + 1)..self.order {
                if self.has_edge(a, b) {
                    code |= 1 << bit;
                }
                bit += 1;
            }
        }
        code
    }

    fn from_code(order: usize, code: u16) -> Self {
        let mut rows = [0u8; 5];
        let mut bit = 0;
        for a in 0..order {
            for b in (a + 1)..order {
                if code >> bit & 1 == 1 {
                    rows[a] |= 1 << b;
                    rows[b] |= 1 << a;
                }
                bit += 1;
            }
        }
        Self { order, rows }
    }

    fn is_connected(&self) -> bool {
        let mut seen = 1u8;
        let mut frontier = 1u8;
        while frontier != 0 {
            let mut next = 0u8;
            for v in 0..self.order {
                if frontier >> v & 1 == 1 {
                    next |= self.rows[v];
                }
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen.count_ones() as usize == self.order
    }
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], r: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == r {
            out.push(prefix.clone());
            return;
        }
        for v in 0..r {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, r, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; r], r, &mut out);
    out
}

/// For every labeled graph on `r` nodes, whether it is isomorphic to
/// `motif` (`induced`) or contains a copy of it on all `r` nodes.
fn isomorphism_table(motif: &SmallGraph, induced: bool) -> Vec<bool> {
    let r = motif.order;
    let pairs = r * (r - 1) / 2;
    let perms = permutations(r);
    let target = motif.code();
    let motif_edges = target.count_ones();
    (0..(1u32 << pairs))
        .map(|code| {
            let code = code as u16;
            if code.count_ones() < motif_edges || (induced && code.count_ones() != motif_edges) {
                return false;
            }
            let g = SmallGraph::from_code(r, code);
            perms.iter().any(|p| {
                (0..r).all(|a| ((a + 1)..r).all(|b| !motif.has_edge(a, b) || g.has_edge(p[a], p[b])))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Motif {
    Edge,
    VShape,
    Triangle,
    ThreeStar,
    Custom(SmallGraph),
}

impl Motif {
    pub fn pattern(&self) -> SmallGraph {
        match self {
            Motif::Edge => SmallGraph::new(2, &[(0, 1)]),
            Motif::VShape => SmallGraph::new(3, &[(0, 1), (0, 2)]),
            Motif::Triangle => SmallGraph::new(3, &[(0, 1), (0, 2), (1, 2)]),
            Motif::ThreeStar => SmallGraph::new(4, &[(0, 1), (0, 2), (0, 3)]),
            Motif::Custom(g) => Ok(*g),
        }
        .expect("built-in motifs are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifDensity {
    pub value: f64,
    /// Present when the value is a sampling estimate.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifOptions {
    /// Random subsets drawn when exact counting is too expensive.
    pub samples: usize,
    pub seed: u64,
    /// Upper bound on the estimated enumeration work for exact counting.
    pub exact_budget: f64,
    /// Count subsets whose induced subgraph is the motif. When false, count
    /// subsets whose induced subgraph contains the motif on all its nodes,
    /// so V-shapes include closed triangles.
    pub induced: bool,
}

impl Default for MotifOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0,
            exact_budget: 2e8,
            induced: true,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fraction of `r`-node subsets whose induced subgraph is isomorphic to the
/// motif.
pub fn motif_density(g: &Graph, motif: &Motif) -> Result<MotifDensity> {
    motif_density_with(g, motif, &MotifOptions::default())
}

pub fn motif_density_with(g: &Graph, motif: &Motif, opts: &MotifOptions) -> Result<MotifDensity> {
    let n = g.n_nodes();
    let pattern = motif.pattern();
    let r = pattern.order();
    if r > n {
        return Err(Error::invalid(format!("motif on {r} nodes exceeds graph size {n}")));
    }
    let subsets = binomial(n, r);
    let exact = |count: f64| MotifDensity {
        value: count / subsets,
        std_error: None,
    };
    match motif {
        Motif::Edge => return Ok(exact(g.n_edges() as f64)),
        Motif::Triangle | Motif::VShape => {
            let triangles = triangle_counts(g).iter().sum::<u64>() as f64 / 3.0;
            if *motif == Motif::Triangle {
                return Ok(exact(triangles));
            }
            let wedges: u64 = vshape_counts(g).iter().sum();
            let closed = if opts.induced { 3.0 } else { 2.0 };
            return Ok(exact(wedges as f64 - closed * triangles));
        }
        _ => {}
    }

    let table = isomorphism_table(&pattern, opts.induced);
    let work: f64 = (0..n).map(|i| (g.degree(i) as f64).powi(r as i32 - 1)).sum();
    if pattern.is_connected() && n <= 5000 && r <= 4 && work <= opts.exact_budget {
        return Ok(exact(esu_count(g, r, &table) as f64));
    }
    if subsets <= opts.exact_budget {
        return Ok(exact(all_subsets_count(g, r, &table) as f64));
    }
    let mut rng = rng_from_seed(opts.seed);
    let mut hits = 0usize;
    for _ in 0..opts.samples {
        let nodes = index::sample(&mut rng, n, r).into_vec();
        if table[subset_code(g, &nodes) as usize] {
            hits += 1;
        }
    }
    let p = hits as f64 / opts.samples as f64;
    Ok(MotifDensity {
        value: p,
        std_error: Some((p * (1.0 - p) / opts.samples as f64).sqrt()),
    })
}

fn subset_code(g: &Graph, nodes: &[usize]) -> u16 {
    let mut code = 0u16;
    let mut bit = 0;
    for a in 0..nodes.len() {
        for b in (a + 1)..nodes.len() {
            if g.has_edge(nodes[a], nodes[b]) {
                code |= 1 << bit;
            }
            bit += 1;
        }
    }
    code
}

fn all_subsets_count(g: &Graph, r: usize, table: &[bool]) -> u64 {
    let n = g.n_nodes();
    let mut idx: Vec<usize> = (0..r).collect();
    let mut count = 0;
    loop {
        if table[subset_code(g, &idx) as usize] {
            count += 1;
        }
        // next combination in lexicographic order
        let mut k = r;
        loop {
            if k == 0 {
                return count;
            }
            k -= 1;
            if idx[k] < n - r + k {
                break;
            }
            if k == 0 {
                return count;
            }
        }
        idx[k] += 1;
        for t in (k + 1)..r {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Counts connected induced `r`-subgraphs matching `table` with the ESU
/// enumeration: every connected subset is produced exactly once, rooted at
/// its smallest node.
fn esu_count(g: &Graph, r: usize, table: &[bool]) -> u64 {
    fn extend(g: &Graph, r: usize, table: &[bool], sub: &mut Vec<usize>, mut ext: Vec<usize>, root: usize) -> u64 {
        if sub.len() == r {
            return u64::from(table[subset_code(g, sub) as usize]);
        }
        let mut count = 0;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in g.neighbors(w) {
                let u = u as usize;
                if u <= root || sub.contains(&u) || next.contains(&u) {
                    continue;
                }
                // exclusive neighbors of w: not adjacent to the current subgraph
                if sub.iter().any(|&s| g.has_edge(s, u)) {
                    continue;
                }
                next.push(u);
            }
            sub.push(w);
            count += extend(g, r, table, sub, next, root);
            sub.pop();
        }
        count
    }
    (0..g.n_nodes())
        .into_par_iter()
        .map(|v| {
            let ext: Vec<usize> = g.neighbors(v).iter().map(|&u| u as usize).filter(|&u| u > v).collect();
            extend(g, r, table, &mut vec![v], ext, v)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Degree,
    Vshape,
    Triangle,
    EigenCentrality,
    HarmonicCentrality,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Degree,
        Statistic::Vshape,
        Statistic::Triangle,
        Statistic::EigenCentrality,
        Statistic::HarmonicCentrality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Degree => "degree",
            Statistic::Vshape => "vshape",
            Statistic::Triangle => "triangle",
            Statistic::EigenCentrality => "eigen_centrality",
            Statistic::HarmonicCentrality => "harmonic_centrality",
        }
    }

    /// Count statistics are compared on the `ln(1 + x)` scale by default.
    pub fn log_by_default(self) -> bool {
        matches!(self, Statistic::Degree | Statistic::Vshape | Statistic::Triangle)
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown statistic {s:?}")))
    }
}

/// The five node-level statistics of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStatsReport {
    pub n_nodes: usize,
    pub degree: Vec<u64>,
    pub vshape: Vec<u64>,
    pub triangle: Vec<u64>,
    pub eigen_centrality: Vec<f64>,
    pub harmonic_centrality: Vec<f64>,
}

impl LocalStatsReport {
    pub fn compute(g: &Graph) -> Result<Self> {
        let eigen = if g.n_nodes() == 0 {
            Vec::new()
        } else {
            match eigen_centrality(g) {
                Ok(v) => v,
                Err(Error::NoConvergence { residual }) => {
                    log::warn!("power iteration stalled (residual {residual:.2e}); using dense eigendecomposition");
                    eigen_centrality_dense(g)
                }
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            n_nodes: g.n_nodes(),
            degree: degrees(g),
            vshape: vshape_counts(g),
            triangle: triangle_counts(g),
            eigen_centrality: eigen,
            harmonic_centrality: harmonic_centrality(g),
        })
    }

    pub fn values(&self, stat: Statistic) -> Vec<f64> {
        match stat {
            Statistic::Degree => self.degree.iter().map(|&v| v as f64).collect(),
            Statistic::Vshape => self.vshape.iter().map(|&v| v as f64).collect(),
            Statistic::Triangle => self.triangle.iter().map(|&v| v as f64).collect(),
            Statistic::EigenCentrality => self.eigen_centrality.clone(),
            Statistic::HarmonicCentrality => self.harmonic_centrality.clone(),
        }
    }

    /// Values on the comparison scale.
    pub fn transformed(&self, stat: Statistic, log: bool) -> Vec<f64> {
        let v = self.values(stat);
        if log {
            log_transform(&v)
        } else {
            v
        }
    }

    /// One row per node: `node,degree,vshape,triangle,eigen_centrality,harmonic_centrality`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let map = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["node", "degree", "vshape", "triangle", "eigen_centrality", "harmonic_centrality"])
            .map_err(map)?;
        for i in 0..self.n_nodes {
            w.write_record([
                i.to_string(),
                self.degree[i].to_string(),
                self.vshape[i].to_string(),
                self.triangle[i].to_string(),
                format!("{:?}", self.eigen_centrality[i]),
                format!("{:?}", self.harmonic_centrality[i]),
            ])
            .map_err(map)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which statistics are compared on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFlags {
    pub degree: bool,
    pub vshape: bool,
    pub triangle: bool,
    pub eigen_centrality: bool,
    pub harmonic_centrality: bool,
}

impl Default for LogFlags {
    fn default() -> Self {
        Self {
            degree: Statistic::Degree.log_by_default(),
            vshape: Statistic::Vshape.log_by_default(),
            triangle: Statistic::Triangle.log_by_default(),
            eigen_centrality: Statistic::EigenCentrality.log_by_default(),
            harmonic_centrality: Statistic::HarmonicCentrality.log_by_default(),
        }
    }
}

impl LogFlags {
    pub fn get(&self, stat: Statistic) -> bool {
        match stat {
            Statistic::Degree => self.degree,
            Statistic::Vshape => self.vshape,
            Statistic::Triangle => self.triangle,
            Statistic::EigenCentrality => self.eigen_centrality,
            Statistic::HarmonicCentrality => self.harmonic_centrality,
        }
    }
}

/// Wasserstein-1 distance per statistic between two graphs' reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatDistances {
    pub degree: f64,
    pub vshape: f64,
    pub triangle: f64,
    pub eigen_centrality: f64,
    pub harmonic_centrality: f64,
    pub log_flags: LogFlags,
}

impl StatDistances {
    pub fn compare(truth: &LocalStatsReport, release: &LocalStatsReport, log_flags: LogFlags) -> Result<Self> {
        let d = |s: Statistic| {
            let log = log_flags.get(s);
            wasserstein1(&truth.transformed(s, log), &release.transformed(s, log))
        };
        Ok(Self {
            degree: d(Statistic::Degree)?,
            vshape: d(Statistic::Vshape)?,
            triangle: d(Statistic::Triangle)?,
            eigen_centrality: d(Statistic::EigenCentrality)?,
            harmonic_centrality: d(Statistic::HarmonicCentrality)?,
            log_flags,
        })
    }

    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Degree => self.degree,
            Statistic::Vshape => self.vshape,
            Statistic::Triangle => self.triangle,
            Statistic::EigenCentrality => self.eigen_centrality,
            Statistic::HarmonicCentrality => self.harmonic_centrality,
        }
    }
}
