//! Simple undirected graphs, edge-list I/O and the release/hold-out split.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Node counts up to this size keep a dense bit-matrix next to the neighbor lists.
pub const DENSE_LIMIT: usize = 20_000;

/// Row-major binary matrix packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        let w = self.words[r * self.words_per_row + c / 64];
        (w >> (c % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.words[r * self.words_per_row + c / 64];
        let mask = 1u64 << (c % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Row `r` expanded to 0.0 / 1.0 values.
    pub fn row_f64(&self, r: usize) -> Vec<f64> {
        (0..self.cols)
            .map(|c| if self.get(r, c) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn row_sum(&self, r: usize) -> usize {
        self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// Replaces row `r` with the given bits.
    pub fn set_row(&mut self, r: usize, bits: &[bool]) {
        assert_eq!(bits.len(), self.cols, "row length must equal column count");
        for (c, &b) in bits.iter().enumerate() {
            self.set(r, c, b);
        }
    }
}

/// Simple undirected binary graph on nodes `0..n`.
///
/// Neighbor lists are always kept sorted; a dense bit-matrix is kept alongside
/// them when `n <= DENSE_LIMIT` for O(1) pair queries.
#[derive(Debug, Clone)]
pub struct Graph {
    neighbors: Vec<Vec<u32>>,
    dense: Option<BitMatrix>,
    n_edges: usize,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.neighbors == other.neighbors
    }
}

impl Eq for Graph {}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self::from_neighbor_lists(vec![Vec::new(); n])
    }

    /// Builds a graph from node pairs. Self-loops and repeated pairs (in
    /// either orientation) are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                continue;
            }
            neighbors[a].push(b as u32);
            neighbors[b].push(a as u32);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self::from_neighbor_lists(neighbors))
    }

    /// Builds from an upper-triangle predicate evaluated for every pair `i < j`.
    pub fn from_pair_fn(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if edge(i, j) {
                    neighbors[i].push(j as u32);
                    neighbors[j].push(i as u32);
                }
            }
        }
        // pushes happen in increasing order for both endpoints
        Self::from_neighbor_lists(neighbors)
    }

    fn from_neighbor_lists(neighbors: Vec<Vec<u32>>) -> Self {
        let n = neighbors.len();
        let n_edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        let dense = (n <= DENSE_LIMIT).then(|| {
            let mut bits = BitMatrix::zeros(n, n);
            for (i, list) in neighbors.iter().enumerate() {
                for &j in list {
                    bits.set(i, j as usize, true);
                }
            }
            bits
        });
        Self {
            neighbors,
            dense,
            n_edges,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        match &self.dense {
            Some(bits) => bits.get(i, j),
            None => self.neighbors[i].binary_search(&(j as u32)).is_ok(),
        }
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .map(move |&j| (i, j as usize))
                .filter(|&(i, j)| i < j)
        })
    }

    /// Subgraph induced by `ids`; node `k` of the result is `ids[k]`.
    pub fn induced(&self, ids: &[usize]) -> Self {
        let mut position = vec![u32::MAX; self.n_nodes()];
        for (k, &id) in ids.iter().enumerate() {
            position[id] = k as u32;
        }
        let neighbors = ids
            .iter()
            .map(|&id| {
                let mut list: Vec<u32> = self.neighbors[id]
                    .iter()
                    .map(|&j| position[j as usize])
                    .filter(|&p| p != u32::MAX)
                    .collect();
                list.sort_unstable();
                list
            })
            .collect();
        Self::from_neighbor_lists(neighbors)
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_nodes());
        let mut neighbors = vec![Vec::new(); self.n_nodes()];
        for (i, list) in self.neighbors.iter().enumerate() {
            neighbors[perm[i]] = list.iter().map(|&j| perm[j as usize] as u32).collect();
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self::from_neighbor_lists(neighbors)
    }

    pub fn density(&self) -> f64 {
        let n = self.n_nodes() as f64;
        if n < 2.0 {
            0.0
        } else {
            self.n_edges as f64 / (n * (n - 1.0) / 2.0)
        }
    }

    /// Dense symmetric 0/1 adjacency matrix.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[(i, j as usize)] = 1.0;
            }
        }
        a
    }

    /// `y = A x` using the neighbor lists.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (yi, list) in y.iter_mut().zip(&self.neighbors) {
            *yi = list.iter().map(|&j| x[j as usize]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeListFormat {
    /// Two whitespace-separated labels per line; `#` starts a comment line.
    Whitespace,
    /// Header `src,dst` followed by one edge per row.
    Csv,
}

/// Result of parsing an edge list.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// External label of each internal node index.
    pub labels: Vec<String>,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Parses an edge list.
///
/// Labels are mapped to dense indices in order of first appearance. A
/// `# n=<N>` header (as emitted by [`write_edge_list`]) switches to canonical
/// mode: labels must then be integers in `0..N` and are used as indices
/// directly, which also preserves isolated nodes.
pub fn load_edge_list<R: BufRead>(source: R, format: EdgeListFormat) -> Result<LoadedGraph> {
    let mut pairs: Vec<(String, String, usize)> = Vec::new();
    let mut header_n: Option<usize> = None;

    match format {
        EdgeListFormat::Whitespace => {
            for (idx, line) in source.lines().enumerate() {
                let line = line?;
                let lineno = idx + 1;
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                if let Some(comment) = trimmed.strip_prefix('#') {
                    if let Some(n) = parse_header(comment, lineno)? {
                        header_n = Some(n);
                    }
                    continue;
                }
                let mut fields = trimmed.split_whitespace();
                match (fields.next(), fields.next(), fields.next()) {
                    (Some(a), Some(b), None) => pairs.push((a.to_owned(), b.to_owned(), lineno)),
                    _ => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("expected two node labels, got {trimmed:?}"),
                        })
                    }
                }
            }
        }
        EdgeListFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .comment(Some(b'#'))
                .flexible(true)
                .from_reader(source);
            let mut seen_header = false;
            for record in reader.records() {
                let record = record.map_err(|e| Error::Parse {
                    line: e.position().map_or(0, |p| p.line() as usize),
                    msg: e.to_string(),
                })?;
                let lineno = record.position().map_or(0, |p| p.line() as usize);
                if record.len() != 2 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected 2 fields, got {}", record.len()),
                    });
                }
                let (a, b) = (record[0].trim(), record[1].trim());
                if !seen_header {
                    seen_header = true;
                    if a == "src" && b == "dst" {
                        continue;
                    }
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "missing `src,dst` header".into(),
                    });
                }
                pairs.push((a.to_owned(), b.to_owned(), lineno));
            }
        }
    }

    if pairs.is_empty() && header_n.is_none() {
        return Err(Error::EmptyInput);
    }

    let mut edges = Vec::with_capacity(pairs.len());
    let labels: Vec<String>;
    if let Some(n) = header_n {
        for (a, b, lineno) in &pairs {
            let parse = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v < n)
                    .ok_or_else(|| Error::Parse {
                        line: *lineno,
                        msg: format!("label {s:?} is not an index below n={n}"),
                    })
            };
            edges.push((parse(a)?, parse(b)?));
        }
        labels = (0..n).map(|i| i.to_string()).collect();
    } else {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        let mut intern = |s: &str| -> usize {
            if let Some(&i) = index.get(s) {
                return i;
            }
            let i = order.len();
            order.push(s.to_owned());
            index.insert(s.to_owned(), i);
            i
        };
        for (a, b, _) in &pairs {
            let ia = intern(a);
            let ib = intern(b);
            edges.push((ia, ib));
        }
        labels = order;
    }

    let self_loops = edges.iter().filter(|(a, b)| a == b).count();
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop(s) while loading edge list");
    }
    let graph = Graph::from_edges(labels.len(), edges.iter().copied())?;
    let duplicates = edges.len() - self_loops - graph.n_edges();
    Ok(LoadedGraph {
        graph,
        labels,
        self_loops_dropped: self_loops,
        duplicates_dropped: duplicates,
    })
}

fn parse_header(comment: &str, lineno: usize) -> Result<Option<usize>> {
    let body = comment.trim();
    match body.strip_prefix("n=") {
        Some(value) => value
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad node-count header {body:?}"),
            }),
        None => Ok(None),
    }
}

/// Writes `# n=<N>` followed by each edge once as `i j` with `i < j`, sorted.
pub fn write_edge_list<W: Write>(graph: &Graph, mut sink: W) -> Result<()> {
    writeln!(sink, "# n={}", graph.n_nodes())?;
    for (i, j) in graph.edges() {
        writeln!(sink, "{i} {j}")?;
    }
    sink.flush()?;
    Ok(())
}

/// Edge list as an in-memory string in the canonical format.
pub fn edge_list_string(graph: &Graph) -> String {
    let mut buf = Vec::new();
    write_edge_list(graph, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("edge list is ASCII")
}

/// Block view of a graph split into release and hold-out nodes.
///
/// Node `k` of `a11` is `release_ids[k]` of the source graph, node `k` of
/// `a22` is `holdout_ids[k]`; `a12[(r, h)]` is the edge between release node
/// `r` and hold-out node `h`.
#[derive(Debug, Clone)]
pub struct PartitionedGraph {
    pub release_ids: Vec<usize>,
    pub holdout_ids: Vec<usize>,
    pub a11: Graph,
    pub a12: BitMatrix,
    pub a22: Graph,
}

/// What the estimation stages are allowed to see: the cross block and the
/// hold-out block. The release block is not reachable from here.
#[derive(Debug, Clone, Copy)]
pub struct HoldoutBlocks<'a> {
    pub a12: &'a BitMatrix,
    pub a22: &'a Graph,
}

impl PartitionedGraph {
    pub fn n_release(&self) -> usize {
        self.release_ids.len()
    }

    pub fn n_holdout(&self) -> usize {
        self.holdout_ids.len()
    }

    pub fn holdout_blocks(&self) -> HoldoutBlocks<'_> {
        HoldoutBlocks {
            a12: &self.a12,
            a22: &self.a22,
        }
    }

    /// Rebuilds the source graph from the three blocks.
    pub fn reassemble(&self) -> Graph {
        let n = self.n_release() + self.n_holdout();
        let mut edges = Vec::new();
        for (i, j) in self.a11.edges() {
            edges.push((self.release_ids[i], self.release_ids[j]));
        }
        for (i, j) in self.a22.edges() {
            edges.push((self.holdout_ids[i], self.holdout_ids[j]));
        }
        for r in 0..self.a12.rows() {
            for h in 0..self.a12.cols() {
                if self.a12.get(r, h) {
                    edges.push((self.release_ids[r], self.holdout_ids[h]));
                }
            }
        }
        Graph::from_edges(n, edges).expect("block indices are in range")
    }
}

/// Default release size: half the nodes, rounded down.
pub fn default_release_size(n_nodes: usize) -> usize {
    n_nodes / 2
}

/// Splits `graph` into a uniformly random release set of size `n_release`
/// and the complementary hold-out set. Both id lists are sorted.
pub fn partition(graph: &Graph, n_release: usize, seed: u64) -> Result<PartitionedGraph> {
    let n = graph.n_nodes();
    if n_release == 0 || n_release >= n {
        return Err(Error::invalid(format!(
            "release size must be in 1..{n}, got {n_release}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut release_ids = index::sample(&mut rng, n, n_release).into_vec();
    release_ids.sort_unstable();
    let mut is_release = vec![false; n];
    for &i in &release_ids {
        is_release[i] = true;
    }
    let holdout_ids: Vec<usize> = (0..n).filter(|&i| !is_release[i]).collect();

    let mut holdout_pos = vec![usize::MAX; n];
    for (k, &id) in holdout_ids.iter().enumerate() {
        holdout_pos[id] = k;
    }
    let mut a12 = BitMatrix::zeros(release_ids.len(), holdout_ids.len());
    for (r, &id) in release_ids.iter().enumerate() {
        for &j in graph.neighbors(id) {
            let h = holdout_pos[j as usize];
            if h != usize::MAX {
                a12.set(r, h, true);
            }
        }
    }

    Ok(PartitionedGraph {
        a11: graph.induced(&release_ids),
        a22: graph.induced(&holdout_ids),
        a12,
        release_ids,
        holdout_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(s: &str) -> Result<LoadedGraph> {
        load_edge_list(s.as_bytes(), EdgeListFormat::Whitespace)
    }

    #[test]
    fn loads_simple_path() {
        let g = load("0 1\n1 2").unwrap().graph;
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn dedups_symmetric_pairs() {
        let loaded = load("a b\nb a").unwrap();
        assert_eq!(loaded.graph.n_nodes(), 2);
        assert_eq!(loaded.graph.n_edges(), 1);
        assert_eq!(loaded.labels, vec!["a", "b"]);
        assert_eq!(loaded.duplicates_dropped, 1);
    }

    #[test]
    fn drops_self_loops() {
        let loaded = load("0 0\n0 1").unwrap();
        assert_eq!(loaded.graph.n_nodes(), 2);
        assert_eq!(loaded.graph.n_edges(), 1);
        assert_eq!(loaded.self_loops_dropped, 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match load("0 1\n2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(load("0 1 2"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(load(""), Err(Error::EmptyInput)));
        assert!(matches!(load("\n# comment\n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn csv_requires_header() {
        let g = load_edge_list("src,dst\nx,y\ny,z\n".as_bytes(), EdgeListFormat::Csv)
            .unwrap()
            .graph;
        assert_eq!(g.n_edges(), 2);
        assert!(load_edge_list("x,y\n".as_bytes(), EdgeListFormat::Csv).is_err());
        assert!(matches!(
            load_edge_list("src,dst\nx,y,z\n".as_bytes(), EdgeListFormat::Csv),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn writes_canonical_order() {
        let g = Graph::from_edges(2, [(1, 0)]).unwrap();
        assert_eq!(edge_list_string(&g), "# n=2\n0 1\n");
        let empty = Graph::empty(3);
        assert_eq!(edge_list_string(&empty), "# n=3\n");
        let back = load(&edge_list_string(&empty)).unwrap().graph;
        assert_eq!(back, empty);
    }

    #[test]
    fn header_rejects_out_of_range_labels() {
        assert!(matches!(load("# n=2\n0 5\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn partition_shapes() {
        let g = Graph::from_pair_fn(10, |i, j| (i + j) % 3 == 0);
        let p = partition(&g, 5, 1).unwrap();
        assert_eq!(p.a11.n_nodes(), 5);
        assert_eq!((p.a12.rows(), p.a12.cols()), (5, 5));
        assert_eq!(p.a22.n_nodes(), 5);
    }

    #[test]
    fn partition_is_deterministic() {
        let g = Graph::from_pair_fn(30, |i, j| (i * j) % 7 == 1);
        let a = partition(&g, 12, 99).unwrap();
        let b = partition(&g, 12, 99).unwrap();
        assert_eq!(a.release_ids, b.release_ids);
        let c = partition(&g, 12, 100).unwrap();
        assert_ne!(a.release_ids, c.release_ids);
    }

    #[test]
    fn degenerate_split_leaves_single_holdout_node() {
        let g = Graph::from_pair_fn(10, |_, _| true);
        let p = partition(&g, 9, 3).unwrap();
        assert_eq!(p.a22.n_nodes(), 1);
        assert_eq!(p.a22.n_edges(), 0);
    }

    #[test]
    fn partition_rejects_bad_sizes() {
        let g = Graph::empty(4);
        assert!(partition(&g, 0, 0).is_err());
        assert!(partition(&g, 4, 0).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (2usize..40).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..120)
                .prop_map(move |edges| Graph::from_edges(n, edges).unwrap())
        })
    }

    proptest! {
        #[test]
        fn partition_is_lossless(g in arb_graph(), seed in any::<u64>(), frac in 0.05f64..0.95) {
            let n = g.n_nodes();
            let n_release = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let p = partition(&g, n_release, seed).unwrap();
            prop_assert_eq!(p.reassemble(), g.clone());
            for (r, &id) in p.release_ids.iter().enumerate() {
                prop_assert_eq!(g.degree(id), p.a11.degree(r) + p.a12.row_sum(r));
            }
            let mut all: Vec<usize> = p.release_ids.iter().chain(&p.holdout_ids).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn write_then_load_is_identity(g in arb_graph()) {
            let text = edge_list_string(&g);
            let back = load(&text).unwrap().graph;
            prop_assert_eq!(back, g);
        }
    }
}
