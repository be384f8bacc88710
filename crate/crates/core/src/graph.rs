//! Graphs that constrain the support of the learned transformations.
//!
//! Adjacency is stored in compressed sparse row form: `offsets[i]..offsets[i + 1]`
//! indexes the sorted neighbor list of vertex `i` inside `columns`. Every edge
//! slot later carries one logit per transformation slice, so the slot numbering
//! defined here is shared with [`crate::transform`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// Dense real matrix used for Laplacians and mode-3 products.
pub type DenseMatrix = Array2<f64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    columns: Vec<usize>,
    self_loops: bool,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Both directions are
    /// inserted; duplicates are merged. When `with_self_loops` is set every
    /// vertex also gets the `(i, i)` entry.
    pub fn from_edges<I>(n: usize, edges: I, with_self_loops: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {n} vertices")));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        if with_self_loops {
            for (i, set) in sets.iter_mut().enumerate() {
                set.insert(i);
            }
        }
        let self_loops = n > 0 && sets.iter().enumerate().all(|(i, s)| s.contains(&i));
        let mut offsets = Vec::with_capacity(n + 1);
        let mut columns = Vec::new();
        offsets.push(0);
        for set in sets {
            columns.extend(set);
            offsets.push(columns.len());
        }
        Ok(Self {
            n,
            offsets,
            columns,
            self_loops,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// Sorted neighbor list of `i`, including `i` itself when self-looped.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.columns[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Slot offsets into the concatenated neighbor lists, length `n + 1`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total number of stored (directed) adjacency entries, self-loops included.
    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Position of `j` in the neighbor list of `i`.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors(i).binary_search(&j).ok()
    }

    /// Number of undirected edges, not counting self-loops.
    pub fn undirected_edge_count(&self) -> usize {
        let off_diag = (0..self.n)
            .map(|i| self.neighbors(i).iter().filter(|&&j| j != i).count())
            .sum::<usize>();
        off_diag / 2
    }

    /// Binary adjacency matrix (self-loops included when present).
    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                a[[i, j]] = 1.0;
            }
        }
        a
    }

    /// Undirected edge list with `i <= j`, self-loops written as `i i`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if i <= j {
                    let _ = writeln!(out, "{i} {j}");
                }
            }
        }
        out
    }

    /// Parses the whitespace-separated `i j` edge-list format. Blank lines and
    /// lines starting with `#` are skipped. When `n` is `None` the vertex count
    /// is one more than the largest index seen.
    pub fn from_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_index = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| invalid(format!("line {}: expected two indices", lineno + 1)))?
                    .parse::<usize>()
                    .map_err(|e| invalid(format!("line {}: {e}", lineno + 1)))
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(invalid(format!("line {}: trailing tokens", lineno + 1)));
            }
            max_index = Some(max_index.map_or(i.max(j), |m: usize| m.max(i).max(j)));
            edges.push((i, j));
        }
        let n = match (n, max_index) {
            (Some(n), _) => n,
            (None, Some(m)) => m + 1,
            (None, None) => return Err(invalid("empty edge list")),
        };
        Self::from_edges(n, edges, false)
    }

    /// SHA-256 over the vertex count and the CSR arrays, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        for &o in &self.offsets {
            hasher.update((o as u64).to_le_bytes());
        }
        for &c in &self.columns {
            hasher.update((c as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

/// Ring on `n` vertices: `i` is adjacent to `i - 1` and `i + 1` modulo `n`.
pub fn build_ring_graph(n: usize, with_self_loops: bool) -> Result<Graph> {
    if n < 3 {
        return Err(invalid(format!("ring needs at least 3 vertices, got {n}")));
    }
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)), with_self_loops)
}

/// 4-connected pixel grid without wrap-around; pixel `(r, c)` is vertex `r * width + c`.
pub fn build_grid_graph(height: usize, width: usize, with_self_loops: bool) -> Result<Graph> {
    if height == 0 || width == 0 {
        return Err(invalid(format!("grid dimensions must be positive, got {height}x{width}")));
    }
    let mut edges = Vec::with_capacity(2 * height * width);
    for r in 0..height {
        for c in 0..width {
            let v = r * width + c;
            if c + 1 < width {
                edges.push((v, v + 1));
            }
            if r + 1 < height {
                edges.push((v, v + width));
            }
        }
    }
    Graph::from_edges(height * width, edges, with_self_loops)
}

/// Empirical covariance (unbiased) of the columns of `samples` (rows are samples).
pub fn covariance(samples: ArrayView2<'_, f64>) -> Result<DenseMatrix> {
    let m = samples.nrows();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 samples, got {m}"
        )));
    }
    let mean = samples.mean_axis(Axis(0)).expect("m >= 2");
    let centered = &samples - &mean;
    Ok(centered.t().dot(&centered) / (m as f64 - 1.0))
}

/// k-nearest-neighbor graph on covariance magnitude. Each vertex keeps itself
/// plus the `k - 1` other vertices with the largest `|cov|` (ties go to the
/// smaller index); the directed selections are then symmetrized by union.
pub fn build_knn_covariance_graph(samples: ArrayView2<'_, f64>, k: usize) -> Result<Graph> {
    let n = samples.ncols();
    if k == 0 || k > n {
        return Err(invalid(format!("k must be in [1, {n}], got {k}")));
    }
    let cov = covariance(samples)?;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("covariance has non-finite entries".into()));
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = cov.row(i);
        order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
        edges.extend(order.iter().take(k - 1).map(|&j| (i, j)));
    }
    Graph::from_edges(n, edges, true)
}

/// Combinatorial Laplacian `D - A`, computed on the adjacency without self-loops.
pub fn laplacian(g: &Graph) -> DenseMatrix {
    let n = g.n();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for &j in g.neighbors(i) {
            if j != i {
                l[[i, j]] = -1.0;
                l[[i, i]] += 1.0;
            }
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_symmetric(g: &Graph) {
        for i in 0..g.n() {
            let nb = g.neighbors(i);
            assert!(nb.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicate at {i}");
            for &j in nb {
                assert!(j < g.n());
                assert!(g.contains_edge(j, i), "missing reverse edge ({j}, {i})");
            }
        }
    }

    #[test]
    fn ring_of_four_matches_circulant_support() {
        let g = build_ring_graph(4, true).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1, 3]);
        // Nonzero pattern of w0 I + w1 T1 + w2 T2 on the 4-ring.
        let pattern = [
            [1, 1, 0, 1],
            [1, 1, 1, 0],
            [0, 1, 1, 1],
            [1, 0, 1, 1],
        ];
        let a = g.adjacency();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[[i, j]], pattern[i][j] as f64);
            }
        }
        assert!(g.has_self_loops());
    }

    #[test]
    fn ring_of_three_is_complete() {
        let g = build_ring_graph(3, false).unwrap();
        let a = g.adjacency();
        assert_eq!(a, Array2::<f64>::ones((3, 3)) - Array2::<f64>::eye(3));
        assert!(!g.has_self_loops());
    }

    #[test]
    fn ring_degrees() {
        let g = build_ring_graph(8, false).unwrap();
        assert!((0..8).all(|i| g.degree(i) == 2));
        assert!(matches!(build_ring_graph(2, false), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn small_grids() {
        let g = build_grid_graph(2, 2, true).unwrap();
        assert!((0..4).all(|i| g.degree(i) == 3));
        let p = build_grid_graph(1, 4, false).unwrap();
        let degs: Vec<_> = (0..4).map(|i| p.degree(i)).collect();
        assert_eq!(degs, vec![1, 2, 2, 1]);
        assert!(build_grid_graph(0, 3, true).is_err());
    }

    #[test]
    fn grid_16_degree_classes() {
        let g = build_grid_graph(16, 16, true).unwrap();
        assert_eq!(g.n(), 256);
        let mut counts = [0usize; 6];
        for r in 0..16 {
            for c in 0..16 {
                let v = r * 16 + c;
                let border = (r == 0 || r == 15) as usize + (c == 0 || c == 15) as usize;
                let expected = match border {
                    0 => 5,
                    1 => 4,
                    _ => 3,
                };
                assert_eq!(g.degree(v), expected);
                counts[g.degree(v)] += 1;
            }
        }
        assert_eq!(counts[3], 4);
        assert_eq!(counts[4], 4 * 14);
        assert_eq!(counts[5], 14 * 14);
        assert_symmetric(&g);
    }

    #[test]
    fn grid_edge_count() {
        for (h, w) in [(1, 1), (1, 5), (3, 4), (7, 2)] {
            let g = build_grid_graph(h, w, false).unwrap();
            assert_eq!(g.n(), h * w);
            assert_eq!(g.undirected_edge_count(), h * (w - 1) + w * (h - 1));
        }
    }

    #[test]
    fn knn_correlated_pair() {
        // vertex 0 and 1 perfectly correlated, vertex 2 independent noise
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 200;
        let mut s = Array2::zeros((m, 3));
        for r in 0..m {
            let a: f64 = rng.random_range(-1.0..1.0);
            s[[r, 0]] = a;
            s[[r, 1]] = 2.0 * a + 1.0;
            s[[r, 2]] = rng.random_range(-1.0..1.0) * 0.1;
        }
        // brute-force covariance check for the oracle pair
        let cov = covariance(s.view()).unwrap();
        assert!(cov[[0, 1]].abs() > cov[[0, 2]].abs());
        assert!(cov[[1, 0]].abs() > cov[[1, 2]].abs());
        let g = build_knn_covariance_graph(s.view(), 2).unwrap();
        assert!(g.contains_edge(0, 1) && g.contains_edge(1, 0));
        assert!(g.has_self_loops());
        assert_symmetric(&g);
    }

    #[test]
    fn knn_degenerate_and_complete() {
        let s = array![[1.0, 1.0, 1.0, 1.0], [2.0, 2.0, 2.0, 2.0], [0.5, 0.5, 0.5, 0.5]];
        let g = build_knn_covariance_graph(s.view(), 2).unwrap();
        assert!(g.has_self_loops());
        assert_symmetric(&g);
        let full = build_knn_covariance_graph(s.view(), 4).unwrap();
        assert!((0..4).all(|i| full.degree(i) == 4));
        assert!(matches!(
            build_knn_covariance_graph(s.slice(ndarray::s![..1, ..]), 2),
            Err(Error::InsufficientData(_))
        ));
        assert!(build_knn_covariance_graph(s.view(), 5).is_err());
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&build_ring_graph(3, false).unwrap());
        assert_eq!(l, array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]);
        let p = laplacian(&build_grid_graph(1, 2, true).unwrap());
        assert_eq!(p, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_psd_and_zero_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [
            build_grid_graph(5, 6, true).unwrap(),
            build_ring_graph(9, false).unwrap(),
        ] {
            let l = laplacian(&g);
            assert_eq!(l, l.t());
            let ones = Array1::ones(g.n());
            assert!(l.dot(&ones).iter().all(|v| v.abs() < 1e-12));
            for _ in 0..20 {
                let x: Array1<f64> = (0..g.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
                assert!(x.dot(&l.dot(&x)) >= -1e-9);
            }
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_grid_graph(3, 3, true).unwrap();
        let text = g.to_edge_list();
        assert!(text.lines().any(|l| l == "4 4"));
        let back = Graph::from_edge_list(&text, None).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.fingerprint(), g.fingerprint());
        assert!(Graph::from_edge_list("0 1 2\n", None).is_err());
        assert!(Graph::from_edge_list("0 x\n", None).is_err());
    }
}
