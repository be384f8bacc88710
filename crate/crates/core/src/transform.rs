//! The learnable transformation tensor `S` and its relaxations.
//!
//! `S` has shape `N x N x K`, but every slice is supported on the graph's
//! adjacency, so only one logit per (slice, edge slot) is stored. Slice `k`,
//! row `i` lives at `values[k * nnz + offsets[i] .. k * nnz + offsets[i + 1]]`,
//! aligned with `graph.neighbors(i)`.
//!
//! Signals are row vectors: a transform `T` acts as `s^T T`, so the content at
//! vertex `i` is moved to `target(i)`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{DenseMatrix, Graph};

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLogits {
    graph: Arc<Graph>,
    k: usize,
    values: Vec<f64>,
}

impl EdgeLogits {
    pub fn zeros(graph: Arc<Graph>, k: usize) -> Self {
        let values = vec![0.0; k * graph.nnz()];
        Self { graph, k, values }
    }

    /// I.i.d. uniform logits in `[-scale, scale]`.
    pub fn random_uniform<R: Rng + ?Sized>(
        graph: Arc<Graph>,
        k: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let values = (0..k * graph.nnz())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self { graph, k, values }
    }

    pub fn from_values(graph: Arc<Graph>, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * graph.nnz() {
            return Err(invalid(format!(
                "expected {} logits for K = {k}, got {}",
                k * graph.nnz(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logit".into()));
        }
        Ok(Self { graph, k, values })
    }

    /// Logits that put `strength` on `targets[k][i]` and 0 elsewhere; used to
    /// pin `S` to a known set of hard transforms.
    pub fn from_hard(graph: Arc<Graph>, hard: &HardTransforms, strength: f64) -> Result<Self> {
        if hard.n() != graph.n() {
            return Err(invalid("transform size does not match the graph"));
        }
        let mut out = Self::zeros(graph, hard.k());
        for k in 0..hard.k() {
            for i in 0..hard.n() {
                let j = hard.target(k, i);
                let slot = out.graph.slot_of(i, j).ok_or_else(|| {
                    invalid(format!("slice {k}: target {j} of vertex {i} is not a neighbor"))
                })?;
                out.row_mut(k, i)[slot] = strength;
            }
        }
        Ok(out)
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, k: usize, i: usize) -> &[f64] {
        let (a, b) = row_range(&self.graph, k, i);
        &self.values[a..b]
    }

    pub fn row_mut(&mut self, k: usize, i: usize) -> &mut [f64] {
        let (a, b) = row_range(&self.graph, k, i);
        &mut self.values[a..b]
    }
}

fn row_range(g: &Graph, k: usize, i: usize) -> (usize, usize) {
    let base = k * g.nnz();
    (base + g.offsets()[i], base + g.offsets()[i + 1])
}

/// Row-stochastic relaxation `softmax(S / t)` restricted to the edge support.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTransforms {
    graph: Arc<Graph>,
    k: usize,
    temperature: f64,
    values: Vec<f64>,
}

impl SoftTransforms {
    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize, i: usize) -> &[f64] {
        let (a, b) = row_range(&self.graph, k, i);
        &self.values[a..b]
    }

    /// Values of slice `k` in slot order (length `nnz`).
    pub fn slice(&self, k: usize) -> &[f64] {
        let nnz = self.graph.nnz();
        &self.values[k * nnz..(k + 1) * nnz]
    }

    /// Slice `k` as a dense `N x N` matrix.
    pub fn dense_slice(&self, k: usize) -> DenseMatrix {
        let n = self.n();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for (&j, &p) in self.graph.neighbors(i).iter().zip(self.row(k, i)) {
                m[[i, j]] = p;
            }
        }
        m
    }
}

/// One function `vertex -> neighbor` per slice: the one-hot limit of `S`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardTransforms {
    n: usize,
    k: usize,
    targets: Vec<Vec<usize>>,
}

impl HardTransforms {
    pub fn new(n: usize, targets: Vec<Vec<usize>>) -> Result<Self> {
        for (k, t) in targets.iter().enumerate() {
            if t.len() != n {
                return Err(invalid(format!("slice {k} has {} targets, expected {n}", t.len())));
            }
            if let Some(&bad) = t.iter().find(|&&j| j >= n) {
                return Err(invalid(format!("slice {k}: target {bad} out of range")));
            }
        }
        Ok(Self {
            n,
            k: targets.len(),
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn target(&self, k: usize, i: usize) -> usize {
        self.targets[k][i]
    }

    pub fn slice(&self, k: usize) -> &[usize] {
        &self.targets[k]
    }

    pub fn slices(&self) -> &[Vec<usize>] {
        &self.targets
    }

    /// True when every target is in the neighbor list of its source vertex.
    pub fn is_edge_constrained(&self, graph: &Graph) -> bool {
        graph.n() == self.n
            && self
                .targets
                .iter()
                .all(|t| t.iter().enumerate().all(|(i, &j)| graph.contains_edge(i, j)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: HardTransforms = serde_json::from_str(text)?;
        if raw.targets.len() != raw.k {
            return Err(invalid(format!(
                "\"k\" is {} but {} target rows were given",
                raw.k,
                raw.targets.len()
            )));
        }
        Self::new(raw.n, raw.targets)
    }
}

/// Exponential temperature interpolation between `t_init` and `t_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_init: f64,
    pub t_final: f64,
    pub s_total: usize,
}

impl Schedule {
    pub fn new(t_init: f64, t_final: f64, s_total: usize) -> Result<Self> {
        if !(t_init > 0.0 && t_init.is_finite()) || !(t_final > 0.0 && t_final.is_finite()) {
            return Err(invalid(format!(
                "temperatures must be positive and finite, got {t_init} -> {t_final}"
            )));
        }
        if s_total == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        Ok(Self {
            t_init,
            t_final,
            s_total,
        })
    }
}

/// `t(s) = t_init * (t_final / t_init)^(s / s_total)`.
pub fn temperature_at(step: usize, sched: &Schedule) -> Result<f64> {
    if step > sched.s_total {
        return Err(invalid(format!(
            "step {step} outside [0, {}]",
            sched.s_total
        )));
    }
    // Exact endpoints regardless of rounding in powf.
    if step == 0 {
        return Ok(sched.t_init);
    }
    if step == sched.s_total {
        return Ok(sched.t_final);
    }
    let frac = step as f64 / sched.s_total as f64;
    Ok(sched.t_init * (sched.t_final / sched.t_init).powf(frac))
}

/// Row-wise masked softmax of `logits / t`, max-subtracted.
pub fn soften(params: &EdgeLogits, t: f64) -> Result<SoftTransforms> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("temperature must be positive, got {t}")));
    }
    let g = &params.graph;
    let offsets = g.offsets();
    let nnz = g.nnz();
    let mut values = vec![0.0; params.values.len()];
    for k in 0..params.k {
        let base = k * nnz;
        for i in 0..g.n() {
            let (a, b) = (base + offsets[i], base + offsets[i + 1]);
            let row = &params.values[a..b];
            let out = &mut values[a..b];
            let mut max = f64::NEG_INFINITY;
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite logit in slice {k}, vertex {i}"
                    )));
                }
                max = max.max(v);
            }
            let mut sum = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = ((v - max) / t).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
    }
    Ok(SoftTransforms {
        graph: Arc::clone(g),
        k: params.k,
        temperature: t,
        values,
    })
}

/// Zero-temperature limit: per row, the neighbor with the largest logit.
/// Neighbor lists are sorted, so taking the first maximum breaks ties toward
/// the smallest vertex index. A vertex with no edges at all maps to itself.
pub fn harden(params: &EdgeLogits) -> HardTransforms {
    let g = &params.graph;
    let targets = (0..params.k)
        .map(|k| {
            (0..g.n())
                .map(|i| {
                    let row = params.row(k, i);
                    if row.is_empty() {
                        return i;
                    }
                    let best = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (m, &v)| if v > row[best] { m } else { best });
                    g.neighbors(i)[best]
                })
                .collect()
        })
        .collect();
    HardTransforms {
        n: g.n(),
        k: params.k,
        targets,
    }
}

/// `S x_3 w = sum_k w[k] S[:, :, k]` as a dense matrix.
pub fn mode3_product(s_soft: &SoftTransforms, w: &[f64]) -> Result<DenseMatrix> {
    if w.len() != s_soft.k {
        return Err(invalid(format!(
            "kernel has {} entries but S has {} slices",
            w.len(),
            s_soft.k
        )));
    }
    let g = &s_soft.graph;
    let mut m = Array2::zeros((g.n(), g.n()));
    for (k, &wk) in w.iter().enumerate() {
        for i in 0..g.n() {
            for (&j, &p) in g.neighbors(i).iter().zip(s_soft.row(k, i)) {
                m[[i, j]] += wk * p;
            }
        }
    }
    Ok(m)
}

/// Graph convolution `s^T (S x_3 w)`, returned as a vector.
pub fn convolve(signal: &[f64], s_soft: &SoftTransforms, w: &[f64]) -> Result<Vec<f64>> {
    let n = s_soft.n();
    if signal.len() != n {
        return Err(invalid(format!(
            "signal has length {}, graph has {n} vertices",
            signal.len()
        )));
    }
    let m = mode3_product(s_soft, w)?;
    let mut out = vec![0.0; n];
    for (i, &si) in signal.iter().enumerate() {
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += si * mij;
        }
    }
    Ok(out)
}

/// `T_k^T x`: each vertex's channel vector is added onto its target. Vertices
/// with no preimage receive zeros.
pub fn apply_hard(t_hard: &HardTransforms, k: usize, signal: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if k >= t_hard.k {
        return Err(invalid(format!("slice {k} out of range (K = {})", t_hard.k)));
    }
    if signal.nrows() != t_hard.n {
        return Err(invalid(format!(
            "signal has {} rows, transform has {} vertices",
            signal.nrows(),
            t_hard.n
        )));
    }
    let mut out = Array2::zeros(signal.raw_dim());
    for (i, &j) in t_hard.targets[k].iter().enumerate() {
        let mut dst = out.row_mut(j);
        dst += &signal.row(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid_graph, build_ring_graph};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring4_paper_s() -> SoftTransforms {
        // T0 = I, T1: i -> i-1, T2: i -> i+1 on the 4-ring.
        let g = Arc::new(build_ring_graph(4, true).unwrap());
        let hard = HardTransforms::new(
            4,
            vec![vec![0, 1, 2, 3], vec![3, 0, 1, 2], vec![1, 2, 3, 0]],
        )
        .unwrap();
        let logits = EdgeLogits::from_hard(g, &hard, 1.0).unwrap();
        soften(&logits, 1e-3).unwrap()
    }

    #[test]
    fn soften_examples() {
        let g = Arc::new(build_grid_graph(1, 2, false).unwrap());
        // single neighbor each
        let p = EdgeLogits::from_values(Arc::clone(&g), 1, vec![3.0, -7.0]).unwrap();
        for t in [1e-3, 1.0, 1e3] {
            let s = soften(&p, t).unwrap();
            assert_eq!(s.row(0, 0), &[1.0]);
        }
        let g = Arc::new(build_grid_graph(1, 2, true).unwrap());
        let p = EdgeLogits::from_values(Arc::clone(&g), 1, vec![0.4, 0.4, 1.0, 0.0]).unwrap();
        let s = soften(&p, 2.5).unwrap();
        assert_abs_diff_eq!(s.row(0, 0)[0], 0.5, epsilon = 1e-15);
        let s = soften(&p, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(s.row(0, 1)[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.row(0, 1)[1], 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.row(0, 1)[0], 0.7311, epsilon = 1e-4);
        assert!(soften(&p, 0.0).is_err());
        assert!(soften(&p, -1.0).is_err());
    }

    #[test]
    fn soften_rejects_non_finite() {
        let g = Arc::new(build_ring_graph(3, false).unwrap());
        let mut p = EdgeLogits::zeros(g, 1);
        p.values_mut()[2] = f64::NAN;
        assert!(matches!(soften(&p, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn soften_rows_are_distributions_on_support() {
        let g = Arc::new(build_grid_graph(4, 5, true).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = EdgeLogits::random_uniform(Arc::clone(&g), 4, 5.0, &mut rng);
        for t in [1e-3, 1.0, 1e3] {
            let s = soften(&p, t).unwrap();
            for k in 0..4 {
                let dense = s.dense_slice(k);
                for i in 0..g.n() {
                    let row = dense.row(i);
                    assert!(row.iter().all(|&v| v >= 0.0));
                    assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-9);
                    for j in 0..g.n() {
                        if !g.contains_edge(i, j) {
                            assert_eq!(row[j], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn small_temperature_saturates() {
        let g = Arc::new(build_ring_graph(5, true).unwrap());
        let mut p = EdgeLogits::zeros(Arc::clone(&g), 1);
        for i in 0..5 {
            p.row_mut(0, i).copy_from_slice(&[0.0, 1.5, -2.0]);
        }
        let s = soften(&p, 1e-4).unwrap();
        for i in 0..5 {
            let max = s.row(0, i).iter().cloned().fold(0.0, f64::max);
            assert!(max >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn harden_examples() {
        // vertex 0 with neighbors {2, 5, 7}
        let g = Arc::new(Graph::from_edges(8, [(0, 2), (0, 5), (0, 7)], false).unwrap());
        let mut p = EdgeLogits::zeros(Arc::clone(&g), 1);
        p.row_mut(0, 0).copy_from_slice(&[0.1, 2.0, -1.0]);
        assert_eq!(harden(&p).target(0, 0), 5);
        assert_eq!(harden(&p).target(0, 1), 1);

        let g = Arc::new(Graph::from_edges(4, [(0, 3)], true).unwrap());
        let p = EdgeLogits::zeros(g, 1);
        assert_eq!(harden(&p).target(0, 0), 0);
    }

    #[test]
    fn harden_matches_soft_argmax() {
        let g = Arc::new(build_grid_graph(6, 6, true).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = EdgeLogits::random_uniform(Arc::clone(&g), 3, 1.0, &mut rng);
        let hard = harden(&p);
        assert!(hard.is_edge_constrained(&g));
        for t in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let s = soften(&p, t).unwrap();
            for k in 0..3 {
                for i in 0..g.n() {
                    let row = s.row(k, i);
                    let arg = row
                        .iter()
                        .enumerate()
                        .fold(0, |b, (m, &v)| if v > row[b] { m } else { b });
                    assert_eq!(g.neighbors(i)[arg], hard.target(k, i));
                }
            }
        }
    }

    #[test]
    fn mode3_product_reproduces_circulant() {
        let s = ring4_paper_s();
        let m = mode3_product(&s, &[1.0, 2.0, 3.0]).unwrap();
        let expected = array![
            [1.0, 3.0, 0.0, 2.0],
            [2.0, 1.0, 3.0, 0.0],
            [0.0, 2.0, 1.0, 3.0],
            [3.0, 0.0, 2.0, 1.0]
        ];
        for (a, b) in m.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let z = mode3_product(&s, &[0.0; 3]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(mode3_product(&s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn convolve_moves_dirac_along_row_convention() {
        let s = ring4_paper_s();
        // e_0^T T1 picks row 0 of T1, whose single one sits in column 3.
        let out = convolve(&[1.0, 0.0, 0.0, 0.0], &s, &[0.0, 1.0, 0.0]).unwrap();
        for (a, b) in out.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let out = convolve(&[1.0, 0.0, 0.0, 0.0], &s, &[0.0, 0.0, 1.0]).unwrap();
        for (a, b) in out.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let x = [0.3, -1.0, 2.0, 0.5];
        let id = convolve(&x, &s, &[1.0, 0.0, 0.0]).unwrap();
        for (a, b) in id.iter().zip(x) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(convolve(&[1.0, 2.0], &s, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn convolve_is_linear() {
        let g = Arc::new(build_grid_graph(3, 4, true).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = EdgeLogits::random_uniform(Arc::clone(&g), 3, 1.0, &mut rng);
        let s = soften(&p, 0.7).unwrap();
        let w = [0.5, -1.2, 2.0];
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = convolve(&mix, &s, &w).unwrap();
        let cx = convolve(&x, &s, &w).unwrap();
        let cy = convolve(&y, &s, &w).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(lhs[i], a * cx[i] + b * cy[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::new(10.0, 0.01, 100).unwrap();
        assert_eq!(temperature_at(0, &s).unwrap(), 10.0);
        assert_eq!(temperature_at(100, &s).unwrap(), 0.01);
        assert_abs_diff_eq!(
            temperature_at(50, &s).unwrap(),
            10.0 * 0.001f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(temperature_at(50, &s).unwrap(), 0.31623, epsilon = 1e-5);
        assert!(temperature_at(101, &s).is_err());
        let c = Schedule::new(0.3, 0.3, 7).unwrap();
        for step in 0..=7 {
            assert_abs_diff_eq!(temperature_at(step, &c).unwrap(), 0.3, epsilon = 1e-15);
        }
        assert!(Schedule::new(0.0, 1.0, 3).is_err());
        assert!(Schedule::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn apply_hard_examples() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let id = HardTransforms::new(4, vec![vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(apply_hard(&id, 0, x.view()).unwrap(), x);

        // i -> i-1 on the 4-ring: a Dirac at 0 lands on 3
        let t1 = HardTransforms::new(4, vec![vec![3, 0, 1, 2]]).unwrap();
        let d = array![[1.0], [0.0], [0.0], [0.0]];
        assert_eq!(apply_hard(&t1, 0, d.view()).unwrap(), array![[0.0], [0.0], [0.0], [1.0]]);

        let merge = HardTransforms::new(4, vec![vec![0, 3, 3, 3]]).unwrap();
        let ones = array![[0.0], [1.0], [1.0], [0.0]];
        let out = apply_hard(&merge, 0, ones.view()).unwrap();
        assert_eq!(out[[3, 0]], 2.0);
        assert!(apply_hard(&merge, 1, ones.view()).is_err());
    }

    #[test]
    fn hard_json_format() {
        let h = HardTransforms::new(3, vec![vec![0, 1, 2], vec![1, 2, 0]]).unwrap();
        let text = h.to_json().unwrap();
        assert_eq!(text, r#"{"n":3,"k":2,"targets":[[0,1,2],[1,2,0]]}"#);
        assert_eq!(HardTransforms::from_json(&text).unwrap(), h);
        assert!(HardTransforms::from_json(r#"{"n":3,"k":1,"targets":[[0,1,5]]}"#).is_err());
        assert!(HardTransforms::from_json(r#"{"n":3,"k":2,"targets":[[0,1,2]]}"#).is_err());
    }
}
