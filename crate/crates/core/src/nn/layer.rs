//! Graph-Signal Layers.
//!
//! A layer maps `x` (rows = vertices, columns = channels) to
//! `sigma(sum_k S_k^T x W_k + b)`. Batches are stacked row-wise: sample `b`
//! occupies rows `b * N .. (b + 1) * N`.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::transform::SoftTransforms;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Filter weights `K x C_in x C_out` and bias `C_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct GsLayerParams {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl GsLayerParams {
    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Self {
        Self {
            weight: Array3::zeros((k, c_in, c_out)),
            bias: Array1::zeros(c_out),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with `fan_in = K * C_in`; zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(k: usize, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((k * c_in) as f64).sqrt();
        let weight = Array3::from_shape_fn((k, c_in, c_out), |_| rng.random_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(c_out),
        }
    }

    pub fn k(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[2]
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug)]
pub(crate) struct LayerCache {
    /// `x W_k` for every slice, each `(B * N) x C_out`.
    projected: Vec<Array2<f64>>,
    /// Pre-activation.
    pre: Array2<f64>,
}

pub(crate) struct LayerGrads {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub input: Option<Array2<f64>>,
}

fn check_dims(x: ArrayView2<'_, f64>, batch: usize, s: &SoftTransforms, layer: &GsLayerParams) -> Result<()> {
    let n = s.n();
    if layer.k() != s.k() {
        return Err(invalid(format!(
            "layer has {} filter taps, S has {} slices",
            layer.k(),
            s.k()
        )));
    }
    if x.nrows() != batch * n {
        return Err(invalid(format!(
            "input has {} rows, expected {batch} x {n}",
            x.nrows()
        )));
    }
    if x.ncols() != layer.c_in() {
        return Err(invalid(format!(
            "input has {} channels, layer expects {}",
            x.ncols(),
            layer.c_in()
        )));
    }
    if layer.bias.len() != layer.c_out() {
        return Err(invalid("bias length does not match output channels"));
    }
    Ok(())
}

pub(crate) fn forward_batch(
    x: ArrayView2<'_, f64>,
    batch: usize,
    s: &SoftTransforms,
    layer: &GsLayerParams,
    act: Activation,
) -> Result<(Array2<f64>, LayerCache)> {
    check_dims(x, batch, s, layer)?;
    let n = s.n();
    let c_out = layer.c_out();
    let graph = s.graph();
    let mut pre = Array2::<f64>::zeros((batch * n, c_out));
    pre += &layer.bias;
    let mut projected = Vec::with_capacity(s.k());
    {
        let pre_buf = pre.as_slice_mut().expect("standard layout");
        for k in 0..s.k() {
            let y = x.dot(&layer.weight.index_axis(Axis(0), k));
            let y = if y.is_standard_layout() { y } else { y.as_standard_layout().into_owned() };
            let ys = y.as_slice().expect("standard layout");
            for b in 0..batch {
                for i in 0..n {
                    let src = &ys[(b * n + i) * c_out..(b * n + i + 1) * c_out];
                    for (&j, &p) in graph.neighbors(i).iter().zip(s.row(k, i)) {
                        if p == 0.0 {
                            continue;
                        }
                        let dst = &mut pre_buf[(b * n + j) * c_out..(b * n + j + 1) * c_out];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += p * v;
                        }
                    }
                }
            }
            projected.push(y);
        }
    }
    let out = pre.mapv(|v| act.apply(v));
    Ok((out, LayerCache { projected, pre }))
}

/// Backpropagates `grad_out` (gradient w.r.t. the layer output) through one
/// layer. Gradients w.r.t. the soft transform entries are accumulated into
/// `grad_soft`, laid out like [`SoftTransforms::values`].
pub(crate) fn backward_batch(
    x: ArrayView2<'_, f64>,
    batch: usize,
    s: &SoftTransforms,
    layer: &GsLayerParams,
    act: Activation,
    cache: &LayerCache,
    grad_out: &Array2<f64>,
    grad_soft: &mut [f64],
    need_input_grad: bool,
) -> LayerGrads {
    let n = s.n();
    let c_out = layer.c_out();
    let graph = s.graph();
    let nnz = graph.nnz();
    let offsets = graph.offsets();

    let mut g = grad_out.clone();
    if act != Activation::Identity {
        ndarray::Zip::from(&mut g)
            .and(&cache.pre)
            .for_each(|gv, &p| *gv *= act.derivative(p));
    }
    let bias = g.sum_axis(Axis(0));
    let gs = g.as_slice().expect("standard layout");

    let mut weight = Array3::zeros(layer.weight.raw_dim());
    let mut input = need_input_grad.then(|| Array2::zeros(x.raw_dim()));
    let mut gy = Array2::<f64>::zeros((batch * n, c_out));
    for k in 0..s.k() {
        gy.fill(0.0);
        let ys = cache.projected[k].as_slice().expect("standard layout");
        let gy_buf = gy.as_slice_mut().expect("standard layout");
        let gsoft = &mut grad_soft[k * nnz..(k + 1) * nnz];
        for b in 0..batch {
            for i in 0..n {
                let yi = &ys[(b * n + i) * c_out..(b * n + i + 1) * c_out];
                let gyi = &mut gy_buf[(b * n + i) * c_out..(b * n + i + 1) * c_out];
                for (m, (&j, &p)) in graph.neighbors(i).iter().zip(s.row(k, i)).enumerate() {
                    let gj = &gs[(b * n + j) * c_out..(b * n + j + 1) * c_out];
                    let mut dot = 0.0;
                    for ((acc, &gv), &yv) in gyi.iter_mut().zip(gj).zip(yi) {
                        *acc += p * gv;
                        dot += yv * gv;
                    }
                    gsoft[offsets[i] + m] += dot;
                }
            }
        }
        weight
            .index_axis_mut(Axis(0), k)
            .assign(&x.t().dot(&gy));
        if let Some(dx) = input.as_mut() {
            *dx += &gy.dot(&layer.weight.index_axis(Axis(0), k).t());
        }
    }
    LayerGrads {
        weight,
        bias,
        input,
    }
}

/// One Graph-Signal Layer applied to a single `N x C_in` signal.
pub fn gsl_forward(
    x: ArrayView2<'_, f64>,
    s_soft: &SoftTransforms,
    layer: &GsLayerParams,
    act: Activation,
) -> Result<Array2<f64>> {
    let (out, _) = forward_batch(x, 1, s_soft, layer, act)?;
    Ok(out)
}

/// Channel-wise mean over vertices.
pub fn global_average_pool(x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    x.mean_axis(Axis(0))
        .ok_or_else(|| invalid("cannot pool a signal with no vertices"))
}

/// Per-sample pooling of a stacked batch: `(B * N) x C -> B x C`.
pub(crate) fn pool_batch(x: &Array2<f64>, batch: usize, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((batch, x.ncols()));
    for b in 0..batch {
        let block = x.slice(s![b * n..(b + 1) * n, ..]);
        out.row_mut(b).assign(&block.mean_axis(Axis(0)).expect("n >= 1"));
    }
    out
}

pub(crate) fn ensure_finite(a: &Array2<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {}", what())))
    }
}
