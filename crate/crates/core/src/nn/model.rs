//! The classifier: stacked GSLs sharing one `S`, global average pooling (or a
//! per-vertex head), a fully-connected layer and a softmax.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{
    backward_batch, ensure_finite, forward_batch, pool_batch, Activation, GsLayerParams, LayerCache,
};
use crate::error::{invalid, Error, Result};
use crate::transform::{soften, EdgeLogits, SoftTransforms};

/// Probabilities below this are clamped before taking the log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One label per signal; vertices are averaged away before the head.
    Signal,
    /// One label per vertex of a single signal; no pooling.
    Vertex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<GsLayerParams>,
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
    pub mode: Mode,
}

impl Model {
    /// Fan-in scaled uniform weights, zero biases. `widths` lists the output
    /// channels of each GSL.
    pub fn new<R: Rng + ?Sized>(
        mode: Mode,
        k: usize,
        in_channels: usize,
        widths: &[usize],
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || in_channels == 0 || k == 0 {
            return Err(invalid("model needs at least one GSL and positive sizes"));
        }
        if num_classes < 2 {
            return Err(invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut c_in = in_channels;
        for &w in widths {
            layers.push(GsLayerParams::init_uniform(k, c_in, w, rng));
            c_in = w;
        }
        let bound = 1.0 / (c_in as f64).sqrt();
        let fc_weight = Array2::from_shape_fn((c_in, num_classes), |_| rng.random_range(-bound..=bound));
        Ok(Self {
            layers,
            fc_weight,
            fc_bias: Array1::zeros(num_classes),
            mode,
        })
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(mode: Mode, k: usize, in_channels: usize, widths: &[usize], num_classes: usize) -> Self {
        let mut layers = Vec::new();
        let mut c_in = in_channels;
        for &w in widths {
            layers.push(GsLayerParams::zeros(k, c_in, w));
            c_in = w;
        }
        Self {
            layers,
            fc_weight: Array2::zeros((c_in, num_classes)),
            fc_bias: Array1::zeros(num_classes),
            mode,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.fc_bias.len()
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].c_in()
    }

    /// ReLU on hidden GSLs, identity on the last one.
    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("model has no GSL"));
        }
        if self.num_classes() < 2 {
            return Err(invalid("model needs at least 2 classes"));
        }
        let k = self.layers[0].k();
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].c_out() != pair[1].c_in() {
                return Err(invalid(format!("channel mismatch between GSL {l} and {}", l + 1)));
            }
        }
        if self.layers.iter().any(|l| l.k() != k) {
            return Err(invalid("all GSLs must use the same number of slices"));
        }
        let last = self.layers.last().expect("non-empty").c_out();
        if self.fc_weight.dim() != (last, self.num_classes()) {
            return Err(invalid("fully-connected weight has the wrong shape"));
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order: per GSL (weight, bias), then FC
    /// weight and FC bias.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.fc_weight.as_slice_mut().expect("standard layout"));
        out.push(self.fc_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out.push(self.fc_weight.as_slice().expect("standard layout"));
        out.push(self.fc_bias.as_slice().expect("standard layout"));
        out
    }

    fn check_input(&self, x: ArrayView2<'_, f64>, batch: usize, n: usize) -> Result<()> {
        if x.ncols() != self.in_channels() {
            return Err(invalid(format!(
                "input has {} channels, model expects {}",
                x.ncols(),
                self.in_channels()
            )));
        }
        if x.nrows() != batch * n {
            return Err(invalid(format!("input has {} rows, expected {}", x.nrows(), batch * n)));
        }
        if self.mode == Mode::Vertex && batch != 1 {
            return Err(invalid("vertex mode processes exactly one graph signal"));
        }
        Ok(())
    }

    fn forward_cached(
        &self,
        x: ArrayView2<'_, f64>,
        batch: usize,
        s: &SoftTransforms,
    ) -> Result<ForwardPass> {
        self.check_input(x, batch, s.n())?;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { acts[l - 1].view() };
            let (out, cache) = forward_batch(input, batch, s, layer, self.activation(l))?;
            ensure_finite(&out, || format!("GSL {l} output"))?;
            acts.push(out);
            caches.push(cache);
        }
        let last = acts.last().expect("non-empty");
        let features = match self.mode {
            Mode::Signal => pool_batch(last, batch, s.n()),
            Mode::Vertex => last.clone(),
        };
        let mut logits = features.dot(&self.fc_weight);
        logits += &self.fc_bias;
        ensure_finite(&logits, || "fully-connected output".to_string())?;
        let probs = softmax_rows(&logits);
        Ok(ForwardPass {
            acts,
            caches,
            features,
            probs,
        })
    }

    /// Class probabilities: `B x classes` in signal mode, `N x classes` in
    /// vertex mode.
    pub fn predict(&self, x: ArrayView2<'_, f64>, batch: usize, s: &SoftTransforms) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x, batch, s)?.probs)
    }

    /// Loss and accuracy of a batch without gradients.
    pub fn evaluate_batch(&self, batch: &Batch<'_>, s: &SoftTransforms) -> Result<BatchStats> {
        let pass = self.forward_cached(batch.x, batch.samples, s)?;
        let (stats, _) = batch_loss(&pass.probs, &batch.targets, self.num_classes())?;
        Ok(stats)
    }
}

struct ForwardPass {
    acts: Vec<Array2<f64>>,
    caches: Vec<LayerCache>,
    features: Array2<f64>,
    probs: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Labels attached to a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One class per stacked signal.
    Signal(Vec<usize>),
    /// Labeled vertices of the single signal and their classes.
    Vertex { vertices: Vec<usize>, labels: Vec<usize> },
}

/// A mini-batch: `samples` signals stacked row-wise in `x`.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub samples: usize,
    pub targets: Targets,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean cross-entropy over the labeled items.
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weight: ndarray::Array3<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
    /// Gradient w.r.t. the raw `S` logits, laid out like [`EdgeLogits::values`].
    pub logits: Vec<f64>,
    /// Gradient w.r.t. the pre-softmax head outputs (rows as in the probabilities).
    pub head: Array2<f64>,
}

impl Gradients {
    /// Same order as [`Model::param_slices_mut`], followed by the `S` logits.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 3);
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out.push(self.fc_weight.as_slice().expect("standard layout"));
        out.push(self.fc_bias.as_slice().expect("standard layout"));
        out.push(&self.logits);
        out
    }
}

/// `-ln(probs[y])`, with the probability clamped at [`PROB_EPS`].
pub fn cross_entropy(probs: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
    let p = *probs
        .get(y)
        .ok_or_else(|| invalid(format!("label {y} out of range for {} classes", probs.len())))?;
    Ok(-(p.max(PROB_EPS)).ln())
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > row[b] { i } else { b })
}

/// Mean loss over labeled rows and the gradient w.r.t. head logits.
fn batch_loss(probs: &Array2<f64>, targets: &Targets, classes: usize) -> Result<(BatchStats, Array2<f64>)> {
    let pairs: Vec<(usize, usize)> = match targets {
        Targets::Signal(labels) => {
            if labels.len() != probs.nrows() {
                return Err(invalid(format!(
                    "{} labels for {} signals",
                    labels.len(),
                    probs.nrows()
                )));
            }
            labels.iter().copied().enumerate().collect()
        }
        Targets::Vertex { vertices, labels } => {
            if vertices.len() != labels.len() {
                return Err(invalid("vertex and label lists differ in length"));
            }
            if let Some(&v) = vertices.iter().find(|&&v| v >= probs.nrows()) {
                return Err(invalid(format!("vertex {v} out of range")));
            }
            vertices.iter().copied().zip(labels.iter().copied()).collect()
        }
    };
    if pairs.is_empty() {
        return Err(invalid("batch has no labeled items"));
    }
    let count = pairs.len();
    let scale = 1.0 / count as f64;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, y) in pairs {
        if y >= classes {
            return Err(invalid(format!("label {y} out of range for {classes} classes")));
        }
        let p = probs.row(row);
        loss += cross_entropy(p, y)?;
        if argmax(p) == y {
            correct += 1;
        }
        let mut g = grad.row_mut(row);
        g.scaled_add(scale, &p);
        g[y] -= scale;
    }
    Ok((
        BatchStats {
            loss: loss * scale,
            correct,
            count,
        },
        grad,
    ))
}

/// Class probabilities for one `N x C` signal with `S = softmax(logits / t)`.
/// Signal mode returns a single row.
pub fn model_forward(x: ArrayView2<'_, f64>, model: &Model, params: &EdgeLogits, t: f64) -> Result<Array2<f64>> {
    let s = soften(params, t)?;
    model.predict(x, 1, &s)
}

/// Loss statistics and exact gradients of the mean batch cross-entropy with
/// respect to every GSL, the head, and the `S` logits (through the
/// temperature softmax).
pub fn backward(batch: &Batch<'_>, model: &Model, params: &EdgeLogits, t: f64) -> Result<(BatchStats, Gradients)> {
    let s = soften(params, t)?;
    backward_with(batch, model, params, &s)
}

pub(crate) fn backward_with(
    batch: &Batch<'_>,
    model: &Model,
    params: &EdgeLogits,
    s: &SoftTransforms,
) -> Result<(BatchStats, Gradients)> {
    model.validate()?;
    let pass = model.forward_cached(batch.x, batch.samples, s)?;
    let (stats, head) = batch_loss(&pass.probs, &batch.targets, model.num_classes())?;
    if !stats.loss.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }

    let fc_weight = pass.features.t().dot(&head);
    let fc_bias = head.sum_axis(Axis(0));
    let grad_features = head.dot(&model.fc_weight.t());
    let n = s.n();
    let mut grad_out = match model.mode {
        Mode::Signal => {
            // d(mean over vertices)/d(vertex value) = 1 / N
            let c = grad_features.ncols();
            let mut g = Array2::zeros((batch.samples * n, c));
            for b in 0..batch.samples {
                let row = grad_features.row(b).mapv(|v| v / n as f64);
                for i in 0..n {
                    g.row_mut(b * n + i).assign(&row);
                }
            }
            g
        }
        Mode::Vertex => grad_features,
    };

    let mut grad_soft = vec![0.0; s.values().len()];
    let mut layers = Vec::with_capacity(model.layers.len());
    for l in (0..model.layers.len()).rev() {
        let input = if l == 0 { batch.x } else { pass.acts[l - 1].view() };
        let g = backward_batch(
            input,
            batch.samples,
            s,
            &model.layers[l],
            model.activation(l),
            &pass.caches[l],
            &grad_out,
            &mut grad_soft,
            l > 0,
        );
        if g.weight.iter().chain(g.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in GSL {l}")));
        }
        layers.push(LayerGradients {
            weight: g.weight,
            bias: g.bias,
        });
        if let Some(dx) = g.input {
            grad_out = dx;
        }
    }
    layers.reverse();

    let logits = soft_to_logit_grad(params, s, &grad_soft);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient for the S logits".into()));
    }
    Ok((
        stats,
        Gradients {
            layers,
            fc_weight,
            fc_bias,
            logits,
            head,
        },
    ))
}

/// Chain rule through the row softmax of `logits / t`:
/// `dL/dz_m = p_m (g_m - sum_j p_j g_j) / t`.
fn soft_to_logit_grad(params: &EdgeLogits, s: &SoftTransforms, grad_soft: &[f64]) -> Vec<f64> {
    let g = params.graph();
    let nnz = g.nnz();
    let offsets = g.offsets();
    let inv_t = 1.0 / s.temperature();
    let p = s.values();
    let mut out = vec![0.0; grad_soft.len()];
    for k in 0..params.k() {
        for i in 0..g.n() {
            let (a, b) = (k * nnz + offsets[i], k * nnz + offsets[i + 1]);
            let dot: f64 = p[a..b].iter().zip(&grad_soft[a..b]).map(|(x, y)| x * y).sum();
            for m in a..b {
                out[m] = p[m] * (grad_soft[m] - dot) * inv_t;
            }
        }
    }
    out
}
