//! JSON checkpoints: graph fingerprint, every parameter tensor, optimizer
//! state, step counter and schedule.

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::layer::GsLayerParams;
use super::model::{Mode, Model};
use super::optim::Optimizer;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::transform::{EdgeLogits, Schedule};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    k: usize,
    c_in: usize,
    c_out: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub graph_fingerprint: String,
    pub mode: Mode,
    pub step: usize,
    pub schedule: Schedule,
    layers: Vec<LayerRecord>,
    fc_rows: usize,
    fc_cols: usize,
    fc_weight: Vec<f64>,
    fc_bias: Vec<f64>,
    k: usize,
    logits: Vec<f64>,
    pub optimizer: Optimizer,
}

impl Checkpoint {
    pub fn new(
        graph: &Graph,
        model: &Model,
        logits: &EdgeLogits,
        optimizer: &Optimizer,
        step: usize,
        schedule: Schedule,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            graph_fingerprint: graph.fingerprint(),
            mode: model.mode,
            step,
            schedule,
            layers: model
                .layers
                .iter()
                .map(|l| LayerRecord {
                    k: l.k(),
                    c_in: l.c_in(),
                    c_out: l.c_out(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            fc_rows: model.fc_weight.nrows(),
            fc_cols: model.fc_weight.ncols(),
            fc_weight: model.fc_weight.iter().copied().collect(),
            fc_bias: model.fc_bias.to_vec(),
            k: logits.k(),
            logits: logits.values().to_vec(),
            optimizer: optimizer.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(invalid(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    /// Rebuilds model and logits; fails if `graph` is not the graph the
    /// checkpoint was trained on.
    pub fn restore(&self, graph: Arc<Graph>) -> Result<(Model, EdgeLogits)> {
        if graph.fingerprint() != self.graph_fingerprint {
            return Err(invalid("checkpoint was written for a different graph"));
        }
        let shape_err = |what: &str| invalid(format!("checkpoint {what} has inconsistent shape"));
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(GsLayerParams {
                    weight: Array3::from_shape_vec((l.k, l.c_in, l.c_out), l.weight.clone())
                        .map_err(|_| shape_err("layer weight"))?,
                    bias: Array1::from(l.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Model {
            layers,
            fc_weight: Array2::from_shape_vec((self.fc_rows, self.fc_cols), self.fc_weight.clone())
                .map_err(|_| shape_err("fully-connected weight"))?,
            fc_bias: Array1::from(self.fc_bias.clone()),
            mode: self.mode,
        };
        model.validate()?;
        let logits = EdgeLogits::from_values(graph, self.k, self.logits.clone())?;
        Ok((model, logits))
    }
}
