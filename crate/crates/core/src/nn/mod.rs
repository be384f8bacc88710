//! Trainable GSL classifier with analytic gradients.

mod checkpoint;
mod layer;
mod model;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use layer::{global_average_pool, gsl_forward, Activation, GsLayerParams};
pub use model::{
    backward, cross_entropy, model_forward, Batch, BatchStats, Gradients, LayerGradients, Mode, Model, Targets,
    PROB_EPS,
};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{evaluate_items, train, TrainConfig, TrainOutput, TrainRecord};
