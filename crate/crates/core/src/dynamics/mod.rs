//! Control-affine wrench models `y = A(o) + B(o) u`, the flaperon symmetry
//! prior, the unstructured regression baseline, and their training loop.

mod dataset;
mod model;
mod symmetry;
mod train;
mod types;

pub use dataset::{block_split, read_dynamics_csv, write_dynamics_csv, DynamicsSample, DYNAMICS_HEADER};
pub use model::{
    AffineGradients, AffineModel, FeatureSet, ModelDocument, OutputScaling, Standardizer, TrainedModel,
    UnstructuredModel, WrenchModel,
};
pub use symmetry::{symmetry_loss, symmetry_loss_grad, symmetry_residual_norm, SymmetryConfig};
pub use train::{
    channel_rmse, eval_rmse, mean_symmetry_residual, train_dynamics, training_loss, training_loss_grad,
    unstructured_loss, unstructured_loss_grad, DynamicsTrainConfig, DynamicsTrainReport, ModelStructure, Variant,
    MIN_TRAINING_SAMPLES,
};
pub use types::*;
