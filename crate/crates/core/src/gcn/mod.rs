//! Two-layer graph convolution: training, the activation-free surrogate and
//! the normalized adjacency it runs on.

mod checkpoint;
mod model;
mod normalized;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    argmax_rows, classification_margin, loss_and_gradients, margins, mean_rows,
    perturb_feature_experimental, predict_full, predict_surrogate, row_margin, softmax,
    softmax_rows, train_gcn, GcnModel, TrainConfig,
};
pub use normalized::{
    build_normalized, incremental_a2_update, max_a2_deviation, NormalizedAdjacency,
    SparseSymmetric,
};
