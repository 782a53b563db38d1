//! Relational graph-guided representation learning: KNN adjacency, graph
//! convolution smoothing, prototype alignment, the three losses, training
//! and inference.

mod adjacency;
pub mod checkpoint;
mod infer;
pub mod losses;
mod model;
mod prototypes;
mod train;

pub use adjacency::knn_adjacency;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use infer::{infer, infer_one, pseudo_label, rank_classes, InferOptions, InferenceProtocol, Predictions};
pub use losses::{ce_loss, interclass_loss, nega_loss, DispersionSign, LossConfig};
pub use model::{graphical_smoothing, smooth, stack_anchor, ParamVars, SmoothingModel};
pub use prototypes::{class_align, cluster_align, compute_prototypes, AlignCoefficients, PrototypeBank};
pub use train::{
    aligned_representation, anchor_forward, batch_objective, forward_rows, train_step, AnchorNodes, Components, LossBreakdown,
    Objective, TrainConfig,
};
