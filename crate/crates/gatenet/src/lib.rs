//! Factored gated networks.
//!
//! This crate implements gated autoencoders — bilinear models in which two
//! inputs interact multiplicatively through a factored 3-way tensor — along
//! with the dense-tensor oracle they approximate, analytic gradients for a
//! family of reconstruction losses, denoising-style training, architecture
//! variants (class-conditional gating, analogy-making, a clustering
//! front-end), and a multiplicative recurrent network trained by
//! backpropagation through time.
//!
//! Everything is plain `f64` on `Vec`-backed matrices: the point of the
//! crate is exactness and testability, not speed. Every gradient is checked
//! against central finite differences, and every factored prediction is
//! checked against the brute-force dense tensor.

pub mod activations;
#[cfg(doctest)]
mod book_doctests;
mod bytes;
pub mod config;
pub mod data_io;
pub mod error;
pub mod gated;
pub mod gradcheck;
pub mod model_io;
pub mod mrnn;
pub mod numerics;
pub mod training;
pub mod variants;

pub use activations::Activation;
pub use config::ConfigMap;
pub use data_io::Dataset;
pub use error::{Error, Result};
pub use model_io::{
    load_any, load_clustering, load_gated, load_mrnn, save_clustering, save_gated, save_mrnn,
    ModelFile,
};
pub use gated::{dense_param_count, DenseTensor, GatedModel, LayerId, ParamCount, TyingMode};
pub use gradcheck::{check_gated_grid, run_default_grid, GridReport};
pub use mrnn::{
    dataset_to_sequences, mrnn_backward, mrnn_forward, mrnn_step, mrnn_train,
    next_symbol_accuracy, MRnnGrads, MRnnLoss, MRnnModel, Sequence,
};
pub use numerics::{Matrix, Rng, Vector};
pub use training::{
    backward, corrupt, loss, sgd_step, train, CorruptionKind, CorruptionSpec, CorruptionTarget,
    GatedGrads, LossMode, TrainConfig,
};
pub use variants::{
    analogy, class_conditional_forward, cluster_purity, clustering_backward, clustering_forward,
    clustering_train, ClusteringGrads, ClusteringModel,
};
