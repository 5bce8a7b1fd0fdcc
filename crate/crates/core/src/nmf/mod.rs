//! Sparse NMF dictionary learning, activation inference and soft masking.

mod dictionary;
mod mask;
mod sparse;
mod staged;

pub use dictionary::{build_training_matrix, Activations, Dictionary, DictTrainingMatrix};
pub use mask::{soft_mask_components, soft_mask_sum};
pub use sparse::{
    infer_activations, infer_activations_traced, objective, sparse_nmf, sweep_k, NmfRun,
    SparseNmfConfig,
};
pub use staged::{staged_dictionary, staged_dictionary_with_report, StagedConfig, StagedReport};
