//! Block-structured CNN on log-mel input with hidden-layer taps.

mod model;
mod train;

pub use model::{
    head_activation, head_activation_backward, ClassifierArch, ClassifierModel, ClassifierOutput, POOL,
};
pub use train::{
    classification_loss, evaluate_classifier, score_predictions, train_classifier, ClassifierEval,
    ClassifierReport, ClassifierTrainConfig, EpochStats,
};

#[cfg(test)]
mod tests;
