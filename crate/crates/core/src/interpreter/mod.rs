//! Interpreter: `Ψ` maps classifier taps to non-negative dictionary
//! activations, `Θ` pools them into class scores; relevances select the
//! components that are rendered back to audio.

mod interpret;
mod loss;
mod model;
mod train;

pub use interpret::{
    analyze_sample, faithfulness_removal, generate_interpretation, generate_interpretation_for, relevance,
    InterpretConfig, InterpretationResult, RelevanceVector, SampleAnalysis, MASK_EPSILON,
};
pub use loss::{loss_and_gradients, loss_fidelity, loss_nmf, total_loss, InterpreterExample, LossBreakdown, LossWeights};
pub use model::{InterpreterArch, InterpreterForward, InterpreterModel, Pooling};
pub use train::{
    example_fidelity, prepare_examples, train_interpreter, InterpreterEpoch, InterpreterTrace, InterpreterTrainConfig,
};

#[cfg(test)]
mod tests;
