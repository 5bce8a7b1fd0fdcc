//! Fidelity, faithfulness and ranking metrics.

mod faithfulness;
mod fidelity;
mod ranking;

pub use faithfulness::{
    export_relevances, faithfulness_suite, random_baseline_faithfulness, FaithfulnessEntry, FaithfulnessReport,
};
pub use fidelity::{median, multilabel_fidelity, round_half_even, FidelityReport, PR_CONVENTION};
pub use ranking::{argmax, auprc, f1_thresholds, max_micro_f1, micro_f1, top_k_indices, topk_fidelity};
