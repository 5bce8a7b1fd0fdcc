use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ranking::{auprc, max_micro_f1, topk_fidelity};
use crate::error::{shape_err, Error, Result};

/// Tag describing how PR curves are built, carried in every report.
pub const PR_CONVENTION: &str = "descending-sweep/grouped-ties/max-precision-envelope";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub top_k: BTreeMap<usize, f64>,
    pub macro_auprc: Option<f64>,
    pub micro_auprc: Option<f64>,
    pub max_micro_f1: Option<f64>,
    pub n_samples: usize,
    /// Classes with no pseudo-positive sample, left out of the macro average.
    pub excluded_classes: Vec<usize>,
    pub binarize_threshold: Option<f64>,
    pub convention: String,
}

impl FidelityReport {
    pub fn multiclass(f_probs: &[Vec<f64>], interp_probs: &[Vec<f64>], ks: &[usize]) -> Result<Self> {
        Ok(Self {
            top_k: topk_fidelity(f_probs, interp_probs, ks)?,
            macro_auprc: None,
            micro_auprc: None,
            max_micro_f1: None,
            n_samples: f_probs.len(),
            excluded_classes: vec![],
            binarize_threshold: None,
            convention: PR_CONVENTION.into(),
        })
    }

    /// Aligned-column text rendering.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<16}{:>10}\n", "samples", self.n_samples);
        for (k, v) in &self.top_k {
            out += &format!("{:<16}{:>10.4}\n", format!("top-{k}"), v);
        }
        for (name, v) in [
            ("macro-auprc", self.macro_auprc),
            ("micro-auprc", self.micro_auprc),
            ("max-micro-f1", self.max_micro_f1),
        ] {
            if let Some(v) = v {
                out += &format!("{name:<16}{v:>10.4}\n");
            }
        }
        if !self.excluded_classes.is_empty() {
            out += &format!("{:<16}{:>10}\n", "excluded", format!("{:?}", self.excluded_classes));
        }
        out
    }
}

/// Multi-label fidelity against pseudo-labels `1[f ≥ threshold]`.
///
/// Micro scores pool every (sample, class) pair, including pairs of excluded
/// classes.
pub fn multilabel_fidelity(f_probs: &[Vec<f64>], interp_probs: &[Vec<f64>], threshold: f64) -> Result<FidelityReport> {
    if f_probs.len() != interp_probs.len() {
        return Err(shape_err!("{} classifier outputs vs {} interpreter outputs", f_probs.len(), interp_probs.len()));
    }
    let n_classes = f_probs.first().map(Vec::len).ok_or_else(|| Error::EmptyInput("no samples to score".into()))?;
    if f_probs.iter().chain(interp_probs).any(|v| v.len() != n_classes) {
        return Err(shape_err!("inconsistent class counts"));
    }
    let mut per_class = Vec::new();
    let mut excluded = Vec::new();
    for c in 0..n_classes {
        let labels: Vec<bool> = f_probs.iter().map(|f| f[c] >= threshold).collect();
        let scores: Vec<f64> = interp_probs.iter().map(|g| g[c]).collect();
        match auprc(&scores, &labels) {
            Ok(a) => per_class.push(a),
            Err(Error::UndefinedMetric(_)) => excluded.push(c),
            Err(e) => return Err(e),
        }
    }
    let labels: Vec<bool> = f_probs.iter().flatten().map(|&f| f >= threshold).collect();
    let scores: Vec<f64> = interp_probs.iter().flatten().copied().collect();
    let micro = match auprc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FidelityReport {
        top_k: BTreeMap::new(),
        macro_auprc: (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64),
        micro_auprc: micro,
        max_micro_f1: Some(max_micro_f1(&scores, &labels)?),
        n_samples: f_probs.len(),
        excluded_classes: excluded,
        binarize_threshold: Some(threshold),
        convention: PR_CONVENTION.into(),
    })
}

/// Exact median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Rounds to the nearest integer, halves to even.
pub fn round_half_even(x: f64) -> f64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
        r - x.signum()
    } else {
        r
    }
}
