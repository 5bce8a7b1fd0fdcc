use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{InterpreterForward, InterpreterModel};
use crate::classifier::{ClassifierModel, ClassifierOutput};
use crate::dsp::{analyze, inv, AudioSignal, LogMagSpectrogram, Phase};
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::nmf::{soft_mask_components, soft_mask_sum};
use crate::numerics::Matrix;

/// Denominator floor for soft masks.
pub const MASK_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretConfig {
    pub tau: f64,
    pub emit_per_component: bool,
    /// Explain this class instead of the classifier's top prediction.
    pub class: Option<usize>,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self { tau: 0.1, emit_per_component: false, class: None }
    }
}

impl InterpretConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

/// Normalised contribution of every component to one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceVector {
    pub r: Vec<f64>,
    pub class: usize,
    pub sample_id: String,
    /// All contributions were zero, so `r` is all zeros.
    pub degenerate: bool,
}

impl RelevanceVector {
    /// `{k : r_k > τ}` in ascending order.
    pub fn select(&self, tau: f64) -> Vec<usize> {
        self.r.iter().enumerate().filter(|(_, v)| **v > tau).map(|(k, _)| k).collect()
    }
}

/// `r_k = z_k θ_k / max_l |z_l θ_l|`.
pub fn relevance(fwd: &InterpreterForward, theta_row: &[f64], class: usize) -> RelevanceVector {
    let contrib: Vec<f64> = fwd.z.iter().zip(theta_row).map(|(z, t)| z * t).collect();
    let scale = contrib.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degenerate = scale == 0.0;
    RelevanceVector {
        r: if degenerate { vec![0.0; contrib.len()] } else { contrib.iter().map(|v| v / scale).collect() },
        class,
        sample_id: String::new(),
        degenerate,
    }
}

/// Shared per-sample state: spectrogram, phase, classifier and interpreter passes.
#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub x: LogMagSpectrogram,
    pub phase: Phase,
    pub classifier: ClassifierOutput,
    pub forward: InterpreterForward,
    pub class: usize,
    pub relevance: RelevanceVector,
    signal_len: usize,
    sample_rate: u32,
}

pub fn analyze_sample(
    signal: &AudioSignal,
    id: &str,
    model: &InterpreterModel,
    classifier: &ClassifierModel,
    class: Option<usize>,
) -> Result<SampleAnalysis> {
    if model.dictionary().n_bins() != classifier.stft_config().n_bins() {
        return Err(Error::Config("dictionary and classifier front end disagree on frequency bins".into()));
    }
    let (x, phase) = analyze(signal, classifier.stft_config())?;
    let out = classifier.classify(signal)?;
    let input = model.psi_input(&out.taps, x.n_frames())?;
    let forward = model.forward_input(&input)?;
    let class = class.unwrap_or_else(|| argmax(&out.probs));
    let mut rel = relevance(&forward, &model.theta_row(class)?, class);
    rel.sample_id = id.to_string();
    Ok(SampleAnalysis {
        x,
        phase,
        classifier: out,
        forward,
        class,
        relevance: rel,
        signal_len: signal.len(),
        sample_rate: signal.sample_rate,
    })
}

impl SampleAnalysis {
    /// `Σ_{k∈ks} X_k` at interpreter resolution.
    pub fn masked_sum(&self, model: &InterpreterModel, ks: &[usize]) -> Result<Matrix> {
        soft_mask_sum(self.x.values(), model.dictionary(), &self.forward.h_i, ks, MASK_EPSILON)
    }

    pub fn resynthesize(&self, x: &Matrix, classifier: &ClassifierModel) -> Result<AudioSignal> {
        inv(x, &self.phase, classifier.stft_config(), self.signal_len, self.sample_rate)
    }

    /// `f(x)_c − f(x₂)_c` after removing `ks` from the spectrogram.
    pub fn removal(&self, model: &InterpreterModel, classifier: &ClassifierModel, ks: &[usize]) -> Result<(f64, AudioSignal)> {
        let removed = self.masked_sum(model, ks)?;
        let x2 = self.x.values().zip_map(&removed, |a, b| (a - b).max(0.0))?;
        let x2_sig = self.resynthesize(&x2, classifier)?;
        let after = classifier.classify(&x2_sig)?;
        Ok((self.classifier.probs[self.class] - after.probs[self.class], x2_sig))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationResult {
    pub selected: Vec<usize>,
    pub relevance: RelevanceVector,
    /// Nothing passed the threshold; `x_int` is silence.
    pub empty_selection: bool,
    pub x_int: AudioSignal,
    pub x_int_spec: LogMagSpectrogram,
    pub per_component: BTreeMap<usize, AudioSignal>,
    pub probs: Vec<f64>,
    pub interpreter_probs: Vec<f64>,
}

pub fn generate_interpretation(
    signal: &AudioSignal,
    model: &InterpreterModel,
    classifier: &ClassifierModel,
    cfg: &InterpretConfig,
) -> Result<InterpretationResult> {
    generate_interpretation_for(signal, "", model, classifier, cfg)
}

/// [`generate_interpretation`] with a sample id carried into the relevance record.
pub fn generate_interpretation_for(
    signal: &AudioSignal,
    id: &str,
    model: &InterpreterModel,
    classifier: &ClassifierModel,
    cfg: &InterpretConfig,
) -> Result<InterpretationResult> {
    cfg.validate()?;
    let a = analyze_sample(signal, id, model, classifier, cfg.class)?;
    let selected = a.relevance.select(cfg.tau);
    let x_int = a.masked_sum(model, &selected)?;
    let x_int_sig = a.resynthesize(&x_int, classifier)?;
    let mut per_component = BTreeMap::new();
    if cfg.emit_per_component {
        for (k, xk) in soft_mask_components(a.x.values(), model.dictionary(), &a.forward.h_i, &selected, MASK_EPSILON)? {
            per_component.insert(k, a.resynthesize(&xk, classifier)?);
        }
    }
    Ok(InterpretationResult {
        empty_selection: selected.is_empty(),
        selected,
        relevance: a.relevance,
        x_int: x_int_sig,
        x_int_spec: LogMagSpectrogram::clamped(x_int)?,
        per_component,
        probs: a.classifier.probs,
        interpreter_probs: a.forward.probs,
    })
}

/// `FF_x` for removing the selected components, and the remaining audio.
pub fn faithfulness_removal(
    signal: &AudioSignal,
    model: &InterpreterModel,
    classifier: &ClassifierModel,
    cfg: &InterpretConfig,
) -> Result<(f64, AudioSignal)> {
    cfg.validate()?;
    let a = analyze_sample(signal, "", model, classifier, cfg.class)?;
    a.removal(model, classifier, &a.relevance.select(cfg.tau))
}
