use serde::{Deserialize, Serialize};

use super::loss::{loss_and_gradients, total_loss, InterpreterExample, LossBreakdown, LossWeights};
use super::model::{InterpreterArch, InterpreterModel};
use crate::classifier::ClassifierModel;
use crate::dsp::analyze;
use crate::error::{Error, Result};
use crate::metrics::{multilabel_fidelity, topk_fidelity};
use crate::net::{adam_step, AdamState};
use crate::nmf::Dictionary;
use crate::numerics::SeededRng;
use crate::synthgen::{Dataset, Sample, TaskMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpreterTrainConfig {
    pub arch: InterpreterArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Share of the training split held out to monitor fidelity.
    pub validation_fraction: f64,
}

impl Default for InterpreterTrainConfig {
    fn default() -> Self {
        Self {
            arch: InterpreterArch::default(),
            epochs: 30,
            batch_size: 16,
            lr: 5e-4,
            seed: 42,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterEpoch {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Top-1 fidelity (multi-class) or macro-AUPRC (multi-label).
    pub validation_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterTrace {
    pub initial: LossBreakdown,
    pub epochs: Vec<InterpreterEpoch>,
    pub classifier_hash: String,
    pub dictionary_hash: String,
}

/// Runs the frozen classifier once per sample and caches what training needs.
pub fn prepare_examples(
    classifier: &ClassifierModel,
    model: &InterpreterModel,
    samples: &[Sample],
) -> Result<Vec<InterpreterExample>> {
    samples
        .iter()
        .map(|s| {
            let (x, _) = analyze(&s.signal, classifier.stft_config())?;
            let out = classifier.classify(&s.signal)?;
            Ok(InterpreterExample {
                id: s.id.clone(),
                psi_input: model.psi_input(&out.taps, x.n_frames())?,
                x: x.into_matrix(),
                f_probs: out.probs,
            })
        })
        .collect()
}

/// Fidelity of `model` on prepared examples: top-1 or macro-AUPRC.
pub fn example_fidelity(model: &InterpreterModel, examples: &[InterpreterExample]) -> Result<Option<f64>> {
    if examples.is_empty() {
        return Ok(None);
    }
    let f: Vec<Vec<f64>> = examples.iter().map(|e| e.f_probs.clone()).collect();
    let g = examples
        .iter()
        .map(|e| Ok(model.forward_input(&e.psi_input)?.probs))
        .collect::<Result<Vec<_>>>()?;
    Ok(match model.mode() {
        TaskMode::MultiClass => Some(topk_fidelity(&f, &g, &[1])?[&1]),
        TaskMode::MultiLabel => multilabel_fidelity(&f, &g, 0.5)?.macro_auprc,
    })
}

/// Fits `Ψ` and `Θ` with the classifier held fixed.
pub fn train_interpreter(
    classifier: &ClassifierModel,
    ds: &Dataset,
    dictionary: &Dictionary,
    weights: &LossWeights,
    cfg: &InterpreterTrainConfig,
) -> Result<(InterpreterModel, InterpreterTrace)> {
    weights.validate()?;
    if ds.train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.lr <= 0.0 || !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config("batch_size, lr or validation_fraction out of range".into()));
    }
    if let Some(sr) = ds.sample_rate() {
        if sr != classifier.sample_rate() {
            return Err(Error::Config(format!("dataset is {sr} Hz, classifier {} Hz", classifier.sample_rate())));
        }
    }
    if dictionary.n_bins() != classifier.stft_config().n_bins() {
        return Err(Error::Config(format!(
            "dictionary has {} bins but the classifier front end yields {}",
            dictionary.n_bins(),
            classifier.stft_config().n_bins()
        )));
    }
    if ds.n_classes() != classifier.n_classes() {
        return Err(Error::Config("dataset and classifier disagree on the class count".into()));
    }
    let classifier_hash = classifier.hash();
    let taps: Vec<(usize, usize)> = classifier.taps().iter().map(|&b| (b, classifier.arch().channels[b - 1])).collect();
    let mut model = InterpreterModel::new(
        cfg.arch.clone(),
        taps,
        dictionary.clone(),
        classifier.mode(),
        classifier.n_classes(),
        cfg.seed,
    )?;

    let mut examples = prepare_examples(classifier, &model, &ds.train)?;
    model.fit_input_scale(&mut examples.iter_mut().map(|e| &mut e.psi_input).collect::<Vec<_>>())?;
    let mut split_rng = SeededRng::derive(cfg.seed, "interpreter-validation");
    split_rng.shuffle(&mut examples);
    let n_val = ((examples.len() as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(examples.len() - 1);
    let validation = examples.split_off(examples.len() - n_val);

    let initial = total_loss(&examples, &model, weights)?;
    let mut adam = AdamState::new(model.networks().iter().flat_map(|n| n.params()), cfg.lr);
    let mut rng = SeededRng::derive(cfg.seed, "interpreter-shuffle");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut mean = LossBreakdown::default();
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<InterpreterExample> = batch_idx.iter().map(|&i| examples[i].clone()).collect();
            let (b, grads) = loss_and_gradients(&batch, &model, weights)?;
            let share = batch.len() as f64 / examples.len() as f64;
            mean.fidelity += share * b.fidelity;
            mean.nmf += share * b.nmf;
            mean.l1 += share * b.l1;
            mean.weighted_nmf += share * b.weighted_nmf;
            mean.weighted_l1 += share * b.weighted_l1;
            mean.total += share * b.total;
            adam_step(&mut model.all_params_mut(), &grads, &mut adam)?;
        }
        epochs.push(InterpreterEpoch {
            epoch,
            loss: mean,
            validation_fidelity: example_fidelity(&model, &validation)?,
        });
    }
    if classifier.hash() != classifier_hash {
        return Err(Error::Contract("classifier parameters changed during interpreter training".into()));
    }
    let dictionary_hash = dictionary.hash();
    Ok((model, InterpreterTrace { initial, epochs, classifier_hash, dictionary_hash }))
}
