use serde::{Deserialize, Serialize};

use super::model::{head_activation_backward, ClassifierArch, ClassifierModel};
use crate::dsp::{MelConfig, StftConfig};
use crate::error::{Error, Result};
use crate::metrics::{argmax, auprc};
use crate::net::{adam_step, binary_cross_entropy, categorical_cross_entropy, AdamState, Tensor};
use crate::numerics::SeededRng;
use crate::synthgen::{Dataset, Sample, TaskMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub arch: ClassifierArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub stft: StftConfig,
    pub mel: MelConfig,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            arch: ClassifierArch::default(),
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            seed: 42,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy (multi-class) or macro-AUPRC (multi-label).
    pub train_metric: Option<f64>,
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub metric: String,
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub n_samples: usize,
    pub accuracy: Option<f64>,
    pub macro_auprc: Option<f64>,
}

impl ClassifierEval {
    /// The headline number for the task mode.
    pub fn primary(&self) -> Option<f64> {
        self.accuracy.or(self.macro_auprc)
    }
}

/// Classification loss and its gradient with respect to the logits.
pub fn classification_loss(mode: TaskMode, probs: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (loss, dp) = match mode {
        TaskMode::MultiClass => categorical_cross_entropy(probs, target)?,
        TaskMode::MultiLabel => binary_cross_entropy(probs, target)?,
    };
    Ok((loss, head_activation_backward(mode, probs, &dp)))
}

/// Accuracy or macro-AUPRC of predicted probabilities against labels.
/// Classes without positive labels are skipped in the macro average.
pub fn score_predictions(mode: TaskMode, probs: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<ClassifierEval> {
    let n = probs.len();
    match mode {
        TaskMode::MultiClass => {
            let hits = probs.iter().zip(labels).filter(|(p, l)| argmax(p) == argmax(l)).count();
            Ok(ClassifierEval {
                n_samples: n,
                accuracy: (n > 0).then(|| hits as f64 / n as f64),
                macro_auprc: None,
            })
        }
        TaskMode::MultiLabel => {
            let c = labels.first().map_or(0, Vec::len);
            let mut per = Vec::new();
            for k in 0..c {
                let l: Vec<bool> = labels.iter().map(|v| v[k] > 0.5).collect();
                let s: Vec<f64> = probs.iter().map(|v| v[k]).collect();
                match auprc(&s, &l) {
                    Ok(a) => per.push(a),
                    Err(Error::UndefinedMetric(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(ClassifierEval {
                n_samples: n,
                accuracy: None,
                macro_auprc: (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64),
            })
        }
    }
}

pub fn evaluate_classifier(model: &ClassifierModel, samples: &[Sample]) -> Result<ClassifierEval> {
    let probs = samples.iter().map(|s| Ok(model.classify(&s.signal)?.probs)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<f64>> = samples.iter().map(|s| s.label.clone()).collect();
    score_predictions(model.mode(), &probs, &labels)
}

/// Trains from scratch with Adam on seeded minibatches. Gradients of a batch
/// are summed in sample order, then averaged.
pub fn train_classifier(ds: &Dataset, cfg: &ClassifierTrainConfig) -> Result<(ClassifierModel, ClassifierReport)> {
    if ds.train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }
    if ds.mode == TaskMode::MultiClass && ds.n_classes() < 2 {
        return Err(Error::Config("multi-class training needs at least two classes".into()));
    }
    if cfg.batch_size == 0 || cfg.lr <= 0.0 {
        return Err(Error::Config("batch_size and lr must be positive".into()));
    }
    let sr = ds.sample_rate().unwrap_or(16000);
    let mut model = ClassifierModel::new(cfg.arch.clone(), ds.class_names.clone(), ds.mode, cfg.stft, cfg.mel, sr, cfg.seed)?;

    let mut train_x = ds.train.iter().map(|s| model.raw_features(&s.signal)).collect::<Result<Vec<_>>>()?;
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
    for x in &train_x {
        sum += x.data().iter().sum::<f64>();
        sum_sq += x.sum_sq();
        count += x.len();
    }
    let mean = sum / count as f64;
    let std = (sum_sq / count as f64 - mean * mean).max(0.0).sqrt().max(1e-8);
    model.set_normalization(mean, std);
    for x in &mut train_x {
        model.standardize(x);
    }
    let test_x = ds.test.iter().map(|s| model.features(&s.signal)).collect::<Result<Vec<_>>>()?;
    let train_y: Vec<&[f64]> = ds.train.iter().map(|s| s.label.as_slice()).collect();
    let test_labels: Vec<Vec<f64>> = ds.test.iter().map(|s| s.label.clone()).collect();

    let mut initial_loss = 0.0;
    for (x, y) in train_x.iter().zip(&train_y) {
        initial_loss += classification_loss(ds.mode, &model.forward_features(x)?.probs, y)?.0;
    }
    initial_loss /= train_x.len() as f64;

    let mut adam = AdamState::new(model.networks().flat_map(|n| n.params()), cfg.lr);
    let mut rng = SeededRng::derive(cfg.seed, "classifier-shuffle");
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut train_probs = vec![Vec::new(); train_x.len()];
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Vec<Tensor>> = model.networks().map(|n| n.zero_grads()).collect();
            for &i in batch {
                let (out, tape) = model.forward_taped(&train_x[i])?;
                let (loss, dlogits) = classification_loss(ds.mode, &out.probs, train_y[i])?;
                loss_sum += loss;
                model.backward(&tape, &dlogits, &mut grads)?;
                train_probs[i] = out.probs;
            }
            let mut flat: Vec<Tensor> = grads.into_iter().flatten().collect();
            for g in &mut flat {
                g.scale_in_place(1.0 / batch.len() as f64);
            }
            adam_step(&mut model.all_params_mut(), &flat, &mut adam)?;
        }
        let train_labels: Vec<Vec<f64>> = train_y.iter().map(|y| y.to_vec()).collect();
        let train_metric = score_predictions(ds.mode, &train_probs, &train_labels)?.primary();
        let test_metric = if test_x.is_empty() {
            None
        } else {
            let probs = test_x.iter().map(|x| Ok(model.forward_features(x)?.probs)).collect::<Result<Vec<_>>>()?;
            score_predictions(ds.mode, &probs, &test_labels)?.primary()
        };
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            train_metric,
            test_metric,
        });
    }
    let metric = match ds.mode {
        TaskMode::MultiClass => "accuracy",
        TaskMode::MultiLabel => "macro-auprc",
    };
    Ok((model, ClassifierReport { metric: metric.into(), initial_loss, epochs }))
}
