use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsp::{log_mel_with, mel_filterbank, stft, AudioSignal, MelConfig, StftConfig};
use crate::error::{shape_err, Error, Result};
use crate::net::{sigmoid, softmax, LayerSpec, Network, Tape, Tensor};
use crate::numerics::{hash_values, load_container, save_container, Matrix, SeededRng, TensorBlob};
use crate::synthgen::TaskMode;

pub const POOL: usize = 2;

/// Block widths and which block outputs are exposed as taps (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub channels: Vec<usize>,
    pub taps: Vec<usize>,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self { channels: vec![16, 32, 64, 64], taps: vec![2, 3, 4] }
    }
}

impl ClassifierArch {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config("classifier needs at least one block of width >= 1".into()));
        }
        let n = self.channels.len();
        if self.taps.is_empty() || self.taps.iter().any(|&t| t == 0 || t > n) {
            return Err(Error::Config(format!("taps {:?} must lie in 1..={n}", self.taps)));
        }
        if self.taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("taps must be strictly increasing".into()));
        }
        Ok(())
    }

    /// conv → affine → relu → conv → relu → max-pool.
    pub fn block_specs(&self, block: usize) -> Vec<LayerSpec> {
        let c_in = if block == 0 { 1 } else { self.channels[block - 1] };
        let c = self.channels[block];
        vec![
            LayerSpec::Conv2d { in_channels: c_in, out_channels: c, kernel: 3 },
            LayerSpec::ChannelAffine { channels: c },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_channels: c, out_channels: c, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { size: POOL },
        ]
    }

    pub fn head_specs(&self, n_classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { inputs: *self.channels.last().unwrap(), outputs: n_classes },
        ]
    }

    /// `(channels, freq, time)` of block `b`'s output (1-based) for an input of
    /// `n_mels × frames`.
    pub fn tap_shape(&self, block: usize, n_mels: usize, frames: usize) -> [usize; 3] {
        let div = |n: usize| (0..block).fold(n, |acc, _| acc.div_ceil(POOL));
        [self.channels[block - 1], div(n_mels), div(frames)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutput {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    /// Block index (1-based) → `(channels, freq, time)` feature map.
    pub taps: BTreeMap<usize, Tensor>,
}

/// Probabilities from logits under the task's head activation.
pub fn head_activation(mode: TaskMode, logits: &[f64]) -> Vec<f64> {
    match mode {
        TaskMode::MultiClass => softmax(logits),
        TaskMode::MultiLabel => logits.iter().map(|&v| sigmoid(v)).collect(),
    }
}

/// Pulls a gradient with respect to the probabilities back to the logits.
pub fn head_activation_backward(mode: TaskMode, probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    match mode {
        TaskMode::MultiClass => {
            let dot: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
            probs.iter().zip(dprobs).map(|(p, d)| p * (d - dot)).collect()
        }
        TaskMode::MultiLabel => probs.iter().zip(dprobs).map(|(p, d)| d * p * (1.0 - p)).collect(),
    }
}

/// The block-structured CNN under interpretation.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub(crate) blocks: Vec<Network>,
    pub(crate) head: Network,
    arch: ClassifierArch,
    class_names: Vec<String>,
    mode: TaskMode,
    stft: StftConfig,
    mel: MelConfig,
    sample_rate: u32,
    pub(crate) input_mean: f64,
    pub(crate) input_std: f64,
    filterbank: Matrix,
}

/// Forward state kept for backpropagation through the classifier.
pub(crate) struct ClassifierTape {
    pub blocks: Vec<Tape>,
    pub head: Tape,
}

impl ClassifierModel {
    pub fn new(
        arch: ClassifierArch,
        class_names: Vec<String>,
        mode: TaskMode,
        stft_cfg: StftConfig,
        mel: MelConfig,
        sample_rate: u32,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        stft_cfg.validate()?;
        if class_names.is_empty() {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        let mut rng = SeededRng::derive(seed, "classifier-init");
        let blocks = (0..arch.channels.len())
            .map(|b| Network::from_specs(&arch.block_specs(b), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut head = Network::from_specs(&arch.head_specs(class_names.len()), &mut rng)?;
        // a zero head starts from the uniform prediction
        for p in head.params_mut() {
            p.data_mut().fill(0.0);
        }
        let filterbank = mel_filterbank(&mel, stft_cfg.n_bins(), sample_rate)?;
        Ok(Self {
            blocks,
            head,
            arch,
            class_names,
            mode,
            stft: stft_cfg,
            mel,
            sample_rate,
            input_mean: 0.0,
            input_std: 1.0,
            filterbank,
        })
    }

    pub fn arch(&self) -> &ClassifierArch {
        &self.arch
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    pub fn mel_config(&self) -> &MelConfig {
        &self.mel
    }

    pub fn taps(&self) -> &[usize] {
        &self.arch.taps
    }

    pub fn head(&self) -> &Network {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Network {
        &mut self.head
    }

    /// Hash over every parameter, used to verify the model stays frozen.
    pub fn hash(&self) -> String {
        let params = self.blocks.iter().chain([&self.head]).flat_map(|n| n.params());
        let norm = [self.input_mean, self.input_std];
        hash_values(params.map(|t| t.data()).chain([norm.as_slice()]))
    }

    pub(crate) fn networks(&self) -> impl Iterator<Item = &Network> {
        self.blocks.iter().chain([&self.head])
    }

    pub(crate) fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks.iter_mut().chain([&mut self.head]).flat_map(|n| n.params_mut()).collect()
    }

    /// Unnormalised log-mel input, `(1, n_mels, frames)`.
    pub fn raw_features(&self, signal: &AudioSignal) -> Result<Tensor> {
        if signal.sample_rate != self.sample_rate {
            return Err(Error::Config(format!(
                "signal is {} Hz but the classifier expects {} Hz",
                signal.sample_rate, self.sample_rate
            )));
        }
        let lm = log_mel_with(&self.filterbank, &stft(signal, &self.stft)?, self.mel.log_floor)?;
        let m = lm.values;
        Tensor::new(vec![1, m.rows(), m.cols()], m.data().to_vec())
    }

    /// Standardised network input.
    pub fn features(&self, signal: &AudioSignal) -> Result<Tensor> {
        let mut x = self.raw_features(signal)?;
        self.standardize(&mut x);
        Ok(x)
    }

    pub(crate) fn standardize(&self, x: &mut Tensor) {
        for v in x.data_mut() {
            *v = (*v - self.input_mean) / self.input_std;
        }
    }

    pub(crate) fn set_normalization(&mut self, mean: f64, std: f64) {
        self.input_mean = mean;
        self.input_std = std;
    }

    pub(crate) fn forward_taped(&self, x: &Tensor) -> Result<(ClassifierOutput, ClassifierTape)> {
        if x.shape().len() != 3 || x.shape()[0] != 1 || x.shape()[1] != self.mel.n_mels {
            return Err(shape_err!("classifier expects (1, {}, T) input, got {:?}", self.mel.n_mels, x.shape()));
        }
        let mut taps = BTreeMap::new();
        let mut tapes = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for (b, net) in self.blocks.iter().enumerate() {
            let tape = net.forward(&h)?;
            h = tape.output().clone();
            if self.arch.taps.contains(&(b + 1)) {
                taps.insert(b + 1, h.clone());
            }
            tapes.push(tape);
        }
        let head = self.head.forward(&h)?;
        let logits = head.output().data().to_vec();
        let probs = head_activation(self.mode, &logits);
        Ok((ClassifierOutput { probs, logits, taps }, ClassifierTape { blocks: tapes, head }))
    }

    /// Forward pass on an already standardised input.
    pub fn forward_features(&self, x: &Tensor) -> Result<ClassifierOutput> {
        Ok(self.forward_taped(x)?.0)
    }

    pub(crate) fn backward(&self, tape: &ClassifierTape, dlogits: &[f64], grads: &mut [Vec<Tensor>]) -> Result<()> {
        let n = self.blocks.len();
        let mut dy = self.head.backward(&tape.head, &Tensor::from_vec(dlogits.to_vec()), &mut grads[n])?;
        for b in (0..n).rev() {
            dy = self.blocks[b].backward(&tape.blocks[b], &dy, &mut grads[b])?;
        }
        Ok(())
    }

    pub fn classify(&self, signal: &AudioSignal) -> Result<ClassifierOutput> {
        self.forward_features(&self.features(signal)?)
    }

    fn meta(&self) -> serde_json::Value {
        json!({
            "kind": "classifier",
            "arch": self.arch,
            "class_names": self.class_names,
            "mode": self.mode,
            "stft": self.stft,
            "mel": self.mel,
            "sample_rate": self.sample_rate,
            "input_mean": self.input_mean,
            "input_std": self.input_std,
        })
    }

    pub fn to_blobs(&self) -> Vec<TensorBlob> {
        let mut blobs: Vec<TensorBlob> =
            self.blocks.iter().enumerate().flat_map(|(b, n)| n.to_blobs(&format!("block{}.", b + 1))).collect();
        blobs.extend(self.head.to_blobs("head."));
        blobs
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_container(&self.to_blobs(), &self.meta(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (blobs, meta) = load_container(path)?;
        Self::from_parts(&blobs, &meta)
    }

    pub fn from_parts(blobs: &[TensorBlob], meta: &serde_json::Value) -> Result<Self> {
        if meta.get("kind").and_then(|k| k.as_str()) != Some("classifier") {
            return Err(Error::Format("container does not hold a classifier".into()));
        }
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Format(format!("classifier meta lacks '{k}'")));
        let parse = |e: serde_json::Error| Error::Serialization(e.to_string());
        let arch: ClassifierArch = serde_json::from_value(field("arch")?).map_err(parse)?;
        let class_names: Vec<String> = serde_json::from_value(field("class_names")?).map_err(parse)?;
        let mode: TaskMode = serde_json::from_value(field("mode")?).map_err(parse)?;
        let stft_cfg: StftConfig = serde_json::from_value(field("stft")?).map_err(parse)?;
        let mel: MelConfig = serde_json::from_value(field("mel")?).map_err(parse)?;
        let sample_rate: u32 = serde_json::from_value(field("sample_rate")?).map_err(parse)?;
        let mean: f64 = serde_json::from_value(field("input_mean")?).map_err(parse)?;
        let std: f64 = serde_json::from_value(field("input_std")?).map_err(parse)?;
        let mut model = Self::new(arch, class_names, mode, stft_cfg, mel, sample_rate, 0)?;
        model.blocks = (0..model.arch.channels.len())
            .map(|b| Network::from_blobs(&model.arch.block_specs(b), blobs, &format!("block{}.", b + 1)))
            .collect::<Result<_>>()?;
        model.head = Network::from_blobs(&model.arch.head_specs(model.n_classes()), blobs, "head.")?;
        model.set_normalization(mean, std);
        Ok(model)
    }
}
