use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classifier::head_activation;
use crate::error::{Error, Result};
use crate::net::{concat_channels, resize_bilinear, LayerSpec, Network, Tape, Tensor};
use crate::nmf::{Activations, Dictionary};
use crate::numerics::{find_blob, load_container, save_container, SeededRng, TensorBlob};
use crate::synthgen::TaskMode;

/// How `Θ` pools `H_I` over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Att,
    Max,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "att" | "attention" => Ok(Pooling::Att),
            "max" => Ok(Pooling::Max),
            other => Err(Error::Config(format!("unknown pooling '{other}' (expected att or max)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpreterArch {
    pub pooling: Pooling,
    pub attention_dim: usize,
    pub hidden_channels: usize,
    /// Frequency rows every tap is resized to before concatenation.
    pub resize_freq: usize,
    /// Initial bias of the last `Ψ` convolution.
    pub output_bias_init: f64,
}

impl Default for InterpreterArch {
    fn default() -> Self {
        Self { pooling: Pooling::Att, attention_dim: 32, hidden_channels: 64, resize_freq: 8, output_bias_init: 0.5 }
    }
}

/// Everything one interpreter pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpreterForward {
    /// `H_I(x)`, K×T.
    pub h_i: Activations,
    /// Attention weights over frames (attention pooling only).
    pub attention: Option<Vec<f64>>,
    pub z: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

pub(crate) struct InterpreterTape {
    pub psi: Tape,
    pub pool: Tape,
    pub head: Tape,
}

/// `Ψ` (taps → `H_I`) and `Θ` (`H_I` → class scores), tied to one dictionary.
#[derive(Debug, Clone)]
pub struct InterpreterModel {
    pub(crate) psi: Network,
    pub(crate) pool: Network,
    pub(crate) head: Network,
    arch: InterpreterArch,
    taps: Vec<usize>,
    tap_channels: Vec<usize>,
    /// Per-channel divisor applied to the stacked taps.
    input_scale: Vec<f64>,
    dictionary: Dictionary,
    mode: TaskMode,
}

impl InterpreterModel {
    pub fn new(
        arch: InterpreterArch,
        taps: Vec<(usize, usize)>,
        dictionary: Dictionary,
        mode: TaskMode,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if !arch.output_bias_init.is_finite() {
            return Err(Error::Config("output_bias_init must be finite".into()));
        }
        if taps.is_empty() || arch.hidden_channels == 0 || arch.resize_freq == 0 || n_classes == 0 {
            return Err(Error::Config("interpreter needs taps, hidden channels, resize rows and classes".into()));
        }
        if arch.pooling == Pooling::Att && arch.attention_dim == 0 {
            return Err(Error::Config("attention_dim must be >= 1".into()));
        }
        let k = dictionary.k();
        let mut rng = SeededRng::derive(seed, "interpreter-init");
        let (tap_ids, tap_channels): (Vec<usize>, Vec<usize>) = taps.into_iter().unzip();
        let mut psi = Network::from_specs(&psi_specs(&arch, tap_channels.iter().sum(), k), &mut rng)?;
        if let Some(bias) = psi.params_mut().into_iter().nth(3) {
            bias.data_mut().fill(arch.output_bias_init);
        }
        let pool = Network::from_specs(&pool_specs(&arch, k), &mut rng)?;
        let mut head = Network::from_specs(&[LayerSpec::Dense { inputs: k, outputs: n_classes }], &mut rng)?;
        for p in head.params_mut() {
            p.data_mut().fill(0.0);
        }
        let input_scale = vec![1.0; tap_channels.iter().sum()];
        Ok(Self { psi, pool, head, arch, taps: tap_ids, tap_channels, input_scale, dictionary, mode })
    }

    pub fn arch(&self) -> &InterpreterArch {
        &self.arch
    }

    pub fn pooling(&self) -> Pooling {
        self.arch.pooling
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn k(&self) -> usize {
        self.dictionary.k()
    }

    pub fn n_classes(&self) -> usize {
        self.head.params()[1].len()
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// `θ^w`, C×K.
    pub fn theta_weights(&self) -> &Tensor {
        self.head.params()[0]
    }

    /// Row `c` of `θ^w`.
    pub fn theta_row(&self, c: usize) -> Result<Vec<f64>> {
        let k = self.k();
        if c >= self.n_classes() {
            return Err(Error::Index(format!("class {c} out of range for {} classes", self.n_classes())));
        }
        Ok(self.theta_weights().data()[c * k..(c + 1) * k].to_vec())
    }

    pub fn theta_weights_mut(&mut self) -> &mut Tensor {
        self.head.params_mut().swap_remove(0)
    }

    pub fn networks(&self) -> [&Network; 3] {
        [&self.psi, &self.pool, &self.head]
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.psi.params_mut();
        out.extend(self.pool.params_mut());
        out.extend(self.head.params_mut());
        out
    }

    pub(crate) fn zero_grads(&self) -> Vec<Vec<Tensor>> {
        self.networks().iter().map(|n| n.zero_grads()).collect()
    }

    /// Resizes each tap to `(resize_freq, frames)` and stacks them along channels.
    pub fn psi_input(&self, taps: &BTreeMap<usize, Tensor>, frames: usize) -> Result<Tensor> {
        let mut parts = Vec::with_capacity(self.taps.len());
        for (&id, &ch) in self.taps.iter().zip(&self.tap_channels) {
            let t = taps
                .get(&id)
                .ok_or_else(|| Error::Contract(format!("classifier output lacks tap {id}")))?;
            if t.shape().first() != Some(&ch) {
                return Err(Error::Contract(format!("tap {id} has shape {:?}, expected {ch} channels", t.shape())));
            }
            parts.push(resize_bilinear(t, self.arch.resize_freq, frames)?);
        }
        let mut x = concat_channels(&parts)?;
        let plane = self.arch.resize_freq * frames;
        for (c, s) in self.input_scale.iter().enumerate() {
            for v in &mut x.data_mut()[c * plane..(c + 1) * plane] {
                *v /= s;
            }
        }
        Ok(x)
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    /// Sets each stacked-tap channel's divisor to its RMS over `inputs`
    /// (prepared with the current scale) and rescales `inputs` in place.
    pub fn fit_input_scale(&mut self, inputs: &mut [&mut Tensor]) -> Result<()> {
        let c = self.input_scale.len();
        let mut sum_sq = vec![0.0; c];
        let mut count = vec![0usize; c];
        for x in inputs.iter() {
            let (xc, _, _) = x.dims3()?;
            if xc != c {
                return Err(Error::Contract(format!("expected {c} stacked channels, got {xc}")));
            }
            let plane = x.len() / c;
            for ch in 0..c {
                sum_sq[ch] += x.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v * v).sum::<f64>();
                count[ch] += plane;
            }
        }
        let rms: Vec<f64> = sum_sq
            .iter()
            .zip(&count)
            .map(|(s, n)| if *n > 0 && *s > 0.0 { (s / *n as f64).sqrt() } else { 1.0 })
            .collect();
        for x in inputs.iter_mut() {
            let plane = x.len() / c;
            for (ch, r) in rms.iter().enumerate() {
                for v in &mut x.data_mut()[ch * plane..(ch + 1) * plane] {
                    *v /= r;
                }
            }
        }
        for (s, r) in self.input_scale.iter_mut().zip(&rms) {
            *s *= r;
        }
        Ok(())
    }

    pub(crate) fn forward_taped(&self, input: &Tensor) -> Result<(InterpreterForward, InterpreterTape)> {
        let psi = self.psi.forward(input)?;
        let h = psi.output().to_matrix()?;
        let pool = self.pool.forward(psi.output())?;
        let head = self.head.forward(pool.output())?;
        let logits = head.output().data().to_vec();
        let fwd = InterpreterForward {
            h_i: Activations::new(h)?,
            attention: pool.attention_weights().map(<[f64]>::to_vec),
            z: pool.output().data().to_vec(),
            probs: head_activation(self.mode, &logits),
            logits,
        };
        Ok((fwd, InterpreterTape { psi, pool, head }))
    }

    /// Forward pass on a prepared `Ψ` input (see [`InterpreterModel::psi_input`]).
    pub fn forward_input(&self, input: &Tensor) -> Result<InterpreterForward> {
        Ok(self.forward_taped(input)?.0)
    }

    fn meta(&self) -> serde_json::Value {
        let (_, dict_meta) = self.dictionary.to_blobs();
        json!({
            "kind": "interpreter",
            "arch": self.arch,
            "taps": self.taps,
            "tap_channels": self.tap_channels,
            "mode": self.mode,
            "n_classes": self.n_classes(),
            "dictionary_hash": self.dictionary.hash(),
            "dictionary": dict_meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (mut blobs, _) = self.dictionary.to_blobs();
        blobs.push(TensorBlob::new("psi_input_scale", vec![self.input_scale.len()], self.input_scale.clone()));
        blobs.extend(self.psi.to_blobs("psi."));
        blobs.extend(self.pool.to_blobs("pool."));
        blobs.extend(self.head.to_blobs("head."));
        save_container(&blobs, &self.meta(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (blobs, meta) = load_container(path)?;
        Self::from_parts(&blobs, &meta)
    }

    pub fn from_parts(blobs: &[TensorBlob], meta: &serde_json::Value) -> Result<Self> {
        if meta.get("kind").and_then(|k| k.as_str()) != Some("interpreter") {
            return Err(Error::Format("container does not hold an interpreter".into()));
        }
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Format(format!("interpreter meta lacks '{k}'")));
        let parse = |e: serde_json::Error| Error::Serialization(e.to_string());
        let arch: InterpreterArch = serde_json::from_value(field("arch")?).map_err(parse)?;
        let taps: Vec<usize> = serde_json::from_value(field("taps")?).map_err(parse)?;
        let tap_channels: Vec<usize> = serde_json::from_value(field("tap_channels")?).map_err(parse)?;
        let mode: TaskMode = serde_json::from_value(field("mode")?).map_err(parse)?;
        let stored_hash: String = serde_json::from_value(field("dictionary_hash")?).map_err(parse)?;
        let dictionary = Dictionary::from_blobs(blobs, &field("dictionary")?)?;
        if dictionary.hash() != stored_hash {
            return Err(Error::Format("embedded dictionary does not match its recorded hash".into()));
        }
        let k = dictionary.k();
        let psi = Network::from_blobs(&psi_specs(&arch, tap_channels.iter().sum(), k), blobs, "psi.")?;
        let pool = Network::from_blobs(&pool_specs(&arch, k), blobs, "pool.")?;
        let n_classes: usize = serde_json::from_value(field("n_classes")?).map_err(parse)?;
        let head = Network::from_blobs(&[LayerSpec::Dense { inputs: k, outputs: n_classes }], blobs, "head.")?;
        let input_scale = find_blob(blobs, "psi_input_scale")?.data.clone();
        if input_scale.len() != tap_channels.iter().sum::<usize>() || input_scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::Format("invalid tap scaling blob".into()));
        }
        Ok(Self { psi, pool, head, arch, taps, tap_channels, input_scale, dictionary, mode })
    }

    /// Fails unless `w` is the dictionary this interpreter was trained with.
    pub fn check_dictionary(&self, w: &Dictionary) -> Result<()> {
        if w.hash() != self.dictionary.hash() {
            return Err(Error::Config("dictionary differs from the one the interpreter was trained with".into()));
        }
        Ok(())
    }
}

fn psi_specs(arch: &InterpreterArch, in_channels: usize, k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d { in_channels, out_channels: arch.hidden_channels, kernel: 3 },
        LayerSpec::Relu,
        LayerSpec::Conv2d { in_channels: arch.hidden_channels, out_channels: k, kernel: 3 },
        LayerSpec::MeanOverFreq,
        LayerSpec::Relu,
    ]
}

fn pool_specs(arch: &InterpreterArch, k: usize) -> Vec<LayerSpec> {
    match arch.pooling {
        Pooling::Att => vec![LayerSpec::AttentionPool1d { features: k, hidden: arch.attention_dim }],
        Pooling::Max => vec![LayerSpec::MaxPool1dOverTime],
    }
}
