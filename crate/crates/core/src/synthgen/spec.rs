use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-class (one-hot labels, softmax heads) or multi-label (binary labels,
/// sigmoid heads).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    MultiClass,
    MultiLabel,
}

impl std::str::FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-class" | "multiclass" => Ok(TaskMode::MultiClass),
            "multi-label" | "multilabel" => Ok(TaskMode::MultiLabel),
            other => Err(Error::Config(format!("unknown task mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Tone,
    HarmonicStack,
    Chirp,
    NoiseBurst,
    AmTone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub kind: EventKind,
    /// `(f_lo, f_hi)` in Hz.
    pub band: (f64, f64),
    /// Event duration range in seconds.
    pub duration_range: (f64, f64),
    /// Peak amplitude range.
    pub amplitude_range: (f64, f64),
}

impl ClassSpec {
    pub fn new(name: &str, kind: EventKind, band: (f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            kind,
            band,
            duration_range: (0.6, 1.2),
            amplitude_range: (0.3, 0.8),
        }
    }

    /// Band actually synthesised: the class band shrunk by a guard margin so
    /// that window leakage stays inside the nominal band.
    pub fn synthesis_band(&self) -> (f64, f64) {
        let (lo, hi) = self.band;
        let margin = (0.2 * (hi - lo)).min(50.0);
        (lo + margin, hi - margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    pub mode: TaskMode,
    pub n_train: usize,
    pub n_test: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// White background noise level relative to the events, in dB SNR.
    pub background_snr_db: Option<f64>,
    pub max_events_per_clip: usize,
    /// Fraction of multi-label clips holding only background (all-zero label).
    #[serde(default)]
    pub background_only_fraction: f64,
    pub seed: u64,
}

impl DatasetSpec {
    /// Four disjoint-band classes at 16 kHz, 1.5 s single-event clips.
    pub fn toy4() -> Self {
        Self {
            classes: vec![
                ClassSpec::new("tone", EventKind::Tone, (200.0, 400.0)),
                ClassSpec::new("harmonic", EventKind::HarmonicStack, (500.0, 900.0)),
                ClassSpec::new("chirp", EventKind::Chirp, (1000.0, 2000.0)),
                ClassSpec::new("noise-burst", EventKind::NoiseBurst, (3000.0, 4000.0)),
            ],
            mode: TaskMode::MultiClass,
            n_train: 200,
            n_test: 80,
            clip_seconds: 1.5,
            sample_rate: 16000,
            background_snr_db: None,
            max_events_per_clip: 1,
            background_only_fraction: 0.0,
            seed: 42,
        }
    }

    /// Six-class multi-label scenes over white background noise at +5 dB SNR.
    pub fn toy_urban() -> Self {
        Self {
            classes: vec![
                ClassSpec::new("hum", EventKind::Tone, (150.0, 350.0)),
                ClassSpec::new("engine", EventKind::HarmonicStack, (500.0, 900.0)),
                ClassSpec::new("siren", EventKind::Chirp, (1000.0, 2000.0)),
                ClassSpec::new("alarm", EventKind::AmTone, (2200.0, 2800.0)),
                ClassSpec::new("hiss", EventKind::NoiseBurst, (3000.0, 4000.0)),
                ClassSpec::new("bird", EventKind::Chirp, (4500.0, 6000.0)),
            ],
            mode: TaskMode::MultiLabel,
            n_train: 200,
            n_test: 80,
            clip_seconds: 1.5,
            sample_rate: 16000,
            background_snr_db: Some(5.0),
            max_events_per_clip: 2,
            background_only_fraction: 0.0,
            seed: 42,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy4" => Ok(Self::toy4()),
            "toy-urban" => Ok(Self::toy_urban()),
            other => Err(Error::Config(format!("unknown dataset preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be >= 1".into()));
        }
        if self.sample_rate == 0 || !(self.clip_seconds > 0.0) {
            return Err(Error::Config("sample rate and clip length must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for c in &self.classes {
            let (lo, hi) = c.band;
            if !(lo >= 0.0 && lo < hi && hi < nyquist) {
                return Err(Error::Config(format!(
                    "class '{}' band ({lo}, {hi}) must satisfy 0 <= lo < hi < {nyquist}",
                    c.name
                )));
            }
            let (dmin, dmax) = c.duration_range;
            if !(dmin > 0.0 && dmin <= dmax && dmax <= self.clip_seconds) {
                return Err(Error::Config(format!(
                    "class '{}' duration range must lie in (0, clip_seconds]",
                    c.name
                )));
            }
            let (amin, amax) = c.amplitude_range;
            if !(amin > 0.0 && amin <= amax) {
                return Err(Error::Config(format!("class '{}' has a bad amplitude range", c.name)));
            }
        }
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                if a.band.0 < b.band.1 && b.band.0 < a.band.1 {
                    return Err(Error::Config(format!(
                        "class bands of '{}' and '{}' overlap",
                        a.name, b.name
                    )));
                }
                if a.name == b.name {
                    return Err(Error::Config(format!("duplicate class '{}'", a.name)));
                }
            }
        }
        match self.mode {
            TaskMode::MultiClass if self.classes.len() < 2 => {
                Err(Error::Config("multi-class data needs >= 2 classes".into()))
            }
            TaskMode::MultiLabel
                if self.max_events_per_clip == 0 || self.max_events_per_clip > self.classes.len() =>
            {
                Err(Error::Config(format!(
                    "max_events_per_clip must be in 1..={}",
                    self.classes.len()
                )))
            }
            _ if !(0.0..1.0).contains(&self.background_only_fraction) => {
                Err(Error::Config("background_only_fraction must be in [0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}
