use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use l2i::classifier::{ClassifierArch, ClassifierTrainConfig};
use l2i::dsp::{MelConfig, StftConfig};
use l2i::interpreter::{InterpretConfig, InterpreterArch, InterpreterTrainConfig, LossWeights, Pooling};
use l2i::nmf::{SparseNmfConfig, StagedConfig};
use l2i::synthgen::DatasetSpec;

use crate::error::{usage, CliError};

/// Environment variable overriding the configured global seed.
pub const SEED_ENV: &str = "L2I_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Global seed; every module seed follows it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub dataset: DatasetConfig,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub nmf: NmfConfig,
    pub classifier: ClassifierConfig,
    pub interpreter: InterpreterConfig,
    pub interpret: InterpretSection,
    pub corrupt: CorruptConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    pub work_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Base specification; other keys in the section override its fields.
    pub preset: String,
    #[serde(flatten)]
    pub spec: DatasetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub k: usize,
    pub mu: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub epsilon: f64,
    /// Frames averaged per training column.
    pub chunk: usize,
    pub k_noise: usize,
    pub k_per_class: usize,
    pub include_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub channels: Vec<usize>,
    pub taps: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpreterConfig {
    pub pooling: Pooling,
    pub attention_dim: usize,
    pub hidden_channels: usize,
    pub resize_freq: usize,
    pub output_bias_init: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub validation_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    pub l1_per_frame: bool,
    pub nmf_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretSection {
    pub tau: f64,
    pub per_component: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorruptMode {
    Noise,
    Mix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptConfig {
    pub mode: CorruptMode,
    pub snr_db: f64,
}

impl RunConfig {
    pub fn defaults(preset: &str) -> Result<Self, CliError> {
        let spec = DatasetSpec::preset(preset).map_err(usage)?;
        let nmf = SparseNmfConfig::default();
        let staged = StagedConfig::default();
        let clf = ClassifierTrainConfig::default();
        let interp = InterpreterTrainConfig::default();
        let weights = LossWeights::default();
        let ic = InterpretConfig::default();
        Ok(Self {
            seed: 42,
            paths: PathsConfig { work_dir: PathBuf::from("l2i-run") },
            dataset: DatasetConfig { preset: preset.to_string(), spec },
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            nmf: NmfConfig {
                k: nmf.k,
                mu: nmf.mu,
                max_iters: nmf.max_iters,
                rel_tol: nmf.rel_tol,
                epsilon: nmf.epsilon,
                chunk: 5,
                k_noise: staged.k_noise,
                k_per_class: staged.k_per_class,
                include_noise: staged.include_noise,
            },
            classifier: ClassifierConfig {
                channels: clf.arch.channels,
                taps: clf.arch.taps,
                epochs: clf.epochs,
                batch_size: clf.batch_size,
                lr: clf.lr,
            },
            interpreter: InterpreterConfig {
                pooling: interp.arch.pooling,
                attention_dim: interp.arch.attention_dim,
                hidden_channels: interp.arch.hidden_channels,
                resize_freq: interp.arch.resize_freq,
                output_bias_init: interp.arch.output_bias_init,
                epochs: interp.epochs,
                batch_size: interp.batch_size,
                lr: interp.lr,
                validation_fraction: interp.validation_fraction,
                alpha: weights.alpha,
                beta: weights.beta,
                l1_per_frame: weights.l1_per_frame,
                nmf_mean: weights.nmf_mean,
            },
            interpret: InterpretSection { tau: ic.tau, per_component: ic.emit_per_component },
            corrupt: CorruptConfig { mode: CorruptMode::Noise, snr_db: 0.0 },
        })
    }

    /// Defaults, then the file (if any), then `--set` overrides, then `L2I_SEED`.
    pub fn load(path: Option<&Path>, overrides: &[String], env_seed: Option<&str>) -> Result<Self, CliError> {
        let mut user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be a non-negative integer, got '{raw}'")))?;
            user.insert("seed".into(), Value::Integer(seed as i64));
        }
        let preset = match user.get("dataset").and_then(|d| d.get("preset")) {
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(CliError::Usage(format!("dataset.preset must be a string, got {other}"))),
            None => "toy4".to_string(),
        };
        let mut merged = match Value::try_from(Self::defaults(&preset)?) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        merge(&mut merged, &user);
        let seed = merged.get("seed").cloned().unwrap_or(Value::Integer(42));
        if let Some(Value::Table(d)) = merged.get_mut("dataset") {
            d.insert("seed".into(), seed);
        }
        let cfg: RunConfig =
            Value::Table(merged).try_into().map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        let canonical = match Value::try_from(&cfg) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        if let Some(key) = unknown_key(&user, &canonical, "") {
            return Err(CliError::Usage(format!("unknown configuration key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset.spec.validate().map_err(usage)?;
        self.stft.validate().map_err(usage)?;
        self.sparse_nmf().validate().map_err(usage)?;
        self.loss_weights().validate().map_err(usage)?;
        self.classifier_train().arch.validate().map_err(usage)?;
        self.interpret_config().validate().map_err(usage)?;
        if self.nmf.chunk == 0 {
            return Err(CliError::Usage("nmf.chunk must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sparse_nmf(&self) -> SparseNmfConfig {
        SparseNmfConfig {
            k: self.nmf.k,
            mu: self.nmf.mu,
            max_iters: self.nmf.max_iters,
            rel_tol: self.nmf.rel_tol,
            seed: self.seed,
            epsilon: self.nmf.epsilon,
        }
    }

    pub fn staged(&self) -> StagedConfig {
        StagedConfig {
            k_noise: self.nmf.k_noise,
            k_per_class: self.nmf.k_per_class,
            include_noise: self.nmf.include_noise,
        }
    }

    pub fn classifier_train(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            arch: ClassifierArch { channels: self.classifier.channels.clone(), taps: self.classifier.taps.clone() },
            epochs: self.classifier.epochs,
            batch_size: self.classifier.batch_size,
            lr: self.classifier.lr,
            seed: self.seed,
            stft: self.stft,
            mel: self.mel.clone(),
        }
    }

    pub fn interpreter_train(&self, pooling: Pooling) -> InterpreterTrainConfig {
        let i = &self.interpreter;
        InterpreterTrainConfig {
            arch: InterpreterArch {
                pooling,
                attention_dim: i.attention_dim,
                hidden_channels: i.hidden_channels,
                resize_freq: i.resize_freq,
                output_bias_init: i.output_bias_init,
            },
            epochs: i.epochs,
            batch_size: i.batch_size,
            lr: i.lr,
            seed: self.seed,
            validation_fraction: i.validation_fraction,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        let i = &self.interpreter;
        LossWeights { alpha: i.alpha, beta: i.beta, l1_per_frame: i.l1_per_frame, nmf_mean: i.nmf_mean }
    }

    pub fn interpret_config(&self) -> InterpretConfig {
        InterpretConfig { tau: self.interpret.tau, emit_per_component: self.interpret.per_component, class: None }
    }
}

/// Parses `section.key=value` into `table`. Values are read as TOML and fall
/// back to a bare string.
pub fn apply_override(table: &mut Table, raw: &str) -> Result<(), CliError> {
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{raw}' is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("override '{raw}' has an empty key")));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));

    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Usage(format!("override '{raw}': '{k}' is not a section"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}

/// Recursively overlays `over` onto `base`; non-table values replace.
fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn unknown_key(user: &Table, known: &Table, prefix: &str) -> Option<String> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => return Some(path),
            (Some(Value::Table(kt)), Value::Table(ut)) => {
                if let Some(p) = unknown_key(ut, kt, &path) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::defaults("toy4").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let f = write(&text);
        assert_eq!(RunConfig::load(Some(f.path()), &[], None).unwrap(), cfg);
    }

    #[test]
    fn file_then_overrides_then_env_seed() {
        let f = write("seed = 7\n[nmf]\nk = 12\n[interpreter]\npooling = \"max\"\n");
        let cfg = RunConfig::load(Some(f.path()), &["nmf.k=20".into(), "interpret.tau=0.3".into()], None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.nmf.k, 20);
        assert_eq!(cfg.interpret.tau, 0.3);
        assert_eq!(cfg.interpreter.pooling, Pooling::Max);
        assert_eq!(cfg.dataset.spec.seed, 7);
        assert_eq!(cfg.sparse_nmf().seed, 7);

        let cfg = RunConfig::load(Some(f.path()), &[], Some("99")).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.classifier_train().seed, 99);
    }

    #[test]
    fn preset_switches_dataset_base() {
        let cfg = RunConfig::load(None, &["dataset.preset=toy-urban".into(), "dataset.n_train=10".into()], None).unwrap();
        assert_eq!(cfg.dataset.spec.classes.len(), 6);
        assert_eq!(cfg.dataset.spec.n_train, 10);
    }

    #[test]
    fn string_override_without_quotes() {
        let cfg = RunConfig::load(None, &["paths.work_dir=out/run1".into()], None).unwrap();
        assert_eq!(cfg.paths.work_dir, PathBuf::from("out/run1"));
    }

    #[test]
    fn bad_inputs_are_usage_errors() {
        for o in ["nmf.k", "nmf.bogus=1", "nope.k=1", "nmf.k=-3", "interpret.tau=2.0", "=3"] {
            let err = RunConfig::load(None, &[o.into()], None).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{o}: {err}");
        }
        assert_eq!(RunConfig::load(None, &[], Some("abc")).unwrap_err().exit_code(), 2);
    }
}
