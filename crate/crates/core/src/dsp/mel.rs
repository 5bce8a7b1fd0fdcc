use serde::{Deserialize, Serialize};

use super::ComplexSpectrogram;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper edge in Hz; `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-6,
        }
    }
}

/// HTK mel scale: `2595·log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Matrix,
}

/// Triangular filterbank, `n_mels × (fft_size/2 + 1)`.
///
/// Filter `m` rises from edge `m` to peak 1 at edge `m+1` and falls to edge
/// `m+2`, with `n_mels + 2` edges equally spaced on the mel scale.
pub fn mel_filterbank(cfg: &MelConfig, n_bins: usize, sample_rate: u32) -> Result<Matrix> {
    let nyquist = sample_rate as f64 / 2.0;
    let f_max = cfg.f_max.unwrap_or(nyquist);
    if f_max > nyquist + 1e-9 {
        return Err(Error::Config(format!(
            "f_max {f_max} Hz exceeds Nyquist {nyquist} Hz"
        )));
    }
    if !(cfg.f_min >= 0.0 && cfg.f_min < f_max) {
        return Err(Error::Config(format!(
            "need 0 <= f_min < f_max, got {} and {f_max}",
            cfg.f_min
        )));
    }
    if cfg.n_mels == 0 || cfg.n_mels > n_bins {
        return Err(Error::Config(format!(
            "n_mels {} must be in 1..={n_bins}",
            cfg.n_mels
        )));
    }
    if !(cfg.log_floor > 0.0) {
        return Err(Error::Config("log_floor must be positive".into()));
    }
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let fft_size = 2 * (n_bins - 1);
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut fb = Matrix::from_fn(cfg.n_mels, n_bins, |m, k| {
        let f = k as f64 * bin_hz;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0)
    });
    // Filters narrower than the bin spacing can miss every bin centre; such a
    // filter takes the bin nearest its peak.
    for m in 0..cfg.n_mels {
        if fb.row(m).iter().all(|&v| v == 0.0) {
            let k = ((edges[m + 1] / bin_hz).round() as usize).min(n_bins - 1);
            fb.set(m, k, 1.0);
        }
    }
    Ok(fb)
}

pub fn log_mel(spec: &ComplexSpectrogram, cfg: &MelConfig, sample_rate: u32) -> Result<LogMelSpectrogram> {
    let fb = mel_filterbank(cfg, spec.n_bins(), sample_rate)?;
    log_mel_with(&fb, spec, cfg.log_floor)
}

/// Applies a precomputed filterbank; avoids rebuilding it per clip.
pub fn log_mel_with(fb: &Matrix, spec: &ComplexSpectrogram, log_floor: f64) -> Result<LogMelSpectrogram> {
    let mel = fb.matmul(&spec.power())?;
    Ok(LogMelSpectrogram {
        values: mel.map(|v| (log_floor + v).ln()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, AudioSignal, StftConfig};

    #[test]
    fn zero_spectrogram_is_log_floor() {
        let cfg = MelConfig::default();
        let spec = stft(&AudioSignal::silence(4000, 16000), &StftConfig::default()).unwrap();
        let lm = log_mel(&spec, &cfg, 16000).unwrap();
        assert_eq!(lm.values.rows(), 128);
        assert!(lm.values.data().iter().all(|v| *v == cfg.log_floor.ln()));
    }

    #[test]
    fn filter_rows_non_negative_with_positive_sum() {
        for sr in [16000, 22050, 44100] {
            let fb = mel_filterbank(&MelConfig::default(), 513, sr).unwrap();
            assert!(fb.min() >= 0.0);
            for m in 0..fb.rows() {
                assert!(fb.row(m).iter().sum::<f64>() > 0.0, "row {m} at {sr}");
            }
        }
    }

    #[test]
    fn f_max_above_nyquist_rejected() {
        let cfg = MelConfig {
            f_max: Some(9000.0),
            ..Default::default()
        };
        assert!(matches!(mel_filterbank(&cfg, 513, 16000), Err(Error::Config(_))));
    }

    /// Filter peaks from an independent mel formulation (natural-log form of
    /// the HTK scale, `1127·ln(1 + f/700)`).
    fn oracle_centres(n_mels: usize, f_max: f64) -> Vec<f64> {
        let to_mel = |f: f64| 1127.0 * (f / 700.0).ln_1p();
        let to_hz = |m: f64| 700.0 * ((m / 1127.0).exp() - 1.0);
        let top = to_mel(f_max);
        (1..=n_mels).map(|i| to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
    }

    #[test]
    fn sine_lands_in_its_band() {
        let cfg = MelConfig {
            n_mels: 40,
            ..Default::default()
        };
        let centres = oracle_centres(40, 8000.0);
        for j in [5usize, 12, 20, 33] {
            let f = centres[j];
            let x: Vec<f64> = (0..16000)
                .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).sin())
                .collect();
            let spec = stft(&AudioSignal::new(x, 16000).unwrap(), &StftConfig::default()).unwrap();
            let lm = log_mel(&spec, &cfg, 16000).unwrap();
            let t = lm.values.cols() / 2;
            let best = (0..40)
                .max_by(|&a, &b| lm.values.get(a, t).total_cmp(&lm.values.get(b, t)))
                .unwrap();
            assert_eq!(best, j);
        }
    }
}
