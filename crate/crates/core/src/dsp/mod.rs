//! Audio I/O, STFT analysis and synthesis, log-magnitude and log-mel features.

mod mel;
mod spectrogram;
mod stft;
mod wav;

pub use mel::{hz_to_mel, log_mel, log_mel_with, mel_filterbank, mel_to_hz, LogMelSpectrogram, MelConfig};
pub use spectrogram::{inv, log_magnitude, LogMagSpectrogram, Phase};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, Window};
pub use wav::{load_wav, save_wav, AudioSignal};

use crate::error::Result;

/// Log-magnitude spectrogram and phase of a signal in one call.
pub fn analyze(signal: &AudioSignal, cfg: &StftConfig) -> Result<(LogMagSpectrogram, Phase)> {
    log_magnitude(&stft(signal, cfg)?)
}

/// Fraction of STFT power whose bin centre lies in `[f_lo, f_hi]`.
pub fn band_energy_fraction(signal: &AudioSignal, cfg: &StftConfig, f_lo: f64, f_hi: f64) -> Result<f64> {
    let power = stft(signal, cfg)?.power();
    let bin_hz = signal.sample_rate as f64 / cfg.fft_size as f64;
    let mut inside = 0.0;
    let mut total = 0.0;
    for k in 0..power.rows() {
        let f = k as f64 * bin_hz;
        let e: f64 = power.row(k).iter().sum();
        total += e;
        if f >= f_lo && f <= f_hi {
            inside += e;
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}
