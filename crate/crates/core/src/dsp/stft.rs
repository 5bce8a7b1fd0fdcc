use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann window.
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
    pub center_padding: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 512,
            window: Window::Hann,
            center_padding: true,
        }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Checks sizes and that the window overlap-adds to a constant at `hop`.
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "invalid STFT sizes fft_size={} hop={}",
                self.fft_size, self.hop
            )));
        }
        let w = self.window.coefficients(self.fft_size);
        let sums: Vec<f64> = (0..self.hop)
            .map(|phase| w.iter().skip(phase).step_by(self.hop).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if sums.iter().any(|s| (s - mean).abs() > 1e-9 * mean.max(1.0)) {
            return Err(Error::Config(format!(
                "window does not satisfy COLA at hop {} for fft_size {}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    /// Number of frames for a signal of `len` samples.
    ///
    /// With centre padding frames are centred at `t·hop` for
    /// `t = 0..=ceil(len/hop)`, so every input sample lies between two frame
    /// centres. Without padding, `1 + ceil(max(len − fft_size, 0)/hop)` frames
    /// start at `t·hop` and the tail is zero-padded.
    pub fn frame_count(&self, len: usize) -> usize {
        if self.center_padding {
            1 + len.div_ceil(self.hop)
        } else {
            1 + len.saturating_sub(self.fft_size).div_ceil(self.hop)
        }
    }

    fn left_pad(&self) -> usize {
        if self.center_padding {
            self.fft_size / 2
        } else {
            0
        }
    }
}

/// Complex STFT with `fft_size/2 + 1` rows (bins) and one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub real: Matrix,
    pub imag: Matrix,
}

impl ComplexSpectrogram {
    pub fn n_bins(&self) -> usize {
        self.real.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.real.cols()
    }

    pub fn magnitude(&self) -> Matrix {
        self.real
            .zip_map(&self.imag, f64::hypot)
            .expect("parts share a shape")
    }

    pub fn power(&self) -> Matrix {
        self.real
            .zip_map(&self.imag, |r, i| r * r + i * i)
            .expect("parts share a shape")
    }
}

pub fn stft(signal: &AudioSignal, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptyInput("cannot analyse an empty signal".into()));
    }
    let n = cfg.fft_size;
    let bins = cfg.n_bins();
    let frames = cfg.frame_count(signal.len());
    let pad = cfg.left_pad();
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut real = Matrix::zeros(bins, frames);
    let mut imag = Matrix::zeros(bins, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = (t * cfg.hop) as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let x = if idx >= 0 && (idx as usize) < signal.len() {
                signal.samples[idx as usize]
            } else {
                0.0
            };
            *slot = Complex::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(bins).enumerate() {
            real.set(k, t, c.re);
            imag.set(k, t, c.im);
        }
    }
    Ok(ComplexSpectrogram { real, imag })
}

/// Weighted overlap-add inverse STFT.
///
/// Each inverse frame is multiplied by the synthesis window and the sum is
/// divided by the overlapped squared window, which inverts [`stft`] exactly
/// wherever that sum is non-zero. Output is trimmed or zero-padded to `out_len`.
pub fn istft(
    spec: &ComplexSpectrogram,
    cfg: &StftConfig,
    out_len: usize,
    sample_rate: u32,
) -> Result<AudioSignal> {
    cfg.validate()?;
    spec.real.check_same_shape(&spec.imag)?;
    let n = cfg.fft_size;
    let bins = cfg.n_bins();
    if spec.n_bins() != bins {
        return Err(shape_err!(
            "spectrogram has {} bins, config expects {bins}",
            spec.n_bins()
        ));
    }
    let frames = spec.n_frames();
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let total = (frames.max(1) - 1) * cfg.hop + n;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    for t in 0..frames {
        for k in 0..bins {
            let mut c = Complex::new(spec.real.get(k, t), spec.imag.get(k, t));
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                c.im = 0.0;
            }
            buf[k] = c;
            if k > 0 && k < n - k {
                buf[n - k] = c.conj();
            }
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            acc[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let pad = cfg.left_pad();
    let samples = (0..out_len)
        .map(|i| {
            let j = i + pad;
            if j < total && norm[j] > 1e-10 {
                acc[j] / norm[j]
            } else {
                0.0
            }
        })
        .collect();
    AudioSignal::new(samples, sample_rate)
}
