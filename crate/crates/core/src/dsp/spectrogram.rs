use std::f64::consts::PI;

use super::{istft, AudioSignal, ComplexSpectrogram, StftConfig};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

/// `log(1 + |S|)`, non-negative, F×T.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMagSpectrogram {
    values: Matrix,
}

impl LogMagSpectrogram {
    /// Wraps values that must all be non-negative and finite.
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::Numerics("log-magnitude has non-finite entries".into()));
        }
        if values.min() < 0.0 {
            return Err(Error::Contract("log-magnitude must be non-negative".into()));
        }
        Ok(Self { values })
    }

    /// Like [`LogMagSpectrogram::new`] but clamps tiny negative round-off to 0.
    pub fn clamped(values: Matrix) -> Result<Self> {
        Self::new(values.map(|v| v.max(0.0)))
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }

    pub fn n_bins(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }
}

/// Phase in radians, `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub values: Matrix,
}

pub fn log_magnitude(spec: &ComplexSpectrogram) -> Result<(LogMagSpectrogram, Phase)> {
    spec.real.check_same_shape(&spec.imag)?;
    let mag = spec.magnitude();
    let logmag = LogMagSpectrogram::new(mag.map(f64::ln_1p))?;
    let phase = spec
        .real
        .zip_map(&spec.imag, |re, im| {
            let p = im.atan2(re);
            if p <= -PI {
                PI
            } else {
                p
            }
        })
        .expect("parts share a shape");
    Ok((logmag, Phase { values: phase }))
}

/// Rebuilds a waveform from a log-magnitude spectrogram and a phase.
///
/// The magnitude is `exp(X) − 1`, clamped at zero, so entries that could not
/// come from [`log_magnitude`] are silenced rather than rejected.
pub fn inv(
    x: &Matrix,
    phase: &Phase,
    cfg: &StftConfig,
    out_len: usize,
    sample_rate: u32,
) -> Result<AudioSignal> {
    if x.shape() != phase.values.shape() {
        return Err(shape_err!(
            "log-magnitude {:?} and phase {:?} differ in shape",
            x.shape(),
            phase.values.shape()
        ));
    }
    let mag = x.map(|v| v.exp_m1().max(0.0));
    let real = mag.zip_map(&phase.values, |m, p| m * p.cos())?;
    let imag = mag.zip_map(&phase.values, |m, p| m * p.sin())?;
    istft(&ComplexSpectrogram { real, imag }, cfg, out_len, sample_rate)
}
