use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ClassSpec, DatasetSpec, EventKind, TaskMode};
use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// One labelled clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub signal: AudioSignal,
    /// One-hot (multi-class) or binary (multi-label), length C.
    pub label: Vec<f64>,
    pub id: String,
}

impl Sample {
    /// Indices of positive label entries.
    pub fn positives(&self) -> Vec<usize> {
        self.label
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.5)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub class_names: Vec<String>,
    pub mode: TaskMode,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn sample_rate(&self) -> Option<u32> {
        self.train
            .iter()
            .chain(&self.test)
            .map(|s| s.signal.sample_rate)
            .next()
    }
}

const FADE_SECONDS: f64 = 0.03;

/// Raised-cosine fade-in/out over `FADE_SECONDS` at each end.
fn envelope(i: usize, len: usize, sr: f64) -> f64 {
    let fade = ((FADE_SECONDS * sr) as usize).min(len / 2).max(1);
    let edge = i.min(len - 1 - i);
    if edge >= fade {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos()
    }
}

/// Synthesises one event of `class` lasting `len` samples, peak-normalised to
/// `amplitude`.
pub fn synthesize_event(class: &ClassSpec, len: usize, sr: u32, amplitude: f64, rng: &mut SeededRng) -> Vec<f64> {
    let srf = sr as f64;
    let (lo, hi) = class.synthesis_band();
    let t = |i: usize| i as f64 / srf;
    let mut x: Vec<f64> = match class.kind {
        EventKind::Tone => {
            let f = rng.uniform_range(lo, hi);
            let phase = rng.uniform() * 2.0 * PI;
            (0..len).map(|i| (2.0 * PI * f * t(i) + phase).sin()).collect()
        }
        EventKind::HarmonicStack => {
            let f0 = rng.uniform_range(lo, lo + 0.5 * (hi - lo));
            let spacing = f0 / 5.0;
            let partials: Vec<(f64, f64, f64)> = (0..)
                .map(|j| f0 + j as f64 * spacing)
                .take_while(|f| *f <= hi)
                .enumerate()
                .map(|(j, f)| (f, 1.0 / (j + 1) as f64, rng.uniform() * 2.0 * PI))
                .collect();
            (0..len)
                .map(|i| {
                    partials
                        .iter()
                        .map(|(f, a, p)| a * (2.0 * PI * f * t(i) + p).sin())
                        .sum()
                })
                .collect()
        }
        EventKind::Chirp => {
            let (fa, fb) = if rng.uniform() < 0.5 { (lo, hi) } else { (hi, lo) };
            let dur = len as f64 / srf;
            (0..len)
                .map(|i| {
                    let ti = t(i);
                    (2.0 * PI * (fa * ti + (fb - fa) * ti * ti / (2.0 * dur))).sin()
                })
                .collect()
        }
        EventKind::AmTone => {
            let rate = rng.uniform_range(4.0, 8.0);
            let depth = rng.uniform_range(0.5, 0.9);
            let f = rng.uniform_range(lo + rate, hi - rate);
            (0..len)
                .map(|i| {
                    let ti = t(i);
                    (1.0 + depth * (2.0 * PI * rate * ti).sin()) * (2.0 * PI * f * ti).sin()
                })
                .collect()
        }
        EventKind::NoiseBurst => band_limited_noise(len, sr, lo, hi, rng),
    };
    for (i, v) in x.iter_mut().enumerate() {
        *v *= envelope(i, len, srf);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= amplitude / peak;
        }
    }
    x
}

/// Gaussian noise with every FFT bin outside `[lo, hi]` zeroed.
fn band_limited_noise(len: usize, sr: u32, lo: f64, hi: f64, rng: &mut SeededRng) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = (0..len).map(|_| Complex::new(rng.normal(), 0.0)).collect();
    planner.plan_fft_forward(len).process(&mut buf);
    let bin_hz = sr as f64 / len as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * bin_hz;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re / len as f64).collect()
}

fn white_noise(len: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..len).map(|_| rng.normal()).collect()
}

fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

fn place_event(clip: &mut [f64], class: &ClassSpec, sr: u32, rng: &mut SeededRng) {
    let (dmin, dmax) = class.duration_range;
    let len = ((rng.uniform_range(dmin, dmax) * sr as f64) as usize).clamp(1, clip.len());
    let onset = rng.below(clip.len() - len + 1);
    let amp = rng.uniform_range(class.amplitude_range.0, class.amplitude_range.1);
    let event = synthesize_event(class, len, sr, amp, rng);
    for (dst, v) in clip[onset..onset + len].iter_mut().zip(event) {
        *dst += v;
    }
}

fn generate_sample(spec: &DatasetSpec, split: &str, index: usize) -> Result<Sample> {
    let id = format!("{split}-{index:05}");
    let mut rng = SeededRng::derive(spec.seed, &id);
    let n = (spec.clip_seconds * spec.sample_rate as f64).round() as usize;
    let c = spec.classes.len();
    let mut clip = vec![0.0; n];
    let mut label = vec![0.0; c];

    match spec.mode {
        TaskMode::MultiClass => {
            let class = index % c;
            place_event(&mut clip, &spec.classes[class], spec.sample_rate, &mut rng);
            label[class] = 1.0;
        }
        TaskMode::MultiLabel => {
            if rng.uniform() >= spec.background_only_fraction {
                let count = 1 + rng.below(spec.max_events_per_clip);
                for class in rng.sample_indices(c, count) {
                    place_event(&mut clip, &spec.classes[class], spec.sample_rate, &mut rng);
                    label[class] = 1.0;
                }
            }
        }
    }

    if let Some(snr) = spec.background_snr_db {
        let noise = white_noise(n, &mut rng);
        let p_signal = mean_power(&clip);
        // Background-only clips get noise at the level of a unit-amplitude event.
        let reference = if p_signal > 0.0 { p_signal } else { 0.125 };
        let scale = (reference / 10f64.powf(snr / 10.0) / mean_power(&noise)).sqrt();
        for (x, e) in clip.iter_mut().zip(noise) {
            *x += scale * e;
        }
    }

    Ok(Sample {
        signal: AudioSignal::new(clip, spec.sample_rate)?,
        label,
        id,
    })
}

/// Deterministic corpus; each clip draws from its own stream derived from
/// `(seed, id)`. Multi-class clips cycle through the classes in order.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let train = (0..spec.n_train)
        .map(|i| generate_sample(spec, "train", i))
        .collect::<Result<_>>()?;
    let test = (0..spec.n_test)
        .map(|i| generate_sample(spec, "test", i))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        train,
        test,
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        mode: spec.mode,
    })
}

/// Adds white Gaussian noise scaled so the realised SNR equals `snr_db`.
pub fn corrupt_with_noise(s: &Sample, snr_db: f64, seed: u64) -> Result<Sample> {
    let p_signal = s.signal.power();
    if !(p_signal > 0.0) {
        return Err(Error::DegenerateInput(format!("sample '{}' is silent", s.id)));
    }
    let mut rng = SeededRng::derive(seed, &s.id);
    let noise = white_noise(s.signal.len(), &mut rng);
    let scale = (p_signal / 10f64.powf(snr_db / 10.0) / mean_power(&noise)).sqrt();
    let samples = s
        .signal
        .samples
        .iter()
        .zip(noise)
        .map(|(x, e)| x + scale * e)
        .collect();
    Ok(Sample {
        signal: AudioSignal::new(samples, s.signal.sample_rate)?,
        label: s.label.clone(),
        id: format!("{}+noise{snr_db}dB", s.id),
    })
}

/// `a + gain_b·b`, zero-padding the shorter clip; keeps `a`'s label.
pub fn corrupt_with_mix(a: &Sample, b: &Sample, gain_b: f64) -> Result<Sample> {
    if a.signal.sample_rate != b.signal.sample_rate {
        return Err(Error::Config(format!(
            "cannot mix {} Hz with {} Hz",
            a.signal.sample_rate, b.signal.sample_rate
        )));
    }
    let n = a.signal.len().max(b.signal.len());
    let get = |s: &Sample, i: usize| s.signal.samples.get(i).copied().unwrap_or(0.0);
    let samples = (0..n).map(|i| get(a, i) + gain_b * get(b, i)).collect();
    Ok(Sample {
        signal: AudioSignal::new(samples, a.signal.sample_rate)?,
        label: a.label.clone(),
        id: format!("{}+mix({})", a.id, b.id),
    })
}
