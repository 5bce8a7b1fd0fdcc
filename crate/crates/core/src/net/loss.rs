use crate::error::{shape_err, Result};

/// Probabilities are clamped into this range before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

fn clamp(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (p, false)
    }
}

/// `−Σ target·ln p`, and its gradient with respect to `p` (zero where the
/// clamp is active).
pub fn categorical_cross_entropy(probs: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if probs.len() != target.len() {
        return Err(shape_err!("{} probabilities vs {} targets", probs.len(), target.len()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (i, (&p, &f)) in probs.iter().zip(target).enumerate() {
        let (pc, clamped) = clamp(p);
        loss -= f * pc.ln();
        if !clamped {
            grad[i] = -f / pc;
        }
    }
    Ok((loss, grad))
}

/// `−Σ f·ln p + (1−f)·ln(1−p)`, and its gradient with respect to `p`.
pub fn binary_cross_entropy(probs: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if probs.len() != target.len() {
        return Err(shape_err!("{} probabilities vs {} targets", probs.len(), target.len()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (i, (&p, &f)) in probs.iter().zip(target).enumerate() {
        let (pc, clamped) = clamp(p);
        loss -= f * pc.ln() + (1.0 - f) * (1.0 - pc).ln();
        if !clamped {
            grad[i] = -f / pc + (1.0 - f) / (1.0 - pc);
        }
    }
    Ok((loss, grad))
}
