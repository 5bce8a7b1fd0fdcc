use serde::{Deserialize, Serialize};

use super::model::InterpreterModel;
use crate::classifier::head_activation_backward;
use crate::error::{shape_err, Error, Result};
use crate::net::{binary_cross_entropy, categorical_cross_entropy, Tensor};
use crate::nmf::{Activations, Dictionary};
use crate::numerics::Matrix;
use crate::synthgen::TaskMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Divide the sparsity term by the frame count.
    pub l1_per_frame: bool,
    /// Average the reconstruction term over spectrogram entries instead of summing.
    pub nmf_mean: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 10.0, beta: 0.8, l1_per_frame: false, nmf_mean: false }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Batch-mean loss terms; `weighted_*` include `α` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub fidelity: f64,
    pub nmf: f64,
    pub l1: f64,
    pub weighted_nmf: f64,
    pub weighted_l1: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, other: &LossBreakdown, scale: f64) {
        self.fidelity += scale * other.fidelity;
        self.nmf += scale * other.nmf;
        self.l1 += scale * other.l1;
        self.weighted_nmf += scale * other.weighted_nmf;
        self.weighted_l1 += scale * other.weighted_l1;
        self.total += scale * other.total;
    }
}

/// Cross-entropy between the interpreter's output and the classifier's.
pub fn loss_fidelity(interp_probs: &[f64], f_probs: &[f64], mode: TaskMode) -> Result<f64> {
    Ok(match mode {
        TaskMode::MultiClass => categorical_cross_entropy(interp_probs, f_probs)?.0,
        TaskMode::MultiLabel => binary_cross_entropy(interp_probs, f_probs)?.0,
    })
}

/// `‖X − W·H_I‖²_F`.
pub fn loss_nmf(h_i: &Activations, x: &Matrix, w: &Dictionary) -> Result<f64> {
    if x.rows() != w.n_bins() || x.cols() != h_i.h().cols() || h_i.h().rows() != w.k() {
        return Err(shape_err!(
            "X {:?}, W {:?} and H {:?} are incompatible",
            x.shape(),
            w.w().shape(),
            h_i.h().shape()
        ));
    }
    Ok(x.sub(&w.w().matmul(h_i.h())?)?.frobenius_sq())
}

/// One training example with every frozen-classifier quantity precomputed.
#[derive(Debug, Clone)]
pub struct InterpreterExample {
    pub id: String,
    /// Resized, concatenated classifier taps.
    pub psi_input: Tensor,
    /// Full-resolution log-magnitude spectrogram.
    pub x: Matrix,
    pub f_probs: Vec<f64>,
}

impl InterpreterModel {
    /// Loss of one example; adds `scale ×` its parameter gradients to `grads`
    /// when given.
    pub(crate) fn example_loss(
        &self,
        ex: &InterpreterExample,
        weights: &LossWeights,
        grads: Option<(&mut [Vec<Tensor>], f64)>,
    ) -> Result<LossBreakdown> {
        let (fwd, tape) = self.forward_taped(&ex.psi_input)?;
        let w = self.dictionary().w();
        let h = fwd.h_i.h();
        let t = h.cols();
        if ex.x.rows() != w.rows() || ex.x.cols() != t {
            return Err(shape_err!("spectrogram {:?} does not match H_I {:?}", ex.x.shape(), h.shape()));
        }
        let (fid, dp) = match self.mode() {
            TaskMode::MultiClass => categorical_cross_entropy(&fwd.probs, &ex.f_probs)?,
            TaskMode::MultiLabel => binary_cross_entropy(&fwd.probs, &ex.f_probs)?,
        };
        let residual = ex.x.sub(&w.matmul(h)?)?;
        let nmf_scale = if weights.nmf_mean { 1.0 / (residual.rows() * t) as f64 } else { 1.0 };
        let nmf = residual.frobenius_sq() * nmf_scale;
        let l1_scale = if weights.l1_per_frame { 1.0 / t as f64 } else { 1.0 };
        let l1 = h.sum() * l1_scale;
        let out = LossBreakdown {
            fidelity: fid,
            nmf,
            l1,
            weighted_nmf: weights.alpha * nmf,
            weighted_l1: weights.beta * l1,
            total: fid + weights.alpha * nmf + weights.beta * l1,
        };
        if let Some((grads, scale)) = grads {
            let mut dlogits = head_activation_backward(self.mode(), &fwd.probs, &dp);
            for v in &mut dlogits {
                *v *= scale;
            }
            let dz = self.head.backward(&tape.head, &Tensor::from_vec(dlogits), &mut grads[2])?;
            let mut dh = self.pool.backward(&tape.pool, &dz, &mut grads[1])?;
            let recon = w.t_matmul(&residual)?;
            for (d, r) in dh.data_mut().iter_mut().zip(recon.data()) {
                *d += scale * (-2.0 * weights.alpha * nmf_scale * r + weights.beta * l1_scale);
            }
            self.psi.backward(&tape.psi, &dh, &mut grads[0])?;
        }
        Ok(out)
    }
}

/// Batch-mean of `L_FID + α·L_NMF + β·‖H_I‖₁`.
pub fn total_loss(batch: &[InterpreterExample], model: &InterpreterModel, weights: &LossWeights) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let mut sum = LossBreakdown::default();
    for ex in batch {
        sum.accumulate(&model.example_loss(ex, weights, None)?, 1.0 / batch.len() as f64);
    }
    Ok(sum)
}

/// Batch-mean loss and its gradient for every interpreter parameter, in
/// `Ψ`, pooling, head order.
pub fn loss_and_gradients(
    batch: &[InterpreterExample],
    model: &InterpreterModel,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = model.zero_grads();
    let mut sum = LossBreakdown::default();
    for ex in batch {
        let b = model.example_loss(ex, weights, Some((&mut grads, scale)))?;
        sum.accumulate(&b, scale);
    }
    Ok((sum, grads.into_iter().flatten().collect()))
}
