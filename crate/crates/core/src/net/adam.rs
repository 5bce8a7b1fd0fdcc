use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Adam optimiser state with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, lr: f64) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, v: m.clone(), m }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One in-place Adam update. Fails before touching anything if a gradient is
/// not finite.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(shape_err!("param {i}: {:?} vs gradient {:?}", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::Numerics(format!("non-finite gradient in parameter {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *w -= state.lr * (*mi / c1) / ((*vi / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0]);
        let mut st = AdamState::new([&p], 0.1);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut st).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(st.step_count(), 10);
    }

    #[test]
    fn first_step_is_about_lr_for_any_scale() {
        for scale in [1e-4, 1.0, 1e4] {
            let mut p = Tensor::from_vec(vec![0.0]);
            let mut st = AdamState::new([&p], 0.01);
            adam_step(&mut [&mut p], &[Tensor::from_vec(vec![scale])], &mut st).unwrap();
            assert!((p.data()[0] + 0.01).abs() < 1e-5, "{}", p.data()[0]);
        }
    }

    #[test]
    fn quadratic_magnitude_decreases() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut st = AdamState::new([&p], 0.1);
        // independent scalar recursion
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut prev = 1.0f64;
        for t in 1..=50 {
            let g = p.data()[0];
            adam_step(&mut [&mut p], &[Tensor::from_vec(vec![g])], &mut st).unwrap();
            m = 0.9 * m + 0.1 * w;
            v = 0.999 * v + 0.001 * w * w;
            w -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((p.data()[0] - w).abs() < 1e-12);
            if t <= 8 {
                assert!(w.abs() < prev);
            }
            prev = w.abs();
        }
        assert!(p.data()[0].abs() < 1.0);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut st = AdamState::new([&p], 0.1);
        let err = adam_step(&mut [&mut p], &[Tensor::from_vec(vec![f64::NAN])], &mut st).unwrap_err();
        assert!(matches!(err, Error::Numerics(_)));
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(st.step_count(), 0);
    }
}
