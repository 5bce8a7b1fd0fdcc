use std::collections::BTreeMap;

use super::{Activations, Dictionary};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

/// Per-component soft-masked spectrograms `X_k = (w_k h_kᵀ / WH) ⊙ X`.
///
/// Where `WH ≤ epsilon` every mask is 0, so the masks sum to exactly one
/// wherever the model is active and to zero elsewhere.
pub fn soft_mask_components(
    x: &Matrix,
    w: &Dictionary,
    h: &Activations,
    ks: &[usize],
    epsilon: f64,
) -> Result<BTreeMap<usize, Matrix>> {
    let wh = check_and_model(x, w, h)?;
    let mut out = BTreeMap::new();
    for &k in ks {
        if k >= w.k() {
            return Err(Error::Index(format!("component {k} >= K = {}", w.k())));
        }
        out.insert(k, masked(x, w, h, &wh, &[k], epsilon));
    }
    Ok(out)
}

/// `Σ_{k ∈ ks} X_k` computed as one combined mask.
pub fn soft_mask_sum(x: &Matrix, w: &Dictionary, h: &Activations, ks: &[usize], epsilon: f64) -> Result<Matrix> {
    let wh = check_and_model(x, w, h)?;
    if let Some(k) = ks.iter().find(|&&k| k >= w.k()) {
        return Err(Error::Index(format!("component {k} >= K = {}", w.k())));
    }
    Ok(masked(x, w, h, &wh, ks, epsilon))
}

fn check_and_model(x: &Matrix, w: &Dictionary, h: &Activations) -> Result<Matrix> {
    if w.n_bins() != x.rows() || h.h().rows() != w.k() || h.h().cols() != x.cols() {
        return Err(shape_err!(
            "X {:?}, W {:?}, H {:?} are incompatible",
            x.shape(),
            w.w().shape(),
            h.h().shape()
        ));
    }
    w.w().matmul(h.h())
}

fn masked(x: &Matrix, w: &Dictionary, h: &Activations, wh: &Matrix, ks: &[usize], epsilon: f64) -> Matrix {
    let (f, t) = x.shape();
    Matrix::from_fn(f, t, |r, c| {
        let total = wh.get(r, c);
        if total <= epsilon {
            return 0.0;
        }
        let part: f64 = ks.iter().map(|&k| w.w().get(r, k) * h.h().get(k, c)).sum();
        (part / total) * x.get(r, c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_case(seed: u64, k: usize) -> (Matrix, Dictionary, Activations) {
        let mut rng = SeededRng::new(seed);
        let w = Dictionary::normalized(Matrix::from_fn(10, k, |_, _| rng.uniform()), None).unwrap();
        let h = Activations::new(Matrix::from_fn(k, 7, |_, _| rng.uniform())).unwrap();
        let x = Matrix::from_fn(10, 7, |_, _| rng.uniform() * 4.0);
        (x, w, h)
    }

    #[test]
    fn single_component_mask_is_identity() {
        let (x, w, h) = random_case(1, 1);
        let parts = soft_mask_components(&x, &w, &h, &[0], 1e-12).unwrap();
        for (a, b) in parts[&0].data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masks_partition_unity() {
        let (x, w, h) = random_case(2, 5);
        let all: Vec<usize> = (0..5).collect();
        let parts = soft_mask_components(&x, &w, &h, &all, 1e-12).unwrap();
        let mut sum = Matrix::zeros(10, 7);
        for m in parts.values() {
            assert!(m.min() >= 0.0);
            sum.add_assign(m).unwrap();
        }
        for (a, b) in sum.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        let combined = soft_mask_sum(&x, &w, &h, &all, 1e-12).unwrap();
        for (a, b) in combined.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_activation_row_gives_zero() {
        let (x, w, h) = random_case(3, 3);
        let mut hm = h.into_matrix();
        hm.row_mut(1).fill(0.0);
        let h = Activations::new(hm).unwrap();
        let parts = soft_mask_components(&x, &w, &h, &[1], 1e-12).unwrap();
        assert_eq!(parts[&1].max(), 0.0);
    }

    #[test]
    fn inactive_model_masks_to_zero_and_bad_index_errors() {
        let (x, w, _) = random_case(4, 2);
        let h = Activations::new(Matrix::zeros(2, 7)).unwrap();
        let parts = soft_mask_components(&x, &w, &h, &[0, 1], 1e-12).unwrap();
        assert!(parts.values().all(|m| m.max() == 0.0));
        assert!(matches!(
            soft_mask_components(&x, &w, &h, &[2], 1e-12),
            Err(Error::Index(_))
        ));
    }
}
