use super::Tensor;
use crate::error::{shape_err, Result};
use crate::numerics::{gemm, Matrix};

/// `(out_len × in_len)` linear interpolation weights with half-pixel
/// centres and edge clamping.
pub fn interpolation_matrix(in_len: usize, out_len: usize) -> Matrix {
    let mut m = Matrix::zeros(out_len, in_len);
    let scale = in_len as f64 / out_len as f64;
    for i in 0..out_len {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(in_len - 1);
        let frac = src - i0 as f64;
        m.set(i, i0, m.get(i, i0) + 1.0 - frac);
        m.set(i, i1, m.get(i, i1) + frac);
    }
    m
}

/// Bilinear resize of every channel of a `(C, H, W)` tensor to `(C, out_h, out_w)`.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(shape_err!("cannot resize {:?} to ({out_h}, {out_w})", x.shape()));
    }
    let rh = interpolation_matrix(h, out_h);
    let rw = interpolation_matrix(w, out_w);
    let mut out = vec![0.0; c * out_h * out_w];
    let mut tmp = vec![0.0; out_h * w];
    for ch in 0..c {
        gemm(out_h, h, w, rh.data(), false, &x.data()[ch * h * w..(ch + 1) * h * w], false, &mut tmp, 0.0);
        gemm(out_h, w, out_w, &tmp, false, rw.data(), true, &mut out[ch * out_h * out_w..(ch + 1) * out_h * out_w], 0.0);
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Adjoint of [`resize_bilinear`]: maps an output gradient back to `in_shape`.
pub fn resize_bilinear_backward(dy: &Tensor, in_shape: &[usize]) -> Result<Tensor> {
    let (c, oh, ow) = dy.dims3()?;
    let [ci, h, w] = *in_shape else {
        return Err(shape_err!("expected a (C, H, W) input shape, got {in_shape:?}"));
    };
    if ci != c {
        return Err(shape_err!("channel mismatch {c} vs {ci}"));
    }
    let rh = interpolation_matrix(h, oh);
    let rw = interpolation_matrix(w, ow);
    let mut dx = vec![0.0; c * h * w];
    let mut tmp = vec![0.0; h * ow];
    for ch in 0..c {
        gemm(h, oh, ow, rh.data(), true, &dy.data()[ch * oh * ow..(ch + 1) * oh * ow], false, &mut tmp, 0.0);
        gemm(h, ow, w, &tmp, false, rw.data(), false, &mut dx[ch * h * w..(ch + 1) * h * w], 0.0);
    }
    Tensor::new(vec![c, h, w], dx)
}

/// Stacks `(C_i, H, W)` tensors along the channel axis.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| shape_err!("nothing to concatenate"))?;
    let (_, h, w) = first.dims3()?;
    let mut c = 0;
    let mut data = Vec::new();
    for p in parts {
        let (pc, ph, pw) = p.dims3()?;
        if (ph, pw) != (h, w) {
            return Err(shape_err!("cannot concatenate {:?} with {:?}", p.shape(), first.shape()));
        }
        c += pc;
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![c, h, w], data)
}

/// Splits a channel-concatenated gradient back into per-part tensors.
pub fn split_channels(dy: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (c, h, w) = dy.dims3()?;
    if channels.iter().sum::<usize>() != c {
        return Err(shape_err!("channel split {channels:?} does not sum to {c}"));
    }
    let mut start = 0;
    channels
        .iter()
        .map(|&n| {
            let t = Tensor::new(vec![n, h, w], dy.data()[start * h * w..(start + n) * h * w].to_vec());
            start += n;
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn identity_size_is_a_copy() {
        let x = Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(resize_bilinear(&x, 3, 4).unwrap(), x);
    }

    #[test]
    fn rows_of_interpolation_sum_to_one() {
        for (a, b) in [(3, 7), (8, 2), (5, 5), (1, 4), (16, 8)] {
            let m = interpolation_matrix(a, b);
            for r in 0..b {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_upsample_matches_hand_values() {
        let m = interpolation_matrix(2, 4);
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.75, 0.25]);
        assert_eq!(m.row(2), &[0.25, 0.75]);
        assert_eq!(m.row(3), &[0.0, 1.0]);
    }

    #[test]
    fn backward_is_the_adjoint() {
        let mut rng = SeededRng::new(9);
        let x = Tensor::new(vec![2, 5, 3], (0..30).map(|_| rng.normal()).collect()).unwrap();
        let y = Tensor::new(vec![2, 8, 7], (0..112).map(|_| rng.normal()).collect()).unwrap();
        let ax = resize_bilinear(&x, 8, 7).unwrap();
        let aty = resize_bilinear_backward(&y, x.shape()).unwrap();
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::filled(&[1, 2, 2], 1.0);
        let b = Tensor::filled(&[2, 2, 2], 2.0);
        let c = concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), &[3, 2, 2]);
        assert_eq!(split_channels(&c, &[1, 2]).unwrap(), vec![a, b]);
        assert!(concat_channels(&[Tensor::zeros(&[1, 2, 2]), Tensor::zeros(&[1, 3, 2])]).is_err());
    }
}
