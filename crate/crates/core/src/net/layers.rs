use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{gemm, SeededRng};

/// Declarative layer description (hyperparameters only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1, zero "same" padding, odd square kernel.
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    /// Per-channel `scale·x + shift`, initialised to identity.
    ChannelAffine { channels: usize },
    Dense { inputs: usize, outputs: usize },
    Relu,
    /// Non-overlapping `size×size` max pooling, ceil mode.
    MaxPool2d { size: usize },
    /// Non-overlapping `size×size` average pooling, ceil mode.
    AvgPool2d { size: usize },
    /// `(C, H, W) → (C, W)` mean over the frequency axis.
    MeanOverFreq,
    /// `(C, H, W) → (C)`.
    GlobalAvgPool,
    Softmax,
    Sigmoid,
    /// `(K, T) → (K)`: `a = softmax_t(uᵀ tanh(V h_t))`, `z = H a`.
    AttentionPool1d { features: usize, hidden: usize },
    /// `(K, T) → (K)`, `z_k = max_t H[k, t]`.
    MaxPool1dOverTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d { weight: Tensor, bias: Tensor },
    ChannelAffine { scale: Tensor, shift: Tensor },
    Dense { weight: Tensor, bias: Tensor },
    Relu,
    MaxPool2d { size: usize },
    AvgPool2d { size: usize },
    MeanOverFreq,
    GlobalAvgPool,
    Softmax,
    Sigmoid,
    AttentionPool1d { v: Tensor, u: Tensor },
    MaxPool1dOverTime,
}

/// What a layer's backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv { cols: Vec<f64>, dims: (usize, usize, usize) },
    Input(Tensor),
    Output(Tensor),
    Argmax { index: Vec<usize>, in_shape: Vec<usize> },
    Shape(Vec<usize>),
    Attention { h: Tensor, act: Vec<f64>, weights: Vec<f64> },
}

impl Layer {
    /// Fresh layer: Glorot-uniform weights, zero biases, identity affines.
    pub fn init(spec: &LayerSpec, rng: &mut SeededRng) -> Result<Layer> {
        Ok(match *spec {
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                if kernel % 2 == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(Error::Config("conv needs an odd kernel and >= 1 channel".into()));
                }
                let kk = kernel * kernel;
                Layer::Conv2d {
                    weight: Tensor::he(&[out_channels, in_channels, kernel, kernel], in_channels * kk, rng),
                    bias: Tensor::zeros(&[out_channels]),
                }
            }
            LayerSpec::ChannelAffine { channels } => Layer::ChannelAffine {
                scale: Tensor::filled(&[channels], 1.0),
                shift: Tensor::zeros(&[channels]),
            },
            LayerSpec::Dense { inputs, outputs } => Layer::Dense {
                weight: Tensor::glorot(&[outputs, inputs], inputs, outputs, rng),
                bias: Tensor::zeros(&[outputs]),
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool2d { size } | LayerSpec::AvgPool2d { size } if size == 0 => {
                return Err(Error::Config("pool size must be >= 1".into()))
            }
            LayerSpec::MaxPool2d { size } => Layer::MaxPool2d { size },
            LayerSpec::AvgPool2d { size } => Layer::AvgPool2d { size },
            LayerSpec::MeanOverFreq => Layer::MeanOverFreq,
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::AttentionPool1d { features, hidden } => Layer::AttentionPool1d {
                v: Tensor::glorot(&[hidden, features], features, hidden, rng),
                u: Tensor::glorot(&[hidden], hidden, 1, rng),
            },
            LayerSpec::MaxPool1dOverTime => Layer::MaxPool1dOverTime,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d { weight, .. } => {
                let s = weight.shape();
                LayerSpec::Conv2d { in_channels: s[1], out_channels: s[0], kernel: s[2] }
            }
            Layer::ChannelAffine { scale, .. } => LayerSpec::ChannelAffine { channels: scale.len() },
            Layer::Dense { weight, .. } => LayerSpec::Dense {
                inputs: weight.shape()[1],
                outputs: weight.shape()[0],
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2d { size } => LayerSpec::MaxPool2d { size: *size },
            Layer::AvgPool2d { size } => LayerSpec::AvgPool2d { size: *size },
            Layer::MeanOverFreq => LayerSpec::MeanOverFreq,
            Layer::GlobalAvgPool => LayerSpec::GlobalAvgPool,
            Layer::Softmax => LayerSpec::Softmax,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::AttentionPool1d { v, .. } => LayerSpec::AttentionPool1d {
                features: v.shape()[1],
                hidden: v.shape()[0],
            },
            Layer::MaxPool1dOverTime => LayerSpec::MaxPool1dOverTime,
        }
    }

    /// Parameter tensors with their local names, in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Conv2d { weight, bias } | Layer::Dense { weight, bias } => {
                vec![("weight", weight), ("bias", bias)]
            }
            Layer::ChannelAffine { scale, shift } => vec![("scale", scale), ("shift", shift)],
            Layer::AttentionPool1d { v, u } => vec![("v", v), ("u", u)],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d { weight, bias } | Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::ChannelAffine { scale, shift } => vec![scale, shift],
            Layer::AttentionPool1d { v, u } => vec![v, u],
            _ => vec![],
        }
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Conv2d { weight, bias } => conv_forward(weight, bias, x),
            Layer::ChannelAffine { scale, shift } => {
                let (c, h, w) = x.dims3()?;
                if c != scale.len() {
                    return Err(shape_err!("affine over {} channels got {c}", scale.len()));
                }
                let hw = h * w;
                let mut out = x.clone();
                for ch in 0..c {
                    let (s, b) = (scale.data()[ch], shift.data()[ch]);
                    for v in &mut out.data_mut()[ch * hw..(ch + 1) * hw] {
                        *v = s * *v + b;
                    }
                }
                Ok((out, Cache::Input(x.clone())))
            }
            Layer::Dense { weight, bias } => {
                let (o, i) = (weight.shape()[0], weight.shape()[1]);
                if x.len() != i {
                    return Err(shape_err!("dense layer expects {i} inputs, got {}", x.len()));
                }
                let mut out = bias.data().to_vec();
                gemm(o, i, 1, weight.data(), false, x.data(), false, &mut out, 1.0);
                Ok((Tensor::from_vec(out), Cache::Input(x.clone())))
            }
            Layer::Relu => {
                let data = x.data().iter().map(|v| v.max(0.0)).collect();
                Ok((Tensor::new(x.shape().to_vec(), data)?, Cache::Input(x.clone())))
            }
            Layer::MaxPool2d { size } => maxpool_forward(x, *size),
            Layer::AvgPool2d { size } => avgpool_forward(x, *size),
            Layer::MeanOverFreq => {
                let (c, h, w) = x.dims3()?;
                let mut out = vec![0.0; c * w];
                for ch in 0..c {
                    for r in 0..h {
                        let row = &x.data()[(ch * h + r) * w..(ch * h + r + 1) * w];
                        for (o, v) in out[ch * w..(ch + 1) * w].iter_mut().zip(row) {
                            *o += v / h as f64;
                        }
                    }
                }
                Ok((Tensor::new(vec![c, w], out)?, Cache::Shape(x.shape().to_vec())))
            }
            Layer::GlobalAvgPool => {
                let (c, h, w) = x.dims3()?;
                let hw = (h * w) as f64;
                let out = (0..c)
                    .map(|ch| x.data()[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / hw)
                    .collect();
                Ok((Tensor::from_vec(out), Cache::Shape(x.shape().to_vec())))
            }
            Layer::Softmax => {
                let out = Tensor::from_vec(softmax(x.data()));
                Ok((out.clone(), Cache::Output(out)))
            }
            Layer::Sigmoid => {
                let out = Tensor::from_vec(x.data().iter().map(|&v| sigmoid(v)).collect());
                Ok((out.clone(), Cache::Output(out)))
            }
            Layer::AttentionPool1d { v, u } => attention_forward(v, u, x),
            Layer::MaxPool1dOverTime => {
                let (k, t) = x.dims2()?;
                if t == 0 {
                    return Err(shape_err!("cannot max-pool zero frames"));
                }
                let mut out = Vec::with_capacity(k);
                let mut index = Vec::with_capacity(k);
                for r in 0..k {
                    let row = &x.data()[r * t..(r + 1) * t];
                    let (best, val) = argmax(row);
                    out.push(val);
                    index.push(r * t + best);
                }
                Ok((Tensor::from_vec(out), Cache::Argmax { index, in_shape: x.shape().to_vec() }))
            }
        }
    }

    /// Returns the input gradient and writes parameter gradients (same order
    /// as [`Layer::params`]) into `grads`.
    pub(crate) fn backward(&self, cache: &Cache, dy: &Tensor, grads: &mut [Tensor]) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Conv2d { weight, .. }, Cache::Conv { cols, dims }) => conv_backward(weight, cols, *dims, dy, grads),
            (Layer::ChannelAffine { scale, .. }, Cache::Input(x)) => {
                let (c, h, w) = x.dims3()?;
                let hw = h * w;
                let mut dx = dy.clone();
                for ch in 0..c {
                    let s = scale.data()[ch];
                    let xs = &x.data()[ch * hw..(ch + 1) * hw];
                    let ds = &dy.data()[ch * hw..(ch + 1) * hw];
                    grads[0].data_mut()[ch] += xs.iter().zip(ds).map(|(a, b)| a * b).sum::<f64>();
                    grads[1].data_mut()[ch] += ds.iter().sum::<f64>();
                    for v in &mut dx.data_mut()[ch * hw..(ch + 1) * hw] {
                        *v *= s;
                    }
                }
                Ok(dx)
            }
            (Layer::Dense { weight, .. }, Cache::Input(x)) => {
                let (o, i) = (weight.shape()[0], weight.shape()[1]);
                gemm(o, 1, i, dy.data(), false, x.data(), false, grads[0].data_mut(), 1.0);
                for (g, d) in grads[1].data_mut().iter_mut().zip(dy.data()) {
                    *g += d;
                }
                let mut dx = vec![0.0; i];
                gemm(i, o, 1, weight.data(), true, dy.data(), false, &mut dx, 0.0);
                Tensor::new(x.shape().to_vec(), dx)
            }
            (Layer::Relu, Cache::Input(x)) => {
                let data = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&xv, &d)| if xv > 0.0 { d } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            (Layer::MaxPool2d { .. } | Layer::MaxPool1dOverTime, Cache::Argmax { index, in_shape }) => {
                let mut dx = Tensor::zeros(in_shape);
                for (&i, d) in index.iter().zip(dy.data()) {
                    dx.data_mut()[i] += d;
                }
                Ok(dx)
            }
            (Layer::AvgPool2d { size }, Cache::Shape(in_shape)) => avgpool_backward(*size, in_shape, dy),
            (Layer::MeanOverFreq, Cache::Shape(in_shape)) => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let mut dx = Tensor::zeros(in_shape);
                for ch in 0..c {
                    let src = &dy.data()[ch * w..(ch + 1) * w];
                    for r in 0..h {
                        for (o, d) in dx.data_mut()[(ch * h + r) * w..(ch * h + r + 1) * w].iter_mut().zip(src) {
                            *o = d / h as f64;
                        }
                    }
                }
                Ok(dx)
            }
            (Layer::GlobalAvgPool, Cache::Shape(in_shape)) => {
                let hw = in_shape[1] * in_shape[2];
                let mut dx = Tensor::zeros(in_shape);
                for (ch, d) in dy.data().iter().enumerate() {
                    dx.data_mut()[ch * hw..(ch + 1) * hw].fill(d / hw as f64);
                }
                Ok(dx)
            }
            (Layer::Softmax, Cache::Output(p)) => {
                let dot: f64 = p.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
                Ok(Tensor::from_vec(
                    p.data().iter().zip(dy.data()).map(|(pi, di)| pi * (di - dot)).collect(),
                ))
            }
            (Layer::Sigmoid, Cache::Output(p)) => Ok(Tensor::from_vec(
                p.data().iter().zip(dy.data()).map(|(pi, di)| di * pi * (1.0 - pi)).collect(),
            )),
            (Layer::AttentionPool1d { v, u }, Cache::Attention { h, act, weights }) => {
                attention_backward(v, u, h, act, weights, dy, grads)
            }
            _ => Err(Error::Contract("tape entry does not match layer".into())),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

fn im2col(x: &[f64], (c, h, w): (usize, usize, usize), k: usize) -> Vec<f64> {
    let p = k / 2;
    let hw = h * w;
    let mut cols = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    let shift = kx as isize - p as isize;
                    let (x0, x1) = ((-shift).max(0) as usize, (w as isize - shift).min(w as isize).max(0) as usize);
                    for xx in x0..x1 {
                        dst[xx] = src[(xx as isize + shift) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), k: usize) -> Vec<f64> {
    let p = k / 2;
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let shift = kx as isize - p as isize;
                    let (x0, x1) = ((-shift).max(0) as usize, (w as isize - shift).min(w as isize).max(0) as usize);
                    let base = ch * hw + sy as usize * w;
                    for xx in x0..x1 {
                        x[base + (xx as isize + shift) as usize] += row[y * w + xx];
                    }
                }
            }
        }
    }
    x
}

fn conv_forward(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Result<(Tensor, Cache)> {
    let dims = x.dims3()?;
    let (c, h, w) = dims;
    let s = weight.shape();
    let (o, k) = (s[0], s[2]);
    if s[1] != c {
        return Err(shape_err!("conv expects {} input channels, got {c}", s[1]));
    }
    let cols = im2col(x.data(), dims, k);
    let hw = h * w;
    let mut out = vec![0.0; o * hw];
    for (oc, b) in bias.data().iter().enumerate() {
        out[oc * hw..(oc + 1) * hw].fill(*b);
    }
    gemm(o, c * k * k, hw, weight.data(), false, &cols, false, &mut out, 1.0);
    Ok((Tensor::new(vec![o, h, w], out)?, Cache::Conv { cols, dims }))
}

fn conv_backward(
    weight: &Tensor,
    cols: &[f64],
    dims: (usize, usize, usize),
    dy: &Tensor,
    grads: &mut [Tensor],
) -> Result<Tensor> {
    let (c, h, w) = dims;
    let s = weight.shape();
    let (o, k) = (s[0], s[2]);
    let hw = h * w;
    let ckk = c * k * k;
    gemm(o, hw, ckk, dy.data(), false, cols, true, grads[0].data_mut(), 1.0);
    for (oc, g) in grads[1].data_mut().iter_mut().enumerate() {
        *g += dy.data()[oc * hw..(oc + 1) * hw].iter().sum::<f64>();
    }
    let mut dcols = vec![0.0; ckk * hw];
    gemm(ckk, o, hw, weight.data(), true, dy.data(), false, &mut dcols, 0.0);
    Tensor::new(vec![c, h, w], col2im(&dcols, dims, k))
}

fn maxpool_forward(x: &Tensor, size: usize) -> Result<(Tensor, Cache)> {
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (h.div_ceil(size), w.div_ceil(size));
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut index = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = usize::MAX;
                let mut val = f64::NEG_INFINITY;
                for y in oy * size..((oy + 1) * size).min(h) {
                    for xx in ox * size..((ox + 1) * size).min(w) {
                        let i = (ch * h + y) * w + xx;
                        if x.data()[i] > val || best == usize::MAX {
                            val = x.data()[i];
                            best = i;
                        }
                    }
                }
                out.push(val);
                index.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        Cache::Argmax { index, in_shape: x.shape().to_vec() },
    ))
}

fn avgpool_forward(x: &Tensor, size: usize) -> Result<(Tensor, Cache)> {
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (h.div_ceil(size), w.div_ceil(size));
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (ys, xs) = (oy * size..((oy + 1) * size).min(h), ox * size..((ox + 1) * size).min(w));
                let n = (ys.len() * xs.len()) as f64;
                let mut acc = 0.0;
                for y in ys {
                    for xx in xs.clone() {
                        acc += x.data()[(ch * h + y) * w + xx];
                    }
                }
                out.push(acc / n);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, Cache::Shape(x.shape().to_vec())))
}

fn avgpool_backward(size: usize, in_shape: &[usize], dy: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h.div_ceil(size), w.div_ceil(size));
    let mut dx = Tensor::zeros(in_shape);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (ys, xs) = (oy * size..((oy + 1) * size).min(h), ox * size..((ox + 1) * size).min(w));
                let g = dy.data()[(ch * oh + oy) * ow + ox] / (ys.len() * xs.len()) as f64;
                for y in ys {
                    for xx in xs.clone() {
                        dx.data_mut()[(ch * h + y) * w + xx] += g;
                    }
                }
            }
        }
    }
    Ok(dx)
}

fn attention_forward(v: &Tensor, u: &Tensor, x: &Tensor) -> Result<(Tensor, Cache)> {
    let (k, t) = x.dims2()?;
    let (d, kv) = (v.shape()[0], v.shape()[1]);
    if kv != k {
        return Err(shape_err!("attention expects {kv} features, got {k}"));
    }
    if t == 0 {
        return Err(shape_err!("cannot pool zero frames"));
    }
    let mut act = vec![0.0; d * t];
    gemm(d, k, t, v.data(), false, x.data(), false, &mut act, 0.0);
    for a in &mut act {
        *a = a.tanh();
    }
    let mut scores = vec![0.0; t];
    gemm(1, d, t, u.data(), false, &act, false, &mut scores, 0.0);
    let weights = softmax(&scores);
    let mut z = vec![0.0; k];
    gemm(k, t, 1, x.data(), false, &weights, false, &mut z, 0.0);
    Ok((
        Tensor::from_vec(z),
        Cache::Attention { h: x.clone(), act, weights },
    ))
}

fn attention_backward(
    v: &Tensor,
    u: &Tensor,
    h: &Tensor,
    act: &[f64],
    weights: &[f64],
    dz: &Tensor,
    grads: &mut [Tensor],
) -> Result<Tensor> {
    let (k, t) = h.dims2()?;
    let d = v.shape()[0];
    // z = H a
    let mut dh = vec![0.0; k * t];
    gemm(k, 1, t, dz.data(), false, weights, false, &mut dh, 0.0);
    let mut da = vec![0.0; t];
    gemm(t, k, 1, h.data(), true, dz.data(), false, &mut da, 0.0);
    // a = softmax(s)
    let dot: f64 = weights.iter().zip(&da).map(|(a, b)| a * b).sum();
    let ds: Vec<f64> = weights.iter().zip(&da).map(|(a, g)| a * (g - dot)).collect();
    // s = uᵀ A, A = tanh(V H)
    gemm(d, t, 1, act, false, &ds, false, grads[1].data_mut(), 1.0);
    let mut dpre = vec![0.0; d * t];
    for j in 0..d {
        for tt in 0..t {
            let a = act[j * t + tt];
            dpre[j * t + tt] = u.data()[j] * ds[tt] * (1.0 - a * a);
        }
    }
    gemm(d, t, k, &dpre, false, h.data(), true, grads[0].data_mut(), 1.0);
    gemm(k, d, t, v.data(), true, &dpre, false, &mut dh, 1.0);
    Tensor::new(vec![k, t], dh)
}
