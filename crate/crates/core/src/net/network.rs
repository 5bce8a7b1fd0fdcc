use std::sync::atomic::{AtomicU64, Ordering};

use super::layers::{Cache, Layer, LayerSpec};
use super::Tensor;
use crate::error::{Error, Result};
use crate::numerics::{hash_values, SeededRng, TensorBlob};

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// A sequential stack of layers.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    generation: u64,
}

/// Everything recorded by [`Network::forward`] that backward needs.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    caches: Vec<Cache>,
    output: Tensor,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Attention weights of the first attention-pooling layer, if any.
    pub fn attention_weights(&self) -> Option<&[f64]> {
        self.caches.iter().find_map(|c| match c {
            Cache::Attention { weights, .. } => Some(weights.as_slice()),
            _ => None,
        })
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, generation: next_generation() }
    }

    pub fn from_specs(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        let layers = specs.iter().map(|s| Layer::init(s, rng)).collect::<Result<_>>()?;
        Ok(Self::new(layers))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params().into_iter().map(|(_, t)| t)).collect()
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation = next_generation();
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Zeroed gradient buffers in [`Network::params`] order.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn hash(&self) -> String {
        hash_values(self.params().into_iter().map(|t| t.data()))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tape> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x)?;
            caches.push(cache);
            x = y;
        }
        Ok(Tape { generation: self.generation, caches, output: x })
    }

    /// Output only, without keeping the tape.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward(input)?.output)
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor, grads: &mut [Tensor]) -> Result<Tensor> {
        if tape.generation != self.generation || tape.caches.len() != self.layers.len() {
            return Err(Error::Contract("tape was recorded before the parameters changed".into()));
        }
        if upstream.shape() != tape.output.shape() {
            return Err(crate::error::shape_err!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                tape.output.shape()
            ));
        }
        let counts: Vec<usize> = self.layers.iter().map(|l| l.params().len()).collect();
        if grads.len() != counts.iter().sum::<usize>() {
            return Err(Error::Contract("gradient buffer does not match network".into()));
        }
        let mut offset: usize = counts.iter().sum();
        let mut dy = upstream.clone();
        for ((layer, cache), n) in self.layers.iter().zip(&tape.caches).zip(&counts).rev() {
            offset -= n;
            dy = layer.backward(cache, &dy, &mut grads[offset..offset + n])?;
        }
        Ok(dy)
    }

    /// Parameters as named blobs, `{prefix}{layer}.{name}`.
    pub fn to_blobs(&self, prefix: &str) -> Vec<TensorBlob> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params()
                    .into_iter()
                    .map(move |(name, t)| t.to_blob(format!("{prefix}{i}.{name}")))
            })
            .collect()
    }

    /// Rebuilds a network from its specs and the blobs written by [`Network::to_blobs`].
    pub fn from_blobs(specs: &[LayerSpec], blobs: &[TensorBlob], prefix: &str) -> Result<Self> {
        let mut rng = SeededRng::new(0);
        let mut net = Self::from_specs(specs, &mut rng)?;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let names: Vec<&str> = layer.params().into_iter().map(|(n, _)| n).collect();
            for (name, slot) in names.into_iter().zip(layer.params_mut()) {
                let key = format!("{prefix}{i}.{name}");
                let blob = blobs
                    .iter()
                    .find(|b| b.name == key)
                    .ok_or_else(|| Error::Format(format!("missing parameter blob {key}")))?;
                if blob.shape != slot.shape() {
                    return Err(Error::Format(format!(
                        "blob {key} has shape {:?}, expected {:?}",
                        blob.shape,
                        slot.shape()
                    )));
                }
                *slot = Tensor::from_blob(blob)?;
            }
        }
        net.generation = next_generation();
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{finite_diff_check, LayerSpec};

    fn identity_dense(n: usize) -> Network {
        let mut w = Tensor::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0;
        }
        Network::new(vec![Layer::Dense { weight: w, bias: Tensor::zeros(&[n]) }])
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let x = Tensor::from_vec(vec![0.3, -1.5, 2.0]);
        assert_eq!(identity_dense(3).predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_zeroes_negative_input() {
        let net = Network::new(vec![Layer::Relu]);
        let y = net.predict(&Tensor::from_vec(vec![-1.0, -0.1, -3.0])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softmax_sums_to_one() {
        let net = Network::new(vec![Layer::Softmax]);
        let y = net.predict(&Tensor::from_vec(vec![3.0, -20.0, 0.5, 700.0])).unwrap();
        assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(y.data().iter().all(|p| *p >= 0.0 && *p <= 1.0));
    }

    #[test]
    fn half_squared_norm_gradient_of_identity_is_input() {
        let net = identity_dense(4);
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let tape = net.forward(&x).unwrap();
        let mut g = net.zero_grads();
        let dx = net.backward(&tape, tape.output(), &mut g).unwrap();
        assert_eq!(dx, x);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(1);
        let net = Network::from_specs(
            &[
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { inputs: 2, outputs: 3 },
            ],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|_| rng.normal()).collect()).unwrap();
        let tape = net.forward(&x).unwrap();
        let mut g = net.zero_grads();
        net.backward(&tape, &Tensor::zeros(&[3]), &mut g).unwrap();
        assert!(g.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = identity_dense(2);
        let tape = net.forward(&Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        net.params_mut()[0].data_mut()[0] = 2.0;
        let mut g = net.zero_grads();
        let err = net.backward(&tape, &Tensor::from_vec(vec![1.0, 1.0]), &mut g).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn forward_is_bit_identical() {
        let mut rng = SeededRng::new(2);
        let net = Network::from_specs(&[LayerSpec::Dense { inputs: 5, outputs: 5 }, LayerSpec::Sigmoid], &mut rng).unwrap();
        let x = Tensor::from_vec((0..5).map(|_| rng.normal()).collect());
        assert_eq!(net.predict(&x).unwrap().data(), net.predict(&x).unwrap().data());
    }

    #[test]
    fn blob_round_trip_restores_parameters() {
        let mut rng = SeededRng::new(3);
        let specs = [LayerSpec::Dense { inputs: 3, outputs: 2 }, LayerSpec::ChannelAffine { channels: 2 }];
        let net = Network::from_specs(&specs, &mut rng).unwrap();
        let back = Network::from_blobs(&specs, &net.to_blobs("p."), "p.").unwrap();
        assert_eq!(back, net);
        assert_eq!(back.hash(), net.hash());
    }

    #[test]
    fn linear_net_gradient_is_exact() {
        let mut rng = SeededRng::new(4);
        let mut net = Network::from_specs(
            &[LayerSpec::Dense { inputs: 4, outputs: 3 }, LayerSpec::Dense { inputs: 3, outputs: 2 }],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let err = finite_diff_check(&mut net, &x, |y| (0.5 * y.sum_sq(), y.clone()), 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn conv_relu_dense_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(5);
        let mut net = Network::from_specs(
            &[
                LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3 },
                LayerSpec::ChannelAffine { channels: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { size: 2 },
                LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::AvgPool2d { size: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { inputs: 2, outputs: 3 },
                LayerSpec::Softmax,
            ],
            &mut rng,
        )
        .unwrap();
        assert!(net.param_count() <= 5000);
        let x = Tensor::new(vec![2, 5, 7], (0..70).map(|_| rng.normal()).collect()).unwrap();
        let target = [0.2, 0.5, 0.3];
        let err = finite_diff_check(
            &mut net,
            &x,
            |p| {
                let (l, g) = crate::net::categorical_cross_entropy(p.data(), &target).unwrap();
                (l, Tensor::from_vec(g))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(6);
        let mut net = Network::from_specs(
            &[
                LayerSpec::AttentionPool1d { features: 4, hidden: 5 },
                LayerSpec::Dense { inputs: 4, outputs: 3 },
                LayerSpec::Sigmoid,
            ],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::new(vec![4, 8], (0..32).map(|_| rng.uniform()).collect()).unwrap();
        let target = [1.0, 0.0, 0.6];
        let err = finite_diff_check(
            &mut net,
            &x,
            |p| {
                let (l, g) = crate::net::binary_cross_entropy(p.data(), &target).unwrap();
                (l, Tensor::from_vec(g))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn max_over_time_and_mean_over_freq_gradients() {
        let mut rng = SeededRng::new(7);
        let mut net = Network::from_specs(
            &[
                LayerSpec::Conv2d { in_channels: 1, out_channels: 3, kernel: 3 },
                LayerSpec::MeanOverFreq,
                LayerSpec::Relu,
                LayerSpec::MaxPool1dOverTime,
                LayerSpec::Dense { inputs: 3, outputs: 2 },
                LayerSpec::Softmax,
            ],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::new(vec![1, 4, 6], (0..24).map(|_| rng.normal()).collect()).unwrap();
        let err = finite_diff_check(
            &mut net,
            &x,
            |p| {
                let (l, g) = crate::net::categorical_cross_entropy(p.data(), &[0.0, 1.0]).unwrap();
                (l, Tensor::from_vec(g))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
