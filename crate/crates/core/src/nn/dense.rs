use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NnError, ParamBlock};
use crate::rng::Rng;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully-connected layer `y = act(x W + b)`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Uniform fan-in initialisation: He-style bound `sqrt(6 / fan_in)` for
    /// relu layers, `sqrt(3 / fan_in)` for linear ones. Biases start at zero.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let gain = match activation {
            Activation::Relu => 6.0,
            Activation::Linear => 3.0,
        };
        let bound = (gain / fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Gradients of one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Flattened gradient in the same order as [`DenseNet::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Layer outputs recorded by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    generation: u64,
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn activations(&self) -> &[Array2<f64>] {
        &self.activations
    }
}

/// Stack of dense layers with hand-derived backpropagation.
#[derive(Debug)]
pub struct DenseNet {
    layers: Vec<Dense>,
    id: u64,
    generation: u64,
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self::from_layers(self.layers.clone()).expect("cloned layers are consistent")
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseNet {
    /// `widths = [input, hidden.., output]`; hidden layers use relu.
    pub fn new(widths: &[usize], output_activation: Activation, rng: &mut Rng) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::InvalidConfig(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let act = if l + 1 == n { output_activation } else { Activation::Relu };
                Dense::init(widths[l], widths[l + 1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidConfig("a network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(NnError::InvalidConfig(format!("layer {l}: bias/weight width mismatch")));
            }
            if let Some(next) = layers.get(l + 1) {
                if next.input_dim() != layer.output_dim() {
                    return Err(NnError::InvalidConfig(format!(
                        "layer {l} outputs {} but layer {} expects {}",
                        layer.output_dim(),
                        l + 1,
                        next.input_dim()
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable layer access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::Shape {
                what: "flat parameter vector",
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in self.layers_mut() {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Shape {
                what: "input width",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<ForwardCache, NnError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for layer in &self.layers {
            let next = apply(layer, activations.last().unwrap());
            activations.push(next);
        }
        Ok(ForwardCache {
            net_id: self.id,
            generation: self.generation,
            activations,
        })
    }

    /// Forward pass without keeping intermediate activations.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x)?;
        let mut h = apply(&self.layers[0], x);
        for layer in &self.layers[1..] {
            h = apply(layer, &h);
        }
        Ok(h)
    }

    /// Backpropagates `grad_out` (d loss / d output) through the cached pass.
    /// Returns parameter gradients and d loss / d input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Result<(NetGrads, Array2<f64>), NnError> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(NnError::StaleCache);
        }
        let out = cache.output();
        if grad_out.dim() != out.dim() {
            return Err(NnError::Shape {
                what: "upstream gradient",
                expected: out.len(),
                got: grad_out.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                let post = &cache.activations[l + 1];
                ndarray::Zip::from(&mut g).and(post).for_each(|gi, &a| {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                });
            }
            let input = &cache.activations[l];
            grads.push(LayerGrads {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            g = g.dot(&layer.weight.t());
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, g))
    }

    /// Pairs every parameter tensor with its gradient for the optimizer.
    pub fn param_blocks<'a>(&'a mut self, prefix: &str, grads: &'a NetGrads) -> Vec<ParamBlock<'a>> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .zip(&grads.layers)
            .enumerate()
            .flat_map(|(l, (layer, g))| {
                [
                    ParamBlock {
                        name: format!("{prefix}.{l}.weight"),
                        values: layer.weight.as_slice_mut().expect("standard layout"),
                        grad: g.weight.as_slice().expect("standard layout"),
                    },
                    ParamBlock {
                        name: format!("{prefix}.{l}.bias"),
                        values: layer.bias.as_slice_mut().expect("standard layout"),
                        grad: g.bias.as_slice().expect("standard layout"),
                    },
                ]
            })
            .collect()
    }
}

fn apply(layer: &Dense, x: &Array2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight) + &layer.bias;
    if layer.activation == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
    z
}
