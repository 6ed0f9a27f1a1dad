use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected layer; `weight` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-uniform weights in `[-sqrt(6/inputs), sqrt(6/inputs)]`, zero bias.
    pub fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inputs.max(1) as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| rng.gen_range(-bound..=bound)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Stack of dense layers, each followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl MlpCache {
    /// Whether each pre-activation is positive; used to detect ReLU kinks.
    pub fn active_pattern(&self) -> Vec<bool> {
        self.pre.iter().flatten().map(|&z| z > 0.0).collect()
    }
}

pub(crate) fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

impl Mlp {
    pub fn uniform(input_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut inputs = input_dim;
        for &h in hidden {
            layers.push(Dense::uniform(inputs, h, rng));
            inputs = h;
        }
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    /// Output width; equals the input width for an empty stack.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.layers.last().map_or(input_dim, |l| l.outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if let Some(first) = self.layers.first() {
            if x.len() != first.inputs {
                return Err(Error::Dimension {
                    what: "mlp input",
                    expected: first.inputs,
                    actual: x.len(),
                });
            }
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&h);
            let next = relu(&z);
            cache.inputs.push(h);
            cache.pre.push(z);
            h = next;
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut Mlp) -> Result<Vec<f64>> {
        if cache.pre.len() != self.layers.len() || grad.layers.len() != self.layers.len() {
            return Err(Error::Dimension {
                what: "mlp cache layers",
                expected: self.layers.len(),
                actual: cache.pre.len(),
            });
        }
        let mut delta = d_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[k];
            let x = &cache.inputs[k];
            if z.len() != layer.outputs || x.len() != layer.inputs || delta.len() != layer.outputs {
                return Err(Error::Dimension {
                    what: "mlp cache width",
                    expected: layer.outputs,
                    actual: z.len(),
                });
            }
            for (d, &zv) in delta.iter_mut().zip(z) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }
            let g = &mut grad.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weight[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &xv) in row.iter_mut().zip(x) {
                    *w += d * xv;
                }
            }
            let mut d_in = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                for (di, &w) in d_in.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            delta = d_in;
        }
        Ok(delta)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> + '_ {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}
