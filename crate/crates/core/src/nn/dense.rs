//! Affine layers: the two-layer projection head and the per-edge classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::EdgeTensor;

/// `y = W x + b` with `W` stored row-major as `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok((0..self.outputs)
            .map(|o| {
                let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            grads.bias[o] += g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grads.weight[row + i] += g * x[i];
                dx[i] += g * self.weight[row + i];
            }
        }
        dx
    }

    /// Applies the layer independently to every edge column.
    pub fn forward_edges(&self, x: &EdgeTensor) -> Result<EdgeTensor> {
        if x.channels != self.inputs {
            return Err(Error::Shape(format!(
                "per-edge layer expects {} channels, got {}",
                self.inputs, x.channels
            )));
        }
        let mut out = EdgeTensor::zeros(self.outputs, x.edges);
        for o in 0..self.outputs {
            let row = out.row_mut(o);
            row.fill(self.bias[o]);
            for i in 0..self.inputs {
                let w = self.weight[o * self.inputs + i];
                for (y, v) in row.iter_mut().zip(x.row(i)) {
                    *y += w * v;
                }
            }
        }
        Ok(out)
    }

    pub fn backward_edges(
        &self,
        x: &EdgeTensor,
        grad_out: &EdgeTensor,
        grads: &mut Dense,
    ) -> EdgeTensor {
        let mut dx = EdgeTensor::zeros(self.inputs, x.edges);
        for o in 0..self.outputs {
            let dy = grad_out.row(o);
            grads.bias[o] += dy.iter().sum::<f64>();
            for i in 0..self.inputs {
                let w = self.weight[o * self.inputs + i];
                grads.weight[o * self.inputs + i] +=
                    dy.iter().zip(x.row(i)).map(|(a, b)| a * b).sum::<f64>();
                for (d, g) in dx.row_mut(i).iter_mut().zip(dy) {
                    *d += w * g;
                }
            }
        }
        dx
    }
}

/// Two affine layers with a ReLU between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub first: Dense,
    pub second: Dense,
}

pub struct HeadCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

impl ProjectionHead {
    pub fn zeros(inputs: usize, hidden: usize, latent: usize) -> Self {
        ProjectionHead {
            first: Dense::zeros(inputs, hidden),
            second: Dense::zeros(hidden, latent),
        }
    }

    pub fn forward(&self, encoding: &[f64]) -> Result<(Vec<f64>, HeadCache)> {
        let hidden: Vec<f64> = self
            .first
            .forward(encoding)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let out = self.second.forward(&hidden)?;
        Ok((
            out,
            HeadCache {
                input: encoding.to_vec(),
                hidden,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &HeadCache,
        grad_out: &[f64],
        grads: &mut ProjectionHead,
    ) -> Vec<f64> {
        let dh = self
            .second
            .backward(&cache.hidden, grad_out, &mut grads.second);
        let dpre: Vec<f64> = dh
            .iter()
            .zip(&cache.hidden)
            .map(|(&g, &h)| if h > 0.0 { g } else { 0.0 })
            .collect();
        self.first.backward(&cache.input, &dpre, &mut grads.first)
    }
}

pub fn projection_head(encoding: &[f64], head: &ProjectionHead) -> Result<Vec<f64>> {
    head.forward(encoding).map(|(out, _)| out)
}
