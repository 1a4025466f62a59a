use crate::error::{Error, Result};

/// Channels-by-edges activation matrix, row-major: `data[c * edges + e]`.
///
/// The edge axis follows the enumeration of the mesh the tensor was computed
/// on; callers pair a tensor with that mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTensor {
    pub channels: usize,
    pub edges: usize,
    pub data: Vec<f64>,
}

impl EdgeTensor {
    pub fn zeros(channels: usize, edges: usize) -> Self {
        EdgeTensor {
            channels,
            edges,
            data: vec![0.0; channels * edges],
        }
    }

    pub fn from_vec(channels: usize, edges: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * edges {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{edges} tensor",
                data.len()
            )));
        }
        Ok(EdgeTensor {
            channels,
            edges,
            data,
        })
    }

    #[inline]
    pub fn get(&self, c: usize, e: usize) -> f64 {
        self.data[c * self.edges + e]
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.edges..(c + 1) * self.edges]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.edges..(c + 1) * self.edges]
    }

    /// Feature vector of one edge.
    pub fn column(&self, e: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, e)).collect()
    }

    /// Stacks channels of `self` on top of `other`.
    pub fn concat(&self, other: &EdgeTensor) -> Result<EdgeTensor> {
        if self.edges != other.edges {
            return Err(Error::Shape(format!(
                "concat over {} and {} edges",
                self.edges, other.edges
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(EdgeTensor {
            channels: self.channels + other.channels,
            edges: self.edges,
            data,
        })
    }

    /// Inverse of [`concat`](Self::concat): first `channels` rows, then the rest.
    pub fn split(&self, channels: usize) -> (EdgeTensor, EdgeTensor) {
        let cut = channels * self.edges;
        (
            EdgeTensor {
                channels,
                edges: self.edges,
                data: self.data[..cut].to_vec(),
            },
            EdgeTensor {
                channels: self.channels - channels,
                edges: self.edges,
                data: self.data[cut..].to_vec(),
            },
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &EdgeTensor) {
        assert_eq!((self.channels, self.edges), (other.channels, other.edges));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub fn relu(x: &EdgeTensor) -> EdgeTensor {
    EdgeTensor {
        channels: x.channels,
        edges: x.edges,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(output: &EdgeTensor, grad: &EdgeTensor) -> EdgeTensor {
    EdgeTensor {
        channels: grad.channels,
        edges: grad.edges,
        data: output
            .data
            .iter()
            .zip(&grad.data)
            .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Per-channel mean over edges.
pub fn global_mean_encode(features: &EdgeTensor) -> Result<Vec<f64>> {
    if features.edges == 0 {
        return Err(Error::Shape("cannot average an empty tensor".into()));
    }
    let n = features.edges as f64;
    Ok((0..features.channels)
        .map(|c| features.row(c).iter().sum::<f64>() / n)
        .collect())
}

pub fn global_mean_backward(grad: &[f64], edges: usize) -> EdgeTensor {
    let mut out = EdgeTensor::zeros(grad.len(), edges);
    for (c, &g) in grad.iter().enumerate() {
        out.row_mut(c).fill(g / edges as f64);
    }
    out
}
