//! Edge convolution over the 4-neighbor ring.
//!
//! For edge `e` with ring `(a, b, c, d)` the five taps are
//! `e, |a - c|, a + c, |b - d|, b + d`, which do not depend on which incident
//! face was listed first. Missing (boundary) neighbors read as zero.
//! Kernels are laid out `[out][in][tap]`.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NO_EDGE};
use crate::nn::EdgeTensor;

pub const TAPS: usize = 5;

fn neighbor(x: &[f64], n: usize) -> f64 {
    if n == NO_EDGE {
        0.0
    } else {
        x[n]
    }
}

/// Symmetric tap values for every `(input channel, edge)`: `[c][tap][e]`.
fn taps(input: &EdgeTensor, mesh: &Mesh) -> Vec<f64> {
    let e_count = input.edges;
    let mut out = vec![0.0; input.channels * TAPS * e_count];
    for c in 0..input.channels {
        let x = input.row(c);
        let base = c * TAPS * e_count;
        for e in 0..e_count {
            let [a, b, cc, d] = mesh.edge_ring(e);
            let (xa, xb, xc, xd) = (
                neighbor(x, a),
                neighbor(x, b),
                neighbor(x, cc),
                neighbor(x, d),
            );
            out[base + e] = x[e];
            out[base + e_count + e] = (xa - xc).abs();
            out[base + 2 * e_count + e] = xa + xc;
            out[base + 3 * e_count + e] = (xb - xd).abs();
            out[base + 4 * e_count + e] = xb + xd;
        }
    }
    out
}

fn check_shapes(input: &EdgeTensor, mesh: &Mesh, kernel: &[f64], bias: &[f64]) -> Result<usize> {
    if input.edges != mesh.edge_count() {
        return Err(Error::Shape(format!(
            "tensor has {} edges, mesh has {}",
            input.edges,
            mesh.edge_count()
        )));
    }
    let c_out = bias.len();
    if kernel.len() != c_out * input.channels * TAPS {
        return Err(Error::Shape(format!(
            "kernel of {} weights for {} -> {} channels",
            kernel.len(),
            input.channels,
            c_out
        )));
    }
    Ok(c_out)
}

pub fn mesh_conv(
    input: &EdgeTensor,
    mesh: &Mesh,
    kernel: &[f64],
    bias: &[f64],
) -> Result<EdgeTensor> {
    let c_out = check_shapes(input, mesh, kernel, bias)?;
    let (c_in, e_count) = (input.channels, input.edges);
    let g = taps(input, mesh);
    let mut out = EdgeTensor::zeros(c_out, e_count);
    for o in 0..c_out {
        let row = out.row_mut(o);
        row.fill(bias[o]);
        for i in 0..c_in {
            for k in 0..TAPS {
                let w = kernel[(o * c_in + i) * TAPS + k];
                if w == 0.0 {
                    continue;
                }
                let src = &g[(i * TAPS + k) * e_count..(i * TAPS + k + 1) * e_count];
                for (y, s) in row.iter_mut().zip(src) {
                    *y += w * s;
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: EdgeTensor,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn mesh_conv_backward(
    input: &EdgeTensor,
    mesh: &Mesh,
    kernel: &[f64],
    grad_out: &EdgeTensor,
) -> Result<ConvGrads> {
    let c_out = grad_out.channels;
    let (c_in, e_count) = (input.channels, input.edges);
    if grad_out.edges != e_count || kernel.len() != c_out * c_in * TAPS {
        return Err(Error::Shape("conv backward shapes".into()));
    }
    let g = taps(input, mesh);

    let mut d_kernel = vec![0.0; kernel.len()];
    let mut d_bias = vec![0.0; c_out];
    // gradient wrt each tap value: [c][tap][e]
    let mut d_taps = vec![0.0; c_in * TAPS * e_count];
    for o in 0..c_out {
        let dy = grad_out.row(o);
        d_bias[o] = dy.iter().sum();
        for i in 0..c_in {
            for k in 0..TAPS {
                let slot = (i * TAPS + k) * e_count;
                let src = &g[slot..slot + e_count];
                d_kernel[(o * c_in + i) * TAPS + k] = dy.iter().zip(src).map(|(a, b)| a * b).sum();
                let w = kernel[(o * c_in + i) * TAPS + k];
                for (dt, &d) in d_taps[slot..slot + e_count].iter_mut().zip(dy) {
                    *dt += w * d;
                }
            }
        }
    }

    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut d_input = EdgeTensor::zeros(c_in, e_count);
    for c in 0..c_in {
        let x = input.row(c).to_vec();
        let base = c * TAPS * e_count;
        let dx = d_input.row_mut(c);
        for e in 0..e_count {
            let [a, b, cc, d] = mesh.edge_ring(e);
            dx[e] += d_taps[base + e];
            for (p, q, abs_tap, sum_tap) in [(a, cc, 1, 2), (b, d, 3, 4)] {
                let s = sign(neighbor(&x, p) - neighbor(&x, q));
                let d_abs = d_taps[base + abs_tap * e_count + e];
                let d_sum = d_taps[base + sum_tap * e_count + e];
                if p != NO_EDGE {
                    dx[p] += s * d_abs + d_sum;
                }
                if q != NO_EDGE {
                    dx[q] += -s * d_abs + d_sum;
                }
            }
        }
    }

    Ok(ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: d_bias,
    })
}
