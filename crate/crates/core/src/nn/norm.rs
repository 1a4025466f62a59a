use crate::error::{Error, Result};
use crate::nn::EdgeTensor;

pub const GN_EPS: f64 = 1e-5;

/// Saved state for the group-norm backward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache {
    pub normalized: EdgeTensor,
    pub inv_std: Vec<f64>,
    pub groups: usize,
}

/// Normalizes each group of channels over (channels in group x all edges),
/// then applies a per-channel gain and offset.
pub fn group_norm(
    input: &EdgeTensor,
    groups: usize,
    gain: &[f64],
    offset: &[f64],
) -> Result<(EdgeTensor, GroupNormCache)> {
    let c = input.channels;
    if groups == 0 || !c.is_multiple_of(groups) {
        return Err(Error::Shape(format!(
            "{c} channels not divisible into {groups} groups"
        )));
    }
    if gain.len() != c || offset.len() != c {
        return Err(Error::Shape("group norm affine parameters".into()));
    }
    let per = c / groups;
    let span = per * input.edges;
    let mut normalized = EdgeTensor::zeros(c, input.edges);
    let mut inv_std = Vec::with_capacity(groups);
    for g in 0..groups {
        let slice = &input.data[g * span..(g + 1) * span];
        let mean = slice.iter().sum::<f64>() / span as f64;
        let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / span as f64;
        let is = 1.0 / (var + GN_EPS).sqrt();
        for (o, v) in normalized.data[g * span..(g + 1) * span]
            .iter_mut()
            .zip(slice)
        {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    let mut out = normalized.clone();
    for ch in 0..c {
        for v in out.row_mut(ch) {
            *v = *v * gain[ch] + offset[ch];
        }
    }
    Ok((
        out,
        GroupNormCache {
            normalized,
            inv_std,
            groups,
        },
    ))
}

pub struct GroupNormGrads {
    pub input: EdgeTensor,
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

pub fn group_norm_backward(
    cache: &GroupNormCache,
    gain: &[f64],
    grad_out: &EdgeTensor,
) -> GroupNormGrads {
    let xhat = &cache.normalized;
    let (c, e) = (xhat.channels, xhat.edges);
    let mut d_gain = vec![0.0; c];
    let mut d_offset = vec![0.0; c];
    let mut d_xhat = EdgeTensor::zeros(c, e);
    for ch in 0..c {
        let dy = grad_out.row(ch);
        let xh = xhat.row(ch);
        d_gain[ch] = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
        d_offset[ch] = dy.iter().sum();
        for (d, &g) in d_xhat.row_mut(ch).iter_mut().zip(dy) {
            *d = g * gain[ch];
        }
    }
    let per = c / cache.groups;
    let span = per * e;
    let n = span as f64;
    let mut d_input = EdgeTensor::zeros(c, e);
    for g in 0..cache.groups {
        let range = g * span..(g + 1) * span;
        let dxh = &d_xhat.data[range.clone()];
        let xh = &xhat.data[range.clone()];
        let sum_d: f64 = dxh.iter().sum();
        let sum_dx: f64 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum();
        let is = cache.inv_std[g];
        for ((o, &d), &x) in d_input.data[range].iter_mut().zip(dxh).zip(xh) {
            *o = is * (d - sum_d / n - x * sum_dx / n);
        }
    }
    GroupNormGrads {
        input: d_input,
        gain: d_gain,
        offset: d_offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(c: usize, e: usize, scale: f64) -> EdgeTensor {
        EdgeTensor::from_vec(
            c,
            e,
            (0..c * e)
                .map(|i| scale * ((i * 7919 % 31) as f64 - 15.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = EdgeTensor::from_vec(2, 3, vec![4.0, 4.0, 4.0, -1.0, -1.0, -1.0]).unwrap();
        let (y, _) = group_norm(&x, 2, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn group_moments() {
        let x = sample(8, 13, 0.3);
        let (y, _) = group_norm(&x, 4, &[1.0; 8], &[0.0; 8]).unwrap();
        for g in 0..4 {
            let s = &y.data[g * 26..(g + 1) * 26];
            let mean = s.iter().sum::<f64>() / 26.0;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 26.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn indivisible_groups() {
        assert!(group_norm(&sample(6, 3, 1.0), 4, &[1.0; 6], &[0.0; 6]).is_err());
    }

    #[test]
    fn affine_rescaling_invariance() {
        let x = sample(4, 10, 1.0);
        let (y, _) = group_norm(&x, 2, &[1.0; 4], &[0.0; 4]).unwrap();
        let mut z = x.clone();
        for (g, (a, b)) in [(3.0, -2.0), (1.5, 7.0)].into_iter().enumerate() {
            for v in &mut z.data[g * 20..(g + 1) * 20] {
                *v = a * *v + b;
            }
        }
        let (w, _) = group_norm(&z, 2, &[1.0; 4], &[0.0; 4]).unwrap();
        for (p, q) in y.data.iter().zip(&w.data) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}
