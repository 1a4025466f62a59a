//! Similarity-invariant 5-channel edge descriptors.
//!
//! Channel order: dihedral angle, the two opposite inner angles (ascending),
//! the two length-over-height ratios (ascending). Angles are in radians.
//! Boundary edges repeat their single face's values and report a flat
//! dihedral of π.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, norm, sub, Mesh};
use crate::nn::EdgeTensor;

pub const FEATURE_CHANNELS: usize = 5;

/// Floor applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatureMatrix {
    pub rows: Vec<[f64; FEATURE_CHANNELS]>,
}

impl EdgeFeatureMatrix {
    pub fn edge_count(&self) -> usize {
        self.rows.len()
    }

    /// Transposes into a channels-by-edges tensor.
    pub fn to_tensor(&self) -> EdgeTensor {
        let e = self.rows.len();
        let mut t = EdgeTensor::zeros(FEATURE_CHANNELS, e);
        for (i, row) in self.rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                t.data[c * e + i] = v;
            }
        }
        t
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dihedral,angle_a,angle_b,ratio_a,ratio_b\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &EdgeFeatureMatrix) -> f64 {
        assert_eq!(self.rows.len(), other.rows.len());
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Unsigned angle between two vectors, stable near 0 and π.
fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

pub fn extract_features(mesh: &Mesh) -> Result<EdgeFeatureMatrix> {
    let verts = mesh.vertices();
    let normals: Vec<[f64; 3]> = mesh
        .faces()
        .iter()
        .map(|&[a, b, c]| cross(sub(verts[b], verts[a]), sub(verts[c], verts[a])))
        .collect();

    let mut rows = Vec::with_capacity(mesh.edge_count());
    for (e, &[u, v]) in mesh.edges().iter().enumerate() {
        let (pu, pv) = (verts[u], verts[v]);
        let len = norm(sub(pv, pu));
        let faces = mesh.edge_faces(e);

        let mut angles = [0.0; 2];
        let mut ratios = [0.0; 2];
        for (slot, &f) in faces.iter().enumerate() {
            let w = verts[mesh.opposite_vertex(f, e)];
            angles[slot] = angle_between(sub(pu, w), sub(pv, w));
            let height = norm(cross(sub(w, pu), sub(pv, pu))) / len;
            let ratio = len / height;
            if !(height > 0.0) || !ratio.is_finite() || !angles[slot].is_finite() {
                return Err(Error::DegenerateFace { face: f, edge: e });
            }
            ratios[slot] = ratio;
        }

        let dihedral = if faces.len() == 2 {
            PI - angle_between(normals[faces[0]], normals[faces[1]])
        } else {
            angles[1] = angles[0];
            ratios[1] = ratios[0];
            PI
        };
        if angles[0] > angles[1] {
            angles.swap(0, 1);
        }
        if ratios[0] > ratios[1] {
            ratios.swap(0, 1);
        }
        rows.push([dihedral, angles[0], angles[1], ratios[0], ratios[1]]);
    }
    Ok(EdgeFeatureMatrix { rows })
}

/// Per-channel moments used to standardize features.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; FEATURE_CHANNELS],
    pub std: [f64; FEATURE_CHANNELS],
}

impl ChannelStats {
    /// Pooled over every edge of every matrix. Population standard deviation.
    pub fn fit(dataset: &[EdgeFeatureMatrix]) -> Result<Self> {
        let n: usize = dataset.iter().map(|m| m.rows.len()).sum();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut mean = [0.0; FEATURE_CHANNELS];
        for row in dataset.iter().flat_map(|m| &m.rows) {
            for c in 0..FEATURE_CHANNELS {
                mean[c] += row[c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; FEATURE_CHANNELS];
        for row in dataset.iter().flat_map(|m| &m.rows) {
            for c in 0..FEATURE_CHANNELS {
                var[c] += (row[c] - mean[c]).powi(2);
            }
        }
        let std = var.map(|v| (v / n as f64).sqrt().max(STD_FLOOR));
        Ok(ChannelStats { mean, std })
    }

    pub fn apply(&self, m: &EdgeFeatureMatrix) -> EdgeFeatureMatrix {
        let rows = m
            .rows
            .iter()
            .map(|r| std::array::from_fn(|c| (r[c] - self.mean[c]) / self.std[c]))
            .collect();
        EdgeFeatureMatrix { rows }
    }

    pub fn identity() -> Self {
        ChannelStats {
            mean: [0.0; FEATURE_CHANNELS],
            std: [1.0; FEATURE_CHANNELS],
        }
    }
}

/// Fits stats on the whole dataset and returns the transformed matrices.
pub fn standardize_features(
    dataset: &[EdgeFeatureMatrix],
) -> Result<(Vec<EdgeFeatureMatrix>, ChannelStats)> {
    let stats = ChannelStats::fit(dataset)?;
    Ok((dataset.iter().map(|m| stats.apply(m)).collect(), stats))
}
