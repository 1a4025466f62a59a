//! Deformed icospheres with angular-sector edge labels.
//!
//! Each sector carries its own radial-noise amplitude (sector 0 smooth, later
//! sectors progressively rougher), so the labels are recoverable from local
//! surface geometry.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::mix_seed;
use crate::error::{Error, Result};
use crate::learn::Dataset;
use crate::mesh::shapes::icosphere;
use crate::mesh::{Mesh, Point};

pub const SUBDIVISION_LEVEL: usize = 2;
pub const MAX_CLASSES: usize = 8;
/// Radial noise amplitude of the smoothest and roughest sectors.
pub const NOISE_RANGE: (f64, f64) = (0.01, 0.12);
/// Per-axis squash factors are drawn from this range.
pub const SQUASH_RANGE: (f64, f64) = (0.5, 1.5);
/// Per-mesh multiplier on every sector's noise amplitude.
pub const ROUGHNESS_RANGE: (f64, f64) = (0.5, 1.5);

fn sector(p: Point, phase: f64, classes: usize) -> usize {
    let theta = (p[1].atan2(p[0]) + phase).rem_euclid(TAU);
    ((theta / TAU * classes as f64) as usize).min(classes - 1)
}

fn amplitude(class: usize, classes: usize) -> f64 {
    if classes == 1 {
        return NOISE_RANGE.0;
    }
    NOISE_RANGE.0 + (NOISE_RANGE.1 - NOISE_RANGE.0) * class as f64 / (classes - 1) as f64
}

/// One deformed sphere and its per-edge labels.
pub fn synthetic_mesh(classes: usize, seed: u64) -> (Mesh, Vec<usize>) {
    let base = icosphere(SUBDIVISION_LEVEL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.gen_range(0.0..TAU);
    let squash: [f64; 3] = std::array::from_fn(|_| rng.gen_range(SQUASH_RANGE.0..SQUASH_RANGE.1));
    let roughness = rng.gen_range(ROUGHNESS_RANGE.0..ROUGHNESS_RANGE.1);

    let labels = base
        .edges()
        .iter()
        .map(|&[a, b]| {
            let (p, q) = (base.vertices()[a], base.vertices()[b]);
            sector(
                [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, 0.0],
                phase,
                classes,
            )
        })
        .collect();

    let vertices = base
        .vertices()
        .iter()
        .map(|&p| {
            let a = roughness * amplitude(sector(p, phase, classes), classes);
            let r = 1.0 + rng.gen_range(-a..=a);
            std::array::from_fn(|k| p[k] * r * squash[k])
        })
        .collect();
    (base.with_vertices(vertices), labels)
}

/// `n` labeled meshes, every one of them in `D_l`.
pub fn gen_synthetic_dataset(n: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("need at least one mesh".into()));
    }
    if !(2..=MAX_CLASSES).contains(&classes) {
        return Err(Error::Config(format!(
            "classes must be in 2..={MAX_CLASSES}"
        )));
    }
    let (meshes, labels): (Vec<_>, Vec<_>) = (0..n)
        .map(|i| synthetic_mesh(classes, mix_seed(seed, i as u64)))
        .unzip();
    let mut data = Dataset::new(meshes, classes);
    for (i, l) in labels.into_iter().enumerate() {
        data.set_labels(i, l)?;
    }
    Ok(data)
}
