//! Stochastic mesh augmentation: per-axis anisotropic scaling, vertex
//! shifting toward a 1-ring neighbor, and legality-checked edge flips.
//!
//! All randomness comes from the caller's RNG, so a view is a pure function
//! of `(mesh, policy, seed)`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, sub, triangle_area, Mesh, Point};

pub type AugRng = ChaCha8Rng;

pub const SCALE_CLAMP: (f64, f64) = (0.5, 1.5);
/// Largest fraction of the way a shifted vertex travels toward its neighbor.
pub const MAX_SHIFT: f64 = 0.5;
/// A shift is rejected if any incident face would shrink below this fraction
/// of its pre-shift area.
pub const MIN_AREA_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub scale_mu: f64,
    pub scale_sigma: f64,
    pub p_shift: f64,
    pub p_flip: f64,
    pub seed: u64,
    /// Rescale sigma and both probabilities by `Uniform(0.8, 1.2)` each epoch.
    pub jitter: bool,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            scale_mu: 1.0,
            scale_sigma: 0.1,
            p_shift: 0.2,
            p_flip: 0.05,
            seed: 0,
            jitter: true,
        }
    }
}

impl AugmentationPolicy {
    /// A policy under which [`augment`] is the identity.
    pub fn identity() -> Self {
        AugmentationPolicy {
            scale_sigma: 0.0,
            p_shift: 0.0,
            p_flip: 0.0,
            jitter: false,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_shift) || !prob(self.p_flip) {
            return Err(Error::Config(
                "augmentation probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.scale_sigma >= 0.0) || !self.scale_mu.is_finite() {
            return Err(Error::Config("scale sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-epoch adjusted copy. Returns `self` unchanged when jitter is off.
    pub fn jittered(&self, epoch: u64) -> Self {
        if !self.jitter {
            return *self;
        }
        let mut rng = AugRng::seed_from_u64(mix_seed(self.seed ^ 0x6a09_e667_f3bc_c908, epoch));
        let mut factor = || rng.gen_range(0.8..1.2);
        AugmentationPolicy {
            scale_sigma: self.scale_sigma * factor(),
            p_shift: (self.p_shift * factor()).min(1.0),
            p_flip: (self.p_flip * factor()).min(1.0),
            ..*self
        }
    }

    pub fn rng(&self) -> AugRng {
        AugRng::seed_from_u64(self.seed)
    }
}

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Draws one scale factor per axis and multiplies every vertex componentwise.
pub fn anisotropic_scale(mesh: &Mesh, policy: &AugmentationPolicy, rng: &mut AugRng) -> Mesh {
    let factors = sample_scale_factors(policy, rng);
    let vertices = mesh
        .vertices()
        .iter()
        .map(|p| [p[0] * factors[0], p[1] * factors[1], p[2] * factors[2]])
        .collect();
    mesh.with_vertices(vertices)
}

pub fn sample_scale_factors(policy: &AugmentationPolicy, rng: &mut AugRng) -> [f64; 3] {
    if policy.scale_sigma == 0.0 {
        return [policy.scale_mu; 3];
    }
    let normal = Normal::new(policy.scale_mu, policy.scale_sigma).expect("sigma is finite");
    std::array::from_fn(|_| normal.sample(rng).clamp(SCALE_CLAMP.0, SCALE_CLAMP.1))
}

/// Moves each selected vertex part of the way toward a random neighbor.
pub fn shift_vertices(mesh: &Mesh, policy: &AugmentationPolicy, rng: &mut AugRng) -> Mesh {
    if policy.p_shift == 0.0 {
        return mesh.clone();
    }
    let neighbors = mesh.vertex_neighbors();
    let incident = mesh.vertex_faces();
    let original: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f)).collect();
    let mut verts: Vec<Point> = mesh.vertices().to_vec();

    for v in 0..verts.len() {
        if rng.gen::<f64>() >= policy.p_shift || neighbors[v].is_empty() {
            continue;
        }
        let n = neighbors[v][rng.gen_range(0..neighbors[v].len())];
        let t = rng.gen_range(0.0..MAX_SHIFT);
        let old = verts[v];
        let target = verts[n];
        verts[v] = std::array::from_fn(|k| (1.0 - t) * old[k] + t * target[k]);
        let collapsed = incident[v]
            .iter()
            .any(|&f| triangle_area(&verts, mesh.faces()[f]) < MIN_AREA_FRACTION * original[f]);
        if collapsed {
            verts[v] = old;
        }
    }
    mesh.with_vertices(verts)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Rotates `face` so that it reads `(u, v, w)` or `(v, u, w)` and returns
/// the two edge vertices in the face's own order plus the opposite vertex.
fn oriented_split(face: [usize; 3], a: usize, b: usize) -> (usize, usize, usize) {
    for k in 0..3 {
        let (x, y, z) = (face[k], face[(k + 1) % 3], face[(k + 2) % 3]);
        if (x == a && y == b) || (x == b && y == a) {
            return (x, y, z);
        }
    }
    unreachable!("edge not in face")
}

/// True when the quad `q0 q1 q2 q3` (a closed loop) is strictly convex when
/// projected onto the plane with normal `n`.
fn strictly_convex(quad: [Point; 4], n: Point) -> bool {
    let mut sign = 0.0;
    for k in 0..4 {
        let e1 = sub(quad[(k + 1) % 4], quad[k]);
        let e2 = sub(quad[(k + 2) % 4], quad[(k + 1) % 4]);
        let turn = dot(cross(e1, e2), n);
        if turn == 0.0 || !turn.is_finite() {
            return false;
        }
        if sign == 0.0 {
            sign = turn.signum();
        } else if turn.signum() != sign {
            return false;
        }
    }
    true
}

/// Flips randomly chosen interior edges, visited in edge order. Vertex
/// positions are never touched.
pub fn flip_edges(mesh: &Mesh, policy: &AugmentationPolicy, rng: &mut AugRng) -> Mesh {
    if policy.p_flip == 0.0 {
        return mesh.clone();
    }
    let verts = mesh.vertices();
    let mut faces = mesh.faces().to_vec();
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_faces
                .entry(key(face[k], face[(k + 1) % 3]))
                .or_default()
                .push(f);
        }
    }

    let mut changed = false;
    for e in 0..mesh.edge_count() {
        if mesh.is_boundary(e) {
            continue;
        }
        if rng.gen::<f64>() >= policy.p_flip {
            continue;
        }
        let [a, b] = mesh.edges()[e];
        if try_flip(verts, &mut faces, &mut edge_faces, a, b) {
            changed = true;
        }
    }
    if !changed {
        return mesh.clone();
    }
    Mesh::new(verts.to_vec(), faces).expect("legal flips preserve manifoldness")
}

/// Flips edge `(a, b)` in place if it is interior and the flip is legal.
pub(crate) fn try_flip(
    verts: &[Point],
    faces: &mut [[usize; 3]],
    edge_faces: &mut HashMap<(usize, usize), Vec<usize>>,
    a: usize,
    b: usize,
) -> bool {
    let (f1, f2) = match edge_faces.get(&key(a, b)).map(Vec::as_slice) {
        Some(&[f1, f2]) => (f1, f2),
        _ => return false,
    };
    let (u, v, p) = oriented_split(faces[f1], a, b);
    let (_, _, q) = oriented_split(faces[f2], a, b);
    if p == q || edge_faces.contains_key(&key(p, q)) {
        return false;
    }
    let n1 = cross(sub(verts[v], verts[u]), sub(verts[p], verts[u]));
    let n2 = cross(sub(verts[u], verts[v]), sub(verts[q], verts[v]));
    let n = [n1[0] + n2[0], n1[1] + n2[1], n1[2] + n2[2]];
    // boundary loop of the quad, following f1's orientation: v -> p -> u -> q
    if !strictly_convex([verts[v], verts[p], verts[u], verts[q]], n) {
        return false;
    }
    let new1 = [p, u, q];
    let new2 = [q, v, p];
    if triangle_area(verts, new1) <= 0.0 || triangle_area(verts, new2) <= 0.0 {
        return false;
    }

    edge_faces.remove(&key(u, v));
    let mut retarget = |x: usize, y: usize, from: usize, to: usize| {
        if let Some(list) = edge_faces.get_mut(&key(x, y)) {
            for f in list.iter_mut().filter(|f| **f == from) {
                *f = to;
            }
        }
    };
    // new1 replaces f1 and new2 replaces f2; (p,u) and (q,v) keep their slot.
    retarget(v, p, f1, f2);
    retarget(u, q, f2, f1);
    faces[f1] = new1;
    faces[f2] = new2;
    edge_faces.insert(key(p, q), vec![f1, f2]);
    true
}

/// Scale, then shift, then flip, from one RNG stream.
pub fn augment(mesh: &Mesh, policy: &AugmentationPolicy, rng: &mut AugRng) -> Mesh {
    let scaled = anisotropic_scale(mesh, policy, rng);
    let shifted = shift_vertices(&scaled, policy, rng);
    flip_edges(&shifted, policy, rng)
}

/// Convenience wrapper seeding a fresh stream.
pub fn augment_seeded(mesh: &Mesh, policy: &AugmentationPolicy, seed: u64) -> Mesh {
    let mut rng = AugRng::seed_from_u64(seed);
    augment(mesh, policy, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_features;
    use crate::mesh::shapes::{icosphere, tetrahedron, unit_square};

    fn rng(seed: u64) -> AugRng {
        AugRng::seed_from_u64(seed)
    }

    #[test]
    fn zero_sigma_scaling_is_identity() {
        let m = icosphere(1);
        let p = AugmentationPolicy {
            scale_sigma: 0.0,
            ..Default::default()
        };
        assert_eq!(
            anisotropic_scale(&m, &p, &mut rng(1)).vertices(),
            m.vertices()
        );
    }

    #[test]
    fn scaling_is_seeded_and_changes_features() {
        let m = icosphere(2);
        let p = AugmentationPolicy::default();
        let a = anisotropic_scale(&m, &p, &mut rng(7));
        let b = anisotropic_scale(&m, &p, &mut rng(7));
        assert_eq!(a, b);
        assert_eq!(a.edges(), m.edges());
        let diff = extract_features(&a)
            .unwrap()
            .max_abs_diff(&extract_features(&m).unwrap());
        assert!(diff > 1e-6);
    }

    #[test]
    fn shift_with_zero_probability_is_identity() {
        let m = icosphere(1);
        let p = AugmentationPolicy {
            p_shift: 0.0,
            ..Default::default()
        };
        assert_eq!(shift_vertices(&m, &p, &mut rng(3)), m);
    }

    #[test]
    fn shift_all_on_tetrahedron_keeps_connectivity() {
        let m = tetrahedron();
        let p = AugmentationPolicy {
            p_shift: 1.0,
            ..Default::default()
        };
        let s = shift_vertices(&m, &p, &mut rng(11));
        assert_eq!(s.faces(), m.faces());
        assert_eq!(s.edges(), m.edges());
        assert_ne!(s.vertices(), m.vertices());
    }

    #[test]
    fn shifted_icosphere_keeps_positive_area() {
        let m = icosphere(2);
        let p = AugmentationPolicy {
            p_shift: 1.0,
            ..Default::default()
        };
        for seed in 0..10 {
            let s = shift_vertices(&m, &p, &mut rng(seed));
            assert!((0..s.face_count()).all(|f| s.face_area(f) > 0.0));
            assert!(s.validate().ok());
        }
    }

    #[test]
    fn square_flip_swaps_diagonal() {
        let m = unit_square();
        let p = AugmentationPolicy {
            p_flip: 1.0,
            ..Default::default()
        };
        let f = flip_edges(&m, &p, &mut rng(0));
        assert!(f.edges().contains(&[1, 3]));
        assert!(!f.edges().contains(&[0, 2]));
        assert_eq!(f.vertices(), m.vertices());
        assert_eq!(f.edge_count(), m.edge_count());
        assert!(f.validate().ok());
    }

    #[test]
    fn nonconvex_quad_is_not_flipped() {
        // dart: vertex 3 pulled inside triangle (0,1,2)'s side so the quad is reflex
        let v = vec![
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.4, 0.4, 0.0],
        ];
        let m = Mesh::new(v, vec![[0, 1, 3], [1, 2, 3]]).unwrap();
        let p = AugmentationPolicy {
            p_flip: 1.0,
            ..Default::default()
        };
        assert_eq!(flip_edges(&m, &p, &mut rng(0)), m);
    }

    #[test]
    fn tetrahedron_flip_blocked_by_existing_edge() {
        let m = tetrahedron();
        let p = AugmentationPolicy {
            p_flip: 1.0,
            ..Default::default()
        };
        assert_eq!(flip_edges(&m, &p, &mut rng(0)), m);
    }

    #[test]
    fn flips_preserve_validity() {
        let m = icosphere(2);
        let p = AugmentationPolicy {
            p_flip: 0.3,
            ..Default::default()
        };
        for seed in 0..10 {
            let f = flip_edges(&m, &p, &mut rng(seed));
            assert_eq!(f.edge_count(), m.edge_count());
            assert_eq!(f.face_count(), m.face_count());
            assert_eq!(f.vertices(), m.vertices());
            assert!(f.validate().ok());
        }
    }

    #[test]
    fn identity_policy() {
        let m = icosphere(2);
        assert_eq!(augment(&m, &AugmentationPolicy::identity(), &mut rng(5)), m);
    }

    #[test]
    fn different_seeds_give_different_views() {
        let m = icosphere(2);
        let p = AugmentationPolicy::default();
        let a = augment_seeded(&m, &p, 1);
        let b = augment_seeded(&m, &p, 2);
        assert_eq!(a, augment_seeded(&m, &p, 1));
        let fa = extract_features(&a).unwrap();
        let fb = extract_features(&b).unwrap();
        assert_ne!(fa, fb);
    }

    #[test]
    fn jitter_stays_near_base() {
        let p = AugmentationPolicy::default();
        for epoch in 0..20 {
            let j = p.jittered(epoch);
            assert!(j.scale_sigma >= 0.08 && j.scale_sigma <= 0.12);
            assert!(j.p_shift >= 0.16 && j.p_shift <= 0.24);
        }
        let off = AugmentationPolicy { jitter: false, ..p };
        assert_eq!(off.jittered(3), off);
    }
}
