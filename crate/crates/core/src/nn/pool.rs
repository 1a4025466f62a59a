//! Edge-collapse pooling and its inverse.
//!
//! Collapsing interior edge `e = (u, v)` with opposite vertices `p` and `q`
//! removes `e`, merges `(u, p)` with `(v, p)` and `(u, q)` with `(v, q)`, and
//! welds `u` into `v`: three edges, two faces and one vertex disappear. The
//! merged edge carries the mean of the pair's features.
//!
//! Edge ids inside a [`CollapseRecord`] refer to the pre-pool enumeration.
//! The lower id of each merged pair survives.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, NO_EDGE};
use crate::nn::EdgeTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeGroup {
    pub survivor: usize,
    pub absorbed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapseEvent {
    pub removed: usize,
    pub groups: [MergeGroup; 2],
    pub edges_before: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapseRecord {
    pub input_edges: usize,
    pub events: Vec<CollapseEvent>,
    /// Pre-pool id of every post-pool edge, indexed by post-pool edge.
    pub output_ids: Vec<usize>,
}

impl CollapseRecord {
    pub fn identity(edges: usize) -> Self {
        CollapseRecord {
            input_edges: edges,
            events: Vec::new(),
            output_ids: (0..edges).collect(),
        }
    }

    pub fn output_edges(&self) -> usize {
        self.output_ids.len()
    }

    /// For each pre-pool edge, the post-pool edge it is restored from.
    pub fn source_of(&self) -> Vec<usize> {
        let mut src = vec![NO_EDGE; self.input_edges];
        for (j, &id) in self.output_ids.iter().enumerate() {
            src[id] = j;
        }
        for ev in self.events.iter().rev() {
            for g in &ev.groups {
                src[g.absorbed] = src[g.survivor];
            }
            src[ev.removed] = src[ev.groups[0].survivor];
        }
        src
    }

    /// Re-runs the recorded collapses on the pre-pool mesh.
    pub fn replay(&self, mesh: &Mesh) -> Result<Mesh> {
        if mesh.edge_count() != self.input_edges {
            return Err(Error::Shape("record does not belong to this mesh".into()));
        }
        let mut c = Collapser::new(mesh);
        for ev in &self.events {
            if !c.is_collapsible(ev.removed) {
                return Err(Error::Shape(format!(
                    "edge {} is not collapsible on replay",
                    ev.removed
                )));
            }
            let groups = c.collapse(ev.removed);
            if groups != ev.groups {
                return Err(Error::Shape("replay diverged from record".into()));
            }
        }
        let (m, ids) = c.finish()?;
        if ids != self.output_ids {
            return Err(Error::Shape(
                "replay produced a different enumeration".into(),
            ));
        }
        Ok(m)
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Mutable working copy of a mesh that supports edge collapses while keeping
/// the original edge ids.
struct Collapser {
    verts: Vec<Point>,
    vert_alive: Vec<bool>,
    on_boundary: Vec<bool>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<Vec<usize>>,
    edge_verts: Vec<[usize; 2]>,
    edge_faces: Vec<[usize; 2]>,
    edge_alive: Vec<bool>,
    index: HashMap<(usize, usize), usize>,
    alive_edges: usize,
    alive_verts: usize,
}

impl Collapser {
    fn new(mesh: &Mesh) -> Self {
        let topo = mesh.topology();
        let mut on_boundary = vec![false; mesh.vertex_count()];
        for (e, &[a, b]) in topo.edges.iter().enumerate() {
            if topo.boundary[e] {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let index = topo
            .edges
            .iter()
            .enumerate()
            .map(|(i, &[a, b])| ((a, b), i))
            .collect();
        Collapser {
            verts: mesh.vertices().to_vec(),
            vert_alive: vec![true; mesh.vertex_count()],
            on_boundary,
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vert_faces: mesh.vertex_faces(),
            edge_verts: topo.edges.clone(),
            edge_faces: topo.edge_faces.clone(),
            edge_alive: vec![true; mesh.edge_count()],
            index,
            alive_edges: mesh.edge_count(),
            alive_verts: mesh.vertex_count(),
        }
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vert_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn opposite(&self, f: usize, a: usize, b: usize) -> usize {
        *self.faces[f]
            .iter()
            .find(|&&w| w != a && w != b)
            .expect("triangle")
    }

    fn is_collapsible(&self, e: usize) -> bool {
        if !self.edge_alive[e] || self.alive_verts <= 4 {
            return false;
        }
        let [f1, f2] = self.edge_faces[e];
        if f2 == NO_EDGE {
            return false;
        }
        let [u, v] = self.edge_verts[e];
        if self.on_boundary[u] || self.on_boundary[v] {
            return false;
        }
        let (p, q) = (self.opposite(f1, u, v), self.opposite(f2, u, v));
        if p == q {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let shared = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        shared == 2 && self.neighbors(p).len() > 3 && self.neighbors(q).len() > 3
    }

    fn other_face(&self, e: usize, not: usize) -> usize {
        let [a, b] = self.edge_faces[e];
        if a == not {
            b
        } else {
            a
        }
    }

    fn collapse(&mut self, e: usize) -> [MergeGroup; 2] {
        let [a, b] = self.edge_verts[e];
        let (keep, gone) = (a.min(b), a.max(b));
        let [f1, f2] = self.edge_faces[e];
        let sides = [(self.opposite(f1, a, b), f1), (self.opposite(f2, a, b), f2)];
        let gone_neighbors = self.neighbors(gone);

        let mut groups = [MergeGroup {
            survivor: 0,
            absorbed: 0,
        }; 2];
        for (slot, &(s, f)) in sides.iter().enumerate() {
            let x = self.index.remove(&key(gone, s)).expect("side edge");
            let y = self.index.remove(&key(keep, s)).expect("side edge");
            let (survivor, absorbed) = (x.min(y), x.max(y));
            let faces = [self.other_face(y, f), self.other_face(x, f)];
            self.edge_faces[survivor] = faces;
            self.edge_verts[survivor] = [keep.min(s), keep.max(s)];
            self.edge_alive[absorbed] = false;
            self.index.insert(key(keep, s), survivor);
            groups[slot] = MergeGroup { survivor, absorbed };
        }

        self.index.remove(&key(keep, gone));
        self.edge_alive[e] = false;
        self.alive_edges -= 3;

        for f in [f1, f2] {
            self.face_alive[f] = false;
            for w in self.faces[f] {
                self.vert_faces[w].retain(|&g| g != f);
            }
        }

        let (p, q) = (sides[0].0, sides[1].0);
        for w in gone_neighbors {
            if w == keep || w == p || w == q {
                continue;
            }
            let id = self.index.remove(&key(gone, w)).expect("spoke edge");
            self.edge_verts[id] = [keep.min(w), keep.max(w)];
            self.index.insert(key(keep, w), id);
        }

        let moved = std::mem::take(&mut self.vert_faces[gone]);
        for &f in &moved {
            for slot in &mut self.faces[f] {
                if *slot == gone {
                    *slot = keep;
                }
            }
        }
        self.vert_faces[keep].extend(moved);
        self.vert_faces[keep].sort_unstable();

        let (pk, pg) = (self.verts[keep], self.verts[gone]);
        self.verts[keep] = std::array::from_fn(|k| 0.5 * (pk[k] + pg[k]));
        self.vert_alive[gone] = false;
        self.alive_verts -= 1;
        groups
    }

    /// Compacts into a fresh mesh and maps its edges back to working ids.
    fn finish(self) -> Result<(Mesh, Vec<usize>)> {
        let mut remap = vec![NO_EDGE; self.verts.len()];
        let mut back = Vec::with_capacity(self.alive_verts);
        for (v, &alive) in self.vert_alive.iter().enumerate() {
            if alive {
                remap[v] = back.len();
                back.push(v);
            }
        }
        let vertices = back.iter().map(|&v| self.verts[v]).collect();
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|v| remap[v]))
            .collect();
        let mesh = Mesh::new(vertices, faces)?;
        let ids = mesh
            .edges()
            .iter()
            .map(|&[a, b]| self.index[&key(back[a], back[b])])
            .collect::<Vec<_>>();
        debug_assert_eq!(ids.len(), self.alive_edges);
        Ok((mesh, ids))
    }
}

/// Collapses lowest-norm edges until `target_edges` remain.
pub fn mesh_pool(
    input: &EdgeTensor,
    mesh: &Mesh,
    target_edges: usize,
) -> Result<(EdgeTensor, Mesh, CollapseRecord)> {
    let e_count = mesh.edge_count();
    if input.edges != e_count {
        return Err(Error::Shape(format!(
            "tensor has {} edges, mesh has {e_count}",
            input.edges
        )));
    }
    if target_edges > e_count || !(e_count - target_edges).is_multiple_of(3) {
        return Err(Error::PoolTarget {
            target: target_edges,
            edges: e_count,
        });
    }
    if target_edges == e_count {
        return Ok((
            input.clone(),
            mesh.clone(),
            CollapseRecord::identity(e_count),
        ));
    }

    let c = input.channels;
    // edge-major working copy of the features
    let mut feat: Vec<f64> = (0..e_count).flat_map(|e| input.column(e)).collect();
    let sq_norm =
        |feat: &[f64], e: usize| feat[e * c..(e + 1) * c].iter().map(|v| v * v).sum::<f64>();
    let mut norms: Vec<f64> = (0..e_count).map(|e| sq_norm(&feat, e)).collect();

    let mut work = Collapser::new(mesh);
    let mut events = Vec::new();
    while work.alive_edges > target_edges {
        let mut order: Vec<usize> = (0..e_count).filter(|&e| work.edge_alive[e]).collect();
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
        let Some(&e) = order.iter().find(|&&e| work.is_collapsible(e)) else {
            return Err(Error::PoolStuck {
                target: target_edges,
                remaining: work.alive_edges,
            });
        };
        let edges_before = work.alive_edges;
        let groups = work.collapse(e);
        for g in &groups {
            for k in 0..c {
                let merged = 0.5 * (feat[g.survivor * c + k] + feat[g.absorbed * c + k]);
                feat[g.survivor * c + k] = merged;
            }
            norms[g.survivor] = sq_norm(&feat, g.survivor);
        }
        events.push(CollapseEvent {
            removed: e,
            groups,
            edges_before,
        });
    }

    let (pooled, output_ids) = work.finish()?;
    let mut out = EdgeTensor::zeros(c, output_ids.len());
    for (j, &id) in output_ids.iter().enumerate() {
        for k in 0..c {
            out.data[k * output_ids.len() + j] = feat[id * c + k];
        }
    }
    Ok((
        out,
        pooled,
        CollapseRecord {
            input_edges: e_count,
            events,
            output_ids,
        },
    ))
}

/// Gradient of [`mesh_pool`] with respect to its input.
pub fn mesh_pool_backward(record: &CollapseRecord, grad_out: &EdgeTensor) -> Result<EdgeTensor> {
    if grad_out.edges != record.output_edges() {
        return Err(Error::Shape("pool backward edge count".into()));
    }
    let (c, n) = (grad_out.channels, record.input_edges);
    let mut g = vec![0.0; n * c];
    for (j, &id) in record.output_ids.iter().enumerate() {
        for k in 0..c {
            g[id * c + k] = grad_out.get(k, j);
        }
    }
    for ev in record.events.iter().rev() {
        for grp in &ev.groups {
            for k in 0..c {
                let half = 0.5 * g[grp.survivor * c + k];
                g[grp.survivor * c + k] = half;
                g[grp.absorbed * c + k] = half;
            }
        }
    }
    Ok(edge_major_to_tensor(&g, c, n))
}

/// Restores the pre-pool resolution by copying each merged edge's features
/// back onto every edge it absorbed. A removed edge copies its first group.
pub fn mesh_unpool(input: &EdgeTensor, record: &CollapseRecord) -> Result<EdgeTensor> {
    if input.edges != record.output_edges() {
        return Err(Error::Shape(format!(
            "unpool expects {} edges, got {}",
            record.output_edges(),
            input.edges
        )));
    }
    let src = record.source_of();
    let (c, n) = (input.channels, record.input_edges);
    let mut out = EdgeTensor::zeros(c, n);
    for k in 0..c {
        let row = input.row(k);
        for (e, &s) in src.iter().enumerate() {
            out.data[k * n + e] = row[s];
        }
    }
    Ok(out)
}

pub fn mesh_unpool_backward(record: &CollapseRecord, grad_out: &EdgeTensor) -> Result<EdgeTensor> {
    if grad_out.edges != record.input_edges {
        return Err(Error::Shape("unpool backward edge count".into()));
    }
    let src = record.source_of();
    let (c, m) = (grad_out.channels, record.output_edges());
    let mut out = EdgeTensor::zeros(c, m);
    for k in 0..c {
        let row = grad_out.row(k);
        for (e, &s) in src.iter().enumerate() {
            out.data[k * m + s] += row[e];
        }
    }
    Ok(out)
}

fn edge_major_to_tensor(g: &[f64], c: usize, n: usize) -> EdgeTensor {
    let mut out = EdgeTensor::zeros(c, n);
    for e in 0..n {
        for k in 0..c {
            out.data[k * n + e] = g[e * c + k];
        }
    }
    out
}

/// Largest reachable edge count not above `ratio * edges`' rounding:
/// `edges - 3 * round(edges * (1 - ratio) / 3)`.
pub fn pool_target(edges: usize, ratio: f64) -> usize {
    let removed = ((edges as f64 * (1.0 - ratio)) / 3.0).round() as usize;
    edges.saturating_sub(3 * removed)
}
