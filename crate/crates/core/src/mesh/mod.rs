//! Triangle meshes with the edge-centric topology used by the network.
//!
//! Edges are enumerated by first appearance while scanning faces in order,
//! taking each face's edges as `(v1 v2)`, `(v2 v3)`, `(v3 v1)`. Edge `t` therefore
//! has the same meaning across runs and lines up with per-edge label files.

mod obj;
pub mod shapes;
mod validate;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use obj::{load_obj, parse_obj, read_obj_file, save_obj, write_obj_file};
pub use validate::{validate_faces, Issue, IssueCode, ValidationReport};

/// Marker for a missing neighbor (boundary side of an edge ring, or the
/// second face of a boundary edge).
pub const NO_EDGE: usize = usize::MAX;

pub type Point = [f64; 3];

/// Edge topology derived from a face list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeTopology {
    /// Unordered vertex pairs stored as `[min, max]`.
    pub edges: Vec<[usize; 2]>,
    /// One or two incident faces; the second slot is [`NO_EDGE`] on the boundary.
    pub edge_faces: Vec<[usize; 2]>,
    /// For interior edges `(a, b, c, d)`: the other two edges of the first
    /// incident face, counterclockwise starting after the edge, then the same
    /// for the second face. Boundary edges carry [`NO_EDGE`] in `c, d`.
    pub edge_ring: Vec<[usize; 4]>,
    pub boundary: Vec<bool>,
    /// Edge ids of each face, in the order `(v1 v2)`, `(v2 v3)`, `(v3 v1)`.
    pub face_edges: Vec<[usize; 3]>,
}

/// Builds the edge enumeration, incidence and 4-neighbor rings for a face list.
pub fn build_edge_topology(faces: &[[usize; 3]], vertex_count: usize) -> Result<EdgeTopology> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
    let mut edges = Vec::new();
    let mut edge_faces: Vec<[usize; 2]> = Vec::new();
    let mut face_edges = Vec::with_capacity(faces.len());

    for (fi, face) in faces.iter().enumerate() {
        for &v in face {
            if v >= vertex_count {
                return Err(Error::FaceIndexOutOfRange {
                    face: fi,
                    vertex: v,
                    available: vertex_count,
                });
            }
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(Error::RepeatedVertex { face: fi });
        }
        let mut fe = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let id = *index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_faces.push([NO_EDGE, NO_EDGE]);
                edges.len() - 1
            });
            let slots = &mut edge_faces[id];
            if slots[0] == NO_EDGE {
                slots[0] = fi;
            } else if slots[1] == NO_EDGE {
                slots[1] = fi;
            } else {
                return Err(Error::NonManifoldEdge(key.0, key.1));
            }
            fe[k] = id;
        }
        face_edges.push(fe);
    }

    let mut edge_ring = Vec::with_capacity(edges.len());
    let mut boundary = Vec::with_capacity(edges.len());
    for (id, slots) in edge_faces.iter().enumerate() {
        let mut ring = [NO_EDGE; 4];
        for (side, &f) in slots.iter().enumerate() {
            if f == NO_EDGE {
                continue;
            }
            let fe = &face_edges[f];
            let k = fe
                .iter()
                .position(|&x| x == id)
                .expect("edge belongs to its face");
            ring[2 * side] = fe[(k + 1) % 3];
            ring[2 * side + 1] = fe[(k + 2) % 3];
        }
        boundary.push(slots[1] == NO_EDGE);
        edge_ring.push(ring);
    }

    Ok(EdgeTopology {
        edges,
        edge_faces,
        edge_ring,
        boundary,
        face_edges,
    })
}

/// An immutable triangle mesh with derived edge topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    topo: EdgeTopology,
}

impl Mesh {
    /// Builds a mesh, deriving its edges. Fails on an empty face list,
    /// out-of-range or repeated indices, and non-manifold edges.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::NoFaces);
        }
        let topo = build_edge_topology(&faces, vertices.len())?;
        Ok(Mesh {
            vertices,
            faces,
            topo,
        })
    }

    /// Same faces (and therefore the same edge enumeration), new positions.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Self {
        assert_eq!(
            vertices.len(),
            self.vertices.len(),
            "vertex count must not change"
        );
        Mesh {
            vertices,
            faces: self.faces.clone(),
            topo: self.topo.clone(),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.topo.edges
    }

    pub fn topology(&self) -> &EdgeTopology {
        &self.topo
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.topo.edges.len()
    }

    /// Incident faces of edge `e` (one or two).
    pub fn edge_faces(&self, e: usize) -> &[usize] {
        let slots = &self.topo.edge_faces[e];
        if slots[1] == NO_EDGE {
            &slots[..1]
        } else {
            &slots[..]
        }
    }

    pub fn edge_ring(&self, e: usize) -> [usize; 4] {
        self.topo.edge_ring[e]
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        self.topo.boundary[e]
    }

    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.topo.face_edges[f]
    }

    pub fn is_closed(&self) -> bool {
        !self.topo.boundary.iter().any(|&b| b)
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    /// Vertex of face `f` not on edge `e`.
    pub fn opposite_vertex(&self, f: usize, e: usize) -> usize {
        let [a, b] = self.topo.edges[e];
        *self.faces[f]
            .iter()
            .find(|&&v| v != a && v != b)
            .expect("triangle has a vertex off each edge")
    }

    pub fn face_area(&self, f: usize) -> f64 {
        triangle_area(&self.vertices, self.faces[f])
    }

    /// Sorted, deduplicated neighbor vertices of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.topo.edges {
            out[a].push(b);
            out[b].push(a);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }

    /// Incident faces of every vertex, in face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            for &v in face {
                out[v].push(f);
            }
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate_faces(&self.vertices, &self.faces)
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn triangle_area(vertices: &[Point], face: [usize; 3]) -> f64 {
    let [a, b, c] = face.map(|i| vertices[i]);
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}
