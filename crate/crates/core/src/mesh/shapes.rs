//! Reference closed shapes, all centered at the origin with outward winding.

use std::collections::HashMap;

use super::{cross, dot, norm, sub, Mesh, Point};

fn orient_outward(vertices: &[Point], mut face: [usize; 3]) -> [usize; 3] {
    let [a, b, c] = face.map(|i| vertices[i]);
    let n = cross(sub(b, a), sub(c, a));
    let centroid = [
        (a[0] + b[0] + c[0]) / 3.0,
        (a[1] + b[1] + c[1]) / 3.0,
        (a[2] + b[2] + c[2]) / 3.0,
    ];
    if dot(n, centroid) < 0.0 {
        face.swap(1, 2);
    }
    face
}

/// Faces of a convex polyhedron whose edges all have length `edge`.
fn faces_by_edge_length(vertices: &[Point], edge: f64) -> Vec<[usize; 3]> {
    let n = vertices.len();
    let close = |i: usize, j: usize| (norm(sub(vertices[i], vertices[j])) - edge).abs() < 1e-9;
    let mut faces = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !close(i, j) {
                continue;
            }
            for k in j + 1..n {
                if close(i, k) && close(j, k) {
                    faces.push(orient_outward(vertices, [i, j, k]));
                }
            }
        }
    }
    faces
}

/// Regular tetrahedron with edge length 2√2.
pub fn tetrahedron() -> Mesh {
    let v = vec![
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::new(v, f).expect("tetrahedron")
}

pub fn octahedron() -> Mesh {
    let v = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let f = faces_by_edge_length(&v, std::f64::consts::SQRT_2);
    Mesh::new(v, f).expect("octahedron")
}

pub fn icosahedron() -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v = Vec::with_capacity(12);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            v.push([0.0, s1, s2 * phi]);
            v.push([s1, s2 * phi, 0.0]);
            v.push([s2 * phi, 0.0, s1]);
        }
    }
    let f = faces_by_edge_length(&v, 2.0);
    Mesh::new(v, f).expect("icosahedron")
}

/// Icosahedron subdivided `level` times, projected onto the unit sphere.
/// Level 2 has 162 vertices, 480 edges and 320 faces.
pub fn icosphere(level: usize) -> Mesh {
    let base = icosahedron();
    let mut vertices: Vec<Point> = base.vertices().iter().map(|&p| normalize(p)).collect();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere")
}

/// Unit square split along the (0, 2) diagonal.
pub fn unit_square() -> Mesh {
    let v = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
    ];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).expect("square")
}

fn normalize(p: Point) -> Point {
    let n = norm(p);
    [p[0] / n, p[1] / n, p[2] / n]
}
