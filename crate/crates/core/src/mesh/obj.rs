//! Wavefront OBJ subset: `v` and triangular `f` records. Everything else is skipped.

use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, Point};
use crate::error::{Error, Result};

/// Parses vertices and faces without building topology, so that broken
/// inputs can still be inspected by the validator.
pub fn parse_obj(source: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let mut vertices: Vec<Point> = Vec::new();
    let mut faces = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in &mut p {
                    let field = tokens.next().ok_or_else(|| Error::BadNumber {
                        line,
                        field: String::new(),
                    })?;
                    *slot = field.parse().map_err(|_| Error::BadNumber {
                        line,
                        field: field.to_string(),
                    })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangularFace {
                        line,
                        count: refs.len(),
                    });
                }
                let mut face = [0usize; 3];
                for (slot, r) in face.iter_mut().zip(&refs) {
                    // `v/vt/vn` -> `v`
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| Error::BadNumber {
                        line,
                        field: r.to_string(),
                    })?;
                    let n = vertices.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if idx == 0 || resolved < 0 || resolved >= n {
                        return Err(Error::IndexOutOfRange {
                            line,
                            index: idx,
                            available: vertices.len(),
                        });
                    }
                    *slot = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(Error::NoFaces);
    }
    Ok((vertices, faces))
}

pub fn load_obj(source: &str) -> Result<Mesh> {
    let (vertices, faces) = parse_obj(source)?;
    Mesh::new(vertices, faces)
}

/// Serializes with 9 fractional digits per coordinate and 1-based faces.
pub fn save_obj(mesh: &Mesh) -> Result<String> {
    if mesh.face_count() == 0 {
        return Err(Error::NoFaces);
    }
    let mut out = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 16);
    for p in mesh.vertices() {
        let _ = writeln!(out, "v {:.9} {:.9} {:.9}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    Ok(out)
}

pub fn read_obj_file(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_obj(&text)
}

pub fn write_obj_file(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, save_obj(mesh)?).map_err(|e| Error::io(path, e))
}
