use std::collections::HashMap;
use std::fmt;

use super::{triangle_area, Point};

/// Faces with area below this fraction of the mean face area are degenerate.
pub const ZERO_AREA_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueCode {
    IndexOutOfRange,
    RepeatedVertex,
    NonManifoldEdge,
    DuplicateFace,
    ZeroAreaFace,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::IndexOutOfRange => "index_out_of_range",
            IssueCode::RepeatedVertex => "repeated_vertex",
            IssueCode::NonManifoldEdge => "non_manifold_edge",
            IssueCode::DuplicateFace => "duplicate_face",
            IssueCode::ZeroAreaFace => "zero_area_face",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub code: IssueCode,
    /// Face index, or for `NonManifoldEdge` the index of the first face past
    /// the second one on that edge.
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return write!(f, "ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(
                f,
                "{} {} {}",
                issue.code.as_str(),
                issue.index,
                issue.message
            )?;
        }
        Ok(())
    }
}

/// Checks a raw face list. Problems are collected, never raised.
pub fn validate_faces(vertices: &[Point], faces: &[[usize; 3]]) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |code, index, message: String| {
        issues.push(Issue {
            code,
            index,
            message,
        })
    };

    let mut usable = vec![true; faces.len()];
    for (f, face) in faces.iter().enumerate() {
        if let Some(&v) = face.iter().find(|&&v| v >= vertices.len()) {
            push(
                IssueCode::IndexOutOfRange,
                f,
                format!("vertex {v} out of range ({} vertices)", vertices.len()),
            );
            usable[f] = false;
        } else if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            push(
                IssueCode::RepeatedVertex,
                f,
                format!("repeated vertex in face {face:?}"),
            );
            usable[f] = false;
        }
    }

    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    let mut seen_faces: HashMap<[usize; 3], usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate().filter(|(f, _)| usable[*f]) {
        let mut key = *face;
        key.sort_unstable();
        if let Some(&first) = seen_faces.get(&key) {
            push(
                IssueCode::DuplicateFace,
                f,
                format!("duplicates face {first}"),
            );
        } else {
            seen_faces.insert(key, f);
        }
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let count = edge_count.entry((a.min(b), a.max(b))).or_insert(0);
            *count += 1;
            if *count == 3 {
                push(
                    IssueCode::NonManifoldEdge,
                    f,
                    format!(
                        "edge ({}, {}) has 3 or more incident faces",
                        a.min(b),
                        a.max(b)
                    ),
                );
            }
        }
    }

    let areas: Vec<(usize, f64)> = faces
        .iter()
        .enumerate()
        .filter(|(f, _)| usable[*f])
        .map(|(f, &face)| (f, triangle_area(vertices, face)))
        .collect();
    if !areas.is_empty() {
        let mean = areas.iter().map(|a| a.1).sum::<f64>() / areas.len() as f64;
        let threshold = ZERO_AREA_RELATIVE * mean;
        for (f, area) in areas {
            if !(area > threshold) {
                push(IssueCode::ZeroAreaFace, f, format!("area {area:e}"));
            }
        }
    }

    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::tetrahedron;

    #[test]
    fn tetrahedron_is_ok() {
        assert!(tetrahedron().validate().ok());
    }

    #[test]
    fn duplicated_face_is_non_manifold() {
        let t = tetrahedron();
        let mut faces = t.faces().to_vec();
        faces.push(faces[0]);
        let report = validate_faces(t.vertices(), &faces);
        assert!(!report.ok());
        assert!(report.has(IssueCode::NonManifoldEdge));
        assert!(report.has(IssueCode::DuplicateFace));
    }

    #[test]
    fn repeated_vertex() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let report = validate_faces(&v, &[[0, 0, 1]]);
        assert!(report.has(IssueCode::RepeatedVertex));
    }

    #[test]
    fn zero_area_face() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]];
        let report = validate_faces(&v, &[[0, 1, 2], [0, 1, 3]]);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].code, IssueCode::ZeroAreaFace);
        assert_eq!(report.issues[0].index, 1);
    }

    #[test]
    fn ok_iff_no_issues() {
        let report = ValidationReport::default();
        assert!(report.ok());
        assert_eq!(report.to_string(), "ok");
    }
}
