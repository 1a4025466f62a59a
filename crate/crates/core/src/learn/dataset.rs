use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// The unlabeled pool `D_u` plus per-edge labels for the labeled subset `D_l`.
///
/// Labels are only reachable through [`labels`](Self::labels) and
/// [`labeled`](Self::labeled), so code that receives a restricted view cannot
/// see labels outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    meshes: Vec<Mesh>,
    labels: BTreeMap<usize, Vec<usize>>,
    classes: usize,
}

impl Dataset {
    pub fn new(meshes: Vec<Mesh>, classes: usize) -> Self {
        Dataset {
            meshes,
            labels: BTreeMap::new(),
            classes,
        }
    }

    /// Attaches one class id per edge of mesh `index`.
    pub fn set_labels(&mut self, index: usize, labels: Vec<usize>) -> Result<()> {
        let mesh = self
            .meshes
            .get(index)
            .ok_or_else(|| Error::Shape(format!("no mesh {index}")))?;
        if labels.len() != mesh.edge_count() {
            return Err(Error::Shape(format!(
                "mesh {index} has {} edges but {} labels",
                mesh.edge_count(),
                labels.len()
            )));
        }
        if let Some((edge, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= self.classes) {
            return Err(Error::LabelOutOfRange {
                edge,
                label,
                classes: self.classes,
            });
        }
        self.labels.insert(index, labels);
        Ok(())
    }

    pub fn meshes(&self) -> &[Mesh] {
        &self.meshes
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self, index: usize) -> Option<&[usize]> {
        self.labels.get(&index).map(Vec::as_slice)
    }

    /// Indices of labeled meshes, ascending.
    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labels.keys().copied().collect()
    }

    /// `(index, mesh, labels)` for every labeled mesh.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, &Mesh, &[usize])> {
        self.labels
            .iter()
            .map(|(&i, l)| (i, &self.meshes[i], l.as_slice()))
    }

    /// Same meshes, labels kept only for `subset`.
    pub fn restrict_labels(&self, subset: &[usize]) -> Result<Dataset> {
        let mut labels = BTreeMap::new();
        for &i in subset {
            let l = self
                .labels
                .get(&i)
                .ok_or_else(|| Error::Shape(format!("mesh {i} has no labels")))?;
            labels.insert(i, l.clone());
        }
        Ok(Dataset {
            meshes: self.meshes.clone(),
            labels,
            classes: self.classes,
        })
    }

    /// Splits off the meshes at `indices` (with their labels) as a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(
            indices.iter().map(|&i| self.meshes[i].clone()).collect(),
            self.classes,
        );
        for (j, &i) in indices.iter().enumerate() {
            if let Some(l) = self.labels.get(&i) {
                out.labels.insert(j, l.clone());
            }
        }
        out
    }
}
