//! Dataset directories: `<name>.obj` meshes, optionally paired by basename
//! with `<name>.labels` files holding one class id per line, line `t`
//! labeling edge `t`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::learn::Dataset;
use crate::mesh::{read_obj_file, write_obj_file};

pub const LABEL_EXTENSION: &str = "labels";

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::BadNumber {
                line: i + 1,
                field: l.trim().to_string(),
            })
        })
        .collect()
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

fn obj_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every OBJ in `meshes` (sorted by file name). Meshes with a label
/// file in `labels` join `D_l`. `classes` defaults to one more than the
/// largest label seen.
pub fn read_dataset(
    meshes: &Path,
    labels: Option<&Path>,
    classes: Option<usize>,
) -> Result<Dataset> {
    let paths = obj_files(meshes)?;
    if paths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loaded = Vec::with_capacity(paths.len());
    let mut found = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        loaded.push(read_obj_file(path)?);
        if let Some(dir) = labels {
            let stem = path.file_stem().unwrap_or_default();
            let label_path = dir.join(stem).with_extension(LABEL_EXTENSION);
            if label_path.is_file() {
                let text =
                    fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
                found.push((i, parse_labels(&text)?));
            }
        }
    }
    let classes = classes.unwrap_or_else(|| {
        found
            .iter()
            .flat_map(|(_, l)| l.iter().copied())
            .max()
            .map_or(1, |m| m + 1)
    });
    let mut data = Dataset::new(loaded, classes);
    for (i, l) in found {
        data.set_labels(i, l)?;
    }
    Ok(data)
}

/// Writes `mesh_NNN.obj` for every mesh and `mesh_NNN.labels` for every
/// labeled one.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = data.len().saturating_sub(1).to_string().len().max(3);
    for (i, mesh) in data.meshes().iter().enumerate() {
        let stem = format!("mesh_{i:0width$}");
        write_obj_file(mesh, dir.join(format!("{stem}.obj")))?;
        if let Some(l) = data.labels(i) {
            let path = dir.join(format!("{stem}.{LABEL_EXTENSION}"));
            fs::write(&path, format_labels(l)).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
