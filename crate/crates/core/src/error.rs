use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Every variant has a stable short code (see [`Error::code`]) so the CLI can
/// print one machine-parsable line per failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: non-triangular face with {count} indices")]
    NonTriangularFace { line: usize, count: usize },

    #[error("line {line}: vertex index {index} out of range (have {available} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        available: usize,
    },

    #[error("line {line}: unreadable numeric field {field:?}")]
    BadNumber { line: usize, field: String },

    #[error("mesh has no faces")]
    NoFaces,

    #[error("face {face} references vertex {vertex} but mesh has {available} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        vertex: usize,
        available: usize,
    },

    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },

    #[error("edge ({0}, {1}) is shared by three or more faces")]
    NonManifoldEdge(usize, usize),

    #[error("degenerate face {face} at edge {edge}")]
    DegenerateFace { face: usize, edge: usize },

    #[error("mesh failed validation with {issues} issue(s)")]
    InvalidMesh { issues: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot pool to {target} edges: {remaining} edges remain and no edge is collapsible")]
    PoolStuck { target: usize, remaining: usize },

    #[error("invalid pool target {target} for {edges} edges")]
    PoolTarget { target: usize, edges: usize },

    #[error("zero-norm latent row {0}")]
    ZeroNormLatent(usize),

    #[error("label {label} at edge {edge} is out of range for {classes} classes")]
    LabelOutOfRange {
        edge: usize,
        label: usize,
        classes: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonTriangularFace { .. } => "non_triangular_face",
            Error::IndexOutOfRange { .. } | Error::FaceIndexOutOfRange { .. } => {
                "index_out_of_range"
            }
            Error::BadNumber { .. } => "bad_number",
            Error::NoFaces => "no_faces",
            Error::RepeatedVertex { .. } => "repeated_vertex",
            Error::NonManifoldEdge(..) => "non_manifold",
            Error::DegenerateFace { .. } => "degenerate_face",
            Error::InvalidMesh { .. } => "invalid_mesh",
            Error::EmptyDataset => "empty_dataset",
            Error::Shape(_) => "shape_mismatch",
            Error::PoolStuck { .. } | Error::PoolTarget { .. } => "pool",
            Error::ZeroNormLatent(_) => "zero_norm_latent",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
