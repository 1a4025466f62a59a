//! Synthetic data, dataset directories and the label-fraction experiment.

pub mod experiment;
pub mod files;
pub mod synthetic;

pub use experiment::{
    emit_results, labeled_subset, run_label_fraction_experiment, split_dataset, Arm, CellResult,
    DataSource, ExperimentSpec, ResultsRow, ResultsTable, Split,
};
pub use files::{format_labels, parse_labels, read_dataset, write_dataset};
pub use synthetic::gen_synthetic_dataset;
