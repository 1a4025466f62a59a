//! The label-fraction protocol: for each fraction and repeat, train the
//! Mesh-UNet from scratch and from a contrastively pretrained encoder on the
//! same labeled subset, and compare held-out edge accuracy.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{mix_seed, AugmentationPolicy};
use crate::error::{Error, Result};
use crate::features::{extract_features, ChannelStats};
use crate::harness::files::read_dataset;
use crate::harness::synthetic::gen_synthetic_dataset;
use crate::learn::{
    evaluate, finetune, pretrain, scratch_encoder, transfer_and_assemble_unet, Dataset,
    MetricsRecord, TrainConfig,
};

pub const DEFAULT_FRACTIONS: [f64; 8] = [5.0, 10.0, 25.0, 33.0, 50.0, 67.0, 75.0, 100.0];
pub const DESK_FRACTIONS: [f64; 3] = [25.0, 50.0, 100.0];

const EVAL_STREAM: u64 = 11;
const SUBSET_STREAM: u64 = 12;
const DECODER_STREAM: u64 = 13;
const FINETUNE_STREAM: u64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        n: usize,
        classes: usize,
    },
    Directory {
        meshes: PathBuf,
        /// Defaults to the mesh directory.
        labels: Option<PathBuf>,
        classes: Option<usize>,
    },
}

impl DataSource {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Synthetic { n, classes } => gen_synthetic_dataset(*n, *classes, seed),
            DataSource::Directory {
                meshes,
                labels,
                classes,
            } => read_dataset(meshes, Some(labels.as_deref().unwrap_or(meshes)), *classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Labeled percentages of the training pool, each in (0, 100].
    pub fractions: Vec<f64>,
    pub repeats: usize,
    /// Run the pretrained arm as well as the scratch arm.
    pub with_ssl: bool,
    /// Repeat `r` trains with seed `seed + r`; data and splits derive from `seed`.
    pub seed: u64,
    /// Share of the dataset held out for evaluation and never trained on.
    pub eval_fraction: f64,
    pub data: DataSource,
    pub train: TrainConfig,
    pub augment: AugmentationPolicy,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            repeats: 3,
            with_ssl: true,
            seed: 0,
            eval_fraction: 0.2,
            data: DataSource::Synthetic { n: 40, classes: 2 },
            train: TrainConfig::default(),
            augment: AugmentationPolicy::default(),
        }
    }
}

impl ExperimentSpec {
    /// Settings that finish in minutes on a CPU.
    pub fn desk() -> Self {
        ExperimentSpec {
            fractions: DESK_FRACTIONS.to_vec(),
            train: TrainConfig::desk(),
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn check(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::Config("no fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 100.0)) {
            return Err(Error::Config(format!("fraction {f} is outside (0, 100]")));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::Config("eval_fraction must lie in (0, 1)".into()));
        }
        self.train.check()?;
        self.augment.check()
    }

    pub fn repeat_config(&self, repeat: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(repeat as u64),
            ..self.train.clone()
        }
    }
}

fn fraction_key(fraction: f64) -> u64 {
    (fraction * 1000.0).round() as u64
}

/// Training pool `D_u` and the disjoint held-out evaluation set.
pub struct Split {
    pub pool: Dataset,
    pub eval: Dataset,
}

/// Holds out `round(eval_fraction * n)` meshes (at least one) chosen by a
/// seeded shuffle. Every mesh must be labeled.
pub fn split_dataset(data: &Dataset, eval_fraction: f64, seed: u64) -> Result<Split> {
    if data.labeled_indices().len() != data.len() {
        return Err(Error::Config(
            "every mesh needs a label file for an experiment".into(),
        ));
    }
    let n = data.len();
    let held = ((n as f64 * eval_fraction).round() as usize).max(1);
    if held >= n {
        return Err(Error::Config(format!(
            "{n} meshes are too few to hold out an eval set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, EVAL_STREAM)));
    let (eval, pool) = order.split_at(held);
    let mut pool = pool.to_vec();
    let mut eval = eval.to_vec();
    pool.sort_unstable();
    eval.sort_unstable();
    Ok(Split {
        pool: data.select(&pool),
        eval: data.select(&eval),
    })
}

/// Size of `D_l` for a fraction of a pool.
pub fn labeled_count(pool: usize, fraction: f64) -> usize {
    (fraction * pool as f64 / 100.0).round() as usize
}

/// The `D_l` indices (ascending) shared by both arms of cell `(fraction, repeat)`.
pub fn labeled_subset(pool: usize, fraction: f64, repeat: usize, seed: u64) -> Result<Vec<usize>> {
    let k = labeled_count(pool, fraction);
    if k == 0 {
        return Err(Error::Config(format!(
            "fraction {fraction} of {pool} meshes labels nothing"
        )));
    }
    let mut order: Vec<usize> = (0..pool).collect();
    let cell = mix_seed(
        mix_seed(mix_seed(seed, SUBSET_STREAM), fraction_key(fraction)),
        repeat as u64,
    );
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cell));
    let mut subset = order[..k].to_vec();
    subset.sort_unstable();
    Ok(subset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Scratch,
    Pretrained,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Scratch => "no_ssl",
            Arm::Pretrained => "ssl",
        }
    }
}

/// Fine-tuning outcome of one arm in one `(fraction, repeat)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub fraction: f64,
    pub repeat: usize,
    pub arm: Arm,
    pub accuracy: f64,
    pub history: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub fraction: f64,
    /// Per-repeat accuracies, by repeat.
    pub no_ssl: Vec<f64>,
    pub ssl: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ResultsRow {
    pub fn mean_no_ssl(&self) -> Option<f64> {
        mean(&self.no_ssl)
    }

    pub fn mean_ssl(&self) -> Option<f64> {
        mean(&self.ssl)
    }

    /// `mean_ssl - mean_no_ssl`.
    pub fn diff(&self) -> Option<f64> {
        Some(self.mean_ssl()? - self.mean_no_ssl()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
    /// Sorted by (fraction, repeat, arm).
    pub cells: Vec<CellResult>,
    /// Pretraining loss per repeat, when the pretrained arm ran.
    pub pretrain: Vec<Vec<MetricsRecord>>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl ResultsTable {
    fn from_cells(mut cells: Vec<CellResult>, pretrain: Vec<Vec<MetricsRecord>>) -> Self {
        cells.sort_by(|a, b| {
            a.fraction
                .total_cmp(&b.fraction)
                .then(a.repeat.cmp(&b.repeat))
                .then(a.arm.cmp(&b.arm))
        });
        let mut rows: Vec<ResultsRow> = Vec::new();
        for c in &cells {
            if rows.last().is_none_or(|r| r.fraction != c.fraction) {
                rows.push(ResultsRow {
                    fraction: c.fraction,
                    no_ssl: Vec::new(),
                    ssl: Vec::new(),
                });
            }
            let row = rows.last_mut().expect("row");
            match c.arm {
                Arm::Scratch => row.no_ssl.push(c.accuracy),
                Arm::Pretrained => row.ssl.push(c.accuracy),
            }
        }
        ResultsTable {
            rows,
            cells,
            pretrain,
        }
    }

    pub fn results_csv(&self) -> String {
        let mut out =
            String::from("fraction,acc_no_ssl,acc_ssl,diff,seed_values_no_ssl,seed_values_ssl\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.fraction,
                opt(r.mean_no_ssl()),
                opt(r.mean_ssl()),
                opt(r.diff()),
                joined(&r.no_ssl),
                joined(&r.ssl)
            );
        }
        out
    }

    /// One curve file per (arm, fraction): file name and contents.
    pub fn convergence_csvs(&self) -> Vec<(String, String)> {
        let mut files: Vec<(String, String)> = Vec::new();
        let mut keyed: Vec<&CellResult> = self.cells.iter().collect();
        keyed.sort_by(|a, b| {
            a.arm
                .cmp(&b.arm)
                .then(a.fraction.total_cmp(&b.fraction))
                .then(a.repeat.cmp(&b.repeat))
        });
        for c in keyed {
            let name = format!("convergence_{}_{}.csv", c.arm.as_str(), c.fraction);
            if files.last().is_none_or(|f| f.0 != name) {
                files.push((
                    name,
                    String::from("epoch,repeat,loss,accuracy,train_accuracy\n"),
                ));
            }
            let body = &mut files.last_mut().expect("file").1;
            for h in &c.history {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{}",
                    h.epoch,
                    c.repeat,
                    h.loss,
                    opt(h.accuracy),
                    opt(h.train_accuracy)
                );
            }
        }
        files
    }

    pub fn pretrain_csv(&self) -> String {
        let mut out = String::from("epoch,repeat,loss\n");
        for (r, history) in self.pretrain.iter().enumerate() {
            for h in history {
                let _ = writeln!(out, "{},{},{}", h.epoch, r, h.loss);
            }
        }
        out
    }
}

/// Writes `results.csv`, the convergence curves and `pretrain_loss.csv`
/// into `dir`, creating it if needed.
pub fn emit_results(table: &ResultsTable, dir: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("results.csv", &table.results_csv())?;
    for (name, text) in table.convergence_csvs() {
        write(&name, &text)?;
    }
    write("pretrain_loss.csv", &table.pretrain_csv())
}

/// Runs every cell of the protocol. The output is a pure function of `spec`.
pub fn run_label_fraction_experiment(spec: &ExperimentSpec) -> Result<ResultsTable> {
    spec.check()?;
    let data = spec.data.load(spec.seed)?;
    let split = split_dataset(&data, spec.eval_fraction, spec.seed)?;
    run_on_split(spec, &split)
}

pub fn run_on_split(spec: &ExperimentSpec, split: &Split) -> Result<ResultsTable> {
    spec.check()?;
    let pool = &split.pool;
    let classes = pool.classes();
    let subsets = spec
        .fractions
        .iter()
        .flat_map(|&f| (0..spec.repeats).map(move |r| (f, r)))
        .map(|(f, r)| Ok((f, r, labeled_subset(pool.len(), f, r, spec.seed)?)))
        .collect::<Result<Vec<_>>>()?;

    let features = pool
        .meshes()
        .par_iter()
        .map(extract_features)
        .collect::<Result<Vec<_>>>()?;
    let stats = ChannelStats::fit(&features)?;

    let pretrained = if spec.with_ssl {
        (0..spec.repeats)
            .into_par_iter()
            .map(|r| pretrain(pool.meshes(), &stats, &spec.repeat_config(r), &spec.augment))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut jobs = Vec::new();
    for (f, r, subset) in &subsets {
        jobs.push((*f, *r, Arm::Scratch, subset));
        if spec.with_ssl {
            jobs.push((*f, *r, Arm::Pretrained, subset));
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(fraction, repeat, arm, subset)| {
            let config = spec.repeat_config(repeat);
            let encoder = match arm {
                Arm::Scratch => scratch_encoder(&config)?,
                Arm::Pretrained => pretrained[repeat].encoder.clone(),
            };
            let key = fraction_key(fraction);
            let unet = transfer_and_assemble_unet(
                &encoder,
                classes,
                mix_seed(mix_seed(config.seed, DECODER_STREAM), key),
            )?;
            let cell_config = TrainConfig {
                seed: mix_seed(mix_seed(config.seed, FINETUNE_STREAM), key),
                ..config
            };
            let labeled = pool.restrict_labels(subset)?;
            let out = finetune(&labeled, unet, &stats, &cell_config, Some(&split.eval))?;
            let accuracy = evaluate(&out.params, &split.eval, &stats)?;
            Ok(CellResult {
                fraction,
                repeat,
                arm,
                accuracy,
                history: out.history,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ResultsTable::from_cells(
        cells,
        pretrained.into_iter().map(|p| p.history).collect(),
    ))
}
