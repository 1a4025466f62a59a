use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshclr::augment::{augment_seeded, AugmentationPolicy};
use meshclr::harness::{
    emit_results, gen_synthetic_dataset, labeled_subset, read_dataset,
    run_label_fraction_experiment, write_dataset, DataSource, ExperimentSpec,
};
use meshclr::learn::{
    evaluate, finetune, metrics_csv, pretrain, scratch_encoder, transfer_and_assemble_unet, Dataset,
};
use meshclr::mesh::{parse_obj, read_obj_file, validate_faces, write_obj_file};
use meshclr::nn::Checkpoint;
use meshclr::{extract_features, save_obj, ChannelStats, Error, Result};

/// Contrastive pretraining and edge segmentation for triangle meshes.
#[derive(Parser)]
#[command(name = "meshclr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an OBJ file for structural problems.
    Validate { obj: PathBuf },
    /// Print or save the 5-channel edge features of a mesh.
    Features {
        obj: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write one augmented view of a mesh.
    Augment {
        obj: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        p_shift: Option<f64>,
        #[arg(long)]
        p_flip: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic dataset directory.
    GenData {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastively pretrain an encoder on every mesh of a directory.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Train a segmentation network on a fraction of the labeled meshes.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        /// Label directory; defaults to the mesh directory.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Pretrained encoder; omit to train from scratch.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Percentage of the labeled meshes to train on.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        classes: Option<usize>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Report edge accuracy of a segmentation checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run the label-fraction experiment and write its CSV files.
    Experiment {
        /// TOML spec (same as `--config`); defaults to the desk-scale settings.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Size of the synthetic dataset.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        /// Mesh and label directory instead of synthetic data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        no_ssl: bool,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags mirroring the `[train]` and `[augment]` tables of a spec file.
#[derive(Args)]
struct RunFlags {
    /// TOML spec with `seed`, `[train]` and `[augment]` settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    p_shift: Option<f64>,
    #[arg(long)]
    p_flip: Option<f64>,
}

impl RunFlags {
    /// Spec from `--config` (or `base`), with flags taking precedence.
    fn spec(&self, base: ExperimentSpec) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => base,
        };
        set(&mut spec.seed, self.seed);
        let t = &mut spec.train;
        set(&mut t.m1, self.m1);
        set(&mut t.m2, self.m2);
        set(&mut t.n1, self.n1);
        set(&mut t.n2, self.n2);
        set(&mut t.tau, self.tau);
        set(&mut t.lr, self.lr);
        set(&mut t.groups, self.groups);
        let a = &mut spec.augment;
        set(&mut a.scale_sigma, self.sigma);
        set(&mut a.p_shift, self.p_shift);
        set(&mut a.p_flip, self.p_flip);
        spec.train.seed = spec.seed;
        spec.check()?;
        Ok(spec)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn fit_stats(data: &Dataset) -> Result<ChannelStats> {
    let features = data
        .meshes()
        .iter()
        .map(extract_features)
        .collect::<Result<Vec<_>>>()?;
    ChannelStats::fit(&features)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { obj } => {
            let text = fs::read_to_string(&obj).map_err(|e| Error::Io {
                path: obj.display().to_string(),
                source: e,
            })?;
            let (vertices, faces) = parse_obj(&text)?;
            let report = validate_faces(&vertices, &faces);
            println!("{report}");
            if !report.ok() {
                return Err(Error::InvalidMesh {
                    issues: report.issues.len(),
                });
            }
        }
        Command::Features { obj, csv } => {
            let text = extract_features(&read_obj_file(&obj)?)?.to_csv();
            match csv {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Augment {
            obj,
            seed,
            sigma,
            p_shift,
            p_flip,
            out,
        } => {
            let mut policy = AugmentationPolicy {
                seed,
                ..Default::default()
            };
            set(&mut policy.scale_sigma, sigma);
            set(&mut policy.p_shift, p_shift);
            set(&mut policy.p_flip, p_flip);
            policy.check()?;
            let view = augment_seeded(&read_obj_file(&obj)?, &policy, seed);
            match out {
                Some(path) => write_obj_file(&view, path)?,
                None => print!("{}", save_obj(&view)?),
            }
        }
        Command::GenData {
            n,
            classes,
            seed,
            out,
        } => {
            write_dataset(&gen_synthetic_dataset(n, classes, seed)?, &out)?;
            println!("wrote {n} meshes to {}", out.display());
        }
        Command::Pretrain {
            data,
            run,
            out,
            metrics,
        } => {
            let spec = run.spec(ExperimentSpec::default())?;
            let data = read_dataset(&data, None, Some(1))?;
            let stats = fit_stats(&data)?;
            let result = pretrain(data.meshes(), &stats, &spec.train, &spec.augment)?;
            if let Some(path) = metrics {
                write_text(&path, &metrics_csv(&result.history))?;
            }
            if let Some(last) = result.history.last() {
                println!("final loss {}", last.loss);
            }
            Checkpoint {
                seed: spec.seed,
                stats: Some(stats),
                params: result.encoder,
            }
            .save(&out)?;
        }
        Command::Finetune {
            data,
            labels,
            ckpt,
            fraction,
            classes,
            run,
            out,
            metrics,
        } => {
            let spec = run.spec(ExperimentSpec::default())?;
            let fraction = fraction
                .or_else(|| run.config.as_ref().map(|_| spec.fractions[0]))
                .unwrap_or(100.0);
            let data = read_dataset(&data, Some(labels.as_deref().unwrap_or(&data)), classes)?;
            let labeled = data.labeled_indices();
            let picked = labeled_subset(labeled.len(), fraction, 0, spec.seed)?;
            let subset: Vec<usize> = picked.iter().map(|&i| labeled[i]).collect();
            let (encoder, stats) = match ckpt {
                Some(path) => {
                    let ck = Checkpoint::load(path)?;
                    (ck.params.encoder_only(), ck.stats)
                }
                None => (scratch_encoder(&spec.train)?, None),
            };
            let stats = match stats {
                Some(s) => s,
                None => fit_stats(&data)?,
            };
            let unet = transfer_and_assemble_unet(&encoder, data.classes(), spec.seed)?;
            let result = finetune(
                &data.restrict_labels(&subset)?,
                unet,
                &stats,
                &spec.train,
                None,
            )?;
            if let Some(path) = metrics {
                write_text(&path, &metrics_csv(&result.history))?;
            }
            if let Some(acc) = result.history.last().and_then(|h| h.train_accuracy) {
                println!(
                    "trained on {} meshes, final train accuracy {acc}",
                    subset.len()
                );
            }
            Checkpoint {
                seed: spec.seed,
                stats: Some(stats),
                params: result.params,
            }
            .save(&out)?;
        }
        Command::Eval { ckpt, data, labels } => {
            let ck = Checkpoint::load(&ckpt)?;
            let classifier = ck
                .params
                .classifier
                .as_ref()
                .ok_or_else(|| Error::Checkpoint("no segmentation classifier".into()))?;
            let stats = ck
                .stats
                .clone()
                .ok_or_else(|| Error::Checkpoint("no feature statistics".into()))?;
            let data = read_dataset(
                &data,
                Some(labels.as_deref().unwrap_or(&data)),
                Some(classifier.outputs),
            )?;
            println!("accuracy {}", evaluate(&ck.params, &data, &stats)?);
        }
        Command::Experiment {
            spec,
            fractions,
            repeats,
            n,
            classes,
            data,
            no_ssl,
            run: flags,
            out,
        } => {
            let config = spec.or_else(|| flags.config.clone());
            let mut spec = RunFlags { config, ..flags }.spec(ExperimentSpec::desk())?;
            set(&mut spec.fractions, fractions);
            set(&mut spec.repeats, repeats);
            if no_ssl {
                spec.with_ssl = false;
            }
            if let Some(dir) = data {
                spec.data = DataSource::Directory {
                    meshes: dir,
                    labels: None,
                    classes,
                };
            } else if let DataSource::Synthetic {
                n: size,
                classes: count,
            } = &mut spec.data
            {
                set(size, n);
                set(count, classes);
            }
            let table = run_label_fraction_experiment(&spec)?;
            emit_results(&table, &out)?;
            print!("{}", table.results_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
