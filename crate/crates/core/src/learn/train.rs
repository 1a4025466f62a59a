//! Two-phase training: contrastive pretraining of encoder + head on every
//! mesh, then supervised segmentation of the labeled subset with the
//! pretrained encoder inside a Mesh-UNet.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_seeded, mix_seed, AugmentationPolicy};
use crate::error::{Error, Result};
use crate::features::{extract_features, ChannelStats};
use crate::learn::dataset::Dataset;
use crate::learn::loss::{cross_entropy_with_grad, edge_accuracy, predict};
use crate::learn::ntxent::{nt_xent_with_grad, LatentBatch};
use crate::mesh::Mesh;
use crate::nn::model::{
    embed_backward, embed_forward, init_decoder, init_params, segment_backward, segment_forward,
    Architecture, ModelParams, Parts,
};
use crate::nn::{Adam, AdamConfig, EdgeTensor};

// stream tags mixed into the run seed
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const VIEW_STREAM: u64 = 3;
const FINETUNE_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Pretraining minibatch size (source meshes, before pairing).
    pub m1: usize,
    /// Fine-tuning minibatch size.
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
    pub tau: f64,
    pub lr: f64,
    pub groups: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m1: 32,
            m2: 12,
            n1: 100,
            n2: 30,
            tau: 0.7,
            lr: 0.0002,
            groups: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// CPU-sized settings for the synthetic harness.
    pub fn desk() -> Self {
        TrainConfig {
            m1: 8,
            m2: 4,
            n1: 20,
            n2: 15,
            lr: 0.001,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.m1 < 2 || self.m2 < 1 {
            return Err(Error::Config("need m1 >= 2 and m2 >= 1".into()));
        }
        if !(self.tau > 0.0) || !(self.lr > 0.0) {
            return Err(Error::Config("tau and lr must be positive".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, classes: usize) -> Architecture {
        Architecture {
            groups: self.groups,
            classes,
            ..Default::default()
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

/// One row of training history.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    /// Held-out edge accuracy after the epoch, when an eval set is supplied.
    pub accuracy: Option<f64>,
    /// Edge accuracy of the epoch's own forward passes, before each update.
    pub train_accuracy: Option<f64>,
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("epoch,phase,loss,accuracy,train_accuracy\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.phase.as_str(),
            r.loss,
            opt(r.accuracy),
            opt(r.train_accuracy)
        ));
    }
    out
}

/// Standardized feature tensor of a mesh.
pub fn input_tensor(mesh: &Mesh, stats: &ChannelStats) -> Result<EdgeTensor> {
    Ok(stats.apply(&extract_features(mesh)?).to_tensor())
}

/// Two independent augmented views per source mesh, laid out so that view
/// `i` and view `i + M` come from source `i`.
pub fn build_positive_pairs(
    batch: &[&Mesh],
    policy: &AugmentationPolicy,
    seed: u64,
) -> Result<Vec<Mesh>> {
    if batch.len() < 2 {
        return Err(Error::Config(
            "a contrastive batch needs at least two meshes".into(),
        ));
    }
    let m = batch.len();
    Ok((0..2 * m)
        .into_par_iter()
        .map(|slot| augment_seeded(batch[slot % m], policy, mix_seed(seed, slot as u64)))
        .collect())
}

pub struct PretrainOutput {
    /// Encoder only; the projection head is dropped.
    pub encoder: ModelParams,
    pub history: Vec<MetricsRecord>,
}

/// Contrastive pretraining on every mesh of `unlabeled`.
pub fn pretrain(
    unlabeled: &[Mesh],
    stats: &ChannelStats,
    config: &TrainConfig,
    policy: &AugmentationPolicy,
) -> Result<PretrainOutput> {
    config.check()?;
    policy.check()?;
    if unlabeled.len() < config.m1 {
        return Err(Error::Config(format!(
            "pretraining set of {} meshes is smaller than the batch size {}",
            unlabeled.len(),
            config.m1
        )));
    }
    let mut params = initial_params(config)?;
    let mut adam = Adam::new(&params, config.adam());
    let mut history = Vec::with_capacity(config.n1);
    let view_seed = mix_seed(config.seed ^ policy.seed, VIEW_STREAM);

    for epoch in 0..config.n1 {
        let mut order: Vec<usize> = (0..unlabeled.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            mix_seed(config.seed, SHUFFLE_STREAM),
            epoch as u64,
        ));
        order.shuffle(&mut rng);
        let epoch_policy = policy.jittered(epoch as u64);

        let mut losses = Vec::new();
        for (step, chunk) in order.chunks_exact(config.m1).enumerate() {
            let batch: Vec<&Mesh> = chunk.iter().map(|&i| &unlabeled[i]).collect();
            let seed = mix_seed(mix_seed(view_seed, epoch as u64), step as u64);
            let views = build_positive_pairs(&batch, &epoch_policy, seed)?;
            let loss = contrastive_step(&mut params, &mut adam, &views, stats, config.tau)?;
            losses.push(loss);
        }
        history.push(MetricsRecord {
            epoch: epoch + 1,
            phase: Phase::Pretrain,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            accuracy: None,
            train_accuracy: None,
        });
    }

    Ok(PretrainOutput {
        encoder: params.encoder_only(),
        history,
    })
}

/// One Adam step on the NT-Xent loss of a paired batch of views.
pub fn contrastive_step(
    params: &mut ModelParams,
    adam: &mut Adam,
    views: &[Mesh],
    stats: &ChannelStats,
    tau: f64,
) -> Result<f64> {
    let frozen: &ModelParams = params;
    let traces = views
        .par_iter()
        .map(|m| embed_forward(frozen, &input_tensor(m, stats)?, m))
        .collect::<Result<Vec<_>>>()?;
    let batch = LatentBatch::new(traces.iter().map(|t| t.latent.clone()).collect())?;
    let (loss, d_latent) = nt_xent_with_grad(&batch, tau)?;
    let partial = traces
        .par_iter()
        .zip(&d_latent)
        .map(|(t, d)| {
            let mut g = frozen.zeros_like();
            embed_backward(frozen, t, d, &mut g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = params.zeros_like();
    for g in &partial {
        grads.add_assign(g);
    }
    adam.step(params, &grads)?;
    Ok(loss)
}

/// Copies `encoder`'s blocks into a fresh Mesh-UNet whose decoder and
/// classifier are initialized from `seed`.
pub fn transfer_and_assemble_unet(
    encoder: &ModelParams,
    classes: usize,
    seed: u64,
) -> Result<ModelParams> {
    let arch = Architecture {
        classes,
        ..encoder.arch.clone()
    };
    arch.check()?;
    let mut c_in = arch.input_channels;
    if encoder.encoder.len() != arch.encoder_channels.len() {
        return Err(Error::Shape(
            "encoder depth does not match its architecture".into(),
        ));
    }
    for (b, &c_out) in encoder.encoder.iter().zip(&arch.encoder_channels) {
        if b.c_in != c_in || b.c_out != c_out {
            return Err(Error::Shape(format!(
                "encoder block {}->{} where {c_in}->{c_out} was expected",
                b.c_in, b.c_out
            )));
        }
        c_in = c_out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (decoder, classifier) = init_decoder(&arch, &mut rng);
    Ok(ModelParams {
        arch,
        encoder: encoder.encoder.clone(),
        head: None,
        decoder,
        classifier: Some(classifier),
    })
}

/// The encoder [`pretrain`] starts from under the same config, untrained.
pub fn scratch_encoder(config: &TrainConfig) -> Result<ModelParams> {
    Ok(initial_params(config)?.encoder_only())
}

fn initial_params(config: &TrainConfig) -> Result<ModelParams> {
    init_params(
        &config.architecture(2),
        Parts {
            head: true,
            decoder: false,
        },
        mix_seed(config.seed, INIT_STREAM),
    )
}

/// Meshes with labels, featurized once.
struct Prepared {
    input: EdgeTensor,
    mesh: Mesh,
    labels: Vec<usize>,
}

fn prepare(data: &Dataset, stats: &ChannelStats) -> Result<Vec<Prepared>> {
    data.labeled()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(_, mesh, labels)| {
            Ok(Prepared {
                input: input_tensor(mesh, stats)?,
                mesh: mesh.clone(),
                labels: labels.to_vec(),
            })
        })
        .collect()
}

/// Global edge accuracy of `params` over every labeled mesh in `data`.
pub fn evaluate(params: &ModelParams, data: &Dataset, stats: &ChannelStats) -> Result<f64> {
    let prepared = prepare(data, stats)?;
    evaluate_prepared(params, &prepared)
}

fn evaluate_prepared(params: &ModelParams, prepared: &[Prepared]) -> Result<f64> {
    if prepared.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = prepared
        .par_iter()
        .map(|p| {
            let t = segment_forward(params, &p.input, &p.mesh)?;
            let acc = edge_accuracy(&predict(&t.logits), &p.labels)?;
            Ok((acc * p.labels.len() as f64, p.labels.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let hits: f64 = counts.iter().map(|c| c.0).sum();
    let total: usize = counts.iter().map(|c| c.1).sum();
    Ok(hits / total as f64)
}

pub struct FinetuneOutput {
    pub params: ModelParams,
    pub history: Vec<MetricsRecord>,
}

/// Supervised Mesh-UNet training on the labeled meshes of `labeled`. The
/// whole network, including the transferred encoder, is updated.
pub fn finetune(
    labeled: &Dataset,
    params: ModelParams,
    stats: &ChannelStats,
    config: &TrainConfig,
    eval: Option<&Dataset>,
) -> Result<FinetuneOutput> {
    config.check()?;
    let train = prepare(labeled, stats)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let eval = eval.map(|d| prepare(d, stats)).transpose()?;
    let mut params = params;
    let mut adam = Adam::new(&params, config.adam());
    let mut history = Vec::with_capacity(config.n2);

    for epoch in 0..config.n2 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            mix_seed(config.seed, FINETUNE_STREAM),
            epoch as u64,
        ));
        order.shuffle(&mut rng);

        let (mut loss_sum, mut hits, mut edges) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.m2) {
            let frozen: &ModelParams = &params;
            let scale = 1.0 / chunk.len() as f64;
            let partial = chunk
                .par_iter()
                .map(|&i| {
                    let p = &train[i];
                    let trace = segment_forward(frozen, &p.input, &p.mesh)?;
                    let (loss, mut d_logits) = cross_entropy_with_grad(&trace.logits, &p.labels)?;
                    let acc = edge_accuracy(&predict(&trace.logits), &p.labels)?;
                    d_logits.data.iter_mut().for_each(|v| *v *= scale);
                    let mut g = frozen.zeros_like();
                    segment_backward(frozen, &trace, &d_logits, &mut g)?;
                    Ok((loss, acc * p.labels.len() as f64, p.labels.len(), g))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = params.zeros_like();
            for (loss, h, n, g) in &partial {
                loss_sum += loss;
                hits += h;
                edges += n;
                grads.add_assign(g);
            }
            adam.step(&mut params, &grads)?;
        }

        let accuracy = eval
            .as_deref()
            .map(|e| evaluate_prepared(&params, e))
            .transpose()?;
        history.push(MetricsRecord {
            epoch: epoch + 1,
            phase: Phase::Finetune,
            loss: loss_sum / train.len() as f64,
            accuracy,
            train_accuracy: Some(hits / edges as f64),
        });
    }
    Ok(FinetuneOutput { params, history })
}
