//! Encoder, projection head and Mesh-UNet parameters with explicit
//! forward and backward passes.
//!
//! Encoder block `i`: conv -> group norm -> ReLU -> pool. The post-ReLU
//! activation (before pooling) is kept as the skip for decoder level `i`.
//! Decoder block `j` works at level `L = n - 1 - j`: unpool -> concat skip ->
//! conv -> group norm -> ReLU. A per-edge affine classifier follows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_CHANNELS;
use crate::mesh::Mesh;
use crate::nn::conv::{mesh_conv, mesh_conv_backward, TAPS};
use crate::nn::dense::{Dense, HeadCache, ProjectionHead};
use crate::nn::norm::{group_norm, group_norm_backward, GroupNormCache};
use crate::nn::pool::{
    mesh_pool, mesh_pool_backward, mesh_unpool, mesh_unpool_backward, pool_target, CollapseRecord,
};
use crate::nn::tensor::{global_mean_backward, global_mean_encode, relu, relu_backward};
use crate::nn::EdgeTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub encoder_channels: Vec<usize>,
    /// Edge count after each encoder pool, as a fraction of the input count.
    pub pool_ratios: Vec<f64>,
    pub head_hidden: usize,
    pub latent: usize,
    pub decoder_channels: Vec<usize>,
    pub classes: usize,
    pub groups: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_channels: FEATURE_CHANNELS,
            encoder_channels: vec![16, 32],
            pool_ratios: vec![0.8, 0.6],
            head_hidden: 32,
            latent: 16,
            decoder_channels: vec![16, 16],
            classes: 2,
            groups: 16,
        }
    }
}

impl Architecture {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let n = self.encoder_channels.len();
        if n == 0 {
            return bad("encoder needs at least one block");
        }
        if self.pool_ratios.len() != n || self.decoder_channels.len() != n {
            return bad("pool_ratios and decoder_channels must match the encoder depth");
        }
        let mut prev = 1.0;
        for &r in &self.pool_ratios {
            if !(r > 0.0 && r <= prev) {
                return bad("pool ratios must be in (0, 1] and non-increasing");
            }
            prev = r;
        }
        if self.groups == 0 {
            return bad("groups must be positive");
        }
        for &c in self.encoder_channels.iter().chain(&self.decoder_channels) {
            if c == 0 || c % self.groups != 0 {
                return Err(Error::Config(format!(
                    "{c} channels not divisible into {} groups",
                    self.groups
                )));
            }
        }
        if self.input_channels == 0 || self.head_hidden == 0 || self.latent == 0 || self.classes < 2
        {
            return bad("layer widths must be positive and classes >= 2");
        }
        Ok(())
    }

    pub fn encoder_output(&self) -> usize {
        *self.encoder_channels.last().expect("checked")
    }

    /// Edge counts after each pool for a mesh with `edges` edges; each is
    /// reachable (a multiple of 3 below its predecessor).
    pub fn pool_targets(&self, edges: usize) -> Vec<usize> {
        let mut prev = edges;
        self.pool_ratios
            .iter()
            .map(|&r| {
                let t = pool_target(edges, r).min(prev);
                prev = t;
                t
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub c_in: usize,
    pub c_out: usize,
    /// `[out][in][tap]`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

impl ConvBlock {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        ConvBlock {
            c_in,
            c_out,
            kernel: vec![0.0; c_out * c_in * TAPS],
            bias: vec![0.0; c_out],
            gain: vec![0.0; c_out],
            offset: vec![0.0; c_out],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub encoder: Vec<ConvBlock>,
    pub head: Option<ProjectionHead>,
    pub decoder: Vec<ConvBlock>,
    pub classifier: Option<Dense>,
}

impl ModelParams {
    /// Same shape, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            arch: self.arch.clone(),
            encoder: self
                .encoder
                .iter()
                .map(|b| ConvBlock::zeros(b.c_in, b.c_out))
                .collect(),
            head: self
                .head
                .as_ref()
                .map(|h| ProjectionHead::zeros(h.first.inputs, h.first.outputs, h.second.outputs)),
            decoder: self
                .decoder
                .iter()
                .map(|b| ConvBlock::zeros(b.c_in, b.c_out))
                .collect(),
            classifier: self
                .classifier
                .as_ref()
                .map(|d| Dense::zeros(d.inputs, d.outputs)),
        }
    }

    /// Every parameter array in a fixed order, with a stable name.
    pub fn named_tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, blocks) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, b) in blocks.iter().enumerate() {
                out.push((format!("{prefix}.{i}.kernel"), &b.kernel));
                out.push((format!("{prefix}.{i}.bias"), &b.bias));
                out.push((format!("{prefix}.{i}.gain"), &b.gain));
                out.push((format!("{prefix}.{i}.offset"), &b.offset));
            }
        }
        if let Some(h) = &self.head {
            out.push(("head.0.weight".into(), &h.first.weight));
            out.push(("head.0.bias".into(), &h.first.bias));
            out.push(("head.1.weight".into(), &h.second.weight));
            out.push(("head.1.bias".into(), &h.second.bias));
        }
        if let Some(c) = &self.classifier {
            out.push(("classifier.weight".into(), &c.weight));
            out.push(("classifier.bias".into(), &c.bias));
        }
        out
    }

    /// Mutable view in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for blocks in [&mut self.encoder, &mut self.decoder] {
            for b in blocks.iter_mut() {
                out.push(&mut b.kernel);
                out.push(&mut b.bias);
                out.push(&mut b.gain);
                out.push(&mut b.offset);
            }
        }
        if let Some(h) = &mut self.head {
            out.push(&mut h.first.weight);
            out.push(&mut h.first.bias);
            out.push(&mut h.second.weight);
            out.push(&mut h.second.bias);
        }
        if let Some(c) = &mut self.classifier {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs: Vec<Vec<f64>> = other
            .named_tensors()
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        for (mine, t) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(t) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Encoder-only copy (head, decoder and classifier dropped).
    pub fn encoder_only(&self) -> ModelParams {
        ModelParams {
            arch: self.arch.clone(),
            encoder: self.encoder.clone(),
            head: None,
            decoder: Vec::new(),
            classifier: None,
        }
    }
}

/// Which parts of the network to create.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts {
    pub head: bool,
    pub decoder: bool,
}

fn xavier(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn init_block(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> ConvBlock {
    ConvBlock {
        c_in,
        c_out,
        kernel: xavier(rng, c_out * c_in * TAPS, c_in * TAPS, c_out * TAPS),
        bias: vec![0.0; c_out],
        gain: vec![1.0; c_out],
        offset: vec![0.0; c_out],
    }
}

fn init_dense(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Dense {
    Dense {
        inputs,
        outputs,
        weight: xavier(rng, inputs * outputs, inputs, outputs),
        bias: vec![0.0; outputs],
    }
}

/// Glorot-uniform weights, zero biases, unit group-norm gains.
pub fn init_params(arch: &Architecture, parts: Parts, seed: u64) -> Result<ModelParams> {
    arch.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = init_encoder(arch, &mut rng);
    let head = parts.head.then(|| ProjectionHead {
        first: init_dense(&mut rng, arch.encoder_output(), arch.head_hidden),
        second: init_dense(&mut rng, arch.head_hidden, arch.latent),
    });
    let (decoder, classifier) = if parts.decoder {
        let (d, c) = init_decoder(arch, &mut rng);
        (d, Some(c))
    } else {
        (Vec::new(), None)
    };
    Ok(ModelParams {
        arch: arch.clone(),
        encoder,
        head,
        decoder,
        classifier,
    })
}

fn init_encoder(arch: &Architecture, rng: &mut ChaCha8Rng) -> Vec<ConvBlock> {
    let mut c_in = arch.input_channels;
    arch.encoder_channels
        .iter()
        .map(|&c_out| {
            let b = init_block(rng, c_in, c_out);
            c_in = c_out;
            b
        })
        .collect()
}

pub(crate) fn init_decoder(arch: &Architecture, rng: &mut ChaCha8Rng) -> (Vec<ConvBlock>, Dense) {
    let n = arch.encoder_channels.len();
    let mut prev = arch.encoder_output();
    let decoder = arch
        .decoder_channels
        .iter()
        .enumerate()
        .map(|(j, &c_out)| {
            let skip = arch.encoder_channels[n - 1 - j];
            let b = init_block(rng, prev + skip, c_out);
            prev = c_out;
            b
        })
        .collect();
    let classifier = init_dense(rng, prev, arch.classes);
    (decoder, classifier)
}

struct BlockCache {
    input: EdgeTensor,
    norm: GroupNormCache,
    activation: EdgeTensor,
}

fn block_forward(
    block: &ConvBlock,
    x: &EdgeTensor,
    mesh: &Mesh,
    groups: usize,
) -> Result<BlockCache> {
    let conv = mesh_conv(x, mesh, &block.kernel, &block.bias)?;
    let (normed, norm) = group_norm(&conv, groups, &block.gain, &block.offset)?;
    Ok(BlockCache {
        input: x.clone(),
        norm,
        activation: relu(&normed),
    })
}

fn block_backward(
    block: &ConvBlock,
    cache: &BlockCache,
    mesh: &Mesh,
    grad: &EdgeTensor,
    grads: &mut ConvBlock,
) -> Result<EdgeTensor> {
    let d_norm = relu_backward(&cache.activation, grad);
    let gn = group_norm_backward(&cache.norm, &block.gain, &d_norm);
    let conv = mesh_conv_backward(&cache.input, mesh, &block.kernel, &gn.input)?;
    accumulate(&mut grads.gain, &gn.gain);
    accumulate(&mut grads.offset, &gn.offset);
    accumulate(&mut grads.kernel, &conv.kernel);
    accumulate(&mut grads.bias, &conv.bias);
    Ok(conv.input)
}

fn accumulate(into: &mut [f64], from: &[f64]) {
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

/// Everything the encoder backward pass needs.
pub struct EncoderTrace {
    /// Mesh at each resolution; `meshes[0]` is the input mesh.
    pub meshes: Vec<Mesh>,
    pub records: Vec<CollapseRecord>,
    blocks: Vec<BlockCache>,
    pub output: EdgeTensor,
}

impl EncoderTrace {
    pub fn skip(&self, level: usize) -> &EdgeTensor {
        &self.blocks[level].activation
    }
}

pub fn encoder_forward(
    params: &ModelParams,
    input: &EdgeTensor,
    mesh: &Mesh,
) -> Result<EncoderTrace> {
    if input.channels != params.arch.input_channels {
        return Err(Error::Shape(format!(
            "model expects {} input channels, got {}",
            params.arch.input_channels, input.channels
        )));
    }
    let targets = params.arch.pool_targets(mesh.edge_count());
    let mut meshes = vec![mesh.clone()];
    let mut records = Vec::new();
    let mut blocks = Vec::new();
    let mut x = input.clone();
    for (block, &target) in params.encoder.iter().zip(&targets) {
        let current = meshes.last().expect("nonempty");
        let cache = block_forward(block, &x, current, params.arch.groups)?;
        let (pooled, pooled_mesh, record) = mesh_pool(&cache.activation, current, target)?;
        blocks.push(cache);
        records.push(record);
        meshes.push(pooled_mesh);
        x = pooled;
    }
    Ok(EncoderTrace {
        meshes,
        records,
        blocks,
        output: x,
    })
}

/// Backpropagates through the encoder. `skip_grads[i]`, if given, is added to
/// the gradient of block `i`'s activation.
pub fn encoder_backward(
    params: &ModelParams,
    trace: &EncoderTrace,
    grad_output: &EdgeTensor,
    skip_grads: Option<&[EdgeTensor]>,
    grads: &mut ModelParams,
) -> Result<EdgeTensor> {
    let mut g = grad_output.clone();
    for i in (0..params.encoder.len()).rev() {
        let mut d_act = mesh_pool_backward(&trace.records[i], &g)?;
        if let Some(skips) = skip_grads {
            d_act.add_assign(&skips[i]);
        }
        g = block_backward(
            &params.encoder[i],
            &trace.blocks[i],
            &trace.meshes[i],
            &d_act,
            &mut grads.encoder[i],
        )?;
    }
    Ok(g)
}

/// Latent vector of one mesh for the contrastive loss.
pub struct EmbedTrace {
    pub encoder: EncoderTrace,
    head: HeadCache,
    pub latent: Vec<f64>,
}

pub fn embed_forward(params: &ModelParams, input: &EdgeTensor, mesh: &Mesh) -> Result<EmbedTrace> {
    let head = params
        .head
        .as_ref()
        .ok_or_else(|| Error::Config("model has no projection head".into()))?;
    let encoder = encoder_forward(params, input, mesh)?;
    let pooled = global_mean_encode(&encoder.output)?;
    let (latent, cache) = head.forward(&pooled)?;
    Ok(EmbedTrace {
        encoder,
        head: cache,
        latent,
    })
}

pub fn embed_backward(
    params: &ModelParams,
    trace: &EmbedTrace,
    grad_latent: &[f64],
    grads: &mut ModelParams,
) -> Result<EdgeTensor> {
    let head = params.head.as_ref().expect("checked in forward");
    let g_head = grads
        .head
        .as_mut()
        .ok_or_else(|| Error::Shape("gradient buffer has no head".into()))?;
    let d_pooled = head.backward(&trace.head, grad_latent, g_head);
    let d_enc = global_mean_backward(&d_pooled, trace.encoder.output.edges);
    encoder_backward(params, &trace.encoder, &d_enc, None, grads)
}

pub struct SegmentTrace {
    pub encoder: EncoderTrace,
    decoder: Vec<BlockCache>,
    classifier_input: EdgeTensor,
    pub logits: EdgeTensor,
}

pub fn segment_forward(
    params: &ModelParams,
    input: &EdgeTensor,
    mesh: &Mesh,
) -> Result<SegmentTrace> {
    let classifier = params
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Config("model has no classifier".into()))?;
    let encoder = encoder_forward(params, input, mesh)?;
    let n = params.encoder.len();
    let mut x = encoder.output.clone();
    let mut decoder = Vec::with_capacity(n);
    for (j, block) in params.decoder.iter().enumerate() {
        let level = n - 1 - j;
        let up = mesh_unpool(&x, &encoder.records[level])?;
        let joined = up.concat(encoder.skip(level))?;
        let cache = block_forward(block, &joined, &encoder.meshes[level], params.arch.groups)?;
        x = cache.activation.clone();
        decoder.push(cache);
    }
    let logits = classifier.forward_edges(&x)?;
    Ok(SegmentTrace {
        encoder,
        decoder,
        classifier_input: x,
        logits,
    })
}

pub fn segment_backward(
    params: &ModelParams,
    trace: &SegmentTrace,
    grad_logits: &EdgeTensor,
    grads: &mut ModelParams,
) -> Result<EdgeTensor> {
    let classifier = params.classifier.as_ref().expect("checked in forward");
    let g_cls = grads
        .classifier
        .as_mut()
        .ok_or_else(|| Error::Shape("gradient buffer has no classifier".into()))?;
    let mut g = classifier.backward_edges(&trace.classifier_input, grad_logits, g_cls);
    let n = params.encoder.len();
    let mut skip_grads: Vec<EdgeTensor> = trace
        .encoder
        .blocks
        .iter()
        .map(|b| EdgeTensor::zeros(b.activation.channels, b.activation.edges))
        .collect();
    for j in (0..params.decoder.len()).rev() {
        let level = n - 1 - j;
        let d_joined = block_backward(
            &params.decoder[j],
            &trace.decoder[j],
            &trace.encoder.meshes[level],
            &g,
            &mut grads.decoder[j],
        )?;
        let up_channels = d_joined.channels - trace.encoder.skip(level).channels;
        let (d_up, d_skip) = d_joined.split(up_channels);
        skip_grads[level].add_assign(&d_skip);
        g = mesh_unpool_backward(&trace.encoder.records[level], &d_up)?;
    }
    encoder_backward(params, &trace.encoder, &g, Some(&skip_grads), grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::icosphere;

    fn stats(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn init_is_seeded() {
        let arch = Architecture::default();
        let parts = Parts {
            head: true,
            decoder: true,
        };
        let a = init_params(&arch, parts, 9).unwrap();
        assert_eq!(a, init_params(&arch, parts, 9).unwrap());
        assert_ne!(a, init_params(&arch, parts, 10).unwrap());
        for (name, t) in a.named_tensors() {
            if name.ends_with("bias") || name.ends_with("offset") {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn glorot_std_for_square_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = init_dense(&mut rng, 64, 64);
        let (_, std) = stats(&d.weight);
        // Uniform(-b, b) has std b / sqrt(3), b = sqrt(6 / 128)
        let theory = (6.0f64 / 128.0).sqrt() / 3f64.sqrt();
        assert!((std - theory).abs() / theory < 0.15, "{std} vs {theory}");
    }

    #[test]
    fn architecture_checks() {
        let mut arch = Architecture::default();
        assert!(arch.check().is_ok());
        arch.groups = 5;
        assert!(arch.check().is_err());
        let arch = Architecture {
            pool_ratios: vec![0.6, 0.8],
            ..Default::default()
        };
        assert!(arch.check().is_err());
    }

    #[test]
    fn pool_targets_are_reachable_and_decreasing() {
        let arch = Architecture::default();
        let t = arch.pool_targets(480);
        assert_eq!(t, vec![384, 288]);
        for e in [30, 120, 481, 750] {
            let t = arch.pool_targets(e);
            assert!(t[0] < e && t[1] < t[0]);
            assert_eq!((e - t[0]) % 3, 0);
            assert_eq!((t[0] - t[1]) % 3, 0);
        }
    }

    #[test]
    fn segmentation_emits_class_channels_per_edge() {
        let arch = Architecture {
            classes: 4,
            ..Default::default()
        };
        let p = init_params(
            &arch,
            Parts {
                head: false,
                decoder: true,
            },
            3,
        )
        .unwrap();
        let m = icosphere(2);
        let f = crate::features::extract_features(&m).unwrap().to_tensor();
        let t = segment_forward(&p, &f, &m).unwrap();
        assert_eq!((t.logits.channels, t.logits.edges), (4, 480));
        assert!(t.logits.is_finite());
    }
}
