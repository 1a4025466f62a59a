#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use meshclr::mesh::shapes::{icosahedron, icosphere};
use meshclr::mesh::Point;
use meshclr::nn::dense::Dense;
use meshclr::nn::model::{embed_backward, embed_forward, segment_backward, segment_forward};
use meshclr::nn::norm::{group_norm, group_norm_backward};
use meshclr::nn::{
    grad_check, init_params, mesh_conv, mesh_conv_backward, mesh_pool, mesh_pool_backward,
    mesh_unpool, mesh_unpool_backward, Architecture, EdgeTensor, ModelParams, Parts,
    ProjectionHead,
};
use meshclr::Mesh;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Icosphere with every vertex pushed radially by up to `amount`.
pub fn bumpy_sphere(level: usize, amount: f64, seed: u64) -> Mesh {
    let base = icosphere(level);
    let mut r = rng(seed);
    let v = base
        .vertices()
        .iter()
        .map(|&p| {
            let s = 1.0 + r.gen_range(-amount..=amount);
            [p[0] * s, p[1] * s, p[2] * s]
        })
        .collect();
    base.with_vertices(v)
}

/// Open fan of five triangles around a center vertex: 10 edges, 5 on the boundary.
pub fn pentagon_fan(seed: u64) -> Mesh {
    let mut r = rng(seed);
    let mut v = vec![[0.0, 0.0, r.gen_range(-0.2..0.2)]];
    for k in 0..5 {
        let a = k as f64 * std::f64::consts::TAU / 5.0 + r.gen_range(-0.2..0.2);
        v.push([a.cos(), a.sin(), r.gen_range(-0.3..0.3)]);
    }
    let f = (0..5).map(|k| [0, 1 + k, 1 + (k + 1) % 5]).collect();
    Mesh::new(v, f).unwrap()
}

pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub shift: Point,
}

impl Similarity {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let q: Vec<f64> = normals(r, 4);
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let rotation = [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - z * w),
                2.0 * (x * z + y * w),
            ],
            [
                2.0 * (x * y + z * w),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - x * w),
            ],
            [
                2.0 * (x * z - y * w),
                2.0 * (y * z + x * w),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
        Similarity {
            rotation,
            scale: 10f64.powf(r.gen_range(-1.0..1.0)),
            shift: std::array::from_fn(|_| r.gen_range(-10.0..10.0)),
        }
    }

    pub fn apply(&self, mesh: &Mesh) -> Mesh {
        let v = mesh
            .vertices()
            .iter()
            .map(|p| {
                std::array::from_fn(|i| {
                    let row = self.rotation[i];
                    self.scale * (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]) + self.shift[i]
                })
            })
            .collect();
        mesh.with_vertices(v)
    }
}

// ---- direct-summation oracles ----

/// NT-Xent written straight from the definition, one anchor at a time.
pub fn nt_xent_oracle(rows: &[Vec<f64>], tau: f64) -> f64 {
    let n = rows.len();
    let m = n / 2;
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    };
    let mut total = 0.0;
    for i in 0..n {
        let p = if i < m { i + m } else { i - m };
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += (cos(&rows[i], &rows[k]) / tau).exp();
            }
        }
        total += -((cos(&rows[i], &rows[p]) / tau).exp() / denom).ln();
    }
    total / n as f64
}

/// Cross-entropy as `-log(exp(z_y) / sum_c exp(z_c))`, averaged over edges.
pub fn cross_entropy_oracle(logits: &EdgeTensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (e, &y) in labels.iter().enumerate() {
        let denom: f64 = (0..logits.channels).map(|c| logits.get(c, e).exp()).sum();
        total -= (logits.get(y, e).exp() / denom).ln();
    }
    total / labels.len() as f64
}

pub fn accuracy_oracle(predicted: &[usize], labels: &[usize]) -> f64 {
    let mut hits = 0;
    for i in 0..labels.len() {
        if predicted[i] == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

// ---- gradient checks, each returning the worst relative error ----

pub fn conv_grad_error(mesh: &Mesh, c_in: usize, c_out: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, e) = (c_out * c_in * 5, mesh.edge_count());
    let x = normals(&mut r, k + c_out + c_in * e);
    let split = |x: &[f64]| {
        let input = EdgeTensor::from_vec(c_in, e, x[k + c_out..].to_vec()).unwrap();
        (x[..k].to_vec(), x[k..k + c_out].to_vec(), input)
    };
    grad_check(
        &x,
        |x| {
            let (kernel, bias, input) = split(x);
            mesh_conv(&input, mesh, &kernel, &bias).unwrap().data
        },
        |x, w| {
            let (kernel, _, input) = split(x);
            let g = EdgeTensor::from_vec(c_out, e, w.to_vec()).unwrap();
            let grads = mesh_conv_backward(&input, mesh, &kernel, &g).unwrap();
            [grads.kernel, grads.bias, grads.input.data].concat()
        },
        &mut r,
        FD_STEP,
    )
}

pub fn pool_unpool_grad_error(mesh: &Mesh, channels: usize, target: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let e = mesh.edge_count();
    let x = normals(&mut r, channels * e);
    let (_, _, record) = mesh_pool(
        &EdgeTensor::from_vec(channels, e, x.clone()).unwrap(),
        mesh,
        target,
    )
    .unwrap();
    grad_check(
        &x,
        |x| {
            let input = EdgeTensor::from_vec(channels, e, x.to_vec()).unwrap();
            let (pooled, _, rec) = mesh_pool(&input, mesh, target).unwrap();
            mesh_unpool(&pooled, &rec).unwrap().data
        },
        |_, w| {
            let g = EdgeTensor::from_vec(channels, e, w.to_vec()).unwrap();
            let d_pooled = mesh_unpool_backward(&record, &g).unwrap();
            mesh_pool_backward(&record, &d_pooled).unwrap().data
        },
        &mut r,
        FD_STEP,
    )
}

pub fn group_norm_grad_error(channels: usize, groups: usize, edges: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = normals(&mut r, 2 * channels + channels * edges);
    let split = |x: &[f64]| {
        let input = EdgeTensor::from_vec(channels, edges, x[2 * channels..].to_vec()).unwrap();
        (
            x[..channels].to_vec(),
            x[channels..2 * channels].to_vec(),
            input,
        )
    };
    grad_check(
        &x,
        |x| {
            let (gain, offset, input) = split(x);
            group_norm(&input, groups, &gain, &offset).unwrap().0.data
        },
        |x, w| {
            let (gain, offset, input) = split(x);
            let (_, cache) = group_norm(&input, groups, &gain, &offset).unwrap();
            let g = EdgeTensor::from_vec(channels, edges, w.to_vec()).unwrap();
            let grads = group_norm_backward(&cache, &gain, &g);
            [grads.gain, grads.offset, grads.input.data].concat()
        },
        &mut r,
        FD_STEP,
    )
}

fn dense_from(x: &[f64], inputs: usize, outputs: usize) -> Dense {
    Dense {
        inputs,
        outputs,
        weight: x[..inputs * outputs].to_vec(),
        bias: x[inputs * outputs..inputs * outputs + outputs].to_vec(),
    }
}

fn dense_len(inputs: usize, outputs: usize) -> usize {
    inputs * outputs + outputs
}

pub fn head_grad_error(inputs: usize, hidden: usize, latent: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (l1, l2) = (dense_len(inputs, hidden), dense_len(hidden, latent));
    let x = normals(&mut r, l1 + l2 + inputs);
    let split = |x: &[f64]| {
        let head = ProjectionHead {
            first: dense_from(&x[..l1], inputs, hidden),
            second: dense_from(&x[l1..l1 + l2], hidden, latent),
        };
        (head, x[l1 + l2..].to_vec())
    };
    grad_check(
        &x,
        |x| {
            let (head, enc) = split(x);
            head.forward(&enc).unwrap().0
        },
        |x, w| {
            let (head, enc) = split(x);
            let (_, cache) = head.forward(&enc).unwrap();
            let mut g = ProjectionHead::zeros(inputs, hidden, latent);
            let dx = head.backward(&cache, w, &mut g);
            [
                g.first.weight,
                g.first.bias,
                g.second.weight,
                g.second.bias,
                dx,
            ]
            .concat()
        },
        &mut r,
        FD_STEP,
    )
}

pub fn classifier_grad_error(inputs: usize, classes: usize, edges: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let l = dense_len(inputs, classes);
    let x = normals(&mut r, l + inputs * edges);
    let split = |x: &[f64]| {
        (
            dense_from(&x[..l], inputs, classes),
            EdgeTensor::from_vec(inputs, edges, x[l..].to_vec()).unwrap(),
        )
    };
    grad_check(
        &x,
        |x| {
            let (d, input) = split(x);
            d.forward_edges(&input).unwrap().data
        },
        |x, w| {
            let (d, input) = split(x);
            let mut g = Dense::zeros(inputs, classes);
            let g_out = EdgeTensor::from_vec(classes, edges, w.to_vec()).unwrap();
            let dx = d.backward_edges(&input, &g_out, &mut g);
            [g.weight, g.bias, dx.data].concat()
        },
        &mut r,
        FD_STEP,
    )
}

/// A small network that still pools twice on the icosahedron (30 -> 24 -> 18).
pub fn small_arch(classes: usize) -> Architecture {
    Architecture {
        encoder_channels: vec![4, 6],
        head_hidden: 5,
        latent: 3,
        decoder_channels: vec![4, 4],
        classes,
        groups: 2,
        ..Default::default()
    }
}

fn flatten(params: &ModelParams) -> Vec<f64> {
    params
        .named_tensors()
        .into_iter()
        .flat_map(|(_, t)| t.clone())
        .collect()
}

fn unflatten(template: &ModelParams, x: &[f64]) -> ModelParams {
    let mut p = template.clone();
    let mut at = 0;
    for t in p.tensors_mut() {
        let n = t.len();
        t.copy_from_slice(&x[at..at + n]);
        at += n;
    }
    p
}

/// Encoder + global mean + projection head, all parameters and the input.
pub fn embed_grad_error(mesh: &Mesh, seed: u64) -> f64 {
    let arch = small_arch(2);
    let template = init_params(
        &arch,
        Parts {
            head: true,
            decoder: false,
        },
        seed,
    )
    .unwrap();
    let mut r = rng(seed ^ 0xfeed);
    let np = template.parameter_count();
    let e = mesh.edge_count();
    let mut x = flatten(&template);
    // perturb gains and offsets away from their 1/0 starting values
    x.iter_mut()
        .for_each(|v| *v += 0.1 * r.sample::<f64, _>(StandardNormal));
    x.extend(normals(&mut r, 5 * e));
    let split = |x: &[f64]| {
        (
            unflatten(&template, &x[..np]),
            EdgeTensor::from_vec(5, e, x[np..].to_vec()).unwrap(),
        )
    };
    grad_check(
        &x,
        |x| {
            let (p, input) = split(x);
            embed_forward(&p, &input, mesh).unwrap().latent
        },
        |x, w| {
            let (p, input) = split(x);
            let trace = embed_forward(&p, &input, mesh).unwrap();
            let mut g = p.zeros_like();
            let dx = embed_backward(&p, &trace, w, &mut g).unwrap();
            [flatten(&g), dx.data].concat()
        },
        &mut r,
        FD_STEP,
    )
}

/// Full Mesh-UNet: encoder, skips, decoder and classifier.
pub fn segment_grad_error(mesh: &Mesh, seed: u64) -> f64 {
    let arch = small_arch(3);
    let template = init_params(
        &arch,
        Parts {
            head: false,
            decoder: true,
        },
        seed,
    )
    .unwrap();
    let mut r = rng(seed ^ 0xbeef);
    let np = template.parameter_count();
    let e = mesh.edge_count();
    let mut x = flatten(&template);
    x.iter_mut()
        .for_each(|v| *v += 0.1 * r.sample::<f64, _>(StandardNormal));
    x.extend(normals(&mut r, 5 * e));
    let split = |x: &[f64]| {
        (
            unflatten(&template, &x[..np]),
            EdgeTensor::from_vec(5, e, x[np..].to_vec()).unwrap(),
        )
    };
    grad_check(
        &x,
        |x| {
            let (p, input) = split(x);
            segment_forward(&p, &input, mesh).unwrap().logits.data
        },
        |x, w| {
            let (p, input) = split(x);
            let trace = segment_forward(&p, &input, mesh).unwrap();
            let mut g = p.zeros_like();
            let g_out = EdgeTensor::from_vec(3, e, w.to_vec()).unwrap();
            let dx = segment_backward(&p, &trace, &g_out, &mut g).unwrap();
            [flatten(&g), dx.data].concat()
        },
        &mut r,
        FD_STEP,
    )
}

/// Icosahedron with small random vertex displacements (30 edges).
pub fn jittered_icosahedron(seed: u64) -> Mesh {
    let base = icosahedron();
    let mut r = rng(seed);
    let v = base
        .vertices()
        .iter()
        .map(|p| std::array::from_fn(|i| p[i] + r.gen_range(-0.1..0.1)))
        .collect();
    base.with_vertices(v)
}
