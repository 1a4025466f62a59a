//! NT-Xent contrastive loss over a batch of paired latents.
//!
//! Rows `i` and `i + M` are the two views of source mesh `i`. Each of the
//! `2M` rows is an anchor; its denominator runs over every other row.

use crate::error::{Error, Result};

/// `2M` latent rows; row `i` pairs with row `(i + M) mod 2M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    rows: Vec<Vec<f64>>,
}

impl LatentBatch {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 || !rows.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "latent batch needs an even number >= 2 of rows, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("latent rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Shape("latent batch has non-finite entries".into()));
        }
        Ok(LatentBatch { rows })
    }

    pub fn pairs(&self) -> usize {
        self.rows.len() / 2
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn positive(&self, i: usize) -> usize {
        (i + self.pairs()) % self.rows.len()
    }
}

fn unit_rows(batch: &LatentBatch) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut units = Vec::with_capacity(batch.rows.len());
    let mut norms = Vec::with_capacity(batch.rows.len());
    for (i, r) in batch.rows.iter().enumerate() {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::ZeroNormLatent(i));
        }
        units.push(r.iter().map(|v| v / n).collect());
        norms.push(n);
    }
    Ok((units, norms))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Forward {
    terms: Vec<f64>,
    /// softmax over `k != i` of the scaled similarities, per anchor
    probs: Vec<Vec<f64>>,
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn forward(batch: &LatentBatch, tau: f64) -> Result<Forward> {
    if !(tau > 0.0) {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let (units, norms) = unit_rows(batch)?;
    let n = units.len();
    let mut terms = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|k| {
                if k == i {
                    f64::NEG_INFINITY
                } else {
                    dot(&units[i], &units[k]) / tau
                }
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        terms.push(lse - logits[batch.positive(i)]);
        probs.push(logits.iter().map(|&l| (l - lse).exp()).collect());
    }
    Ok(Forward {
        terms,
        probs,
        units,
        norms,
    })
}

/// Per-anchor losses `l_i`, each non-negative.
pub fn nt_xent_terms(batch: &LatentBatch, tau: f64) -> Result<Vec<f64>> {
    Ok(forward(batch, tau)?.terms)
}

/// Mean of the per-anchor losses over all `2M` anchors.
pub fn nt_xent(batch: &LatentBatch, tau: f64) -> Result<f64> {
    let t = nt_xent_terms(batch, tau)?;
    Ok(t.iter().sum::<f64>() / t.len() as f64)
}

/// Loss and its gradient with respect to every (unnormalized) latent row.
pub fn nt_xent_with_grad(batch: &LatentBatch, tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let fw = forward(batch, tau)?;
    let n = fw.units.len();
    let d = fw.units[0].len();
    let scale = 1.0 / (n as f64 * tau);

    // dL/ds_ik where s_ik = u_i . u_k (before the 1/tau)
    let mut coef = vec![vec![0.0; n]; n];
    for i in 0..n {
        let p = batch.positive(i);
        for k in 0..n {
            if k == i {
                continue;
            }
            let c = fw.probs[i][k] - if k == p { 1.0 } else { 0.0 };
            coef[i][k] += c * scale;
            coef[k][i] += c * scale;
        }
    }

    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        let mut du = vec![0.0; d];
        for k in 0..n {
            if coef[i][k] != 0.0 {
                for (g, &u) in du.iter_mut().zip(&fw.units[k]) {
                    *g += coef[i][k] * u;
                }
            }
        }
        // through u = z / |z|
        let ui = &fw.units[i];
        let proj = dot(ui, &du);
        grads.push(
            du.iter()
                .zip(ui)
                .map(|(g, u)| (g - u * proj) / fw.norms[i])
                .collect(),
        );
    }
    let loss = fw.terms.iter().sum::<f64>() / n as f64;
    Ok((loss, grads))
}
