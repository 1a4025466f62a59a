//! Central finite-difference gradient checking.

use rand::Rng;
use rand_distr::StandardNormal;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares `backward` against central differences of a random linear
/// functional `w . forward(x)` for every entry of `x`.
///
/// `forward` maps the packed parameter-and-input vector to a flat output;
/// `backward(x, w)` must return `d(w . forward(x)) / dx`. Returns the largest
/// relative error `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<F, B, R>(x: &[f64], forward: F, backward: B, rng: &mut R, step: f64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    B: Fn(&[f64], &[f64]) -> Vec<f64>,
    R: Rng,
{
    let out = forward(x);
    let w: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
    let analytic = backward(x, &w);
    assert_eq!(
        analytic.len(),
        x.len(),
        "backward must return one entry per input"
    );
    let functional = |v: &[f64]| forward(v).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();

    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = functional(&probe);
        probe[i] = orig - step;
        let minus = functional(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    worst
}
