use crate::error::{Error, Result};
use crate::nn::EdgeTensor;

fn check_labels(logits: &EdgeTensor, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.edges {
        return Err(Error::Shape(format!(
            "{} labels for {} edges",
            labels.len(),
            logits.edges
        )));
    }
    if let Some((edge, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l >= logits.channels)
    {
        return Err(Error::LabelOutOfRange {
            edge,
            label,
            classes: logits.channels,
        });
    }
    Ok(())
}

fn log_softmax_column(logits: &EdgeTensor, e: usize) -> Vec<f64> {
    let col = logits.column(e);
    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    col.iter().map(|v| v - lse).collect()
}

/// Mean over edges of `-log softmax(logits)[label]`.
pub fn cross_entropy_edges(logits: &EdgeTensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(e, &l)| -log_softmax_column(logits, e)[l])
        .sum();
    Ok(total / labels.len() as f64)
}

/// Loss and `dL/dlogits`.
pub fn cross_entropy_with_grad(logits: &EdgeTensor, labels: &[usize]) -> Result<(f64, EdgeTensor)> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut grad = EdgeTensor::zeros(logits.channels, logits.edges);
    let mut total = 0.0;
    for (e, &l) in labels.iter().enumerate() {
        let logp = log_softmax_column(logits, e);
        total -= logp[l];
        for (c, lp) in logp.iter().enumerate() {
            let target = if c == l { 1.0 } else { 0.0 };
            grad.data[c * logits.edges + e] = (lp.exp() - target) / n;
        }
    }
    Ok((total / n, grad))
}

/// Arg-max class per edge; ties go to the lower class id.
pub fn predict(logits: &EdgeTensor) -> Vec<usize> {
    (0..logits.edges)
        .map(|e| {
            let mut best = 0;
            for c in 1..logits.channels {
                if logits.get(c, e) > logits.get(best, e) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of edges whose prediction matches the label.
pub fn edge_accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Shape("no edges to score".into()));
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_logits() {
        let labels = [0, 2, 1];
        let mut logits = EdgeTensor::zeros(3, 3);
        for (e, &l) in labels.iter().enumerate() {
            logits.data[l * 3 + e] = 1000.0;
        }
        assert!(cross_entropy_edges(&logits, &labels).unwrap() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = EdgeTensor::zeros(8, 10);
        let labels: Vec<usize> = (0..10).map(|e| e % 8).collect();
        let loss = cross_entropy_edges(&logits, &labels).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!((8f64.ln() - 2.079442).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label() {
        let logits = EdgeTensor::zeros(2, 2);
        assert!(matches!(
            cross_entropy_edges(&logits, &[0, 2]),
            Err(Error::LabelOutOfRange {
                edge: 1,
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(edge_accuracy(&[1, 0, 2], &[1, 0, 2]).unwrap(), 1.0);
        // single-class labels, predictions shifted by one mod C
        assert_eq!(edge_accuracy(&[1, 1, 1], &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(edge_accuracy(&[0, 1, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(edge_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = EdgeTensor::from_vec(3, 2, vec![0.3, -1.0, 2.0, 0.1, -0.5, 0.7]).unwrap();
        let labels = [2, 0];
        let (_, g) = cross_entropy_with_grad(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut p = logits.clone();
            p.data[i] += h;
            let mut m = logits.clone();
            m.data[i] -= h;
            let fd = (cross_entropy_edges(&p, &labels).unwrap()
                - cross_entropy_edges(&m, &labels).unwrap())
                / (2.0 * h);
            assert!((fd - g.data[i]).abs() < 1e-8);
        }
    }
}
