//! Losses with analytic gradients: supervised cross-entropy over logits and
//! the normalized temperature-scaled cross entropy (NTXent) contrastive
//! loss over a batch of projected features.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Cross-entropy loss and its gradient w.r.t. the logits.
#[derive(Debug, Clone)]
pub struct CrossEntropyOut {
    pub loss: f64,
    /// `softmax(logits) - one_hot(label)`
    pub grad_logits: Vec<f64>,
}

/// `-log softmax(logits)[label]`, computed max-subtracted for stability.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<CrossEntropyOut> {
    let n = logits.len();
    if label >= n {
        return Err(Error::Argument(format!(
            "label {label} out of range [0, {n})"
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|l| l - max).collect();
    let sum_exp: f64 = shifted.iter().map(|l| l.exp()).sum();
    let log_sum = sum_exp.ln();
    let loss = log_sum - shifted[label];
    let mut grad_logits: Vec<f64> = shifted.iter().map(|l| l.exp() / sum_exp).collect();
    grad_logits[label] -= 1.0;
    Ok(CrossEntropyOut { loss, grad_logits })
}

/// NTXent loss and its gradient w.r.t. every projected row.
#[derive(Debug, Clone)]
pub struct NtxentOut {
    pub loss: f64,
    /// Same shape as the input batch (`2N x m`).
    pub grad: Array2<f64>,
}

/// Contrastive loss over a `2N x m` batch where rows `(2i, 2i+1)` are the
/// positive pairs. Similarity is cosine; the per-anchor term is
/// `-log(exp(sim(i, partner)/tau) / sum_{k != i} exp(sim(i, k)/tau))`
/// and the loss is the mean over all `2N` anchors.
pub fn ntxent(batch_projected: &Array2<f64>, tau: f64) -> Result<NtxentOut> {
    let rows = batch_projected.nrows();
    let dim = batch_projected.ncols();
    if rows == 0 || !rows.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "batch must hold an even, positive number of rows, got {rows}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be > 0, got {tau}")));
    }

    let mut norms = vec![0.0f64; rows];
    let mut unit = Array2::<f64>::zeros((rows, dim));
    for i in 0..rows {
        let row = batch_projected.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::NumericDomain(format!(
                "row {i} of the projected batch has zero norm"
            )));
        }
        norms[i] = norm;
        for j in 0..dim {
            unit[(i, j)] = row[j] / norm;
        }
    }

    // cosine similarity matrix
    let sims = unit.dot(&unit.t());

    let mut loss = 0.0;
    // d(total loss) / d(sims[i][k]) for k != i
    let mut sim_grad = Array2::<f64>::zeros((rows, rows));
    let inv_anchors = 1.0 / rows as f64;
    for i in 0..rows {
        let partner = i ^ 1;
        let mut max = f64::NEG_INFINITY;
        for k in 0..rows {
            if k != i {
                max = max.max(sims[(i, k)] / tau);
            }
        }
        let mut sum_exp = 0.0;
        for k in 0..rows {
            if k != i {
                sum_exp += (sims[(i, k)] / tau - max).exp();
            }
        }
        let log_sum = max + sum_exp.ln();
        loss += inv_anchors * (log_sum - sims[(i, partner)] / tau);
        for k in 0..rows {
            if k == i {
                continue;
            }
            let softmax_k = (sims[(i, k)] / tau - max).exp() / sum_exp;
            let indicator = if k == partner { 1.0 } else { 0.0 };
            sim_grad[(i, k)] = inv_anchors * (softmax_k - indicator) / tau;
        }
    }

    // chain rule: sims[i][k] = u_i . u_k appears in anchor i and anchor k,
    // then through the normalization u_i = z_i / |z_i|.
    let mut grad = Array2::<f64>::zeros((rows, dim));
    for i in 0..rows {
        let mut grad_unit = Array1::<f64>::zeros(dim);
        for k in 0..rows {
            if k == i {
                continue;
            }
            let w = sim_grad[(i, k)] + sim_grad[(k, i)];
            if w != 0.0 {
                for j in 0..dim {
                    grad_unit[j] += w * unit[(k, j)];
                }
            }
        }
        let radial: f64 = (0..dim).map(|j| grad_unit[j] * unit[(i, j)]).sum();
        for j in 0..dim {
            grad[(i, j)] = (grad_unit[j] - radial * unit[(i, j)]) / norms[i];
        }
    }

    Ok(NtxentOut { loss, grad })
}
