//! Deterministic head trainer: AdamW on a convex combination of
//! cross-entropy and NTXent, linear warmup into cosine decay, plus a
//! finite-difference gradient checker for both loss paths.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::featstore::{FeatureRecord, FeatureTable, Split};
use crate::prototypes::argmax;

use super::loss::{cross_entropy, ntxent};
use super::{forward_classifier, HeadParams};

/// Trainer hyperparameters.
///
/// `ntxent_weight` is the mixing weight λ of `λ·NTXent + (1−λ)·CE`;
/// positive pairs are two Gaussian-noise copies of each feature unless
/// `label_aware` picks a same-class partner from the batch instead.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// NTXent temperature τ.
    pub tau: f64,
    /// λ in [0, 1]; 0 trains pure cross-entropy and never evaluates NTXent.
    pub ntxent_weight: f64,
    pub noise_aug_sigma: f64,
    pub label_aware: bool,
    /// Hidden width of the shared trunk.
    pub hidden: usize,
    /// Projection-head output dimension.
    pub proj_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            weight_decay: 0.01,
            warmup_epochs: 5,
            max_epochs: 100,
            batch_size: 64,
            tau: 0.5,
            ntxent_weight: 0.5,
            noise_aug_sigma: 0.1,
            label_aware: false,
            hidden: 512,
            proj_dim: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument("learning_rate must be > 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Argument("tau must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Argument("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ntxent_weight) {
            return Err(Error::Argument("ntxent_weight must lie in [0, 1]".into()));
        }
        if self.hidden == 0 || self.proj_dim == 0 {
            return Err(Error::Argument("hidden and proj_dim must be >= 1".into()));
        }
        if self.noise_aug_sigma < 0.0 {
            return Err(Error::Argument("noise_aug_sigma must be >= 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Argument("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Training result: the selected parameters plus per-epoch curves.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot at the best validation accuracy (final params when the
    /// table has no val ID records).
    pub params: HeadParams,
    pub best_val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2c: Array2<f64>,
    b2c: Array1<f64>,
    w2p: Array2<f64>,
    b2p: Array1<f64>,
}

impl Grads {
    fn zeros(d: usize, h: usize, n: usize, m: usize) -> Grads {
        Grads {
            w1: Array2::zeros((d, h)),
            b1: Array1::zeros(h),
            w2c: Array2::zeros((h, n)),
            b2c: Array1::zeros(n),
            w2p: Array2::zeros((h, m)),
            b2p: Array1::zeros(m),
        }
    }

    fn zero_out(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2c.fill(0.0);
        self.b2c.fill(0.0);
        self.w2p.fill(0.0);
        self.b2p.fill(0.0);
    }
}

/// Pre-activations and hidden activations of the trunk.
fn trunk(params: &HeadParams, x: &[f64]) -> (Array1<f64>, Array1<f64>) {
    let xv = ndarray::ArrayView1::from(x);
    let pre = params.w1.t().dot(&xv) + &params.b1;
    let hid = pre.mapv(|v| v.max(0.0));
    (pre, hid)
}

/// Accumulates gradients of a scalar loss whose gradient w.r.t. the class
/// logits is `grad_logits`.
fn backprop_classifier(params: &HeadParams, x: &[f64], grad_logits: &[f64], grads: &mut Grads) {
    let (pre, hid) = trunk(params, x);
    let g = ndarray::ArrayView1::from(grad_logits);
    for (j, &hj) in hid.iter().enumerate() {
        if hj != 0.0 {
            for (c, &gc) in grad_logits.iter().enumerate() {
                grads.w2c[(j, c)] += hj * gc;
            }
        }
    }
    grads.b2c += &g;
    let grad_hid = params.w2c.dot(&g);
    accumulate_trunk(params, x, &pre, &grad_hid, grads);
}

/// Same for the projection head.
fn backprop_projection(params: &HeadParams, x: &[f64], grad_proj: &[f64], grads: &mut Grads) {
    let (pre, hid) = trunk(params, x);
    let g = ndarray::ArrayView1::from(grad_proj);
    for (j, &hj) in hid.iter().enumerate() {
        if hj != 0.0 {
            for (o, &go) in grad_proj.iter().enumerate() {
                grads.w2p[(j, o)] += hj * go;
            }
        }
    }
    grads.b2p += &g;
    let grad_hid = params.w2p.dot(&g);
    accumulate_trunk(params, x, &pre, &grad_hid, grads);
}

fn accumulate_trunk(
    params: &HeadParams,
    x: &[f64],
    pre: &Array1<f64>,
    grad_hid: &Array1<f64>,
    grads: &mut Grads,
) {
    let _ = params;
    for (j, (&p, &gh)) in pre.iter().zip(grad_hid).enumerate() {
        if p > 0.0 && gh != 0.0 {
            grads.b1[j] += gh;
            for (i, &xi) in x.iter().enumerate() {
                grads.w1[(i, j)] += xi * gh;
            }
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with decoupled weight decay.
struct AdamW {
    t: usize,
    m: Grads,
    v: Grads,
}

impl AdamW {
    fn new(d: usize, h: usize, n: usize, m: usize) -> AdamW {
        AdamW {
            t: 0,
            m: Grads::zeros(d, h, n, m),
            v: Grads::zeros(d, h, n, m),
        }
    }

    fn step(&mut self, params: &mut HeadParams, grads: &Grads, lr: f64, weight_decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        fn update(
            theta: &mut [f64],
            g: &[f64],
            m: &mut [f64],
            v: &mut [f64],
            lr: f64,
            weight_decay: f64,
            bc1: f64,
            bc2: f64,
        ) {
            for i in 0..theta.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * theta[i]);
            }
        }
        macro_rules! step_array {
            ($field:ident) => {
                update(
                    params.$field.as_slice_mut().expect("standard layout"),
                    grads.$field.as_slice().expect("standard layout"),
                    self.m.$field.as_slice_mut().expect("standard layout"),
                    self.v.$field.as_slice_mut().expect("standard layout"),
                    lr,
                    weight_decay,
                    bc1,
                    bc2,
                );
            };
        }
        step_array!(w1);
        step_array!(b1);
        step_array!(w2c);
        step_array!(b2c);
        step_array!(w2p);
        step_array!(b2p);
    }
}

fn flat2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// Linear warmup to `learning_rate`, then cosine decay toward zero.
fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    let warm = cfg.warmup_epochs.min(cfg.max_epochs);
    if epoch < warm {
        cfg.learning_rate * (epoch + 1) as f64 / warm as f64
    } else if cfg.max_epochs == warm {
        cfg.learning_rate
    } else {
        let t = (epoch - warm) as f64 / (cfg.max_epochs - warm) as f64;
        cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

fn val_accuracy(params: &HeadParams, records: &[&FeatureRecord]) -> Result<f64> {
    let mut correct = 0usize;
    for rec in records {
        let logits = forward_classifier(params, &rec.features)?;
        if argmax(&logits) == rec.class_label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

const TRAIN_STREAM: u64 = 0x517c_c1b7_2722_0a95;

/// Trains both heads on the ID train split.
///
/// Deterministic per seed and config: the same call twice returns identical
/// parameters. When the table has val ID records, the returned params are
/// the snapshot from the epoch with the best validation accuracy (earliest
/// epoch on ties).
pub fn train_heads(table: &FeatureTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train: Vec<&FeatureRecord> = table.id_records_in(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Validation(
            "train split has no ID records to train on".into(),
        ));
    }
    let val: Vec<&FeatureRecord> = table.id_records_in(Split::Val).collect();

    let d = table.manifest.d;
    let n = table.manifest.n;
    let (h, m) = (cfg.hidden, cfg.proj_dim);
    let mut params = super::init_heads(d, h, n, m, cfg.seed)?;
    let mut adam = AdamW::new(d, h, n, m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_STREAM);
    let noise = Normal::new(0.0, cfg.noise_aug_sigma.max(f64::MIN_POSITIVE)).expect("sigma");

    let lambda = cfg.ntxent_weight;
    let ce_weight = 1.0 - lambda;
    let mut grads = Grads::zeros(d, h, n, m);
    let mut indices: Vec<usize> = (0..train.len()).collect();

    let mut train_loss = Vec::with_capacity(cfg.max_epochs);
    let mut val_acc_curve = Vec::new();
    let mut best: Option<(f64, usize, HeadParams)> = None;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(cfg, epoch);
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in indices.chunks(cfg.batch_size) {
            grads.zero_out();
            let mut batch_loss = 0.0;

            if ce_weight > 0.0 {
                let scale = ce_weight / batch.len() as f64;
                for &i in batch {
                    let rec = train[i];
                    let logits = forward_classifier(&params, &rec.features)?;
                    let out = cross_entropy(&logits, rec.class_label as usize)?;
                    batch_loss += scale * out.loss;
                    let g: Vec<f64> = out.grad_logits.iter().map(|v| v * scale).collect();
                    backprop_classifier(&params, &rec.features, &g, &mut grads);
                }
            }

            if lambda > 0.0 {
                let mut views: Vec<Vec<f64>> = Vec::with_capacity(batch.len() * 2);
                for (pos, &i) in batch.iter().enumerate() {
                    let partner = if cfg.label_aware {
                        let same: Vec<usize> = batch
                            .iter()
                            .enumerate()
                            .filter(|(p, &j)| {
                                *p != pos && train[j].class_label == train[i].class_label
                            })
                            .map(|(_, &j)| j)
                            .collect();
                        if same.is_empty() {
                            i
                        } else {
                            same[rng.random_range(0..same.len())]
                        }
                    } else {
                        i
                    };
                    let mut aug = |rec: &FeatureRecord| -> Vec<f64> {
                        rec.features.iter().map(|x| x + noise.sample(&mut rng)).collect()
                    };
                    views.push(aug(train[i]));
                    views.push(aug(train[partner]));
                }
                let mut proj = Array2::<f64>::zeros((views.len(), m));
                for (vi, view) in views.iter().enumerate() {
                    let row = super::forward_projection(&params, view)?;
                    for (j, v) in row.into_iter().enumerate() {
                        proj[(vi, j)] = v;
                    }
                }
                let out = ntxent(&proj, cfg.tau)?;
                batch_loss += lambda * out.loss;
                for (vi, view) in views.iter().enumerate() {
                    let g: Vec<f64> = out.grad.row(vi).iter().map(|v| v * lambda).collect();
                    backprop_projection(&params, view, &g, &mut grads);
                }
            }

            adam.step(&mut params, &grads, lr, cfg.weight_decay);
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        train_loss.push(epoch_loss / n_batches as f64);

        if !val.is_empty() {
            let acc = val_accuracy(&params, &val)?;
            val_acc_curve.push(acc);
            let improved = best.as_ref().is_none_or(|(b, _, _)| acc > *b);
            if improved {
                best = Some((acc, epoch, params.clone()));
            }
        }
    }

    let (params, best_val_accuracy, best_epoch) = match best {
        Some((acc, epoch, snapshot)) => (snapshot, Some(acc), Some(epoch)),
        None => (params, None, None),
    };
    Ok(TrainOutcome {
        params,
        best_val_accuracy,
        best_epoch,
        train_loss,
        val_accuracy: val_acc_curve,
    })
}

/// Which loss a gradient check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Ntxent,
}

/// Inputs held fixed while parameters are perturbed.
///
/// For `CrossEntropy` every `(features[i], labels[i])` pair contributes to a
/// mean loss; for `Ntxent` the feature rows are projected through the head
/// and paired `(2i, 2i+1)`.
#[derive(Debug, Clone)]
pub struct GradProbe {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub tau: f64,
}

fn probe_loss(kind: LossKind, params: &HeadParams, probe: &GradProbe) -> Result<f64> {
    match kind {
        LossKind::CrossEntropy => {
            let mut total = 0.0;
            for (x, &label) in probe.features.iter().zip(&probe.labels) {
                let logits = forward_classifier(params, x)?;
                total += cross_entropy(&logits, label)?.loss;
            }
            Ok(total / probe.features.len() as f64)
        }
        LossKind::Ntxent => {
            let m = params.dims().3;
            let mut proj = Array2::<f64>::zeros((probe.features.len(), m));
            for (i, x) in probe.features.iter().enumerate() {
                let row = super::forward_projection(params, x)?;
                for (j, v) in row.into_iter().enumerate() {
                    proj[(i, j)] = v;
                }
            }
            Ok(ntxent(&proj, probe.tau)?.loss)
        }
    }
}

fn probe_grads(kind: LossKind, params: &HeadParams, probe: &GradProbe) -> Result<Grads> {
    let (d, h, n, m) = params.dims();
    let mut grads = Grads::zeros(d, h, n, m);
    match kind {
        LossKind::CrossEntropy => {
            let scale = 1.0 / probe.features.len() as f64;
            for (x, &label) in probe.features.iter().zip(&probe.labels) {
                let logits = forward_classifier(params, x)?;
                let out = cross_entropy(&logits, label)?;
                let g: Vec<f64> = out.grad_logits.iter().map(|v| v * scale).collect();
                backprop_classifier(params, x, &g, &mut grads);
            }
        }
        LossKind::Ntxent => {
            let mut proj = Array2::<f64>::zeros((probe.features.len(), m));
            for (i, x) in probe.features.iter().enumerate() {
                let row = super::forward_projection(params, x)?;
                for (j, v) in row.into_iter().enumerate() {
                    proj[(i, j)] = v;
                }
            }
            let out = ntxent(&proj, probe.tau)?;
            for (i, x) in probe.features.iter().enumerate() {
                let g: Vec<f64> = out.grad.row(i).to_vec();
                backprop_projection(params, x, &g, &mut grads);
            }
        }
    }
    Ok(grads)
}

fn validate_probe(kind: LossKind, params: &HeadParams, probe: &GradProbe) -> Result<()> {
    let (d, _, n, _) = params.dims();
    if probe.features.is_empty() {
        return Err(Error::Argument("probe has no feature rows".into()));
    }
    if probe.features.iter().any(|x| x.len() != d) {
        return Err(Error::Argument(format!("probe features must have {d} dims")));
    }
    match kind {
        LossKind::CrossEntropy => {
            if probe.labels.len() != probe.features.len() {
                return Err(Error::Argument("one label per probe feature required".into()));
            }
            if probe.labels.iter().any(|&l| l >= n) {
                return Err(Error::Argument(format!("probe labels must lie in [0, {n})")));
            }
        }
        LossKind::Ntxent => {
            if !probe.features.len().is_multiple_of(2) {
                return Err(Error::Argument(
                    "NTXent probe needs an even number of feature rows".into(),
                ));
            }
            if !(probe.tau > 0.0) {
                return Err(Error::Argument("probe tau must be > 0".into()));
            }
        }
    }
    Ok(())
}

/// Compares analytic parameter gradients against central finite differences
/// (step `1e-5` scaled by parameter magnitude) and returns the worst
/// relative error. Entries where both sides are below `1e-8` fall back to
/// the absolute difference.
pub fn gradcheck(kind: LossKind, params: &HeadParams, probe: &GradProbe) -> Result<f64> {
    validate_probe(kind, params, probe)?;
    let analytic = probe_grads(kind, params, probe)?;
    let mut worst = 0.0f64;
    let mut work = params.clone();

    // every (array accessor, analytic slice) pair, checked entry by entry
    let arrays: Vec<(&[f64], fn(&mut HeadParams) -> &mut [f64])> = vec![
        (flat2(&analytic.w1), |p| p.w1.as_slice_mut().unwrap()),
        (analytic.b1.as_slice().unwrap(), |p| p.b1.as_slice_mut().unwrap()),
        (flat2(&analytic.w2c), |p| p.w2c.as_slice_mut().unwrap()),
        (analytic.b2c.as_slice().unwrap(), |p| p.b2c.as_slice_mut().unwrap()),
        (flat2(&analytic.w2p), |p| p.w2p.as_slice_mut().unwrap()),
        (analytic.b2p.as_slice().unwrap(), |p| p.b2p.as_slice_mut().unwrap()),
    ];
    for (grad_slice, access) in arrays {
        for i in 0..grad_slice.len() {
            let original = access(&mut work)[i];
            let step = 1e-5 * original.abs().max(1.0);
            access(&mut work)[i] = original + step;
            let up = probe_loss(kind, &work, probe)?;
            access(&mut work)[i] = original - step;
            let down = probe_loss(kind, &work, probe)?;
            access(&mut work)[i] = original;
            let fd = (up - down) / (2.0 * step);
            let a = grad_slice[i];
            let denom = a.abs().max(fd.abs());
            let err = if denom > 1e-8 {
                (a - fd).abs() / denom
            } else {
                (a - fd).abs()
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
