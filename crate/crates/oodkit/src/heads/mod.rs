//! Trainable heads over frozen backbone features: a two-layer classifier
//! (linear → ReLU → linear) and a projection head sharing the same hidden
//! trunk. Forward passes are pure functions of immutable parameters.

mod loss;
mod train;

pub use loss::{cross_entropy, ntxent, CrossEntropyOut, NtxentOut};
pub use train::{
    gradcheck, train_heads, GradProbe, LossKind, TrainConfig, TrainOutcome,
};

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featstore::write_atomic;

/// Weights of both heads. Shapes follow the manifest dimensions:
/// `d` feature dim, `h` hidden width, `n` classes, `m` projection dim.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// Shared trunk, `d x h`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Classification output, `h x n`.
    pub w2c: Array2<f64>,
    pub b2c: Array1<f64>,
    /// Projection output, `h x m`.
    pub w2p: Array2<f64>,
    pub b2p: Array1<f64>,
}

impl HeadParams {
    /// `(d, h, n, m)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.w1.nrows(),
            self.w1.ncols(),
            self.w2c.ncols(),
            self.w2p.ncols(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2c.iter().all(|v| v.is_finite())
            && self.b2c.iter().all(|v| v.is_finite())
            && self.w2p.iter().all(|v| v.is_finite())
            && self.b2p.iter().all(|v| v.is_finite())
    }
}

/// Fan-in scaled uniform initialization, biases zero, deterministic per seed.
pub fn init_heads(d: usize, h: usize, n: usize, m: usize, seed: u64) -> Result<HeadParams> {
    if d == 0 || h == 0 || n == 0 || m == 0 {
        return Err(Error::Argument(format!(
            "head dims must be positive, got d={d} h={h} n={n} m={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Array2<f64> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
    };
    Ok(HeadParams {
        w1: uniform(d, h, d),
        b1: Array1::zeros(h),
        w2c: uniform(h, n, h),
        b2c: Array1::zeros(n),
        w2p: uniform(h, m, h),
        b2p: Array1::zeros(m),
    })
}

fn check_feature_len(params: &HeadParams, feature: &[f64]) -> Result<()> {
    let (d, ..) = params.dims();
    if feature.len() != d {
        return Err(Error::Argument(format!(
            "feature has {} dims, head expects {}",
            feature.len(),
            d
        )));
    }
    Ok(())
}

/// Hidden activations `relu(W1^T x + b1)`.
pub(crate) fn hidden(params: &HeadParams, feature: &[f64]) -> Array1<f64> {
    let x = ndarray::ArrayView1::from(feature);
    let mut pre = params.w1.t().dot(&x) + &params.b1;
    pre.mapv_inplace(|v| v.max(0.0));
    pre
}

/// Class logits `W2c^T relu(W1^T x + b1) + b2c`.
pub fn forward_classifier(params: &HeadParams, feature: &[f64]) -> Result<Vec<f64>> {
    check_feature_len(params, feature)?;
    let h = hidden(params, feature);
    Ok((params.w2c.t().dot(&h) + &params.b2c).to_vec())
}

/// Projected features `W2p^T relu(W1^T x + b1) + b2p`.
pub fn forward_projection(params: &HeadParams, feature: &[f64]) -> Result<Vec<f64>> {
    check_feature_len(params, feature)?;
    let h = hidden(params, feature);
    Ok((params.w2p.t().dot(&h) + &params.b2p).to_vec())
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadManifest {
    d: usize,
    h: usize,
    n: usize,
    m: usize,
    data_file: String,
}

fn head_paths(path: &Path) -> (PathBuf, String) {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".head.json").unwrap_or(&s);
    let json = PathBuf::from(format!("{base}.head.json"));
    let csv = format!(
        "{}.head.csv",
        Path::new(base)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| base.to_string())
    );
    (json, csv)
}

/// Persists params as a flat CSV of named arrays (row-major values) plus a
/// JSON shape manifest.
pub fn save_head_params(params: &HeadParams, path: impl AsRef<Path>) -> Result<()> {
    let (d, h, n, m) = params.dims();
    let (json_path, csv_name) = head_paths(path.as_ref());
    let manifest = HeadManifest {
        d,
        h,
        n,
        m,
        data_file: csv_name.clone(),
    };
    let mut csv = String::new();
    let mut push = |name: &str, values: &mut dyn Iterator<Item = &f64>| {
        csv.push_str(name);
        for v in values {
            csv.push(',');
            csv.push_str(&format!("{v}"));
        }
        csv.push('\n');
    };
    push("w1", &mut params.w1.iter());
    push("b1", &mut params.b1.iter());
    push("w2c", &mut params.w2c.iter());
    push("b2c", &mut params.b2c.iter());
    push("w2p", &mut params.w2p.iter());
    push("b2p", &mut params.b2p.iter());
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&json_path, &json)?;
    write_atomic(&json_path.with_file_name(csv_name), &csv)?;
    Ok(())
}

pub fn load_head_params(path: impl AsRef<Path>) -> Result<HeadParams> {
    let (json_path, _) = head_paths(path.as_ref());
    let manifest: HeadManifest = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let csv_path = json_path
        .parent()
        .map(|p| p.join(&manifest.data_file))
        .unwrap_or_else(|| PathBuf::from(&manifest.data_file));
    let mut arrays = std::collections::BTreeMap::new();
    for (idx, line) in fs::read_to_string(&csv_path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let name = fields.next().unwrap_or("").to_string();
        let values: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Format {
                    line: idx + 1,
                    msg: format!("bad float '{s}'"),
                })
            })
            .collect::<Result<_>>()?;
        arrays.insert(name, values);
    }
    let take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let values = arrays
            .get(name)
            .ok_or_else(|| Error::Validation(format!("missing array '{name}'")))?;
        if values.len() != len {
            return Err(Error::Validation(format!(
                "array '{name}' has {} values, expected {len}",
                values.len()
            )));
        }
        Ok(values.clone())
    };
    let (d, h, n, m) = (manifest.d, manifest.h, manifest.n, manifest.m);
    let arr2 = |v: Vec<f64>, r: usize, c: usize| {
        Array2::from_shape_vec((r, c), v).expect("checked length")
    };
    Ok(HeadParams {
        w1: arr2(take("w1", d * h)?, d, h),
        b1: Array1::from_vec(take("b1", h)?),
        w2c: arr2(take("w2c", h * n)?, h, n),
        b2c: Array1::from_vec(take("b2c", n)?),
        w2p: arr2(take("w2p", h * m)?, h, m),
        b2p: Array1::from_vec(take("b2p", m)?),
    })
}
