//! Class-mean prototypes and exact k-nearest-neighbor queries.
//!
//! Both structures are fitted from the ID records of one split and are
//! immutable afterwards; queries are read-only and safe to run concurrently.
//! All neighbor search is an exact linear scan — at desk scale
//! reproducibility matters more than speed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featstore::{write_atomic, FeatureRecord, FeatureTable, Split};

/// Which vector a record contributes: the backbone embedding or the
/// projection-head output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    RawFeatures,
    Projected,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::RawFeatures => "raw_features",
            Space::Projected => "projected",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether reference and query vectors are rescaled to unit L2 norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    UnitL2,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::None => f.write_str("none"),
            Normalization::UnitL2 => f.write_str("unit_l2"),
        }
    }
}

fn record_vector(rec: &FeatureRecord, space: Space) -> Result<&[f64]> {
    match space {
        Space::RawFeatures => Ok(&rec.features),
        Space::Projected => rec.projected.as_deref().ok_or_else(|| Error::MissingArtifact(
            format!("record '{}' has no projected features (projected space requested)", rec.id),
        )),
    }
}

/// Per-class mean vectors, one row per ID class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    /// `means[c]` is the arithmetic mean of class `c` in the fitted space.
    pub means: Vec<Vec<f64>>,
    pub fitted_on: Split,
    pub space: Space,
}

impl PrototypeSet {
    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }
}

/// Result of a nearest-class-mean query.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestClass {
    /// Argmin class, lowest index on exact distance ties.
    pub class: usize,
    /// Euclidean distance to every class mean.
    pub distances: Vec<f64>,
}

/// Fits one mean vector per ID class from the given split and space.
pub fn fit_class_means(table: &FeatureTable, split: Split, space: Space) -> Result<PrototypeSet> {
    let n = table.manifest.n;
    let dim = match space {
        Space::RawFeatures => table.manifest.d,
        Space::Projected => {
            if table.manifest.m == 0 {
                return Err(Error::MissingArtifact(
                    "projected space requested but the table has m = 0".into(),
                ));
            }
            table.manifest.m
        }
    };
    let mut sums = vec![vec![0.0f64; dim]; n];
    let mut counts = vec![0usize; n];
    for rec in table.id_records_in(split) {
        let v = record_vector(rec, space)?;
        let c = rec.class_label as usize;
        for (acc, x) in sums[c].iter_mut().zip(v) {
            *acc += x;
        }
        counts[c] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Validation(format!(
                "class '{}' has no records in split '{}'",
                table.class_name(c),
                split
            )));
        }
        for acc in sums[c].iter_mut() {
            *acc /= count as f64;
        }
    }
    Ok(PrototypeSet {
        means: sums,
        fitted_on: split,
        space,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance to every prototype and the argmin class.
pub fn nearest_class(protos: &PrototypeSet, feature: &[f64]) -> Result<NearestClass> {
    if feature.len() != protos.dim() {
        return Err(Error::Argument(format!(
            "query has {} dims, prototypes have {}",
            feature.len(),
            protos.dim()
        )));
    }
    let distances: Vec<f64> = protos.means.iter().map(|mu| euclidean(mu, feature)).collect();
    let class = argmin(&distances);
    Ok(NearestClass { class, distances })
}

/// Lowest-index argmin over a nonempty slice.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Lowest-index argmax over a nonempty slice.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact nearest-neighbor index over the ID records of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    /// Reference vectors in insertion (file) order, normalized if requested.
    pub points: Vec<Vec<f64>>,
    /// ID class per reference point.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub space: Space,
    pub normalization: Normalization,
}

impl KnnIndex {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

fn unit_l2(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return Err(Error::NumericDomain(format!("zero-norm vector: {what}")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Builds an exact index from the ID records of `split`.
pub fn build_knn_index(
    table: &FeatureTable,
    split: Split,
    space: Space,
    normalization: Normalization,
) -> Result<KnnIndex> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for rec in table.id_records_in(split) {
        let v = record_vector(rec, space)?;
        let stored = match normalization {
            Normalization::None => v.to_vec(),
            Normalization::UnitL2 => unit_l2(v, &format!("record '{}'", rec.id))?,
        };
        points.push(stored);
        labels.push(rec.class_label as usize);
    }
    if points.is_empty() {
        return Err(Error::Validation(format!(
            "no ID records in split '{split}' to index"
        )));
    }
    Ok(KnnIndex {
        points,
        labels,
        n_classes: table.manifest.n,
        space,
        normalization,
    })
}

/// Distances to all reference points, sorted ascending with insertion-order
/// tie-break. Returns (distance, reference index) pairs.
fn sorted_neighbors(index: &KnnIndex, feature: &[f64], k: usize) -> Result<Vec<(f64, usize)>> {
    if feature.len() != index.dim() {
        return Err(Error::Argument(format!(
            "query has {} dims, index has {}",
            feature.len(),
            index.dim()
        )));
    }
    if k == 0 || k > index.len() {
        return Err(Error::Argument(format!(
            "k = {} out of range [1, {}]",
            k,
            index.len()
        )));
    }
    let query = match index.normalization {
        Normalization::None => feature.to_vec(),
        Normalization::UnitL2 => unit_l2(feature, "query")?,
    };
    let mut dists: Vec<(f64, usize)> = index
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (euclidean(p, &query), i))
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dists)
}

/// Majority vote over the k exact nearest neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Majority {
    /// Argmax-count class, lowest index on ties.
    pub class: usize,
    /// Per-class tally among the k neighbors; sums to k.
    pub counts: Vec<usize>,
}

pub fn knn_majority(index: &KnnIndex, feature: &[f64], k: usize) -> Result<Majority> {
    let neighbors = sorted_neighbors(index, feature, k)?;
    let mut counts = vec![0usize; index.n_classes];
    for (_, i) in &neighbors[..k] {
        counts[index.labels[*i]] += 1;
    }
    let mut class = 0;
    for (c, &count) in counts.iter().enumerate().skip(1) {
        if count > counts[class] {
            class = c;
        }
    }
    Ok(Majority { class, counts })
}

/// Euclidean distance to the k-th nearest reference vector (1-indexed).
pub fn kth_neighbor_distance(index: &KnnIndex, feature: &[f64], k: usize) -> Result<f64> {
    let neighbors = sorted_neighbors(index, feature, k)?;
    Ok(neighbors[k - 1].0)
}

#[derive(Debug, Serialize, Deserialize)]
struct PrototypeManifest {
    n: usize,
    dim: usize,
    fitted_on: Split,
    space: Space,
    data_file: String,
}

fn sidecar_paths(path: &Path, kind: &str) -> (PathBuf, String) {
    let s = path.to_string_lossy();
    let suffix = format!(".{kind}.json");
    let base = s.strip_suffix(&suffix).unwrap_or(&s);
    let json = PathBuf::from(format!("{base}{suffix}"));
    let csv_name = format!(
        "{}.{kind}.csv",
        Path::new(base)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| base.to_string())
    );
    (json, csv_name)
}

fn matrix_csv(rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Persists prototypes as a bare n×d CSV plus a JSON manifest.
pub fn save_prototypes(protos: &PrototypeSet, path: impl AsRef<Path>) -> Result<()> {
    let (json_path, csv_name) = sidecar_paths(path.as_ref(), "protos");
    let manifest = PrototypeManifest {
        n: protos.n_classes(),
        dim: protos.dim(),
        fitted_on: protos.fitted_on,
        space: protos.space,
        data_file: csv_name.clone(),
    };
    let csv = matrix_csv(
        protos
            .means
            .iter()
            .map(|row| row.iter().map(|v| format!("{v}")).collect()),
    );
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&json_path, &json)?;
    write_atomic(&json_path.with_file_name(csv_name), &csv)?;
    Ok(())
}

pub fn load_prototypes(path: impl AsRef<Path>) -> Result<PrototypeSet> {
    let (json_path, _) = sidecar_paths(path.as_ref(), "protos");
    let manifest: PrototypeManifest = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let csv_path = json_path
        .parent()
        .map(|p| p.join(&manifest.data_file))
        .unwrap_or_else(|| PathBuf::from(&manifest.data_file));
    let mut means = Vec::new();
    for (idx, line) in fs::read_to_string(&csv_path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Format {
                    line: idx + 1,
                    msg: format!("bad float '{s}'"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != manifest.dim {
            return Err(Error::Format {
                line: idx + 1,
                msg: format!("expected {} columns, found {}", manifest.dim, row.len()),
            });
        }
        means.push(row);
    }
    if means.len() != manifest.n {
        return Err(Error::Validation(format!(
            "prototype file has {} rows, manifest says {}",
            means.len(),
            manifest.n
        )));
    }
    Ok(PrototypeSet {
        means,
        fitted_on: manifest.fitted_on,
        space: manifest.space,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexManifest {
    count: usize,
    dim: usize,
    n_classes: usize,
    space: Space,
    normalization: Normalization,
    data_file: String,
}

/// Persists an index as a `label,coords...` CSV plus a JSON manifest.
pub fn save_knn_index(index: &KnnIndex, path: impl AsRef<Path>) -> Result<()> {
    let (json_path, csv_name) = sidecar_paths(path.as_ref(), "index");
    let manifest = IndexManifest {
        count: index.len(),
        dim: index.dim(),
        n_classes: index.n_classes,
        space: index.space,
        normalization: index.normalization,
        data_file: csv_name.clone(),
    };
    let csv = matrix_csv(index.points.iter().zip(&index.labels).map(|(row, label)| {
        std::iter::once(label.to_string())
            .chain(row.iter().map(|v| format!("{v}")))
            .collect()
    }));
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&json_path, &json)?;
    write_atomic(&json_path.with_file_name(csv_name), &csv)?;
    Ok(())
}

pub fn load_knn_index(path: impl AsRef<Path>) -> Result<KnnIndex> {
    let (json_path, _) = sidecar_paths(path.as_ref(), "index");
    let manifest: IndexManifest = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let csv_path = json_path
        .parent()
        .map(|p| p.join(&manifest.data_file))
        .unwrap_or_else(|| PathBuf::from(&manifest.data_file));
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in fs::read_to_string(&csv_path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                line: idx + 1,
                msg: "bad label column".into(),
            })?;
        let row: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Format {
                    line: idx + 1,
                    msg: format!("bad float '{s}'"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != manifest.dim {
            return Err(Error::Format {
                line: idx + 1,
                msg: format!("expected {} coordinates, found {}", manifest.dim, row.len()),
            });
        }
        if label >= manifest.n_classes {
            return Err(Error::Format {
                line: idx + 1,
                msg: format!("label {} out of range [0, {})", label, manifest.n_classes),
            });
        }
        points.push(row);
        labels.push(label);
    }
    if points.len() != manifest.count {
        return Err(Error::Validation(format!(
            "index file has {} rows, manifest says {}",
            points.len(),
            manifest.count
        )));
    }
    Ok(KnnIndex {
        points,
        labels,
        n_classes: manifest.n_classes,
        space: manifest.space,
        normalization: manifest.normalization,
    })
}
