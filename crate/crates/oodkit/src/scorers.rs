//! OOD scoring methods under one orientation convention: higher score means
//! more in-distribution. Binary agreement flags are emitted as 0/1 scores so
//! the same metrics path handles every method.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featstore::{write_atomic, FeatureRecord, FeatureTable, Split};
use crate::heads::{forward_classifier, forward_projection, HeadParams};
use crate::prototypes::{
    argmax, kth_neighbor_distance, knn_majority, nearest_class, KnnIndex, PrototypeSet, Space,
};

/// Temperature-scaled softmax, max-subtracted for stability; sums to 1.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Argument(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::Argument("softmax over empty logits".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Maximum softmax probability at T = 1.
pub fn max_softmax_score(logits: &[f64]) -> Result<f64> {
    let probs = softmax(logits, 1.0)?;
    Ok(probs[argmax(&probs)])
}

/// Maximum raw logit.
pub fn max_logit_score(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Argument("max_logit over empty logits".into()));
    }
    Ok(logits[argmax(logits)])
}

/// `T * logsumexp(logits / T)`: the negated energy, so higher = more ID.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Argument(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::Argument("energy over empty logits".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scaled.iter().map(|l| (l - max).exp()).sum();
    Ok(temperature * (max + sum.ln()))
}

/// Shannon entropy with natural log.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Negated entropy of the T = 1 softmax; higher = more ID.
pub fn entropy_score(logits: &[f64]) -> Result<f64> {
    Ok(-entropy(&softmax(logits, 1.0)?))
}

/// Mean cross-entropy of `softmax(logits / t)` over labeled pairs.
fn mean_ce_at(pairs: &[(Vec<f64>, usize)], t: f64) -> f64 {
    let mut total = 0.0;
    for (logits, label) in pairs {
        let probs = softmax(logits, t).expect("t > 0, nonempty logits");
        total += -probs[*label].max(f64::MIN_POSITIVE).ln();
    }
    total / pairs.len() as f64
}

/// Fits a calibration temperature on the ID records of `split` by
/// golden-section search of the mean cross-entropy over `ln T` in [-2, 4]
/// (tolerance 1e-4).
pub fn fit_temperature(table: &FeatureTable, split: Split) -> Result<f64> {
    let pairs: Vec<(Vec<f64>, usize)> = table
        .id_records_in(split)
        .map(|r| {
            r.logits
                .clone()
                .map(|l| (l, r.class_label as usize))
                .ok_or_else(|| {
                    Error::MissingArtifact(format!(
                        "record '{}' has no logits; temperature fitting needs them",
                        r.id
                    ))
                })
        })
        .collect::<Result<_>>()?;
    fit_temperature_from_pairs(&pairs)
}

pub(crate) fn fit_temperature_from_pairs(pairs: &[(Vec<f64>, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Validation(
            "no ID records with logits to fit a temperature on".into(),
        ));
    }
    let distinct: std::collections::BTreeSet<usize> =
        pairs.iter().map(|(_, label)| *label).collect();
    if distinct.len() < 2 {
        return Err(Error::Validation(
            "temperature fitting needs at least two distinct classes".into(),
        ));
    }
    // golden-section search on ln T
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-2.0f64, 4.0f64);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let mut fa = mean_ce_at(pairs, a.exp());
    let mut fb = mean_ce_at(pairs, b.exp());
    while hi - lo > 1e-4 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = mean_ce_at(pairs, a.exp());
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = mean_ce_at(pairs, b.exp());
        }
    }
    Ok(((lo + hi) / 2.0).exp())
}

/// Negated distance to the k-th nearest reference: higher = more ID.
pub fn knn_score(index: &KnnIndex, feature: &[f64], k: usize) -> Result<f64> {
    Ok(-kth_neighbor_distance(index, feature, k)?)
}

/// Outcome of a dual-head agreement rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agreement {
    /// True when the classification head and the feature-side classifier
    /// predict the same class; doubles as the 0/1 score.
    pub flag: bool,
    /// The classification head's prediction `y1`.
    pub pred_class: usize,
}

/// ID iff `argmax(logits)` equals the nearest-class-mean prediction.
pub fn ncm_agreement(
    logits: &[f64],
    protos: &PrototypeSet,
    feature: &[f64],
) -> Result<Agreement> {
    if logits.len() != protos.n_classes() {
        return Err(Error::Argument(format!(
            "{} logits but {} prototype classes",
            logits.len(),
            protos.n_classes()
        )));
    }
    let y1 = argmax(logits);
    let y2 = nearest_class(protos, feature)?.class;
    Ok(Agreement {
        flag: y1 == y2,
        pred_class: y1,
    })
}

/// ID iff `argmax(logits)` equals the k-NN majority class in the index's
/// space.
pub fn contrastive_agreement(
    logits: &[f64],
    index: &KnnIndex,
    projected_feature: &[f64],
    k: usize,
) -> Result<Agreement> {
    if logits.len() != index.n_classes {
        return Err(Error::Argument(format!(
            "{} logits but {} index classes",
            logits.len(),
            index.n_classes
        )));
    }
    let y1 = argmax(logits);
    let y2 = knn_majority(index, projected_feature, k)?.class;
    Ok(Agreement {
        flag: y1 == y2,
        pred_class: y1,
    })
}

/// Converts class-mean distances into a distribution via `softmax(-d)`.
pub fn distances_to_distribution(distances: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = distances.iter().map(|d| -d).collect();
    softmax(&negated, 1.0).expect("finite distances")
}

/// Converts k-NN counts into a distribution by dividing by k.
pub fn counts_to_distribution(counts: &[usize], k: usize) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total != k {
        return Err(Error::Argument(format!(
            "counts sum to {total}, expected k = {k}"
        )));
    }
    Ok(counts.iter().map(|&c| c as f64 / k as f64).collect())
}

/// A pair of probability distributions over the ID classes: `v1` from the
/// classification head's softmax, `v2` from feature-side evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementVectors {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl AgreementVectors {
    pub fn new(v1: Vec<f64>, v2: Vec<f64>) -> Result<AgreementVectors> {
        if v1.len() != v2.len() || v1.is_empty() {
            return Err(Error::Argument(
                "agreement vectors must share a positive length".into(),
            ));
        }
        for (name, v) in [("v1", &v1), ("v2", &v2)] {
            if v.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Argument(format!(
                    "{name} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Argument(format!(
                    "{name} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(AgreementVectors { v1, v2 })
    }
}

/// Kullback-Leibler divergence with natural log; zero-numerator terms
/// contribute 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum()
}

/// Jensen-Shannon divergence against the midpoint distribution; lies in
/// [0, ln 2].
pub fn jensen_shannon(v1: &[f64], v2: &[f64]) -> f64 {
    let midpoint: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| (a + b) / 2.0).collect();
    0.5 * (kl_divergence(v1, &midpoint) + kl_divergence(v2, &midpoint))
}

/// Which reading of the agreement-score formula to use.
///
/// `Literal` takes the entropy of the unnormalized elementwise product and
/// divides `1 - H` by `ln n`, exactly as printed; `Normalized` divides the
/// entropy itself by `ln n` before subtracting from one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgreementVariant {
    #[default]
    Literal,
    Normalized,
}

impl AgreementVariant {
    pub fn parse(s: &str) -> Result<AgreementVariant> {
        match s {
            "literal" => Ok(AgreementVariant::Literal),
            "normalized" => Ok(AgreementVariant::Normalized),
            other => Err(Error::Argument(format!(
                "unknown agreement variant '{other}' (expected literal or normalized)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgreementVariant::Literal => "literal",
            AgreementVariant::Normalized => "normalized",
        }
    }
}

/// Continuous agreement score between the two head distributions:
/// `(1 - H(v1 ⊙ v2 + ε)) / ln(n) * (1 - JS(v1, v2))` in the literal
/// variant. Natural log throughout; higher = more ID.
pub fn agreement_score(
    v: &AgreementVectors,
    eps: f64,
    n: usize,
    variant: AgreementVariant,
) -> Result<f64> {
    if n != v.v1.len() {
        return Err(Error::Argument(format!(
            "n = {n} but the agreement vectors have {} entries",
            v.v1.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Argument("eps must be > 0".into()));
    }
    let product: Vec<f64> = v.v1.iter().zip(&v.v2).map(|(a, b)| a * b + eps).collect();
    let h = entropy(&product);
    let js = jensen_shannon(&v.v1, &v.v2);
    let ln_n = (n as f64).ln();
    let entropy_term = match variant {
        AgreementVariant::Literal => (1.0 - h) / ln_n,
        AgreementVariant::Normalized => 1.0 - h / ln_n,
    };
    Ok(entropy_term * (1.0 - js))
}

/// Registry of implemented scoring methods, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MaxSoftmax,
    MaxLogit,
    TempScaling,
    Knn,
    EnergyBased,
    Entropy,
    NcmAgreement,
    ContrastiveAgreement,
    NcmAgreementScore,
    ContrastiveAgreementScore,
}

/// Method names that appear in the OOD literature but are intentionally not
/// implemented here; the registry rejects them with a dedicated error.
const RECOGNIZED_UNIMPLEMENTED: &[&str] = &[
    "openmax",
    "she",
    "react",
    "dice",
    "deepsvdd",
    "deep-svdd",
    "centerloss",
    "center-loss",
    "grood",
];

impl Method {
    pub const ALL: [Method; 10] = [
        Method::MaxSoftmax,
        Method::MaxLogit,
        Method::TempScaling,
        Method::Knn,
        Method::EnergyBased,
        Method::Entropy,
        Method::NcmAgreement,
        Method::ContrastiveAgreement,
        Method::NcmAgreementScore,
        Method::ContrastiveAgreementScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MaxSoftmax => "MaxSoftmax",
            Method::MaxLogit => "MaxLogit",
            Method::TempScaling => "TempScaling",
            Method::Knn => "KNN",
            Method::EnergyBased => "EnergyBased",
            Method::Entropy => "Entropy",
            Method::NcmAgreement => "NCMAgreement",
            Method::ContrastiveAgreement => "ContrastiveAgreement",
            Method::NcmAgreementScore => "NCMAgreementScore",
            Method::ContrastiveAgreementScore => "ContrastiveAgreementScore",
        }
    }

    /// Index in [`Method::ALL`], used for deterministic report ordering.
    pub fn registry_index(self) -> usize {
        Method::ALL.iter().position(|m| *m == self).expect("in registry")
    }

    /// Case-insensitive lookup. Unknown names list the registry; names of
    /// known-but-out-of-scope methods get a dedicated error.
    pub fn parse(name: &str) -> Result<Method> {
        let lowered = name.to_ascii_lowercase();
        for m in Method::ALL {
            if m.name().to_ascii_lowercase() == lowered {
                return Ok(m);
            }
        }
        if RECOGNIZED_UNIMPLEMENTED.contains(&lowered.as_str()) {
            return Err(Error::NotImplemented(name.to_string()));
        }
        Err(Error::UnknownMethod {
            name: name.to_string(),
            known: Method::ALL
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", "),
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tunable scorer parameters with the crate-wide defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    /// Neighbor count for KNN-based methods.
    pub k: usize,
    /// Temperature for the energy score.
    pub temperature: f64,
    /// Epsilon inside the agreement-score entropy.
    pub eps: f64,
    pub variant: AgreementVariant,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            k: 50,
            temperature: 1.0,
            eps: 1e-12,
            variant: AgreementVariant::Literal,
        }
    }
}

/// Fitted artifacts a method may require.
#[derive(Debug, Clone, Copy, Default)]
pub struct Artifacts<'a> {
    pub protos: Option<&'a PrototypeSet>,
    pub index: Option<&'a KnnIndex>,
    pub head: Option<&'a HeadParams>,
}

/// Per-sample scoring outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    /// Higher = more in-distribution.
    pub score: f64,
    pub pred_class: usize,
    pub is_ood_true: bool,
}

/// All scores of one method over one split, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub method: String,
    pub params: BTreeMap<String, String>,
    pub records: Vec<ScoreRecord>,
}

/// Logits for a record: stored column unless head params are supplied, in
/// which case the head's classifier output wins.
fn resolve_logits(
    rec: &FeatureRecord,
    artifacts: &Artifacts<'_>,
    method: Method,
) -> Result<Vec<f64>> {
    if let Some(head) = artifacts.head {
        return forward_classifier(head, &rec.features);
    }
    rec.logits.clone().ok_or_else(|| {
        Error::MissingArtifact(format!(
            "method {} needs logits: record '{}' has none and no head params were supplied",
            method.name(),
            rec.id
        ))
    })
}

/// Vector for index queries in the index's space, using the head's
/// projection when the column is absent.
fn resolve_query_vector(
    rec: &FeatureRecord,
    index: &KnnIndex,
    artifacts: &Artifacts<'_>,
    method: Method,
) -> Result<Vec<f64>> {
    match index.space {
        Space::RawFeatures => Ok(rec.features.clone()),
        Space::Projected => {
            if let Some(head) = artifacts.head {
                return forward_projection(head, &rec.features);
            }
            rec.projected.clone().ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "method {} queries projected space: record '{}' has no projected \
                     features and no head params were supplied",
                    method.name(),
                    rec.id
                ))
            })
        }
    }
}

fn need_protos<'a>(artifacts: &Artifacts<'a>, method: Method) -> Result<&'a PrototypeSet> {
    artifacts.protos.ok_or_else(|| {
        Error::MissingArtifact(format!(
            "method {} requires fitted class-mean prototypes (--protos)",
            method.name()
        ))
    })
}

fn need_index<'a>(artifacts: &Artifacts<'a>, method: Method) -> Result<&'a KnnIndex> {
    artifacts.index.ok_or_else(|| {
        Error::MissingArtifact(format!(
            "method {} requires a fitted KNN index (--index)",
            method.name()
        ))
    })
}

fn require_projected_index(index: &KnnIndex, method: Method) -> Result<()> {
    if index.space != Space::Projected {
        return Err(Error::Argument(format!(
            "method {} expects an index over projected space, got {}",
            method.name(),
            index.space
        )));
    }
    Ok(())
}

/// Scores every record of `split` with one method. Output order follows the
/// table; the report records the effective parameters (including a fitted
/// temperature when the method calibrates one).
pub fn score_dataset(
    method: Method,
    params: &MethodParams,
    table: &FeatureTable,
    split: Split,
    artifacts: Artifacts<'_>,
) -> Result<ScoreReport> {
    let records: Vec<&FeatureRecord> = table.records_in(split).collect();
    let mut report_params = BTreeMap::new();

    // method-specific setup
    let fitted_t = if method == Method::TempScaling {
        let pairs: Vec<(Vec<f64>, usize)> = table
            .id_records_in(Split::Val)
            .map(|r| Ok((resolve_logits(r, &artifacts, method)?, r.class_label as usize)))
            .collect::<Result<_>>()?;
        let t = fit_temperature_from_pairs(&pairs)?;
        report_params.insert("T".into(), format!("{t}"));
        Some(t)
    } else {
        None
    };
    match method {
        Method::EnergyBased => {
            report_params.insert("T".into(), format!("{}", params.temperature));
        }
        Method::Knn | Method::ContrastiveAgreement | Method::ContrastiveAgreementScore => {
            report_params.insert("k".into(), format!("{}", params.k));
        }
        _ => {}
    }
    if matches!(
        method,
        Method::NcmAgreementScore | Method::ContrastiveAgreementScore
    ) {
        report_params.insert("eps".into(), format!("{}", params.eps));
        report_params.insert("variant".into(), params.variant.as_str().into());
    }

    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let (score, pred_class) = match method {
            Method::MaxSoftmax => {
                let logits = resolve_logits(rec, &artifacts, method)?;
                (max_softmax_score(&logits)?, argmax(&logits))
            }
            Method::MaxLogit => {
                let logits = resolve_logits(rec, &artifacts, method)?;
                (max_logit_score(&logits)?, argmax(&logits))
            }
            Method::TempScaling => {
                let logits = resolve_logits(rec, &artifacts, method)?;
                let probs = softmax(&logits, fitted_t.expect("fitted above"))?;
                (probs[argmax(&probs)], argmax(&probs))
            }
            Method::EnergyBased => {
                let logits = resolve_logits(rec, &artifacts, method)?;
                (energy_score(&logits, params.temperature)?, argmax(&logits))
            }
            Method::Entropy => {
                let logits = resolve_logits(rec, &artifacts, method)?;
                (entropy_score(&logits)?, argmax(&logits))
            }
            Method::Knn => {
                let index = need_index(&artifacts, method)?;
                let query = resolve_query_vector(rec, index, &artifacts, method)?;
                let score = knn_score(index, &query, params.k)?;
                let pred = knn_majority(index, &query, params.k)?.class;
                (score, pred)
            }
            Method::NcmAgreement => {
                let protos = need_protos(&artifacts, method)?;
                let logits = resolve_logits(rec, &artifacts, method)?;
                let agreement = ncm_agreement(&logits, protos, &rec.features)?;
                (agreement.flag as usize as f64, agreement.pred_class)
            }
            Method::ContrastiveAgreement => {
                let index = need_index(&artifacts, method)?;
                require_projected_index(index, method)?;
                let logits = resolve_logits(rec, &artifacts, method)?;
                let query = resolve_query_vector(rec, index, &artifacts, method)?;
                let agreement = contrastive_agreement(&logits, index, &query, params.k)?;
                (agreement.flag as usize as f64, agreement.pred_class)
            }
            Method::NcmAgreementScore => {
                let protos = need_protos(&artifacts, method)?;
                let logits = resolve_logits(rec, &artifacts, method)?;
                let v1 = softmax(&logits, 1.0)?;
                let near = nearest_class(protos, &rec.features)?;
                let v2 = distances_to_distribution(&near.distances);
                let v = AgreementVectors::new(v1.clone(), v2)?;
                let score = agreement_score(&v, params.eps, table.manifest.n, params.variant)?;
                (score, argmax(&v1))
            }
            Method::ContrastiveAgreementScore => {
                let index = need_index(&artifacts, method)?;
                require_projected_index(index, method)?;
                let logits = resolve_logits(rec, &artifacts, method)?;
                let v1 = softmax(&logits, 1.0)?;
                let query = resolve_query_vector(rec, index, &artifacts, method)?;
                let majority = knn_majority(index, &query, params.k)?;
                let v2 = counts_to_distribution(&majority.counts, params.k)?;
                let v = AgreementVectors::new(v1.clone(), v2)?;
                let score = agreement_score(&v, params.eps, table.manifest.n, params.variant)?;
                (score, argmax(&v1))
            }
        };
        out.push(ScoreRecord {
            id: rec.id.clone(),
            score,
            pred_class,
            is_ood_true: rec.is_ood,
        });
    }
    Ok(ScoreReport {
        method: method.name().to_string(),
        params: report_params,
        records: out,
    })
}

const SCORES_HEADER: &str = "id,method,score,pred_class,is_ood_true";

/// Appends reports into one scores CSV (`id,method,score,pred_class,is_ood_true`).
pub fn save_score_reports(reports: &[ScoreReport], path: impl AsRef<Path>) -> Result<()> {
    let mut csv = String::from(SCORES_HEADER);
    csv.push('\n');
    for report in reports {
        for rec in &report.records {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.id,
                report.method,
                rec.score,
                rec.pred_class,
                rec.is_ood_true as u8
            ));
        }
    }
    write_atomic(path.as_ref(), &csv)
}

/// Loads a scores CSV back into per-method reports (order of first
/// appearance; parameters are not stored in the CSV).
pub fn load_score_reports(path: impl AsRef<Path>) -> Result<Vec<ScoreReport>> {
    let data = fs::read_to_string(path.as_ref())?;
    let mut lines = data.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SCORES_HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                msg: format!("expected header '{SCORES_HEADER}'"),
            })
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<ScoreRecord>> = BTreeMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected 5 columns, found {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Format {
            line: line_no,
            msg: format!("bad {what}"),
        };
        let method = fields[1].to_string();
        let score: f64 = fields[2].parse().map_err(|_| bad("score"))?;
        let pred_class: usize = fields[3].parse().map_err(|_| bad("pred_class"))?;
        let is_ood_true = match fields[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("is_ood_true flag")),
        };
        if !by_method.contains_key(&method) {
            order.push(method.clone());
        }
        by_method.entry(method).or_default().push(ScoreRecord {
            id: fields[0].to_string(),
            score,
            pred_class,
            is_ood_true,
        });
    }
    Ok(order
        .into_iter()
        .map(|method| ScoreReport {
            records: by_method.remove(&method).expect("grouped above"),
            method,
            params: BTreeMap::new(),
        })
        .collect())
}
