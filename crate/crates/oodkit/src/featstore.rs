//! Feature table storage: labeled embedding/logit records with split tags.
//!
//! A table is persisted as a pair of files sharing a base name:
//! `<base>.manifest.json` (dimensions, class names, data file pointer) and
//! `<base>.csv` with the header
//! `id,split,class_label,is_ood,f0..f{d-1}[,l0..l{n-1}][,p0..p{m-1}]`.
//! Floats are serialized as the shortest decimal that round-trips, booleans
//! as `0`/`1`, so save∘load is the identity on valid tables.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset split tag. OOD records never carry `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optional ID/OOD restriction for [`filter_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodFilter {
    IdOnly,
    OodOnly,
}

/// Sentinel class label carried by every OOD record.
pub const OOD_LABEL: i64 = -1;

/// Sidecar manifest describing a feature table's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Number of in-distribution classes.
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    /// Projected-feature dimension, 0 when the table has none.
    pub m: usize,
    /// One name per ID class, indexed by label.
    pub class_names: Vec<String>,
    /// CSV file name, relative to the manifest's directory.
    pub data_file: String,
}

/// One labeled sample: embedding, optional logits, optional projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub split: Split,
    /// Class index in `[0, n)` for ID samples, [`OOD_LABEL`] for OOD.
    pub class_label: i64,
    pub is_ood: bool,
    pub features: Vec<f64>,
    pub logits: Option<Vec<f64>>,
    pub projected: Option<Vec<f64>>,
}

impl FeatureRecord {
    /// ID-class index, `None` for OOD records.
    pub fn id_class(&self) -> Option<usize> {
        if self.is_ood {
            None
        } else {
            Some(self.class_label as usize)
        }
    }
}

/// An immutable, validated collection of [`FeatureRecord`]s.
///
/// Records preserve file order; all downstream iteration is
/// order-deterministic so metrics are reproducible run to run.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub manifest: Manifest,
    pub records: Vec<FeatureRecord>,
}

impl FeatureTable {
    /// Builds a table and validates every invariant.
    pub fn new(manifest: Manifest, records: Vec<FeatureRecord>) -> Result<FeatureTable> {
        let table = FeatureTable { manifest, records };
        table.validate()?;
        Ok(table)
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.manifest.class_names[class]
    }

    /// Records whose split matches, in file order.
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &FeatureRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// ID records of a split, in file order.
    pub fn id_records_in(&self, split: Split) -> impl Iterator<Item = &FeatureRecord> {
        self.records_in(split).filter(|r| !r.is_ood)
    }

    /// True when every record carries logits (and the table is nonempty).
    pub fn has_logits(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.logits.is_some())
    }

    /// True when every record carries projected features.
    pub fn has_projected(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.projected.is_some())
    }

    /// Checks all record- and table-level invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.manifest.n;
        let d = self.manifest.d;
        let m = self.manifest.m;
        if n == 0 {
            return Err(Error::Validation("manifest n must be >= 1".into()));
        }
        if d == 0 {
            return Err(Error::Validation("manifest d must be >= 1".into()));
        }
        if self.manifest.class_names.len() != n {
            return Err(Error::Validation(format!(
                "manifest lists {} class names but n = {}",
                self.manifest.class_names.len(),
                n
            )));
        }

        let mut seen_ids: HashSet<&str> = HashSet::with_capacity(self.records.len());
        let mut any_logits = false;
        let mut any_projected = false;
        let mut all_logits = true;
        let mut all_projected = true;
        // ID labels observed per split, for the stratification check below.
        let mut split_labels: BTreeMap<Split, BTreeSet<i64>> = BTreeMap::new();
        let mut observed_labels: BTreeSet<i64> = BTreeSet::new();

        for rec in &self.records {
            let fail = |msg: String| Error::Record {
                id: rec.id.clone(),
                msg,
            };
            if rec.id.is_empty() {
                return Err(Error::Validation("empty record id".into()));
            }
            if rec.id.contains([',', '"', '\n', '\r']) {
                return Err(fail("id contains a character not representable in CSV".into()));
            }
            if !seen_ids.insert(rec.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id '{}'", rec.id)));
            }
            if rec.is_ood != (rec.class_label == OOD_LABEL) {
                return Err(fail(format!(
                    "is_ood={} inconsistent with class_label={} (OOD sentinel is {})",
                    rec.is_ood, rec.class_label, OOD_LABEL
                )));
            }
            if !rec.is_ood && (rec.class_label < 0 || rec.class_label >= n as i64) {
                return Err(fail(format!(
                    "class_label {} out of range [0, {})",
                    rec.class_label, n
                )));
            }
            if rec.is_ood && rec.split == Split::Train {
                return Err(fail("OOD record assigned to the train split".into()));
            }
            if rec.features.len() != d {
                return Err(fail(format!(
                    "expected {} feature columns, found {}",
                    d,
                    rec.features.len()
                )));
            }
            if let Some(l) = &rec.logits {
                any_logits = true;
                if l.len() != n {
                    return Err(fail(format!("expected {} logit columns, found {}", n, l.len())));
                }
            } else {
                all_logits = false;
            }
            if let Some(p) = &rec.projected {
                any_projected = true;
                if m == 0 {
                    return Err(fail("projected columns present but manifest m = 0".into()));
                }
                if p.len() != m {
                    return Err(fail(format!(
                        "expected {} projected columns, found {}",
                        m,
                        p.len()
                    )));
                }
            } else {
                all_projected = false;
            }
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if !finite(&rec.features)
                || !rec.logits.as_deref().is_none_or(finite)
                || !rec.projected.as_deref().is_none_or(finite)
            {
                return Err(fail("non-finite component".into()));
            }
            if !rec.is_ood {
                observed_labels.insert(rec.class_label);
                split_labels.entry(rec.split).or_default().insert(rec.class_label);
            }
        }

        // The CSV layout carries optional columns for the whole file, so
        // presence must be uniform across records.
        if any_logits && !all_logits {
            return Err(Error::Validation(
                "logits present on some records but not all".into(),
            ));
        }
        if any_projected && !all_projected {
            return Err(Error::Validation(
                "projected features present on some records but not all".into(),
            ));
        }

        // Stratified splits: every ID class that occurs anywhere must occur
        // in each split that holds ID records at all.
        for (split, labels) in &split_labels {
            if labels != &observed_labels {
                let missing: Vec<String> = observed_labels
                    .difference(labels)
                    .map(|c| format!("'{}'", self.manifest.class_names[*c as usize]))
                    .collect();
                return Err(Error::Validation(format!(
                    "split '{}' is missing ID class(es) {} present elsewhere in the table",
                    split,
                    missing.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Keeps records matching `split` (and the optional ID/OOD restriction).
/// The manifest is unchanged; an empty result is legal.
pub fn filter_split(table: &FeatureTable, split: Split, filter: Option<OodFilter>) -> FeatureTable {
    let records = table
        .records_in(split)
        .filter(|r| match filter {
            None => true,
            Some(OodFilter::IdOnly) => !r.is_ood,
            Some(OodFilter::OodOnly) => r.is_ood,
        })
        .cloned()
        .collect();
    FeatureTable {
        manifest: table.manifest.clone(),
        records,
    }
}

const MANIFEST_SUFFIX: &str = ".manifest.json";

/// `path` may be the manifest file itself or the shared base name.
fn manifest_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if s.ends_with(MANIFEST_SUFFIX) {
        path.to_path_buf()
    } else {
        PathBuf::from(format!("{s}{MANIFEST_SUFFIX}"))
    }
}

fn base_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    match s.strip_suffix(MANIFEST_SUFFIX) {
        Some(base) => PathBuf::from(base),
        None => path.to_path_buf(),
    }
}

/// Writes `contents` to `path` atomically (temp file + rename), creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn expected_header(manifest: &Manifest, logits: bool, projected: bool) -> String {
    let mut cols: Vec<String> = vec!["id", "split", "class_label", "is_ood"]
        .into_iter()
        .map(String::from)
        .collect();
    cols.extend((0..manifest.d).map(|i| format!("f{i}")));
    if logits {
        cols.extend((0..manifest.n).map(|i| format!("l{i}")));
    }
    if projected {
        cols.extend((0..manifest.m).map(|i| format!("p{i}")));
    }
    cols.join(",")
}

/// Loads and validates a feature table.
///
/// `path` names the manifest file (or the base name without the
/// `.manifest.json` suffix); the data file is resolved relative to it.
pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let manifest_file = manifest_path(path.as_ref());
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_file)?)?;
    let data_path = match manifest_file.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(&manifest.data_file),
        _ => PathBuf::from(&manifest.data_file),
    };
    let data = fs::read_to_string(&data_path)?;
    let mut lines = data.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Format {
        line: 1,
        msg: "empty data file (missing header)".into(),
    })?;
    let layouts = [
        (false, false),
        (true, false),
        (false, true),
        (true, true),
    ];
    let (has_logits, has_projected) = layouts
        .iter()
        .copied()
        .find(|&(l, p)| expected_header(&manifest, l, p) == header)
        .ok_or_else(|| Error::Format {
            line: 1,
            msg: format!(
                "header does not match the manifest (expected '{}' with optional l*/p* blocks)",
                expected_header(&manifest, false, false)
            ),
        })?;
    if has_projected && manifest.m == 0 {
        return Err(Error::Format {
            line: 1,
            msg: "projected columns in header but manifest m = 0".into(),
        });
    }

    let n_cols = 4
        + manifest.d
        + if has_logits { manifest.n } else { 0 }
        + if has_projected { manifest.m } else { 0 };
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            let id = fields.first().copied().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("expected {} columns, found {}", n_cols, fields.len()),
                });
            }
            return Err(Error::Record {
                id: id.to_string(),
                msg: format!(
                    "dimension mismatch at line {}: expected {} columns, found {}",
                    line_no,
                    n_cols,
                    fields.len()
                ),
            });
        }
        let id = fields[0].to_string();
        let split = Split::parse(fields[1]).ok_or_else(|| Error::Format {
            line: line_no,
            msg: format!("bad split tag '{}'", fields[1]),
        })?;
        let class_label: i64 = fields[2].parse().map_err(|_| Error::Format {
            line: line_no,
            msg: format!("bad class_label '{}'", fields[2]),
        })?;
        let is_ood = match fields[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("bad is_ood flag '{other}' (expected 0 or 1)"),
                })
            }
        };
        let parse_block = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            fields[range]
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Format {
                        line: line_no,
                        msg: format!("bad float '{s}'"),
                    })
                })
                .collect()
        };
        let mut at = 4;
        let features = parse_block(at..at + manifest.d)?;
        at += manifest.d;
        let logits = if has_logits {
            let block = parse_block(at..at + manifest.n)?;
            at += manifest.n;
            Some(block)
        } else {
            None
        };
        let projected = if has_projected {
            Some(parse_block(at..at + manifest.m)?)
        } else {
            None
        };
        records.push(FeatureRecord {
            id,
            split,
            class_label,
            is_ood,
            features,
            logits,
            projected,
        });
    }
    FeatureTable::new(manifest, records)
}

/// Persists a table as `<base>.manifest.json` + `<base>.csv`.
///
/// Writing is atomic per file and byte-deterministic, so saving the same
/// table twice produces identical files.
pub fn save_feature_table(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    table.validate()?;
    let base = base_path(path.as_ref());
    let csv_name = format!(
        "{}.csv",
        base.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Argument("save path has no file name".into()))?
    );
    let manifest = Manifest {
        data_file: csv_name.clone(),
        ..table.manifest.clone()
    };

    let has_logits = table.has_logits();
    let has_projected = table.has_projected();
    let mut csv = String::new();
    csv.push_str(&expected_header(&manifest, has_logits, has_projected));
    csv.push('\n');
    for rec in &table.records {
        csv.push_str(&rec.id);
        csv.push(',');
        csv.push_str(rec.split.as_str());
        csv.push(',');
        csv.push_str(&rec.class_label.to_string());
        csv.push(',');
        csv.push(if rec.is_ood { '1' } else { '0' });
        let mut push_vals = |vals: &[f64]| {
            for v in vals {
                csv.push(',');
                // `{}` is the shortest decimal that round-trips through parse.
                csv.push_str(&format!("{v}"));
            }
        };
        push_vals(&rec.features);
        if has_logits {
            push_vals(rec.logits.as_ref().expect("uniform logits"));
        }
        if has_projected {
            push_vals(rec.projected.as_ref().expect("uniform projected"));
        }
        csv.push('\n');
    }

    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    write_atomic(&manifest_path(&base), &manifest_json)?;
    write_atomic(&base.with_file_name(csv_name), &csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_manifest() -> Manifest {
        Manifest {
            n: 5,
            d: 2,
            m: 0,
            class_names: (0..5).map(|i| format!("class_{i}")).collect(),
            data_file: String::new(),
        }
    }

    fn rec(id: &str, split: Split, label: i64, features: Vec<f64>) -> FeatureRecord {
        FeatureRecord {
            id: id.into(),
            split,
            class_label: label,
            is_ood: label == OOD_LABEL,
            features,
            logits: None,
            projected: None,
        }
    }

    #[test]
    fn load_well_formed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("t");
        std::fs::write(
            dir.path().join("t.manifest.json"),
            r#"{"n":5,"d":2,"m":0,"class_names":["a","b","c","d","e"],"data_file":"t.csv"}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t.csv"),
            "id,split,class_label,is_ood,f0,f1\nr1,val,0,0,0.5,1\nr2,val,3,0,-1,2.25\nr3,test,-1,1,9,9\n",
        )
        .unwrap();
        let table = load_feature_table(&base).unwrap();
        assert_eq!(table.records.len(), 3);
        assert_eq!(table.records[1].features, vec![-1.0, 2.25]);
        assert!(table.records[2].is_ood);
    }

    #[test]
    fn load_rejects_short_row_naming_record() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t.manifest.json"),
            r#"{"n":5,"d":2,"m":0,"class_names":["a","b","c","d","e"],"data_file":"t.csv"}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t.csv"),
            "id,split,class_label,is_ood,f0,f1\nbad-row,val,0,0,0.5\n",
        )
        .unwrap();
        let err = load_feature_table(dir.path().join("t.manifest.json")).unwrap_err();
        match err {
            Error::Record { id, .. } => assert_eq!(id, "bad-row"),
            other => panic!("expected Record error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t.manifest.json"),
            r#"{"n":5,"d":2,"m":0,"class_names":["a","b","c","d","e"],"data_file":"t.csv"}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t.csv"),
            "id,split,class_label,is_ood,f0,f1\nr1,val,7,0,1,2\n",
        )
        .unwrap();
        let err = load_feature_table(dir.path().join("t.manifest.json")).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn load_rejects_bad_header_naming_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("t.manifest.json"),
            r#"{"n":5,"d":2,"m":0,"class_names":["a","b","c","d","e"],"data_file":"t.csv"}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("t.csv"), "id,split,label\n").unwrap();
        match load_feature_table(dir.path().join("t.manifest.json")).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 1),
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip_and_shortest_decimal() {
        let dir = tempfile::tempdir().unwrap();
        let table = FeatureTable::new(
            small_manifest(),
            vec![
                rec("a", Split::Val, 0, vec![0.1, 1.0 / 3.0]),
                rec("b", Split::Val, 1, vec![-2.5, 1e-17]),
                rec("c", Split::Test, OOD_LABEL, vec![3.0, 4.0]),
            ],
        )
        .unwrap();
        let base = dir.path().join("out");
        save_feature_table(&table, &base).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
        assert!(csv.contains("0.1,"), "expected shortest decimal for 0.1: {csv}");
        let reloaded = load_feature_table(&base).unwrap();
        assert_eq!(reloaded.records, table.records);
        assert_eq!(reloaded.manifest.n, table.manifest.n);
    }

    #[test]
    fn save_empty_table_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let table = FeatureTable::new(small_manifest(), vec![]).unwrap();
        let base = dir.path().join("empty");
        save_feature_table(&table, &base).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
        assert_eq!(csv, "id,split,class_label,is_ood,f0,f1\n");
        assert!(load_feature_table(&base).unwrap().records.is_empty());
    }

    #[test]
    fn validate_rejects_ood_in_train() {
        let mut r = rec("x", Split::Train, OOD_LABEL, vec![0.0, 0.0]);
        r.is_ood = true;
        let err = FeatureTable::new(small_manifest(), vec![r]).unwrap_err();
        assert!(err.to_string().contains("train"), "{err}");
    }

    #[test]
    fn validate_rejects_ood_flag_mismatch() {
        let mut r = rec("x", Split::Val, 2, vec![0.0, 0.0]);
        r.is_ood = true;
        assert!(FeatureTable::new(small_manifest(), vec![r]).is_err());
    }

    #[test]
    fn validate_rejects_duplicate_ids_and_nonfinite() {
        let dup = FeatureTable::new(
            small_manifest(),
            vec![
                rec("x", Split::Val, 0, vec![0.0, 0.0]),
                rec("x", Split::Val, 1, vec![0.0, 0.0]),
            ],
        );
        assert!(matches!(dup.unwrap_err(), Error::Validation(_)));
        let nan = FeatureTable::new(
            small_manifest(),
            vec![rec("x", Split::Val, 0, vec![f64::NAN, 0.0])],
        );
        assert!(nan.is_err());
    }

    #[test]
    fn validate_rejects_split_missing_a_class_seen_elsewhere() {
        // class 1 exists in val but not in test, while test holds ID records.
        let table = FeatureTable::new(
            small_manifest(),
            vec![
                rec("a", Split::Val, 0, vec![0.0, 0.0]),
                rec("b", Split::Val, 1, vec![0.0, 1.0]),
                rec("c", Split::Test, 0, vec![1.0, 0.0]),
            ],
        );
        let err = table.unwrap_err();
        assert!(err.to_string().contains("missing ID class"), "{err}");
    }

    #[test]
    fn filter_split_keeps_manifest_and_matches_predicate() {
        let table = FeatureTable::new(
            small_manifest(),
            vec![
                rec("a", Split::Val, 0, vec![0.0, 0.0]),
                rec("b", Split::Val, 1, vec![0.0, 1.0]),
                rec("c", Split::Test, OOD_LABEL, vec![1.0, 0.0]),
                rec("d", Split::Train, 0, vec![1.0, 1.0]),
                rec("e", Split::Train, 1, vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        let val = filter_split(&table, Split::Val, None);
        assert_eq!(val.records.len(), 2);
        assert_eq!(val.manifest, table.manifest);
        let train = filter_split(&table, Split::Train, None);
        assert!(train.records.iter().all(|r| !r.is_ood));
        let ood = filter_split(&table, Split::Test, Some(OodFilter::OodOnly));
        assert!(ood.records.iter().all(|r| r.class_label == OOD_LABEL));
        assert_eq!(ood.records.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_table() -> impl Strategy<Value = FeatureTable> {
            // Tables with every class present in every populated ID split,
            // so all invariants hold by construction.
            (1usize..4, 1usize..4, 0usize..3, any::<bool>()).prop_flat_map(
                |(n, d, m, with_logits)| {
                    let val = -100.0f64..100.0;
                    let feat = proptest::collection::vec(val.clone(), d);
                    let logit = proptest::collection::vec(val.clone(), n);
                    let proj = proptest::collection::vec(val, m.max(1));
                    let per_record = (feat, logit, proj);
                    proptest::collection::vec(per_record, n * 2 + 1).prop_map(
                        move |blocks| {
                            let manifest = Manifest {
                                n,
                                d,
                                m,
                                class_names: (0..n).map(|i| format!("class_{i}")).collect(),
                                data_file: String::new(),
                            };
                            let mut records = Vec::new();
                            for (i, (features, logits, projected)) in
                                blocks.into_iter().enumerate()
                            {
                                let (split, label) = if i < n {
                                    (Split::Val, i as i64)
                                } else if i < 2 * n {
                                    (Split::Test, (i - n) as i64)
                                } else {
                                    (Split::Test, OOD_LABEL)
                                };
                                records.push(FeatureRecord {
                                    id: format!("r{i}"),
                                    split,
                                    class_label: label,
                                    is_ood: label == OOD_LABEL,
                                    features,
                                    logits: with_logits.then_some(logits),
                                    projected: (m > 0).then_some(projected),
                                });
                            }
                            FeatureTable { manifest, records }
                        },
                    )
                },
            )
        }

        proptest! {
            #[test]
            fn round_trip_identity(table in arb_table()) {
                prop_assert!(table.validate().is_ok());
                let dir = tempfile::tempdir().unwrap();
                let base = dir.path().join("t");
                save_feature_table(&table, &base).unwrap();
                let reloaded = load_feature_table(&base).unwrap();
                prop_assert_eq!(reloaded.records, table.records);
            }

            #[test]
            fn single_field_mutations_rejected(table in arb_table(), choice in 0usize..5) {
                let mut t = table.clone();
                let k = t.records.len();
                let mutated = match choice {
                    0 => { t.records[0].is_ood = !t.records[0].is_ood; true }
                    1 => { t.records[0].class_label = t.manifest.n as i64 + 2; true }
                    2 => { t.records[0].features[0] = f64::INFINITY; true }
                    3 => { t.records[k - 1].id = t.records[0].id.clone(); true }
                    4 => {
                        // move the OOD record into train
                        t.records[k - 1].split = Split::Train;
                        t.records[k - 1].is_ood
                    }
                    _ => unreachable!(),
                };
                if mutated {
                    prop_assert!(t.validate().is_err());
                }
            }
        }
    }
}
