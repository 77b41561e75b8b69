//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Every oracle here is written independently of the library path
//! it checks.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oodkit::featstore::Split;
use oodkit::heads::{
    cross_entropy, forward_classifier, forward_projection, ntxent, train_heads, TrainConfig,
};
use oodkit::metrics::{aupr, auroc, autc, roc_curve, youden_threshold, PositiveClass};
use oodkit::prototypes::{
    build_knn_index, fit_class_means, knn_majority, kth_neighbor_distance, nearest_class,
    KnnIndex, Normalization, PrototypeSet, Space,
};
use oodkit::scorers::{
    agreement_score, energy_score, entropy_score, max_logit_score, max_softmax_score,
    score_dataset, softmax, AgreementVariant, AgreementVectors, Artifacts, Method, MethodParams,
    ScoreRecord, ScoreReport,
};
use oodkit::synthgen::{gen_gaussian_benchmark, SplitCounts, SynthConfig};

fn criterion<F>(number: usize, name: &str, body: F)
where
    F: FnOnce() + UnwindSafe,
{
    let result = catch_unwind(body);
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {number} ({name}): {verdict}");
    if let Err(payload) = result {
        resume_unwind(payload);
    }
}

fn report_from(id_scores: &[f64], ood_scores: &[f64]) -> ScoreReport {
    let mut records = Vec::new();
    for (i, &s) in id_scores.iter().enumerate() {
        records.push(ScoreRecord {
            id: format!("id{i}"),
            score: s,
            pred_class: 0,
            is_ood_true: false,
        });
    }
    for (i, &s) in ood_scores.iter().enumerate() {
        records.push(ScoreRecord {
            id: format!("ood{i}"),
            score: s,
            pred_class: 0,
            is_ood_true: true,
        });
    }
    ScoreReport {
        method: "acceptance".into(),
        params: BTreeMap::new(),
        records,
    }
}

/// Random reports mixing continuous scores, coarse grids (ties) and
/// binary flags, never single-class, at most 500 samples.
fn random_report(rng: &mut ChaCha8Rng) -> ScoreReport {
    let n_id = rng.random_range(1..=250);
    let n_ood = rng.random_range(1..=250);
    let family = rng.random_range(0..3);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        match family {
            0 => rng.random_range(-5.0..5.0),
            1 => rng.random_range(-10..10) as f64 / 4.0,
            _ => rng.random_range(0..2) as f64,
        }
    };
    let id: Vec<f64> = (0..n_id).map(|_| draw(rng)).collect();
    let ood: Vec<f64> = (0..n_ood).map(|_| draw(rng)).collect();
    report_from(&id, &ood)
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    criterion(1, "metric oracle equivalence", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for round in 0..200 {
            let report = random_report(&mut rng);
            let id: Vec<f64> = report
                .records
                .iter()
                .filter(|r| !r.is_ood_true)
                .map(|r| r.score)
                .collect();
            let ood: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.is_ood_true)
                .map(|r| r.score)
                .collect();

            // AUROC vs exhaustive Mann-Whitney pair count
            let mut pairs = 0.0;
            for &a in &id {
                for &b in &ood {
                    if a > b {
                        pairs += 1.0;
                    } else if a == b {
                        pairs += 0.5;
                    }
                }
            }
            let mw = pairs / (id.len() * ood.len()) as f64;
            let a = auroc(&roc_curve(&report).unwrap());
            assert!((a - mw).abs() < 1e-9, "round {round}: auroc {a} vs MW {mw}");

            // AUPR both ways vs a from-scratch threshold sweep
            for positive in [PositiveClass::Id, PositiveClass::Ood] {
                let scores: Vec<(f64, bool)> = report
                    .records
                    .iter()
                    .map(|r| match positive {
                        PositiveClass::Id => (r.score, !r.is_ood_true),
                        PositiveClass::Ood => (-r.score, r.is_ood_true),
                    })
                    .collect();
                let mut values: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
                values.sort_by(|x, y| y.total_cmp(x));
                values.dedup();
                let total_pos = scores.iter().filter(|(_, p)| *p).count() as f64;
                let mut expected = 0.0;
                let mut prev_recall = 0.0;
                for &tau in &values {
                    let taken: Vec<bool> = scores
                        .iter()
                        .filter(|(s, _)| *s >= tau)
                        .map(|(_, p)| *p)
                        .collect();
                    let tp = taken.iter().filter(|p| **p).count() as f64;
                    let recall = tp / total_pos;
                    expected += (recall - prev_recall) * (tp / taken.len() as f64);
                    prev_recall = recall;
                }
                let got = aupr(&report, positive).unwrap();
                assert!(
                    (got - expected).abs() < 1e-9,
                    "round {round}: aupr {got} vs sweep {expected}"
                );
            }

            // Youden's J vs a brute-force grid of midpoints and extremes
            let mut values: Vec<f64> = id.iter().chain(&ood).copied().collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let mut grid = vec![values[0] - 1.0, values[values.len() - 1] + 1.0];
            grid.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
            grid.extend(values.iter().copied());
            let mut best = f64::NEG_INFINITY;
            for &tau in &grid {
                let tpr = id.iter().filter(|&&s| s >= tau).count() as f64 / id.len() as f64;
                let fpr = ood.iter().filter(|&&s| s >= tau).count() as f64 / ood.len() as f64;
                best = best.max(tpr - fpr);
            }
            let j = youden_threshold(&roc_curve(&report).unwrap()).j;
            assert!((j - best).abs() < 1e-9, "round {round}: J {j} vs grid {best}");

            // AUTC vs a 1e5-point Riemann sum over normalized thresholds
            let lo = id.iter().chain(&ood).copied().fold(f64::INFINITY, f64::min);
            let hi = id
                .iter()
                .chain(&ood)
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let riemann = if lo == hi {
                0.5
            } else {
                let norm = |s: f64| (s - lo) / (hi - lo);
                let mut id_n: Vec<f64> = id.iter().map(|&s| norm(s)).collect();
                let mut ood_n: Vec<f64> = ood.iter().map(|&s| norm(s)).collect();
                id_n.sort_by(f64::total_cmp);
                ood_n.sort_by(f64::total_cmp);
                let points = 100_000;
                let mut sum = 0.0;
                for i in 0..points {
                    let tau = (i as f64 + 0.5) / points as f64;
                    let fpr = (ood_n.len() - ood_n.partition_point(|&s| s < tau)) as f64
                        / ood_n.len() as f64;
                    let fnr = id_n.partition_point(|&s| s < tau) as f64 / id_n.len() as f64;
                    sum += fpr + fnr;
                }
                0.5 * sum / points as f64
            };
            let exact = autc(&report).unwrap();
            assert!(
                (exact - riemann).abs() < 1e-4,
                "round {round}: autc {exact} vs riemann {riemann}"
            );
        }
        assert!(
            started.elapsed() < Duration::from_secs(30),
            "criterion 1 took {:?}",
            started.elapsed()
        );
    });
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs());
    if denom > 1e-8 {
        (analytic - fd).abs() / denom
    } else {
        (analytic - fd).abs()
    }
}

#[test]
fn criterion_2_gradient_checks() {
    criterion(2, "gradient checks", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(202);

        let mut worst_ce = 0.0f64;
        for _ in 0..100 {
            let n = rng.random_range(2..8);
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let label = rng.random_range(0..n);
            let out = cross_entropy(&logits, label).unwrap();
            for i in 0..n {
                let h = 1e-5 * logits[i].abs().max(1.0);
                let mut up = logits.clone();
                up[i] += h;
                let mut down = logits.clone();
                down[i] -= h;
                let fd = (cross_entropy(&up, label).unwrap().loss
                    - cross_entropy(&down, label).unwrap().loss)
                    / (2.0 * h);
                worst_ce = worst_ce.max(rel_err(out.grad_logits[i], fd));
            }
        }
        assert!(worst_ce < 1e-6, "cross-entropy worst error {worst_ce}");

        let mut worst_ntx = 0.0f64;
        let mut probes = 0;
        while probes < 100 {
            let pairs = rng.random_range(1..5usize);
            let dim = rng.random_range(2..6usize);
            let tau = [0.2, 0.5, 1.0][rng.random_range(0..3)];
            let data: Vec<f64> = (0..2 * pairs * dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let batch = ndarray::Array2::from_shape_vec((2 * pairs, dim), data).unwrap();
            if batch
                .rows()
                .into_iter()
                .any(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3)
            {
                continue;
            }
            probes += 1;
            let out = ntxent(&batch, tau).unwrap();
            for i in 0..2 * pairs {
                for j in 0..dim {
                    let h = 1e-5 * batch[(i, j)].abs().max(1.0);
                    let mut up = batch.clone();
                    up[(i, j)] += h;
                    let mut down = batch.clone();
                    down[(i, j)] -= h;
                    let fd = (ntxent(&up, tau).unwrap().loss
                        - ntxent(&down, tau).unwrap().loss)
                        / (2.0 * h);
                    worst_ntx = worst_ntx.max(rel_err(out.grad[(i, j)], fd));
                }
            }
        }
        assert!(worst_ntx < 1e-4, "ntxent worst error {worst_ntx}");

        assert!(
            started.elapsed() < Duration::from_secs(10),
            "criterion 2 took {:?}",
            started.elapsed()
        );
    });
}

#[test]
fn criterion_3_ncm_knn_exactness() {
    criterion(3, "NCM/KNN exact against exhaustive scans", || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let euclid = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut queries_done = 0;
        while queries_done < 500 {
            let count = rng.random_range(5..=500);
            let dim = rng.random_range(1..=8);
            let n_classes = rng.random_range(1..=5usize);
            let points: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..count).map(|i| i % n_classes).collect();
            let index = KnnIndex {
                points: points.clone(),
                labels: labels.clone(),
                n_classes,
                space: Space::RawFeatures,
                normalization: Normalization::None,
            };
            let means: Vec<Vec<f64>> = (0..n_classes)
                .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let protos = PrototypeSet {
                means: means.clone(),
                fitted_on: Split::Val,
                space: Space::RawFeatures,
            };
            for _ in 0..10 {
                queries_done += 1;
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let k = rng.random_range(1..=count);

                // exhaustive scan oracle with the same tie conventions
                let mut order: Vec<usize> = (0..count).collect();
                order.sort_by(|&a, &b| {
                    euclid(&points[a], &q)
                        .total_cmp(&euclid(&points[b], &q))
                        .then(a.cmp(&b))
                });
                let mut counts = vec![0usize; n_classes];
                for &i in &order[..k] {
                    counts[labels[i]] += 1;
                }
                let maj = knn_majority(&index, &q, k).unwrap();
                assert_eq!(maj.counts, counts);
                let mut expect_class = 0;
                for c in 1..n_classes {
                    if counts[c] > counts[expect_class] {
                        expect_class = c;
                    }
                }
                assert_eq!(maj.class, expect_class);
                assert_eq!(
                    kth_neighbor_distance(&index, &q, k).unwrap(),
                    euclid(&points[order[k - 1]], &q)
                );

                let near = nearest_class(&protos, &q).unwrap();
                let mut best = 0;
                for c in 1..n_classes {
                    if euclid(&means[c], &q) < euclid(&means[best], &q) {
                        best = c;
                    }
                }
                assert_eq!(near.class, best);
            }
        }
    });
}

#[test]
fn criterion_4_agreement_score_hand_values() {
    criterion(4, "agreement score hand values", || {
        let n = 5usize;
        let eps = 1e-12;
        // independent recomputation of the appendix formula, written from
        // scratch: H over the elementwise product plus eps, JS against the
        // midpoint, (1 - H) / ln(n) * (1 - JS)
        let by_hand = |v1: &[f64], v2: &[f64]| -> f64 {
            let h: f64 = v1
                .iter()
                .zip(v2)
                .map(|(a, b)| {
                    let p = a * b + eps;
                    -p * p.ln()
                })
                .sum();
            let kl = |p: &[f64], q: &[f64]| -> f64 {
                p.iter()
                    .zip(q)
                    .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
                    .sum()
            };
            let mid: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| (a + b) / 2.0).collect();
            let js = 0.5 * (kl(v1, &mid) + kl(v2, &mid));
            (1.0 - h) / (n as f64).ln() * (1.0 - js)
        };

        let uniform = vec![0.2; 5];
        let mut hot_a = vec![0.0; 5];
        hot_a[0] = 1.0;
        let mut hot_b = vec![0.0; 5];
        hot_b[1] = 1.0;

        let cases = [
            (uniform.clone(), uniform.clone(), 0.2213),
            (hot_a.clone(), hot_a.clone(), 0.6214),
            (hot_a.clone(), hot_b.clone(), 0.1907),
        ];
        for (v1, v2, frozen) in cases {
            let manual = by_hand(&v1, &v2);
            assert!(
                (manual - frozen).abs() < 1e-3,
                "hand recomputation {manual} differs from frozen {frozen}"
            );
            let lib = agreement_score(
                &AgreementVectors::new(v1, v2).unwrap(),
                eps,
                n,
                AgreementVariant::Literal,
            )
            .unwrap();
            assert!(
                (lib - manual).abs() < 1e-12,
                "library {lib} vs hand {manual}"
            );
            assert!((lib - frozen).abs() < 1e-3, "library {lib} vs frozen {frozen}");
        }
    });
}

#[test]
fn criterion_5_separation_ordering() {
    criterion(5, "separation ordering at class_sep = 4 sigma", || {
        let started = Instant::now();
        let seeds = [11u64, 12, 13, 14, 15];
        let mut mean_auroc: BTreeMap<&str, f64> = BTreeMap::new();
        let mut mean_autc: BTreeMap<&str, f64> = BTreeMap::new();
        for &seed in &seeds {
            let sigma = 1.0;
            let table = gen_gaussian_benchmark(&SynthConfig {
                n_id_classes: 5,
                n_ood_clusters: 6,
                dim: 6,
                per_class: SplitCounts {
                    train: 150,
                    val: 60,
                    test: 200,
                },
                class_sep: 4.0 * sigma,
                noise_sigma: sigma,
                seed,
            })
            .unwrap();
            assert!(table.records_in(Split::Test).count() >= 2000);
            let head = train_heads(
                &table,
                &TrainConfig {
                    max_epochs: 15,
                    batch_size: 64,
                    hidden: 32,
                    proj_dim: 8,
                    warmup_epochs: 3,
                    seed,
                    ..TrainConfig::default()
                },
            )
            .unwrap()
            .params;
            let mut staged = table;
            staged.manifest.m = 8;
            for rec in &mut staged.records {
                rec.logits = Some(forward_classifier(&head, &rec.features).unwrap());
                rec.projected = Some(forward_projection(&head, &rec.features).unwrap());
            }
            let protos = fit_class_means(&staged, Split::Val, Space::RawFeatures).unwrap();
            let proj_index =
                build_knn_index(&staged, Split::Val, Space::Projected, Normalization::UnitL2)
                    .unwrap();
            let raw_index = build_knn_index(
                &staged,
                Split::Val,
                Space::RawFeatures,
                Normalization::UnitL2,
            )
            .unwrap();
            for method in Method::ALL {
                let index = if method == Method::Knn {
                    &raw_index
                } else {
                    &proj_index
                };
                let report = score_dataset(
                    method,
                    &MethodParams::default(),
                    &staged,
                    Split::Test,
                    Artifacts {
                        protos: Some(&protos),
                        index: Some(index),
                        head: None,
                    },
                )
                .unwrap();
                let a = auroc(&roc_curve(&report).unwrap()) / seeds.len() as f64;
                let t = autc(&report).unwrap() / seeds.len() as f64;
                *mean_auroc.entry(method.name()).or_insert(0.0) += a;
                *mean_autc.entry(method.name()).or_insert(0.0) += t;
            }
        }
        let ncm_score_autc = mean_autc["NCMAgreementScore"];
        let max_softmax_autc = mean_autc["MaxSoftmax"];
        assert!(
            ncm_score_autc < max_softmax_autc,
            "NCMAgreementScore mean AUTC {ncm_score_autc} not below MaxSoftmax {max_softmax_autc}"
        );
        for (method, a) in &mean_auroc {
            assert!(*a > 0.5, "{method} mean AUROC {a} not above chance");
        }
        assert!(
            started.elapsed() < Duration::from_secs(120),
            "criterion 5 took {:?}",
            started.elapsed()
        );
    });
}

fn oodkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oodkit"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn oodkit");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline(dir: &Path) {
    let p = |name: &str| dir.join(name);
    run_ok(oodkit().args([
        "gen",
        "--seed",
        "21",
        "--classes",
        "3",
        "--ood-clusters",
        "2",
        "--dim",
        "5",
        "--per-class",
        "30,15,15",
        "--sep",
        "6",
        "--sigma",
        "1",
        "--out",
    ])
    .arg(p("bench")));
    run_ok(oodkit()
        .args([
            "train-head",
            "--epochs",
            "5",
            "--batch",
            "16",
            "--hidden",
            "8",
            "--proj-dim",
            "3",
            "--seed",
            "4",
            "--in",
        ])
        .arg(p("bench.manifest.json"))
        .arg("--out-params")
        .arg(p("head"))
        .arg("--out-table")
        .arg(p("staged")));
    run_ok(oodkit()
        .args(["fit", "--kind", "means", "--split", "val", "--space", "raw", "--in"])
        .arg(p("staged.manifest.json"))
        .arg("--out")
        .arg(p("protos")));
    run_ok(oodkit()
        .args([
            "fit",
            "--kind",
            "knn-index",
            "--split",
            "val",
            "--space",
            "projected",
            "--normalization",
            "unit-l2",
            "--in",
        ])
        .arg(p("staged.manifest.json"))
        .arg("--out")
        .arg(p("index")));
    for (method, extra) in [
        ("TempScaling", None),
        ("NCMAgreementScore", Some(("--protos", "protos"))),
        ("ContrastiveAgreement", Some(("--index", "index"))),
    ] {
        let mut cmd = oodkit();
        cmd.args(["score", "--method", method, "--params", "k=15", "--in"])
            .arg(p("staged.manifest.json"));
        if let Some((flag, artifact)) = extra {
            cmd.arg(flag).arg(p(artifact));
        }
        cmd.arg("--out").arg(p(&format!("scores_{method}.csv")));
        run_ok(&mut cmd);
        run_ok(oodkit()
            .arg("eval")
            .arg("--scores")
            .arg(p(&format!("scores_{method}.csv")))
            .arg("--table")
            .arg(p("staged.manifest.json"))
            .arg("--out")
            .arg(p(&format!("summary_{method}.json"))));
    }
    let mut cmd = oodkit();
    cmd.arg("report").arg("--summaries");
    for method in ["TempScaling", "NCMAgreementScore", "ContrastiveAgreement"] {
        cmd.arg(p(&format!("summary_{method}.json")));
    }
    cmd.arg("--table")
        .arg(p("staged.manifest.json"))
        .arg("--out-md")
        .arg(p("report.md"))
        .arg("--out-csv")
        .arg(p("report.csv"));
    run_ok(&mut cmd);
}

#[test]
fn criterion_6_end_to_end_determinism() {
    criterion(6, "end-to-end pipeline determinism", || {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_pipeline(dir_a.path());
        run_pipeline(dir_b.path());
        let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert!(names.len() >= 14, "unexpected file set: {names:?}");
        for name in names {
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name))
                .unwrap_or_else(|e| panic!("second run missing {name}: {e}"));
            assert_eq!(a, b, "{name} differs between runs");
        }
    });
}

#[test]
fn criterion_7_invariance_suite() {
    criterion(7, "invariance suite", || {
        let mut rng = ChaCha8Rng::seed_from_u64(707);

        // AUROC under strictly increasing transforms: bit-exact
        let id: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ood: Vec<f64> = (0..70).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base = auroc(&roc_curve(&report_from(&id, &ood)).unwrap());
        let map = |v: &[f64], f: fn(f64) -> f64| -> Vec<f64> { v.iter().map(|&x| f(x)).collect() };
        assert_eq!(
            base,
            auroc(
                &roc_curve(&report_from(
                    &map(&id, |x| x.powi(3)),
                    &map(&ood, |x| x.powi(3))
                ))
                .unwrap()
            )
        );
        assert_eq!(
            base,
            auroc(
                &roc_curve(&report_from(
                    &map(&id, |x| 2.0 * x + 7.0),
                    &map(&ood, |x| 2.0 * x + 7.0)
                ))
                .unwrap()
            )
        );

        // shift invariance / covariance, exact: dyadic logits keep the
        // f64 additions below exact
        for _ in 0..200 {
            let logits: Vec<f64> = (0..5)
                .map(|_| rng.random_range(-8192..8192) as f64 / 1024.0)
                .collect();
            let shifted: Vec<f64> = logits.iter().map(|l| l + 7.0).collect();
            assert_eq!(
                max_softmax_score(&logits).unwrap(),
                max_softmax_score(&shifted).unwrap()
            );
            assert_eq!(
                softmax(&logits, 1.0).unwrap(),
                softmax(&shifted, 1.0).unwrap()
            );
            assert_eq!(
                entropy_score(&logits).unwrap(),
                entropy_score(&shifted).unwrap()
            );

            // covariant scorers, built so the pre- and post-shift maxima
            // are exactly 0 and c
            let mut zero_max: Vec<f64> = (0..5)
                .map(|_| rng.random_range(-8192..0) as f64 / 1024.0)
                .collect();
            zero_max[0] = 0.0;
            let c = 7.0;
            let shifted: Vec<f64> = zero_max.iter().map(|l| l + c).collect();
            assert_eq!(
                energy_score(&shifted, 1.0).unwrap(),
                energy_score(&zero_max, 1.0).unwrap() + c
            );
            assert_eq!(
                max_logit_score(&shifted).unwrap(),
                max_logit_score(&zero_max).unwrap() + c
            );
        }

        // NTXent invariance to rescaling any single row (1e-10)
        let data: Vec<f64> = (0..8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = ndarray::Array2::from_shape_vec((8, 3), data).unwrap();
        let base_loss = ntxent(&batch, 0.5).unwrap().loss;
        for i in 0..8 {
            let mut scaled = batch.clone();
            for j in 0..3 {
                scaled[(i, j)] *= 3.0;
            }
            let loss = ntxent(&scaled, 0.5).unwrap().loss;
            assert!(
                (loss - base_loss).abs() < 1e-10,
                "row {i}: {loss} vs {base_loss}"
            );
        }

        // translation equivariance of prototype decisions
        let means: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let shift = [11.25, -3.5, 0.125];
        let shifted_means: Vec<Vec<f64>> = means
            .iter()
            .map(|m| m.iter().zip(shift).map(|(x, s)| x + s).collect())
            .collect();
        let protos = PrototypeSet {
            means,
            fitted_on: Split::Val,
            space: Space::RawFeatures,
        };
        let protos_shifted = PrototypeSet {
            means: shifted_means,
            fitted_on: Split::Val,
            space: Space::RawFeatures,
        };
        for _ in 0..200 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q_shifted: Vec<f64> = q.iter().zip(shift).map(|(x, s)| x + s).collect();
            assert_eq!(
                nearest_class(&protos, &q).unwrap().class,
                nearest_class(&protos_shifted, &q_shifted).unwrap().class
            );
        }
    });
}

#[test]
fn criterion_8_trainer_sanity() {
    criterion(8, "trainer reaches 0.95 val accuracy in 30 epochs", || {
        let table = gen_gaussian_benchmark(&SynthConfig {
            n_id_classes: 5,
            n_ood_clusters: 2,
            dim: 4,
            per_class: SplitCounts {
                train: 40,
                val: 30,
                test: 20,
            },
            class_sep: 20.0,
            noise_sigma: 0.5,
            seed: 808,
        })
        .unwrap();
        let outcome = train_heads(
            &table,
            &TrainConfig {
                max_epochs: 30,
                batch_size: 32,
                hidden: 16,
                proj_dim: 4,
                warmup_epochs: 3,
                seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let acc = outcome.best_val_accuracy.expect("val split present");
        assert!(acc >= 0.95, "best val accuracy {acc}");
    });
}
