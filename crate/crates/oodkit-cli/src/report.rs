//! Markdown and CSV rendering of metric summaries: methods as rows, the
//! four OOD metrics as columns, top-3 entries per column bolded (ties all
//! bolded), plus a per-class accuracy table.

use oodkit::metrics::MetricsSummary;
use oodkit::scorers::Method;
use oodkit::{Error, Result};

pub struct Rendered {
    pub markdown: String,
    pub csv: String,
}

/// Rounds the value's shortest decimal representation half-even at three
/// places (`0.7345` rounds to `0.734`, `0.7346` to `0.735`). Rounding the
/// decimal string rather than the binary value keeps exact decimal halves
/// behaving like the printed number suggests.
fn round3_decimal(v: f64) -> String {
    let s = format!("{v}");
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.as_str()),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (body.to_string(), String::new()),
    };
    if frac_part.len() <= 3 {
        return format!("{sign}{int_part}.{frac_part:0<3}");
    }
    let kept = &frac_part[..3];
    let rest = &frac_part[3..];
    let first = rest.as_bytes()[0];
    let tail_nonzero = rest[1..].bytes().any(|b| b != b'0');
    let last_kept_odd = (kept.as_bytes()[2] - b'0') % 2 == 1;
    let round_up = match first.cmp(&b'5') {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => tail_nonzero || last_kept_odd,
    };
    let mut units: u64 = int_part.parse::<u64>().expect("digits") * 1000
        + kept.parse::<u64>().expect("digits");
    if round_up {
        units += 1;
    }
    format!("{sign}{}.{:03}", units / 1000, units % 1000)
}

/// Three decimals without the leading zero, the way the tables print.
fn fmt3(v: f64) -> String {
    let s = round3_decimal(v);
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// Value after printing; ranking happens on what the reader sees so
/// printed ties bold together.
fn rounded(v: f64) -> f64 {
    round3_decimal(v).parse().expect("formatted float")
}

/// Cutoff such that at most three distinct printed values rank above it.
fn top3_cutoff(values: &[f64], higher_better: bool) -> f64 {
    let mut sorted: Vec<f64> = values.iter().copied().map(rounded).collect();
    if higher_better {
        sorted.sort_by(|a, b| b.total_cmp(a));
    } else {
        sorted.sort_by(f64::total_cmp);
    }
    sorted[sorted.len().min(3) - 1]
}

fn bold_if(text: String, bold: bool) -> String {
    if bold {
        format!("**{text}**")
    } else {
        text
    }
}

/// Orders rows by the method registry and renders both outputs.
pub fn render(summaries: &[MetricsSummary], class_names: Option<&[String]>) -> Result<Rendered> {
    if summaries.is_empty() {
        return Err(Error::Validation("no summaries to report".into()));
    }
    let mut rows: Vec<(usize, &MetricsSummary)> = summaries
        .iter()
        .map(|s| Ok((Method::parse(&s.method)?.registry_index(), s)))
        .collect::<Result<_>>()?;
    rows.sort_by_key(|(idx, _)| *idx);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Validation(format!(
                "duplicate summaries for method '{}'",
                pair[0].1.method
            )));
        }
    }
    let ordered: Vec<&MetricsSummary> = rows.into_iter().map(|(_, s)| s).collect();

    // (column name, extractor, higher is better)
    type Extract = fn(&MetricsSummary) -> f64;
    let metric_columns: [(&str, Extract, bool); 4] = [
        ("AUROC &uarr;", |s| s.auroc, true),
        ("AUPR-IN &uarr;", |s| s.aupr_in, true),
        ("AUPR-OUT &uarr;", |s| s.aupr_out, true),
        ("AUTC &darr;", |s| s.autc, false),
    ];

    let mut md = String::new();
    md.push_str("# OOD metrics\n\n");
    md.push_str("| Method |");
    for (name, _, _) in &metric_columns {
        md.push_str(&format!(" {name} |"));
    }
    md.push('\n');
    md.push_str("|---|");
    md.push_str(&"---:|".repeat(metric_columns.len()));
    md.push('\n');
    for summary in &ordered {
        md.push_str(&format!("| {} |", summary.method));
        for (_, extract, higher) in &metric_columns {
            let column: Vec<f64> = ordered.iter().map(|s| extract(s)).collect();
            let cutoff = top3_cutoff(&column, *higher);
            let value = rounded(extract(summary));
            let bold = if *higher {
                value >= cutoff
            } else {
                value <= cutoff
            };
            md.push_str(&format!(" {} |", bold_if(fmt3(value), bold)));
        }
        md.push('\n');
    }

    // per-class accuracy table (Youden-thresholded)
    let n_classes = ordered[0].per_class_accuracy.len();
    if ordered.iter().any(|s| s.per_class_accuracy.len() != n_classes) {
        return Err(Error::Validation(
            "summaries disagree on the number of classes".into(),
        ));
    }
    let names: Vec<String> = match class_names {
        Some(names) if names.len() == n_classes => names.to_vec(),
        Some(names) => {
            return Err(Error::Validation(format!(
                "table has {} class names but summaries have {} classes",
                names.len(),
                n_classes
            )))
        }
        None => (0..n_classes).map(|i| format!("class_{i}")).collect(),
    };
    md.push_str("\n# Per-class accuracy at the Youden threshold\n\n");
    md.push_str("| Method |");
    for name in &names {
        md.push_str(&format!(" {name} |"));
    }
    md.push_str(" OOD |\n|---|");
    md.push_str(&"---:|".repeat(n_classes + 1));
    md.push('\n');
    let class_column = |c: usize| -> Vec<f64> {
        ordered
            .iter()
            .filter_map(|s| s.per_class_accuracy[c])
            .collect()
    };
    let ood_column: Vec<f64> = ordered.iter().map(|s| s.ood_accuracy).collect();
    for summary in &ordered {
        md.push_str(&format!("| {} |", summary.method));
        for c in 0..n_classes {
            match summary.per_class_accuracy[c] {
                Some(v) => {
                    let cutoff = top3_cutoff(&class_column(c), true);
                    let value = rounded(v);
                    md.push_str(&format!(" {} |", bold_if(fmt3(value), value >= cutoff)));
                }
                None => md.push_str(" - |"),
            }
        }
        let cutoff = top3_cutoff(&ood_column, true);
        let value = rounded(summary.ood_accuracy);
        md.push_str(&format!(" {} |\n", bold_if(fmt3(value), value >= cutoff)));
    }

    // full-precision CSV counterpart
    let mut csv = String::from("method,auroc,aupr_in,aupr_out,autc,youden_threshold,youden_j");
    for name in &names {
        csv.push_str(&format!(",acc_{name}"));
    }
    csv.push_str(",acc_ood\n");
    for summary in &ordered {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}",
            summary.method,
            summary.auroc,
            summary.aupr_in,
            summary.aupr_out,
            summary.autc,
            summary.youden_threshold,
            summary.youden_j
        ));
        for acc in &summary.per_class_accuracy {
            match acc {
                Some(v) => csv.push_str(&format!(",{v}")),
                None => csv.push(','),
            }
        }
        csv.push_str(&format!(",{}\n", summary.ood_accuracy));
    }

    Ok(Rendered { markdown: md, csv })
}
