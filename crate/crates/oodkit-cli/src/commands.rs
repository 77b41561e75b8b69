//! Subcommand definitions and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use oodkit::featstore::{load_feature_table, save_feature_table, Split};
use oodkit::heads::{
    forward_classifier, forward_projection, load_head_params, save_head_params, train_heads,
    TrainConfig,
};
use oodkit::metrics::{summarize, MetricsSummary};
use oodkit::prototypes::{
    build_knn_index, fit_class_means, load_knn_index, load_prototypes, save_knn_index,
    save_prototypes, Normalization, Space,
};
use oodkit::scorers::{
    load_score_reports, save_score_reports, score_dataset, AgreementVariant, Artifacts, Method,
    MethodParams,
};
use oodkit::synthgen::{gen_gaussian_benchmark, SplitCounts, SynthConfig};
use oodkit::{Error, Result};

use crate::config::{pick, pick_required, ConfigDoc};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "oodkit",
    version,
    about = "OOD detection over precomputed feature embeddings",
    long_about = "Generates benchmarks, trains heads, fits prototypes/indexes, scores \
                  OOD methods and evaluates them. Typical flow:\n  \
                  gen -> train-head -> fit -> score -> eval -> report"
)]
pub struct Cli {
    /// JSON file whose keys mirror the active subcommand's flags
    /// (precedence: flags > config file > defaults).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Default seed for subcommands that draw randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print per-epoch curves and extra progress detail.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic Gaussian benchmark table.
    Gen(GenArgs),
    /// Train the classification and projection heads on the train split.
    TrainHead(TrainHeadArgs),
    /// Fit class-mean prototypes or an exact KNN index from one split.
    Fit(FitArgs),
    /// Score one method over a split of a feature table.
    Score(ScoreArgs),
    /// Compute the metric suite from a scores CSV.
    Eval(EvalArgs),
    /// Render Markdown + CSV tables from summary files.
    Report(ReportArgs),
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut config = ConfigDoc::load(cli.config.as_deref())?;
    let global_seed = cli.seed;
    match cli.command {
        Command::Gen(args) => gen(args, &mut config, global_seed),
        Command::TrainHead(args) => train_head(args, &mut config, global_seed, cli.verbose),
        Command::Fit(args) => fit(args, &mut config),
        Command::Score(args) => score(args, &mut config),
        Command::Eval(args) => eval(args, &mut config),
        Command::Report(args) => report_cmd(args, &mut config),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).ok_or_else(|| {
        Error::Argument(format!("bad split '{s}' (expected train, val or test)"))
    })
}

fn parse_space(s: &str) -> Result<Space> {
    match s {
        "raw" | "raw_features" => Ok(Space::RawFeatures),
        "projected" => Ok(Space::Projected),
        other => Err(Error::Argument(format!(
            "bad space '{other}' (expected raw or projected)"
        ))),
    }
}

fn parse_normalization(s: &str) -> Result<Normalization> {
    match s {
        "none" => Ok(Normalization::None),
        "unit-l2" | "unit_l2" => Ok(Normalization::UnitL2),
        other => Err(Error::Argument(format!(
            "bad normalization '{other}' (expected none or unit-l2)"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of ID classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Number of OOD clusters (0 for an ID-only table).
    #[arg(long)]
    ood_clusters: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Per-class sample counts as train,val,test.
    #[arg(long, value_name = "T,V,TE")]
    per_class: Option<String>,
    /// Distance between adjacent ID class means.
    #[arg(long)]
    sep: Option<f64>,
    /// Gaussian noise around each center.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output base path (writes <out>.manifest.json and <out>.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_per_class(s: &str) -> Result<SplitCounts> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Argument(format!(
            "--per-class expects train,val,test counts, got '{s}'"
        )));
    }
    let parse = |p: &str| -> Result<usize> {
        p.trim()
            .parse()
            .map_err(|_| Error::Argument(format!("bad per-class count '{p}'")))
    };
    Ok(SplitCounts {
        train: parse(parts[0])?,
        val: parse(parts[1])?,
        test: parse(parts[2])?,
    })
}

fn gen(args: GenArgs, config: &mut ConfigDoc, global_seed: Option<u64>) -> Result<()> {
    let defaults = SynthConfig::default();
    let per_class = match args.per_class.or(config.string("per-class")?) {
        Some(s) => parse_per_class(&s)?,
        None => defaults.per_class,
    };
    let synth = SynthConfig {
        n_id_classes: pick(args.classes, config.usize("classes")?, defaults.n_id_classes),
        n_ood_clusters: pick(
            args.ood_clusters,
            config.usize("ood-clusters")?,
            defaults.n_ood_clusters,
        ),
        dim: pick(args.dim, config.usize("dim")?, defaults.dim),
        per_class,
        class_sep: pick(args.sep, config.f64("sep")?, defaults.class_sep),
        noise_sigma: pick(args.sigma, config.f64("sigma")?, defaults.noise_sigma),
        seed: pick(args.seed, config.u64("seed")?, global_seed.unwrap_or(0)),
    };
    let out = pick_required(args.out, config.path("out")?, "out")?;
    config.ensure_consumed()?;
    let table = gen_gaussian_benchmark(&synth)?;
    save_feature_table(&table, &out)?;
    println!(
        "wrote {} records ({} classes, {} OOD clusters, dim {}) to {}",
        table.records.len(),
        synth.n_id_classes,
        synth.n_ood_clusters,
        synth.dim,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    /// Input table manifest (or base path).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// NTXent temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// NTXent mixing weight in [0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Hidden width of the shared trunk.
    #[arg(long)]
    hidden: Option<usize>,
    /// Projection-head output dimension.
    #[arg(long)]
    proj_dim: Option<usize>,
    /// Linear warmup epochs before the cosine decay.
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Gaussian sigma of the feature-space augmentation for positive pairs.
    #[arg(long)]
    aug_sigma: Option<f64>,
    /// Draw positives from same-class batch partners instead of two
    /// augmented copies of the same sample.
    #[arg(long)]
    label_aware: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output base path for the trained parameters.
    #[arg(long)]
    out_params: Option<PathBuf>,
    /// Optional output table with logits/projected columns replaced by the
    /// trained head's outputs.
    #[arg(long)]
    out_table: Option<PathBuf>,
}

fn train_head(
    args: TrainHeadArgs,
    config: &mut ConfigDoc,
    global_seed: Option<u64>,
    verbose: bool,
) -> Result<()> {
    let input = pick_required(args.input, config.path("in")?, "in")?;
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        learning_rate: pick(args.lr, config.f64("lr")?, defaults.learning_rate),
        weight_decay: pick(
            args.weight_decay,
            config.f64("weight-decay")?,
            defaults.weight_decay,
        ),
        warmup_epochs: pick(args.warmup, config.usize("warmup")?, defaults.warmup_epochs),
        max_epochs: pick(args.epochs, config.usize("epochs")?, defaults.max_epochs),
        batch_size: pick(args.batch, config.usize("batch")?, defaults.batch_size),
        tau: pick(args.tau, config.f64("tau")?, defaults.tau),
        ntxent_weight: pick(args.lambda, config.f64("lambda")?, defaults.ntxent_weight),
        noise_aug_sigma: pick(
            args.aug_sigma,
            config.f64("aug-sigma")?,
            defaults.noise_aug_sigma,
        ),
        label_aware: args.label_aware || config.bool("label-aware")?.unwrap_or(false),
        hidden: pick(args.hidden, config.usize("hidden")?, defaults.hidden),
        proj_dim: pick(args.proj_dim, config.usize("proj-dim")?, defaults.proj_dim),
        seed: pick(args.seed, config.u64("seed")?, global_seed.unwrap_or(0)),
    };
    let out_params = pick_required(args.out_params, config.path("out-params")?, "out-params")?;
    let out_table = args.out_table.or(config.path("out-table")?);
    config.ensure_consumed()?;

    let table = load_feature_table(&input)?;
    let outcome = train_heads(&table, &train_config)?;
    save_head_params(&outcome.params, &out_params)?;
    match (outcome.best_val_accuracy, outcome.best_epoch) {
        (Some(acc), Some(epoch)) => println!(
            "trained {} epochs; best val accuracy {acc:.4} at epoch {epoch}",
            train_config.max_epochs
        ),
        _ => println!(
            "trained {} epochs (no val split to monitor)",
            train_config.max_epochs
        ),
    }
    if verbose {
        println!("train loss per epoch: {:?}", outcome.train_loss);
        println!("val accuracy per epoch: {:?}", outcome.val_accuracy);
    }

    if let Some(out_table) = out_table {
        let mut augmented = table;
        augmented.manifest.m = train_config.proj_dim;
        for rec in &mut augmented.records {
            rec.logits = Some(forward_classifier(&outcome.params, &rec.features)?);
            rec.projected = Some(forward_projection(&outcome.params, &rec.features)?);
        }
        save_feature_table(&augmented, &out_table)?;
        println!(
            "wrote table with head logits/projections to {}",
            out_table.display()
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// What to fit: class-mean prototypes or an exact KNN index.
    #[arg(long, value_parser = ["means", "knn-index"])]
    kind: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Split supplying the reference ID records.
    #[arg(long)]
    split: Option<String>,
    /// Vector space: raw or projected.
    #[arg(long)]
    space: Option<String>,
    /// Vector normalization for knn-index: none or unit-l2.
    #[arg(long)]
    normalization: Option<String>,
    /// Output base path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fit(args: FitArgs, config: &mut ConfigDoc) -> Result<()> {
    let kind = pick(args.kind, config.string("kind")?, "means".to_string());
    let input = pick_required(args.input, config.path("in")?, "in")?;
    let split = parse_split(&pick(args.split, config.string("split")?, "val".into()))?;
    let space = parse_space(&pick(args.space, config.string("space")?, "raw".into()))?;
    let normalization = parse_normalization(&pick(
        args.normalization,
        config.string("normalization")?,
        "unit-l2".into(),
    ))?;
    let out = pick_required(args.out, config.path("out")?, "out")?;
    config.ensure_consumed()?;

    let table = load_feature_table(&input)?;
    match kind.as_str() {
        "means" => {
            let protos = fit_class_means(&table, split, space)?;
            save_prototypes(&protos, &out)?;
            println!(
                "fitted {} class means ({} space, {} split) to {}",
                protos.n_classes(),
                space,
                split,
                out.display()
            );
        }
        "knn-index" => {
            let index = build_knn_index(&table, split, space, normalization)?;
            save_knn_index(&index, &out)?;
            println!(
                "built index of {} points ({} space, {} normalization) to {}",
                index.len(),
                space,
                index.normalization,
                out.display()
            );
        }
        other => {
            return Err(Error::Argument(format!(
                "bad fit kind '{other}' (expected means or knn-index)"
            )))
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Split to score (default test).
    #[arg(long)]
    split: Option<String>,
    /// Method name from the registry.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated overrides: k=50,T=1,eps=1e-12,variant=literal.
    #[arg(long)]
    params: Option<String>,
    /// Prototype file for the NCM methods.
    #[arg(long)]
    protos: Option<PathBuf>,
    /// KNN index file for the KNN / contrastive methods.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Head parameters; when given, logits and projections come from the
    /// head instead of the stored columns.
    #[arg(long)]
    head_params: Option<PathBuf>,
    /// Output scores CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method_params(s: &str) -> Result<MethodParams> {
    let mut params = MethodParams::default();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::Argument(format!("bad --params entry '{part}' (expected key=value)"))
        })?;
        let bad =
            |what: &str| Error::Argument(format!("bad --params value for {what}: '{value}'"));
        match key.trim() {
            "k" => params.k = value.trim().parse().map_err(|_| bad("k"))?,
            "T" | "t" => params.temperature = value.trim().parse().map_err(|_| bad("T"))?,
            "eps" => params.eps = value.trim().parse().map_err(|_| bad("eps"))?,
            "variant" => params.variant = AgreementVariant::parse(value.trim())?,
            other => {
                return Err(Error::Argument(format!(
                    "unknown --params key '{other}' (known: k, T, eps, variant)"
                )))
            }
        }
    }
    Ok(params)
}

fn score(args: ScoreArgs, config: &mut ConfigDoc) -> Result<()> {
    let input = pick_required(args.input, config.path("in")?, "in")?;
    let split = parse_split(&pick(args.split, config.string("split")?, "test".into()))?;
    let method = Method::parse(&pick_required(
        args.method,
        config.string("method")?,
        "method",
    )?)?;
    let params = match args.params.or(config.string("params")?) {
        Some(s) => parse_method_params(&s)?,
        None => MethodParams::default(),
    };
    let protos_path = args.protos.or(config.path("protos")?);
    let index_path = args.index.or(config.path("index")?);
    let head_path = args.head_params.or(config.path("head-params")?);
    let out = pick_required(args.out, config.path("out")?, "out")?;
    config.ensure_consumed()?;

    let table = load_feature_table(&input)?;
    let protos = protos_path.map(load_prototypes).transpose()?;
    let index = index_path.map(load_knn_index).transpose()?;
    let head = head_path.map(load_head_params).transpose()?;
    let report = score_dataset(
        method,
        &params,
        &table,
        split,
        Artifacts {
            protos: protos.as_ref(),
            index: index.as_ref(),
            head: head.as_ref(),
        },
    )?;
    save_score_reports(std::slice::from_ref(&report), &out)?;
    let shown: Vec<String> = report
        .params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    println!(
        "scored {} records with {}{} to {}",
        report.records.len(),
        report.method,
        if shown.is_empty() {
            String::new()
        } else {
            format!(" ({})", shown.join(", "))
        },
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scores CSV produced by `score` (may hold several methods).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Table manifest the scores refer to.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Output JSON (array of per-method summaries).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn eval(args: EvalArgs, config: &mut ConfigDoc) -> Result<()> {
    let scores = pick_required(args.scores, config.path("scores")?, "scores")?;
    let table_path = pick_required(args.table, config.path("table")?, "table")?;
    let out = pick_required(args.out, config.path("out")?, "out")?;
    config.ensure_consumed()?;

    let table = load_feature_table(&table_path)?;
    let reports = load_score_reports(&scores)?;
    if reports.is_empty() {
        return Err(Error::Validation(format!(
            "no score records in {}",
            scores.display()
        )));
    }
    let summaries: Vec<MetricsSummary> = reports
        .iter()
        .map(|r| summarize(r, &table))
        .collect::<Result<_>>()?;
    let mut json = serde_json::to_string_pretty(&summaries)?;
    json.push('\n');
    oodkit::featstore::write_atomic(&out, &json)?;
    for s in &summaries {
        println!(
            "{}: auroc {:.3} aupr-in {:.3} aupr-out {:.3} autc {:.3}",
            s.method, s.auroc, s.aupr_in, s.aupr_out, s.autc
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One or more summary JSON files from `eval`.
    #[arg(long, num_args = 1.., value_name = "FILE")]
    summaries: Vec<PathBuf>,
    /// Optional table manifest supplying real class names.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Output Markdown file.
    #[arg(long)]
    out_md: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn report_cmd(args: ReportArgs, config: &mut ConfigDoc) -> Result<()> {
    let mut summary_paths = args.summaries;
    if summary_paths.is_empty() {
        if let Some(path) = config.path("summaries")? {
            summary_paths.push(path);
        }
    }
    if summary_paths.is_empty() {
        return Err(Error::Argument("--summaries needs at least one file".into()));
    }
    let table_path = args.table.or(config.path("table")?);
    let out_md = pick_required(args.out_md, config.path("out-md")?, "out-md")?;
    let out_csv = pick_required(args.out_csv, config.path("out-csv")?, "out-csv")?;
    config.ensure_consumed()?;

    let mut summaries = Vec::new();
    for path in &summary_paths {
        let batch: Vec<MetricsSummary> =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        summaries.extend(batch);
    }
    let class_names = match table_path {
        Some(p) => Some(load_feature_table(p)?.manifest.class_names),
        None => None,
    };
    let rendered = report::render(&summaries, class_names.as_deref())?;
    oodkit::featstore::write_atomic(&out_md, &rendered.markdown)?;
    oodkit::featstore::write_atomic(&out_csv, &rendered.csv)?;
    println!(
        "wrote report for {} methods to {} and {}",
        summaries.len(),
        out_md.display(),
        out_csv.display()
    );
    Ok(())
}
