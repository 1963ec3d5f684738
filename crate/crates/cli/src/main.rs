use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlpipe::data::{load_csv, FeatureKind, LoadOptions};
use mlpipe::learners::Algorithm;
use mlpipe::partition::CvStrategy;
use mlpipe::pipeline::{self, FoldChoice, ModelArchive, PipelineConfig};
use mlpipe::simulate::{simulate, SimConfig};
use mlpipe::{Error, Result};

/// Leakage-safe binary classification pipeline.
#[derive(Parser)]
#[command(name = "mlpipe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated heterogeneous-epistasis SNP dataset.
    Simulate(SimulateArgs),
    /// Exploratory statistics for a dataset.
    Explore(ExploreArgs),
    /// Run the full pipeline.
    Run(RunArgs),
    /// Score new data with a saved model archive.
    Predict(PredictArgs),
    /// Re-render plots from the CSVs of a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1600)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    features: usize,
    #[arg(long, default_value_t = 0.2)]
    maf: f64,
    /// Penetrance noise; solved from --heritability when omitted.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    heritability: f64,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    class_label: Option<String>,
    #[arg(long)]
    instance_id: Option<String>,
    #[arg(long)]
    match_id: Option<String>,
    /// Column to exclude; repeatable.
    #[arg(long = "exclude")]
    excluded: Vec<String>,
    /// Force a feature kind, as NAME=categorical|quantitative; repeatable.
    #[arg(long = "type", value_parser = parse_override)]
    type_overrides: Vec<(String, FeatureKind)>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    cv: Option<CvStrategy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    msurf_cap: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    inner_k: Option<usize>,
    /// Comma-separated subset of LR,NB,DT,RF,LCS.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    lcs_iterations: Option<u64>,
    #[arg(long)]
    lcs_max_rules: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Fold index, or "vote" to average over all folds.
    #[arg(long, default_value = "vote")]
    fold: FoldChoice,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a finished run.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = mlpipe::importance::TOP_N)]
    top_n: usize,
}

fn parse_override(s: &str) -> std::result::Result<(String, FeatureKind), String> {
    let (name, kind) = s.split_once('=').ok_or("expected NAME=KIND")?;
    let kind = match kind.to_ascii_lowercase().as_str() {
        "categorical" => FeatureKind::Categorical,
        "quantitative" => FeatureKind::Quantitative,
        other => return Err(format!("unknown feature kind '{other}'")),
    };
    Ok((name.to_string(), kind))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = SimConfig {
        n_instances: a.n,
        n_features: a.features,
        maf_predictive: a.maf,
        flip_noise: a.noise,
        heritability: a.heritability,
        seed: a.seed,
        ..SimConfig::default()
    };
    let sim = simulate(&cfg)?;
    sim.dataset.write_csv(&a.out)?;
    log::info!("wrote {} ({} instances, noise {:.6})", a.out.display(), a.n, sim.flip_noise);
    Ok(())
}

fn cmd_explore(a: ExploreArgs) -> Result<()> {
    let data = a.data.data.clone().ok_or_else(|| Error::config("--data is required"))?;
    let opts = LoadOptions {
        class_label: a.data.class_label.clone().unwrap_or_else(|| "Class".into()),
        instance_id: a.data.instance_id.clone(),
        match_id: a.data.match_id.clone(),
        excluded: a.data.excluded.clone(),
        type_overrides: a.data.type_overrides.iter().cloned().collect(),
        distinct_threshold: None,
    };
    let (d, cleaning) = load_csv(&data, &opts)?;
    let report = mlpipe::explore::explore(&d, a.alpha);
    report.write(&a.out)?;
    std::fs::write(a.out.join("cleaning_report.json"), serde_json::to_string_pretty(&cleaning)?)?;
    Ok(())
}

fn resolve_config(a: RunArgs) -> Result<PipelineConfig> {
    let mut c = match &a.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    let d = a.data;
    if let Some(v) = d.data {
        c.data = v;
    }
    if let Some(v) = d.class_label {
        c.class_label = v;
    }
    if d.instance_id.is_some() {
        c.instance_id = d.instance_id;
    }
    if d.match_id.is_some() {
        c.match_id = d.match_id;
    }
    if !d.excluded.is_empty() {
        c.excluded = d.excluded;
    }
    c.type_overrides.extend(d.type_overrides);
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { c.$field = v; })* };
    }
    set!(k, cv, seed, max_features, msurf_cap, trials, inner_k, algorithms, lcs_iterations, lcs_max_rules, alpha, top_n);
    if let Some(v) = a.out {
        c.output = v;
    }
    Ok(c)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = resolve_config(a)?;
    let summary = pipeline::run(&cfg)?;
    for (alg, ba) in summary.mean_balanced_accuracy() {
        println!("{alg}\tmean balanced accuracy {ba:.4}");
    }
    println!("outputs written to {}", summary.output.display());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let archive = ModelArchive::load(&a.archive)?;
    let preds = pipeline::predict(&archive, &a.data, a.fold)?;
    preds.write_csv(&a.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Run(a) => cmd_run(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Report(a) => pipeline::render_plots(&a.dir, a.top_n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
