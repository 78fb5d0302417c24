use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use skimread::cascade::{
    evaluate_models, load_checkpoints, prepare_data, run_pipeline, CostModel, DataSource, PipelineConfig, StageError,
};
use skimread::data::{generate_synthetic, SyntheticConfig};
use skimread::eval::export_report;
use skimread::models::{gradient_check_suite, BowClassifier, DecisionNet, LstmClassifier, Trainable};
use skimread::nn::Rng;

const THREADS_VAR: &str = "SKIMREAD_THREADS";

/// Train and benchmark skim-or-read cascades of a bag-of-words classifier
/// and a bi-LSTM.
///
/// Commands that take --config read a JSON pipeline configuration; flags
/// given on the command line override the values in the file. Set
/// SKIMREAD_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "skimread", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic treebank (train.txt, dev.txt, test.txt).
    Synth(SynthArgs),
    /// Train all models and write checkpoints, curves and report.json.
    Pipeline(PipelineArgs),
    /// Recompute curves and report.json from saved checkpoints.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients for every layer and model.
    Gradcheck(GradcheckArgs),
    /// Measure per-sample inference cost of both classifiers and print it as a cost model.
    Timeit(TimeitArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    contrast_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    vocab_size: usize,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of knob values per curve.
    #[arg(long)]
    grid_size: Option<usize>,
    /// BoW cost in ms per sample.
    #[arg(long)]
    c_bow: Option<f64>,
    /// LSTM cost in ms per sample.
    #[arg(long)]
    c_lstm: Option<f64>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// The configuration the checkpoints were trained with.
    #[arg(long)]
    config: PathBuf,
    /// Directory holding bow.skrd, lstm.skrd and decision.skrd.
    #[arg(long)]
    checkpoints: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Seeds 0..N are checked.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct TimeitArgs {
    /// Use this configuration's data and layer sizes instead of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Timed batches of 64 sentences per model.
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Bad input from the user, reported with exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn load_config(path: &Path, overrides: &Overrides) -> anyhow::Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: PipelineConfig =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = out.clone();
    }
    if let Some(g) = overrides.grid_size {
        config.grid_size = g;
    }
    if let Some(c) = overrides.c_bow {
        config.cost_model.c_bow = c;
    }
    if let Some(c) = overrides.c_lstm {
        config.cost_model.c_lstm = c;
    }
    config.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let config = SyntheticConfig {
        n_sentences: args.n,
        vocab_size: args.vocab_size,
        max_len: args.max_len,
        contrast_rate: args.contrast_rate,
        seed: args.seed,
    };
    let corpus = generate_synthetic(&config).map_err(|e| usage(e.to_string()))?;
    corpus.write_to_dir(&args.out)?;
    println!(
        "wrote {} train, {} dev, {} test sentences to {}",
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len(),
        args.out.display()
    );
    Ok(())
}

fn pipeline(args: &PipelineArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config, &args.overrides)?;
    let out = run_pipeline(&config)?;
    for r in &out.report.results {
        println!("split={} strategy={} auc={:.4}", r.split, r.strategy, r.auc);
    }
    println!("artifacts in {}", config.out_dir.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config, &args.overrides)?;
    let data = prepare_data(&config)?;
    let (bow, lstm, decision) = load_checkpoints(&args.checkpoints, &data.vocab)?;
    let (report, activations) = evaluate_models(&config, &data, &bow, &lstm, &decision)?;
    export_report(&report, &activations, &config.out_dir).map_err(StageError::from)?;
    for r in &report.results {
        println!("split={} strategy={} auc={:.4}", r.split, r.strategy, r.auc);
    }
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> anyhow::Result<bool> {
    if args.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let results: Vec<_> = (0..args.seeds).flat_map(gradient_check_suite).collect();
    let mut names: Vec<&str> = Vec::new();
    for r in &results {
        if !names.contains(&r.name) {
            names.push(r.name);
        }
    }
    let mut overall = 0.0f64;
    for name in names {
        let worst = results
            .iter()
            .filter(|r| r.name == name)
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max);
        overall = overall.max(worst);
        println!("{name:<24} max_rel_error={worst:.3e}");
    }
    println!("seeds={} max_rel_error={overall:.3e}", args.seeds);
    Ok(overall < args.tolerance)
}

/// Mean ms per sample over `batches` sequential batches of 64.
fn time_per_sample<M: Trainable>(model: &M, sentences: &[Vec<usize>], batches: usize) -> anyhow::Result<f64> {
    const BATCH: usize = 64;
    for s in sentences.iter().take(BATCH) {
        model.probs(s)?;
    }
    let start = Instant::now();
    let mut n = 0;
    for b in 0..batches {
        for i in 0..BATCH {
            std::hint::black_box(model.probs(&sentences[(b * BATCH + i) % sentences.len()])?);
            n += 1;
        }
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / n as f64)
}

fn timeit(args: &TimeitArgs) -> anyhow::Result<()> {
    if args.batches == 0 {
        return Err(usage("--batches must be positive"));
    }
    let config = match &args.config {
        Some(path) => load_config(path, &Overrides::none())?,
        None => serde_json::from_value(serde_json::json!({
            "data": DataSource::Synthetic(SyntheticConfig::default()),
            "out_dir": ".",
        }))?,
    };
    let data = prepare_data(&config)?;
    let mut rng = Rng::new(args.seed);
    let bow = BowClassifier::new(data.embeddings.clone(), &config.dims, &mut rng);
    let lstm = LstmClassifier::new(data.embeddings.clone(), &config.dims, &mut rng);
    let decision = DecisionNet::from_bow(&bow, &config.dims, &mut rng);
    let sentences: Vec<Vec<usize>> = data.splits.valid.iter().map(|e| e.tokens.clone()).collect();
    let c_bow = time_per_sample(&bow, &sentences, args.batches)?;
    let c_lstm = time_per_sample(&lstm, &sentences, args.batches)?;
    let c_decision = time_per_sample(&decision, &sentences, args.batches)?;
    log::info!("decision network: {c_decision:.5} ms/sample including the BoW trunk");
    let costs = CostModel::new(c_bow, c_lstm).context("measured costs are not ordered")?;
    println!("{}", serde_json::to_string(&costs)?);
    Ok(())
}

impl Overrides {
    fn none() -> Self {
        Self {
            seed: None,
            out: None,
            grid_size: None,
            c_bow: None,
            c_lstm: None,
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    init_threads()?;
    match &cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Pipeline(a) => pipeline(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
        Command::Timeit(a) => timeit(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
