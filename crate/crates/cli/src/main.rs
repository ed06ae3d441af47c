use std::collections::HashSet;
use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use gbtree::bench::{self, BenchRow};
use gbtree::data::DataMatrix;
use gbtree::libsvm::{read_libsvm_file, LibsvmOptions};
use gbtree::metrics::MetricKind;
use gbtree::model_io::{load_model, save_model};
use gbtree::objective::LossKind;
use gbtree::trainer::{train_with_log, TrainConfig, TreeMethod};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

/// Gradient tree boosting on LibSVM data.
#[derive(Parser)]
#[command(name = "gbtree", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to --model.
    Train(TrainArgs),
    /// Write one prediction per line.
    Predict(PredictArgs),
    /// Print `metric,value` lines for a model on a dataset.
    Eval(EvalArgs),
    /// Run a synthetic experiment and write `experiment,key,value` CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: TrainSettings,
}

/// Every setting is optional so that flag > file > default can be resolved.
#[derive(Args, Default, Debug)]
struct TrainSettings {
    /// Training data (LibSVM, `.gz` accepted).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model path.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Evaluation data, scored every round.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Feature indices in the data start at 1 [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    one_based: Option<bool>,
    /// Boosting rounds [default: 10].
    #[arg(long)]
    rounds: Option<usize>,
    /// Maximum tree depth [default: 8].
    #[arg(long)]
    max_depth: Option<usize>,
    /// Shrinkage [default: 0.1].
    #[arg(long)]
    eta: Option<f64>,
    /// L2 penalty on leaf weights [default: 1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-leaf penalty [default: 0].
    #[arg(long)]
    gamma: Option<f64>,
    /// Fraction of features sampled per tree [default: 1].
    #[arg(long)]
    colsample: Option<f64>,
    /// Fraction of rows sampled per tree [default: 1].
    #[arg(long)]
    subsample: Option<f64>,
    /// exact, approx_global or approx_local [default: exact].
    #[arg(long)]
    tree_method: Option<TreeMethod>,
    /// Sketch accuracy for the approximate methods [default: 0.03].
    #[arg(long)]
    eps: Option<f64>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum hessian sum per child [default: 0].
    #[arg(long)]
    min_child_hessian: Option<f64>,
    /// logistic or squared_error [default: logistic].
    #[arg(long)]
    loss: Option<LossKind>,
    /// Worker threads, 0 for all cores [default: 0].
    #[arg(long)]
    threads: Option<usize>,
    /// Metric logged each round, repeatable [default: logloss or rmse by loss].
    #[arg(long = "metric")]
    metrics: Option<Vec<MetricKind>>,
    /// Rows per column block [default: 65536].
    #[arg(long)]
    block_size: Option<usize>,
    /// Compress spilled blocks [default: false].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    compress: Option<bool>,
    /// Spill blocks to this directory, repeatable [default: none, in memory].
    #[arg(long = "spill-dir")]
    spill_dirs: Option<Vec<PathBuf>>,
    /// Blocks kept resident while streaming [default: 4].
    #[arg(long)]
    memory_budget_blocks: Option<usize>,
    /// Write `round,metric,value` records here instead of stdout.
    #[arg(long)]
    log_file: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e| format!("`{key}`: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl TrainSettings {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "data" => self.data = Some(value.into()),
            "model" => self.model = Some(value.into()),
            "eval_data" => self.eval_data = Some(value.into()),
            "one_based" => self.one_based = Some(parse_value(key, value)?),
            "rounds" => self.rounds = Some(parse_value(key, value)?),
            "max_depth" => self.max_depth = Some(parse_value(key, value)?),
            "eta" => self.eta = Some(parse_value(key, value)?),
            "lambda" => self.lambda = Some(parse_value(key, value)?),
            "gamma" => self.gamma = Some(parse_value(key, value)?),
            "colsample" => self.colsample = Some(parse_value(key, value)?),
            "subsample" => self.subsample = Some(parse_value(key, value)?),
            "tree_method" => self.tree_method = Some(parse_value(key, value)?),
            "eps" => self.eps = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "min_child_hessian" => self.min_child_hessian = Some(parse_value(key, value)?),
            "loss" => self.loss = Some(parse_value(key, value)?),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "metric" => self.metrics = Some(parse_list(key, value)?),
            "block_size" => self.block_size = Some(parse_value(key, value)?),
            "compress" => self.compress = Some(parse_value(key, value)?),
            "spill_dir" => self.spill_dirs = Some(parse_list(key, value)?),
            "memory_budget_blocks" => self.memory_budget_blocks = Some(parse_value(key, value)?),
            "log_file" => self.log_file = Some(value.into()),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut settings = Self::default();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| format!("{}:{}: {msg}", path.display(), i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at("expected `key = value`".into()))?;
            let key = key.trim().replace('-', "_");
            if !seen.insert(key.clone()) {
                return Err(at(format!("duplicate key `{key}`")).into());
            }
            settings.set(&key, value.trim()).map_err(at)?;
        }
        Ok(settings)
    }

    /// Fills every unset field from `lower`.
    fn or(self, lower: Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            data, model, eval_data, one_based, rounds, max_depth, eta, lambda, gamma, colsample,
            subsample, tree_method, eps, seed, min_child_hessian, loss, threads, metrics,
            block_size, compress, spill_dirs, memory_budget_blocks, log_file
        )
    }

    fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::default();
        macro_rules! put {
            ($($src:ident => $($dst:ident).+),*) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        put!(
            rounds => num_rounds, max_depth => max_depth, eta => eta, lambda => lambda,
            gamma => gamma, colsample => colsample, subsample => subsample,
            tree_method => tree_method, eps => eps, seed => seed,
            min_child_hessian => min_child_hessian, loss => loss, threads => threads,
            metrics => metrics, block_size => block.block_size, compress => block.compression,
            spill_dirs => block.spill_directories,
            memory_budget_blocks => block.memory_budget_blocks
        );
        c
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Raw margins instead of transformed scores.
    #[arg(long)]
    output_margin: bool,
    #[arg(long)]
    one_based: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Repeatable; defaults to the model loss's metric.
    #[arg(long = "metric")]
    metrics: Vec<MetricKind>,
    #[arg(long)]
    one_based: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// approx-vs-exact, sparsity-speedup, block-size-sweep, sketch-guarantee or higgs.
    experiment: String,
    /// Comma-separated eps values for approx-vs-exact.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// LibSVM Higgs file for the higgs experiment.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Higgs file indices start at 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "true")]
    one_based: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write + Send>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_data(path: &Path, one_based: bool) -> CliResult<DataMatrix> {
    Ok(read_libsvm_file(
        path,
        &LibsvmOptions {
            one_based,
            n_features: None,
        },
    )?)
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let file = match &args.config {
        Some(p) => TrainSettings::from_file(p)?,
        None => TrainSettings::default(),
    };
    let s = args.settings.or(file);
    let data_path = s.data.as_deref().ok_or("missing `data` (flag or config key)")?;
    let model_path = s.model.as_deref().ok_or("missing `model` (flag or config key)")?;
    let cfg = s.train_config();
    cfg.validate()?;
    let one_based = s.one_based.unwrap_or(false);
    let data = load_data(data_path, one_based)?;
    let eval = s.eval_data.as_deref().map(|p| load_data(p, one_based)).transpose()?;

    let mut log = output(s.log_file.as_deref())?;
    let mut write_err = None;
    let out = train_with_log(&data, &cfg, eval.as_ref(), &mut |r| {
        if write_err.is_none() {
            write_err = writeln!(log, "{r}").err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    log.flush()?;
    save_model(&out.model, model_path)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let data = load_data(&args.data, args.one_based)?;
    if data.n_features() > model.n_features() {
        eprintln!(
            "warning: data has {} features, model was trained on {}; extra features are ignored",
            data.n_features(),
            model.n_features()
        );
    }
    let scores = if args.output_margin {
        model.predict_raw(&data)
    } else {
        model.predict(&data)
    };
    let mut out = output(args.output.as_deref())?;
    for s in scores {
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let data = load_data(&args.data, args.one_based)?;
    let metrics = if args.metrics.is_empty() {
        vec![MetricKind::default_for(model.loss())]
    } else {
        args.metrics
    };
    let raw = model.predict_raw(&data);
    let mut out = io::stdout().lock();
    for m in metrics {
        let v = m.evaluate(model.loss(), data.labels(), &raw)?;
        writeln!(out, "{m},{v}")?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let rows: Vec<BenchRow> = match args.experiment.as_str() {
        "approx-vs-exact" => {
            let mut o = bench::ApproxVsExactOptions {
                seed: args.seed,
                threads: args.threads,
                ..Default::default()
            };
            if !args.eps.is_empty() {
                o.eps = args.eps;
            }
            bench::approx_vs_exact(&o)?
        }
        "sparsity-speedup" => bench::sparsity_speedup(&bench::SparsityOptions {
            seed: args.seed,
            threads: args.threads,
            ..Default::default()
        })?
        .to_rows(),
        "block-size-sweep" => bench::block_size_sweep(&bench::BlockSweepOptions {
            seed: args.seed,
            threads: args.threads,
            ..Default::default()
        })?,
        "sketch-guarantee" => bench::sketch_guarantee(&bench::SketchOptions {
            seed: args.seed,
            ..Default::default()
        })?,
        "higgs" => {
            let path = args.data.as_deref().ok_or("higgs needs --data <libsvm file>")?;
            bench::higgs(
                path,
                &bench::HiggsOptions {
                    one_based: args.one_based,
                    seed: args.seed,
                    threads: args.threads,
                    ..Default::default()
                },
            )?
        }
        other => {
            return Err(format!(
                "unknown experiment `{other}`; expected one of {}",
                bench::EXPERIMENTS.join(", ")
            )
            .into())
        }
    };
    let mut out = output(args.output.as_deref())?;
    writeln!(out, "{}", bench::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
