use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use focalbci_core::classifier::{ClassifierArch, TrainConfig, WeightDecay};
use focalbci_core::data::{generate_synthetic_with, load_dataset, save_dataset, split, CsvSchema, Dataset, Metrics, SyntheticConfig};
use focalbci_core::intent::{CommandMap, CommandMode, IntentSession};
use focalbci_core::model_file::ModelFile;
use focalbci_core::pipeline::{run_pipeline, select_focal_zone, PipelineConfig};
use focalbci_core::reward::ArRewardConfig;
use focalbci_core::sam::{history_to_csv, FocalState, SamConfig};
use focalbci_core::Error;
use serde::Serialize;

use crate::replay::{replay_to_server, replay_to_writer, replay_windows};
use crate::server::{Server, ServerConfig, Shared, DEFAULT_PORT, PORT_ENV};

#[derive(Debug, Parser)]
#[command(name = "focalbci", version, about = "EEG intent decoding: focal-zone search, LSTM classifier and command server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-channel dataset as CSV.
    GenSynthetic(GenArgs),
    /// Select a focal zone, train the classifier and write the model.
    Train(TrainArgs),
    /// Run the focal-zone search only.
    Optimize(OptimizeArgs),
    /// Report metrics and per-window decision latency for a saved model.
    Evaluate(EvaluateArgs),
    /// Serve window decisions and commands over TCP and WebSocket.
    Serve(ServeArgs),
    /// Stream a dataset as window messages.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Sample CSV: feature columns plus an integer label.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 14)]
    pub channels: usize,
    /// Zero-based label column; defaults to the last column.
    #[arg(long)]
    pub label_column: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_data(&self.data, self.channels, self.label_column)
    }
}

fn load_data(path: &Path, channels: usize, label_column: Option<usize>) -> Result<Dataset> {
    let mut schema = CsvSchema::with_channels(channels);
    if let Some(c) = label_column {
        schema.label_index = c;
    }
    Ok(load_dataset(path, &schema)?)
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 14)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 6)]
    pub amplitude_period: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long = "kprime", default_value_t = 224)]
    pub k_prime: usize,
    /// Reward model name.
    #[arg(long, default_value = "ar-silhouette")]
    pub reward: String,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 128)]
    pub initial_length: usize,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
}

impl SearchArgs {
    fn sam(&self) -> SamConfig {
        SamConfig {
            episodes: self.episodes,
            steps: self.steps,
            initial_length: self.initial_length,
            beta: self.beta,
            ..SamConfig::default()
        }
    }

    fn ar(&self) -> ArRewardConfig {
        ArRewardConfig {
            beta: self.beta,
            ..ArRewardConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out CSV; without it the data is split by --train-fraction.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Focal selector name.
    #[arg(long, default_value = "sam")]
    pub selector: String,
    /// Window length for the random and center selectors.
    #[arg(long, default_value_t = 24)]
    pub focal_length: usize,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    /// `decoupled` or `coupled`.
    #[arg(long, default_value = "decoupled")]
    pub weight_decay: WeightDecay,
    #[arg(long, default_value_t = 9)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 164)]
    pub hidden: usize,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    /// Per-iteration loss CSV; defaults next to --out.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Metrics JSON; defaults next to --out.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value = "focal.json")]
    pub out: PathBuf,
    /// Search trace CSV; defaults next to --out.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Also time window decisions.
    #[arg(long)]
    pub latency: bool,
    #[arg(long, default_value_t = 64)]
    pub window_size: usize,
    #[arg(long, default_value_t = 10)]
    pub latency_windows: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "typing")]
    pub mode: CommandMode,
    #[arg(long, default_value_t = 64)]
    pub window_size: usize,
    #[arg(long, default_value_t = 3)]
    pub required_run: usize,
    /// Held-out samples drawn for intent messages.
    #[arg(long)]
    pub replay_data: Option<PathBuf>,
    #[arg(long, default_value_t = 14)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Only replay samples with this label.
    #[arg(long = "class")]
    pub class_filter: Option<usize>,
    /// Windows per second.
    #[arg(long, default_value_t = 2.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 64)]
    pub window_size: usize,
    /// Server address; stdout when absent.
    #[arg(long)]
    pub to: Option<String>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_validation() => 2,
        _ => 1,
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::Validation(msg.into()).into()
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => train(a),
        Command::Optimize(a) => optimize(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        amplitude_period: a.amplitude_period,
        ..SyntheticConfig::new(a.n_per_class, a.channels, a.noise, a.seed)
    };
    let ds = generate_synthetic_with(&cfg)?;
    save_dataset(&ds, &a.out)?;
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    focal_state: FocalState,
    focal_reward: Option<f64>,
    selector: &'a str,
    reward: &'a str,
    train: Metrics,
    test: Metrics,
}

fn train(a: TrainArgs) -> Result<()> {
    let all = a.data.load()?;
    let (train_set, test_set) = match &a.test_data {
        Some(p) => (all, load_data(p, a.data.channels, a.data.label_column)?),
        None => split(&all, a.train_fraction, a.seed)?,
    };
    let cfg = PipelineConfig {
        k_prime: a.search.k_prime,
        selector: a.selector.clone(),
        reward: a.search.reward.clone(),
        focal_length: a.focal_length,
        sam: a.search.sam(),
        ar_reward: a.search.ar(),
        arch: ClassifierArch {
            hidden: a.hidden,
            ..ClassifierArch::default()
        },
        train: TrainConfig {
            learning_rate: a.lr,
            l2_lambda: a.l2,
            weight_decay: a.weight_decay,
            batch_size: a.batch_size,
            iterations: a.iterations,
            ..TrainConfig::default()
        },
        seed: a.seed,
    };
    let started = Instant::now();
    let every = (a.iterations / 10).max(1);
    let out = run_pipeline(&train_set, &cfg, &mut |i, loss| {
        if (i + 1) % every == 0 {
            log::info!("iteration {} loss {loss:.4}", i + 1);
        }
    })?;
    log::info!("trained in {:.1?}", started.elapsed());

    out.file.save(&a.out)?;
    let mut history = String::from("iteration,loss\n");
    for (i, l) in out.losses.iter().enumerate() {
        writeln!(history, "{i},{l}").unwrap();
    }
    write(&a.history.clone().unwrap_or_else(|| sibling(&a.out, ".history.csv")), &history)?;
    if !out.selection.history.is_empty() {
        write(&sibling(&a.out, ".search.csv"), &history_to_csv(&out.selection.history))?;
    }
    let report = TrainReport {
        focal_state: out.selection.state,
        focal_reward: out.selection.reward,
        selector: &a.selector,
        reward: &a.search.reward,
        train: out.model.evaluate(&train_set)?,
        test: out.model.evaluate(&test_set)?,
    };
    let metrics_path = a.metrics.clone().unwrap_or_else(|| sibling(&a.out, ".metrics.json"));
    write(&metrics_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    println!("focal zone {}", out.selection.state);
    if let Some(r) = out.selection.reward {
        println!("focal reward {r}");
    }
    println!("train accuracy {}", report.train.accuracy);
    println!("test accuracy {}", report.test.accuracy);
    println!("model {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct FocalReport<'a> {
    focal_state: FocalState,
    reward: Option<f64>,
    reward_model: &'a str,
    k_prime: usize,
    seed: u64,
    search: SamConfig,
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let ds = a.data.load()?;
    let cfg = PipelineConfig {
        k_prime: a.search.k_prime,
        selector: "sam".into(),
        reward: a.search.reward.clone(),
        sam: a.search.sam(),
        ar_reward: a.search.ar(),
        seed: a.seed,
        ..PipelineConfig::default()
    };
    let (_, selection) = select_focal_zone(&ds, &cfg)?;
    let report = FocalReport {
        focal_state: selection.state,
        reward: selection.reward,
        reward_model: &a.search.reward,
        k_prime: a.search.k_prime,
        seed: a.seed,
        search: SamConfig { seed: a.seed, ..cfg.sam },
    };
    write(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(
        &a.history.clone().unwrap_or_else(|| sibling(&a.out, ".history.csv")),
        &history_to_csv(&selection.history),
    )?;
    println!("focal zone {}", selection.state);
    if let Some(r) = selection.reward {
        println!("reward {r}");
    }
    Ok(())
}

/// Plain-text metrics block.
pub fn format_metrics(m: &Metrics) -> String {
    let mut s = String::new();
    writeln!(s, "samples {}", m.total()).unwrap();
    writeln!(s, "accuracy {}", m.accuracy).unwrap();
    writeln!(s, "macro_precision {}", m.macro_precision).unwrap();
    writeln!(s, "macro_recall {}", m.macro_recall).unwrap();
    writeln!(s, "macro_f1 {}", m.macro_f1).unwrap();
    writeln!(s, "confusion (rows actual, columns predicted)").unwrap();
    for (i, row) in m.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        writeln!(s, "{i:>3} {}", cells.join("")).unwrap();
    }
    s
}

/// Mean wall time in milliseconds of decide plus consensus over
/// consecutive windows, wrapping around the dataset.
pub fn window_latency_ms(
    model: &focalbci_core::classifier::ClassifierModel,
    ds: &Dataset,
    window_size: usize,
    windows: usize,
) -> Result<f64> {
    if window_size == 0 || windows == 0 {
        return Err(invalid("window size and window count must be >= 1"));
    }
    let mut session = IntentSession::new(model, CommandMap::typing(), window_size, 3);
    let mut rows = ds.samples.iter().map(|s| s.features.clone()).cycle();
    let mut total = 0.0;
    for _ in 0..windows {
        let window: Vec<Vec<f64>> = rows.by_ref().take(window_size).collect();
        let t = Instant::now();
        session.process_window(&window)?;
        total += t.elapsed().as_secs_f64();
    }
    Ok(total * 1000.0 / windows as f64)
}

#[derive(Serialize)]
struct EvaluateReport {
    metrics: Metrics,
    latency_ms_per_window: Option<f64>,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let ds = a.data.load()?;
    let metrics = model.evaluate(&ds)?;
    print!("{}", format_metrics(&metrics));
    let latency = if a.latency {
        let ms = window_latency_ms(&model, &ds, a.window_size, a.latency_windows)?;
        println!("latency_ms_per_window {ms:.3} ({} windows of {})", a.latency_windows, a.window_size);
        Some(ms)
    } else {
        None
    };
    if let Some(p) = &a.json {
        let report = EvaluateReport {
            metrics,
            latency_ms_per_window: latency,
        };
        write(p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?.to_model()?;
    let replay = a
        .replay_data
        .as_ref()
        .map(|p| load_data(p, a.channels, None))
        .transpose()?;
    let config = ServerConfig {
        mode: a.mode,
        window_size: a.window_size,
        required_run: a.required_run,
        seed: a.seed,
    };
    let shared = Shared::new(model, replay.as_ref(), config).map_err(invalid)?;
    let server = Server::bind((a.host.as_str(), a.port), shared)
        .with_context(|| format!("binding {}:{}", a.host, a.port))?;
    println!("listening on {}", server.local_addr()?);
    server.run()?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    if !(a.rate > 0.0) || !a.rate.is_finite() {
        return Err(invalid(format!("rate {} must be positive", a.rate)));
    }
    let ds = a.data.load()?;
    let windows = replay_windows(&ds, a.class_filter, a.window_size)?;
    let sent = match &a.to {
        Some(addr) => replay_to_server(windows, a.rate, addr.as_str(), std::io::stdout())
            .with_context(|| format!("streaming to {addr}"))?,
        None => replay_to_writer(windows, a.rate, &mut std::io::stdout().lock())?,
    };
    log::info!("replayed {sent} windows");
    Ok(())
}
