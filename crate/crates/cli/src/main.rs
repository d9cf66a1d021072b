//! `stockcast` command-line entry point.
//!
//! Exit codes: 0 on success, 1 for invalid invocations or configs, 2 when
//! processing fails.

mod http;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stockcast::collector::{
    Backoff, Clock, Collector, CollectorError, FileStateStore, JsonlSink, MockScript,
    MockTransport, RateBudget, SimClock, SystemClock, Transport,
};
use stockcast::pipeline::{self, PipelineError, RunConfig, RunDir};
use stockcast::sentiment::Lexicon;

#[derive(Parser, Debug)]
#[command(name = "stockcast", version, about = "Next-day close forecasting from prices and post sentiment")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Run configuration file (flat TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Run directory (or output directory for `collect`, `compare` and `score-file`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build features.csv, latest.csv and scaler.params in a new run directory.
    Featurize,
    /// Train the network on a featurized run.
    Train,
    /// Score the test block of a trained run.
    Evaluate,
    /// Forecast the session after the last observed day.
    Predict,
    /// Page through a search API into posts.jsonl.
    Collect(CollectArgs),
    /// Compare the test MSE of two evaluated runs.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Print `date,compound` for each post in a JSON-lines file.
    ScoreFile {
        input: PathBuf,
        /// Lexicon file; defaults to the config's, then the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CollectArgs {
    /// Search query, e.g. `$TSLA`.
    #[arg(long)]
    query: String,
    /// Scripted in-process transport (`page N` / `fail MSG` lines).
    #[arg(long, value_name = "SCRIPT", conflicts_with = "endpoint", required_unless_present = "endpoint")]
    mock: Option<PathBuf>,
    /// HTTP search endpoint.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Environment variable holding a bearer token for the endpoint.
    #[arg(long, value_name = "VAR")]
    token_env: Option<String>,
    #[arg(long, default_value_t = 5)]
    max_restarts: u32,
    #[arg(long, default_value_t = stockcast::collector::DEFAULT_LIMIT)]
    rate_limit: usize,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<CollectorError> for CliError {
    fn from(e: CollectorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

// Stops quietly when stdout is a closed pipe (e.g. `| head`).
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(2);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

fn overrides(g: &GlobalArgs) -> Vec<String> {
    let mut out = g.set.clone();
    if let Some(seed) = g.seed {
        out.push(format!("seed={seed}"));
    }
    out
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, PipelineError> {
    match &g.config {
        Some(path) => RunConfig::load(path, &overrides(g)),
        None => RunConfig::parse("", &overrides(g)),
    }
}

fn run_dir(g: &GlobalArgs) -> Result<RunDir, CliError> {
    if g.config.is_some() {
        return Err(CliError::Validation(
            "--config applies to featurize; later steps read the run directory".into(),
        ));
    }
    let path = g
        .out
        .as_ref()
        .ok_or_else(|| CliError::Validation("--out DIR naming a run directory is required".into()))?;
    Ok(RunDir::open(path)?)
}

fn featurize(g: &GlobalArgs) -> CliResult {
    let config = load_config(g)?;
    config.check_inputs()?;
    let run = RunDir::create(&config.output_dir, g.out.as_deref())?;
    let r = pipeline::featurize(&config, &run)?;
    let (tr, va, te) = r.split_sizes;
    outln!("rows {} columns {} examples {}", r.rows, r.columns.len(), r.examples);
    outln!("split {tr}/{va}/{te}");
    outln!("columns {}", r.columns.join(","));
    outln!("run {}", run.path().display());
    Ok(())
}

fn train(g: &GlobalArgs) -> CliResult {
    let run = run_dir(g)?;
    let r = pipeline::train(&run, &overrides(g))?;
    let last = r.records.last().expect("at least one epoch");
    outln!(
        "epochs {} best_epoch {} train_mse {:.6} val_mse {:.6} seed {}",
        r.records.len(),
        r.best_epoch,
        last.train_mse,
        last.val_mse,
        r.seed
    );
    Ok(())
}

fn evaluate(g: &GlobalArgs) -> CliResult {
    if !g.set.is_empty() || g.seed.is_some() {
        return Err(CliError::Validation("evaluate takes no config overrides".into()));
    }
    let r = pipeline::evaluate(&run_dir(g)?)?;
    outln!("test_mse {:.6} examples {}", r.test_mse, r.examples);
    Ok(())
}

fn predict(g: &GlobalArgs) -> CliResult {
    let f = pipeline::predict(&run_dir(g)?)?;
    outln!("as_of {} prediction {:.4} scaled {:.6}", f.as_of, f.close, f.scaled);
    Ok(())
}

fn compare(g: &GlobalArgs, a: &Path, b: &Path) -> CliResult {
    let c = pipeline::compare(a, b)?;
    let report = c.render(a, b);
    emit(&report);
    if let Some(dir) = &g.out {
        write_out(dir, "comparison.txt", &report)?;
    }
    Ok(())
}

fn write_out(dir: &Path, name: &str, text: &str) -> CliResult {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join(name), text).map_err(io)
}

fn score_file(g: &GlobalArgs, input: &Path, lexicon: Option<&Path>) -> CliResult {
    let lexicon = match lexicon {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            Lexicon::parse(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        }
        None => pipeline::load_lexicon(&load_config(g)?)?.0,
    };
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let csv = pipeline::score_file(&text, &lexicon)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
    match &g.out {
        Some(dir) => write_out(dir, "scores.csv", &csv),
        None => {
            emit(&csv);
            Ok(())
        }
    }
}

fn collect(g: &GlobalArgs, args: &CollectArgs) -> CliResult {
    if args.rate_limit == 0 {
        return Err(CliError::Validation("--rate-limit must be positive".into()));
    }
    let out = match &g.out {
        Some(dir) => dir.clone(),
        None => load_config(g)?.output_dir.join("collect"),
    };
    fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;

    let (mut transport, mut clock): (Box<dyn Transport>, Box<dyn Clock>) = match (&args.mock, &args.endpoint) {
        (Some(script), _) => {
            let text = fs::read_to_string(script)
                .map_err(|e| CliError::Validation(format!("{}: {e}", script.display())))?;
            let script = MockScript::parse(&text).map_err(CliError::Validation)?;
            (
                Box::new(MockTransport::new(script, &args.query)),
                Box::new(SimClock::new()),
            )
        }
        (None, Some(url)) => {
            let token = match &args.token_env {
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| CliError::Validation(format!("environment variable {var} is not set")))?,
                ),
                None => None,
            };
            (
                Box::new(http::HttpTransport::new(url, token)),
                Box::new(SystemClock::new()),
            )
        }
        (None, None) => return Err(CliError::Validation("either --mock or --endpoint is required".into())),
    };
    let mut sink = JsonlSink::open(&out.join("posts.jsonl"))?;
    let mut store = FileStateStore::new(out.join("collector.state"));
    let mut budget = RateBudget::new(args.rate_limit, stockcast::collector::DEFAULT_WINDOW);
    let state = Collector {
        transport: transport.as_mut(),
        sink: &mut sink,
        store: &mut store,
        budget: &mut budget,
        clock: clock.as_mut(),
    }
    .supervise(&args.query, args.max_restarts, Backoff::default())?;
    outln!(
        "pages {} records {} complete {}",
        state.pages_fetched, state.records_written, state.complete
    );
    outln!("out {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Featurize => featurize(g),
        Command::Train => train(g),
        Command::Evaluate => evaluate(g),
        Command::Predict => predict(g),
        Command::Collect(args) => collect(g, args),
        Command::Compare { run_a, run_b } => compare(g, run_a, run_b),
        Command::ScoreFile { input, lexicon } => score_file(g, input, lexicon.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
