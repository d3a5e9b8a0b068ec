use std::io::{self, BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tokscope_cli::error::Failure;
use tokscope_cli::server::{self, ServiceConfig};
use tokscope_cli::source::DEFAULT_RECORDS_LABEL;
use tokscope_cli::stream::{self, StreamOptions};
use tokscope_cli::{stub_server, AnalyzeInput, ReversalScorer};
use tokscope_core::corpus::preamble;
use tokscope_core::{BackendDescriptor, FlagThresholds, MonitorConfig, TrigramStub};

#[derive(Debug, Parser)]
#[command(
    name = "tokscope",
    version,
    about = "Token-level uncertainty analysis for language-model output"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one sequence and write its report.
    Analyze(AnalyzeArgs),
    /// Compare a text with its word-reversed form.
    Reversal(ReversalArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Watch a record stream for drift.
    Monitor(MonitorArgs),
    /// Serve a completions endpoint backed by a trigram stub model.
    StubBackend(StubArgs),
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Base URL of a completions-style API, e.g. http://localhost:8000/v1.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "default")]
    model: String,
    /// Alternatives requested per position.
    #[arg(long, default_value_t = 20)]
    topk: usize,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
}

impl BackendArgs {
    fn descriptor(&self) -> Option<BackendDescriptor> {
        self.backend.as_ref().map(|url| BackendDescriptor {
            model: self.model.clone(),
            top_k: self.topk,
            timeout_secs: self.timeout,
            auth_env: self.auth_env.clone(),
            ..BackendDescriptor::new(url.clone())
        })
    }
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Flag tokens whose entropy exceeds this (nats).
    #[arg(long, default_value_t = FlagThresholds::default().entropy)]
    entropy_threshold: f64,
    /// Flag tokens whose varentropy exceeds this (nats²).
    #[arg(long, default_value_t = FlagThresholds::default().varentropy)]
    varentropy_threshold: f64,
    /// Flag tokens whose surprisal exceeds this (nats).
    #[arg(long, default_value_t = FlagThresholds::default().surprisal)]
    surprisal_threshold: f64,
}

impl ThresholdArgs {
    fn thresholds(&self) -> FlagThresholds {
        FlagThresholds {
            entropy: self.entropy_threshold,
            varentropy: self.varentropy_threshold,
            surprisal: self.surprisal_threshold,
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["records", "backend"]))]
struct AnalyzeArgs {
    /// Line-delimited logit records.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Binary little-endian f32 buffer referenced by `logits_ref` records.
    #[arg(long, requires = "records")]
    logits_buffer: Option<PathBuf>,
    /// Text to score on the backend.
    #[arg(long, requires = "backend")]
    prompt_file: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("scorer").required(true).args(["backend", "stub"]))]
struct ReversalArgs {
    /// Text to reverse; the bundled Declaration passage when omitted.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Score in-process with a trigram stub trained on `--stub-corpus`.
    #[arg(long)]
    stub: bool,
    /// Training text for the stub; the input text when omitted.
    #[arg(long, requires = "stub")]
    stub_corpus: Option<PathBuf>,
    /// Comparison report path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Sessions kept in memory.
    #[arg(long, default_value_t = NonZeroUsize::new(64).unwrap())]
    capacity: NonZeroUsize,
    /// Directory of static UI assets.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = MonitorConfig::default().capacity)]
    window: usize,
    #[arg(long, default_value_t = MonitorConfig::default().alarm_k)]
    alarm_k: f64,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    /// Record stream; `-` for stdin.
    #[arg(long, default_value = "-")]
    records: PathBuf,
    /// Window capacity in tokens.
    #[arg(long, default_value_t = MonitorConfig::default().capacity)]
    window: usize,
    /// Alarm threshold in baseline standard deviations.
    #[arg(long, default_value_t = MonitorConfig::default().alarm_k)]
    alarm_k: f64,
    /// Print window means every N tokens; 0 disables.
    #[arg(long, default_value_t = 0)]
    interval: usize,
    /// Tokens observed before the baseline is frozen; the window size when
    /// omitted.
    #[arg(long)]
    baseline: Option<usize>,
}

#[derive(Debug, Args)]
struct StubArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8081)]
    port: u16,
    /// Training text; the bundled Declaration passage when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| Failure::Input(e.to_string())),
    }
}

async fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze(args) => {
            let descriptor = args.backend.descriptor();
            let prompt;
            let input = match (&args.records, &descriptor) {
                (Some(path), _) => AnalyzeInput::Records {
                    path,
                    buffer: args.logits_buffer.as_deref(),
                },
                (None, Some(backend)) => {
                    let file = args
                        .prompt_file
                        .as_deref()
                        .ok_or_else(|| Failure::Input("--backend requires --prompt-file".into()))?;
                    prompt = tokscope_cli::read_text(file)?;
                    AnalyzeInput::Backend {
                        backend,
                        prompt: &prompt,
                    }
                }
                (None, None) => unreachable!("clap enforces a source"),
            };
            let label = args.label.clone().unwrap_or_else(|| match input {
                AnalyzeInput::Records { .. } => DEFAULT_RECORDS_LABEL.into(),
                AnalyzeInput::Backend { .. } => tokscope_cli::source::DEFAULT_PROMPT_LABEL.into(),
            });
            let report =
                tokscope_cli::analyze(&label, input, &args.thresholds.thresholds()).await?;
            write_output(args.out.as_deref(), &report.to_json())
        }
        Command::Reversal(args) => {
            let text = match &args.prompt_file {
                Some(path) => tokscope_cli::read_text(path)?,
                None => preamble().to_string(),
            };
            let text = text.trim_end().to_string();
            let descriptor = args.backend.descriptor();
            let stub;
            let scorer = match &descriptor {
                Some(b) => ReversalScorer::Backend(b),
                None => {
                    let corpus = match &args.stub_corpus {
                        Some(path) => tokscope_cli::read_text(path)?,
                        None => text.clone(),
                    };
                    stub = TrigramStub::train(&corpus);
                    ReversalScorer::Stub(&stub)
                }
            };
            let report = tokscope_cli::reversal(&text, scorer).await?;
            print!("{}", report.table());
            if let Some(out) = &args.out {
                write_output(Some(out), &report.to_json())?;
            }
            Ok(())
        }
        Command::Serve(args) => {
            let mut config = ServiceConfig::new(SocketAddr::new(args.host, args.port));
            config.capacity = args.capacity;
            config.backend = args.backend.descriptor();
            config.assets = args.assets;
            config.thresholds = args.thresholds.thresholds();
            config.monitor = MonitorConfig {
                capacity: args.window,
                alarm_k: args.alarm_k,
                ..Default::default()
            };
            let (addr, handle) = server::spawn(config).await?;
            eprintln!("listening on http://{addr}");
            handle
                .await
                .map_err(|e| Failure::Service(e.to_string()))?
                .map_err(|e| Failure::Service(e.to_string()))
        }
        Command::Monitor(args) => {
            let mut options = StreamOptions::new(MonitorConfig {
                capacity: args.window,
                alarm_k: args.alarm_k,
                ..Default::default()
            });
            options.interval = args.interval;
            options.baseline_after = args.baseline.unwrap_or(args.window).max(1);
            let (stdout, stderr) = (io::stdout(), io::stderr());
            let (mut out, mut diag) = (stdout.lock(), stderr.lock());
            let result = if args.records.as_os_str() == "-" {
                stream::run(io::stdin().lock(), &mut out, &mut diag, options)
            } else {
                let file = std::fs::File::open(&args.records).map_err(|e| {
                    Failure::Input(format!("cannot read {}: {e}", args.records.display()))
                })?;
                stream::run(BufReader::new(file), &mut out, &mut diag, options)
            };
            result
                .map(|_| ())
                .map_err(|e| Failure::Input(e.to_string()))
        }
        Command::StubBackend(args) => {
            let corpus = match &args.corpus {
                Some(path) => tokscope_cli::read_text(path)?,
                None => preamble().to_string(),
            };
            let stub = Arc::new(TrigramStub::train(&corpus));
            let (addr, handle) = stub_server::spawn(
                SocketAddr::new(args.host, args.port),
                stub,
                stub_server::Behavior::Normal,
            )
            .await?;
            eprintln!("stub completions at http://{addr}/v1");
            handle
                .await
                .map_err(|e| Failure::Service(e.to_string()))?
                .map_err(|e| Failure::Service(e.to_string()))
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
