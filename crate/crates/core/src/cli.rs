//! Command-line front end: `run`, `validate` and `report`.

use crate::config::{ConfigError, RunConfig};
use crate::data::{load_wdbc, DataError};
use crate::exec::Parallelism;
use crate::simnet::{Experiment, PrepareError, ReportBundle, RunReport, SimError};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "SCALE_OUTPUT_DIR";
pub const REPORT_JSON: &str = "report.json";
pub const TABLE_CSV: &str = "table1.csv";

#[derive(Debug, Parser)]
#[command(name = "scale", version, about = "Clustered federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the clustered protocol, the FedAvg baseline, or both.
    Run(RunArgs),
    /// Check a config file and list every violation.
    Validate {
        /// Config file (TOML).
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Re-render the CSV table from a saved report.json.
    Report {
        /// Saved report.json.
        input: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Scale,
    Baseline,
    Both,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    /// Config file (TOML); built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Defaults to the config value, then $SCALE_OUTPUT_DIR, then ./out.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Run clusters one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DataError),
    #[error("{0}")]
    Runtime(#[from] SimError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("cannot read report: {0}")]
    Report(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(SimError::Config(_)) => 1,
            CliError::Dataset(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } | CliError::Report(_) => 3,
        }
    }
}

impl From<PrepareError> for CliError {
    fn from(e: PrepareError) -> Self {
        match e {
            PrepareError::Data(d) => CliError::Dataset(d),
            PrepareError::Sim(s) => CliError::Runtime(s),
        }
    }
}

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(n) = args.nodes {
        cfg.data.n_nodes = n;
    }
    if let Some(d) = &args.dataset {
        cfg.data.path = d.clone();
    }
    if let Some(o) = &args.output_dir {
        cfg.output_dir = Some(o.clone());
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from));
    }
    if args.sequential {
        cfg.parallelism = Parallelism::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the requested modes on one shared experiment so both see the same
/// partitions and the same initial weights.
pub fn execute(cfg: &RunConfig, mode: Mode) -> Result<ReportBundle, CliError> {
    let data = load_wdbc(&cfg.data.path)?;
    let exp = Experiment::prepare(cfg, &data)?;
    let mut bundle = ReportBundle::default();
    if matches!(mode, Mode::Scale | Mode::Both) {
        bundle.scale = Some(exp.run_scale(cfg)?.report);
    }
    if matches!(mode, Mode::Baseline | Mode::Both) {
        bundle.baseline = Some(exp.run_baseline(cfg)?.report);
    }
    Ok(bundle)
}

pub fn write_outputs(bundle: &ReportBundle, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io(format!("cannot create {}", dir.display())))?;
    let mut json = serde_json::to_string_pretty(bundle)?;
    json.push('\n');
    let json_path = dir.join(REPORT_JSON);
    std::fs::write(&json_path, json).map_err(io(format!("cannot write {}", json_path.display())))?;
    let csv_path = dir.join(TABLE_CSV);
    std::fs::write(&csv_path, bundle.to_csv()).map_err(io(format!("cannot write {}", csv_path.display())))?;
    Ok(())
}

pub fn summary_line(label: &str, r: &RunReport) -> String {
    format!(
        "{label}: nodes={} rounds={} updates={} accuracy={:.4} messages={} bytes={} latency_ms={:.1} energy_nj={:.0}",
        r.nodes, r.rounds, r.total_global_uploads, r.global.accuracy, r.total_messages, r.total_bytes, r.latency_ms, r.energy_nj
    )
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let bundle = execute(&cfg, args.mode)?;
    let dir = cfg.output_dir.clone().expect("resolved above");
    write_outputs(&bundle, &dir)?;
    if let Some(r) = &bundle.baseline {
        println!("{}", summary_line("baseline", r));
    }
    if let Some(r) = &bundle.scale {
        println!("{}", summary_line("scale", r));
    }
    if let (Some(s), Some(b)) = (&bundle.scale, &bundle.baseline) {
        if s.total_global_uploads > 0 {
            println!("reduction: {:.2}x fewer global updates", b.total_global_uploads as f64 / s.total_global_uploads as f64);
        }
    }
    println!("wrote {} and {}", dir.join(REPORT_JSON).display(), dir.join(TABLE_CSV).display());
    Ok(())
}

pub fn cmd_validate(config: &Path) -> i32 {
    let cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    let violations = cfg.violations();
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("{}: ok", config.display());
        0
    } else {
        1
    }
}

pub fn cmd_report(input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(io(format!("cannot read {}", input.display())))?;
    let bundle: ReportBundle = serde_json::from_str(&text)?;
    let csv = bundle.to_csv();
    match output {
        Some(p) => std::fs::write(p, csv).map_err(io(format!("cannot write {}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Parses `args` and dispatches; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate { config } => return cmd_validate(&config),
        Command::Report { input, output } => cmd_report(&input, output.as_deref()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
