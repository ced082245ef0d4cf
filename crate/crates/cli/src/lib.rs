//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on domain errors (for example a spec outside
//! the contiguity regime), 2 on I/O, configuration and usage errors.
//!
//! Outputs go to `--out` when given, otherwise into the directory named by
//! `SPIKED_OUT_DIR` when set, otherwise to standard output. Files are
//! written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use spiked_cycles::asymptotics::AsymptoticParams;
use spiked_cycles::config::{load_config, ConfigDoc};
use spiked_cycles::cycles::cycle_vector_capped;
use spiked_cycles::defaults::{DEFAULT_ALPHA, DEFAULT_K_MAX, DEFAULT_SEED, OUTPUT_DIR_ENV};
use spiked_cycles::error::{Error, Result};
use spiked_cycles::experiments::{
    clt_experiment, llr_experiment, variance_decomposition_report, write_outputs, ExperimentConfig,
    ExperimentKind,
};
use spiked_cycles::io::{matrix_to_csv, read_matrix_csv, write_atomic};
use spiked_cycles::llr::lr_test;
use spiked_cycles::sampler::sample;
use spiked_cycles::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spiked", version, about = "Cycle statistics and likelihood-ratio tests for spiked matrix models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML or JSON model or experiment document.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the document).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replications (overrides the document).
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Terms of the likelihood expansion, or cycle orders to report.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Largest cycle order allowed.
    #[arg(long = "k-max", global = true, default_value_t = DEFAULT_K_MAX)]
    pub k_max: usize,
    /// Test level.
    #[arg(long, global = true, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Output file, or output directory for experiments.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a data matrix from the model in --config.
    Simulate {
        /// Sample the null `X = Z` instead of the alternative.
        #[arg(long)]
        null: bool,
    },
    /// Cycle statistics B_{n,1..m} of a matrix file.
    Cycles { matrix: PathBuf },
    /// Asymptotic parameters and contiguity margin of the model in --config.
    Threshold,
    /// Likelihood-ratio test of a matrix file against the model in --config.
    Test { matrix: PathBuf },
    /// Run the CLT or LLR experiment described by --config.
    Experiment,
    /// Variance decomposition of sigma_b^2 across cycle orders.
    Decompose,
}

fn exit_code(err: &Error) -> i32 {
    if err.is_domain() {
        1
    } else {
        2
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::InvalidArgument(format!("cannot start {t} threads: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn config_path(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| Error::Config(vec![spiked_cycles::Violation::new("--config", "this command needs --config")]))
}

fn load_spec(cli: &Cli) -> Result<ModelSpec> {
    Ok(match load_config(config_path(cli)?)? {
        ConfigDoc::Model(spec) => spec,
        ConfigDoc::Experiment(e) => e.spec,
    })
}

fn load_experiment(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match load_config(config_path(cli)?)? {
        ConfigDoc::Experiment(e) => e,
        ConfigDoc::Model(_) => {
            return Err(Error::Config(vec![spiked_cycles::Violation::new(
                "model",
                "an experiment document needs a [model] table",
            )]))
        }
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(reps) = cli.reps {
        config.reps = reps;
    }
    if let Some(m) = cli.m {
        config.m = m;
    }
    if let Some(out) = &cli.out {
        config.output_path = Some(out.clone());
    }
    if config.output_path.is_none() {
        config.output_path = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    }
    config.validate()?;
    Ok(config)
}

/// Where a single-file output goes: `--out`, else `$SPIKED_OUT_DIR/<default_name>`, else stdout.
fn output_file(cli: &Cli, default_name: &str) -> Option<PathBuf> {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)))
}

fn emit(cli: &Cli, default_name: &str, text: &str) -> Result<()> {
    match output_file(cli, default_name) {
        Some(path) => {
            write_atomic(&path, text.as_bytes())?;
            log::info!("wrote {}", path.display());
            Ok(())
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Serialize(e.to_string()))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { null } => {
            let spec = load_spec(cli)?;
            let bundle = sample(&spec, !null, cli.seed.unwrap_or(DEFAULT_SEED))?;
            emit(cli, "matrix.csv", &matrix_to_csv(&bundle.x, Some(spec.kappa)))
        }
        Command::Cycles { matrix } => {
            let x = read_matrix_csv(matrix)?;
            let m = cli.m.unwrap_or(cli.k_max);
            let stats = cycle_vector_capped(x.view(), m, cli.k_max)?;
            let text = match cli.format {
                OutputFormat::Csv => stats.to_csv(),
                OutputFormat::Json => json(&stats)?,
            };
            emit(cli, "cycles.csv", &text)
        }
        Command::Threshold => {
            let spec = load_spec(cli)?;
            let terms = cli.m.unwrap_or(cli.k_max);
            let params = AsymptoticParams::from_spec(&spec, terms)?;
            let mut text = json(&params)?;
            if cli.format == OutputFormat::Csv {
                text.push('\n');
                text.push_str(&params.to_table());
            }
            emit(cli, "threshold.json", &text)
        }
        Command::Test { matrix } => {
            let spec = load_spec(cli)?;
            let x = read_matrix_csv(matrix)?;
            let report = lr_test(&x, &spec, cli.alpha, cli.m)?;
            println!("{}", report.verdict());
            emit(cli, "test.json", &json(&report)?)
        }
        Command::Experiment => {
            let config = load_experiment(cli)?;
            let (stem, csv, summary) = match config.kind {
                ExperimentKind::Clt => {
                    let r = clt_experiment(&config)?;
                    ("clt", r.to_csv(), r.to_json()?)
                }
                ExperimentKind::Llr => {
                    let r = llr_experiment(&config)?;
                    ("llr", r.to_csv(), r.to_json()?)
                }
            };
            write_or_print(&config, stem, &csv, &summary)
        }
        Command::Decompose => {
            let config = load_experiment(cli)?;
            let report = variance_decomposition_report(&config)?;
            print!("{}", report.to_table());
            write_or_print(&config, "decomposition", &report.to_csv(), &report.to_json()?)
        }
    }
}

fn write_or_print(config: &ExperimentConfig, stem: &str, csv: &str, summary: &str) -> Result<()> {
    match &config.output_path {
        Some(dir) => {
            write_outputs(dir, stem, csv, summary)?;
            log::info!("wrote {stem}.csv and {stem}.json to {}", dir.display());
        }
        None => print!("{summary}"),
    }
    Ok(())
}
