use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use clickslice_cli::report::{render_eval, render_scan};
use clickslice_cli::scan::{scan, ScanOptions};
use clickslice_cli::{dump, eval, gen, load_model, train_dir, CliError, EvalRequest};
use clickslice_core::config::Config;
use clickslice_core::corpus::{GenSpec, StrategyMix};

const EXIT_CLEAN: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_FRAUD: u8 = 2;

/// Detect programmatic ad clicks in IR packages by backward slicing and a
/// one-class VAE.
#[derive(Parser)]
#[command(name = "clickslice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML config; falls back to $CLICKSLICE_CONFIG, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan packages (files or directories of .ir files).
    Scan {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Override the model's calibrated threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Print the JSON report instead of a table.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Per-package budget; defaults to the config value (300000).
        #[arg(long)]
        timeout_ms: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train a model on a directory of benign packages.
    Train {
        #[arg(long)]
        benign: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate a model on a labeled directory.
    Eval {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Fit the Youden threshold and write a calibrated copy of the model.
        #[arg(long, value_name = "OUT")]
        calibrate: Option<PathBuf>,
        /// Labeled directory to calibrate on instead of the evaluated one.
        #[arg(long, requires = "calibrate")]
        validation: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Retrain on every ablation subset using this benign directory.
        #[arg(long, value_name = "BENIGN_DIR")]
        ablate: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Generate a synthetic labeled corpus.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        benign: usize,
        #[arg(long)]
        fraud: usize,
        /// `even` or weights such as `random_coords=2,server_configured=1`.
        #[arg(long, default_value = "even")]
        mix: StrategyMix,
        #[arg(long, default_value_t = 1)]
        sites: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the gate decision, click sites, features and slices of a package.
    Dump {
        path: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(PathBuf::from("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Scan {
            paths,
            model,
            threshold,
            json,
            jobs,
            timeout_ms,
            config,
        } => {
            let cfg = Config::resolve(config.config.as_deref())?;
            let model = load_model(&model)?;
            let threshold = threshold.or(model.threshold).ok_or(CliError::NoThreshold)?;
            let opts = ScanOptions {
                threshold,
                jobs,
                timeout: Duration::from_millis(timeout_ms.unwrap_or(cfg.scan.timeout_ms)),
            };
            let report = scan(&paths, &model, &cfg.analysis()?, &opts)?;
            if json {
                emit(&json_text(&report))?;
            } else {
                emit(&render_scan(&report))?;
            }
            Ok(if report.has_errors() {
                EXIT_ERROR
            } else if report.fraud_found() {
                EXIT_FRAUD
            } else {
                EXIT_CLEAN
            })
        }
        Command::Train { benign, out, config } => {
            let cfg = Config::resolve(config.config.as_deref())?;
            let model = train_dir(&benign, &cfg.analysis()?, &cfg.training)?;
            model.save(&out).map_err(|e| CliError::Model(out.clone(), e))?;
            eprintln!(
                "trained on {} vectors, loss {:.5} -> {:.5}, wrote {}",
                model.training.samples,
                model.training.initial_loss,
                model.training.final_loss,
                out.display()
            );
            Ok(EXIT_CLEAN)
        }
        Command::Eval {
            labeled,
            model,
            calibrate,
            validation,
            threshold,
            ablate,
            json,
            config,
        } => {
            let cfg = Config::resolve(config.config.as_deref())?;
            let req = EvalRequest {
                labeled,
                model,
                calibrate,
                validation,
                threshold,
                ablate,
            };
            let out = eval(&req, &cfg.analysis()?, &cfg.training)?;
            if json {
                emit(&json_text(&out))?;
            } else {
                emit(&render_eval(&out))?;
            }
            Ok(EXIT_CLEAN)
        }
        Command::Gen {
            seed,
            benign,
            fraud,
            mix,
            sites,
            out,
        } => {
            let mut spec = GenSpec::new(seed, benign, fraud);
            spec.mix = mix;
            spec.sites_per_package = sites;
            let n = gen(&spec, &out)?;
            eprintln!("wrote {n} packages to {}", out.display());
            Ok(EXIT_CLEAN)
        }
        Command::Dump { path, config } => {
            let cfg = Config::resolve(config.config.as_deref())?;
            emit(&dump(&path, &cfg.analysis()?)?)?;
            Ok(EXIT_CLEAN)
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage-error code would collide with the fraud code
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
