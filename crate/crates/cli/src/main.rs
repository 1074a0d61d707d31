use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sublinear_cli::config::{resolve_phi, validate, ExperimentConfig, OutputFormat, SolverOverrides};
use sublinear_cli::run::{compare, run, RunOptions, Status, COMPARE_CSV_HEADER};
use sublinear_cli::CliError;
use sublinear_core::convolution::StepModel;
use sublinear_core::gdist::{g_normal_expect, GNormalParams};
use sublinear_core::measure::fixtures;

#[derive(Parser)]
#[command(name = "sublin", version, about = "Upper expectations over finite ambiguity sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Both => OutputFormat::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Exit with status 3 when any experiment was truncated.
        #[arg(long)]
        strict: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Convolution value against strategy enumeration for one fixture.
    Compare {
        /// A fixture from `--config`, or one of mean-uncertain-coin,
        /// variance-uncertain-rademacher, fair-rademacher.
        #[arg(long)]
        fixture: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "x^2")]
        phi: String,
        #[arg(long)]
        n: usize,
    },
    /// One G-heat solve, printing E[phi(X)].
    Gheat {
        #[arg(long)]
        sigma_lo_sq: f64,
        #[arg(long)]
        sigma_hi_sq: f64,
        #[arg(long, default_value = "x^2")]
        phi: String,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        dx: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
}

fn builtin_fixture(name: &str) -> Option<Vec<StepModel>> {
    let set = match name {
        "mean-uncertain-coin" => fixtures::mean_uncertain_coin(),
        "variance-uncertain-rademacher" => fixtures::variance_uncertain_rademacher(),
        "fair-rademacher" => fixtures::fair_rademacher(),
        _ => return None,
    };
    Some(vec![StepModel::new(set, 1.0).expect("builtin fixtures sit on the unit lattice")])
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            format,
            jobs,
            strict,
        } => {
            let summary = run(
                &config,
                &RunOptions {
                    out_dir,
                    format: format.map(Into::into),
                    jobs,
                    strict,
                },
            )?;
            for o in &summary.outcomes {
                let status = match o.status {
                    Status::Ok => "ok",
                    Status::Truncated => "truncated",
                    Status::Failed => "failed",
                };
                eprintln!("{}: {status}", o.name);
                for w in &o.warnings {
                    eprintln!("  warning: {w}");
                }
                if let Some(e) = &o.error {
                    eprintln!("  error: {e}");
                }
            }
            eprintln!("outputs in {}", summary.out_dir.display());
            Ok(summary.exit_code)
        }
        Command::Validate { config } => {
            let (cfg, _) = ExperimentConfig::load(&config)?;
            let plans = validate(&cfg)?;
            println!("{} experiments valid", plans.len());
            Ok(0)
        }
        Command::Compare {
            fixture,
            config,
            phi,
            n,
        } => {
            let steps = match config {
                Some(path) => {
                    let (cfg, _) = ExperimentConfig::load(&path)?;
                    let def = cfg
                        .fixtures
                        .get(&fixture)
                        .ok_or_else(|| CliError::Validation(format!("undeclared fixture '{fixture}'")))?;
                    let members = def
                        .members
                        .iter()
                        .map(|d| d.clone().try_into())
                        .collect::<Result<Vec<_>, _>>()?;
                    let set = sublinear_core::measure::AmbiguitySet::new(def.label.clone().unwrap_or(fixture), members)?;
                    vec![StepModel::new(set, def.spacing.unwrap_or(1.0))?]
                }
                None => builtin_fixture(&fixture)
                    .ok_or_else(|| CliError::Validation(format!("unknown fixture '{fixture}'")))?,
            };
            let sigma = sublinear_core::harness::combined_moments(&steps).sigma_hi();
            let f = resolve_phi(&phi, sigma).ok_or_else(|| CliError::Validation(format!("unknown test function '{phi}'")))?;
            let row = compare(&steps, &f, n)?;
            print!("{COMPARE_CSV_HEADER}\n{}", row.csv_line());
            Ok(0)
        }
        Command::Gheat {
            sigma_lo_sq,
            sigma_hi_sq,
            phi,
            half_width,
            dx,
            dt,
            horizon,
        } => {
            let params = GNormalParams::new(sigma_lo_sq, sigma_hi_sq)?;
            let f = resolve_phi(&phi, params.sigma_hi())
                .ok_or_else(|| CliError::Validation(format!("unknown test function '{phi}'")))?;
            let cfg = SolverOverrides {
                half_width,
                dx,
                dt,
                horizon,
            }
            .apply(&params);
            cfg.validate(&params).map_err(|e| CliError::Validation(e.to_string()))?;
            println!("{}", sublinear_core::fmt_f64(g_normal_expect(f.as_fn(), &params, &cfg)?));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
