use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmm_cli::selftest::{selftest, SelftestOptions};
use nmm_cli::{commands, CliError, Config, Overrides, Result};

/// Nonconvex majorization-minimization: benchmark suite, depth
/// reconstruction demo and invariant self test.
#[derive(Parser)]
#[command(name = "nmm", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Scale preset: desk or paper
    #[arg(long)]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic benchmark matrix
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and reconstruct a time-of-flight depth scene
    Tof {
        #[command(flatten)]
        common: Common,
        /// Modulation frequencies in MHz, comma separated
        #[arg(long, value_delimiter = ',')]
        frequencies: Option<Vec<f64>>,
        /// Noise standard deviation
        #[arg(long)]
        sigma: Option<f64>,
        /// Downsampling factor of the sensor
        #[arg(long)]
        downsample: Option<usize>,
        /// Number of depth labels
        #[arg(long)]
        labels: Option<usize>,
        /// Total variation weight
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Check the solver invariants at desk scale
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Debug: use τ = factor/L instead of 0.99/L
        #[arg(long, hide = true)]
        tau_factor: Option<f64>,
    },
}

fn threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Schema("flag `--threads`: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    Ok(())
}

fn load(common: &Common) -> Result<Config> {
    threads(common.threads)?;
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench { common } => {
            let cfg = load(&common)?;
            let ov = Overrides {
                seed: common.seed,
                profile: common.profile.clone(),
                ..Overrides::default()
            };
            let setup = cfg.bench(&ov)?;
            let result = commands::bench(&setup, &common.out_dir)?;
            println!("{:<6} {:<16} {:>12} {:>8}", "case", "method", "median gap", "note");
            for r in &result.summary {
                println!("{:<6} {:<16} {:>12.4e} {:>8}", r.case, r.method, r.median_gap, r.note);
            }
            println!("wrote {}", common.out_dir.display());
        }
        Command::Tof {
            common,
            frequencies,
            sigma,
            downsample,
            labels,
            alpha,
        } => {
            let cfg = load(&common)?;
            let ov = Overrides {
                seed: common.seed,
                profile: common.profile.clone(),
                frequencies_mhz: frequencies,
                sigma,
                downsample,
                labels,
                alpha,
            };
            cfg.profile(&ov)?;
            let setup = cfg.tof(&ov)?;
            let r = commands::tof(&setup, &common.out_dir)?;
            for &(f, e, u) in &r.closed_form {
                println!("closed form {:>6} MHz  rmse {e:.4} m  unwrap {:.1}%", f / 1e6, 100.0 * u);
            }
            println!("reconstruction      rmse {:.4} m  unwrap {:.1}%", r.rmse, 100.0 * r.unwrap_rate);
            if r.guard_stopped {
                println!("note: stopped by the descent guard");
            }
            println!("wrote {}", common.out_dir.display());
        }
        Command::Selftest {
            seed,
            threads: t,
            tau_factor,
        } => {
            threads(t)?;
            if let Some(f) = tau_factor {
                if !(f > 0.0) || !f.is_finite() {
                    return Err(CliError::Schema("flag `--tau-factor`: must be positive".into()));
                }
            }
            let report = selftest(SelftestOptions {
                seed: seed.unwrap_or(nmm_cli::config::DEFAULT_SEED),
                tau_factor,
            })?;
            report.iter().for_each(|c| println!("{}", c.line()));
            let failed: Vec<String> = report.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
            if !failed.is_empty() {
                return Err(CliError::Invariants(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are config errors; 2 is reserved for integrity.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nmm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
