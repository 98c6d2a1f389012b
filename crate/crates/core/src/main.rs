use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mode_ode::experiment::{cmd_ablation, cmd_eval, cmd_gen, cmd_irregular_sweep, cmd_train, ExperimentConfig};
use mode_ode::model::Head;
use mode_ode::ModeError;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// Monotone neural ODE forecasting for cumulative daily series.
#[derive(Debug, Parser)]
#[command(name = "mode", version)]
struct Cli {
    /// JSON experiment config; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Overrides both the generator and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset CSV and its scale sidecar.
    Gen {
        /// Integer range for the per-day slope coefficient.
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"], allow_negative_numbers = true)]
        zeta: Option<Vec<i64>>,
    },
    /// Train on the two days before the serving day; write checkpoint and history.
    Train {
        /// Replace the ReLU head with the identity.
        #[arg(long)]
        no_monotone_head: bool,
    },
    /// Replay the serving day with MODE and the baselines.
    Eval {
        /// Also write every MODE forecast (large).
        #[arg(long)]
        dump_forecasts: bool,
    },
    /// Train and evaluate at each configured missing rate.
    SweepIrregular,
    /// MODE against the decreasing-data and identity-head ablations.
    Ablate,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ModeError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.generator.seed = seed;
        config.train.seed = seed;
    }
    match &cli.command {
        Command::Gen { zeta: Some(z) } => {
            config.generator.zeta_low = z[0];
            config.generator.zeta_high = z[1];
        }
        Command::Train { no_monotone_head: true } => config.train.head = Head::Identity,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli, config: &ExperimentConfig) -> Result<(), ModeError> {
    match &cli.command {
        Command::Gen { .. } => {
            let path = cmd_gen(config)?;
            println!("wrote {}", path.display());
        }
        Command::Train { .. } => {
            let outcome = cmd_train(config)?;
            let best = &outcome.history[outcome.best_epoch - 1];
            println!(
                "trained {} epochs; best epoch {} (train loss {:.4e}, validation MAPE {:.4})",
                outcome.history.len(),
                outcome.best_epoch,
                best.train_loss,
                best.val_mape
            );
        }
        Command::Eval { dump_forecasts } => {
            let comparison = cmd_eval(config, *dump_forecasts)?;
            println!("{:<12} {:<10} {:>7} {:>10}", "model", "interval", "horizon", "mape");
            for report in comparison.reports() {
                for c in &report.cells {
                    println!("{:<12} {:<10} {:>7} {:>10.4}", report.model, c.interval, c.horizon, c.mean_mape);
                }
            }
            if let Some(lat) = &comparison.mode.report.latency {
                println!("mode latency p50 {:.3e}s p99 {:.3e}s", lat.p50_seconds, lat.p99_seconds);
            }
        }
        Command::SweepIrregular => {
            for r in cmd_irregular_sweep(config)? {
                println!(
                    "{:<5} {:<12} {:<10} {:>4} {:>10.4}",
                    r.missing_rate, r.model, r.interval, r.horizon, r.mean_mape
                );
            }
        }
        Command::Ablate => {
            let ablation = cmd_ablation(config)?;
            for o in ablation.outcomes() {
                let i2 = o.report.cell("Interval2", 120).map_or(f64::NAN, |c| c.mean_mape);
                println!(
                    "{:<6} Interval2 2H MAPE {:>10.4}  decreasing forecasts {}",
                    o.report.model,
                    i2,
                    o.decreasing_forecasts()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME };
            ExitCode::from(code)
        }
    }
}
