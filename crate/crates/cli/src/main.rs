use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use qosscale::harness::report::{load_run, write_json, SavedRun};
use qosscale::harness::{aggregate, load_models, render_comparison, render_report, run_profile, run_repeats, save_models, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "qosscale", version, about = "Recovery-aware autoscaling workbench")]
struct Cli {
    /// Overrides `sim.seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregate {
    Median,
}

#[derive(Subcommand)]
enum Command {
    /// Profile the configured job and fit the models.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scaling experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `profile`; needed for phoebe and twres.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: u32,
        #[arg(long, value_enum, default_value = "median")]
        aggregate: Aggregate,
    },
    /// Compare finished runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 120.0)]
        percentile_window_s: f64,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Profile { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let models = run_profile(&cfg)?;
            save_models(&models, &out)?;
            for (s, t) in &models.dataset().tmax_points {
                println!("scaleout {s:>3}  tmax {t}");
            }
            info!("models written to {}", out.display());
        }
        Command::Run { config, models, out, repeats, aggregate: Aggregate::Median } => {
            let cfg = load_config(&config, cli.seed)?;
            let models = models.map(|dir| load_models(&dir, cfg.models.clone())).transpose()?;
            let runs = run_repeats(&cfg, models.as_ref(), repeats)?;
            if runs.len() == 1 {
                render_report(&runs[0], &out)?;
            } else {
                for r in &runs {
                    render_report(r, &out.join(format!("seed-{}", r.seed)))?;
                }
                let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
                if let Some(agg) = aggregate(&reports) {
                    write_json(&out.join("aggregate.json"), &agg)?;
                }
            }
            for r in &runs {
                let rep = &r.report;
                println!(
                    "{} seed {}: cost {} reconfigs {} not recovered {}/{}",
                    rep.policy,
                    rep.seed,
                    rep.cumulative_cost,
                    rep.reconfig_count,
                    rep.not_recovered_count,
                    rep.recovery_table.len()
                );
            }
        }
        Command::Report { runs, out, percentile_window_s } => {
            let loaded: Vec<SavedRun> = runs.iter().map(|d| load_run(d, percentile_window_s)).collect::<Result<_, _>>()?;
            for row in render_comparison(&loaded, &out)? {
                println!(
                    "{:<12} seed {:<4} cost {:>12.0} normalized {:>6} reconfigs {:>3} not recovered {}",
                    row.policy,
                    row.seed,
                    row.cumulative_cost,
                    row.normalized_cost.map_or("-".into(), |c| format!("{c:.3}")),
                    row.reconfig_count,
                    row.not_recovered_count
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
