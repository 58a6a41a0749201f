use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fhnn::config::RunConfig;
use fhnn::evaluation::{EvalReport, GridSpec, SuiteKind, SuiteReport};
use fhnn::model::Variant;
use fhnn::physics::ScenarioKind;
use fhnn::pipeline::Workspace;
use fhnn::Error;

const EXIT_ASSERT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TRAINING: u8 = 3;
const EXIT_MISSING: u8 = 4;

/// Flow-aware hydrodynamic neural networks: generate data, train, evaluate.
///
/// Exit codes: 0 ok, 1 an `assert` check or other runtime failure,
/// 2 invalid config or arguments, 3 training diverged, 4 missing artifact.
#[derive(Parser, Debug)]
#[command(name = "fhnn", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the parent directory of run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the dataset and manifest of the configured scenario.
    Generate,
    /// Train one model variant; writes its checkpoint and epoch log.
    Train {
        /// fhnn, neural_ode, no_added_mass, no_linear_drag, no_flow_field, shallow or relu.
        #[arg(long, default_value = "fhnn")]
        variant: Variant,
    },
    /// Roll a trained model out over the test split and report metrics.
    Eval {
        /// fhnn, neural_ode, no_added_mass, no_linear_drag, no_flow_field, shallow or relu.
        #[arg(long, default_value = "fhnn")]
        variant: Variant,
        /// Comma-separated horizons in seconds (default: evaluation.horizons).
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
    },
    /// Produce a table-style report: vs_node, long_horizon, scenarios or ablation.
    Suite {
        kind: SuiteKind,
        /// Generate and train any model the suite needs that is not on disk.
        #[arg(long)]
        train_missing: bool,
    },
    /// Compare the learned flow field with the true one on a grid.
    Flow {
        /// fhnn, neural_ode, no_added_mass, no_linear_drag, no_flow_field, shallow or relu.
        #[arg(long, default_value = "fhnn")]
        variant: Variant,
        /// Square grid `min:max:n` (default: evaluation.grid).
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Learned vs true hydrodynamic coefficients on test-state probes.
    Params {
        /// fhnn, neural_ode, no_added_mass, no_linear_drag, no_flow_field, shallow or relu.
        #[arg(long, default_value = "fhnn")]
        variant: Variant,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => EXIT_CONFIG,
        Error::Diverged { .. } => EXIT_TRAINING,
        Error::MissingArtifact { .. } => EXIT_MISSING,
        _ => EXIT_ASSERT,
    }
}

fn print_eval(r: &EvalReport) {
    println!("{:>8} {:>11} {:>11} {:>11} {:>11} {:>9} {:>9}", "horizon", "rmse_pos", "rmse_vel", "ade_pos", "fde_pos", "within_eps", "diverged");
    for h in &r.aggregate {
        let m = &h.metrics;
        println!(
            "{:>8} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>9.3} {:>9}",
            h.horizon, m.rmse_pos, m.rmse_vel, m.ade_pos, m.fde_pos, m.within_eps_ratio, h.n_diverged
        );
    }
}

fn print_suite(r: &SuiteReport) {
    println!("{}", r.kind.title());
    print!("{}", r.to_table());
}

fn run(cli: Cli) -> Result<Vec<String>, Error> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.global.out {
        cfg.output_dir = o;
    }
    if let Command::Eval { horizons: Some(h), .. } = &cli.command {
        cfg.evaluation.horizons = h.clone();
    }
    if let Command::Flow { grid: Some(g), .. } = &cli.command {
        cfg.evaluation.grid = *g;
    }
    let ws = Workspace::open(cfg)?;
    let main: ScenarioKind = ws.main_scenario();
    match cli.command {
        Command::Generate => {
            let ds = ws.generate(main)?;
            println!("wrote {} trajectories ({}) to {}", ds.trajectories.len(), main, ws.root().display());
            Ok(vec![])
        }
        Command::Train { variant } => {
            eprintln!("training {variant} on {main} ({} epochs)", ws.config().training.epochs);
            let s = ws.train(main, variant)?;
            println!(
                "{variant}: best epoch {} (val {:.4e}), train loss {:.4e} -> {:.4e} ({:.1}x)",
                s.best_epoch,
                s.best_val_total,
                s.first_total,
                s.final_total,
                s.loss_reduction()
            );
            println!("checkpoint {}", ws.checkpoint_path(main, variant).display());
            Ok(vec![])
        }
        Command::Eval { variant, .. } => {
            let horizons = ws.config().evaluation.horizons.clone();
            let r = ws.eval(variant, &horizons)?;
            print_eval(&r);
            Ok(ws.check_eval(&r))
        }
        Command::Suite { kind, train_missing } => {
            if train_missing {
                for (k, v) in ws.suite_models(kind) {
                    if !ws.has_model(k, v) {
                        eprintln!("training {v} on {k}");
                    }
                }
                ws.prepare_suite(kind)?;
            }
            let r = ws.suite(kind)?;
            print_suite(&r);
            Ok(ws.check_suite(&r))
        }
        Command::Flow { variant, .. } => {
            let grid = ws.config().evaluation.grid;
            let fg = ws.flow(variant, &grid)?;
            let s = &fg.summary;
            println!(
                "annulus r in [{}, {}] ({} points): median angle error {:.3} deg, median speed error {:.3}%, max |div u| {:.3e}",
                s.annulus.0,
                s.annulus.1,
                s.n_annulus,
                s.median_angle_error_deg,
                100.0 * s.median_speed_rel_error,
                s.max_abs_divergence
            );
            Ok(ws.check_flow(&fg))
        }
        Command::Params { variant } => {
            let r = ws.params(variant)?;
            println!("{:>6} {:>11} {:>11} {:>11} {:>9}", "coeff", "learned", "spread", "true", "rel_err");
            for c in &r.coefficients {
                println!("{:>6} {:>11.4} {:>11.4} {:>11.4} {:>9.3}", c.name, c.learned_mean, c.learned_std, c.true_mean, c.rel_error);
            }
            println!("{} probes, {} outside the training annulus", r.n_probes, r.n_extrapolated);
            Ok(vec![])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(fails) if fails.is_empty() => ExitCode::SUCCESS,
        Ok(fails) => {
            for f in &fails {
                eprintln!("assert failed: {f}");
            }
            ExitCode::from(EXIT_ASSERT)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
