use clap::{Args, Parser, Subcommand, ValueEnum};
use competing_sir::commands::{
    cmd_observability, cmd_observe, cmd_simulate, cmd_stability, cmd_sweep, cmd_validate,
    resolve_out_dir, RegimeArg, SweepParam,
};
use std::path::PathBuf;

/// Competing multi-virus SIR epidemics: simulate, certify eradication, test
/// observability, and estimate hidden infection levels.
#[derive(Parser)]
#[command(name = "competing-sir", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file path, or "europe" for the bundled scenario.
    scenario: String,
    /// Override the sampling step h.
    #[arg(long = "h", value_name = "REAL")]
    step_size: Option<f64>,
    /// Artifact directory (default: $COMPETING_SIR_OUT or ./artifacts).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check every model assumption and report violations.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and write trajectory and output CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override the number of steps.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Per-virus eradication certificates.
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Rank test of the observability matrix.
    Observability {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = RegimeFlag::DiseaseFree)]
        regime: RegimeFlag,
        /// Window start for the trajectory regime.
        #[arg(long, required_if_eq("regime", "trajectory"))]
        t: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run the observer against a simulated truth and record errors.
    Observe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Grid search over the observer gain or the sampling step.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: ParamFlag,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum RegimeFlag {
    DiseaseFree,
    Trajectory,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamFlag {
    L,
    H,
}

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let result = match cli.command {
        Command::Validate { common } => {
            cmd_validate(&mut stdout, &common.scenario, common.step_size)
        }
        Command::Simulate { common, horizon } => {
            let out_dir = resolve_out_dir(common.out);
            cmd_simulate(
                &mut stdout,
                &common.scenario,
                common.step_size,
                horizon,
                &out_dir,
            )
        }
        Command::Stability { common } => {
            let out_dir = resolve_out_dir(common.out);
            cmd_stability(&mut stdout, &common.scenario, common.step_size, &out_dir)
        }
        Command::Observability {
            common,
            regime,
            t,
            horizon,
        } => {
            let out_dir = resolve_out_dir(common.out);
            let regime = match regime {
                RegimeFlag::DiseaseFree => RegimeArg::DiseaseFree,
                RegimeFlag::Trajectory => RegimeArg::Trajectory {
                    t: t.expect("clap enforces --t for the trajectory regime"),
                },
            };
            cmd_observability(
                &mut stdout,
                &common.scenario,
                common.step_size,
                horizon,
                regime,
                &out_dir,
            )
        }
        Command::Observe { common, horizon } => {
            let out_dir = resolve_out_dir(common.out);
            cmd_observe(
                &mut stdout,
                &common.scenario,
                common.step_size,
                horizon,
                &out_dir,
            )
        }
        Command::Sweep {
            common,
            param,
            from,
            to,
            steps,
            horizon,
        } => {
            let out_dir = resolve_out_dir(common.out);
            let param = match param {
                ParamFlag::L => SweepParam::Gain,
                ParamFlag::H => SweepParam::StepSize,
            };
            cmd_sweep(
                &mut stdout,
                &common.scenario,
                param,
                from,
                to,
                steps,
                horizon,
                &out_dir,
            )
        }
    };

    if let Err(error) = result {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
