use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use subway_ems::assess::Metric;
use subway_ems::config::{ExperimentConfig, Scale};
use subway_ems::pipeline::{Pipeline, PolicyKind};
use subway_ems::Result;

#[derive(Parser)]
#[command(name = "subway-ems", version, about = "Subway station energy management experiments")]
struct Cli {
    /// Experiment config (TOML or JSON); the bundled desk config otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Optimization seed; the assessment seed is this plus one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Scenario counts preset.
    #[arg(long, global = true, value_enum)]
    scale: Option<ScaleArg>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Reference,
    Sdpo,
    Sdpa,
    Mpc,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Reference => PolicyKind::Reference,
            PolicyArg::Sdpo => PolicyKind::Sdpo,
            PolicyArg::Sdpa => PolicyKind::Sdpa,
            PolicyArg::Mpc => PolicyKind::Mpc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    TotalCost,
    MoneyCost,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the optimization and assessment scenario sets.
    GenScenarios,
    /// Fit the log-AR(1) braking model and quantize the offline marginals.
    FitNoise,
    /// Match the reference day to the PM10 targets and scan λ.
    Calibrate,
    /// Backward induction with independent braking marginals.
    OfflineSdpo,
    /// Backward induction on the braking-augmented state.
    OfflineSdpa,
    /// Simulate one assessment scenario.
    Simulate {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        scenario: usize,
    },
    /// Monte Carlo assessment against the reference operation.
    Assess {
        /// Policies to assess (default: mpc, sdpo, sdpa).
        #[arg(long, value_enum, value_delimiter = ',')]
        policies: Vec<PolicyArg>,
    },
    /// Scenario-wise comparison of two assessed policies.
    Compare {
        #[arg(long, value_enum)]
        a: PolicyArg,
        #[arg(long, value_enum)]
        b: PolicyArg,
        #[arg(long, value_enum, default_value = "total-cost")]
        metric: MetricArg,
    },
    /// Write the MPC subproblem at `t0` as an MPS file.
    ExportMilp {
        #[arg(long, default_value_t = 0)]
        t0: usize,
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        scenario: usize,
    },
    /// Compare the Euler scheme with an adaptive integrator.
    ValidateDiscretization,
    /// Render the assessment summary as a table.
    Report,
    /// Print the effective config as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(scale) = cli.scale {
        cfg = cfg.with_scale(match scale {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        });
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| subway_ems::EmsError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let p = Pipeline::new(cfg)?;
    log::info!("config {} -> {}", &p.config_hash()[..12], p.root().display());
    match cli.command {
        Command::GenScenarios => print_json(&p.gen_scenarios()?),
        Command::FitNoise => print_json(&p.fit_noise()?),
        Command::Calibrate => {
            let r = p.calibrate()?;
            print_json(&r)?;
            if r.lambda_scan.selected.is_none() {
                log::warn!("no scanned lambda meets the reference mean PM10");
            }
            Ok(())
        }
        Command::OfflineSdpo => print_json(&p.offline_sdpo()?),
        Command::OfflineSdpa => print_json(&p.offline_sdpa()?),
        Command::Simulate { policy, scenario } => {
            let t = p.simulate(policy.into(), scenario)?;
            println!(
                "{}: total {:.4} €, money {:.4} €, mean PM10 {:.3}, energy drawn {:.3} kWh",
                t.policy, t.total_cost, t.money_cost, t.mean_pm10, t.energy_drawn_kwh
            );
            Ok(())
        }
        Command::Assess { policies } => {
            let kinds: Vec<PolicyKind> = if policies.is_empty() {
                PolicyKind::OPTIMIZED.to_vec()
            } else {
                policies.into_iter().map(Into::into).collect()
            };
            let s = p.assess(&kinds)?;
            print!("{}", subway_ems::pipeline::render_report(&s));
            Ok(())
        }
        Command::Compare { a, b, metric } => {
            let metric = match metric {
                MetricArg::TotalCost => Metric::TotalCost,
                MetricArg::MoneyCost => Metric::MoneyCost,
            };
            let c = p.compare(a.into(), b.into(), metric)?;
            println!(
                "{} cheaper than {} on {} of {} scenarios ({} ties)",
                c.a,
                c.b,
                c.wins,
                c.gaps.len(),
                c.ties
            );
            Ok(())
        }
        Command::ExportMilp { t0, horizon, scenario } => print_json(&p.export_milp(t0, horizon, scenario)?),
        Command::ValidateDiscretization => print_json(&p.validate_discretization()?),
        Command::Report => {
            print!("{}", p.report()?);
            Ok(())
        }
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
