use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rsmd_harness::bounds::BoundInputs;
use rsmd_harness::{output, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rsmd", version, about = "Robust stochastic mirror descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo coverage study for a config file (JSON or TOML).
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Evaluate the closed-form bounds, e.g. `L=1 R=1 Theta=0.5 sigma=1 N=100 tau=2`.
    /// Optional keys: `upsilon` (default 0) and `C` (default 62).
    Bounds { params: Vec<String> },
    /// Paired RSMD vs untruncated SMD gap quantiles on shared noise.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Defaults to the config's `out_dir`, then `./out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn load(path: &Path, flags: &Flags) -> Result<(Experiment, PathBuf)> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = flags.reps {
        cfg.replications = reps;
        cfg.trace_replications = cfg.trace_replications.min(reps);
    }
    let dir = flags
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((Experiment::new(cfg)?, dir))
}

fn parse_bounds(params: &[String]) -> Result<BoundInputs> {
    let mut p = BoundInputs {
        lipschitz: f64::NAN,
        radius: f64::NAN,
        capacity: f64::NAN,
        sigma: f64::NAN,
        iterations: 0,
        tau: 1.0,
        upsilon: 0.0,
        universal_constant: rsmd_core::multistage::DEFAULT_C2,
    };
    for kv in params {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected key=value, got {kv:?}"))?;
        let num = || v.parse::<f64>().with_context(|| format!("{k}: not a number: {v:?}"));
        match k {
            "L" => p.lipschitz = num()?,
            "R" => p.radius = num()?,
            "Theta" | "theta" => p.capacity = num()?,
            "sigma" => p.sigma = num()?,
            "N" => p.iterations = v.parse().with_context(|| format!("N: not a count: {v:?}"))?,
            "tau" => p.tau = num()?,
            "upsilon" => p.upsilon = num()?,
            "C" => p.universal_constant = num()?,
            _ => bail!("unknown parameter {k:?}"),
        }
    }
    for (name, v) in [("L", p.lipschitz), ("R", p.radius), ("Theta", p.capacity), ("sigma", p.sigma)] {
        if !(v.is_finite() && v >= 0.0) {
            bail!("{name} is required and must be nonnegative");
        }
    }
    if p.iterations == 0 {
        bail!("N is required and must be positive");
    }
    Ok(p)
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, flags } => {
            let (exp, dir) = load(&config, &flags)?;
            let mc = exp.monte_carlo(flags.threads)?;
            output::write_run(&dir, &exp, &mc)?;
            for r in &mc.coverage {
                println!(
                    "{:<22} tau={:<5} freq={:.4} budget={:.4}{} {}",
                    r.bound,
                    r.tau,
                    r.frequency,
                    r.budget,
                    if r.asserted { "" } else { " (report only)" },
                    if r.passed { "PASS" } else { "FAIL" }
                );
            }
            if let Some(e) = &mc.expectation {
                println!(
                    "expectation            mean_gap={:.4e} bound={:.4e}{} {}",
                    e.mean_gap,
                    e.bound,
                    if e.asserted { "" } else { " (report only)" },
                    if e.passed { "PASS" } else { "FAIL" }
                );
            }
            let failures = mc.failures().count();
            if failures > 0 {
                eprintln!("{failures} replication(s) failed; see report.json");
            }
            println!("config {} -> {}", exp.hash, dir.display());
            Ok(mc.passed())
        }
        Command::Bounds { params } => {
            println!("{}", output::bounds_json(&parse_bounds(&params)?)?);
            Ok(true)
        }
        Command::Compare { config, flags } => {
            let (exp, dir) = load(&config, &flags)?;
            let cmp = exp.compare(flags.threads)?;
            output::write_compare(&dir, &exp, &cmp)?;
            for r in &cmp.table {
                println!("{:<16} q50={:.4e} q90={:.4e} q99={:.4e}", r.method, r.q50, r.q90, r.q99);
            }
            println!("config {} -> {}", exp.hash, dir.display());
            Ok(!cmp.asserted || cmp.passed)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
