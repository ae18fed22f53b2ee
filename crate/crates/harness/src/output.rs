//! Reports and CSV exports. Every file carries the config hash; every JSON
//! document carries `schema_version`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rsmd_core::{Instance, RunTrace};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{Comparison, CoverageRow, Expectation, Experiment, MonteCarlo, QuantileRow};
use crate::stats::{mean, quantile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct InstanceSummary {
    dim: usize,
    geometry: String,
    lipschitz: f64,
    m: f64,
    radius: f64,
    capacity: f64,
    sigma: f64,
    noise_scale: f64,
    fstar: f64,
    kappa: Option<f64>,
}

impl InstanceSummary {
    fn of(inst: &Instance) -> Self {
        let g = inst.geometry();
        InstanceSummary {
            dim: inst.dim(),
            geometry: format!("{:?}", g.kind()).to_lowercase(),
            lipschitz: inst.lipschitz(),
            m: inst.m(),
            radius: g.radius(),
            capacity: g.capacity(),
            sigma: inst.sigma(),
            noise_scale: inst.noise().scale(),
            fstar: inst.fstar(),
            kappa: inst.kappa(),
        }
    }
}

#[derive(Serialize)]
struct TauSummary {
    tau: f64,
    replications: usize,
    mean_gap: f64,
    median_gap: f64,
    q90_gap: f64,
    max_gap: f64,
    mean_clipped: f64,
    anchor_within_budget: f64,
}

#[derive(Serialize)]
struct Failure<'a> {
    replication: usize,
    error: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    config_hash: &'a str,
    command: &'static str,
    config: &'a ExperimentConfig,
    instance: InstanceSummary,
    replications: usize,
    failures: Vec<Failure<'a>>,
    summary: Vec<TauSummary>,
    coverage: &'a [CoverageRow],
    expectation: &'a Option<Expectation>,
    passed: bool,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    schema_version: u32,
    config_hash: &'a str,
    command: &'static str,
    config: &'a ExperimentConfig,
    instance: InstanceSummary,
    tau: f64,
    table: &'a [QuantileRow],
    failures: Vec<Failure<'a>>,
    asserted: bool,
    passed: bool,
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    schema_version: u32,
    config_hash: &'a str,
    replication: usize,
    tau: f64,
    stage: usize,
    iterations: usize,
    beta: f64,
    lambda: f64,
    clipped: usize,
    bregman_sum: f64,
    gap: f64,
    average: &'a [f64],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes `report.json`, `coverage.csv`, `certificates.csv`, `stages.csv`
/// (multistage only) and `traces/`. Returns the written paths.
pub fn write_run(dir: &Path, exp: &Experiment, mc: &MonteCarlo) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let hash = exp.hash.as_str();
    let mut written = Vec::new();

    let summary = exp
        .config
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let outs: Vec<_> = mc.replications.iter().filter_map(|r| r.outcomes.get(k)).collect();
            let gaps: Vec<f64> = outs.iter().map(|o| o.gap).collect();
            let frac = |f: &dyn Fn(&&crate::experiment::TauOutcome) -> bool| {
                outs.iter().filter(|o| f(o)).count() as f64 / outs.len().max(1) as f64
            };
            TauSummary {
                tau,
                replications: outs.len(),
                mean_gap: mean(&gaps),
                median_gap: quantile(&gaps, 0.5),
                q90_gap: quantile(&gaps, 0.9),
                max_gap: quantile(&gaps, 1.0),
                mean_clipped: mean(&outs.iter().map(|o| o.clipped as f64).collect::<Vec<_>>()),
                anchor_within_budget: frac(&|o| o.anchor_ok),
            }
        })
        .collect();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        command: "run",
        config: &exp.config,
        instance: InstanceSummary::of(&exp.instance),
        replications: mc.replications.len(),
        failures: mc.failures().map(|(replication, error)| Failure { replication, error }).collect(),
        summary,
        coverage: &mc.coverage,
        expectation: &mc.expectation,
        passed: mc.passed(),
    };
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    written.push(path);

    let path = dir.join("coverage.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "config_hash", "bound", "tau", "budget", "slack", "violations", "replications", "frequency",
        "wilson_low", "wilson_high", "asserted", "passed",
    ])?;
    for r in &mc.coverage {
        w.serialize((
            hash, &r.bound, r.tau, r.budget, r.slack, r.violations, r.replications, r.frequency,
            r.wilson_low, r.wilson_high, r.asserted, r.passed,
        ))?;
    }
    w.flush()?;
    written.push(path);

    let multistage = exp.config.method == crate::config::Method::Multistage;
    if !multistage {
        let path = dir.join("certificates.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "config_hash", "replication", "tau", "t", "eps_hat", "rho_bar_over_n", "delta", "gap", "violated",
            "heuristic",
        ])?;
        let n = exp.config.iterations as f64;
        for rep in &mc.replications {
            for o in &rep.outcomes {
                for c in [&o.cert_l, &o.cert_beta].into_iter().flatten() {
                    w.serialize((
                        hash, rep.id, o.tau, c.t, c.eps_hat, c.rho_bar / n, c.delta, o.gap, o.gap > c.delta,
                        c.heuristic,
                    ))?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    } else {
        let path = dir.join("stages.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "config_hash", "replication", "tau", "stage", "budget", "radius", "lambda", "beta", "gap", "distance",
            "contracted",
        ])?;
        for rep in &mc.replications {
            for o in &rep.outcomes {
                for s in &o.stages {
                    w.serialize((
                        hash, rep.id, o.tau, s.stage, s.budget, s.radius, s.lambda, s.beta, s.gap, s.distance,
                        s.contracted(),
                    ))?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }

    let traces = dir.join("traces");
    let kept = mc.replications.iter().any(|r| r.outcomes.iter().any(|o| !o.traces.is_empty()));
    if kept {
        fs::create_dir_all(&traces)?;
    }
    for rep in &mc.replications {
        for o in &rep.outcomes {
            for (s, trace) in o.traces.iter().enumerate() {
                let stage = if multistage { s + 1 } else { 0 };
                let stem = if multistage {
                    format!("rep{}_tau{}_stage{}", rep.id, o.tau, stage)
                } else {
                    format!("rep{}_tau{}", rep.id, o.tau)
                };
                let csv_path = traces.join(format!("{stem}.csv"));
                write_trace(&csv_path, hash, &exp.instance, trace)?;
                written.push(csv_path);
                let json_path = traces.join(format!("{stem}.json"));
                write_json(
                    &json_path,
                    &TraceSummary {
                        schema_version: SCHEMA_VERSION,
                        config_hash: hash,
                        replication: rep.id,
                        tau: o.tau,
                        stage,
                        iterations: trace.len(),
                        beta: trace.betas().first().copied().unwrap_or(f64::NAN),
                        lambda: trace.lambda(),
                        clipped: trace.clip_count(),
                        bregman_sum: trace.bregman_sum(),
                        gap: exp.instance.objective_unchecked(trace.average()) - exp.instance.fstar(),
                        average: trace.average(),
                    },
                )?;
                written.push(json_path);
            }
        }
    }
    Ok(written)
}

/// One row per iterate `x_0..x_N`: step, clip flag and Bregman increment of the
/// step that produced it, objective gap and coordinates.
pub fn write_trace(path: &Path, hash: &str, inst: &Instance, trace: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    let n = inst.dim();
    let mut header: Vec<String> = ["config_hash", "i", "beta", "clipped", "bregman", "gap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (i, x) in trace.points().iter().enumerate() {
        let (beta, clipped, bregman) = if i == 0 {
            (String::new(), String::new(), String::new())
        } else {
            (
                trace.betas()[i - 1].to_string(),
                trace.clipped()[i - 1].to_string(),
                trace.bregman()[i - 1].to_string(),
            )
        };
        let mut row = vec![
            hash.to_string(),
            i.to_string(),
            beta,
            clipped,
            bregman,
            (inst.objective_unchecked(x) - inst.fstar()).to_string(),
        ];
        row.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `compare.json`, `comparison.csv` and `paired_gaps.csv`.
pub fn write_compare(dir: &Path, exp: &Experiment, cmp: &Comparison) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let hash = exp.hash.as_str();
    let mut written = Vec::new();
    let report = CompareReport {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        command: "compare",
        config: &exp.config,
        instance: InstanceSummary::of(&exp.instance),
        tau: cmp.tau,
        table: &cmp.table,
        failures: cmp
            .pairs
            .iter()
            .filter_map(|p| p.error.as_deref().map(|error| Failure { replication: p.replication, error }))
            .collect(),
        asserted: cmp.asserted,
        passed: cmp.passed,
    };
    let path = dir.join("compare.json");
    write_json(&path, &report)?;
    written.push(path);

    let path = dir.join("comparison.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["config_hash", "method", "replications", "mean", "q50", "q90", "q99"])?;
    for r in &cmp.table {
        w.serialize((hash, &r.method, r.replications, r.mean, r.q50, r.q90, r.q99))?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("paired_gaps.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["config_hash", "replication", "rsmd_gap", "smd_gap", "rsmd_clipped"])?;
    for p in &cmp.pairs {
        w.serialize((hash, p.replication, p.rsmd, p.smd, p.clipped))?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

/// JSON for the `bounds` subcommand.
pub fn bounds_json(inputs: &crate::bounds::BoundInputs) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a> {
        schema_version: u32,
        inputs: &'a crate::bounds::BoundInputs,
        bounds: crate::bounds::BoundValues,
    }
    Ok(serde_json::to_string_pretty(&Out {
        schema_version: SCHEMA_VERSION,
        inputs,
        bounds: crate::bounds::evaluate(inputs),
    })?)
}
