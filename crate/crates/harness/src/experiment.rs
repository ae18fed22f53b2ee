//! Monte Carlo replication engine and method comparison.
//!
//! Replication `r` draws oracle noise from `stream(seed, r)` and anchor samples
//! from `stream(seed, ANCHOR_STREAM | r)`, so results do not depend on how
//! replications are scheduled across threads. Every tau value restarts the
//! noise stream, which pairs runs across tau and across methods.

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use rsmd_core::certificate::{delta, eps_true, CertificateParams};
use rsmd_core::multistage::{run_multistage, stage_schedule, ScheduleParams, StageLog};
use rsmd_core::rng::stream;
use rsmd_core::rsmd::{run, stepsize_constant};
use rsmd_core::truncation::{
    anchor_sample_count, estimate_anchor_gradient, residual_bounds, threshold_tau, threshold_universal,
};
use rsmd_core::{Instance, NoiseKind, RsmdConfig, RunTrace, ThresholdPolicy, TruncationConfig};
use serde::Serialize;

use crate::bounds;
use crate::config::{AnchorConfig, ExperimentConfig, Method, Threshold};
use crate::stats::{mean, quantile, wilson, Z95};

/// High bit marking the anchor-sampling streams.
pub const ANCHOR_STREAM: u64 = 1 << 63;
/// Sampling slack added to every violation budget.
pub const SLACK: f64 = 0.05;

/// A validated config with its instance.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub instance: Instance,
    pub hash: String,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let instance = config.build_instance()?;
        let hash = config.hash();
        Ok(Experiment { config, instance, hash })
    }

    fn upsilon(&self) -> f64 {
        let sigma = self.instance.sigma();
        if sigma > 0.0 {
            self.config.anchor.error_budget() / sigma
        } else {
            0.0
        }
    }

    fn beta(&self, n: usize) -> f64 {
        let g = self.instance.geometry();
        stepsize_constant(self.instance.lipschitz(), self.instance.sigma(), n, g.radius(), g.capacity())
    }

    /// Anchor at the proxy center for confidence `tau`, and its realized dual-norm error.
    fn anchor(&self, tau: f64, lambda: f64, policy: ThresholdPolicy, rng: &mut impl rand::Rng) -> Result<(TruncationConfig, f64)> {
        let inst = &self.instance;
        let center = inst.geometry().center().to_vec();
        let exact = inst.gradient(&center);
        let (gbar, budget) = match self.config.anchor {
            AnchorConfig::Exact => (exact.clone(), 0.0),
            AnchorConfig::Median { upsilon_sigma } => {
                let med = estimate_anchor_gradient(inst, &center, anchor_sample_count(tau), rng)?;
                (med.point, upsilon_sigma)
            }
        };
        let realized = inst.geometry().norm().dual_dist(&gbar, &exact);
        let cfg = TruncationConfig::new(inst.geometry().norm(), center, gbar, budget, lambda, inst.lipschitz(), policy)?;
        Ok((cfg, realized))
    }

    /// Single RSMD or SMD run for `tau` on replication `rep`.
    fn single_run(&self, method: Method, tau: f64, rep: u64, record_residuals: bool) -> Result<(RunTrace, f64)> {
        let inst = &self.instance;
        let cfg = &self.config;
        let n = cfg.iterations;
        let (sigma, m, upsilon) = (inst.sigma(), inst.m(), self.upsilon());
        let mut anchor_rng = stream(cfg.seed, ANCHOR_STREAM | rep);
        let (truncation, anchor_error) = match (method, cfg.threshold) {
            (Method::SmdUntruncated, _) => (TruncationConfig::untruncated(inst.geometry().norm(), inst.dim()), 0.0),
            (_, Threshold::Tau) => {
                let lambda = threshold_tau(sigma, n, tau, m, upsilon)?;
                self.anchor(tau, lambda, ThresholdPolicy::Tau { tau }, &mut anchor_rng)?
            }
            (_, Threshold::Universal) => {
                let lambda = threshold_universal(sigma, n, m, upsilon)?;
                let tmax = cfg.taus.iter().cloned().fold(1.0, f64::max);
                self.anchor(tmax, lambda, ThresholdPolicy::Universal, &mut anchor_rng)?
            }
        };
        let mut rc = RsmdConfig::new(self.beta(n), n, truncation, inst.geometry().center().to_vec());
        if record_residuals {
            rc = rc.with_residuals();
        }
        let trace = run(&rc, inst, &mut stream(cfg.seed, rep))?;
        Ok((trace, anchor_error))
    }

    fn certificate(&self, trace: &RunTrace, tau: f64, t: f64) -> Result<CertificateRecord> {
        let params = CertificateParams::from_instance(&self.instance, self.config.anchor.error_budget());
        let c = delta(trace, &self.instance, tau, t, &params)?;
        Ok(CertificateRecord {
            t,
            eps_hat: c.eps_hat,
            rho_bar: c.rho_bar,
            delta: c.delta,
            eps_true: eps_true(trace, &self.instance, t)?,
            heuristic: c.heuristic,
        })
    }

    fn bound(&self, tau: f64) -> Option<f64> {
        let inst = &self.instance;
        let g = inst.geometry();
        let (l, r, th, s, n) = (inst.lipschitz(), g.radius(), g.capacity(), inst.sigma(), self.config.iterations);
        match self.config.threshold {
            Threshold::Tau => bounds::theorem1(l, r, th, s, n, tau, self.upsilon()).ok(),
            Threshold::Universal => bounds::theorem2(l, r, th, s, n, tau, self.upsilon(), self.config.universal_constant).ok(),
        }
    }

    fn rsmd_outcome(&self, method: Method, tau: f64, rep: u64, keep: bool) -> Result<TauOutcome> {
        let inst = &self.instance;
        let residuals = method == Method::Rsmd;
        let (trace, anchor_error) = self.single_run(method, tau, rep, residuals)?;
        let gap = inst.objective(trace.average())? - inst.fstar();
        let budget = self.config.anchor.error_budget();
        let anchor_ok = anchor_error <= budget * (1.0 + 1e-12) + 1e-12;
        let residual_ok = match trace.residuals() {
            Some(xi) if anchor_ok => {
                let b = residual_bounds(inst.m(), budget, inst.sigma(), trace.lambda());
                let norm = inst.geometry().norm();
                Some(xi.iter().all(|x| norm.dual(x) <= b.per_sample * (1.0 + 1e-12)))
            }
            _ => None,
        };
        let beta = trace.betas()[0];
        Ok(TauOutcome {
            tau,
            gap,
            bound: self.bound(tau),
            lambda: trace.lambda(),
            beta,
            clipped: trace.clip_count(),
            cert_l: Some(self.certificate(&trace, tau, inst.lipschitz())?),
            cert_beta: Some(self.certificate(&trace, tau, beta)?),
            anchor_error,
            anchor_ok,
            residual_ok,
            stages: Vec::new(),
            planned_stages: 0,
            contracted: None,
            traces: if keep { vec![trace] } else { Vec::new() },
        })
    }

    /// Stage plan for `tau`.
    pub fn plan(&self, tau: f64) -> Result<rsmd_core::multistage::StagePlan> {
        let inst = &self.instance;
        let ms = &self.config.multistage;
        let kappa = ms
            .kappa
            .or(inst.kappa())
            .ok_or_else(|| anyhow!("multistage needs a growth constant; set multistage.kappa"))?;
        let norm = inst.geometry().norm();
        let r0 = ms
            .r0
            .unwrap_or_else(|| inst.domain().radius_about(inst.geometry().center(), norm));
        Ok(stage_schedule(ScheduleParams {
            kappa,
            lipschitz: inst.lipschitz(),
            sigma: inst.sigma(),
            tau,
            capacity: inst.geometry().capacity(),
            r0,
            budget: self.config.iterations,
            c1: ms.c1,
            c2: ms.c2,
        })?)
    }

    fn multistage_outcome(&self, tau: f64, rep: u64, keep: bool) -> Result<TauOutcome> {
        let inst = &self.instance;
        let plan = self.plan(tau)?;
        let mut anchor_rng = stream(self.config.seed, ANCHOR_STREAM | rep);
        // the threshold is replaced per stage
        let (anchor, anchor_error) = self.anchor(tau, 1.0, ThresholdPolicy::Tau { tau }, &mut anchor_rng)?;
        let out = run_multistage(inst, &plan, &anchor, keep, &mut stream(self.config.seed, rep))?;
        if let Some(e) = &out.aborted {
            return Err(anyhow!("stage {} failed: {e}", out.log.len() + 1));
        }
        let gap = inst.objective(&out.point)? - inst.fstar();
        let budget = self.config.anchor.error_budget();
        Ok(TauOutcome {
            tau,
            gap,
            bound: None,
            lambda: f64::NAN,
            beta: f64::NAN,
            clipped: out.log.iter().map(|s| s.clipped).sum(),
            cert_l: None,
            cert_beta: None,
            anchor_error,
            anchor_ok: anchor_error <= budget * (1.0 + 1e-12) + 1e-12,
            residual_ok: None,
            contracted: Some(out.all_contracted()),
            planned_stages: plan.stages(),
            stages: out.log,
            traces: out.traces,
        })
    }

    /// All tau values for replication `rep`.
    pub fn replicate(&self, rep: usize) -> Replication {
        let keep = rep < self.config.trace_replications;
        let method = self.config.method;
        let result: Result<Vec<TauOutcome>> = self
            .config
            .taus
            .iter()
            .map(|&tau| match method {
                Method::Multistage => self.multistage_outcome(tau, rep as u64, keep),
                _ => self.rsmd_outcome(method, tau, rep as u64, keep),
            })
            .collect();
        match result {
            Ok(outcomes) => Replication { id: rep, outcomes, error: None },
            Err(e) => Replication { id: rep, outcomes: Vec::new(), error: Some(format!("{e:#}")) },
        }
    }

    /// Runs every replication on `threads` workers (0 picks the rayon default).
    pub fn monte_carlo(&self, threads: usize) -> Result<MonteCarlo> {
        let reps = in_pool(threads, || {
            (0..self.config.replications)
                .into_par_iter()
                .map(|r| self.replicate(r))
                .collect::<Vec<_>>()
        })?;
        let coverage = self.coverage(&reps);
        let expectation = self.expectation(&reps);
        Ok(MonteCarlo { replications: reps, coverage, expectation })
    }

    fn coverage(&self, reps: &[Replication]) -> Vec<CoverageRow> {
        let method = self.config.method;
        let mut rows = Vec::new();
        for (k, &tau) in self.config.taus.iter().enumerate() {
            let outcomes: Vec<Option<&TauOutcome>> = reps.iter().map(|r| r.outcomes.get(k)).collect();
            let q = (-tau).exp();
            // failed replications count as violations
            let tally = |name: &str, budget: f64, asserted: bool, f: &dyn Fn(&TauOutcome) -> Option<bool>| {
                let mut n = 0;
                let mut bad = 0;
                for o in &outcomes {
                    match o {
                        None => {
                            n += 1;
                            bad += 1;
                        }
                        Some(o) => {
                            if let Some(v) = f(o) {
                                n += 1;
                                bad += v as usize;
                            }
                        }
                    }
                }
                CoverageRow::new(name, tau, budget.min(1.0), bad, n, asserted && self.config.assert)
            };
            if method == Method::Multistage {
                let m = outcomes.iter().flatten().map(|o| o.planned_stages).max().unwrap_or(0);
                rows.push(tally("multistage_contraction", 2.0 * m as f64 * q, true, &|o| o.contracted.map(|c| !c)));
                continue;
            }
            let rsmd = method == Method::Rsmd;
            let name = match self.config.threshold {
                Threshold::Tau => "theorem1",
                Threshold::Universal => "theorem2",
            };
            let tau_matched = rsmd && self.config.threshold == Threshold::Tau;
            rows.push(tally(name, 2.0 * q, rsmd, &|o| o.bound.map(|b| o.gap > b)));
            rows.push(tally("certificate", 2.0 * q, tau_matched, &|o| o.cert_l.as_ref().map(|c| o.gap > c.delta)));
            rows.push(tally("sandwich", 4.0 * q, tau_matched, &|o| {
                o.cert_l.as_ref().map(|c| (c.eps_true - c.eps_hat).abs() >= c.rho_bar / self.config.iterations as f64)
            }));
            rows.push(tally("certificate_beta", 2.0 * q, tau_matched, &|o| {
                o.cert_beta.as_ref().map(|c| c.eps_true > c.delta)
            }));
            if rsmd {
                rows.push(tally("residual_bound", 0.0, true, &|o| o.residual_ok.map(|ok| !ok)));
            }
        }
        rows
    }

    /// Mean gap against the in-expectation bound, which needs
    /// `lambda >= max{M, sigma sqrt(N)} + upsilon sigma`.
    fn expectation(&self, reps: &[Replication]) -> Option<Expectation> {
        if self.config.method == Method::Multistage {
            return None;
        }
        let inst = &self.instance;
        let g = inst.geometry();
        let n = self.config.iterations;
        let bound = bounds::corollary1(inst.lipschitz(), g.radius(), g.capacity(), inst.sigma(), n);
        let gaps: Vec<f64> = reps.iter().filter_map(|r| r.outcomes.first().map(|o| o.gap)).collect();
        let applies = self.config.method == Method::SmdUntruncated || self.config.threshold == Threshold::Universal;
        let mean_gap = mean(&gaps);
        let complete = gaps.len() == reps.len();
        Some(Expectation {
            bound,
            mean_gap,
            replications: gaps.len(),
            asserted: applies && self.config.assert,
            passed: complete && mean_gap <= bound,
        })
    }

    /// Paired RSMD / untruncated SMD gaps on shared noise streams.
    pub fn compare(&self, threads: usize) -> Result<Comparison> {
        let tau = self.config.taus[0];
        let rows = in_pool(threads, || {
            (0..self.config.replications)
                .into_par_iter()
                .map(|r| {
                    let gap = |m| -> Result<(f64, usize)> {
                        let (trace, _) = self.single_run(m, tau, r as u64, false)?;
                        Ok((self.instance.objective(trace.average())? - self.instance.fstar(), trace.clip_count()))
                    };
                    match (gap(Method::Rsmd), gap(Method::SmdUntruncated)) {
                        (Ok(a), Ok(b)) => PairedGap { replication: r, rsmd: a.0, smd: b.0, clipped: a.1, error: None },
                        (Err(e), _) | (_, Err(e)) => PairedGap {
                            replication: r,
                            rsmd: f64::NAN,
                            smd: f64::NAN,
                            clipped: 0,
                            error: Some(format!("{e:#}")),
                        },
                    }
                })
                .collect::<Vec<_>>()
        })?;
        let ok: Vec<&PairedGap> = rows.iter().filter(|p| p.error.is_none()).collect();
        let summary = |name: &str, v: Vec<f64>| QuantileRow {
            method: name.to_string(),
            replications: v.len(),
            mean: mean(&v),
            q50: quantile(&v, 0.5),
            q90: quantile(&v, 0.9),
            q99: quantile(&v, 0.99),
        };
        let table = vec![
            summary("rsmd", ok.iter().map(|p| p.rsmd).collect()),
            summary("smd_untruncated", ok.iter().map(|p| p.smd).collect()),
        ];
        // light tails are reported, not asserted
        let asserted = self.config.assert && !matches!(self.instance.noise().kind(), NoiseKind::Gaussian);
        let passed = ok.len() == rows.len() && table[0].q99 <= table[1].q99;
        Ok(Comparison { tau, pairs: rows, table, asserted, passed })
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateRecord {
    pub t: f64,
    pub eps_hat: f64,
    pub rho_bar: f64,
    pub delta: f64,
    pub eps_true: f64,
    pub heuristic: bool,
}

#[derive(Clone, Debug)]
pub struct TauOutcome {
    pub tau: f64,
    /// `F(xhat) - F*`
    pub gap: f64,
    /// High-probability bound for the configured threshold.
    pub bound: Option<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub clipped: usize,
    /// Certificates at `t = L` and `t = beta_bar`.
    pub cert_l: Option<CertificateRecord>,
    pub cert_beta: Option<CertificateRecord>,
    pub anchor_error: f64,
    /// Realized anchor error within the configured budget.
    pub anchor_ok: bool,
    /// Per-sample residual bound held on every iteration; `None` when it does not apply.
    pub residual_ok: Option<bool>,
    pub stages: Vec<StageLog>,
    pub planned_stages: usize,
    pub contracted: Option<bool>,
    pub traces: Vec<RunTrace>,
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub id: usize,
    /// One per tau, in config order; empty on failure.
    pub outcomes: Vec<TauOutcome>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageRow {
    pub bound: String,
    pub tau: f64,
    /// Theoretical violation probability.
    pub budget: f64,
    pub slack: f64,
    pub violations: usize,
    pub replications: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub asserted: bool,
    pub passed: bool,
}

impl CoverageRow {
    fn new(bound: &str, tau: f64, budget: f64, violations: usize, replications: usize, asserted: bool) -> Self {
        let frequency = if replications == 0 { 0.0 } else { violations as f64 / replications as f64 };
        let (lo, hi) = wilson(violations, replications, Z95);
        CoverageRow {
            bound: bound.to_string(),
            tau,
            budget,
            slack: SLACK,
            violations,
            replications,
            frequency,
            wilson_low: lo,
            wilson_high: hi,
            asserted,
            passed: frequency <= budget + SLACK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expectation {
    pub bound: f64,
    pub mean_gap: f64,
    pub replications: usize,
    pub asserted: bool,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct MonteCarlo {
    pub replications: Vec<Replication>,
    pub coverage: Vec<CoverageRow>,
    pub expectation: Option<Expectation>,
}

impl MonteCarlo {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &str)> {
        self.replications.iter().filter_map(|r| r.error.as_deref().map(|e| (r.id, e)))
    }

    /// Every asserted row and check passed.
    pub fn passed(&self) -> bool {
        self.coverage.iter().all(|r| !r.asserted || r.passed)
            && self.expectation.as_ref().is_none_or(|e| !e.asserted || e.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedGap {
    pub replication: usize,
    pub rsmd: f64,
    pub smd: f64,
    /// Truncations in the RSMD run.
    pub clipped: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileRow {
    pub method: String,
    pub replications: usize,
    pub mean: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub tau: f64,
    pub pairs: Vec<PairedGap>,
    pub table: Vec<QuantileRow>,
    pub asserted: bool,
    pub passed: bool,
}
