//! Restart scheme for objectives with quadratic growth
//! `F(x) - F* >= kappa/2 dist(x, X*)^2`.
//!
//! Stage `k` runs RSMD on `X ∩ {||x - y_{k-1}|| <= r_{k-1}}` from `y_{k-1}`
//! for `N_k` steps and returns the average `y_k`, with `r_k^2 = 2^{-k} r_0^2`.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::problems::Instance;
use crate::rsmd::{run, RsmdConfig, RunTrace};
use crate::truncation::{ThresholdPolicy, TruncationConfig};

pub const DEFAULT_C1: f64 = 46.0;
pub const DEFAULT_C2: f64 = 62.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub kappa: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    pub tau: f64,
    pub capacity: f64,
    pub r0: f64,
    /// Total budget `N`.
    pub budget: usize,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    /// `r_0, ..., r_m`
    pub radii: Vec<f64>,
    /// `N_1, ..., N_m`
    pub budgets: Vec<usize>,
    pub params: ScheduleParams,
}

impl StagePlan {
    /// `m(N)`
    pub fn stages(&self) -> usize {
        self.budgets.len()
    }

    pub fn used_budget(&self) -> usize {
        self.budgets.iter().sum()
    }
}

/// `r_k = 2^{-k/2} r_0`
pub fn stage_radius(r0: f64, k: usize) -> f64 {
    r0 * (0.5f64).powf(0.5 * k as f64)
}

/// `N_bar_k = max{4 C1 L (tau v Theta) / kappa, 16 C2 sigma^2 (tau v Theta) / (kappa^2 r_{k-1}^2)}`
pub fn stage_budget_bar(p: &ScheduleParams, k: usize) -> f64 {
    let tv = p.tau.max(p.capacity);
    let r = stage_radius(p.r0, k - 1);
    (4.0 * p.c1 * p.lipschitz * tv / p.kappa)
        .max(16.0 * p.c2 * p.sigma * p.sigma * tv / (p.kappa * p.kappa * r * r))
}

/// Smallest target radius `r_k / r_0` scheduled. Below it the stage balls
/// approach the domain tolerances and contraction can no longer be resolved
/// in double precision.
pub const MIN_RADIUS_RATIO: f64 = 1e-7;

/// Stage budgets `N_k = ceil(N_bar_k)` for `k = 1..m(N)`, with
/// `m(N) = max{k : N_1 + ... + N_k <= N}` (possibly 0), and at most as many
/// stages as keep `r_k >= MIN_RADIUS_RATIO r_0`. Leftover budget is not used.
pub fn stage_schedule(p: ScheduleParams) -> Result<StagePlan> {
    for (name, v) in [
        ("kappa", p.kappa),
        ("lipschitz", p.lipschitz),
        ("r0", p.r0),
        ("tau", p.tau),
        ("capacity", p.capacity),
        ("c1", p.c1),
        ("c2", p.c2),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
        return Err(Error::invalid("sigma", "must be finite and nonnegative"));
    }
    let mut budgets = Vec::new();
    let mut used = 0usize;
    let mut k = 1;
    loop {
        let nk = stage_budget_bar(&p, k).ceil();
        if !(nk <= (p.budget - used) as f64) || stage_radius(p.r0, k) < MIN_RADIUS_RATIO * p.r0 {
            break;
        }
        let nk = (nk as usize).max(1);
        used += nk;
        budgets.push(nk);
        k += 1;
    }
    let radii = (0..=budgets.len()).map(|k| stage_radius(p.r0, k)).collect();
    Ok(StagePlan {
        radii,
        budgets,
        params: p,
    })
}

/// Per-stage record.
#[derive(Clone, Debug, PartialEq)]
pub struct StageLog {
    pub stage: usize,
    pub budget: usize,
    /// `r_{k-1}`
    pub radius: f64,
    pub lambda: f64,
    pub beta: f64,
    /// `F(y_k) - F*`
    pub gap: f64,
    /// `||y_k - x*||`
    pub distance: f64,
    pub clipped: usize,
}

impl StageLog {
    /// `||y_k - x*||^2 <= r_k^2`
    pub fn contracted(&self) -> bool {
        self.distance * self.distance <= 0.5 * self.radius * self.radius
    }
}

#[derive(Clone, Debug)]
pub struct MultistageOutcome {
    /// `y_m`, or `y_0` when no stage fits the budget.
    pub point: Vec<f64>,
    pub log: Vec<StageLog>,
    /// Stage traces, when requested.
    pub traces: Vec<RunTrace>,
    /// Failure that stopped the scheme early; `point` and `log` are partial.
    pub aborted: Option<Error>,
}

impl MultistageOutcome {
    pub fn all_contracted(&self) -> bool {
        self.aborted.is_none() && self.log.iter().all(StageLog::contracted)
    }
}

/// Stage threshold `max{sigma sqrt(N_k / tau), L r_{k-1}} + upsilon sigma`.
pub fn stage_lambda(sigma: f64, nk: usize, tau: f64, lipschitz: f64, radius: f64, anchor_error: f64) -> f64 {
    (sigma * (nk as f64 / tau).sqrt()).max(lipschitz * radius) + anchor_error
}

/// Stage step `max{2L, sigma sqrt(N_k) / (r_{k-1} sqrt(Theta))}`.
pub fn stage_beta(lipschitz: f64, sigma: f64, nk: usize, radius: f64, capacity: f64) -> f64 {
    crate::rsmd::stepsize_constant(lipschitz, sigma, nk, radius, capacity)
}

/// Runs the plan from the instance's proxy center. The anchor of `anchor`
/// (point, gradient, error budget) is shared by all stages; its threshold is
/// replaced per stage.
pub fn run_multistage<R: Rng + ?Sized>(
    instance: &Instance,
    plan: &StagePlan,
    anchor: &TruncationConfig,
    keep_traces: bool,
    rng: &mut R,
) -> Result<MultistageOutcome> {
    let p = &plan.params;
    let sigma = instance.sigma();
    let lipschitz = instance.lipschitz();
    let capacity = instance.geometry().capacity();
    let norm = instance.geometry().norm();
    let mut y = instance.geometry().center().to_vec();
    instance.domain().check_input(&y)?;
    let mut log = Vec::with_capacity(plan.stages());
    let mut traces = Vec::new();
    for (idx, &nk) in plan.budgets.iter().enumerate() {
        let k = idx + 1;
        let radius = plan.radii[k - 1];
        let lambda = stage_lambda(sigma, nk, p.tau, lipschitz, radius, anchor.anchor_error());
        let beta = stage_beta(lipschitz, sigma, nk, radius, capacity);
        let stage = instance
            .localized(&y, radius)
            .and_then(|local| {
                let truncation = anchor.with_lambda(lambda, ThresholdPolicy::Tau { tau: p.tau })?;
                let cfg = RsmdConfig::new(beta, nk, truncation, y.clone());
                run(&cfg, &local, rng)
            });
        let trace = match stage {
            Ok(t) => t,
            Err(e) => {
                return Ok(MultistageOutcome {
                    point: y,
                    log,
                    traces,
                    aborted: Some(e),
                })
            }
        };
        y = trace.average().to_vec();
        log.push(StageLog {
            stage: k,
            budget: nk,
            radius,
            lambda,
            beta,
            gap: instance.objective_unchecked(&y) - instance.fstar(),
            distance: norm.dist(&y, instance.xstar()),
            clipped: trace.clip_count(),
        });
        if keep_traces {
            traces.push(trace);
        }
    }
    Ok(MultistageOutcome {
        point: y,
        log,
        traces,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use alloc::vec;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(sigma: f64, budget: usize) -> ScheduleParams {
        ScheduleParams {
            kappa: 1.0,
            lipschitz: 1.0,
            sigma,
            tau: 1.0,
            capacity: 0.5,
            r0: 1.0,
            budget,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }

    #[test]
    fn schedule_examples() {
        let plan = stage_schedule(unit(1.0, 992)).unwrap();
        assert_eq!(plan.budgets, vec![992]);
        assert_eq!(stage_budget_bar(&unit(1.0, 992), 1), 992.0);
        assert_eq!(stage_schedule(unit(1.0, 991)).unwrap().stages(), 0);

        let plan = stage_schedule(unit(0.0, 1000)).unwrap();
        assert_eq!(plan.budgets, vec![184; 5]);
        assert_abs_diff_eq!(stage_radius(4.0, 3), 2f64.sqrt(), epsilon = 1e-15);

        // 2^{-23} >= 1e-7 > 2^{-23.5}
        let plan = stage_schedule(unit(0.0, 1_000_000)).unwrap();
        assert_eq!(plan.stages(), 46);
        assert!(*plan.radii.last().unwrap() >= MIN_RADIUS_RATIO);
    }

    #[test]
    fn budgets_grow_with_shrinking_radius() {
        let plan = stage_schedule(unit(1.0, 100_000)).unwrap();
        assert!(plan.used_budget() <= 100_000);
        assert!(plan.budgets.windows(2).all(|w| w[1] >= w[0]));
        assert!(plan.radii.windows(2).all(|w| w[1] < w[0]));
    }
}
