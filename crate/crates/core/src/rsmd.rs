//! Robust stochastic mirror descent: the recursion
//! `x_i = Prox_{beta_{i-1}, x_{i-1}}(y_i)` with truncated gradients `y_i`,
//! the `1/beta`-weighted average `xhat_N`, and the per-run quantities used to
//! audit the analysis (the gap functional `eps(x^N, z)`, the auxiliary
//! sequence `z_i`, and the chain of upper bounds on the weighted gap).

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{composite_prox, linear_min, CompositePenalty};
use crate::linalg;
use crate::problems::Instance;
use crate::truncation::{truncate, ThresholdPolicy, TruncationConfig};

/// `beta_bar = max{2L, sigma sqrt(N) / (R sqrt(Theta))}`.
pub fn stepsize_constant(lipschitz: f64, sigma: f64, n: usize, radius: f64, capacity: f64) -> f64 {
    let noise = sigma * (n as f64).sqrt() / (radius * capacity.sqrt());
    (2.0 * lipschitz).max(if noise.is_nan() { 0.0 } else { noise })
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepSizes {
    Constant(f64),
    /// `beta_0, ..., beta_{N-1}`
    Schedule(Vec<f64>),
}

impl StepSizes {
    fn get(&self, i: usize) -> f64 {
        match self {
            StepSizes::Constant(b) => *b,
            StepSizes::Schedule(v) => v[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RsmdConfig {
    pub steps: StepSizes,
    pub iterations: usize,
    pub truncation: TruncationConfig,
    pub start: Vec<f64>,
    /// Record `xi_i = y_i - grad phi(x_{i-1})`. Queries the true gradient.
    pub record_residuals: bool,
}

impl RsmdConfig {
    pub fn new(beta: f64, iterations: usize, truncation: TruncationConfig, start: Vec<f64>) -> Self {
        RsmdConfig {
            steps: StepSizes::Constant(beta),
            iterations,
            truncation,
            start,
            record_residuals: false,
        }
    }

    pub fn with_residuals(mut self) -> Self {
        self.record_residuals = true;
        self
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let n = instance.dim();
        check_dim(n, self.start.len())?;
        check_dim(n, self.truncation.dim())?;
        instance.domain().check_input(&self.start)?;
        let two_l = 2.0 * instance.lipschitz();
        let check = |b: f64| -> Result<()> {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid("beta", "must be positive and finite"));
            }
            if b < two_l {
                return Err(Error::invalid("beta", "must be at least 2L"));
            }
            Ok(())
        };
        match &self.steps {
            StepSizes::Constant(b) => check(*b),
            StepSizes::Schedule(v) => {
                check_dim(self.iterations, v.len())?;
                v.iter().try_for_each(|&b| check(b))
            }
        }
    }
}

/// Result of one recursion step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub clipped: bool,
    /// `V_{x_prev}(x)`
    pub bregman: f64,
    pub residual: Option<Vec<f64>>,
}

/// One RSMD step from `x_prev` with step parameter `beta`.
pub fn step<R: Rng + ?Sized>(
    instance: &Instance,
    truncation: &TruncationConfig,
    x_prev: &[f64],
    beta: f64,
    record_residual: bool,
    rng: &mut R,
) -> Result<Step> {
    let g = instance.sample_gradient(x_prev, rng);
    let (y, clipped) = truncate(&g, truncation, x_prev)?;
    let x = composite_prox(
        instance.geometry(),
        instance.domain(),
        instance.penalty(),
        x_prev,
        &y,
        beta,
    )?;
    let bregman = instance.geometry().bregman_unchecked(x_prev, &x);
    let residual = record_residual.then(|| linalg::sub(&y, &instance.gradient(x_prev)));
    Ok(Step {
        x,
        y,
        clipped,
        bregman,
        residual,
    })
}

/// Complete record of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    points: Vec<Vec<f64>>,
    gradients: Vec<Vec<f64>>,
    clipped: Vec<bool>,
    bregman: Vec<f64>,
    betas: Vec<f64>,
    average: Vec<f64>,
    residuals: Option<Vec<Vec<f64>>>,
    policy: ThresholdPolicy,
    lambda: f64,
}

impl RunTrace {
    /// Assembles a trace from iterates `x_0..x_N`, used gradients `y_1..y_N`
    /// and step parameters `beta_0..beta_{N-1}`; Bregman increments and the
    /// average are recomputed.
    pub fn from_parts(
        instance: &Instance,
        points: Vec<Vec<f64>>,
        gradients: Vec<Vec<f64>>,
        betas: Vec<f64>,
        policy: ThresholdPolicy,
    ) -> Result<Self> {
        let n = gradients.len();
        check_dim(n + 1, points.len())?;
        check_dim(n, betas.len())?;
        if n == 0 {
            return Err(Error::invalid("trace", "needs at least one step"));
        }
        for p in &points {
            instance.domain().check_input(p)?;
        }
        let bregman = points
            .windows(2)
            .map(|w| instance.geometry().bregman_unchecked(&w[0], &w[1]))
            .collect();
        let average = weighted_average(&points[1..], &betas);
        Ok(RunTrace {
            points,
            clipped: vec![false; n],
            gradients,
            bregman,
            betas,
            average,
            residuals: None,
            policy,
            lambda: f64::NAN,
        })
    }

    /// Attaches residuals `xi_1..xi_N` to an assembled trace.
    pub fn with_residuals(mut self, residuals: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(self.len(), residuals.len())?;
        for xi in &residuals {
            check_dim(self.average.len(), xi.len())?;
        }
        self.residuals = Some(residuals);
        Ok(self)
    }

    /// `N`
    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    /// `x_0..x_N`
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// `y_1..y_N`
    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    pub fn clipped(&self) -> &[bool] {
        &self.clipped
    }

    /// `V_{x_{i-1}}(x_i)` for `i = 1..N`
    pub fn bregman(&self) -> &[f64] {
        &self.bregman
    }

    /// `beta_0..beta_{N-1}`
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `xhat_N`
    pub fn average(&self) -> &[f64] {
        &self.average
    }

    /// `xi_1..xi_N`, when recorded.
    pub fn residuals(&self) -> Option<&[Vec<f64>]> {
        self.residuals.as_deref()
    }

    pub fn policy(&self) -> ThresholdPolicy {
        self.policy
    }

    /// Threshold the trace was produced with (NaN for assembled traces).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `sum V_{x_{i-1}}(x_i)`
    pub fn bregman_sum(&self) -> f64 {
        self.bregman.iter().sum()
    }

    pub fn clip_count(&self) -> usize {
        self.clipped.iter().filter(|&&c| c).count()
    }

    /// `sum 1/beta_{i-1}`
    pub fn weight_sum(&self) -> f64 {
        self.betas.iter().map(|b| 1.0 / b).sum()
    }
}

/// `[sum 1/beta_{i-1}]^{-1} sum x_i / beta_{i-1}`
pub fn weighted_average(points: &[Vec<f64>], betas: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; points[0].len()];
    let mut total = 0.0;
    for (x, b) in points.iter().zip(betas) {
        linalg::axpy(&mut acc, 1.0 / b, x);
        total += 1.0 / b;
    }
    acc.iter().map(|v| v / total).collect()
}

/// Runs `N` steps with the instance's noise model.
pub fn run<R: Rng + ?Sized>(cfg: &RsmdConfig, instance: &Instance, rng: &mut R) -> Result<RunTrace> {
    cfg.validate(instance)?;
    let n = cfg.iterations;
    if n == 0 {
        return Err(Error::invalid("iterations", "must be positive"));
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut gradients = Vec::with_capacity(n);
    let mut clipped = Vec::with_capacity(n);
    let mut bregman = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    let mut residuals = cfg.record_residuals.then(|| Vec::with_capacity(n));
    points.push(cfg.start.clone());
    for i in 0..n {
        let beta = cfg.steps.get(i);
        let s = step(
            instance,
            &cfg.truncation,
            &points[i],
            beta,
            cfg.record_residuals,
            rng,
        )?;
        points.push(s.x);
        gradients.push(s.y);
        clipped.push(s.clipped);
        bregman.push(s.bregman);
        betas.push(beta);
        if let (Some(r), Some(xi)) = (residuals.as_mut(), s.residual) {
            r.push(xi);
        }
    }
    let average = weighted_average(&points[1..], &betas);
    Ok(RunTrace {
        points,
        gradients,
        clipped,
        bregman,
        betas,
        average,
        residuals,
        policy: cfg.truncation.policy(),
        lambda: cfg.truncation.lambda(),
    })
}

/// `eps(x^N, z) = sum_i { beta_{i-1}^{-1} [<grad phi(x_{i-1}), x_i - z> + psi(x_i) - psi(z)]
/// + V_{x_{i-1}}(x_i) / 2 }`.
///
/// The `V/2` term is read as not divided by `beta_{i-1}`. With constant
/// `beta_bar` this makes `(beta_bar / N) eps(x^N, z)` coincide with the
/// certificate quantity `eps_N(t)` at `t = beta_bar / 2`.
pub fn gap_epsilon(trace: &RunTrace, instance: &Instance, z: &[f64]) -> Result<f64> {
    instance.domain().check_input(z)?;
    let psi = instance.penalty();
    let psi_z = psi.value(z);
    let mut total = 0.0;
    for i in 1..=trace.len() {
        let g = instance.gradient(&trace.points[i - 1]);
        let x = &trace.points[i];
        let inner = linalg::dot(&g, &linalg::sub(x, z)) + psi.value(x) - psi_z;
        total += inner / trace.betas[i - 1] + 0.5 * trace.bregman[i - 1];
    }
    Ok(total)
}

/// `sup_{z in X} eps(x^N, z)` and a maximizer, computed exactly through
/// a linear minimization over the domain.
pub fn gap_epsilon_sup(trace: &RunTrace, instance: &Instance) -> Result<(f64, Vec<f64>)> {
    let psi = instance.penalty();
    let mut a = vec![0.0; instance.dim()];
    let mut fixed = 0.0;
    for i in 1..=trace.len() {
        let w = 1.0 / trace.betas[i - 1];
        let g = instance.gradient(&trace.points[i - 1]);
        let x = &trace.points[i];
        fixed += w * (linalg::dot(&g, x) + psi.value(x)) + 0.5 * trace.bregman[i - 1];
        linalg::axpy(&mut a, w, &g);
    }
    let (z, min) = linear_min(instance.domain(), &psi.scaled(trace.weight_sum()), &a)?;
    Ok((fixed - min, z))
}

/// Auxiliary sequence `z_0 = x_0`, `z_i = argmin_z {<-xi_i, z> / beta_{i-1} + V_{z_{i-1}}(z)}`
/// for `i = 1..N-1`. Requires recorded residuals.
///
/// The sign of `xi_i` matters: with `+xi_i` the bound
/// `sum <xi_i, z - z_{i-1}> / beta_{i-1} <= V_{x_0}(z) + sum ||xi_i||^2 / (2 beta_{i-1}^2)`
/// fails already for two Euclidean steps with aligned residuals.
pub fn auxiliary_sequence(trace: &RunTrace, instance: &Instance) -> Result<Vec<Vec<f64>>> {
    let xis = trace.residuals().ok_or(Error::MissingResiduals)?;
    let n = trace.len();
    let mut zs = Vec::with_capacity(n);
    zs.push(trace.points[0].clone());
    for i in 1..n {
        let neg: Vec<f64> = xis[i - 1].iter().map(|v| -v).collect();
        let next = composite_prox(
            instance.geometry(),
            instance.domain(),
            &CompositePenalty::Zero,
            &zs[i - 1],
            &neg,
            trace.betas[i - 1],
        )?;
        zs.push(next);
    }
    Ok(zs)
}

/// The terms of the chain of upper bounds on the weighted gap, at one `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainTerms {
    /// `[sum 1/beta][F(xhat) - F(z)]`
    pub averaged_gap: f64,
    /// `sum [F(x_i) - F(z)] / beta_{i-1}`
    pub weighted_gap: f64,
    /// `eps(x^N, z)`
    pub epsilon: f64,
    /// `V_{x_0}(z) + sum [<xi_i, z - x_{i-1}> / beta + ||xi_i||^2 / beta^2]`
    pub residual_bound: f64,
    /// `2 V_{x_0}(z) + sum [<xi_i, z_{i-1} - x_{i-1}> / beta + 3/2 ||xi_i||^2 / beta^2]`
    pub auxiliary_bound: f64,
    /// `sum <xi_i, z - z_{i-1}> / beta`
    pub aux_lhs: f64,
    /// `V_{x_0}(z) + 1/2 sum ||xi_i||^2 / beta^2`
    pub aux_rhs: f64,
}

impl ChainTerms {
    /// Smallest slack along the chain, relative to the magnitudes involved.
    pub fn worst_relative_slack(&self) -> f64 {
        let pairs = [
            (self.averaged_gap, self.weighted_gap),
            (self.weighted_gap, self.epsilon),
            (self.epsilon, self.residual_bound),
            (self.residual_bound, self.auxiliary_bound),
            (self.aux_lhs, self.aux_rhs),
        ];
        pairs
            .iter()
            .map(|&(lo, hi)| (hi - lo) / lo.abs().max(hi.abs()).max(1.0))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn chain_terms(
    trace: &RunTrace,
    instance: &Instance,
    aux: &[Vec<f64>],
    z: &[f64],
) -> Result<ChainTerms> {
    let xis = trace.residuals().ok_or(Error::MissingResiduals)?;
    check_dim(trace.len(), aux.len())?;
    let geometry = instance.geometry();
    let fz = instance.objective(z)?;
    let v0 = geometry.bregman_unchecked(&trace.points[0], z);
    let weights = trace.weight_sum();
    let mut weighted_gap = 0.0;
    let mut sum_zx = 0.0;
    let mut sum_aux = 0.0;
    let mut sum_sq = 0.0;
    let mut aux_lhs = 0.0;
    for i in 1..=trace.len() {
        let b = trace.betas[i - 1];
        let xi = &xis[i - 1];
        let x_prev = &trace.points[i - 1];
        weighted_gap += (instance.objective_unchecked(&trace.points[i]) - fz) / b;
        sum_zx += linalg::dot(xi, &linalg::sub(z, x_prev)) / b;
        sum_aux += linalg::dot(xi, &linalg::sub(&aux[i - 1], x_prev)) / b;
        aux_lhs += linalg::dot(xi, &linalg::sub(z, &aux[i - 1])) / b;
        let d = geometry.norm().dual(xi);
        sum_sq += d * d / (b * b);
    }
    Ok(ChainTerms {
        averaged_gap: weights * (instance.objective_unchecked(&trace.average) - fz),
        weighted_gap,
        epsilon: gap_epsilon(trace, instance, z)?,
        residual_bound: v0 + sum_zx + sum_sq,
        auxiliary_bound: 2.0 * v0 + sum_aux + 1.5 * sum_sq,
        aux_lhs,
        aux_rhs: v0 + 0.5 * sum_sq,
    })
}
