//! Anchor gradients, truncation thresholds and the truncation rule.
//!
//! A stochastic gradient `G` drawn at `x_prev` is kept when
//! `||G - g(xbar)||_* <= L ||xbar - x_prev|| + lambda + upsilon sigma` and is
//! replaced by the anchor gradient `g(xbar)` otherwise.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::Norm;
use crate::linalg;
use crate::problems::Instance;

/// How the threshold `lambda` was chosen. Certificates use it to check that
/// a trace matches the confidence level they are asked for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// `max{sigma sqrt(N / tau), M} + upsilon sigma`
    Tau { tau: f64 },
    /// `max{sigma sqrt(N), M} + upsilon sigma`
    Universal,
    /// Any other user-supplied threshold.
    Custom,
    /// No truncation (plain stochastic mirror descent).
    Untruncated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationConfig {
    norm: Norm,
    anchor: Vec<f64>,
    anchor_gradient: Vec<f64>,
    anchor_error: f64,
    lambda: f64,
    lipschitz: f64,
    /// `Some(D)`: interior-optimum rule `||G||_* <= L D + lambda`, fallback 0.
    interior_diameter: Option<f64>,
    policy: ThresholdPolicy,
}

impl TruncationConfig {
    /// General rule with anchor `xbar`, anchor gradient `g(xbar)` and anchor
    /// error budget `upsilon sigma`.
    pub fn new(
        norm: Norm,
        anchor: Vec<f64>,
        anchor_gradient: Vec<f64>,
        anchor_error: f64,
        lambda: f64,
        lipschitz: f64,
        policy: ThresholdPolicy,
    ) -> Result<Self> {
        check_dim(anchor.len(), anchor_gradient.len())?;
        if !linalg::is_finite(&anchor) || !linalg::is_finite(&anchor_gradient) {
            return Err(Error::invalid("anchor", "must be finite"));
        }
        if !(anchor_error >= 0.0 && anchor_error.is_finite()) {
            return Err(Error::invalid("anchor_error", "must be finite and nonnegative"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid("lipschitz", "must be finite and nonnegative"));
        }
        Ok(TruncationConfig {
            norm,
            anchor,
            anchor_gradient,
            anchor_error,
            lambda,
            lipschitz,
            interior_diameter: None,
            policy,
        })
    }

    /// Simplified rule for problems whose smooth part is minimized at an
    /// interior point: `g(xbar) = 0`, `upsilon = 0`, and the distance to the
    /// anchor bounded by the diameter `D`.
    pub fn interior(
        norm: Norm,
        dim: usize,
        diameter: f64,
        lambda: f64,
        lipschitz: f64,
        policy: ThresholdPolicy,
    ) -> Result<Self> {
        if !(diameter >= 0.0 && diameter.is_finite()) {
            return Err(Error::invalid("diameter", "must be finite and nonnegative"));
        }
        let zero = alloc::vec![0.0; dim];
        let mut cfg = TruncationConfig::new(norm, zero.clone(), zero, 0.0, lambda, lipschitz, policy)?;
        cfg.interior_diameter = Some(diameter);
        Ok(cfg)
    }

    /// Never truncates.
    pub fn untruncated(norm: Norm, dim: usize) -> Self {
        let zero = alloc::vec![0.0; dim];
        TruncationConfig {
            norm,
            anchor: zero.clone(),
            anchor_gradient: zero,
            anchor_error: 0.0,
            lambda: f64::INFINITY,
            lipschitz: 0.0,
            interior_diameter: None,
            policy: ThresholdPolicy::Untruncated,
        }
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn anchor_gradient(&self) -> &[f64] {
        &self.anchor_gradient
    }

    /// `upsilon sigma`
    pub fn anchor_error(&self) -> f64 {
        self.anchor_error
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn policy(&self) -> ThresholdPolicy {
        self.policy
    }

    pub fn interior_diameter(&self) -> Option<f64> {
        self.interior_diameter
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Same anchor with a new threshold.
    pub fn with_lambda(&self, lambda: f64, policy: ThresholdPolicy) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        Ok(TruncationConfig {
            lambda,
            policy,
            ..self.clone()
        })
    }

    /// Right-hand side of the acceptance test at `x_prev`.
    pub fn acceptance_radius(&self, x_prev: &[f64]) -> f64 {
        match self.interior_diameter {
            Some(d) => self.lipschitz * d + self.lambda,
            None => {
                self.lipschitz * self.norm.dist(&self.anchor, x_prev)
                    + self.lambda
                    + self.anchor_error
            }
        }
    }
}

/// Applies the truncation rule; returns the used gradient and whether the
/// anchor gradient replaced `g`.
pub fn truncate(g: &[f64], cfg: &TruncationConfig, x_prev: &[f64]) -> Result<(Vec<f64>, bool)> {
    check_dim(cfg.dim(), g.len())?;
    check_dim(cfg.dim(), x_prev.len())?;
    if cfg.policy == ThresholdPolicy::Untruncated {
        return Ok((g.to_vec(), false));
    }
    let deviation = match cfg.interior_diameter {
        Some(_) => cfg.norm.dual(g),
        None => cfg.norm.dual_dist(g, &cfg.anchor_gradient),
    };
    if deviation <= cfg.acceptance_radius(x_prev) {
        Ok((g.to_vec(), false))
    } else {
        Ok((cfg.anchor_gradient.clone(), true))
    }
}

fn check_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite and nonnegative"))
    }
}

/// `lambda = max{sigma sqrt(N / tau), M} + upsilon sigma`, valid for
/// `1 <= tau <= N / upsilon^2`.
pub fn threshold_tau(sigma: f64, n: usize, tau: f64, m: f64, upsilon: f64) -> Result<f64> {
    check_nonnegative("sigma", sigma)?;
    check_nonnegative("M", m)?;
    check_nonnegative("upsilon", upsilon)?;
    let max = tau_window_max(n, upsilon);
    if !(tau >= 1.0 && tau <= max) {
        return Err(Error::TauOutOfWindow { tau, min: 1.0, max });
    }
    Ok((sigma * (n as f64 / tau).sqrt()).max(m) + upsilon * sigma)
}

/// `N / upsilon^2`, infinite when `upsilon = 0`.
pub fn tau_window_max(n: usize, upsilon: f64) -> f64 {
    if upsilon == 0.0 {
        f64::INFINITY
    } else {
        n as f64 / (upsilon * upsilon)
    }
}

/// `lambda = max{sigma sqrt(N), M} + upsilon sigma`, valid for `N >= upsilon^2`.
pub fn threshold_universal(sigma: f64, n: usize, m: f64, upsilon: f64) -> Result<f64> {
    check_nonnegative("sigma", sigma)?;
    check_nonnegative("M", m)?;
    check_nonnegative("upsilon", upsilon)?;
    if (n as f64) < upsilon * upsilon {
        return Err(Error::invalid("N", "must be at least upsilon^2"));
    }
    Ok((sigma * (n as f64).sqrt()).max(m) + upsilon * sigma)
}

/// Bounds on the residual `xi = y - grad phi(x_prev)` of a truncated gradient
/// when `||xbar - x_prev|| <= R` and `||g(xbar) - grad phi(xbar)||_* <= upsilon sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualBounds {
    /// `||xi||_* <= 2(M + upsilon sigma) + lambda` surely.
    pub per_sample: f64,
    /// `||E xi||_* <= (M + upsilon sigma)(sigma / lambda)^2 + sigma^2 / lambda`.
    pub bias: f64,
    /// `(E ||xi||_*^2)^(1/2) <= sigma + (M + upsilon sigma) sigma / lambda`.
    pub rms: f64,
}

pub fn residual_bounds(m: f64, anchor_error: f64, sigma: f64, lambda: f64) -> ResidualBounds {
    let a = m + anchor_error;
    ResidualBounds {
        per_sample: 2.0 * a + lambda,
        bias: a * (sigma / lambda).powi(2) + sigma * sigma / lambda,
        rms: sigma + a * sigma / lambda,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianResult {
    pub point: Vec<f64>,
    /// Sum of Euclidean distances from `point` to the samples.
    pub objective: f64,
    pub iterations: usize,
    /// `false` when the iteration budget ran out; `point` is the best iterate.
    pub converged: bool,
}

pub const MEDIAN_MAX_ITERS: usize = 10_000;

fn median_objective(samples: &[Vec<f64>], y: &[f64]) -> f64 {
    samples.iter().map(|s| Norm::L2.dist(s, y)).sum()
}

/// Euclidean geometric median by Weiszfeld's iteration with the Vardi-Zhang
/// modification at sample points. Stops once the convexity bound
/// `||grad f(y)|| max_i ||y - s_i||` on the suboptimality drops below `tol`.
pub fn geometric_median(samples: &[Vec<f64>], tol: f64) -> Result<MedianResult> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("samples", "need at least one sample"))?;
    let n = first.len();
    for s in samples {
        check_dim(n, s.len())?;
        if !linalg::is_finite(s) {
            return Err(Error::invalid("samples", "must be finite"));
        }
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }

    // A sample point is optimal iff the pull of the others is at most its multiplicity.
    for s in samples {
        let (eta, pull) = pull_at(samples, s);
        if linalg::norm_l2(&pull) <= eta {
            return Ok(MedianResult {
                objective: median_objective(samples, s),
                point: s.clone(),
                iterations: 0,
                converged: true,
            });
        }
    }

    let k = samples.len() as f64;
    let mut y = alloc::vec![0.0; n];
    for s in samples {
        linalg::axpy(&mut y, 1.0 / k, s);
    }
    let mut best = y.clone();
    let mut best_obj = median_objective(samples, &y);
    for it in 0..MEDIAN_MAX_ITERS {
        let (eta, pull) = pull_at(samples, &y);
        let r = linalg::norm_l2(&pull);
        let spread = samples
            .iter()
            .fold(0.0f64, |m, s| m.max(Norm::L2.dist(s, &y)));
        if r <= eta || (eta == 0.0 && r * spread <= tol) {
            return Ok(MedianResult {
                objective: median_objective(samples, &y),
                point: y,
                iterations: it,
                converged: true,
            });
        }
        let mut num = alloc::vec![0.0; n];
        let mut den = 0.0;
        for s in samples {
            let d = Norm::L2.dist(s, &y);
            if d > 0.0 {
                linalg::axpy(&mut num, 1.0 / d, s);
                den += 1.0 / d;
            }
        }
        let t: Vec<f64> = num.iter().map(|v| v / den).collect();
        y = if eta == 0.0 {
            t
        } else {
            let w = (1.0 - eta / r).max(0.0);
            t.iter().zip(&y).map(|(ti, yi)| w * ti + (1.0 - w) * yi).collect()
        };
        let obj = median_objective(samples, &y);
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&y);
        }
    }
    Ok(MedianResult {
        point: best,
        objective: best_obj,
        iterations: MEDIAN_MAX_ITERS,
        converged: false,
    })
}

/// Multiplicity of `y` among the samples and `sum_{s != y} (s - y) / ||s - y||`.
fn pull_at(samples: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let mut eta = 0.0;
    let mut pull = alloc::vec![0.0; y.len()];
    for s in samples {
        let d = Norm::L2.dist(s, y);
        if d == 0.0 {
            eta += 1.0;
        } else {
            for i in 0..y.len() {
                pull[i] += (s[i] - y[i]) / d;
            }
        }
    }
    (eta, pull)
}

/// Number of oracle calls for the anchor median at confidence `tau`:
/// `ceil(10 ln(1/eps))` with `eps = exp(-tau)`. The order in `tau` is the
/// known one; the factor 10 is a heuristic.
pub fn anchor_sample_count(tau: f64) -> usize {
    ((10.0 * tau).ceil() as usize).max(1)
}

/// Geometric median of `m` stochastic gradients drawn at `xbar`.
pub fn estimate_anchor_gradient<R: Rng + ?Sized>(
    instance: &Instance,
    xbar: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<MedianResult> {
    instance.domain().check_input(xbar)?;
    if m == 0 {
        return Err(Error::invalid("m", "need at least one sample"));
    }
    let samples: Vec<Vec<f64>> = (0..m)
        .map(|_| instance.sample_gradient(xbar, rng))
        .collect();
    let scale = samples
        .iter()
        .fold(1.0f64, |acc, s| acc.max(linalg::norm_l2(s)));
    geometric_median(&samples, 1e-10 * scale * m as f64)
}
