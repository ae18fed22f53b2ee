//! Closed-form gap bounds with explicit constants.

use anyhow::{ensure, Result};
use rsmd_core::truncation::tau_window_max;
use serde::Serialize;

/// Expected-gap bound for untruncated SMD with the constant step
/// `max{2L, sigma sqrt(N) / (R sqrt(Theta))}`:
/// `max{2LR^2 Theta/N + 4R sigma (1 + sqrt Theta)/sqrt N, 2R sigma (1 + 4 sqrt Theta)/sqrt N}`.
pub fn corollary1(l: f64, r: f64, theta: f64, sigma: f64, n: usize) -> f64 {
    let n = n as f64;
    let st = theta.sqrt();
    let a = 2.0 * l * r * r * theta / n + 4.0 * r * sigma * (1.0 + st) / n.sqrt();
    let b = 2.0 * r * sigma * (1.0 + 4.0 * st) / n.sqrt();
    a.max(b)
}

/// High-probability bound for the tau-matched threshold:
/// `N^{-1} max{46 L R^2 tau, 4 L R^2 Theta, 62 sigma R sqrt(N Theta), 16 sigma R sqrt(N tau)}`.
pub fn theorem1(l: f64, r: f64, theta: f64, sigma: f64, n: usize, tau: f64, upsilon: f64) -> Result<f64> {
    let max = tau_window_max(n, upsilon);
    ensure!(tau >= 1.0 && tau <= max, "tau {tau} outside [1, {max}]");
    let nf = n as f64;
    let lr2 = l * r * r;
    let terms = [
        46.0 * lr2 * tau,
        4.0 * lr2 * theta,
        62.0 * sigma * r * (nf * theta).sqrt(),
        16.0 * sigma * r * (nf * tau).sqrt(),
    ];
    Ok(terms.into_iter().fold(0.0, f64::max) / nf)
}

/// High-probability bound for the universal threshold:
/// `C max{L R^2 (tau v Theta) / N, tau sigma R sqrt(Theta / N)}`.
#[allow(clippy::too_many_arguments)]
pub fn theorem2(l: f64, r: f64, theta: f64, sigma: f64, n: usize, tau: f64, upsilon: f64, c: f64) -> Result<f64> {
    ensure!(n as f64 >= upsilon * upsilon, "N = {n} below upsilon^2");
    ensure!(tau > 0.0, "tau must be positive");
    let nf = n as f64;
    Ok(c * (l * r * r * tau.max(theta) / nf).max(tau * sigma * r * (theta / nf).sqrt()))
}

/// Inputs of the evaluators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub lipschitz: f64,
    pub radius: f64,
    pub capacity: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub tau: f64,
    pub upsilon: f64,
    pub universal_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundValues {
    pub corollary1: f64,
    /// `None` when tau is outside its window.
    pub theorem1: Option<f64>,
    pub theorem2: Option<f64>,
}

pub fn evaluate(p: &BoundInputs) -> BoundValues {
    let (l, r, th, s, n) = (p.lipschitz, p.radius, p.capacity, p.sigma, p.iterations);
    BoundValues {
        corollary1: corollary1(l, r, th, s, n),
        theorem1: theorem1(l, r, th, s, n, p.tau, p.upsilon).ok(),
        theorem2: theorem2(l, r, th, s, n, p.tau, p.upsilon, p.universal_constant).ok(),
    }
}
