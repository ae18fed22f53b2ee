//! Deterministic reference solver for `F*`: FISTA with gradient-based adaptive
//! restart in the Euclidean metric, stopped on the gradient-mapping norm.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use super::Quadratic;
use crate::error::{Error, Result};
use crate::geometry::{linear_min, prox, CompositePenalty, Domain};
use crate::linalg;

pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_MAX_ITERS: usize = 100_000;

/// Minimizer and minimum of `phi + psi` over `domain`.
pub fn solve(
    phi: &Quadratic,
    penalty: &CompositePenalty,
    domain: &Domain,
    start: &[f64],
    smoothness: f64,
) -> Result<(Vec<f64>, f64)> {
    if smoothness <= 0.0 {
        // phi is linear
        let neg_b: Vec<f64> = phi.b().iter().map(|v| -v).collect();
        let (x, value) = linear_min(domain, penalty, &neg_b)?;
        return Ok((x, value));
    }
    let step = 1.0 / smoothness;
    let tol = REFERENCE_TOL * smoothness.max(1.0);
    let mut x = prox::euclidean_prox(domain, penalty, start, step)?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..REFERENCE_MAX_ITERS {
        let g = phi.gradient(&y);
        let v: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let next = prox::euclidean_prox(domain, penalty, &v, step)?;
        let gap = smoothness * linalg::norm_l2(&linalg::sub(&y, &next));
        if gap <= tol {
            let value = phi.value(&next) + penalty.value(&next);
            return Ok((next, value));
        }
        // restart when the momentum direction opposes the gradient mapping
        let restart = linalg::dot(&linalg::sub(&y, &next), &linalg::sub(&next, &x)) > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let momentum = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + momentum * (a - b))
            .collect();
        x = next;
        t = t_next;
    }
    Err(Error::NoConvergence {
        solver: "reference FISTA",
        iterations: REFERENCE_MAX_ITERS,
    })
}
