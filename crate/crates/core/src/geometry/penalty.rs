#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use super::FeasibleSet;
use crate::error::{Error, Result};

/// Convex penalty `psi` handled exactly inside the proximal step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum CompositePenalty {
    #[default]
    Zero,
    /// `w ||x||_1`
    L1 { weight: f64 },
    /// `w sum |x_i|^p`, `p` in `[1, 2]`
    Power { weight: f64, exponent: f64 },
    /// `w sum x_i ln x_i`, simplex only
    NegEntropy { weight: f64 },
}

impl CompositePenalty {
    pub fn validate(&self, set: &FeasibleSet) -> Result<()> {
        let weight = match *self {
            CompositePenalty::Zero => return Ok(()),
            CompositePenalty::L1 { weight } => weight,
            CompositePenalty::Power { weight, exponent } => {
                if !(1.0..=2.0).contains(&exponent) {
                    return Err(Error::invalid("penalty.exponent", "must lie in [1, 2]"));
                }
                weight
            }
            CompositePenalty::NegEntropy { weight } => {
                if !set.is_simplex() {
                    return Err(Error::invalid(
                        "penalty",
                        "the entropy penalty requires a simplex feasible set",
                    ));
                }
                weight
            }
        };
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid("penalty.weight", "must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            CompositePenalty::Zero => true,
            CompositePenalty::L1 { weight }
            | CompositePenalty::Power { weight, .. }
            | CompositePenalty::NegEntropy { weight } => weight == 0.0,
        }
    }

    /// `k psi` for `k >= 0`.
    pub fn scaled(&self, k: f64) -> Self {
        match *self {
            CompositePenalty::Zero => CompositePenalty::Zero,
            CompositePenalty::L1 { weight } => CompositePenalty::L1 { weight: k * weight },
            CompositePenalty::Power { weight, exponent } => CompositePenalty::Power {
                weight: k * weight,
                exponent,
            },
            CompositePenalty::NegEntropy { weight } => {
                CompositePenalty::NegEntropy { weight: k * weight }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            CompositePenalty::Zero => 0.0,
            CompositePenalty::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            CompositePenalty::Power { weight, exponent } => {
                weight * x.iter().map(|v| v.abs().powf(exponent)).sum::<f64>()
            }
            CompositePenalty::NegEntropy { weight } => {
                weight * x.iter().map(|&v| xlogx(v)).sum::<f64>()
            }
        }
    }

    /// Minimal-norm subgradient. At a zero coordinate of the entropy the
    /// subdifferential is empty; `-inf` is returned there.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            CompositePenalty::Zero => x.iter().map(|_| 0.0).collect(),
            CompositePenalty::L1 { weight } => x.iter().map(|&v| weight * sign0(v)).collect(),
            CompositePenalty::Power { weight, exponent } => x
                .iter()
                .map(|&v| weight * exponent * super::signed_pow(v, exponent - 1.0))
                .collect(),
            CompositePenalty::NegEntropy { weight } => x
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        weight * (v.ln() + 1.0)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect(),
        }
    }
}

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
