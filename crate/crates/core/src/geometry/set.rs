#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{Norm, INPUT_TOL};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// `{x : ||x - center|| <= radius}` in the given norm.
#[derive(Clone, Debug, PartialEq)]
pub struct NormBall {
    pub norm: Norm,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl NormBall {
    pub fn new(norm: Norm, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !linalg::is_finite(&center) {
            return Err(Error::invalid("ball.center", "must be a non-empty finite vector"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("ball.radius", "must be positive and finite"));
        }
        Ok(NormBall {
            norm,
            center,
            radius,
        })
    }

    fn violation(&self, x: &[f64]) -> f64 {
        (self.norm.dist(x, &self.center) - self.radius).max(0.0)
    }

    /// `max_{x in ball} ||x - c||` in `norm`.
    fn radius_about(&self, c: &[f64], norm: Norm) -> f64 {
        let offset = norm.dist(c, &self.center);
        let stretch = match (self.norm, norm) {
            (Norm::L2, Norm::L1) => (self.center.len() as f64).sqrt(),
            _ => 1.0,
        };
        offset + stretch * self.radius
    }
}

/// Compact convex feasible set `X`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeasibleSet {
    Ball(NormBall),
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x >= 0 : sum x = scale}` in `R^dim`.
    Simplex { dim: usize, scale: f64 },
}

impl FeasibleSet {
    pub fn ball(norm: Norm, center: Vec<f64>, radius: f64) -> Result<Self> {
        NormBall::new(norm, center, radius).map(FeasibleSet::Ball)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("box", "dimension must be positive"));
        }
        if !linalg::is_finite(&lower) || !linalg::is_finite(&upper) {
            return Err(Error::invalid("box", "bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("box", "lower bound exceeds upper bound"));
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn simplex(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("simplex.dim", "must be positive"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("simplex.scale", "must be positive and finite"));
        }
        Ok(FeasibleSet::Simplex { dim, scale })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball(b) => b.center.len(),
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Simplex { dim, .. } => *dim,
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, FeasibleSet::Simplex { .. })
    }

    /// Largest constraint violation of `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            FeasibleSet::Ball(b) => b.violation(x),
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .fold(0.0, |m, (v, (l, u))| m.max(l - v).max(v - u)),
            FeasibleSet::Simplex { scale, .. } => {
                let neg = x.iter().fold(0.0f64, |m, v| m.max(-v));
                let sum: f64 = x.iter().sum();
                neg.max((sum - scale).abs())
            }
        }
    }

    /// Characteristic size used to make tolerances relative.
    pub fn scale(&self) -> f64 {
        match self {
            FeasibleSet::Ball(b) => b.radius.max(linalg::norm_linf(&b.center)),
            FeasibleSet::Box { lower, upper } => {
                linalg::norm_linf(lower).max(linalg::norm_linf(upper))
            }
            FeasibleSet::Simplex { scale, .. } => *scale,
        }
        .max(1.0)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol * self.scale()
    }

    /// Coordinate-wise bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            FeasibleSet::Ball(b) => (
                b.center.iter().map(|c| c - b.radius).collect(),
                b.center.iter().map(|c| c + b.radius).collect(),
            ),
            FeasibleSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            FeasibleSet::Simplex { dim, scale } => (vec![0.0; *dim], vec![*scale; *dim]),
        }
    }

    /// A natural center: ball center, box midpoint or simplex barycenter.
    pub fn default_center(&self) -> Vec<f64> {
        match self {
            FeasibleSet::Ball(b) => b.center.clone(),
            FeasibleSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
            FeasibleSet::Simplex { dim, scale } => vec![scale / *dim as f64; *dim],
        }
    }

    /// `max_{x in X} ||x - c||`; exact for boxes, simplices and balls about
    /// their own center, an upper bound otherwise.
    pub fn radius_about(&self, c: &[f64], norm: Norm) -> f64 {
        match self {
            FeasibleSet::Ball(b) => b.radius_about(c, norm),
            FeasibleSet::Box { lower, upper } => {
                let far: Vec<f64> = lower
                    .iter()
                    .zip(upper)
                    .zip(c)
                    .map(|((l, u), ci)| (ci - l).abs().max((u - ci).abs()))
                    .collect();
                norm.of(&far)
            }
            FeasibleSet::Simplex { dim, scale } => {
                let mut vertex = vec![0.0; *dim];
                let mut best = 0.0f64;
                for i in 0..*dim {
                    vertex[i] = *scale;
                    best = best.max(norm.dist(&vertex, c));
                    vertex[i] = 0.0;
                }
                best
            }
        }
    }

    /// Diameter in `norm` (exact for every variant when `norm` matches the ball's).
    pub fn diameter(&self, norm: Norm) -> f64 {
        match self {
            FeasibleSet::Ball(b) => 2.0 * b.radius_about(&b.center, norm),
            FeasibleSet::Box { lower, upper } => norm.dist(lower, upper),
            FeasibleSet::Simplex { dim, scale } => {
                if *dim == 1 {
                    0.0
                } else {
                    match norm {
                        Norm::L1 => 2.0 * scale,
                        Norm::L2 => core::f64::consts::SQRT_2 * scale,
                    }
                }
            }
        }
    }

    /// Draws a point of `X`: uniform for boxes and l2 balls, flat Dirichlet on
    /// simplices, and a radially uniform point on l1 balls.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FeasibleSet::Ball(b) => {
                let n = b.center.len();
                let dir: Vec<f64> = match b.norm {
                    Norm::L2 => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
                    Norm::L1 => (0..n)
                        .map(|_| {
                            let e: f64 = Exp1.sample(rng);
                            if rng.random::<bool>() {
                                e
                            } else {
                                -e
                            }
                        })
                        .collect(),
                };
                let len = b.norm.of(&dir);
                let u: f64 = rng.random();
                let r = b.radius * u.powf(1.0 / n as f64);
                b.center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + r * d / len)
                    .collect()
            }
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            FeasibleSet::Simplex { dim, scale } => {
                let e: Vec<f64> = (0..*dim).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = e.iter().sum();
                e.iter().map(|v| scale * v / total).collect()
            }
        }
    }
}

/// A feasible set optionally intersected with a norm ball, the domain of the
/// proximal steps. Restrictions appear in the stages of the restart scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    set: FeasibleSet,
    restriction: Option<NormBall>,
}

impl Domain {
    pub fn new(set: FeasibleSet) -> Self {
        Domain {
            set,
            restriction: None,
        }
    }

    /// `X ∩ {x : ||x - center|| <= radius}`; replaces any earlier restriction.
    pub fn restricted(&self, ball: NormBall) -> Result<Self> {
        check_dim(self.dim(), ball.center.len())?;
        Ok(Domain {
            set: self.set.clone(),
            restriction: Some(ball),
        })
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn restriction(&self) -> Option<&NormBall> {
        self.restriction.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.set.violation(x);
        match &self.restriction {
            Some(b) => v.max(b.violation(x)),
            None => v,
        }
    }

    pub fn scale(&self) -> f64 {
        self.set.scale()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol * self.scale()
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let violation = self.violation(x);
        if violation > INPUT_TOL * self.scale() {
            return Err(Error::OutsideDomain { violation });
        }
        Ok(())
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = self.set.bounds();
        if let Some(b) = &self.restriction {
            for i in 0..lo.len() {
                lo[i] = lo[i].max(b.center[i] - b.radius);
                hi[i] = hi[i].min(b.center[i] + b.radius);
            }
        }
        (lo, hi)
    }

    pub fn radius_about(&self, c: &[f64], norm: Norm) -> f64 {
        let r = self.set.radius_about(c, norm);
        match &self.restriction {
            Some(b) => r.min(b.radius_about(c, norm)),
            None => r,
        }
    }
}

impl From<FeasibleSet> for Domain {
    fn from(set: FeasibleSet) -> Self {
        Domain::new(set)
    }
}
