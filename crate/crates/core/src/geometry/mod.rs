//! Normed-space setups: norm and dual norm, the normalized proxy function,
//! Bregman divergences, feasible sets, composite penalties and the exact
//! composite proximal solver.
//!
//! Both supported setups use a coordinate-separable proxy on the unit ball
//! `B = {u : ||u|| <= 1}`:
//!
//! | kind        | norm | dual | `theta(u)`                 | `p`               |
//! |-------------|------|------|----------------------------|-------------------|
//! | `Euclidean` | l2   | l2   | `1/2 ||u||_2^2`            | 2                 |
//! | `L1`        | l1   | linf | `2 e ln(n) ||u||_p^p`      | `1 + 1/(2 ln n)`  |
//!
//! and the proxy on `X` is `vartheta(x) = R^2 theta((x - x0) / R)`, which is
//! 1-strongly convex with respect to the setup's norm.

mod penalty;
pub mod prox;
mod set;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::E;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub use penalty::CompositePenalty;
pub use prox::{composite_prox, linear_min};
pub use set::{Domain, FeasibleSet, NormBall};

/// Relative tolerance for membership of inputs.
pub const INPUT_TOL: f64 = 1e-9;
/// Relative tolerance for membership of solver outputs.
pub const OUTPUT_TOL: f64 = 1e-12;

/// Primal norm on `R^n`. The dual of `L1` is `linf`, `L2` is self-dual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    #[inline]
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => linalg::norm_l1(v),
            Norm::L2 => linalg::norm_l2(v),
        }
    }

    #[inline]
    pub fn dual(self, s: &[f64]) -> f64 {
        match self {
            Norm::L1 => linalg::norm_linf(s),
            Norm::L2 => linalg::norm_l2(s),
        }
    }

    /// `||a - b||`
    #[inline]
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `||a - b||_*`
    #[inline]
    pub fn dual_dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L1 => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Norm::L2 => self.dist(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeometryKind {
    Euclidean,
    L1,
}

impl GeometryKind {
    pub fn norm(self) -> Norm {
        match self {
            GeometryKind::Euclidean => Norm::L2,
            GeometryKind::L1 => Norm::L1,
        }
    }
}

/// A normed space with its proxy function, centered at `x0` with radius `R`.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    center: Vec<f64>,
    radius: f64,
    /// `p` in `theta(u) = c sum |u_i|^p`
    exponent: f64,
    /// `c` in `theta(u) = c sum |u_i|^p`
    coefficient: f64,
    capacity: f64,
}

impl Geometry {
    pub fn new(kind: GeometryKind, center: Vec<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::invalid("dim", "dimension must be positive"));
        }
        if !linalg::is_finite(&center) {
            return Err(Error::invalid("center", "entries must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "must be positive and finite"));
        }
        let (exponent, coefficient) = match kind {
            GeometryKind::Euclidean => (2.0, 0.5),
            GeometryKind::L1 => {
                if n < 2 {
                    return Err(Error::invalid("dim", "the l1 proxy needs n >= 2"));
                }
                let ln_n = (n as f64).ln();
                (1.0 + 1.0 / (2.0 * ln_n), 2.0 * E * ln_n)
            }
        };
        let mut geometry = Geometry {
            kind,
            center,
            radius,
            exponent,
            coefficient,
            capacity: 0.0,
        };
        geometry.capacity = geometry.compute_capacity();
        Ok(geometry)
    }

    /// Same kind, new center and radius.
    pub fn recentered(&self, center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(self.dim(), center.len())?;
        Geometry::new(self.kind, center, radius)
    }

    /// `theta` is convex and symmetric under coordinate sign flips and
    /// permutations, so its maximum over `B` sits at the points `+-e_i`
    /// (vertices of the l1 ball; any unit vector for l2).
    fn compute_capacity(&self) -> f64 {
        let n = self.dim();
        let mut u = vec![0.0; n];
        let floor = self.theta(&u);
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                u[i] = sign;
                best = best.max(self.theta(&u));
                u[i] = 0.0;
            }
        }
        best - floor
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> Norm {
        self.kind.norm()
    }

    /// `Theta = max_B theta - min_B theta`.
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Exponent `p` of the proxy.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Coefficient `w` in `vartheta(x) = w sum |x_i - x0_i|^p`, i.e. `c R^(2-p)`.
    pub(crate) fn scaled_coefficient(&self) -> f64 {
        self.coefficient * self.radius.powf(2.0 - self.exponent)
    }

    pub fn dual_norm(&self, s: &[f64]) -> Result<f64> {
        check_dim(self.dim(), s.len())?;
        Ok(self.norm().dual(s))
    }

    pub fn primal_norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.norm().of(v))
    }

    /// Normalized proxy on the unit ball.
    pub fn theta(&self, u: &[f64]) -> f64 {
        let p = self.exponent;
        let sum: f64 = if p == 2.0 {
            u.iter().map(|x| x * x).sum()
        } else {
            u.iter().map(|x| x.abs().powf(p)).sum()
        };
        self.coefficient * sum
    }

    pub fn theta_gradient(&self, u: &[f64]) -> Vec<f64> {
        let (c, p) = (self.coefficient, self.exponent);
        u.iter().map(|&x| c * p * signed_pow(x, p - 1.0)).collect()
    }

    /// `vartheta(x)` and its gradient; `x` must satisfy `||x - x0|| <= R`.
    pub fn proxy(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_ball(x)?;
        Ok((self.proxy_value(x), self.proxy_gradient(x)))
    }

    pub(crate) fn proxy_value(&self, x: &[f64]) -> f64 {
        let p = self.exponent;
        let sum: f64 = if p == 2.0 {
            x.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum()
        } else {
            x.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c).abs().powf(p))
                .sum()
        };
        self.scaled_coefficient() * sum
    }

    pub(crate) fn proxy_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.proxy_gradient_into(x, &mut out);
        out
    }

    pub(crate) fn proxy_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.exponent;
        let w = self.scaled_coefficient() * p;
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = w * signed_pow(a - c, p - 1.0);
        }
    }

    /// `V_x(z) = vartheta(z) - vartheta(x) - <vartheta'(x), z - x>`.
    pub fn bregman(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_ball(x)?;
        self.check_ball(z)?;
        Ok(self.bregman_unchecked(x, z))
    }

    /// Evaluated coordinate by coordinate; every term is a one-dimensional
    /// Bregman divergence and is clamped at zero against rounding.
    pub fn bregman_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let p = self.exponent;
        let w = self.scaled_coefficient();
        let mut total = 0.0;
        for ((a, b), c) in x.iter().zip(z).zip(&self.center) {
            let term = if p == 2.0 {
                (b - a) * (b - a)
            } else {
                let (dx, dz) = (a - c, b - c);
                let t = dz.abs().powf(p) - dx.abs().powf(p) - p * signed_pow(dx, p - 1.0) * (dz - dx);
                t.max(0.0)
            };
            total += term;
        }
        w * total
    }

    /// How far `x` sits outside the ball `||x - x0|| <= R`, relative to `R`.
    pub(crate) fn check_ball(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let excess = self.norm().dist(x, &self.center) - self.radius;
        if excess > INPUT_TOL * self.radius.max(1.0) {
            return Err(Error::OutsideDomain { violation: excess });
        }
        Ok(())
    }
}

/// `sign(x) |x|^q`
#[inline]
pub(crate) fn signed_pow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if q == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(q)
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec;
    use super::*;
    use approx::assert_relative_eq;

    fn euclid(n: usize) -> Geometry {
        Geometry::new(GeometryKind::Euclidean, vec![0.0; n], 1.0).unwrap()
    }

    #[test]
    fn dual_norm_examples() {
        assert_eq!(euclid(2).dual_norm(&[3.0, 4.0]).unwrap(), 5.0);
        let l1 = Geometry::new(GeometryKind::L1, vec![0.0; 2], 1.0).unwrap();
        assert_eq!(l1.dual_norm(&[1.0, -3.0]).unwrap(), 3.0);
        assert!(matches!(
            l1.dual_norm(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn proxy_examples() {
        let g = euclid(2);
        let (v, grad) = g.proxy(&[1.0, 0.0]).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(grad, vec![1.0, 0.0]);

        let l1 = Geometry::new(GeometryKind::L1, vec![0.3, -0.2, 0.1], 2.0).unwrap();
        let (v, grad) = l1.proxy(&[0.3, -0.2, 0.1]).unwrap();
        assert_eq!(v, 0.0);
        assert!(grad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn proxy_rejects_points_outside_ball() {
        let g = euclid(2);
        assert!(matches!(g.proxy(&[1.0, 1.0]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn bregman_examples() {
        let g = Geometry::new(GeometryKind::Euclidean, vec![0.0; 2], 2.0).unwrap();
        assert_eq!(g.bregman(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), 2.0);
        let l1 = Geometry::new(GeometryKind::L1, vec![0.0; 4], 1.0).unwrap();
        let x = [0.1, -0.2, 0.05, 0.3];
        assert_eq!(l1.bregman(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn capacity_values() {
        assert_eq!(euclid(5).capacity(), 0.5);
        for n in [2usize, 10, 50] {
            let g = Geometry::new(GeometryKind::L1, vec![0.0; n], 1.0).unwrap();
            assert_relative_eq!(g.capacity(), 2.0 * E * (n as f64).ln(), max_relative = 1e-14);
            assert!(g.capacity() >= 0.5);
        }
    }

    #[test]
    fn l1_needs_two_coordinates() {
        assert!(Geometry::new(GeometryKind::L1, vec![0.0], 1.0).is_err());
    }

    #[test]
    fn proxy_is_scale_free() {
        // vartheta(x) = R^2 theta((x - x0)/R)
        let g = Geometry::new(GeometryKind::L1, vec![1.0, -1.0, 0.5], 3.0).unwrap();
        let x = [1.5, -2.0, 0.0];
        let u: Vec<f64> = x
            .iter()
            .zip(g.center())
            .map(|(a, c)| (a - c) / 3.0)
            .collect();
        assert_relative_eq!(g.proxy_value(&x), 9.0 * g.theta(&u), max_relative = 1e-13);
    }
}
