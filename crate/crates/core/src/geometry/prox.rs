//! Exact solver for the composite proximal step
//!
//! ```text
//! argmin_{z in D} <xi, z> + psi(z) + beta V_x(z)
//! ```
//!
//! over a domain `D` (a feasible set, possibly intersected with a norm ball).
//! Every supported proxy and penalty is a sum of one-dimensional convex terms,
//! so after dualizing the coupling constraints (sum constraint of a simplex,
//! norm-ball constraints) the problem splits into scalar problems on the
//! coordinate bounds. Each multiplier is found by a bracketed root search on
//! the monotone constraint residual, nested one level per constraint, and the
//! final point is blended from the two bracket solutions so that it satisfies
//! the active constraint exactly.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use super::{signed_pow, CompositePenalty, Domain, FeasibleSet, Geometry, Norm, OUTPUT_TOL};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

const MAX_ROOT_ITERS: usize = 400;
const MAX_DOUBLINGS: usize = 2100;
const MAX_SCALAR_ITERS: usize = 300;

/// One-dimensional convex model
/// `lin z + quad z^2 / 2 + sum a|z - c| + sum w|z - c|^p + e z ln z` on `[lo, hi]`.
#[derive(Clone, Copy, Debug)]
struct Scalar {
    lin: f64,
    quad: f64,
    abs: [(f64, f64); 3],
    n_abs: usize,
    pow: [(f64, f64, f64); 2],
    n_pow: usize,
    ent: f64,
    lo: f64,
    hi: f64,
}

impl Scalar {
    fn new(lo: f64, hi: f64) -> Self {
        Scalar {
            lin: 0.0,
            quad: 0.0,
            abs: [(0.0, 0.0); 3],
            n_abs: 0,
            pow: [(0.0, 0.0, 0.0); 2],
            n_pow: 0,
            ent: 0.0,
            lo,
            hi,
        }
    }

    fn add_abs(&mut self, w: f64, c: f64) {
        if w > 0.0 {
            self.abs[self.n_abs] = (w, c);
            self.n_abs += 1;
        }
    }

    /// `w |z - c|^p`
    fn add_pow(&mut self, w: f64, c: f64, p: f64) {
        if w <= 0.0 {
            return;
        }
        if p == 2.0 {
            self.quad += 2.0 * w;
            self.lin -= 2.0 * w * c;
        } else if p == 1.0 {
            self.add_abs(w, c);
        } else {
            self.pow[self.n_pow] = (w, c, p);
            self.n_pow += 1;
        }
    }

    /// Derivative of the smooth part (everything but the kinks).
    fn smooth_slope(&self, z: f64) -> f64 {
        let mut d = self.lin + self.quad * z;
        for &(w, c, p) in &self.pow[..self.n_pow] {
            d += w * p * signed_pow(z - c, p - 1.0);
        }
        if self.ent > 0.0 {
            d += if z > 0.0 {
                self.ent * (z.ln() + 1.0)
            } else {
                f64::NEG_INFINITY
            };
        }
        d
    }

    fn smooth_curvature(&self, z: f64) -> f64 {
        let mut h = self.quad;
        for &(w, c, p) in &self.pow[..self.n_pow] {
            let r = (z - c).abs();
            h += if r > 0.0 {
                w * p * (p - 1.0) * r.powf(p - 2.0)
            } else {
                f64::INFINITY
            };
        }
        if self.ent > 0.0 {
            h += self.ent / z;
        }
        h
    }

    /// One-sided derivative; `right` selects `f'(z+)`.
    fn slope(&self, z: f64, right: bool) -> f64 {
        let mut d = self.smooth_slope(z);
        for &(w, c) in &self.abs[..self.n_abs] {
            d += w * if z > c || (z == c && right) { 1.0 } else { -1.0 };
        }
        d
    }

    fn minimize(&self) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        if lo >= hi {
            return lo;
        }
        if self.slope(lo, true) >= 0.0 {
            return lo;
        }
        if self.slope(hi, false) <= 0.0 {
            return hi;
        }
        let mut knots = [0.0f64; 5];
        let mut k = 0;
        for &(_, c) in &self.abs[..self.n_abs] {
            knots[k] = c;
            k += 1;
        }
        for &(_, c, _) in &self.pow[..self.n_pow] {
            knots[k] = c;
            k += 1;
        }
        let knots = &mut knots[..k];
        knots.sort_unstable_by(|a, b| a.total_cmp(b));
        let mut left = lo;
        for &b in knots.iter() {
            if b <= left || b >= hi {
                continue;
            }
            let dl = self.slope(b, false);
            if dl > 0.0 {
                return self.smooth_root(left, b);
            }
            if self.slope(b, true) >= 0.0 {
                return b;
            }
            left = b;
        }
        self.smooth_root(left, hi)
    }

    /// Root of the derivative on `(a, b)`, where it is smooth, negative just
    /// right of `a` and positive just left of `b`.
    fn smooth_root(&self, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let mut kink = 0.0;
        for &(w, c) in &self.abs[..self.n_abs] {
            kink += if mid > c { w } else { -w };
        }
        let lin = self.lin + kink;
        let slope = |z: f64| self.smooth_slope(z) + kink;

        if self.n_pow == 0 && self.ent == 0.0 {
            if self.quad > 0.0 {
                return (-lin / self.quad).clamp(a, b);
            }
            return mid;
        }
        if self.n_pow == 1 && self.ent == 0.0 && self.quad == 0.0 {
            let (w, c, p) = self.pow[0];
            let z = c + signed_pow(-lin / (w * p), 1.0 / (p - 1.0));
            return z.clamp(a, b);
        }

        let (mut lo, mut hi) = (a, b);
        let mut z = mid;
        for _ in 0..MAX_SCALAR_ITERS {
            let g = slope(z);
            if g == 0.0 {
                return z;
            }
            if g < 0.0 {
                lo = z;
            } else {
                hi = z;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            let h = self.smooth_curvature(z);
            let newton = z - g / h;
            if (newton - z).abs() <= 2.0 * f64::EPSILON * z.abs() {
                return newton.clamp(a, b);
            }
            z = if newton > lo && newton < hi && newton.is_finite() {
                newton
            } else if lo > 0.0 && hi > 8.0 * lo {
                (lo * hi).sqrt()
            } else if lo <= 0.0 && hi > 0.0 && self.ent > 0.0 {
                hi * (1.0 / 64.0)
            } else {
                0.5 * (lo + hi)
            };
            if z <= lo || z >= hi {
                z = 0.5 * (lo + hi);
                if z <= lo || z >= hi {
                    break;
                }
            }
        }
        z.clamp(a, b)
    }
}

#[derive(Clone, Debug)]
enum Coupling<'a> {
    Sum { total: f64 },
    Ball { norm: Norm, center: &'a [f64], radius: f64 },
}

impl Coupling<'_> {
    /// Residual of the constraint at `z`; nonincreasing in the multiplier.
    fn residual(&self, z: &[f64]) -> f64 {
        match self {
            Coupling::Sum { total } => z.iter().sum::<f64>() - total,
            Coupling::Ball {
                norm,
                center,
                radius,
            } => norm.dist(z, center) - radius,
        }
    }

    fn apply(&self, models: &mut [Scalar], m: f64) {
        match self {
            Coupling::Sum { .. } => {
                for s in models {
                    s.lin += m;
                }
            }
            Coupling::Ball {
                norm: Norm::L2,
                center,
                ..
            } => {
                // m/2 (||z - c||^2 - r^2)
                for (s, c) in models.iter_mut().zip(center.iter()) {
                    s.quad += m;
                    s.lin -= m * c;
                }
            }
            Coupling::Ball {
                norm: Norm::L1,
                center,
                ..
            } => {
                for (s, c) in models.iter_mut().zip(center.iter()) {
                    s.add_abs(m, *c);
                }
            }
        }
    }
}

fn solve(models: &[Scalar], couplings: &[Coupling<'_>]) -> Result<Vec<f64>> {
    let Some((first, rest)) = couplings.split_first() else {
        return Ok(models.iter().map(Scalar::minimize).collect());
    };
    let eval = |m: f64| -> Result<(f64, Vec<f64>)> {
        let mut local = models.to_vec();
        first.apply(&mut local, m);
        let z = solve(&local, rest)?;
        let g = first.residual(&z);
        if !g.is_finite() {
            return Err(Error::NoConvergence {
                solver: "prox multiplier",
                iterations: 0,
            });
        }
        Ok((g, z))
    };

    let (g0, z0) = eval(0.0)?;
    let equality = matches!(first, Coupling::Sum { .. });
    if g0 == 0.0 || (!equality && g0 <= 0.0) {
        return Ok(z0);
    }

    // Bracket a root of the nonincreasing residual.
    let (mut a, mut b) = (0.0, 0.0);
    let (mut ga, mut gb) = (g0, g0);
    let (mut za, mut zb) = (z0.clone(), z0);
    let mut step = 1.0;
    let mut found = false;
    for _ in 0..MAX_DOUBLINGS {
        if g0 > 0.0 {
            let m = b + step;
            let (g, z) = eval(m)?;
            if g <= 0.0 {
                (b, gb, zb) = (m, g, z);
                found = true;
                break;
            }
            (a, ga, za) = (m, g, z);
        } else {
            let m = a - step;
            let (g, z) = eval(m)?;
            if g >= 0.0 {
                (a, ga, za) = (m, g, z);
                found = true;
                break;
            }
            (b, gb, zb) = (m, g, z);
        }
        step *= 2.0;
    }
    if !found {
        return Err(Error::NoConvergence {
            solver: "prox multiplier bracket",
            iterations: MAX_DOUBLINGS,
        });
    }
    if ga == 0.0 {
        return Ok(za);
    }
    if gb == 0.0 {
        return Ok(zb);
    }

    // Illinois regula falsi with a bisection safeguard.
    let mut last_side = 0i8;
    let mut since_halving = 0;
    let mut width = b - a;
    for _ in 0..MAX_ROOT_ITERS {
        if b - a <= 4.0 * f64::EPSILON * (a.abs() + b.abs()) + f64::MIN_POSITIVE {
            break;
        }
        let mut m = (a * gb - b * ga) / (gb - ga);
        if since_halving >= 2 || !(m > a && m < b) {
            m = 0.5 * (a + b);
        }
        if !(m > a && m < b) {
            break;
        }
        let (g, z) = eval(m)?;
        if g == 0.0 {
            return Ok(z);
        }
        if g > 0.0 {
            (a, ga, za) = (m, g, z);
            if last_side == 1 {
                gb *= 0.5;
            }
            last_side = 1;
        } else {
            (b, gb, zb) = (m, g, z);
            if last_side == -1 {
                ga *= 0.5;
            }
            last_side = -1;
        }
        if b - a <= 0.5 * width {
            width = b - a;
            since_halving = 0;
        } else {
            since_halving += 1;
        }
    }
    let ga = first.residual(&za);
    let gb = first.residual(&zb);
    Ok(blend(first, &za, ga, &zb, gb))
}

/// Point on the segment between the bracket solutions that satisfies the
/// constraint exactly (`ga > 0 >= gb`). Both endpoints satisfy the inner
/// constraints, and so does every point in between.
fn blend(coupling: &Coupling<'_>, za: &[f64], ga: f64, zb: &[f64], gb: f64) -> Vec<f64> {
    if gb == 0.0 || ga <= 0.0 {
        return if ga <= 0.0 && ga >= gb {
            za.to_vec()
        } else {
            zb.to_vec()
        };
    }
    match coupling {
        Coupling::Sum { .. } => {
            let t = ga / (ga - gb);
            linalg::lerp(za, zb, t)
        }
        Coupling::Ball { .. } => {
            // the residual along the segment is convex; keep the feasible side
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if coupling.residual(&linalg::lerp(zb, za, mid)) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            linalg::lerp(zb, za, lo)
        }
    }
}

struct Problem<'a> {
    models: Vec<Scalar>,
    couplings: Vec<Coupling<'a>>,
}

fn build<'a>(domain: &'a Domain, penalty: &CompositePenalty, lin: &[f64]) -> Problem<'a> {
    let (lo, hi) = domain.bounds();
    let mut models: Vec<Scalar> = lo
        .iter()
        .zip(&hi)
        .zip(lin)
        .map(|((&l, &h), &a)| {
            let mut s = Scalar::new(l, h);
            s.lin = a;
            s
        })
        .collect();
    for s in models.iter_mut() {
        match *penalty {
            CompositePenalty::Zero => {}
            CompositePenalty::L1 { weight } => s.add_abs(weight, 0.0),
            CompositePenalty::Power { weight, exponent } => s.add_pow(weight, 0.0, exponent),
            CompositePenalty::NegEntropy { weight } => s.ent += weight,
        }
    }

    let mut couplings = Vec::with_capacity(2);
    if let Some(ball) = domain.restriction() {
        couplings.push(Coupling::Ball {
            norm: ball.norm,
            center: &ball.center,
            radius: ball.radius,
        });
    }
    match domain.set() {
        FeasibleSet::Ball(ball) => couplings.push(Coupling::Ball {
            norm: ball.norm,
            center: &ball.center,
            radius: ball.radius,
        }),
        FeasibleSet::Simplex { scale, .. } => couplings.push(Coupling::Sum { total: *scale }),
        FeasibleSet::Box { .. } => {}
    }
    Problem { models, couplings }
}

fn finish(domain: &Domain, z: Vec<f64>) -> Result<Vec<f64>> {
    if !linalg::is_finite(&z) {
        return Err(Error::NoConvergence {
            solver: "prox",
            iterations: MAX_ROOT_ITERS,
        });
    }
    let violation = domain.violation(&z);
    if violation > OUTPUT_TOL * domain.scale() {
        return Err(Error::OutsideDomain { violation });
    }
    Ok(z)
}

fn check_common(
    domain: &Domain,
    penalty: &CompositePenalty,
    a: &[f64],
) -> Result<()> {
    check_dim(domain.dim(), a.len())?;
    if !linalg::is_finite(a) {
        return Err(Error::invalid("xi", "entries must be finite"));
    }
    penalty.validate(domain.set())
}

/// `argmin_{z in D} <xi, z> + psi(z) + beta V_x(z)`.
pub fn composite_prox(
    geometry: &Geometry,
    domain: &Domain,
    penalty: &CompositePenalty,
    x: &[f64],
    xi: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    check_dim(geometry.dim(), domain.dim())?;
    check_common(domain, penalty, xi)?;
    domain.check_input(x)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", "must be positive and finite"));
    }
    let grad = geometry.proxy_gradient(x);
    let lin: Vec<f64> = xi.iter().zip(&grad).map(|(s, g)| s - beta * g).collect();
    let mut problem = build(domain, penalty, &lin);
    let w = beta * geometry.scaled_coefficient();
    let p = geometry.exponent();
    for (s, &c) in problem.models.iter_mut().zip(geometry.center()) {
        s.add_pow(w, c, p);
    }
    let z = solve(&problem.models, &problem.couplings)?;
    finish(domain, z)
}

/// `min_{z in D} <a, z> + psi(z)`: minimizer and minimum.
pub fn linear_min(
    domain: &Domain,
    penalty: &CompositePenalty,
    a: &[f64],
) -> Result<(Vec<f64>, f64)> {
    check_common(domain, penalty, a)?;
    let problem = build(domain, penalty, a);
    let z = finish(domain, solve(&problem.models, &problem.couplings)?)?;
    let value = linalg::dot(a, &z) + penalty.value(&z);
    Ok((z, value))
}

/// `argmin_{z in D} psi(z) + ||z - v||_2^2 / (2 step)` for any `v`.
pub(crate) fn euclidean_prox(
    domain: &Domain,
    penalty: &CompositePenalty,
    v: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let lin: Vec<f64> = v.iter().map(|vi| -vi / step).collect();
    let mut problem = build(domain, penalty, &lin);
    for s in problem.models.iter_mut() {
        s.quad += 1.0 / step;
    }
    let z = solve(&problem.models, &problem.couplings)?;
    finish(domain, z)
}

/// Objective of the proximal step at `z` (up to the constant `-beta vartheta(x)`
/// terms it is exact: `<xi, z> + psi(z) + beta V_x(z)`).
pub fn prox_objective(
    geometry: &Geometry,
    penalty: &CompositePenalty,
    x: &[f64],
    xi: &[f64],
    beta: f64,
    z: &[f64],
) -> f64 {
    linalg::dot(xi, z) + penalty.value(z) + beta * geometry.bregman_unchecked(x, z)
}

/// Worst violation of the first-order optimality condition of the proximal
/// step at `zstar` against the candidates `zs`, in function-value form:
/// `min_z <xi + beta(vartheta'(zstar) - vartheta'(x)), z - zstar> + psi(z) - psi(zstar)`.
/// Nonnegative (up to rounding) iff `zstar` solves the step.
pub fn vi_residual<'a, I>(
    geometry: &Geometry,
    penalty: &CompositePenalty,
    x: &[f64],
    xi: &[f64],
    beta: f64,
    zstar: &[f64],
    zs: I,
) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let gx = geometry.proxy_gradient(x);
    let gz = geometry.proxy_gradient(zstar);
    let dir: Vec<f64> = (0..xi.len())
        .map(|i| xi[i] + beta * (gz[i] - gx[i]))
        .collect();
    let psi_star = penalty.value(zstar);
    let mut worst = f64::INFINITY;
    for z in zs {
        let d = linalg::dot(&dir, &linalg::sub(z, zstar)) + penalty.value(z) - psi_star;
        worst = worst.min(d);
    }
    worst
}
