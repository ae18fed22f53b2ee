//! Accuracy certificates computed from a finished trajectory.
//!
//! For `t >= L`,
//! `eps_N(t) = N^{-1} sup_z sum [<grad phi(x_{i-1}), x_i - z> + psi(x_i) - psi(z) + t V_{x_{i-1}}(x_i)]`
//! bounds the gap of the average. `eps_hat_N(t)` is the same expression with the
//! used gradients `y_i` in place of `grad phi(x_{i-1})`, and
//! `Delta_N(tau, t) = eps_hat_N(t) + rho_bar_N(tau) / N` bounds `eps_N(t)` with
//! probability at least `1 - 2 exp(-tau)` when the `y_i` were truncated with the
//! threshold matched to `tau`.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use alloc::vec;

use crate::error::{Error, Result};
use crate::geometry::linear_min;
use crate::linalg;
use crate::problems::Instance;
use crate::rsmd::RunTrace;
use crate::truncation::{tau_window_max, ThresholdPolicy};

/// Problem constants entering `rho_bar`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertificateParams {
    pub radius: f64,
    pub capacity: f64,
    pub sigma: f64,
    /// `M = L R`
    pub m: f64,
    pub upsilon: f64,
}

impl CertificateParams {
    /// Constants of `instance`; `anchor_error` is `upsilon sigma`.
    pub fn from_instance(instance: &Instance, anchor_error: f64) -> Self {
        let sigma = instance.sigma();
        CertificateParams {
            radius: instance.geometry().radius(),
            capacity: instance.geometry().capacity(),
            sigma,
            m: instance.m(),
            upsilon: if sigma > 0.0 { anchor_error / sigma } else { 0.0 },
        }
    }

    /// `max{N sigma^2, M^2 tau}`
    fn a(&self, n: usize, tau: f64) -> f64 {
        (n as f64 * self.sigma * self.sigma).max(self.m * self.m * tau)
    }

    fn check_tau(&self, n: usize, tau: f64) -> Result<()> {
        let max = tau_window_max(n, self.upsilon);
        if tau > 0.0 && tau <= max {
            Ok(())
        } else {
            Err(Error::TauOutOfWindow { tau, min: 0.0, max })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub eps_hat: f64,
    pub rho_bar: f64,
    /// `eps_hat + rho_bar / N`
    pub delta: f64,
    pub tau: f64,
    pub t: f64,
    /// Set when the trace was not truncated with the threshold matched to
    /// `tau`; the probability guarantee is then not established.
    pub heuristic: bool,
}

fn check_t(instance: &Instance, t: f64) -> Result<()> {
    if t >= instance.lipschitz() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::CurvatureBelowLipschitz {
            t,
            lipschitz: instance.lipschitz(),
        })
    }
}

fn eps_with<F>(trace: &RunTrace, instance: &Instance, t: f64, mut gradient: F) -> Result<f64>
where
    F: FnMut(usize) -> alloc::vec::Vec<f64>,
{
    check_t(instance, t)?;
    let n = trace.len();
    let psi = instance.penalty();
    let mut a = vec![0.0; instance.dim()];
    let mut fixed = 0.0;
    for i in 1..=n {
        let g = gradient(i);
        let x = &trace.points()[i];
        fixed += linalg::dot(&g, x) + psi.value(x) + t * trace.bregman()[i - 1];
        linalg::axpy(&mut a, 1.0, &g);
    }
    let (_, min) = linear_min(instance.domain(), &psi.scaled(n as f64), &a)?;
    Ok((fixed - min) / n as f64)
}

/// `eps_N(t)`; evaluates the true gradient along the trace.
pub fn eps_true(trace: &RunTrace, instance: &Instance, t: f64) -> Result<f64> {
    eps_with(trace, instance, t, |i| instance.gradient(&trace.points()[i - 1]))
}

/// `eps_hat_N(t)`; uses only the recorded gradients `y_i` together with the
/// domain, penalty and Lipschitz constant of `instance`.
pub fn eps_hat(trace: &RunTrace, instance: &Instance, t: f64) -> Result<f64> {
    eps_with(trace, instance, t, |i| trace.gradients()[i - 1].clone())
}

/// `rho_bar_N(tau) = 4R sqrt(5 Theta A) + 16R max{sigma sqrt(N tau), M tau} + 2 sqrt(20 A S)`
/// with `A = max{N sigma^2, M^2 tau}` and `S = sum V_{x_{i-1}}(x_i)`.
pub fn rho_bar(n: usize, tau: f64, params: &CertificateParams, bregman_sum: f64) -> Result<f64> {
    params.check_tau(n, tau)?;
    let a = params.a(n, tau);
    let r = params.radius;
    let nf = n as f64;
    let spread = 4.0 * r * (5.0 * params.capacity * a).sqrt();
    let deviation = 16.0 * r * (params.sigma * (nf * tau).sqrt()).max(params.m * tau);
    let balance = if bregman_sum > 0.0 {
        2.0 * (20.0 * a * bregman_sum).sqrt()
    } else {
        0.0
    };
    Ok(spread + deviation + balance)
}

/// `rho_N(tau; mu, nu) = R^2 Theta / nu + 16R max{sigma sqrt(N tau), M tau}
/// + 20 (mu + nu) A + S / mu`, whose minimum over `mu, nu > 0` is `rho_bar`.
pub fn rho_general(
    n: usize,
    tau: f64,
    params: &CertificateParams,
    bregman_sum: f64,
    mu: f64,
    nu: f64,
) -> f64 {
    let a = params.a(n, tau);
    let r = params.radius;
    let nf = n as f64;
    r * r * params.capacity / nu
        + 16.0 * r * (params.sigma * (nf * tau).sqrt()).max(params.m * tau)
        + 20.0 * (mu + nu) * a
        + bregman_sum / mu
}

/// Minimizer `mu* = sqrt(S / (20 A))` of `20 mu A + S / mu`.
pub fn optimal_mu(n: usize, tau: f64, params: &CertificateParams, bregman_sum: f64) -> f64 {
    (bregman_sum / (20.0 * params.a(n, tau))).sqrt()
}

/// `Delta_N(tau, t)` with its components.
pub fn delta(
    trace: &RunTrace,
    instance: &Instance,
    tau: f64,
    t: f64,
    params: &CertificateParams,
) -> Result<Certificate> {
    let heuristic = match trace.policy() {
        ThresholdPolicy::Tau { tau: trace_tau } => {
            if trace_tau != tau {
                return Err(Error::ThresholdMismatch {
                    trace_tau,
                    requested: tau,
                });
            }
            false
        }
        _ => true,
    };
    let eps_hat = eps_hat(trace, instance, t)?;
    let rho_bar = rho_bar(trace.len(), tau, params, trace.bregman_sum())?;
    Ok(Certificate {
        eps_hat,
        rho_bar,
        delta: eps_hat + rho_bar / trace.len() as f64,
        tau,
        t,
        heuristic,
    })
}

#[cfg(test)]
mod tests {
    use alloc::vec;
    use super::*;
    use crate::geometry::{FeasibleSet, GeometryKind, Norm};
    use crate::problems::{make_instance, InstanceSpec, MatrixSpec};
    use crate::rsmd::{run, RsmdConfig};
    use crate::truncation::TruncationConfig;
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;

    fn params(radius: f64, capacity: f64, sigma: f64, m: f64) -> CertificateParams {
        CertificateParams {
            radius,
            capacity,
            sigma,
            m,
            upsilon: 0.0,
        }
    }

    #[test]
    fn rho_bar_examples() {
        let r = rho_bar(100, 4.0, &params(1.0, 0.5, 1.0, 2.0), 5.0).unwrap();
        assert_abs_diff_eq!(r, 583.2456, epsilon = 1e-4);
        let r = rho_bar(1, 1.0, &params(1.0, 0.5, 0.0, 1.0), 0.0).unwrap();
        assert_abs_diff_eq!(r, 22.3246, epsilon = 1e-4);
        let mut p = params(1.0, 0.5, 1.0, 2.0);
        p.upsilon = 1.0;
        assert!(matches!(rho_bar(100, 101.0, &p, 1.0), Err(Error::TauOutOfWindow { .. })));
        assert!(rho_bar(100, 0.0, &p, 1.0).is_err());
    }

    #[test]
    fn general_rho_at_optimum_is_rho_bar() {
        let p = params(1.3, 0.5, 0.7, 2.0);
        let (n, tau, s) = (50, 2.0, 0.8);
        let a = p.a(n, tau);
        let nu = (p.radius * p.radius * p.capacity / (20.0 * a)).sqrt();
        let mu = optimal_mu(n, tau, &p, s);
        assert_abs_diff_eq!(
            rho_general(n, tau, &p, s, mu, nu),
            rho_bar(n, tau, &p, s).unwrap(),
            epsilon = 1e-10
        );
    }

    fn interval() -> Instance {
        let spec = InstanceSpec::new(
            MatrixSpec::Explicit(vec![vec![1.0]]),
            FeasibleSet::boxed(vec![0.0], vec![2.0]).unwrap(),
            GeometryKind::Euclidean,
        );
        make_instance(&spec).unwrap()
    }

    #[test]
    fn eps_true_on_one_step() {
        let inst = interval();
        let cfg = RsmdConfig::new(2.0, 1, TruncationConfig::untruncated(Norm::L2, 1), vec![1.0]);
        let trace = run(&cfg, &inst, &mut crate::rng::stream(0, 0)).unwrap();
        assert_abs_diff_eq!(eps_true(&trace, &inst, 1.0).unwrap(), 0.625, epsilon = 1e-15);
        assert_eq!(eps_hat(&trace, &inst, 1.0).unwrap(), eps_true(&trace, &inst, 1.0).unwrap());
        assert!(matches!(
            eps_true(&trace, &inst, 0.5),
            Err(Error::CurvatureBelowLipschitz { .. })
        ));
    }

    #[test]
    fn eps_hat_linear_sup_over_ball() {
        let spec = InstanceSpec::new(
            MatrixSpec::Explicit(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
            FeasibleSet::ball(Norm::L2, vec![0.0; 2], 1.0).unwrap(),
            GeometryKind::Euclidean,
        );
        let inst = make_instance(&spec).unwrap();
        let trace = RunTrace::from_parts(
            &inst,
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![1.0, 0.0]],
            vec![1.0],
            ThresholdPolicy::Custom,
        )
        .unwrap();
        assert_abs_diff_eq!(eps_hat(&trace, &inst, 0.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn delta_checks_threshold_provenance() {
        let inst = interval();
        let points: Vec<Vec<f64>> = vec![vec![1.0], vec![0.5]];
        let make = |policy| {
            RunTrace::from_parts(&inst, points.clone(), vec![vec![1.0]], vec![2.0], policy)
                .unwrap()
        };
        let p = CertificateParams::from_instance(&inst, 0.0);
        let c = delta(&make(ThresholdPolicy::Tau { tau: 2.0 }), &inst, 2.0, 1.0, &p).unwrap();
        assert!(!c.heuristic);
        assert_abs_diff_eq!(c.delta, c.eps_hat + c.rho_bar, epsilon = 1e-15);
        assert!(matches!(
            delta(&make(ThresholdPolicy::Tau { tau: 3.0 }), &inst, 2.0, 1.0, &p),
            Err(Error::ThresholdMismatch { .. })
        ));
        let c = delta(&make(ThresholdPolicy::Universal), &inst, 2.0, 1.0, &p).unwrap();
        assert!(c.heuristic);
    }
}
