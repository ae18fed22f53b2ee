//! Synthetic composite problems `F = phi + psi` over a feasible set, with
//! quadratic `phi(x) = 1/2 <x, A x> - <b, x>`, a reference optimum and a
//! stochastic gradient oracle with calibrated noise.

mod noise;
pub mod reference;

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    CompositePenalty, Domain, FeasibleSet, Geometry, GeometryKind, Norm, NormBall, INPUT_TOL,
};
use crate::linalg;

pub use noise::{calibrate_noise, NoiseKind, NoiseModel, CALIBRATION_SAMPLES};

/// `phi(x) = 1/2 <x, A x> - <b, x>` with symmetric positive semidefinite `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    n: usize,
    /// row-major
    a: Vec<f64>,
    b: Vec<f64>,
    eig_min: f64,
    eig_max: f64,
}

impl Quadratic {
    /// From a row-major symmetric PSD matrix.
    pub fn new(n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        check_dim(n * n, a.len())?;
        check_dim(n, b.len())?;
        if !linalg::is_finite(&a) || !linalg::is_finite(&b) {
            return Err(Error::invalid("matrix", "entries must be finite"));
        }
        let scale = linalg::norm_linf(&a).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("matrix", "must be symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &a)).eigenvalues;
        let eig_min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let eig_max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if eig_min < -1e-10 * scale {
            return Err(Error::invalid("matrix", "must be positive semidefinite"));
        }
        Ok(Quadratic {
            n,
            a,
            b,
            eig_min: eig_min.max(0.0),
            eig_max: eig_max.max(0.0),
        })
    }

    /// `A = Q diag(spectrum) Q^T` with `Q` a seeded random orthogonal matrix.
    pub fn from_spectrum(spectrum: &[f64], seed: u64) -> Result<Self> {
        let n = spectrum.len();
        if n == 0 {
            return Err(Error::invalid("spectrum", "must be non-empty"));
        }
        if spectrum.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("spectrum", "eigenvalues must be finite and nonnegative"));
        }
        let mut rng = crate::rng::stream(seed, u64::MAX);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose();
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                flat[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        Quadratic::new(n, flat, vec![0.0; n])
    }

    pub fn with_linear(mut self, b: Vec<f64>) -> Result<Self> {
        check_dim(self.n, b.len())?;
        self.b = b;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn eigen_min(&self) -> f64 {
        self.eig_min
    }

    pub fn eigen_max(&self) -> f64 {
        self.eig_max
    }

    /// `A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.chunks_exact(self.n).map(|row| linalg::dot(row, x)).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dot(x, &self.apply(x)) - linalg::dot(&self.b, x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.apply(x);
        linalg::axpy(&mut g, -1.0, &self.b);
        g
    }

    /// Operator norm of `A` from `norm` to its dual: `lambda_max` for l2,
    /// `max |A_ij|` for l1 -> linf.
    pub fn lipschitz(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L2 => self.eig_max,
            Norm::L1 => linalg::norm_linf(&self.a),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixSpec {
    /// Eigenvalues of `A`; eigenvectors are drawn from the instance seed.
    Spectrum(Vec<f64>),
    /// Rows of `A`.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum LinearTerm {
    Zero,
    Explicit(Vec<f64>),
    /// `b = A x`, making `x` the unconstrained minimizer of `phi`.
    Minimizer(Vec<f64>),
}

/// Everything needed to build an [`Instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSpec {
    pub matrix: MatrixSpec,
    pub linear: LinearTerm,
    pub set: FeasibleSet,
    pub geometry: GeometryKind,
    /// Proxy center `x0`; defaults to the set's natural center.
    pub center: Option<Vec<f64>>,
    pub penalty: CompositePenalty,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(matrix: MatrixSpec, set: FeasibleSet, geometry: GeometryKind) -> Self {
        InstanceSpec {
            matrix,
            linear: LinearTerm::Zero,
            set,
            geometry,
            center: None,
            penalty: CompositePenalty::Zero,
            noise: NoiseKind::None,
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// A composite problem with known optimum and a stochastic oracle.
/// Immutable; share freely across replications.
#[derive(Clone, Debug)]
pub struct Instance {
    phi: Quadratic,
    penalty: CompositePenalty,
    domain: Domain,
    geometry: Geometry,
    lipschitz: f64,
    noise: NoiseModel,
    fstar: f64,
    xstar: Vec<f64>,
    kappa: Option<f64>,
}

/// Builds the instance, its constants and its reference optimum.
pub fn make_instance(spec: &InstanceSpec) -> Result<Instance> {
    let n = spec.set.dim();
    let mut phi = match &spec.matrix {
        MatrixSpec::Spectrum(s) => {
            check_dim(n, s.len())?;
            Quadratic::from_spectrum(s, spec.seed)?
        }
        MatrixSpec::Explicit(rows) => {
            check_dim(n, rows.len())?;
            for row in rows {
                check_dim(n, row.len())?;
            }
            Quadratic::new(n, rows.concat(), vec![0.0; n])?
        }
    };
    match &spec.linear {
        LinearTerm::Zero => {}
        LinearTerm::Explicit(b) => phi = phi.with_linear(b.clone())?,
        LinearTerm::Minimizer(x) => {
            check_dim(n, x.len())?;
            let b = phi.apply(x);
            phi = phi.with_linear(b)?;
        }
    }
    spec.penalty.validate(&spec.set)?;
    let center = spec
        .center
        .clone()
        .unwrap_or_else(|| spec.set.default_center());
    check_dim(n, center.len())?;
    let domain = Domain::new(spec.set.clone());
    if !domain.contains(&center, INPUT_TOL) {
        return Err(Error::invalid("center", "must lie in the feasible set"));
    }
    let norm = spec.geometry.norm();
    let radius = spec.set.radius_about(&center, norm);
    let geometry = Geometry::new(spec.geometry, center.clone(), radius)?;
    let noise = calibrate_noise(spec.noise, spec.sigma, norm, n)?;
    let lipschitz = phi.lipschitz(norm);
    let (xstar, fstar) = reference::solve(
        &phi,
        &spec.penalty,
        &domain,
        &center,
        phi.lipschitz(Norm::L2),
    )?;
    let kappa = (phi.eigen_min() > 0.0).then(|| match norm {
        Norm::L2 => phi.eigen_min(),
        Norm::L1 => phi.eigen_min() / n as f64,
    });
    Ok(Instance {
        phi,
        penalty: spec.penalty,
        domain,
        geometry,
        lipschitz,
        noise,
        fstar,
        xstar,
        kappa,
    })
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn phi(&self) -> &Quadratic {
        &self.phi
    }

    pub fn penalty(&self) -> &CompositePenalty {
        &self.penalty
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// `L`, Lipschitz constant of `grad phi` from the norm to its dual.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `M = L R`.
    pub fn m(&self) -> f64 {
        self.lipschitz * self.geometry.radius()
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn sigma(&self) -> f64 {
        self.noise.sigma()
    }

    pub fn fstar(&self) -> f64 {
        self.fstar
    }

    pub fn xstar(&self) -> &[f64] {
        &self.xstar
    }

    /// Quadratic growth constant in the instance norm, when `A` is definite.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        Instance {
            noise,
            ..self.clone()
        }
    }

    /// `F(x)`; `x` must be feasible.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_input(x)?;
        Ok(self.objective_unchecked(x))
    }

    pub fn objective_unchecked(&self, x: &[f64]) -> f64 {
        self.phi.value(x) + self.penalty.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.phi.gradient(x)
    }

    /// `G(x, omega) = grad phi(x) + noise` from the instance's noise model.
    pub fn sample_gradient<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        self.sample_gradient_with(&self.noise, x, rng)
    }

    pub fn sample_gradient_with<R: Rng + ?Sized>(
        &self,
        noise: &NoiseModel,
        x: &[f64],
        rng: &mut R,
    ) -> Vec<f64> {
        let mut g = self.phi.gradient(x);
        noise.perturb(&mut g, rng);
        g
    }

    /// The instance restricted to `{x in X : ||x - center|| <= radius}`, with the
    /// proxy recentered there. Reference optimum and constants are kept.
    pub fn localized(&self, center: &[f64], radius: f64) -> Result<Self> {
        let ball = NormBall::new(self.geometry.norm(), center.to_vec(), radius)?;
        let domain = Domain::new(self.domain.set().clone()).restricted(ball)?;
        domain.check_input(center)?;
        let geometry = self.geometry.recentered(center.to_vec(), radius)?;
        Ok(Instance {
            domain,
            geometry,
            ..self.clone()
        })
    }
}
