#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::geometry::Norm;

/// Coordinate distribution of the additive gradient noise, before scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian,
    /// Student t with `dof > 2` degrees of freedom.
    StudentT { dof: f64 },
    /// `S * P` with a fair random sign `S` and `P ~ Pareto(1, tail)`, `tail > 2`.
    Pareto { tail: f64 },
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::StudentT { dof: parameter } | NoiseKind::Pareto { tail: parameter } => {
                if parameter.is_nan() || parameter <= 2.0 {
                    Err(Error::InfiniteVariance { parameter })
                } else if !parameter.is_finite() {
                    Err(Error::invalid("noise", "tail parameter must be finite"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Variance of one unscaled coordinate.
    pub fn unit_variance(&self) -> f64 {
        match *self {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => 1.0,
            NoiseKind::StudentT { dof } => dof / (dof - 2.0),
            NoiseKind::Pareto { tail } => tail / (tail - 2.0),
        }
    }

    /// `E max_i X_i^2` over `n` i.i.d. unscaled coordinates, when known in
    /// closed form. For the symmetrized Pareto law `max_i P_i = U^(-1/tail)`
    /// with `U ~ Beta(1, n)`, giving
    /// `Gamma(1 - 2/tail) Gamma(n + 1) / Gamma(n + 1 - 2/tail)`.
    pub fn max_square_moment(&self, n: usize) -> Option<f64> {
        match *self {
            NoiseKind::None => Some(0.0),
            _ if n == 1 => Some(self.unit_variance()),
            NoiseKind::Pareto { tail } => {
                let q = 2.0 / tail;
                let n = n as f64;
                Some(
                    (libm::lgamma(1.0 - q) + libm::lgamma(n + 1.0) - libm::lgamma(n + 1.0 - q))
                        .exp(),
                )
            }
            _ => None,
        }
    }

    /// One unscaled coordinate.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => StandardNormal.sample(rng),
            NoiseKind::StudentT { dof } => StudentT::new(dof)
                .expect("validated degrees of freedom")
                .sample(rng),
            NoiseKind::Pareto { tail } => {
                let p: f64 = Pareto::new(1.0, tail)
                    .expect("validated tail index")
                    .sample(rng);
                if rng.random::<bool>() {
                    p
                } else {
                    -p
                }
            }
        }
    }
}

/// Calibrated additive noise: i.i.d. coordinates of `kind`, multiplied by
/// `scale`, so that `E ||noise||_*^2 = sigma^2` in the dual norm it was
/// calibrated for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    scale: f64,
    sigma: f64,
}

/// Monte Carlo size and seed for the dual-norm calibrations without a closed form.
pub const CALIBRATION_SAMPLES: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            kind: NoiseKind::None,
            scale: 0.0,
            sigma: 0.0,
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None
    }

    /// Adds one noise draw to `g` in place.
    pub fn perturb<R: Rng + ?Sized>(&self, g: &mut [f64], rng: &mut R) {
        if self.is_none() {
            return;
        }
        for v in g.iter_mut() {
            *v += self.scale * self.kind.draw(rng);
        }
    }
}

/// Chooses the scale so that `E ||noise||_*^2 = sigma^2` for the dual of
/// `norm` in dimension `dim`: analytically for l2 duals and for the Pareto
/// family, by a fixed-seed Monte Carlo fit otherwise.
pub fn calibrate_noise(kind: NoiseKind, sigma: f64, norm: Norm, dim: usize) -> Result<NoiseModel> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", "must be finite and nonnegative"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    kind.validate()?;
    if sigma == 0.0 || kind == NoiseKind::None {
        return Ok(NoiseModel::none());
    }
    let second_moment = match norm {
        Norm::L2 => dim as f64 * kind.unit_variance(),
        Norm::L1 => match kind.max_square_moment(dim) {
            Some(m) => m,
            None => fit_max_square(kind, dim),
        },
    };
    Ok(NoiseModel {
        kind,
        scale: sigma / second_moment.sqrt(),
        sigma,
    })
}

fn fit_max_square(kind: NoiseKind, dim: usize) -> f64 {
    let mut rng = crate::rng::stream(CALIBRATION_SEED, 0);
    let mut total = 0.0;
    for _ in 0..CALIBRATION_SAMPLES {
        let mut m = 0.0f64;
        for _ in 0..dim {
            let v = kind.draw(&mut rng);
            m = m.max(v * v);
        }
        total += m;
    }
    total / CALIBRATION_SAMPLES as f64
}
