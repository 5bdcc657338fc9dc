//! Gamma hyperpriors and the hyperparameter criterion in its equivalent
//! forms, including the closed-form noise-precision profile and the 1-D
//! search over the regularization ratio.
//!
//! With Gamma priors phi ~ G(a1, b1) and psi ~ G(a2, b2) the negative log
//! posterior of the precisions (up to constants) is
//!
//! ```text
//! full:    (1-a1) ln phi + (1-a2) ln psi + b1 phi + b2 psi
//!          + 1/2 ln det P_y + 1/2 y^t P_y^{-1} y
//! reduced: (1-a1-(m-k)/2) ln phi + (1-a2-k/2) ln psi + b1 phi + b2 psi
//!          + 1/2 ln det(A^t A + lambda I) + phi/2 y^t (y - y_hat)
//! lambda:  (2-a1-a2-m/2) ln phi + (1-a2-k/2) ln lambda + b1 phi
//!          + b2 phi lambda + 1/2 ln det(A^t A + lambda I)
//!          + phi/2 y^t (y - y_hat)
//! ```
//!
//! with lambda = psi/phi. The full form deliberately works in data space
//! (it builds the m x m marginal covariance) so it can cross-check the
//! k-space forms; the reduced and lambda forms never leave coefficient
//! space. For fixed lambda the stationary point in phi is explicit:
//!
//! ```text
//! phi* = (m/2 + a1 + a2 - 2) / (b1 + lambda b2 + 1/2 y^t (y - y_hat))
//! ```

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::linear::{LinearError, RidgeProblem};

#[derive(Debug, Error)]
pub enum HyperError {
    #[error("gamma prior parameters must be positive and finite: shape = {shape}, rate = {rate}")]
    InvalidGamma { shape: f64, rate: f64 },

    #[error("precision arguments must be positive and finite: phi = {phi}, psi = {psi}")]
    InvalidPrecision { phi: f64, psi: f64 },

    #[error("noise precision must be positive and finite, got {0}")]
    InvalidPhi(f64),

    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error(
        "profile numerator m/2 + a1 + a2 - 2 = {numerator} is not positive; the criterion has no \
         interior stationary point in phi. Increase a1 + a2 or provide more data."
    )]
    NoInteriorPhi { numerator: f64 },

    #[error("lambda grid must be nonempty, strictly positive, and strictly increasing")]
    InvalidLambdaGrid,

    #[error("marginal covariance is not positive definite")]
    IndefiniteMarginal,

    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// A proper Gamma prior with shape alpha and rate beta (mean alpha/beta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    shape: f64,
    rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self, HyperError> {
        if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
            return Err(HyperError::InvalidGamma { shape, rate });
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Unnormalized negative log density, (1 - shape) ln x + rate * x.
    pub fn neg_log_density_unnorm(&self, x: f64) -> f64 {
        (1.0 - self.shape) * x.ln() + self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // rand_distr parameterizes by scale = 1/rate
        let dist = Gamma::new(self.shape, 1.0 / self.rate).expect("validated parameters");
        dist.sample(rng)
    }
}

/// The prior pair on (phi, psi). Defaults to shape 2, rate 1 on both:
/// proper, unimodal, mean 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriors {
    pub phi: GammaPrior,
    pub psi: GammaPrior,
}

impl HyperPriors {
    pub fn new(phi: GammaPrior, psi: GammaPrior) -> Self {
        Self { phi, psi }
    }

    pub fn from_parts(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self, HyperError> {
        Ok(Self {
            phi: GammaPrior::new(a1, b1)?,
            psi: GammaPrior::new(a2, b2)?,
        })
    }
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            phi: GammaPrior { shape: 2.0, rate: 1.0 },
            psi: GammaPrior { shape: 2.0, rate: 1.0 },
        }
    }
}

/// Result of the 1-D lambda search on the profiled criterion.
#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub phi: f64,
    pub criterion: f64,
    /// True when the minimizer sits on an end of the supplied grid.
    pub at_boundary: bool,
    /// Every (lambda, criterion) pair evaluated, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// The decade grid 10^lo, 10^(lo+1), ..., 10^hi.
pub fn decade_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

/// Default search grid for lambda: 13 decades from 1e-8 to 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    decade_grid(-8, 4)
}

/// Hyperparameter criterion for a fixed (A, y) pair.
///
/// Effective prior constants are stored as plain numbers so the improper
/// Jeffreys choice (a = b = 0) can be swapped in for comparison. With
/// Jeffreys priors the criterion may have no interior minimum; the proper
/// Gamma default avoids that failure mode.
#[derive(Debug)]
pub struct HyperCriterion<'a> {
    problem: &'a RidgeProblem,
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
}

impl<'a> HyperCriterion<'a> {
    pub fn new(problem: &'a RidgeProblem, priors: HyperPriors) -> Self {
        Self {
            problem,
            a1: priors.phi.shape(),
            b1: priors.phi.rate(),
            a2: priors.psi.shape(),
            b2: priors.psi.rate(),
        }
    }

    /// Improper Jeffreys priors p(phi) ~ 1/phi, p(psi) ~ 1/psi, i.e. the
    /// a = b = 0 limit. Comparison only: the posterior may be improper and
    /// the profiled criterion may run off to a boundary.
    pub fn with_jeffreys(problem: &'a RidgeProblem) -> Self {
        Self {
            problem,
            a1: 0.0,
            b1: 0.0,
            a2: 0.0,
            b2: 0.0,
        }
    }

    pub fn problem(&self) -> &RidgeProblem {
        self.problem
    }

    pub fn prior_constants(&self) -> (f64, f64, f64, f64) {
        (self.a1, self.b1, self.a2, self.b2)
    }

    fn check_precisions(phi: f64, psi: f64) -> Result<(), HyperError> {
        if !(phi > 0.0) || !(psi > 0.0) || !phi.is_finite() || !psi.is_finite() {
            return Err(HyperError::InvalidPrecision { phi, psi });
        }
        Ok(())
    }

    /// Data-space form: builds P_y = (A A^t + lambda I)/psi explicitly.
    pub fn full(&self, phi: f64, psi: f64) -> Result<f64, HyperError> {
        Self::check_precisions(phi, psi)?;
        let lambda = psi / phi;
        let m = self.problem.data_count();
        let a = self.problem.design();
        let mut py = a * a.transpose();
        for d in 0..m {
            py[(d, d)] += lambda;
        }
        py /= psi;
        let chol = Cholesky::new(py).ok_or(HyperError::IndefiniteMarginal)?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let solved = chol.solve(self.problem.data());
        let quad = self.problem.data().dot(&solved);
        Ok((1.0 - self.a1) * phi.ln()
            + (1.0 - self.a2) * psi.ln()
            + self.b1 * phi
            + self.b2 * psi
            + 0.5 * logdet
            + 0.5 * quad)
    }

    /// Coefficient-space form; identical to [`Self::full`] by the
    /// determinant and Woodbury identities.
    pub fn reduced(&self, phi: f64, psi: f64) -> Result<f64, HyperError> {
        Self::check_precisions(phi, psi)?;
        let lambda = psi / phi;
        let sol = self.problem.solve(lambda)?;
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        Ok((1.0 - self.a1 - 0.5 * (m - k)) * phi.ln()
            + (1.0 - self.a2 - 0.5 * k) * psi.ln()
            + self.b1 * phi
            + self.b2 * psi
            + 0.5 * sol.logdet()
            + 0.5 * phi * sol.data_misfit())
    }

    /// The (phi, lambda) parameterization, psi = lambda * phi.
    pub fn in_lambda(&self, phi: f64, lambda: f64) -> Result<f64, HyperError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(HyperError::InvalidLambda(lambda));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(HyperError::InvalidPhi(phi));
        }
        let sol = self.problem.solve(lambda)?;
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        Ok((2.0 - self.a1 - self.a2 - 0.5 * m) * phi.ln()
            + (1.0 - self.a2 - 0.5 * k) * lambda.ln()
            + self.b1 * phi
            + self.b2 * phi * lambda
            + 0.5 * sol.logdet()
            + 0.5 * phi * sol.data_misfit())
    }

    /// Closed-form stationary point of the criterion in phi at fixed lambda.
    pub fn profile_phi(&self, lambda: f64) -> Result<f64, HyperError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(HyperError::InvalidLambda(lambda));
        }
        let m = self.problem.data_count() as f64;
        let numerator = 0.5 * m + self.a1 + self.a2 - 2.0;
        if numerator <= 0.0 {
            return Err(HyperError::NoInteriorPhi { numerator });
        }
        let sol = self.problem.solve(lambda)?;
        let denom = self.b1 + lambda * self.b2 + 0.5 * sol.data_misfit();
        Ok(numerator / denom)
    }

    /// Profiled criterion g(lambda) = criterion(profile_phi(lambda), lambda).
    pub fn profiled(&self, lambda: f64) -> Result<f64, HyperError> {
        let phi = self.profile_phi(lambda)?;
        self.in_lambda(phi, lambda)
    }

    /// Minimize the profiled criterion over the supplied grid, then refine
    /// with golden-section search one decade to each side of the grid
    /// minimizer (skipped when the minimizer is a grid boundary, which is
    /// flagged instead).
    pub fn optimize_lambda(&self, grid: &[f64]) -> Result<LambdaSearch, HyperError> {
        if grid.is_empty()
            || grid.iter().any(|l| !(*l > 0.0) || !l.is_finite())
            || grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(HyperError::InvalidLambdaGrid);
        }
        let mut trace = Vec::with_capacity(grid.len() + 64);
        let mut best_idx = 0;
        let mut best_val = f64::INFINITY;
        for (i, &lambda) in grid.iter().enumerate() {
            let val = self.profiled(lambda)?;
            trace.push((lambda, val));
            if val < best_val {
                best_val = val;
                best_idx = i;
            }
        }
        let at_boundary = grid.len() > 1 && (best_idx == 0 || best_idx == grid.len() - 1);
        let mut best_lambda = grid[best_idx];

        if !at_boundary && grid.len() > 1 {
            // golden-section refinement on ln(lambda) over +-1 decade
            let mut lo = (best_lambda / 10.0).ln();
            let mut hi = (best_lambda * 10.0).ln();
            let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = hi - inv_phi * (hi - lo);
            let mut x2 = lo + inv_phi * (hi - lo);
            let mut f1 = self.profiled(x1.exp())?;
            let mut f2 = self.profiled(x2.exp())?;
            trace.push((x1.exp(), f1));
            trace.push((x2.exp(), f2));
            for _ in 0..120 {
                if hi - lo < 1e-10 {
                    break;
                }
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - inv_phi * (hi - lo);
                    f1 = self.profiled(x1.exp())?;
                    trace.push((x1.exp(), f1));
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + inv_phi * (hi - lo);
                    f2 = self.profiled(x2.exp())?;
                    trace.push((x2.exp(), f2));
                }
            }
            let (cand_lambda, cand_val) = if f1 <= f2 {
                (x1.exp(), f1)
            } else {
                (x2.exp(), f2)
            };
            if cand_val < best_val {
                best_val = cand_val;
                best_lambda = cand_lambda;
            }
        }

        Ok(LambdaSearch {
            lambda: best_lambda,
            phi: self.profile_phi(best_lambda)?,
            criterion: best_val,
            at_boundary,
            trace,
        })
    }

    /// ln of the phi-marginalized weight at fixed lambda,
    /// ln Int exp(-criterion(phi, lambda)) dphi, by trapezoidal quadrature
    /// on a log-spaced phi grid centered on the profile point.
    pub fn log_marginal_in_lambda(&self, lambda: f64, n_grid: usize) -> Result<f64, HyperError> {
        let n = n_grid.max(8);
        let center = self.profile_phi(lambda)?;
        let lo = center.ln() - 14.0;
        let hi = center.ln() + 14.0;
        let h = (hi - lo) / (n - 1) as f64;
        // Int f(phi) dphi = Int f(phi) phi dln(phi); log-sum-exp over the grid
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let lphi = lo + i as f64 * h;
            let phi = lphi.exp();
            let weight: f64 = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let val = -self.in_lambda(phi, lambda)? + lphi + weight.ln();
            terms.push(val);
        }
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        Ok(max + sum.ln() + h.ln())
    }
}
