//! Core Gaussian linear model: the ridge/MAP estimator, posterior
//! covariance, and the marginal (evidence) computed through k-space
//! identities.
//!
//! The model is y = A x + e with e ~ N(0, I/phi) and x ~ N(0, I/psi). With
//! lambda = psi/phi the MAP estimate minimizes
//!
//! ```text
//! J(x) = ||y - A x||^2 + lambda ||x||^2
//! ```
//!
//! and the marginal law of y is N(0, P_y), P_y = (A A^t + lambda I)/psi.
//! Everything here works in the k-dimensional coefficient space through
//!
//! ```text
//! det(A A^t + lambda I)     = lambda^(m-k) det(A^t A + lambda I)
//! (A A^t + lambda I)^{-1}   = (I - A K(lambda)) / lambda
//! y^t P_y^{-1} y            = phi y^t (y - y_hat)
//! ```
//!
//! so no m x m matrix is ever formed outside of test oracles.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("dimension mismatch: A is {rows}x{cols} but y has length {y_len}")]
    DimensionMismatch { rows: usize, cols: usize, y_len: usize },

    #[error("ridge penalty must be nonnegative and finite, got {0}")]
    InvalidLambda(f64),

    #[error(
        "normal-equations matrix A^t A + lambda I is not positive definite at lambda = {lambda}; \
         A is rank deficient, so lambda = 0 is not allowed here"
    )]
    SingularSystem { lambda: f64 },

    #[error("precision parameters must be positive and finite: phi = {phi}, psi = {psi}")]
    InvalidPrecision { phi: f64, psi: f64 },

    #[error("non-finite intermediate in log-evidence (log-determinant = {logdet})")]
    NonFinite { logdet: f64 },
}

/// Noise precision phi, coefficient precision psi, and their ratio
/// lambda = psi/phi. A single constructor keeps the three consistent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperState {
    phi: f64,
    psi: f64,
}

impl HyperState {
    pub fn new(phi: f64, psi: f64) -> Result<Self, LinearError> {
        if !(phi > 0.0) || !(psi > 0.0) || !phi.is_finite() || !psi.is_finite() {
            return Err(LinearError::InvalidPrecision { phi, psi });
        }
        Ok(Self { phi, psi })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn lambda(&self) -> f64 {
        self.psi / self.phi
    }
}

/// The ridge solution at one penalty value, with the quadratic-form pieces
/// every criterion in this crate is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSolution {
    lambda: f64,
    coefficients: DVector<f64>,
    fitted: DVector<f64>,
    residual_ss: f64,
    coeff_ss: f64,
    logdet: f64,
    data_misfit: f64,
}

impl PosteriorSolution {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// x_hat
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    /// y_hat = A x_hat
    pub fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    /// ||y - y_hat||^2
    pub fn residual_ss(&self) -> f64 {
        self.residual_ss
    }

    /// ||x_hat||^2
    pub fn coeff_ss(&self) -> f64 {
        self.coeff_ss
    }

    /// ln det(A^t A + lambda I)
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// y^t (y - y_hat), computed from inner products. The ridge identity
    /// makes this equal residual_ss + lambda * coeff_ss.
    pub fn data_misfit(&self) -> f64 {
        self.data_misfit
    }
}

/// A fixed (A, y) pair with cached per-lambda ridge solutions.
///
/// The cache is keyed on the bit pattern of lambda and is safe to share
/// across threads; cached entries are exactly what a fresh solve returns.
#[derive(Debug)]
pub struct RidgeProblem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    ata: DMatrix<f64>,
    aty: DVector<f64>,
    yty: f64,
    cache: Mutex<HashMap<u64, Arc<PosteriorSolution>>>,
}

impl RidgeProblem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self, LinearError> {
        if a.nrows() != y.len() {
            return Err(LinearError::DimensionMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                y_len: y.len(),
            });
        }
        let ata = a.transpose() * &a;
        let aty = a.transpose() * &y;
        let yty = y.dot(&y);
        Ok(Self {
            a,
            y,
            ata,
            aty,
            yty,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn data_count(&self) -> usize {
        self.a.nrows()
    }

    pub fn order(&self) -> usize {
        self.a.ncols()
    }

    /// y^t y
    pub fn data_ss(&self) -> f64 {
        self.yty
    }

    /// Solve (A^t A + lambda I) x = A^t y, returning the cached solution if
    /// this lambda has been seen before.
    pub fn solve(&self, lambda: f64) -> Result<Arc<PosteriorSolution>, LinearError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(LinearError::InvalidLambda(lambda));
        }
        let key = lambda.to_bits();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let solution = Arc::new(self.solve_fresh(lambda)?);
        self.cache
            .lock()
            .unwrap()
            .insert(key, solution.clone());
        Ok(solution)
    }

    fn solve_fresh(&self, lambda: f64) -> Result<PosteriorSolution, LinearError> {
        let k = self.order();
        let mut g = self.ata.clone();
        for d in 0..k {
            g[(d, d)] += lambda;
        }
        let chol = Cholesky::new(g).ok_or(LinearError::SingularSystem { lambda })?;
        let coefficients = chol.solve(&self.aty);
        let fitted = &self.a * &coefficients;
        let resid = &self.y - &fitted;
        let residual_ss = resid.norm_squared();
        let coeff_ss = coefficients.norm_squared();
        let data_misfit = self.yty - self.y.dot(&fitted);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(PosteriorSolution {
            lambda,
            coefficients,
            fitted,
            residual_ss,
            coeff_ss,
            logdet,
            data_misfit,
        })
    }
}

/// One-shot ridge solve: minimizes ||y - A x||^2 + lambda ||x||^2.
///
/// lambda = 0 is accepted only when A^t A is nonsingular.
pub fn ridge_solve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<PosteriorSolution, LinearError> {
    let problem = RidgeProblem::new(a.clone(), y.clone())?;
    let arc = problem.solve(lambda)?;
    Ok(arc.as_ref().clone())
}

/// Posterior covariance of the coefficients, (A^t A + lambda I)^{-1} / phi.
pub fn posterior_covariance(
    a: &DMatrix<f64>,
    phi: f64,
    lambda: f64,
) -> Result<DMatrix<f64>, LinearError> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(LinearError::InvalidPrecision { phi, psi: f64::NAN });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(LinearError::InvalidLambda(lambda));
    }
    let k = a.ncols();
    let mut g = a.transpose() * a;
    for d in 0..k {
        g[(d, d)] += lambda;
    }
    let chol = Cholesky::new(g).ok_or(LinearError::SingularSystem { lambda })?;
    let mut cov = chol.inverse();
    cov /= phi;
    Ok(cov)
}

/// ln N(y; 0, P_y) with P_y = (A A^t + lambda I)/psi, evaluated through the
/// k-space identities (no m x m matrix is formed):
///
/// ```text
/// ln det P_y   = -m ln(phi) - k ln(lambda) + ln det(A^t A + lambda I)
/// y^t P_y^-1 y = phi * y^t (y - y_hat)
/// ```
pub fn log_evidence(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    phi: f64,
    psi: f64,
) -> Result<f64, LinearError> {
    let problem = RidgeProblem::new(a.clone(), y.clone())?;
    log_evidence_for(&problem, phi, psi)
}

/// As [`log_evidence`], reusing a problem's per-lambda cache.
pub fn log_evidence_for(
    problem: &RidgeProblem,
    phi: f64,
    psi: f64,
) -> Result<f64, LinearError> {
    let state = HyperState::new(phi, psi)?;
    let lambda = state.lambda();
    let sol = problem.solve(lambda)?;
    let m = problem.data_count() as f64;
    let k = problem.order() as f64;
    let logdet_py = -m * phi.ln() - k * lambda.ln() + sol.logdet();
    if !logdet_py.is_finite() {
        return Err(LinearError::NonFinite { logdet: logdet_py });
    }
    let quad = phi * sol.data_misfit();
    let value = -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet_py - 0.5 * quad;
    if !value.is_finite() {
        return Err(LinearError::NonFinite { logdet: logdet_py });
    }
    Ok(value)
}
