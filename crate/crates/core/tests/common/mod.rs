//! Shared test oracles. Everything here deliberately takes the routes the
//! library avoids: explicit dense inverses, m-space covariances, and
//! adaptive Simpson quadrature, so agreements are genuine cross-checks.

#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))
}

/// Ridge estimate by explicit dense inverse of the normal equations.
pub fn ridge_by_inverse(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let k = a.ncols();
    let mut g = a.transpose() * a;
    for d in 0..k {
        g[(d, d)] += lambda;
    }
    let ginv = g.try_inverse().expect("test systems are well conditioned");
    ginv * (a.transpose() * y)
}

/// The marginal covariance P_y = (A A^t + lambda I)/psi, formed explicitly.
pub fn dense_marginal_covariance(a: &DMatrix<f64>, phi: f64, psi: f64) -> DMatrix<f64> {
    let m = a.nrows();
    let lambda = psi / phi;
    let mut py = a * a.transpose();
    for d in 0..m {
        py[(d, d)] += lambda;
    }
    py / psi
}

/// ln N(y; 0, P_y) evaluated entirely in data space.
pub fn dense_log_evidence(a: &DMatrix<f64>, y: &DVector<f64>, phi: f64, psi: f64) -> f64 {
    let py = dense_marginal_covariance(a, phi, psi);
    let m = y.len() as f64;
    let chol = Cholesky::new(py).expect("P_y is positive definite");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = y.dot(&chol.solve(y));
    -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * quad
}

/// Analytic gradient of the hyperparameter criterion in (phi, psi), from
/// matrix calculus on the dense m-space form:
///
///   d/dphi = (1-a1)/phi + b1 - tr(P^-1)/(2 phi^2) + |P^-1 y|^2/(2 phi^2)
///   d/dpsi = (1-a2)/psi + b2 - tr(P^-1 A A^t)/(2 psi^2)
///            + |A^t P^-1 y|^2/(2 psi^2)
pub fn dense_criterion_gradient(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    constants: (f64, f64, f64, f64),
    phi: f64,
    psi: f64,
) -> (f64, f64) {
    let (a1, b1, a2, b2) = constants;
    let py = dense_marginal_covariance(a, phi, psi);
    let pinv = py.try_inverse().expect("P_y invertible");
    let pinv_y = &pinv * y;
    let at_pinv_y = a.transpose() * &pinv_y;
    let aat = a * a.transpose();
    let tr_pinv = pinv.trace();
    let tr_pinv_aat = (&pinv * &aat).trace();
    let g_phi = (1.0 - a1) / phi + b1 - tr_pinv / (2.0 * phi * phi)
        + pinv_y.norm_squared() / (2.0 * phi * phi);
    let g_psi = (1.0 - a2) / psi + b2 - tr_pinv_aat / (2.0 * psi * psi)
        + at_pinv_y.norm_squared() / (2.0 * psi * psi);
    (g_phi, g_psi)
}

/// Adaptive Simpson quadrature, independent of the library's
/// Gauss-Legendre rule.
pub fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let c = 0.5 * (a + b);
        let left = simpson(f, a, c);
        let right = simpson(f, c, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, c, left, 0.5 * tol, depth - 1)
                + recurse(f, c, b, right, 0.5 * tol, depth - 1)
        }
    }
    // seed the recursion with a modest uniform split so narrow features
    // cannot hide from the first estimate
    let n0 = 64;
    let h = (b - a) / n0 as f64;
    let mut total = 0.0;
    for i in 0..n0 {
        let lo = a + i as f64 * h;
        let hi = lo + h;
        total += recurse(&f, lo, hi, simpson(&f, lo, hi), tol / n0 as f64, 40);
    }
    total
}

/// Central finite difference with relative step.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, rel_h: f64) -> f64 {
    let h = rel_h * x.abs().max(1e-8);
    (f(x + h) - f(x - h)) / (2.0 * h)
}
