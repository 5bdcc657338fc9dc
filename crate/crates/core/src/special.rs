//! Scalar special functions shared by the basis families and the forward model.

use std::f64::consts::PI;

/// Cylindrical Bessel function of the first kind, order zero.
///
/// Power series below the crossover argument, Hankel asymptotic expansion
/// above it. Absolute accuracy is better than 1e-11 everywhere, which is
/// well inside the tolerances of the design-matrix construction.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_CROSSOVER {
        j0_series(x)
    } else {
        j0_asymptotic(x)
    }
}

/// Spherical Bessel function of order zero, sin(x)/x with the removable
/// singularity filled in. Even in x.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

// Series and asymptotic branches are balanced near this argument: the series
// loses ~3e-12 to cancellation here, the asymptotic tail is ~7e-13.
const SERIES_CROSSOVER: f64 = 14.0;

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    while k <= 200.0 {
        term *= -q / (k * k);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
        k += 1.0;
    }
    sum
}

// Hankel expansion: J0(x) = sqrt(2/(pi x)) [P(x) cos(chi) + Q(x) sin(chi)],
// chi = x - pi/4, with
//   P(x) = 1 - s2 + s4 - ...,   Q(x) = s1 - s3 + s5 - ...,
//   s_m  = prod_{j=1..m} (2j-1)^2 / (m! (8x)^m).
// The series are truncated at the smallest term (optimal truncation).
fn j0_asymptotic(x: f64) -> f64 {
    let mut s = 1.0_f64; // s_0
    let mut p = 1.0_f64;
    let mut q = 0.0_f64;
    let mut sign_p = -1.0_f64;
    let mut sign_q = 1.0_f64;
    let mut m = 1.0_f64;
    loop {
        let next = s * (2.0 * m - 1.0) * (2.0 * m - 1.0) / (m * 8.0 * x);
        if next >= s && m > 1.0 {
            break; // divergent tail reached
        }
        s = next;
        if (m as u64) % 2 == 1 {
            q += sign_q * s;
            sign_q = -sign_q;
        } else {
            p += sign_p * s;
            sign_p = -sign_p;
        }
        if s < 1e-17 || m >= 40.0 {
            break;
        }
        m += 1.0;
    }
    let chi = x - PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() + q * chi.sin())
}
