//! Electron-scattering forward model and ground-truth generators.
//!
//! The symmetric Fermi charge density
//!
//! ```text
//! rho(r) = alpha cosh(R/d) / (cosh(R/d) + cosh(r/d))
//! ```
//!
//! has the closed-form charge form factor
//!
//! ```text
//! F(q) = -(4 pi^2 alpha d / q) coth(R/d)
//!        [ R cos(qR)/sinh(pi q d) - pi d sin(qR) cosh(pi q d)/sinh^2(pi q d) ]
//! ```
//!
//! and the normalization 4 pi Int r^2 rho dr = Z fixes the amplitude, so
//! only two of (alpha, R, d) are independent. The forward transform is
//! F(q) = 4 pi Int_0^inf r^2 j0(q r) rho(r) dr; the closed form and the
//! quadrature of the transform cross-check each other.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::basis::{BasisError, BasisSet, DesignMatrices, Family, FrequencyGrid, RadialGrid, RadialRule};
use crate::quadrature::{integrate_oscillatory, GaussLegendre};
use crate::special::sinc;

#[derive(Debug, Error)]
pub enum ScatteringError {
    #[error("Fermi parameters must be positive: R = {half_radius}, d = {diffuseness}, Z = {charge}")]
    InvalidFermiParameters {
        half_radius: f64,
        diffuseness: f64,
        charge: f64,
    },

    #[error("momentum transfer must be positive, got {0}")]
    NonPositiveMomentum(f64),

    #[error("q points must be strictly positive and strictly increasing")]
    InvalidQList,

    #[error("noise level must be nonnegative and finite, got {0}")]
    InvalidNoise(f64),

    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// The momentum-transfer points of the reference demo dataset (fm^-1).
pub const DEMO_Q_POINTS: [f64; 15] = [
    0.001, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0,
];

/// Below this momentum transfer the closed form is 0/0-prone and the
/// transform is evaluated by quadrature instead.
const CLOSED_FORM_Q_MIN: f64 = 1e-3;

/// Symmetric Fermi charge distribution with amplitude alpha (fm^-3),
/// half-density radius R (fm), diffuseness d (fm), and charge number Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiModel {
    amplitude: f64,
    half_radius: f64,
    diffuseness: f64,
    charge: f64,
}

impl FermiModel {
    /// Build the model with the amplitude derived from the normalization
    /// condition 4 pi Int r^2 rho dr = Z.
    pub fn normalized(half_radius: f64, diffuseness: f64, charge: f64) -> Result<Self, ScatteringError> {
        let amplitude = normalization_amplitude(half_radius, diffuseness, charge)?;
        Ok(Self {
            amplitude,
            half_radius,
            diffuseness,
            charge,
        })
    }

    /// The carbon-12 reference: R = 2.5170 fm, d = 0.626 fm, Z = 6.
    pub fn carbon12() -> Self {
        Self::normalized(2.5170, 0.626, 6.0).expect("reference parameters are valid")
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn half_radius(&self) -> f64 {
        self.half_radius
    }

    pub fn diffuseness(&self) -> f64 {
        self.diffuseness
    }

    pub fn charge(&self) -> f64 {
        self.charge
    }

    /// Radius beyond which the density is below ~1e-17 of the amplitude.
    pub fn support_radius(&self) -> f64 {
        self.half_radius + 40.0 * self.diffuseness
    }

    /// rho(r). Evaluated through exponentials of nonpositive arguments so
    /// large r/d never overflows cosh.
    pub fn density(&self, r: f64) -> f64 {
        let a = self.half_radius / self.diffuseness;
        let b = r.abs() / self.diffuseness;
        // cosh(a) / (cosh(a) + cosh(b)), scaled by exp(-max(a, b))
        let (num, den) = if b <= a {
            let num = 1.0 + (-2.0 * a).exp();
            (num, num + (b - a).exp() + (-b - a).exp())
        } else {
            let num = (a - b).exp() + (-a - b).exp();
            (num, num + 1.0 + (-2.0 * b).exp())
        };
        self.amplitude * num / den
    }

    /// F(q) by the closed form for q above the small-q guard, by
    /// quadrature of the transform below it. Hyperbolic factors switch to
    /// their exponential forms before sinh/cosh can overflow.
    pub fn form_factor(&self, q: f64) -> Result<f64, ScatteringError> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(ScatteringError::NonPositiveMomentum(q));
        }
        if q < CLOSED_FORM_Q_MIN {
            return Ok(self.form_factor_quadrature(q));
        }
        let d = self.diffuseness;
        let r = self.half_radius;
        let u = std::f64::consts::PI * q * d;
        let (inv_sinh, cosh_over_sinh2) = if u > 350.0 {
            // 1/sinh(u) = 2 e^-u / (1 - e^-2u); the correction is < 1e-304
            let e = (-u).exp();
            (2.0 * e, 2.0 * e)
        } else {
            let s = u.sinh();
            (1.0 / s, u.cosh() / (s * s))
        };
        let coth = 1.0 / (r / d).tanh();
        let bracket = r * (q * r).cos() * inv_sinh
            - std::f64::consts::PI * d * (q * r).sin() * cosh_over_sinh2;
        Ok(-(4.0 * std::f64::consts::PI.powi(2) * self.amplitude * d / q) * coth * bracket)
    }

    /// The transform 4 pi Int_0^rmax r^2 j0(q r) rho(r) dr by composite
    /// Gauss-Legendre quadrature, truncated where the density is below
    /// 1e-17 of the amplitude.
    pub fn form_factor_quadrature(&self, q: f64) -> f64 {
        let rmax = self.support_radius();
        4.0 * std::f64::consts::PI
            * integrate_oscillatory(|r| r * r * sinc(q * r) * self.density(r), 0.0, rmax, q)
    }
}

/// Amplitude that satisfies the normalization condition for the given
/// (R, d, Z), computed by quadrature of the unit-amplitude density.
pub fn normalization_amplitude(
    half_radius: f64,
    diffuseness: f64,
    charge: f64,
) -> Result<f64, ScatteringError> {
    if !(half_radius > 0.0) || !(diffuseness > 0.0) || !(charge > 0.0) {
        return Err(ScatteringError::InvalidFermiParameters {
            half_radius,
            diffuseness,
            charge,
        });
    }
    let unit = FermiModel {
        amplitude: 1.0,
        half_radius,
        diffuseness,
        charge,
    };
    let rmax = unit.support_radius();
    let rule = GaussLegendre::new(16);
    let panels = (rmax / (0.25 * diffuseness.min(half_radius))).ceil() as usize;
    let integral = 4.0
        * std::f64::consts::PI
        * rule.integrate_panels(|r| r * r * unit.density(r), 0.0, rmax, panels.max(64));
    Ok(charge / integral)
}

/// Where a synthetic dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub family: Family,
    pub order: usize,
    pub coefficients: DVector<f64>,
}

/// A dataset on the momentum grid: clean values, a noisy copy, and the
/// generating truth when the data are synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub q: Vec<f64>,
    pub clean: DVector<f64>,
    pub noisy: DVector<f64>,
    pub sigma: f64,
    pub provenance: Option<Provenance>,
    pub seed: Option<u64>,
}

/// Default noise level for synthetic experiments: 1e-3 of the largest
/// clean amplitude.
pub fn default_sigma(clean: &DVector<f64>) -> f64 {
    1e-3 * clean.amax()
}

/// Generate y = A x (+ noise) for one basis family and order. When no
/// coefficient vector is supplied, the coefficients are standard-normal
/// draws from the seeded generator; the noise is i.i.d. N(0, sigma^2).
pub fn synthesize(
    family: Family,
    order: usize,
    grid: &RadialGrid,
    freqs: &FrequencyGrid,
    coefficients: Option<DVector<f64>>,
    sigma: f64,
    seed: u64,
) -> Result<SimulatedDataset, ScatteringError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(ScatteringError::InvalidNoise(sigma));
    }
    let basis = BasisSet::new(family, order, grid.cutoff())?;
    let design = DesignMatrices::build(grid.clone(), freqs.clone(), basis, RadialRule::Rectangle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = match coefficients {
        Some(x) => x,
        None => DVector::from_fn(order, |_, _| StandardNormal.sample(&mut rng)),
    };
    let clean = design.a() * &x;
    let noise = DVector::from_fn(clean.len(), |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        sigma * e
    });
    let noisy = &clean + noise;
    Ok(SimulatedDataset {
        q: freqs.points().to_vec(),
        clean,
        noisy,
        sigma,
        provenance: Some(Provenance {
            family,
            order,
            coefficients: x,
        }),
        seed: Some(seed),
    })
}

/// Evaluate the Fermi form factor on an explicit q list. The data are
/// exact (no noise is added).
pub fn fermi_dataset(model: &FermiModel, q: &[f64]) -> Result<SimulatedDataset, ScatteringError> {
    if q.is_empty()
        || q.iter().any(|v| !(*v > 0.0) || !v.is_finite())
        || q.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(ScatteringError::InvalidQList);
    }
    let mut values = Vec::with_capacity(q.len());
    for &qi in q {
        values.push(model.form_factor(qi)?);
    }
    let clean = DVector::from_vec(values);
    Ok(SimulatedDataset {
        q: q.to_vec(),
        noisy: clean.clone(),
        clean,
        sigma: 0.0,
        provenance: None,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn density_reference_points() {
        let m = FermiModel::carbon12();
        // at r = R the two cosh terms are equal
        assert_relative_eq!(m.density(m.half_radius()), 0.5 * m.amplitude(), max_relative = 1e-12);
        // at the origin with R/d ~ 4 the density is close to the amplitude
        let at0 = m.density(0.0);
        assert!(at0 < m.amplitude() && at0 > 0.96 * m.amplitude());
    }

    #[test]
    fn density_is_positive_monotone_and_stable_far_out() {
        let m = FermiModel::carbon12();
        let mut prev = f64::INFINITY;
        let mut r = 0.0;
        while r < 2000.0 {
            let v = m.density(r);
            assert!(v >= 0.0 && v.is_finite(), "density failed at r = {r}");
            assert!(v <= prev + 1e-18);
            prev = v;
            r += r.max(0.05) * 0.5 + 0.05;
        }
        // far beyond the half radius: underflows gracefully to zero
        assert_eq!(m.density(1e6), 0.0);
    }

    #[test]
    fn density_matches_naive_form_where_naive_is_safe() {
        let m = FermiModel::carbon12();
        let a = m.half_radius() / m.diffuseness();
        for &r in &[0.0, 0.5, 2.0, 2.517, 5.0, 8.0] {
            let naive = m.amplitude() * a.cosh() / (a.cosh() + (r / m.diffuseness()).cosh());
            assert_relative_eq!(m.density(r), naive, max_relative = 1e-13);
        }
    }

    #[test]
    fn normalization_recovers_charge() {
        let m = FermiModel::carbon12();
        // quadrature of the normalized density gives back Z
        let rule = GaussLegendre::new(16);
        let total = 4.0
            * std::f64::consts::PI
            * rule.integrate_panels(|r| r * r * m.density(r), 0.0, m.support_radius(), 400);
        assert_relative_eq!(total, 6.0, max_relative = 1e-10);
    }

    #[test]
    fn normalization_is_linear_in_charge() {
        let a1 = normalization_amplitude(2.5170, 0.626, 6.0).unwrap();
        let a2 = normalization_amplitude(2.5170, 0.626, 12.0).unwrap();
        assert_relative_eq!(a2, 2.0 * a1, max_relative = 1e-13);
        assert!(normalization_amplitude(-1.0, 0.6, 6.0).is_err());
    }

    #[test]
    fn hard_sphere_limit_of_the_amplitude() {
        // d -> 0 turns the profile into a uniform sphere of radius R:
        // alpha -> 3 Z / (4 pi R^3)
        let r = 3.0;
        let z = 6.0;
        let a = normalization_amplitude(r, 1e-3 * r, z).unwrap();
        let hard = 3.0 * z / (4.0 * std::f64::consts::PI * r.powi(3));
        assert_relative_eq!(a, hard, max_relative = 0.01);
    }

    #[test]
    fn form_factor_small_q_tends_to_charge() {
        let m = FermiModel::carbon12();
        // below the guard: quadrature fallback; the transform at q -> 0 is
        // the normalization integral
        let f = m.form_factor(1e-4).unwrap();
        assert_relative_eq!(f, 6.0, max_relative = 1e-6);
        // the first demo point sits just above the guard
        let f = m.form_factor(0.001).unwrap();
        assert_relative_eq!(f, 6.0, max_relative = 1e-3);
        assert!(m.form_factor(0.0).is_err());
        assert!(m.form_factor(-1.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_at_reference_points() {
        let m = FermiModel::carbon12();
        for &q in &[0.01, 0.1, 0.5, 1.0, 2.0, 3.7, 5.0, 8.0] {
            let analytic = m.form_factor(q).unwrap();
            let quad = m.form_factor_quadrature(q);
            assert_relative_eq!(analytic, quad, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_form_survives_extreme_arguments() {
        let m = FermiModel::carbon12();
        // pi q d > 350 exercises the exponential branch
        let q = 200.0;
        let f = m.form_factor(q).unwrap();
        assert!(f.is_finite());
        assert!(f.abs() < 1e-100);
    }

    #[test]
    fn demo_q_list_shape() {
        assert_eq!(DEMO_Q_POINTS.len(), 15);
        assert_eq!(DEMO_Q_POINTS[0], 0.001);
        assert_eq!(DEMO_Q_POINTS[14], 7.0);
        assert!(DEMO_Q_POINTS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fermi_dataset_is_exact_and_enveloped() {
        let m = FermiModel::carbon12();
        let ds = fermi_dataset(&m, &DEMO_Q_POINTS).unwrap();
        assert_eq!(ds.q.len(), 15);
        assert_eq!(ds.clean, ds.noisy);
        assert_eq!(ds.sigma, 0.0);
        assert!(ds.provenance.is_none());
        assert_relative_eq!(ds.clean[0], 6.0, max_relative = 1e-3);
        assert!(ds.clean.iter().all(|v| v.is_finite()));
        // magnitudes decay overall from the first to the last point
        assert!(ds.clean[14].abs() < 1e-3 * ds.clean[0].abs());
        assert!(fermi_dataset(&m, &[0.5, 0.5]).is_err());
        assert!(fermi_dataset(&m, &[]).is_err());
    }

    #[test]
    fn synthesize_zero_noise_and_determinism() {
        let grid = RadialGrid::new(50, 8.0).unwrap();
        let freqs = FrequencyGrid::ladder(12, 8.0).unwrap();
        let a = synthesize(Family::Sinc, 4, &grid, &freqs, None, 0.0, 7).unwrap();
        assert_eq!(a.clean, a.noisy);
        let b = synthesize(Family::Sinc, 4, &grid, &freqs, None, 0.0, 7).unwrap();
        assert_eq!(a, b);
        let c = synthesize(Family::Sinc, 4, &grid, &freqs, None, 0.0, 8).unwrap();
        assert_ne!(a.clean, c.clean);
        assert!(synthesize(Family::Sinc, 4, &grid, &freqs, None, -0.5, 7).is_err());
    }

    #[test]
    fn synthesize_all_ones_reproduces_row_sums() {
        // with unit coefficients the clean data are the row sums of A and
        // the density curve is the row sum of B
        let grid = RadialGrid::new(100, 8.0).unwrap();
        let freqs = FrequencyGrid::ladder(14, 8.0).unwrap();
        let x = DVector::from_element(6, 1.0);
        let ds = synthesize(Family::CylindricalBessel, 6, &grid, &freqs, Some(x), 0.0, 1).unwrap();
        let basis = BasisSet::new(Family::CylindricalBessel, 6, 8.0).unwrap();
        let d = DesignMatrices::build(grid, freqs, basis, RadialRule::Rectangle).unwrap();
        for i in 0..14 {
            let row_sum: f64 = (0..6).map(|j| d.a()[(i, j)]).sum();
            assert_relative_eq!(ds.clean[i], row_sum, max_relative = 1e-12);
        }
        let prov = ds.provenance.unwrap();
        assert_eq!(prov.order, 6);
        assert!(prov.coefficients.iter().all(|c| *c == 1.0));
    }

    #[test]
    fn noise_standard_deviation_concentrates() {
        // chi-square concentration: the empirical mean square of the noise
        // approaches sigma^2 for large m
        let grid = RadialGrid::new(10, 8.0).unwrap();
        let freqs = FrequencyGrid::ladder(10_000, 8.0).unwrap();
        let sigma = 0.3;
        let ds = synthesize(Family::Gaussian, 2, &grid, &freqs, None, sigma, 99).unwrap();
        let resid = &ds.noisy - &ds.clean;
        let mean_sq = resid.norm_squared() / resid.len() as f64;
        assert_relative_eq!(mean_sq, sigma * sigma, max_relative = 0.05);
        // and the sample sd is within 30% of sigma already at m = 15
        for seed in [1, 2, 3] {
            let freqs = FrequencyGrid::ladder(15, 8.0).unwrap();
            let ds = synthesize(Family::Gaussian, 2, &grid, &freqs, None, sigma, seed).unwrap();
            let resid = &ds.noisy - &ds.clean;
            let sd = (resid.norm_squared() / 15.0).sqrt();
            assert!((sd - sigma).abs() / sigma < 0.3, "seed {seed}: sd {sd}");
        }
    }

    #[test]
    fn default_sigma_tracks_the_amplitude() {
        let clean = DVector::from_vec(vec![1.0, -6.0, 2.0]);
        assert_relative_eq!(default_sigma(&clean), 6e-3, max_relative = 1e-15);
    }
}
