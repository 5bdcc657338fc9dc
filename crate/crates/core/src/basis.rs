//! Discretization grids, the six basis-function families, and the design
//! matrices of the scattering discretization.
//!
//! The forward map is discretized on a uniform radial grid r_n = (n-1)*dr,
//! dr = R_c/N. A basis set of order k expands the unknown radial function as
//! a combination of k scaled copies of one family shape, with scale points
//! q_j = j*pi/R_c. The three matrices are
//!
//! ```text
//! B[n,j] = b_j(r_n)                          (N x k)
//! C[i,n] = 4 pi dr r_n^2 j0(q_i r_n)         (m x N)
//! A      = C B                               (m x k)
//! ```
//!
//! where j0 is the spherical Bessel kernel of the forward transform.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::special::{bessel_j0, sinc};

/// Number of registered basis families.
pub const FAMILY_COUNT: usize = 6;

/// Default cap on the expansion order used by configuration validation.
pub const DEFAULT_K_MAX: usize = 12;

/// Hard sanity cap on the expansion order.
pub const MAX_ORDER: usize = 64;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("unknown basis family index {0}; valid indices are 1..={FAMILY_COUNT}")]
    UnknownFamily(usize),

    #[error("grid needs at least 2 radial samples, got {0}")]
    GridTooSmall(usize),

    #[error("cutoff radius must be positive, got {0}")]
    NonPositiveCutoff(f64),

    #[error("expansion order must be in 1..={MAX_ORDER}, got {0}")]
    InvalidOrder(usize),

    #[error("frequency points must be strictly positive and strictly increasing")]
    InvalidFrequencies,

    #[error("inner dimensions disagree: C is {c_rows}x{c_cols}, B is {b_rows}x{b_cols}")]
    DimensionMismatch {
        c_rows: usize,
        c_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
}

/// Uniform radial grid r_n = (n-1) dr, n = 1..N, with dr = R_c / N.
///
/// The first sample sits at r = 0 and the last at R_c - dr; the cutoff
/// itself is excluded, matching the rectangle-rule discretization of the
/// forward integral.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    n: usize,
    cutoff: f64,
}

impl RadialGrid {
    pub fn new(n: usize, cutoff: f64) -> Result<Self, BasisError> {
        if n < 2 {
            return Err(BasisError::GridTooSmall(n));
        }
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(BasisError::NonPositiveCutoff(cutoff));
        }
        Ok(Self { n, cutoff })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn step(&self) -> f64 {
        self.cutoff / self.n as f64
    }

    /// r_n for the 0-based sample index.
    pub fn point(&self, idx: usize) -> f64 {
        idx as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Momentum-transfer sample points q_i, strictly positive and increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    /// The ladder rule q_i = i pi / R_c, i = 1..m.
    pub fn ladder(m: usize, cutoff: f64) -> Result<Self, BasisError> {
        if m == 0 || !(cutoff > 0.0) {
            return Err(BasisError::InvalidFrequencies);
        }
        let points = (1..=m)
            .map(|i| i as f64 * std::f64::consts::PI / cutoff)
            .collect();
        Ok(Self { points })
    }

    /// An explicit list of sample points.
    pub fn from_points(points: Vec<f64>) -> Result<Self, BasisError> {
        if points.is_empty()
            || points.iter().any(|q| !(*q > 0.0) || !q.is_finite())
            || points.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(BasisError::InvalidFrequencies);
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// The six analytic basis-function families. Each is a function of the
/// dimensionless product t = q_j * r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Cylindrical Bessel J0(q r): matches the oscillation of the transform
    /// kernel while staying distinct from the kernel itself.
    CylindricalBessel,
    /// Spherical Bessel j0(q r) = sinc(q r): the kernel's own shape, the
    /// orthogonal choice on a finite support.
    Sinc,
    /// Gaussian exp(-(q r)^2 / 2): positive, localized.
    Gaussian,
    /// Gaussian-modulated Bessel exp(-(q r)^2 / 2) J0(q r).
    GaussianBessel,
    /// Hyperbolic secant 1/cosh(q r): positive with exponential tails.
    Sech,
    /// Lorentzian 1/(1 + (q r)^2): positive with algebraic tails.
    Lorentzian,
}

impl Family {
    /// All families in index order.
    pub fn all() -> [Family; FAMILY_COUNT] {
        [
            Family::CylindricalBessel,
            Family::Sinc,
            Family::Gaussian,
            Family::GaussianBessel,
            Family::Sech,
            Family::Lorentzian,
        ]
    }

    /// One-based registry index.
    pub fn index(self) -> usize {
        match self {
            Family::CylindricalBessel => 1,
            Family::Sinc => 2,
            Family::Gaussian => 3,
            Family::GaussianBessel => 4,
            Family::Sech => 5,
            Family::Lorentzian => 6,
        }
    }

    pub fn from_index(l: usize) -> Result<Self, BasisError> {
        match l {
            1 => Ok(Family::CylindricalBessel),
            2 => Ok(Family::Sinc),
            3 => Ok(Family::Gaussian),
            4 => Ok(Family::GaussianBessel),
            5 => Ok(Family::Sech),
            6 => Ok(Family::Lorentzian),
            _ => Err(BasisError::UnknownFamily(l)),
        }
    }

    /// The family shape as a function of t = q r. All six shapes equal 1 at
    /// t = 0 and are bounded by 1 in magnitude.
    pub fn shape(self, t: f64) -> f64 {
        match self {
            Family::CylindricalBessel => bessel_j0(t),
            Family::Sinc => sinc(t),
            Family::Gaussian => (-0.5 * t * t).exp(),
            Family::GaussianBessel => (-0.5 * t * t).exp() * bessel_j0(t),
            Family::Sech => 1.0 / t.cosh(),
            Family::Lorentzian => 1.0 / (1.0 + t * t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::CylindricalBessel => "cylindrical-bessel",
            Family::Sinc => "sinc",
            Family::Gaussian => "gaussian",
            Family::GaussianBessel => "gaussian-bessel",
            Family::Sech => "sech",
            Family::Lorentzian => "lorentzian",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Evaluate basis function j of family `l` (one-based index) at radius `r`
/// with scale point `q_j`.
pub fn basis_value(l: usize, q_j: f64, r: f64) -> Result<f64, BasisError> {
    Ok(Family::from_index(l)?.shape(q_j * r))
}

/// A family together with its k scale points q_j = j pi / R_c.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    family: Family,
    scales: Vec<f64>,
}

impl BasisSet {
    /// Scale points follow the same ladder rule as the data frequencies,
    /// truncated to the requested order.
    pub fn new(family: Family, order: usize, cutoff: f64) -> Result<Self, BasisError> {
        if order == 0 || order > MAX_ORDER {
            return Err(BasisError::InvalidOrder(order));
        }
        if !(cutoff > 0.0) {
            return Err(BasisError::NonPositiveCutoff(cutoff));
        }
        let scales = (1..=order)
            .map(|j| j as f64 * std::f64::consts::PI / cutoff)
            .collect();
        Ok(Self { family, scales })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// b_j(r) for the 0-based basis index.
    pub fn eval(&self, j: usize, r: f64) -> f64 {
        self.family.shape(self.scales[j] * r)
    }
}

/// Weighting of the radial sum that discretizes the forward integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadialRule {
    /// Left-endpoint rectangle rule on the uniform grid. This is the
    /// canonical discretization; the matrices are defined by it.
    #[default]
    Rectangle,
    /// Trapezoidal weights over the same open grid (half weight on the two
    /// end samples). First-and-a-half-order alternative for comparison.
    Trapezoid,
}

impl RadialRule {
    fn weight(self, idx: usize, n: usize, dr: f64) -> f64 {
        match self {
            RadialRule::Rectangle => dr,
            RadialRule::Trapezoid => {
                if idx == 0 || idx == n - 1 {
                    0.5 * dr
                } else {
                    dr
                }
            }
        }
    }
}

/// Build the N x k basis matrix `B[n,j] = b_j(r_n)`.
pub fn build_b(grid: &RadialGrid, basis: &BasisSet) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), basis.order(), |n, j| basis.eval(j, grid.point(n)))
}

/// Build the m x N kernel matrix `C[i,n] = 4 pi w_n r_n^2 j0(q_i r_n)`, with
/// w_n the radial quadrature weight (dr for the rectangle rule).
pub fn build_c(grid: &RadialGrid, freqs: &FrequencyGrid, rule: RadialRule) -> DMatrix<f64> {
    let dr = grid.step();
    let n = grid.len();
    DMatrix::from_fn(freqs.len(), n, |i, idx| {
        let r = grid.point(idx);
        let w = rule.weight(idx, n, dr);
        4.0 * std::f64::consts::PI * w * r * r * sinc(freqs.points()[i] * r)
    })
}

/// A = C B, with an explicit inner-dimension check.
pub fn build_a(c: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, BasisError> {
    if c.ncols() != b.nrows() {
        return Err(BasisError::DimensionMismatch {
            c_rows: c.nrows(),
            c_cols: c.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
        });
    }
    Ok(c * b)
}

/// Grids plus the B, C, A matrices for one (family, order) choice.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    grid: RadialGrid,
    freqs: FrequencyGrid,
    basis: BasisSet,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn build(
        grid: RadialGrid,
        freqs: FrequencyGrid,
        basis: BasisSet,
        rule: RadialRule,
    ) -> Result<Self, BasisError> {
        let b = build_b(&grid, &basis);
        let c = build_c(&grid, &freqs, rule);
        let a = build_a(&c, &b)?;
        Ok(Self {
            grid,
            freqs,
            basis,
            b,
            c,
            a,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn frequencies(&self) -> &FrequencyGrid {
        &self.freqs
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The first k columns of A: the design for a nested lower order.
    pub fn a_prefix(&self, k: usize) -> DMatrix<f64> {
        self.a.columns(0, k).into_owned()
    }

    /// The first k columns of B.
    pub fn b_prefix(&self, k: usize) -> DMatrix<f64> {
        self.b.columns(0, k).into_owned()
    }
}
