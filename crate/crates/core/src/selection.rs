//! Joint MAP estimation over (x, phi, psi, k, l) and marginal order/basis
//! selection.
//!
//! Two joint strategies are provided for a fixed (order, family) cell:
//! coordinate descent on the joint objective, and a profiled search over a
//! lambda grid. Scanning the cells and taking the argmin selects the order
//! and family jointly.
//!
//! The marginal route integrates the precisions out with Monte-Carlo
//! samples drawn from their Gamma priors, accumulates a score table over
//! (psi sample, phi sample, order, family), and normalizes it one axis at
//! a time; the selections are the argmax chain family -> order -> phi ->
//! psi. All probability arithmetic runs in log space with log-sum-exp, and
//! every reduction has a fixed order so a fixed seed reproduces results
//! bit for bit.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{BasisError, BasisSet, DesignMatrices, Family, FrequencyGrid, RadialGrid, RadialRule};
use crate::hyper::{HyperCriterion, HyperError, HyperPriors};
use crate::linear::{log_evidence_for, LinearError, RidgeProblem};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("order prior needs k_max >= 2, got {0}")]
    InvalidOrderPrior(usize),

    #[error("order must be at least 1")]
    ZeroOrder,

    #[error("family set must be nonempty")]
    NoFamilies,

    #[error("sample sets must be nonempty (got {n_phi} phi and {n_psi} psi samples)")]
    EmptySampleSet { n_phi: usize, n_psi: usize },

    #[error("data length {got} does not match the frequency grid length {expected}")]
    DataLengthMismatch { expected: usize, got: usize },

    #[error(
        "shape term {which} = {value} is not positive; the update has no positive stationary \
         point. Increase the corresponding prior shape."
    )]
    NonPositiveShapeTerm { which: &'static str, value: f64 },

    #[error(
        "profile numerator (m+k)/2 + a1 + a2 - 2 = {numerator} is not positive; no interior \
         stationary point in phi"
    )]
    NoInteriorPhi { numerator: f64 },

    #[error("lambda grid must be nonempty, strictly positive, and strictly increasing")]
    InvalidLambdaGrid,

    #[error("initial lambda must be positive and finite, got {0}")]
    InvalidInitialLambda(f64),

    #[error(
        "non-finite score weight at psi sample {i}, phi sample {j}, order {k}, family {family}"
    )]
    NanWeight { i: usize, j: usize, k: usize, family: usize },

    #[error("score mass collapsed (all weights -inf) at order {k}, family {family}")]
    MassCollapsed { k: usize, family: usize },

    #[error(transparent)]
    Linear(#[from] LinearError),

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Hyper(#[from] HyperError),
}

/// Triangular prior on the model order: p(k) = 2 (k_max - k) / (k_max (k_max - 1))
/// for 1 <= k < k_max and zero from k_max on. Decreasing in k, sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderPrior {
    k_max: usize,
}

impl OrderPrior {
    pub fn new(k_max: usize) -> Result<Self, SelectionError> {
        if k_max < 2 {
            return Err(SelectionError::InvalidOrderPrior(k_max));
        }
        Ok(Self { k_max })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn weight(&self, k: usize) -> f64 {
        assert!(k >= 1, "order index is one-based");
        if k >= self.k_max {
            0.0
        } else {
            2.0 * (self.k_max - k) as f64 / (self.k_max as f64 * (self.k_max - 1) as f64)
        }
    }

    /// ln p(k); negative infinity for excluded orders.
    pub fn log_weight(&self, k: usize) -> f64 {
        let w = self.weight(k);
        if w > 0.0 {
            w.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (1..=self.k_max).map(|k| self.weight(k)).collect()
    }
}

/// p(k) under the triangular order prior with the given k_max.
pub fn order_prior(k: usize, k_max: usize) -> Result<f64, SelectionError> {
    if k == 0 {
        return Err(SelectionError::ZeroOrder);
    }
    Ok(OrderPrior::new(k_max)?.weight(k))
}

/// Joint prior over (order, family): the triangular order prior times a
/// uniform law over the registered families.
#[derive(Debug, Clone, Copy)]
pub struct ModelPrior {
    pub order: OrderPrior,
    pub n_families: usize,
}

impl ModelPrior {
    pub fn new(k_max: usize, n_families: usize) -> Result<Self, SelectionError> {
        if n_families == 0 {
            return Err(SelectionError::NoFamilies);
        }
        Ok(Self {
            order: OrderPrior::new(k_max)?,
            n_families,
        })
    }

    /// ln p(k) + ln p(l); negative infinity for excluded orders.
    pub fn log_weight(&self, k: usize) -> f64 {
        self.order.log_weight(k) - (self.n_families as f64).ln()
    }
}

/// Options for the coordinate-descent joint fit.
#[derive(Debug, Clone, Copy)]
pub struct AlternatingOptions {
    pub lambda0: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Fit strategy for one (order, family) cell of the joint scan.
#[derive(Debug, Clone)]
pub enum JointAlgorithm {
    /// Alternate the closed-form block updates of x, phi, psi.
    Alternating(AlternatingOptions),
    /// Profile phi out and search the given lambda grid.
    ProfiledGrid { lambda_grid: Vec<f64> },
}

/// Result of a joint fit at one (order, family) cell.
#[derive(Debug, Clone)]
pub struct JointFitResult {
    pub coefficients: DVector<f64>,
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    /// Criterion value at the returned point (including the model prior).
    pub criterion: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Grid search only: minimizer sat on an end of the lambda grid.
    pub at_boundary: bool,
    /// (lambda, criterion) at every step, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// The joint negative log posterior for a fixed (order, family) cell and
/// its profiled forms.
///
/// With lambda = psi/phi (the orientation fixed by the x-block gradient:
/// minimizing over x solves (A^t A + (psi/phi) I) x = A^t y):
///
/// ```text
/// at:        -ln p(k,l) - (m/2+a1-1) ln phi - (k/2+a2-1) ln psi
///            + phi (b1 + ||y - A x||^2 / 2) + psi (b2 + ||x||^2 / 2)
/// profiled:  the same at x = x_hat(lambda)
/// in_lambda: -ln p(k,l) - ((m+k)/2+a1+a2-2) ln phi - (k/2+a2-1) ln lambda
///            + phi (b1 + rss/2) + lambda phi (b2 + css/2)
/// ```
#[derive(Debug)]
pub struct JointCriterion<'a> {
    problem: &'a RidgeProblem,
    priors: HyperPriors,
    /// ln p(k) + ln p(l); negative infinity marks an excluded order.
    log_model_prior: f64,
}

impl<'a> JointCriterion<'a> {
    pub fn new(problem: &'a RidgeProblem, priors: HyperPriors, log_model_prior: f64) -> Self {
        Self {
            problem,
            priors,
            log_model_prior,
        }
    }

    pub fn problem(&self) -> &RidgeProblem {
        self.problem
    }

    fn constants(&self) -> (f64, f64, f64, f64) {
        (
            self.priors.phi.shape(),
            self.priors.phi.rate(),
            self.priors.psi.shape(),
            self.priors.psi.rate(),
        )
    }

    /// The objective at an explicit point. Excluded orders (prior weight
    /// zero) give +inf, which is distinct from argument errors.
    pub fn at(&self, x: &DVector<f64>, phi: f64, psi: f64) -> Result<f64, SelectionError> {
        if !(phi > 0.0) || !(psi > 0.0) || !phi.is_finite() || !psi.is_finite() {
            return Err(SelectionError::Hyper(HyperError::InvalidPrecision { phi, psi }));
        }
        if self.log_model_prior == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        let (a1, b1, a2, b2) = self.constants();
        let m = self.problem.data_count() as f64;
        let k = x.len() as f64;
        let resid = self.problem.data() - self.problem.design() * x;
        Ok(-self.log_model_prior - (0.5 * m + a1 - 1.0) * phi.ln()
            - (0.5 * k + a2 - 1.0) * psi.ln()
            + phi * (b1 + 0.5 * resid.norm_squared())
            + psi * (b2 + 0.5 * x.norm_squared()))
    }

    /// The objective with x profiled out at lambda = psi/phi.
    pub fn profiled(&self, phi: f64, psi: f64) -> Result<f64, SelectionError> {
        if !(phi > 0.0) || !(psi > 0.0) || !phi.is_finite() || !psi.is_finite() {
            return Err(SelectionError::Hyper(HyperError::InvalidPrecision { phi, psi }));
        }
        if self.log_model_prior == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        let (a1, b1, a2, b2) = self.constants();
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        let sol = self.problem.solve(psi / phi)?;
        Ok(-self.log_model_prior - (0.5 * m + a1 - 1.0) * phi.ln()
            - (0.5 * k + a2 - 1.0) * psi.ln()
            + phi * (b1 + 0.5 * sol.residual_ss())
            + psi * (b2 + 0.5 * sol.coeff_ss()))
    }

    /// The (phi, lambda) parameterization of [`Self::profiled`].
    pub fn in_lambda(&self, phi: f64, lambda: f64) -> Result<f64, SelectionError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(SelectionError::Hyper(HyperError::InvalidLambda(lambda)));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(SelectionError::Hyper(HyperError::InvalidPhi(phi)));
        }
        if self.log_model_prior == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        let (a1, b1, a2, b2) = self.constants();
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        let sol = self.problem.solve(lambda)?;
        Ok(-self.log_model_prior
            - (0.5 * (m + k) + a1 + a2 - 2.0) * phi.ln()
            - (0.5 * k + a2 - 1.0) * lambda.ln()
            + phi * (b1 + 0.5 * sol.residual_ss())
            + lambda * phi * (b2 + 0.5 * sol.coeff_ss()))
    }

    /// Closed-form stationary point of [`Self::in_lambda`] in phi.
    pub fn profile_phi(&self, lambda: f64) -> Result<f64, SelectionError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(SelectionError::Hyper(HyperError::InvalidLambda(lambda)));
        }
        let (a1, b1, a2, b2) = self.constants();
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        let numerator = 0.5 * (m + k) + a1 + a2 - 2.0;
        if numerator <= 0.0 {
            return Err(SelectionError::NoInteriorPhi { numerator });
        }
        let sol = self.problem.solve(lambda)?;
        let denom = (b1 + 0.5 * sol.residual_ss()) + lambda * (b2 + 0.5 * sol.coeff_ss());
        Ok(numerator / denom)
    }

    /// Coordinate descent: alternate the exact block minimizers
    ///
    /// ```text
    /// x_hat   = (A^t A + lambda I)^{-1} A^t y
    /// phi_hat = (m/2 + a1 - 1) / (b1 + ||y - A x_hat||^2 / 2)
    /// psi_hat = (k/2 + a2 - 1) / (b2 + ||x_hat||^2 / 2)
    /// lambda  = psi_hat / phi_hat
    /// ```
    ///
    /// until the relative change of lambda drops below the tolerance. Each
    /// block update is an exact minimizer, so the objective never increases.
    pub fn fit_alternating(&self, opts: AlternatingOptions) -> Result<JointFitResult, SelectionError> {
        if !(opts.lambda0 > 0.0) || !opts.lambda0.is_finite() {
            return Err(SelectionError::InvalidInitialLambda(opts.lambda0));
        }
        let (a1, b1, a2, b2) = self.constants();
        let m = self.problem.data_count() as f64;
        let k = self.problem.order() as f64;
        let phi_shape = 0.5 * m + a1 - 1.0;
        let psi_shape = 0.5 * k + a2 - 1.0;
        if phi_shape <= 0.0 {
            return Err(SelectionError::NonPositiveShapeTerm {
                which: "m/2 + a1 - 1",
                value: phi_shape,
            });
        }
        if psi_shape <= 0.0 {
            return Err(SelectionError::NonPositiveShapeTerm {
                which: "k/2 + a2 - 1",
                value: psi_shape,
            });
        }

        let mut lambda = opts.lambda0;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut phi = f64::NAN;
        let mut psi = f64::NAN;
        let mut last_objective = f64::INFINITY;
        let mut coefficients = DVector::zeros(self.problem.order());

        for t in 1..=opts.max_iter {
            iterations = t;
            let sol = self.problem.solve(lambda)?;
            coefficients = sol.coefficients().clone();
            phi = phi_shape / (b1 + 0.5 * sol.residual_ss());
            psi = psi_shape / (b2 + 0.5 * sol.coeff_ss());
            let lambda_new = psi / phi;

            let objective = self.at(&coefficients, phi, psi)?;
            debug_assert!(
                objective <= last_objective + 1e-9 * (1.0 + last_objective.abs()),
                "joint objective increased: {last_objective} -> {objective}"
            );
            last_objective = objective;
            trace.push((lambda_new, objective));

            if lambda_new > 1e12 {
                lambda = lambda_new;
                break; // runaway regularization: flag as not converged
            }
            let rel = (lambda_new - lambda).abs() / lambda;
            lambda = lambda_new;
            if rel < opts.tol {
                converged = true;
                break;
            }
        }

        Ok(JointFitResult {
            criterion: last_objective,
            coefficients,
            phi,
            psi,
            lambda,
            iterations,
            converged,
            at_boundary: false,
            trace,
        })
    }

    /// Profiled grid search: for each lambda on the grid solve the ridge
    /// system, set phi to its closed-form stationary point, and evaluate
    /// the profiled objective; refit at the grid argmin.
    pub fn fit_profiled_grid(&self, lambda_grid: &[f64]) -> Result<JointFitResult, SelectionError> {
        if lambda_grid.is_empty()
            || lambda_grid.iter().any(|l| !(*l > 0.0) || !l.is_finite())
            || lambda_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(SelectionError::InvalidLambdaGrid);
        }
        let mut trace = Vec::with_capacity(lambda_grid.len());
        let mut best_idx = 0;
        let mut best_val = f64::INFINITY;
        for (idx, &lambda) in lambda_grid.iter().enumerate() {
            let phi = self.profile_phi(lambda)?;
            let val = self.in_lambda(phi, lambda)?;
            trace.push((lambda, val));
            if val < best_val {
                best_val = val;
                best_idx = idx;
            }
        }
        let lambda = lambda_grid[best_idx];
        let sol = self.problem.solve(lambda)?;
        let phi = self.profile_phi(lambda)?;
        let psi = lambda * phi;
        let criterion = self.in_lambda(phi, lambda)?;
        Ok(JointFitResult {
            coefficients: sol.coefficients().clone(),
            phi,
            psi,
            lambda,
            criterion,
            iterations: lambda_grid.len(),
            converged: true,
            at_boundary: lambda_grid.len() > 1
                && (best_idx == 0 || best_idx == lambda_grid.len() - 1),
            trace,
        })
    }
}

/// One cell of a joint scan.
#[derive(Debug, Clone)]
pub struct JointScanCell {
    pub family: Family,
    pub order: usize,
    pub fit: JointFitResult,
}

/// Scan result over every (order, family) cell, with the joint argmin.
#[derive(Debug, Clone)]
pub struct JointScanResult {
    pub cells: Vec<JointScanCell>,
    selected: usize,
}

impl JointScanResult {
    pub fn selected(&self) -> &JointScanCell {
        &self.cells[self.selected]
    }
}

/// Run the chosen joint fit on every (order, family) cell and pick the
/// cell with the smallest criterion. Ties resolve toward the smaller
/// order, then the smaller family index.
pub fn joint_map_scan(
    grid: &RadialGrid,
    freqs: &FrequencyGrid,
    y: &DVector<f64>,
    families: &[Family],
    k_max: usize,
    priors: &HyperPriors,
    algorithm: &JointAlgorithm,
) -> Result<JointScanResult, SelectionError> {
    if families.is_empty() {
        return Err(SelectionError::NoFamilies);
    }
    if y.len() != freqs.len() {
        return Err(SelectionError::DataLengthMismatch {
            expected: freqs.len(),
            got: y.len(),
        });
    }
    let model_prior = ModelPrior::new(k_max, families.len())?;

    let designs: Vec<DesignMatrices> = families
        .iter()
        .map(|&family| {
            let basis = BasisSet::new(family, k_max, grid.cutoff())?;
            DesignMatrices::build(grid.clone(), freqs.clone(), basis, RadialRule::Rectangle)
        })
        .collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for (fi, &family) in families.iter().enumerate() {
        for k in 1..=k_max {
            jobs.push((fi, family, k));
        }
    }

    let cells: Vec<JointScanCell> = jobs
        .par_iter()
        .map(|&(fi, family, k)| -> Result<JointScanCell, SelectionError> {
            let a = designs[fi].a_prefix(k);
            let problem = RidgeProblem::new(a, y.clone())?;
            let criterion = JointCriterion::new(&problem, *priors, model_prior.log_weight(k));
            let fit = match algorithm {
                JointAlgorithm::Alternating(opts) => criterion.fit_alternating(*opts)?,
                JointAlgorithm::ProfiledGrid { lambda_grid } => {
                    criterion.fit_profiled_grid(lambda_grid)?
                }
            };
            Ok(JointScanCell { family, order: k, fit })
        })
        .collect::<Result<_, _>>()?;

    let mut selected = 0;
    for (idx, cell) in cells.iter().enumerate() {
        let best = &cells[selected];
        let better = cell.fit.criterion < best.fit.criterion
            || (cell.fit.criterion == best.fit.criterion
                && (cell.order < best.order
                    || (cell.order == best.order
                        && cell.family.index() < best.family.index())));
        if better {
            selected = idx;
        }
    }

    Ok(JointScanResult { cells, selected })
}

/// How Monte-Carlo evidence weights are formed from the precision samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceMode {
    /// Average the exact marginal likelihood p(y | phi_j, psi_i) over the
    /// prior-drawn sample pairs. This is the plain prior-sampling
    /// Monte-Carlo estimate of the evidence.
    #[default]
    LikelihoodMean,
    /// Average exp(-criterion(phi_j, psi_i)) instead, which folds the
    /// prior densities into the weights a second time. Kept because the
    /// tabulated marginal pipeline is defined with exactly these weights.
    CriterionWeights,
}

/// Log of the Monte-Carlo evidence estimate for one (order, family) cell.
/// Returns the log of the average weight over all sample pairs; returns
/// -inf (with no error) when every weight underflows to zero mass.
pub fn monte_carlo_log_evidence(
    problem: &RidgeProblem,
    priors: &HyperPriors,
    phi_samples: &[f64],
    psi_samples: &[f64],
    mode: EvidenceMode,
) -> Result<f64, SelectionError> {
    if phi_samples.is_empty() || psi_samples.is_empty() {
        return Err(SelectionError::EmptySampleSet {
            n_phi: phi_samples.len(),
            n_psi: psi_samples.len(),
        });
    }
    let criterion = HyperCriterion::new(problem, *priors);
    let mut logs = Vec::with_capacity(phi_samples.len() * psi_samples.len());
    for &phi in phi_samples {
        for &psi in psi_samples {
            let lw = match mode {
                EvidenceMode::LikelihoodMean => log_evidence_for(problem, phi, psi)?,
                EvidenceMode::CriterionWeights => -criterion.reduced(phi, psi)?,
            };
            logs.push(lw);
        }
    }
    Ok(log_mean_exp(&logs))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max; // all -inf (or an inf contaminant, surfaced as-is)
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Subtract the max, exponentiate, and normalize by the summed
/// exponentials, so the returned probabilities sum to one up to the final
/// divisions. Also returns the log of the unnormalized mass. None when
/// every input is -inf.
fn normalize_logs(values: &[f64]) -> Option<(Vec<f64>, f64)> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let scaled: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let probs = scaled.iter().map(|t| t / total).collect();
    Some((probs, max + total.ln()))
}

fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// Order-selection score -ln p(k) - ln p(y | k, l). Smaller is better;
/// excluded orders score +inf.
pub fn order_score(log_evidence: f64, k: usize, order: &OrderPrior) -> f64 {
    let lp = order.log_weight(k);
    if lp == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        -lp - log_evidence
    }
}

/// Family-selection score -ln sum_k p(y | k, l) p(k), assembled in log
/// space. `log_evidence_per_k[k-1]` holds ln p(y | k, l).
pub fn family_score(log_evidence_per_k: &[f64], order: &OrderPrior) -> f64 {
    let terms: Vec<f64> = log_evidence_per_k
        .iter()
        .enumerate()
        .map(|(idx, &le)| le + order.log_weight(idx + 1))
        .collect();
    -log_sum_exp(&terms)
}

/// Normalized score tables produced by the marginal pipeline.
///
/// Orders are one-based (k = 1..=k_max); families are addressed by their
/// position in [`Self::families`]. Each table sums to one over its
/// normalized axis: p_psi over the psi index, p_phi over the phi index,
/// p_k over the order (within one family), p_l over the families.
#[derive(Debug, Clone)]
pub struct ScoreTables {
    families: Vec<Family>,
    k_max: usize,
    phi_samples: Vec<f64>,
    psi_samples: Vec<f64>,
    p_psi: Vec<f64>,
    p_phi: Vec<f64>,
    p_k: Vec<f64>,
    p_l: Vec<f64>,
    log_mass: Vec<f64>,
}

impl ScoreTables {
    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn phi_samples(&self) -> &[f64] {
        &self.phi_samples
    }

    pub fn psi_samples(&self) -> &[f64] {
        &self.psi_samples
    }

    fn idx_psi(&self, i: usize, j: usize, k: usize, fi: usize) -> usize {
        i + self.psi_samples.len() * (j + self.phi_samples.len() * ((k - 1) + self.k_max * fi))
    }

    fn idx_phi(&self, j: usize, k: usize, fi: usize) -> usize {
        j + self.phi_samples.len() * ((k - 1) + self.k_max * fi)
    }

    fn idx_k(&self, k: usize, fi: usize) -> usize {
        (k - 1) + self.k_max * fi
    }

    /// p(psi_i | phi_j, k, l): normalized over i.
    pub fn p_psi(&self, i: usize, j: usize, k: usize, fi: usize) -> f64 {
        self.p_psi[self.idx_psi(i, j, k, fi)]
    }

    /// p(phi_j | k, l): normalized over j.
    pub fn p_phi(&self, j: usize, k: usize, fi: usize) -> f64 {
        self.p_phi[self.idx_phi(j, k, fi)]
    }

    /// p(k | l): normalized over k within the family.
    pub fn p_k(&self, k: usize, fi: usize) -> f64 {
        self.p_k[self.idx_k(k, fi)]
    }

    /// p(l): normalized over the families.
    pub fn p_l(&self, fi: usize) -> f64 {
        self.p_l[fi]
    }

    /// Joint table p(k, l) = p(k | l) p(l).
    pub fn joint_kl(&self, k: usize, fi: usize) -> f64 {
        self.p_k(k, fi) * self.p_l(fi)
    }

    /// ln of the raw (unnormalized) mass sum_ij w(i,j,k,l) for one cell.
    pub fn log_mass(&self, k: usize, fi: usize) -> f64 {
        self.log_mass[self.idx_k(k, fi)]
    }
}

/// Output of [`marginal_map_pipeline`].
#[derive(Debug, Clone)]
pub struct MarginalMapResult {
    pub tables: ScoreTables,
    pub family: Family,
    pub order: usize,
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    pub coefficients: DVector<f64>,
}

/// Configuration of the marginal pipeline.
#[derive(Debug, Clone)]
pub struct MarginalConfig {
    pub families: Vec<Family>,
    pub k_max: usize,
    pub n_phi: usize,
    pub n_psi: usize,
    pub seed: u64,
}

/// The full marginal selection pipeline.
///
/// Draws `n_phi` noise-precision samples and `n_psi` coefficient-precision
/// samples from the priors (one fixed seed governs both draws, shared by
/// every (order, family) cell), evaluates the weight
/// w = exp(-criterion(phi_j, psi_i)) for every cell, and builds the four
/// tables by summing the raw weights one axis at a time:
///
/// ```text
/// S(j,k,l)  = sum_i w(i,j,k,l)      p_psi = w / S
/// S2(k,l)   = sum_j S(j,k,l)        p_phi = S / S2
/// S3(l)     = sum_k S2(k,l)         p_k   = S2 / S3
/// Z         = sum_l S3(l)           p_l   = S3 / Z
/// ```
///
/// Selections are the argmax chain l_hat -> k_hat -> j_hat -> i_hat with
/// ties resolved toward the smaller order and then the smaller family
/// index; the coefficients are refit at lambda = psi_hat / phi_hat on the
/// design rebuilt for (k_hat, l_hat).
pub fn marginal_map_pipeline(
    grid: &RadialGrid,
    freqs: &FrequencyGrid,
    y: &DVector<f64>,
    priors: &HyperPriors,
    cfg: &MarginalConfig,
) -> Result<MarginalMapResult, SelectionError> {
    if cfg.families.is_empty() {
        return Err(SelectionError::NoFamilies);
    }
    if cfg.n_phi == 0 || cfg.n_psi == 0 {
        return Err(SelectionError::EmptySampleSet {
            n_phi: cfg.n_phi,
            n_psi: cfg.n_psi,
        });
    }
    if cfg.k_max == 0 {
        return Err(SelectionError::ZeroOrder);
    }
    if y.len() != freqs.len() {
        return Err(SelectionError::DataLengthMismatch {
            expected: freqs.len(),
            got: y.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phi_samples: Vec<f64> = (0..cfg.n_phi).map(|_| priors.phi.sample(&mut rng)).collect();
    let psi_samples: Vec<f64> = (0..cfg.n_psi).map(|_| priors.psi.sample(&mut rng)).collect();

    let designs: Vec<DesignMatrices> = cfg
        .families
        .iter()
        .map(|&family| {
            let basis = BasisSet::new(family, cfg.k_max, grid.cutoff())?;
            DesignMatrices::build(grid.clone(), freqs.clone(), basis, RadialRule::Rectangle)
        })
        .collect::<Result<_, _>>()?;

    struct CellScores {
        /// p(psi_i | phi_j, ...) for this cell, [i + n_psi * j]
        p_psi: Vec<f64>,
        /// p(phi_j | ...) for this cell
        p_phi: Vec<f64>,
        /// ln sum_ij w
        log_s2: f64,
    }

    let mut jobs = Vec::new();
    for fi in 0..cfg.families.len() {
        for k in 1..=cfg.k_max {
            jobs.push((fi, k));
        }
    }

    let cell_results: Vec<CellScores> = jobs
        .par_iter()
        .map(|&(fi, k)| -> Result<CellScores, SelectionError> {
            let a = designs[fi].a_prefix(k);
            let problem = RidgeProblem::new(a, y.clone())?;
            let criterion = HyperCriterion::new(&problem, *priors);
            let mut log_w = vec![0.0; cfg.n_psi * cfg.n_phi];
            for (j, &phi) in phi_samples.iter().enumerate() {
                for (i, &psi) in psi_samples.iter().enumerate() {
                    let lw = -criterion.reduced(phi, psi)?;
                    if lw.is_nan() {
                        return Err(SelectionError::NanWeight {
                            i,
                            j,
                            k,
                            family: cfg.families[fi].index(),
                        });
                    }
                    log_w[i + cfg.n_psi * j] = lw;
                }
            }
            let collapsed = || SelectionError::MassCollapsed {
                k,
                family: cfg.families[fi].index(),
            };
            let mut p_psi = vec![0.0; cfg.n_psi * cfg.n_phi];
            let mut log_s = vec![f64::NEG_INFINITY; cfg.n_phi];
            for j in 0..cfg.n_phi {
                let (probs, lse) = normalize_logs(&log_w[cfg.n_psi * j..cfg.n_psi * (j + 1)])
                    .ok_or_else(collapsed)?;
                p_psi[cfg.n_psi * j..cfg.n_psi * (j + 1)].copy_from_slice(&probs);
                log_s[j] = lse;
            }
            let (p_phi, log_s2) = normalize_logs(&log_s).ok_or_else(collapsed)?;
            if !log_s2.is_finite() {
                return Err(collapsed());
            }
            Ok(CellScores { p_psi, p_phi, log_s2 })
        })
        .collect::<Result<_, _>>()?;

    // assemble the tables; order- and family-level normalizations reuse the
    // same subtract-max-and-divide scheme
    let n_l = cfg.families.len();
    let n_cells = cfg.k_max * n_l;
    let mut p_psi = vec![0.0; cfg.n_psi * cfg.n_phi * n_cells];
    let mut p_phi = vec![0.0; cfg.n_phi * n_cells];
    let mut p_k = vec![0.0; n_cells];
    let mut log_mass = vec![f64::NEG_INFINITY; n_cells];
    let mut log_s3 = vec![f64::NEG_INFINITY; n_l];

    for (cell_idx, &(fi, k)) in jobs.iter().enumerate() {
        let cell = &cell_results[cell_idx];
        let base_cell = (k - 1) + cfg.k_max * fi;
        log_mass[base_cell] = cell.log_s2;
        let psi_base = cfg.n_psi * cfg.n_phi * base_cell;
        p_psi[psi_base..psi_base + cfg.n_psi * cfg.n_phi].copy_from_slice(&cell.p_psi);
        p_phi[cfg.n_phi * base_cell..cfg.n_phi * (base_cell + 1)].copy_from_slice(&cell.p_phi);
    }
    for fi in 0..n_l {
        let per_k: Vec<f64> = (1..=cfg.k_max)
            .map(|k| log_mass[(k - 1) + cfg.k_max * fi])
            .collect();
        let (probs, lse) = normalize_logs(&per_k).ok_or(SelectionError::MassCollapsed {
            k: 0,
            family: cfg.families[fi].index(),
        })?;
        log_s3[fi] = lse;
        p_k[cfg.k_max * fi..cfg.k_max * (fi + 1)].copy_from_slice(&probs);
    }
    let (p_l, _log_z) = normalize_logs(&log_s3).ok_or(SelectionError::MassCollapsed {
        k: 0,
        family: 0,
    })?;

    let tables = ScoreTables {
        families: cfg.families.clone(),
        k_max: cfg.k_max,
        phi_samples,
        psi_samples,
        p_psi,
        p_phi,
        p_k,
        p_l,
        log_mass,
    };

    // argmax chain with parsimony tie-breaking (strict > keeps the first,
    // i.e. smallest, index)
    let fi_hat = argmax(&tables.p_l);
    let k_hat = 1 + argmax(
        &(1..=cfg.k_max)
            .map(|k| tables.p_k(k, fi_hat))
            .collect::<Vec<_>>(),
    );
    let j_hat = argmax(
        &(0..cfg.n_phi)
            .map(|j| tables.p_phi(j, k_hat, fi_hat))
            .collect::<Vec<_>>(),
    );
    let i_hat = argmax(
        &(0..cfg.n_psi)
            .map(|i| tables.p_psi(i, j_hat, k_hat, fi_hat))
            .collect::<Vec<_>>(),
    );
    let phi = tables.phi_samples[j_hat];
    let psi = tables.psi_samples[i_hat];
    let lambda = psi / phi;

    let a = designs[fi_hat].a_prefix(k_hat);
    let problem = RidgeProblem::new(a, y.clone())?;
    let coefficients = problem.solve(lambda)?.coefficients().clone();

    Ok(MarginalMapResult {
        family: cfg.families[fi_hat],
        order: k_hat,
        phi,
        psi,
        lambda,
        coefficients,
        tables,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = idx;
        }
    }
    best
}
