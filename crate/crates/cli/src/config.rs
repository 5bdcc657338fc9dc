//! Run configuration: JSON schema, validation against the library
//! preconditions, and the semantic config hash.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bayesinv::basis::Family;
use bayesinv::hyper::HyperPriors;
use bayesinv::scattering::DEMO_Q_POINTS;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Synthetic,
    Fermi,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// Coordinate-descent joint MAP over every (order, family) cell.
    Joint1,
    /// Profiled lambda-grid joint MAP over every cell.
    Joint2,
    /// Marginal pipeline with Monte-Carlo precision samples.
    Marginal,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Joint1 => "joint1",
            AlgorithmKind::Joint2 => "joint2",
            AlgorithmKind::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Radial sample count N.
    pub n: usize,
    /// Cutoff radius R_c (fm).
    pub r_c: f64,
    /// Data count m.
    pub m: usize,
    /// Largest candidate expansion order.
    pub k_max: usize,
    /// Basis family indices to scan (1..=6).
    pub l_set: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 100,
            r_c: 8.0,
            m: 20,
            k_max: bayesinv::basis::DEFAULT_K_MAX,
            l_set: vec![1, 2, 3, 4, 5, 6],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha1: 2.0,
            beta1: 1.0,
            alpha2: 2.0,
            beta2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n_phi: usize,
    pub n_psi: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n_phi: 64, n_psi: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Generating family index.
    pub family: usize,
    /// Generating order.
    pub order: usize,
    /// Generating coefficients; standard-normal draws when absent.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            family: 1,
            order: 6,
            coefficients: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FermiConfig {
    pub half_radius: f64,
    pub diffuseness: f64,
    pub charge: f64,
    /// Momentum-transfer points; the 15-point demo list when absent.
    #[serde(default)]
    pub q_points: Option<Vec<f64>>,
}

impl Default for FermiConfig {
    fn default() -> Self {
        Self {
            half_radius: 2.5170,
            diffuseness: 0.626,
            charge: 6.0,
            q_points: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    /// Noise level for synthetic data; 1e-3 of the peak clean amplitude
    /// when absent.
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub samples: SampleConfig,
    #[serde(default)]
    pub seed: u64,
    pub algorithm: AlgorithmKind,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub fermi: Option<FermiConfig>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if g.n < 2 {
            return Err(CliError::config(format!("grid.n must be at least 2, got {}", g.n)));
        }
        if !(g.r_c > 0.0) || !g.r_c.is_finite() {
            return Err(CliError::config(format!("grid.r_c must be positive, got {}", g.r_c)));
        }
        if g.m == 0 {
            return Err(CliError::config("grid.m must be at least 1".into()));
        }
        if g.k_max < 2 {
            return Err(CliError::config(format!(
                "grid.k_max must be at least 2 (the order prior needs it), got {}",
                g.k_max
            )));
        }
        if g.k_max > bayesinv::basis::MAX_ORDER {
            return Err(CliError::config(format!(
                "grid.k_max must not exceed {}, got {}",
                bayesinv::basis::MAX_ORDER,
                g.k_max
            )));
        }
        if g.l_set.is_empty() {
            return Err(CliError::config("grid.l_set must be nonempty".into()));
        }
        let mut seen = [false; 7];
        for &l in &g.l_set {
            Family::from_index(l)
                .map_err(|e| CliError::config(format!("grid.l_set: {e}")))?;
            if seen[l] {
                return Err(CliError::config(format!("grid.l_set repeats index {l}")));
            }
            seen[l] = true;
        }
        self.hyper_priors()?;
        if let Some(sigma) = self.noise_sigma {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(CliError::config(format!("noise_sigma must be nonnegative, got {sigma}")));
            }
        }
        if self.samples.n_phi == 0 || self.samples.n_psi == 0 {
            return Err(CliError::config("samples.n_phi and samples.n_psi must be positive".into()));
        }
        match self.problem {
            ProblemKind::Synthetic => {
                let synth = self.synthetic.clone().unwrap_or_default();
                Family::from_index(synth.family)
                    .map_err(|e| CliError::config(format!("synthetic.family: {e}")))?;
                if synth.order == 0 || synth.order > bayesinv::basis::MAX_ORDER {
                    return Err(CliError::config(format!(
                        "synthetic.order must be in 1..={}, got {}",
                        bayesinv::basis::MAX_ORDER,
                        synth.order
                    )));
                }
                if let Some(x) = &synth.coefficients {
                    if x.len() != synth.order {
                        return Err(CliError::config(format!(
                            "synthetic.coefficients has {} entries but order is {}",
                            x.len(),
                            synth.order
                        )));
                    }
                }
            }
            ProblemKind::Fermi => {
                let fermi = self.fermi.clone().unwrap_or_default();
                if !(fermi.half_radius > 0.0) || !(fermi.diffuseness > 0.0) || !(fermi.charge > 0.0)
                {
                    return Err(CliError::config(
                        "fermi parameters must all be positive".into(),
                    ));
                }
                let q = fermi
                    .q_points
                    .clone()
                    .unwrap_or_else(|| DEMO_Q_POINTS.to_vec());
                if q.iter().any(|v| !(*v > 0.0)) || q.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::config(
                        "fermi.q_points must be strictly positive and increasing".into(),
                    ));
                }
                if q.len() != g.m {
                    return Err(CliError::config(format!(
                        "grid.m is {} but the fermi problem has {} q points",
                        g.m,
                        q.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn hyper_priors(&self) -> Result<HyperPriors, CliError> {
        HyperPriors::from_parts(
            self.priors.alpha1,
            self.priors.beta1,
            self.priors.alpha2,
            self.priors.beta2,
        )
        .map_err(|e| CliError::config(format!("priors: {e}")))
    }

    pub fn families(&self) -> Vec<Family> {
        self.grid
            .l_set
            .iter()
            .map(|&l| Family::from_index(l).expect("validated"))
            .collect()
    }

    pub fn fermi_q_points(&self) -> Vec<f64> {
        self.fermi
            .clone()
            .unwrap_or_default()
            .q_points
            .unwrap_or_else(|| DEMO_Q_POINTS.to_vec())
    }

    /// Hash of the semantically meaningful fields (everything except the
    /// output directory), hex-encoded SHA-256 of the canonical JSON.
    pub fn semantic_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is an object").remove("out");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            problem: ProblemKind::Synthetic,
            grid: GridConfig::default(),
            priors: PriorConfig::default(),
            noise_sigma: None,
            samples: SampleConfig::default(),
            seed: 7,
            algorithm: AlgorithmKind::Marginal,
            synthetic: Some(SyntheticConfig::default()),
            fermi: None,
            out: PathBuf::from("out"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(
            r#"{"problem":"synthetic","algorithm":"marginal","out":"o","bogus":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut c = base();
        c.grid.l_set = vec![7];
        assert!(c.validate().is_err());
        let mut c = base();
        c.grid.l_set = vec![2, 2];
        assert!(c.validate().is_err());
        let mut c = base();
        c.grid.k_max = 1;
        assert!(c.validate().is_err());
        let mut c = base();
        c.priors.beta1 = 0.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.noise_sigma = Some(-0.1);
        assert!(c.validate().is_err());
        let mut c = base();
        c.problem = ProblemKind::Fermi;
        c.fermi = None; // default has 15 q points but m is 20
        assert!(c.validate().is_err());
        c.grid.m = 15;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let c = base();
        let h1 = c.semantic_hash();
        let mut c2 = c.clone();
        c2.out = PathBuf::from("elsewhere");
        assert_eq!(h1, c2.semantic_hash());
        let mut c3 = c.clone();
        c3.seed = 8;
        assert_ne!(h1, c3.semantic_hash());
        let mut c4 = c.clone();
        c4.grid.k_max = 9;
        assert_ne!(h1, c4.semantic_hash());
    }
}
