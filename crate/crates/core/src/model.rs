//! Foodweb model: parameters, growth responses and structural validation.
//!
//! The model describes `M` species competing for `m` complementary
//! resources in a chemostat with self-limitation:
//!
//! ```text
//! dx_j/dt = x_j (phi_j(v) - mu_j - gamma_j x_j)
//! dv_i/dt = D_i (S_i - v_i) - sum_j c_ij x_j phi_j(v)
//! ```
//!
//! A [`FoodwebModel`] can only be obtained through [`FoodwebModel::new`] or
//! [`ModelConfig::validate`], so every other module works on parameters
//! that already satisfy the positivity and shape constraints.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while validating a model or evaluating a response.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("{param} must be positive at {index}")]
    NonPositive { param: &'static str, index: String },
    #[error("{param} must be non-negative at {index}")]
    Negative { param: &'static str, index: String },
    #[error("{param} must be finite at {index}")]
    NotFinite { param: &'static str, index: String },
    #[error("species index j={0} out of range")]
    SpeciesOutOfRange(usize),
    #[error("resource vector has {got} entries, expected {expected}")]
    ResourceLength { expected: usize, got: usize },
    #[error("resource v_{index}={value} outside [0, {supply}]")]
    OutsideBox {
        index: usize,
        value: f64,
        supply: f64,
    },
}

/// A matrix given either as nested rows or as a flat row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixInput {
    fn to_matrix(
        &self,
        what: &'static str,
        rows: usize,
        cols: usize,
    ) -> Result<DMatrix<f64>, ModelError> {
        match self {
            MatrixInput::Rows(data) => {
                let shape_ok = data.len() == rows && data.iter().all(|r| r.len() == cols);
                if !shape_ok {
                    let got_cols = data.first().map(Vec::len).unwrap_or(0);
                    return Err(ModelError::Dimension {
                        what,
                        expected: format!("{rows}x{cols}"),
                        got: format!("{}x{}", data.len(), got_cols),
                    });
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
            }
            MatrixInput::Flat(data) => {
                if data.len() != rows * cols {
                    return Err(ModelError::Dimension {
                        what,
                        expected: format!("{rows}x{cols} = {}", rows * cols),
                        got: data.len().to_string(),
                    });
                }
                Ok(DMatrix::from_row_slice(rows, cols, data))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixInput::Rows(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseKind {
    MonodLiebig,
}

/// Raw response parameters as they appear in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseConfig {
    pub kind: ResponseKind,
    pub r: Vec<f64>,
    #[serde(rename = "K")]
    pub k: MatrixInput,
}

/// Raw, unvalidated model parameters. Key names match the JSON config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub m: usize,
    #[serde(rename = "M")]
    pub species: usize,
    #[serde(rename = "S")]
    pub supply: Vec<f64>,
    #[serde(rename = "D")]
    pub dilution: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "C")]
    pub content: MatrixInput,
    pub response: ResponseConfig,
    #[serde(default)]
    pub allow_zero_c: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<FoodwebModel, ModelError> {
        let (m, n) = (self.m, self.species);
        if m == 0 {
            return Err(ModelError::Dimension {
                what: "m",
                expected: "at least 1".into(),
                got: "0".into(),
            });
        }
        if n == 0 {
            return Err(ModelError::Dimension {
                what: "M",
                expected: "at least 1".into(),
                got: "0".into(),
            });
        }
        check_len("S", &self.supply, m)?;
        check_len("D", &self.dilution, m)?;
        check_len("mu", &self.mu, n)?;
        check_len("gamma", &self.gamma, n)?;
        check_len("response.r", &self.response.r, n)?;
        let content = self.content.to_matrix("C", m, n)?;
        let half_sat = self.response.k.to_matrix("response.K", m, n)?;

        check_positive("S", &self.supply, 'i')?;
        check_positive("D", &self.dilution, 'i')?;
        check_positive("gamma", &self.gamma, 'j')?;
        check_positive("r", &self.response.r, 'j')?;
        for (j, &mu) in self.mu.iter().enumerate() {
            let index = format!("j={}", j + 1);
            if !mu.is_finite() {
                return Err(ModelError::NotFinite { param: "mu", index });
            }
            if mu < 0.0 {
                return Err(ModelError::Negative { param: "mu", index });
            }
        }
        for i in 0..m {
            for j in 0..n {
                let index = format!("(i={}, j={})", i + 1, j + 1);
                let c = content[(i, j)];
                if !c.is_finite() {
                    return Err(ModelError::NotFinite { param: "C", index });
                }
                let c_ok = if self.allow_zero_c { c >= 0.0 } else { c > 0.0 };
                if !c_ok {
                    return Err(ModelError::NonPositive { param: "C", index });
                }
                let k = half_sat[(i, j)];
                if !k.is_finite() {
                    return Err(ModelError::NotFinite { param: "K", index });
                }
                if k <= 0.0 {
                    return Err(ModelError::NonPositive { param: "K", index });
                }
            }
        }

        Ok(FoodwebModel {
            supply: self.supply.clone(),
            dilution: self.dilution.clone(),
            mu: self.mu.clone(),
            gamma: self.gamma.clone(),
            content,
            response: Response::MonodLiebig(MonodLiebig {
                r: self.response.r.clone(),
                k: half_sat,
            }),
            allow_zero_c: self.allow_zero_c,
        })
    }
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::Dimension {
            what,
            expected: expected.to_string(),
            got: v.len().to_string(),
        });
    }
    Ok(())
}

fn check_positive(param: &'static str, v: &[f64], axis: char) -> Result<(), ModelError> {
    for (k, &x) in v.iter().enumerate() {
        let index = format!("{axis}={}", k + 1);
        if !x.is_finite() {
            return Err(ModelError::NotFinite { param, index });
        }
        if x <= 0.0 {
            return Err(ModelError::NonPositive { param, index });
        }
    }
    Ok(())
}

/// Contract for a family of specific growth rates `phi_j` on `[0, S]`.
///
/// Implementations must be bounded, Lipschitz, vanish exactly on the
/// boundary of the positive orthant and be nondecreasing in every
/// coordinate.
pub trait GrowthResponse {
    /// Growth rate of species `j` at resources `v`. No range checks.
    fn rate(&self, j: usize, v: &[f64]) -> f64;
    /// An L-infinity Lipschitz constant of `phi_j` on `[0, S]`.
    fn lipschitz(&self, j: usize) -> f64;
}

/// Monod kinetics per resource combined by Liebig's law of the minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodLiebig {
    /// Maximum specific growth rates `r_j`.
    pub r: Vec<f64>,
    /// Half-saturation constants, `K[(i, j)]` for resource `i`, species `j`.
    pub k: DMatrix<f64>,
}

impl GrowthResponse for MonodLiebig {
    fn rate(&self, j: usize, v: &[f64]) -> f64 {
        let r = self.r[j];
        v.iter()
            .enumerate()
            .map(|(i, &vi)| r * vi / (self.k[(i, j)] + vi))
            .fold(f64::INFINITY, f64::min)
    }

    fn lipschitz(&self, j: usize) -> f64 {
        let kmin = self
            .k
            .column(j)
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        self.r[j] / kmin
    }
}

/// The shipped response families.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    MonodLiebig(MonodLiebig),
}

impl Response {
    pub fn kind(&self) -> ResponseKind {
        match self {
            Response::MonodLiebig(_) => ResponseKind::MonodLiebig,
        }
    }

    pub fn as_monod_liebig(&self) -> Option<&MonodLiebig> {
        match self {
            Response::MonodLiebig(ml) => Some(ml),
        }
    }
}

impl GrowthResponse for Response {
    #[inline]
    fn rate(&self, j: usize, v: &[f64]) -> f64 {
        match self {
            Response::MonodLiebig(ml) => ml.rate(j, v),
        }
    }

    fn lipschitz(&self, j: usize) -> f64 {
        match self {
            Response::MonodLiebig(ml) => ml.lipschitz(j),
        }
    }
}

/// A validated foodweb model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FoodwebModel {
    supply: Vec<f64>,
    dilution: Vec<f64>,
    mu: Vec<f64>,
    gamma: Vec<f64>,
    content: DMatrix<f64>,
    response: Response,
    allow_zero_c: bool,
}

impl FoodwebModel {
    /// Validates a configuration. Same as [`ModelConfig::validate`].
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()
    }

    /// Number of resources `m`.
    pub fn resources(&self) -> usize {
        self.supply.len()
    }

    /// Number of species `M`.
    pub fn species(&self) -> usize {
        self.mu.len()
    }

    pub fn supply(&self) -> &[f64] {
        &self.supply
    }

    pub fn dilution(&self) -> &[f64] {
        &self.dilution
    }

    pub fn mortality(&self) -> &[f64] {
        &self.mu
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Resource content `c_ij` of resource `i` in species `j`.
    pub fn content(&self, i: usize, j: usize) -> f64 {
        self.content[(i, j)]
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    /// Copy of this model with every `gamma_j` multiplied by `factor`.
    pub fn with_gamma_scaled(&self, factor: f64) -> Result<Self, ModelError> {
        let mut cfg = self.to_config();
        cfg.gamma.iter_mut().for_each(|g| *g *= factor);
        cfg.validate()
    }

    /// The configuration this model was built from, in canonical form.
    pub fn to_config(&self) -> ModelConfig {
        let Response::MonodLiebig(ml) = &self.response;
        ModelConfig {
            m: self.resources(),
            species: self.species(),
            supply: self.supply.clone(),
            dilution: self.dilution.clone(),
            mu: self.mu.clone(),
            gamma: self.gamma.clone(),
            content: MatrixInput::from_matrix(&self.content),
            response: ResponseConfig {
                kind: ResponseKind::MonodLiebig,
                r: ml.r.clone(),
                k: MatrixInput::from_matrix(&ml.k),
            },
            allow_zero_c: self.allow_zero_c,
        }
    }

    /// `phi_j(v)` without range checks. Callers keep `v` inside `[0, S]`.
    #[inline]
    pub fn phi_unchecked(&self, j: usize, v: &[f64]) -> f64 {
        self.response.rate(j, v)
    }

    /// `phi_j(v)` with `j` and `v` checked against the model.
    pub fn phi(&self, j: usize, v: &[f64]) -> Result<f64, ModelError> {
        if j >= self.species() {
            return Err(ModelError::SpeciesOutOfRange(j + 1));
        }
        self.check_in_box(v)?;
        Ok(self.phi_unchecked(j, v))
    }

    pub fn check_in_box(&self, v: &[f64]) -> Result<(), ModelError> {
        if v.len() != self.resources() {
            return Err(ModelError::ResourceLength {
                expected: self.resources(),
                got: v.len(),
            });
        }
        for (i, (&vi, &si)) in v.iter().zip(&self.supply).enumerate() {
            if !(0.0..=si).contains(&vi) {
                return Err(ModelError::OutsideBox {
                    index: i + 1,
                    value: vi,
                    supply: si,
                });
            }
        }
        Ok(())
    }

    /// `L_j`, for Monod-Liebig `r_j / min_i K_ij`.
    pub fn lipschitz(&self, j: usize) -> f64 {
        self.response.lipschitz(j)
    }

    /// Growth rates of all species at the supply point.
    pub fn phi_at_supply(&self) -> Vec<f64> {
        (0..self.species())
            .map(|j| self.phi_unchecked(j, &self.supply))
            .collect()
    }

    pub fn survivability(&self) -> Survivability {
        let ml = self.response.as_monod_liebig();
        let entries = (0..self.species())
            .map(|j| {
                let phi_s = self.phi_unchecked(j, &self.supply);
                let mu = self.mu[j];
                let margin = phi_s - mu;
                let requirements = ml.and_then(|ml| {
                    let r = ml.r[j];
                    (r > mu).then(|| {
                        (0..self.resources())
                            .map(|i| mu * ml.k[(i, j)] / (r - mu))
                            .collect::<Vec<_>>()
                    })
                });
                let requirement_check = requirements
                    .as_ref()
                    .map(|req| req.iter().zip(&self.supply).all(|(&rij, &si)| rij < si));
                SpeciesSurvival {
                    species: j + 1,
                    phi_at_supply: phi_s,
                    margin,
                    survives: margin > 0.0,
                    asymptotically_extinct: margin <= 0.0,
                    resource_requirements: requirements,
                    requirement_check,
                }
            })
            .collect();
        Survivability { species: entries }
    }

    /// True when `phi_j(S) > mu_j` for every species.
    pub fn is_survivable(&self) -> bool {
        self.phi_at_supply()
            .iter()
            .zip(&self.mu)
            .all(|(&p, &mu)| p > mu)
    }
}

/// Per-species survivability data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeciesSurvival {
    /// 1-based species index.
    pub species: usize,
    pub phi_at_supply: f64,
    /// `phi_j(S) - mu_j`.
    pub margin: f64,
    pub survives: bool,
    /// `phi_j(S) <= mu_j`: the species dies out on every trajectory.
    pub asymptotically_extinct: bool,
    /// `R_ij = mu_j K_ij / (r_j - mu_j)`, undefined when `r_j <= mu_j`.
    pub resource_requirements: Option<Vec<f64>>,
    /// `R^(j) << S`; `None` when the requirements are undefined.
    /// Positivity of `R^(j)` additionally needs `mu_j > 0`.
    pub requirement_check: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Survivability {
    pub species: Vec<SpeciesSurvival>,
}

impl Survivability {
    pub fn all_survive(&self) -> bool {
        self.species.iter().all(|s| s.survives)
    }

    pub fn failing(&self) -> Vec<usize> {
        self.species
            .iter()
            .filter(|s| !s.survives)
            .map(|s| s.species)
            .collect()
    }
}

impl fmt::Display for Survivability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.species {
            writeln!(
                f,
                "species {}: phi(S) - mu = {:.6} -> {}",
                s.species,
                s.margin,
                if s.survives { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Species abundances paired with resource concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}
