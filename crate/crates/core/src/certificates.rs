//! Closed-form stability and persistence certificates, a priori bounds and
//! asymptotic estimates.
//!
//! All certificates require survivability, `phi_j(S) > mu_j` for every
//! species, and are refused otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixpoint::{
    iterate_period_two, FixpointError, PeriodTwoResult, ITERATION_TOL, MAX_ITER,
};
use crate::model::{FoodwebModel, GrowthResponse};
use crate::operators::{clamp_to_box, f_map, positive_part, x_map, SOLVER_TOL};

/// Bisection tolerance for the persistence radius `delta`.
pub const DELTA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("certificate refused: survivability fails for species {species:?} (phi_j(S) <= mu_j)")]
    NotSurvivable { species: Vec<usize> },
    #[error("break-even analysis needs a single resource, model has m={0}")]
    NotSingleResource(usize),
    #[error(transparent)]
    Fixpoint(#[from] FixpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub iteration_tol: f64,
    pub max_iter: usize,
    pub delta_tol: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            iteration_tol: ITERATION_TOL,
            max_iter: MAX_ITER,
            delta_tol: DELTA_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoCondition {
    /// `m = 1`: `rho_1 < 1`.
    #[serde(rename = "RHO1_STRICT")]
    Rho1Strict,
    /// `m >= 2`: `rho_m <= 1`.
    #[serde(rename = "RHOM_WEAK")]
    RhomWeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho {
    pub value: f64,
    pub condition: RhoCondition,
}

impl Rho {
    /// Whether the value satisfies its condition.
    pub fn holds(&self) -> bool {
        self.holds_at(self.value)
    }

    fn holds_at(&self, value: f64) -> bool {
        match self.condition {
            RhoCondition::Rho1Strict => value < 1.0,
            RhoCondition::RhomWeak => value <= 1.0,
        }
    }
}

fn require_survivable(model: &FoodwebModel) -> Result<(), CertificateError> {
    let s = model.survivability();
    if s.all_survive() {
        Ok(())
    } else {
        Err(CertificateError::NotSurvivable {
            species: s.failing(),
        })
    }
}

/// `rho_1 = sum_j mu_j c_1j L_j / (D_1 gamma_j)` for one resource,
/// `rho_m = max_i sum_j (2 phi_j(S) - mu_j) c_ij L_j / (D_i gamma_j)` otherwise.
pub fn rho(model: &FoodwebModel) -> Result<Rho, CertificateError> {
    require_survivable(model)?;
    let response = model.response();
    let mu = model.mortality();
    let gamma = model.gamma();
    if model.resources() == 1 {
        let d = model.dilution()[0];
        let value = (0..model.species())
            .map(|j| mu[j] * model.content(0, j) * response.lipschitz(j) / (d * gamma[j]))
            .sum();
        return Ok(Rho {
            value,
            condition: RhoCondition::Rho1Strict,
        });
    }
    let phi_s = model.phi_at_supply();
    let value = (0..model.resources())
        .map(|i| {
            let d = model.dilution()[i];
            (0..model.species())
                .map(|j| {
                    (2.0 * phi_s[j] - mu[j]) * model.content(i, j) * response.lipschitz(j)
                        / (d * gamma[j])
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Rho {
        value,
        condition: RhoCondition::RhomWeak,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityVerdict {
    /// The rho condition holds.
    Certified,
    /// The condition fails but the iteration gap vanished.
    ObservedUncertified,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub rho: Rho,
    pub globally_stable: bool,
    pub verdict: StabilityVerdict,
    pub period_two: PeriodTwoResult,
}

pub fn global_stability_certificate(
    model: &FoodwebModel,
    opts: &CertificateOptions,
) -> Result<StabilityCertificate, CertificateError> {
    let rho = rho(model)?;
    let period_two = iterate_period_two(model, opts.iteration_tol, opts.max_iter)?;
    let globally_stable = rho.holds();
    let verdict = if globally_stable {
        StabilityVerdict::Certified
    } else if period_two.converged && period_two.gap < opts.iteration_tol {
        StabilityVerdict::ObservedUncertified
    } else {
        StabilityVerdict::NotCertified
    };
    Ok(StabilityCertificate {
        rho,
        globally_stable,
        verdict,
        period_two,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCertificate {
    pub rho: Rho,
    /// Largest `t` with `S - t (1, ..., 1)` still in the region where every
    /// species grows faster than it dies.
    pub delta: f64,
    /// `delta / |S|_inf`.
    pub rho0: f64,
    pub persistent: bool,
    /// `X(check0)`, reported when persistent.
    pub species_lower_bounds: Option<Vec<f64>>,
}

/// Radius `delta` along the diagonal ray from `S`, by bisection.
pub fn persistence_radius(model: &FoodwebModel, tol: f64) -> Result<f64, CertificateError> {
    require_survivable(model)?;
    let supply = model.supply();
    let mu = model.mortality();
    let inside = |t: f64| {
        let v: Vec<f64> = supply.iter().map(|&s| (s - t).max(0.0)).collect();
        (0..model.species()).all(|j| model.phi_unchecked(j, &v) > mu[j])
    };
    // some coordinate reaches 0 at min S_i, where every phi_j vanishes
    let (mut lo, mut hi) = (
        0.0_f64,
        supply.iter().copied().fold(f64::INFINITY, f64::min),
    );
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn persistence_certificate(
    model: &FoodwebModel,
    opts: &CertificateOptions,
) -> Result<PersistenceCertificate, CertificateError> {
    let rho = rho(model)?;
    let delta = persistence_radius(model, opts.delta_tol)?;
    let s_norm = model.supply().iter().copied().fold(0.0, f64::max);
    let rho0 = delta / s_norm;
    let persistent = rho.value <= rho0 && rho.holds();
    let species_lower_bounds = if persistent {
        let p2 = iterate_period_two(model, opts.iteration_tol, opts.max_iter)?;
        Some(x_map(model, &p2.check0))
    } else {
        None
    };
    Ok(PersistenceCertificate {
        rho,
        delta,
        rho0,
        persistent,
        species_lower_bounds,
    })
}

/// Explicit a priori box for the limits of every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichBounds {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

/// `v_lo = [F(S)]_+`, `v_hi = clamp(F(v_lo), 0, S)` and their images under `X`.
pub fn sandwich_bounds(model: &FoodwebModel) -> Result<SandwichBounds, CertificateError> {
    require_survivable(model)?;
    let v_lo = positive_part(&f_map(model, model.supply()));
    let v_hi = clamp_to_box(model, &f_map(model, &v_lo));
    Ok(SandwichBounds {
        x_lo: x_map(model, &v_lo),
        x_hi: x_map(model, &v_hi),
        v_lo,
        v_hi,
    })
}

/// Asymptotic box `[check0, hat0]` for `v` and `[X(check0), X(hat0)]` for `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilateralEstimates {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub gap: f64,
    /// Gap below tolerance: every trajectory converges to one special equilibrium.
    pub unique_equilibrium: bool,
    pub converged: bool,
    pub iterations_used: usize,
}

pub fn bilateral_estimates(
    model: &FoodwebModel,
    opts: &CertificateOptions,
) -> Result<BilateralEstimates, CertificateError> {
    require_survivable(model)?;
    let p2 = iterate_period_two(model, opts.iteration_tol, opts.max_iter)?;
    Ok(bilateral_from(model, &p2, opts.iteration_tol))
}

fn bilateral_from(model: &FoodwebModel, p2: &PeriodTwoResult, tol: f64) -> BilateralEstimates {
    BilateralEstimates {
        x_lo: x_map(model, &p2.check0),
        x_hi: x_map(model, &p2.hat0),
        v_lo: p2.check0.clone(),
        v_hi: p2.hat0.clone(),
        gap: p2.gap,
        unique_equilibrium: p2.converged && p2.gap < tol,
        converged: p2.converged,
        iterations_used: p2.iterations_used,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalGammas {
    /// Uniform scale `s*`: scaling every `gamma_j` by `s` turns `rho` into `rho / s`.
    pub scale: f64,
    /// `gamma_j* = s* gamma_j`.
    pub gammas: Vec<f64>,
    /// For one resource the certificate needs `gamma_j > gamma_j*` strictly.
    pub strict: bool,
    pub certified_now: bool,
}

pub fn critical_gammas(model: &FoodwebModel) -> Result<CriticalGammas, CertificateError> {
    let rho = rho(model)?;
    let scale = rho.value;
    Ok(CriticalGammas {
        scale,
        gammas: model.gamma().iter().map(|g| g * scale).collect(),
        strict: rho.condition == RhoCondition::Rho1Strict,
        certified_now: rho.holds(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEven {
    /// `R_j` with `phi_j(R_j) = mu_j`.
    pub concentrations: Vec<f64>,
    pub lowest: f64,
    /// Species attaining the lowest value, 1-based.
    pub winners: Vec<usize>,
}

/// Break-even concentrations for a single resource.
pub fn break_even(model: &FoodwebModel) -> Result<BreakEven, CertificateError> {
    if model.resources() != 1 {
        return Err(CertificateError::NotSingleResource(model.resources()));
    }
    require_survivable(model)?;
    let ml = model
        .response()
        .as_monod_liebig()
        .expect("only Monod-Liebig ships");
    let mu = model.mortality();
    let concentrations: Vec<f64> = (0..model.species())
        .map(|j| mu[j] * ml.k[(0, j)] / (ml.r[j] - mu[j]))
        .collect();
    let lowest = concentrations.iter().copied().fold(f64::INFINITY, f64::min);
    let winners = concentrations
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == lowest)
        .map(|(j, _)| j + 1)
        .collect();
    Ok(BreakEven {
        concentrations,
        lowest,
        winners,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver_tol: f64,
    pub iteration_tol: f64,
    pub delta_tol: f64,
    pub max_iter: usize,
    pub iterations_used: usize,
    pub iteration_converged: bool,
}

/// Everything the certificates module knows about a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rho: f64,
    pub condition: RhoCondition,
    pub globally_stable: bool,
    pub verdict: StabilityVerdict,
    pub gap: f64,
    pub delta: f64,
    pub rho0: f64,
    pub persistent: bool,
    pub species_lower_bounds: Option<Vec<f64>>,
    pub apriori_v_lo: Vec<f64>,
    pub apriori_v_hi: Vec<f64>,
    pub apriori_x_lo: Vec<f64>,
    pub apriori_x_hi: Vec<f64>,
    pub bilateral_v: Bounds,
    pub bilateral_x: Bounds,
    pub critical_gammas: Vec<f64>,
    pub provenance: Provenance,
}

pub fn certify(
    model: &FoodwebModel,
    opts: &CertificateOptions,
) -> Result<CertificateReport, CertificateError> {
    let stability = global_stability_certificate(model, opts)?;
    let delta = persistence_radius(model, opts.delta_tol)?;
    let s_norm = model.supply().iter().copied().fold(0.0, f64::max);
    let rho0 = delta / s_norm;
    let persistent = stability.rho.holds() && stability.rho.value <= rho0;
    let p2 = &stability.period_two;
    let bilateral = bilateral_from(model, p2, opts.iteration_tol);
    let sandwich = sandwich_bounds(model)?;
    let gammas = critical_gammas(model)?;
    Ok(CertificateReport {
        rho: stability.rho.value,
        condition: stability.rho.condition,
        globally_stable: stability.globally_stable,
        verdict: stability.verdict,
        gap: p2.gap,
        delta,
        rho0,
        persistent,
        species_lower_bounds: persistent.then(|| bilateral.x_lo.clone()),
        apriori_v_lo: sandwich.v_lo,
        apriori_v_hi: sandwich.v_hi,
        apriori_x_lo: sandwich.x_lo,
        apriori_x_hi: sandwich.x_hi,
        bilateral_v: Bounds {
            lo: bilateral.v_lo,
            hi: bilateral.v_hi,
        },
        bilateral_x: Bounds {
            lo: bilateral.x_lo,
            hi: bilateral.x_hi,
        },
        critical_gammas: gammas.gammas,
        provenance: Provenance {
            solver_tol: SOLVER_TOL,
            iteration_tol: opts.iteration_tol,
            delta_tol: opts.delta_tol,
            max_iter: opts.max_iter,
            iterations_used: p2.iterations_used,
            iteration_converged: p2.converged,
        },
    })
}
