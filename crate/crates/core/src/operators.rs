//! The algebraic maps behind the equilibrium problem.
//!
//! * `X_j(v) = (phi_j(v) - mu_j)_+ / gamma_j` gives species abundances at
//!   resource level `v`.
//! * `F_J(v)_i = S_i - sum_{j in J} c_ij X_j(v) phi_j(v) / D_i` is the
//!   resource balance; equilibria with support in `J` are its fixed points.
//! * `V(w)` is the polarized version of `F`: coordinate `i` of `V(w)` is the
//!   root of a scalar monotone equation in `v_i` with every other
//!   coordinate frozen at `w`. `V` maps `[0, S]` into `(0, S]`, is
//!   non-increasing and has the same fixed points as `F`.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::FoodwebModel;

/// Default absolute tolerance of the scalar bisection.
pub const SOLVER_TOL: f64 = 1e-12;

/// Below this dimension the coordinate solves of `V` run serially.
const PARALLEL_MIN_RESOURCES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("scalar solve on [0, {upper}]: {reason}")]
    Scalar { upper: f64, reason: String },
    #[error("V coordinate i={coordinate}: {source}")]
    Coordinate {
        coordinate: usize,
        #[source]
        source: Box<OperatorError>,
    },
}

/// The equation `S_i - x = f(x)` on `[0, S_i]` with `f` nondecreasing,
/// non-negative and `f(0) = 0`.
pub struct ScalarRootProblem<F> {
    pub upper: f64,
    pub f: F,
    pub tol: f64,
}

impl<F: Fn(f64) -> f64> ScalarRootProblem<F> {
    pub fn new(upper: f64, f: F) -> Self {
        ScalarRootProblem {
            upper,
            f,
            tol: SOLVER_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn solve(&self) -> Result<f64, OperatorError> {
        solve_monotone_scalar(self)
    }
}

/// Bisection for the unique root of `S_i - x = f(x)` in `(0, S_i]`.
///
/// `h(x) = S_i - x - f(x)` is strictly decreasing with `h(0) = S_i > 0`;
/// the result lies inside a bracket of width at most `tol`. When
/// `f(S_i) == 0` the root is `S_i` exactly.
pub fn solve_monotone_scalar<F: Fn(f64) -> f64>(
    problem: &ScalarRootProblem<F>,
) -> Result<f64, OperatorError> {
    let upper = problem.upper;
    let fail = |reason: String| OperatorError::Scalar { upper, reason };
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(fail("upper bound must be positive".into()));
    }
    if !(problem.tol > 0.0 && problem.tol.is_finite()) {
        return Err(fail("tolerance must be positive".into()));
    }
    let f = &problem.f;
    let h = |x: f64| -> Result<f64, OperatorError> {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(fail(format!("f({x}) is not finite")));
        }
        if fx < 0.0 {
            return Err(fail(format!("f({x}) = {fx} is negative")));
        }
        Ok(upper - x - fx)
    };

    let h_hi = h(upper)?;
    if h_hi >= 0.0 {
        return Ok(upper);
    }
    let h_lo = h(0.0)?;
    if h_lo <= 0.0 {
        return Err(fail(format!("f(0) = {} is not zero", upper - h_lo)));
    }

    let (mut lo, mut hi) = (0.0_f64, upper);
    let (mut last_lo, mut last_hi) = (h_lo, h_hi);
    while hi - lo > problem.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid)?;
        if hm > last_lo || hm < last_hi {
            return Err(fail(format!("f is not monotone near x = {mid}")));
        }
        if hm > 0.0 {
            lo = mid;
            last_lo = hm;
        } else {
            hi = mid;
            last_hi = hm;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Species selection for restricted maps: `None` means every species.
pub type Subset<'a> = Option<&'a [usize]>;

fn in_subset(subset: Subset<'_>, j: usize) -> bool {
    subset.is_none_or(|s| s.contains(&j))
}

/// `X_j(v) = (phi_j(v) - mu_j)_+ / gamma_j` for every species.
pub fn x_map(model: &FoodwebModel, v: &[f64]) -> Vec<f64> {
    (0..model.species())
        .map(|j| species_abundance(model, j, model.phi_unchecked(j, v)))
        .collect()
}

#[inline]
pub(crate) fn species_abundance(model: &FoodwebModel, j: usize, phi: f64) -> f64 {
    (phi - model.mortality()[j]).max(0.0) / model.gamma()[j]
}

/// `X` restricted to `J`: zero for species outside the subset.
pub fn x_map_subset(model: &FoodwebModel, v: &[f64], subset: Subset<'_>) -> Vec<f64> {
    let mut x = x_map(model, v);
    for (j, xj) in x.iter_mut().enumerate() {
        if !in_subset(subset, j) {
            *xj = 0.0;
        }
    }
    x
}

/// `F_J(v)`. May have negative coordinates; `F_{}(v) = S`.
pub fn f_map_subset(model: &FoodwebModel, v: &[f64], subset: &[usize]) -> Vec<f64> {
    f_map_impl(model, v, Some(subset))
}

/// `F(v) = F_{1..M}(v)`.
pub fn f_map(model: &FoodwebModel, v: &[f64]) -> Vec<f64> {
    f_map_impl(model, v, None)
}

pub(crate) fn f_map_impl(model: &FoodwebModel, v: &[f64], subset: Subset<'_>) -> Vec<f64> {
    let phis: Vec<f64> = (0..model.species())
        .map(|j| model.phi_unchecked(j, v))
        .collect();
    let uptake: Vec<f64> = phis
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if in_subset(subset, j) {
                species_abundance(model, j, p) * p
            } else {
                0.0
            }
        })
        .collect();
    (0..model.resources())
        .map(|i| {
            let consumed: f64 = uptake
                .iter()
                .enumerate()
                .map(|(j, &u)| model.content(i, j) * u)
                .sum();
            model.supply()[i] - consumed / model.dilution()[i]
        })
        .collect()
}

/// The polarized operator `V(w)`.
pub fn v_map(model: &FoodwebModel, w: &[f64]) -> Result<Vec<f64>, OperatorError> {
    v_map_with(model, w, None, SOLVER_TOL)
}

/// `V_J(w)`, built from `F_J` instead of `F`.
pub fn v_map_subset(
    model: &FoodwebModel,
    w: &[f64],
    subset: &[usize],
) -> Result<Vec<f64>, OperatorError> {
    v_map_with(model, w, Some(subset), SOLVER_TOL)
}

pub fn v_map_with(
    model: &FoodwebModel,
    w: &[f64],
    subset: Subset<'_>,
    tol: f64,
) -> Result<Vec<f64>, OperatorError> {
    let x = x_map_subset(model, w, subset);
    let solve = |i: usize| coordinate_solve(model, w, &x, i, tol);
    if model.resources() >= PARALLEL_MIN_RESOURCES {
        (0..model.resources()).into_par_iter().map(solve).collect()
    } else {
        (0..model.resources()).map(solve).collect()
    }
}

fn coordinate_solve(
    model: &FoodwebModel,
    w: &[f64],
    x: &[f64],
    i: usize,
    tol: f64,
) -> Result<f64, OperatorError> {
    let weights: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, &xj)| xj > 0.0)
        .map(|(j, &xj)| (j, model.content(i, j) * xj / model.dilution()[i]))
        .filter(|&(_, wt)| wt > 0.0)
        .collect();
    let supply = model.supply()[i];
    if weights.is_empty() {
        return Ok(supply);
    }
    let f = |z: f64| {
        let mut probe = w.to_vec();
        probe[i] = z;
        weights
            .iter()
            .map(|&(j, wt)| wt * model.phi_unchecked(j, &probe))
            .sum::<f64>()
    };
    ScalarRootProblem::new(supply, f)
        .with_tol(tol)
        .solve()
        .map_err(|e| OperatorError::Coordinate {
            coordinate: i + 1,
            source: Box::new(e),
        })
}

/// Supremum-norm distance.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Coordinate-wise `max(v, 0)`.
pub fn positive_part(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Coordinate-wise clamp into `[0, S]`.
pub fn clamp_to_box(model: &FoodwebModel, v: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(model.supply())
        .map(|(&x, &s)| x.clamp(0.0, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatrixInput, ModelConfig, ResponseConfig, ResponseKind};

    fn scalar_model() -> FoodwebModel {
        ModelConfig {
            m: 1,
            species: 1,
            supply: vec![10.0],
            dilution: vec![1.0],
            mu: vec![0.25],
            gamma: vec![1.0],
            content: MatrixInput::Flat(vec![1.0]),
            response: ResponseConfig {
                kind: ResponseKind::MonodLiebig,
                r: vec![1.0],
                k: MatrixInput::Flat(vec![1.0]),
            },
            allow_zero_c: false,
        }
        .validate()
        .unwrap()
    }

    // X(S) = 10/11 - 1/4 = 29/44
    const X_AT_SUPPLY: f64 = 29.0 / 44.0;

    /// Positive root of x^2 + (a + 1 - S) x - S = 0, i.e. S - x = a x / (1 + x).
    fn quadratic_root(a: f64, s: f64) -> f64 {
        let b = a + 1.0 - s;
        (-b + (b * b + 4.0 * s).sqrt()) / 2.0
    }

    #[test]
    fn scalar_solver_linear() {
        let x = ScalarRootProblem::new(3.0, |x| x).solve().unwrap();
        assert!((x - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scalar_solver_zero_function_hits_upper_endpoint() {
        let x = ScalarRootProblem::new(7.0, |_| 0.0).solve().unwrap();
        assert_eq!(x, 7.0);
    }

    #[test]
    fn scalar_solver_monod_quadratic() {
        let a = 0.659091;
        let x = ScalarRootProblem::new(10.0, |x: f64| a * x / (1.0 + x))
            .solve()
            .unwrap();
        let oracle = quadratic_root(a, 10.0);
        assert!((oracle - 9.404258).abs() < 1e-6);
        assert!((x - oracle).abs() < 1e-11);
    }

    #[test]
    fn scalar_solver_rejects_bad_functions() {
        assert!(ScalarRootProblem::new(1.0, |_| 2.0).solve().is_err());
        assert!(ScalarRootProblem::new(1.0, |x: f64| -x).solve().is_err());
        assert!(ScalarRootProblem::new(1.0, |_| f64::NAN).solve().is_err());
        // decreasing f: h is no longer monotone
        let r = ScalarRootProblem::new(1.0, |x: f64| if x == 0.0 { 0.0 } else { 5.0 - 4.0 * x })
            .solve();
        assert!(r.is_err());
    }

    #[test]
    fn scalar_solver_comparison() {
        let f = |x: f64| 2.0 * x;
        let g = |x: f64| x;
        let rf = ScalarRootProblem::new(4.0, f).solve().unwrap();
        let rg = ScalarRootProblem::new(4.0, g).solve().unwrap();
        assert!(rf <= rg + 1e-12);
    }

    #[test]
    fn x_map_examples() {
        let model = scalar_model();
        assert_eq!(x_map(&model, &[0.0]), vec![0.0]);
        assert!((x_map(&model, &[10.0])[0] - X_AT_SUPPLY).abs() < 1e-15);
        // phi(0.2) = 1/6 < 0.25
        assert_eq!(x_map(&model, &[0.2]), vec![0.0]);
    }

    #[test]
    fn f_map_examples() {
        let model = scalar_model();
        assert_eq!(f_map_subset(&model, &[3.0], &[]), vec![10.0]);
        assert_eq!(f_map(&model, &[0.0]), vec![10.0]);
        let expected = 10.0 - X_AT_SUPPLY * 10.0 / 11.0;
        assert!((f_map(&model, &[10.0])[0] - expected).abs() < 1e-14);
        assert!((expected - 9.400826).abs() < 1e-6);
        assert!(f_map(&model, &[10.0])[0] < 10.0);
    }

    #[test]
    fn v_map_examples() {
        let model = scalar_model();
        assert_eq!(v_map(&model, &[0.0]).unwrap(), vec![10.0]);
        let vs = v_map(&model, &[10.0]).unwrap();
        let oracle = quadratic_root(X_AT_SUPPLY, 10.0);
        assert!((vs[0] - oracle).abs() < 1e-11);
        assert!((vs[0] - 9.404258).abs() < 1e-6);
        assert!(vs[0] > 0.0 && vs[0] < 10.0);
    }

    #[test]
    fn v_map_subset_empty_is_supply() {
        let model = scalar_model();
        assert_eq!(v_map_subset(&model, &[10.0], &[]).unwrap(), vec![10.0]);
    }
}
