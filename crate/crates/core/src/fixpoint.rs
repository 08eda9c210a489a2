//! Period-two iteration of `V`, fixed-point search and stratified equilibria.
//!
//! Iterating the non-increasing map `V` from `u^0 = 0` produces interlaced
//! sequences
//!
//! ```text
//! u^0 <= u^2 <= ... <= u^{2k} <= ... <= u^{2k+1} <= ... <= u^3 <= u^1
//! ```
//!
//! whose limits `check0 <= hat0` form the extremal period-two pair: every
//! fixed point of `F` (equivalently of `V`) lies in `[check0, hat0]`.

use std::cmp::Ordering;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FoodwebModel;
use crate::operators::{
    clamp_to_box, f_map_impl, sup_dist, v_map_with, x_map_subset, OperatorError, Subset, SOLVER_TOL,
};

/// Default stopping tolerance for the period-two iteration.
pub const ITERATION_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixpointError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("seed condition violated at i={coordinate}: {detail}")]
    SeedCondition { coordinate: usize, detail: String },
    #[error("seed has {got} coordinates, expected {expected}")]
    SeedLength { expected: usize, got: usize },
}

/// Extremal period-two pair of `V` with the iterate trace that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTwoResult {
    /// Limit of the even iterates.
    pub check0: Vec<f64>,
    /// Limit of the odd iterates.
    pub hat0: Vec<f64>,
    /// `|hat0 - check0|_inf`.
    pub gap: f64,
    /// `u^0 = 0, u^1, u^2, ...`.
    pub iterates: Vec<Vec<f64>>,
    pub converged: bool,
    /// Number of applications of `V`.
    pub iterations_used: usize,
}

impl PeriodTwoResult {
    /// Iteration trace as CSV: `iteration,v_1,...,v_m`.
    pub fn trace_csv(&self) -> String {
        let m = self.check0.len();
        let mut out = String::from("iteration");
        for i in 1..=m {
            out.push_str(&format!(",v_{i}"));
        }
        out.push('\n');
        for (k, u) in self.iterates.iter().enumerate() {
            out.push_str(&k.to_string());
            for x in u {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `u^{k+1} = V(u^k)` from `u^0 = 0` until both the even and the odd
/// subsequences move by less than `tol`, or `max_iter` applications.
pub fn iterate_period_two(
    model: &FoodwebModel,
    tol: f64,
    max_iter: usize,
) -> Result<PeriodTwoResult, FixpointError> {
    let zero = vec![0.0; model.resources()];
    iterate_from(model, zero, None, tol, max_iter)
}

/// Same as [`iterate_period_two`] for `V_J`, the operator built from `F_J`.
pub fn iterate_period_two_subset(
    model: &FoodwebModel,
    subset: &[usize],
    tol: f64,
    max_iter: usize,
) -> Result<PeriodTwoResult, FixpointError> {
    let zero = vec![0.0; model.resources()];
    iterate_from(model, zero, Some(subset), tol, max_iter)
}

fn iterate_from(
    model: &FoodwebModel,
    start: Vec<f64>,
    subset: Subset<'_>,
    tol: f64,
    max_iter: usize,
) -> Result<PeriodTwoResult, FixpointError> {
    let mut iterates = vec![start];
    let mut converged = false;
    while iterates.len() <= max_iter {
        let next = v_map_with(model, iterates.last().unwrap(), subset, SOLVER_TOL)?;
        iterates.push(next);
        let n = iterates.len() - 1;
        if n >= 3
            && sup_dist(&iterates[n], &iterates[n - 2]) < tol
            && sup_dist(&iterates[n - 1], &iterates[n - 3]) < tol
        {
            converged = true;
            break;
        }
    }
    let n = iterates.len() - 1;
    let (even, odd) = if n % 2 == 0 { (n, n - 1) } else { (n - 1, n) };
    let check0 = iterates[even].clone();
    let hat0 = iterates[odd].clone();
    let gap = sup_dist(&check0, &hat0);
    debug!("period-two iteration: {n} steps, gap {gap:e}, converged {converged}");
    Ok(PeriodTwoResult {
        check0,
        hat0,
        gap,
        iterates,
        converged,
        iterations_used: n,
    })
}

/// A period-two pair `V(lower) = upper`, `V(upper) = lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTwoPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

/// Alternating iteration from seeds with `V(y) <= x` and `y <= V(x)`.
///
/// The iterates of `y` interlace and converge to a period-two pair
/// `(lower, upper)` with `check0 <= lower`, `upper <= hat0` and
/// `y <= lower`, `upper <= x`. Seeds `(S, 0)` reproduce
/// [`iterate_period_two`] exactly.
pub fn refine_from_pair(
    model: &FoodwebModel,
    x_seed: &[f64],
    y_seed: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PeriodTwoPair, FixpointError> {
    let m = model.resources();
    for seed in [x_seed, y_seed] {
        if seed.len() != m {
            return Err(FixpointError::SeedLength {
                expected: m,
                got: seed.len(),
            });
        }
    }
    let slack = 10.0 * tol;
    let vx = v_map_with(model, x_seed, None, SOLVER_TOL)?;
    let vy = v_map_with(model, y_seed, None, SOLVER_TOL)?;
    for i in 0..m {
        if vy[i] > x_seed[i] + slack {
            return Err(FixpointError::SeedCondition {
                coordinate: i + 1,
                detail: format!("V(y)_i = {} exceeds x_i = {}", vy[i], x_seed[i]),
            });
        }
        if y_seed[i] > vx[i] + slack {
            return Err(FixpointError::SeedCondition {
                coordinate: i + 1,
                detail: format!("y_i = {} exceeds V(x)_i = {}", y_seed[i], vx[i]),
            });
        }
    }
    let run = iterate_from(model, y_seed.to_vec(), None, tol, max_iter)?;
    Ok(PeriodTwoPair {
        lower: run.check0,
        upper: run.hat0,
        converged: run.converged,
        iterations_used: run.iterations_used,
    })
}

/// A solution of `v = F_J(v)` with its species abundances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    /// Realized support `{j : x_j > 0}`, 1-based species labels.
    pub support: Vec<usize>,
    /// `|v - F_J(v)|_inf`.
    pub residual: f64,
    /// The subset `J` the record was solved for, 1-based species labels.
    pub stratum: Vec<usize>,
}

impl FixedPointRecord {
    fn new(model: &FoodwebModel, v: Vec<f64>, subset: Subset<'_>) -> Self {
        let fv = f_map_impl(model, &v, subset);
        let residual = sup_dist(&v, &fv);
        let x = x_map_subset(model, &v, subset);
        let support = x
            .iter()
            .enumerate()
            .filter(|(_, &xj)| xj > 0.0)
            .map(|(j, _)| j + 1)
            .collect();
        let stratum = match subset {
            Some(s) => {
                let mut s: Vec<usize> = s.iter().map(|j| j + 1).collect();
                s.sort_unstable();
                s.dedup();
                s
            }
            None => (1..=model.species()).collect(),
        };
        FixedPointRecord {
            v,
            x,
            support,
            residual,
            stratum,
        }
    }

    /// True when the realized support is a strict subset of the stratum.
    pub fn support_shrank(&self) -> bool {
        self.support.len() < self.stratum.len()
    }
}

/// Knobs for the multi-start fixed-point search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_starts: usize,
    /// Residual a record must reach; also sets the deduplication radius `10 tol`.
    pub tol: f64,
    /// Damping `lambda` in `v <- (1 - lambda) v + lambda clamp(F(v), 0, S)`.
    pub damping: f64,
    pub damped_iters: usize,
    pub newton_iters: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_starts: 64,
            tol: 1e-10,
            damping: 0.5,
            damped_iters: 200,
            newton_iters: 60,
            seed: 0,
        }
    }
}

/// Multi-start heuristic search for solutions of `v = F(v)` in a box.
///
/// Each start runs damped fixed-point iteration and is then polished by a
/// damped Newton iteration on `v - F(v)`. Results are deduplicated at
/// radius `10 tol` and sorted lexicographically by `v`. May miss fixed
/// points.
pub fn find_fixed_points(
    model: &FoodwebModel,
    box_lo: &[f64],
    box_hi: &[f64],
    opts: &SearchOptions,
) -> Vec<FixedPointRecord> {
    search(model, box_lo, box_hi, None, opts)
}

fn search(
    model: &FoodwebModel,
    box_lo: &[f64],
    box_hi: &[f64],
    subset: Subset<'_>,
    opts: &SearchOptions,
) -> Vec<FixedPointRecord> {
    let starts = start_points(box_lo, box_hi, opts.n_starts.max(1), opts.seed);
    debug!(
        "fixed-point search: {} starts, seed {}, first {:?}",
        starts.len(),
        opts.seed,
        starts.first()
    );
    let mut found: Vec<Vec<f64>> = starts
        .par_iter()
        .flat_map_iter(|s| solve_from(model, s, subset, opts))
        .collect();
    found.sort_by(|a, b| lex_cmp(a, b));
    let radius = 10.0 * opts.tol;
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for v in found {
        if unique.iter().all(|u| sup_dist(u, &v) > radius) {
            unique.push(v);
        }
    }
    unique
        .into_iter()
        .map(|v| FixedPointRecord::new(model, v, subset))
        .collect()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Box corners, the centre, then a Kronecker lattice with a seeded offset.
fn start_points(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = lo.len();
    let lerp = |u: &[f64]| -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .zip(u)
            .map(|((&a, &b), &t)| a + t * (b - a))
            .collect()
    };
    let mut pts = vec![lo.to_vec(), hi.to_vec(), lerp(&vec![0.5; d])];
    let alpha = kronecker_alpha(d);
    let mut state = seed;
    let offset: Vec<f64> = (0..d)
        .map(|_| unit_from_bits(splitmix64(&mut state)))
        .collect();
    for k in 1..=n {
        let u: Vec<f64> = (0..d)
            .map(|i| (offset[i] + k as f64 * alpha[i]).fract())
            .collect();
        pts.push(lerp(&u));
    }
    pts
}

/// Generator of the R_d low-discrepancy sequence: powers of the inverse of
/// the unique positive root of `x^{d+1} = x + 1`.
fn kronecker_alpha(d: usize) -> Vec<f64> {
    let mut g = 2.0_f64;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d).map(|k| g.powi(-(k as i32)).fract()).collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

fn solve_from(
    model: &FoodwebModel,
    start: &[f64],
    subset: Subset<'_>,
    opts: &SearchOptions,
) -> Option<Vec<f64>> {
    let lambda = opts.damping;
    let mut v = start.to_vec();
    for _ in 0..opts.damped_iters {
        let fv = clamp_to_box(model, &f_map_impl(model, &v, subset));
        let next: Vec<f64> = v
            .iter()
            .zip(&fv)
            .map(|(&a, &b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        let step = sup_dist(&next, &v);
        v = next;
        if step < opts.tol {
            break;
        }
    }
    for candidate in [v, start.to_vec()] {
        if let Some(p) = newton_polish(model, candidate, subset, opts) {
            return Some(p);
        }
    }
    None
}

/// Damped Newton on `G(v) = v - F_J(v)` with a forward-difference Jacobian,
/// kept inside `[0, S]`.
fn newton_polish(
    model: &FoodwebModel,
    mut v: Vec<f64>,
    subset: Subset<'_>,
    opts: &SearchOptions,
) -> Option<Vec<f64>> {
    let m = v.len();
    let g = |v: &[f64]| -> Vec<f64> {
        let fv = f_map_impl(model, v, subset);
        v.iter().zip(&fv).map(|(a, b)| a - b).collect()
    };
    let norm = |r: &[f64]| r.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let mut gv = g(&v);
    let mut res = norm(&gv);
    for _ in 0..opts.newton_iters {
        if res <= 1e-3 * opts.tol {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let h = 1e-7 * v[k].abs().max(1e-3);
            let mut probe = v.clone();
            // step inward near the upper face so the probe stays in the box
            let h = if probe[k] + h > model.supply()[k] {
                -h
            } else {
                h
            };
            probe[k] += h;
            let gp = g(&probe);
            for i in 0..m {
                jac[(i, k)] = (gp[i] - gv[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(m, gv.iter().map(|x| -x));
        let step = jac.lu().solve(&rhs)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = v
                .iter()
                .zip(step.iter())
                .map(|(&a, &d)| a + t * d)
                .collect();
            let trial = clamp_to_box(model, &trial);
            let gt = g(&trial);
            let rt = norm(&gt);
            if rt.is_finite() && rt < res * (1.0 - 1e-4 * t) {
                v = trial;
                gv = gt;
                res = rt;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (res <= opts.tol).then_some(v)
}

/// Solutions of `v = F_J(v)` with `x` from `X` restricted to `J`.
///
/// `J` holds 0-based species indices. The search box is the extremal
/// period-two pair of `V_J`. `J = {}` yields the single record `(0, S)`.
pub fn equilibria_for_subset(
    model: &FoodwebModel,
    subset: &[usize],
    opts: &SearchOptions,
) -> Result<Vec<FixedPointRecord>, FixpointError> {
    if subset.is_empty() {
        return Ok(vec![FixedPointRecord::new(
            model,
            model.supply().to_vec(),
            Some(subset),
        )]);
    }
    let bounds = iterate_period_two_subset(model, subset, ITERATION_TOL, MAX_ITER)?;
    let mut records = search(model, &bounds.check0, &bounds.hat0, Some(subset), opts);
    if records.is_empty() && bounds.gap <= opts.tol {
        records.push(FixedPointRecord::new(model, bounds.check0, Some(subset)));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatrixInput, ModelConfig, ResponseConfig, ResponseKind};
    use crate::operators::v_map;

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

    /// v - F(v) for the scalar model, monotone increasing on [0, 10].
    fn scalar_fixed_point_oracle() -> f64 {
        let g = |v: f64| {
            let phi = v / (1.0 + v);
            v - (10.0 - (phi - 0.25).max(0.0) * phi)
        };
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn first_odd_iterate_is_supply() {
        let r = iterate_period_two(&scalar_model(), ITERATION_TOL, MAX_ITER).unwrap();
        assert_eq!(r.iterates[0], vec![0.0]);
        assert_eq!(r.iterates[1], vec![10.0]);
    }

    #[test]
    fn scalar_model_converges_to_oracle() {
        let r = iterate_period_two(&scalar_model(), ITERATION_TOL, MAX_ITER).unwrap();
        assert!(r.converged);
        assert!(r.gap < 1e-8);
        let oracle = scalar_fixed_point_oracle();
        assert!((oracle - 9.408896).abs() < 1e-6);
        assert!((r.check0[0] - oracle).abs() < 1e-9);
    }

    #[test]
    fn strong_interaction_gives_vs_and_supply() {
        // c/(D gamma) huge: V(S) drives every species below break-even
        let model = ModelConfig {
            m: 1,
            species: 1,
            supply: vec![10.0],
            dilution: vec![1.0],
            mu: vec![0.5],
            gamma: vec![0.001],
            content: MatrixInput::Flat(vec![1.0]),
            response: ResponseConfig {
                kind: ResponseKind::MonodLiebig,
                r: vec![1.0],
                k: MatrixInput::Flat(vec![1.0]),
            },
            allow_zero_c: false,
        }
        .validate()
        .unwrap();
        let vs = v_map(&model, &[10.0]).unwrap();
        assert!(model.phi_unchecked(0, &vs) <= 0.5);
        let r = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        assert_eq!(r.check0, vs);
        assert_eq!(r.hat0, vec![10.0]);
    }

    #[test]
    fn refine_from_supply_and_zero_reproduces_iteration() {
        let model = scalar_model();
        let base = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let pair = refine_from_pair(&model, &[10.0], &[0.0], ITERATION_TOL, MAX_ITER).unwrap();
        assert_eq!(pair.lower, base.check0);
        assert_eq!(pair.upper, base.hat0);
    }

    #[test]
    fn refine_from_fixed_point_stays() {
        let model = scalar_model();
        let base = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let v = base.check0.clone();
        let pair = refine_from_pair(&model, &v, &v, ITERATION_TOL, MAX_ITER).unwrap();
        assert!(sup_dist(&pair.lower, &v) < 1e-9);
        assert!(sup_dist(&pair.upper, &v) < 1e-9);
    }

    #[test]
    fn refine_rejects_bad_seeds() {
        let model = scalar_model();
        // y = S, x = 0: V(S) > 0 = x
        let err = refine_from_pair(&model, &[0.0], &[10.0], ITERATION_TOL, MAX_ITER).unwrap_err();
        assert!(matches!(
            err,
            FixpointError::SeedCondition { coordinate: 1, .. }
        ));
        assert!(refine_from_pair(&model, &[0.0, 1.0], &[0.0], 1e-10, 10).is_err());
    }

    #[test]
    fn scalar_search_finds_single_point() {
        let model = scalar_model();
        let base = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let recs = find_fixed_points(
            &model,
            &[0.0],
            &[10.0],
            &SearchOptions {
                n_starts: 16,
                ..Default::default()
            },
        );
        assert_eq!(recs.len(), 1);
        assert!((recs[0].v[0] - base.check0[0]).abs() < 1e-9);
        assert!(recs[0].residual <= 1e-10);
        assert_eq!(recs[0].support, vec![1]);
    }

    #[test]
    fn empty_subset_gives_washout() {
        let model = scalar_model();
        let recs = equilibria_for_subset(&model, &[], &SearchOptions::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].v, vec![10.0]);
        assert_eq!(recs[0].x, vec![0.0]);
        assert!(recs[0].support.is_empty());
        assert_eq!(recs[0].residual, 0.0);
    }

    #[test]
    fn start_points_are_reproducible_and_inside() {
        let a = start_points(&[0.0, 1.0], &[1.0, 3.0], 20, 7);
        let b = start_points(&[0.0, 1.0], &[1.0, 3.0], 20, 7);
        assert_eq!(a, b);
        assert_ne!(a, start_points(&[0.0, 1.0], &[1.0, 3.0], 20, 8));
        for p in &a {
            assert!((0.0..=1.0).contains(&p[0]) && (1.0..=3.0).contains(&p[1]));
        }
    }

    #[test]
    fn trace_csv_header() {
        let r = iterate_period_two(&scalar_model(), ITERATION_TOL, MAX_ITER).unwrap();
        let csv = r.trace_csv();
        assert!(csv.starts_with("iteration,v_1\n0,0\n1,10\n"));
    }
}
