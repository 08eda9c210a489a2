//! Direct integration of the foodweb ODE and empirical checks of the bounds.
//!
//! The integrator is the Dormand-Prince 5(4) embedded pair with its
//! continuous extension for dense output. Roundoff that pushes a state out
//! of `R^M_+ x [0, S]` is clamped back and counted; a larger excursion is an
//! error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FoodwebModel, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("initial abundance x_{index} = {value} must be positive (pass allow_absent_species to permit exact zeros)")]
    SpeciesNotPositive { index: usize, value: f64 },
    #[error("initial resource v_{index} = {value} outside [0, {supply}]")]
    ResourceOutside {
        index: usize,
        value: f64,
        supply: f64,
    },
    #[error("{what} has {got} entries, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("t_end must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit {0} reached")]
    MaxSteps(usize),
    #[error("state left the invariant box at t = {t}: {component} = {value}")]
    BoxViolation {
        t: f64,
        component: String,
        value: f64,
    },
    #[error("trailing window holds {got} samples, need at least {need}")]
    WindowTooShort { got: usize, need: usize },
    #[error("window fraction must lie in (0, 1), got {0}")]
    BadWindow(f64),
}

/// Where the trajectory is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleTimes {
    /// `n` equally spaced points on `[0, t_end]`, both ends included.
    Uniform(usize),
    /// Increasing times in `[0, t_end]`.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControls {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub samples: SampleTimes,
    pub allow_absent_species: bool,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        IntegrationControls {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: None,
            max_steps: 10_000_000,
            samples: SampleTimes::Uniform(2001),
            allow_absent_species: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Coordinates pulled back into the invariant box after roundoff.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub stats: StepStats,
    pub rtol: f64,
    pub atol: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trajectory has samples")
    }

    /// CSV with header `t,x_1,...,x_M,v_1,...,v_m`, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let (n, m) = match self.states.first() {
            Some(s) => (s.x.len(), s.v.len()),
            None => (0, 0),
        };
        let mut out = String::from("t");
        for j in 1..=n {
            out.push_str(&format!(",x_{j}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",v_{i}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&t.to_string());
            for val in s.x.iter().chain(&s.v) {
                out.push(',');
                out.push_str(&val.to_string());
            }
            out.push('\n');
        }
        out
    }
}

// Dormand-Prince 5(4) tableau. The system is autonomous, so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Rhs<'a> {
    model: &'a FoodwebModel,
    n: usize,
    m: usize,
    v_buf: Vec<f64>,
    phi_buf: Vec<f64>,
}

impl<'a> Rhs<'a> {
    fn new(model: &'a FoodwebModel) -> Self {
        Rhs {
            model,
            n: model.species(),
            m: model.resources(),
            v_buf: vec![0.0; model.resources()],
            phi_buf: vec![0.0; model.species()],
        }
    }

    fn eval(&mut self, y: &[f64], dy: &mut [f64]) {
        let model = self.model;
        let (x, v) = y.split_at(self.n);
        for (b, (&vi, &si)) in self.v_buf.iter_mut().zip(v.iter().zip(model.supply())) {
            *b = vi.clamp(0.0, si);
        }
        for j in 0..self.n {
            self.phi_buf[j] = model.phi_unchecked(j, &self.v_buf);
        }
        let mu = model.mortality();
        let gamma = model.gamma();
        for j in 0..self.n {
            dy[j] = x[j] * (self.phi_buf[j] - mu[j] - gamma[j] * x[j]);
        }
        for i in 0..self.m {
            let consumed: f64 = (0..self.n)
                .map(|j| model.content(i, j) * x[j] * self.phi_buf[j])
                .sum();
            dy[self.n + i] = model.dilution()[i] * (model.supply()[i] - v[i]) - consumed;
        }
    }
}

fn validate_initial(
    model: &FoodwebModel,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    controls: &IntegrationControls,
) -> Result<(), SimError> {
    if x0.len() != model.species() {
        return Err(SimError::Dimension {
            what: "x0",
            expected: model.species(),
            got: x0.len(),
        });
    }
    if v0.len() != model.resources() {
        return Err(SimError::Dimension {
            what: "v0",
            expected: model.resources(),
            got: v0.len(),
        });
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::BadHorizon(t_end));
    }
    for (j, &x) in x0.iter().enumerate() {
        let ok = if controls.allow_absent_species {
            x >= 0.0 && x.is_finite()
        } else {
            x > 0.0 && x.is_finite()
        };
        if !ok {
            return Err(SimError::SpeciesNotPositive {
                index: j + 1,
                value: x,
            });
        }
    }
    for (i, (&v, &s)) in v0.iter().zip(model.supply()).enumerate() {
        if !(0.0..=s).contains(&v) {
            return Err(SimError::ResourceOutside {
                index: i + 1,
                value: v,
                supply: s,
            });
        }
    }
    Ok(())
}

fn sample_times(samples: &SampleTimes, t_end: f64) -> Vec<f64> {
    match samples {
        SampleTimes::Uniform(n) => {
            let n = (*n).max(2);
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        t_end
                    } else {
                        t_end * k as f64 / (n - 1) as f64
                    }
                })
                .collect()
        }
        SampleTimes::Explicit(ts) => ts
            .iter()
            .copied()
            .filter(|&t| (0.0..=t_end).contains(&t))
            .collect(),
    }
}

/// Integrates from `(x0, v0)` over `[0, t_end]`.
pub fn integrate(
    model: &FoodwebModel,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    controls: &IntegrationControls,
) -> Result<Trajectory, SimError> {
    validate_initial(model, x0, v0, t_end, controls)?;
    let n = model.species();
    let dim = n + model.resources();
    let (rtol, atol) = (controls.rtol, controls.atol);
    let max_step = controls.max_step.unwrap_or(t_end).min(t_end);
    let outputs = sample_times(&controls.samples, t_end);

    let mut rhs = Rhs::new(model);
    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut cont = vec![vec![0.0; dim]; 5];
    rhs.eval(&y, &mut k[0]);

    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    let mut emit = |t: f64, state: &[f64], stats: &mut StepStats| {
        let mut s = state.to_vec();
        stats.clamped += clamp_small(model, &mut s);
        times.push(t);
        states.push(SystemState {
            x: s[..n].to_vec(),
            v: s[n..].to_vec(),
        });
    };

    let mut stats = StepStats {
        min_step: f64::INFINITY,
        ..Default::default()
    };
    while next_out < outputs.len() && outputs[next_out] <= 0.0 {
        emit(0.0, &y, &mut stats);
        next_out += 1;
    }

    let mut t = 0.0_f64;
    let mut h = initial_step(&mut rhs, &y, &k[0], rtol, atol, max_step);
    let mut steps = 0usize;
    while t < t_end {
        if steps >= controls.max_steps {
            return Err(SimError::MaxSteps(controls.max_steps));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(SimError::StepUnderflow { t, h });
        }

        let combos: [(&[f64], usize); 5] = [
            (&[A21], 1),
            (&[A31, A32], 2),
            (&[A41, A42, A43], 3),
            (&[A51, A52, A53, A54], 4),
            (&[A61, A62, A63, A64, A65], 5),
        ];
        for (coeffs, s) in combos {
            for d in 0..dim {
                let acc: f64 = coeffs.iter().enumerate().map(|(l, a)| a * k[l][d]).sum();
                stage[d] = y[d] + h * acc;
            }
            rhs.eval(&stage, &mut k[s]);
        }
        for d in 0..dim {
            y_new[d] = y[d]
                + h * (A71 * k[0][d]
                    + A73 * k[2][d]
                    + A74 * k[3][d]
                    + A75 * k[4][d]
                    + A76 * k[5][d]);
        }
        rhs.eval(&y_new, &mut k[6]);

        let mut err = 0.0;
        for d in 0..dim {
            let e = h
                * (E1 * k[0][d]
                    + E3 * k[2][d]
                    + E4 * k[3][d]
                    + E5 * k[4][d]
                    + E6 * k[5][d]
                    + E7 * k[6][d]);
            let sc = atol + rtol * y[d].abs().max(y_new[d].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / dim as f64).sqrt();

        if err <= 1.0 || !err.is_finite() && h <= 1e-14 {
            // dense output coefficients over [t, t + h]
            for d in 0..dim {
                let ydiff = y_new[d] - y[d];
                let bspl = h * k[0][d] - ydiff;
                cont[0][d] = y[d];
                cont[1][d] = ydiff;
                cont[2][d] = bspl;
                cont[3][d] = ydiff - h * k[6][d] - bspl;
                cont[4][d] = h
                    * (D1 * k[0][d]
                        + D3 * k[2][d]
                        + D4 * k[3][d]
                        + D5 * k[4][d]
                        + D6 * k[5][d]
                        + D7 * k[6][d]);
            }
            let t_new = if last { t_end } else { t + h };
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let theta = ((outputs[next_out] - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                let point: Vec<f64> = (0..dim)
                    .map(|d| {
                        cont[0][d]
                            + theta
                                * (cont[1][d]
                                    + theta1
                                        * (cont[2][d] + theta * (cont[3][d] + theta1 * cont[4][d])))
                    })
                    .collect();
                check_box(model, &point, outputs[next_out], rtol, atol)?;
                emit(outputs[next_out], &point, &mut stats);
                next_out += 1;
            }

            check_box(model, &y_new, t_new, rtol, atol)?;
            let clamped = clamp_small(model, &mut y_new);
            stats.clamped += clamped;
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(h);
            stats.max_step = stats.max_step.max(h);
            std::mem::swap(&mut y, &mut y_new);
            if clamped > 0 {
                rhs.eval(&y, &mut k[0]);
            } else {
                k.swap(0, 6);
            }
            t = t_new;
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            h = (h * fac).min(max_step);
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)
            } else {
                0.1
            };
            h *= fac;
        }
    }
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(Trajectory {
        times,
        states,
        stats,
        rtol,
        atol,
    })
}

fn initial_step(
    rhs: &mut Rhs<'_>,
    y: &[f64],
    f0: &[f64],
    rtol: f64,
    atol: f64,
    max_step: f64,
) -> f64 {
    let dim = y.len();
    let norm = |v: &[f64]| {
        (v.iter()
            .zip(y)
            .map(|(a, b)| (a / (atol + rtol * b.abs())).powi(2))
            .sum::<f64>()
            / dim as f64)
            .sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; dim];
    rhs.eval(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(max_step)
}

/// Excursion limit outside the box: 100 times the integrator tolerance.
fn box_slack(scale: f64, rtol: f64, atol: f64) -> f64 {
    100.0 * (atol + rtol * scale.abs().max(1.0))
}

fn check_box(
    model: &FoodwebModel,
    y: &[f64],
    t: f64,
    rtol: f64,
    atol: f64,
) -> Result<(), SimError> {
    let n = model.species();
    for (j, &x) in y[..n].iter().enumerate() {
        if x < -box_slack(0.0, rtol, atol) || !x.is_finite() {
            return Err(SimError::BoxViolation {
                t,
                component: format!("x_{}", j + 1),
                value: x,
            });
        }
    }
    for (i, (&v, &s)) in y[n..].iter().zip(model.supply()).enumerate() {
        let slack = box_slack(s, rtol, atol);
        if v < -slack || v > s + slack || !v.is_finite() {
            return Err(SimError::BoxViolation {
                t,
                component: format!("v_{}", i + 1),
                value: v,
            });
        }
    }
    Ok(())
}

fn clamp_small(model: &FoodwebModel, y: &mut [f64]) -> usize {
    let n = model.species();
    let mut count = 0;
    for x in &mut y[..n] {
        if *x < 0.0 {
            *x = 0.0;
            count += 1;
        }
    }
    for (v, &s) in y[n..].iter_mut().zip(model.supply()) {
        if *v < 0.0 {
            *v = 0.0;
            count += 1;
        } else if *v > s {
            *v = s;
            count += 1;
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriViolation {
    pub t: f64,
    pub component: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub samples_checked: usize,
    /// Smallest `bound - value` seen for any `v_i`.
    pub worst_slack_v: f64,
    /// Smallest `bound - value` seen for any `x_j`.
    pub worst_slack_x: f64,
    pub violations: Vec<AprioriViolation>,
}

impl AprioriReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Logistic comparison bound on `x_j(t)` with growth rate `phi_j(S) - mu_j`.
pub fn logistic_upper_bound(x0: f64, growth: f64, gamma: f64, t: f64) -> f64 {
    if x0 == 0.0 {
        return 0.0;
    }
    let denom = if growth == 0.0 {
        1.0 + gamma * x0 * t
    } else {
        // e^{-a t} + (1 - e^{-a t}) gamma x0 / a, written with expm1
        let e = (-growth * t).exp_m1();
        1.0 + e * (1.0 - gamma * x0 / growth)
    };
    x0 / denom
}

/// Checks the unconditional a priori bounds at every sample.
pub fn check_apriori(model: &FoodwebModel, trajectory: &Trajectory) -> AprioriReport {
    let (rtol, atol) = (trajectory.rtol, trajectory.atol);
    let tolerance = |bound: f64| 10.0 * (atol + rtol * bound.abs().max(1.0));
    let mut report = AprioriReport {
        samples_checked: 0,
        worst_slack_v: f64::INFINITY,
        worst_slack_x: f64::INFINITY,
        violations: Vec::new(),
    };
    let Some(first) = trajectory.states.first() else {
        return report;
    };
    let t0 = trajectory.times[0];
    let growth: Vec<f64> = model
        .phi_at_supply()
        .iter()
        .zip(model.mortality())
        .map(|(p, mu)| p - mu)
        .collect();
    let flag = |t: f64,
                component: String,
                value: f64,
                bound: f64,
                violations: &mut Vec<AprioriViolation>| {
        if value > bound + tolerance(bound) {
            violations.push(AprioriViolation {
                t,
                component,
                value,
                bound,
            });
        }
    };
    for (&t, s) in trajectory.times.iter().zip(&trajectory.states) {
        let dt = t - t0;
        report.samples_checked += 1;
        for (i, &v) in s.v.iter().enumerate() {
            let decay = (-model.dilution()[i] * dt).exp();
            let bound = model.supply()[i] * (1.0 - decay) + first.v[i] * decay;
            report.worst_slack_v = report.worst_slack_v.min(bound - v);
            flag(t, format!("v_{}", i + 1), v, bound, &mut report.violations);
            flag(t, format!("-v_{}", i + 1), -v, 0.0, &mut report.violations);
        }
        for (j, &x) in s.x.iter().enumerate() {
            let bound = logistic_upper_bound(first.x[j], growth[j], model.gamma()[j], dt);
            report.worst_slack_x = report.worst_slack_x.min(bound - x);
            flag(t, format!("x_{}", j + 1), x, bound, &mut report.violations);
            flag(t, format!("-x_{}", j + 1), -x, 0.0, &mut report.violations);
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateRange {
    pub liminf: f64,
    pub limsup: f64,
    pub converged: bool,
}

/// Trailing-window min/max as a finite-horizon proxy for liminf/limsup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteEstimate {
    pub x: Vec<CoordinateRange>,
    pub v: Vec<CoordinateRange>,
    pub window_fraction: f64,
    pub samples: usize,
    pub converged: bool,
}

pub const MIN_WINDOW_SAMPLES: usize = 100;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.2;

pub fn asymptote_estimate(
    trajectory: &Trajectory,
    window_fraction: f64,
    tol: f64,
) -> Result<AsymptoteEstimate, SimError> {
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(SimError::BadWindow(window_fraction));
    }
    let (Some(&t0), Some(&t1)) = (trajectory.times.first(), trajectory.times.last()) else {
        return Err(SimError::WindowTooShort {
            got: 0,
            need: MIN_WINDOW_SAMPLES,
        });
    };
    let start = t1 - window_fraction * (t1 - t0);
    let window: Vec<&SystemState> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .filter(|(&t, _)| t >= start)
        .map(|(_, s)| s)
        .collect();
    if window.len() < MIN_WINDOW_SAMPLES {
        return Err(SimError::WindowTooShort {
            got: window.len(),
            need: MIN_WINDOW_SAMPLES,
        });
    }
    let range = |get: &dyn Fn(&SystemState) -> f64| {
        let (lo, hi) = window
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                let val = get(s);
                (lo.min(val), hi.max(val))
            });
        CoordinateRange {
            liminf: lo,
            limsup: hi,
            converged: hi - lo < tol,
        }
    };
    let x: Vec<CoordinateRange> = (0..window[0].x.len())
        .map(|j| range(&|s: &SystemState| s.x[j]))
        .collect();
    let v: Vec<CoordinateRange> = (0..window[0].v.len())
        .map(|i| range(&|s: &SystemState| s.v[i]))
        .collect();
    let converged = x.iter().chain(&v).all(|c| c.converged);
    Ok(AsymptoteEstimate {
        x,
        v,
        window_fraction,
        samples: window.len(),
        converged,
    })
}
