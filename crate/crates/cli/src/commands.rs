use std::path::PathBuf;

use foodweb::certificates::{
    bilateral_estimates, certify, rho, sandwich_bounds, CertificateOptions, DELTA_TOL,
};
use foodweb::fixpoint::{
    equilibria_for_subset, find_fixed_points, iterate_period_two, FixedPointRecord, SearchOptions,
    MAX_ITER,
};
use foodweb::model::{FoodwebModel, ModelConfig, SystemState};
use foodweb::operators::{x_map, SOLVER_TOL};
use foodweb::sim::{
    asymptote_estimate, check_apriori, integrate, AprioriReport, AsymptoteEstimate,
    IntegrationControls, SampleTimes, StepStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, CommonArgs, FixpointArgs, SimulateArgs, SweepArgs};
use crate::{plot, write_file, CliError};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => validate(&a),
        Command::Certify(a) => certify_cmd(&a),
        Command::Fixpoints(a) => fixpoints(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Bounds(a) => bounds(&a),
        Command::Sweep(a) => sweep(&a),
    }
}

/// Every report carries the resolved config and the tolerances in force.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config: ModelConfig,
    settings: Value,
    result: T,
}

struct Context {
    model: FoodwebModel,
    out: PathBuf,
}

fn load(common: &CommonArgs) -> Result<Context, CliError> {
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        return Err(CliError::Invalid(format!(
            "--tol must be positive, got {}",
            common.tol
        )));
    }
    let path = &common.config;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let config: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))?;
    let model = config.validate()?;
    std::fs::create_dir_all(&common.out).map_err(|e| {
        CliError::Invalid(format!(
            "cannot create output dir {}: {e}",
            common.out.display()
        ))
    })?;
    Ok(Context {
        model,
        out: common.out.clone(),
    })
}

fn base_settings(common: &CommonArgs) -> Value {
    json!({
        "seed": common.seed,
        "iteration_tol": common.tol,
        "solver_tol": SOLVER_TOL,
        "delta_tol": DELTA_TOL,
        "max_iter": MAX_ITER,
    })
}

fn extend(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn cert_options(common: &CommonArgs) -> CertificateOptions {
    CertificateOptions {
        iteration_tol: common.tol,
        ..Default::default()
    }
}

fn write_report<T: Serialize>(
    ctx: &Context,
    command: &str,
    settings: Value,
    result: T,
) -> Result<(), CliError> {
    let report = Report {
        command,
        config: ctx.model.to_config(),
        settings,
        result,
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Numerical(format!("report serialization: {e}")))?;
    write_file(&ctx.out.join("report.json"), &(text + "\n"))
}

fn validate(a: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(a)?;
    let surv = ctx.model.survivability();
    print!("{surv}");
    let all = surv.all_survive();
    write_report(
        &ctx,
        "validate",
        base_settings(a),
        json!({ "valid": true, "all_survive": all, "survivability": surv }),
    )
}

fn certify_cmd(a: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(a)?;
    let opts = cert_options(a);
    let report = certify(&ctx.model, &opts)?;
    let p2 = iterate_period_two(&ctx.model, opts.iteration_tol, opts.max_iter)?;
    write_file(&ctx.out.join("iterates.csv"), &p2.trace_csv())?;
    println!(
        "rho = {} ({:?}), globally stable: {}, gap = {:e}, persistent: {}",
        report.rho, report.condition, report.globally_stable, report.gap, report.persistent
    );
    write_report(&ctx, "certify", base_settings(a), report)
}

fn parse_subset(raw: &[String], species: usize) -> Result<Vec<usize>, CliError> {
    let mut subset = Vec::new();
    for item in raw.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let j: usize = item.parse().map_err(|_| {
            CliError::Invalid(format!("--subset: '{item}' is not a species number"))
        })?;
        if j == 0 || j > species {
            return Err(CliError::Invalid(format!(
                "--subset: species {j} out of range 1..={species}"
            )));
        }
        subset.push(j - 1);
    }
    subset.sort_unstable();
    subset.dedup();
    Ok(subset)
}

#[derive(Serialize)]
struct FixpointResult {
    check0: Vec<f64>,
    hat0: Vec<f64>,
    gap: f64,
    records: Vec<FixedPointRecord>,
}

fn fixpoints(a: &FixpointArgs) -> Result<(), CliError> {
    let ctx = load(&a.common)?;
    if a.starts == 0 {
        return Err(CliError::Invalid("--starts must be at least 1".into()));
    }
    let opts = SearchOptions {
        n_starts: a.starts,
        tol: a.common.tol,
        seed: a.common.seed,
        ..Default::default()
    };
    let p2 = iterate_period_two(&ctx.model, a.common.tol, MAX_ITER)?;
    let (records, subset) = match &a.subset {
        Some(raw) => {
            let subset = parse_subset(raw, ctx.model.species())?;
            let recs = equilibria_for_subset(&ctx.model, &subset, &opts)?;
            (recs, Some(subset.iter().map(|j| j + 1).collect::<Vec<_>>()))
        }
        None => (
            find_fixed_points(&ctx.model, &p2.check0, &p2.hat0, &opts),
            None,
        ),
    };
    println!("{} fixed point(s), bounds gap {:e}", records.len(), p2.gap);
    for r in &records {
        println!(
            "  v = {:?}, residual {:e}, support {:?}",
            r.v, r.residual, r.support
        );
    }
    let settings = extend(
        base_settings(&a.common),
        json!({ "starts": a.starts, "damping": opts.damping, "subset": subset }),
    );
    write_report(
        &ctx,
        "fixpoints",
        settings,
        FixpointResult {
            check0: p2.check0,
            hat0: p2.hat0,
            gap: p2.gap,
            records,
        },
    )
}

fn bounds(a: &CommonArgs) -> Result<(), CliError> {
    let ctx = load(a)?;
    let opts = cert_options(a);
    let sandwich = sandwich_bounds(&ctx.model)?;
    let bilateral = bilateral_estimates(&ctx.model, &opts)?;
    println!("v in [{:?}, {:?}]", bilateral.v_lo, bilateral.v_hi);
    println!("x in [{:?}, {:?}]", bilateral.x_lo, bilateral.x_hi);
    write_report(
        &ctx,
        "bounds",
        base_settings(a),
        json!({ "apriori": sandwich, "bilateral": bilateral }),
    )
}

/// Seeded initial data with `x0 >> 0` and `v0` uniform in `[0, S]`.
fn random_initial(rng: &mut ChaCha8Rng, model: &FoodwebModel) -> (Vec<f64>, Vec<f64>) {
    let x0 = (0..model.species())
        .map(|_| rng.gen_range(0.01..2.0))
        .collect();
    let v0 = model
        .supply()
        .iter()
        .map(|&s| rng.gen_range(0.0..=s))
        .collect();
    (x0, v0)
}

fn is_certified(model: &FoodwebModel) -> bool {
    rho(model).map(|r| r.holds()).unwrap_or(false)
}

fn default_horizon(model: &FoodwebModel) -> f64 {
    if is_certified(model) {
        1e3
    } else {
        1e4
    }
}

#[derive(Serialize)]
struct RunRecord {
    run: usize,
    x0: Vec<f64>,
    v0: Vec<f64>,
    trajectory: String,
    stats: StepStats,
    final_state: SystemState,
    apriori: AprioriReport,
    asymptote: Option<AsymptoteEstimate>,
    asymptote_error: Option<String>,
    /// Trailing-window range inside the bounds box (1e-3 slack); absent for
    /// models failing survivability.
    inside_bounds: Option<bool>,
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let ctx = load(&a.common)?;
    let model = &ctx.model;
    let t_end = a.t_end.unwrap_or_else(|| default_horizon(model));
    let initial: Vec<(Vec<f64>, Vec<f64>)> = match (&a.x0, &a.v0) {
        (Some(x0), Some(v0)) => vec![(x0.clone(), v0.clone())],
        (None, None) => {
            if a.runs == 0 {
                return Err(CliError::Invalid("--runs must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
            (0..a.runs)
                .map(|_| random_initial(&mut rng, model))
                .collect()
        }
        _ => {
            return Err(CliError::Invalid(
                "--x0 and --v0 must be given together".into(),
            ))
        }
    };
    let controls = IntegrationControls {
        rtol: a.rtol,
        atol: a.atol,
        samples: SampleTimes::Uniform(a.samples),
        allow_absent_species: a.allow_absent_species,
        ..Default::default()
    };
    let box_v = if model.is_survivable() {
        let p2 = iterate_period_two(model, a.common.tol, MAX_ITER)?;
        Some((p2.check0, p2.hat0))
    } else {
        None
    };

    let trajectories: Vec<_> = initial
        .par_iter()
        .map(|(x0, v0)| integrate(model, x0, v0, t_end, &controls))
        .collect();

    let many = initial.len() > 1;
    let mut runs = Vec::with_capacity(initial.len());
    for (k, (traj, (x0, v0))) in trajectories.into_iter().zip(&initial).enumerate() {
        let traj = traj?;
        let name = |stem: &str, ext: &str| {
            if many {
                format!("{stem}_{}.{ext}", k + 1)
            } else {
                format!("{stem}.{ext}")
            }
        };
        let csv_name = name("trajectory", "csv");
        write_file(&ctx.out.join(&csv_name), &traj.to_csv())?;
        let x_box = box_v
            .as_ref()
            .map(|(lo, hi)| (x_map(model, lo), x_map(model, hi)));
        if a.plot {
            let svg = plot::trajectory_svg(
                &traj,
                box_v
                    .as_ref()
                    .map(|(lo, hi)| (lo.as_slice(), hi.as_slice())),
                x_box
                    .as_ref()
                    .map(|(lo, hi)| (lo.as_slice(), hi.as_slice())),
            );
            write_file(&ctx.out.join(name("plot", "svg")), &svg)?;
        }
        let (asymptote, asymptote_error) = match asymptote_estimate(&traj, a.window, a.converge_tol)
        {
            Ok(est) => (Some(est), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let inside_bounds = match (&asymptote, &box_v, &x_box) {
            (Some(est), Some((vlo, vhi)), Some((xlo, xhi))) => {
                Some(inside(&est.v, vlo, vhi) && inside(&est.x, xlo, xhi))
            }
            _ => None,
        };
        let apriori = check_apriori(model, &traj);
        println!(
            "run {}: {} steps, converged {:?}, inside bounds {:?}, a priori violations {}",
            k + 1,
            traj.stats.accepted,
            asymptote.as_ref().map(|e| e.converged),
            inside_bounds,
            apriori.violations.len()
        );
        runs.push(RunRecord {
            run: k + 1,
            x0: x0.clone(),
            v0: v0.clone(),
            trajectory: csv_name,
            stats: traj.stats.clone(),
            final_state: traj.final_state().clone(),
            apriori,
            asymptote,
            asymptote_error,
            inside_bounds,
        });
    }
    let settings = extend(
        base_settings(&a.common),
        json!({
            "t_end": t_end,
            "rtol": a.rtol,
            "atol": a.atol,
            "samples": a.samples,
            "window_fraction": a.window,
            "converge_tol": a.converge_tol,
            "allow_absent_species": a.allow_absent_species,
            "runs": initial.len(),
        }),
    );
    let bounds = box_v.map(|(lo, hi)| json!({ "check0": lo, "hat0": hi }));
    write_report(
        &ctx,
        "simulate",
        settings,
        json!({ "bounds": bounds, "runs": runs }),
    )
}

fn inside(ranges: &[foodweb::sim::CoordinateRange], lo: &[f64], hi: &[f64]) -> bool {
    const SLACK: f64 = 1e-3;
    ranges
        .iter()
        .zip(lo.iter().zip(hi))
        .all(|(c, (&l, &h))| c.liminf >= l - SLACK && c.limsup <= h + SLACK)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SweepParam {
    GammaScale,
    Dilution(usize),
    Supply(usize),
}

fn parse_sweep_param(name: &str, m: usize) -> Result<SweepParam, CliError> {
    if name == "gamma" {
        return Ok(SweepParam::GammaScale);
    }
    let unsupported = || {
        CliError::Invalid(format!(
            "unsupported sweep parameter '{name}' (use gamma, D_i or S_i with 1 <= i <= {m})"
        ))
    };
    let (kind, rest) = name.split_at(
        name.find(|c: char| c.is_ascii_digit() || c == '_')
            .ok_or_else(unsupported)?,
    );
    let i: usize = rest
        .trim_start_matches('_')
        .parse()
        .map_err(|_| unsupported())?;
    if i == 0 || i > m {
        return Err(unsupported());
    }
    match kind {
        "D" => Ok(SweepParam::Dilution(i - 1)),
        "S" => Ok(SweepParam::Supply(i - 1)),
        _ => Err(unsupported()),
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param_value: f64,
    rho: f64,
    gap: f64,
    certified: bool,
    converged: Option<bool>,
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let ctx = load(&a.common)?;
    let model = &ctx.model;
    let param = parse_sweep_param(&a.sweep_param, model.resources())?;
    if a.sweep_grid.len() < 2 {
        return Err(CliError::Invalid(
            "--sweep-grid needs at least 2 values".into(),
        ));
    }
    if let Some(bad) = a.sweep_grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(CliError::Invalid(format!(
            "--sweep-grid values must be positive, got {bad}"
        )));
    }
    // one draw of initial data, rescaled to each grid point's supply
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let x0: Vec<f64> = (0..model.species())
        .map(|_| rng.gen_range(0.01..2.0))
        .collect();
    let v_frac: Vec<f64> = (0..model.resources())
        .map(|_| rng.gen_range(0.0..=1.0))
        .collect();
    let opts = cert_options(&a.common);

    let rows: Vec<Result<SweepRow, CliError>> = a
        .sweep_grid
        .par_iter()
        .map(|&value| {
            let variant = match param {
                SweepParam::GammaScale => model.with_gamma_scaled(value)?,
                SweepParam::Dilution(i) => {
                    let mut cfg = model.to_config();
                    cfg.dilution[i] = value;
                    cfg.validate()?
                }
                SweepParam::Supply(i) => {
                    let mut cfg = model.to_config();
                    cfg.supply[i] = value;
                    cfg.validate()?
                }
            };
            let with_value = |e: CliError| match e {
                CliError::Invalid(m) => {
                    CliError::Invalid(format!("{} = {value}: {m}", a.sweep_param))
                }
                CliError::Numerical(m) => {
                    CliError::Numerical(format!("{} = {value}: {m}", a.sweep_param))
                }
            };
            let r = rho(&variant).map_err(|e| with_value(e.into()))?;
            let p2 = iterate_period_two(&variant, opts.iteration_tol, opts.max_iter)
                .map_err(|e| with_value(e.into()))?;
            let converged = if a.simulate {
                let v0: Vec<f64> = v_frac
                    .iter()
                    .zip(variant.supply())
                    .map(|(f, s)| f * s)
                    .collect();
                let t_end = a.t_end.unwrap_or_else(|| default_horizon(&variant));
                let traj = integrate(&variant, &x0, &v0, t_end, &IntegrationControls::default())
                    .map_err(|e| with_value(e.into()))?;
                let est = asymptote_estimate(&traj, foodweb::sim::DEFAULT_WINDOW_FRACTION, 1e-6)
                    .map_err(|e| with_value(e.into()))?;
                Some(est.converged)
            } else {
                None
            };
            Ok(SweepRow {
                param_value: value,
                rho: r.value,
                gap: p2.gap,
                certified: r.holds(),
                converged,
            })
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>()?;

    let mut csv = String::from("param_value,rho,gap,certified,converged\n");
    for row in &rows {
        let converged = row.converged.map(|c| c.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.param_value, row.rho, row.gap, row.certified, converged
        ));
    }
    write_file(&ctx.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    let settings = extend(
        base_settings(&a.common),
        json!({
            "sweep_param": a.sweep_param,
            "sweep_grid": a.sweep_grid,
            "simulate": a.simulate,
            "t_end": a.t_end,
        }),
    );
    write_report(&ctx, "sweep", settings, json!({ "rows": rows }))
}
