//! End-to-end runs: build the model, pick parameters, embed, march, post-select,
//! and measure every bound against its computed value.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dense::{dense_expm, DenseMatrix};
use crate::embedding::{assemble_a, measure_structure, EmbedOptions, EmbeddedSystem, StructuralReport};
use crate::error::{HpmError, Result, StageExt};
use crate::hpm::{solve_cascade_with, truncation_bound};
use crate::measurement::{final_error, level_norm_decay_checks, postselect, BoundCheck, ErrorBudget, MeasurementReport};
use crate::ode::{
    compute_k, default_dt, default_zeta, reference_solution, rescale, scalar_closed_form, CheckOptions,
    NonlinearityParams, QuadraticOde,
};
use crate::sparse::{SparseMatrix, DEFAULT_NORM_TOL};
use crate::taylor::{
    assemble_c, condition_report, exponential_flow, marching_error_bound, resolve_grid, select_order,
    select_parameters, solve_marching, ConditionReport, MarchingSolution, OrderChoice, SelectionInputs,
    SolveOptions, TaylorSystemParams,
};
use crate::vector;

/// Absolute slack for comparisons against integrator-based references.
pub const INTEGRATOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    ClosedForm,
    Rk4,
}

/// Ground-truth `u(T)` in the original scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reference {
    pub method: ReferenceMethod,
    pub u_t: Vec<f64>,
    pub norm_u_t: f64,
    pub dt: Option<f64>,
    pub error_estimate: f64,
}

/// Everything that precedes the embedding: model, `K`, reference, rescale, `c`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ode: QuadraticOde,
    pub nonlinearity: NonlinearityParams,
    pub zeta: f64,
    pub working: QuadraticOde,
    pub working_k: NonlinearityParams,
    pub reference: Reference,
    pub eta: f64,
    pub order: OrderChoice,
    pub warnings: Vec<String>,
}

/// `du/dt = λu + a u²` has a closed form; everything else uses RK4.
fn reference(ode: &QuadraticOde, t_final: f64, dt: Option<f64>, norm_f1: f64) -> Result<Reference> {
    if ode.n() == 1 {
        let lambda = ode.f1().get(0, 0);
        if lambda != 0.0 {
            let u = scalar_closed_form(lambda, ode.f2().get(0, 0), ode.u_in()[0], t_final)?;
            return Ok(Reference {
                method: ReferenceMethod::ClosedForm,
                u_t: vec![u],
                norm_u_t: u.abs(),
                dt: None,
                error_estimate: 0.0,
            });
        }
    }
    let dt = dt.unwrap_or_else(|| default_dt(norm_f1, t_final));
    let traj = reference_solution(ode, t_final, dt)?;
    let u_t = traj.final_state().to_vec();
    Ok(Reference {
        method: ReferenceMethod::Rk4,
        norm_u_t: vector::norm(&u_t),
        u_t,
        dt: Some(traj.dt()),
        error_estimate: traj.error_estimate,
    })
}

/// Parameters of the system `u → ζu`, derived from the original ones.
fn rescaled_params(p: &NonlinearityParams, zeta: f64) -> NonlinearityParams {
    let norm_u_in = p.norm_u_in * zeta;
    NonlinearityParams {
        norm_f2: p.norm_f2 / zeta,
        norm_u_in,
        below_u_in: p.k < norm_u_in * (1.0 - 1e-12),
        ..*p
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let ode = cfg.build_ode().stage("model")?;
    let o = &cfg.overrides;
    let check = CheckOptions {
        dense_cap: o.dense_cap(),
        assume_valid: cfg.assume_valid,
        norm_tol: DEFAULT_NORM_TOL,
    };
    let nonlinearity = compute_k(&ode, &check).stage("nonlinearity")?;
    let mut warnings = Vec::new();
    if nonlinearity.too_strong {
        let detail = format!("K = {:.6} must be < sqrt(2)/2", nonlinearity.k);
        if !cfg.force {
            return Err(HpmError::Precondition {
                condition: "nonlinearity_strength",
                detail,
            }
            .at("nonlinearity"));
        }
        warnings.push(format!("forced past nonlinearity_strength: {detail}"));
    }
    if vector::norm(ode.u_in()) == 0.0 {
        return Err(HpmError::InvalidParameter("u_in must be nonzero".into()).at("model"));
    }

    let reference = reference(&ode, cfg.t_final, cfg.reference_dt, nonlinearity.norm_f1).stage("reference")?;
    if reference.norm_u_t == 0.0 {
        return Err(HpmError::Singular("u(T) = 0; the normalized target is undefined".into()).at("reference"));
    }
    let eta = o.eta.unwrap_or(nonlinearity.norm_u_in / reference.norm_u_t);

    let zeta = o.zeta.unwrap_or_else(|| default_zeta(&nonlinearity));
    let working = rescale(&ode, zeta).stage("rescale")?;
    let working_k = rescaled_params(&nonlinearity, zeta);
    if working_k.below_u_in {
        warnings.push(format!(
            "||u_in|| = {:.6} exceeds K = {:.6} after rescale; per-order bounds use max(K, ||u_in||)",
            working_k.norm_u_in, working_k.k
        ));
    }

    let mut order = select_order(&working_k, cfg.epsilon, eta).stage("order")?;
    if let Some(c) = o.c {
        if c < order.c_scan {
            warnings.push(format!(
                "override c = {c} is below the order {} needed for epsilon1",
                order.c_scan
            ));
        }
        order.c = c;
    }
    if nonlinearity.k == 0.0 {
        warnings.push("linear fast path: F2 = 0, c = 0, no truncation error".into());
    }
    Ok(Prepared {
        ode,
        nonlinearity,
        zeta,
        working,
        working_k,
        reference,
        eta,
        order,
        warnings,
    })
}

/// `max_t ||e^{At}||` over `t ∈ {0, T/10, …, T}` via one dense exponential
/// and repeated products.
pub fn max_exp_norm(a: &SparseMatrix, t_final: f64, samples: usize, cap: usize) -> Result<f64> {
    let dense = DenseMatrix::from_sparse(a, cap)?;
    let step = dense_expm(&dense.scaled(t_final / samples as f64), cap)?;
    let mut power = DenseMatrix::identity(a.rows());
    let mut worst = 1.0f64;
    for _ in 0..samples {
        power = power.matmul(&step);
        worst = worst.max(power.spectral_norm()?);
    }
    Ok(worst)
}

/// One step of the marching error profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub j: usize,
    pub t: f64,
    pub error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    /// Level-0 block of `x_{j,0}` mapped back to the original scale.
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub solver: crate::taylor::SolverKind,
    pub dim: usize,
    pub nnz: usize,
    pub relative_residual: f64,
    pub iterations: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n: usize,
    pub nonlinearity: NonlinearityParams,
    pub zeta: f64,
    pub working_nonlinearity: NonlinearityParams,
    pub reference: Reference,
    pub eta: f64,
    pub g: f64,
    pub order: OrderChoice,
    pub params: TaylorSystemParams,
    pub linear_fast_path: bool,
    pub structure: StructuralReport,
    pub max_exp_norm: Option<f64>,
    pub condition: ConditionReport,
    pub solve: SolveSummary,
    pub measurement: MeasurementReport,
    pub budget: ErrorBudget,
    /// Truncated cascade `ũ(T)` in the original scale.
    pub u_tilde_t: Vec<f64>,
    /// `||x_{m,p} level 0 / ζ − u(T)||`: the unnormalized answer against the
    /// reference. Informational; in one dimension the normalized error is
    /// always zero.
    pub unnormalized_error: f64,
    /// `||u(T) − ũ(T)||` in the working scale.
    pub truncation_error: f64,
    pub truncation_bound: f64,
    pub marching_errors: Vec<StepError>,
    pub level0_trajectory: Vec<TrajectoryPoint>,
    pub checks: BTreeMap<String, BoundCheck>,
    /// Checks whose precondition held but whose bound failed.
    pub violations: Vec<String>,
    pub all_pass: bool,
    pub final_pass: bool,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    /// Report JSON with `timings` removed, for reproducibility comparisons.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// `0` pass, `1` bound violation or missed `ε`.
    pub fn passed(&self) -> bool {
        self.all_pass && self.final_pass
    }
}

/// A finished run with the large intermediate objects kept.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub system: EmbeddedSystem,
    pub solution: MarchingSolution,
}

struct Clock {
    last: Instant,
    timings: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.insert(stage.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    run_with_artifacts(cfg).map(|a| a.report)
}

pub fn run_with_artifacts(cfg: &RunConfig) -> Result<RunArtifacts> {
    let mut clock = Clock::new();
    let prep = prepare(cfg)?;
    clock.lap("prepare");
    let mut warnings = prep.warnings.clone();
    let o = &cfg.overrides;
    let dense_cap = o.dense_cap();
    let t_final = cfg.t_final;
    let c = prep.order.c;
    let k = prep.working_k.k;

    let sys = assemble_a(
        &prep.working,
        c,
        &EmbedOptions {
            n_cap: o.n_cap(),
            norm_tol: DEFAULT_NORM_TOL,
        },
    )
    .stage("embedding")?;
    let structure = measure_structure(&sys, dense_cap).stage("embedding")?;
    if structure.max_re_eig.is_none() {
        warnings.push(format!("N = {} over the dense cap: spectrum of A not checked", sys.index.dim()));
    }
    clock.lap("embedding");

    let (h, m) = resolve_grid(t_final, sys.norm_a, &o.marching()).stage("parameters")?;
    let refine = o.g_refine.unwrap_or(1);
    let flow = exponential_flow(&sys.a, sys.norm_a, &sys.y_in, h / refine as f64, m * refine).stage("flow")?;
    let norm_y_t = vector::norm(flow.last().expect("flow has the initial state"));
    if norm_y_t == 0.0 {
        return Err(HpmError::Singular("embedded state vanishes at T".into()).at("flow"));
    }
    let g_measured = flow.iter().map(|y| vector::norm(y)).fold(0.0, f64::max) / norm_y_t;
    let g = o.g.unwrap_or(g_measured.max(1.0));
    let exp_norm = if sys.index.dim().saturating_mul(sys.index.dim()) <= dense_cap {
        Some(max_exp_norm(&sys.a, t_final, 10, dense_cap).stage("flow")?)
    } else {
        warnings.push("N over the dense cap: ||e^{At}|| not measured".into());
        None
    };
    clock.lap("flow");

    let params = select_parameters(
        &SelectionInputs {
            nonlinearity: &prep.working_k,
            order: &prep.order,
            norm_a: sys.norm_a,
            t_final,
            epsilon: cfg.epsilon,
            g,
            eta: prep.eta,
        },
        &o.marching(),
        cfg.force,
    )
    .stage("parameters")?;
    for p in params.preconditions.iter().filter(|p| !p.ok) {
        warnings.push(format!("forced past {}: {}", p.name, p.detail));
    }
    clock.lap("parameters");

    let shape = params.shape;
    let c_mat = assemble_c(&sys.a, &shape).stage("marching system")?;
    let condition = condition_report(&c_mat, &params, dense_cap).stage("condition")?;
    if condition.kappa_measured.is_none() {
        warnings.push(format!("(d+1)N = {} over the dense cap: kappa(C) not measured", c_mat.rows()));
    }
    clock.lap("marching system");

    let mut solve_opts: SolveOptions = cfg.solve_options();
    if o.tol.is_none() {
        solve_opts.tol = params.delta;
    }
    let sol = solve_marching(&c_mat, &sys.y_in, &shape, &solve_opts).stage("solve")?;
    clock.lap("solve");

    let meas = postselect(&sol, &sys.index, k, g).stage("postselect")?;
    let dt_cascade = cfg
        .reference_dt
        .unwrap_or_else(|| default_dt(prep.working_k.norm_f1, t_final));
    let cascade = solve_cascade_with(&prep.working, &prep.working_k, c, t_final, dt_cascade).stage("cascade")?;
    let u_tilde_work = cascade.truncated_at(cascade.times().len() - 1);
    let budget = final_error(&meas.u_out, &prep.reference.u_t, Some(&u_tilde_work), cfg.epsilon).stage("final error")?;
    clock.lap("measurement");

    let u_ref_work = vector::scale(&prep.reference.u_t, prep.zeta);
    let truncation_error = vector::dist(&u_ref_work, &u_tilde_work);
    let lead = if k > 0.0 { k.max(prep.working_k.norm_u_in) / k } else { 1.0 };
    let trunc_bound = if k < 1.0 {
        truncation_bound(k, c).stage("truncation")? * lead
    } else {
        f64::INFINITY
    };

    let norm_y_in = vector::norm(&sys.y_in);
    let marching_errors: Vec<StepError> = sol
        .step_starts()
        .iter()
        .enumerate()
        .map(|(j, x)| StepError {
            j,
            t: j as f64 * shape.h,
            error: vector::dist(x, &flow[j * refine]),
            bound: marching_error_bound(j, c, shape.k, norm_y_in),
        })
        .collect();

    let level0_trajectory = sol
        .step_starts()
        .iter()
        .enumerate()
        .map(|(j, x)| TrajectoryPoint {
            t: j as f64 * shape.h,
            u: vector::scale(sys.index.block(x, 0, 0), 1.0 / prep.zeta),
        })
        .collect();

    // Preconditions, with the exponential-norm one satisfied empirically when measured.
    let pre = |name: &str| params.precondition(name).is_none_or(|p| p.ok);
    let exp_ok = exp_norm.map_or(pre("exp_norm_bound"), |e| e <= (c + 1) as f64 * (1.0 + 1e-9));
    let step_ok = pre("step_norm");
    let strength_ok = k < std::f64::consts::FRAC_1_SQRT_2;
    let recipe_ok = params
        .preconditions
        .iter()
        .all(|p| p.ok || (p.name == "exp_norm_bound" && exp_ok))
        && c >= prep.order.c_scan;

    let mut checks = BTreeMap::new();
    checks.insert(
        "embedding_sparsity".to_string(),
        BoundCheck::upper(
            structure.max_row_nnz.max(structure.max_col_nnz) as f64,
            structure.sparsity_witness as f64,
            true,
            0.0,
        ),
    );
    checks.insert(
        "embedding_norm".to_string(),
        BoundCheck::upper(structure.norm_a, structure.norm_bound, true, 1e-9),
    );
    if let Some(re) = structure.max_re_eig {
        checks.insert(
            "embedding_spectrum".to_string(),
            BoundCheck {
                precondition_ok: true,
                measured: re,
                bound: 0.0,
                pass: re < 0.0,
            },
        );
    }
    if let Some(e) = exp_norm {
        checks.insert(
            "exp_norm".to_string(),
            BoundCheck::upper(e, (c + 1) as f64, pre("exp_norm_bound"), 1e-9),
        );
    }
    if let (Some(kappa), Some(_)) = (condition.kappa_measured, condition.pass) {
        checks.insert(
            "condition".to_string(),
            BoundCheck::upper(kappa, condition.kappa_bound, step_ok && exp_ok, 0.0),
        );
    }
    if let Some(worst) = marching_errors
        .iter()
        .skip(1)
        .max_by(|a, b| (a.error / a.bound).total_cmp(&(b.error / b.bound)))
    {
        checks.insert(
            "marching_error".to_string(),
            BoundCheck {
                precondition_ok: step_ok && exp_ok,
                measured: worst.error,
                bound: worst.bound,
                pass: marching_errors.iter().all(|s| s.error <= s.bound + INTEGRATOR_SLACK),
            },
        );
    }
    checks.insert(
        "postselect_step".to_string(),
        BoundCheck::lower(meas.p1_block, meas.p1_bound, pre("factorial_order") && step_ok && exp_ok),
    );
    checks.insert(
        "postselect_level".to_string(),
        BoundCheck::lower(meas.chi0_sq, meas.chi0_bound, strength_ok),
    );
    let decay = level_norm_decay_checks(&sys.index, sol.extract_final(), k);
    if let Some(worst) = decay
        .iter()
        .max_by(|a, b| (a.measured / a.bound).total_cmp(&(b.measured / b.bound)))
    {
        checks.insert(
            "level_norm_decay".to_string(),
            BoundCheck {
                precondition_ok: strength_ok && !prep.working_k.below_u_in,
                measured: worst.measured,
                bound: worst.bound,
                pass: decay.iter().all(|d| d.pass),
            },
        );
    }
    checks.insert(
        "truncation".to_string(),
        BoundCheck {
            precondition_ok: k < 1.0,
            measured: truncation_error,
            bound: trunc_bound,
            pass: truncation_error <= trunc_bound + INTEGRATOR_SLACK,
        },
    );
    if let Some(hpm) = budget.hpm_part {
        checks.insert(
            "hpm_budget".to_string(),
            BoundCheck::upper(hpm, budget.hpm_budget, c >= prep.order.c_scan, 0.0),
        );
    }
    if let Some(solve) = budget.solve_part {
        checks.insert(
            "solve_budget".to_string(),
            BoundCheck::upper(solve, budget.solve_budget, recipe_ok, 0.0),
        );
    }
    checks.insert(
        "final_error".to_string(),
        BoundCheck::upper(budget.final_error, budget.epsilon, recipe_ok, 0.0),
    );

    let violations: Vec<String> = checks
        .iter()
        .filter(|(_, c)| c.precondition_ok && !c.pass)
        .map(|(name, _)| name.clone())
        .collect();
    if prep.reference.error_estimate > 0.1 * cfg.epsilon {
        warnings.push(format!(
            "reference error estimate {:.3e} is not small against epsilon",
            prep.reference.error_estimate
        ));
    }
    clock.lap("checks");

    let unnormalized_error = vector::dist(
        &vector::scale(&meas.u_out, meas.norm_level0 / prep.zeta),
        &prep.reference.u_t,
    );
    let report = RunReport {
        config: cfg.clone(),
        n: prep.ode.n(),
        nonlinearity: prep.nonlinearity,
        zeta: prep.zeta,
        working_nonlinearity: prep.working_k,
        reference: prep.reference.clone(),
        eta: prep.eta,
        g,
        order: prep.order,
        linear_fast_path: params.linear_fast_path,
        params,
        structure,
        max_exp_norm: exp_norm,
        condition,
        solve: SolveSummary {
            solver: sol.solver,
            dim: c_mat.rows(),
            nnz: c_mat.nnz(),
            relative_residual: sol.relative_residual,
            iterations: sol.iterations,
            tol: solve_opts.tol,
        },
        final_pass: budget.pass(),
        budget,
        measurement: meas,
        unnormalized_error,
        u_tilde_t: vector::scale(&u_tilde_work, 1.0 / prep.zeta),
        truncation_error,
        truncation_bound: trunc_bound,
        marching_errors,
        level0_trajectory,
        all_pass: violations.is_empty(),
        violations,
        checks,
        warnings,
        timings: clock.timings,
    };
    Ok(RunArtifacts {
        report,
        system: sys,
        solution: sol,
    })
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "c")]
    C,
    #[serde(rename = "k")]
    K,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "epsilon")]
    Epsilon,
}

impl std::str::FromStr for SweepParam {
    type Err = HpmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(Self::C),
            "k" => Ok(Self::K),
            "T" | "t" => Ok(Self::T),
            "epsilon" | "eps" => Ok(Self::Epsilon),
            other => Err(HpmError::Parse(format!("unknown sweep parameter {other:?} (c|k|T|epsilon)"))),
        }
    }
}

/// One sweep row. Failed runs keep `value` and record the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub measured_error: Option<f64>,
    pub bound: Option<f64>,
    pub kappa_measured: Option<f64>,
    pub kappa_bound: Option<f64>,
    pub p1: Option<f64>,
    pub chi0_sq: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 8] = [
    "value",
    "measured_error",
    "bound",
    "kappa_measured",
    "kappa_bound",
    "p1",
    "chi0_sq",
    "error",
];

fn as_count(param: SweepParam, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= 1e6 {
        Ok(v as usize)
    } else {
        Err(HpmError::InvalidParameter(format!(
            "sweep over {param:?} needs non-negative integers, got {v}"
        )))
    }
}

fn sweep_config(base: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::C => cfg.overrides.c = Some(as_count(param, value)?),
        SweepParam::K => cfg.overrides.k = Some(as_count(param, value)?),
        SweepParam::T => cfg.t_final = value,
        SweepParam::Epsilon => cfg.epsilon = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_row(base: &RunConfig, param: SweepParam, value: f64) -> SweepRow {
    let outcome = sweep_config(base, param, value).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(r) => {
            let (measured, bound) = match param {
                SweepParam::C => (r.truncation_error, r.truncation_bound),
                SweepParam::K => {
                    let last = r.marching_errors.last().expect("at least step 0");
                    (last.error, last.bound)
                }
                SweepParam::T | SweepParam::Epsilon => (r.budget.final_error, r.budget.epsilon),
            };
            SweepRow {
                value,
                measured_error: Some(measured),
                bound: Some(bound),
                kappa_measured: r.condition.kappa_measured,
                kappa_bound: Some(r.condition.kappa_bound),
                p1: Some(r.measurement.p1_block),
                chi0_sq: Some(r.measurement.chi0_sq),
                error: None,
            }
        }
        Err(e) => SweepRow {
            value,
            measured_error: None,
            bound: None,
            kappa_measured: None,
            kappa_bound: None,
            p1: None,
            chi0_sq: None,
            error: Some(e.to_string()),
        },
    }
}

/// One run per value, in parallel; rows come back in input order.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[f64]) -> Vec<SweepRow> {
    values.par_iter().map(|&v| sweep_row(base, param, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    #[test]
    fn scalar_needs_force_for_exp_norm_bound() {
        let err = run(&scalar_ode()).unwrap_err();
        match err.root() {
            HpmError::Precondition { condition, .. } => assert_eq!(*condition, "exp_norm_bound"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_end_to_end() {
        let mut cfg = scalar_ode();
        cfg.force = true;
        let r = run(&cfg).unwrap();
        assert!(r.budget.final_error <= 1e-2, "{}", r.budget.final_error);
        assert!(r.all_pass, "{:?}", r.violations);
        assert!(r.warnings.iter().any(|w| w.contains("exp_norm_bound")));
    }

    fn scalar_ode() -> RunConfig {
        let ode = QuadraticOde::new(
            SparseMatrix::diagonal(&[-1.0]),
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 0.2)]).unwrap(),
            vec![0.5],
        )
        .unwrap();
        RunConfig::inline(&ode, 1.0, 1e-2)
    }

    #[test]
    fn prepare_rescales_to_k() {
        let p = prepare(&scalar_ode()).unwrap();
        assert!((p.nonlinearity.k - 0.4).abs() < 1e-12);
        assert!((p.zeta - 0.8).abs() < 1e-12);
        assert!((p.working_k.norm_u_in - 0.4).abs() < 1e-12);
        assert!((p.working_k.norm_f2 - 0.25).abs() < 1e-12);
        assert_eq!(p.reference.method, ReferenceMethod::ClosedForm);
        assert_eq!(p.order.c, 8);
    }

    #[test]
    fn linear_fast_path() {
        let ode = QuadraticOde::new(SparseMatrix::diagonal(&[-1.0, -2.0]), SparseMatrix::zeros(2, 4), vec![0.5, 0.25])
            .unwrap();
        let r = run(&RunConfig::inline(&ode, 1.0, 1e-2)).unwrap();
        assert!(r.linear_fast_path);
        assert_eq!(r.order.c, 0);
        assert!(r.budget.final_error <= 1e-2);
        assert!(r.passed(), "{:?}", r.violations);
        assert!(r.warnings.iter().any(|w| w.contains("linear fast path")));
    }

    #[test]
    fn zero_horizon_gives_zero_error() {
        let mut cfg = scalar_ode();
        cfg.t_final = 0.0;
        cfg.force = true;
        let r = run(&cfg).unwrap();
        assert!(r.budget.final_error < 1e-14);
    }

    #[test]
    fn strong_nonlinearity_names_the_precondition() {
        let ode = QuadraticOde::new(
            SparseMatrix::diagonal(&[-1.0]),
            SparseMatrix::from_triplets(1, 1, &[(0, 0, 0.4)]).unwrap(),
            vec![0.5],
        )
        .unwrap();
        let err = run(&RunConfig::inline(&ode, 1.0, 1e-2)).unwrap_err();
        assert!(err.is_validation());
        match err.root() {
            HpmError::Precondition { condition, .. } => assert_eq!(*condition, "nonlinearity_strength"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_of_nothing_is_empty() {
        assert!(sweep(&scalar_ode(), SweepParam::C, &[]).is_empty());
    }

    #[test]
    fn sweep_records_row_errors() {
        let rows = sweep(&scalar_ode(), SweepParam::K, &[2.5]);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.is_some());
        assert!(rows[0].measured_error.is_none());
    }

    #[test]
    fn sweep_param_parsing() {
        assert_eq!("T".parse::<SweepParam>().unwrap(), SweepParam::T);
        assert_eq!("epsilon".parse::<SweepParam>().unwrap(), SweepParam::Epsilon);
        assert!("z".parse::<SweepParam>().is_err());
    }
}
