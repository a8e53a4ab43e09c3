//! Taylor time-marching system `C_{m,k,p}(Ah) x = e_0 ⊗ y_in`.
//!
//! The solution vector is a sequence of `d + 1` blocks of length `N`,
//! `d = m(k+1) + p`. Block `i(k+1) + j` holds `x_{i,j} = (Ah)^j/j! x_{i,0}`
//! for step `i < m`; block `(i+1)(k+1)` sums step `i`; the last `p + 1`
//! blocks all equal `x_{m,0}`.

use serde::{Deserialize, Serialize};

use crate::dense::{dense_condition_number, DenseMatrix};
use crate::error::{HpmError, Result};
use crate::hpm::truncation_bound;
use crate::ode::NonlinearityParams;
use crate::sparse::{CooBuilder, SparseMatrix};
use crate::vector;

/// Largest `(d+1)·N` accepted by [`assemble_c`].
pub const C_DIM_CAP: usize = 20_000_000;
/// Largest estimated nonzero count accepted by [`assemble_c`].
pub const C_NNZ_CAP: usize = 150_000_000;
/// Default restart length for GMRES.
pub const GMRES_RESTART: usize = 200;

/// Step size and block counts of the marching system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchingShape {
    pub h: f64,
    pub m: usize,
    pub k: usize,
    pub p: usize,
}

impl MarchingShape {
    pub fn d(&self) -> usize {
        self.m * (self.k + 1) + self.p
    }

    pub fn blocks(&self) -> usize {
        self.d() + 1
    }

    /// Linear block index of `x_{i,j}`.
    pub fn block_index(&self, i: usize, j: usize) -> Result<usize> {
        let ok = (i < self.m && j <= self.k) || (i == self.m && j <= self.p);
        if !ok {
            return Err(HpmError::InvalidParameter(format!(
                "block ({i}, {j}) outside m = {}, k = {}, p = {}",
                self.m, self.k, self.p
            )));
        }
        Ok(i * (self.k + 1) + j)
    }
}

/// `h = T/⌈T‖A‖⌉`, `m = p = ⌈T‖A‖⌉` (at least one step).
pub fn step_grid(t_final: f64, norm_a: f64) -> (f64, usize) {
    let m = ((t_final * norm_a).ceil() as usize).max(1);
    (t_final / m as f64, m)
}

/// Step grid after overrides: `m` wins over `h`; an `h` override is rounded
/// so that `m h = T` exactly.
pub fn resolve_grid(t_final: f64, norm_a: f64, overrides: &MarchingOverrides) -> Result<(f64, usize)> {
    match (overrides.m, overrides.h) {
        (Some(0), _) => Err(HpmError::InvalidParameter("m must be >= 1".into())),
        (Some(m), _) => Ok((t_final / m as f64, m)),
        (None, Some(h)) if !(h > 0.0) => Err(HpmError::InvalidParameter(format!("h must be > 0, got {h}"))),
        (None, Some(h)) => {
            let m = ((t_final / h) - 1e-12).ceil().max(1.0) as usize;
            Ok((t_final / m as f64, m))
        }
        (None, None) => Ok(step_grid(t_final, norm_a)),
    }
}

/// `(k+1)!` exactly, or `None` past `u128`.
pub fn factorial_u128(k: usize) -> Option<u128> {
    (1..=k as u128).try_fold(1u128, |acc, x| acc.checked_mul(x))
}

/// Smallest admissible `k ≥ max(1, ⌊2 ln Ω / ln ln Ω⌋)` with `(k+1)! ≥ Ω`.
pub fn select_k(omega: f64) -> Result<(usize, usize)> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(HpmError::InvalidParameter(format!("Omega must be finite and positive, got {omega}")));
    }
    let start = if omega > std::f64::consts::E.exp() {
        let l = omega.ln();
        ((2.0 * l / l.ln()).floor() as usize).max(1)
    } else {
        1
    };
    let target = omega.ceil();
    let mut k = start;
    loop {
        match factorial_u128(k + 1) {
            Some(f) if f as f64 >= target && f >= target as u128 => return Ok((start, k)),
            Some(_) => k += 1,
            None => {
                return Err(HpmError::SizeCapExceeded {
                    what: "Taylor order k (factorial beyond u128)",
                    value: k,
                    cap: 33,
                })
            }
        }
    }
}

/// `2 j (c+1)(c+2) ||y_in|| / (k+1)!`: marching error after `j` steps.
pub fn marching_error_bound(j: usize, c: usize, k: usize, norm_y_in: f64) -> f64 {
    let fact = factorial_u128(k + 1).map_or(f64::INFINITY, |f| f as f64);
    2.0 * j as f64 * ((c + 1) * (c + 2)) as f64 * norm_y_in / fact
}

/// `2e √k (m(k+1)+p)(c+2)`.
pub fn condition_bound(k: usize, m: usize, p: usize, c: usize) -> f64 {
    2.0 * std::f64::consts::E * (k as f64).sqrt() * (m * (k + 1) + p) as f64 * (c + 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl PreconditionCheck {
    fn new(name: &str, ok: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            ok,
            detail,
        }
    }
}

/// Truncation order chosen from `K`, `ε` and `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderChoice {
    pub c: usize,
    /// `⌈log_{1/K}(4||u_in|| / ((1−K) ε η))⌉`.
    pub c_formula: usize,
    /// Smallest `c` whose truncation bound fits inside `ε1`.
    pub c_scan: usize,
    pub epsilon1: f64,
    pub eta_prime: f64,
}

/// Picks `c` as the larger of the closed-form estimate and the direct scan.
/// `k` describes the working system (after any rescale).
pub fn select_order(k: &NonlinearityParams, epsilon: f64, eta: f64) -> Result<OrderChoice> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("eta must be > 0, got {eta}")));
    }
    let epsilon1 = epsilon * k.norm_u_in / (4.0 * eta);
    if k.k == 0.0 {
        return Ok(OrderChoice {
            c: 0,
            c_formula: 0,
            c_scan: 0,
            epsilon1,
            eta_prime: 0.0,
        });
    }
    if k.k >= 1.0 {
        return Err(HpmError::Precondition {
            condition: "cascade_convergence",
            detail: format!("K = {:.6} >= 1: the perturbation series does not converge", k.k),
        });
    }
    let eta_prime = eta * k.k / k.norm_u_in;
    let arg = 4.0 * k.norm_u_in / ((1.0 - k.k) * epsilon * eta);
    let c_formula = if arg <= 1.0 {
        0
    } else {
        (arg.ln() / (1.0 / k.k).ln()).ceil().max(0.0) as usize
    };
    // Per-order bound is K^i · max(K, ||u_in||); rescale ε1 accordingly.
    let lead = k.k.max(k.norm_u_in) / k.k;
    let mut c_scan = 0;
    while truncation_bound(k.k, c_scan)? * lead > epsilon1 {
        c_scan += 1;
        if c_scan > 10_000 {
            return Err(HpmError::InvalidParameter(format!("no order reaches epsilon1 = {epsilon1:e}")));
        }
    }
    Ok(OrderChoice {
        c: c_formula.max(c_scan),
        c_formula,
        c_scan,
        epsilon1,
        eta_prime,
    })
}

/// Manual overrides applied during parameter selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarchingOverrides {
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<usize>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSystemParams {
    pub c: usize,
    #[serde(flatten)]
    pub shape: MarchingShape,
    pub d: usize,
    pub t_final: f64,
    pub norm_a: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub epsilon1: f64,
    pub omega: f64,
    /// `⌊2 ln Ω / ln ln Ω⌋` before the factorial adjustment.
    pub k_initial: usize,
    pub g_est: f64,
    pub eta_est: f64,
    pub eta_prime: f64,
    pub linear_fast_path: bool,
    pub preconditions: Vec<PreconditionCheck>,
}

impl TaylorSystemParams {
    pub fn preconditions_ok(&self) -> bool {
        self.preconditions.iter().all(|p| p.ok)
    }

    pub fn precondition(&self, name: &str) -> Option<&PreconditionCheck> {
        self.preconditions.iter().find(|p| p.name == name)
    }
}

/// Inputs to [`select_parameters`] that come from earlier pipeline stages.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInputs<'a> {
    pub nonlinearity: &'a NonlinearityParams,
    pub order: &'a OrderChoice,
    pub norm_a: f64,
    pub t_final: f64,
    pub epsilon: f64,
    pub g: f64,
    pub eta: f64,
}

/// Chooses `h, m, p, k, δ, Ω` and evaluates every precondition. Unmet
/// preconditions are errors unless `force` is set, in which case they are
/// only recorded.
pub fn select_parameters(
    inputs: &SelectionInputs<'_>,
    overrides: &MarchingOverrides,
    force: bool,
) -> Result<TaylorSystemParams> {
    let kp = inputs.nonlinearity;
    let c = inputs.order.c;
    let t_final = inputs.t_final;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("T must be >= 0, got {t_final}")));
    }
    if !(inputs.g >= 1.0 && inputs.g.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("g must be >= 1, got {}", inputs.g)));
    }
    let linear = kp.k == 0.0;
    let strength_ok = kp.k < std::f64::consts::FRAC_1_SQRT_2;
    let strength_detail = format!("K = {:.6} must be < sqrt(2)/2", kp.k);
    if !strength_ok && !force {
        return Err(HpmError::Precondition {
            condition: "nonlinearity_strength",
            detail: strength_detail,
        });
    }

    let (h, m) = resolve_grid(t_final, inputs.norm_a, overrides)?;
    let p = overrides.p.unwrap_or(m);

    let eta_prime = inputs.order.eta_prime;
    let root = (1.0 - 2.0 * kp.k * kp.k).max(0.0).sqrt();
    let scale = 30.0 * (78.0 * m as f64).sqrt() * inputs.g;
    let delta = if linear {
        inputs.epsilon / scale
    } else {
        inputs.epsilon * root / (scale * eta_prime)
    };
    let omega = 50.0 * (m * (c + 1) * (c + 2)) as f64 * inputs.g / delta;
    let (k_initial, k_auto) = if delta > 0.0 {
        select_k(omega)?
    } else {
        (0, 0)
    };
    let k = overrides.k.unwrap_or(k_auto);
    if k == 0 {
        return Err(HpmError::InvalidParameter(
            "Taylor order k must be >= 1 (K >= sqrt(2)/2 leaves no admissible delta)".into(),
        ));
    }
    let shape = MarchingShape { h, m, k, p };

    let mut pre = Vec::new();
    pre.push(PreconditionCheck::new("nonlinearity_strength", strength_ok, strength_detail));
    if !linear {
        let eps_max = 0.1 * root / eta_prime;
        pre.push(PreconditionCheck::new(
            "epsilon_budget",
            inputs.epsilon <= eps_max,
            format!("epsilon = {:e} must be <= 0.1 sqrt(1-2K^2)/eta' = {eps_max:e}", inputs.epsilon),
        ));
    }
    let ratio = kp.norm_f2 / kp.re_lambda1.abs();
    let exp_ok = (c + 1) as f64 * ratio <= 1.0 + 1e-12;
    let c_max = if ratio > 0.0 {
        format!("{}", ((1.0 / ratio).floor() as i64 - 1).max(-1))
    } else {
        "unbounded".into()
    };
    pre.push(PreconditionCheck::new(
        "exp_norm_bound",
        exp_ok,
        format!(
            "(c+1)||F2||/|Re lambda1| = {:.6} must be <= 1 (c = {c}, largest admissible c = {c_max})",
            (c + 1) as f64 * ratio
        ),
    ));
    let fact = factorial_u128(k + 1).map_or(f64::INFINITY, |f| f as f64);
    pre.push(PreconditionCheck::new(
        "factorial_order",
        fact >= omega && 2.0 * (m * (c + 1) * (c + 2)) as f64 <= fact,
        format!("(k+1)! = {fact:e} must be >= Omega = {omega:e} and >= 2m(c+1)(c+2)"),
    ));
    pre.push(PreconditionCheck::new(
        "step_norm",
        inputs.norm_a * h <= 1.0 + 1e-12,
        format!("||A|| h = {:.6} must be <= 1", inputs.norm_a * h),
    ));

    if !force {
        if let Some(bad) = pre.iter().find(|p| !p.ok) {
            return Err(HpmError::Precondition {
                condition: precondition_name(&bad.name),
                detail: bad.detail.clone(),
            });
        }
    }

    Ok(TaylorSystemParams {
        c,
        shape,
        d: shape.d(),
        t_final,
        norm_a: inputs.norm_a,
        delta,
        epsilon: inputs.epsilon,
        epsilon1: inputs.order.epsilon1,
        omega,
        k_initial,
        g_est: inputs.g,
        eta_est: inputs.eta,
        eta_prime,
        linear_fast_path: linear,
        preconditions: pre,
    })
}

fn precondition_name(name: &str) -> &'static str {
    match name {
        "nonlinearity_strength" => "nonlinearity_strength",
        "epsilon_budget" => "epsilon_budget",
        "exp_norm_bound" => "exp_norm_bound",
        "factorial_order" => "factorial_order",
        "step_norm" => "step_norm",
        _ => "unknown",
    }
}

/// Assembles `C_{m,k,p}(Ah)`, a `(d+1)N` square, unit lower-triangular matrix.
pub fn assemble_c(a: &SparseMatrix, shape: &MarchingShape) -> Result<SparseMatrix> {
    if !a.is_square() {
        return Err(HpmError::DimensionMismatch {
            context: "A must be square",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let blocks = shape.blocks();
    let dim = blocks
        .checked_mul(n)
        .filter(|&d| d <= C_DIM_CAP)
        .ok_or(HpmError::SizeCapExceeded {
            what: "marching system dimension (d+1)N",
            value: blocks.saturating_mul(n),
            cap: C_DIM_CAP,
        })?;
    let nnz_est = dim
        .saturating_mul(2)
        .saturating_add(shape.m.saturating_mul(shape.k).saturating_mul(a.nnz()))
        .saturating_add(shape.m.saturating_mul(shape.k + 1).saturating_mul(n));
    if nnz_est > C_NNZ_CAP {
        return Err(HpmError::SizeCapExceeded {
            what: "marching system nonzeros",
            value: nnz_est,
            cap: C_NNZ_CAP,
        });
    }
    let (m, k) = (shape.m, shape.k);
    let mut coo = CooBuilder::with_capacity(dim, dim, nnz_est);
    // Rows are pushed in order with ascending columns, so finalize's sort is cheap.
    for l in 0..blocks {
        let base = l * n;
        if l == 0 {
            for r in 0..n {
                coo.push(r, r, 1.0)?;
            }
        } else if l <= m * (k + 1) && l % (k + 1) == 0 {
            // End of step i = l/(k+1) − 1: x_{i+1,0} = Σ_j x_{i,j}.
            let first = l - (k + 1);
            for r in 0..n {
                for j in 0..=k {
                    coo.push(base + r, (first + j) * n + r, -1.0)?;
                }
                coo.push(base + r, base + r, 1.0)?;
            }
        } else if l < m * (k + 1) {
            // Inside a step: x_{i,j} = (Ah/j) x_{i,j−1}.
            let j = l % (k + 1);
            let coef = -shape.h / j as f64;
            let prev = (l - 1) * n;
            for r in 0..n {
                let (cols, vals) = a.row(r);
                for (&col, &v) in cols.iter().zip(vals) {
                    coo.push(base + r, prev + col, coef * v)?;
                }
                coo.push(base + r, base + r, 1.0)?;
            }
        } else {
            // Copy rows after the last step.
            for r in 0..n {
                coo.push(base + r, base - n + r, -1.0)?;
                coo.push(base + r, base + r, 1.0)?;
            }
        }
    }
    Ok(coo.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Forward,
    Iterative,
}

impl std::str::FromStr for SolverKind {
    type Err = HpmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "iterative" => Ok(Self::Iterative),
            other => Err(HpmError::Parse(format!("unknown solver {other:?} (forward|iterative)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub solver: SolverKind,
    /// Relative residual target; the solve aims for `min(tol, 1e-10)`.
    pub tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            solver: SolverKind::Forward,
            tol: 1e-10,
            restart: GMRES_RESTART,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarchingSolution {
    pub shape: MarchingShape,
    pub n_embedded: usize,
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub solver: SolverKind,
    pub iterations: usize,
}

impl MarchingSolution {
    /// `x_{i,j}`.
    pub fn extract_block(&self, i: usize, j: usize) -> Result<&[f64]> {
        let l = self.shape.block_index(i, j)?;
        Ok(&self.x[l * self.n_embedded..(l + 1) * self.n_embedded])
    }

    /// `x_{m,p}`, the block used as the final answer.
    pub fn extract_final(&self) -> &[f64] {
        self.extract_block(self.shape.m, self.shape.p)
            .expect("(m, p) is always a valid block")
    }

    /// `x_{j,0}` for `j = 0..=m`.
    pub fn step_starts(&self) -> Vec<&[f64]> {
        (0..=self.shape.m)
            .map(|j| self.extract_block(j, 0).expect("step start in range"))
            .collect()
    }
}

/// Solves `C x = e_0 ⊗ y_in` to relative residual `min(tol, 1e-10)`.
pub fn solve_marching(
    c_mat: &SparseMatrix,
    y_in: &[f64],
    shape: &MarchingShape,
    opts: &SolveOptions,
) -> Result<MarchingSolution> {
    let n = y_in.len();
    let dim = shape.blocks() * n;
    if c_mat.rows() != dim || c_mat.cols() != dim {
        return Err(HpmError::DimensionMismatch {
            context: "C must be (d+1)N square",
            expected: dim,
            got: c_mat.rows(),
        });
    }
    let mut b = vec![0.0; dim];
    b[..n].copy_from_slice(y_in);
    let target = opts.tol.min(1e-10);
    let (x, iterations) = match opts.solver {
        SolverKind::Forward => (forward_substitution(c_mat, &b)?, 0),
        SolverKind::Iterative => gmres(c_mat, &b, target, opts.restart, opts.max_iterations)?,
    };
    let relative_residual = relative_residual(c_mat, &x, &b)?;
    if relative_residual > target {
        return Err(HpmError::NoConvergence {
            what: "marching solve (residual above target)",
            iterations,
        });
    }
    Ok(MarchingSolution {
        shape: *shape,
        n_embedded: n,
        x,
        relative_residual,
        solver: opts.solver,
        iterations,
    })
}

fn relative_residual(c_mat: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let cx = c_mat.spmv(x)?;
    let r = vector::dist(&cx, b);
    let nb = vector::norm(b);
    Ok(if nb == 0.0 { r } else { r / nb })
}

/// Row-wise forward substitution for a lower-triangular CSR matrix.
pub fn forward_substitution(l: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    for r in 0..l.rows() {
        let (cols, vals) = l.row(r);
        let mut acc = b[r];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c < r {
                acc -= v * x[c];
            } else if c == r {
                diag = v;
            } else {
                return Err(HpmError::InvalidParameter(format!(
                    "matrix is not lower triangular: entry ({r}, {c})"
                )));
            }
        }
        if diag == 0.0 {
            return Err(HpmError::Singular(format!("zero diagonal at row {r}")));
        }
        x[r] = acc / diag;
    }
    Ok(x)
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations, zero start.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let nb = vector::norm(b);
    if nb == 0.0 {
        return Ok((x, 0));
    }
    let restart = restart.clamp(1, n.max(1));
    let mut total = 0;
    while total < max_iterations {
        let ax = a.spmv(&x)?;
        let r = vector::sub(b, &ax);
        let beta = vector::norm(&r);
        if beta / nb <= tol {
            return Ok((x, total));
        }
        let mut basis: Vec<Vec<f64>> = vec![vector::scale(&r, 1.0 / beta)];
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::with_capacity(restart), Vec::with_capacity(restart));
        let mut g = vec![beta];
        let mut steps = 0;
        for j in 0..restart {
            let mut w = a.spmv(&basis[j])?;
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                col[i] = vector::dot(&w, v);
                vector::axpy(&mut w, -col[i], v);
            }
            col[j + 1] = vector::norm(&w);
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (cj, sj) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            cs.push(cj);
            sn.push(sj);
            let hj1 = col[j + 1];
            col[j] = cj * col[j] + sj * hj1;
            col[j + 1] = 0.0;
            g.push(-sj * g[j]);
            g[j] *= cj;
            hess.push(col);
            steps = j + 1;
            total += 1;
            let lucky = hj1 == 0.0;
            if g[j + 1].abs() / nb <= tol * 0.5 || lucky || total >= max_iterations {
                break;
            }
            basis.push(vector::scale(&w, 1.0 / hj1));
        }
        // Back-substitute the upper-triangular least-squares system.
        let mut yv = vec![0.0; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for (jj, y) in yv.iter().enumerate().take(steps).skip(i + 1) {
                acc -= hess[jj][i] * y;
            }
            if hess[i][i] == 0.0 {
                return Err(HpmError::Singular("GMRES Hessenberg breakdown".into()));
            }
            yv[i] = acc / hess[i][i];
        }
        for (i, y) in yv.iter().enumerate() {
            vector::axpy(&mut x, *y, &basis[i]);
        }
    }
    let ax = a.spmv(&x)?;
    if vector::dist(&ax, b) / nb <= tol {
        return Ok((x, total));
    }
    Err(HpmError::NoConvergence {
        what: "GMRES",
        iterations: total,
    })
}

/// `T_k(Ah)^steps v` by repeated explicit Taylor-polynomial application.
pub fn taylor_power_apply(a: &SparseMatrix, h: f64, k: usize, steps: usize, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = v.to_vec();
    out.push(cur.clone());
    for _ in 0..steps {
        let mut term = cur.clone();
        let mut sum = cur.clone();
        for j in 1..=k {
            term = vector::scale(&a.spmv(&term)?, h / j as f64);
            vector::add_assign(&mut sum, &term);
        }
        cur = sum;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Taylor order used by [`exponential_flow`]; with `||A dt|| ≤ 1` the
/// per-step remainder is below `1/31!`.
pub const FLOW_ORDER: usize = 30;

/// `e^{A j dt} y0` for `j = 0..=steps`, each step split so that the
/// sub-step satisfies `||A|| dt' ≤ 1`.
pub fn exponential_flow(a: &SparseMatrix, norm_a: f64, y0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let sub = ((norm_a * dt).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    let mut cur = y0.to_vec();
    for _ in 0..steps {
        let states = taylor_power_apply(a, dt / sub as f64, FLOW_ORDER, sub, &cur)?;
        cur = states.into_iter().last().expect("at least the initial state");
        out.push(cur.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kappa_measured: Option<f64>,
    pub kappa_bound: f64,
    pub pass: Option<bool>,
}

/// Measured `κ(C)` (dense SVD, when `(d+1)N` fits under the cap) against its bound.
pub fn condition_report(c_mat: &SparseMatrix, params: &TaylorSystemParams, dense_cap: usize) -> Result<ConditionReport> {
    let bound = condition_bound(params.shape.k, params.shape.m, params.shape.p, params.c);
    let dim = c_mat.rows();
    if dim.saturating_mul(dim) > dense_cap {
        return Ok(ConditionReport {
            kappa_measured: None,
            kappa_bound: bound,
            pass: None,
        });
    }
    let kappa = dense_condition_number(&DenseMatrix::from_sparse(c_mat, dense_cap)?)?;
    Ok(ConditionReport {
        kappa_measured: Some(kappa),
        kappa_bound: bound,
        pass: Some(kappa <= bound),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_shape() -> MarchingShape {
        MarchingShape { h: 1.0, m: 1, k: 1, p: 1 }
    }

    #[test]
    fn four_by_four_example() {
        let a = 0.3;
        let c = assemble_c(&SparseMatrix::diagonal(&[a]), &small_shape()).unwrap();
        let d = c.to_dense(100).unwrap();
        let expected = [
            [1.0, 0.0, 0.0, 0.0],
            [-a, 1.0, 0.0, 0.0],
            [-1.0, -1.0, 1.0, 0.0],
            [0.0, 0.0, -1.0, 1.0],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                assert_eq!(d.get(r, col), *v, "({r}, {col})");
            }
        }
        let y0 = 0.7;
        let sol = solve_marching(&c, &[y0], &small_shape(), &SolveOptions::default()).unwrap();
        assert_eq!(sol.x, vec![y0, a * y0, (1.0 + a) * y0, (1.0 + a) * y0]);
        assert_eq!(sol.extract_block(1, 0).unwrap(), &[(1.0 + a) * y0]);
    }

    #[test]
    fn zero_a_copies() {
        let shape = MarchingShape { h: 0.5, m: 3, k: 2, p: 3 };
        let c = assemble_c(&SparseMatrix::zeros(2, 2), &shape).unwrap();
        let y = [0.4, -0.2];
        let sol = solve_marching(&c, &y, &shape, &SolveOptions::default()).unwrap();
        for i in 0..=3 {
            assert_eq!(sol.extract_block(i, 0).unwrap(), &y);
        }
        for j in 0..=3 {
            assert_eq!(sol.extract_block(3, j).unwrap(), &y);
        }
        assert!(sol.extract_block(3, 4).is_err());
        assert!(sol.extract_block(1, 3).is_err());
    }

    #[test]
    fn forward_and_gmres_agree() {
        let a = SparseMatrix::from_dense_rows(&[vec![-1.0, 0.2, 0.0], vec![0.0, -2.0, 0.1], vec![0.0, 0.0, -3.0]])
            .unwrap();
        let shape = MarchingShape { h: 0.25, m: 4, k: 5, p: 4 };
        let c = assemble_c(&a, &shape).unwrap();
        let y = [0.5, 0.25, 0.125];
        let f = solve_marching(&c, &y, &shape, &SolveOptions::default()).unwrap();
        let g = solve_marching(
            &c,
            &y,
            &shape,
            &SolveOptions {
                solver: SolverKind::Iterative,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert!(vector::dist(&f.x, &g.x) < 1e-9);
        assert_eq!(f.extract_block(0, 0).unwrap(), &y);
        let oracle = taylor_power_apply(&a, 0.25, 5, 4, &y).unwrap();
        for (j, o) in oracle.iter().enumerate() {
            assert!(vector::dist(f.extract_block(j, 0).unwrap(), o) < 1e-12);
        }
    }

    #[test]
    fn step_grid_example() {
        let (h, m) = step_grid(1.0, 2.2);
        assert_eq!(m, 3);
        assert!((h - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn condition_bound_example() {
        let b = condition_bound(5, 3, 3, 2);
        assert!((b - 2.0 * std::f64::consts::E * 5f64.sqrt() * 21.0 * 4.0).abs() < 1e-9);
        assert!((b - 1021.148).abs() < 1e-3);
    }

    #[test]
    fn four_by_four_condition_within_bound() {
        let shape = small_shape();
        let c = assemble_c(&SparseMatrix::diagonal(&[-0.5]), &shape).unwrap();
        let kappa = dense_condition_number(&c.to_dense(100).unwrap()).unwrap();
        assert!(kappa <= condition_bound(1, 1, 1, 1));
    }

    #[test]
    fn k_selection_meets_factorial() {
        for &omega in &[1.0, 2.0, 10.0, 1e3, 1e8, 1e15, 1e30] {
            let (_, k) = select_k(omega).unwrap();
            let f = factorial_u128(k + 1).unwrap();
            assert!(f as f64 >= omega);
            let (start, _) = select_k(omega).unwrap();
            assert!(k == start || (factorial_u128(k).unwrap() as f64) < omega);
        }
        assert!(select_k(1e40).is_err());
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial_u128(5), Some(120));
        assert!(factorial_u128(34).is_some());
        assert!(factorial_u128(35).is_none());
    }

    fn scalar_params() -> NonlinearityParams {
        // Scalar instance rescaled to ||u_in|| = K.
        NonlinearityParams {
            k: 0.4,
            re_lambda1: -1.0,
            norm_f1: 1.0,
            norm_f2: 0.25,
            norm_u_in: 0.4,
            too_strong: false,
            below_u_in: false,
        }
    }

    #[test]
    fn order_choice_for_scalar_instance() {
        let u_t = 1.0 / (0.2 + 1.8 * std::f64::consts::E);
        let eta = 0.5 / u_t;
        let o = select_order(&scalar_params(), 1e-2, eta).unwrap();
        assert_eq!(o.c_formula, 6);
        assert_eq!(o.c_scan, 8);
        assert_eq!(o.c, 8);
        assert!(truncation_bound(0.4, o.c_scan).unwrap() <= o.epsilon1);
        assert!(truncation_bound(0.4, o.c_scan - 1).unwrap() > o.epsilon1);
        assert!((o.eta_prime - eta).abs() < 1e-12);
    }

    #[test]
    fn parameters_respect_invariants() {
        let kp = scalar_params();
        let order = OrderChoice {
            c: 2,
            c_formula: 2,
            c_scan: 2,
            epsilon1: 1e-3,
            eta_prime: 2.5,
        };
        let inputs = SelectionInputs {
            nonlinearity: &kp,
            order: &order,
            norm_a: 2.2,
            t_final: 1.0,
            epsilon: 1e-2,
            g: 1.0,
            eta: 2.5,
        };
        let p = select_parameters(&inputs, &MarchingOverrides::default(), false).unwrap();
        assert_eq!((p.shape.m, p.shape.p), (3, 3));
        assert!(p.norm_a * p.shape.h <= 1.0);
        assert!(factorial_u128(p.shape.k + 1).unwrap() as f64 >= p.omega);
        assert!(p.preconditions_ok());
        let expected_delta = 1e-2 * (1.0 - 0.32f64).sqrt() / (30.0 * (78.0f64 * 3.0).sqrt() * 2.5);
        assert!((p.delta - expected_delta).abs() < 1e-18);
    }

    #[test]
    fn exp_norm_precondition_enforced() {
        let kp = scalar_params();
        let order = OrderChoice {
            c: 6,
            c_formula: 6,
            c_scan: 6,
            epsilon1: 1e-3,
            eta_prime: 2.5,
        };
        let inputs = SelectionInputs {
            nonlinearity: &kp,
            order: &order,
            norm_a: 8.0,
            t_final: 1.0,
            epsilon: 1e-2,
            g: 1.0,
            eta: 2.5,
        };
        match select_parameters(&inputs, &MarchingOverrides::default(), false) {
            Err(HpmError::Precondition { condition, detail }) => {
                assert_eq!(condition, "exp_norm_bound");
                assert!(detail.contains("largest admissible c = 3"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let forced = select_parameters(&inputs, &MarchingOverrides::default(), true).unwrap();
        assert!(!forced.precondition("exp_norm_bound").unwrap().ok);
    }

    #[test]
    fn strong_nonlinearity_rejected() {
        let mut kp = scalar_params();
        kp.k = 0.75;
        kp.norm_u_in = 0.75;
        let order = select_order(&kp, 1e-3, 2.0).unwrap();
        let inputs = SelectionInputs {
            nonlinearity: &kp,
            order: &order,
            norm_a: 2.0,
            t_final: 1.0,
            epsilon: 1e-3,
            g: 1.0,
            eta: 2.0,
        };
        let err = select_parameters(&inputs, &MarchingOverrides::default(), false).unwrap_err();
        assert!(matches!(err, HpmError::Precondition { condition: "nonlinearity_strength", .. }));
    }

    #[test]
    fn marching_bound_formula() {
        let b = marching_error_bound(3, 1, 4, 0.5);
        assert!((b - 2.0 * 3.0 * 6.0 * 0.5 / 120.0).abs() < 1e-15);
    }
}
