//! Quadratic dissipative ODEs `du/dt = F1 u + F2 (u ⊗ u)`, the nonlinearity
//! parameter `K`, rescaling, and ground-truth integrators.

use serde::{Deserialize, Serialize};

use crate::dense::{dense_eigs, DenseMatrix, DEFAULT_DENSE_CAP};
use crate::error::{HpmError, Result};
use crate::sparse::{lanczos_top_eigenvalue, SparseMatrix, DEFAULT_NORM_TOL};
use crate::vector;

/// Relative tolerance on `||F1 F1ᵀ − F1ᵀ F1|| / ||F1||²` for the normality check.
pub const NORMALITY_TOL: f64 = 1e-10;
/// Trajectory norm growth (relative to `||u_in||`) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOde {
    n: usize,
    f1: SparseMatrix,
    f2: SparseMatrix,
    u_in: Vec<f64>,
    s: usize,
}

impl QuadraticOde {
    pub fn new(f1: SparseMatrix, f2: SparseMatrix, u_in: Vec<f64>) -> Result<Self> {
        let n = u_in.len();
        if n == 0 {
            return Err(HpmError::InvalidParameter("dimension n must be positive".into()));
        }
        if f1.rows() != n || f1.cols() != n {
            return Err(HpmError::DimensionMismatch {
                context: "F1 must be n x n",
                expected: n,
                got: if f1.rows() != n { f1.rows() } else { f1.cols() },
            });
        }
        if f2.rows() != n || f2.cols() != n * n {
            return Err(HpmError::DimensionMismatch {
                context: "F2 must be n x n^2",
                expected: if f2.rows() != n { n } else { n * n },
                got: if f2.rows() != n { f2.rows() } else { f2.cols() },
            });
        }
        if u_in.iter().any(|x| !x.is_finite()) {
            return Err(HpmError::InvalidParameter("u_in has non-finite entries".into()));
        }
        let s = f1.sparsity().max(f2.sparsity());
        Ok(Self { n, f1, f2, u_in, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f1(&self) -> &SparseMatrix {
        &self.f1
    }

    pub fn f2(&self) -> &SparseMatrix {
        &self.f2
    }

    pub fn u_in(&self) -> &[f64] {
        &self.u_in
    }

    /// Max nonzeros per row/column over F1 and F2.
    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn is_linear(&self) -> bool {
        self.f2.nnz() == 0
    }

    /// `F1 u + F2 (u ⊗ u)`.
    pub fn rhs(&self, u: &[f64], out: &mut [f64]) {
        self.f1
            .spmv_into(u, out)
            .expect("state length checked at construction");
        quadratic_apply(&self.f2, u, u, out);
    }
}

/// `out += F2 (x ⊗ y)` without materializing the Kronecker product.
pub fn quadratic_apply(f2: &SparseMatrix, x: &[f64], y: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate().take(f2.rows()) {
        let (cols, vals) = f2.row(r);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * x[c / n] * y[c % n];
        }
        *o += acc;
    }
}

/// Options for the model checks that need dense oracles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckOptions {
    pub dense_cap: usize,
    /// Skip normality / eigenvalue verification and trust the caller.
    pub assume_valid: bool,
    pub norm_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            dense_cap: DEFAULT_DENSE_CAP,
            assume_valid: false,
            norm_tol: DEFAULT_NORM_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityParams {
    pub k: f64,
    pub re_lambda1: f64,
    pub norm_f1: f64,
    pub norm_f2: f64,
    pub norm_u_in: f64,
    /// `K ≥ √2/2`: the level post-selection bound no longer applies.
    pub too_strong: bool,
    /// `K < ||u_in||`: a rescale is needed before the per-order bounds hold.
    pub below_u_in: bool,
}

impl NonlinearityParams {
    pub fn k1(&self) -> f64 {
        self.k / 4.0
    }
}

/// `K = 4 ||u_in|| ||F2|| / |Re λ1|` together with its ingredients.
pub fn compute_k(ode: &QuadraticOde, opts: &CheckOptions) -> Result<NonlinearityParams> {
    let norm_f1 = ode.f1.spectral_norm(opts.norm_tol)?;
    let norm_f2 = ode.f2.spectral_norm(opts.norm_tol)?;
    let norm_u_in = vector::norm(&ode.u_in);
    let re_lambda1 = max_real_eigenvalue(ode, norm_f1, opts)?;
    if re_lambda1 >= 0.0 {
        return Err(HpmError::NotDissipative(re_lambda1));
    }
    let k = 4.0 * norm_u_in * norm_f2 / re_lambda1.abs();
    Ok(NonlinearityParams {
        k,
        re_lambda1,
        norm_f1,
        norm_f2,
        norm_u_in,
        too_strong: k >= std::f64::consts::FRAC_1_SQRT_2,
        below_u_in: k < norm_u_in,
    })
}

fn max_real_eigenvalue(ode: &QuadraticOde, norm_f1: f64, opts: &CheckOptions) -> Result<f64> {
    let n = ode.n;
    let dense_ok = n.saturating_mul(n) <= opts.dense_cap;
    if dense_ok && !opts.assume_valid {
        let f1 = ode.f1.to_dense(opts.dense_cap)?;
        let f1t = DenseMatrix::from_inner(f1.inner().transpose());
        let defect = f1.matmul(&f1t).sub(&f1t.matmul(&f1)).spectral_norm()?;
        let tolerance = NORMALITY_TOL * norm_f1 * norm_f1;
        if defect > tolerance.max(f64::MIN_POSITIVE) {
            return Err(HpmError::NotNormal { defect, tolerance });
        }
        let eigs = dense_eigs(&f1)?;
        return Ok(eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    // For normal F1, max Re(λ) is the top eigenvalue of the symmetric part.
    let sym = ode.f1.add(&ode.f1.transpose())?.scaled(0.5);
    top_symmetric_eigenvalue(&sym, norm_f1, opts.norm_tol)
}

/// Largest eigenvalue of a symmetric matrix with `||H|| ≤ bound`, via the
/// positive semidefinite shift `H + bound·I`.
fn top_symmetric_eigenvalue(h: &SparseMatrix, bound: f64, tol: f64) -> Result<f64> {
    let n = h.rows();
    let shift = bound.max(f64::MIN_POSITIVE);
    let start = vec![1.0 / (n as f64).sqrt(); n];
    let top = lanczos_top_eigenvalue(start, tol, |x| {
        let mut w = h.spmv(x)?;
        vector::axpy(&mut w, shift, x);
        Ok(w)
    })?;
    Ok(top - shift)
}

/// `u → ζu`: returns the system with `u_in' = ζ u_in`, `F2' = F2/ζ`, `F1' = F1`.
/// `K` is invariant.
pub fn rescale(ode: &QuadraticOde, zeta: f64) -> Result<QuadraticOde> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(HpmError::InvalidParameter(format!(
            "rescale factor must be positive, got {zeta}"
        )));
    }
    QuadraticOde::new(
        ode.f1.clone(),
        ode.f2.scaled(1.0 / zeta),
        vector::scale(&ode.u_in, zeta),
    )
}

/// `ζ = K / ||u_in||`, which makes `||u_in'|| = K`; 1 when either is zero.
pub fn default_zeta(params: &NonlinearityParams) -> f64 {
    if params.k > 0.0 && params.norm_u_in > 0.0 {
        params.k / params.norm_u_in
    } else {
        1.0
    }
}

/// `min(1/(10||F1||), T/1000)`.
pub fn default_dt(norm_f1: f64, t_final: f64) -> f64 {
    let a = if norm_f1 > 0.0 { 0.1 / norm_f1 } else { f64::INFINITY };
    let b = if t_final > 0.0 { t_final / 1000.0 } else { f64::INFINITY };
    let dt = a.min(b);
    if dt.is_finite() {
        dt
    } else {
        1e-3
    }
}

/// Number of uniform steps covering `[0, T]` with step at most `dt`.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    if t_final <= 0.0 {
        0
    } else {
        ((t_final / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Classical fixed-step RK4 over `steps` uniform steps of `[0, t_final]`.
/// Returns every grid state, including the initial one.
pub(crate) fn rk4<F>(y0: &[f64], t_final: f64, steps: usize, mut rhs: F) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    if steps == 0 {
        return out;
    }
    let h = t_final / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for _ in 0..steps {
        rhs(&y, &mut k1);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(y.clone());
    }
    out
}

/// Sampled solution of the nonlinear ODE on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Richardson estimate `max ||u_dt − u_{dt/2}|| / 15` over shared grid points.
    pub error_estimate: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one point")
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// RK4 ground truth for `du/dt = F1 u + F2 u⊗u` with a step-halving error estimate.
pub fn reference_solution(ode: &QuadraticOde, t_final: f64, dt: f64) -> Result<Trajectory> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("T must be >= 0, got {t_final}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let steps = step_count(t_final, dt);
    let coarse = integrate_checked(ode, t_final, steps)?;
    let error_estimate = if steps == 0 {
        0.0
    } else {
        let fine = integrate_checked(ode, t_final, 2 * steps)?;
        coarse
            .iter()
            .enumerate()
            .map(|(i, u)| vector::dist(u, &fine[2 * i]) / 15.0)
            .fold(0.0, f64::max)
    };
    let times = (0..=steps)
        .map(|i| {
            if steps == 0 {
                0.0
            } else {
                t_final * i as f64 / steps as f64
            }
        })
        .collect();
    Ok(Trajectory {
        times,
        states: coarse,
        error_estimate,
    })
}

fn integrate_checked(ode: &QuadraticOde, t_final: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let states = rk4(&ode.u_in, t_final, steps, |u, out| ode.rhs(u, out));
    let limit = DIVERGENCE_FACTOR * vector::norm(&ode.u_in);
    for (i, u) in states.iter().enumerate() {
        let nu = vector::norm(u);
        if !nu.is_finite() || (limit > 0.0 && nu > limit) {
            return Err(HpmError::Divergence(format!(
                "||u|| = {nu:e} at step {i} exceeds {DIVERGENCE_FACTOR}·||u_in|| (non-dissipative regime?)"
            )));
        }
    }
    Ok(states)
}

/// Exact solution of `du/dt = −u + a u²`, `u(0) = u0`:
/// `u(t) = 1 / (a + (1/u0 − a) eᵗ)`.
pub fn bernoulli_closed_form(a: f64, u0: f64, t: f64) -> Result<f64> {
    scalar_closed_form(-1.0, a, u0, t)
}

/// Exact solution of `du/dt = λu + a u²` (λ ≠ 0), via `w = 1/u`:
/// `u(t) = 1 / ((1/u0 + a/λ) e^{−λt} − a/λ)`.
pub fn scalar_closed_form(lambda: f64, a: f64, u0: f64, t: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(HpmError::InvalidParameter("scalar closed form needs lambda != 0".into()));
    }
    if u0 == 0.0 {
        return Ok(0.0);
    }
    let r = a / lambda;
    let denom = (1.0 / u0 + r) * (-lambda * t).exp() - r;
    // The denominator is monotone in t; a sign change on [0, t] is a pole.
    let start = 1.0 / u0;
    if denom == 0.0 || denom.signum() != start.signum() {
        return Err(HpmError::Divergence(format!(
            "scalar solution crosses a pole before t = {t}"
        )));
    }
    Ok(1.0 / denom)
}
