//! Post-selection ratios, final error, and the small scalar/matrix bound
//! utilities used to audit them.
//!
//! The classical simulator sees the whole solution vector, so both
//! acceptance probabilities are computed as exact norm ratios.

use serde::{Deserialize, Serialize};

use crate::dense::{dense_expm, DenseMatrix};
use crate::embedding::EmbeddingIndexMap;
use crate::error::{HpmError, Result};
use crate::taylor::{factorial_u128, MarchingSolution};
use crate::vector;

/// One measured quantity against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub precondition_ok: bool,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    /// `measured ≤ bound` (with relative slack `rel`).
    pub fn upper(measured: f64, bound: f64, precondition_ok: bool, rel: f64) -> Self {
        Self {
            precondition_ok,
            measured,
            bound,
            pass: measured <= bound * (1.0 + rel),
        }
    }

    /// `measured ≥ bound`.
    pub fn lower(measured: f64, bound: f64, precondition_ok: bool) -> Self {
        Self {
            precondition_ok,
            measured,
            bound,
            pass: measured >= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementReport {
    /// `||x_{m,0}||² / ||x||²`.
    pub p1_block: f64,
    /// `(p+1) ||x_{m,0}||² / ||x||²`: acceptance over all copy blocks.
    pub p1_total: f64,
    /// `1 / (p + 77 m g²)`.
    pub p1_bound: f64,
    /// `||y_0(T)||² / ||y(T)||²` on the final block.
    pub chi0_sq: f64,
    /// `(1 − 2K²) / (1 − 2K² + 2η′²)`.
    pub chi0_bound: f64,
    /// `K / ||ũ(T)||` from the solved level-0 block.
    pub eta_prime: f64,
    /// Normalized level-0 block of `x_{m,p}`.
    pub u_out: Vec<f64>,
    /// Norm of the level-0 block of `x_{m,p}` (in the working scale).
    pub norm_level0: f64,
}

/// Exact post-selection ratios for the solved marching system.
pub fn postselect(sol: &MarchingSolution, index: &EmbeddingIndexMap, k: f64, g: f64) -> Result<MeasurementReport> {
    let (m, p) = (sol.shape.m, sol.shape.p);
    let total = vector::norm_sq(&sol.x);
    let x_m0 = sol.extract_block(m, 0)?;
    let final_block = sol.extract_final();
    let y0 = index.block(final_block, 0, 0);
    let norm_level0 = vector::norm(y0);
    let u_out = vector::normalized(y0).ok_or_else(|| {
        HpmError::Singular("level-0 block of the final state is zero; nothing to post-select".into())
    })?;
    let p1_block = vector::norm_sq(x_m0) / total;
    let chi0_sq = norm_level0 * norm_level0 / vector::norm_sq(final_block);
    let eta_prime = k / norm_level0;
    let r = 1.0 - 2.0 * k * k;
    Ok(MeasurementReport {
        p1_block,
        p1_total: (p + 1) as f64 * p1_block,
        p1_bound: 1.0 / (p as f64 + 77.0 * m as f64 * g * g),
        chi0_sq,
        chi0_bound: r / (r + 2.0 * eta_prime * eta_prime),
        eta_prime,
        u_out,
        norm_level0,
    })
}

/// Final error with its two-part decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// `||u_out − u(T)/||u(T)|| ||`.
    pub final_error: f64,
    pub epsilon: f64,
    /// `||ũ(T)/||ũ|| − u(T)/||u|| ||`, when the cascade value is supplied.
    pub hpm_part: Option<f64>,
    /// `2η′ε1/K = ε/2`.
    pub hpm_budget: f64,
    /// `||u_out − ũ(T)/||ũ|| ||`, when the cascade value is supplied.
    pub solve_part: Option<f64>,
    pub solve_budget: f64,
}

impl ErrorBudget {
    pub fn pass(&self) -> bool {
        self.final_error <= self.epsilon
    }
}

/// `u_out` against the reference `u(T)`; `u_tilde` is the truncated cascade at `T`.
pub fn final_error(u_out: &[f64], u_ref: &[f64], u_tilde: Option<&[f64]>, epsilon: f64) -> Result<ErrorBudget> {
    if u_out.len() != u_ref.len() {
        return Err(HpmError::DimensionMismatch {
            context: "u_out vs reference",
            expected: u_ref.len(),
            got: u_out.len(),
        });
    }
    let target = vector::normalized(u_ref)
        .ok_or_else(|| HpmError::Singular("reference u(T) is zero; direction undefined".into()))?;
    let (hpm_part, solve_part) = match u_tilde.and_then(vector::normalized) {
        Some(t) => (Some(vector::dist(&t, &target)), Some(vector::dist(u_out, &t))),
        None => (None, None),
    };
    Ok(ErrorBudget {
        final_error: vector::dist(u_out, &target),
        epsilon,
        hpm_part,
        hpm_budget: epsilon / 2.0,
        solve_part,
        solve_budget: epsilon / 2.0,
    })
}

/// Bounds on normalized perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationBounds {
    /// `2β/α`: distance of normalized vectors when `||ψ|| ≥ α`, `||ψ − φ|| ≤ β`.
    pub normalized_distance: f64,
    /// `2δ/(α − δ)`: distance of normalized flagged components.
    pub component_distance: f64,
    /// `α − δ`: lower bound on the perturbed component amplitude.
    pub amplitude_lower: f64,
}

pub fn normalized_perturbation_bounds(alpha: f64, beta: f64, delta: f64) -> Result<PerturbationBounds> {
    if !(alpha > 0.0) {
        return Err(HpmError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if !(beta >= 0.0 && delta >= 0.0) {
        return Err(HpmError::InvalidParameter("beta and delta must be >= 0".into()));
    }
    if delta >= alpha {
        return Err(HpmError::Precondition {
            condition: "perturbation_below_amplitude",
            detail: format!("delta = {delta} must be < alpha = {alpha}"),
        });
    }
    Ok(PerturbationBounds {
        normalized_distance: 2.0 * beta / alpha,
        component_distance: 2.0 * delta / (alpha - delta),
        amplitude_lower: alpha - delta,
    })
}

/// `Σ_{j<m} (βt)^j / j! · e^{−γt}`.
pub fn exp_poly_sum(t: f64, gamma: f64, beta: f64, m: usize) -> f64 {
    let x = beta * t;
    let mut term = 1.0;
    let mut sum = 0.0;
    for j in 0..m {
        if j > 0 {
            term *= x / j as f64;
        }
        sum += term;
    }
    sum * (-gamma * t).exp()
}

/// Checks `Σ_{j<m} (βt)^j/j! e^{−γt} ≤ m`; the precondition is `γ/β ≥ 1`, `t ≥ 0`.
pub fn exp_poly_sum_check(t: f64, gamma: f64, beta: f64, m: usize) -> BoundCheck {
    let value = exp_poly_sum(t, gamma, beta, m);
    let pre = t >= 0.0 && beta > 0.0 && gamma / beta >= 1.0 && m >= 1;
    BoundCheck::upper(value, m as f64, pre, 1e-12)
}

/// `||e^{Ml} − T_k(M)^l||` against `2 l Δ(Δ+1)/(k+1)!`.
///
/// Preconditions (reported, not asserted): `||M|| ≤ 1`, `||e^{Mt}|| ≤ Δ`
/// on sampled `t ∈ [0, l]`, and `2 l Δ(Δ+1)/(k+1)! ≤ 1`.
pub fn taylor_power_error_check(m: &DenseMatrix, delta_bound: f64, k: usize, l: usize, cap: usize) -> Result<BoundCheck> {
    if m.rows() != m.cols() {
        return Err(HpmError::DimensionMismatch {
            context: "matrix must be square",
            expected: m.rows(),
            got: m.cols(),
        });
    }
    let n = m.rows();
    let mut taylor = DenseMatrix::identity(n);
    let mut term = DenseMatrix::identity(n);
    for j in 1..=k {
        term = term.matmul(m).scaled(1.0 / j as f64);
        taylor = DenseMatrix::from_inner(taylor.inner() + term.inner());
    }
    let mut power = DenseMatrix::identity(n);
    for _ in 0..l {
        power = power.matmul(&taylor);
    }
    let exact = dense_expm(&m.scaled(l as f64), cap)?;
    let measured = exact.sub(&power).spectral_norm()?;
    let fact = factorial_u128(k + 1).map_or(f64::INFINITY, |f| f as f64);
    let bound = 2.0 * l as f64 * delta_bound * (delta_bound + 1.0) / fact;

    let norm_ok = m.spectral_norm()? <= 1.0 + 1e-12;
    let mut exp_ok = true;
    let samples = 20 * l.max(1);
    for s in 0..=samples {
        let t = l.max(1) as f64 * s as f64 / samples as f64;
        if dense_expm(&m.scaled(t), cap)?.spectral_norm()? > delta_bound * (1.0 + 1e-12) {
            exp_ok = false;
            break;
        }
    }
    let pre = norm_ok && exp_ok && bound <= 1.0;
    Ok(BoundCheck::upper(measured, bound, pre, 1e-9))
}

/// Squared norms of `y` regrouped by total degree: group 0 is the level-0
/// block, a block `ν_{a_0}⊗…⊗ν_{a_i}` (`i ≥ 1`) goes to group `Σ(a_k+1) − 1`.
pub fn degree_group_norms_sq(index: &EmbeddingIndexMap, y: &[f64]) -> Vec<f64> {
    let mut groups = vec![0.0; index.levels()];
    groups[0] = vector::norm_sq(index.block(y, 0, 0));
    for i in 1..index.levels() {
        for j in 0..index.beta()[i] {
            groups[index.degree(i, j) - 1] += vector::norm_sq(index.block(y, i, j));
        }
    }
    groups
}

/// `||y′_i||² < (2K²)^i` for every degree group `i ≥ 1`.
pub fn level_norm_decay_checks(index: &EmbeddingIndexMap, y: &[f64], k: f64) -> Vec<BoundCheck> {
    let pre = k < std::f64::consts::FRAC_1_SQRT_2;
    degree_group_norms_sq(index, y)
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(i, sq)| {
            let bound = (2.0 * k * k).powi(i as i32);
            BoundCheck {
                precondition_ok: pre,
                measured: sq,
                bound,
                pass: sq < bound || (sq == 0.0 && bound == 0.0),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{assemble_a, EmbedOptions};
    use crate::ode::QuadraticOde;
    use crate::sparse::SparseMatrix;
    use crate::taylor::{assemble_c, solve_marching, MarchingShape, SolveOptions};

    #[test]
    fn linear_c0_has_unit_chi0() {
        let ode = QuadraticOde::new(SparseMatrix::diagonal(&[-1.0]), SparseMatrix::zeros(1, 1), vec![0.5]).unwrap();
        let sys = assemble_a(&ode, 0, &EmbedOptions::default()).unwrap();
        let shape = MarchingShape { h: 0.5, m: 2, k: 6, p: 2 };
        let c = assemble_c(&sys.a, &shape).unwrap();
        let sol = solve_marching(&c, &sys.y_in, &shape, &SolveOptions::default()).unwrap();
        let rep = postselect(&sol, &sys.index, 0.0, 1.0).unwrap();
        assert_eq!(rep.chi0_sq, 1.0);
        assert!((rep.u_out[0] - 1.0).abs() < 1e-15);
        assert!(rep.p1_block >= rep.p1_bound);
        assert!(rep.p1_total <= 1.0 + 1e-15);
    }

    #[test]
    fn zero_final_block_is_an_error() {
        let ode = QuadraticOde::new(SparseMatrix::diagonal(&[-1.0]), SparseMatrix::zeros(1, 1), vec![0.0]).unwrap();
        let sys = assemble_a(&ode, 0, &EmbedOptions::default()).unwrap();
        let shape = MarchingShape { h: 1.0, m: 1, k: 2, p: 1 };
        let c = assemble_c(&sys.a, &shape).unwrap();
        let sol = solve_marching(&c, &sys.y_in, &shape, &SolveOptions::default()).unwrap();
        assert!(postselect(&sol, &sys.index, 0.0, 1.0).is_err());
    }

    #[test]
    fn final_error_zero_when_aligned() {
        let b = final_error(&[0.6, 0.8], &[3.0, 4.0], Some(&[0.3, 0.4]), 1e-2).unwrap();
        assert!(b.final_error < 1e-15);
        assert!(b.pass());
        assert_eq!(b.hpm_budget, 5e-3);
        assert!(final_error(&[1.0], &[0.0], None, 1e-2).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let b = normalized_perturbation_bounds(1.0, 0.0, 0.0).unwrap();
        assert_eq!(b.normalized_distance, 0.0);
        let half = normalized_perturbation_bounds(0.4, 0.1, 0.2).unwrap();
        assert!((half.component_distance - 2.0).abs() < 1e-15);
        assert!((half.amplitude_lower - 0.2).abs() < 1e-15);
        assert!(normalized_perturbation_bounds(0.4, 0.1, 0.4).is_err());
        assert!(normalized_perturbation_bounds(0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn exp_poly_sum_examples() {
        assert_eq!(exp_poly_sum(0.0, 1.0, 1.0, 3), 1.0);
        let worst = (0..=1000)
            .map(|i| exp_poly_sum(10.0 * i as f64 / 1000.0, 1.0, 1.0, 3))
            .fold(0.0, f64::max);
        assert!(worst <= 3.0);
        assert!(exp_poly_sum_check(2.0, 2.0, 1.0, 4).pass);
        assert!(!exp_poly_sum_check(2.0, 0.5, 1.0, 4).precondition_ok);
    }

    #[test]
    fn taylor_power_scalar_example() {
        let m = DenseMatrix::from_row_slice(1, 1, &[-0.5]);
        let chk = taylor_power_error_check(&m, 1.0, 4, 3, 100).unwrap();
        assert!((chk.bound - 0.1).abs() < 1e-15);
        let direct = (-1.5f64).exp() - (1.0 - 0.5 + 0.125 - 0.5f64.powi(3) / 6.0 + 0.5f64.powi(4) / 24.0).powi(3);
        assert!((chk.measured - direct.abs()).abs() < 1e-14);
        assert!(chk.pass && chk.precondition_ok);
    }

    #[test]
    fn degree_groups_partition_the_vector() {
        let ode = QuadraticOde::new(
            SparseMatrix::diagonal(&[-1.0, -2.0]),
            SparseMatrix::from_triplets(2, 4, &[(0, 1, 0.1), (1, 2, 0.1)]).unwrap(),
            vec![0.1, 0.2],
        )
        .unwrap();
        let sys = assemble_a(&ode, 3, &EmbedOptions::default()).unwrap();
        let y: Vec<f64> = (0..sys.index.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = degree_group_norms_sq(&sys.index, &y);
        assert!((g.iter().sum::<f64>() - vector::norm_sq(&y)).abs() < 1e-9);
        // group i ≥ 1 holds 2^i − 1 tuples of n^{len} entries each
        let mut counts = [0usize; 4];
        for i in 1..=3 {
            for j in 0..sys.index.beta()[i] {
                counts[sys.index.degree(i, j) - 1] += 1;
            }
        }
        assert_eq!(counts[1..], [1, 3, 7]);
    }
}
