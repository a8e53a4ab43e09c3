//! Homotopy perturbation cascade.
//!
//! Order `i` of the expansion obeys the forced linear ODE
//! `dν_i/dt = F1 ν_i + F2 Σ_{j<i} ν_j ⊗ ν_{i−1−j}` with `ν_0(0) = u_in`
//! and `ν_i(0) = 0` otherwise. Orders couple strictly downward, so all of
//! them are integrated together in one RK4 pass.

use serde::Serialize;

use crate::error::{HpmError, Result};
use crate::ode::{compute_k, quadratic_apply, rk4, step_count, CheckOptions, NonlinearityParams, QuadraticOde};
use crate::vector;

/// Relative slack allowed over `K^i · max(K, ||u_in||)` before a cascade
/// order is declared divergent.
pub const ORDER_BOUND_SLACK: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct HpmCascade {
    c: usize,
    n: usize,
    k: f64,
    norm_u_in: f64,
    times: Vec<f64>,
    /// `nu[t][i]` = ν_i at grid point t.
    nu: Vec<Vec<Vec<f64>>>,
    /// Time derivatives matching `nu`, used for Hermite interpolation.
    dnu: Vec<Vec<Vec<f64>>>,
}

/// A value of the truncated solution, flagged when it came from interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub value: Vec<f64>,
    pub interpolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderNormRow {
    pub t: f64,
    pub i: usize,
    pub norm_nu_i: f64,
    #[serde(rename = "bound_K_pow")]
    pub bound_k_pow: f64,
}

impl HpmCascade {
    pub fn order(&self) -> usize {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }

    /// ν_i at grid index `t_idx`.
    pub fn nu(&self, t_idx: usize, i: usize) -> &[f64] {
        &self.nu[t_idx][i]
    }

    pub fn orders_at(&self, t_idx: usize) -> &[Vec<f64>] {
        &self.nu[t_idx]
    }

    /// Per-order bound `K^i · max(K, ||u_in||)`; equals `K^{i+1}` once `||u_in|| ≤ K`.
    pub fn order_bound(&self, i: usize) -> f64 {
        self.k.powi(i as i32) * self.k.max(self.norm_u_in)
    }

    pub fn max_order_norm(&self, i: usize) -> f64 {
        self.nu
            .iter()
            .map(|orders| vector::norm(&orders[i]))
            .fold(0.0, f64::max)
    }

    /// `ũ` at grid index `t_idx`.
    pub fn truncated_at(&self, t_idx: usize) -> Vec<f64> {
        let mut sum = vec![0.0; self.n];
        for v in &self.nu[t_idx] {
            vector::add_assign(&mut sum, v);
        }
        sum
    }

    /// Sum of the first `orders` orders (`ũ_{orders−1}`) at grid index `t_idx`.
    pub fn partial_sum_at(&self, t_idx: usize, orders: usize) -> Vec<f64> {
        let mut sum = vec![0.0; self.n];
        for v in self.nu[t_idx].iter().take(orders) {
            vector::add_assign(&mut sum, v);
        }
        sum
    }

    pub fn norm_table(&self) -> Vec<OrderNormRow> {
        let mut rows = Vec::with_capacity(self.times.len() * (self.c + 1));
        for (t, orders) in self.times.iter().zip(&self.nu) {
            for (i, v) in orders.iter().enumerate() {
                rows.push(OrderNormRow {
                    t: *t,
                    i,
                    norm_nu_i: vector::norm(v),
                    bound_k_pow: self.order_bound(i),
                });
            }
        }
        rows
    }
}

pub fn solve_cascade(ode: &QuadraticOde, c: usize, t_final: f64, dt: f64) -> Result<HpmCascade> {
    let params = compute_k(
        ode,
        &CheckOptions {
            assume_valid: true,
            ..CheckOptions::default()
        },
    )?;
    solve_cascade_with(ode, &params, c, t_final, dt)
}

/// Cascade with caller-supplied nonlinearity parameters (avoids recomputing `K`).
pub fn solve_cascade_with(
    ode: &QuadraticOde,
    params: &NonlinearityParams,
    c: usize,
    t_final: f64,
    dt: f64,
) -> Result<HpmCascade> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("T must be >= 0, got {t_final}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HpmError::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let n = ode.n();
    let orders = c + 1;
    let mut y0 = vec![0.0; orders * n];
    y0[..n].copy_from_slice(ode.u_in());

    let rhs = |y: &[f64], out: &mut [f64]| cascade_rhs(ode, orders, y, out);
    let steps = step_count(t_final, dt);
    let states = rk4(&y0, t_final, steps, rhs);

    let split = |y: &[f64]| -> Vec<Vec<f64>> { y.chunks(n).map(<[f64]>::to_vec).collect() };
    let mut nu = Vec::with_capacity(states.len());
    let mut dnu = Vec::with_capacity(states.len());
    let mut deriv = vec![0.0; orders * n];
    for y in &states {
        cascade_rhs(ode, orders, y, &mut deriv);
        nu.push(split(y));
        dnu.push(split(&deriv));
    }
    let times = (0..=steps)
        .map(|l| if steps == 0 { 0.0 } else { t_final * l as f64 / steps as f64 })
        .collect();
    let cascade = HpmCascade {
        c,
        n,
        k: params.k,
        norm_u_in: params.norm_u_in,
        times,
        nu,
        dnu,
    };

    for i in 0..orders {
        let observed = cascade.max_order_norm(i);
        let limit = (1.0 + ORDER_BOUND_SLACK) * cascade.order_bound(i) + 1e-12;
        if !observed.is_finite() || observed > limit {
            return Err(HpmError::Divergence(format!(
                "order {i}: max ||nu_i|| = {observed:e} exceeds bound {:e} (K = {:.4}); K >= 1 or integration failed",
                cascade.order_bound(i),
                params.k
            )));
        }
    }
    Ok(cascade)
}

fn cascade_rhs(ode: &QuadraticOde, orders: usize, y: &[f64], out: &mut [f64]) {
    let n = ode.n();
    for i in 0..orders {
        let (nu_i, out_i) = (&y[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        ode.f1().spmv_into(nu_i, out_i).expect("cascade block has length n");
        for j in 0..i {
            let a = &y[j * n..(j + 1) * n];
            let b = &y[(i - 1 - j) * n..(i - j) * n];
            quadratic_apply(ode.f2(), a, b, out_i);
        }
    }
}

/// `ũ(t) = Σ_{i=0}^{c} ν_i(t)`; off-grid times use cubic Hermite interpolation.
pub fn truncated_solution(cascade: &HpmCascade, t: f64) -> Result<Sample> {
    let t_final = cascade.t_final();
    let eps = 1e-12 * t_final.max(1.0);
    if !(t >= -eps && t <= t_final + eps) {
        return Err(HpmError::InvalidParameter(format!(
            "t = {t} outside [0, {t_final}]"
        )));
    }
    let steps = cascade.times.len() - 1;
    if steps == 0 {
        return Ok(Sample {
            value: cascade.truncated_at(0),
            interpolated: false,
        });
    }
    let h = t_final / steps as f64;
    let pos = (t / h).clamp(0.0, steps as f64);
    let nearest = pos.round();
    if (pos - nearest).abs() * h <= eps {
        return Ok(Sample {
            value: cascade.truncated_at(nearest as usize),
            interpolated: false,
        });
    }
    let l = (pos.floor() as usize).min(steps - 1);
    let s = pos - l as f64;
    let (h00, h10, h01, h11) = (
        2.0 * s.powi(3) - 3.0 * s * s + 1.0,
        s.powi(3) - 2.0 * s * s + s,
        -2.0 * s.powi(3) + 3.0 * s * s,
        s.powi(3) - s * s,
    );
    let mut value = vec![0.0; cascade.n];
    for i in 0..=cascade.c {
        let (p0, p1) = (&cascade.nu[l][i], &cascade.nu[l + 1][i]);
        let (m0, m1) = (&cascade.dnu[l][i], &cascade.dnu[l + 1][i]);
        for d in 0..cascade.n {
            value[d] += h00 * p0[d] + h10 * h * m0[d] + h01 * p1[d] + h11 * h * m1[d];
        }
    }
    Ok(Sample {
        value,
        interpolated: true,
    })
}

/// Catalan numbers `α_0..α_c` from `α_{i+1} = Σ_{j=0}^{i} α_j α_{i−j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalanSeq {
    pub alpha: Vec<u64>,
}

/// Exact Catalan sequence in checked 64-bit arithmetic (`α_36` is the last
/// value that fits).
pub fn catalan(c: usize) -> Result<CatalanSeq> {
    let mut alpha: Vec<u64> = Vec::with_capacity(c + 1);
    alpha.push(1);
    for i in 0..c {
        let mut next: u64 = 0;
        for j in 0..=i {
            next = alpha[j]
                .checked_mul(alpha[i - j])
                .and_then(|p| next.checked_add(p))
                .ok_or_else(|| HpmError::Overflow(format!("Catalan number alpha_{} exceeds u64", i + 1)))?;
        }
        alpha.push(next);
    }
    Ok(CatalanSeq { alpha })
}

/// Tail bound `Σ_{i>c} K^{i+1} = K^{c+2} / (1 − K)` on `||u − ũ_c||`.
pub fn truncation_bound(k: f64, c: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(HpmError::InvalidParameter(format!(
            "truncation bound needs 0 <= K < 1, got {k}"
        )));
    }
    Ok(k.powi(c as i32 + 2) / (1.0 - k))
}

/// Smallest `c` whose truncation bound is at most `eps`, by direct scan.
pub fn min_order_for(k: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(HpmError::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    for c in 0..=10_000 {
        if truncation_bound(k, c)? <= eps {
            return Ok(c);
        }
    }
    Err(HpmError::InvalidParameter(format!(
        "no truncation order below 10000 reaches {eps:e} for K = {k}"
    )))
}
