//! Seeded random test instances with a prescribed nonlinearity `K`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HpmError, Result};
use crate::ode::{compute_k, CheckOptions, QuadraticOde};
use crate::sparse::{CooBuilder, SparseMatrix};
use crate::vector;

/// Requested instance shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub n: usize,
    pub s: usize,
    #[serde(rename = "K")]
    pub k_target: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Norm of `u_in` used when `K = 0` (it no longer affects `K`).
const LINEAR_U_IN_NORM: f64 = 0.5;

/// Random normal dissipative `F1`, random `s`-sparse `F2`, and `||u_in|| = K`,
/// with `F2` scaled so that `compute_k` returns `k_target`.
pub fn generate_instance(n: usize, s: usize, k_target: f64, seed: u64) -> Result<QuadraticOde> {
    if n == 0 {
        return Err(HpmError::InvalidParameter("n must be positive".into()));
    }
    if !(0.0..std::f64::consts::FRAC_1_SQRT_2).contains(&k_target) {
        return Err(HpmError::InvalidParameter(format!(
            "K_target must lie in [0, sqrt(2)/2), got {k_target}"
        )));
    }
    if s == 0 && k_target > 0.0 {
        return Err(HpmError::InvalidParameter(
            "sparsity s = 0 forces F2 = 0, so only K_target = 0 is feasible".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f1 = random_normal_f1(n, s.max(1), &mut rng);
    let f2 = if k_target > 0.0 {
        random_sparse_f2(n, s, &mut rng)?
    } else {
        SparseMatrix::zeros(n, n * n)
    };
    let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dir = vector::normalized(&dir).unwrap_or_else(|| {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    });
    let norm_u = if k_target > 0.0 { k_target } else { LINEAR_U_IN_NORM };
    let u_in = vector::scale(&dir, norm_u);

    let opts = CheckOptions::default();
    let ode = QuadraticOde::new(f1, f2, u_in)?;
    if k_target == 0.0 {
        return Ok(ode);
    }
    let k0 = compute_k(&ode, &opts)?.k;
    let scaled = QuadraticOde::new(ode.f1().clone(), ode.f2().scaled(k_target / k0), ode.u_in().to_vec())?;
    let k1 = compute_k(&scaled, &opts)?.k;
    if (k1 - k_target).abs() > 1e-9 {
        return Err(HpmError::NoConvergence {
            what: "instance K calibration",
            iterations: 1,
        });
    }
    Ok(scaled)
}

/// Block-diagonal `Q D Qᵀ` with `D` uniform in `[−1.5, −0.5]` and random
/// orthogonal `Q` per block of size at most `block`.
fn random_normal_f1(n: usize, block: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut coo = CooBuilder::new(n, n);
    let mut start = 0;
    while start < n {
        let b = block.min(n - start);
        let g: DMatrix<f64> = DMatrix::from_fn(b, b, |_, _| StandardNormal.sample(rng));
        let q = g.qr().q();
        let d: DMatrix<f64> =
            DMatrix::from_diagonal(&nalgebra::DVector::from_fn(b, |_, _| rng.random_range(-1.5..-0.5)));
        let blk: DMatrix<f64> = &q * d * q.transpose();
        for r in 0..b {
            for c in 0..b {
                // Symmetrize to remove rounding asymmetry.
                let v = 0.5 * (blk[(r, c)] + blk[(c, r)]);
                coo.push(start + r, start + c, v).expect("block inside bounds");
            }
        }
        start += b;
    }
    coo.finalize()
}

/// Each row gets up to `s` entries in distinct columns; no column exceeds `s`.
fn random_sparse_f2(n: usize, s: usize, rng: &mut ChaCha8Rng) -> Result<SparseMatrix> {
    let cols = n * n;
    let mut col_count = vec![0usize; cols];
    let mut coo = CooBuilder::new(n, cols);
    let mut order: Vec<usize> = (0..cols).collect();
    for r in 0..n {
        order.shuffle(rng);
        let mut placed = 0;
        for &c in &order {
            if placed == s {
                break;
            }
            if col_count[c] < s {
                let v: f64 = StandardNormal.sample(rng);
                coo.push(r, c, v)?;
                col_count[c] += 1;
                placed += 1;
            }
        }
    }
    let f2 = coo.finalize();
    if f2.nnz() == 0 {
        return Err(HpmError::InvalidParameter("random F2 came out empty".into()));
    }
    Ok(f2)
}
