//! Dense verification oracles.
//!
//! Everything here is O(n³) and meant for checking the sparse pipeline at
//! desk scale. Every entry point takes (or was built under) an explicit
//! entry cap so a large embedding is never densified by accident.

use nalgebra::{Complex, DMatrix, DVector, Schur, SVD};

use crate::error::{HpmError, Result};
use crate::sparse::SparseMatrix;

/// Default cap on `rows * cols` for any dense oracle.
pub const DEFAULT_DENSE_CAP: usize = 4_000_000;

const SVD_MAX_ITER: usize = 0; // 0 = nalgebra default (unbounded until convergence)
const SCHUR_MAX_ITER: usize = 100_000;

/// Row-major-agnostic dense real matrix (column-major internally).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn from_sparse(m: &SparseMatrix, cap: usize) -> Result<Self> {
        check_cap(m.rows(), m.cols(), cap)?;
        let mut d = DMatrix::zeros(m.rows(), m.cols());
        for (i, j, v) in m.triplets() {
            d[(i, j)] = v;
        }
        Ok(Self(d))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn from_inner(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(&self.0 * alpha)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        self.0
            .column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(singular_values(self)?.first().copied().unwrap_or(0.0))
    }
}

fn check_cap(rows: usize, cols: usize, cap: usize) -> Result<()> {
    let entries = rows.saturating_mul(cols);
    if entries > cap {
        return Err(HpmError::DenseCapExceeded { entries, cap });
    }
    Ok(())
}

fn require_square(m: &DenseMatrix, context: &'static str) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(HpmError::DimensionMismatch {
            context,
            expected: m.rows(),
            got: m.cols(),
        });
    }
    Ok(())
}

/// Singular values in descending order.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vec::new());
    }
    let svd = SVD::try_new(m.0.clone(), false, false, f64::EPSILON, SVD_MAX_ITER).ok_or(
        HpmError::NoConvergence {
            what: "dense SVD",
            iterations: SVD_MAX_ITER,
        },
    )?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `σ_max / σ_min`.
pub fn dense_condition_number(m: &DenseMatrix) -> Result<f64> {
    require_square(m, "condition number of non-square matrix")?;
    let s = singular_values(m)?;
    let (Some(&max), Some(&min)) = (s.first(), s.last()) else {
        return Err(HpmError::Singular("empty matrix".into()));
    };
    if min <= max * f64::EPSILON * m.rows() as f64 {
        return Err(HpmError::Singular(format!(
            "sigma_min = {min:e}, sigma_max = {max:e}"
        )));
    }
    Ok(max / min)
}

/// All eigenvalues via the real Schur form.
pub fn dense_eigs(m: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    require_square(m, "eigenvalues of non-square matrix")?;
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    // Deflation at exactly machine epsilon can stall on clustered spectra.
    for eps in [f64::EPSILON, 1e-14, 1e-13] {
        if let Some(schur) = Schur::try_new(m.0.clone(), eps, SCHUR_MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(HpmError::NoConvergence {
        what: "real Schur decomposition",
        iterations: SCHUR_MAX_ITER,
    })
}

/// `σ_min(M − γI) / max(1, ||M||)`: the smallest achievable relative
/// residual `||Mv − γv|| / ||v||` over all vectors `v`.
pub fn eigen_residual(m: &DenseMatrix, gamma: Complex<f64>) -> Result<f64> {
    require_square(m, "eigen residual of non-square matrix")?;
    let n = m.rows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let v = Complex::new(m.0[(i, j)], 0.0);
        if i == j {
            v - gamma
        } else {
            v
        }
    });
    let svd = SVD::try_new(shifted, false, false, f64::EPSILON, SVD_MAX_ITER).ok_or(
        HpmError::NoConvergence {
            what: "complex SVD",
            iterations: SVD_MAX_ITER,
        },
    )?;
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(smin / m.spectral_norm()?.max(1.0))
}

// Padé coefficients and thresholds for scaling and squaring (degrees 3..13).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by Padé scaling and squaring.
pub fn dense_expm(m: &DenseMatrix, cap: usize) -> Result<DenseMatrix> {
    require_square(m, "expm of non-square matrix")?;
    check_cap(m.rows(), m.cols(), cap)?;
    let n = m.rows();
    let a = &m.0;
    let id = DMatrix::<f64>::identity(n, n);
    let norm = m.norm1();
    if norm == 0.0 {
        return Ok(DenseMatrix::identity(n));
    }

    for (degree, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, &id, coeffs).map(DenseMatrix);
        }
    }

    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scaled = a * 2f64.powi(-s);
    let mut r = pade13(&scaled, &id)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(DenseMatrix(r))
}

fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| HpmError::Singular("Padé denominator".into()))
}

fn pade_low(a: &DMatrix<f64>, id: &DMatrix<f64>, b: &[f64]) -> Result<DMatrix<f64>> {
    let a2 = a * a;
    let mut even = id * b[0];
    let mut odd = id * b[1];
    let mut power = id.clone();
    for j in 1..b.len() / 2 {
        power = &power * &a2;
        even += &power * b[2 * j];
        odd += &power * b[2 * j + 1];
    }
    let u = a * odd;
    pade_solve(u, even)
}

fn pade13(a: &DMatrix<f64>, id: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + id * b[0];
    pade_solve(u, v)
}
