//! Row-compressed real sparse matrices.
//!
//! Matrices are built through [`CooBuilder`], which accepts entries in any
//! order and sums duplicate `(row, col)` pairs when finalized. The finalized
//! [`SparseMatrix`] is immutable.

use std::fmt::Write as _;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{HpmError, Result};
use crate::vector;

/// Default relative tolerance for [`SparseMatrix::spectral_norm`].
pub const DEFAULT_NORM_TOL: f64 = 1e-8;
/// Cap on operator applications in [`SparseMatrix::spectral_norm`].
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Coordinate-format accumulator.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(rows: usize, cols: usize, capacity: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(HpmError::IndexOutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        self.entries.push((row, col, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sort, sum duplicates and drop entries that are exactly zero.
    pub fn finalize(mut self) -> SparseMatrix {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut iter = self.entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Immutable CSR matrix. Columns within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CooBuilder::new(rows, cols).finalize()
    }

    pub fn identity(n: usize) -> Self {
        let mut b = CooBuilder::with_capacity(n, n, n);
        for i in 0..n {
            b.entries.push((i, i, 1.0));
        }
        b.finalize()
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut b = CooBuilder::with_capacity(n, n, n);
        for (i, &d) in diag.iter().enumerate() {
            b.entries.push((i, i, d));
        }
        b.finalize()
    }

    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut b = CooBuilder::with_capacity(rows, cols, triplets.len());
        for &(r, c, v) in triplets {
            b.push(r, c, v)?;
        }
        Ok(b.finalize())
    }

    /// Build from row-major dense rows (all rows must share a length).
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = CooBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(HpmError::DimensionMismatch {
                    context: "dense row length",
                    expected: ncols,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.entries.push((i, j, v));
                }
            }
        }
        Ok(b.finalize())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col_nnz_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.cols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        counts
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.rows).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    pub fn max_col_nnz(&self) -> usize {
        self.col_nnz_counts().into_iter().max().unwrap_or(0)
    }

    /// Largest per-row or per-column nonzero count.
    pub fn sparsity(&self) -> usize {
        self.max_row_nnz().max(self.max_col_nnz())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut b = CooBuilder::with_capacity(self.cols, self.rows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.entries.push((j, i, v));
        }
        b.finalize()
    }

    /// Sparse Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &SparseMatrix) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut b = CooBuilder::with_capacity(rows, cols, self.nnz() * other.nnz());
        for (i, j, v) in self.triplets() {
            for (k, l, w) in other.triplets() {
                b.entries
                    .push((i * other.rows + k, j * other.cols + l, v * w));
            }
        }
        b.finalize()
    }

    pub fn add(&self, other: &SparseMatrix) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(HpmError::DimensionMismatch {
                context: "matrix addition",
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let mut b = CooBuilder::with_capacity(self.rows, self.cols, self.nnz() + other.nnz());
        b.entries.extend(self.triplets());
        b.entries.extend(other.triplets());
        Ok(b.finalize())
    }

    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.spmv_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = self · v`.
    pub fn spmv_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(HpmError::DimensionMismatch {
                context: "spmv input",
                expected: self.cols,
                got: v.len(),
            });
        }
        if out.len() != self.rows {
            return Err(HpmError::DimensionMismatch {
                context: "spmv output",
                expected: self.rows,
                got: out.len(),
            });
        }
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&j, &a)| a * v[j]).sum();
        }
        Ok(())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn spmv_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(HpmError::DimensionMismatch {
                context: "transposed spmv input",
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                out[j] += a * vi;
            }
        }
        Ok(out)
    }

    /// `||self||₂` as the square root of the top eigenvalue of `selfᵀ self`,
    /// by restarted Lanczos from an all-ones start vector.
    pub fn spectral_norm(&self, tol: f64) -> Result<f64> {
        if self.nnz() == 0 || self.cols == 0 {
            return Ok(0.0);
        }
        let n = self.cols;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        if vector::norm(&self.spmv(&v)?) == 0.0 {
            // all-ones lies in the null space; fall back to a fixed ramp
            v = (0..n).map(|i| (i + 1) as f64).collect();
            let s = vector::norm(&v);
            v.iter_mut().for_each(|x| *x /= s);
        }
        let top = lanczos_top_eigenvalue(v, tol, |x| self.spmv_transpose(&self.spmv(x)?))?;
        Ok(top.max(0.0).sqrt())
    }

    pub fn to_dense(&self, cap: usize) -> Result<DenseMatrix> {
        DenseMatrix::from_sparse(self, cap)
    }

    /// Triplet text format: `rows cols nnz` then one `i j value` line per entry.
    pub fn to_triplet_string(&self) -> String {
        let mut s = String::with_capacity(32 * (self.nnz() + 1));
        let _ = writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v:e}");
        }
        s
    }

    pub fn parse_triplets(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| HpmError::Parse("empty triplet file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| HpmError::Parse(format!("bad header token {t:?}")))
            })
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = head[..] else {
            return Err(HpmError::Parse(format!(
                "header must be `rows cols nnz`, got {header:?}"
            )));
        };
        let mut b = CooBuilder::with_capacity(rows, cols, nnz);
        for line in lines.by_ref().take(nnz) {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(HpmError::Parse(format!("bad triplet line {line:?}")));
            }
            let parse_idx = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| HpmError::Parse(format!("bad index {t:?}")))
            };
            let value: f64 = toks[2]
                .parse()
                .map_err(|_| HpmError::Parse(format!("bad value {:?}", toks[2])))?;
            b.push(parse_idx(toks[0])?, parse_idx(toks[1])?, value)?;
        }
        if b.len() != nnz {
            return Err(HpmError::Parse(format!(
                "header declares {nnz} entries, found {}",
                b.len()
            )));
        }
        if lines.next().is_some() {
            return Err(HpmError::Parse("trailing lines after declared entries".into()));
        }
        Ok(b.finalize())
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        Self::parse_triplets(&std::fs::read_to_string(path)?)
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_triplet_string())?;
        Ok(())
    }
}

/// Krylov dimension per Lanczos restart.
const LANCZOS_BASIS: usize = 40;

/// Largest eigenvalue of the symmetric operator `apply`, by Lanczos with full
/// reorthogonalization, restarted from the top Ritz vector. Stops when the
/// Ritz residual is at most `tol·|θ|`, or the Krylov space becomes invariant.
pub(crate) fn lanczos_top_eigenvalue(
    start: Vec<f64>,
    tol: f64,
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let n = start.len();
    let mut q0 = start;
    let s = vector::norm(&q0);
    if s == 0.0 {
        return Err(HpmError::InvalidParameter("zero Lanczos start vector".into()));
    }
    q0.iter_mut().for_each(|x| *x /= s);
    let mut applied = 0;
    while applied < POWER_ITERATION_CAP {
        let dim = LANCZOS_BASIS.min(n);
        let mut basis: Vec<Vec<f64>> = vec![q0.clone()];
        let mut alpha = Vec::with_capacity(dim);
        let mut beta: Vec<f64> = Vec::with_capacity(dim);
        let mut invariant = false;
        for j in 0..dim {
            let mut w = apply(&basis[j])?;
            applied += 1;
            alpha.push(vector::dot(&w, &basis[j]));
            for _ in 0..2 {
                for q in &basis {
                    let c = vector::dot(&w, q);
                    vector::axpy(&mut w, -c, q);
                }
            }
            let b = vector::norm(&w);
            let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(f64::MIN_POSITIVE);
            if b <= 1e-14 * scale || j + 1 == n {
                beta.push(0.0);
                invariant = true;
                break;
            }
            beta.push(b);
            if j + 1 < dim {
                basis.push(w.into_iter().map(|x| x / b).collect());
            }
        }
        let m = alpha.len();
        let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(t);
        let (top, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc });
        let y = eig.eigenvectors.column(top);
        let residual = (beta[m - 1] * y[m - 1]).abs();
        if invariant || residual <= tol * theta.abs().max(f64::MIN_POSITIVE) {
            return Ok(theta);
        }
        let mut next = vec![0.0; n];
        for (k, q) in basis.iter().enumerate().take(m) {
            vector::axpy(&mut next, y[k], q);
        }
        let s = vector::norm(&next);
        q0 = next.into_iter().map(|x| x / s).collect();
    }
    Err(HpmError::NoConvergence {
        what: "Lanczos top eigenvalue",
        iterations: POWER_ITERATION_CAP,
    })
}
