//! Linear embedding of the truncated cascade.
//!
//! Level 0 is the single block `y_0 = Σ_l ν_l`. Level `i ≥ 1` holds one block
//! `ν_{a_0} ⊗ … ⊗ ν_{a_i}` of length `n^{i+1}` for every admissible tuple
//! (`Σ a_k ≤ c − i`). Blocks inside a level are ordered by `Σ a_k`, then
//! lexicographically, so the all-zeros tuple is always block 0.

use std::collections::HashMap;

use serde::Serialize;

use crate::dense::{dense_eigs, DEFAULT_DENSE_CAP};
use crate::error::{HpmError, Result};
use crate::ode::QuadraticOde;
use crate::sparse::{CooBuilder, SparseMatrix, DEFAULT_NORM_TOL};
use crate::vector;

pub const DEFAULT_N_CAP: usize = 200_000;

/// Bijection between `(level, block)` pairs and multi-indices.
#[derive(Debug, Clone)]
pub struct EmbeddingIndexMap {
    c: usize,
    n: usize,
    beta: Vec<usize>,
    /// Start of each level inside the embedded vector.
    level_offsets: Vec<usize>,
    total: usize,
    tuples: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).ok()
}

/// `β_i`: 1 at level 0, `Σ_{k=i}^{c} C(k, i) = C(c+1, i+1)` above.
pub fn beta(c: usize, i: usize) -> Result<usize> {
    if i > c {
        return Err(HpmError::InvalidParameter(format!("level {i} > c = {c}")));
    }
    if i == 0 {
        return Ok(1);
    }
    binomial(c + 1, i + 1).ok_or_else(|| HpmError::Overflow(format!("beta_{i} for c = {c}")))
}

/// `N = (n+1)^{c+1} − 1 − c n`, evaluated in checked arithmetic.
pub fn embedded_dim_closed_form(n: usize, c: usize) -> Option<usize> {
    (n + 1)
        .checked_pow(u32::try_from(c + 1).ok()?)?
        .checked_sub(1)?
        .checked_sub(c.checked_mul(n)?)
}

/// Admissible tuples of a level in graded-lex order. Level 0 is the single
/// summed block and is represented by `(0)`.
pub fn enumerate_level(c: usize, i: usize) -> Result<Vec<Vec<usize>>> {
    if i > c {
        return Err(HpmError::InvalidParameter(format!("level {i} > c = {c}")));
    }
    if i == 0 {
        return Ok(vec![vec![0]]);
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(i + 1);
    for total in 0..=(c - i) {
        compositions(i + 1, total, &mut current, &mut out);
    }
    Ok(out)
}

/// All `len`-tuples of nonnegative integers summing to `total`, lex ascending.
fn compositions(len: usize, total: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if len == 1 {
        current.push(total);
        out.push(current.clone());
        current.pop();
        return;
    }
    for first in 0..=total {
        current.push(first);
        compositions(len - 1, total - first, current, out);
        current.pop();
    }
}

impl EmbeddingIndexMap {
    pub fn new(n: usize, c: usize, n_cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(HpmError::InvalidParameter("dimension n must be positive".into()));
        }
        let overflow = || HpmError::Overflow(format!("embedded dimension for n = {n}, c = {c}"));
        let mut total: usize = 0;
        let mut beta_all = Vec::with_capacity(c + 1);
        let mut level_offsets = Vec::with_capacity(c + 1);
        for i in 0..=c {
            let b = beta(c, i)?;
            let block = n.checked_pow(u32::try_from(i + 1).map_err(|_| overflow())?).ok_or_else(overflow)?;
            level_offsets.push(total);
            total = b.checked_mul(block).and_then(|x| x.checked_add(total)).ok_or_else(overflow)?;
            if total > n_cap {
                return Err(HpmError::SizeCapExceeded {
                    what: "embedded dimension N",
                    value: total,
                    cap: n_cap,
                });
            }
            beta_all.push(b);
        }
        let mut tuples = Vec::with_capacity(c + 1);
        let mut lookup = Vec::with_capacity(c + 1);
        for i in 0..=c {
            let level = enumerate_level(c, i)?;
            debug_assert_eq!(level.len(), beta_all[i]);
            lookup.push(level.iter().cloned().enumerate().map(|(j, a)| (a, j)).collect());
            tuples.push(level);
        }
        Ok(Self {
            c,
            n,
            beta: beta_all,
            level_offsets,
            total,
            tuples,
            lookup,
        })
    }

    pub fn order(&self) -> usize {
        self.c
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> &[usize] {
        &self.beta
    }

    /// Total embedded dimension `N`.
    pub fn dim(&self) -> usize {
        self.total
    }

    pub fn levels(&self) -> usize {
        self.c + 1
    }

    pub fn level_offset(&self, i: usize) -> usize {
        self.level_offsets[i]
    }

    /// Length of one block at level `i`, `n^{i+1}`.
    pub fn block_len(&self, i: usize) -> usize {
        self.n.pow(i as u32 + 1)
    }

    /// Offset of block `(i, j)` inside the embedded vector.
    pub fn offset(&self, i: usize, j: usize) -> usize {
        self.level_offsets[i] + j * self.block_len(i)
    }

    /// Offsets of every block, indexed `[level][block]`.
    pub fn offsets(&self) -> Vec<Vec<usize>> {
        (0..=self.c)
            .map(|i| (0..self.beta[i]).map(|j| self.offset(i, j)).collect())
            .collect()
    }

    pub fn level_tuples(&self, i: usize) -> &[Vec<usize>] {
        &self.tuples[i]
    }

    pub fn rank(&self, a: &[usize]) -> Result<usize> {
        let i = a.len().checked_sub(1).ok_or_else(|| HpmError::InadmissibleIndex(a.to_vec()))?;
        if i > self.c {
            return Err(HpmError::InadmissibleIndex(a.to_vec()));
        }
        self.lookup[i]
            .get(a)
            .copied()
            .ok_or_else(|| HpmError::InadmissibleIndex(a.to_vec()))
    }

    pub fn unrank(&self, i: usize, j: usize) -> Result<&[usize]> {
        self.tuples
            .get(i)
            .and_then(|level| level.get(j))
            .map(Vec::as_slice)
            .ok_or_else(|| HpmError::InvalidParameter(format!("block ({i}, {j})")))
    }

    /// Total degree `Σ (a_k + 1)` of block `(i, j)` for `i ≥ 1`.
    pub fn degree(&self, i: usize, j: usize) -> usize {
        self.tuples[i][j].iter().map(|a| a + 1).sum()
    }

    /// Slice of block `(i, j)` inside an embedded vector.
    pub fn block<'a>(&self, y: &'a [f64], i: usize, j: usize) -> &'a [f64] {
        let start = self.offset(i, j);
        &y[start..start + self.block_len(i)]
    }

    /// Level `i` of an embedded vector (all of its blocks).
    pub fn level<'a>(&self, y: &'a [f64], i: usize) -> &'a [f64] {
        let start = self.level_offsets[i];
        &y[start..start + self.beta[i] * self.block_len(i)]
    }
}

/// Options for assembling the embedding.
#[derive(Debug, Clone, Copy)]
pub struct EmbedOptions {
    pub n_cap: usize,
    pub norm_tol: f64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            n_cap: DEFAULT_N_CAP,
            norm_tol: DEFAULT_NORM_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddedSystem {
    pub index: EmbeddingIndexMap,
    pub a: SparseMatrix,
    pub y_in: Vec<f64>,
    pub norm_a: f64,
    pub norm_f1: f64,
    pub norm_f2: f64,
    pub sparsity: usize,
}

pub fn assemble_a(ode: &QuadraticOde, c: usize, opts: &EmbedOptions) -> Result<EmbeddedSystem> {
    let index = EmbeddingIndexMap::new(ode.n(), c, opts.n_cap)?;
    let a = assemble_matrix(ode, &index)?;
    let y_in = assemble_y_in(ode, &index);
    let norm_a = a.spectral_norm(opts.norm_tol)?;
    Ok(EmbeddedSystem {
        norm_f1: ode.f1().spectral_norm(opts.norm_tol)?,
        norm_f2: ode.f2().spectral_norm(opts.norm_tol)?,
        sparsity: ode.sparsity(),
        index,
        a,
        y_in,
        norm_a,
    })
}

fn assemble_matrix(ode: &QuadraticOde, index: &EmbeddingIndexMap) -> Result<SparseMatrix> {
    let n = ode.n();
    let total = index.dim();
    let mut coo = CooBuilder::new(total, total);
    let f1 = ode.f1();
    let f2 = ode.f2();

    // Level 0: F1 on the diagonal, β_1 copies of F2 to the right.
    for r in 0..n {
        let (cols, vals) = f1.row(r);
        for (&col, &v) in cols.iter().zip(vals) {
            coo.push(r, col, v)?;
        }
    }
    if index.order() >= 1 {
        for j in 0..index.beta()[1] {
            let base = index.offset(1, j);
            for r in 0..n {
                let (cols, vals) = f2.row(r);
                for (&col, &v) in cols.iter().zip(vals) {
                    coo.push(r, base + col, v)?;
                }
            }
        }
    }

    for i in 1..=index.order() {
        let len = index.block_len(i);
        for (j, a) in index.level_tuples(i).iter().enumerate() {
            let row0 = index.offset(i, j);
            // Diagonal block: B(i) = Σ_k I^{⊗k} ⊗ F1 ⊗ I^{⊗(i−k)}.
            for r in 0..len {
                for k in 0..=i {
                    let stride = n.pow((i - k) as u32);
                    let digit = (r / stride) % n;
                    let (cols, vals) = f1.row(digit);
                    for (&col, &v) in cols.iter().zip(vals) {
                        coo.push(row0 + r, row0 + r - digit * stride + col * stride, v)?;
                    }
                }
            }
            if i == index.order() {
                continue;
            }
            // Superdiagonal: I^{⊗k} ⊗ F2 ⊗ I^{⊗(i−k)} into the split tuple's block.
            for k in 0..=i {
                for l in 0..a[k] {
                    let mut target = Vec::with_capacity(i + 2);
                    target.extend_from_slice(&a[..k]);
                    target.push(l);
                    target.push(a[k] - 1 - l);
                    target.extend_from_slice(&a[k + 1..]);
                    let col0 = index.offset(i + 1, index.rank(&target)?);
                    let low_stride = n.pow((i - k) as u32);
                    for r in 0..len {
                        let high = r / (low_stride * n);
                        let digit = (r / low_stride) % n;
                        let low = r % low_stride;
                        let (cols, vals) = f2.row(digit);
                        for (&col, &v) in cols.iter().zip(vals) {
                            let c = (high * n * n + col) * low_stride + low;
                            coo.push(row0 + r, col0 + c, v)?;
                        }
                    }
                }
            }
        }
    }
    Ok(coo.finalize())
}

/// `y_in`: block `(i, 0)` holds `u_in^{⊗(i+1)}`, level 0 holds `u_in`.
pub fn assemble_y_in(ode: &QuadraticOde, index: &EmbeddingIndexMap) -> Vec<f64> {
    let mut y = vec![0.0; index.dim()];
    y[..ode.n()].copy_from_slice(ode.u_in());
    for i in 1..=index.order() {
        let start = index.offset(i, 0);
        let block = vector::kron_power(ode.u_in(), i + 1);
        y[start..start + block.len()].copy_from_slice(&block);
    }
    y
}

/// Embedded state built from cascade orders `ν_0..ν_c` at one time.
pub fn embedded_state(index: &EmbeddingIndexMap, orders: &[Vec<f64>]) -> Result<Vec<f64>> {
    if orders.len() != index.levels() {
        return Err(HpmError::DimensionMismatch {
            context: "cascade orders vs embedding levels",
            expected: index.levels(),
            got: orders.len(),
        });
    }
    let mut y = Vec::with_capacity(index.dim());
    let mut sum = vec![0.0; index.base_dim()];
    for v in orders {
        vector::add_assign(&mut sum, v);
    }
    y.extend_from_slice(&sum);
    for i in 1..=index.order() {
        for a in index.level_tuples(i) {
            y.extend(vector::kron_all(a.iter().map(|&l| orders[l].as_slice())));
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StructuralReport {
    pub n_embedded: usize,
    pub max_row_nnz: usize,
    pub max_col_nnz: usize,
    /// `s (c+1)(c+2) / 2`, an explicit `O(s c²)` witness.
    pub sparsity_witness: usize,
    pub norm_a: f64,
    pub norm_bound: f64,
    /// Largest real part of the spectrum of `A`, when the dense oracle ran.
    pub max_re_eig: Option<f64>,
    pub sparsity_pass: bool,
    pub norm_pass: bool,
    pub eig_pass: Option<bool>,
}

impl StructuralReport {
    pub fn pass(&self) -> bool {
        self.sparsity_pass && self.norm_pass && self.eig_pass.unwrap_or(true)
    }

    /// Turns the first violated check into a hard error.
    pub fn ensure(&self) -> Result<()> {
        if !self.sparsity_pass {
            return Err(HpmError::BoundViolation {
                check: "embedding_sparsity".into(),
                measured: self.max_row_nnz.max(self.max_col_nnz) as f64,
                bound: self.sparsity_witness as f64,
            });
        }
        if !self.norm_pass {
            return Err(HpmError::BoundViolation {
                check: "embedding_norm".into(),
                measured: self.norm_a,
                bound: self.norm_bound,
            });
        }
        if self.eig_pass == Some(false) {
            return Err(HpmError::BoundViolation {
                check: "embedding_spectrum".into(),
                measured: self.max_re_eig.unwrap_or(f64::NAN),
                bound: 0.0,
            });
        }
        Ok(())
    }
}

/// Measures the structural bounds without failing.
pub fn measure_structure(sys: &EmbeddedSystem, dense_cap: usize) -> Result<StructuralReport> {
    let c = sys.index.order();
    let s = sys.sparsity;
    let witness = s * (c + 1) * (c + 2) / 2;
    let norm_bound = (c + 1) as f64 * (sys.norm_f1 + sys.norm_f2);
    let n_emb = sys.index.dim();
    let max_re_eig = if n_emb.saturating_mul(n_emb) <= dense_cap {
        let dense = sys.a.to_dense(dense_cap)?;
        Some(dense_eigs(&dense)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    } else {
        None
    };
    let (max_row_nnz, max_col_nnz) = (sys.a.max_row_nnz(), sys.a.max_col_nnz());
    Ok(StructuralReport {
        n_embedded: n_emb,
        max_row_nnz,
        max_col_nnz,
        sparsity_witness: witness,
        norm_a: sys.norm_a,
        norm_bound,
        max_re_eig,
        sparsity_pass: max_row_nnz.max(max_col_nnz) <= witness,
        norm_pass: sys.norm_a <= norm_bound * (1.0 + 1e-9),
        eig_pass: max_re_eig.map(|r| r < 0.0),
    })
}

/// Structural diagnostics; any violated bound is an error.
pub fn structural_report(sys: &EmbeddedSystem) -> Result<StructuralReport> {
    let report = measure_structure(sys, DEFAULT_DENSE_CAP)?;
    report.ensure()?;
    Ok(report)
}

/// Nonzero columns of row `digits` of `B(m) = Σ_j I^{⊗j} ⊗ F1 ⊗ I^{⊗(m−j)}`,
/// with the diagonal counted as structurally nonzero. Columns are linear
/// indices into `n^{m+1}`, sorted.
pub fn row_pattern_bm(f1: &SparseMatrix, m: usize, digits: &[usize]) -> Result<Vec<usize>> {
    let n = f1.rows();
    if !f1.is_square() {
        return Err(HpmError::DimensionMismatch {
            context: "F1 must be square",
            expected: f1.rows(),
            got: f1.cols(),
        });
    }
    if digits.len() != m + 1 || digits.iter().any(|&d| d >= n) {
        return Err(HpmError::InvalidParameter(format!(
            "row digits {digits:?} malformed for m = {m}, n = {n}"
        )));
    }
    let mut cols = pattern_rec(f1, digits);
    cols.sort_unstable();
    cols.dedup();
    Ok(cols)
}

/// `B(m) = F1 ⊗ I^{⊗m} + I ⊗ B(m−1)`: either the leading digit moves through
/// F1 with the tail fixed, or it stays and the tail follows `B(m−1)`; the
/// diagonal belongs to both.
fn pattern_rec(f1: &SparseMatrix, digits: &[usize]) -> Vec<usize> {
    let n = f1.rows();
    let d0 = digits[0];
    let lead: Vec<usize> = {
        let mut v: Vec<usize> = f1.row(d0).0.to_vec();
        if !v.contains(&d0) {
            v.push(d0);
        }
        v
    };
    if digits.len() == 1 {
        return lead;
    }
    let tail = &digits[1..];
    let tail_stride = n.pow(tail.len() as u32);
    let tail_self = tail.iter().fold(0, |acc, &d| acc * n + d);
    let mut out: Vec<usize> = lead
        .iter()
        .filter(|&&c| c != d0)
        .map(|&c| c * tail_stride + tail_self)
        .collect();
    out.extend(pattern_rec(f1, tail).into_iter().map(|t| d0 * tail_stride + t));
    out
}
