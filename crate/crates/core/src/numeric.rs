//! Dense kernels: least squares through the normal equations with a
//! Householder-QR fallback, and the cyclic Jacobi symmetric eigensolver.
//!
//! Least-squares problems are consumed as a stream of row blocks so that
//! tall systems (tens of millions of rows) never need their design matrix in
//! memory. Block boundaries are fixed by [`BLOCK_ROWS`], not by the thread
//! pool, and partial results are reduced pairwise in block order, so every
//! result is bit-identical for any worker count.

use std::fmt;
use std::ops::{Index, IndexMut};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rows per block in streamed least squares.
pub const BLOCK_ROWS: usize = 2048;

/// Normal-equations condition number above which the QR route is taken.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Relative size of the smallest `R` diagonal below which a least-squares
/// system is declared rank deficient.
const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("least squares needs at least as many rows ({rows}) as unknowns ({cols})")]
    Underdetermined { rows: usize, cols: usize },
    #[error("rank-deficient least-squares system (condition number ~ {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericError::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumericError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericError::Shape("subtraction of differently shaped matrices".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        pairwise_sum_by(&self.data, |v| v * v).sqrt()
    }

    /// `‖A − Aᵀ‖_F / ‖A‖_F` (0 for the zero matrix); errors if not square.
    pub fn asymmetry(&self) -> Result<f64, NumericError> {
        if self.rows != self.cols {
            return Err(NumericError::Shape(format!("{}x{} is not square", self.rows, self.cols)));
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                acc += 2.0 * d * d;
            }
        }
        Ok(acc.sqrt() / norm)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Pairwise (cascade) summation of `f(x)` over `xs`.
pub fn pairwise_sum_by(xs: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    const LEAF: usize = 128;
    if xs.len() <= LEAF {
        return xs.iter().map(|&x| f(x)).sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum_by(a, f) + pairwise_sum_by(b, f)
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs, |x| x)
}

/// Reduces `items` with `combine` over a balanced binary tree in index order.
fn tree_reduce<T>(mut items: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix, NumericError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NumericError::Shape("cholesky of a non-square matrix".into()));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(NumericError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// In-place Householder triangularization of a row-major `rows × cols`
/// block. Returns the `cols × cols` upper-triangular factor (zero-padded
/// when `rows < cols`).
fn householder_r(mut w: Vec<f64>, rows: usize, cols: usize) -> Vec<f64> {
    let steps = cols.min(rows);
    let mut v = vec![0.0; rows];
    for j in 0..steps {
        let mut norm2 = 0.0;
        for i in j..rows {
            let x = w[i * cols + j];
            norm2 += x * x;
        }
        if norm2 == 0.0 {
            continue;
        }
        let x0 = w[j * cols + j];
        let alpha = if x0 >= 0.0 { -norm2.sqrt() } else { norm2.sqrt() };
        for i in j..rows {
            v[i] = w[i * cols + j];
        }
        v[j] -= alpha;
        let vtv = norm2 - x0 * x0 + v[j] * v[j];
        if vtv == 0.0 {
            continue;
        }
        for q in (j + 1)..cols {
            let mut s = 0.0;
            for i in j..rows {
                s += v[i] * w[i * cols + q];
            }
            let f = 2.0 * s / vtv;
            for i in j..rows {
                w[i * cols + q] -= f * v[i];
            }
        }
        w[j * cols + j] = alpha;
        for i in (j + 1)..rows {
            w[i * cols + j] = 0.0;
        }
    }
    let mut r = vec![0.0; cols * cols];
    for i in 0..steps {
        for q in i..cols {
            r[i * cols + q] = w[i * cols + q];
        }
    }
    r
}

/// A tall least-squares problem delivered in row blocks.
///
/// Row `j` consists of `basis_len()` design entries and `target_len()`
/// right-hand-side entries; all targets share the design matrix.
pub trait RowBlocks: Sync {
    type Error: From<NumericError> + Send;

    fn rows(&self) -> usize;
    fn basis_len(&self) -> usize;
    fn target_len(&self) -> usize;
    /// Writes rows `start .. start + design.len() / basis_len()` into the
    /// row-major buffers `design` and `targets`.
    fn fill(&self, start: usize, design: &mut [f64], targets: &mut [f64]) -> Result<(), Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// `(AᵀA)⁻¹ AᵀB` through a Cholesky factorization.
    NormalEquations,
    /// Householder QR of `[A | B]`.
    Qr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    /// `K × T` coefficients, one column per target.
    pub coefficients: DenseMatrix,
    /// `‖A c_t − B_t‖₂` per target.
    pub residual_norms: Vec<f64>,
    pub method: SolveMethod,
    /// Estimated condition number of `AᵀA`.
    pub condition: f64,
}

impl LeastSquaresFit {
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.coefficients.column(t)
    }
}

fn augmented_block<S: RowBlocks>(src: &S, block: usize) -> Result<(Vec<f64>, usize), S::Error> {
    let (k, t) = (src.basis_len(), src.target_len());
    let c = k + t;
    let start = block * BLOCK_ROWS;
    let len = BLOCK_ROWS.min(src.rows() - start);
    let mut design = vec![0.0; len * k];
    let mut targets = vec![0.0; len * t];
    src.fill(start, &mut design, &mut targets)?;
    let mut w = vec![0.0; len * c];
    for r in 0..len {
        w[r * c..r * c + k].copy_from_slice(&design[r * k..(r + 1) * k]);
        w[r * c + k..(r + 1) * c].copy_from_slice(&targets[r * t..(r + 1) * t]);
    }
    Ok((w, len))
}

/// Streams `src` and solves every target's least-squares problem.
///
/// The normal equations `AᵀA c = AᵀB` are tried first; if the estimated
/// condition number of `AᵀA` exceeds `condition_limit` (or the Cholesky
/// factorization breaks down) a second pass triangularizes `[A | B]` with
/// Householder reflections and back-substitutes.
pub fn solve_streaming<S: RowBlocks>(src: &S, condition_limit: f64) -> Result<LeastSquaresFit, S::Error> {
    let (m, k, t) = (src.rows(), src.basis_len(), src.target_len());
    if k == 0 || m < k {
        return Err(NumericError::Underdetermined { rows: m, cols: k }.into());
    }
    let c = k + t;
    let blocks = m.div_ceil(BLOCK_ROWS);

    let partial_grams = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (w, len) = augmented_block(src, b)?;
            let mut g = vec![0.0; c * c];
            for r in 0..len {
                let row = &w[r * c..(r + 1) * c];
                for p in 0..c {
                    let wp = row[p];
                    if wp == 0.0 {
                        continue;
                    }
                    for q in p..c {
                        g[p * c + q] += wp * row[q];
                    }
                }
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>, S::Error>>()?;
    let gram = tree_reduce(partial_grams, |mut a, b| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    })
    .expect("at least one block");
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(NumericError::NonFinite.into());
    }

    let mut ata = DenseMatrix::zeros(k, k);
    for p in 0..k {
        for q in p..k {
            ata[(p, q)] = gram[p * c + q];
            ata[(q, p)] = gram[p * c + q];
        }
    }
    let eig = sym_eigen(&ata)?;
    let lmax = eig.values[0];
    let lmin = eig.values[k - 1];
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    if condition <= condition_limit {
        if let Ok(l) = cholesky(&ata) {
            let mut coefficients = DenseMatrix::zeros(k, t);
            let mut residual_norms = Vec::with_capacity(t);
            for tt in 0..t {
                let atb: Vec<f64> = (0..k).map(|p| gram[p * c + k + tt]).collect();
                let sol = cholesky_solve(&l, &atb);
                let btb = gram[(k + tt) * c + k + tt];
                let fitted: f64 = sol.iter().zip(&atb).map(|(x, y)| x * y).sum();
                residual_norms.push((btb - fitted).max(0.0).sqrt());
                for (p, v) in sol.into_iter().enumerate() {
                    coefficients[(p, tt)] = v;
                }
            }
            return Ok(LeastSquaresFit { coefficients, residual_norms, method: SolveMethod::NormalEquations, condition });
        }
    }

    let partial_r = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (w, len) = augmented_block(src, b)?;
            Ok(householder_r(w, len, c))
        })
        .collect::<Result<Vec<_>, S::Error>>()?;
    let r = tree_reduce(partial_r, |mut a, b| {
        a.extend_from_slice(&b);
        householder_r(a, 2 * c, c)
    })
    .expect("at least one block");

    let diag: Vec<f64> = (0..k).map(|i| r[i * c + i].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let qr_condition = if dmin > 0.0 { (dmax / dmin).powi(2) } else { f64::INFINITY };
    if !(dmin > RANK_TOLERANCE * dmax) {
        return Err(NumericError::RankDeficient { condition: qr_condition }.into());
    }
    let mut coefficients = DenseMatrix::zeros(k, t);
    let mut residual_norms = Vec::with_capacity(t);
    for tt in 0..t {
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = r[i * c + k + tt];
            for q in (i + 1)..k {
                s -= r[i * c + q] * x[q];
            }
            x[i] = s / r[i * c + i];
        }
        for (p, v) in x.into_iter().enumerate() {
            coefficients[(p, tt)] = v;
        }
        let res2: f64 = (0..=tt).map(|i| r[(k + i) * c + k + tt].powi(2)).sum();
        residual_norms.push(res2.sqrt());
    }
    let condition = if condition.is_finite() { condition } else { qr_condition };
    Ok(LeastSquaresFit { coefficients, residual_norms, method: SolveMethod::Qr, condition })
}

struct DenseRows<'a> {
    a: &'a DenseMatrix,
    b: &'a DenseMatrix,
}

impl RowBlocks for DenseRows<'_> {
    type Error = NumericError;

    fn rows(&self) -> usize {
        self.a.rows()
    }
    fn basis_len(&self) -> usize {
        self.a.cols()
    }
    fn target_len(&self) -> usize {
        self.b.cols()
    }
    fn fill(&self, start: usize, design: &mut [f64], targets: &mut [f64]) -> Result<(), NumericError> {
        let k = self.a.cols();
        let t = self.b.cols();
        design.copy_from_slice(&self.a.as_slice()[start * k..start * k + design.len()]);
        targets.copy_from_slice(&self.b.as_slice()[start * t..start * t + targets.len()]);
        Ok(())
    }
}

/// Least-squares solution of `A C ≈ B` for an in-memory `A` (`M × K`) and
/// `B` (`M × T`).
pub fn solve_least_squares(a: &DenseMatrix, b: &DenseMatrix) -> Result<LeastSquaresFit, NumericError> {
    if a.rows() != b.rows() {
        return Err(NumericError::Shape(format!("A has {} rows, B has {}", a.rows(), b.rows())));
    }
    solve_streaming(&DenseRows { a, b }, CONDITION_LIMIT)
}

/// Single right-hand-side convenience wrapper.
pub fn solve_least_squares_vec(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericError> {
    let rhs = DenseMatrix::from_vec(b.len(), 1, b.to_vec())?;
    Ok(solve_least_squares(a, &rhs)?.column(0))
}

/// `a = Q diag(values) Qᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    /// Orthogonal matrix whose columns are eigenvectors.
    pub vectors: DenseMatrix,
    pub values: Vec<f64>,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come out descending and the first entry of each eigenvector
/// that is not negligible is made positive. Input must be symmetric to
/// within 1e-10 relative Frobenius norm; it is symmetrized before iterating.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen, NumericError> {
    let asym = a.asymmetry()?;
    if asym > 1e-10 {
        return Err(NumericError::NotSymmetric(asym));
    }
    let n = a.rows();
    let mut w = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = s;
            w[(j, i)] = s;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let scale = w.frobenius_norm();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() <= 1e-16 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let cs = 1.0 / t.hypot(1.0);
                let sn = t * cs;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = cs * wkp - sn * wkq;
                    w[(k, q)] = sn * wkp + cs * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = cs * wpk - sn * wqk;
                    w[(q, k)] = sn * wpk + cs * wqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let lead = (0..n).map(|r| v[(r, src)]).find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, dst)] = sign * v[(r, src)];
        }
    }
    Ok(SymEigen { vectors, values })
}
