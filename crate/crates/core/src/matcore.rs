//! Matrix types and the quotient maps `S -> M S M^T`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Largest asymmetry `|a_ij - a_ji|` that construction repairs by averaging.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default tolerance for partition-matrix row and column sums.
pub const PARTITION_TOL: f64 = 1e-9;

/// Dense row-major `rows x cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.data[i * self.cols + l];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    /// Largest `|a_ij - a_ji|`, with its position. Square matrices only.
    pub fn max_asymmetry(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = math::abs(self.get(i, j) - self.get(j, i));
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }

    /// Copies the upper triangle onto the lower one.
    pub(crate) fn mirror_upper(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.data[i * n + j];
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        out
    }
}

/// Entrywise ℓ₁ distance.
pub fn l1_dist(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::DimensionMismatch { expected: x.rows * x.cols, found: y.rows * y.cols });
    }
    Ok(l1_slices(&x.data, &y.data))
}

#[inline]
pub(crate) fn l1_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| math::abs(p - q)).sum()
}

/// A weighted graph: symmetric, nonnegative, finite square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NonNegSymMatrix {
    entries: Matrix,
    mass: f64,
}

impl NonNegSymMatrix {
    /// Validates and wraps a square matrix. Asymmetry up to [`SYMMETRY_TOL`]
    /// is repaired by averaging with the transpose; anything larger is rejected.
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows != entries.cols {
            return Err(Error::DimensionMismatch { expected: entries.rows, found: entries.cols });
        }
        if entries.rows == 0 {
            return Err(Error::InvalidArgument("matrix must have n >= 1".into()));
        }
        let n = entries.rows;
        for i in 0..n {
            for j in 0..n {
                let v = entries.get(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
            }
        }
        let (diff, row, col) = entries.max_asymmetry();
        let mut entries = entries;
        if diff > SYMMETRY_TOL {
            return Err(Error::Asymmetric { row, col, diff });
        }
        if diff > 0.0 {
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = 0.5 * (entries.get(i, j) + entries.get(j, i));
                    entries.set(i, j, v);
                    entries.set(j, i, v);
                }
            }
        }
        let mass = entries.sum();
        if !mass.is_finite() {
            return Err(Error::InvalidArgument("total mass is not finite".into()));
        }
        Ok(NonNegSymMatrix { entries, mass })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Wraps a matrix already known to be exactly symmetric and nonnegative.
    pub(crate) fn from_trusted(entries: Matrix) -> Self {
        debug_assert_eq!(entries.rows, entries.cols);
        let mass = entries.sum();
        NonNegSymMatrix { entries, mass }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_trusted(Matrix::zeros(n, n))
    }

    /// The all-equal matrix with total mass `mass`.
    pub fn flat(n: usize, mass: f64) -> Self {
        Self::from_trusted(Matrix::filled(n, n, mass / (n * n) as f64))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.entries.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    /// Total mass γ(S).
    #[inline]
    pub fn gamma(&self) -> f64 {
        self.mass
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_trusted(self.entries.scaled(factor))
    }

    /// Rescaled to total mass 1. Zero matrices are returned unchanged.
    pub fn normalized(&self) -> Self {
        if self.mass > 0.0 {
            self.scaled(1.0 / self.mass)
        } else {
            self.clone()
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_sums()
    }
}

/// γ(S): the total entry sum.
pub fn gamma(s: &NonNegSymMatrix) -> f64 {
    s.gamma()
}

/// A `k x n` nonnegative matrix with unit column sums that is either in the
/// transportation polytope K(k,n) (row sums `n/k`) or the characteristic
/// matrix of a balanced partition.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalPartitionMatrix {
    entries: Matrix,
    tol: f64,
    balanced: bool,
    in_polytope: bool,
}

impl FractionalPartitionMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        Self::with_tol(entries, PARTITION_TOL)
    }

    pub fn with_tol(entries: Matrix, tol: f64) -> Result<Self> {
        let (k, n) = (entries.rows, entries.cols);
        if k == 0 || n == 0 {
            return Err(Error::InvalidPartition("k and n must be positive".into()));
        }
        for i in 0..k {
            for j in 0..n {
                let v = entries.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidPartition(format!("entry ({i}, {j}) = {v}")));
                }
            }
        }
        for (j, c) in entries.col_sums().iter().enumerate() {
            if math::abs(c - 1.0) > tol {
                return Err(Error::InvalidPartition(format!("column {j} sums to {c}")));
            }
        }
        let target = n as f64 / k as f64;
        let in_polytope = entries.row_sums().iter().all(|r| math::abs(r - target) <= tol * (1.0 + target));
        let zero_one = entries.data.iter().all(|&v| v == 0.0 || v == 1.0);
        let balanced = zero_one && {
            let lo = n / k;
            let hi = n.div_ceil(k);
            entries.row_sums().iter().all(|&r| r == lo as f64 || r == hi as f64)
        };
        if !in_polytope && !balanced {
            return Err(Error::InvalidPartition(format!("row sums must equal n/k = {target}")));
        }
        Ok(FractionalPartitionMatrix { entries, tol, balanced, in_polytope })
    }

    /// The characteristic matrix of a class assignment, which must be balanced.
    pub fn from_assignment(labels: &[usize], k: usize) -> Result<Self> {
        check_balanced(labels, k)?;
        let mut m = Matrix::zeros(k, labels.len());
        for (x, &c) in labels.iter().enumerate() {
            m.set(c, x, 1.0);
        }
        Self::new(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n)).expect("identity is a partition matrix")
    }

    /// The single-row all-ones matrix in K(1,n).
    pub fn all_ones(n: usize) -> Self {
        Self::new(Matrix::filled(1, n, 1.0)).expect("all-ones row is in K(1,n)")
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.entries.rows
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.entries.cols
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    /// 0/1 with class sizes in `{floor(n/k), ceil(n/k)}`.
    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// Row sums equal `n/k`, i.e. the matrix lies in K(k,n).
    pub fn in_polytope(&self) -> bool {
        self.in_polytope
    }
}

/// Checks labels are `< k` and class sizes are balanced.
pub fn check_balanced(labels: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidPartition("k must be positive".into()));
    }
    let n = labels.len();
    let mut sizes = vec![0usize; k];
    for &c in labels {
        if c >= k {
            return Err(Error::InvalidPartition(format!("label {c} out of range for k = {k}")));
        }
        sizes[c] += 1;
    }
    let (lo, hi) = (n / k, n.div_ceil(k));
    if let Some((i, s)) = sizes.iter().enumerate().find(|(_, &s)| s != lo && s != hi) {
        return Err(Error::InvalidPartition(format!("class {i} has {s} elements, expected {lo} or {hi}")));
    }
    Ok(())
}

/// A probability vector α ∈ E_k.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("alpha must be nonempty".into()));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument("alpha entries must be nonnegative".into()));
        }
        let s: f64 = alpha.iter().sum();
        if math::abs(s - 1.0) > 1e-12 {
            return Err(Error::InvalidArgument(format!("alpha sums to {s}, not 1")));
        }
        Ok(AlphaVector(alpha))
    }

    pub fn uniform(k: usize) -> Self {
        AlphaVector(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `M S M^T`, symmetric by construction.
pub fn quotient(s: &NonNegSymMatrix, m: &FractionalPartitionMatrix) -> Result<NonNegSymMatrix> {
    quotient_raw(s, m.matrix())
}

/// `M S M^T` for any nonnegative `k x n` matrix `M`.
pub(crate) fn quotient_raw(s: &NonNegSymMatrix, m: &Matrix) -> Result<NonNegSymMatrix> {
    let n = s.n();
    if m.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.cols() });
    }
    let k = m.rows();
    // p = S M^T, n x k
    let mut p = Matrix::zeros(n, k);
    for x in 0..n {
        let srow = s.matrix().row(x);
        for i in 0..k {
            let mrow = m.row(i);
            let v: f64 = srow.iter().zip(mrow).map(|(a, b)| a * b).sum();
            p.set(x, i, v);
        }
    }
    let mut q = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v: f64 = (0..n).map(|x| m.get(i, x) * p.get(x, j)).sum();
            q.set(i, j, v);
        }
    }
    q.mirror_upper();
    Ok(NonNegSymMatrix::from_trusted(q))
}

/// Block sums `P(S)` for a balanced class assignment, without building `M`.
pub fn quotient_balanced(s: &NonNegSymMatrix, labels: &[usize], k: usize) -> Result<NonNegSymMatrix> {
    if labels.len() != s.n() {
        return Err(Error::DimensionMismatch { expected: s.n(), found: labels.len() });
    }
    check_balanced(labels, k)?;
    Ok(block_sums(s, labels, k))
}

/// Block sums for any assignment with labels `< k`.
pub(crate) fn block_sums(s: &NonNegSymMatrix, labels: &[usize], k: usize) -> NonNegSymMatrix {
    let n = s.n();
    let mut q = Matrix::zeros(k, k);
    for x in 0..n {
        let row = s.matrix().row(x);
        let cx = labels[x];
        for (y, &v) in row.iter().enumerate() {
            if v != 0.0 {
                q.add_at(cx, labels[y], v);
            }
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (q.get(i, j) + q.get(j, i));
            q.set(i, j, v);
            q.set(j, i, v);
        }
    }
    NonNegSymMatrix::from_trusted(q)
}

/// `(‖MXMᵀ − MYMᵀ‖₁, ‖X − Y‖₁)`; the first never exceeds the second.
pub fn contraction_check(
    x: &NonNegSymMatrix,
    y: &NonNegSymMatrix,
    m: &FractionalPartitionMatrix,
) -> Result<(f64, f64)> {
    let before = l1_dist(x.matrix(), y.matrix())?;
    let qx = quotient(x, m)?;
    let qy = quotient(y, m)?;
    Ok((l1_dist(qx.matrix(), qy.matrix())?, before))
}
