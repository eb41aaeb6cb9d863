//! Dense small-matrix kernels: Gram matrices, thin QR, norms and symmetric
//! eigenvalues. Everything here is sized for `n, d ≲ 100`.

use crate::error::{Error, Result};

/// Relative tolerance used by the rank test in [`thin_qr`].
pub const RANK_TOL: f64 = 1e-12;

/// Row-major `n × d` real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ParamMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
        }
        Self::new(n, d, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix entry by entry. The closure must return finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        debug_assert!(m.data.iter().all(|v| v.is_finite()));
        m
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn same_shape(&self, other: &ParamMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub(crate) fn check_same_shape(&self, other: &ParamMatrix, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix has {} columns, vector has length {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn matmul(&self, other: &ParamMatrix) -> Result<ParamMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ParamMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> ParamMatrix {
        ParamMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, other: &ParamMatrix, scale: f64) -> Result<ParamMatrix> {
        self.check_same_shape(other, "add_scaled")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        ParamMatrix::new(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &ParamMatrix) -> Result<ParamMatrix> {
        self.add_scaled(other, -1.0)
    }

    pub fn scaled(&self, scale: f64) -> ParamMatrix {
        ParamMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * scale).collect(),
        }
    }

    /// Divides row `i` by `s[i]`, i.e. forms `Diag(s)⁻¹ · self`.
    pub fn div_rows(&self, s: &[f64]) -> Result<ParamMatrix> {
        if s.len() != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "row scaling of length {} for {} rows",
                s.len(),
                self.rows
            )));
        }
        Ok(ParamMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) / s[i]
        }))
    }

    pub fn max_abs_diff(&self, other: &ParamMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense symmetric matrix; the stored entries are mirrored exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Evaluates `f(i, j)` for `i ≤ j` and mirrors it into the lower triangle.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_upper(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn from_matrix(m: &ParamMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::ShapeMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(Self::from_upper(m.rows(), |i, j| {
            0.5 * (m.get(i, j) + m.get(j, i))
        }))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> ParamMatrix {
        ParamMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `AᵀA`, each unordered pair computed once and mirrored.
pub fn gram(a: &ParamMatrix) -> SymMatrix {
    SymMatrix::from_upper(a.cols(), |j, k| {
        (0..a.rows()).map(|i| a.get(i, j) * a.get(i, k)).sum()
    })
}

/// All eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
pub fn sym_eigenvalues(s: &SymMatrix) -> Vec<f64> {
    let d = s.dim();
    let mut a: Vec<f64> = (0..d * d).map(|k| s.get(k / d, k % d)).collect();
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; d];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - sn * akq;
                    a[k * d + q] = sn * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - sn * aqk;
                    a[q * d + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Smallest eigenvalue; closed form for `d ≤ 2`, Jacobi otherwise.
pub fn min_eigenvalue(s: &SymMatrix) -> f64 {
    match s.dim() {
        0 => f64::NAN,
        1 => s.get(0, 0),
        2 => {
            let (a, b, c) = (s.get(0, 0), s.get(0, 1), s.get(1, 1));
            let mid = 0.5 * (a + c);
            let rad = (0.5 * (a - c)).hypot(b);
            let hi = mid + rad;
            if mid > 0.0 && hi > 0.0 {
                // product form avoids cancellation when the spectrum is spread
                (a * c - b * b) / hi
            } else {
                mid - rad
            }
        }
        _ => sym_eigenvalues(s)[0],
    }
}

/// `max_i ‖A_{i,*}‖₂`.
pub fn two_to_infty_norm(a: &ParamMatrix) -> f64 {
    (0..a.rows()).map(|i| norm2(a.row(i))).fold(0.0, f64::max)
}

/// Spectral norm of `b bᵀ − a aᵀ`, exact on the (at most) two-dimensional
/// span of `a` and `b`.
pub fn rank_two_gap_norm(a: &[f64], b: &[f64]) -> f64 {
    let trace = dot(b, b) - dot(a, a);
    // |a|²|b|² − (a·b)² via Lagrange's identity, which stays non-negative
    let mut gram_det = 0.0;
    for j in 0..a.len() {
        for k in j + 1..a.len() {
            let m = a[j] * b[k] - a[k] * b[j];
            gram_det += m * m;
        }
    }
    0.5 * (trace.abs() + (trace * trace + 4.0 * gram_det).sqrt())
}

/// `Σ_i ‖B_iᵀB_i − A_iᵀA_i‖_op`.
pub fn row_gram_gap(a: &ParamMatrix, b: &ParamMatrix) -> Result<f64> {
    a.check_same_shape(b, "row_gram_gap")?;
    Ok((0..a.rows())
        .map(|i| rank_two_gap_norm(a.row(i), b.row(i)))
        .sum())
}

/// Thin QR factorization `A = QR` with `Q` of shape `n × d`.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: ParamMatrix,
    /// Upper triangular `d × d`, non-negative diagonal.
    pub r: ParamMatrix,
}

impl ThinQr {
    /// Solves `X R = B` for `X` (`B` of shape `k × d`), i.e. `X = B R⁻¹`.
    pub fn solve_right(&self, b: &ParamMatrix) -> Result<ParamMatrix> {
        let d = self.r.rows();
        if b.cols() != d {
            return Err(Error::ShapeMismatch(format!(
                "right solve with R of size {d} against {} columns",
                b.cols()
            )));
        }
        let mut x = ParamMatrix::zeros(b.rows(), d);
        for i in 0..b.rows() {
            for j in 0..d {
                let mut acc = b.get(i, j);
                for k in 0..j {
                    acc -= x.get(i, k) * self.r.get(k, j);
                }
                x.set(i, j, acc / self.r.get(j, j));
            }
        }
        Ok(x)
    }
}

/// Householder thin QR. Fails with [`Error::RankDeficient`] when a pivot
/// falls below `1e-12 · ‖A‖_{2→∞}`.
pub fn thin_qr(a: &ParamMatrix) -> Result<ThinQr> {
    let (n, d) = (a.rows(), a.cols());
    if n < d {
        return Err(Error::ShapeMismatch(format!(
            "thin QR needs n ≥ d, got {n}x{d}"
        )));
    }
    let tol = RANK_TOL * two_to_infty_norm(a);
    let mut w = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let x: Vec<f64> = (k..n).map(|i| w.get(i, k)).collect();
        let norm = norm2(&x);
        let mut v = x;
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vn = norm2(&v);
        if vn > 0.0 {
            v.iter_mut().for_each(|e| *e /= vn);
            for j in k..d {
                let proj: f64 = (k..n).map(|i| v[i - k] * w.get(i, j)).sum();
                for i in k..n {
                    let cur = w.get(i, j);
                    w.set(i, j, cur - 2.0 * v[i - k] * proj);
                }
            }
        }
        reflectors.push(v);
    }

    let mut r = ParamMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            r.set(i, j, w.get(i, j));
        }
    }
    // Q = H_1 ⋯ H_d [I_d; 0]
    let mut q = ParamMatrix::from_fn(n, d, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..d).rev() {
        let v = &reflectors[k];
        for j in 0..d {
            let proj: f64 = (k..n).map(|i| v[i - k] * q.get(i, j)).sum();
            if proj != 0.0 {
                for i in k..n {
                    let cur = q.get(i, j);
                    q.set(i, j, cur - 2.0 * v[i - k] * proj);
                }
            }
        }
    }
    for k in 0..d {
        if r.get(k, k) < 0.0 {
            for j in k..d {
                let cur = r.get(k, j);
                r.set(k, j, -cur);
            }
            for i in 0..n {
                let cur = q.get(i, k);
                q.set(i, k, -cur);
            }
        }
        let pivot = r.get(k, k);
        if !(pivot > tol) {
            return Err(Error::RankDeficient { col: k, pivot });
        }
    }
    Ok(ThinQr { q, r })
}
