//! Dense real matrices and the deterministic kernels built on them:
//! orthonormal bases, SVD, rank-r truncation, pseudoinverse and norms.
//!
//! Storage is a column-major [`faer::Mat`]; the row-major layout only matters
//! for constructors taking flat data and for the CSV format in [`crate::io`].

use std::ops::{Add, Mul, Sub};

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Machine epsilon used by every rank cutoff.
pub const EPS: f64 = f64::EPSILON;

/// Relative tolerance and iteration cap of the power-iteration spectral norm.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Singular values at or below this are treated as zero.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * EPS * sigma_max
}

/// A dense real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    inner: Mat<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self {
            inner: Mat::from_fn(rows, cols, |i, j| data[i * cols + j]),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: Mat::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Mat::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            inner: Mat::from_fn(rows, cols, f),
        }
    }

    /// Square diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        Self::rect_diag(diag.len(), diag.len(), diag)
    }

    /// `rows x cols` matrix with `diag` on its main diagonal.
    pub fn rect_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        assert!(diag.len() <= rows.min(cols));
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate() {
            m.inner[(i, i)] = d;
        }
        m
    }

    /// i.i.d. standard normal entries from stream 0 of `seed`.
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self::from_fn(rows, cols, |i, j| data[i * cols + j])
    }

    pub fn from_faer(inner: Mat<f64>) -> Self {
        Self { inner }
    }

    pub fn into_faer(self) -> Mat<f64> {
        self.inner
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.inner.as_ref()
    }

    pub fn as_mut(&mut self) -> faer::MatMut<'_, f64> {
        self.inner.as_mut()
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.inner[(i, j)] = value;
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose().to_owned(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_fn(self.rows(), self.cols(), |i, j| factor * self.inner[(i, j)])
    }

    /// Columns `start..start + count`.
    pub fn columns(&self, start: usize, count: usize) -> Self {
        Self {
            inner: self.inner.as_ref().subcols(start, count).to_owned(),
        }
    }

    /// Rows `start..start + count`.
    pub fn row_block(&self, start: usize, count: usize) -> Self {
        Self {
            inner: self.inner.as_ref().subrows(start, count).to_owned(),
        }
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm_l2()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        (&self.inner - &other.inner).norm_max()
    }

    /// Position of the first non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                if !self.inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_faer(&self.inner * &rhs.inner)
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_faer(&self.inner + &rhs.inner)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_faer(&self.inner - &rhs.inner)
    }
}

/// Economy SVD `A = U diag(S) Vᵀ` with `S` non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Leading `r` triplets.
    pub fn leading(&self, r: usize) -> Result<SvdFactors> {
        if r == 0 || r > self.len() {
            return Err(Error::InvalidParameter(format!(
                "truncation rank {r} outside 1..={}",
                self.len()
            )));
        }
        Ok(SvdFactors {
            u: self.u.columns(0, r),
            s: self.s[..r].to_vec(),
            v: self.v.columns(0, r),
        })
    }

    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = scale_columns(self.u.as_ref(), &self.s);
        DenseMatrix::from_faer(us * self.v.as_ref().transpose())
    }

    /// Number of singular values above the standard cutoff.
    pub fn numerical_rank(&self) -> usize {
        let s0 = self.s.first().copied().unwrap_or(0.0);
        let tol = rank_cutoff(self.u.rows(), self.v.rows(), s0);
        self.s.iter().take_while(|&&x| x > tol && x > 0.0).count()
    }
}

pub(crate) fn scale_columns(a: MatRef<'_, f64>, d: &[f64]) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// Orthonormal basis of `range(A)`, trimmed to the numerical rank, via
/// column-pivoted QR.
pub fn orth(a: &DenseMatrix) -> Result<DenseMatrix> {
    orth_ref(a.as_ref())
}

pub(crate) fn orth_ref(a: MatRef<'_, f64>) -> Result<DenseMatrix> {
    orth_keep(a, 0)
}

/// As `orth_ref`, but keeps at least `keep` columns of the QR factor even when
/// the trailing ones are below the numerical rank.
pub(crate) fn orth_keep(a: MatRef<'_, f64>, keep: usize) -> Result<DenseMatrix> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Err(Error::ZeroRange);
    }
    let qr = a.col_piv_qr();
    let r = qr.R();
    let k = m.min(n);
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 || !r00.is_finite() {
        return Err(Error::ZeroRange);
    }
    let tol = rank_cutoff(m, n, r00);
    let rank = (0..k)
        .take_while(|&i| r[(i, i)].abs() > tol)
        .count()
        .max(keep.min(k));
    let q = qr.compute_thin_Q();
    Ok(DenseMatrix::from_faer(
        q.as_ref().subcols(0, rank).to_owned(),
    ))
}

/// Economy SVD with the sign convention: the largest-magnitude entry of every
/// column of `U` is nonnegative (ties go to the lowest row index).
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    svd_ref(a.as_ref())
}

pub(crate) fn svd_ref(a: MatRef<'_, f64>) -> Result<SvdFactors> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("svd of an empty matrix".into()));
    }
    let r = m.min(n);
    let decomposition = a.thin_svd().map_err(|_| Error::NoConvergence {
        // the bidiagonal QR sweep budget of the backend
        iterations: 32 * r * r,
    })?;
    let mut u = decomposition.U().to_owned();
    let mut v = decomposition.V().to_owned();
    let s: Vec<f64> = (0..r).map(|i| decomposition.S()[i]).collect();
    for j in 0..r {
        let mut best = 0;
        for i in 1..m {
            if u[(i, j)].abs() > u[(best, j)].abs() {
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..m {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..n {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
    Ok(SvdFactors {
        u: DenseMatrix::from_faer(u),
        s,
        v: DenseMatrix::from_faer(v),
    })
}

/// Best rank-`r` approximation `Σ_{i≤r} σᵢ uᵢ vᵢᵀ`.
pub fn truncate(f: &SvdFactors, r: usize) -> Result<DenseMatrix> {
    Ok(f.leading(r)?.reconstruct())
}

/// Moore-Penrose pseudoinverse `V Σ† Uᵀ`; reciprocals only above
/// `max(rows, cols) · eps · σ₁`.
pub fn pinv(a: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(a)?;
    let tol = rank_cutoff(a.rows(), a.cols(), f.s[0]);
    let inv: Vec<f64> =
        f.s.iter()
            .map(|&x| if x > tol { 1.0 / x } else { 0.0 })
            .collect();
    let vs = scale_columns(f.v.as_ref(), &inv);
    Ok(DenseMatrix::from_faer(vs * f.u.as_ref().transpose()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub spectral: f64,
    pub frobenius: f64,
}

/// Spectral norm (power iteration on `AᵀA`) and Frobenius norm.
pub fn norms(a: &DenseMatrix) -> Result<Norms> {
    Ok(Norms {
        spectral: spectral_norm_ref(a.as_ref())?,
        frobenius: a.frobenius_norm(),
    })
}

pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    spectral_norm_ref(a.as_ref())
}

pub(crate) fn spectral_norm_ref(a: MatRef<'_, f64>) -> Result<f64> {
    if a.norm_max() == 0.0 {
        return Ok(0.0);
    }
    spectral_norm_op(a.ncols(), |v| a * v, |w| a.transpose() * w)
}

/// Power iteration on `AᵀA` for an operator given only through its products
/// with `A` and `Aᵀ`.
pub(crate) fn spectral_norm_op(
    cols: usize,
    apply: impl Fn(&Mat<f64>) -> Mat<f64>,
    apply_t: impl Fn(&Mat<f64>) -> Mat<f64>,
) -> Result<f64> {
    // fixed start vector so the norm is a deterministic function of A
    let mut rng = stream_rng(0x5eed_0f_a0e4, 0);
    let mut v = Mat::<f64>::from_fn(cols, 1, |_, _| StandardNormal.sample(&mut rng));
    let nv = v.norm_l2();
    v /= faer::Scale(nv);
    let mut theta_prev = 0.0_f64;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v);
        let theta = w.squared_norm_l2();
        let z = apply_t(&w);
        let nz = z.norm_l2();
        if nz == 0.0 {
            return Ok(theta.sqrt());
        }
        if (theta - theta_prev).abs() <= POWER_TOL * theta {
            return Ok(theta.sqrt());
        }
        theta_prev = theta;
        v = z / faer::Scale(nz);
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}
