//! Randomized range finding and approximate SVD.
//!
//! The sample stage draws `Y = A Ω` with a Gaussian or SRFT test matrix, the
//! power scheme replaces `A` by `(AAᵀ)^q A` through alternating products with
//! `Aᵀ` and `A`, and the basis `P = orth(Y)` is used to factor the small
//! matrix `PᵀA`.
//!
//! SRFT samples are complex. The basis returned is that of the real matrix
//! `[Re(AΩ) | Im(AΩ)]`, whose span contains every real combination of the
//! complex samples, so its projection residual never exceeds the complex one.

use std::f64::consts::{E, PI};

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::matcore::{orth_keep, svd_ref, DenseMatrix, SvdFactors};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestMatrixKind {
    Gaussian,
    Srft,
}

impl std::str::FromStr for TestMatrixKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(TestMatrixKind::Gaussian),
            "srft" => Ok(TestMatrixKind::Srft),
            other => Err(Error::InvalidParameter(format!(
                "unknown test matrix `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for TestMatrixKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMatrixKind::Gaussian => "gaussian",
            TestMatrixKind::Srft => "srft",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsvdConfig {
    pub target_rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub test_matrix: TestMatrixKind,
    pub seed: u64,
    /// Re-orthonormalize after every half-step of the power scheme (q ≥ 2).
    pub stabilized: bool,
}

impl RsvdConfig {
    pub fn new(target_rank: usize, oversampling: usize) -> Self {
        Self {
            target_rank,
            oversampling,
            power_iters: 0,
            test_matrix: TestMatrixKind::Gaussian,
            seed: 0,
            stabilized: false,
        }
    }

    pub fn power(mut self, q: usize) -> Self {
        self.power_iters = q;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn test_matrix(mut self, kind: TestMatrixKind) -> Self {
        self.test_matrix = kind;
        self
    }

    pub fn stabilized(mut self, on: bool) -> Self {
        self.stabilized = on;
        self
    }

    pub fn samples(&self) -> usize {
        self.target_rank + self.oversampling
    }

    /// Checks the configuration against an `rows x cols` target.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.target_rank == 0 {
            return Err(Error::InvalidParameter(
                "target rank must be positive".into(),
            ));
        }
        if self.oversampling == 0 {
            return Err(Error::InvalidParameter(
                "oversampling must be at least 1".into(),
            ));
        }
        if self.samples() > rows.min(cols) {
            return Err(Error::InvalidParameter(format!(
                "k + l = {} exceeds min(rows, cols) = {}",
                self.samples(),
                rows.min(cols)
            )));
        }
        Ok(())
    }
}

/// Gaussian test matrix; column `j` is drawn from stream `j` of `seed`.
pub fn gaussian_test_matrix(n: usize, w: usize, seed: u64) -> DenseMatrix {
    let mut omega = Mat::<f64>::zeros(n, w);
    for j in 0..w {
        let mut rng = stream_rng(seed, j as u64);
        for i in 0..n {
            omega[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    DenseMatrix::from_faer(omega)
}

/// The random ingredients of `sqrt(n/w) D F R`.
#[derive(Clone, Debug)]
pub struct Srft {
    n: usize,
    /// Unit-modulus diagonal of `D`.
    diag: Vec<Complex64>,
    /// Sampled DFT columns (the action of `R`).
    coords: Vec<usize>,
}

impl Srft {
    pub fn new(n: usize, w: usize, seed: u64) -> Result<Self> {
        if w == 0 || w > n {
            return Err(Error::InvalidParameter(format!(
                "SRFT needs 1 <= w <= n, got w = {w}, n = {n}"
            )));
        }
        let mut rng = stream_rng(seed, 0);
        let diag = (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        let mut rng = stream_rng(seed, 1);
        let coords = rand::seq::index::sample(&mut rng, n, w).into_vec();
        Ok(Self { n, diag, coords })
    }

    pub fn width(&self) -> usize {
        self.coords.len()
    }

    /// Entry `(p, c)` of the complex `n x w` matrix.
    pub fn entry(&self, p: usize, c: usize) -> Complex64 {
        let n = self.n as f64;
        let scale = (n / self.width() as f64).sqrt() / n.sqrt();
        let phase = -2.0 * PI * ((p * self.coords[c]) % self.n) as f64 / n;
        self.diag[p] * Complex64::from_polar(scale, phase)
    }

    /// The complex matrix as `(Re, Im)`.
    pub fn materialize(&self) -> (DenseMatrix, DenseMatrix) {
        let (n, w) = (self.n, self.width());
        let mut re = Mat::<f64>::zeros(n, w);
        let mut im = Mat::<f64>::zeros(n, w);
        for c in 0..w {
            for p in 0..n {
                let z = self.entry(p, c);
                re[(p, c)] = z.re;
                im[(p, c)] = z.im;
            }
        }
        (DenseMatrix::from_faer(re), DenseMatrix::from_faer(im))
    }

    /// `A Ω` via one length-`n` FFT per row of `A`, returned as `(Re, Im)`.
    pub fn apply(&self, a: MatRef<'_, f64>) -> (Mat<f64>, Mat<f64>) {
        assert_eq!(a.ncols(), self.n);
        let (m, n, w) = (a.nrows(), self.n, self.width());
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let scale = 1.0 / (w as f64).sqrt();
        let mut re = Mat::<f64>::zeros(m, w);
        let mut im = Mat::<f64>::zeros(m, w);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..m {
            for (p, slot) in buf.iter_mut().enumerate() {
                *slot = self.diag[p] * a[(i, p)];
            }
            fft.process(&mut buf);
            for (c, &q) in self.coords.iter().enumerate() {
                re[(i, c)] = scale * buf[q].re;
                im[(i, c)] = scale * buf[q].im;
            }
        }
        (re, im)
    }
}

/// Test matrix of the requested kind. SRFT is returned as the real
/// `n x 2w` matrix `[Re | Im]`.
pub fn test_matrix(n: usize, w: usize, kind: TestMatrixKind, seed: u64) -> Result<DenseMatrix> {
    match kind {
        TestMatrixKind::Gaussian => Ok(gaussian_test_matrix(n, w, seed)),
        TestMatrixKind::Srft => {
            let (re, im) = Srft::new(n, w, seed)?.materialize();
            Ok(DenseMatrix::from_faer(hstack(re.as_ref(), im.as_ref())))
        }
    }
}

fn hstack(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let (m, ka) = (a.nrows(), a.ncols());
    Mat::from_fn(m, ka + b.ncols(), |i, j| {
        if j < ka {
            a[(i, j)]
        } else {
            b[(i, j - ka)]
        }
    })
}

/// The sample matrix `(AAᵀ)^q A Ω` before orthonormalization.
pub(crate) fn sample(a: MatRef<'_, f64>, cfg: &RsvdConfig) -> Result<Mat<f64>> {
    let w = cfg.samples();
    let mut y = match cfg.test_matrix {
        TestMatrixKind::Gaussian => a * gaussian_test_matrix(a.ncols(), w, cfg.seed).as_ref(),
        TestMatrixKind::Srft => {
            let (re, im) = Srft::new(a.ncols(), w, cfg.seed)?.apply(a);
            hstack(re.as_ref(), im.as_ref())
        }
    };
    let stabilize = cfg.stabilized && cfg.power_iters >= 2;
    for _ in 0..cfg.power_iters {
        let mut z = a.transpose() * &y;
        if stabilize {
            z = orth_keep(z.as_ref(), cfg.target_rank)?.into_faer();
        }
        y = a * &z;
        if stabilize {
            y = orth_keep(y.as_ref(), cfg.target_rank)?.into_faer();
        }
    }
    Ok(y)
}

/// Orthonormal `P` with `A ≈ PPᵀA`, from `orth((AAᵀ)^q A Ω)`.
pub fn range_finder(a: &DenseMatrix, cfg: &RsvdConfig) -> Result<DenseMatrix> {
    range_finder_ref(a.as_ref(), cfg)
}

pub(crate) fn range_finder_ref(a: MatRef<'_, f64>, cfg: &RsvdConfig) -> Result<DenseMatrix> {
    cfg.validate(a.nrows(), a.ncols())?;
    let y = sample(a, cfg)?;
    // The power scheme raises the sample's dynamic range to the (2q+1)-th
    // power, so directions A itself resolves can sink below the sample's
    // rounding level. Trimming below k would then fail a well-posed problem.
    orth_keep(y.as_ref(), cfg.target_rank)
}

/// Randomized SVD together with the range basis it was computed from.
#[derive(Clone, Debug)]
pub struct RsvdOutput {
    /// Rank-`k` factors.
    pub factors: SvdFactors,
    /// Orthonormal basis `P`.
    pub basis: DenseMatrix,
    /// All singular values of `PᵀA`, before truncation.
    pub sample_spectrum: Vec<f64>,
}

/// Randomized SVD truncated to exactly `k` triplets.
pub fn rsvd(a: &DenseMatrix, cfg: &RsvdConfig) -> Result<SvdFactors> {
    Ok(rsvd_detailed(a.as_ref(), cfg)?.factors)
}

pub fn rsvd_detailed(a: MatRef<'_, f64>, cfg: &RsvdConfig) -> Result<RsvdOutput> {
    let basis = range_finder_ref(a, cfg)?;
    let k = cfg.target_rank;
    if basis.cols() < k {
        return Err(Error::OrderTooHigh(format!(
            "sampled range has numerical rank {} < target rank {k}",
            basis.cols()
        )));
    }
    let m = basis.as_ref().transpose() * a;
    let small = svd_ref(m.as_ref())?;
    let u = basis.as_ref() * small.u.as_ref();
    let full = SvdFactors {
        u: DenseMatrix::from_faer(u),
        s: small.s.clone(),
        v: small.v,
    };
    Ok(RsvdOutput {
        factors: full.leading(k)?,
        basis,
        sample_spectrum: small.s,
    })
}

/// Standard posterior-estimator constant: `P[‖(I−PPᵀ)A‖ > c·max‖(I−PPᵀ)Aω‖]`
/// is at most `10^{-probes}` for `c = 10 sqrt(2/π)`.
pub fn probe_constant() -> f64 {
    10.0 * (2.0 / PI).sqrt()
}

/// Grows an orthonormal basis one Gaussian sample at a time until the probe
/// estimator certifies `‖(I − PPᵀ)A‖ ≤ eps`.
pub fn adaptive_range_finder(
    a: &DenseMatrix,
    eps: f64,
    probes: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    if probes < 5 {
        return Err(Error::InvalidParameter(
            "at least 5 probes are required".into(),
        ));
    }
    let (m, n) = a.shape();
    let limit = m.min(n);
    let threshold = eps / probe_constant();
    let a = a.as_ref();
    let mut next_stream = 0_u64;
    let mut draw = |basis: &[Vec<f64>]| -> Vec<f64> {
        let mut rng = stream_rng(seed, next_stream);
        next_stream += 1;
        let omega = Mat::<f64>::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let y = a * &omega;
        let mut y: Vec<f64> = (0..m).map(|i| y[(i, 0)]).collect();
        project_out(&mut y, basis);
        y
    };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut window: std::collections::VecDeque<Vec<f64>> =
        (0..probes).map(|_| draw(&basis)).collect();
    loop {
        let worst = window.iter().map(|y| norm(y)).fold(0.0, f64::max);
        if worst <= threshold {
            break;
        }
        if basis.len() >= limit {
            return Err(Error::ToleranceUnreachable {
                columns: basis.len(),
            });
        }
        let mut y = window.pop_front().expect("probe window is never empty");
        // second projection pass restores orthogonality lost to rounding
        project_out(&mut y, &basis);
        let ny = norm(&y);
        if ny > 0.0 {
            let q: Vec<f64> = y.iter().map(|x| x / ny).collect();
            for r in window.iter_mut() {
                let c = dot(&q, r);
                r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= c * qi);
            }
            basis.push(q);
        }
        window.push_back(draw(&basis));
    }
    if basis.is_empty() {
        // the zero-column basis certifies; return the best single direction
        let y = window
            .iter()
            .max_by(|x, y| norm(x).total_cmp(&norm(y)))
            .unwrap();
        let ny = norm(y);
        if ny == 0.0 {
            return Err(Error::ZeroRange);
        }
        basis.push(y.iter().map(|x| x / ny).collect());
    }
    Ok(DenseMatrix::from_fn(m, basis.len(), |i, j| basis[j][i]))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(y: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(q, y);
        y.iter_mut().zip(q).for_each(|(yi, qi)| *yi -= c * qi);
    }
}

/// Expected-error bound of the randomized range finder with power scheme:
/// `[1 + sqrt(k/(l−1)) + e·sqrt(k+l)/l · sqrt(min(m,n) − k)]^{1/(2q+1)} σ_{k+1}`.
pub fn thm1_bound(
    k: usize,
    l: usize,
    q: usize,
    m: usize,
    n: usize,
    sigma_next: f64,
) -> Result<f64> {
    if k < 2 || l < 2 || k + l > m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "bound needs k >= 2, l >= 2, k + l <= min(m, n); got k={k}, l={l}, m={m}, n={n}"
        )));
    }
    if !(sigma_next >= 0.0) {
        return Err(Error::InvalidParameter(
            "sigma_next must be nonnegative".into(),
        ));
    }
    let (kf, lf) = (k as f64, l as f64);
    let bracket =
        1.0 + (kf / (lf - 1.0)).sqrt() + E * (kf + lf).sqrt() / lf * ((m.min(n) - k) as f64).sqrt();
    Ok(bracket.powf(1.0 / (2 * q + 1) as f64) * sigma_next)
}

/// Deviation bound of the range finder with an SRFT test matrix:
/// `(1 + sqrt(1 + 7n/(k+l))) σ_{k+1}` for an `m × n` input.
pub fn srft_bound(k: usize, l: usize, m: usize, n: usize, sigma_next: f64) -> Result<f64> {
    if k == 0 || k + l > m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "bound needs 1 <= k, k + l <= min(m, n); got k={k}, l={l}, m={m}, n={n}"
        )));
    }
    if !(sigma_next >= 0.0) {
        return Err(Error::InvalidParameter(
            "sigma_next must be nonnegative".into(),
        ));
    }
    Ok((1.0 + (1.0 + 7.0 * n as f64 / (k + l) as f64).sqrt()) * sigma_next)
}
