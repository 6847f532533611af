//! Perturbation and robustness bounds for the realization algorithms, and the
//! error metrics used to score a realized model.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::hankel::{build_hankel, HankelPair, MarkovParams};
use crate::matcore::{
    spectral_norm, spectral_norm_op, spectral_norm_ref, svd, svd_ref, truncate, DenseMatrix,
    SvdFactors,
};
use crate::realize::{RealizationResult, StateSpace};

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DenseMatrix) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} is not square",
            a.shape()
        )));
    }
    let eig = a.as_ref().eigenvalues().map_err(|_| Error::NoConvergence {
        iterations: 30 * a.rows().max(10),
    })?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Neumaier-compensated mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Measured Hankel perturbations next to the deterministic bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    pub gnorm: f64,
    /// `sqrt(min(T1, T2+1))·‖G−Ĝ‖`
    pub h_bound: f64,
    /// `2·sqrt(min(T1, T2))·‖G−Ĝ‖`
    pub l_bound: f64,
    pub h_err: f64,
    pub hplus_err: f64,
    pub hminus_err: f64,
    /// `‖L − L̂‖`, both rank-`n` truncations by full SVD.
    pub l_err: f64,
}

impl Lemma1Report {
    pub fn holds(&self, slack: f64) -> bool {
        let tol = |b: f64| b * (1.0 + slack) + slack;
        self.hplus_err <= tol(self.h_err)
            && self.hminus_err <= tol(self.h_err)
            && self.h_err <= tol(self.h_bound)
            && self.l_err <= tol(2.0 * self.hminus_err)
            && self.l_err <= tol(self.l_bound)
    }
}

pub fn lemma1_bounds(
    g: &MarkovParams,
    g_hat: &MarkovParams,
    n: usize,
    t1: usize,
    t2: usize,
) -> Result<Lemma1Report> {
    let gnorm = g.distance(g_hat)?;
    let h = build_hankel(g, t1, t2)?;
    let h_hat = build_hankel(g_hat, t1, t2)?;
    let diff = h.h() - h_hat.h();
    let h_err = spectral_norm(&diff)?;
    let (rows, cols) = h.hminus_dims();
    let hminus_err = spectral_norm_ref(diff.as_ref().subcols(0, cols))?;
    let hplus_err = spectral_norm_ref(diff.as_ref().subcols(diff.cols() - cols, cols))?;
    if n == 0 || n > rows.min(cols) {
        return Err(Error::InvalidParameter(format!(
            "order {n} for a {rows}x{cols} Hankel"
        )));
    }
    let l = truncate(&svd(&h.hminus())?, n)?;
    let l_hat = truncate(&svd(&h_hat.hminus())?, n)?;
    let l_err = spectral_norm(&(&l - &l_hat))?;
    Ok(Lemma1Report {
        gnorm,
        h_bound: (t1.min(t2 + 1) as f64).sqrt() * gnorm,
        l_bound: 2.0 * (t1.min(t2) as f64).sqrt() * gnorm,
        h_err,
        hplus_err,
        hminus_err,
        l_err,
    })
}

/// Every evaluated constant and bound for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub l: usize,
    pub q: usize,
    pub p: usize,
    pub m: usize,
    pub t1: usize,
    pub t2: usize,
    pub c1: f64,
    pub c2: f64,
    pub gnorm: f64,
    pub lemma1_h: f64,
    pub lemma1_l: f64,
    /// Average bound, Gaussian test matrix, no power scheme.
    pub avg_bound: f64,
    /// Average bound with `q` power iterations.
    pub avg_bound_power: f64,
    /// Deviation bound failing with probability at most `3e^{−l}`; needs `l ≥ 4`.
    pub dev_bound_el: Option<f64>,
    /// Deviation bound failing with probability at most `3l^{−l}`.
    pub dev_bound_ll: f64,
    pub srft_bound: f64,
    /// Whether `l + n` meets the SRFT sample-size requirement.
    pub srft_sample_ok: bool,
    pub c3: Option<f64>,
    pub thm5_bc_bound: Option<f64>,
    pub thm5_a_bound: Option<f64>,
}

pub fn stochastic_bounds(
    n: usize,
    l: usize,
    q: usize,
    p: usize,
    m: usize,
    t1: usize,
    t2: usize,
    gnorm: f64,
) -> Result<BoundReport> {
    if n == 0 || l < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n ≥ 1 and l ≥ 2, got n = {n}, l = {l}"
        )));
    }
    if t1 == 0 || t2 == 0 {
        return Err(Error::InvalidParameter("T1 and T2 must be positive".into()));
    }
    let small = (p * t1).min(m * t2);
    if n + l > small {
        return Err(Error::InvalidParameter(format!(
            "n + l = {} exceeds min(pT1, mT2) = {small}",
            n + l
        )));
    }
    if !(gnorm >= 0.0) || !gnorm.is_finite() {
        return Err(Error::InvalidParameter(format!("‖G−Ĝ‖ = {gnorm}")));
    }
    let (nf, lf) = (n as f64, l as f64);
    let c1 = ((small - n) as f64).sqrt();
    let c2 = (t1.min(t2) as f64).sqrt();
    let root_nl = (nf + lf).sqrt();
    let a = (nf / (lf - 1.0)).sqrt();
    let b = E * root_nl / lf * c1;
    let avg_bound = 2.0 * c2 * (2.0 + a + b) * gnorm;
    let bracket = 1.0 + 0.5 * a + 0.5 * b;
    let avg_bound_power = 4.0 * c2 * bracket.powf(1.0 / (2 * q + 1) as f64) * gnorm;
    let dev_bound_el = (l >= 4).then(|| {
        2.0 * c2
            * (2.0 + 16.0 * (1.0 + nf / (lf - 1.0)).sqrt() + 8.0 * root_nl / (lf + 1.0) * c1)
            * gnorm
    });
    let dev_bound_ll =
        c2 * (2.0 + 6.0 * ((nf + lf) * lf * lf.ln()).sqrt() + 3.0 * root_nl * c1) * gnorm;
    let wide = (m * t2) as f64;
    let srft_bound = (1.0 + (1.0 + 7.0 * wide / (lf + nf)).sqrt()) * 2.0 * c2 * gnorm;
    let need = 4.0 * (nf.sqrt() + (8.0 * (nf * wide).ln()).sqrt()).powi(2) * nf.ln();
    Ok(BoundReport {
        n,
        l,
        q,
        p,
        m,
        t1,
        t2,
        c1,
        c2,
        gnorm,
        lemma1_h: (t1.min(t2 + 1) as f64).sqrt() * gnorm,
        lemma1_l: 2.0 * c2 * gnorm,
        avg_bound,
        avg_bound_power,
        dev_bound_el,
        dev_bound_ll,
        srft_bound,
        srft_sample_ok: need <= nf + lf && nf + lf <= wide,
        c3: None,
        thm5_bc_bound: None,
        thm5_a_bound: None,
    })
}

impl BoundReport {
    /// Fills in the robustness bounds from `σ_min(L)`, `‖H⁺‖`, `‖H⁺−Ĥ⁺‖` and
    /// the (mean) measured `‖L − L̃‖`.
    pub fn with_robustness(
        mut self,
        sigma_min: f64,
        hplus_norm: f64,
        hplus_err: f64,
        l_err: f64,
    ) -> Self {
        let t = RobustnessTerms::new(self.n, sigma_min, hplus_norm, hplus_err);
        self.c3 = Some(t.c3());
        self.thm5_bc_bound = Some(t.bc_bound(l_err));
        self.thm5_a_bound = Some(t.a_bound(l_err));
        self
    }

    /// Flat `key=value` lines; absent bounds print as `na`.
    pub fn to_key_value(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "na".to_string(), |v| format!("{v:.16e}"));
        let mut s = String::new();
        for (k, v) in [
            ("n", self.n),
            ("l", self.l),
            ("q", self.q),
            ("p", self.p),
            ("m", self.m),
            ("T1", self.t1),
            ("T2", self.t2),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        for (k, v) in [
            ("C1", self.c1),
            ("C2", self.c2),
            ("gnorm", self.gnorm),
            ("lemma1_H", self.lemma1_h),
            ("lemma1_L", self.lemma1_l),
            ("avg_bound", self.avg_bound),
            ("avg_bound_power", self.avg_bound_power),
        ] {
            let _ = writeln!(s, "{k}={v:.16e}");
        }
        let _ = writeln!(s, "dev_bound_el={}", opt(self.dev_bound_el));
        let _ = writeln!(s, "dev_bound_ll={:.16e}", self.dev_bound_ll);
        let _ = writeln!(s, "srft_bound={:.16e}", self.srft_bound);
        let _ = writeln!(s, "srft_sample_ok={}", self.srft_sample_ok);
        let _ = writeln!(s, "C3={}", opt(self.c3));
        let _ = writeln!(s, "thm5_BC_bound={}", opt(self.thm5_bc_bound));
        let _ = writeln!(s, "thm5_A_bound={}", opt(self.thm5_a_bound));
        s
    }
}

#[derive(Clone, Copy, Debug)]
struct RobustnessTerms {
    n: usize,
    sigma_min: f64,
    hplus_norm: f64,
    hplus_err: f64,
}

impl RobustnessTerms {
    fn new(n: usize, sigma_min: f64, hplus_norm: f64, hplus_err: f64) -> Self {
        Self {
            n,
            sigma_min,
            hplus_norm,
            hplus_err,
        }
    }

    fn c3(&self) -> f64 {
        14.0 * (self.n as f64).sqrt() / self.sigma_min
    }

    fn bc_bound(&self, l_err: f64) -> f64 {
        (5.0 * self.n as f64 * l_err).sqrt()
    }

    fn a_bound(&self, l_err: f64) -> f64 {
        self.c3()
            * ((l_err / self.sigma_min).sqrt() * (self.hplus_norm + self.hplus_err)
                + self.hplus_err)
    }
}

/// Orthogonal `S` minimizing `‖X − Y·S‖_F`.
pub fn align_unitary(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let cross = &y.transpose() * x;
    let f = svd(&cross)?;
    if f.s[0] == 0.0 {
        return Err(Error::ZeroRange);
    }
    Ok(DenseMatrix::from_faer(
        f.u.as_ref() * f.v.as_ref().transpose(),
    ))
}

/// Left-hand sides and right-hand sides of the robustness inequalities for
/// one realization against the truth, after alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Thm5Detail {
    pub n: usize,
    pub sigma_min: f64,
    /// Measured `‖L − L̃‖`.
    pub l_err: f64,
    pub hplus_norm: f64,
    pub hplus_err: f64,
    pub c_err: f64,
    pub o_err: f64,
    pub b_err: f64,
    pub q_err: f64,
    pub a_err: f64,
    pub c3: f64,
    pub bc_bound: f64,
    pub a_bound: f64,
}

impl Thm5Detail {
    pub fn bc_holds(&self) -> bool {
        let tol = 1e-12 * (1.0 + self.o_err.max(self.q_err));
        self.c_err <= self.o_err + tol
            && self.b_err <= self.q_err + tol
            && self.o_err <= self.bc_bound + tol
            && self.q_err <= self.bc_bound + tol
    }

    pub fn a_holds(&self) -> bool {
        self.a_err <= self.a_bound + 1e-12 * (1.0 + self.a_err)
    }

    pub fn holds(&self) -> bool {
        self.bc_holds() && self.a_holds()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Thm5Outcome {
    /// `‖L − L̃‖ > σ_min(L)/2`: the inequalities make no claim.
    NotApplicable {
        l_err: f64,
        sigma_min: f64,
    },
    Checked(Thm5Detail),
}

impl Thm5Outcome {
    pub fn detail(&self) -> Option<&Thm5Detail> {
        match self {
            Thm5Outcome::Checked(d) => Some(d),
            Thm5Outcome::NotApplicable { .. } => None,
        }
    }
}

/// Per-trial robustness check of `est` (from `Ĝ`) against `truth` (from `G`),
/// with a single orthogonal `S` obtained by Procrustes on the stacked factors
/// `[O; Qᵀ]` and `[Õ; Q̃ᵀ]`.
pub fn thm5_check(
    truth: &RealizationResult,
    est: &RealizationResult,
    truth_pair: &HankelPair,
    est_pair: &HankelPair,
) -> Result<Thm5Outcome> {
    let n = truth.order();
    if est.order() != n || truth.o.shape() != est.o.shape() || truth.q.shape() != est.q.shape() {
        return Err(Error::DimensionMismatch(
            "realizations differ in shape".into(),
        ));
    }
    let sigma_min = truth.l.s[n - 1];
    let l_err = spectral_norm(&(&truth.l_dense() - &est.l_dense()))?;
    if !(l_err <= sigma_min / 2.0) {
        return Ok(Thm5Outcome::NotApplicable { l_err, sigma_min });
    }
    let stack = |r: &RealizationResult| {
        let (rows, cols) = (r.o.rows(), r.q.cols());
        DenseMatrix::from_fn(rows + cols, n, |i, j| {
            if i < rows {
                r.o.get(i, j)
            } else {
                r.q.get(j, i - rows)
            }
        })
    };
    let s = align_unitary(&stack(truth), &stack(est))?;
    let st = s.transpose();
    let fro = |a: &DenseMatrix, b: &DenseMatrix| (a - b).frobenius_norm();

    let hplus_norm = spectral_norm_ref(truth_pair.hplus_view())?;
    let hplus_err = spectral_norm(&(&truth_pair.hplus() - &est_pair.hplus()))?;
    let terms = RobustnessTerms::new(n, sigma_min, hplus_norm, hplus_err);
    Ok(Thm5Outcome::Checked(Thm5Detail {
        n,
        sigma_min,
        l_err,
        hplus_norm,
        hplus_err,
        c_err: fro(&truth.ss.c, &(&est.ss.c * &s)),
        o_err: fro(&truth.o, &(&est.o * &s)),
        b_err: fro(&truth.ss.b, &(&st * &est.ss.b)),
        q_err: fro(&truth.q, &(&st * &est.q)),
        a_err: fro(&truth.ss.a, &(&(&st * &est.ss.a) * &s)),
        c3: terms.c3(),
        bc_bound: terms.bc_bound(l_err),
        a_bound: terms.a_bound(l_err),
    }))
}

/// Robustness inequalities in expectation over a set of checked trials.
#[derive(Clone, Debug, PartialEq)]
pub struct Thm5Mean {
    pub trials: usize,
    pub mean_l_err: f64,
    pub applicable: bool,
    pub mean_c_err: f64,
    pub mean_o_err: f64,
    pub mean_b_err: f64,
    pub mean_q_err: f64,
    pub mean_a_err: f64,
    /// `E sqrt(5n‖L − L̃‖)`
    pub bc_bound_mean_of_sqrt: f64,
    /// `sqrt(5n E‖L − L̃‖)`
    pub bc_bound_sqrt_of_mean: f64,
    pub a_bound: f64,
}

impl Thm5Mean {
    pub fn holds(&self) -> bool {
        let tol = |x: f64| x * (1.0 + 1e-12) + 1e-15;
        let bc = self.bc_bound_mean_of_sqrt.min(self.bc_bound_sqrt_of_mean);
        self.applicable
            && self.mean_c_err <= tol(self.mean_o_err)
            && self.mean_b_err <= tol(self.mean_q_err)
            && self.mean_o_err <= tol(bc)
            && self.mean_q_err <= tol(bc)
            && self.mean_a_err <= tol(self.a_bound)
    }
}

pub fn thm5_mean(details: &[Thm5Detail]) -> Result<Thm5Mean> {
    let first = details
        .first()
        .ok_or_else(|| Error::InvalidParameter("no checked trials".into()))?;
    let mean =
        |f: &dyn Fn(&Thm5Detail) -> f64| mean_stderr(&details.iter().map(f).collect::<Vec<_>>()).0;
    let mean_l_err = mean(&|d| d.l_err);
    // ‖H⁺‖, ‖H⁺−Ĥ⁺‖ and σ_min(L) are shared by every trial on the same Ĝ
    let terms = RobustnessTerms::new(first.n, first.sigma_min, first.hplus_norm, first.hplus_err);
    Ok(Thm5Mean {
        trials: details.len(),
        mean_l_err,
        applicable: mean_l_err <= first.sigma_min / 2.0,
        mean_c_err: mean(&|d| d.c_err),
        mean_o_err: mean(&|d| d.o_err),
        mean_b_err: mean(&|d| d.b_err),
        mean_q_err: mean(&|d| d.q_err),
        mean_a_err: mean(&|d| d.a_err),
        bc_bound_mean_of_sqrt: mean(&|d| d.bc_bound),
        bc_bound_sqrt_of_mean: terms.bc_bound(mean_l_err),
        a_bound: terms.a_bound(mean_l_err),
    })
}

/// `G(z) = C(zI − A)⁻¹B + D` at one point of the complex plane.
pub fn transfer_at(ss: &StateSpace, z: c64) -> Mat<c64> {
    let n = ss.order();
    let a = ss.a.as_ref();
    let shifted = Mat::<c64>::from_fn(n, n, |i, j| {
        let v = c64::new(-a[(i, j)], 0.0);
        if i == j {
            v + z
        } else {
            v
        }
    });
    let b = Mat::<c64>::from_fn(n, ss.inputs(), |i, j| c64::new(ss.b.get(i, j), 0.0));
    let x = shifted.partial_piv_lu().solve(&b);
    let c = Mat::<c64>::from_fn(ss.outputs(), n, |i, j| c64::new(ss.c.get(i, j), 0.0));
    let mut g = c * x;
    for i in 0..ss.outputs() {
        for j in 0..ss.inputs() {
            g[(i, j)] += c64::new(ss.d.get(i, j), 0.0);
        }
    }
    g
}

fn sigma_max(g: &Mat<c64>) -> Result<f64> {
    let s = g.singular_values().map_err(|_| Error::NoConvergence {
        iterations: 32 * g.nrows().min(g.ncols()).pow(2),
    })?;
    Ok(s.first().copied().unwrap_or(0.0))
}

fn require_stable(ss: &StateSpace) -> Result<()> {
    let radius = spectral_radius(&ss.a)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    Ok(())
}

/// Points `e^{iθ}`, `θ = 2πk/N`, with `0 ≤ θ ≤ π`; for real systems the lower
/// half of the circle mirrors the upper one.
fn half_circle(grid: usize) -> impl Iterator<Item = c64> {
    (0..=grid / 2).map(move |k| c64::from_polar(1.0, 2.0 * PI * k as f64 / grid as f64))
}

/// Grid estimate of `max_z σ₁(G(z))` over the unit circle.
pub fn hinf_norm(ss: &StateSpace, grid: usize) -> Result<f64> {
    ss.validate()?;
    require_stable(ss)?;
    let mut best = 0.0f64;
    for z in half_circle(grid) {
        best = best.max(sigma_max(&transfer_at(ss, z))?);
    }
    Ok(best)
}

/// Normalized H∞ error `max σ₁(Ĝ(z) − G(z)) / max σ₁(G(z))` on an `N`-point
/// unit-circle grid.
pub fn hinf_error(truth: &StateSpace, est: &StateSpace, grid: usize) -> Result<f64> {
    if grid < 64 {
        return Err(Error::InvalidParameter(format!(
            "grid of {grid} points (need ≥ 64)"
        )));
    }
    truth.validate()?;
    est.validate()?;
    if (truth.outputs(), truth.inputs()) != (est.outputs(), est.inputs()) {
        return Err(Error::DimensionMismatch(
            "systems differ in inputs or outputs".into(),
        ));
    }
    require_stable(truth)?;
    require_stable(est)?;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for z in half_circle(grid) {
        let g = transfer_at(truth, z);
        let g_hat = transfer_at(est, z);
        den = den.max(sigma_max(&g)?);
        num = num.max(sigma_max(&(&g_hat - &g))?);
    }
    if den == 0.0 {
        return if num == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::InvalidParameter(
                "reference transfer function is zero".into(),
            ))
        };
    }
    Ok(num / den)
}

/// `‖L − L̃‖` and its triangle split `‖H⁻ − Ĥ⁻‖ + ‖Ĥ⁻ − L̃‖`, with `L` the
/// rank-`n` truncation of the true `H⁻`.
pub fn l_error_split(
    truth_pair: &HankelPair,
    est_pair: &HankelPair,
    est: &RealizationResult,
) -> Result<(f64, f64)> {
    let n = est.order();
    let l = truncate(&svd_ref(truth_pair.hminus_view())?, n)?;
    let l_tilde = est.l_dense();
    let err = spectral_norm(&(&l - &l_tilde))?;
    let hm = truth_pair.hminus();
    let hm_hat = est_pair.hminus();
    let split = spectral_norm(&(&hm - &hm_hat))? + spectral_norm(&(&hm_hat - &l_tilde))?;
    Ok((err, split))
}

/// `‖A − U·diag(S)·Vᵀ‖` without forming the low-rank product.
pub fn lowrank_residual_norm(a: faer::MatRef<'_, f64>, f: &SvdFactors) -> Result<f64> {
    if (a.nrows(), a.ncols()) != (f.u.rows(), f.v.rows()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix vs {}x{} factors",
            a.nrows(),
            a.ncols(),
            f.u.rows(),
            f.v.rows()
        )));
    }
    let (u, v) = (f.u.as_ref(), f.v.as_ref());
    let scale = |x: Mat<f64>| Mat::from_fn(x.nrows(), 1, |i, _| f.s[i] * x[(i, 0)]);
    spectral_norm_op(
        a.ncols(),
        |x| a * x - u * scale(v.transpose() * x),
        |y| a.transpose() * y - v * scale(u.transpose() * y),
    )
}
