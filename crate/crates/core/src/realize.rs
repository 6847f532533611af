//! Ho-Kalman realization, deterministic (full SVD of `Ĥ⁻`) or stochastic
//! (randomized SVD of `Ĥ⁻`).

use std::time::Instant;

use faer::Mat;

use crate::error::{Error, Result};
use crate::hankel::{build_hankel, HankelPair, MarkovParams};
use crate::matcore::{rank_cutoff, scale_columns, svd_ref, DenseMatrix, SvdFactors};
use crate::rsvd::{rsvd_detailed, RsvdConfig};

/// Discrete-time LTI model `x⁺ = Ax + Bu`, `y = Cx + Du`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
}

impl StateSpace {
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, d: DenseMatrix) -> Result<Self> {
        let ss = Self { a, b, c, d };
        ss.validate()?;
        Ok(ss)
    }

    pub fn order(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        let (m, p) = (self.b.cols(), self.c.rows());
        let ok = self.a.cols() == n
            && self.b.rows() == n
            && self.c.cols() == n
            && self.d.shape() == (p, m);
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        for mat in [&self.a, &self.b, &self.c, &self.d] {
            mat.check_finite()?;
        }
        Ok(())
    }

    /// `(T A T⁻¹, T B, C T⁻¹, D)`.
    pub fn transformed(&self, t: &DenseMatrix, t_inv: &DenseMatrix) -> Self {
        Self {
            a: &(t * &self.a) * t_inv,
            b: t * &self.b,
            c: &self.c * t_inv,
            d: self.d.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Deterministic,
    Stochastic,
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeKind::Deterministic => "det",
            ModeKind::Stochastic => "rsvd",
        })
    }
}

/// Which factorization of `Ĥ⁻` to use. The stochastic target rank is always
/// replaced by the requested order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RealizationMode {
    Deterministic,
    Stochastic(RsvdConfig),
}

impl RealizationMode {
    pub fn kind(&self) -> ModeKind {
        match self {
            RealizationMode::Deterministic => ModeKind::Deterministic,
            RealizationMode::Stochastic(_) => ModeKind::Stochastic,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RealizationResult {
    pub ss: StateSpace,
    /// Observability factor `UΣ^{1/2}` (`pT1 x n`).
    pub o: DenseMatrix,
    /// Controllability factor `Σ^{1/2}Vᵀ` (`n x mT2`).
    pub q: DenseMatrix,
    /// The rank-`n` approximant of `Ĥ⁻`, kept in factored form.
    pub l: SvdFactors,
    pub mode: ModeKind,
    /// Wall seconds spent in the factorization of `Ĥ⁻`.
    pub timing: f64,
    pub t1: usize,
    pub t2: usize,
    /// Singular values computed for `Ĥ⁻`: the full spectrum in deterministic
    /// mode, those of `PᵀĤ⁻` in stochastic mode.
    pub spectrum: Vec<f64>,
}

impl RealizationResult {
    pub fn order(&self) -> usize {
        self.l.len()
    }

    pub fn l_dense(&self) -> DenseMatrix {
        self.l.reconstruct()
    }
}

/// Runs the Ho-Kalman algorithm on `g` for order `n` and split `(t1, t2)`.
pub fn ho_kalman(
    g: &MarkovParams,
    n: usize,
    t1: usize,
    t2: usize,
    mode: RealizationMode,
) -> Result<RealizationResult> {
    check_order(n, t1, t2)?;
    let pair = build_hankel(g, t1, t2)?;
    ho_kalman_hankel(&pair, &g.block(0), n, mode)
}

fn check_order(n: usize, t1: usize, t2: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("order must be positive".into()));
    }
    if n > t1.min(t2) {
        return Err(Error::OrderTooHigh(format!(
            "order {n} exceeds min(T1, T2) = {}",
            t1.min(t2)
        )));
    }
    Ok(())
}

/// Ho-Kalman on an already assembled Hankel pair; `d` is copied into `D̂`.
pub fn ho_kalman_hankel(
    pair: &HankelPair,
    d: &DenseMatrix,
    n: usize,
    mode: RealizationMode,
) -> Result<RealizationResult> {
    let (t1, t2) = (pair.t1(), pair.t2());
    check_order(n, t1, t2)?;
    let hminus = pair.hminus_view();
    let (rows, cols) = (hminus.nrows(), hminus.ncols());
    let (p, m) = d.shape();

    let start = Instant::now();
    let (factors, spectrum) = match mode {
        RealizationMode::Deterministic => {
            let full = svd_ref(hminus)?;
            if n > full.len() {
                return Err(Error::OrderTooHigh(format!("order {n} exceeds rank bound")));
            }
            (full.leading(n)?, full.s)
        }
        RealizationMode::Stochastic(cfg) => {
            let cfg = RsvdConfig {
                target_rank: n,
                ..cfg
            };
            let out = rsvd_detailed(hminus, &cfg)?;
            (out.factors, out.sample_spectrum)
        }
    };
    let timing = start.elapsed().as_secs_f64();

    let s = &factors.s;
    let cutoff = rank_cutoff(rows, cols, s[0]);
    if !(s[0] > 0.0) || s[n - 1] <= cutoff {
        return Err(Error::OrderTooHigh(format!(
            "σ_{n} = {:e} is below the rank cutoff {cutoff:e}",
            s[n - 1]
        )));
    }
    let root: Vec<f64> = s.iter().map(|x| x.sqrt()).collect();
    let inv_root: Vec<f64> = root.iter().map(|x| 1.0 / x).collect();

    let o = scale_columns(factors.u.as_ref(), &root);
    let q = scale_columns(factors.v.as_ref(), &root)
        .transpose()
        .to_owned();
    // O† = Σ^{-1/2}Uᵀ and Q† = VΣ^{-1/2} because U and V have orthonormal columns
    let core: Mat<f64> = factors.u.as_ref().transpose() * pair.hplus_view() * factors.v.as_ref();
    let a = Mat::from_fn(n, n, |i, j| inv_root[i] * core[(i, j)] * inv_root[j]);

    let ss = StateSpace {
        a: DenseMatrix::from_faer(a),
        b: DenseMatrix::from_faer(q.as_ref().subcols(0, m).to_owned()),
        c: DenseMatrix::from_faer(o.as_ref().subrows(0, p).to_owned()),
        d: d.clone(),
    };
    Ok(RealizationResult {
        ss,
        o: DenseMatrix::from_faer(o),
        q: DenseMatrix::from_faer(q),
        l: factors,
        mode: mode.kind(),
        timing,
        t1,
        t2,
        spectrum,
    })
}

/// Order suggested by the largest ratio `σᵢ/σᵢ₊₁` among singular values above
/// the rank cutoff. Never applied implicitly by [`ho_kalman`].
pub fn estimate_order(spectrum: &[f64], max_order: usize) -> usize {
    let Some(&s0) = spectrum.first() else {
        return 0;
    };
    if s0 <= 0.0 {
        return 0;
    }
    let tol = spectrum.len() as f64 * f64::EPSILON * s0;
    let live = spectrum.iter().take_while(|&&x| x > tol).count();
    if live <= 1 {
        return live;
    }
    let top = max_order.min(live);
    let mut best = (0.0, top);
    for i in 0..top {
        let next = spectrum.get(i + 1).copied().unwrap_or(0.0).max(tol);
        let ratio = spectrum[i] / next;
        if ratio > best.0 {
            best = (ratio, i + 1);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::markov_from_ss;

    fn scalar_chain() -> MarkovParams {
        MarkovParams::new(1, 1, DenseMatrix::new(1, 3, vec![0.0, 1.0, 0.5]).unwrap()).unwrap()
    }

    fn stable_system(n: usize, m: usize, p: usize, seed: u64) -> StateSpace {
        let a = DenseMatrix::gaussian(n, n, seed);
        let radius = crate::analysis::spectral_radius(&a).unwrap();
        StateSpace::new(
            a.scale(0.8 / radius),
            DenseMatrix::gaussian(n, m, seed + 1),
            DenseMatrix::gaussian(p, n, seed + 2),
            DenseMatrix::gaussian(p, m, seed + 3),
        )
        .unwrap()
    }

    #[test]
    fn scalar_realization() {
        let r = ho_kalman(&scalar_chain(), 1, 1, 1, RealizationMode::Deterministic).unwrap();
        assert!((r.ss.a.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((r.ss.b.get(0, 0) * r.ss.c.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((r.ss.b.get(0, 0).abs() - 1.0).abs() < 1e-15);
        assert_eq!(r.ss.d.get(0, 0), 0.0);
    }

    #[test]
    fn deterministic_round_trip() {
        let ss = stable_system(5, 2, 2, 10);
        let g = markov_from_ss(&ss, 11).unwrap();
        let r = ho_kalman(&g, 5, 5, 5, RealizationMode::Deterministic).unwrap();
        let back = markov_from_ss(&r.ss, 11).unwrap();
        assert!(g.relative_frobenius_error(&back).unwrap() <= 1e-8);
    }

    #[test]
    fn stochastic_round_trip() {
        let ss = stable_system(5, 2, 2, 10);
        let g = markov_from_ss(&ss, 11).unwrap();
        // 2·5 = 10 columns leave room for k + l = 5 + 5 only
        let cfg = RsvdConfig::new(5, 5).power(1).seed(0);
        let r = ho_kalman(&g, 5, 5, 5, RealizationMode::Stochastic(cfg)).unwrap();
        let back = markov_from_ss(&r.ss, 11).unwrap();
        assert!(g.relative_frobenius_error(&back).unwrap() <= 1e-6);
    }

    #[test]
    fn factors_reproduce_l() {
        let ss = stable_system(4, 2, 3, 1);
        let g = markov_from_ss(&ss, 13).unwrap();
        let r = ho_kalman(&g, 4, 6, 6, RealizationMode::Deterministic).unwrap();
        let l = r.l_dense();
        let oq = &r.o * &r.q;
        assert!((&oq - &l).frobenius_norm() <= 1e-8 * l.frobenius_norm());
        assert_eq!(r.o.shape(), (18, 4));
        assert_eq!(r.q.shape(), (4, 12));
    }

    #[test]
    fn d_is_copied_bitwise() {
        let ss = stable_system(3, 2, 2, 4);
        let g = markov_from_ss(&ss, 9).unwrap();
        for mode in [
            RealizationMode::Deterministic,
            RealizationMode::Stochastic(RsvdConfig::new(3, 2)),
        ] {
            let r = ho_kalman(&g, 3, 4, 4, mode).unwrap();
            assert_eq!(r.ss.d, g.block(0));
        }
    }

    #[test]
    fn stochastic_matches_deterministic_l_on_exact_rank() {
        let ss = stable_system(4, 2, 2, 7);
        let g = markov_from_ss(&ss, 15).unwrap();
        let det = ho_kalman(&g, 4, 7, 7, RealizationMode::Deterministic).unwrap();
        for seed in 0..5 {
            let cfg = RsvdConfig::new(4, 4).seed(seed);
            let sto = ho_kalman(&g, 4, 7, 7, RealizationMode::Stochastic(cfg)).unwrap();
            assert!(det.l_dense().max_abs_diff(&sto.l_dense()) <= 1e-8);
        }
    }

    #[test]
    fn similar_systems_realize_identically() {
        let ss = stable_system(3, 1, 2, 3);
        let t = DenseMatrix::gaussian(3, 3, 99);
        let t_inv = crate::matcore::pinv(&t).unwrap();
        let g1 = markov_from_ss(&ss, 9).unwrap();
        let g2 = markov_from_ss(&ss.transformed(&t, &t_inv), 9).unwrap();
        assert!(g1.relative_frobenius_error(&g2).unwrap() < 1e-10);
        let r1 = ho_kalman(&g1, 3, 4, 4, RealizationMode::Deterministic).unwrap();
        let r2 = ho_kalman(&g2, 3, 4, 4, RealizationMode::Deterministic).unwrap();
        let b1 = markov_from_ss(&r1.ss, 9).unwrap();
        let b2 = markov_from_ss(&r2.ss, 9).unwrap();
        assert!(b1.relative_frobenius_error(&b2).unwrap() < 1e-8);
    }

    #[test]
    fn order_above_split_is_rejected() {
        let err = ho_kalman(&scalar_chain(), 2, 1, 1, RealizationMode::Deterministic).unwrap_err();
        assert!(matches!(err, Error::OrderTooHigh(_)));
    }

    #[test]
    fn order_above_rank_is_rejected() {
        // rank-1 data asked for order 2
        let ss = StateSpace::new(
            DenseMatrix::from_diag(&[0.5]),
            DenseMatrix::from_diag(&[1.0]),
            DenseMatrix::from_diag(&[1.0]),
            DenseMatrix::from_diag(&[0.0]),
        )
        .unwrap();
        let g = markov_from_ss(&ss, 7).unwrap();
        let err = ho_kalman(&g, 2, 3, 3, RealizationMode::Deterministic).unwrap_err();
        assert!(matches!(err, Error::OrderTooHigh(_)));
    }

    #[test]
    fn order_estimate_from_gap() {
        assert_eq!(estimate_order(&[10.0, 5.0, 4.0, 1e-9, 1e-10], 5), 3);
        assert_eq!(estimate_order(&[1.0, 0.0], 2), 1);
        assert_eq!(estimate_order(&[], 3), 0);
    }
}
