//! Markov parameters and the block-Hankel matrices built from them.

use faer::MatRef;

use crate::error::{Error, Result};
use crate::matcore::{spectral_norm, DenseMatrix};
use crate::realize::StateSpace;

/// The impulse-response blocks `[G₀ G₁ … G_{T−1}]` with `G₀ = D` and
/// `G_k = C A^{k−1} B`, stored side by side as one `p x mT` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovParams {
    p: usize,
    m: usize,
    data: DenseMatrix,
}

impl MarkovParams {
    pub fn new(p: usize, m: usize, data: DenseMatrix) -> Result<Self> {
        if data.rows() != p || m == 0 || data.cols() % m != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} data for p = {p}, m = {m}",
                data.rows(),
                data.cols()
            )));
        }
        data.check_finite()?;
        Ok(Self { p, m, data })
    }

    pub fn from_blocks(blocks: &[DenseMatrix]) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidParameter("no Markov blocks".into()))?;
        let (p, m) = first.shape();
        if blocks.iter().any(|b| b.shape() != (p, m)) {
            return Err(Error::DimensionMismatch(
                "Markov blocks differ in shape".into(),
            ));
        }
        let data = DenseMatrix::from_fn(p, m * blocks.len(), |i, j| blocks[j / m].get(i, j % m));
        Self::new(p, m, data)
    }

    pub fn outputs(&self) -> usize {
        self.p
    }

    pub fn inputs(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.data.cols() / self.m
    }

    pub fn block(&self, k: usize) -> DenseMatrix {
        self.data.columns(k * self.m, self.m)
    }

    /// Entry `(row, col)` of block `k`.
    pub fn entry(&self, k: usize, row: usize, col: usize) -> f64 {
        self.data.get(row, k * self.m + col)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.data
    }

    /// `‖self − other‖` in the spectral norm of the `p x mT` matrices.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        spectral_norm(&(&self.data - &other.data))
    }

    /// `‖self − other‖_F / ‖self‖_F`.
    pub fn relative_frobenius_error(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok((&self.data - &other.data).frobenius_norm() / self.data.frobenius_norm())
    }

    /// Returns `self + delta` for a `p x mT` perturbation.
    pub fn perturbed(&self, delta: &DenseMatrix) -> Result<Self> {
        if delta.shape() != self.data.shape() {
            return Err(Error::DimensionMismatch("perturbation shape".into()));
        }
        Self::new(self.p, self.m, &self.data + delta)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.data.shape() != other.data.shape() || self.m != other.m {
            return Err(Error::DimensionMismatch(format!(
                "Markov parameters {}x{} vs {}x{}",
                self.p,
                self.data.cols(),
                other.p,
                other.data.cols()
            )));
        }
        Ok(())
    }
}

/// Markov parameters of `ss` up to horizon `t`, by repeated products with `A`.
pub fn markov_from_ss(ss: &StateSpace, t: usize) -> Result<MarkovParams> {
    if t == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    ss.validate()?;
    let mut blocks = Vec::with_capacity(t);
    blocks.push(ss.d.clone());
    let mut ak_b = ss.b.clone();
    for k in 1..t {
        blocks.push(&ss.c * &ak_b);
        if k + 1 < t {
            ak_b = &ss.a * &ak_b;
        }
    }
    MarkovParams::from_blocks(&blocks)
}

/// `T1 = ceil((T−1)/2)`, `T2 = T − 1 − T1`.
pub fn default_split(horizon: usize) -> Result<(usize, usize)> {
    if horizon < 3 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} too short for a Hankel split"
        )));
    }
    let t1 = (horizon - 1).div_ceil(2);
    Ok((t1, horizon - 1 - t1))
}

/// Rows and columns of `H⁻` for the given geometry.
pub fn hminus_dims(p: usize, m: usize, t1: usize, t2: usize) -> (usize, usize) {
    (p * t1, m * t2)
}

/// `H` (`pT1 x m(T2+1)`) whose block `(i, j)` is `G_{i+j+1}`.
///
/// `H⁻` and `H⁺` are the views that drop the last and the first block column.
#[derive(Clone, Debug)]
pub struct HankelPair {
    p: usize,
    m: usize,
    t1: usize,
    t2: usize,
    h: DenseMatrix,
}

impl HankelPair {
    pub fn t1(&self) -> usize {
        self.t1
    }

    pub fn t2(&self) -> usize {
        self.t2
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn hminus_view(&self) -> MatRef<'_, f64> {
        self.h.as_ref().subcols(0, self.m * self.t2)
    }

    pub fn hplus_view(&self) -> MatRef<'_, f64> {
        self.h.as_ref().subcols(self.m, self.m * self.t2)
    }

    pub fn hminus(&self) -> DenseMatrix {
        DenseMatrix::from_faer(self.hminus_view().to_owned())
    }

    pub fn hplus(&self) -> DenseMatrix {
        DenseMatrix::from_faer(self.hplus_view().to_owned())
    }

    pub fn hminus_dims(&self) -> (usize, usize) {
        hminus_dims(self.p, self.m, self.t1, self.t2)
    }
}

/// Assembles the Hankel pair; requires `T1 + T2 + 1 = T` and `T1, T2 ≥ 1`.
pub fn build_hankel(g: &MarkovParams, t1: usize, t2: usize) -> Result<HankelPair> {
    if t1 == 0 || t2 == 0 {
        return Err(Error::InvalidParameter("T1 and T2 must be positive".into()));
    }
    if t1 + t2 + 1 != g.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "T1 + T2 + 1 = {} but the horizon is {}",
            t1 + t2 + 1,
            g.horizon()
        )));
    }
    let (p, m) = (g.p, g.m);
    let mut h = DenseMatrix::zeros(p * t1, m * (t2 + 1));
    let src = g.data.as_ref();
    let mut dst = h.as_mut();
    for bj in 0..=t2 {
        for c in 0..m {
            let col = bj * m + c;
            for bi in 0..t1 {
                let k = bi + bj + 1;
                for r in 0..p {
                    dst[(bi * p + r, col)] = src[(r, k * m + c)];
                }
            }
        }
    }
    Ok(HankelPair { p, m, t1, t2, h })
}
