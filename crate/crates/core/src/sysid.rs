//! Multiple-rollout simulation of `x⁺ = Ax + Bu + w`, `y = Cx + Du + v`, and
//! least-squares estimation of the Markov parameters from the rollouts.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hankel::MarkovParams;
use crate::matcore::{rank_cutoff, DenseMatrix, POWER_MAX_ITERS};
use crate::realize::StateSpace;
use crate::rng::stream_rng;

/// `N` rollouts of length `T`, each started from `x₀ = 0`.
///
/// Inputs and outputs are stored rollout-major, then time, then channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutDataset {
    rollouts: usize,
    horizon: usize,
    m: usize,
    p: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub seed: u64,
}

impl RolloutDataset {
    pub fn new(
        rollouts: usize,
        horizon: usize,
        m: usize,
        p: usize,
        inputs: Vec<f64>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if rollouts == 0 || horizon == 0 || m == 0 || p == 0 {
            return Err(Error::InvalidParameter(
                "N, T, m and p must all be positive".into(),
            ));
        }
        if inputs.len() != rollouts * horizon * m || outputs.len() != rollouts * horizon * p {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs and {} outputs for N = {rollouts}, T = {horizon}, m = {m}, p = {p}",
                inputs.len(),
                outputs.len()
            )));
        }
        if let Some(k) = inputs.iter().chain(&outputs).position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at position {k}"
            )));
        }
        Ok(Self {
            rollouts,
            horizon,
            m,
            p,
            inputs,
            outputs,
            sigma_u: f64::NAN,
            sigma_w: f64::NAN,
            sigma_v: f64::NAN,
            seed: 0,
        })
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn inputs_dim(&self) -> usize {
        self.m
    }

    pub fn outputs_dim(&self) -> usize {
        self.p
    }

    pub fn input(&self, rollout: usize, t: usize) -> &[f64] {
        let at = (rollout * self.horizon + t) * self.m;
        &self.inputs[at..at + self.m]
    }

    pub fn output(&self, rollout: usize, t: usize) -> &[f64] {
        let at = (rollout * self.horizon + t) * self.p;
        &self.outputs[at..at + self.p]
    }

    /// Input sequence `u₀ … u_{T−1}` of one rollout.
    pub fn input_sequence(&self, rollout: usize) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|t| self.input(rollout, t).to_vec())
            .collect()
    }
}

fn mat_vec(a: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += (0..a.cols()).map(|j| a.get(i, j) * x[j]).sum::<f64>();
    }
}

struct Trajectory {
    u: Vec<f64>,
    y: Vec<f64>,
}

/// Runs one rollout; `draw` fills `(u, w, v)` for each step in that order.
fn run(
    ss: &StateSpace,
    horizon: usize,
    mut draw: impl FnMut(usize, &mut [f64], &mut [f64], &mut [f64]),
) -> Trajectory {
    let (n, m, p) = (ss.order(), ss.inputs(), ss.outputs());
    let mut x = vec![0.0; n];
    let (mut u, mut w, mut v) = (vec![0.0; m], vec![0.0; n], vec![0.0; p]);
    let mut traj = Trajectory {
        u: Vec::with_capacity(horizon * m),
        y: Vec::with_capacity(horizon * p),
    };
    for t in 0..horizon {
        draw(t, &mut u, &mut w, &mut v);
        let mut y = v.clone();
        mat_vec(&ss.c, &x, &mut y);
        mat_vec(&ss.d, &u, &mut y);
        let mut next = w.clone();
        mat_vec(&ss.a, &x, &mut next);
        mat_vec(&ss.b, &u, &mut next);
        x = next;
        traj.u.extend_from_slice(&u);
        traj.y.extend_from_slice(&y);
    }
    traj
}

/// Simulates `n_rollouts` independent rollouts with Gaussian input, process
/// and measurement noise. Rollout `i` draws from stream `i` of `seed`, so the
/// result does not depend on how rollouts are scheduled.
pub fn simulate_rollouts(
    ss: &StateSpace,
    n_rollouts: usize,
    horizon: usize,
    sigma_u: f64,
    sigma_w: f64,
    sigma_v: f64,
    seed: u64,
) -> Result<RolloutDataset> {
    ss.validate()?;
    for (name, s) in [
        ("sigma_u", sigma_u),
        ("sigma_w", sigma_w),
        ("sigma_v", sigma_v),
    ] {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} = {s}")));
        }
    }
    if n_rollouts == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("N and T must be positive".into()));
    }
    let trajectories: Vec<Trajectory> = (0..n_rollouts as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut gauss = move |buf: &mut [f64], s: f64| {
                for x in buf {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x = s * z;
                }
            };
            run(ss, horizon, |_, u, w, v| {
                gauss(u, sigma_u);
                gauss(w, sigma_w);
                gauss(v, sigma_v);
            })
        })
        .collect();
    let mut inputs = Vec::with_capacity(n_rollouts * horizon * ss.inputs());
    let mut outputs = Vec::with_capacity(n_rollouts * horizon * ss.outputs());
    for t in trajectories {
        inputs.extend(t.u);
        outputs.extend(t.y);
    }
    let mut data = RolloutDataset::new(
        n_rollouts,
        horizon,
        ss.inputs(),
        ss.outputs(),
        inputs,
        outputs,
    )?;
    data.sigma_u = sigma_u;
    data.sigma_w = sigma_w;
    data.sigma_v = sigma_v;
    data.seed = seed;
    Ok(data)
}

/// Noise-free response to a given input sequence.
pub fn simulate_with_inputs(ss: &StateSpace, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    ss.validate()?;
    if inputs.iter().any(|u| u.len() != ss.inputs()) {
        return Err(Error::DimensionMismatch(format!(
            "inputs must have {} channels",
            ss.inputs()
        )));
    }
    let traj = run(ss, inputs.len(), |t, u, w, v| {
        u.copy_from_slice(&inputs[t]);
        w.fill(0.0);
        v.fill(0.0);
    });
    Ok(traj.y.chunks(ss.outputs()).map(<[f64]>::to_vec).collect())
}

/// Block upper-triangular Toeplitz regressor (`mT x T`): block `(i, j)` is
/// `u_{j−i}` for `i ≤ j` and zero below the diagonal.
pub fn toeplitz_inputs(u: &[Vec<f64>]) -> Result<DenseMatrix> {
    let first = u
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty input sequence".into()))?;
    let m = first.len();
    if m == 0 || u.iter().any(|x| x.len() != m) {
        return Err(Error::DimensionMismatch(
            "input vectors differ in length".into(),
        ));
    }
    let t = u.len();
    Ok(DenseMatrix::from_fn(m * t, t, |r, j| {
        let i = r / m;
        if i <= j {
            u[j - i][r % m]
        } else {
            0.0
        }
    }))
}

/// Least-squares Markov parameters `Ĝ = argmin ‖Y − XU‖_F`, solved by
/// column-pivoted QR of the stacked regressor `Uᵀ`.
pub fn estimate_markov(data: &RolloutDataset) -> Result<MarkovParams> {
    let (n_roll, t, m, p) = (data.rollouts, data.horizon, data.m, data.p);
    let (rows, cols) = (n_roll * t, m * t);
    if rows < cols {
        return Err(Error::InsufficientExcitation {
            rank: rows,
            needed: cols,
        });
    }
    // row (i, s) of Uᵀ is column s of the i-th rollout's Toeplitz block
    let ut = Mat::<f64>::from_fn(rows, cols, |r, c| {
        let (i, s) = (r / t, r % t);
        let k = c / m;
        if k <= s {
            data.input(i, s - k)[c % m]
        } else {
            0.0
        }
    });
    let yt = Mat::<f64>::from_fn(rows, p, |r, c| data.output(r / t, r % t)[c]);
    let qr = ut.col_piv_qr();
    let rdiag = qr.R();
    let r00 = rdiag[(0, 0)].abs();
    let tol = rank_cutoff(rows, cols, r00);
    let rank = if r00 > 0.0 {
        (0..cols).take_while(|&i| rdiag[(i, i)].abs() > tol).count()
    } else {
        0
    };
    if rank < cols {
        return Err(Error::InsufficientExcitation { rank, needed: cols });
    }
    let x = qr.solve_lstsq(&yt);
    MarkovParams::new(p, m, DenseMatrix::from_faer(x.transpose().to_owned()))
}

/// `A` with integer entries in `1..=5`, `B`, `C`, `D` with integer entries in
/// `−2..=2`, before any rescaling.
pub fn random_integer_system(n: usize, m: usize, p: usize, seed: u64) -> Result<StateSpace> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidParameter(
            "dimensions must be positive".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    let mut ints = |rows: usize, cols: usize, lo: i32, hi: i32| {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..=hi) as f64)
    };
    let a = ints(n, n, 1, 5);
    let b = ints(n, m, -2, 2);
    let c = ints(p, n, -2, 2);
    let d = ints(p, m, -2, 2);
    StateSpace::new(a, b, c, d)
}

/// Random integer system with `A` rescaled to spectral radius `0.9`.
pub fn random_system(n: usize, m: usize, p: usize, seed: u64) -> Result<StateSpace> {
    let mut ss = random_integer_system(n, m, p, seed)?;
    let rho = perron_root(&ss.a)?;
    ss.a = ss.a.scale(0.9 / rho);
    Ok(ss)
}

/// Spectral radius of an entrywise positive matrix by power iteration,
/// stopped on the Collatz-Wielandt bracket `min (Ax)ᵢ/xᵢ ≤ ρ ≤ max (Ax)ᵢ/xᵢ`.
pub fn perron_root(a: &DenseMatrix) -> Result<f64> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{:?} is not square",
            a.shape()
        )));
    }
    let mut x = vec![1.0; n];
    for _ in 0..POWER_MAX_ITERS {
        let mut y = vec![0.0; n];
        mat_vec(a, &x, &mut y);
        let ratios = y.iter().zip(&x).map(|(yi, xi)| yi / xi);
        let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
        if !(lo > 0.0) {
            return Err(Error::InvalidParameter(
                "matrix is not entrywise positive".into(),
            ));
        }
        if hi - lo <= 1e-12 * hi {
            return Ok(0.5 * (lo + hi));
        }
        let norm = y.iter().sum::<f64>();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
    })
}
