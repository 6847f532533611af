//! Benchmark harness: realization time and error per (experiment, mode,
//! oversampling, power, trial), with the matching bounds, as CSV.

use std::fmt::Write as _;

use rayon::prelude::*;

use hokalman::analysis::{
    hinf_error, lowrank_residual_norm, mean_stderr, stochastic_bounds, BoundReport,
};
use hokalman::hankel::{build_hankel, markov_from_ss, HankelPair};
use hokalman::realize::{ho_kalman_hankel, ModeKind};
use hokalman::rng::derive_seed;
use hokalman::sysid::{estimate_markov, random_system, simulate_rollouts};
use hokalman::{DenseMatrix, Error, MarkovParams, RealizationMode, Result, RsvdConfig, StateSpace};

use crate::config::{BenchConfig, Estimator, Experiment};

pub const HEADER: &str = "example,n,m,p,T,dimHminus_rows,dimHminus_cols,mode,l,q,seed,time_s,err_hinf,err_markov,gnorm,err_l,lemma1_l,avg_bound,avg_bound_power,dev_bound_el,srft_bound";

#[derive(Clone, Debug, PartialEq)]
pub enum SeedCol {
    Trial(u64),
    Mean,
    /// Geometry only, nothing was run.
    Dry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub example: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    pub rows: usize,
    pub cols: usize,
    pub mode: ModeKind,
    pub l: Option<usize>,
    pub q: Option<usize>,
    pub seed: SeedCol,
    pub time_s: f64,
    pub err_hinf: f64,
    pub err_markov: f64,
    pub gnorm: f64,
    pub err_l: f64,
    pub lemma1_l: f64,
    pub avg_bound: Option<f64>,
    pub avg_bound_power: Option<f64>,
    pub dev_bound_el: Option<f64>,
    pub srft_bound: Option<f64>,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.10e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "na".into(), num)
}

fn opt_count(x: Option<usize>) -> String {
    x.map_or_else(|| "na".into(), |v| v.to_string())
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let seed = match self.seed {
            SeedCol::Trial(s) => s.to_string(),
            SeedCol::Mean => "mean".into(),
            SeedCol::Dry => "dry".into(),
        };
        let time = if self.time_s.is_finite() {
            format!("{:.6}", self.time_s)
        } else {
            num(self.time_s)
        };
        [
            self.example.clone(),
            self.n.to_string(),
            self.m.to_string(),
            self.p.to_string(),
            self.horizon.to_string(),
            self.rows.to_string(),
            self.cols.to_string(),
            self.mode.to_string(),
            opt_count(self.l),
            opt_count(self.q),
            seed,
            time,
            num(self.err_hinf),
            num(self.err_markov),
            num(self.gnorm),
            num(self.err_l),
            num(self.lemma1_l),
            opt_num(self.avg_bound),
            opt_num(self.avg_bound_power),
            opt_num(self.dev_bound_el),
            opt_num(self.srft_bound),
        ]
        .join(",")
    }

    /// Measured `‖L − L̃‖` against the bound that applies to this row: the
    /// deterministic perturbation bound for `det`, the deviation bound for a
    /// stochastic trial, the average bound for a stochastic mean row.
    pub fn within_bound(&self) -> Option<bool> {
        if !self.err_l.is_finite() {
            return None;
        }
        let bound = match (self.mode, &self.seed) {
            (ModeKind::Deterministic, _) => Some(self.lemma1_l),
            (ModeKind::Stochastic, SeedCol::Mean) => self.avg_bound_power,
            (ModeKind::Stochastic, _) => self.dev_bound_el,
        }?;
        Some(self.err_l <= bound * (1.0 + 1e-9) + 1e-12)
    }
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 160);
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Stream `i + 1` of the experiment seed; stream 0 builds the true system.
pub fn trial_seed(exp: &Experiment, trial: usize) -> u64 {
    derive_seed(exp.seed, trial as u64 + 1)
}

pub fn true_system(exp: &Experiment) -> Result<StateSpace> {
    random_system(exp.n, exp.m, exp.p, derive_seed(exp.seed, 0))
}

/// `Ĝ` for one trial according to the experiment's estimator.
pub fn markov_estimate(
    exp: &Experiment,
    ss: &StateSpace,
    g: &MarkovParams,
    seed: u64,
) -> Result<MarkovParams> {
    match exp.estimator {
        Estimator::Exact => Ok(g.clone()),
        Estimator::Perturb(scale) => {
            let (p, cols) = g.matrix().shape();
            g.perturbed(&DenseMatrix::gaussian(p, cols, seed).scale(scale))
        }
        Estimator::Ols => {
            let data = simulate_rollouts(
                ss,
                exp.rollouts,
                exp.horizon,
                exp.sigma_u,
                exp.sigma_w,
                exp.sigma_v,
                seed,
            )?;
            estimate_markov(&data)
        }
    }
}

/// Every (mode, l, q) combination of an experiment; deterministic mode has
/// no `l` or `q`.
fn variants(exp: &Experiment) -> Vec<(ModeKind, Option<usize>, Option<usize>)> {
    let mut out = Vec::new();
    for &mode in &exp.modes {
        match mode {
            ModeKind::Deterministic => out.push((mode, None, None)),
            ModeKind::Stochastic => {
                for &l in &exp.oversampling {
                    for &q in &exp.power {
                        out.push((mode, Some(l), Some(q)));
                    }
                }
            }
        }
    }
    out
}

fn svd_work(rows: usize, cols: usize) -> f64 {
    rows as f64 * cols as f64 * rows.min(cols) as f64
}

struct Shared<'a> {
    exp: &'a Experiment,
    ss: StateSpace,
    g: MarkovParams,
    pair: HankelPair,
    grid: usize,
    flop_cap: f64,
}

fn blank(
    e: &Experiment,
    mode: ModeKind,
    l: Option<usize>,
    q: Option<usize>,
    seed: SeedCol,
) -> BenchRow {
    let (rows, cols) = e.hminus_dims();
    BenchRow {
        example: e.name.clone(),
        n: e.n,
        m: e.m,
        p: e.p,
        horizon: e.horizon,
        rows,
        cols,
        mode,
        l,
        q,
        seed,
        time_s: f64::NAN,
        err_hinf: f64::NAN,
        err_markov: f64::NAN,
        gnorm: f64::NAN,
        err_l: f64::NAN,
        lemma1_l: f64::NAN,
        avg_bound: None,
        avg_bound_power: None,
        dev_bound_el: None,
        srft_bound: None,
    }
}

impl Shared<'_> {
    fn trial(&self, index: usize) -> Result<Vec<BenchRow>> {
        let e = self.exp;
        let seed = trial_seed(e, index);
        let g_hat = markov_estimate(e, &self.ss, &self.g, seed)?;
        let gnorm = self.g.distance(&g_hat)?;
        let pair_hat = build_hankel(&g_hat, e.t1, e.t2)?;
        let d = g_hat.block(0);
        let (rows, cols) = e.hminus_dims();
        let lemma1_l = 2.0 * (e.t1.min(e.t2) as f64).sqrt() * gnorm;

        let mut out = Vec::new();
        for (mode, l, q) in variants(e) {
            let mut row = blank(e, mode, l, q, SeedCol::Trial(seed));
            row.gnorm = gnorm;
            row.lemma1_l = lemma1_l;
            let realization = match (mode, l, q) {
                (ModeKind::Deterministic, ..) => {
                    if svd_work(rows, cols) > self.flop_cap {
                        row.time_s = f64::INFINITY;
                        out.push(row);
                        continue;
                    }
                    RealizationMode::Deterministic
                }
                (ModeKind::Stochastic, Some(l), Some(q)) => {
                    if let Ok(b) = stochastic_bounds(e.n, l, q, e.p, e.m, e.t1, e.t2, gnorm) {
                        row.avg_bound = Some(b.avg_bound);
                        row.avg_bound_power = Some(b.avg_bound_power);
                        row.dev_bound_el = b.dev_bound_el;
                        row.srft_bound = Some(b.srft_bound);
                    }
                    let cfg = RsvdConfig::new(e.n, l)
                        .power(q)
                        .seed(seed)
                        .test_matrix(e.test_matrix);
                    RealizationMode::Stochastic(cfg)
                }
                _ => unreachable!("stochastic variants carry l and q"),
            };
            let r = ho_kalman_hankel(&pair_hat, &d, e.n, realization)?;
            row.time_s = r.timing;
            row.err_markov = self
                .g
                .relative_frobenius_error(&markov_from_ss(&r.ss, e.horizon)?)?;
            row.err_hinf = match hinf_error(&self.ss, &r.ss, self.grid) {
                Ok(v) => v,
                Err(Error::Unstable { .. }) => f64::NAN,
                Err(err) => return Err(err),
            };
            row.err_l = lowrank_residual_norm(self.pair.hminus_view(), &r.l)?;
            out.push(row);
        }
        Ok(out)
    }
}

fn mean_of(rows: &[&BenchRow], f: impl Fn(&BenchRow) -> f64) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| f(r)).collect();
    if xs.iter().any(|x| x.is_infinite()) {
        return f64::INFINITY;
    }
    mean_stderr(&xs).0
}

/// Runs every experiment; trial rows come first, then one `mean` row per
/// (mode, l, q), in configuration order.
pub fn run_bench(cfg: &BenchConfig, parallel: bool) -> Result<Vec<BenchRow>> {
    let mut all = Vec::new();
    for exp in &cfg.experiments {
        all.extend(run_experiment(cfg, exp, parallel)?);
    }
    Ok(all)
}

pub fn run_experiment(
    cfg: &BenchConfig,
    exp: &Experiment,
    parallel: bool,
) -> Result<Vec<BenchRow>> {
    let (rows, cols) = exp.hminus_dims();
    let entries = rows as f64 * (cols + exp.m) as f64;
    if exp.dry_run || entries > cfg.entry_cap {
        return Ok(variants(exp)
            .into_iter()
            .map(|(mode, l, q)| {
                let mut r = blank(exp, mode, l, q, SeedCol::Dry);
                if !exp.dry_run {
                    r.time_s = f64::INFINITY;
                }
                r
            })
            .collect());
    }
    let ss = true_system(exp)?;
    let g = markov_from_ss(&ss, exp.horizon)?;
    let pair = build_hankel(&g, exp.t1, exp.t2)?;
    let shared = Shared {
        exp,
        ss,
        g,
        pair,
        grid: cfg.grid,
        flop_cap: cfg.flop_cap,
    };
    let per_trial: Vec<Vec<BenchRow>> = if parallel {
        (0..exp.trials)
            .into_par_iter()
            .map(|i| shared.trial(i))
            .collect::<Result<_>>()?
    } else {
        (0..exp.trials)
            .map(|i| shared.trial(i))
            .collect::<Result<_>>()?
    };
    let mut out: Vec<BenchRow> = per_trial.concat();
    let vars = variants(exp);
    let mut means = Vec::with_capacity(vars.len());
    for (k, &(mode, l, q)) in vars.iter().enumerate() {
        let group: Vec<&BenchRow> = per_trial.iter().map(|t| &t[k]).collect();
        let mut row = blank(exp, mode, l, q, SeedCol::Mean);
        row.time_s = mean_of(&group, |r| r.time_s);
        row.err_hinf = mean_of(&group, |r| r.err_hinf);
        row.err_markov = mean_of(&group, |r| r.err_markov);
        row.gnorm = mean_of(&group, |r| r.gnorm);
        row.err_l = mean_of(&group, |r| r.err_l);
        row.lemma1_l = mean_of(&group, |r| r.lemma1_l);
        // the bounds are linear in ‖G−Ĝ‖, so their mean is the bound at the mean
        let opt_mean = |f: &dyn Fn(&BenchRow) -> Option<f64>| {
            group
                .iter()
                .map(|r| f(r))
                .collect::<Option<Vec<f64>>>()
                .map(|v| mean_stderr(&v).0)
        };
        row.avg_bound = opt_mean(&|r| r.avg_bound);
        row.avg_bound_power = opt_mean(&|r| r.avg_bound_power);
        row.dev_bound_el = opt_mean(&|r| r.dev_bound_el);
        row.srft_bound = opt_mean(&|r| r.srft_bound);
        means.push(row);
    }
    out.extend(means);
    Ok(out)
}

/// `key=value` bound reports for every stochastic (l, q) of every
/// experiment, with `‖G−Ĝ‖` from the first trial's `Ĝ` and the robustness
/// terms from the measured mean `‖L − L̃‖` over the trials.
pub fn run_bounds(cfg: &BenchConfig) -> Result<String> {
    let mut out = String::new();
    for exp in &cfg.experiments {
        let ss = true_system(exp)?;
        let g = markov_from_ss(&ss, exp.horizon)?;
        let pair = build_hankel(&g, exp.t1, exp.t2)?;
        let g_hat = markov_estimate(exp, &ss, &g, trial_seed(exp, 0))?;
        let gnorm = g.distance(&g_hat)?;
        let pair_hat = build_hankel(&g_hat, exp.t1, exp.t2)?;
        let robust = if exp.dry_run {
            None
        } else {
            let truth =
                ho_kalman_hankel(&pair, &g.block(0), exp.n, RealizationMode::Deterministic)?;
            let sigma_min = truth.l.s[exp.n - 1];
            let hplus_norm = hokalman::matcore::spectral_norm(&pair.hplus())?;
            let hplus_err = hokalman::matcore::spectral_norm(&(&pair.hplus() - &pair_hat.hplus()))?;
            Some((sigma_min, hplus_norm, hplus_err))
        };
        for &l in &exp.oversampling {
            for &q in &exp.power {
                let _ = writeln!(out, "[experiment name={} l={l} q={q}]", exp.name);
                let report =
                    match stochastic_bounds(exp.n, l, q, exp.p, exp.m, exp.t1, exp.t2, gnorm) {
                        Ok(r) => r,
                        Err(e) => {
                            let _ = writeln!(out, "error={e}\n");
                            continue;
                        }
                    };
                let report = match robust {
                    Some((sigma_min, hplus_norm, hplus_err)) => {
                        let errs = (0..exp.trials)
                            .map(|i| {
                                let c = RsvdConfig::new(exp.n, l)
                                    .power(q)
                                    .seed(trial_seed(exp, i))
                                    .test_matrix(exp.test_matrix);
                                let r = ho_kalman_hankel(
                                    &pair_hat,
                                    &g_hat.block(0),
                                    exp.n,
                                    RealizationMode::Stochastic(c),
                                )?;
                                lowrank_residual_norm(pair.hminus_view(), &r.l)
                            })
                            .collect::<Result<Vec<f64>>>()?;
                        let (mean, se) = mean_stderr(&errs);
                        let report: BoundReport =
                            report.with_robustness(sigma_min, hplus_norm, hplus_err, mean);
                        let mut text = report.to_key_value();
                        let _ = writeln!(text, "sigma_min_L={sigma_min:.16e}");
                        let _ = writeln!(text, "measured_l_err_mean={mean:.16e}");
                        let _ = writeln!(text, "measured_l_err_stderr={se:.16e}");
                        let _ = writeln!(text, "robustness_condition={}", mean <= sigma_min / 2.0);
                        out.push_str(&text);
                        out.push('\n');
                        continue;
                    }
                    None => report,
                };
                out.push_str(&report.to_key_value());
                out.push('\n');
            }
        }
    }
    Ok(out)
}
