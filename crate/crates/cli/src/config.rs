//! Benchmark configuration: global `key = value` lines followed by
//! `[experiment]` sections.
//!
//! ```text
//! flop_cap = 1e12
//! [experiment]
//! name = ex1
//! n = 30
//! m = 20
//! p = 10
//! T = 90
//! l = 1..10
//! ```

use std::str::FromStr;

use hokalman::hankel::default_split;
use hokalman::realize::ModeKind;
use hokalman::{Error, Result, TestMatrixKind};

/// Where `Ĝ` comes from in each trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    /// Least squares on freshly simulated rollouts.
    Ols,
    /// The true Markov parameters.
    Exact,
    /// `G` plus i.i.d. Gaussian entries of the given standard deviation.
    Perturb(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    pub t1: usize,
    pub t2: usize,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub rollouts: usize,
    pub modes: Vec<ModeKind>,
    pub oversampling: Vec<usize>,
    pub power: Vec<usize>,
    pub test_matrix: TestMatrixKind,
    pub trials: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub dry_run: bool,
    /// 1-based line of the `[experiment]` header.
    pub line: usize,
}

impl Experiment {
    fn new(index: usize, line: usize) -> Self {
        Self {
            name: format!("ex{index}"),
            n: 0,
            m: 0,
            p: 0,
            horizon: 0,
            t1: 0,
            t2: 0,
            sigma_u: 1.0,
            sigma_w: 1.0,
            sigma_v: 0.5,
            rollouts: 0,
            modes: vec![ModeKind::Deterministic, ModeKind::Stochastic],
            oversampling: vec![10],
            power: vec![1],
            test_matrix: TestMatrixKind::Gaussian,
            trials: 10,
            seed: 0,
            estimator: Estimator::Ols,
            dry_run: false,
            line,
        }
    }

    pub fn hminus_dims(&self) -> (usize, usize) {
        (self.p * self.t1, self.m * self.t2)
    }

    fn finish(mut self) -> Result<Self> {
        let line = self.line;
        for (key, v) in [
            ("n", self.n),
            ("m", self.m),
            ("p", self.p),
            ("T", self.horizon),
        ] {
            if v == 0 {
                return Err(Error::Parse {
                    line,
                    message: format!("experiment '{}' lacks a positive '{key}'", self.name),
                });
            }
        }
        match (self.t1, self.t2) {
            (0, 0) => {
                let (t1, t2) = default_split(self.horizon).map_err(|e| at(line, e))?;
                self.t1 = t1;
                self.t2 = t2;
            }
            (t1, t2) if t1 > 0 && t2 > 0 && t1 + t2 + 1 == self.horizon => {}
            (t1, t2) => {
                return Err(Error::Parse {
                    line,
                    message: format!("T1 = {t1}, T2 = {t2} do not satisfy T1 + T2 + 1 = T"),
                })
            }
        }
        if self.n > self.t1.min(self.t2) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "order {} exceeds min(T1, T2) = {}",
                    self.n,
                    self.t1.min(self.t2)
                ),
            });
        }
        if self.rollouts == 0 {
            self.rollouts = 4 * self.m;
        }
        if self.trials == 0
            || self.modes.is_empty()
            || self.oversampling.is_empty()
            || self.power.is_empty()
        {
            return Err(Error::Parse {
                line,
                message: "trials, modes, l and q must be non-empty".into(),
            });
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub experiments: Vec<Experiment>,
    pub output: Option<String>,
    /// Deterministic runs whose projected SVD work `rows·cols·min(rows, cols)`
    /// exceeds this are skipped and reported with `time_s = inf`.
    pub flop_cap: f64,
    /// Experiments whose Hankel matrix has more entries than this are skipped
    /// in every mode.
    pub entry_cap: f64,
    /// Unit-circle points for the H∞ error.
    pub grid: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            experiments: Vec::new(),
            output: None,
            flop_cap: 1e12,
            entry_cap: 2e8,
            grid: 1024,
        }
    }
}

fn at(line: usize, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    }
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad value '{v}' for '{key}'"),
    })
}

fn nonneg(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = value(line, key, v)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("'{key}' must be a finite nonnegative number"),
        });
    }
    Ok(x)
}

/// `a..b` (inclusive), `a,b,c`, or a single value.
pub fn parse_sweep(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: usize = value(line, key, lo.trim())?;
        let hi: usize = value(line, key, hi.trim())?;
        if lo > hi {
            return Err(Error::Parse {
                line,
                message: format!("empty range '{v}' for '{key}'"),
            });
        }
        return Ok((lo..=hi).collect());
    }
    v.split(',').map(|x| value(line, key, x.trim())).collect()
}

fn parse_modes(line: usize, v: &str) -> Result<Vec<ModeKind>> {
    v.split(',')
        .map(|x| match x.trim() {
            "det" | "deterministic" => Ok(ModeKind::Deterministic),
            "rsvd" | "stochastic" => Ok(ModeKind::Stochastic),
            other => Err(Error::Parse {
                line,
                message: format!("unknown mode '{other}'"),
            }),
        })
        .collect()
}

impl FromStr for BenchConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = BenchConfig::default();
        let mut current: Option<Experiment> = None;
        let mut perturb_scale: Option<(usize, f64)> = None;
        let close = |exp: Option<Experiment>,
                     scale: &mut Option<(usize, f64)>,
                     cfg: &mut BenchConfig|
         -> Result<()> {
            if let Some(mut e) = exp {
                if let Some((line, s)) = scale.take() {
                    match e.estimator {
                        Estimator::Perturb(_) => e.estimator = Estimator::Perturb(s),
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: "'perturb' needs 'estimator = perturb'".into(),
                            })
                        }
                    }
                }
                cfg.experiments.push(e.finish()?);
            }
            Ok(())
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if l.starts_with('[') {
                if l != "[experiment]" {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown section '{l}'"),
                    });
                }
                close(current.take(), &mut perturb_scale, &mut cfg)?;
                current = Some(Experiment::new(cfg.experiments.len() + 1, line));
                continue;
            }
            let (key, v) = l.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'key = value', found '{l}'"),
            })?;
            let (key, v) = (key.trim(), v.trim());
            let Some(e) = current.as_mut() else {
                match key {
                    "output" => cfg.output = Some(v.to_string()),
                    "flop_cap" => cfg.flop_cap = nonneg(line, key, v)?,
                    "entry_cap" => cfg.entry_cap = nonneg(line, key, v)?,
                    "grid" => {
                        cfg.grid = value(line, key, v)?;
                        if cfg.grid < 64 {
                            return Err(Error::Parse {
                                line,
                                message: "grid needs at least 64 points".into(),
                            });
                        }
                    }
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown global key '{key}'"),
                        })
                    }
                }
                continue;
            };
            match key {
                "name" | "example" => e.name = v.to_string(),
                "n" => e.n = value(line, key, v)?,
                "m" => e.m = value(line, key, v)?,
                "p" => e.p = value(line, key, v)?,
                "T" => e.horizon = value(line, key, v)?,
                "T1" => e.t1 = value(line, key, v)?,
                "T2" => e.t2 = value(line, key, v)?,
                "sigma_u" => e.sigma_u = nonneg(line, key, v)?,
                "sigma_w" => e.sigma_w = nonneg(line, key, v)?,
                "sigma_v" => e.sigma_v = nonneg(line, key, v)?,
                "N" => e.rollouts = value(line, key, v)?,
                "modes" => e.modes = parse_modes(line, v)?,
                "l" => e.oversampling = parse_sweep(line, key, v)?,
                "q" => e.power = parse_sweep(line, key, v)?,
                "test_matrix" => e.test_matrix = value(line, key, v)?,
                "trials" => e.trials = value(line, key, v)?,
                "seed" => e.seed = value(line, key, v)?,
                "estimator" => {
                    e.estimator = match v {
                        "ols" => Estimator::Ols,
                        "exact" => Estimator::Exact,
                        "perturb" => Estimator::Perturb(1e-3),
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!("unknown estimator '{v}'"),
                            })
                        }
                    }
                }
                "perturb" => perturb_scale = Some((line, nonneg(line, key, v)?)),
                "dry_run" => e.dry_run = value(line, key, v)?,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown experiment key '{key}'"),
                    })
                }
            }
        }
        close(current.take(), &mut perturb_scale, &mut cfg)?;
        if cfg.experiments.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                message: "no [experiment] sections".into(),
            });
        }
        Ok(cfg)
    }
}
