//! Acceptance suite. Runs serially (timing criteria share the machine with
//! nothing else) and prints one PASS/FAIL line per criterion.

use std::io::Write;
use std::time::Instant;

use hokalman::analysis::{
    hinf_error, l_error_split, lemma1_bounds, stochastic_bounds, thm5_check, thm5_mean, Thm5Outcome,
};
use hokalman::hankel::{build_hankel, default_split, markov_from_ss, MarkovParams};
use hokalman::matcore::{spectral_norm, svd};
use hokalman::realize::{ho_kalman, RealizationResult};
use hokalman::rsvd::{rsvd_detailed, srft_bound, thm1_bound};
use hokalman::sysid::{estimate_markov, random_system, simulate_rollouts};
use hokalman::{DenseMatrix, RealizationMode, RsvdConfig, StateSpace, TestMatrixKind};
use hokalman_cli::bench::{run_bench, SeedCol};
use hokalman_cli::config::BenchConfig;

type Outcome = Result<(bool, String), String>;

fn stochastic(k: usize, l: usize, q: usize, seed: u64) -> RealizationMode {
    RealizationMode::Stochastic(RsvdConfig::new(k, l).power(q).seed(seed))
}

fn perturb(g: &MarkovParams, scale: f64, seed: u64) -> MarkovParams {
    let delta = DenseMatrix::gaussian(g.outputs(), g.matrix().cols(), seed).scale(scale);
    g.perturbed(&delta).unwrap()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    hokalman::analysis::mean_stderr(xs).0
}

struct Desk {
    #[allow(dead_code)]
    ss: StateSpace,
    g: MarkovParams,
    t1: usize,
    t2: usize,
}

fn desk(n: usize, m: usize, p: usize, horizon: usize, seed: u64) -> Desk {
    let ss = random_system(n, m, p, seed).unwrap();
    let g = markov_from_ss(&ss, horizon).unwrap();
    let (t1, t2) = default_split(horizon).unwrap();
    Desk { ss, g, t1, t2 }
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    // min(p, m)·n ≥ n + 10 so that n + l fits inside H⁻
    let systems = [
        (4, 4, 4),
        (5, 3, 3),
        (5, 4, 3),
        (5, 3, 4),
        (6, 3, 3),
        (6, 4, 4),
        (7, 3, 3),
        (7, 4, 3),
        (8, 3, 4),
        (8, 4, 4),
        (9, 3, 3),
        (9, 4, 3),
        (10, 2, 3),
        (10, 3, 2),
        (10, 4, 4),
        (10, 3, 3),
        (6, 4, 3),
        (7, 3, 4),
        (9, 4, 4),
        (8, 3, 3),
    ];
    let (mut worst_det, mut worst_rsvd) = (0f64, 0f64);
    for (i, &(n, m, p)) in systems.iter().enumerate() {
        let d = desk(n, m, p, 2 * n + 1, 100 + i as u64);
        for (mode, worst) in [
            (RealizationMode::Deterministic, &mut worst_det),
            (stochastic(n, 10, 1, i as u64), &mut worst_rsvd),
        ] {
            let r = ho_kalman(&d.g, n, d.t1, d.t2, mode).map_err(|e| e.to_string())?;
            let back = markov_from_ss(&r.ss, d.g.horizon()).unwrap();
            *worst = worst.max(d.g.relative_frobenius_error(&back).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst_det <= 1e-6 && worst_rsvd <= 1e-6 && secs < 5.0,
        format!("max rel err det={worst_det:.2e} rsvd={worst_rsvd:.2e}, {secs:.2} s"),
    ))
}

fn table_geometry() -> Outcome {
    let cfg: BenchConfig =
        "[experiment]\nname = eg1\nn = 30\nm = 20\np = 10\nT = 90\ndry_run = true\n\
         [experiment]\nname = eg3\nn = 60\nm = 50\np = 40\nT = 360\ndry_run = true\n\
         [experiment]\nname = eg4\nn = 100\nm = 80\np = 50\nT = 500\ndry_run = true\n"
            .parse()
            .map_err(|e: hokalman::Error| e.to_string())?;
    let rows = run_bench(&cfg, false).map_err(|e| e.to_string())?;
    let want = [
        ("eg1", 450, 880),
        ("eg3", 7200, 8950),
        ("eg4", 12500, 19920),
    ];
    let mut seen = Vec::new();
    let ok = want.iter().all(|&(name, r, c)| {
        let dims: Vec<_> = rows
            .iter()
            .filter(|row| row.example == name && row.seed == SeedCol::Dry)
            .map(|row| (row.rows, row.cols))
            .collect();
        match dims.first() {
            Some(&(r0, c0)) => seen.push(format!("{name}={r0}x{c0}")),
            None => seen.push(format!("{name}=missing")),
        }
        !dims.is_empty() && dims.iter().all(|&d| d == (r, c))
    });
    Ok((ok, seen.join(" ")))
}

fn range_finder_trials(kind: TestMatrixKind) -> Vec<(usize, Vec<f64>, Vec<f64>, f64)> {
    let diag: Vec<f64> = (0..100).map(|j| 2f64.powi(-j)).collect();
    let a = DenseMatrix::rect_diag(200, 100, &diag);
    let sigma_next = diag[10];
    let mut out = Vec::new();
    for q in [0, 1] {
        let (mut rank_k, mut basis) = (Vec::new(), Vec::new());
        for seed in 0..100 {
            let cfg = RsvdConfig::new(10, 10)
                .power(q)
                .seed(seed)
                .test_matrix(kind);
            let r = rsvd_detailed(a.as_ref(), &cfg).unwrap();
            for (p, sink) in [(&r.factors.u, &mut rank_k), (&r.basis, &mut basis)] {
                let proj = p * &(&p.transpose() * &a);
                sink.push(spectral_norm(&(&a - &proj)).unwrap());
            }
        }
        out.push((q, rank_k, basis, sigma_next));
    }
    out
}

fn expected_error() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, rank_k, basis, sigma_next) in range_finder_trials(TestMatrixKind::Gaussian) {
        let bound = thm1_bound(10, 10, q, 200, 100, sigma_next).unwrap();
        let m = mean(&rank_k);
        ok &= m <= bound && m >= sigma_next * (1.0 - 1e-12);
        parts.push(format!(
            "q={q}: mean {m:.4e} in [{sigma_next:.4e}, {bound:.4e}] (k+l basis {:.2e})",
            mean(&basis)
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    Ok((ok, format!("{}, {secs:.2} s", parts.join("; "))))
}

fn power_spectrum() -> Outcome {
    let mut worst = 0f64;
    for seed in 0..10 {
        let a = DenseMatrix::gaussian(50, 30, 500 + seed);
        let sa = svd(&a).unwrap().s;
        let aat = &a * &a.transpose();
        for q in [1i32, 2] {
            let mut w = a.clone();
            for _ in 0..q {
                w = &aat * &w;
            }
            let sw = svd(&w).unwrap().s;
            for (x, y) in sa.iter().zip(&sw) {
                let want = x.powi(2 * q + 1);
                worst = worst.max((y - want).abs() / want);
            }
        }
    }
    Ok((worst <= 1e-8, format!("max rel deviation {worst:.2e}")))
}

fn hankel_perturbation() -> Outcome {
    let d = desk(5, 2, 3, 21, 21);
    let mut held = 0;
    let mut tightest = 0f64;
    for i in 0..100u64 {
        let g_hat = perturb(&d.g, 10f64.powi(-1 - (i % 5) as i32), 1000 + i);
        let r = lemma1_bounds(&d.g, &g_hat, 5, d.t1, d.t2).map_err(|e| e.to_string())?;
        tightest = tightest.max((r.h_err / r.h_bound).max(r.l_err / r.l_bound));
        held += usize::from(r.holds(1e-12));
    }
    Ok((
        held == 100,
        format!("{held}/100 hold, max measured/bound {tightest:.3}"),
    ))
}

struct NoisySetup {
    d: Desk,
    g_hat: MarkovParams,
    gnorm: f64,
}

fn noisy_setup() -> NoisySetup {
    let d = desk(10, 3, 3, 41, 6);
    let g_hat = perturb(&d.g, 1e-3, 77);
    let gnorm = d.g.distance(&g_hat).unwrap();
    NoisySetup { d, g_hat, gnorm }
}

fn l_errors(
    s: &NoisySetup,
    l: usize,
    q: usize,
    seeds: std::ops::Range<u64>,
) -> Result<Vec<f64>, String> {
    let truth_pair = build_hankel(&s.d.g, s.d.t1, s.d.t2).unwrap();
    let est_pair = build_hankel(&s.g_hat, s.d.t1, s.d.t2).unwrap();
    seeds
        .map(|seed| {
            let est = ho_kalman(&s.g_hat, 10, s.d.t1, s.d.t2, stochastic(10, l, q, seed))
                .map_err(|e| e.to_string())?;
            let (err, split) =
                l_error_split(&truth_pair, &est_pair, &est).map_err(|e| e.to_string())?;
            if err > split * (1.0 + 1e-12) {
                return Err(format!("triangle split violated: {err} > {split}"));
            }
            Ok(err)
        })
        .collect()
}

fn average_l_error() -> Outcome {
    let s = noisy_setup();
    let (p, m) = (s.d.g.outputs(), s.d.g.inputs());
    let l = 5;
    let avg = stochastic_bounds(10, l, 0, p, m, s.d.t1, s.d.t2, s.gnorm)
        .unwrap()
        .avg_bound;
    let avg_power = stochastic_bounds(10, l, 2, p, m, s.d.t1, s.d.t2, s.gnorm)
        .unwrap()
        .avg_bound_power;
    let m0 = mean(&l_errors(&s, l, 0, 0..50)?);
    let m2 = mean(&l_errors(&s, l, 2, 0..50)?);
    Ok((
        m0 <= avg && m2 <= avg_power,
        format!(
            "‖G−Ĝ‖={:.3e}; q=0 mean {m0:.3e} <= {avg:.3e}; q=2 mean {m2:.3e} <= {avg_power:.3e}",
            s.gnorm
        ),
    ))
}

fn deviation_rate() -> Outcome {
    let s = noisy_setup();
    let (p, m) = (s.d.g.outputs(), s.d.g.inputs());
    let bound = stochastic_bounds(10, 4, 0, p, m, s.d.t1, s.d.t2, s.gnorm)
        .unwrap()
        .dev_bound_el
        .ok_or("deviation bound needs l >= 4")?;
    let errs = l_errors(&s, 4, 0, 0..200)?;
    let violations = errs.iter().filter(|&&e| e > bound).count();
    let rate = violations as f64 / errs.len() as f64;
    Ok((
        rate <= 0.105,
        format!(
            "{violations}/200 above {bound:.3e} (rate {rate:.3}, max err {:.3e})",
            errs.iter().cloned().fold(0.0, f64::max)
        ),
    ))
}

fn factor_robustness() -> Outcome {
    let d = desk(5, 2, 3, 21, 21);
    let g_hat = perturb(&d.g, 1e-6, 4242);
    let truth_pair = build_hankel(&d.g, d.t1, d.t2).unwrap();
    let est_pair = build_hankel(&g_hat, d.t1, d.t2).unwrap();
    let truth: RealizationResult = ho_kalman(&d.g, 5, d.t1, d.t2, RealizationMode::Deterministic)
        .map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut held = 0;
    for seed in 0..50 {
        let est = ho_kalman(&g_hat, 5, d.t1, d.t2, stochastic(5, 5, 0, seed))
            .map_err(|e| e.to_string())?;
        match thm5_check(&truth, &est, &truth_pair, &est_pair).map_err(|e| e.to_string())? {
            Thm5Outcome::Checked(detail) => {
                held += usize::from(detail.holds());
                details.push(detail);
            }
            Thm5Outcome::NotApplicable { l_err, sigma_min } => {
                return Ok((
                    false,
                    format!(
                        "precondition failed: ‖L−L̃‖={l_err:.3e} > σ_min/2={:.3e}",
                        sigma_min / 2.0
                    ),
                ));
            }
        }
    }
    let mean = thm5_mean(&details).map_err(|e| e.to_string())?;
    Ok((
        held >= 48 && mean.holds(),
        format!(
            "{held}/50 per trial; mean O err {:.2e} <= {:.2e} (E sqrt) / {:.2e} (sqrt E), mean A err {:.2e} <= {:.2e}",
            mean.mean_o_err, mean.bc_bound_mean_of_sqrt, mean.bc_bound_sqrt_of_mean, mean.mean_a_err, mean.a_bound
        ),
    ))
}

fn ols_rate() -> Outcome {
    let ss = random_system(5, 2, 2, 9).unwrap();
    let horizon = 10;
    let g = markov_from_ss(&ss, horizon).unwrap();
    let counts = [100usize, 400, 1600];
    let mut medians = Vec::new();
    for &n in &counts {
        let errs: Vec<f64> = (0..10)
            .map(|seed| {
                let data = simulate_rollouts(&ss, n, horizon, 1.0, 1.0, 0.5, 31 * seed + n as u64)
                    .unwrap();
                g.distance(&estimate_markov(&data).unwrap()).unwrap()
            })
            .collect();
        medians.push(median(&errs));
    }
    let xs: Vec<f64> = counts.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|e| e.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((
        (-0.7..=-0.3).contains(&slope),
        format!(
            "slope {slope:.3}, medians {:.3e} {:.3e} {:.3e}",
            medians[0], medians[1], medians[2]
        ),
    ))
}

fn sweeps() -> Outcome {
    // oversampling: OLS estimate of a 10-state system, paired seeds over l
    let ss = random_system(10, 3, 3, 12).unwrap();
    let horizon = 41;
    let (t1, t2) = default_split(horizon).unwrap();
    let data = simulate_rollouts(&ss, 400, horizon, 1.0, 1.0, 0.5, 5).unwrap();
    let g_hat = estimate_markov(&data).map_err(|e| e.to_string())?;
    let mut medians = Vec::new();
    for l in 2..=10 {
        let errs: Vec<f64> = (0..30)
            .map(|seed| {
                ho_kalman(&g_hat, 10, t1, t2, stochastic(10, l, 1, seed))
                    .and_then(|r| hinf_error(&ss, &r.ss, 1024))
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        medians.push(median(&errs));
    }
    let endpoint = medians[8] <= medians[0];
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);

    // power iterations: wall time of the factorization at 2000x2970
    let d = desk(40, 30, 20, 200, 3);
    let g = perturb(&d.g, 1e-4, 8);
    let mut times = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..10 {
        for q in 1..=4 {
            let r = ho_kalman(&g, 40, d.t1, d.t2, stochastic(40, 10, q, seed))
                .map_err(|e| e.to_string())?;
            times[q - 1].push(r.timing);
        }
    }
    let means: Vec<f64> = times.iter().map(|t| mean(t)).collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    Ok((
        endpoint && increasing,
        format!(
            "median err_hinf l=2 {:.4e}, l=10 {:.4e} (monotone over 2..10: {monotone}); mean time q=1..4 [{}] s",
            medians[0],
            medians[8],
            means.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn performance() -> Outcome {
    let start = Instant::now();
    let d = desk(60, 50, 40, 360, 60);
    let g = perturb(&d.g, 1e-6, 61);
    let rsvd =
        ho_kalman(&g, 60, d.t1, d.t2, stochastic(60, 10, 0, 0)).map_err(|e| e.to_string())?;
    let det =
        ho_kalman(&g, 60, d.t1, d.t2, RealizationMode::Deterministic).map_err(|e| e.to_string())?;
    let total = start.elapsed().as_secs_f64();
    let ratio = rsvd.timing / det.timing;
    Ok((
        ratio <= 0.5 && total <= 900.0,
        format!(
            "7200x8950: rsvd {:.3} s, det {:.3} s, speed-up {:.1}x, total {total:.0} s",
            rsvd.timing,
            det.timing,
            1.0 / ratio
        ),
    ))
}

fn srft() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, rank_k, basis, sigma_next) in range_finder_trials(TestMatrixKind::Srft) {
        let bound = srft_bound(10, 10, 200, 100, sigma_next).unwrap();
        let within = rank_k.iter().filter(|&&e| e <= bound).count();
        let within_basis = basis.iter().filter(|&&e| e <= bound).count();
        ok &= within >= 95 && within_basis >= 95;
        parts.push(format!(
            "q={q}: {within}/100 (k+l basis {within_basis}/100) <= {bound:.4e}"
        ));
    }
    let n = 10f64;
    let needed = 4.0 * (n.sqrt() + (8.0 * (n * 100.0).ln()).sqrt()).powi(2) * n.ln();
    parts.push(format!(
        "sample-size condition needs l+n >= {needed:.0}, have 20"
    ));
    Ok((ok, parts.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("noise-free exact recovery", exact_recovery),
        ("table geometry", table_geometry),
        ("range finder expected error", expected_error),
        ("power-scheme spectrum", power_spectrum),
        ("hankel perturbation", hankel_perturbation),
        ("average L error", average_l_error),
        ("deviation failure rate", deviation_rate),
        ("factor robustness", factor_robustness),
        ("least-squares rate", ols_rate),
        ("oversampling and power sweeps", sweeps),
        ("performance smoke", performance),
        ("srft deviation", srft),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|k| k != id) {
            continue;
        }
        let (pass, detail) = match std::panic::catch_unwind(run) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "acceptance {id:2} {tag} {name}: {detail}");
        let _ = out.flush();
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        let _ = writeln!(out, "failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
