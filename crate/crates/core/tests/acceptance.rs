//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `DSYK_ACCEPT=P1,P5` restricts the run to the listed criteria.

use std::time::Instant;

use dsyk::compare::{compare_green, Regime};
use dsyk::contour::ContourGrid;
use dsyk::largeq::{liouville_residual, solve_b};
use dsyk::majorana::{build_hamiltonian, majorana_matrices, CouplingTensor};
use dsyk::oracle::{build_tfd, exact_purity_curve, lindblad_step, LindbladSystem};
use dsyk::saddle::{
    critical_mu_scan, estimate_critical_mu, page_curve, self_energy, solve_saddle, PageCurveSettings, SeedClass,
    SolverSettings,
};
use dsyk::trajectory::{disorder_seed, estimate_purity, estimate_purity_detailed, Proposal, TrajectorySettings};
use dsyk::ModelParams;
use num_complex::Complex64 as C;

type Outcome = (bool, String);

fn check(ok: bool, msg: String) -> Outcome {
    (ok, msg)
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// P1 and P2 share one curve.
fn p1_p2() -> (Outcome, Outcome) {
    let mu = 0.01;
    let p = ModelParams::new(100, 4, 1.0, mu, 0.0).unwrap();
    let short: Vec<f64> = (0..10).map(|k| 0.02 + 0.02 * k as f64).collect();
    let long = [5.0, 5.5, 6.0];
    let times: Vec<f64> = short.iter().chain(&long).map(|x| x / mu).collect();
    let curve = match page_curve(&p, &times, &PageCurveSettings::default()) {
        Ok(c) => c,
        Err(e) => return ((false, format!("page curve failed: {e}")), (false, "no curve".into())),
    };
    let at = |t: f64| {
        let i = curve.times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
        curve.s_min[i].map(|s| s / p.n as f64)
    };
    let s_short: Option<Vec<f64>> = short.iter().map(|x| at(x / mu)).collect();
    let p1 = match s_short {
        Some(s) => {
            let ts: Vec<f64> = short.iter().map(|x| x / mu).collect();
            let k = slope(&ts, &s);
            let rel = (k - 2.0 * mu).abs() / (2.0 * mu);
            check(rel < 0.05, format!("slope {k:.6} vs 2mu = {:.6}, rel. dev. {rel:.4} (tol 0.05)", 2.0 * mu))
        }
        None => (false, "missing saddle on the short-time window".into()),
    };
    let ln2 = std::f64::consts::LN_2;
    let worst = long
        .iter()
        .map(|x| at(x / mu).map(|s| (s - ln2).abs() / ln2).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let p2 = check(worst < 0.02, format!("max |S/N - ln2| / ln2 = {worst:.3e} on mu t in [5, 6] (tol 0.02)"));
    (p1, p2)
}

fn p3() -> Outcome {
    let p = ModelParams::new(100, 4, 1.0, 0.01, 0.0).unwrap();
    let mus = [0.01, 0.05, 0.1, 0.12, 0.13, 0.14, 0.15, 0.16, 0.18, 0.2];
    let mu_t: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let settings = PageCurveSettings { n_steps: 100, ..Default::default() };
    let rows = match critical_mu_scan(&p, &mus, &mu_t, &settings) {
        Ok(r) => r,
        Err(e) => return (false, format!("scan failed: {e}")),
    };
    let eps = 0.3;
    let gaps: Vec<String> = rows.iter().map(|r| format!("{}:{:.3}", r.mu, r.slope_gap)).collect();
    let open = rows[0].slope_gap > eps;
    let mu_c = estimate_critical_mu(&rows, eps);
    let closes = rows.iter().filter(|r| r.mu > mu_c.unwrap_or(f64::INFINITY)).all(|r| r.slope_gap < eps);
    let in_window = mu_c.is_some_and(|m| (0.136..=0.176).contains(&m));
    check(
        open && closes && in_window,
        format!("mu_c = {mu_c:?} (window [0.136, 0.176], eps {eps}); gaps {}", gaps.join(" ")),
    )
}

fn p4() -> Outcome {
    let q = 16;
    let tol = f64::max(1e-2, 1.0 / q as f64);
    let j = (2f64.powi(q as i32 - 1) / q as f64).sqrt();
    let st = SolverSettings { tol: 1e-9, max_iter: 3000, ..Default::default() };
    let mut ok = true;
    let mut msg = Vec::new();
    for (regime, mu_hat, t, n) in [(Regime::ShortTime, 0.5, 2.0, 160), (Regime::LongTime, 2.0, 16.0, 200)] {
        let p = ModelParams::new(q, q, j, mu_hat / q as f64, 0.0).unwrap();
        match compare_green(&p, t, n, regime, 2.0, &st) {
            Ok(c) => {
                let m = c.max_diff();
                ok &= c.converged && m < tol && !c.rows.is_empty();
                msg.push(format!("{regime:?} muhat={mu_hat} t={t}: max {m:.4} over {} points", c.rows.len()));
            }
            Err(e) => {
                ok = false;
                msg.push(format!("{regime:?}: {e}"));
            }
        }
    }
    check(ok, format!("{} (tol {tol})", msg.join("; ")))
}

fn p5() -> Outcome {
    let p = ModelParams::new(6, 4, 1.0, 0.1, 0.0).unwrap();
    let ts: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let s = TrajectorySettings { n_traj: 10_000, n_disorder: 5, master_seed: 2024, dt: None, batch_size: 100, ..Default::default() };
    let mc = estimate_purity(&p, &ts, &s).unwrap();
    let seeds: Vec<u64> = (0..5).map(|r| disorder_seed(s.master_seed, r)).collect();
    let exact = exact_purity_curve(&p, &ts, &seeds).unwrap();
    let hits = mc.iter().zip(&exact.gamma).filter(|(e, g)| (e.gamma_mean - *g).abs() < 3.0 * e.gamma_stderr).count();
    let frac = hits as f64 / ts.len() as f64;
    check(frac >= 0.95, format!("{hits}/{} time points within 3 sigma", ts.len()))
}

fn p6() -> Outcome {
    let mu = 0.05;
    let ts: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let reference = ModelParams::new(100, 4, 1.0, mu, 0.0).unwrap();
    let curve = page_curve(&reference, &ts, &PageCurveSettings { n_steps: 120, ..Default::default() }).unwrap();
    let large_n: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let i = curve.times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
            curve.s_min[i].unwrap() / reference.n as f64
        })
        .collect();
    let mixture = vec![Proposal::PLAIN, Proposal::rate(0.5), Proposal::rate(0.2), Proposal::rate(0.05)];
    let mut devs = Vec::new();
    for (n, n_traj, n_disorder) in [(12, 2400, 2), (16, 2400, 2), (20, 1200, 1)] {
        let p = ModelParams::new(n, 4, 1.0, mu, 0.0).unwrap();
        let s = TrajectorySettings {
            n_traj,
            n_disorder,
            master_seed: 11,
            dt: None,
            batch_size: 40,
            proposal: mixture.clone(),
        };
        let est = estimate_purity(&p, &ts, &s).unwrap();
        let (dev, err) = est
            .iter()
            .zip(&large_n)
            .map(|(e, r)| ((e.entropy / n as f64 - r).abs(), e.entropy_stderr / n as f64))
            .fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
        devs.push((n, dev, err));
    }
    let ok = devs.windows(2).all(|w| w[1].1 < w[0].1);
    let text: Vec<String> = devs.iter().map(|(n, d, e)| format!("N={n}: {d:.4} (+- {e:.4})")).collect();
    check(ok, format!("max_t |S/N - large-N| {}", text.join(", ")))
}

fn p7() -> Outcome {
    let mut worst = 0.0f64;
    for q in [4, 16] {
        for mu_hat in [0.1, 0.5, 2.0] {
            let lp = solve_b(q, 1.0, mu_hat).unwrap();
            for i in 1..=10 {
                for k in 1..=10 {
                    let r = liouville_residual(0.3 * i as f64, 0.3 * k as f64, 1e-4, &lp);
                    worst = worst.max(r.abs());
                }
            }
        }
    }
    check(worst < 1e-6, format!("max residual {worst:.3e} on a 10x10 interior grid (tol 1e-6)"))
}

fn p8() -> Outcome {
    let mut fails = Vec::new();

    // Majorana algebra
    for n in (2..=12).step_by(2) {
        let chis = majorana_matrices(n).unwrap();
        let dim = chis[0].dim;
        let mut err = 0.0f64;
        for (i, a) in chis.iter().enumerate() {
            for (j, b) in chis.iter().enumerate() {
                let ac = &a.values * &b.values + &b.values * &a.values;
                let want = if i == j { 1.0 } else { 0.0 };
                for r in 0..dim {
                    for c in 0..dim {
                        let w = if r == c { want } else { 0.0 };
                        err = err.max((ac[(r, c)] - C::new(w, 0.0)).norm());
                    }
                }
            }
        }
        if err > 1e-14 {
            fails.push(format!("anticommutator off by {err:e} at N={n}"));
        }
    }

    // G and Sigma antisymmetry
    let p = ModelParams::new(4, 4, 1.0, 0.1, 0.0).unwrap();
    for class in [SeedClass::Diagonal, SeedClass::Wormhole] {
        let grid = ContourGrid::new(&p, 2.0, 40).unwrap();
        let sol = solve_saddle(&grid, &p, class, &SolverSettings::default()).unwrap();
        let sigma = self_energy(&sol.g, &grid, &p);
        let a = sol.g.max_asymmetry().max(sigma.max_asymmetry());
        if a > 1e-12 {
            fails.push(format!("{class:?} field asymmetric by {a:e}"));
        }
    }

    // oracle: bounds, trace and positivity
    let po = ModelParams::new(6, 4, 1.0, 0.2, 0.0).unwrap();
    let ct = CouplingTensor::sample(&po, 9).unwrap();
    let h = build_hamiltonian(&ct).unwrap();
    let sys = LindbladSystem::new(&h, 4, po.mu).unwrap();
    let mut rho = build_tfd(&h, 4, po.beta).unwrap();
    let floor = 0.5f64.powi(po.n as i32);
    for _ in 0..20 {
        rho = lindblad_step(&rho, &sys, 0.5).unwrap();
        let tr = rho.trace();
        let lam = rho.min_eigenvalue().unwrap();
        let g = rho.purity();
        if (tr - C::new(1.0, 0.0)).norm() > 1e-10 || lam < -1e-10 || g > 1.0 + 1e-12 || g < floor - 1e-12 {
            fails.push(format!("oracle state off: trace {tr}, min eigenvalue {lam:e}, purity {g}"));
            break;
        }
    }

    // trajectory: bounds and worker-count independence
    let pt = ModelParams::new(6, 4, 1.0, 0.2, 0.0).unwrap();
    let ts = [0.0, 1.0, 4.0, 10.0];
    let s = TrajectorySettings { n_traj: 200, n_disorder: 2, master_seed: 4, dt: None, batch_size: 20, ..Default::default() };
    let runs: Vec<_> = [1, 3]
        .iter()
        .map(|&k| {
            rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap().install(|| estimate_purity_detailed(&pt, &ts, &s).unwrap())
        })
        .collect();
    if runs[0] != runs[1] {
        fails.push("trajectory estimate depends on the worker count".into());
    }
    if runs[0].estimates.iter().any(|e| !(0.0..=1.0 + 1e-12).contains(&e.gamma_mean)) {
        fails.push("trajectory purity outside [0, 1]".into());
    }

    // S(0) = 0 and S(mu = 0, t) = 0 on all three routes
    let routes = |p: &ModelParams, t: f64| -> [f64; 3] {
        let g2 = ContourGrid::new(p, t, 40).unwrap();
        let g1 = ContourGrid::single(p, t, 40).unwrap();
        let s2 = solve_saddle(&g2, p, SeedClass::Diagonal, &SolverSettings::default()).unwrap();
        let s1 = solve_saddle(&g1, p, SeedClass::Diagonal, &SolverSettings::default()).unwrap();
        let saddle = (s2.action - 2.0 * s1.action).re * p.n as f64;
        let st = TrajectorySettings { n_traj: 100, n_disorder: 1, master_seed: 1, dt: None, batch_size: 10, ..Default::default() };
        let traj = estimate_purity(p, &[t], &st).unwrap()[0].entropy;
        let oracle = exact_purity_curve(p, &[t], &[3]).unwrap().entropy[0];
        [saddle, traj, oracle]
    };
    let zero_t = routes(&ModelParams::new(6, 4, 1.0, 0.2, 0.0).unwrap(), 0.0);
    let closed = routes(&ModelParams::new(6, 4, 1.0, 0.0, 0.0).unwrap(), 3.0);
    for (what, v) in [("S(0)", zero_t), ("S(mu=0, t=3)", closed)] {
        if v.iter().any(|s| s.abs() > 1e-8) {
            fails.push(format!("{what} = {v:?} on saddle/trajectory/oracle"));
        }
    }

    check(fails.is_empty(), if fails.is_empty() { "all property checks hold".into() } else { fails.join("; ") })
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("DSYK_ACCEPT").ok().map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|l| l.iter().any(|x| x == id));
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let run = |id: &'static str, f: &dyn Fn() -> Outcome, results: &mut Vec<(&str, Outcome, f64)>| {
        if wanted(id) {
            let t0 = Instant::now();
            let out = f();
            let secs = t0.elapsed().as_secs_f64();
            println!("{id} {} {} [{secs:.0} s]", if out.0 { "PASS" } else { "FAIL" }, out.1);
            results.push((id, out, secs));
        }
    };
    if wanted("P1") || wanted("P2") {
        let t0 = Instant::now();
        let (a, b) = p1_p2();
        let secs = t0.elapsed().as_secs_f64();
        for (id, out) in [("P1", a), ("P2", b)] {
            if wanted(id) {
                println!("{id} {} {} [{secs:.0} s]", if out.0 { "PASS" } else { "FAIL" }, out.1);
                results.push((id, out, secs));
            }
        }
    }
    run("P3", &p3, &mut results);
    run("P4", &p4, &mut results);
    run("P5", &p5, &mut results);
    run("P6", &p6, &mut results);
    run("P7", &p7, &mut results);
    run("P8", &p8, &mut results);
    let failed: Vec<&str> = results.iter().filter(|r| !r.1 .0).map(|r| r.0).collect();
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
