//! Acceptance suite. Prints one line per criterion and exits non-zero if any fails.

use std::time::{Duration, Instant};

use jumprisk_core::constrained::{
    certify_es_gamma, certify_var_gamma, rho_es_gamma1, rho_var_gamma1, slack_path, solve_diff_gamma,
    solve_es_gamma1, solve_var_gamma1, var_slack_path,
};
use jumprisk_core::negjumps::{adjusted_solve, beta_hat, effective_level, epsilon_t, EpsilonMethod};
use jumprisk_core::riskmetrics::{es_stoch_exp, normal_quantile, order_rank, quantile_stoch_exp};
use jumprisk_core::simulate::{
    constraint_profile_mc, epsilon_mc, grid_oracle, jump_functional_mc, quantile_ci_ranks, simulate, NodeMoments,
    PathEngine, PathSample,
};
use jumprisk_core::unconstrained::{compare_merton, cost_function, solve_power_equal};
use jumprisk_core::{AssetJumps, JumpLaw, MarketModel, PointMass, RiskKind, RiskSpec, Strategy, UtilitySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MC_PATHS: u64 = 1_000_000;
const LEMMA_RUNTIME: Duration = Duration::from_secs(30);
const ORACLE_RUNTIME: Duration = Duration::from_secs(120);
const CLOSED_FORM_TOL: f64 = 1e-8;
const DOMINANCE_MARGIN: f64 = -1e-6;
const ROOT_RESIDUAL: f64 = 1e-12;
const CONSUME_ALL_TOL: f64 = 1e-6;
const SE_BAND: f64 = 3.0;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn positive_two_point() -> JumpLaw {
    JumpLaw::point_masses(vec![PointMass { size: 0.05, prob: 0.5 }, PointMass { size: 0.15, prob: 0.5 }]).unwrap()
}

/// ‖y‖_T = a with a unit-volatility asset and μ = r, on a two-node grid.
fn stoch_exp_samples(a: f64, seed: u64) -> Vec<f64> {
    let m = MarketModel::constant_1d(1.0, 2, 0.0, 0.0, 1.0, AssetJumps::none()).unwrap();
    let s = Strategy::constant_pi(&m, &[a], vec![0.0; 2]).unwrap();
    let mut col = simulate(&m, &s, 1.0, MC_PATHS as usize, seed).unwrap().stoch_exp_column(1);
    col.sort_by(f64::total_cmp);
    col
}

fn quantile_lemma() -> Outcome {
    let start = Instant::now();
    let mut worst = String::new();
    let mut ok = true;
    for (i, a) in [0.1, 0.3, 0.6].into_iter().enumerate() {
        let col = stoch_exp_samples(a, 100 + i as u64);
        for beta in [0.01, 0.05] {
            let (l, u) = quantile_ci_ranks(col.len(), beta, 0.99);
            let q = quantile_stoch_exp(a, beta);
            if !(col[l - 1] <= q && q <= col[u - 1]) {
                ok = false;
                worst = format!("a={a} beta={beta}: {q} not in [{}, {}]", col[l - 1], col[u - 1]);
            }
        }
    }
    let el = start.elapsed();
    check(ok && el < LEMMA_RUNTIME, format!("6 cases in 99% order-statistic CI {worst}; {:.1}s", el.as_secs_f64()))
}

fn es_lemma() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, a) in [0.1, 0.3, 0.6].into_iter().enumerate() {
        let col = stoch_exp_samples(a, 210 + i as u64);
        for beta in [0.01, 0.05] {
            let k = order_rank(col.len(), beta);
            let tail = &col[..k];
            let mean = tail.iter().sum::<f64>() / k as f64;
            let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
            let q = col[k - 1];
            let frac = k as f64 / col.len() as f64;
            let se = ((var + (1.0 - frac) * (mean - q).powi(2)) / k as f64).sqrt();
            worst = worst.max((mean - es_stoch_exp(a, beta)).abs() / se);
        }
    }
    let el = start.elapsed();
    check(worst < SE_BAND && el < LEMMA_RUNTIME, format!("max |error|/SE = {worst:.2}; {:.1}s", el.as_secs_f64()))
}

fn levy_identity() -> Outcome {
    let law = JumpLaw::point_masses(vec![PointMass { size: -0.3, prob: 0.4 }, PointMass { size: 0.2, prob: 0.6 }]).unwrap();
    let m = MarketModel::constant_1d(1.0, 9, 0.02, 0.1, 0.3, AssetJumps { intensity: 1.5, law }).unwrap();
    let a = |_t: f64, _j: usize, z: f64| 0.5 * (0.8 * z).ln_1p();
    let exact = m.expected_jump_exponential(a).unwrap();
    let (mean, se) = jump_functional_mc(&m, a, MC_PATHS, 300);
    let z = (mean - exact).abs() / se;
    check(z < SE_BAND, format!("MC {mean:.6} vs {exact:.6}, {z:.2} SE"))
}

fn pure_diffusion() -> Outcome {
    let mut worst = 0.0f64;
    for (r, mu, sigma, gamma) in [(0.03, 0.06, 0.3, 0.5), (0.01, 0.05, 0.25, 0.3), (0.05, 0.09, 0.4, 0.7)] {
        let m = MarketModel::constant_1d(1.0, 129, r, mu, sigma, AssetJumps::none()).unwrap();
        let u = UtilitySpec::equal(gamma).unwrap();
        let rep = solve_power_equal(&m, &u, 1.7).unwrap();
        let q = 1.0 / (1.0 - gamma);
        let theta: f64 = (mu - r) / sigma;
        let h = gamma * r + 0.5 * gamma * q * theta * theta;
        let nu = q * h;
        for (k, &t) in m.grid().nodes().iter().enumerate() {
            let s = 1.0 - t;
            let f = (nu * s).exp() + (nu * s).exp_m1() / nu;
            worst = worst.max((rep.strategy.y()[k][0] - q * theta).abs());
            worst = worst.max((rep.strategy.v()[k] - 1.0 / f).abs());
            if k == 0 {
                worst = worst.max((rep.j_star - f.powf(1.0 - gamma) * 1.7f64.powf(gamma)).abs());
            }
        }
    }
    check(worst < CLOSED_FORM_TOL, format!("max deviation {worst:.2e}"))
}

fn grid_dominance() -> Outcome {
    let start = Instant::now();
    let pi_grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let v_grid: Vec<f64> = (0..=50).map(|i| i as f64 / 20.0).collect();
    let cases = [
        (0.3, 0.03, 0.08, 0.35, 0.0),
        (0.5, 0.03, 0.07, 0.3, 0.0),
        (0.8, 0.02, 0.05, 0.3, 0.0),
        (0.5, 0.02, 0.08, 0.4, 0.5),
        (0.3, 0.03, 0.09, 0.45, 1.0),
    ];
    let mut worst = f64::INFINITY;
    for (gamma, r, mu, sigma, lambda) in cases {
        let jumps = if lambda > 0.0 { AssetJumps { intensity: lambda, law: positive_two_point() } } else { AssetJumps::none() };
        let m = MarketModel::constant_1d(1.0, 257, r, mu, sigma, jumps).unwrap();
        let u = UtilitySpec::equal(gamma).unwrap();
        let rep = solve_power_equal(&m, &u, 1.0).unwrap();
        let best = grid_oracle(&m, &u, None, 1.0, &pi_grid, &v_grid).unwrap();
        worst = worst.min(rep.j_star - best.j);
    }
    let el = start.elapsed();
    check(worst >= DOMINANCE_MARGIN && el < ORACLE_RUNTIME, format!("min J* − grid best = {worst:.3e}; {:.1}s", el.as_secs_f64()))
}

fn gamma_one_feasibility() -> Outcome {
    let m = MarketModel::constant_1d(1.0, 512, 0.03, 0.10, 0.25, AssetJumps { intensity: 0.5, law: positive_two_point() }).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for kind in [RiskKind::VaR, RiskKind::ES] {
        let risk = RiskSpec::new(kind, 0.05, 0.1, Default::default()).unwrap();
        let (rep, rho) = match kind {
            RiskKind::VaR => (solve_var_gamma1(&m, &risk, 1.0).unwrap(), rho_var_gamma1(&m, &risk).unwrap()),
            RiskKind::ES => (solve_es_gamma1(&m, &risk, 1.0).unwrap(), rho_es_gamma1(&m, &risk).unwrap()),
        };
        let profile = constraint_profile_mc(&m, &rep.strategy, &risk, 1.0, MC_PATHS, 600).unwrap();
        let sup_lo = profile.iter().map(|p| p.lo).fold(f64::NEG_INFINITY, f64::max);
        let sup = profile.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
        ok &= sup_lo <= 1.0 && rep.diagnostics.max_residual < ROOT_RESIDUAL && profile.len() == 512;
        details.push(format!(
            "{kind:?} rho*={:.6} residual={:.1e} sup profile={sup:.4}",
            rho.rho, rep.diagnostics.max_residual
        ));
    }
    check(ok, details.join("; "))
}

fn inactivity_certificates() -> Outcome {
    let mut inactive = [0usize; 2];
    let mut worst = f64::INFINITY;
    for (r, mu, sigma, lambda) in [(0.03, 0.07, 0.3, 0.0), (0.02, 0.06, 0.35, 0.5), (0.03, 0.08, 0.4, 1.0)] {
        let jumps = if lambda > 0.0 { AssetJumps { intensity: lambda, law: positive_two_point() } } else { AssetJumps::none() };
        let m = MarketModel::constant_1d(1.0, 257, r, mu, sigma, jumps).unwrap();
        for gamma in [0.3, 0.5] {
            let u = UtilitySpec::equal(gamma).unwrap();
            for kappa in [0.3, 0.6, 0.9, 0.99] {
                for (i, kind) in [RiskKind::VaR, RiskKind::ES].into_iter().enumerate() {
                    let risk = RiskSpec::new(kind, 0.05, kappa, Default::default()).unwrap();
                    let cert = match kind {
                        RiskKind::VaR => certify_var_gamma(&m, &u, &risk),
                        RiskKind::ES => certify_es_gamma(&m, &u, &risk),
                    };
                    let Ok(cert) = cert else { continue };
                    if !cert.active {
                        inactive[i] += 1;
                        let rep = cert.report.as_ref().unwrap();
                        let slack = slack_path(&m, &rep.strategy, &risk.level(), kappa, kind);
                        worst = worst.min(slack.iter().cloned().fold(f64::INFINITY, f64::min));
                    }
                }
            }
        }
    }
    check(
        inactive[0] > 0 && inactive[1] > 0 && worst >= 0.0,
        format!("{} VaR and {} ES inactive certificates, min slack {worst:.3e}", inactive[0], inactive[1]),
    )
}

fn consume_all() -> Outcome {
    let m = MarketModel::constant_1d(1.0, 1025, 0.05, 0.08, 0.3, AssetJumps::none()).unwrap();
    let u = UtilitySpec::new(0.3, 0.7).unwrap();
    let risk = RiskSpec::var(0.05, 0.2).unwrap();
    let x = 1.0;
    let rep = match solve_diff_gamma(&m, &u, &risk, x) {
        Ok(r) => r,
        Err(e) => return Err(format!("solver refused: {e}")),
    };
    let cost = cost_function(&m, &u, &rep.strategy, x).unwrap();
    let gap = (cost - rep.j_upper).abs();
    let lvl = risk.level();
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let n = m.grid().len();
    let mut sampled = 0;
    let mut best = f64::NEG_INFINITY;
    while sampled < 10_000 {
        let pi: f64 = rng.gen();
        let shape = rng.gen_range(0..3);
        let scale: f64 = rng.gen_range(0.0..0.6);
        let v: Vec<f64> = m
            .grid()
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &t)| match shape {
                0 => scale,
                1 => scale * rep.strategy.v()[k] / rep.strategy.v()[n - 1],
                _ => scale * 2.0 * t,
            })
            .collect();
        let s = Strategy::constant_pi(&m, &[pi.powi(2)], v).unwrap();
        if var_slack_path(&m, &s, &lvl, risk.kappa).iter().any(|v| *v < 0.0) {
            continue;
        }
        sampled += 1;
        best = best.max(cost_function(&m, &u, &s, x).unwrap());
    }
    check(
        rep.condition_ok && gap < CONSUME_ALL_TOL && best <= rep.j_upper + CONSUME_ALL_TOL,
        format!("|cost − M̂| = {gap:.2e}, best of 10^4 feasible = {best:.6} vs {:.6}", rep.j_upper),
    )
}

fn comparison_lemma() -> Outcome {
    let mut ok = true;
    let mut ordered_csv = true;
    for (r, mu, sigma, lambda, gamma) in [(0.02, 0.08, 0.4, 0.5, 0.5), (0.03, 0.1, 0.35, 1.0, 0.3), (0.01, 0.06, 0.3, 2.0, 0.6)] {
        let m = MarketModel::constant_1d(1.0, 129, r, mu, sigma, AssetJumps { intensity: lambda, law: positive_two_point() }).unwrap();
        let c = compare_merton(&m, &UtilitySpec::equal(gamma).unwrap()).unwrap();
        for k in 0..c.t.len() {
            ok &= c.pi_jump[k] <= c.pi_diffusion[k] && c.v_jump[k] >= c.v_diffusion[k];
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        ordered_csv &= lines.next() == Some("t,pi_jump,pi_diffusion,v_jump,v_diffusion");
        for line in lines {
            let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            ordered_csv &= f[1] <= f[2] && f[3] >= f[4];
        }
    }
    check(ok && ordered_csv, format!("ordering holds at every node: {ok}, csv: {ordered_csv}"))
}

fn negative_jumps() -> Outcome {
    let law = JumpLaw::point_masses(vec![PointMass { size: -0.2, prob: 0.5 }, PointMass { size: 0.1, prob: 0.5 }]).unwrap();
    let m = MarketModel::constant_1d(1.0, 512, 0.03, 0.10, 0.25, AssetJumps { intensity: 0.02, law }).unwrap();
    let risk = RiskSpec::var(0.05, 0.1).unwrap();
    let eps = epsilon_t(m.jumps(), 1.0, EpsilonMethod::ExactThinning);
    let rep = adjusted_solve(&m, &risk, &UtilitySpec::equal(1.0).unwrap(), 1.0).unwrap();
    let profile = constraint_profile_mc(&m, &rep.strategy, &risk, 1.0, MC_PATHS, 1000).unwrap();
    let sup_lo = profile.iter().map(|p| p.lo).fold(f64::NEG_INFINITY, f64::max);
    let sup = profile.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);

    let mut monotone = true;
    for beta in [0.01, 0.05, 0.2] {
        let mut prev = beta;
        for i in 1..100 {
            let e = beta * i as f64 / 100.0;
            let b = beta_hat(beta, e).unwrap();
            monotone &= b <= prev && normal_quantile(b).unwrap() < normal_quantile(beta).unwrap();
            prev = b;
        }
    }
    for method in [EpsilonMethod::PaperFormula, EpsilonMethod::ExactThinning] {
        let mut prev = 0.0;
        for i in 0..=200 {
            let e = epsilon_t(m.jumps(), i as f64 / 100.0, method);
            monotone &= e >= prev;
            prev = e;
        }
    }
    let (p, se) = epsilon_mc(&m, MC_PATHS, 1001);
    let z = (p - eps).abs() / se;
    let level = effective_level(&m, &risk).unwrap();
    check(
        eps < risk.beta && sup_lo <= 1.0 && monotone && z < SE_BAND,
        format!(
            "eps_T={eps:.5} beta_hat={:.5} sup profile={sup:.4} monotone={monotone} eps MC {z:.2} SE",
            level.beta_eff
        ),
    )
}

fn martingale_optimality() -> Outcome {
    let law = positive_two_point();
    let m = MarketModel::constant_1d(1.0, 257, 0.03, 0.08, 0.4, AssetJumps { intensity: 0.5, law }).unwrap();
    let u = UtilitySpec::equal(0.5).unwrap();
    let gamma = 0.5;
    let x = 1.0;
    let rep = solve_power_equal(&m, &u, x).unwrap();
    let checkpoints = [0usize, 64, 128, 192, 256];
    let times = m.grid().nodes().to_vec();
    let rho = rep.rho_t.clone();
    let moments = |s: &Strategy, seed: u64| {
        let engine = PathEngine::new(&m, s, x).unwrap();
        let v = s.v().to_vec();
        let (times, rho) = (times.clone(), rho.clone());
        let f = move |p: &PathSample, out: &mut [f64]| {
            let mut running = 0.0;
            let mut prev = (v[0] * p.wealth(0)).powf(gamma);
            let mut slot = 0;
            for k in 0..times.len() {
                if k > 0 {
                    let c = (v[k] * p.wealth(k)).powf(gamma);
                    running += 0.5 * (prev + c) * (times[k] - times[k - 1]);
                    prev = c;
                }
                if checkpoints.contains(&k) {
                    out[slot] = rho[k] * p.wealth(k).powf(gamma) + running;
                    slot += 1;
                }
            }
            // increments between checkpoints, so their errors are estimated path by path
            let c = checkpoints.len();
            for i in 0..c - 1 {
                out[c + i] = out[i + 1] - out[i];
            }
        };
        let o = engine.run(seed, 200_000, || NodeMoments::new(2 * checkpoints.len() - 1, f.clone()));
        (o.mean(), o.std_error())
    };
    let (mean, se) = moments(&rep.strategy, 1100);
    let c = checkpoints.len();
    let flat = mean[..c].iter().zip(&se[..c]).all(|(m, s)| (m - rep.j_star).abs() < SE_BAND * s.max(1e-15));
    let pi = rep.strategy.pi()[0][0];
    let v = rep.strategy.v().to_vec();
    let n = v.len();
    let perturbed = [
        Strategy::constant_pi(&m, &[pi * 0.5], v.clone()).unwrap(),
        Strategy::constant_pi(&m, &[pi], v.iter().map(|a| a * 1.5).collect()).unwrap(),
        Strategy::constant_pi(&m, &[(pi + 0.4).min(1.0)], vec![0.2; n]).unwrap(),
    ];
    let mut decreasing = true;
    for (i, s) in perturbed.iter().enumerate() {
        let (mean, se) = moments(s, 1200 + i as u64);
        for i in c..mean.len() {
            decreasing &= mean[i] < -SE_BAND * se[i];
        }
    }
    check(flat && decreasing, format!("optimum flat in mean: {flat}; perturbations decreasing: {decreasing}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("quantile of the stochastic exponential", quantile_lemma),
        ("expected shortfall of the stochastic exponential", es_lemma),
        ("geometric Levy identity", levy_identity),
        ("pure-diffusion reduction", pure_diffusion),
        ("grid-oracle dominance", grid_dominance),
        ("gamma = 1 VaR/ES optimal feasibility", gamma_one_feasibility),
        ("inactivity certificates", inactivity_certificates),
        ("consume-all regime", consume_all),
        ("comparison with the diffusion market", comparison_lemma),
        ("negative-jump adjustment", negative_jumps),
        ("martingale optimality", martingale_optimality),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {:>2}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str()) || id.ends_with(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("{id} PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("{id} FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
