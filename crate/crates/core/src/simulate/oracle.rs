use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::{path_rng, tail_profile, PathEngine, CHUNK};
use crate::constrained::{slack_path, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::market::{MarketModel, UtilitySpec};
use crate::negjumps::effective_level;
use crate::riskmetrics::{RiskKind, RiskSpec};
use crate::strategy::Strategy;
use crate::unconstrained::{cost_function, solve_power_equal};

/// Risk_t/(κ x e^{R_t}) at one node, with a confidence band for Monte Carlo profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub t: f64,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Profile implied by the transformed constraint, i.e. with the jump factor bounded below by 1.
///
/// A slack s maps to the ratio (1 − (1−κ)e^s)/κ, so the strategy is feasible iff sup ≤ 1.
pub fn constraint_profile_closed_form(model: &MarketModel, strategy: &Strategy, risk: &RiskSpec) -> Result<Vec<ProfilePoint>> {
    let level = effective_level(model, risk)?;
    let kappa = risk.kappa;
    let slack = slack_path(model, strategy, &level, kappa, risk.kind);
    Ok(model
        .grid()
        .nodes()
        .iter()
        .zip(slack)
        .map(|(&t, s)| {
            let ratio = -(((-kappa).ln_1p() + s).exp_m1()) / kappa;
            ProfilePoint { t, ratio, lo: ratio, hi: ratio }
        })
        .collect())
}

/// Empirical profile at level β over `n_paths` simulated paths.
///
/// VaR bands come from the exact 99% order-statistic interval; ES bands are ±3 standard errors.
pub fn constraint_profile_mc(
    model: &MarketModel,
    strategy: &Strategy,
    risk: &RiskSpec,
    x: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<ProfilePoint>> {
    let engine = PathEngine::new(model, strategy, x)?;
    let tails = tail_profile(&engine, seed, n_paths, risk.beta, None);
    let r = model.r_cumulative();
    let times = model.grid().nodes();
    Ok(tails
        .iter()
        .map(|nt| {
            let base = x * r[nt.node].exp();
            let scale = risk.kappa * base;
            let f = |w: f64| (base - w) / scale;
            match risk.kind {
                RiskKind::VaR => ProfilePoint {
                    t: times[nt.node],
                    ratio: f(nt.quantile),
                    lo: f(nt.quantile_ci.1),
                    hi: f(nt.quantile_ci.0),
                },
                RiskKind::ES => ProfilePoint {
                    t: times[nt.node],
                    ratio: f(nt.tail_mean),
                    lo: f(nt.tail_mean + 3.0 * nt.tail_mean_se),
                    hi: f(nt.tail_mean - 3.0 * nt.tail_mean_se),
                },
            }
        })
        .collect())
}

/// Best constant-π, scaled-consumption candidate.
#[derive(Debug, Clone)]
pub struct OracleBest {
    pub pi: Vec<f64>,
    pub v_scale: f64,
    pub j: f64,
    pub strategy: Strategy,
    pub evaluated: usize,
    pub feasible: usize,
}

/// Exhaustive search over constant fractions (Cartesian over assets) and consumption
/// `s·shape`, where `shape` is the unconstrained optimal rate for equal γ < 1 and 1 otherwise.
pub fn grid_oracle(
    model: &MarketModel,
    utility: &UtilitySpec,
    risk: Option<&RiskSpec>,
    x: f64,
    pi_grid: &[f64],
    v_scale_grid: &[f64],
) -> Result<OracleBest> {
    let n = model.grid().len();
    let shape: Vec<f64> = match utility.gamma() {
        Some(g) if g < 1.0 => match solve_power_equal(model, utility, x) {
            Ok(rep) => rep.strategy.v().to_vec(),
            Err(_) => vec![1.0; n],
        },
        _ => vec![1.0; n],
    };
    let level = risk.map(|r| effective_level(model, r).map(|l| (l, r))).transpose()?;
    let d = model.dim();
    let combos = pi_grid.len().pow(d as u32);
    let mut best: Option<OracleBest> = None;
    let mut evaluated = 0;
    let mut feasible = 0;
    for c in 0..combos {
        let mut idx = c;
        let pi: Vec<f64> = (0..d)
            .map(|_| {
                let p = pi_grid[idx % pi_grid.len()];
                idx /= pi_grid.len();
                p
            })
            .collect();
        let base = Strategy::constant_pi(model, &pi, vec![0.0; n])?;
        for &s in v_scale_grid {
            evaluated += 1;
            let strat = base.with_consumption(model, shape.iter().map(|v| s * v).collect())?;
            if let Some((lvl, r)) = &level {
                let slack = slack_path(model, &strat, lvl, r.kappa, r.kind);
                if slack.iter().any(|v| *v < -FEASIBILITY_TOL) {
                    continue;
                }
            }
            feasible += 1;
            let j = cost_function(model, utility, &strat, x)?;
            if best.as_ref().map_or(true, |b| j > b.j) {
                best = Some(OracleBest { pi: pi.clone(), v_scale: s, j, strategy: strat, evaluated: 0, feasible: 0 });
            }
        }
    }
    let mut b = best.ok_or(Error::EmptyFeasibleSet)?;
    b.evaluated = evaluated;
    b.feasible = feasible;
    Ok(b)
}

/// Visits every jump (t, asset, size) of one path on [0, T].
fn sample_jumps<R: Rng, F: FnMut(f64, usize, f64)>(model: &MarketModel, rng: &mut R, mut f: F) {
    let horizon = model.horizon();
    for (j, a) in model.jumps().assets().iter().enumerate() {
        if a.intensity <= 0.0 {
            continue;
        }
        let count = Poisson::new(a.intensity * horizon).expect("positive mean").sample(rng) as u64;
        for _ in 0..count {
            let t = rng.gen::<f64>() * horizon;
            f(t, j, a.law.sample(rng));
        }
    }
}

fn mc_mean<F: Fn(u64) -> f64 + Sync>(n: u64, f: F) -> (f64, f64) {
    let chunks: Vec<(u64, u64)> = (0..n).step_by(CHUNK as usize).map(|a| (a, (a + CHUNK).min(n))).collect();
    let parts: Vec<(f64, f64)> = chunks
        .par_iter()
        .map(|&(a, b)| (a..b).map(&f).fold((0.0, 0.0), |(s, q), v| (s + v, q + v * v)))
        .collect();
    let (s, q) = parts.into_iter().fold((0.0, 0.0), |(s, q), (a, b)| (s + a, q + b));
    let m = n as f64;
    let mean = s / m;
    let var = (q / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

/// Mean and standard error of exp{Σ_jumps a(τ, j, ξ)}.
pub fn jump_functional_mc<F>(model: &MarketModel, a: F, n_paths: u64, seed: u64) -> (f64, f64)
where
    F: Fn(f64, usize, f64) -> f64 + Sync,
{
    mc_mean(n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut acc = 0.0;
        sample_jumps(model, &mut rng, |t, j, z| acc += a(t, j, z));
        acc.exp()
    })
}

/// Fraction of paths with at least one negative jump on [0, T], with its standard error.
pub fn epsilon_mc(model: &MarketModel, n_paths: u64, seed: u64) -> (f64, f64) {
    mc_mean(n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut hit = false;
        sample_jumps(model, &mut rng, |_, _, z| hit |= z < 0.0);
        hit as u8 as f64
    })
}
