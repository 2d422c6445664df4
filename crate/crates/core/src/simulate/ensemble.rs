use std::io::Write;

use super::{PathEngine, PathObserver, PathSample};
use crate::error::Result;
use crate::market::{MarketModel, UtilitySpec};
use crate::riskmetrics::{empirical_quantile, empirical_tail_mean};
use crate::strategy::Strategy;

/// Simulated paths held in memory, row-major (path, node).
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub stoch_exp: Vec<f64>,
    pub jump_factor: Vec<f64>,
    /// ∫ y'dW per cell, row-major (path, cell).
    pub brownian: Vec<f64>,
    /// Row-major (path, asset).
    pub jump_counts: Vec<u32>,
    pub negative_jump_paths: usize,
}

impl PathEnsemble {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn wealth_at(&self, path: usize, k: usize) -> f64 {
        self.wealth[path * self.nodes() + k]
    }

    /// Wealth of every path at node k.
    pub fn column(&self, k: usize) -> Vec<f64> {
        let n = self.nodes();
        (0..self.n_paths).map(|p| self.wealth[p * n + k]).collect()
    }

    pub fn stoch_exp_column(&self, k: usize) -> Vec<f64> {
        let n = self.nodes();
        (0..self.n_paths).map(|p| self.stoch_exp[p * n + k]).collect()
    }

    /// Writes `node,t,mean,q_beta,es_beta` rows; `q_beta` and `es_beta` are wealth statistics.
    pub fn write_summary_csv<W: Write>(&self, beta: f64, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,t,mean,q_beta,es_beta")?;
        for k in 0..self.nodes() {
            let mut col = self.column(k);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let q = empirical_quantile(&mut col, beta);
            let es = empirical_tail_mean(&mut col, beta);
            writeln!(w, "{k},{:.16e},{mean:.16e},{q:.16e},{es:.16e}", self.times[k])?;
        }
        Ok(())
    }
}

struct Collect {
    nodes: usize,
    wealth: Vec<f64>,
    stoch_exp: Vec<f64>,
    jump_factor: Vec<f64>,
    brownian: Vec<f64>,
    jump_counts: Vec<u32>,
    negative: usize,
}

impl PathObserver for Collect {
    fn observe(&mut self, _index: u64, p: &PathSample) {
        for k in 0..self.nodes {
            self.wealth.push(p.log_wealth[k].exp());
            self.stoch_exp.push(p.log_stoch_exp[k].exp());
            self.jump_factor.push(p.log_jump[k].exp());
        }
        self.brownian.extend_from_slice(&p.brownian);
        self.jump_counts.extend_from_slice(&p.jump_counts);
        self.negative += (p.negative_jumps > 0) as usize;
    }

    fn merge(&mut self, later: Self) {
        self.wealth.extend(later.wealth);
        self.stoch_exp.extend(later.stoch_exp);
        self.jump_factor.extend(later.jump_factor);
        self.brownian.extend(later.brownian);
        self.jump_counts.extend(later.jump_counts);
        self.negative += later.negative;
    }
}

/// Simulates `n_paths` wealth paths of `strategy` from initial wealth `x`.
pub fn simulate(model: &MarketModel, strategy: &Strategy, x: f64, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(crate::Error::OutOfRange("n_paths must be at least 1".into()));
    }
    let engine = PathEngine::new(model, strategy, x)?;
    let nodes = engine.nodes();
    let c = engine.run(seed, n_paths as u64, || Collect {
        nodes,
        wealth: Vec::new(),
        stoch_exp: Vec::new(),
        jump_factor: Vec::new(),
        brownian: Vec::new(),
        jump_counts: Vec::new(),
        negative: 0,
    });
    Ok(PathEnsemble {
        n_paths,
        seed,
        times: model.grid().nodes().to_vec(),
        wealth: c.wealth,
        stoch_exp: c.stoch_exp,
        jump_factor: c.jump_factor,
        brownian: c.brownian,
        jump_counts: c.jump_counts,
        negative_jump_paths: c.negative,
    })
}

/// x e^{R_t} minus the empirical β-quantile of wealth at node t.
pub fn empirical_var(ensemble: &PathEnsemble, model: &MarketModel, x: f64, beta: f64, t: f64) -> Result<f64> {
    let k = model.grid().index_of(t)?;
    let mut col = ensemble.column(k);
    Ok(x * model.r_cumulative()[k].exp() - empirical_quantile(&mut col, beta))
}

/// x e^{R_t} minus the mean of the ceil(βn) smallest wealth values at node t.
pub fn empirical_es(ensemble: &PathEnsemble, model: &MarketModel, x: f64, beta: f64, t: f64) -> Result<f64> {
    let k = model.grid().index_of(t)?;
    let mut col = ensemble.column(k);
    Ok(x * model.r_cumulative()[k].exp() - empirical_tail_mean(&mut col, beta))
}

/// Mean and standard error of ∫₀ᵀ (v_t X_t)^γ₁ dt + X_T^γ₂, trapezoid in t per path.
pub fn estimate_cost(ensemble: &PathEnsemble, strategy: &Strategy, utility: &UtilitySpec) -> (f64, f64) {
    let n = ensemble.nodes();
    let t = &ensemble.times;
    let v = strategy.v();
    let vals: Vec<f64> = (0..ensemble.n_paths)
        .map(|p| {
            let row = &ensemble.wealth[p * n..(p + 1) * n];
            let c: Vec<f64> = (0..n).map(|k| (v[k] * row[k]).powf(utility.gamma1)).collect();
            let running: f64 = (0..n - 1).map(|k| 0.5 * (c[k] + c[k + 1]) * (t[k + 1] - t[k])).sum();
            running + row[n - 1].powf(utility.gamma2)
        })
        .collect();
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let var = if m > 1.0 { vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    (mean, (var / m).sqrt())
}
