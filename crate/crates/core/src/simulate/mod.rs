//! Exact Monte Carlo simulation of the wealth process.
//!
//! Each path is driven by its own ChaCha8 stream `(seed, path index)`, so results do not
//! depend on how paths are split across workers. Paths are generated in fixed-size chunks
//! and reduced in chunk order.

mod ensemble;
mod oracle;
mod tail;

pub use ensemble::{empirical_es, empirical_var, estimate_cost, simulate, PathEnsemble};
pub use oracle::{
    constraint_profile_closed_form, constraint_profile_mc, epsilon_mc, grid_oracle, jump_functional_mc,
    OracleBest, ProfilePoint,
};
pub use tail::{quantile_ci_ranks, tail_profile, NodeTail};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{JumpLaw, MarketModel};
use crate::strategy::Strategy;

/// Paths per work unit.
pub const CHUNK: u64 = 1024;

/// RNG of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One simulated path, sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct PathSample {
    /// ln X_t.
    pub log_wealth: Vec<f64>,
    /// ln E_t(y).
    pub log_stoch_exp: Vec<f64>,
    /// ln Π(1 + π(τ⁻)ξ) over jumps up to t.
    pub log_jump: Vec<f64>,
    /// ∫ y'dW over each cell.
    pub brownian: Vec<f64>,
    pub jump_counts: Vec<u32>,
    pub negative_jumps: u32,
}

impl PathSample {
    fn new(nodes: usize, dim: usize) -> Self {
        Self {
            log_wealth: vec![0.0; nodes],
            log_stoch_exp: vec![0.0; nodes],
            log_jump: vec![0.0; nodes],
            brownian: vec![0.0; nodes - 1],
            jump_counts: vec![0; dim],
            negative_jumps: 0,
        }
    }

    pub fn wealth(&self, k: usize) -> f64 {
        self.log_wealth[k].exp()
    }
}

struct AssetPlan {
    law: JumpLaw,
    poisson: Option<Poisson<f64>>,
}

/// Precomputed deterministic parts of a (model, strategy, x) triple.
pub struct PathEngine<'a> {
    model: &'a MarketModel,
    /// ln x + R_t − V_t + (y,θ̂)_t.
    drift: Vec<f64>,
    /// Standard deviation and variance of ∫ y'dW over each cell.
    cell_sd: Vec<f64>,
    cell_var: Vec<f64>,
    /// π per asset per node, clamped to [0, 1].
    pi: Vec<Vec<f64>>,
    assets: Vec<AssetPlan>,
}

impl<'a> PathEngine<'a> {
    pub fn new(model: &'a MarketModel, strategy: &Strategy, x: f64) -> Result<Self> {
        strategy.validate(model)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::OutOfRange(format!("initial wealth {x} must be positive")));
        }
        let r = model.r_cumulative();
        let v = strategy.v_cumulative();
        let ip = model.inner_product_path(strategy.y());
        let drift = (0..r.len()).map(|k| x.ln() + r[k] - v[k] + ip[k]).collect();
        let ysq = strategy.y_norm_sq_cumulative(model);
        let cell_var: Vec<f64> = ysq.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let cell_sd = cell_var.iter().map(|v| v.sqrt()).collect();
        let d = model.dim();
        let pi = (0..d)
            .map(|j| strategy.pi().iter().map(|p| p[j].clamp(0.0, 1.0)).collect())
            .collect();
        let horizon = model.horizon();
        let assets = model
            .jumps()
            .assets()
            .iter()
            .map(|a| AssetPlan {
                law: a.law.clone(),
                poisson: (a.intensity > 0.0).then(|| Poisson::new(a.intensity * horizon).expect("positive mean")),
            })
            .collect();
        Ok(Self { model, drift, cell_sd, cell_var, pi, assets })
    }

    pub fn model(&self) -> &MarketModel {
        self.model
    }

    pub fn nodes(&self) -> usize {
        self.drift.len()
    }

    /// Generates path `index` into `out`.
    pub fn fill(&self, seed: u64, index: u64, out: &mut PathSample) {
        let mut rng = path_rng(seed, index);
        let n = self.nodes();
        out.log_stoch_exp[0] = 0.0;
        for k in 0..n - 1 {
            let z: f64 = rng.sample(StandardNormal);
            let dw = self.cell_sd[k] * z;
            out.brownian[k] = dw;
            out.log_stoch_exp[k + 1] = out.log_stoch_exp[k] + dw - 0.5 * self.cell_var[k];
        }
        out.log_jump.iter_mut().for_each(|v| *v = 0.0);
        out.negative_jumps = 0;
        let grid = self.model.grid();
        let horizon = grid.horizon();
        for (j, plan) in self.assets.iter().enumerate() {
            let count = match &plan.poisson {
                Some(p) => p.sample(&mut rng) as u32,
                None => 0,
            };
            out.jump_counts[j] = count;
            for _ in 0..count {
                let tau = rng.gen::<f64>() * horizon;
                let size = plan.law.sample(&mut rng);
                if size < 0.0 {
                    out.negative_jumps += 1;
                }
                let c = grid.cell_of(tau);
                out.log_jump[c + 1] += (self.pi[j][c] * size).ln_1p();
            }
        }
        let mut acc = 0.0;
        for k in 0..n {
            acc += out.log_jump[k];
            out.log_jump[k] = acc;
            out.log_wealth[k] = self.drift[k] + out.log_stoch_exp[k] + acc;
        }
    }

    /// Runs `n_paths` paths through observers made by `make`, merged in path order.
    pub fn run<O, F>(&self, seed: u64, n_paths: u64, make: F) -> O
    where
        O: PathObserver,
        F: Fn() -> O + Sync,
    {
        self.run_range(seed, 0, n_paths, make)
    }

    /// Same as [`run`](Self::run) over path indices `start..end`.
    pub fn run_range<O, F>(&self, seed: u64, start: u64, end: u64, make: F) -> O
    where
        O: PathObserver,
        F: Fn() -> O + Sync,
    {
        let chunks: Vec<(u64, u64)> =
            (start..end).step_by(CHUNK as usize).map(|a| (a, (a + CHUNK).min(end))).collect();
        let parts: Vec<O> = chunks
            .par_iter()
            .map(|&(a, b)| {
                let mut obs = make();
                let mut buf = PathSample::new(self.nodes(), self.model.dim());
                for i in a..b {
                    self.fill(seed, i, &mut buf);
                    obs.observe(i, &buf);
                }
                obs
            })
            .collect();
        let mut it = parts.into_iter();
        let mut acc = it.next().unwrap_or_else(&make);
        for p in it {
            acc.merge(p);
        }
        acc
    }
}

/// Consumer of simulated paths.
pub trait PathObserver: Send {
    fn observe(&mut self, index: u64, path: &PathSample);
    /// Absorbs the observer of the following chunk.
    fn merge(&mut self, later: Self)
    where
        Self: Sized;
}

/// Per-node sample moments of a path functional.
#[derive(Clone)]
pub struct NodeMoments<F> {
    f: F,
    buf: Vec<f64>,
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl<F: Fn(&PathSample, &mut [f64]) + Clone + Send> NodeMoments<F> {
    /// `f` writes one value per output slot.
    pub fn new(slots: usize, f: F) -> Self {
        Self { f, buf: vec![0.0; slots], count: 0, sum: vec![0.0; slots], sum_sq: vec![0.0; slots] }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }

    /// Standard error of each mean.
    pub fn std_error(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0) * n / (n - 1.0).max(1.0) / n).sqrt()
            })
            .collect()
    }
}

impl<F: Fn(&PathSample, &mut [f64]) + Clone + Send> PathObserver for NodeMoments<F> {
    fn observe(&mut self, _index: u64, path: &PathSample) {
        (self.f)(path, &mut self.buf);
        for (i, v) in self.buf.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.count += 1;
    }

    fn merge(&mut self, later: Self) {
        self.count += later.count;
        for i in 0..self.sum.len() {
            self.sum[i] += later.sum[i];
            self.sum_sq[i] += later.sum_sq[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AssetJumps, PointMass};

    fn jumpy() -> MarketModel {
        let law = JumpLaw::point_masses(vec![
            PointMass { size: -0.2, prob: 0.4 },
            PointMass { size: 0.1, prob: 0.6 },
        ])
        .unwrap();
        MarketModel::constant_1d(1.0, 9, 0.03, 0.1, 0.25, AssetJumps { intensity: 2.0, law }).unwrap()
    }

    #[test]
    fn deterministic_and_positive() {
        let m = jumpy();
        let s = Strategy::constant_pi(&m, &[0.7], vec![0.1; 9]).unwrap();
        let e = PathEngine::new(&m, &s, 1.0).unwrap();
        let mut a = PathSample::new(9, 1);
        let mut b = PathSample::new(9, 1);
        e.fill(7, 123, &mut a);
        e.fill(7, 123, &mut b);
        assert_eq!(a.log_wealth, b.log_wealth);
        e.fill(7, 124, &mut b);
        assert_ne!(a.log_wealth, b.log_wealth);
        assert!(a.log_wealth.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn chunked_moments_match_serial() {
        let m = jumpy();
        let s = Strategy::constant_pi(&m, &[0.5], vec![0.0; 9]).unwrap();
        let e = PathEngine::new(&m, &s, 1.0).unwrap();
        let f = |p: &PathSample, out: &mut [f64]| out[0] = p.wealth(8);
        let par = e.run(3, 3000, || NodeMoments::new(1, f));
        let mut serial = NodeMoments::new(1, f);
        let mut buf = PathSample::new(9, 1);
        for c in 0..3 {
            let mut part = NodeMoments::new(1, f);
            for i in (c * CHUNK)..((c + 1) * CHUNK).min(3000) {
                e.fill(3, i, &mut buf);
                part.observe(i, &buf);
            }
            if c == 0 {
                serial = part;
            } else {
                serial.merge(part);
            }
        }
        assert_eq!(par.sum, serial.sum);
        assert_eq!(par.count, 3000);
    }
}
