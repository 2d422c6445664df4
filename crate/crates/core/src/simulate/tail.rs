//! Streaming lower-tail statistics of wealth at every node.
//!
//! A pilot run brackets the β-quantile of ln X_t at each node; the main run counts and sums
//! the values below the bracket and keeps only the values inside it. Memory stays
//! proportional to the bracket width instead of n_paths × nodes.

use statrs::distribution::{Binomial, DiscreteCDF};

use super::{PathEngine, PathObserver, PathSample};
use crate::riskmetrics::order_rank;

/// Paths in the pilot run.
const PILOT: u64 = 20_000;
/// Below this many paths everything is kept.
const KEEP_ALL: u64 = 50_000;

/// Lower-tail statistics at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTail {
    pub node: usize,
    pub n: u64,
    /// Order statistic of rank ceil(βn).
    pub quantile: f64,
    /// Exact order-statistic confidence interval for the β-quantile.
    pub quantile_ci: (f64, f64),
    /// Mean of the ceil(βn) smallest values.
    pub tail_mean: f64,
    /// Standard error of `tail_mean` as an ES estimator.
    pub tail_mean_se: f64,
}

/// 1-based ranks (l, u) with P(X_(l) ≤ ξ_β ≤ X_(u)) ≥ `level` for continuous laws.
pub fn quantile_ci_ranks(n: usize, beta: f64, level: f64) -> (usize, usize) {
    let alpha = 0.5 * (1.0 - level);
    let bin = Binomial::new(beta, n as u64).expect("valid binomial");
    // F(k) = P(B ≤ k); l is the largest rank with F(l−1) ≤ α
    let find = |target: f64| -> usize {
        // smallest k in [0, n] with F(k) >= target
        let (mut lo, mut hi) = (0u64, n as u64);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if bin.cdf(mid) >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as usize
    };
    let k_lo = find(alpha);
    // F(k_lo − 1) < α ⇒ l = k_lo
    let l = if bin.cdf(k_lo as u64) <= alpha { k_lo + 1 } else { k_lo };
    let u = find(1.0 - alpha) + 1;
    (l.clamp(1, n), u.clamp(1, n))
}

#[derive(Clone)]
struct TailCollector {
    nodes: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    below: Vec<u64>,
    sum_below: Vec<f64>,
    sum_sq_below: Vec<f64>,
    inside: Vec<Vec<f64>>,
}

impl TailCollector {
    fn new(nodes: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let m = nodes.len();
        Self { nodes, lo, hi, below: vec![0; m], sum_below: vec![0.0; m], sum_sq_below: vec![0.0; m], inside: vec![Vec::new(); m] }
    }
}

impl PathObserver for TailCollector {
    fn observe(&mut self, _index: u64, p: &PathSample) {
        for (i, &k) in self.nodes.iter().enumerate() {
            let l = p.log_wealth[k];
            if l < self.lo[i] {
                let w = l.exp();
                self.below[i] += 1;
                self.sum_below[i] += w;
                self.sum_sq_below[i] += w * w;
            } else if l <= self.hi[i] {
                self.inside[i].push(l);
            }
        }
    }

    fn merge(&mut self, later: Self) {
        for i in 0..self.nodes.len() {
            self.below[i] += later.below[i];
            self.sum_below[i] += later.sum_below[i];
            self.sum_sq_below[i] += later.sum_sq_below[i];
        }
        for (a, b) in self.inside.iter_mut().zip(later.inside) {
            a.extend(b);
        }
    }
}

fn summarize(c: &mut TailCollector, n: u64, beta: f64, ci: (usize, usize)) -> Option<Vec<NodeTail>> {
    let rank = order_rank(n as usize, beta);
    let mut out = Vec::with_capacity(c.nodes.len());
    for i in 0..c.nodes.len() {
        let below = c.below[i] as usize;
        let inside = &mut c.inside[i];
        inside.sort_by(f64::total_cmp);
        let need_lo = ci.0.min(rank);
        let need_hi = ci.1.max(rank);
        if need_lo <= below || need_hi > below + inside.len() {
            return None;
        }
        let at = |r: usize| inside[r - below - 1].exp();
        let mut sum = c.sum_below[i];
        let mut sum_sq = c.sum_sq_below[i];
        for v in &inside[..rank - below] {
            let w = v.exp();
            sum += w;
            sum_sq += w * w;
        }
        let k = rank as f64;
        let mean = sum / k;
        let var = (sum_sq / k - mean * mean).max(0.0);
        let q = at(rank);
        let frac = k / n as f64;
        let se = ((var + (1.0 - frac) * (mean - q).powi(2)) / k).sqrt();
        out.push(NodeTail {
            node: c.nodes[i],
            n,
            quantile: q,
            quantile_ci: (at(ci.0), at(ci.1)),
            tail_mean: mean,
            tail_mean_se: se,
        });
    }
    Some(out)
}

/// Lower-tail wealth statistics at `nodes` (all nodes when `None`) over `n_paths` paths.
///
/// The confidence interval is the exact 99% order-statistic interval.
pub fn tail_profile(engine: &PathEngine, seed: u64, n_paths: u64, beta: f64, nodes: Option<&[usize]>) -> Vec<NodeTail> {
    let nodes: Vec<usize> = nodes.map(|s| s.to_vec()).unwrap_or_else(|| (0..engine.nodes()).collect());
    let m = nodes.len();
    let ci = quantile_ci_ranks(n_paths as usize, beta, 0.99);
    let unbounded = |nodes: &[usize]| TailCollector::new(nodes.to_vec(), vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m]);
    if n_paths <= KEEP_ALL {
        let mut c = engine.run(seed, n_paths, || unbounded(&nodes));
        return summarize(&mut c, n_paths, beta, ci).expect("unbounded bracket");
    }
    let mut pilot = engine.run(seed, PILOT, || unbounded(&nodes));
    for v in pilot.inside.iter_mut() {
        v.sort_by(f64::total_cmp);
    }
    let sd = (beta * (1.0 - beta) / PILOT as f64).sqrt();
    for width in [7.0, 14.0] {
        let lo_rank = (PILOT as f64 * (beta - width * sd)).floor();
        let hi_rank = (PILOT as f64 * (beta + width * sd)).ceil();
        let pick = |v: &Vec<f64>, r: f64, outside: f64| {
            if r < 1.0 || r > PILOT as f64 {
                outside
            } else {
                v[r as usize - 1]
            }
        };
        let lo = pilot.inside.iter().map(|v| pick(v, lo_rank, f64::NEG_INFINITY)).collect();
        let hi = pilot.inside.iter().map(|v| pick(v, hi_rank, f64::INFINITY)).collect();
        let mut c = engine.run(seed, n_paths, || TailCollector::new(nodes.clone(), Vec::clone(&lo), Vec::clone(&hi)));
        if let Some(out) = summarize(&mut c, n_paths, beta, ci) {
            return out;
        }
    }
    let mut c = engine.run(seed, n_paths, || unbounded(&nodes));
    summarize(&mut c, n_paths, beta, ci).expect("unbounded bracket")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AssetJumps, MarketModel};
    use crate::riskmetrics::{empirical_quantile, empirical_tail_mean};
    use crate::simulate::simulate;
    use crate::strategy::Strategy;

    #[test]
    fn ci_ranks_bracket_rank() {
        let (l, u) = quantile_ci_ranks(1_000_000, 0.05, 0.99);
        let r = order_rank(1_000_000, 0.05);
        assert!(l < r && r < u);
        // normal approximation: ±2.576·sqrt(nβ(1−β)) ≈ ±561
        assert!((r - l) as i64 - 561 <= 3 && (r - l) as i64 - 561 >= -3, "{l}");
        assert!((u - r) as i64 - 562 <= 3 && (u - r) as i64 - 562 >= -3, "{u}");
        let (l, u) = quantile_ci_ranks(10, 0.5, 0.99);
        assert!(l >= 1 && u <= 10 && l < u);
    }

    #[test]
    fn streaming_matches_in_memory() {
        let m = MarketModel::constant_1d(1.0, 5, 0.02, 0.1, 0.3, AssetJumps::none()).unwrap();
        let s = Strategy::constant_pi(&m, &[0.8], vec![0.05; 5]).unwrap();
        let engine = PathEngine::new(&m, &s, 1.0).unwrap();
        let n = 60_000;
        let tails = tail_profile(&engine, 9, n, 0.05, None);
        let e = simulate(&m, &s, 1.0, n as usize, 9).unwrap();
        for t in &tails {
            let mut col = e.column(t.node);
            if t.node == 0 {
                continue;
            }
            assert_eq!(t.quantile, empirical_quantile(&mut col, 0.05));
            let tm = empirical_tail_mean(&mut col, 0.05);
            assert!((t.tail_mean - tm).abs() < 1e-12 * tm);
            assert!(t.quantile_ci.0 <= t.quantile && t.quantile <= t.quantile_ci.1);
        }
    }
}
