//! Gauss–Legendre rules and trapezoid helpers.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Default rule order used for jump-law integrals.
pub const DEFAULT_ORDER: usize = 129;

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess for the i-th largest root.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cumulative trapezoid integral of samples `values` over `nodes`, starting at 0.
pub fn cumulative_trapezoid(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(nodes.len(), values.len());
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..nodes.len() {
        acc += 0.5 * (values[k - 1] + values[k]) * (nodes[k] - nodes[k - 1]);
        out.push(acc);
    }
    out
}

/// Cumulative integral of `exp(l(t))` where `l` is linearly interpolated between nodes.
///
/// Exact when `l` is affine in t on every cell; this is the case for `q ln g` when the
/// Hamiltonian supremum is constant in time.
pub fn cumulative_exp_linear(nodes: &[f64], log_values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..nodes.len() {
        let dt = nodes[k] - nodes[k - 1];
        let (a, b) = (log_values[k - 1], log_values[k]);
        let diff = b - a;
        let cell = if diff.abs() < 1e-8 {
            // expm1(d)/d expanded to third order
            a.exp() * dt * (1.0 + diff / 2.0 + diff * diff / 6.0 + diff * diff * diff / 24.0)
        } else {
            dt * (b.exp() - a.exp()) / diff
        };
        acc += cell;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit for 8 nodes
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 7, 129, 2000] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "n = {n}: {s}");
        }
    }

    #[test]
    fn smooth_integrand_high_order() {
        let rule = GaussLegendre::new(129);
        let v = rule.integrate(0.0, 1.0, |x| (3.0 * x).exp());
        assert!((v - ((3f64).exp() - 1.0) / 3.0).abs() < 1e-13);
    }

    #[test]
    fn exp_linear_is_exact_for_affine_logs() {
        let nodes: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let logs: Vec<f64> = nodes.iter().map(|t| 0.7 * t - 0.2).collect();
        let c = cumulative_exp_linear(&nodes, &logs);
        let exact = ((0.7f64 - 0.2).exp() - (-0.2f64).exp()) / 0.7;
        assert!((c[10] - exact).abs() < 1e-15);
    }
}
