//! Gaussian tools, quantile and expected shortfall of the stochastic exponential.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    VaR,
    ES,
}

/// How negative jumps are handled by the constrained solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegJumpMode {
    Off,
    PaperFormula,
    #[default]
    ExactThinning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub beta: f64,
    pub kappa: f64,
    pub negjump_mode: NegJumpMode,
}

impl RiskSpec {
    pub fn new(kind: RiskKind, beta: f64, kappa: f64, negjump_mode: NegJumpMode) -> Result<Self> {
        if !(beta > 0.0 && beta <= 0.5) {
            return Err(Error::OutOfRange(format!("beta {beta} outside (0, 1/2]")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::OutOfRange(format!("kappa {kappa} outside (0, 1)")));
        }
        Ok(Self { kind, beta, kappa, negjump_mode })
    }

    pub fn var(beta: f64, kappa: f64) -> Result<Self> {
        Self::new(RiskKind::VaR, beta, kappa, NegJumpMode::default())
    }

    pub fn es(beta: f64, kappa: f64) -> Result<Self> {
        Self::new(RiskKind::ES, beta, kappa, NegJumpMode::default())
    }

    /// Level used by the constraint when no adjustment applies.
    pub fn level(&self) -> EffectiveLevel {
        EffectiveLevel::plain(self.beta)
    }
}

/// Confidence level actually fed to the constraint formulas.
///
/// `scale` multiplies the log-ES function; it differs from 1 only after the
/// negative-jump adjustment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveLevel {
    pub beta: f64,
    pub beta_eff: f64,
    pub scale: f64,
    pub epsilon: f64,
}

impl EffectiveLevel {
    pub fn plain(beta: f64) -> Self {
        Self { beta, beta_eff: beta, scale: 1.0, epsilon: 0.0 }
    }

    /// q at the effective level.
    pub fn quantile(&self) -> f64 {
        normal_quantile(self.beta_eff).expect("level validated on construction")
    }

    /// Log-ES function at the effective level.
    pub fn es_log(&self, u: f64) -> f64 {
        self.scale * f_beta(u, self.beta_eff)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Φ̄(x) = 1 − Φ(x) without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// ln Φ̄(x), with an asymptotic series far in the tail.
pub fn ln_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return normal_sf(x).ln();
    }
    let z2 = 1.0 / (x * x);
    let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2;
    -0.5 * x * x - (2.0 * PI).sqrt().ln() - x.ln() + series.ln()
}

/// Lower β-quantile of N(0,1).
pub fn normal_quantile(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::OutOfRange(format!("probability {beta} outside (0, 1)")));
    }
    let x = acklam(beta);
    // one Halley step
    let e = normal_cdf(x) - beta;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    let low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// β-quantile of E_t(y) given ‖y‖_t: exp{−½‖y‖² + q_β‖y‖}.
pub fn quantile_stoch_exp(y_norm: f64, beta: f64) -> f64 {
    let q = normal_quantile(beta).expect("beta in (0, 1)");
    (-0.5 * y_norm * y_norm + q * y_norm).exp()
}

/// Mean of E_t(y) over its lower β-tail: Φ̄(|q_β| + ‖y‖)/β.
pub fn es_stoch_exp(y_norm: f64, beta: f64) -> f64 {
    let q = normal_quantile(beta).expect("beta in (0, 1)");
    normal_sf(q.abs() + y_norm) / beta
}

/// F_β(u) = ln(Φ̄(u)/β).
pub fn f_beta(u: f64, beta: f64) -> f64 {
    ln_normal_sf(u) - beta.ln()
}

/// Lower and upper bounds on Φ̄(z): ((1/z − 1/z³)φ(z), φ(z)/z).
pub fn gaussian_tail_bounds(z: f64) -> (f64, f64) {
    let phi = normal_pdf(z);
    ((1.0 / z - 1.0 / (z * z * z)) * phi, phi / z)
}

/// Lower β-quantile of a sample: the order statistic of rank ceil(βn).
pub fn empirical_quantile(samples: &mut [f64], beta: f64) -> f64 {
    let k = order_rank(samples.len(), beta);
    let (_, v, _) = samples.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Mean of the ceil(βn) smallest values.
pub fn empirical_tail_mean(samples: &mut [f64], beta: f64) -> f64 {
    let k = order_rank(samples.len(), beta);
    samples.select_nth_unstable_by(k - 1, f64::total_cmp);
    samples[..k].iter().sum::<f64>() / k as f64
}

/// ceil(βn), at least 1.
pub fn order_rank(n: usize, beta: f64) -> usize {
    ((beta * n as f64).ceil() as usize).clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;

    #[test]
    fn quantile_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.05).unwrap() - -1.6448536269514727).abs() < 1e-12);
        assert!((normal_quantile(0.01).unwrap() - -2.3263478740408411).abs() < 1e-12);
        assert!((normal_quantile(0.001).unwrap() - -3.0902323061678135).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn quantile_roundtrip_grid() {
        for i in 0..=1000 {
            let b = 1e-6 + (1.0 - 2e-6) * i as f64 / 1000.0;
            let q = normal_quantile(b).unwrap();
            assert!((normal_cdf(q) - b).abs() < 1e-10, "beta {b}");
        }
    }

    #[test]
    fn stoch_exp_trivia() {
        assert_eq!(quantile_stoch_exp(0.0, 0.05), 1.0);
        assert!((quantile_stoch_exp(0.4, 0.5) - (-0.08f64).exp()).abs() < 1e-15);
        assert!((es_stoch_exp(0.0, 0.05) - 1.0).abs() < 1e-12);
        for n in [0.1, 0.3, 0.6, 2.0] {
            assert!(es_stoch_exp(n, 0.05) <= quantile_stoch_exp(n, 0.05));
        }
    }

    #[test]
    fn f_beta_values() {
        let q = normal_quantile(0.05).unwrap();
        assert!(f_beta(q.abs(), 0.05).abs() < 1e-12);
        assert!((f_beta(2.5, 0.05) - -2.0859160037246995).abs() < 1e-12);
        assert!(f_beta(40.0, 0.05) < f_beta(20.0, 0.05));
        // the tail series joins the direct formula smoothly
        let (a, b) = (f_beta(30.0 - 1e-9, 0.05), f_beta(30.0, 0.05));
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn tail_bounds_bracket_sf() {
        let (lo, hi) = gaussian_tail_bounds(2.0);
        assert!(lo < 0.022750131948179207 && 0.022750131948179207 < hi);
        for z in [1.0, 1.5, 3.0, 6.0] {
            let (lo, hi) = gaussian_tail_bounds(z);
            assert!(lo < normal_sf(z) && normal_sf(z) < hi && lo <= hi);
        }
        assert!((normal_sf(2.0) - 0.022750131948179207).abs() < 1e-16);
    }

    #[test]
    fn es_is_average_of_quantiles() {
        let rule = GaussLegendre::new(2000);
        for &(n, beta) in &[(0.3, 0.05), (0.6, 0.01), (1.2, 0.2)] {
            let avg = rule.integrate(0.0, beta, |d| quantile_stoch_exp(n, d)) / beta;
            assert!((avg - es_stoch_exp(n, beta)).abs() < 1e-6, "{n} {beta}");
        }
    }

    #[test]
    fn empirical_order_statistics() {
        let mut s = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(empirical_quantile(&mut s, 0.2), 1.0);
        assert_eq!(empirical_quantile(&mut s, 0.21), 2.0);
        assert_eq!(empirical_tail_mean(&mut s, 0.4), 1.5);
    }

    proptest! {
        #[test]
        fn empirical_risk_is_monotone(
            base in proptest::collection::vec(0.01f64..10.0, 1..200),
            bump in proptest::collection::vec(0.0f64..3.0, 200),
            beta in 0.01f64..0.5,
        ) {
            let mut y = base.clone();
            let mut z: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let (qy, qz) = (empirical_quantile(&mut y.clone(), beta), empirical_quantile(&mut z.clone(), beta));
            prop_assert!(qy <= qz);
            prop_assert!(empirical_tail_mean(&mut y, beta) <= empirical_tail_mean(&mut z, beta));
        }

        #[test]
        fn quantile_stoch_exp_decreasing_past_q(n in 0.0f64..5.0, dn in 1e-6f64..1.0, beta in 0.001f64..0.5) {
            let q = normal_quantile(beta).unwrap().abs();
            let a = q + n;
            prop_assert!(quantile_stoch_exp(a + dn, beta) <= quantile_stoch_exp(a, beta));
            prop_assert!(es_stoch_exp(n + dn, beta) < es_stoch_exp(n, beta));
        }

        #[test]
        fn quantile_inverts_cdf(beta in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!((normal_cdf(normal_quantile(beta).unwrap()) - beta).abs() < 1e-10);
        }
    }
}
