//! Jump-size laws and the jump-integral transforms of the Lévy measure λF.

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Gauss–Legendre order applied on each cell of a tabulated density.
const CELL_ORDER: usize = 16;

/// Tolerance on the total mass of a jump law.
const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub size: f64,
    pub prob: f64,
}

/// Piecewise-linear density sampled at equally spaced points of `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct TabulatedDensity {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    cdf: Vec<f64>,
    rule: GaussLegendre,
}

impl TabulatedDensity {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> std::result::Result<Self, String> {
        if !(lo > -1.0) {
            return Err(format!("support must lie in (-1, inf), got lower end {lo}"));
        }
        if !(hi > lo && hi.is_finite()) {
            return Err(format!("invalid support [{lo}, {hi}]"));
        }
        if values.len() < 2 {
            return Err("density needs at least two samples".into());
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("density samples must be finite and nonnegative".into());
        }
        let h = (hi - lo) / (values.len() - 1) as f64;
        let mut cdf = vec![0.0; values.len()];
        for i in 1..values.len() {
            cdf[i] = cdf[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
        }
        let mass = cdf[values.len() - 1];
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(format!("density integrates to {mass}, expected 1"));
        }
        Ok(Self { lo, hi, values, cdf, rule: GaussLegendre::new(CELL_ORDER) })
    }

    /// Rescales the samples so the piecewise-linear density has unit mass.
    pub fn normalized(lo: f64, hi: f64, mut values: Vec<f64>) -> std::result::Result<Self, String> {
        if values.len() >= 2 {
            let h = (hi - lo) / (values.len() - 1) as f64;
            let mass: f64 = values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
            if mass > 0.0 && mass.is_finite() {
                values.iter_mut().for_each(|v| *v /= mass);
            }
        }
        Self::new(lo, hi, values)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    fn density_at(&self, z: f64) -> f64 {
        if z < self.lo || z > self.hi {
            return 0.0;
        }
        let h = self.step();
        let i = (((z - self.lo) / h) as usize).min(self.values.len() - 2);
        let w = (z - self.lo - i as f64 * h) / h;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn expect<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        let step = self.step();
        (0..self.values.len() - 1)
            .map(|i| {
                let a = self.lo + i as f64 * step;
                self.rule.integrate(a, a + step, |z| h(z) * self.density_at(z))
            })
            .sum()
    }

    fn prob_below(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let h = self.step();
        let i = (((x - self.lo) / h) as usize).min(self.values.len() - 2);
        let a = self.lo + i as f64 * h;
        let w = x - a;
        let f0 = self.values[i];
        let s = (self.values[i + 1] - f0) / h;
        self.cdf[i] + f0 * w + 0.5 * s * w * w
    }

    /// Inverse CDF of the piecewise-linear density.
    fn quantile(&self, u: f64) -> f64 {
        let total = self.cdf[self.cdf.len() - 1];
        let target = u * total;
        let i = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.step();
        let f0 = self.values[i];
        let s = (self.values[i + 1] - f0) / h;
        let rem = (target - self.cdf[i]).max(0.0);
        let disc = (f0 * f0 + 2.0 * s * rem).max(0.0);
        let denom = f0 + disc.sqrt();
        let w = if denom > 0.0 { 2.0 * rem / denom } else { 0.0 };
        (self.lo + i as f64 * h + w.min(h)).min(self.hi)
    }
}

/// Law of a single relative jump size ξ > -1.
#[derive(Debug, Clone)]
pub enum JumpLaw {
    PointMasses(Vec<PointMass>),
    Density(TabulatedDensity),
}

impl JumpLaw {
    /// Finite point-mass law; probabilities must be positive and sum to one.
    pub fn point_masses(masses: Vec<PointMass>) -> std::result::Result<Self, String> {
        if masses.is_empty() {
            return Err("point-mass law needs at least one atom".into());
        }
        for m in &masses {
            if !(m.size > -1.0 && m.size.is_finite()) {
                return Err(format!("jump size {} outside (-1, inf)", m.size));
            }
            if !(m.prob > 0.0 && m.prob.is_finite()) {
                return Err(format!("probability {} must be positive", m.prob));
            }
        }
        let total: f64 = masses.iter().map(|m| m.prob).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(format!("probabilities sum to {total}, expected 1"));
        }
        Ok(Self::PointMasses(masses))
    }

    /// Single atom with probability one.
    pub fn dirac(size: f64) -> std::result::Result<Self, String> {
        Self::point_masses(vec![PointMass { size, prob: 1.0 }])
    }

    /// E[h(ξ)]: exact sum for atoms, per-cell Gauss–Legendre for densities.
    pub fn expect<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        match self {
            JumpLaw::PointMasses(ms) => ms.iter().map(|m| m.prob * h(m.size)).sum(),
            JumpLaw::Density(d) => d.expect(h),
        }
    }

    pub fn mean(&self) -> f64 {
        self.expect(|z| z)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|z| z * z)
    }

    /// Smallest and largest point of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            JumpLaw::PointMasses(ms) => ms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| {
                (a.min(m.size), b.max(m.size))
            }),
            JumpLaw::Density(d) => d.support(),
        }
    }

    /// P(ξ < 0).
    pub fn prob_negative(&self) -> f64 {
        match self {
            JumpLaw::PointMasses(ms) => ms.iter().filter(|m| m.size < 0.0).map(|m| m.prob).sum(),
            JumpLaw::Density(d) => d.prob_below(0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match self {
            JumpLaw::PointMasses(ms) => {
                let mut acc = 0.0;
                for m in ms {
                    acc += m.prob;
                    if u < acc {
                        return m.size;
                    }
                }
                ms[ms.len() - 1].size
            }
            JumpLaw::Density(d) => d.quantile(u),
        }
    }
}

/// Intensity and size law of one asset's compound Poisson jumps.
#[derive(Debug, Clone)]
pub struct AssetJumps {
    pub intensity: f64,
    pub law: JumpLaw,
}

impl AssetJumps {
    /// No jumps.
    pub fn none() -> Self {
        Self { intensity: 0.0, law: JumpLaw::PointMasses(vec![PointMass { size: 0.0, prob: 1.0 }]) }
    }
}

/// Per-asset jump specification; the Lévy measure of asset j is `intensity_j * law_j`.
#[derive(Debug, Clone)]
pub struct JumpSpec {
    assets: Vec<AssetJumps>,
}

impl JumpSpec {
    pub fn new(assets: Vec<AssetJumps>) -> Result<Self> {
        for (j, a) in assets.iter().enumerate() {
            if !(a.intensity >= 0.0 && a.intensity.is_finite()) {
                return Err(Error::InvalidJumpSpec { asset: j, reason: format!("intensity {}", a.intensity) });
            }
            if !a.law.second_moment().is_finite() {
                return Err(Error::InvalidJumpSpec { asset: j, reason: "infinite second moment".into() });
            }
        }
        Ok(Self { assets })
    }

    /// `d` assets without jumps.
    pub fn none(d: usize) -> Self {
        Self { assets: (0..d).map(|_| AssetJumps::none()).collect() }
    }

    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn asset(&self, j: usize) -> &AssetJumps {
        &self.assets[j]
    }

    pub fn assets(&self) -> &[AssetJumps] {
        &self.assets
    }

    /// Copy with all intensities set to zero.
    pub fn without_jumps(&self) -> Self {
        Self {
            assets: self.assets.iter().map(|a| AssetJumps { intensity: 0.0, law: a.law.clone() }).collect(),
        }
    }

    /// ξ_λ with components λ_j E[ξ_j].
    pub fn xi_lambda(&self) -> Vec<f64> {
        self.assets.iter().map(|a| if a.intensity == 0.0 { 0.0 } else { a.intensity * a.law.mean() }).collect()
    }

    /// Assumption (J): every jump size is nonnegative (zero-intensity assets are ignored).
    pub fn nonnegative_jumps(&self) -> bool {
        self.assets.iter().all(|a| a.intensity == 0.0 || a.law.support().0 >= 0.0)
    }

    fn check(&self, j: usize, pi: f64) -> Result<&AssetJumps> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::OutOfRange(format!("pi = {pi} outside [0, 1]")));
        }
        let a = &self.assets[j];
        if 1.0 + pi * a.law.support().0 <= 0.0 {
            return Err(Error::UnsupportedSupport { asset: j, pi });
        }
        Ok(a)
    }

    /// K_j(π) = ∫ [(1+πz)^γ − 1 − γπz] ν_j(dz).
    pub fn k_transform(&self, j: usize, pi: f64, gamma: f64) -> Result<f64> {
        let a = self.check(j, pi)?;
        if pi == 0.0 || gamma == 1.0 || a.intensity == 0.0 {
            return Ok(0.0);
        }
        Ok(a.intensity * a.law.expect(|z| (1.0 + pi * z).powf(gamma) - 1.0 - gamma * pi * z))
    }

    /// Q_j(π) = ∫ [(1+πz)^(γ−1) − 1] z ν_j(dz); equals K_j'(π)/γ.
    pub fn q_transform(&self, j: usize, pi: f64, gamma: f64) -> Result<f64> {
        let a = self.check(j, pi)?;
        if pi == 0.0 || gamma == 1.0 || a.intensity == 0.0 {
            return Ok(0.0);
        }
        Ok(a.intensity * a.law.expect(|z| ((1.0 + pi * z).powf(gamma - 1.0) - 1.0) * z))
    }

    /// dQ_j/dπ = (γ−1) ∫ (1+πz)^(γ−2) z² ν_j(dz).
    pub fn q_derivative(&self, j: usize, pi: f64, gamma: f64) -> Result<f64> {
        let a = self.check(j, pi)?;
        if gamma == 1.0 || a.intensity == 0.0 {
            return Ok(0.0);
        }
        Ok((gamma - 1.0) * a.intensity * a.law.expect(|z| (1.0 + pi * z).powf(gamma - 2.0) * z * z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn spec(intensity: f64, law: JumpLaw) -> JumpSpec {
        JumpSpec::new(vec![AssetJumps { intensity, law }]).unwrap()
    }

    #[test]
    fn xi_lambda_examples() {
        assert_eq!(JumpSpec::none(3).xi_lambda(), vec![0.0; 3]);
        let s = spec(2.0, JumpLaw::dirac(0.05).unwrap());
        assert!((s.xi_lambda()[0] - 0.10).abs() < 1e-15);
        let two = JumpLaw::point_masses(vec![
            PointMass { size: -0.1, prob: 0.5 },
            PointMass { size: 0.3, prob: 0.5 },
        ])
        .unwrap();
        assert!((spec(1.0, two).xi_lambda()[0] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn k_and_q_vanish_at_zero_and_linear_utility() {
        let s = spec(1.3, JumpLaw::dirac(0.2).unwrap());
        assert_eq!(s.k_transform(0, 0.0, 0.4).unwrap(), 0.0);
        assert_eq!(s.k_transform(0, 0.7, 1.0).unwrap(), 0.0);
        assert_eq!(s.q_transform(0, 0.0, 0.4).unwrap(), 0.0);
        assert_eq!(s.q_transform(0, 0.7, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn k_and_q_point_mass_values() {
        // frozen with 50-digit arithmetic: 1.05^0.5 - 1 - 0.025 and (1.05^-0.5 - 1) * 0.1
        let s = spec(1.0, JumpLaw::dirac(0.1).unwrap());
        let k = s.k_transform(0, 0.5, 0.5).unwrap();
        let q = s.q_transform(0, 0.5, 0.5).unwrap();
        assert!((k - -0.00030492340404016168).abs() < 1e-12, "{k}");
        assert!((q - -0.0024099927051466821).abs() < 1e-12, "{q}");
    }

    #[test]
    fn rejects_out_of_box_pi() {
        let s = spec(1.0, JumpLaw::dirac(0.1).unwrap());
        assert!(s.k_transform(0, 1.2, 0.5).is_err());
        assert!(s.q_transform(0, -0.1, 0.5).is_err());
    }

    #[test]
    fn invalid_laws_rejected() {
        assert!(JumpLaw::dirac(-1.0).is_err());
        assert!(JumpLaw::point_masses(vec![PointMass { size: 0.1, prob: 0.4 }]).is_err());
        assert!(TabulatedDensity::new(-1.0, 0.5, vec![1.0, 1.0]).is_err());
        assert!(TabulatedDensity::new(0.0, 1.0, vec![0.5, 0.5]).is_err());
        assert!(TabulatedDensity::new(0.0, 1.0, vec![1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_density_moments() {
        let d = TabulatedDensity::new(0.0, 0.4, vec![2.5; 9]).unwrap();
        let law = JumpLaw::Density(d);
        assert!((law.mean() - 0.2).abs() < 1e-14);
        assert!((law.second_moment() - 0.16 / 3.0).abs() < 1e-14);
        assert_eq!(law.prob_negative(), 0.0);
    }

    #[test]
    fn triangular_density_quantile_roundtrip() {
        // density 2(1 - z) on [0, 1] sampled at the endpoints is exact
        let d = TabulatedDensity::new(0.0, 1.0, vec![2.0, 1.0, 0.0]).unwrap();
        for &u in &[0.0, 0.1, 0.5, 0.9, 0.999] {
            let z = d.quantile(u);
            assert!((d.prob_below(z) - u).abs() < 1e-12, "u {u} z {z}");
        }
    }

    #[test]
    fn density_sampling_matches_mean() {
        let d = TabulatedDensity::normalized(-0.3, 0.5, vec![0.0, 1.0, 2.0, 1.0, 0.5]).unwrap();
        let law = JumpLaw::Density(d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd = (law.second_moment() - law.mean().powi(2)).sqrt();
        assert!((m - law.mean()).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn negative_mass_of_mixed_law() {
        let law = JumpLaw::point_masses(vec![
            PointMass { size: -0.2, prob: 0.3 },
            PointMass { size: 0.1, prob: 0.7 },
        ])
        .unwrap();
        assert!((law.prob_negative() - 0.3).abs() < 1e-15);
        assert!(!spec(1.0, law.clone()).nonnegative_jumps());
        assert!(spec(0.0, law).nonnegative_jumps());
    }
}
