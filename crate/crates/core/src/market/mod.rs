//! Jump-diffusion market on a discrete time grid.

mod coeffs;
mod grid;
mod jumps;

pub use coeffs::{CoefficientPath, SINGULAR_DET_FLOOR};
pub use grid::{TimeGrid, DEFAULT_NODES};
pub use jumps::{AssetJumps, JumpLaw, JumpSpec, PointMass, TabulatedDensity};

pub(crate) use coeffs::solve;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Grid, coefficient samples and jump specification, with θ and θ̂ cached per node.
#[derive(Debug, Clone)]
pub struct MarketModel {
    grid: TimeGrid,
    coeffs: CoefficientPath,
    jumps: JumpSpec,
    theta: Vec<DVector<f64>>,
    theta_hat: Vec<DVector<f64>>,
    r_cum: Vec<f64>,
}

impl MarketModel {
    pub fn new(grid: TimeGrid, coeffs: CoefficientPath, jumps: JumpSpec) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficient samples for {} grid nodes",
                coeffs.len(),
                grid.len()
            )));
        }
        if coeffs.dim() != jumps.dim() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients have dimension {}, jumps {}",
                coeffs.dim(),
                jumps.dim()
            )));
        }
        let d = coeffs.dim();
        let xi = DVector::from_vec(jumps.xi_lambda());
        let mut theta = Vec::with_capacity(grid.len());
        let mut theta_hat = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let excess = coeffs.mu(k) - DVector::from_element(d, coeffs.r()[k]);
            theta.push(solve(coeffs.sigma(k), &excess, k)?);
            theta_hat.push(solve(coeffs.sigma(k), &(excess - &xi), k)?);
        }
        let r_cum = grid.cumulative(coeffs.r());
        Ok(Self { grid, coeffs, jumps, theta, theta_hat, r_cum })
    }

    /// Constant one-asset market on a uniform grid.
    pub fn constant_1d(horizon: f64, nodes: usize, r: f64, mu: f64, sigma: f64, jumps: AssetJumps) -> Result<Self> {
        let grid = TimeGrid::uniform(horizon, nodes)?;
        let coeffs = CoefficientPath::scalar(nodes, r, mu, sigma)?;
        Self::new(grid, coeffs, JumpSpec::new(vec![jumps])?)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &CoefficientPath {
        &self.coeffs
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Same market with every intensity set to zero.
    pub fn without_jumps(&self) -> Self {
        Self::new(self.grid.clone(), self.coeffs.clone(), self.jumps.without_jumps())
            .expect("coefficients were already validated")
    }

    /// Same coefficients with a different jump specification.
    pub fn with_jumps(&self, jumps: JumpSpec) -> Result<Self> {
        Self::new(self.grid.clone(), self.coeffs.clone(), jumps)
    }

    /// θ_t = σ_t⁻¹(μ_t − r_t 1).
    pub fn theta(&self, k: usize) -> &DVector<f64> {
        &self.theta[k]
    }

    /// θ̂_t = σ_t⁻¹(μ_t − r_t 1 − ξ_λ).
    pub fn theta_hat(&self, k: usize) -> &DVector<f64> {
        &self.theta_hat[k]
    }

    pub fn sigma(&self, k: usize) -> &DMatrix<f64> {
        self.coeffs.sigma(k)
    }

    pub fn xi_lambda(&self) -> DVector<f64> {
        DVector::from_vec(self.jumps.xi_lambda())
    }

    /// Cumulative R_t at every node.
    pub fn r_cumulative(&self) -> &[f64] {
        &self.r_cum
    }

    /// R_t = ∫₀ᵗ r ds at a grid node.
    pub fn r_integral(&self, t: f64) -> Result<f64> {
        Ok(self.r_cum[self.grid.index_of(t)?])
    }

    /// Cumulative ∫₀ᵗ |θ|² ds.
    pub fn theta_norm_sq_cumulative(&self) -> Vec<f64> {
        let vals: Vec<f64> = self.theta.iter().map(|v| v.norm_squared()).collect();
        self.grid.cumulative(&vals)
    }

    /// ‖θ‖_T.
    pub fn theta_norm(&self) -> f64 {
        self.theta_norm_sq_cumulative()[self.grid.last_index()].sqrt()
    }

    /// ‖θ̂‖_T.
    pub fn theta_hat_norm(&self) -> f64 {
        let vals: Vec<f64> = self.theta_hat.iter().map(|v| v.norm_squared()).collect();
        self.grid.cumulative(&vals)[self.grid.last_index()].sqrt()
    }

    /// Cumulative (θ, θ̂)_t.
    pub fn theta_cross_cumulative(&self) -> Vec<f64> {
        let vals: Vec<f64> = self.theta.iter().zip(&self.theta_hat).map(|(a, b)| a.dot(b)).collect();
        self.grid.cumulative(&vals)
    }

    /// Cumulative (y, θ̂)_t for a vector path on the grid.
    pub fn inner_product_path(&self, y: &[DVector<f64>]) -> Vec<f64> {
        let vals: Vec<f64> = y.iter().zip(&self.theta_hat).map(|(a, b)| a.dot(b)).collect();
        self.grid.cumulative(&vals)
    }

    /// Cumulative (y, θ)_t.
    pub fn inner_product_theta_path(&self, y: &[DVector<f64>]) -> Vec<f64> {
        let vals: Vec<f64> = y.iter().zip(&self.theta).map(|(a, b)| a.dot(b)).collect();
        self.grid.cumulative(&vals)
    }

    /// exp{∫₀ᵀ Σ_j ∫ (e^{a(t,j,z)} − 1) ν_j(dz) dt}, trapezoid in t.
    pub fn expected_jump_exponential<F: Fn(f64, usize, f64) -> f64>(&self, a: F) -> Result<f64> {
        let vals: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&t| {
                self.jumps
                    .assets()
                    .iter()
                    .enumerate()
                    .filter(|(_, aj)| aj.intensity > 0.0)
                    .map(|(j, aj)| aj.intensity * aj.law.expect(|z| a(t, j, z).exp_m1()))
                    .sum::<f64>()
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::MomentDiverges);
        }
        let total = self.grid.cumulative(&vals)[self.grid.last_index()];
        let out = total.exp();
        if !out.is_finite() {
            return Err(Error::MomentDiverges);
        }
        Ok(out)
    }
}

/// Power utilities u^γ₁ for consumption and u^γ₂ for terminal wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl UtilitySpec {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        for g in [gamma1, gamma2] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::OutOfRange(format!("gamma {g} outside (0, 1]")));
            }
        }
        Ok(Self { gamma1, gamma2 })
    }

    pub fn equal(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma)
    }

    pub fn is_equal(&self) -> bool {
        self.gamma1 == self.gamma2
    }

    /// Common γ when both exponents coincide.
    pub fn gamma(&self) -> Option<f64> {
        self.is_equal().then_some(self.gamma1)
    }

    pub fn q1(&self) -> Option<f64> {
        conjugate(self.gamma1)
    }

    pub fn q2(&self) -> Option<f64> {
        conjugate(self.gamma2)
    }
}

/// q = 1/(1−γ) for γ < 1.
pub fn conjugate(gamma: f64) -> Option<f64> {
    (gamma < 1.0).then(|| 1.0 / (1.0 - gamma))
}
