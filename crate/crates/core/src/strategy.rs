use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::{solve, MarketModel};

/// Tolerance on the box [0,1] and on y = σ'π when validating a strategy.
pub const STRATEGY_TOL: f64 = 1e-10;

/// Deterministic strategy sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    y: Vec<DVector<f64>>,
    pi: Vec<DVector<f64>>,
    v: Vec<f64>,
    v_cum: Vec<f64>,
}

impl Strategy {
    /// From portfolio fractions; y = σ'π.
    pub fn from_pi(model: &MarketModel, pi: Vec<DVector<f64>>, v: Vec<f64>) -> Result<Self> {
        check_lengths(model, pi.len(), v.len())?;
        let y = pi.iter().enumerate().map(|(k, p)| model.sigma(k).tr_mul(p)).collect();
        Self::assemble(model, y, pi, v)
    }

    /// From diffusion exposures; π = (σ')⁻¹y.
    pub fn from_y(model: &MarketModel, y: Vec<DVector<f64>>, v: Vec<f64>) -> Result<Self> {
        check_lengths(model, y.len(), v.len())?;
        let pi = y
            .iter()
            .enumerate()
            .map(|(k, yk)| solve(&model.sigma(k).transpose(), yk, k))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(model, y, pi, v)
    }

    /// Constant fractions and a given consumption path.
    pub fn constant_pi(model: &MarketModel, pi: &[f64], v: Vec<f64>) -> Result<Self> {
        let p = DVector::from_column_slice(pi);
        Self::from_pi(model, vec![p; model.grid().len()], v)
    }

    /// Everything in the bank account, no consumption.
    pub fn bank_account(model: &MarketModel) -> Self {
        let n = model.grid().len();
        let zero = DVector::zeros(model.dim());
        Self { y: vec![zero.clone(); n], pi: vec![zero; n], v: vec![0.0; n], v_cum: vec![0.0; n] }
    }

    fn assemble(model: &MarketModel, y: Vec<DVector<f64>>, pi: Vec<DVector<f64>>, v: Vec<f64>) -> Result<Self> {
        let v_cum = model.grid().cumulative(&v);
        let s = Self { y, pi, v, v_cum };
        s.validate(model)?;
        Ok(s)
    }

    /// Checks admissibility: π ∈ [0,1]^d, v ≥ 0 finite, y = σ'π.
    pub fn validate(&self, model: &MarketModel) -> Result<()> {
        check_lengths(model, self.pi.len(), self.v.len())?;
        let d = model.dim();
        for k in 0..self.pi.len() {
            if self.pi[k].len() != d || self.y[k].len() != d {
                return Err(Error::InvalidStrategy(format!("dimension mismatch at node {k}")));
            }
            if let Some(p) = self.pi[k].iter().find(|p| !(**p >= -STRATEGY_TOL && **p <= 1.0 + STRATEGY_TOL)) {
                return Err(Error::InvalidStrategy(format!("pi = {p} outside [0, 1] at node {k}")));
            }
            if !(self.v[k] >= 0.0 && self.v[k].is_finite()) {
                return Err(Error::InvalidStrategy(format!("consumption rate {} at node {k}", self.v[k])));
            }
            let gap = (model.sigma(k).tr_mul(&self.pi[k]) - &self.y[k]).amax();
            if gap > STRATEGY_TOL * (1.0 + self.y[k].amax()) {
                return Err(Error::InvalidStrategy(format!("y differs from sigma' pi by {gap} at node {k}")));
            }
        }
        Ok(())
    }

    pub fn y(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn pi(&self) -> &[DVector<f64>] {
        &self.pi
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// V_t at every node.
    pub fn v_cumulative(&self) -> &[f64] {
        &self.v_cum
    }

    /// V_t = ∫₀ᵗ v ds at a grid node.
    pub fn v_integral(&self, model: &MarketModel, t: f64) -> Result<f64> {
        Ok(self.v_cum[model.grid().index_of(t)?])
    }

    /// ‖y‖²_t at every node.
    pub fn y_norm_sq_cumulative(&self, model: &MarketModel) -> Vec<f64> {
        let vals: Vec<f64> = self.y.iter().map(|y| y.norm_squared()).collect();
        model.grid().cumulative(&vals)
    }

    /// Same exposures with a different consumption path.
    pub fn with_consumption(&self, model: &MarketModel, v: Vec<f64>) -> Result<Self> {
        Self::assemble(model, self.y.clone(), self.pi.clone(), v)
    }
}

fn check_lengths(model: &MarketModel, n_pi: usize, n_v: usize) -> Result<()> {
    let n = model.grid().len();
    if n_pi != n || n_v != n {
        return Err(Error::InvalidStrategy(format!("expected {n} nodes, got {n_pi} exposures and {n_v} rates")));
    }
    Ok(())
}

/// Named inequality `lhs <= rhs` evaluated by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFlag {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ConditionFlag {
    pub fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, holds: lhs <= rhs }
    }

    /// `Err(ConditionViolated)` unless the condition holds or `force` is set.
    pub fn require(&self, force: bool) -> Result<()> {
        if self.holds || force {
            Ok(())
        } else {
            Err(Error::ConditionViolated { name: self.name.clone(), lhs: self.lhs, rhs: self.rhs })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// η has no sign change on [0,1]; the boundary maximiser was returned.
    NoInteriorRoot { node: usize },
    /// A condition failed but `force` was set.
    Forced(String),
    Note(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Max-norm first-order (or projected-gradient) residual over nodes.
    pub max_residual: f64,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

/// Output of a solver.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub strategy: Strategy,
    pub j_star: f64,
    pub h_star: Vec<f64>,
    pub g: Vec<f64>,
    pub rho_t: Vec<f64>,
    pub chi: f64,
    pub rho_star: Option<f64>,
    pub l_star: Option<f64>,
    pub flags: Vec<ConditionFlag>,
    pub diagnostics: Diagnostics,
}
