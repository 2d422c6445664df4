use crate::error::{Error, Result};
use crate::quadrature::cumulative_trapezoid;

/// Default number of grid nodes.
pub const DEFAULT_NODES: usize = 512;

/// Strictly increasing time nodes from 0 to the horizon T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `count` nodes on `[0, horizon]`.
    pub fn uniform(horizon: f64, count: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {count}")));
        }
        let last = (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| horizon * i as f64 / last).collect();
        nodes[count - 1] = horizon;
        Ok(Self { nodes })
    }

    /// Grid from explicit nodes; must start at 0 and increase strictly.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node must be 0, got {}", nodes[0])));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!("nodes not increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn last_index(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node equal to `t` (relative tolerance 1e-12 of the horizon).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon();
        let k = self.nodes.partition_point(|&s| s < t - tol);
        match self.nodes.get(k) {
            Some(&s) if (s - t).abs() <= tol => Ok(k),
            _ => Err(Error::OffGrid(t)),
        }
    }

    /// Index k of the cell `(t_k, t_{k+1}]` containing `t`; times at 0 map to cell 0.
    pub fn cell_of(&self, t: f64) -> usize {
        let k = self.nodes.partition_point(|&s| s < t);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Cumulative trapezoid integral of node samples.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes.len(), "samples must match the grid");
        cumulative_trapezoid(&self.nodes, values)
    }

    /// Trapezoid integral of node samples from 0 to the node `t`.
    pub fn integral_to(&self, values: &[f64], t: f64) -> Result<f64> {
        let k = self.index_of(t)?;
        Ok(self.cumulative(values)[k])
    }
}
