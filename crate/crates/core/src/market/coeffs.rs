use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Determinant magnitude below which a volatility matrix counts as singular.
pub const SINGULAR_DET_FLOOR: f64 = 1e-12;

/// Deterministic rate, drift and volatility sampled at the grid nodes.
///
/// Paths are taken as given; no continuity check is applied to the samples.
#[derive(Debug, Clone)]
pub struct CoefficientPath {
    r: Vec<f64>,
    mu: Vec<DVector<f64>>,
    sigma: Vec<DMatrix<f64>>,
}

impl CoefficientPath {
    pub fn new(r: Vec<f64>, mu: Vec<DVector<f64>>, sigma: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = r.len();
        if n == 0 || mu.len() != n || sigma.len() != n {
            return Err(Error::InvalidCoefficients(format!(
                "sample counts differ: r {}, mu {}, sigma {}",
                n,
                mu.len(),
                sigma.len()
            )));
        }
        let d = mu[0].len();
        if d == 0 {
            return Err(Error::InvalidCoefficients("dimension must be positive".into()));
        }
        for k in 0..n {
            if mu[k].len() != d || sigma[k].nrows() != d || sigma[k].ncols() != d {
                return Err(Error::InvalidCoefficients(format!("inconsistent dimension at node {k}")));
            }
            if !r[k].is_finite() || mu[k].iter().chain(sigma[k].iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidCoefficients(format!("non-finite sample at node {k}")));
            }
            let det = sigma[k].determinant();
            if det.abs() < SINGULAR_DET_FLOOR {
                return Err(Error::SingularSigma { node: k, det });
            }
        }
        Ok(Self { r, mu, sigma })
    }

    /// Time-constant coefficients replicated over `nodes` samples.
    pub fn constant(nodes: usize, r: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![r; nodes], vec![mu; nodes], vec![sigma; nodes])
    }

    /// One-asset constant coefficients.
    pub fn scalar(nodes: usize, r: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::constant(nodes, r, DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma))
    }

    pub fn dim(&self) -> usize {
        self.mu[0].len()
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn mu(&self, k: usize) -> &DVector<f64> {
        &self.mu[k]
    }

    pub fn sigma(&self, k: usize) -> &DMatrix<f64> {
        &self.sigma[k]
    }

    /// True when every sample equals the first one.
    pub fn is_constant(&self) -> bool {
        self.r.iter().all(|&v| v == self.r[0])
            && self.mu.iter().all(|m| m == &self.mu[0])
            && self.sigma.iter().all(|s| s == &self.sigma[0])
    }
}

/// Solves `a x = b` with partial pivoting.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>, node: usize) -> Result<DVector<f64>> {
    a.clone().lu().solve(b).ok_or(Error::SingularSigma { node, det: a.determinant() })
}
