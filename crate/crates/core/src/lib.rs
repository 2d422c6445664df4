//! Optimal investment and consumption in jump-diffusion markets under VaR and ES constraints.

pub mod constrained;
pub mod error;
pub mod market;
pub mod negjumps;
pub mod quadrature;
pub mod riskmetrics;
pub mod roots;
pub mod simulate;
pub mod strategy;
pub mod unconstrained;

pub use error::{Error, Result};
pub use market::{AssetJumps, CoefficientPath, JumpLaw, JumpSpec, MarketModel, PointMass, TimeGrid, UtilitySpec};
pub use riskmetrics::{NegJumpMode, RiskKind, RiskSpec};
pub use strategy::{ConditionFlag, Diagnostics, SolveReport, Strategy, Warning};
pub use constrained::{ConstraintCertificate, ConstraintOptions, DiffGammaReport};
