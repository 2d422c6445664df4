//! Confidence-level adjustment for markets with negative jumps.

use crate::constrained::{self, ConstraintOptions};
use crate::error::{Error, Result};
use crate::market::{JumpSpec, MarketModel, UtilitySpec};
use crate::riskmetrics::{f_beta, EffectiveLevel, NegJumpMode, RiskKind, RiskSpec};
use crate::strategy::SolveReport;

/// Way of computing the probability of at least one negative jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonMethod {
    /// Π_j (1 − e^{−λ_j t}) P(ξ_j < 0).
    PaperFormula,
    /// 1 − Π_j exp(−λ_j t P(ξ_j < 0)).
    ExactThinning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegJumpAdjustment {
    pub epsilon_t: f64,
    pub beta_hat: f64,
    pub method: EpsilonMethod,
}

/// Probability ε_t of at least one negative jump on [0, t].
pub fn epsilon_t(jumps: &JumpSpec, t: f64, method: EpsilonMethod) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let rates: Vec<(f64, f64)> = jumps.assets().iter().map(|a| (a.intensity, a.law.prob_negative())).collect();
    match method {
        EpsilonMethod::ExactThinning => -(-t * rates.iter().map(|(l, p)| l * p).sum::<f64>()).exp_m1(),
        EpsilonMethod::PaperFormula => rates.iter().map(|(l, p)| -(-l * t).exp_m1() * p).product(),
    }
}

/// β̂ = (β − ε)/(1 − ε).
pub fn beta_hat(beta: f64, epsilon: f64) -> Result<f64> {
    if !(0.0..beta).contains(&epsilon) {
        return Err(Error::EpsilonTooLarge { epsilon, beta });
    }
    Ok((beta - epsilon) / (1.0 - epsilon))
}

/// F̂(u) = ((β − ε)/β)·F_β̂(u).
pub fn f_hat(u: f64, beta: f64, epsilon: f64) -> Result<f64> {
    let bh = beta_hat(beta, epsilon)?;
    Ok((beta - epsilon) / beta * f_beta(u, bh))
}

/// Adjustment over the model horizon; `None` when the mode is `Off`.
pub fn adjustment(model: &MarketModel, risk: &RiskSpec) -> Result<Option<NegJumpAdjustment>> {
    let method = match risk.negjump_mode {
        NegJumpMode::Off => return Ok(None),
        NegJumpMode::PaperFormula => EpsilonMethod::PaperFormula,
        NegJumpMode::ExactThinning => EpsilonMethod::ExactThinning,
    };
    let eps = epsilon_t(model.jumps(), model.horizon(), method);
    Ok(Some(NegJumpAdjustment { epsilon_t: eps, beta_hat: beta_hat(risk.beta, eps)?, method }))
}

/// Level at which constraints are evaluated.
///
/// Plain β under nonnegative jumps; the adjusted level otherwise, or
/// `NegativeJumpsPresent` when the adjustment is switched off.
pub fn effective_level(model: &MarketModel, risk: &RiskSpec) -> Result<EffectiveLevel> {
    if model.jumps().nonnegative_jumps() {
        return Ok(risk.level());
    }
    match adjustment(model, risk)? {
        None => Err(Error::NegativeJumpsPresent),
        Some(a) => Ok(EffectiveLevel {
            beta: risk.beta,
            beta_eff: a.beta_hat,
            scale: (risk.beta - a.epsilon_t) / risk.beta,
            epsilon: a.epsilon_t,
        }),
    }
}

/// Runs the constrained solver matching `utility` at the adjusted level.
pub fn adjusted_solve(model: &MarketModel, risk: &RiskSpec, utility: &UtilitySpec, x: f64) -> Result<SolveReport> {
    adjusted_solve_with(model, risk, utility, x, &ConstraintOptions::default())
}

pub fn adjusted_solve_with(
    model: &MarketModel,
    risk: &RiskSpec,
    utility: &UtilitySpec,
    x: f64,
    opts: &ConstraintOptions,
) -> Result<SolveReport> {
    let level = effective_level(model, risk).map_err(|e| match e {
        Error::NegativeJumpsPresent => Error::AssumptionJViolated,
        other => other,
    })?;
    match (utility.gamma(), risk.kind) {
        (Some(g), RiskKind::VaR) if g == 1.0 => constrained::var_gamma1_at(model, &level, risk.kappa, x, opts),
        (Some(g), RiskKind::ES) if g == 1.0 => constrained::es_gamma1_at(model, &level, risk.kappa, x, opts),
        (Some(_), kind) => {
            let cert = constrained::certify_at(model, utility, &level, risk.kappa, kind, opts)?;
            match cert.report {
                Some(rep) if !cert.active => Ok(rep),
                _ => Err(Error::ConditionViolated {
                    name: "inactivity certificate".into(),
                    lhs: cert.condition_lhs,
                    rhs: cert.condition_rhs,
                }),
            }
        }
        (None, kind) => {
            Ok(constrained::diff_gamma_at(model, utility, &level, risk.kappa, kind, x, opts)?.into_solve_report())
        }
    }
}
