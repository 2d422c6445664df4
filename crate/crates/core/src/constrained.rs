//! VaR- and ES-constrained problems.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::{conjugate, solve, MarketModel, UtilitySpec};
use crate::negjumps::effective_level;
use crate::quadrature::cumulative_exp_linear;
use crate::riskmetrics::{EffectiveLevel, RiskKind, RiskSpec};
use crate::roots::{bisect, bisect_expanding, golden_max};
use crate::strategy::{ConditionFlag, Diagnostics, SolveReport, Strategy, Warning};
use crate::unconstrained::{solve_power_equal, solve_power_no_consumption};

/// Slack tolerated when checking feasibility of a constructed strategy.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstraintOptions {
    /// Evaluate formulas even when a precondition fails (a warning is recorded).
    pub force: bool,
}

/// Outcome of checking whether the unconstrained optimum already satisfies the constraint.
#[derive(Debug, Clone)]
pub struct ConstraintCertificate {
    pub kind: RiskKind,
    pub active: bool,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    pub rho_star: Option<f64>,
    pub kappa_range: (f64, f64),
    pub chi: f64,
    pub l_star: f64,
    /// Smallest transformed-constraint slack of the unconstrained strategy over the nodes.
    pub direct_min_slack: f64,
    /// Left side of the condition with the printed constants, for comparison.
    pub paper_lhs: f64,
    pub flags: Vec<ConditionFlag>,
    pub report: Option<SolveReport>,
}

fn slack_parts(model: &MarketModel, strategy: &Strategy) -> (Vec<f64>, Vec<f64>) {
    let norms = strategy.y_norm_sq_cumulative(model).iter().map(|v| v.max(0.0).sqrt()).collect();
    (norms, model.inner_product_path(strategy.y()))
}

/// −½‖y‖²_t + q‖y‖_t − V_t + (y,θ̂)_t − ln(1−κ) at every node.
pub fn var_slack_path(model: &MarketModel, strategy: &Strategy, level: &EffectiveLevel, kappa: f64) -> Vec<f64> {
    let q = level.quantile();
    let (n, ip) = slack_parts(model, strategy);
    let v = strategy.v_cumulative();
    (0..n.len()).map(|k| -0.5 * n[k] * n[k] + q * n[k] - v[k] + ip[k] - (-kappa).ln_1p()).collect()
}

/// −V_t + (y,θ̂)_t + F(‖y‖_t + |q|) − ln(1−κ) at every node.
pub fn es_slack_path(model: &MarketModel, strategy: &Strategy, level: &EffectiveLevel, kappa: f64) -> Vec<f64> {
    let q = level.quantile().abs();
    let (n, ip) = slack_parts(model, strategy);
    let v = strategy.v_cumulative();
    (0..n.len()).map(|k| -v[k] + ip[k] + level.es_log(n[k] + q) - (-kappa).ln_1p()).collect()
}

pub fn slack_path(
    model: &MarketModel,
    strategy: &Strategy,
    level: &EffectiveLevel,
    kappa: f64,
    kind: RiskKind,
) -> Vec<f64> {
    match kind {
        RiskKind::VaR => var_slack_path(model, strategy, level, kappa),
        RiskKind::ES => es_slack_path(model, strategy, level, kappa),
    }
}

/// VaR constraint slack at node t; the constraint holds iff it is ≥ 0 at every node.
pub fn transformed_var_constraint(strategy: &Strategy, model: &MarketModel, risk: &RiskSpec, t: f64) -> Result<f64> {
    let k = model.grid().index_of(t)?;
    let level = effective_level(model, risk)?;
    Ok(var_slack_path(model, strategy, &level, risk.kappa)[k])
}

/// ES constraint slack at node t.
pub fn transformed_es_constraint(strategy: &Strategy, model: &MarketModel, risk: &RiskSpec, t: f64) -> Result<f64> {
    let k = model.grid().index_of(t)?;
    let level = effective_level(model, risk)?;
    Ok(es_slack_path(model, strategy, &level, risk.kappa)[k])
}

fn require_nonnegative_jumps(model: &MarketModel) -> Result<()> {
    if model.jumps().nonnegative_jumps() {
        Ok(())
    } else {
        Err(Error::AssumptionJViolated)
    }
}

/// Scale of the γ = 1 optimal exposure y*_t = θ_t ρ/‖θ‖_T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOneRho {
    /// Root of the binding equation at T.
    pub rho: f64,
    /// Largest scale keeping π in [0,1]^d at every node.
    pub cap: f64,
    /// min(rho, cap).
    pub usable: f64,
    pub theta_norm: f64,
    /// (θ, θ − θ̂)_T/‖θ‖_T.
    pub k_t: f64,
}

struct Geometry {
    theta_norm: f64,
    k_t: f64,
    cap: f64,
}

fn geometry(model: &MarketModel) -> Result<Geometry> {
    let last = model.grid().last_index();
    let theta_norm = model.theta_norm();
    if theta_norm == 0.0 {
        return Ok(Geometry { theta_norm, k_t: 0.0, cap: 0.0 });
    }
    let gap: Vec<f64> = (0..=last).map(|k| model.theta(k).dot(&(model.theta(k) - model.theta_hat(k)))).collect();
    let k_t = model.grid().cumulative(&gap)[last] / theta_norm;
    let mut cap = f64::INFINITY;
    for k in 0..=last {
        let w = solve(&model.sigma(k).transpose(), model.theta(k), k)? / theta_norm;
        for j in 0..w.len() {
            if w[j] < -1e-14 {
                return Err(Error::Unsupported(format!(
                    "optimal direction shorts asset {j} at node {k}; no-short-selling box excludes it"
                )));
            }
            if w[j] > 0.0 {
                cap = cap.min(1.0 / w[j]);
            }
        }
    }
    Ok(Geometry { theta_norm, k_t, cap })
}

fn check_theta_hat(model: &MarketModel) -> Result<()> {
    if model.xi_lambda().iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    for k in 0..model.grid().len() {
        if let Some(j) = model.theta_hat(k).iter().position(|v| *v < -1e-14) {
            return Err(Error::ThetaHatNegative { asset: j, node: k });
        }
    }
    Ok(())
}

/// Admissible κ interval for the γ = 1 VaR solution.
pub fn var_kappa_range(theta_norm: f64, q_abs: f64) -> (f64, f64) {
    let lo = 1.0 - (0.5 * q_abs * q_abs - q_abs * theta_norm).exp();
    (lo.max(0.0), 1.0)
}

fn var_rho(g: &Geometry, q_abs: f64, kappa: f64) -> f64 {
    let a = g.theta_norm - g.k_t - q_abs;
    (a * a - 2.0 * (-kappa).ln_1p()).sqrt() + a
}

/// ρ*_VaR = sqrt((‖θ‖_T − |q| − K_T)² − 2 ln(1−κ)) + ‖θ‖_T − K_T − |q|.
pub fn rho_var_gamma1(model: &MarketModel, risk: &RiskSpec) -> Result<GammaOneRho> {
    require_nonnegative_jumps(model)?;
    rho_var_at(model, &risk.level(), risk.kappa, &ConstraintOptions::default()).map(|(r, _)| r)
}

fn rho_var_at(
    model: &MarketModel,
    level: &EffectiveLevel,
    kappa: f64,
    opts: &ConstraintOptions,
) -> Result<(GammaOneRho, Vec<ConditionFlag>)> {
    let g = geometry(model)?;
    let q_abs = level.quantile().abs();
    let (lo, hi) = var_kappa_range(g.theta_norm, q_abs);
    let mut flags = vec![ConditionFlag::le("kappa lower bound", lo, kappa)];
    if g.theta_norm > 0.0 && !(lo < kappa && kappa < hi) && !opts.force {
        return Err(Error::KappaOutOfRange { kappa, lo, hi });
    }
    flags.push(ConditionFlag::le("2|theta|_T <= |q|", 2.0 * g.theta_norm, q_abs));
    let rho = if g.theta_norm > 0.0 { var_rho(&g, q_abs, kappa) } else { 0.0 };
    Ok((GammaOneRho { rho, cap: g.cap, usable: rho.min(g.cap), theta_norm: g.theta_norm, k_t: g.k_t }, flags))
}

/// Unique positive root of ‖θ‖_T ρ + F(ρ + |q|) − ρK_T = ln(1−κ).
pub fn rho_es_gamma1(model: &MarketModel, risk: &RiskSpec) -> Result<GammaOneRho> {
    require_nonnegative_jumps(model)?;
    rho_es_at(model, &risk.level(), risk.kappa, &ConstraintOptions::default()).map(|(r, _)| r)
}

/// ψ̂(ρ) = (‖θ‖_T − K_T)ρ + F(ρ + |q|).
pub fn es_psi(theta_norm: f64, k_t: f64, level: &EffectiveLevel, rho: f64) -> f64 {
    (theta_norm - k_t) * rho + level.es_log(rho + level.quantile().abs())
}

fn rho_es_at(
    model: &MarketModel,
    level: &EffectiveLevel,
    kappa: f64,
    opts: &ConstraintOptions,
) -> Result<(GammaOneRho, Vec<ConditionFlag>)> {
    let g = geometry(model)?;
    let q_abs = level.quantile().abs();
    let flag = ConditionFlag::le("2|theta|_T <= |q|", 2.0 * g.theta_norm, q_abs);
    flag.require(opts.force)?;
    let target = (-kappa).ln_1p();
    let rho = if g.theta_norm > 0.0 {
        bisect_expanding(|r| es_psi(g.theta_norm, g.k_t, level, r) - target, 0.0, 1.0, 0.0, 200)
            .ok_or(Error::NoConvergence { iterations: 200, residual: f64::NAN })?
    } else {
        0.0
    };
    Ok((GammaOneRho { rho, cap: g.cap, usable: rho.min(g.cap), theta_norm: g.theta_norm, k_t: g.k_t }, vec![flag]))
}

/// γ = 1 with the VaR constraint.
pub fn solve_var_gamma1(model: &MarketModel, risk: &RiskSpec, x: f64) -> Result<SolveReport> {
    solve_var_gamma1_with(model, risk, x, &ConstraintOptions::default())
}

pub fn solve_var_gamma1_with(model: &MarketModel, risk: &RiskSpec, x: f64, opts: &ConstraintOptions) -> Result<SolveReport> {
    require_nonnegative_jumps(model)?;
    var_gamma1_at(model, &risk.level(), risk.kappa, x, opts)
}

pub(crate) fn var_gamma1_at(
    model: &MarketModel,
    level: &EffectiveLevel,
    kappa: f64,
    x: f64,
    opts: &ConstraintOptions,
) -> Result<SolveReport> {
    check_theta_hat(model)?;
    let (rho, flags) = rho_var_at(model, level, kappa, opts)?;
    gamma1_report(model, rho, x, flags, level, kappa, RiskKind::VaR, opts)
}

/// γ = 1 with the ES constraint.
pub fn solve_es_gamma1(model: &MarketModel, risk: &RiskSpec, x: f64) -> Result<SolveReport> {
    solve_es_gamma1_with(model, risk, x, &ConstraintOptions::default())
}

pub fn solve_es_gamma1_with(model: &MarketModel, risk: &RiskSpec, x: f64, opts: &ConstraintOptions) -> Result<SolveReport> {
    require_nonnegative_jumps(model)?;
    es_gamma1_at(model, &risk.level(), risk.kappa, x, opts)
}

pub(crate) fn es_gamma1_at(
    model: &MarketModel,
    level: &EffectiveLevel,
    kappa: f64,
    x: f64,
    opts: &ConstraintOptions,
) -> Result<SolveReport> {
    check_theta_hat(model)?;
    let (rho, flags) = rho_es_at(model, level, kappa, opts)?;
    gamma1_report(model, rho, x, flags, level, kappa, RiskKind::ES, opts)
}

#[allow(clippy::too_many_arguments)]
fn gamma1_report(
    model: &MarketModel,
    rho: GammaOneRho,
    x: f64,
    mut flags: Vec<ConditionFlag>,
    level: &EffectiveLevel,
    kappa: f64,
    kind: RiskKind,
    opts: &ConstraintOptions,
) -> Result<SolveReport> {
    let grid = model.grid();
    let n = grid.len();
    let scale = if rho.theta_norm > 0.0 { rho.usable / rho.theta_norm } else { 0.0 };
    let y: Vec<DVector<f64>> = (0..n).map(|k| model.theta(k) * scale).collect();
    let strategy = Strategy::from_y(model, y, vec![0.0; n])?;
    let h: Vec<f64> = (0..n).map(|k| model.coeffs().r()[k] + strategy.y()[k].dot(model.theta(k))).collect();
    let ln_g = grid.cumulative(&h);
    let last = ln_g[n - 1];
    let slack = slack_path(model, &strategy, level, kappa, kind);
    let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    flags.push(ConditionFlag::le("-min slack", -min_slack, FEASIBILITY_TOL));
    let mut diagnostics = Diagnostics::default();
    if kind == RiskKind::ES && rho.theta_norm > 0.0 {
        diagnostics.max_residual = (es_psi(rho.theta_norm, rho.k_t, level, rho.rho) - (-kappa).ln_1p()).abs();
    } else if rho.theta_norm > 0.0 {
        let q_abs = level.quantile().abs();
        let r = rho.rho;
        diagnostics.max_residual =
            (-0.5 * r * r + r * (rho.theta_norm - rho.k_t - q_abs) - (-kappa).ln_1p()).abs();
    }
    if opts.force {
        for f in flags.iter().filter(|f| !f.holds) {
            diagnostics.warnings.push(Warning::Forced(f.name.clone()));
        }
    }
    if rho.usable < rho.rho {
        diagnostics.warnings.push(Warning::Note(format!("scale capped at {} by the no-short-selling box", rho.cap)));
    }
    Ok(SolveReport {
        strategy,
        j_star: x * last.exp(),
        h_star: h,
        g: ln_g.iter().map(|l| l.exp()).collect(),
        rho_t: ln_g.iter().map(|l| (last - l).exp()).collect(),
        chi: 1.0,
        rho_star: Some(rho.usable),
        l_star: None,
        flags,
        diagnostics,
    })
}

/// Checks whether the unconstrained equal-γ optimum satisfies the VaR constraint.
pub fn certify_var_gamma(model: &MarketModel, utility: &UtilitySpec, risk: &RiskSpec) -> Result<ConstraintCertificate> {
    require_nonnegative_jumps(model)?;
    certify_at(model, utility, &risk.level(), risk.kappa, RiskKind::VaR, &ConstraintOptions::default())
}

/// Checks whether the unconstrained equal-γ optimum satisfies the ES constraint.
pub fn certify_es_gamma(model: &MarketModel, utility: &UtilitySpec, risk: &RiskSpec) -> Result<ConstraintCertificate> {
    certify_es_gamma_with(model, utility, risk, &ConstraintOptions::default())
}

pub fn certify_es_gamma_with(
    model: &MarketModel,
    utility: &UtilitySpec,
    risk: &RiskSpec,
    opts: &ConstraintOptions,
) -> Result<ConstraintCertificate> {
    require_nonnegative_jumps(model)?;
    certify_at(model, utility, &risk.level(), risk.kappa, RiskKind::ES, opts)
}

pub(crate) fn certify_at(
    model: &MarketModel,
    utility: &UtilitySpec,
    level: &EffectiveLevel,
    kappa: f64,
    kind: RiskKind,
    opts: &ConstraintOptions,
) -> Result<ConstraintCertificate> {
    let rep = solve_power_equal(model, utility, 1.0)?;
    certify_report(model, utility, level, kappa, kind, rep, opts)
}

fn certify_report(
    model: &MarketModel,
    utility: &UtilitySpec,
    level: &EffectiveLevel,
    kappa: f64,
    kind: RiskKind,
    rep: SolveReport,
    opts: &ConstraintOptions,
) -> Result<ConstraintCertificate> {
    let gamma = utility.gamma().ok_or_else(|| Error::Unsupported("certificates need gamma1 = gamma2".into()))?;
    let q = conjugate(gamma).ok_or_else(|| Error::Unsupported("certificates need gamma < 1".into()))?;
    let grid = model.grid();
    let last = grid.last_index();
    let q_beta = level.quantile();
    let q_abs = q_beta.abs();
    let chi = rep.chi;
    let strategy = &rep.strategy;
    let theta_sq = model.theta_norm_sq_cumulative();
    let theta_norm = theta_sq[last].sqrt();
    let theta_hat_norm = model.theta_hat_norm();
    let y_norm: Vec<f64> = strategy.y_norm_sq_cumulative(model).iter().map(|v| v.max(0.0).sqrt()).collect();
    let ip = model.inner_product_path(strategy.y());
    let mut flags = Vec::new();

    let (l_star, paper_lhs) = match kind {
        RiskKind::VaR => {
            let n = (q * theta_norm).max(y_norm[last]);
            let ip_min = ip.iter().cloned().fold(0.0, f64::min);
            let l = -n * n + q_beta * n + ip_min;
            let paper_l = -q * q * theta_hat_norm * theta_hat_norm + q_beta * q * theta_hat_norm;
            (l, 1.0 - chi * paper_l.exp())
        }
        RiskKind::ES => {
            let pre = ConditionFlag::le("2|theta_hat|_T <= |q|", 2.0 * theta_hat_norm, q_abs);
            pre.require(opts.force)?;
            flags.push(pre);
            // M_t = y*_t/q − θ_t; equals σ⁻¹Q(π*) when no bound is active
            let m_vals: Vec<f64> = (0..=last)
                .map(|k| (strategy.y()[k].clone() / q - model.theta(k)).dot(model.theta_hat(k)))
                .collect();
            let m_cum = grid.cumulative(&m_vals);
            let m_min = m_cum.iter().cloned().fold(0.0, f64::min);
            let cross = model.theta_cross_cumulative();
            let b = (0..=last)
                .map(|k| {
                    let nk = (q * theta_sq[k].max(0.0).sqrt()).max(y_norm[k]);
                    q * cross[k] + level.es_log(nk + q_abs)
                })
                .fold(f64::INFINITY, f64::min);
            let paper_exp = q * theta_norm * theta_norm + level.es_log(q * theta_hat_norm + q_abs) + m_cum[last];
            (b + q * m_min, 1.0 - chi * paper_exp.exp())
        }
    };
    let lhs = 1.0 - chi * l_star.exp();
    flags.push(ConditionFlag::le("inactivity", lhs, kappa));
    let slack = slack_path(model, strategy, level, kappa, kind);
    let direct_min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    let active = lhs > kappa;
    Ok(ConstraintCertificate {
        kind,
        active,
        condition_lhs: lhs,
        condition_rhs: kappa,
        rho_star: None,
        kappa_range: (lhs.max(0.0), 1.0),
        chi,
        l_star,
        direct_min_slack,
        paper_lhs,
        flags,
        report: (!active).then_some(rep),
    })
}

/// Consume-all solution for γ₁ ≠ γ₂.
#[derive(Debug, Clone)]
pub struct DiffGammaReport {
    /// 1 − e^{−V*_T}.
    pub consumed_fraction: f64,
    pub eta_grid: Vec<f64>,
    /// Largest admissible ‖y‖_T after consuming the fraction η.
    pub rho_eta: Vec<f64>,
    pub m_hat: Vec<f64>,
    /// f̄_i(ρ(η))·M̂(x,η) for i = 1, 2.
    pub g_hat: [Vec<f64>; 2],
    pub strategy: Strategy,
    pub j_upper: f64,
    pub argmax: f64,
    pub condition_ok: bool,
    pub flags: Vec<ConditionFlag>,
    pub g1: Vec<f64>,
}

impl DiffGammaReport {
    /// Report form; `rho_t` is left empty because no value-function coefficient exists here.
    pub fn into_solve_report(self) -> SolveReport {
        let mut diagnostics = Diagnostics::default();
        for f in self.flags.iter().filter(|f| !f.holds) {
            diagnostics.warnings.push(Warning::Forced(f.name.clone()));
        }
        SolveReport {
            strategy: self.strategy,
            j_star: self.j_upper,
            h_star: Vec::new(),
            g: self.g1,
            rho_t: Vec::new(),
            chi: 1.0 - self.consumed_fraction,
            rho_star: None,
            l_star: None,
            flags: self.flags,
            diagnostics,
        }
    }
}

/// M̂(x,η) = x^γ₁ η^γ₁ ‖ĝ₁‖_{q₁,T} + x^γ₂ (1−η)^γ₂ e^{γ₂R_T}.
#[derive(Debug, Clone, Copy)]
pub struct ConsumeAllBound {
    pub gamma1: f64,
    pub gamma2: f64,
    pub a: f64,
    pub b: f64,
}

impl ConsumeAllBound {
    pub fn value(&self, eta: f64) -> f64 {
        self.a * eta.powf(self.gamma1) + self.b * (1.0 - eta).powf(self.gamma2)
    }

    /// ∂/∂η ln M̂.
    pub fn log_derivative(&self, eta: f64) -> f64 {
        let d = self.a * self.gamma1 * eta.powf(self.gamma1 - 1.0)
            - self.b * self.gamma2 * (1.0 - eta).powf(self.gamma2 - 1.0);
        d / self.value(eta)
    }
}

pub fn solve_diff_gamma(model: &MarketModel, utility: &UtilitySpec, risk: &RiskSpec, x: f64) -> Result<DiffGammaReport> {
    solve_diff_gamma_with(model, utility, risk, x, &ConstraintOptions::default())
}

pub fn solve_diff_gamma_with(
    model: &MarketModel,
    utility: &UtilitySpec,
    risk: &RiskSpec,
    x: f64,
    opts: &ConstraintOptions,
) -> Result<DiffGammaReport> {
    require_nonnegative_jumps(model)?;
    diff_gamma_at(model, utility, &risk.level(), risk.kappa, risk.kind, x, opts)
}

fn log_target_of(kappa: f64) -> f64 {
    (-kappa).ln_1p()
}

pub(crate) fn diff_gamma_at(
    model: &MarketModel,
    utility: &UtilitySpec,
    level: &EffectiveLevel,
    kappa: f64,
    kind: RiskKind,
    x: f64,
    opts: &ConstraintOptions,
) -> Result<DiffGammaReport> {
    let (g1, g2) = (utility.gamma1, utility.gamma2);
    if g1 == g2 || g1 >= 1.0 || g2 >= 1.0 {
        return Err(Error::Unsupported("consume-all solution needs 0 < gamma1 != gamma2 < 1".into()));
    }
    let q1 = conjugate(g1).expect("gamma1 < 1");
    let grid = model.grid();
    let last = grid.last_index();
    let r_cum = model.r_cumulative();
    let logs: Vec<f64> = r_cum.iter().map(|r| q1 * g1 * r).collect();
    let c = cumulative_exp_linear(grid.nodes(), &logs);
    let c_t = c[last];
    let bound = ConsumeAllBound {
        gamma1: g1,
        gamma2: g2,
        a: x.powf(g1) * c_t.powf(1.0 / q1),
        b: x.powf(g2) * (g2 * r_cum[last]).exp(),
    };
    let argmax = golden_max(|e| bound.value(e), 0.0, 1.0, 1e-10);
    let q_abs = level.quantile().abs();
    let theta_norm = model.theta_norm();
    let theta_hat_norm = model.theta_hat_norm();

    let mut flags = vec![ConditionFlag::le("kappa <= argmax M", kappa, argmax)];
    let scan = 2000;
    let inf_d = (1..=scan)
        .map(|i| bound.log_derivative(kappa * i as f64 / scan as f64))
        .fold(f64::INFINITY, f64::min);
    let gmax = g1.max(g2);
    let tail = if inf_d > 0.0 { theta_norm * gmax / ((1.0 - kappa) * inf_d) } else { f64::INFINITY };
    match kind {
        RiskKind::VaR => flags.push(ConditionFlag::le("consume-all VaR condition", theta_hat_norm + tail, q_abs)),
        RiskKind::ES => {
            flags.push(ConditionFlag::le("consume-all ES condition", 2.0 * theta_hat_norm + tail, q_abs));
            let printed = if inf_d > 0.0 {
                2.0 * theta_hat_norm + (1.0 - kappa) * theta_hat_norm * g1.min(g2) / inf_d
            } else {
                f64::INFINITY
            };
            flags.push(ConditionFlag { holds: printed <= q_abs, ..ConditionFlag::le("printed ES condition", printed, q_abs) });
        }
    }
    let condition_ok = flags.iter().filter(|f| f.name != "printed ES condition").all(|f| f.holds);
    if !condition_ok && !opts.force {
        let f = flags.iter().find(|f| !f.holds && f.name != "printed ES condition").expect("a failing flag");
        return Err(Error::ConditionViolated { name: f.name.clone(), lhs: f.lhs, rhs: f.rhs });
    }

    let v: Vec<f64> = (0..=last).map(|k| kappa * logs[k].exp() / (c_t - kappa * c[k])).collect();
    let zeros = vec![DVector::zeros(model.dim()); last + 1];
    // The trapezoid rule overshoots the exact integral -ln(1-κ) by O(h²), which would
    // push the terminal constraint just past its limit; rescale so it lands exactly.
    let raw = Strategy::from_y(model, zeros.clone(), v.clone())?;
    let scale = -log_target_of(kappa) / raw.v_cumulative()[last];
    let strategy = Strategy::from_y(model, zeros, v.into_iter().map(|x| x * scale).collect())?;
    let consumed_fraction = -(-strategy.v_cumulative()[last]).exp_m1();

    let points = 201;
    let eta_grid: Vec<f64> = (0..points).map(|i| kappa * i as f64 / (points - 1) as f64).collect();
    let log_target = log_target_of(kappa);
    let rho_eta: Vec<f64> = eta_grid
        .iter()
        .map(|&e| match kind {
            RiskKind::VaR => {
                let a = q_abs - theta_hat_norm;
                (a * a - 2.0 * log_target + 2.0 * (-e).ln_1p()).max(0.0).sqrt() - a
            }
            RiskKind::ES => {
                let rhs = log_target - (-e).ln_1p();
                let psi = |r: f64| theta_hat_norm * r + level.es_log(r + q_abs) - rhs;
                if psi(0.0) <= 0.0 {
                    0.0
                } else {
                    bisect_expanding(psi, 0.0, 1.0, 0.0, 200).unwrap_or(0.0)
                }
            }
        })
        .collect();
    let m_hat: Vec<f64> = eta_grid.iter().map(|&e| bound.value(e)).collect();
    let f_bar = |g: f64, b: f64| (g * theta_norm * b - 0.5 * g * (1.0 - g) * b * b).exp();
    let g_hat = [
        rho_eta.iter().zip(&m_hat).map(|(r, m)| f_bar(g1, *r) * m).collect(),
        rho_eta.iter().zip(&m_hat).map(|(r, m)| f_bar(g2, *r) * m).collect(),
    ];
    Ok(DiffGammaReport {
        consumed_fraction,
        eta_grid,
        rho_eta,
        m_hat,
        g_hat,
        strategy,
        j_upper: bound.value(kappa),
        argmax,
        condition_ok,
        flags,
        g1: r_cum.iter().map(|r| (g1 * r).exp()).collect(),
    })
}

/// Investment-only solution and, when a constraint is given, its inactivity certificate.
#[derive(Debug, Clone)]
pub struct NoConsumptionReport {
    pub report: SolveReport,
    pub certificate: Option<ConstraintCertificate>,
}

pub fn solve_no_consumption(
    model: &MarketModel,
    utility: &UtilitySpec,
    risk: Option<&RiskSpec>,
    x: f64,
) -> Result<NoConsumptionReport> {
    let report = solve_power_no_consumption(model, utility, x)?;
    let certificate = match risk {
        None => None,
        Some(r) => {
            require_nonnegative_jumps(model)?;
            let level = r.level();
            Some(certify_report(model, utility, &level, r.kappa, r.kind, report.clone(), &ConstraintOptions::default())?)
        }
    };
    Ok(NoConsumptionReport { report, certificate })
}

/// Bisection root of the binding VaR equation −½ρ² + ρ(‖θ‖_T − K_T − |q|) = ln(1−κ).
pub fn var_rho_by_bisection(theta_norm: f64, k_t: f64, q_abs: f64, kappa: f64) -> Option<f64> {
    let target = (-kappa).ln_1p();
    let f = |r: f64| -0.5 * r * r + r * (theta_norm - k_t - q_abs) - target;
    let mut hi = 1.0;
    while f(hi) > 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    bisect(f, 0.0, hi, 0.0)
}
