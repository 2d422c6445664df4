use std::fs;
use std::path::{Path, PathBuf};

use jumprisk_core::constrained::{certify_es_gamma_with, certify_var_gamma, ConstraintOptions};
use jumprisk_core::negjumps::adjusted_solve_with;
use jumprisk_core::simulate::{
    constraint_profile_closed_form, constraint_profile_mc, grid_oracle, tail_profile, NodeMoments, PathEngine,
    PathSample,
};
use jumprisk_core::strategy::STRATEGY_TOL;
use jumprisk_core::unconstrained::{compare_merton, cost_function, solve_linear, solve_power_equal};
use jumprisk_core::{ConditionFlag, Error, MarketModel, RiskKind, SolveReport, Strategy, Warning};
use nalgebra::DVector;

use crate::config::{load_market, ParseError, RunConfig};

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Condition(Error),
    Verify(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Condition(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "error: {m}"),
            CliError::Condition(e) => write!(f, "condition: {} ({e})", reason(e)),
            CliError::Verify(n) => write!(f, "verification: {n} check(s) failed"),
        }
    }
}

/// Machine-readable name of a solver failure.
pub fn reason(e: &Error) -> &'static str {
    match e {
        Error::ConditionViolated { .. } => "condition_violated",
        Error::KappaOutOfRange { .. } => "kappa_out_of_range",
        Error::AssumptionJViolated => "negative_jumps_unsupported",
        Error::NegativeJumpsPresent => "negative_jumps_present",
        Error::ThetaHatNegative { .. } => "theta_hat_negative",
        Error::EpsilonTooLarge { .. } => "epsilon_too_large",
        Error::EmptyFeasibleSet => "empty_feasible_set",
        Error::DriftBelowRate { .. } => "drift_below_rate",
        Error::NoConvergence { .. } => "no_convergence",
        Error::MomentDiverges => "moment_diverges",
        Error::UnsupportedSupport { .. } => "unsupported_support",
        Error::Unsupported(_) => "unsupported",
        _ => "invalid_input",
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::InvalidCoefficients(_)
            | Error::InvalidJumpSpec { .. }
            | Error::DimensionMismatch(_)
            | Error::SingularSigma { .. }
            | Error::OffGrid(_)
            | Error::OutOfRange(_)
            | Error::InvalidStrategy(_) => CliError::Parse(e.to_string()),
            other => CliError::Condition(other),
        }
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("output: {e}"))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub paths: Option<u64>,
    pub seed: Option<u64>,
    pub negjump: Option<jumprisk_core::NegJumpMode>,
    pub force: bool,
    pub dump_config: bool,
    pub strategy: Option<PathBuf>,
}

/// Everything a command needs, validated before any output is written.
pub struct Context {
    pub cfg: RunConfig,
    pub model: MarketModel,
    pub out: PathBuf,
    pub opts: ConstraintOptions,
    pub dump_config: bool,
    pub strategy_file: Option<PathBuf>,
}

impl Context {
    pub fn load(config: &Path, out: &Path, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(config)?;
        if let Some(p) = o.paths {
            cfg.paths = p;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let (Some(m), Some(r)) = (o.negjump, cfg.risk.as_mut()) {
            r.negjump_mode = m;
        }
        let model = load_market(&cfg.market)?;
        Ok(Self {
            cfg,
            model,
            out: out.to_path_buf(),
            opts: ConstraintOptions { force: o.force },
            dump_config: o.dump_config,
            strategy_file: o.strategy.clone(),
        })
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(io)?;
        if self.dump_config {
            fs::write(self.out.join("config.txt"), self.cfg.to_string()).map_err(io)?;
        }
        Ok(())
    }

    fn writer(&self, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
        csv::Writer::from_path(self.out.join(name)).map_err(io)
    }
}

/// Dispatches to the solver matching the utility and constraint.
pub fn solve_report(ctx: &Context) -> Result<SolveReport, CliError> {
    let (m, u, x) = (&ctx.model, &ctx.cfg.utility, ctx.cfg.x);
    let rep = match &ctx.cfg.risk {
        Some(r) => adjusted_solve_with(m, r, u, x, &ctx.opts)?,
        None => match u.gamma() {
            Some(g) if g == 1.0 => solve_linear(m, x)?,
            Some(_) => solve_power_equal(m, u, x)?,
            None => return Err(CliError::Condition(Error::Unsupported("gamma1 != gamma2 needs a risk constraint".into()))),
        },
    };
    Ok(rep)
}

fn write_strategy(ctx: &Context, s: &Strategy) -> Result<(), CliError> {
    let d = ctx.model.dim();
    let mut w = ctx.writer("strategy.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|j| format!("y_{j}")));
    header.extend((1..=d).map(|j| format!("pi_{j}")));
    header.push("v".into());
    w.write_record(&header).map_err(io)?;
    for (k, &t) in ctx.model.grid().nodes().iter().enumerate() {
        let mut row = vec![fmt(t)];
        row.extend(s.y()[k].iter().map(|v| fmt(*v)));
        row.extend(s.pi()[k].iter().map(|v| fmt(*v)));
        row.push(fmt(s.v()[k]));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_flag(w: &mut csv::Writer<fs::File>, f: &ConditionFlag) -> Result<(), CliError> {
    w.write_record([format!("flag:{}", f.name), String::new(), fmt(f.lhs), fmt(f.rhs), f.holds.to_string()]).map_err(io)
}

fn write_value(w: &mut csv::Writer<fs::File>, name: &str, v: f64) -> Result<(), CliError> {
    w.write_record([name.to_string(), fmt(v), String::new(), String::new(), String::new()]).map_err(io)
}

pub fn cmd_solve(ctx: &Context) -> Result<(), CliError> {
    let rep = solve_report(ctx)?;
    ctx.prepare_out()?;
    write_strategy(ctx, &rep.strategy)?;
    let mut w = ctx.writer("report.csv")?;
    w.write_record(["name", "value", "lhs", "rhs", "holds"]).map_err(io)?;
    write_value(&mut w, "j_star", rep.j_star)?;
    if let Some(r) = rep.rho_star {
        write_value(&mut w, "rho_star", r)?;
    }
    write_value(&mut w, "chi", rep.chi)?;
    if let Some(l) = rep.l_star {
        write_value(&mut w, "l_star", l)?;
    }
    write_value(&mut w, "max_residual", rep.diagnostics.max_residual)?;
    for f in &rep.flags {
        write_flag(&mut w, f)?;
    }
    for warn in &rep.diagnostics.warnings {
        let text = match warn {
            Warning::NoInteriorRoot { node } => format!("no interior root at node {node}"),
            Warning::Forced(s) => format!("forced past {s}"),
            Warning::Note(s) => s.clone(),
        };
        w.write_record(["warning", text.as_str(), "", "", ""]).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn cmd_certify(ctx: &Context) -> Result<(), CliError> {
    let risk = ctx.cfg.risk.ok_or_else(|| CliError::Parse("certify needs a [risk] section".into()))?;
    let u = &ctx.cfg.utility;
    let cert = match risk.kind {
        RiskKind::VaR => certify_var_gamma(&ctx.model, u, &risk)?,
        RiskKind::ES => certify_es_gamma_with(&ctx.model, u, &risk, &ctx.opts)?,
    };
    ctx.prepare_out()?;
    let mut w = ctx.writer("certificate.csv")?;
    w.write_record(["name", "value", "lhs", "rhs", "holds"]).map_err(io)?;
    write_value(&mut w, "active", cert.active as u8 as f64)?;
    write_value(&mut w, "condition_lhs", cert.condition_lhs)?;
    write_value(&mut w, "condition_rhs", cert.condition_rhs)?;
    write_value(&mut w, "kappa_lo", cert.kappa_range.0)?;
    write_value(&mut w, "kappa_hi", cert.kappa_range.1)?;
    write_value(&mut w, "chi", cert.chi)?;
    write_value(&mut w, "l_star", cert.l_star)?;
    write_value(&mut w, "direct_min_slack", cert.direct_min_slack)?;
    write_value(&mut w, "printed_lhs", cert.paper_lhs)?;
    for f in &cert.flags {
        write_flag(&mut w, f)?;
    }
    w.flush().map_err(io)?;
    if let Some(rep) = &cert.report {
        write_strategy(ctx, &rep.strategy)?;
    }
    Ok(())
}

/// Reads `t,...,pi_1..pi_d,...,v` rows; returns (π, v) per node and the worst box violation.
fn read_strategy_file(ctx: &Context, path: &Path) -> Result<(Vec<DVector<f64>>, Vec<f64>, f64), CliError> {
    let d = ctx.model.dim();
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Parse(format!("strategy file lacks column {name}")))
    };
    let t_col = col("t")?;
    let pi_cols: Vec<usize> = (1..=d).map(|j| col(&format!("pi_{j}"))).collect::<Result<_, _>>()?;
    let v_col = col("v")?;
    let nodes = ctx.model.grid().nodes();
    let mut pi = Vec::new();
    let mut v = Vec::new();
    let mut violation = 0.0f64;
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Parse(format!("strategy file row {}: bad number", k + 1)))
        };
        if k >= nodes.len() || (num(t_col)? - nodes[k]).abs() > 1e-9 * (1.0 + nodes[k].abs()) {
            return Err(CliError::Parse(format!("strategy file row {} does not match the grid", k + 1)));
        }
        let p: Vec<f64> = pi_cols.iter().map(|&i| num(i)).collect::<Result<_, _>>()?;
        for x in &p {
            violation = violation.max(x - 1.0).max(-x);
        }
        let vk = num(v_col)?;
        violation = violation.max(-vk);
        pi.push(DVector::from_vec(p));
        v.push(vk);
    }
    if pi.len() != nodes.len() {
        return Err(CliError::Parse(format!("strategy file has {} rows, grid has {}", pi.len(), nodes.len())));
    }
    Ok((pi, v, violation))
}

fn load_strategy(ctx: &Context, path: &Path) -> Result<Strategy, CliError> {
    let (pi, v, _) = read_strategy_file(ctx, path)?;
    Ok(Strategy::from_pi(&ctx.model, pi, v)?)
}

pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let strategy = match &ctx.strategy_file {
        Some(p) => load_strategy(ctx, p)?,
        None => solve_report(ctx)?.strategy,
    };
    let beta = ctx.cfg.risk.map_or(0.05, |r| r.beta);
    let engine = PathEngine::new(&ctx.model, &strategy, ctx.cfg.x)?;
    let n = engine.nodes();
    let moments = engine.run(ctx.cfg.seed, ctx.cfg.paths, || {
        NodeMoments::new(n, |p: &PathSample, out: &mut [f64]| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = p.wealth(k);
            }
        })
    });
    let tails = tail_profile(&engine, ctx.cfg.seed, ctx.cfg.paths, beta, None);
    ctx.prepare_out()?;
    let mut w = ctx.writer("simulate.csv")?;
    w.write_record(["node", "t", "mean", "q_beta", "es_beta"]).map_err(io)?;
    let mean = moments.mean();
    for (k, tl) in tails.iter().enumerate() {
        w.write_record([k.to_string(), fmt(ctx.model.grid().node(k)), fmt(mean[k]), fmt(tl.quantile), fmt(tl.tail_mean)])
            .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn cmd_compare(ctx: &Context) -> Result<(), CliError> {
    if ctx.model.dim() != 1 {
        return Err(CliError::Condition(Error::Unsupported("compare needs a one-asset market".into())));
    }
    let c = compare_merton(&ctx.model, &ctx.cfg.utility)?;
    ctx.prepare_out()?;
    let f = fs::File::create(ctx.out.join("compare.csv")).map_err(io)?;
    c.write_csv(std::io::BufWriter::new(f)).map_err(io)
}

struct Check {
    name: String,
    lhs: f64,
    rhs: f64,
    tol: f64,
}

impl Check {
    fn new(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { name: name.into(), lhs, rhs, tol }
    }

    fn pass(&self) -> bool {
        self.lhs <= self.rhs + self.tol
    }
}

/// Mean and standard error of ∫(vX)^γ₁ dt + X_T^γ₂ over simulated paths.
fn mc_cost(ctx: &Context, engine: &PathEngine, s: &Strategy) -> (f64, f64) {
    let u = ctx.cfg.utility;
    let v = s.v().to_vec();
    let t = ctx.model.grid().nodes().to_vec();
    let f = move |p: &PathSample, out: &mut [f64]| {
        let n = t.len();
        let c: Vec<f64> = (0..n).map(|k| (v[k] * p.wealth(k)).powf(u.gamma1)).collect();
        let run: f64 = (0..n - 1).map(|k| 0.5 * (c[k] + c[k + 1]) * (t[k + 1] - t[k])).sum();
        out[0] = run + p.wealth(n - 1).powf(u.gamma2);
    };
    let m = engine.run(ctx.cfg.seed ^ 0x5eed, ctx.cfg.paths, || NodeMoments::new(1, f.clone()));
    (m.mean()[0], m.std_error()[0])
}

pub fn cmd_verify(ctx: &Context) -> Result<(), CliError> {
    let m = &ctx.model;
    let x = ctx.cfg.x;
    let mut checks = Vec::new();
    let (strategy, j_star) = match &ctx.strategy_file {
        Some(p) => {
            let (pi, v, violation) = read_strategy_file(ctx, p)?;
            checks.push(Check::new("admissible", violation, 0.0, STRATEGY_TOL));
            if violation > STRATEGY_TOL {
                (None, None)
            } else {
                let pi = pi.into_iter().map(|p| p.map(|x| x.clamp(0.0, 1.0))).collect();
                (Some(Strategy::from_pi(m, pi, v)?), None)
            }
        }
        None => {
            let rep = solve_report(ctx)?;
            checks.push(Check::new("admissible", 0.0, 0.0, STRATEGY_TOL));
            (Some(rep.strategy), Some(rep.j_star))
        }
    };
    if let Some(s) = &strategy {
        let engine = PathEngine::new(m, s, x)?;
        if let Some(risk) = &ctx.cfg.risk {
            let cf = constraint_profile_closed_form(m, s, risk)?;
            let sup = cf.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::new("profile_bound", sup, 1.0, 1e-9));
            let mc = constraint_profile_mc(m, s, risk, x, ctx.cfg.paths, ctx.cfg.seed)?;
            let sup = mc.iter().map(|p| p.lo).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::new("profile_mc", sup, 1.0, 1e-9));
        }
        let last = m.grid().last_index();
        let mean_t = engine.run(ctx.cfg.seed, ctx.cfg.paths, || {
            NodeMoments::new(1, move |p: &PathSample, out: &mut [f64]| out[0] = p.wealth(last))
        });
        let want = x * (m.r_cumulative()[last] - s.v_cumulative()[last] + m.inner_product_theta_path(s.y())[last]).exp();
        let band = 3.0 * mean_t.std_error()[0];
        checks.push(Check::new("mean_wealth", (mean_t.mean()[0] - want).abs(), band, 1e-9 * want));
        let exact = cost_function(m, &ctx.cfg.utility, s, x)?;
        let (c, se) = mc_cost(ctx, &engine, s);
        checks.push(Check::new("cost_mc", (c - exact).abs(), 3.0 * se, 1e-6 * exact));
        if let Some(j) = j_star {
            if m.coeffs().is_constant() {
                let pg: Vec<f64> = (0..ctx.cfg.pi_grid).map(|i| i as f64 / (ctx.cfg.pi_grid - 1) as f64).collect();
                let vg: Vec<f64> = (0..ctx.cfg.v_grid).map(|i| i as f64 / 20.0).collect();
                match grid_oracle(m, &ctx.cfg.utility, ctx.cfg.risk.as_ref(), x, &pg, &vg) {
                    Ok(best) => checks.push(Check::new("oracle_dominance", best.j - j, 0.0, 1e-6)),
                    Err(Error::EmptyFeasibleSet) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    ctx.prepare_out()?;
    let mut w = ctx.writer("verify.csv")?;
    w.write_record(["name", "lhs", "rhs", "tolerance", "pass"]).map_err(io)?;
    let mut failed = 0;
    for c in &checks {
        failed += !c.pass() as usize;
        w.write_record([c.name.clone(), fmt(c.lhs), fmt(c.rhs), fmt(c.tol), c.pass().to_string()]).map_err(io)?;
    }
    w.flush().map_err(io)?;
    if failed > 0 {
        Err(CliError::Verify(failed))
    } else {
        Ok(())
    }
}
