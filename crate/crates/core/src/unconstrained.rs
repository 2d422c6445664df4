//! Unconstrained optimal investment and consumption.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::market::{conjugate, solve, MarketModel, UtilitySpec};
use crate::quadrature::cumulative_exp_linear;
use crate::roots::bisect;
use crate::strategy::{Diagnostics, SolveReport, Strategy, Warning};

/// Iteration controls for the per-node first-order system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { max_iter: 500, damping: 0.5, tol: 1e-13 }
    }
}

/// Per-node Hamiltonian H(π) = γ(r + π'(μ − r1)) − ½γ(1−γ)|σ'π|² + Σ_j K_j(π_j).
pub fn hamiltonian(model: &MarketModel, k: usize, pi: &DVector<f64>, gamma: f64) -> Result<f64> {
    let c = model.coeffs();
    let r = c.r()[k];
    let excess = c.mu(k).add_scalar(-r);
    let y = model.sigma(k).tr_mul(pi);
    let mut h = gamma * (r + pi.dot(&excess)) - 0.5 * gamma * (1.0 - gamma) * y.norm_squared();
    for j in 0..pi.len() {
        h += model.jumps().k_transform(j, pi[j], gamma)?;
    }
    Ok(h)
}

/// Gradient of H divided by γ: (μ − r1) − (1−γ)σσ'π + Q(π).
fn gradient(model: &MarketModel, k: usize, pi: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let c = model.coeffs();
    let s = model.sigma(k);
    let mut g = c.mu(k).add_scalar(-c.r()[k]) - (1.0 - gamma) * (s * s.tr_mul(pi));
    for j in 0..pi.len() {
        g[j] += model.jumps().q_transform(j, pi[j], gamma)?;
    }
    Ok(g)
}

fn hessian(model: &MarketModel, k: usize, pi: &DVector<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let s = model.sigma(k);
    let mut h = -(1.0 - gamma) * (s * s.transpose());
    for j in 0..pi.len() {
        h[(j, j)] += model.jumps().q_derivative(j, pi[j], gamma)?;
    }
    Ok(h)
}

/// First-order function η(π) = μ − r + (γ−1)σ²π + Q(π) of a one-asset market.
///
/// With the jump compensator counted once, η(0) = μ − r.
pub fn eta_1d(model: &MarketModel, k: usize, pi: f64, gamma: f64) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch("eta_1d needs a one-asset market".into()));
    }
    let c = model.coeffs();
    let s = model.sigma(k)[(0, 0)];
    Ok(c.mu(k)[0] - c.r()[k] + (gamma - 1.0) * s * s * pi + model.jumps().q_transform(0, pi, gamma)?)
}

/// Projected gradient: components pushing out of the box are dropped.
fn projected(pi: &DVector<f64>, grad: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        pi.len(),
        pi.iter().zip(grad.iter()).map(|(&p, &g)| {
            if (p <= 0.0 && g < 0.0) || (p >= 1.0 && g > 0.0) {
                0.0
            } else {
                g
            }
        }),
    )
}

struct NodeSolution {
    pi: DVector<f64>,
    h: f64,
    residual: f64,
    iterations: usize,
}

/// Maximises H over [0,1]^d at node k.
fn solve_node(model: &MarketModel, k: usize, gamma: f64, opts: &FixedPointOptions) -> Result<NodeSolution> {
    let d = model.dim();
    let sigma = model.sigma(k);
    let sigma_t = sigma.transpose();
    let theta = model.theta(k);
    let q = 1.0 / (1.0 - gamma);

    // damped fixed point y <- q(θ + σ⁻¹Q(π)), π = clip((σ')⁻¹y)
    let clip = |v: DVector<f64>| v.map(|p| p.clamp(0.0, 1.0));
    let mut pi = clip(solve(&sigma_t, &(q * theta), k)?);
    let mut y = sigma.tr_mul(&pi);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let qv = DVector::from_iterator(
            d,
            (0..d).map(|j| model.jumps().q_transform(j, pi[j], gamma)).collect::<Result<Vec<_>>>()?,
        );
        let target = q * (theta + solve(sigma, &qv, k)?);
        let y_new = (1.0 - opts.damping) * &y + opts.damping * target;
        let pi_new = clip(solve(&sigma_t, &y_new, k)?);
        let y_proj = sigma.tr_mul(&pi_new);
        let step = (&y_proj - &y).amax();
        y = y_proj;
        pi = pi_new;
        if step < opts.tol {
            converged = true;
            break;
        }
    }

    let mut residual = projected(&pi, &gradient(model, k, &pi, gamma)?).amax();
    // projection does not give the KKT point when a bound is active; polish with Newton
    if !converged || residual > 1e-11 {
        let (p, it) = projected_newton(model, k, gamma, pi.clone())?;
        iterations += it;
        let r = projected(&p, &gradient(model, k, &p, gamma)?).amax();
        if r < residual || !converged {
            pi = p;
            residual = r;
        }
    }
    if residual > 1e-8 {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let h = hamiltonian(model, k, &pi, gamma)?;
    Ok(NodeSolution { pi, h, residual, iterations })
}

/// Active-set Newton with Armijo backtracking on the concave H.
fn projected_newton(model: &MarketModel, k: usize, gamma: f64, mut pi: DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let d = pi.len();
    let mut f = hamiltonian(model, k, &pi, gamma)?;
    for it in 1..=200 {
        let g = gradient(model, k, &pi, gamma)?;
        if projected(&pi, &g).amax() < 1e-14 {
            return Ok((pi, it));
        }
        let free: Vec<usize> = (0..d)
            .filter(|&j| !((pi[j] <= 0.0 && g[j] < 0.0) || (pi[j] >= 1.0 && g[j] > 0.0)))
            .collect();
        let hess = hessian(model, k, &pi, gamma)?;
        let mut dir = DVector::zeros(d);
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| hess[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
            let step = hf.lu().solve(&(-gf)).unwrap_or_else(|| DVector::zeros(free.len()));
            for (a, &j) in free.iter().enumerate() {
                dir[j] = step[a];
            }
        }
        // fall back to the gradient if Newton is not an ascent direction
        if dir.dot(&g) <= 0.0 {
            dir = projected(&pi, &g);
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = (&pi + t * &dir).map(|p| p.clamp(0.0, 1.0));
            let fc = hamiltonian(model, k, &cand, gamma)?;
            if fc >= f + 1e-4 * gamma * g.dot(&(&cand - &pi)) && fc >= f {
                moved = (&cand - &pi).amax() > 0.0;
                pi = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return Ok((pi, it));
        }
    }
    Ok((pi, 200))
}

/// Solves the one-asset problem by bisection on η at every node.
pub fn solve_power_1d(model: &MarketModel, utility: &UtilitySpec, x: f64) -> Result<SolveReport> {
    let gamma = equal_gamma(utility)?;
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch("solve_power_1d needs a one-asset market".into()));
    }
    let n = model.grid().len();
    let mut pis = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut diag = Diagnostics::default();
    for k in 0..n {
        if k > 0 && same_node(model, k) {
            pis.push(pis[k - 1]);
            h.push(h[k - 1]);
            continue;
        }
        let e0 = eta_1d(model, k, 0.0, gamma)?;
        let e1 = eta_1d(model, k, 1.0, gamma)?;
        let p = if e0 <= 0.0 {
            diag.warnings.push(Warning::NoInteriorRoot { node: k });
            0.0
        } else if e1 >= 0.0 {
            diag.warnings.push(Warning::NoInteriorRoot { node: k });
            1.0
        } else {
            let f = |p: f64| eta_1d(model, k, p, gamma).expect("pi in [0,1]");
            bisect(f, 0.0, 1.0, 1e-15).expect("bracket checked")
        };
        let res = eta_1d(model, k, p, gamma)?;
        let kkt = if (p == 0.0 && res < 0.0) || (p == 1.0 && res > 0.0) { 0.0 } else { res.abs() };
        diag.max_residual = diag.max_residual.max(kkt);
        pis.push(p);
        h.push(hamiltonian(model, k, &DVector::from_element(1, p), gamma)?);
    }
    let pi: Vec<DVector<f64>> = pis.iter().map(|&p| DVector::from_element(1, p)).collect();
    finish_power(model, gamma, x, pi, h, diag, true)
}

/// Solves the equal-γ problem in d dimensions.
pub fn solve_power_equal(model: &MarketModel, utility: &UtilitySpec, x: f64) -> Result<SolveReport> {
    solve_power_equal_with(model, utility, x, &FixedPointOptions::default())
}

pub fn solve_power_equal_with(
    model: &MarketModel,
    utility: &UtilitySpec,
    x: f64,
    opts: &FixedPointOptions,
) -> Result<SolveReport> {
    let gamma = equal_gamma(utility)?;
    let (pi, h, diag) = power_nodes(model, gamma, opts)?;
    finish_power(model, gamma, x, pi, h, diag, true)
}

/// Investment-only problem (v ≡ 0) with equal γ.
pub fn solve_power_no_consumption(model: &MarketModel, utility: &UtilitySpec, x: f64) -> Result<SolveReport> {
    let gamma = equal_gamma(utility)?;
    let (pi, h, diag) = power_nodes(model, gamma, &FixedPointOptions::default())?;
    finish_power(model, gamma, x, pi, h, diag, false)
}

type NodePaths = (Vec<DVector<f64>>, Vec<f64>, Diagnostics);

fn power_nodes(model: &MarketModel, gamma: f64, opts: &FixedPointOptions) -> Result<NodePaths> {
    let n = model.grid().len();
    let mut pi: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut diag = Diagnostics::default();
    for k in 0..n {
        if k > 0 && same_node(model, k) {
            pi.push(pi[k - 1].clone());
            h.push(h[k - 1]);
            continue;
        }
        let s = solve_node(model, k, gamma, opts)?;
        diag.max_residual = diag.max_residual.max(s.residual);
        diag.iterations = diag.iterations.max(s.iterations);
        pi.push(s.pi);
        h.push(s.h);
    }
    Ok((pi, h, diag))
}

fn same_node(model: &MarketModel, k: usize) -> bool {
    let c = model.coeffs();
    c.r()[k] == c.r()[k - 1] && c.mu(k) == c.mu(k - 1) && c.sigma(k) == c.sigma(k - 1)
}

fn equal_gamma(utility: &UtilitySpec) -> Result<f64> {
    match utility.gamma() {
        Some(g) if g < 1.0 => Ok(g),
        Some(_) => Err(Error::Unsupported("power solver needs gamma < 1; use solve_linear".into())),
        None => Err(Error::Unsupported("power solver needs gamma1 = gamma2".into())),
    }
}

fn finish_power(
    model: &MarketModel,
    gamma: f64,
    x: f64,
    pi: Vec<DVector<f64>>,
    h_star: Vec<f64>,
    diagnostics: Diagnostics,
    consume: bool,
) -> Result<SolveReport> {
    let grid = model.grid();
    let ln_g = grid.cumulative(&h_star);
    let g: Vec<f64> = ln_g.iter().map(|l| l.exp()).collect();
    let (rho_t, v, chi) = if consume {
        let q = conjugate(gamma).expect("gamma < 1");
        let (rho, v) = bernoulli_paths(model, &ln_g, q);
        (rho, v, chi_from_log(model, &ln_g, q))
    } else {
        let last = ln_g[grid.last_index()];
        (ln_g.iter().map(|l| (last - l).exp()).collect(), vec![0.0; g.len()], 1.0)
    };
    let strategy = Strategy::from_pi(model, pi, v)?;
    Ok(SolveReport {
        strategy,
        j_star: rho_t[0] * x.powf(gamma),
        h_star,
        g,
        rho_t,
        chi,
        rho_star: None,
        l_star: None,
        flags: Vec::new(),
        diagnostics,
    })
}

/// ln A(t) with A(t) = g^q(T) + ∫_t^T g^q ds, shifted for overflow safety.
fn log_tail(model: &MarketModel, ln_g: &[f64], q: f64) -> Vec<f64> {
    let logs: Vec<f64> = ln_g.iter().map(|l| q * l).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logs.iter().map(|l| l - m).collect();
    let cum = cumulative_exp_linear(model.grid().nodes(), &shifted);
    let last = model.grid().last_index();
    let end = shifted[last].exp() + cum[last];
    cum.iter().map(|c| (end - c).ln() + m).collect()
}

/// ρ(t) and v*(t) from ln g.
fn bernoulli_paths(model: &MarketModel, ln_g: &[f64], q: f64) -> (Vec<f64>, Vec<f64>) {
    let ln_a = log_tail(model, ln_g, q);
    let rho = ln_a.iter().zip(ln_g).map(|(a, l)| ((a - q * l) / q).exp()).collect();
    let v = ln_a.iter().zip(ln_g).map(|(a, l)| (q * l - a).exp()).collect();
    (rho, v)
}

fn chi_from_log(model: &MarketModel, ln_g: &[f64], q: f64) -> f64 {
    let ln_a = log_tail(model, ln_g, q);
    (q * ln_g[model.grid().last_index()] - ln_a[0]).exp()
}

/// ρ(t) = [(g^q(T) + ∫_t^T g^q ds)/g^q(t)]^{1/q} with g = exp ∫₀ᵗ h*.
pub fn rho_path(model: &MarketModel, h_star: &[f64], utility: &UtilitySpec) -> Result<Vec<f64>> {
    let q = equal_gamma(utility).map(|g| 1.0 / (1.0 - g))?;
    Ok(bernoulli_paths(model, &model.grid().cumulative(h_star), q).0)
}

/// v*_t = g^q(t)/(g^q(T) + ∫_t^T g^q ds).
pub fn v_star_path(model: &MarketModel, h_star: &[f64], utility: &UtilitySpec) -> Result<Vec<f64>> {
    let q = equal_gamma(utility).map(|g| 1.0 / (1.0 - g))?;
    Ok(bernoulli_paths(model, &model.grid().cumulative(h_star), q).1)
}

/// χ = g^q(T)/(‖g‖^q_{q,T} + g^q(T)) for a positive path g on the grid.
pub fn chi_value(model: &MarketModel, g: &[f64], utility: &UtilitySpec) -> Result<f64> {
    let q = equal_gamma(utility).map(|g| 1.0 / (1.0 - g))?;
    if g.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::OutOfRange("g must be positive".into()));
    }
    let ln_g: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    Ok(chi_from_log(model, &ln_g, q))
}

/// Closed-form expected utility of a deterministic strategy:
/// x^γ₁ ∫ v^γ₁ e^{γ₁D_t + ∫ΣK_γ₁} dt + x^γ₂ e^{γ₂D_T + ∫ΣK_γ₂}, with
/// D_t = R_t − V_t + (y,θ)_t − ½(1−γ)‖y‖²_t.
pub fn cost_function(model: &MarketModel, utility: &UtilitySpec, strategy: &Strategy, x: f64) -> Result<f64> {
    strategy.validate(model)?;
    let grid = model.grid();
    let last = grid.last_index();
    let r_cum = model.r_cumulative();
    let v_cum = strategy.v_cumulative();
    let yt = model.inner_product_theta_path(strategy.y());
    let ysq = strategy.y_norm_sq_cumulative(model);
    let log_factor = |gamma: f64| -> Result<Vec<f64>> {
        let mut kv = Vec::with_capacity(grid.len());
        for p in strategy.pi() {
            let mut s = 0.0;
            for j in 0..p.len() {
                s += model.jumps().k_transform(j, p[j].clamp(0.0, 1.0), gamma)?;
            }
            kv.push(s);
        }
        let k_cum = grid.cumulative(&kv);
        Ok((0..grid.len())
            .map(|i| gamma * (r_cum[i] - v_cum[i] + yt[i]) - 0.5 * gamma * (1.0 - gamma) * ysq[i] + k_cum[i])
            .collect())
    };
    let (g1, g2) = (utility.gamma1, utility.gamma2);
    let l1 = log_factor(g1)?;
    let l2 = if g2 == g1 { l1.clone() } else { log_factor(g2)? };
    let integrand: Vec<f64> = strategy.v().iter().zip(&l1).map(|(v, l)| v.powf(g1) * l.exp()).collect();
    let running = grid.cumulative(&integrand)[last];
    Ok(x.powf(g1) * running + x.powf(g2) * l2[last].exp())
}

/// Linear utility (γ₁ = γ₂ = 1): invest fully in every asset whose drift exceeds the rate.
///
/// The bound x·exp{R_T + √T‖μ − r1‖_T} is attained when the excess return is constant in
/// a one-asset market; the reported J* is the value of the returned strategy.
pub fn solve_linear(model: &MarketModel, x: f64) -> Result<SolveReport> {
    let grid = model.grid();
    let c = model.coeffs();
    let n = grid.len();
    let d = model.dim();
    let mut pi = Vec::with_capacity(n);
    let mut excess_sq = Vec::with_capacity(n);
    let mut gain = Vec::with_capacity(n);
    for k in 0..n {
        let e = c.mu(k).add_scalar(-c.r()[k]);
        if let Some(j) = (0..d).find(|&j| e[j] < -1e-15) {
            return Err(Error::DriftBelowRate { asset: j, node: k });
        }
        let p = e.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        gain.push(c.r()[k] + p.dot(&e));
        excess_sq.push(e.norm_squared());
        pi.push(p);
    }
    let t_end = grid.horizon();
    let bound_exponent = model.r_cumulative()[n - 1] + (t_end * grid.cumulative(&excess_sq)[n - 1]).sqrt();
    let ln_g = grid.cumulative(&gain);
    let strategy = Strategy::from_pi(model, pi, vec![0.0; n])?;
    let last = ln_g[n - 1];
    let mut diagnostics = Diagnostics::default();
    if (last - bound_exponent).abs() > 1e-12 * (1.0 + bound_exponent.abs()) {
        diagnostics.warnings.push(Warning::Note(format!(
            "strategy value exponent {last} differs from the bound exponent {bound_exponent}"
        )));
    }
    Ok(SolveReport {
        strategy,
        j_star: x * last.exp(),
        h_star: gain,
        g: ln_g.iter().map(|l| l.exp()).collect(),
        rho_t: ln_g.iter().map(|l| (last - l).exp()).collect(),
        chi: 1.0,
        rho_star: None,
        l_star: None,
        flags: Vec::new(),
        diagnostics,
    })
}

/// Optimal paths with jumps and with intensities set to zero.
#[derive(Debug, Clone)]
pub struct MertonComparison {
    pub t: Vec<f64>,
    pub pi_jump: Vec<f64>,
    pub pi_diffusion: Vec<f64>,
    pub v_jump: Vec<f64>,
    pub v_diffusion: Vec<f64>,
    pub rho_jump: Vec<f64>,
    pub rho_diffusion: Vec<f64>,
}

/// Solves the one-asset problem with and without jumps.
pub fn compare_merton(model: &MarketModel, utility: &UtilitySpec) -> Result<MertonComparison> {
    let jump = solve_power_1d(model, utility, 1.0)?;
    let diff = solve_power_1d(&model.without_jumps(), utility, 1.0)?;
    let first = |r: &SolveReport| r.strategy.pi().iter().map(|p| p[0]).collect::<Vec<_>>();
    Ok(MertonComparison {
        t: model.grid().nodes().to_vec(),
        pi_jump: first(&jump),
        pi_diffusion: first(&diff),
        v_jump: jump.strategy.v().to_vec(),
        v_diffusion: diff.strategy.v().to_vec(),
        rho_jump: jump.rho_t,
        rho_diffusion: diff.rho_t,
    })
}

impl MertonComparison {
    /// Writes `t,pi_jump,pi_diffusion,v_jump,v_diffusion` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,pi_jump,pi_diffusion,v_jump,v_diffusion")?;
        for k in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[k], self.pi_jump[k], self.pi_diffusion[k], self.v_jump[k], self.v_diffusion[k]
            )?;
        }
        Ok(())
    }
}
