//! Flat `key = value` files with `[section]` headers.
//!
//! Run config:
//!
//! ```text
//! [utility]
//! gamma1 = 0.5
//! gamma2 = 0.5
//! [risk]
//! kind = var            # var | es | none
//! beta = 0.05
//! kappa = 0.1
//! negjump = thinning    # thinning | paper | off
//! [run]
//! market = market.txt   # relative to this file
//! x = 1
//! paths = 100000
//! seed = 42
//! pi_grid = 101
//! v_grid = 51
//! ```
//!
//! Market file:
//!
//! ```text
//! [grid]
//! horizon = 1
//! nodes = 129
//! [coefficients]
//! r = 0.03
//! mu = 0.10, 0.08
//! sigma = 0.25, 0; 0.05, 0.3   # rows separated by ';'
//! [jumps.0]
//! intensity = 0.5
//! sizes = 0.05, 0.15
//! probs = 0.5, 0.5
//! [jumps.1]
//! intensity = 1
//! density_lo = -0.2
//! density_hi = 0.3
//! density = 1, 2, 2, 1          # normalized on load
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use jumprisk_core::market::TabulatedDensity;
use jumprisk_core::{
    AssetJumps, CoefficientPath, JumpLaw, JumpSpec, MarketModel, NegJumpMode, PointMass, RiskKind, RiskSpec, TimeGrid,
    UtilitySpec,
};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseError {}

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Splits text into sections; keys before the first header are rejected.
pub fn parse_sections(text: &str) -> Result<Sections, ParseError> {
    let mut out = Sections::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if out.contains_key(&name) {
                return Err(ParseError(format!("line {}: duplicate section [{name}]", i + 1)));
            }
            out.insert(name.clone(), BTreeMap::new());
            current = Some(name);
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ParseError(format!("line {}: expected key = value", i + 1)));
        };
        let Some(sec) = &current else {
            return Err(ParseError(format!("line {}: key outside a section", i + 1)));
        };
        let table = out.get_mut(sec).expect("section exists");
        if table.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(ParseError(format!("line {}: duplicate key {}", i + 1, k.trim())));
        }
    }
    Ok(out)
}

struct Section<'a> {
    name: &'a str,
    map: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn of(s: &'a Sections, name: &'a str) -> Self {
        Self { name, map: s.get(name) }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.map.and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn req(&self, key: &str) -> Result<&'a str, ParseError> {
        self.raw(key).ok_or_else(|| ParseError(format!("[{}] missing key {key}", self.name)))
    }

    fn num(&self, key: &str) -> Result<f64, ParseError> {
        parse_f64(self.req(key)?, self.name, key)
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64, ParseError> {
        self.raw(key).map_or(Ok(default), |v| parse_f64(v, self.name, key))
    }

    fn int_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ParseError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ParseError(format!("[{}] {key}: not an integer: {v}", self.name))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ParseError> {
        self.req(key)?.split(',').map(|v| parse_f64(v.trim(), self.name, key)).collect()
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ParseError> {
        if let Some(m) = self.map {
            if let Some(k) = m.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(ParseError(format!("[{}] unknown key {k}", self.name)));
            }
        }
        Ok(())
    }
}

fn parse_f64(v: &str, section: &str, key: &str) -> Result<f64, ParseError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParseError(format!("[{section}] {key}: not a finite number: {v}")))
}

fn model_err(e: jumprisk_core::Error) -> ParseError {
    ParseError(format!("invalid market: {e}"))
}

/// Constant-coefficient market read from a market file.
pub fn load_market(path: &Path) -> Result<MarketModel, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError(format!("{}: {e}", path.display())))?;
    parse_market(&text)
}

pub fn parse_market(text: &str) -> Result<MarketModel, ParseError> {
    let s = parse_sections(text)?;
    if let Some(k) = s.keys().find(|k| !(*k == "grid" || *k == "coefficients" || k.starts_with("jumps."))) {
        return Err(ParseError(format!("unknown section [{k}]")));
    }
    let grid = Section::of(&s, "grid");
    grid.check_keys(&["horizon", "nodes"])?;
    let nodes: usize = grid.int_or("nodes", 0)?;
    let tg = TimeGrid::uniform(grid.num("horizon")?, nodes).map_err(model_err)?;

    let c = Section::of(&s, "coefficients");
    c.check_keys(&["r", "mu", "sigma"])?;
    let mu = c.list("mu")?;
    let d = mu.len();
    let rows: Vec<Vec<f64>> = c
        .req("sigma")?
        .split(';')
        .map(|row| row.split(',').map(|v| parse_f64(v.trim(), "coefficients", "sigma")).collect())
        .collect::<Result<_, _>>()?;
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(ParseError(format!("[coefficients] sigma must be {d}x{d}")));
    }
    let sigma = DMatrix::from_row_iterator(d, d, rows.into_iter().flatten());
    let coeffs = CoefficientPath::constant(nodes, c.num("r")?, DVector::from_vec(mu), sigma).map_err(model_err)?;

    let mut assets = vec![AssetJumps::none(); d];
    for name in s.keys().filter(|k| k.starts_with("jumps.")) {
        let j: usize = name["jumps.".len()..]
            .parse()
            .ok()
            .filter(|j| *j < d)
            .ok_or_else(|| ParseError(format!("[{name}] asset index must be below {d}")))?;
        let sec = Section::of(&s, name);
        sec.check_keys(&["intensity", "sizes", "probs", "density_lo", "density_hi", "density"])?;
        let law = if sec.raw("sizes").is_some() {
            let sizes = sec.list("sizes")?;
            let probs = sec.list("probs")?;
            if sizes.len() != probs.len() {
                return Err(ParseError(format!("[{name}] sizes and probs differ in length")));
            }
            JumpLaw::point_masses(sizes.into_iter().zip(probs).map(|(size, prob)| PointMass { size, prob }).collect())
                .map_err(|e| ParseError(format!("[{name}] {e}")))?
        } else {
            let dens = TabulatedDensity::normalized(sec.num("density_lo")?, sec.num("density_hi")?, sec.list("density")?)
                .map_err(|e| ParseError(format!("[{name}] {e}")))?;
            JumpLaw::Density(dens)
        };
        assets[j] = AssetJumps { intensity: sec.num("intensity")?, law };
    }
    let jumps = JumpSpec::new(assets).map_err(model_err)?;
    MarketModel::new(tg, coeffs, jumps).map_err(model_err)
}

/// Parsed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: PathBuf,
    pub utility: UtilitySpec,
    pub risk: Option<RiskSpec>,
    pub x: f64,
    pub paths: u64,
    pub seed: u64,
    pub pi_grid: usize,
    pub v_grid: usize,
}

fn kind_name(k: RiskKind) -> &'static str {
    match k {
        RiskKind::VaR => "var",
        RiskKind::ES => "es",
    }
}

pub fn mode_name(m: NegJumpMode) -> &'static str {
    match m {
        NegJumpMode::Off => "off",
        NegJumpMode::PaperFormula => "paper",
        NegJumpMode::ExactThinning => "thinning",
    }
}

pub fn parse_mode(v: &str) -> Result<NegJumpMode, ParseError> {
    match v {
        "off" => Ok(NegJumpMode::Off),
        "paper" => Ok(NegJumpMode::PaperFormula),
        "thinning" => Ok(NegJumpMode::ExactThinning),
        other => Err(ParseError(format!("unknown negative-jump method {other}"))),
    }
}

impl RunConfig {
    /// Parses `text`; a relative market path is resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ParseError> {
        let s = parse_sections(text)?;
        if let Some(k) = s.keys().find(|k| !["utility", "risk", "run"].contains(&k.as_str())) {
            return Err(ParseError(format!("unknown section [{k}]")));
        }
        let u = Section::of(&s, "utility");
        u.check_keys(&["gamma1", "gamma2", "gamma"])?;
        let utility = match u.raw("gamma") {
            Some(_) => UtilitySpec::equal(u.num("gamma")?),
            None => UtilitySpec::new(u.num("gamma1")?, u.num("gamma2")?),
        }
        .map_err(|e| ParseError(format!("[utility] {e}")))?;

        let r = Section::of(&s, "risk");
        r.check_keys(&["kind", "beta", "kappa", "negjump"])?;
        let risk = match r.raw("kind").unwrap_or("none") {
            "none" => None,
            k => {
                let kind = match k {
                    "var" => RiskKind::VaR,
                    "es" => RiskKind::ES,
                    other => return Err(ParseError(format!("[risk] unknown kind {other}"))),
                };
                let mode = parse_mode(r.raw("negjump").unwrap_or("thinning"))?;
                Some(RiskSpec::new(kind, r.num("beta")?, r.num("kappa")?, mode).map_err(|e| ParseError(format!("[risk] {e}")))?)
            }
        };

        let run = Section::of(&s, "run");
        run.check_keys(&["market", "x", "paths", "seed", "pi_grid", "v_grid"])?;
        let market = PathBuf::from(run.req("market")?);
        let market = if market.is_absolute() { market } else { base.join(market) };
        let cfg = Self {
            market,
            utility,
            risk,
            x: run.num_or("x", 1.0)?,
            paths: run.int_or("paths", 100_000)?,
            seed: run.int_or("seed", 42)?,
            pi_grid: run.int_or("pi_grid", 101)?,
            v_grid: run.int_or("v_grid", 51)?,
        };
        if !(cfg.x > 0.0) {
            return Err(ParseError("[run] x must be positive".into()));
        }
        if cfg.paths == 0 || cfg.pi_grid < 2 || cfg.v_grid < 1 {
            return Err(ParseError("[run] paths >= 1, pi_grid >= 2 and v_grid >= 1 required".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        writeln!(s, "[utility]\ngamma1 = {:?}\ngamma2 = {:?}", self.utility.gamma1, self.utility.gamma2)?;
        match &self.risk {
            None => writeln!(s, "[risk]\nkind = none")?,
            Some(r) => writeln!(
                s,
                "[risk]\nkind = {}\nbeta = {:?}\nkappa = {:?}\nnegjump = {}",
                kind_name(r.kind),
                r.beta,
                r.kappa,
                mode_name(r.negjump_mode)
            )?,
        }
        writeln!(
            s,
            "[run]\nmarket = {}\nx = {:?}\npaths = {}\nseed = {}\npi_grid = {}\nv_grid = {}",
            self.market.display(),
            self.x,
            self.paths,
            self.seed,
            self.pi_grid,
            self.v_grid
        )?;
        f.write_str(&s)
    }
}
