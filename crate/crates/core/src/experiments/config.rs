//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::random_fields::CoefficientLaw;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VarianceScaling,
    GreenDecay,
    MomentGrowth,
    IdentityCheck,
    SusceptibilityBattery,
    SpectralGap,
    Caccioppoli,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::VarianceScaling,
        Self::GreenDecay,
        Self::MomentGrowth,
        Self::IdentityCheck,
        Self::SusceptibilityBattery,
        Self::SpectralGap,
        Self::Caccioppoli,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::VarianceScaling => "variance-scaling",
            Self::GreenDecay => "green-decay",
            Self::MomentGrowth => "moment-growth",
            Self::IdentityCheck => "identity-check",
            Self::SusceptibilityBattery => "susceptibility-battery",
            Self::SpectralGap => "spectral-gap",
            Self::Caccioppoli => "caccioppoli",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the condition `N >= max(8 L, 8 ceil(sqrt T))` is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TorusRule {
    /// Violations are configuration errors.
    Strict,
    /// Violations are recorded in the summary as warnings.
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L_grid")]
    pub l_grid: Vec<usize>,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<f64>,
    pub law: CoefficientLaw,
    pub xi: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub out: PathBuf,
    pub torus_rule: TorusRule,
    #[serde(rename = "R_grid")]
    pub r_grid: Vec<usize>,
    pub q: u32,
    pub cases: usize,
}

/// Key, value format and meaning, as printed by `info`.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("experiment", "name", "variance-scaling | green-decay | moment-growth | identity-check | susceptibility-battery | spectral-gap | caccioppoli"),
    ("d", "integer 1..4", "lattice dimension"),
    ("N", "integer >= 2", "torus side"),
    ("L_grid", "list of integers", "mask half-widths (variance-scaling, identity-check)"),
    ("T_grid", "list of reals or inf", "massive-term scales"),
    ("law.kind", "bernoulli | uniform | discrete | constant", "edge law (default bernoulli)"),
    ("law.params", "list", "bernoulli: p, lo, hi; uniform: lo, hi; discrete: v:p, ...; constant: c"),
    ("xi", "list of reals", "unit direction (default e_1)"),
    ("samples", "integer >= 2", "Monte Carlo sample count"),
    ("seed", "integer", "master seed"),
    ("tol", "real", "CG relative residual (default 1e-10)"),
    ("out", "path", "output stem; writes <out>.csv and <out>.json"),
    ("torus_rule", "strict | relaxed", "N >= max(8L, 8 ceil(sqrt T)) enforcement (default strict)"),
    ("R_grid", "list of integers", "annulus radii (green-decay)"),
    ("q", "integer", "moment or annulus exponent (default 2)"),
    ("cases", "integer", "randomized cases per battery (default 20)"),
];

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| err(line, format!("`{key}`: cannot parse `{}`", v.trim())))
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split([',', ' ', '\t']).filter(|s| !s.is_empty())
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    split_list(v).map(|s| parse_num(line, key, s)).collect()
}

fn parse_t(line: usize, s: &str) -> Result<f64> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => {
            let t: f64 = parse_num(line, "T_grid", s)?;
            if t > 0.0 {
                Ok(t)
            } else {
                Err(err(line, format!("`T_grid`: T must be positive, got {t}")))
            }
        }
    }
}

fn build_law(kind: (&str, usize), params: Option<(&str, usize)>) -> Result<CoefficientLaw> {
    let (kind, kline) = kind;
    let (params, pline) = params.unwrap_or(("", kline));
    let nums = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = parse_list(pline, "law.params", params)?;
        if v.len() != n {
            return Err(err(pline, format!("`law.params`: {kind} takes {n} values, got {}", v.len())));
        }
        Ok(v)
    };
    let law = match kind {
        "bernoulli" if params.is_empty() => Ok(CoefficientLaw::default_experiment()),
        "bernoulli" => nums(3).and_then(|v| CoefficientLaw::bernoulli(v[0], v[1], v[2])),
        "uniform" => nums(2).and_then(|v| CoefficientLaw::uniform(v[0], v[1])),
        "constant" => nums(1).and_then(|v| CoefficientLaw::constant(v[0])),
        "discrete" => {
            let mut values = Vec::new();
            let mut probs = Vec::new();
            for item in split_list(params) {
                let (v, p) = item
                    .split_once(':')
                    .ok_or_else(|| err(pline, format!("`law.params`: expected value:prob, got `{item}`")))?;
                values.push(parse_num(pline, "law.params", v)?);
                probs.push(parse_num(pline, "law.params", p)?);
            }
            Ok(CoefficientLaw::discrete(values, probs)?)
        }
        other => return Err(err(kline, format!("`law.kind`: unknown law `{other}`"))),
    };
    law.map_err(|e| match e {
        Error::InvalidLaw(m) => err(pline, format!("`law.params`: {m}")),
        e => e,
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if !SCHEMA.iter().any(|(name, _, _)| *name == key) {
                return Err(err(line, format!("unknown key `{key}`")));
            }
            if entries.iter().any(|(k, _, _)| k == key) {
                return Err(err(line, format!("duplicate key `{key}`")));
            }
            entries.push((key.to_string(), value.trim().to_string(), line));
        }
        let get = |key: &str| {
            entries
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, l)| (v.as_str(), *l))
        };
        let last_line = text.lines().count().max(1);
        let required = |key: &str| get(key).ok_or_else(|| err(last_line, format!("missing required key `{key}`")));

        let (v, l) = required("experiment")?;
        let experiment = ExperimentKind::parse(v).ok_or_else(|| err(l, format!("unknown experiment `{v}`")))?;
        let (v, l) = required("d")?;
        let d: usize = parse_num(l, "d", v)?;
        if !(1..=4).contains(&d) {
            return Err(err(l, format!("`d` must be in 1..=4, got {d}")));
        }
        let (v, l) = required("N")?;
        let n: usize = parse_num(l, "N", v)?;
        if n < 2 {
            return Err(err(l, format!("`N` must be at least 2, got {n}")));
        }
        let l_grid = match get("L_grid") {
            Some((v, l)) => {
                let g: Vec<usize> = parse_list(l, "L_grid", v)?;
                if g.is_empty() {
                    return Err(err(l, "`L_grid` is empty"));
                }
                g
            }
            None => Vec::new(),
        };
        let t_grid = match get("T_grid") {
            Some((v, l)) => {
                let g = split_list(v).map(|s| parse_t(l, s)).collect::<Result<Vec<_>>>()?;
                if g.is_empty() {
                    return Err(err(l, "`T_grid` is empty"));
                }
                g
            }
            None => Vec::new(),
        };
        let law = match get("law.kind") {
            Some(kind) => build_law(kind, get("law.params"))?,
            None => match get("law.params") {
                Some(p) => build_law(("bernoulli", p.1), Some(p))?,
                None => CoefficientLaw::default_experiment(),
            },
        };
        let xi = match get("xi") {
            Some((v, l)) => {
                let xi: Vec<f64> = parse_list(l, "xi", v)?;
                if xi.len() != d {
                    return Err(err(l, format!("`xi` has {} components, expected {d}", xi.len())));
                }
                let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(err(l, format!("`xi` must be a unit vector, |xi| = {norm}")));
                }
                xi
            }
            None => {
                let mut xi = vec![0.0; d];
                xi[0] = 1.0;
                xi
            }
        };
        let (samples, samples_line) = match get("samples") {
            Some((v, l)) => (parse_num(l, "samples", v)?, l),
            None => (2, last_line),
        };
        let seed = match get("seed") {
            Some((v, l)) => parse_num(l, "seed", v)?,
            None => 0,
        };
        let tol = match get("tol") {
            Some((v, l)) => {
                let t: f64 = parse_num(l, "tol", v)?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(err(l, format!("`tol` must be in (0, 1), got {t}")));
                }
                t
            }
            None => crate::solver::DEFAULT_TOL,
        };
        let out = get("out")
            .map(|(v, _)| PathBuf::from(v))
            .unwrap_or_else(|| PathBuf::from(experiment.name()));
        let torus_rule = match get("torus_rule") {
            None | Some(("strict", _)) => TorusRule::Strict,
            Some(("relaxed", _)) => TorusRule::Relaxed,
            Some((v, l)) => return Err(err(l, format!("`torus_rule` must be strict or relaxed, got `{v}`"))),
        };
        let r_grid = match get("R_grid") {
            Some((v, l)) => parse_list(l, "R_grid", v)?,
            None => Vec::new(),
        };
        let q = match get("q") {
            Some((v, l)) => parse_num(l, "q", v)?,
            None => 2,
        };
        let cases = match get("cases") {
            Some((v, l)) => parse_num(l, "cases", v)?,
            None => 20,
        };

        let cfg = Self {
            experiment,
            d,
            n,
            l_grid,
            t_grid,
            law,
            xi,
            samples,
            seed,
            tol,
            out,
            torus_rule,
            r_grid,
            q,
            cases,
        };
        if cfg.samples < 2 && cfg.experiment != ExperimentKind::SpectralGap {
            return Err(err(samples_line, format!("`samples` must be at least 2, got {}", cfg.samples)));
        }
        let line_of = |key: &str| get(key).map(|(_, l)| l).unwrap_or(last_line);
        cfg.validate_grids(&line_of)?;
        if cfg.torus_rule == TorusRule::Strict {
            if let Some(v) = cfg.torus_violations().first() {
                return Err(err(line_of("N"), format!("{v} (set torus_rule = relaxed to proceed)")));
            }
        }
        Ok(cfg)
    }

    fn validate_grids(&self, line_of: &dyn Fn(&str) -> usize) -> Result<()> {
        use ExperimentKind::*;
        let need = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(err(line_of(key), format!("`{key}` {msg} for {}", self.experiment)))
            }
        };
        match self.experiment {
            VarianceScaling => {
                need(!self.l_grid.is_empty(), "L_grid", "is required")?;
                need(!self.t_grid.is_empty(), "T_grid", "is required")?;
            }
            GreenDecay => {
                need(self.t_grid.len() == 1 && self.t_grid[0].is_finite(), "T_grid", "must hold one finite T")?;
                need(!self.r_grid.is_empty(), "R_grid", "is required")?;
                need(self.q > 0, "q", "must be positive")?;
                for &r in &self.r_grid {
                    need(r >= 1 && 4 * r <= self.n, "R_grid", "needs 1 <= R and 4R <= N")?;
                }
            }
            MomentGrowth => {
                need(self.t_grid.len() >= 3 && self.t_grid.iter().all(|t| t.is_finite()), "T_grid", "needs at least 3 finite values")?;
                need(matches!(self.q, 2 | 4), "q", "must be 2 or 4")?;
            }
            IdentityCheck => {
                need(self.l_grid.len() == 1, "L_grid", "must hold one L")?;
                need(self.t_grid.len() == 1 && self.t_grid[0].is_finite(), "T_grid", "must hold one finite T")?;
            }
            SusceptibilityBattery => {
                need(self.t_grid.len() == 1 && self.t_grid[0].is_finite(), "T_grid", "must hold one finite T")?;
                need(self.cases >= 1, "cases", "must be positive")?;
            }
            SpectralGap => {
                need(self.t_grid.len() == 1 && self.t_grid[0].is_finite(), "T_grid", "must hold one finite T")?;
            }
            Caccioppoli => {
                need(!self.t_grid.is_empty() && self.t_grid.iter().all(|t| t.is_finite()), "T_grid", "needs finite values")?;
            }
        }
        for &l in &self.l_grid {
            need(l >= 2 && 2 * l < self.n, "L_grid", "needs 2 <= L and 2L+1 <= N")?;
        }
        Ok(())
    }

    /// Every `(L, T)` on the grids that violates `N >= max(8L, 8 ceil(sqrt T))`.
    pub fn torus_violations(&self) -> Vec<String> {
        if matches!(self.experiment, ExperimentKind::SpectralGap) {
            return Vec::new();
        }
        let mut out = Vec::new();
        for &l in &self.l_grid {
            if self.n < 8 * l {
                out.push(format!("N = {} < 8L = {}", self.n, 8 * l));
            }
        }
        for &t in &self.t_grid {
            if t.is_finite() {
                let need = 8 * t.sqrt().ceil() as usize;
                if self.n < need {
                    out.push(format!("N = {} < 8 ceil(sqrt T) = {need} at T = {t}", self.n));
                }
            }
        }
        out
    }

    pub fn csv_path(&self) -> PathBuf {
        self.out.with_extension("csv")
    }

    pub fn json_path(&self) -> PathBuf {
        self.out.with_extension("json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# variance run
experiment = variance-scaling
d = 2
N = 128
L_grid = 4, 8, 16
T_grid = 256
law.kind = bernoulli
law.params = 0.5, 1, 4
samples = 10   # small
seed = 7
out = results/var
";

    #[test]
    fn parses_a_full_config() {
        let c = ExperimentConfig::parse(GOOD).unwrap();
        assert_eq!(c.experiment, ExperimentKind::VarianceScaling);
        assert_eq!(c.l_grid, vec![4, 8, 16]);
        assert_eq!(c.t_grid, vec![256.0]);
        assert_eq!(c.xi, vec![1.0, 0.0]);
        assert_eq!(c.samples, 10);
        assert_eq!(c.law, CoefficientLaw::default_experiment());
        assert_eq!(c.csv_path(), PathBuf::from("results/var.csv"));
    }

    fn line_of(text: &str) -> usize {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of(&GOOD.replace("N = 128", "N = abc")), 4);
        assert_eq!(line_of(&GOOD.replace("d = 2", "d = 2\nfoo = 1")), 4);
        assert_eq!(line_of(&GOOD.replace("law.params = 0.5, 1, 4", "law.params = 0.5, 1")), 8);
        assert_eq!(line_of(&GOOD.replace("law.params = 0.5, 1, 4", "law.params = 1.5, 1, 4")), 8);
        assert_eq!(line_of(&GOOD.replace("samples = 10", "samples = 1")), 9);
        assert_eq!(line_of(&GOOD.replace("seed = 7", "seed 7")), 10);
    }

    #[test]
    fn torus_rule_is_enforced_unless_relaxed() {
        let bad = GOOD.replace("L_grid = 4, 8, 16", "L_grid = 4, 8, 32");
        assert_eq!(line_of(&bad), 4);
        let relaxed = format!("{bad}torus_rule = relaxed\n");
        let c = ExperimentConfig::parse(&relaxed).unwrap();
        assert_eq!(c.torus_violations().len(), 1);
    }

    #[test]
    fn laws_and_infinite_t() {
        let text = "experiment = identity-check\nd = 2\nN = 64\nL_grid = 8\nT_grid = 16\nlaw.kind = discrete\nlaw.params = 1:0.25, 2:0.75\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.law, CoefficientLaw::discrete(vec![1.0, 2.0], vec![0.25, 0.75]).unwrap());
        let text = "experiment = variance-scaling\nd = 1\nN = 64\nL_grid = 4\nT_grid = inf\nlaw.kind = constant\nlaw.params = 2\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(c.t_grid[0].is_infinite());
    }
}
