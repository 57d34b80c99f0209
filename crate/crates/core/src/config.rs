//! Flat `key = value` experiment configurations and golden records.
//!
//! ```text
//! # comment
//! experiment = direct-stability
//! domain = koch:2
//! h = 0.03
//! gamma1 = collar:1; 0.5 0.2887 0.2 1
//! gamma2 = 1
//! t = 0.025, 0.05, 0.1, 0.2
//! ```
//!
//! Conductivities are either expressions in `x`, `y` or bump sums
//! `bumps:<base>; cx cy radius amplitude; …` (`collar:` instead of `bumps:`
//! additionally requires every bump to stay inside the domain, so that γ is
//! constant near the boundary). With a `t` list, row `t` compares
//! `γ2 + t (γ1 − γ2)` against `γ2`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::conductivity::{Bump, ConductivityField};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{PlanarDomain, Point, PrefractalSpec};
use crate::report::ExperimentReport;

const MAX_CONFIG_BYTES: usize = 1 << 20;
const MAX_LIST: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    DirectStability,
    BoundaryRecover,
    BoundaryStability,
    CgoDecay,
    DomainStability,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DirectStability => "direct-stability",
            ExperimentKind::BoundaryRecover => "boundary-recover",
            ExperimentKind::BoundaryStability => "boundary-stability",
            ExperimentKind::CgoDecay => "cgo-decay",
            ExperimentKind::DomainStability => "domain-stability",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::DirectStability,
            ExperimentKind::BoundaryRecover,
            ExperimentKind::BoundaryStability,
            ExperimentKind::CgoDecay,
            ExperimentKind::DomainStability,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Textual description of a conductivity, instantiated against a domain.
#[derive(Clone, Debug, PartialEq)]
pub enum ConductivitySpec {
    Expression(Expression),
    Bumps { collar: bool, base: f64, bumps: Vec<Bump> },
}

impl ConductivitySpec {
    pub fn build(&self, domain: &PlanarDomain) -> Result<ConductivityField> {
        match self {
            ConductivitySpec::Expression(e) if e.is_constant() => ConductivityField::constant(e.eval(0.0, 0.0)),
            ConductivitySpec::Expression(e) => ConductivityField::expression(e.clone(), domain),
            ConductivitySpec::Bumps { collar: true, base, bumps } => ConductivityField::collar(*base, bumps.clone(), domain),
            ConductivitySpec::Bumps { collar: false, base, bumps } => ConductivityField::bumps(*base, bumps.clone()),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            ConductivitySpec::Expression(e) if e.is_constant() => Some(e.eval(0.0, 0.0)),
            ConductivitySpec::Bumps { base, bumps, .. } if bumps.is_empty() => Some(*base),
            _ => None,
        }
    }

    /// `other + t (self − other)`.
    pub fn toward(&self, other: &ConductivitySpec, t: f64) -> Result<ConductivitySpec> {
        if let Some(c) = other.constant_value() {
            return Ok(match self {
                ConductivitySpec::Bumps { collar, base, bumps } => ConductivitySpec::Bumps {
                    collar: *collar,
                    base: c + t * (base - c),
                    bumps: bumps.iter().map(|b| Bump::new(b.center, b.radius, t * b.amplitude)).collect(),
                },
                ConductivitySpec::Expression(e) => {
                    ConductivitySpec::Expression(format!("{c:?} + {t:?} * (({e}) - {c:?})").parse()?)
                }
            });
        }
        match (self, other) {
            (ConductivitySpec::Expression(a), ConductivitySpec::Expression(b)) => {
                Ok(ConductivitySpec::Expression(format!("({b}) + {t:?} * (({a}) - ({b}))").parse()?))
            }
            _ => Err(Error::Config(
                "a t-family needs a constant second conductivity or two expressions".into(),
            )),
        }
    }
}

impl FromStr for ConductivitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (collar, rest) = if let Some(r) = s.strip_prefix("collar:") {
            (true, r)
        } else if let Some(r) = s.strip_prefix("bumps:") {
            (false, r)
        } else {
            return Ok(ConductivitySpec::Expression(s.parse()?));
        };
        let mut parts = rest.split(';');
        let base = parse_f64(parts.next().unwrap_or(""), "bump base")?;
        let mut bumps = Vec::new();
        for part in parts.filter(|p| !p.trim().is_empty()) {
            let v: Vec<f64> = part
                .split_whitespace()
                .map(|t| parse_f64(t, "bump parameter"))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Config(format!("bump '{}' needs 'cx cy radius amplitude'", part.trim())));
            }
            if !(v[2] > 0.0) {
                return Err(Error::Config(format!("bump radius {} must be positive", v[2])));
            }
            bumps.push(Bump::new(Point::new(v[0], v[1]), v[2], v[3]));
            if bumps.len() > MAX_LIST {
                return Err(Error::SizeLimit("too many bumps".into()));
            }
        }
        Ok(ConductivitySpec::Bumps { collar, base, bumps })
    }
}

impl fmt::Display for ConductivitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConductivitySpec::Expression(e) => write!(f, "{e}"),
            ConductivitySpec::Bumps { collar, base, bumps } => {
                write!(f, "{}:{base:?}", if *collar { "collar" } else { "bumps" })?;
                for b in bumps {
                    write!(f, "; {:?} {:?} {:?} {:?}", b.center.x, b.center.y, b.radius, b.amplitude)?;
                }
                Ok(())
            }
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what} '{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("{what} must be finite")));
    }
    Ok(v)
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.len() > MAX_LIST {
        return Err(Error::SizeLimit(format!("{what} list longer than {MAX_LIST}")));
    }
    items
        .into_iter()
        .map(|t| t.parse().map_err(|_| Error::Config(format!("{what} entry '{t}' is invalid"))))
        .collect()
}

/// A validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: PrefractalSpec,
    pub h: f64,
    pub gamma1: Option<ConductivitySpec>,
    pub gamma2: Option<ConductivitySpec>,
    /// Perturbation sizes for family experiments.
    pub t: Vec<f64>,
    /// CGO frequency magnitudes.
    pub tau: Vec<f64>,
    /// Recovery scales `2^{-k}`; empty selects the resolution default.
    pub k: Vec<i32>,
    /// Boundary point for recovery.
    pub x0: Option<Point>,
    /// Angle of `ω1` for CGO frequencies.
    pub direction: f64,
    pub seed: u64,
    pub out: Option<String>,
}

const KEYS: &[&str] = &[
    "experiment", "domain", "level", "h", "gamma1", "gamma2", "t", "tau", "k", "x0", "direction", "seed", "out",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then replaces or adds the `(key, value)` overrides
    /// before validation. Override keys are checked like file keys.
    pub fn parse_with_overrides(text: &str, overrides: &[(&str, &str)]) -> Result<Self> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(Error::SizeLimit("configuration larger than 1 MiB".into()));
        }
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, format!("expected 'key = value', found '{line}'")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("unknown key '{key}' on line {}", n + 1)));
            }
            if map.insert(key, value.trim()).is_some() {
                return Err(Error::Config(format!("key '{key}' repeated on line {}", n + 1)));
            }
        }
        for &(key, value) in overrides {
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
            map.insert(key, value.trim());
        }
        let get = |k: &str| map.get(k).copied();
        let experiment: ExperimentKind = get("experiment")
            .ok_or_else(|| Error::Config("missing key 'experiment'".into()))?
            .parse()?;
        let mut domain: PrefractalSpec = get("domain").unwrap_or("square").parse()?;
        if let Some(l) = get("level") {
            domain.level = l.parse().map_err(|_| Error::Config(format!("level '{l}' is invalid")))?;
        }
        domain.validate()?;
        let cfg = ExperimentConfig {
            experiment,
            domain,
            h: get("h").map(|v| parse_f64(v, "h")).transpose()?.unwrap_or(0.05),
            gamma1: get("gamma1").map(str::parse).transpose()?,
            gamma2: get("gamma2").map(str::parse).transpose()?,
            t: get("t").map(|v| parse_list(v, "t")).transpose()?.unwrap_or_default(),
            tau: get("tau").map(|v| parse_list(v, "tau")).transpose()?.unwrap_or_default(),
            k: get("k").map(|v| parse_list(v, "k")).transpose()?.unwrap_or_default(),
            x0: get("x0")
                .map(|v| {
                    let c: Vec<f64> = parse_list(v, "x0")?;
                    match c[..] {
                        [x, y] if x.is_finite() && y.is_finite() => Ok(Point::new(x, y)),
                        _ => Err(Error::Config("x0 must be 'x, y'".into())),
                    }
                })
                .transpose()?,
            direction: get("direction").map(|v| parse_f64(v, "direction")).transpose()?.unwrap_or(0.0),
            seed: get("seed")
                .map(|v| v.parse().map_err(|_| Error::Config(format!("seed '{v}' is invalid"))))
                .transpose()?
                .unwrap_or(0),
            out: get("out").map(str::to_string),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that the keys the experiment needs are present and sane.
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h = {} must be positive", self.h)));
        }
        if self.t.iter().any(|t| !t.is_finite()) || self.tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("t and tau entries must be finite (tau positive)".into()));
        }
        let need = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("{} requires key '{key}'", self.experiment)))
            }
        };
        need(self.gamma1.is_some(), "gamma1")?;
        match self.experiment {
            ExperimentKind::CgoDecay => need(!self.tau.is_empty(), "tau"),
            ExperimentKind::BoundaryRecover => {
                need(self.gamma2.is_some(), "gamma2")?;
                need(self.x0.is_some(), "x0")
            }
            _ => need(self.gamma2.is_some(), "gamma2"),
        }
    }

    /// Canonical rendering: every key in fixed order, defaults explicit.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        s += &format!("experiment = {}\n", self.experiment);
        s += &format!("domain = {}\n", self.domain);
        s += &format!("h = {:?}\n", self.h);
        for (k, g) in [("gamma1", &self.gamma1), ("gamma2", &self.gamma2)] {
            if let Some(g) = g {
                s += &format!("{k} = {g}\n");
            }
        }
        if !self.t.is_empty() {
            s += &format!("t = {}\n", list(&self.t));
        }
        if !self.tau.is_empty() {
            s += &format!("tau = {}\n", list(&self.tau));
        }
        if !self.k.is_empty() {
            s += &format!("k = {}\n", self.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "));
        }
        if let Some(p) = self.x0 {
            s += &format!("x0 = {:?}, {:?}\n", p.x, p.y);
        }
        s += &format!("direction = {:?}\n", self.direction);
        s += &format!("seed = {}\n", self.seed);
        if let Some(o) = &self.out {
            s += &format!("out = {o}\n");
        }
        s
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn accepts(&self, expected: f64, actual: f64) -> bool {
        if expected.is_nan() || actual.is_nan() {
            return expected.is_nan() && actual.is_nan();
        }
        match *self {
            Tolerance::Relative(r) => (expected - actual).abs() <= r * expected.abs().max(f64::MIN_POSITIVE),
            Tolerance::Absolute(a) => (expected - actual).abs() <= a,
        }
    }

    /// Default: 0.2 absolute for fitted exponents, 10⁻⁶ relative otherwise.
    pub fn default_for(name: &str) -> Self {
        let fitted = ["slope", "delta", "r_squared", "fit_slope"];
        if fitted.iter().any(|f| name == *f || name.ends_with(&format!(".{f}"))) {
            Tolerance::Absolute(0.2)
        } else {
            Tolerance::Relative(1e-6)
        }
    }
}

/// Reference scalars from a verified run with per-entry tolerances.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldenRecord {
    pub config_hash: String,
    pub entries: Vec<(String, f64, Tolerance)>,
}

pub const GOLDEN_HEADER: &str = "# calderon-golden v1";

impl GoldenRecord {
    /// Records every report scalar and every cell as `column[row]`.
    pub fn from_report(report: &ExperimentReport, config_hash: &str) -> Self {
        let mut entries: Vec<(String, f64, Tolerance)> = report
            .scalars
            .iter()
            .map(|(k, v)| (k.clone(), *v, Tolerance::default_for(k)))
            .collect();
        for (i, row) in report.rows.iter().enumerate() {
            for (c, v) in report.columns.iter().zip(row) {
                entries.push((format!("{c}[{i}]"), *v, Tolerance::default_for(c)));
            }
        }
        GoldenRecord {
            config_hash: config_hash.to_string(),
            entries,
        }
    }

    /// Mismatch descriptions; empty when the report agrees.
    pub fn compare(&self, report: &ExperimentReport, config_hash: &str) -> Vec<String> {
        let mut out = Vec::new();
        if config_hash != self.config_hash {
            out.push(format!("config hash {config_hash} differs from golden {}", self.config_hash));
        }
        let fresh = GoldenRecord::from_report(report, config_hash);
        let lookup: BTreeMap<&str, f64> = fresh.entries.iter().map(|(k, v, _)| (k.as_str(), *v)).collect();
        for (name, expected, tol) in &self.entries {
            match lookup.get(name.as_str()) {
                None => out.push(format!("{name}: missing from report")),
                Some(&actual) if !tol.accepts(*expected, actual) => {
                    out.push(format!("{name}: expected {expected:?}, got {actual:?} ({tol:?})"))
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{GOLDEN_HEADER}\nconfig_hash = {}\n", self.config_hash);
        for (name, v, tol) in &self.entries {
            let (kind, t) = match tol {
                Tolerance::Relative(t) => ("rel", t),
                Tolerance::Absolute(t) => ("abs", t),
            };
            s += &format!("{name} = {v:?} {kind} {t:?}\n");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l.trim()) != Some(GOLDEN_HEADER) {
            return Err(Error::parse(1, format!("expected header '{GOLDEN_HEADER}'")));
        }
        let mut config_hash = None;
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, "expected 'name = value'"))?;
            let key = key.trim();
            if key == "config_hash" {
                config_hash = Some(value.trim().to_string());
                continue;
            }
            let f: Vec<&str> = value.split_whitespace().collect();
            let [v, kind, t] = f[..] else {
                return Err(Error::parse(n + 1, "expected 'value rel|abs tolerance'"));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(n + 1, format!("'{s}' is not a number")));
            let t = num(t)?;
            if !(t >= 0.0) {
                return Err(Error::parse(n + 1, "tolerance must be nonnegative"));
            }
            let tol = match kind {
                "rel" => Tolerance::Relative(t),
                "abs" => Tolerance::Absolute(t),
                other => return Err(Error::parse(n + 1, format!("unknown tolerance kind '{other}'"))),
            };
            entries.push((key.to_string(), num(v)?, tol));
        }
        Ok(GoldenRecord {
            config_hash: config_hash.ok_or_else(|| Error::parse(0, "missing config_hash"))?,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# smoke\nexperiment = direct-stability\ndomain = square\nh = 0.1\ngamma1 = 1.1\ngamma2 = 1 # reference\n";

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.experiment, ExperimentKind::DirectStability);
        assert_eq!(c.h, 0.1);
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_repeated_and_missing_keys() {
        assert!(matches!(ExperimentConfig::parse(&format!("{SAMPLE}colour = red\n")), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse(&format!("{SAMPLE}h = 0.2\n")), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::parse("experiment = boundary-recover\ngamma1 = 1\ngamma2 = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(ExperimentConfig::parse("experiment = dtn\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("experiment direct\n"), Err(Error::Parse { position: 1, .. })));
        assert!(matches!(
            ExperimentConfig::parse("experiment = cgo-decay\ngamma1 = 1 +* x\ntau = 1\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn overrides_replace_file_values() {
        let c = ExperimentConfig::parse_with_overrides(SAMPLE, &[("h", "0.2"), ("seed", "9")]).unwrap();
        assert_eq!((c.h, c.seed), (0.2, 9));
        assert!(ExperimentConfig::parse_with_overrides(SAMPLE, &[("colour", "red")]).is_err());
    }

    #[test]
    fn conductivity_specs_and_families() {
        let s: ConductivitySpec = "collar:1; 0.5 0.5 0.2 0.4".parse().unwrap();
        let half = s.toward(&"1".parse().unwrap(), 0.5).unwrap();
        let ConductivitySpec::Bumps { base, bumps, collar } = &half else { panic!() };
        assert!(*collar && *base == 1.0 && bumps[0].amplitude == 0.2);
        let c = "2".parse::<ConductivitySpec>().unwrap().toward(&"1".parse().unwrap(), 0.1).unwrap();
        let ConductivitySpec::Expression(e) = c else { panic!() };
        assert!((e.eval(0.3, 0.7) - 1.1).abs() < 1e-15);
        assert!("bumps:1; 0.5 0.5 0".parse::<ConductivitySpec>().is_err());
        let shown = s.to_string().parse::<ConductivitySpec>().unwrap();
        assert_eq!(shown, s);
    }

    #[test]
    fn golden_round_trip_and_tolerances() {
        let mut r = ExperimentReport::new("x", &["a", "slope"]);
        r.push_row(vec![1.0, -1.0]);
        r.set_scalar("norm", 2.0);
        let g = GoldenRecord::from_report(&r, "abc");
        let parsed = GoldenRecord::parse(&g.to_text()).unwrap();
        assert_eq!(parsed, g);
        assert!(g.compare(&r, "abc").is_empty());
        r.rows[0][1] = -1.1;
        assert!(g.compare(&r, "abc").is_empty());
        r.rows[0][0] = 1.0 + 1e-5;
        assert_eq!(g.compare(&r, "abc").len(), 1);
        assert_eq!(g.compare(&r, "abd").len(), 2);
    }
}
