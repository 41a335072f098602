//! Experiment configuration: a flat INI dialect.
//!
//! ```text
//! # comment
//! [grid]
//! dim = 1
//! n = 201
//! ```
//!
//! Every section and key is optional; absent values fall back to the
//! two-membrane example on `(0,1)`. Unknown sections or keys are errors.

use std::fmt;
use std::path::PathBuf;

use membrane_core::obstacle::Method;
use membrane_core::operators::OperatorForm;
use membrane_core::verify::AuditConfig;
use membrane_core::{Expr, Mode, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: key.map(str::to_string),
            message: message.into(),
        }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}, key `{key}`: {}", self.message),
            (Some(line), None) => write!(f, "line {line}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["dim", "n"]),
    ("op1", &["kind", "p", "alpha", "beta", "source"]),
    ("op2", &["kind", "p", "alpha", "beta", "source"]),
    ("boundary", &["f", "g"]),
    ("obstacle", &["expr", "side"]),
    ("seed", &["expr", "mode"]),
    (
        "solver",
        &[
            "method",
            "tol",
            "max_iter",
            "omega",
            "damping",
            "outer_tol",
            "max_outer",
        ],
    ),
    ("refine", &["reference", "ns"]),
    (
        "verify",
        &[
            "complementarity_tol",
            "monotonicity_tol",
            "ordering_tol",
            "pinning_tol",
            "cross_solver_tol",
            "ratio_min",
            "ratio_max",
            "exact_error_tol",
        ],
    ),
    ("output", &["dir"]),
];

fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, None, "unterminated section header"))?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::at(
                    line,
                    None,
                    format!("unknown section [{name}]"),
                ));
            }
            section = Some(name);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, None, "expected `key = value`"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        let Some(sec) = section.clone() else {
            return Err(ConfigError::at(
                line,
                Some(&key),
                "key outside of any section",
            ));
        };
        let known = SECTIONS
            .iter()
            .find(|(s, _)| *s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !known.contains(&key.as_str()) {
            return Err(ConfigError::at(
                line,
                Some(&key),
                format!("unknown key in [{sec}]"),
            ));
        }
        if let Some(prev) = entries.iter().find(|e| e.section == sec && e.key == key) {
            return Err(ConfigError::at(
                line,
                Some(&key),
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        entries.push(Entry {
            section: sec,
            key,
            value,
            line,
        });
    }
    Ok(entries)
}

struct Lookup<'a>(&'a [Entry]);

impl Lookup<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.0.iter().find(|e| e.section == section && e.key == key)
    }

    fn parse<T>(
        &self,
        section: &str,
        key: &str,
        default: T,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => f(&e.value).ok_or_else(|| {
                ConfigError::at(e.line, Some(key), format!("invalid value {:?}", e.value))
            }),
        }
    }

    fn number(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.parse(section, key, default, |v| {
            v.parse::<f64>().ok().filter(|x| x.is_finite())
        })
    }

    fn count(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.parse(section, key, default, |v| v.parse::<usize>().ok())
    }

    fn expr(&self, section: &str, key: &str, default: &str) -> Result<Expr, ConfigError> {
        match self.get(section, key) {
            None => Ok(Expr::parse(default).expect("default expression parses")),
            Some(e) => Expr::parse(&e.value)
                .map_err(|err| ConfigError::at(e.line, Some(key), err.to_string())),
        }
    }

    fn optional_expr(&self, section: &str, key: &str) -> Result<Option<Expr>, ConfigError> {
        match self.get(section, key) {
            Some(e) if !e.value.eq_ignore_ascii_case("none") => {
                self.expr(section, key, "0").map(Some)
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    /// `None` is `auto`.
    pub method: Option<Method>,
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub damping: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n: usize,
    pub op1: OperatorForm,
    pub op2: OperatorForm,
    pub f: Expr,
    pub g: Expr,
    pub obstacle: Option<Expr>,
    pub side: Side,
    pub seed: Expr,
    pub mode: Mode,
    pub solver: SolverSection,
    pub reference: Option<Expr>,
    pub ns: Vec<usize>,
    pub audit: AuditConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::parse("").expect("empty config is valid")
    }
}

fn operator(
    look: &Lookup,
    section: &str,
    default_source: &str,
) -> Result<OperatorForm, ConfigError> {
    let source = look.expr(section, "source", default_source)?;
    let kind = look
        .get(section, "kind")
        .map(|e| (e.value.to_ascii_lowercase(), e.line));
    match kind.as_ref().map(|(k, l)| (k.as_str(), *l)) {
        None | Some(("variational", _)) => {
            for key in ["alpha", "beta"] {
                if let Some(e) = look.get(section, key) {
                    return Err(ConfigError::at(
                        e.line,
                        Some(key),
                        "only normalized operators take alpha/beta",
                    ));
                }
            }
            let p = look.number(section, "p", 2.0)?;
            if p <= 1.0 {
                let line = look.get(section, "p").map(|e| e.line).unwrap_or(0);
                return Err(ConfigError::at(line, Some("p"), "p must exceed 1"));
            }
            Ok(OperatorForm::Variational { p, source })
        }
        Some(("normalized", line)) => {
            if let Some(e) = look.get(section, "p") {
                return Err(ConfigError::at(
                    e.line,
                    Some("p"),
                    "normalized operators take alpha/beta, not p",
                ));
            }
            let alpha = look.number(section, "alpha", 0.0)?;
            let beta = look.number(section, "beta", 1.0)?;
            if alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0 {
                return Err(ConfigError::at(
                    line,
                    Some("kind"),
                    "need alpha, beta >= 0 with alpha + beta > 0",
                ));
            }
            Ok(OperatorForm::Normalized {
                alpha,
                beta,
                source,
            })
        }
        Some((other, line)) => Err(ConfigError::at(
            line,
            Some("kind"),
            format!("unknown operator kind {other:?} (variational | normalized)"),
        )),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let look = Lookup(&entries);

        let dim = look.parse("grid", "dim", 1, |v| {
            v.parse::<usize>().ok().filter(|d| *d == 1 || *d == 2)
        })?;
        let n = look.parse("grid", "n", 201, |v| {
            v.parse::<usize>().ok().filter(|n| *n >= 3)
        })?;

        let side = look.parse("obstacle", "side", Side::Below, |v| {
            match v.to_ascii_lowercase().as_str() {
                "below" => Some(Side::Below),
                "above" => Some(Side::Above),
                _ => None,
            }
        })?;
        let mode = look.parse("seed", "mode", Mode::IncreasingFromSub, |v| {
            match v.to_ascii_lowercase().as_str() {
                "increasing" | "increasing_from_sub" => Some(Mode::IncreasingFromSub),
                "decreasing" | "decreasing_from_super" => Some(Mode::DecreasingFromSuper),
                _ => None,
            }
        })?;
        let method = look.parse("solver", "method", None, |v| {
            match v.to_ascii_lowercase().as_str() {
                "auto" => Some(None),
                "psor" => Some(Some(Method::Psor)),
                "projected_gradient" | "pg" => Some(Some(Method::ProjectedGradient)),
                "fixed_point" => Some(Some(Method::FixedPoint)),
                _ => None,
            }
        })?;
        let positive = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0);
        let solver = SolverSection {
            method,
            tol: look.parse("solver", "tol", 1e-10, positive)?,
            max_iter: look.count("solver", "max_iter", 1_000_000)?,
            omega: look.parse("solver", "omega", 1.5, |v| {
                v.parse::<f64>().ok().filter(|w| *w > 0.0 && *w < 2.0)
            })?,
            damping: look.parse("solver", "damping", 1.0, |v| {
                v.parse::<f64>().ok().filter(|d| *d > 0.0 && *d <= 1.0)
            })?,
            outer_tol: look.parse("solver", "outer_tol", 1e-9, positive)?,
            max_outer: look.count("solver", "max_outer", 10_000)?,
        };

        let ns = look.parse("refine", "ns", vec![51, 101, 201], |v| {
            v.split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|n| *n >= 3))
                .collect::<Option<Vec<_>>>()
                .filter(|ns| !ns.is_empty())
        })?;

        let d = AuditConfig::default();
        let audit = AuditConfig {
            complementarity_tol: look.number(
                "verify",
                "complementarity_tol",
                d.complementarity_tol,
            )?,
            monotonicity_tol: look.number("verify", "monotonicity_tol", d.monotonicity_tol)?,
            ordering_tol: look.number("verify", "ordering_tol", d.ordering_tol)?,
            pinning_tol: look.number("verify", "pinning_tol", d.pinning_tol)?,
            cross_solver_tol: look.number("verify", "cross_solver_tol", d.cross_solver_tol)?,
            ratio_min: look.number("verify", "ratio_min", d.ratio_min)?,
            ratio_max: look.number("verify", "ratio_max", d.ratio_max)?,
            exact_error_tol: look.number("verify", "exact_error_tol", d.exact_error_tol)?,
        };

        Ok(Self {
            dim,
            n,
            op1: operator(&look, "op1", "10")?,
            op2: operator(&look, "op2", "-2")?,
            f: look.expr("boundary", "f", "1")?,
            g: look.expr("boundary", "g", "0")?,
            obstacle: look.optional_expr("obstacle", "expr")?,
            side,
            seed: look.expr("seed", "expr", "0")?,
            mode,
            solver,
            reference: look.optional_expr("refine", "reference")?,
            ns,
            audit,
            out_dir: PathBuf::from(
                look.get("output", "dir")
                    .map(|e| e.value.as_str())
                    .unwrap_or("out"),
            ),
        })
    }
}
