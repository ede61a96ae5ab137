//! Experiment configuration files.

use std::path::{Path, PathBuf};

use contactdd::msfem::CemParams;
use contactdd::{DdConfig, Formulation, InterfaceRule, NewtonParams, PatternSpec, Phase, SourceSpec, TwoScaleMesh};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A value or a list of values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Coarse cells per side.
    pub n_coarse: usize,
    /// Fine cells per coarse cell and side; a list sweeps h.
    pub refine: OneOrMany<usize>,
}

/// A material case: a named pattern with its two phases, or an explicit
/// pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialCase {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub stiff: Option<Phase>,
    #[serde(default)]
    pub matrix: Option<Phase>,
    #[serde(default)]
    pub pattern: Option<PatternSpec>,
}

impl MaterialCase {
    pub fn spec(&self) -> Result<PatternSpec, String> {
        match (&self.model, &self.pattern) {
            (Some(m), None) => {
                let stiff = self.stiff.ok_or("`stiff` phase is required with `model`")?;
                let matrix = self.matrix.ok_or("`matrix` phase is required with `model`")?;
                PatternSpec::named(m, stiff, matrix).map_err(|e| e.to_string())
            }
            (None, Some(p)) => {
                if self.stiff.is_some() || self.matrix.is_some() {
                    return Err("`stiff`/`matrix` only apply together with `model`".into());
                }
                Ok(p.clone())
            }
            (Some(_), Some(_)) => Err("give either `model` or `pattern`, not both".into()),
            (None, None) => Err("one of `model` or `pattern` is required".into()),
        }
    }

    /// Label used in file names and tables.
    pub fn tag(&self, index: usize) -> String {
        match (&self.label, &self.model) {
            (Some(l), _) => l.clone(),
            (None, Some(m)) => format!("{m}_{index}"),
            (None, None) => format!("material_{index}"),
        }
    }
}

/// Source term: a built-in model name or explicit boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceConfig {
    Builtin { builtin: String },
    Boxes(SourceSpec),
}

impl SourceConfig {
    pub fn spec(&self) -> contactdd::Result<SourceSpec> {
        let s = match self {
            Self::Builtin { builtin } => SourceSpec::builtin(builtin)?,
            Self::Boxes(s) => s.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Robin parameter: a number or `"sqrt_h"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RobinExpr {
    Value(f64),
    Expr(String),
}

impl RobinExpr {
    pub fn eval(&self, h: f64) -> Result<f64, String> {
        match self {
            Self::Value(v) if *v > 0.0 && v.is_finite() => Ok(*v),
            Self::Value(v) => Err(format!("Robin parameter must be positive, got {v}")),
            Self::Expr(s) => match s.trim() {
                "sqrt_h" | "sqrt(h)" => Ok(h.sqrt()),
                "h" => Ok(h),
                t => t.parse::<f64>().map_err(|_| format!("unknown Robin expression '{s}'")).and_then(|v| Self::Value(v).eval(h)),
            },
        }
    }

    /// Default stopping tolerance: 1e-4 for √h scaling, 1e-5 otherwise.
    pub fn default_tol(&self) -> f64 {
        match self {
            Self::Expr(s) if s.trim().starts_with("sqrt") => 1e-4,
            _ => 1e-5,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Value(v) => format!("{v}"),
            Self::Expr(s) if s.trim().starts_with("sqrt") => "sqrt(h)".into(),
            Self::Expr(s) => s.trim().to_string(),
        }
    }
}

/// Penalty parameter: a number or `"h"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaExpr {
    Value(f64),
    Expr(String),
}

impl DeltaExpr {
    pub fn eval(&self, h: f64) -> Result<f64, String> {
        let v = match self {
            Self::Value(v) => *v,
            Self::Expr(s) => match s.trim() {
                "h" => h,
                t => t.parse::<f64>().map_err(|_| format!("unknown penalty expression '{s}'"))?,
            },
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("penalty parameter must be positive, got {v}"))
        }
    }
}

impl Default for DeltaExpr {
    fn default() -> Self {
        Self::Expr("h".into())
    }
}

fn default_max_iter() -> usize {
    500
}
fn default_osly() -> Vec<usize> {
    vec![2]
}
fn default_n_eig() -> usize {
    4
}
fn default_jobs() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// One experiment family; list-valued fields are swept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub mesh: MeshConfig,
    pub material: OneOrMany<MaterialCase>,
    pub source: SourceConfig,
    pub formulation: Formulation,
    pub robin: OneOrMany<RobinExpr>,
    #[serde(default)]
    pub delta: DeltaExpr,
    /// Overrides the per-Robin default tolerance.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Oversampling layers (multiscale formulations).
    #[serde(default = "default_osly")]
    pub osly: Vec<usize>,
    /// Auxiliary modes per coarse cell.
    #[serde(default = "default_n_eig")]
    pub n_eig: usize,
    #[serde(default)]
    pub rule: Option<InterfaceRule>,
    #[serde(default)]
    pub newton: Option<NewtonParams>,
    #[serde(default)]
    pub projected_load: bool,
    pub output: PathBuf,
    /// Reference and basis cache; `<output>/cache` when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Sweep points run concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Record wall times; off makes every output file reproducible bit for bit.
    #[serde(default = "default_true")]
    pub timing: bool,
}

/// One expanded sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub tag: String,
    pub material_index: usize,
    pub material_tag: String,
    pub refine: usize,
    pub robin_label: String,
    pub osly: Option<usize>,
    pub dd: DdConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config {
            path: origin.display().to_string(),
            field: None,
            message: format!("{e} (line {}, column {})", e.line(), e.column()),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&text, path)
    }

    fn field_err(origin: &Path, field: &str, message: impl Into<String>) -> CliError {
        CliError::Config { path: origin.display().to_string(), field: Some(field.into()), message: message.into() }
    }

    pub fn validate(&self, origin: &Path) -> Result<(), CliError> {
        let err = |f: &str, m: String| Self::field_err(origin, f, m);
        for r in self.mesh.refine.to_vec() {
            TwoScaleMesh::new(self.mesh.n_coarse, r).map_err(|e| err("mesh", e.to_string()))?;
        }
        let mats = self.material.to_vec();
        if mats.is_empty() {
            return Err(err("material", "at least one material case is required".into()));
        }
        let mut tags = Vec::new();
        for (i, m) in mats.iter().enumerate() {
            let spec = m.spec().map_err(|e| err(&format!("material[{i}]"), e))?;
            spec.validate().map_err(|e| err(&format!("material[{i}]"), e.to_string()))?;
            let tag = m.tag(i);
            if tag.is_empty() || !tag.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                return Err(err(&format!("material[{i}].label"), format!("label '{tag}' may only use letters, digits, '_', '-' and '.'")));
            }
            if tags.contains(&tag) {
                return Err(err(&format!("material[{i}].label"), format!("duplicate label '{tag}'")));
            }
            tags.push(tag);
        }
        self.source.spec().map_err(|e| err("source", e.to_string()))?;
        let robins = self.robin.to_vec();
        if robins.is_empty() {
            return Err(err("robin", "at least one Robin parameter is required".into()));
        }
        for (i, r) in robins.iter().enumerate() {
            r.eval(0.25).map_err(|e| err(&format!("robin[{i}]"), e))?;
        }
        self.delta.eval(0.25).map_err(|e| err("delta", e))?;
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(err("tol", format!("tolerance must be positive, got {t}")));
            }
        }
        if self.max_iter == 0 {
            return Err(err("max_iter", "must be at least 1".into()));
        }
        if self.formulation.is_multiscale() {
            if self.osly.is_empty() || self.osly.contains(&0) {
                return Err(err("osly", "multiscale runs need oversampling layers ≥ 1".into()));
            }
            let min = if self.formulation.is_mixed() { 3 } else { 1 };
            if self.n_eig < min {
                return Err(err("n_eig", format!("need at least {min} modes per coarse cell")));
            }
        }
        if self.projected_load && self.formulation != Formulation::MixedFem {
            return Err(err("projected_load", "applies to mixed_fem only".into()));
        }
        if self.jobs == 0 {
            return Err(err("jobs", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    /// Sweep points in a fixed order: material, then h, then Robin, then osly.
    pub fn expand(&self) -> Result<Vec<SweepPoint>, CliError> {
        let origin = Path::new("<config>");
        let mut out = Vec::new();
        let osly: Vec<Option<usize>> =
            if self.formulation.is_multiscale() { self.osly.iter().map(|&m| Some(m)).collect() } else { vec![None] };
        for (mi, m) in self.material.to_vec().iter().enumerate() {
            let mtag = m.tag(mi);
            for refine in self.mesh.refine.to_vec() {
                let mesh = TwoScaleMesh::new(self.mesh.n_coarse, refine).map_err(|e| Self::field_err(origin, "mesh", e.to_string()))?;
                let h = mesh.h();
                let delta = self.delta.eval(h).map_err(|e| Self::field_err(origin, "delta", e))?;
                for r in self.robin.to_vec() {
                    let robin = r.eval(h).map_err(|e| Self::field_err(origin, "robin", e))?;
                    for &layers in &osly {
                        let mut dd = DdConfig::new(self.formulation, robin, delta);
                        dd.tol = self.tol.unwrap_or_else(|| r.default_tol());
                        dd.max_iter = self.max_iter;
                        dd.rule = self.rule.unwrap_or(dd.rule);
                        dd.newton = self.newton.unwrap_or_default();
                        dd.projected_load = self.projected_load;
                        dd.cem = CemParams { n_eig: self.n_eig, layers: layers.unwrap_or(1) };
                        dd.cache_dir = Some(self.cache_dir());
                        let rl = r.label().replace("sqrt(h)", "sqrth");
                        let mut tag = format!("{mtag}_h{}_beta{rl}", mesh.n_fine());
                        if let Some(l) = layers {
                            tag.push_str(&format!("_osly{l}"));
                        }
                        out.push(SweepPoint {
                            tag,
                            material_index: mi,
                            material_tag: mtag.clone(),
                            refine,
                            robin_label: r.label(),
                            osly: layers,
                            dd,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "mesh": {"n_coarse": 4, "refine": [2, 4]},
        "material": {"model": "model1", "stiff": {"E": 1000, "nu": 0.35}, "matrix": {"E": 1, "nu": 0.35}},
        "source": {"builtin": "model1"},
        "formulation": "mixed_fem",
        "robin": ["1", "sqrt_h"],
        "output": "out"
    }"#;

    #[test]
    fn parses_and_expands_sweeps() {
        let c = ExperimentConfig::from_json(BASE, Path::new("x.json")).unwrap();
        let pts = c.expand().unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].tag, "model1_0_h8_beta1");
        assert_eq!(pts[1].tag, "model1_0_h8_betasqrth");
        assert_eq!(pts[0].dd.tol, 1e-5);
        assert_eq!(pts[1].dd.tol, 1e-4);
        assert!((pts[1].dd.robin - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
        assert_eq!(pts[3].dd.delta, 1.0 / 16.0);
        assert_eq!(pts[0].dd.rule, InterfaceRule::Gauss(4));
        assert_eq!(c.cache_dir(), PathBuf::from("out/cache"));
    }

    #[test]
    fn multiscale_sweeps_osly() {
        let text = BASE.replace("mixed_fem", "mixed_cem").replace("\"output\"", "\"osly\": [1, 2, 3], \"output\"");
        let c = ExperimentConfig::from_json(&text, Path::new("x.json")).unwrap();
        let pts = c.expand().unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[2].osly, Some(3));
        assert!(pts[2].tag.ends_with("_osly3"));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = BASE.replace("\"robin\": [\"1\", \"sqrt_h\"]", "\"robin\": [\"cube_h\"]");
        match ExperimentConfig::from_json(&bad, Path::new("x.json")) {
            Err(CliError::Config { field, message, .. }) => {
                assert_eq!(field.as_deref(), Some("robin[0]"));
                assert!(message.contains("cube_h"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let syntax = BASE.replace("\"mesh\"", "\"mesh\" x");
        match ExperimentConfig::from_json(&syntax, Path::new("x.json")) {
            Err(CliError::Config { message, .. }) => assert!(message.contains("line 2")),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = BASE.replace("\"output\"", "\"colour\": 1, \"output\"");
        assert!(ExperimentConfig::from_json(&unknown, Path::new("x.json")).is_err());
        let no_phase = BASE.replace(", \"matrix\": {\"E\": 1, \"nu\": 0.35}", "");
        match ExperimentConfig::from_json(&no_phase, Path::new("x.json")) {
            Err(CliError::Config { field, .. }) => assert_eq!(field.as_deref(), Some("material[0]")),
            other => panic!("unexpected {other:?}"),
        }
        let bad_box = BASE.replace("{\"builtin\": \"model1\"}", "{\"boxes\": [{\"x0\": 0.5, \"x1\": 1.5, \"y0\": 0, \"y1\": 1, \"f1\": 1, \"f2\": 0}]}");
        match ExperimentConfig::from_json(&bad_box, Path::new("x.json")) {
            Err(CliError::Config { field, .. }) => assert_eq!(field.as_deref(), Some("source")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn robin_and_delta_expressions() {
        assert_eq!(RobinExpr::Expr("sqrt_h".into()).eval(0.25), Ok(0.5));
        assert_eq!(RobinExpr::Expr("2.5".into()).eval(0.25), Ok(2.5));
        assert_eq!(RobinExpr::Value(3.0).default_tol(), 1e-5);
        assert!(RobinExpr::Value(0.0).eval(0.25).is_err());
        assert_eq!(DeltaExpr::default().eval(0.125), Ok(0.125));
        assert_eq!(DeltaExpr::Value(1e-3).eval(0.125), Ok(1e-3));
        assert!(DeltaExpr::Expr("-1".into()).eval(0.1).is_err());
    }
}
