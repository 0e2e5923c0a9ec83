//! Experiment configuration: one JSON document, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nsk_core::besov::NormSpec;
use nsk_core::linear::{LinearParams, DEFAULT_EPS_DEG};
use nsk_core::physics::PressureModel;
use nsk_core::solver::{InitialDataSpec, NormTarget, Scheme, StepperConfig};
use nsk_core::Grid;
use serde::{Deserialize, Serialize};

/// A configuration problem, reported with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config field {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// A scalar applies to every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    One(T),
    Each(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    fn expand(&self, d: usize) -> Vec<T> {
        match self {
            PerAxis::One(v) => vec![*v; d],
            PerAxis::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    pub n: PerAxis<usize>,
    #[serde(rename = "L")]
    pub lengths: PerAxis<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            d: 3,
            n: PerAxis::One(48),
            lengths: PerAxis::One(100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    pub kappa: f64,
    #[serde(default = "default_eps_deg")]
    pub eps_deg: f64,
}

fn default_eps_deg() -> f64 {
    DEFAULT_EPS_DEG
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            mu: 1.0,
            lambda: 0.0,
            kappa: 1.0,
            eps_deg: DEFAULT_EPS_DEG,
        }
    }
}

/// Norm request as written in the config; `r` makes it a Chemin-Lerner norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormEntry {
    pub name: String,
    pub target: NormTarget,
    pub s: f64,
    pub p: f64,
    pub sigma: f64,
    #[serde(default)]
    pub r: Option<f64>,
}

impl NormEntry {
    pub fn spec(&self) -> NormSpec {
        let s = NormSpec::new(self.s, self.p, self.sigma);
        match self.r {
            Some(r) => s.with_time_index(r),
            None => s,
        }
    }
}

/// `"fit"` or an explicit positive rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum C0Policy {
    Fit,
    Value(f64),
}

impl Default for C0Policy {
    fn default() -> Self {
        C0Policy::Fit
    }
}

impl Serialize for C0Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            C0Policy::Fit => s.serialize_str("fit"),
            C0Policy::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for C0Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) if s == "fit" => Ok(C0Policy::Fit),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("expected \"fit\" or a number, got {s:?}"))),
            Raw::Value(v) => Ok(C0Policy::Value(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearVerifyConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    100
}

impl Default for LinearVerifyConfig {
    fn default() -> Self {
        LinearVerifyConfig { samples: default_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFitConfig {
    /// CSV file with a time column and one or more value columns.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_time_column")]
    pub time_column: String,
    /// Defaults to the first non-time column.
    #[serde(default)]
    pub column: Option<String>,
    /// Defaults to the last decade of the data.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_time_column() -> String {
    "t".into()
}

fn default_tolerance() -> f64 {
    0.15
}

impl Default for DecayFitConfig {
    fn default() -> Self {
        DecayFitConfig {
            input: None,
            time_column: default_time_column(),
            column: None,
            window: None,
            target: None,
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    #[serde(default)]
    pub s: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn two() -> f64 {
    2.0
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        AsymptoticsConfig {
            s: 0.0,
            p: 2.0,
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GevreyConfig {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "five")]
    pub every: usize,
    #[serde(default = "hundred")]
    pub radius_every: usize,
    /// Allowed growth of the weighted norms over the data norm.
    #[serde(default = "ten")]
    pub bound_factor: f64,
}

fn one() -> f64 {
    1.0
}

fn five() -> usize {
    5
}

fn hundred() -> usize {
    100
}

fn ten() -> f64 {
    10.0
}

impl Default for GevreyConfig {
    fn default() -> Self {
        GevreyConfig {
            p: 2.0,
            sigma: 1.0,
            every: 5,
            radius_every: 100,
            bound_factor: 10.0,
        }
    }
}

fn default_initial() -> InitialDataSpec {
    InitialDataSpec::gaussian(1e-3, 1.0)
}

fn default_time() -> StepperConfig {
    StepperConfig::new(0.01, Scheme::EtdRk2, 100.0)
}

fn default_norm_every() -> usize {
    10
}

fn default_moment_every() -> usize {
    5
}

fn default_safety() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub pressure: PressureModel,
    #[serde(default = "default_initial")]
    pub initial: InitialDataSpec,
    #[serde(default = "default_time")]
    pub time: StepperConfig,
    #[serde(default)]
    pub norms: Vec<NormEntry>,
    /// Steps between diagnostic norm samples.
    #[serde(default = "default_norm_every")]
    pub norm_every: usize,
    /// Steps between nonlinear moment samples.
    #[serde(default = "default_moment_every")]
    pub moment_every: usize,
    #[serde(default)]
    pub c0: C0Policy,
    /// Multiplier applied to the fitted linear rate under `"fit"`.
    #[serde(default = "default_safety")]
    pub c0_safety: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Snapshot file or trajectory directory read by `norms`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub linear_verify: LinearVerifyConfig,
    #[serde(default)]
    pub decay_fit: DecayFitConfig,
    #[serde(default)]
    pub asymptotics: AsymptoticsConfig,
    #[serde(default)]
    pub gevrey: GevreyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn check(ok: bool, path: &str, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, msg()))
    }
}

fn check_index(path: &str, v: f64) -> Result<(), ConfigError> {
    check(v >= 1.0, path, || format!("{v} must lie in [1, inf]"))
}

impl ExperimentConfig {
    /// Parses JSON text; errors carry the path of the offending key.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative input paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.input);
        fix(&mut self.decay_fit.input);
        fix(&mut self.output);
    }

    /// Cross-field checks beyond what the types enforce.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        check((1..=3).contains(&g.d), "grid.d", || format!("{} must be 1, 2 or 3", g.d))?;
        let n = g.n.expand(g.d);
        let l = g.lengths.expand(g.d);
        check(n.len() == g.d, "grid.n", || format!("has {} entries for d = {}", n.len(), g.d))?;
        check(l.len() == g.d, "grid.L", || format!("has {} entries for d = {}", l.len(), g.d))?;
        for (k, &nk) in n.iter().enumerate() {
            check(nk % 2 == 0, &format!("grid.n[{k}]"), || format!("{nk} must be even"))?;
            check(nk >= nsk_core::grid::MIN_MODES, &format!("grid.n[{k}]"), || {
                format!("{nk} is below the minimum of {}", nsk_core::grid::MIN_MODES)
            })?;
        }
        for (k, &lk) in l.iter().enumerate() {
            check(lk.is_finite() && lk > 0.0, &format!("grid.L[{k}]"), || format!("{lk} must be positive"))?;
        }

        let p = &self.params;
        check(p.mu > 0.0, "params.mu", || format!("{} must be positive", p.mu))?;
        check(p.lambda + 2.0 * p.mu > 0.0, "params.lambda", || {
            format!("nu = lambda + 2 mu = {} must be positive", p.lambda + 2.0 * p.mu)
        })?;
        check(p.kappa > 0.0, "params.kappa", || format!("{} must be positive", p.kappa))?;
        check((0.0..1.0).contains(&p.eps_deg), "params.eps_deg", || format!("{} must lie in [0, 1)", p.eps_deg))?;

        self.pressure
            .validate()
            .map_err(|e| ConfigError::new("pressure", e.to_string()))?;

        let t = &self.time;
        check(t.dt.is_finite() && t.dt > 0.0, "time.dt", || format!("{} must be positive", t.dt))?;
        check(t.t_final.is_finite() && t.t_final >= 0.0, "time.t_final", || format!("{} must be >= 0", t.t_final))?;
        check(t.guards.vacuum > 0.0 && t.guards.vacuum < 1.0, "time.guards.vacuum", || {
            format!("{} must lie in (0, 1)", t.guards.vacuum)
        })?;
        check(t.guards.radius_fraction > 0.0, "time.guards.radius_fraction", || {
            format!("{} must be positive", t.guards.radius_fraction)
        })?;
        check(t.wrap_threshold > 0.0, "time.wrap_threshold", || format!("{} must be positive", t.wrap_threshold))?;
        t.validate().map_err(|e| ConfigError::new("time", e.to_string()))?;

        let i = &self.initial;
        check(i.epsilon.is_finite() && i.epsilon >= 0.0, "initial.epsilon", || format!("{} must be >= 0", i.epsilon))?;
        check(i.width > 0.0, "initial.width", || format!("{} must be positive", i.width))?;
        if let Some(c) = &i.center {
            check(c.len() == g.d, "initial.center", || format!("has {} entries for d = {}", c.len(), g.d))?;
        }
        if let Some([lo, hi]) = i.band {
            check(lo >= 0.0 && hi > lo, "initial.band", || format!("[{lo}, {hi}] is not an interval"))?;
        }

        for (k, e) in self.norms.iter().enumerate() {
            check(!e.name.is_empty(), &format!("norms[{k}].name"), || "must not be empty".into())?;
            check(e.s.is_finite(), &format!("norms[{k}].s"), || format!("{} must be finite", e.s))?;
            check_index(&format!("norms[{k}].p"), e.p)?;
            check_index(&format!("norms[{k}].sigma"), e.sigma)?;
            if let Some(r) = e.r {
                check_index(&format!("norms[{k}].r"), r)?;
            }
            check(
                !self.norms[..k].iter().any(|o| o.name == e.name),
                &format!("norms[{k}].name"),
                || format!("duplicate name {:?}", e.name),
            )?;
        }
        check(self.norm_every >= 1, "norm_every", || "must be at least 1".into())?;
        check(self.moment_every >= 1, "moment_every", || "must be at least 1".into())?;
        if let C0Policy::Value(v) = self.c0 {
            check(v.is_finite() && v > 0.0, "c0", || format!("{v} must be positive"))?;
        }
        check(self.c0_safety > 0.0 && self.c0_safety <= 1.0, "c0_safety", || {
            format!("{} must lie in (0, 1]", self.c0_safety)
        })?;
        check(self.linear_verify.samples >= 1, "linear_verify.samples", || "must be at least 1".into())?;

        let f = &self.decay_fit;
        if let Some([a, b]) = f.window {
            check(a > 0.0 && b > a, "decay_fit.window", || format!("[{a}, {b}] must satisfy 0 < t0 < t1"))?;
        }
        check(f.tolerance > 0.0, "decay_fit.tolerance", || format!("{} must be positive", f.tolerance))?;

        let a = &self.asymptotics;
        check(a.p > 1.0 && a.p <= 2.0, "asymptotics.p", || format!("{} must satisfy 1 < p <= 2", a.p))?;
        let s_min = -(g.d as f64) * (1.0 - 1.0 / a.p);
        check(a.s > s_min, "asymptotics.s", || format!("{} must exceed -d/p' = {s_min}", a.s))?;
        check(a.tolerance > 0.0, "asymptotics.tolerance", || format!("{} must be positive", a.tolerance))?;

        let v = &self.gevrey;
        check_index("gevrey.p", v.p)?;
        check_index("gevrey.sigma", v.sigma)?;
        check(v.every >= 1, "gevrey.every", || "must be at least 1".into())?;
        check(v.radius_every >= 1, "gevrey.radius_every", || "must be at least 1".into())?;
        check(v.bound_factor > 0.0, "gevrey.bound_factor", || format!("{} must be positive", v.bound_factor))?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>, ConfigError> {
        let d = self.grid.d;
        Grid::new(&self.grid.n.expand(d), &self.grid.lengths.expand(d)).map_err(|e| ConfigError::new("grid", e.to_string()))
    }

    pub fn linear_params(&self) -> Result<LinearParams, ConfigError> {
        let mut p = LinearParams::new(self.params.mu, self.params.lambda, self.params.kappa)
            .map_err(|e| ConfigError::new("params", e.to_string()))?;
        p.eps_deg = self.params.eps_deg;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.grid.d, 3);
        assert_eq!(c.time.dt, 0.01);
        assert_eq!(c.c0, C0Policy::Fit);
        assert_eq!(c.initial.width, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = ExperimentConfig::from_json(r#"{"grid": {"d": 2, "n": 16, "L": 1.0, "m": 3}}"#).unwrap_err();
        assert_eq!(e.path, "grid.m");
        assert!(e.message.contains("unknown field"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"norms": [{"name": "x", "target": "a", "s": 0, "p": 2, "sigma": 1, "q": 1}]}"#)
            .unwrap_err();
        assert_eq!(e.path, "norms[0].q");
        let e = ExperimentConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn cross_field_checks_name_the_field() {
        let e = ExperimentConfig::from_json(r#"{"grid": {"d": 2, "n": [16, 15], "L": 1.0}}"#).unwrap_err();
        assert_eq!(e.path, "grid.n[1]");
        let e = ExperimentConfig::from_json(r#"{"params": {"mu": 1, "kappa": -1}}"#).unwrap_err();
        assert_eq!(e.path, "params.kappa");
        let e = ExperimentConfig::from_json(r#"{"asymptotics": {"p": 3}}"#).unwrap_err();
        assert_eq!(e.path, "asymptotics.p");
        let e = ExperimentConfig::from_json(r#"{"c0": "guess"}"#).unwrap_err();
        assert_eq!(e.path, "c0");
        let e = ExperimentConfig::from_json(r#"{"time": {"dt": 0.1, "scheme": "ETD-RK2", "t_final": 1, "guards": {"vacuum": 2, "radius_fraction": 0.5}}}"#)
            .unwrap_err();
        assert_eq!(e.path, "time.guards.vacuum");
    }

    #[test]
    fn c0_policy_round_trips() {
        let c = ExperimentConfig::from_json(r#"{"c0": 0.25}"#).unwrap();
        assert_eq!(c.c0, C0Policy::Value(0.25));
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["c0"], 0.25);
        let c = ExperimentConfig::from_json(r#"{"c0": "fit"}"#).unwrap();
        assert_eq!(serde_json::to_value(&c).unwrap()["c0"], "fit");
    }
}
