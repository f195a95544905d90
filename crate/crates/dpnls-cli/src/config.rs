//! Run configuration.
//!
//! A TOML file with three sections; every key is optional and unknown keys are
//! rejected. `--set section.key=value` flags override the file.
//!
//! ```toml
//! [params]
//! d = 1            # dimension, 1..=3
//! p = 3.0          # subcritical power, 1 < p < 1 + 4/d
//! epsilon = 1      # sign of the subcritical term: -1, 0 or 1
//! K = 2            # profile order
//! E0 = 0.0         # energy level of the minimal-mass solution
//!
//! [numerics]
//! N = 4096              # elliptic grid: ground state, operators, profile
//! R_max = 30.0
//! evolve_N = 2048       # evolution grid (rescaled variable); the minimal-mass
//! evolve_R_max = 40.0   # profile is rebuilt on it
//! dt = 2e-3             # evolution step (rescaled time in the minimal-mass run)
//! scheme = "split4"     # "split" (Strang), "split4" (triple jump) or "midpoint"
//! implicit_tol = 1e-14  # fixed-point tolerance of the midpoint scheme
//! A = 10.0              # Morawetz radius
//! lambda0 = 0.1         # lower limit of the 𝓕 integral
//! s1 = 100.0            # initial rescaled time
//! # t1 = -4e-7          # initial time; overrides s1 when present
//! t_stop_factor = 30.0  # stop once λ has shrunk by this factor
//! decompose_every = 10  # steps between modulation decompositions
//! frame_kappa = 0.5     # relaxation of the rescaled frame
//! tube = 0.3            # tube-exit threshold on ‖ε‖_H¹
//! qm_N = 8192           # grid of the small solitary waves
//! qm_R_max = 160.0
//! defocus_N = 4096      # grid of the defocusing run
//! defocus_R_max = 100.0
//! defocus_dt = 5e-3
//! defocus_t_end = 10.0
//!
//! [output]
//! dir = "dpnls-out"
//! ```

use crate::CliError;
use dpnls::evolve::Scheme;
use dpnls::Model;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub d: usize,
    pub p: f64,
    pub epsilon: i32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "E0")]
    pub e0: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { d: 1, p: 3.0, epsilon: 1, k: 2, e0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    #[serde(rename = "evolve_N")]
    pub evolve_n: usize,
    #[serde(rename = "evolve_R_max")]
    pub evolve_r_max: f64,
    pub dt: f64,
    pub scheme: String,
    pub implicit_tol: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub lambda0: f64,
    pub s1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    pub t_stop_factor: f64,
    pub decompose_every: usize,
    pub frame_kappa: f64,
    pub tube: f64,
    #[serde(rename = "qm_N")]
    pub qm_n: usize,
    #[serde(rename = "qm_R_max")]
    pub qm_r_max: f64,
    #[serde(rename = "defocus_N")]
    pub defocus_n: usize,
    #[serde(rename = "defocus_R_max")]
    pub defocus_r_max: f64,
    pub defocus_dt: f64,
    pub defocus_t_end: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n: 4096,
            r_max: 30.0,
            evolve_n: 2048,
            evolve_r_max: 40.0,
            dt: 2e-3,
            scheme: "split4".into(),
            implicit_tol: 1e-14,
            a: 10.0,
            lambda0: 0.1,
            s1: 100.0,
            t1: None,
            t_stop_factor: 30.0,
            decompose_every: 10,
            frame_kappa: 0.5,
            tube: 0.3,
            qm_n: 8192,
            qm_r_max: 160.0,
            defocus_n: 4096,
            defocus_r_max: 100.0,
            defocus_dt: 5e-3,
            defocus_t_end: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("dpnls-out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: Params,
    pub numerics: Numerics,
    pub output: Output,
}

/// Quantities fixed by (d, p), echoed next to the resolved configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    pub alpha: f64,
    pub sigma: f64,
}

fn set_path(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let (section, name) = key
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override `{key}` must look like section.key=value")))?;
    // values parse as TOML, falling back to a bare string
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = root.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(name.to_string(), value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("`{section}` is not a section"))),
    }
}

impl RunConfig {
    /// Parse TOML text plus `key=value` overrides.
    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut root: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` must look like section.key=value")))?;
            set_path(&mut root, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = toml::Value::Table(root).try_into().map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a file (if given) and apply overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_str_with(&text, overrides)
    }

    pub fn model(&self) -> Result<Model, CliError> {
        Ok(Model::new(self.params.d, self.params.p)?)
    }

    pub fn derived(&self) -> Result<Derived, CliError> {
        let m = self.model()?;
        Ok(Derived { alpha: m.alpha(), sigma: m.sigma() })
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        match self.numerics.scheme.as_str() {
            "split" => Ok(Scheme::SplitStep),
            "split4" => Ok(Scheme::SplitStep4),
            "midpoint" => Ok(Scheme::ImplicitMidpoint),
            s => Err(CliError::Config(format!("unknown scheme `{s}` (split, split4, midpoint)"))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.scheme()?;
        let p = &self.params;
        let n = &self.numerics;
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if ![-1, 0, 1].contains(&p.epsilon) {
            return bad("epsilon must be -1, 0 or 1");
        }
        if p.k == 0 {
            return bad("K must be at least 1");
        }
        if [n.n, n.evolve_n, n.qm_n, n.defocus_n].iter().any(|&v| v < 16) {
            return bad("grid sizes (N, evolve_N, qm_N, defocus_N) must be at least 16");
        }
        for (name, v) in [
            ("R_max", n.r_max),
            ("evolve_R_max", n.evolve_r_max),
            ("dt", n.dt),
            ("implicit_tol", n.implicit_tol),
            ("A", n.a),
            ("lambda0", n.lambda0),
            ("s1", n.s1),
            ("frame_kappa", n.frame_kappa),
            ("tube", n.tube),
            ("qm_R_max", n.qm_r_max),
            ("defocus_R_max", n.defocus_r_max),
            ("defocus_dt", n.defocus_dt),
            ("defocus_t_end", n.defocus_t_end),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !(n.lambda0 < 1.0) {
            return bad("lambda0 must lie in (0, 1)");
        }
        if !(n.t_stop_factor > 1.0) {
            return bad("t_stop_factor must exceed 1");
        }
        if n.decompose_every == 0 {
            return bad("decompose_every must be at least 1");
        }
        if let Some(t1) = n.t1 {
            if !(t1 < 0.0) {
                return bad("t1 must be negative");
            }
        }
        Ok(())
    }

    /// The resolved configuration with α and σ appended, as TOML.
    pub fn resolved_toml(&self) -> Result<String, CliError> {
        let mut s = toml::to_string(self).map_err(|e| CliError::Config(format!("{e}")))?;
        let d = self.derived()?;
        s.push_str(&format!("\n[derived]\nalpha = {:?}\nsigma = {:?}\n", d.alpha, d.sigma));
        Ok(s)
    }
}
