//! Run configuration: a TOML (or JSON) file naming a built-in scenario and
//! the simulation, budget, audit, adaptation and output settings.
//!
//! ```toml
//! [scenario]
//! name = "paper-example"   # or "paper-example-literal", "unstable-drift"
//! a = 2.0
//! b = -3.0
//! k = 0.5
//! # lipschitz = 0.001      # replaces the scenario's Lipschitz constant
//!
//! [simulation]
//! t0 = 0.0
//! t_end = 10.0
//! h = 1e-4
//! method = "euler"          # or "rk4"
//! lbs_method = "rk4"
//! x0 = [1.0]
//! omega = 200.0
//! # omega_list = [100.0, 200.0, 400.0, 800.0]
//!
//! [budget]                  # every key optional
//! # alpha_bar = 1.0
//! # beta_bar = 2.5
//! # t_f = 1.0
//! # D = 0.3
//!
//! [audit]
//! omega1 = [200.0]
//! horizon = 1.0
//! probes = 200
//! seed = 7
//! # lipschitz_scale = 1e-3
//!
//! [adaptive]
//! w0 = 1.0
//! t_f = 1.0
//!
//! [output]
//! dir = "out"
//! ```
//!
//! A run manifest written by any command is itself a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dither::DitherSignal;
use crate::dynamics::{Channel, DitheredSystem, Vector, VectorField};
use crate::error::{Error, Result};
use crate::expansion::{DEFAULT_PANELS_PER_PERIOD, DEFAULT_STEPS_PER_PERIOD};
use crate::scenarios::{example_lbs_coefficient, example_system, example_system_literal};
use crate::sim::Method;

/// Environment variable that overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "LIEBRACKET_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

fn default_a() -> f64 {
    2.0
}

fn default_b() -> f64 {
    -3.0
}

fn default_k() -> f64 {
    0.5
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { name: "paper-example".into(), a: default_a(), b: default_b(), k: default_k(), lipschitz: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub method: Method,
    /// Integrator for the averaged system.
    pub lbs_method: Method,
    pub x0: Vec<f64>,
    pub omega: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_list: Option<Vec<f64>>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_end: 10.0,
            h: 1e-4,
            method: Method::Euler,
            lbs_method: Method::Rk4,
            x0: vec![1.0],
            omega: 200.0,
            omega_list: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub omega1: Vec<f64>,
    /// Horizon length `t1 - t0`, starting at `simulation.t0`.
    pub horizon: f64,
    pub probes: usize,
    pub seed: u64,
    pub steps_per_period: usize,
    pub panels_per_period: usize,
    /// Multiplies the Lipschitz constant used by the bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_scale: Option<f64>,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            omega1: vec![200.0],
            horizon: 1.0,
            probes: 200,
            seed: 7,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            panels_per_period: DEFAULT_PANELS_PER_PERIOD,
            lipschitz_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSection {
    pub w0: f64,
    pub t_f: f64,
    pub x_tol: f64,
    pub w_tol: f64,
    pub max_epochs: usize,
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        let s = crate::adaptive::AdaptiveSettings::default();
        Self { w0: s.w0, t_f: s.t_f, x_tol: s.x_tol, w_tol: s.w_tol, max_epochs: s.max_epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Provenance block added to written manifests; ignored on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub command: String,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub adaptive: AdaptiveSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

impl ScenarioConfig {
    /// Reads TOML, or JSON when the file starts with `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let sim = &self.simulation;
        if !(sim.h > 0.0 && sim.h.is_finite()) {
            return bad(format!("simulation.h must be positive, got {}", sim.h));
        }
        if !(sim.t0.is_finite() && sim.t_end.is_finite()) || sim.t_end < sim.t0 {
            return bad(format!("simulation horizon [{}, {}] is invalid", sim.t0, sim.t_end));
        }
        if sim.x0.is_empty() || sim.x0.iter().any(|v| !v.is_finite()) {
            return bad("simulation.x0 must be a nonempty list of finite numbers".into());
        }
        for &w in self.omegas().iter() {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("dither frequency must be positive, got {w}"));
            }
        }
        if matches!(&sim.omega_list, Some(list) if list.is_empty()) {
            return bad("simulation.omega_list must not be empty".into());
        }
        if self.audit.omega1.is_empty() || self.audit.omega1.iter().any(|w| !(*w >= 1.0)) {
            return bad("audit.omega1 must list frequencies of at least 1".into());
        }
        if !(self.audit.horizon >= 0.0) {
            return bad("audit.horizon must be non-negative".into());
        }
        if matches!(self.audit.lipschitz_scale, Some(s) if !(s > 0.0 && s.is_finite())) {
            return bad("audit.lipschitz_scale must be positive".into());
        }
        if matches!(self.scenario.lipschitz, Some(l) if !(l >= 0.0 && l.is_finite())) {
            return bad("scenario.lipschitz must be non-negative".into());
        }
        self.system()?;
        Ok(())
    }

    /// `omega_list` when given, otherwise the single `omega`.
    pub fn omegas(&self) -> Vec<f64> {
        self.simulation.omega_list.clone().unwrap_or_else(|| vec![self.simulation.omega])
    }

    pub fn x0(&self) -> Vector {
        Vector::from_vec(self.simulation.x0.clone())
    }

    /// Builds the named scenario, applying any Lipschitz override.
    pub fn system(&self) -> Result<DitheredSystem> {
        let s = &self.scenario;
        let sys = match s.name.as_str() {
            "paper-example" => example_system(s.a, s.b, s.k),
            "paper-example-literal" => example_system_literal(s.a, s.b, s.k),
            "unstable-drift" => DitheredSystem::new(
                format!("unstable-drift(a={})", s.a),
                VectorField::scalar_linear(s.a),
                vec![Channel::new(VectorField::zero(1), 0.5, DitherSignal::sine())],
            )
            .and_then(|sys| sys.with_lipschitz(s.a.abs())),
            other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
        .map_err(|e| Error::Config(format!("scenario `{}`: {e}", s.name)))?;
        if sys.dim() != self.simulation.x0.len() {
            return Err(Error::Config(format!(
                "simulation.x0 has {} entries but scenario `{}` has dimension {}",
                self.simulation.x0.len(),
                s.name,
                sys.dim()
            )));
        }
        match s.lipschitz {
            Some(l) => sys.with_lipschitz(l).map_err(|e| Error::Config(e.to_string())),
            None => Ok(sys),
        }
    }

    /// `(alpha_bar, beta_bar)` from the budget section, falling back to the
    /// scenario's closed-form averaged decay.
    pub fn envelope(&self) -> Result<(f64, f64)> {
        let s = &self.scenario;
        let natural = match s.name.as_str() {
            "paper-example" => Some(-example_lbs_coefficient(s.a, s.b, s.k).coefficient),
            _ => None,
        };
        let alpha_bar = self.budget.alpha_bar.unwrap_or(1.0);
        let beta_bar = match (self.budget.beta_bar, natural) {
            (Some(b), _) => b,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::Config(format!(
                    "scenario `{}` has no averaged decay rate; set budget.beta_bar",
                    s.name
                )))
            }
        };
        Ok((alpha_bar, beta_bar))
    }

    /// Output directory, with the environment override applied.
    pub fn out_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.dir.clone())
    }
}
