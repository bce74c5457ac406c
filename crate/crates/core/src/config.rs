//! TOML scenario configuration.
//!
//! Every section is optional except `[grid]` and `[schedule]`. Material keys
//! not given fall back to [`Material::uniaxial`] for the grid dimension.
//!
//! ```toml
//! [grid]
//! dim = 1
//! extents = [16]
//! lengths = [1.0]
//!
//! [material]
//! theta_c = 1.0
//! activation = { shape = "ball", rho = 0.1 }
//!
//! [schedule]
//! t_end = 1.0
//! tau = 0.02
//! b_coeff = 0.5
//! theta_ext = 0.5
//! field = { kind = "triangle", direction = [1.0], amplitude = 1.0, period = 1.0, periods = 1 }
//!
//! [initial]
//! theta = 0.5
//!
//! [solver]
//! reg_weight = 1.0
//! magnetostatics = true
//! ```

use serde::{Deserialize, Serialize};

use crate::elliptic::Solvers;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::increment::SolverOptions;
use crate::material::{validate_material, Material};
use crate::measure::Dictionary;
use crate::schedule::{FieldKeyframe, ScalarKeyframe, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extents: Vec<usize>,
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        h: Vec<f64>,
    },
    Triangle {
        direction: Vec<f64>,
        amplitude: f64,
        period: f64,
        periods: usize,
    },
    Keyframes {
        keyframes: Vec<FieldKeyframe>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaExtConfig {
    Constant(f64),
    Keyframes(Vec<ScalarKeyframe>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t_end: f64,
    pub tau: f64,
    #[serde(default)]
    pub b_coeff: f64,
    pub theta_ext: ThetaExtConfig,
    pub field: FieldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Uniform initial temperature.
    pub theta: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { theta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    /// Atoms on `[−R, R]` in 1D.
    pub atoms_1d: usize,
    pub angles: usize,
    pub radii: usize,
    /// Admissible radius; defaults to twice the saturation magnitude.
    pub r_max: Option<f64>,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            atoms_1d: 33,
            angles: 12,
            radii: 9,
            r_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub options: SolverOptions,
    /// Weight of the `τ|λ|^{2q}` term.
    pub reg_weight: f64,
    pub magnetostatics: bool,
    pub pad_factor: f64,
    /// Hold the temperature at its initial value.
    pub isothermal: bool,
    pub dictionary: DictionaryConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            options: SolverOptions::default(),
            reg_weight: 1.0,
            magnetostatics: true,
            pad_factor: 4.0,
            isothermal: false,
            dictionary: DictionaryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a measure snapshot every this many steps (0 = only the final state).
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { snapshot_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaSweepConfig {
    pub kappas: Vec<f64>,
}

impl Default for KappaSweepConfig {
    fn default() -> Self {
        KappaSweepConfig {
            kappas: (0..8).map(|i| 4f64.powi(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauStudyConfig {
    /// Steps on the coarsest level.
    pub base_steps: usize,
    /// Number of levels; each halves the step.
    pub levels: usize,
    /// Number of equally spaced checkpoints (the final time included).
    pub checkpoints: usize,
}

impl Default for TauStudyConfig {
    fn default() -> Self {
        TauStudyConfig {
            base_steps: 25,
            levels: 5,
            checkpoints: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisConfig {
    pub amplitude: f64,
    pub period: f64,
    pub periods: usize,
    pub steps_per_period: usize,
    /// Temperatures at which a loop is traced.
    pub thetas: Vec<f64>,
}

impl Default for HysteresisConfig {
    fn default() -> Self {
        HysteresisConfig {
            amplitude: 2.0,
            period: 1.0,
            periods: 2,
            steps_per_period: 80,
            thetas: vec![0.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurieSweepConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub count: usize,
    /// Uniform external field applied during the sweep.
    pub h: Option<Vec<f64>>,
}

impl Default for CurieSweepConfig {
    fn default() -> Self {
        CurieSweepConfig {
            theta_min: 0.0,
            theta_max: 2.0,
            count: 21,
            h: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub material: Material,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub kappa_sweep: KappaSweepConfig,
    #[serde(default)]
    pub tau_study: TauStudyConfig,
    #[serde(default)]
    pub hysteresis: HysteresisConfig,
    #[serde(default)]
    pub curie_sweep: CurieSweepConfig,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub kappa: Option<f64>,
    /// Number of steps: with `tau` given the horizon becomes `steps·tau`,
    /// otherwise the step becomes `t_end/steps`.
    pub steps: Option<usize>,
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl Config {
    /// Parses a TOML document, filling missing material keys from the uniaxial defaults.
    pub fn from_toml(text: &str) -> Result<Config> {
        let mut doc: toml::Table = text.parse().map_err(cfg_err)?;
        let dim = doc
            .get("grid")
            .and_then(|g| g.get("dim"))
            .and_then(|d| d.as_integer())
            .ok_or_else(|| Error::Config("grid.dim is required".into()))?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("grid.dim must be 1 or 2, got {dim}")));
        }
        let defaults = toml::Value::try_from(Material::uniaxial(dim as usize)).map_err(cfg_err)?;
        let mut material = defaults.as_table().cloned().unwrap_or_default();
        if let Some(user) = doc.remove("material") {
            let user = user
                .as_table()
                .cloned()
                .ok_or_else(|| Error::Config("[material] must be a table".into()))?;
            if let Some(dm) = user.get("dim").and_then(|d| d.as_integer()) {
                if dm != dim {
                    return Err(Error::Config("material.dim differs from grid.dim".into()));
                }
            }
            for (k, v) in user {
                if !material.contains_key(&k) && k != "projector" {
                    return Err(Error::Config(format!("unknown material key `{k}`")));
                }
                material.insert(k, v);
            }
        }
        doc.insert("material".into(), toml::Value::Table(material));
        let cfg: Config = toml::Value::Table(doc).try_into().map_err(cfg_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(cfg_err)
    }

    /// Checks everything that can be checked without running a solver.
    pub fn validate(&self) -> Result<()> {
        let violations = validate_material(&self.material);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(format!("material: {}", list.join("; "))));
        }
        self.grid()?;
        let s = self.schedule()?;
        if s.field_dim() != self.grid.dim {
            return Err(Error::Config("field dimension differs from grid.dim".into()));
        }
        if !(self.initial.theta >= 0.0) || !self.initial.theta.is_finite() {
            return Err(Error::Config("initial.theta must be non-negative".into()));
        }
        if !(self.solver.pad_factor >= 1.0) {
            return Err(Error::Config("solver.pad_factor must be at least 1".into()));
        }
        if !(self.solver.reg_weight >= 0.0) {
            return Err(Error::Config("solver.reg_weight must be non-negative".into()));
        }
        if self.kappa_sweep.kappas.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::Config("kappa_sweep.kappas must be positive".into()));
        }
        if self.tau_study.levels < 2 || self.tau_study.base_steps == 0 || self.tau_study.checkpoints == 0 {
            return Err(Error::Config("tau_study needs at least two levels, one step and one checkpoint".into()));
        }
        let h = &self.hysteresis;
        if h.periods < 2 || h.steps_per_period < 4 || !(h.period > 0.0) || h.steps_per_period % 4 != 0 {
            return Err(Error::Config(
                "hysteresis needs at least two periods and a positive multiple of four steps per period".into(),
            ));
        }
        if h.thetas.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("hysteresis temperatures must be non-negative".into()));
        }
        let c = &self.curie_sweep;
        if c.count == 0 || !(c.theta_max >= c.theta_min) || !(c.theta_min >= 0.0) {
            return Err(Error::Config("curie_sweep needs 0 <= theta_min <= theta_max and count >= 1".into()));
        }
        if let Some(h) = &c.h {
            if h.len() != self.grid.dim {
                return Err(Error::Config("curie_sweep.h must have grid.dim components".into()));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        match (o.tau, o.steps) {
            (Some(tau), Some(n)) => {
                self.schedule.tau = tau;
                self.schedule.t_end = tau * n as f64;
            }
            (Some(tau), None) => self.schedule.tau = tau,
            (None, Some(n)) => {
                if n == 0 {
                    return Err(Error::Config("--steps must be positive".into()));
                }
                self.schedule.tau = self.schedule.t_end / n as f64;
            }
            (None, None) => {}
        }
        if let Some(k) = o.kappa {
            self.material.kappa_pen = k;
        }
        self.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let lengths = g.lengths.clone().unwrap_or_else(|| vec![1.0; g.dim]);
        Grid::unit_box(g.dim, &g.extents, &lengths).map_err(cfg_err)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = &self.schedule;
        let theta = match &s.theta_ext {
            ThetaExtConfig::Constant(v) => vec![ScalarKeyframe { t: 0.0, value: *v }],
            ThetaExtConfig::Keyframes(k) => k.clone(),
        };
        let field = match &s.field {
            FieldConfig::Constant { h } => vec![FieldKeyframe { t: 0.0, h: h.clone() }],
            FieldConfig::Triangle {
                direction,
                amplitude,
                period,
                periods,
            } => Schedule::triangle(direction, *amplitude, *period, *periods, 0.0, 0.0, *period)
                .map_err(cfg_err)?
                .field,
            FieldConfig::Keyframes { keyframes } => keyframes.clone(),
        };
        let out = Schedule {
            field,
            theta_ext: theta,
            b_coeff: s.b_coeff,
            t_end: s.t_end,
            tau: s.tau,
        };
        out.validate().map_err(cfg_err)?;
        Ok(out)
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        let d = &self.solver.dictionary;
        let r = d.r_max.unwrap_or_else(|| self.material.default_r_max());
        match self.grid.dim {
            1 => Dictionary::uniform_1d(d.atoms_1d, r),
            _ => Dictionary::polar_2d(d.angles, d.radii, r),
        }
        .map_err(cfg_err)
    }

    pub fn solvers(&self) -> Result<Solvers> {
        let grid = self.grid()?;
        Solvers::new(&grid, self.material.mu0, self.solver.pad_factor, self.solver.magnetostatics)
    }
}
