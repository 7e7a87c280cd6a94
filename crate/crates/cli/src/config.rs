//! Experiment configuration (`version = 1` TOML) and its validation.

use std::path::{Path, PathBuf};

use bdod_core::geometry::{build_cavity_cube, build_sphere, load_mesh, t_star, SurfaceMesh, Vec3};
use bdod_core::incident::{IncidentPulse, EPS_TAIL_MAX};
use bdod_core::operators::SWITCH_GUARD;
use bdod_core::synthesis::TimeGrid;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("missing [{0}] block")]
    Missing(&'static str),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere,
    CavityCube,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub shape: Shape,
    #[serde(default)]
    pub refine: u32,
    #[serde(default = "one")]
    pub radius: f64,
    pub path: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    pub direction: [f64; 3],
    pub carrier: f64,
    pub width: f64,
    pub delay: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub omega0: f64,
    /// Estimate `||A||` and `||A^{-1}||` at each frequency.
    #[serde(default = "yes")]
    pub norms: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DodBlock {
    /// Observation time; defaults to the end of illumination plus `T_* + 2 tau`.
    pub t0: Option<f64>,
    pub tau: f64,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub q: usize,
    #[serde(default = "default_tol")]
    pub tol_dod: f64,
    pub probes: Vec<[f64; 3]>,
}

fn default_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesBlock {
    /// Region radius; no volume traces when absent.
    pub radius: Option<f64>,
    pub h_vol: Option<f64>,
    #[serde(default)]
    pub probes: Vec<[f64; 3]>,
    /// Left end of the nested fit windows, measured from `T0 + offset`.
    #[serde(default = "one")]
    pub fit_start: f64,
    /// Right ends of the nested fit windows, measured from `T0 + offset`.
    pub fit_ends: Vec<f64>,
    /// Clock offset; defaults to `r_max / c`.
    pub offset: Option<f64>,
    /// Relative noise floor for the fits.
    #[serde(default = "default_floor")]
    pub noise_floor: f64,
    /// Stride between time samples of the field and energy traces.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_floor() -> f64 {
    bdod_core::observables::NOISE_FLOOR
}

fn default_stride() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mesh: MeshBlock,
    pub pulse: Option<PulseBlock>,
    pub sweep: Option<SweepBlock>,
    pub time: Option<TimeBlock>,
    pub dod: Option<DodBlock>,
    pub observables: Option<ObservablesBlock>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.version != SCHEMA_VERSION {
            return Err(ConfigError::Version(cfg.version));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Field-level checks that do not need the mesh.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.mesh.shape {
            Shape::Sphere => positive("mesh.radius", self.mesh.radius)?,
            Shape::File if self.mesh.path.is_none() => return Err(invalid("mesh.path", "required for shape = \"file\"")),
            _ => {}
        }
        if let Some(p) = &self.pulse {
            positive("pulse.width", p.width)?;
            positive("pulse.c", p.c)?;
            if !(p.carrier >= 0.0) {
                return Err(invalid("pulse.carrier", "must be nonnegative"));
            }
            if p.direction.iter().all(|x| *x == 0.0) {
                return Err(invalid("pulse.direction", "must be nonzero"));
            }
        }
        if let Some(s) = &self.sweep {
            positive("sweep.omega0", s.omega0)?;
            if !(s.omega_min >= 0.0) || !(s.omega_max >= s.omega_min) {
                return Err(invalid("sweep", "need 0 <= omega_min <= omega_max"));
            }
            if s.n_omega == 0 || (s.n_omega == 1 && s.omega_max != s.omega_min) {
                return Err(invalid("sweep.n_omega", "must be positive (1 only for a single frequency)"));
            }
            for w in self.omegas().unwrap() {
                if (w - s.omega0).abs() < SWITCH_GUARD {
                    return Err(invalid("sweep", format!("grid point {w} coincides with omega0 = {}", s.omega0)));
                }
            }
        }
        if let Some(t) = &self.time {
            TimeGrid::new(t.t_start, t.t_end, t.n_samples).map_err(|e| invalid("time", e.to_string()))?;
        }
        if let Some(d) = &self.dod {
            positive("dod.tau", d.tau)?;
            positive("dod.tol_dod", d.tol_dod)?;
            if d.probes.is_empty() {
                return Err(invalid("dod.probes", "need at least one probe"));
            }
        }
        if let Some(o) = &self.observables {
            if o.fit_ends.is_empty() {
                return Err(invalid("observables.fit_ends", "need at least one window"));
            }
            if o.fit_ends.iter().any(|e| *e <= o.fit_start) {
                return Err(invalid("observables.fit_ends", "every end must exceed fit_start"));
            }
            if let Some(r) = o.radius {
                positive("observables.radius", r)?;
                positive("observables.h_vol", o.h_vol.ok_or(invalid("observables.h_vol", "required with radius"))?)?;
            }
            if o.stride == 0 {
                return Err(invalid("observables.stride", "must be positive"));
            }
        }
        Ok(())
    }

    /// Uniform frequency grid `omega_min + j (omega_max - omega_min) / (n - 1)`.
    pub fn omegas(&self) -> Result<Vec<f64>, ConfigError> {
        let s = self.sweep.as_ref().ok_or(ConfigError::Missing("sweep"))?;
        if s.n_omega == 1 {
            return Ok(vec![s.omega_min]);
        }
        let d = (s.omega_max - s.omega_min) / (s.n_omega - 1) as f64;
        Ok((0..s.n_omega).map(|j| s.omega_min + j as f64 * d).collect())
    }

    pub fn build_mesh(&self) -> Result<SurfaceMesh, anyhow::Error> {
        Ok(match self.mesh.shape {
            Shape::Sphere => build_sphere(self.mesh.radius, self.mesh.refine),
            Shape::CavityCube => build_cavity_cube(self.mesh.refine),
            Shape::File => load_mesh(self.mesh.path.as_ref().expect("validated"))?,
        })
    }

    /// The pulse, with the tail constraint checked against `mesh`.
    pub fn pulse(&self, mesh: &SurfaceMesh) -> Result<IncidentPulse, anyhow::Error> {
        let p = self.pulse.as_ref().ok_or(ConfigError::Missing("pulse"))?;
        let d = p.direction;
        let pulse = IncidentPulse::new(Vec3::new(d[0], d[1], d[2]), p.carrier, p.width, p.delay, p.amplitude, p.c)?;
        pulse.check_tail(mesh)?;
        Ok(pulse)
    }

    pub fn time_grid(&self) -> Result<TimeGrid, anyhow::Error> {
        let t = self.time.as_ref().ok_or(ConfigError::Missing("time"))?;
        Ok(TimeGrid::new(t.t_start, t.t_end, t.n_samples)?)
    }

    /// Observation time: configured, or one diameter time plus two ramps past
    /// the end of illumination.
    pub fn observation_time(&self, mesh: &SurfaceMesh, pulse: &IncidentPulse) -> Result<f64, ConfigError> {
        let d = self.dod.as_ref().ok_or(ConfigError::Missing("dod"))?;
        Ok(d.t0
            .unwrap_or_else(|| pulse.illumination_end(mesh, EPS_TAIL_MAX) + t_star(mesh, pulse.c) + 2.0 * d.tau))
    }
}
