//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [family]
//! name = "coupled_standard"
//! strength = 0.3
//! coupling = 0.1
//! drift = 0.41421356237309503
//!
//! [frequency]
//! omega = [0.6180339887498949, 0.41421356237309503]
//!
//! [torus]
//! truncation = [63, 63]
//!
//! [solver]
//! target_error = 1e-12
//!
//! [growth]
//! enabled = true
//! ```
//!
//! Only `[family]` and `[frequency].omega` are required.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diophantine::Frequency;
use crate::error::{Error, Result};
use crate::fourier::{TorusEmbedding, Truncation};
use crate::geometry::{PresymplecticStructure, Primitive};
use crate::io;
use crate::models::{CoupledStandardFamily, FroeschleFamily, MapFamily};
use crate::newton::{GrowthPolicy, SolveConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    CoupledStandard {
        #[serde(default)]
        strength: f64,
        #[serde(default)]
        coupling: f64,
        drift: f64,
        #[serde(default = "default_y_bound")]
        y_bound: f64,
    },
    Froeschle {
        #[serde(default)]
        k1: f64,
        #[serde(default)]
        k2: f64,
        #[serde(default)]
        h: f64,
        #[serde(default)]
        coupling: f64,
        drift: f64,
        #[serde(default = "default_y_bound")]
        y_bound: f64,
    },
}

fn default_y_bound() -> f64 {
    10.0
}

impl FamilyConfig {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            FamilyConfig::CoupledStandard { .. } => (1, 1),
            FamilyConfig::Froeschle { .. } => (2, 1),
        }
    }

    pub fn build(&self) -> Box<dyn MapFamily> {
        match *self {
            FamilyConfig::CoupledStandard {
                strength,
                coupling,
                drift,
                y_bound,
            } => {
                let mut f = CoupledStandardFamily::new(strength, coupling, drift);
                f.y_bound = y_bound;
                Box::new(f)
            }
            FamilyConfig::Froeschle {
                k1,
                k2,
                h,
                coupling,
                drift,
                y_bound,
            } => {
                let mut f = FroeschleFamily::new(k1, k2, h, coupling, drift);
                f.y_bound = y_bound;
                Box::new(f)
            }
        }
    }

    /// Copy with the named scalar parameter set to `value`.
    pub fn with_knob(&self, knob: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let slot = match (&mut out, knob) {
            (FamilyConfig::CoupledStandard { strength, .. }, "strength") => strength,
            (FamilyConfig::CoupledStandard { coupling, .. }, "coupling") => coupling,
            (FamilyConfig::CoupledStandard { drift, .. }, "drift") => drift,
            (FamilyConfig::Froeschle { k1, .. }, "k1") => k1,
            (FamilyConfig::Froeschle { k2, .. }, "k2") => k2,
            (FamilyConfig::Froeschle { h, .. }, "h") => h,
            (FamilyConfig::Froeschle { coupling, .. }, "coupling") => coupling,
            (FamilyConfig::Froeschle { drift, .. }, "drift") => drift,
            _ => {
                return Err(Error::Config(format!(
                    "family has no continuation knob named \"{knob}\""
                )))
            }
        };
        *slot = value;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub omega: Vec<f64>,
    /// Defaults to the torus dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_scan_radius")]
    pub scan_radius: usize,
}

fn default_scan_radius() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusConfig {
    /// Radii per torus axis; a single entry applies to all axes.
    pub truncation: Vec<usize>,
    /// Action of the flat starting torus; defaults to the first `d`
    /// frequencies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
    /// Torus file to start from instead of the flat torus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<PathBuf>,
}

impl Default for TorusConfig {
    fn default() -> Self {
        Self {
            truncation: vec![32],
            y0: None,
            rho: 0.0,
            lambda0: None,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JConfig {
    /// Only `"standard"` is accepted.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(rename = "J")]
    pub j: JConfig,
    pub primitive: Primitive,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            j: JConfig::Named("standard".into()),
            primitive: Primitive::YDx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    pub knob: String,
    pub schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    pub orbit_length: usize,
    pub flux_points: usize,
    pub presymplectic_samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            orbit_length: 1000,
            flux_points: 256,
            presymplectic_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: FamilyConfig,
    pub frequency: FrequencyConfig,
    #[serde(default)]
    pub torus: TorusConfig,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthPolicy>,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationConfig>,
}

impl RunConfig {
    /// Parses and validates; the `[growth]` table is folded into the solver.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        if let Some(g) = cfg.growth.take() {
            if cfg.solver.growth != GrowthPolicy::default() {
                return Err(Error::Config(
                    "growth policy given both in [growth] and [solver.growth]".into(),
                ));
            }
            cfg.solver.growth = g;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative `torus.initial` paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(init), Some(dir)) = (&cfg.torus.initial, path.parent()) {
            if init.is_relative() {
                cfg.torus.initial = Some(dir.join(init));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = self.family.dims();
        let r = d + n;
        if self.frequency.omega.len() != r {
            return Err(Error::Config(format!(
                "omega has {} entries, the family needs d + n = {r}",
                self.frequency.omega.len()
            )));
        }
        if let Some(sigma) = self.frequency.sigma {
            if sigma < r as f64 {
                return Err(Error::Config(format!(
                    "sigma = {sigma} is not admissible: the Diophantine exponent must be at least d + n = {r}"
                )));
            }
        }
        if !(self.torus.truncation.len() == 1 || self.torus.truncation.len() == r) {
            return Err(Error::Config(format!(
                "torus.truncation needs 1 or {r} entries"
            )));
        }
        if let Some(y0) = &self.torus.y0 {
            if y0.len() != d {
                return Err(Error::Config(format!("torus.y0 needs {d} entries")));
            }
        }
        let m = self.family.build().param_dim();
        if let Some(l) = &self.torus.lambda0 {
            if l.len() != m {
                return Err(Error::Config(format!("torus.lambda0 needs {m} entries")));
            }
        }
        self.solver.validate(m)?;
        self.structure()?;
        self.frequency()?;
        Ok(())
    }

    /// Runs the divisor scan; rejects resonant frequencies.
    pub fn frequency(&self) -> Result<Frequency> {
        Frequency::new(
            self.frequency.omega.clone(),
            self.frequency.sigma,
            self.frequency.scan_radius,
        )
    }

    pub fn structure(&self) -> Result<PresymplecticStructure> {
        let (d, n) = self.family.dims();
        match &self.structure.j {
            JConfig::Named(name) if name == "standard" => {
                if self.structure.primitive == Primitive::YDx {
                    Ok(PresymplecticStructure::standard(d, n))
                } else {
                    PresymplecticStructure::new(
                        d,
                        n,
                        PresymplecticStructure::standard(d, n).j(&[]).clone(),
                        self.structure.primitive.clone(),
                    )
                }
            }
            JConfig::Named(other) => Err(Error::Config(format!(
                "unknown structure J = \"{other}\"; use \"standard\" or a matrix"
            ))),
            JConfig::Matrix(rows) => {
                let size = rows.len();
                if rows.iter().any(|r| r.len() != size) {
                    return Err(Error::Config("structure J must be square".into()));
                }
                let j = DMatrix::from_fn(size, size, |i, k| rows[i][k]);
                PresymplecticStructure::new(d, n, j, self.structure.primitive.clone())
            }
        }
    }

    pub fn truncation(&self) -> Truncation {
        let (d, n) = self.family.dims();
        let t = &self.torus.truncation;
        if t.len() == 1 {
            Truncation::uniform(d + n, t[0])
        } else {
            Truncation::new(t.clone())
        }
    }

    /// Starting torus and parameter, from `torus.initial` or the flat torus.
    pub fn initial(&self) -> Result<(TorusEmbedding, Vec<f64>)> {
        let (d, _) = self.family.dims();
        let m = self.family.build().param_dim();
        if let Some(path) = &self.torus.initial {
            let stored = io::load_torus(path)?;
            if stored.torus.d() != d || stored.torus.n() != self.family.dims().1 {
                return Err(Error::DimensionMismatch(
                    "initial torus does not match the family dimensions".into(),
                ));
            }
            let lambda = self
                .torus
                .lambda0
                .clone()
                .or(stored.lambda)
                .unwrap_or_else(|| vec![0.0; m]);
            return Ok((stored.torus, lambda));
        }
        let y0 = self
            .torus
            .y0
            .clone()
            .unwrap_or_else(|| self.frequency.omega[..d].to_vec());
        let k = TorusEmbedding::flat(d, self.family.dims().1, self.truncation(), &y0, self.torus.rho)?;
        Ok((k, self.torus.lambda0.clone().unwrap_or_else(|| vec![0.0; m])))
    }

    /// The fully defaulted configuration, for log headers.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot echo configuration: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[family]
name = "coupled_standard"
drift = 0.41421356237309503

[frequency]
omega = [0.6180339887498949, 0.41421356237309503]
"#;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.solver, SolveConfig::default());
        assert_eq!(cfg.torus.truncation, vec![32]);
        let echoed = cfg.to_toml().unwrap();
        for key in ["max_iterations", "target_error", "[solver.growth]", "scan_radius", "strength", "seed"] {
            assert!(echoed.contains(key), "missing {key} in\n{echoed}");
        }
        // the echo parses back to the same configuration
        assert_eq!(RunConfig::from_toml_str(&echoed).unwrap(), cfg);
        let (k, lambda) = cfg.initial().unwrap();
        assert_eq!(k.truncation().radii(), &[32, 32]);
        assert_eq!(lambda, vec![0.0; 3]);
    }

    #[test]
    fn inadmissible_sigma_is_rejected() {
        let text = MINIMAL.replace("omega = [", "sigma = 1.5\nomega = [");
        match RunConfig::from_toml_str(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("at least d + n")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn rational_frequency_is_rejected_at_load() {
        let text = MINIMAL.replace("0.6180339887498949, 0.41421356237309503]", "0.5, 0.25]");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::ZeroDivisor { .. })));
    }

    #[test]
    fn growth_table_is_folded_in() {
        let text = format!("{MINIMAL}\n[growth]\nenabled = false\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        assert!(!cfg.solver.growth.enabled);
        assert!(cfg.growth.is_none());
    }

    #[test]
    fn unknown_keys_and_knobs_are_errors() {
        let text = MINIMAL.replace("drift =", "strenght = 0.1\ndrift =");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert!(cfg.family.with_knob("k1", 0.1).is_err());
        let moved = cfg.family.with_knob("strength", 0.2).unwrap();
        assert!(matches!(moved, FamilyConfig::CoupledStandard { strength, .. } if strength == 0.2));
    }

    #[test]
    fn custom_structure_matrix() {
        // alpha = -y dx is a primitive for the opposite orientation
        let text = format!("{MINIMAL}\n[structure]\nJ = [[0.0, 1.0], [-1.0, 0.0]]\nprimitive = {{ linear = [[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]] }}\n");
        let s = RunConfig::from_toml_str(&text).unwrap().structure().unwrap();
        assert_eq!(s.j(&[])[(0, 1)], 1.0);
        let mismatched = text.replace("[0.0, -1.0, 0.0], [0.0, 0.0, 0.0]", "[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]");
        assert!(RunConfig::from_toml_str(&mismatched).is_err());
        let bad = format!("{MINIMAL}\n[structure]\nJ = \"weird\"\n");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }
}
