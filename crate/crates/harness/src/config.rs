//! Experiment configuration. A config is a flat TOML document: every key
//! is a top-level scalar or array, every key has a default, and unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::phantom::PhantomKind;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Fan-beam CT; the parameter is a global angular offset in degrees.
    Ct,
    /// Circular-array photoacoustics; the parameter is a radial shift.
    Pat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleSampling {
    /// Uniform random angles in `[0, 180)`, sorted.
    Random,
    /// Equispaced angles in `[0, 180)`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Best of a candidate grid under a small Golub-Kahan basis.
    Grid,
    /// `p_true + p_offset`.
    Offset,
    /// `p0` as given.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Discrepancy,
    Gcv,
    /// The value of `lambda`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Altmin,
    Varpro,
    /// Parameters held at their initial value.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    AnisoTv,
    OpticalFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in summaries and file names.
    pub name: String,
    pub modality: Modality,
    pub phantom: PhantomKind,
    /// Image side length.
    pub n: usize,
    /// Number of frames (dynamic phantoms only).
    pub frames: usize,
    /// Tectonic plate count.
    pub plates: usize,

    /// CT projection angles per frame.
    pub angles: usize,
    pub angle_sampling: AngleSampling,
    pub detectors: usize,

    /// PAT sensor circles.
    pub circles: usize,
    pub sensors_per_circle: usize,
    /// Integration radii recorded by every sensor.
    pub radii: usize,
    /// Sensors seen per frame in dynamic PAT runs, spread round the array
    /// and rotated from frame to frame; 0 means all of them.
    pub sensors_per_frame: usize,

    pub p_true: f64,
    pub p_init: InitPolicy,
    pub p_offset: f64,
    pub p0: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub grid_basis: usize,
    /// Optional box on the parameter.
    pub p_bounds: Option<[f64; 2]>,

    /// Relative noise level.
    pub noise: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub epsilon: f64,
    /// Discrepancy safety factor.
    pub tau: f64,
    pub lambda_rule: LambdaRule,
    /// λ for the fixed rule.
    pub lambda: f64,
    pub method: Method,
    /// Auxiliary high-regularization solve for the parameter update;
    /// defaults to on for alternating minimization only.
    pub high_reg: Option<bool>,
    /// MM-GKS solves per recycling cycle; 0 means the full window.
    pub inner_iters: usize,
    pub tol1: f64,
    pub max_outer: usize,
    pub tol_outer: f64,
    pub tol_p: f64,

    /// Streaming block count; 1 disables streaming.
    pub blocks: usize,
    pub max_passes: usize,

    pub temporal: Temporal,
    /// Velocity refresh period in outer iterations; 0 keeps the first
    /// estimate.
    pub flow_period: usize,

    pub seed: u64,
    /// Record wall-clock time in the metrics file. Off by default so reruns
    /// produce identical files.
    pub timing: bool,
    /// Dump the image every this many outer iterations; 0 writes only the
    /// final image.
    pub dump_every: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            modality: Modality::Ct,
            phantom: PhantomKind::SheppLogan,
            n: 64,
            frames: 1,
            plates: 8,
            angles: 60,
            angle_sampling: AngleSampling::Random,
            detectors: 91,
            circles: 4,
            sensors_per_circle: 32,
            radii: 32,
            sensors_per_frame: 0,
            p_true: 0.0,
            p_init: InitPolicy::Given,
            p_offset: 0.0,
            p0: 0.0,
            grid_lo: -0.5,
            grid_hi: 0.5,
            grid_points: 5,
            grid_basis: 10,
            p_bounds: None,
            noise: 0.01,
            k_min: 5,
            k_max: 25,
            epsilon: 1e-2,
            tau: 1.01,
            lambda_rule: LambdaRule::Discrepancy,
            lambda: 1e-2,
            method: Method::Altmin,
            high_reg: None,
            inner_iters: 0,
            tol1: 1e-6,
            max_outer: 50,
            tol_outer: 1e-3,
            tol_p: 1e-4,
            blocks: 1,
            max_passes: 5,
            temporal: Temporal::OpticalFlow,
            flow_period: 1,
            seed: 1,
            timing: false,
            dump_every: 0,
            out: None,
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Returns a copy with `key` set to `value`, where `value` is written
    /// as a TOML value; bare words are taken as strings.
    pub fn with(&self, key: &str, value: &str) -> Result<Self, HarnessError> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("config parses");
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.to_string(), parsed);
        Self::from_toml(&toml::to_string(&table).expect("table serializes"))
    }

    pub fn is_dynamic(&self) -> bool {
        self.phantom.is_dynamic()
    }

    /// High-regularization switch after defaults.
    pub fn high_reg_enabled(&self) -> bool {
        self.high_reg.unwrap_or(self.method == Method::Altmin)
    }

    /// Starting parameter for the offset and given policies.
    pub fn explicit_p0(&self) -> f64 {
        match self.p_init {
            InitPolicy::Offset => self.p_true + self.p_offset,
            _ => self.p0,
        }
    }

    /// Measurement units (projection angles or sensors) per frame.
    pub fn units_per_frame(&self) -> usize {
        match self.modality {
            Modality::Ct => self.angles,
            Modality::Pat if self.sensors_per_frame > 0 => self.sensors_per_frame,
            Modality::Pat => self.circles * self.sensors_per_circle,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 4 {
            return bad("n must be at least 4");
        }
        if self.is_dynamic() {
            if self.frames < 2 {
                return bad("dynamic phantoms need at least two frames");
            }
        } else if self.frames != 1 {
            return bad("static phantoms take frames = 1");
        }
        match self.modality {
            Modality::Ct => {
                if self.angles == 0 || self.detectors == 0 {
                    return bad("CT needs angles and detectors");
                }
            }
            Modality::Pat => {
                if self.circles == 0 || self.sensors_per_circle == 0 || self.radii < 2 {
                    return bad("PAT needs circles, sensors and at least two radii");
                }
                if self.sensors_per_frame > self.circles * self.sensors_per_circle {
                    return bad("sensors_per_frame exceeds the array");
                }
            }
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be a finite nonnegative level");
        }
        if self.k_min == 0 || self.k_min >= self.k_max {
            return bad("window needs 1 <= k_min < k_max");
        }
        if !(self.epsilon > 0.0) || !(self.tau > 0.0) {
            return bad("epsilon and tau must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be nonnegative");
        }
        if self.lambda_rule == LambdaRule::Discrepancy && self.noise == 0.0 {
            return bad("the discrepancy principle needs noise > 0");
        }
        if self.max_outer == 0 || self.max_passes == 0 {
            return bad("max_outer and max_passes must be positive");
        }
        if self.blocks == 0 {
            return bad("blocks must be at least 1");
        }
        let units = self.units_per_frame() * self.frames;
        if self.blocks > units {
            return bad(format!("blocks = {} exceeds the {units} measurement units", self.blocks));
        }
        if self.p_init == InitPolicy::Grid && (self.grid_points == 0 || self.grid_basis == 0 || !(self.grid_lo <= self.grid_hi)) {
            return bad("grid initialization needs points, a basis size and lo <= hi");
        }
        if let Some([lo, hi]) = self.p_bounds {
            if !(lo <= hi) {
                return bad("p_bounds must satisfy lo <= hi");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!((c.k_min, c.k_max, c.tol_outer, c.tol_p), (5, 25, 1e-3, 1e-4));
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig {
            name: "x".into(),
            modality: Modality::Pat,
            phantom: PhantomKind::DynamicBlocks,
            frames: 6,
            sensors_per_frame: 16,
            p_bounds: Some([-0.2, 0.9]),
            lambda_rule: LambdaRule::Fixed,
            lambda: 0.5,
            high_reg: Some(false),
            temporal: Temporal::AnisoTv,
            out: Some("runs/x".into()),
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn override_sets_one_key() {
        let c = ExperimentConfig::default();
        let d = c.with("k_max", "12").unwrap().with("temporal", "aniso_tv").unwrap().with("p_bounds", "[0.0, 1.0]").unwrap();
        assert_eq!((d.k_max, d.temporal, d.p_bounds), (12, Temporal::AnisoTv, Some([0.0, 1.0])));
        assert_eq!(d.n, c.n);
        assert!(c.with("k_max", "\"x\"").is_err());
        assert!(c.with("nope", "1").is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let e = ExperimentConfig::from_toml("k_maxx = 3").unwrap_err();
        assert!(matches!(e, HarnessError::Config(_)));
    }

    #[test]
    fn bad_window_rejected() {
        assert!(ExperimentConfig::from_toml("k_min = 5\nk_max = 5").is_err());
    }

    #[test]
    fn too_many_blocks_rejected() {
        assert!(ExperimentConfig::from_toml("angles = 4\nblocks = 5").is_err());
    }

    #[test]
    fn dynamic_needs_frames() {
        assert!(ExperimentConfig::from_toml("phantom = \"moving_shapes\"").is_err());
        assert!(ExperimentConfig::from_toml("phantom = \"moving_shapes\"\nframes = 3").is_ok());
    }

    #[test]
    fn high_reg_default_follows_method() {
        let mut c = ExperimentConfig::default();
        assert!(c.high_reg_enabled());
        c.method = Method::Varpro;
        assert!(!c.high_reg_enabled());
        c.high_reg = Some(true);
        assert!(c.high_reg_enabled());
    }
}
