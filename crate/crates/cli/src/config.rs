//! Experiment configuration: a TOML file with one table per concern, every
//! key optional. Presets cover the standard studies and scans.

use std::path::PathBuf;

use hbt_core::estimation::{ScoringConfig, StudyConfig};
use hbt_core::geometry::{
    DetectorArray, SourceGeometry, SourceKind, DEFAULT_DISC_RADIUS, DEFAULT_DISTANCE, DEFAULT_PIXEL_COUNT,
    DEFAULT_PIXEL_PITCH, DEFAULT_SLIT_WIDTH, DEFAULT_WAVELENGTH,
};
use hbt_core::noise::NoiseModel;
use hbt_core::statistics::{DetectionScheme, SchemeKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scoring: ScoringSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_d: Option<SeparationRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_sigma: Option<NoiseGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default = "default_kind")]
    pub kind: SourceKind,
    /// Disc radius or slit width in metres; defaults per kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<f64>,
    /// Full angular size in radians; replaces `dimension` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_diameter: Option<f64>,
    #[serde(default = "default_distance")]
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(default = "default_pixel_count")]
    pub pixel_count: usize,
    #[serde(default = "default_pixel_pitch")]
    pub pixel_pitch: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_scheme_kind")]
    pub kind: SchemeKind,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    /// Repeated reference pixel; defaults to ⌊M/2⌋.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<i64>,
    /// Separation d of distinct references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_frames")]
    pub frames: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// ⟨I⟩ before detector efficiency.
    #[serde(default = "default_mean_intensity")]
    pub mean_intensity: f64,
    #[serde(default)]
    pub estimate_chi: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSection {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Step halving on likelihood decrease; off gives plain scoring.
    #[serde(default = "default_true")]
    pub damped: bool,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_stall_tolerance")]
    pub stall_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationRange {
    pub start: usize,
    pub stop: usize,
    #[serde(default = "default_step")]
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseGrid {
    pub nus: Vec<f64>,
    pub sigmas: Vec<f64>,
}

fn default_kind() -> SourceKind {
    SourceKind::Disc
}
fn default_distance() -> f64 {
    DEFAULT_DISTANCE
}
fn default_pixel_count() -> usize {
    DEFAULT_PIXEL_COUNT
}
fn default_pixel_pitch() -> f64 {
    DEFAULT_PIXEL_PITCH
}
fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH
}
fn default_nu() -> f64 {
    0.5
}
fn default_scheme_kind() -> SchemeKind {
    SchemeKind::RepeatedReference
}
fn default_orders() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn default_frames() -> u64 {
    50_000
}
fn default_repetitions() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}
fn default_mean_intensity() -> f64 {
    1.0
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_max_iterations() -> usize {
    ScoringConfig::default().max_iterations
}
fn default_tolerance() -> f64 {
    ScoringConfig::default().tolerance
}
fn default_damping() -> f64 {
    ScoringConfig::default().damping.unwrap_or(0.5)
}
fn default_max_halvings() -> usize {
    ScoringConfig::default().max_halvings
}
fn default_stall_tolerance() -> f64 {
    ScoringConfig::default().stall_tolerance
}
fn default_step() -> usize {
    1
}

macro_rules! defaults_from_empty_table {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("every key has a default")
            }
        }
    )*};
}
defaults_from_empty_table!(SourceSection, ArraySection, NoiseSection, SchemeSection, RunSection, ScoringSection);

pub const PRESETS: [(&str, &str); 7] = [
    ("table1", include_str!("../presets/table1.toml")),
    ("table2", include_str!("../presets/table2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
];

impl ExperimentConfig {
    /// Parses TOML; syntax and type errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
        })?;
        toml::from_str(text).map_err(|e| CliError::Config(format!("preset `{name}`: {e}")))
    }

    pub fn source(&self) -> Result<SourceGeometry, CliError> {
        let s = &self.source;
        let built = match (s.angular_diameter, s.dimension) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "source: give either `dimension` or `angular_diameter`, not both".into(),
                ))
            }
            (Some(angle), None) => SourceGeometry::from_angular_diameter(s.kind, angle, s.distance),
            (None, dimension) => {
                let default = match s.kind {
                    SourceKind::Disc => DEFAULT_DISC_RADIUS,
                    SourceKind::Slit => DEFAULT_SLIT_WIDTH,
                };
                SourceGeometry::new(s.kind, dimension.unwrap_or(default), s.distance)
            }
        };
        built.map_err(|e| CliError::section("source", e))
    }

    pub fn array(&self) -> Result<DetectorArray, CliError> {
        let a = &self.array;
        DetectorArray::new(a.pixel_count, a.pixel_pitch, a.wavelength).map_err(|e| CliError::section("array", e))
    }

    pub fn noise(&self) -> Result<NoiseModel, CliError> {
        NoiseModel::new(self.noise.nu, self.noise.sigma).map_err(|e| CliError::section("noise", e))
    }

    pub fn scoring(&self) -> Result<ScoringConfig, CliError> {
        let s = &self.scoring;
        let config = ScoringConfig {
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            damping: s.damped.then_some(s.damping),
            max_halvings: s.max_halvings,
            stall_tolerance: s.stall_tolerance,
        };
        config.validate().map_err(|e| CliError::section("scoring", e))?;
        Ok(config)
    }

    pub fn orders(&self) -> Result<&[usize], CliError> {
        if self.scheme.orders.is_empty() {
            return Err(CliError::Config("scheme.orders: list at least one order".into()));
        }
        Ok(&self.scheme.orders)
    }

    pub fn detection_scheme(&self, order: usize, array: &DetectorArray) -> Result<DetectionScheme, CliError> {
        let built = match self.scheme.kind {
            SchemeKind::RepeatedReference => match self.scheme.reference {
                Some(pixel) => DetectionScheme::repeated_at(order, pixel),
                None => DetectionScheme::repeated(order, array),
            },
            SchemeKind::DistinctReferences => {
                let d = self.scheme.separation.ok_or_else(|| {
                    CliError::Config("scheme.separation: distinct references need a separation d".into())
                })?;
                DetectionScheme::distinct(order, d, array)
            }
        };
        built.map_err(|e| CliError::section("scheme", e))
    }

    pub fn reference_pixel(&self) -> Result<i64, CliError> {
        Ok(self.scheme.reference.unwrap_or((self.array()?.pixel_count() / 2) as i64))
    }

    pub fn separations(&self) -> Result<Vec<usize>, CliError> {
        let r = self
            .scan_d
            .as_ref()
            .ok_or_else(|| CliError::Config("scan_d: missing table with start, stop and step".into()))?;
        if r.start == 0 {
            return Err(CliError::Config("scan_d.start: d = 0 would repeat a reference pixel".into()));
        }
        if r.step == 0 || r.stop < r.start {
            return Err(CliError::Config("scan_d: need step ≥ 1 and stop ≥ start".into()));
        }
        Ok((r.start..=r.stop).step_by(r.step).collect())
    }

    pub fn noise_grid(&self) -> Result<&NoiseGrid, CliError> {
        let grid = self
            .scan_sigma
            .as_ref()
            .ok_or_else(|| CliError::Config("scan_sigma: missing table with nus and sigmas".into()))?;
        if grid.nus.is_empty() || grid.sigmas.is_empty() {
            return Err(CliError::Config("scan_sigma: nus and sigmas must be nonempty".into()));
        }
        Ok(grid)
    }

    pub fn study(&self) -> Result<StudyConfig, CliError> {
        let orders = self.orders()?.to_vec();
        let array = self.array()?;
        for &n in &orders {
            self.detection_scheme(n, &array)?;
        }
        if self.scheme.kind == SchemeKind::RepeatedReference && self.scheme.reference.is_some() {
            return Err(CliError::Config(
                "scheme.reference: studies place the repeated reference at the array centre".into(),
            ));
        }
        Ok(StudyConfig {
            source: self.source()?,
            array,
            orders,
            scheme: self.scheme.kind,
            separation: self.scheme.separation,
            frames: usize::try_from(self.run.frames).map_err(|_| CliError::Config("run.frames: too large".into()))?,
            mean_intensity: self.run.mean_intensity,
            noise: self.noise()?,
            estimate_chi: self.run.estimate_chi,
            repetitions: self.run.repetitions,
            seed: self.run.seed,
            scoring: self.scoring()?,
            fixed_stream: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = ExperimentConfig::parse("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.array.pixel_count, 201);
        assert_eq!(config.source().unwrap().dimension(), 100e-6);
    }

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let config = ExperimentConfig::preset(name).unwrap();
            config.source().unwrap();
            config.array().unwrap();
            config.noise().unwrap();
            config.scoring().unwrap();
            assert_eq!(ExperimentConfig::parse(&config.to_toml()).unwrap(), config, "{name}");
        }
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("[array]\npixel_count = 201\npixel_pitch = \"wide\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::parse("[array]\npixels = 3\n").unwrap_err();
        assert!(err.to_string().contains("pixels"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_section() {
        let config = ExperimentConfig::parse("[noise]\nnu = 0.0\n").unwrap();
        assert!(config.noise().unwrap_err().to_string().starts_with("configuration: noise:"));
        let config = ExperimentConfig::parse("[scan_d]\nstart = 0\nstop = 10\n").unwrap();
        assert!(config.separations().is_err());
    }
}
