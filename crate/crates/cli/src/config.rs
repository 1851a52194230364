//! Pipeline configuration: one optional TOML file whose values individual
//! command-line flags may override. Absent sections fall back to defaults,
//! so every subcommand runs with just paths supplied.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaitkit::ik::IkSettings;
use gaitkit::synth::{default_landmark_map, GaitRecipe};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub output_dir: Option<PathBuf>,
    pub paths: PathsSection,
    pub triangulate: TriangulateSection,
    pub filter: FilterSection,
    pub ik: IkSection,
    pub events: EventsSection,
    /// Landmark-index mapping, marker label to keypoint id. Absent means the
    /// default twelve-marker map.
    pub landmarks: Option<BTreeMap<String, u32>>,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Camera calibration JSON (triangulate input, synth output).
    pub calibration: Option<PathBuf>,
    /// Per-camera keypoint sequence JSON files (triangulate input).
    pub keypoints: Vec<PathBuf>,
    /// Marker trajectory TRC (triangulate output, analyze input).
    pub markers: Option<PathBuf>,
    /// Static-pose TRC used to scale the model before analysis.
    pub static_trial: Option<PathBuf>,
    /// Skeleton model JSON; absent means the built-in lower-limb model.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangulateSection {
    pub min_confidence: f64,
    /// Capture rate of the keypoint streams; the sequence files carry none.
    pub sample_rate: f64,
}

impl Default for TriangulateSection {
    fn default() -> Self {
        Self { min_confidence: 0.5, sample_rate: 100.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub cutoff_hz: f64,
    pub order: usize,
    /// Longest interior gap, in frames, repaired by interpolation.
    pub max_gap: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { cutoff_hz: 6.0, order: 4, max_gap: 10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkSection {
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
    pub damping_init: f64,
}

impl Default for IkSection {
    fn default() -> Self {
        let d = IkSettings::default();
        Self {
            max_iterations: d.max_iterations,
            cost_tolerance: d.cost_tolerance,
            step_tolerance: d.step_tolerance,
            damping_init: d.damping_init,
        }
    }
}

impl IkSection {
    pub fn settings(&self) -> IkSettings {
        IkSettings {
            max_iterations: self.max_iterations,
            cost_tolerance: self.cost_tolerance,
            step_tolerance: self.step_tolerance,
            damping_init: self.damping_init,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventsSection {
    /// World-frame walking direction; absent means estimated from the
    /// pelvis path.
    pub walking_axis: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub recipe: RecipeSection,
    pub pixel_noise_sd: f64,
    pub dropout_rate: f64,
    pub static_frames: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            recipe: RecipeSection::default(),
            pixel_noise_sd: 0.0,
            dropout_rate: 0.0,
            static_frames: 10,
        }
    }
}

/// Per-field overrides applied onto the default recipe; the subject is
/// flattened into scalar keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecipeSection {
    pub stride_length: Option<f64>,
    pub stride_time: Option<f64>,
    pub n_strides: Option<usize>,
    pub sample_rate: Option<f64>,
    pub hip_amplitude: Option<f64>,
    pub knee_amplitude: Option<f64>,
    pub pelvis_oscillation: Option<f64>,
    pub phase_offset: Option<f64>,
    pub subject_id: Option<String>,
    pub subject_mass_kg: Option<f64>,
    pub subject_stature_m: Option<f64>,
    pub seed: Option<u64>,
}

impl RecipeSection {
    pub fn apply(&self, mut recipe: GaitRecipe) -> Result<GaitRecipe, CliError> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    recipe.$field = v;
                }
            };
        }
        take!(stride_length);
        take!(stride_time);
        take!(n_strides);
        take!(sample_rate);
        take!(hip_amplitude);
        take!(knee_amplitude);
        take!(pelvis_oscillation);
        take!(phase_offset);
        take!(seed);
        let subject_changed = self.subject_id.is_some()
            || self.subject_mass_kg.is_some()
            || self.subject_stature_m.is_some();
        if subject_changed {
            recipe.subject = gaitkit::SubjectInfo::new(
                self.subject_id.clone().unwrap_or(recipe.subject.id),
                self.subject_mass_kg.unwrap_or(recipe.subject.mass_kg),
                self.subject_stature_m.unwrap_or(recipe.subject.stature_m),
            )
            .map_err(|e| CliError::Input(format!("[synth.recipe] subject: {e}")))?;
        }
        Ok(recipe)
    }
}

impl PipelineConfig {
    /// Defaults when `path` is None; otherwise the parsed file. Unknown keys
    /// are rejected so typos surface instead of silently using defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("cannot read config file '{}': {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Input(format!("config file '{}': {e}", path.display()))
        })
    }

    /// Landmark map as (id, label) pairs sorted by id.
    pub fn landmark_map(&self) -> Vec<(u32, String)> {
        match &self.landmarks {
            None => default_landmark_map(),
            Some(map) => {
                let mut pairs: Vec<(u32, String)> =
                    map.iter().map(|(label, id)| (*id, label.clone())).collect();
                pairs.sort();
                pairs
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.triangulate.min_confidence, 0.5);
        assert_eq!(cfg.filter.cutoff_hz, 6.0);
        assert_eq!(cfg.filter.order, 4);
        assert_eq!(cfg.ik.max_iterations, IkSettings::default().max_iterations);
        assert!(cfg.events.walking_axis.is_none());
        assert_eq!(cfg.landmark_map(), default_landmark_map());
    }

    #[test]
    fn sections_override_selected_fields_only() {
        let cfg: PipelineConfig = toml::from_str(
            "[filter]\ncutoff_hz = 8.0\n\n[synth.recipe]\nn_strides = 3\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.filter.cutoff_hz, 8.0);
        assert_eq!(cfg.filter.order, 4);
        let recipe = cfg.synth.recipe.apply(GaitRecipe::default()).unwrap();
        assert_eq!(recipe.n_strides, 3);
        assert_eq!(recipe.seed, 7);
        assert_eq!(recipe.stride_length, GaitRecipe::default().stride_length);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = toml::from_str::<PipelineConfig>("[filter]\ncutof_hz = 8.0\n").unwrap_err();
        assert!(err.to_string().contains("cutof_hz"), "{err}");
    }

    #[test]
    fn custom_landmark_map_sorts_by_id() {
        let cfg: PipelineConfig =
            toml::from_str("[landmarks]\nRHEEL = 24\nLHEEL = 21\n").unwrap();
        assert_eq!(
            cfg.landmark_map(),
            vec![(21, "LHEEL".to_string()), (24, "RHEEL".to_string())]
        );
    }

    #[test]
    fn invalid_subject_override_is_an_input_error() {
        let section = RecipeSection {
            subject_mass_kg: Some(-3.0),
            ..RecipeSection::default()
        };
        let err = section.apply(GaitRecipe::default()).unwrap_err();
        assert!(matches!(err, CliError::Input(_)), "{err:?}");
    }
}
