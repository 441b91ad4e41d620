//! JSON pipeline configuration and the transform registry.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::transforms::{
    BiasFieldParams, BlurParams, BrightnessContrastParams, FunctionParams, GammaParams, HistEqParams, LowResParams,
    NoParams, NoiseParams, RandomConvParams, RedistributeParams, SpatialParams, UnsharpParams,
};

/// Canonical default configuration shipped with the crate.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../configs/default.json");

/// Appearance transforms in canonical application order.
pub const NOVEL_ORDER: [&str; 8] = [
    "intensity_inversion",
    "scharr_filter",
    "redistribute_seg",
    "random_conv",
    "histogram_equalization",
    "bias_field",
    "unsharp_masking",
    "function_transform",
];

pub const BASELINE_INTENSITY_NAMES: [&str; 5] = [
    "gaussian_noise",
    "gaussian_blur",
    "brightness_contrast",
    "simulate_low_resolution",
    "gamma_correction",
];

pub const SPATIAL_NAMES: [&str; 1] = ["spatial"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    #[default]
    Fixed,
    /// Geometric transforms first, then a per-sample random permutation of
    /// every other transform.
    ShuffleNonGeometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub name: String,
    pub probability: f64,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl TransformSpec {
    pub fn new(name: &str, probability: f64) -> Self {
        TransformSpec {
            name: name.to_string(),
            probability,
            params: Map::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub global_seed: u64,
    pub order_mode: OrderMode,
    pub geometric: Vec<TransformSpec>,
    pub novel: Vec<TransformSpec>,
    pub baseline_intensity: Vec<TransformSpec>,
}

/// Which list of the config a spec came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Geometric,
    Novel,
    BaselineIntensity,
}

impl Section {
    pub fn key(self) -> &'static str {
        match self {
            Section::Geometric => "geometric",
            Section::Novel => "novel",
            Section::BaselineIntensity => "baseline_intensity",
        }
    }
}

/// A registered transform with typed parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Spatial(SpatialParams),
    IntensityInversion,
    ScharrFilter,
    RedistributeSeg(RedistributeParams),
    RandomConv(RandomConvParams),
    HistogramEqualization(HistEqParams),
    BiasField(BiasFieldParams),
    UnsharpMasking(UnsharpParams),
    FunctionTransform(FunctionParams),
    GaussianNoise(NoiseParams),
    GaussianBlur(BlurParams),
    SimulateLowResolution(LowResParams),
    BrightnessContrast(BrightnessContrastParams),
    GammaCorrection(GammaParams),
}

fn parse_params<P: serde::de::DeserializeOwned>(name: &str, params: &Map<String, Value>) -> Result<P> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| Error::config(format!("{name}.params: {e}")))
}

impl Transform {
    /// Looks up `name` in the registry and parses its parameter block.
    pub fn from_spec(name: &str, params: &Map<String, Value>) -> Result<Self> {
        let t = match name {
            "spatial" => Transform::Spatial(parse_params(name, params)?),
            "intensity_inversion" => {
                parse_params::<NoParams>(name, params)?;
                Transform::IntensityInversion
            }
            "scharr_filter" => {
                parse_params::<NoParams>(name, params)?;
                Transform::ScharrFilter
            }
            "redistribute_seg" => Transform::RedistributeSeg(parse_params(name, params)?),
            "random_conv" => Transform::RandomConv(parse_params(name, params)?),
            "histogram_equalization" => Transform::HistogramEqualization(parse_params(name, params)?),
            "bias_field" => Transform::BiasField(parse_params(name, params)?),
            "unsharp_masking" => Transform::UnsharpMasking(parse_params(name, params)?),
            "function_transform" => Transform::FunctionTransform(parse_params(name, params)?),
            "gaussian_noise" => Transform::GaussianNoise(parse_params(name, params)?),
            "gaussian_blur" => Transform::GaussianBlur(parse_params(name, params)?),
            "simulate_low_resolution" => Transform::SimulateLowResolution(parse_params(name, params)?),
            "brightness_contrast" => Transform::BrightnessContrast(parse_params(name, params)?),
            "gamma_correction" => Transform::GammaCorrection(parse_params(name, params)?),
            other => return Err(Error::config(format!("unknown transform {other:?}"))),
        };
        t.validate().map_err(|e| match e {
            Error::Argument(m) => Error::config(m),
            other => other,
        })?;
        Ok(t)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Spatial(_) => "spatial",
            Transform::IntensityInversion => "intensity_inversion",
            Transform::ScharrFilter => "scharr_filter",
            Transform::RedistributeSeg(_) => "redistribute_seg",
            Transform::RandomConv(_) => "random_conv",
            Transform::HistogramEqualization(_) => "histogram_equalization",
            Transform::BiasField(_) => "bias_field",
            Transform::UnsharpMasking(_) => "unsharp_masking",
            Transform::FunctionTransform(_) => "function_transform",
            Transform::GaussianNoise(_) => "gaussian_noise",
            Transform::GaussianBlur(_) => "gaussian_blur",
            Transform::SimulateLowResolution(_) => "simulate_low_resolution",
            Transform::BrightnessContrast(_) => "brightness_contrast",
            Transform::GammaCorrection(_) => "gamma_correction",
        }
    }

    pub fn is_spatial(&self) -> bool {
        matches!(self, Transform::Spatial(_))
    }

    pub fn is_novel(&self) -> bool {
        NOVEL_ORDER.contains(&self.name())
    }

    /// Novel transforms whose output can leave the input's [min, max] and
    /// therefore need the drift clamp.
    pub fn needs_drift_clamp(&self) -> bool {
        use Transform::*;
        matches!(self, RedistributeSeg(_) | BiasField(_) | UnsharpMasking(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::Spatial(p) => p.validate(),
            Transform::RedistributeSeg(p) => p.validate(),
            Transform::RandomConv(p) => p.validate(),
            Transform::HistogramEqualization(p) => p.validate(),
            Transform::BiasField(p) => p.validate(),
            Transform::UnsharpMasking(p) => p.validate(),
            Transform::FunctionTransform(p) => p.validate(),
            Transform::GaussianNoise(p) => p.validate(),
            Transform::GaussianBlur(p) => p.validate(),
            Transform::SimulateLowResolution(p) => p.validate(),
            Transform::BrightnessContrast(p) => p.validate(),
            Transform::GammaCorrection(p) => p.validate(),
            Transform::IntensityInversion | Transform::ScharrFilter => Ok(()),
        }
    }
}

impl PipelineConfig {
    /// The shipped default configuration.
    pub fn default_config() -> Self {
        PipelineConfig::from_json(DEFAULT_CONFIG_JSON).expect("shipped default config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sections in canonical order with their specs.
    pub fn sections(&self) -> [(Section, &[TransformSpec]); 3] {
        [
            (Section::Geometric, &self.geometric),
            (Section::Novel, &self.novel),
            (Section::BaselineIntensity, &self.baseline_intensity),
        ]
    }

    /// Sets every spec probability, and the internal spatial gates, to `p`.
    pub fn with_all_probabilities(mut self, p: f64) -> Self {
        for list in [&mut self.geometric, &mut self.novel, &mut self.baseline_intensity] {
            for spec in list.iter_mut() {
                spec.probability = p;
                if spec.name == "spatial" {
                    let mut params: SpatialParams = parse_params("spatial", &spec.params).unwrap_or_default();
                    params = params.with_probabilities(p);
                    if let Value::Object(m) = serde_json::to_value(params).expect("params serialize") {
                        spec.params = m;
                    }
                }
            }
        }
        self
    }
}
