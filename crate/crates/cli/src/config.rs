//! Run configuration: one JSON document with a section per component.
//! Unknown keys are rejected; flags override file values.

use serde::{Deserialize, Serialize};
use synfp_core::matcher::MatcherConfig;
use synfp_nn::gan::train::GanTrainConfig;
use synfp_nn::gan::GeneratorConfig;
use synfp_nn::idnet::train::IdnetTrainConfig;
use synfp_nn::idnet::IdentityNetConfig;
use synfp_nn::recon::train::EncoderTrainConfig;
use synfp_nn::recon::EncoderConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; every component forks a tagged stream from it.
    pub seed: u64,
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub identity_net: IdnetSection,
    pub encoder: EncoderSection,
    pub editor: EditorSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataSection::default(),
            generator: GeneratorSection::default(),
            identity_net: IdnetSection::default(),
            encoder: EncoderSection::default(),
            editor: EditorSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub width: usize,
    pub height: usize,
    pub freq_min: f64,
    pub freq_max: f64,
    pub impressions_per_identity: usize,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub contrast_jitter: f64,
    pub blob_count: usize,
    pub blob_strength: f64,
    pub speckle: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let identity = synfp_core::procedural::IdentityConfig::default();
        let noise = synfp_core::procedural::NoiseConfig::default();
        DataSection {
            width: identity.width,
            height: identity.height,
            freq_min: identity.freq_range.0,
            freq_max: identity.freq_range.1,
            impressions_per_identity: 2,
            max_rotation_deg: noise.max_rotation_deg,
            max_translation: noise.max_translation,
            contrast_jitter: noise.contrast_jitter,
            blob_count: noise.blob_count,
            blob_strength: noise.blob_strength,
            speckle: noise.speckle,
        }
    }
}

impl DataSection {
    pub fn dataset_config(&self) -> synfp_core::procedural::DatasetConfig {
        synfp_core::procedural::DatasetConfig {
            identity: synfp_core::procedural::IdentityConfig {
                width: self.width,
                height: self.height,
                freq_range: (self.freq_min, self.freq_max),
                extractor: synfp_core::minutiae::ExtractorConfig::default(),
            },
            noise: synfp_core::procedural::NoiseConfig {
                max_rotation_deg: self.max_rotation_deg,
                max_translation: self.max_translation,
                contrast_jitter: self.contrast_jitter,
                blob_count: self.blob_count,
                blob_strength: self.blob_strength,
                speckle: self.speckle,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    #[serde(flatten)]
    pub model: GeneratorConfig,
    pub train: GanTrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IdnetSection {
    #[serde(flatten)]
    pub model: IdentityNetConfig,
    pub train: IdnetTrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    #[serde(flatten)]
    pub model: EncoderConfig,
    pub train: EncoderTrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EditorSection {
    /// Synthesis-conv layers whose style affines are factorized.
    pub layer_start: usize,
    pub layer_end: usize,
    /// Edit magnitude; when absent, 3 standard deviations of the latent
    /// projection are measured over `alpha_samples` mapped latents.
    pub alpha: Option<f64>,
    pub alpha_samples: usize,
}

impl Default for EditorSection {
    fn default() -> Self {
        EditorSection { layer_start: 0, layer_end: 4, alpha: None, alpha_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub max_rotation_deg: f64,
    pub rotation_step_deg: f64,
    pub distance_tolerance: f64,
    pub angle_tolerance_deg: f64,
    pub strict_type: bool,
    pub far_levels: Vec<f64>,
    /// Generated imagery upscales to this size before minutiae extraction.
    pub extract_resolution: usize,
    pub per_template_average: bool,
    pub emd_l1_ground: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        let m = MatcherConfig::default();
        EvalSection {
            max_rotation_deg: m.max_rotation_deg,
            rotation_step_deg: m.rotation_step_deg,
            distance_tolerance: m.distance_tolerance,
            angle_tolerance_deg: m.angle_tolerance_deg,
            strict_type: m.strict_type,
            far_levels: vec![0.01, 0.001, 0.0001, 0.0],
            extract_resolution: 128,
            per_template_average: false,
            emd_l1_ground: false,
        }
    }
}

impl EvalSection {
    pub fn matcher_config(&self) -> MatcherConfig {
        MatcherConfig {
            max_rotation_deg: self.max_rotation_deg,
            rotation_step_deg: self.rotation_step_deg,
            distance_tolerance: self.distance_tolerance,
            angle_tolerance_deg: self.angle_tolerance_deg,
            strict_type: self.strict_type,
            ..MatcherConfig::default()
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &std::path::Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)
            .map_err(|e| anyhow::anyhow!("cannot write config {}: {e}", path.display()))?;
        Ok(())
    }
}
