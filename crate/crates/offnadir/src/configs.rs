//! JSON forms of the synthetic scene and noise configurations. Missing
//! fields take the library defaults; seeds come from the command line.

use offnadir_core::synth::{FootprintKind, NoiseConfig, SceneConfig, ScoreModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneJson {
    pub width: u32,
    pub height: u32,
    pub n_buildings: usize,
    pub height_range: [f64; 2],
    pub gsd: f64,
    pub nadir_angle: f64,
    /// Radians; `null` draws one per image.
    pub azimuth: Option<f64>,
    pub footprint_kind: String,
    pub size_range: [f64; 2],
    pub image_id: u64,
    /// Number of images in the generated dataset.
    pub images: usize,
}

impl Default for SceneJson {
    fn default() -> Self {
        let c = SceneConfig::default();
        Self {
            width: c.width,
            height: c.height,
            n_buildings: c.n_buildings,
            height_range: [c.height_range.0, c.height_range.1],
            gsd: c.gsd,
            nadir_angle: c.nadir_angle,
            azimuth: c.azimuth,
            footprint_kind: c.footprint_kind.as_str().to_string(),
            size_range: [c.size_range.0, c.size_range.1],
            image_id: c.image_id,
            images: 1,
        }
    }
}

impl SceneJson {
    pub fn to_config(&self, seed: u64) -> Result<SceneConfig, String> {
        let footprint_kind = FootprintKind::parse(&self.footprint_kind)
            .ok_or_else(|| format!("unknown footprint_kind {:?} (rectangle, l_shape)", self.footprint_kind))?;
        let c = SceneConfig {
            width: self.width,
            height: self.height,
            n_buildings: self.n_buildings,
            height_range: (self.height_range[0], self.height_range[1]),
            gsd: self.gsd,
            nadir_angle: self.nadir_angle,
            azimuth: self.azimuth,
            footprint_kind,
            size_range: (self.size_range[0], self.size_range[1]),
            seed,
            image_id: self.image_id,
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseJson {
    pub vertex_jitter_sigma: f64,
    pub offset_noise_sigma: f64,
    pub drop_rate: f64,
    pub spurious_rate: f64,
    pub score_model: String,
}

impl Default for NoiseJson {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            vertex_jitter_sigma: n.vertex_jitter_sigma,
            offset_noise_sigma: n.offset_noise_sigma,
            drop_rate: n.drop_rate,
            spurious_rate: n.spurious_rate,
            score_model: n.score_model.as_str().to_string(),
        }
    }
}

impl NoiseJson {
    pub fn to_config(&self, seed: u64) -> Result<NoiseConfig, String> {
        let score_model = ScoreModel::parse(&self.score_model)
            .ok_or_else(|| format!("unknown score_model {:?} (iou_linked, uniform)", self.score_model))?;
        let n = NoiseConfig {
            vertex_jitter_sigma: self.vertex_jitter_sigma,
            offset_noise_sigma: self.offset_noise_sigma,
            drop_rate: self.drop_rate,
            spurious_rate: self.spurious_rate,
            score_model,
            seed,
        };
        n.validate().map_err(|e| e.to_string())?;
        Ok(n)
    }
}
