//! Seeded synthetic off-nadir scenes and controlled-error predictions.
//!
//! Every random draw comes from a ChaCha8 stream dedicated to one purpose
//! (placement, heights, jitter, drops, ...), so turning one knob never
//! reshuffles the draws behind another.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::data_model::{
    annotate_from_roof, Dataset, ImageRecord, OffsetVector, Point2, Polygon, Split,
};
use crate::error::{Error, Result};
use crate::eval::PredictionInstance;
use crate::foa::{grid_coord, FeatureMap};
use crate::geometry::{rasterize_region, Region};

mod stream {
    pub const AZIMUTH: u64 = 1;
    pub const PLACEMENT: u64 = 2;
    pub const HEIGHT: u64 = 3;
    pub const SHAPE: u64 = 4;
    pub const IMAGE_SEEDS: u64 = 5;
    pub const VERTEX_JITTER: u64 = 11;
    pub const OFFSET_NOISE: u64 = 12;
    pub const DROP: u64 = 13;
    pub const SPURIOUS: u64 = 14;
}

/// Deterministic RNG for one purpose under one seed.
pub fn purpose_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FootprintKind {
    #[default]
    Rectangle,
    /// Rectangle with its top-right corner cut away.
    LShape,
}

impl FootprintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FootprintKind::Rectangle => "rectangle",
            FootprintKind::LShape => "l_shape",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rectangle" => Some(FootprintKind::Rectangle),
            "l_shape" => Some(FootprintKind::LShape),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub n_buildings: usize,
    /// Building heights in meters, drawn uniformly.
    pub height_range: (f64, f64),
    /// Ground sample distance, meters per pixel.
    pub gsd: f64,
    /// Degrees off nadir, in `[0, 60]`.
    pub nadir_angle: f64,
    /// Offset direction in radians; drawn uniformly once per scene when `None`.
    pub azimuth: Option<f64>,
    pub footprint_kind: FootprintKind,
    /// Roof side lengths in pixels, drawn uniformly.
    pub size_range: (f64, f64),
    pub seed: u64,
    pub image_id: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 1024,
            n_buildings: 50,
            height_range: (6.0, 60.0),
            gsd: 0.6,
            nadir_angle: 30.0,
            azimuth: None,
            footprint_kind: FootprintKind::Rectangle,
            size_range: (20.0, 40.0),
            seed: 0,
            image_id: 1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be positive"));
        }
        if !(0.0..=60.0).contains(&self.nadir_angle) {
            return Err(Error::InvalidConfig("nadir_angle must lie in [0, 60] degrees"));
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(Error::InvalidConfig("gsd must be positive"));
        }
        let (h0, h1) = self.height_range;
        if !(h0 >= 0.0 && h0 <= h1 && h1.is_finite()) {
            return Err(Error::InvalidConfig("height_range must satisfy 0 <= min <= max"));
        }
        let (s0, s1) = self.size_range;
        if !(s0 >= 1.0 && s0 <= s1 && s1 <= self.width.min(self.height) as f64) {
            return Err(Error::InvalidConfig("size_range must satisfy 1 <= min <= max <= image side"));
        }
        if let Some(a) = self.azimuth {
            if !a.is_finite() {
                return Err(Error::InvalidConfig("azimuth must be finite"));
            }
        }
        Ok(())
    }
}

/// `ρ = height · tan(nadir) / gsd`, pointing along `azimuth`.
pub fn offset_for_building(height_m: f64, nadir_deg: f64, gsd: f64, azimuth: f64) -> OffsetVector {
    let rho = height_m * libm::tan(nadir_deg.to_radians()) / gsd;
    if rho == 0.0 {
        return OffsetVector::ZERO;
    }
    let (s, c) = libm::sincos(azimuth);
    OffsetVector::new(rho * c, rho * s)
}

fn sample_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Places buildings by rejection sampling with `100 · n` attempts.
///
/// Roof bounding boxes stay at least one pixel apart, and every roof and
/// its footprint lie entirely inside the image. Each attempt draws its size
/// and position from the placement stream and its height from the height
/// stream.
pub fn generate_scene(c: &SceneConfig) -> Result<Dataset> {
    c.validate()?;
    let azimuth = match c.azimuth {
        Some(a) => a,
        None => purpose_rng(c.seed, stream::AZIMUTH).random_range(0.0..TAU),
    };
    let mut placement = purpose_rng(c.seed, stream::PLACEMENT);
    let mut heights = purpose_rng(c.seed, stream::HEIGHT);
    let mut shapes = purpose_rng(c.seed, stream::SHAPE);

    let (w_img, h_img) = (c.width as f64, c.height as f64);
    let mut placed: Vec<((f64, f64, f64, f64), OffsetVector)> = Vec::with_capacity(c.n_buildings);
    let mut attempts = 0usize;
    while placed.len() < c.n_buildings && attempts < 100 * c.n_buildings {
        attempts += 1;
        let bw = sample_range(&mut placement, c.size_range);
        let bh = sample_range(&mut placement, c.size_range);
        let height_m = sample_range(&mut heights, c.height_range);
        let o = offset_for_building(height_m, c.nadir_angle, c.gsd, azimuth);
        // Room left for the roof once the footprint must fit as well.
        let (x_lo, x_hi) = ((-o.ox).max(0.0), (w_img - bw - o.ox).min(w_img - bw));
        let (y_lo, y_hi) = ((-o.oy).max(0.0), (h_img - bh - o.oy).min(h_img - bh));
        let x = placement.random::<f64>();
        let y = placement.random::<f64>();
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let (x, y) = (x_lo + x * (x_hi - x_lo), y_lo + y * (y_hi - y_lo));
        let clear = placed.iter().all(|&((ox, oy, ow, oh), _)| {
            x + bw + 1.0 <= ox || ox + ow + 1.0 <= x || y + bh + 1.0 <= oy || oy + oh + 1.0 <= y
        });
        if clear {
            placed.push(((x, y, bw, bh), o));
        }
    }
    if placed.len() < c.n_buildings {
        return Err(Error::Placement {
            requested: c.n_buildings,
            placed: placed.len(),
        });
    }

    let mut annotations = Vec::with_capacity(placed.len());
    for (k, &((x, y, bw, bh), offset)) in placed.iter().enumerate() {
        let cut = (
            shapes.random_range(0.3..0.6) * bw,
            shapes.random_range(0.3..0.6) * bh,
        );
        let roof = match c.footprint_kind {
            FootprintKind::Rectangle => Polygon::rectangle(x, y, bw, bh)?,
            FootprintKind::LShape => l_shape(x, y, bw, bh, cut)?,
        };
        annotations.push(annotate_from_roof(roof, offset, c.image_id, k as u64 + 1)?);
    }
    let image = ImageRecord::new(c.image_id, format!("synth_{}.png", c.seed), c.width, c.height)?;
    Dataset::new(vec![image], annotations, Split::Unsplit)
}

/// Several independent scenes as one dataset.
///
/// Image `k` (from 0) gets id `c.image_id + k`; image 0 uses `c.seed` itself,
/// later images use seeds drawn from a dedicated stream. Annotation ids run
/// consecutively across images from 1.
pub fn generate_dataset(c: &SceneConfig, images: usize) -> Result<Dataset> {
    let mut seeds = purpose_rng(c.seed, stream::IMAGE_SEEDS);
    let mut all_images = Vec::with_capacity(images);
    let mut annotations = Vec::new();
    for k in 0..images {
        let seed = if k == 0 { c.seed } else { seeds.next_u64() };
        let scene = generate_scene(&SceneConfig {
            seed,
            image_id: c.image_id + k as u64,
            ..c.clone()
        })?;
        all_images.extend_from_slice(scene.images());
        for a in scene.annotations() {
            let mut a = a.clone();
            a.id = annotations.len() as u64 + 1;
            annotations.push(a);
        }
    }
    Dataset::new(all_images, annotations, Split::Unsplit)
}

fn l_shape(x: f64, y: f64, w: f64, h: f64, (cw, ch): (f64, f64)) -> Result<Polygon> {
    Polygon::new(vec![
        Point2::new(x, y),
        Point2::new(x + w - cw, y),
        Point2::new(x + w - cw, y + ch),
        Point2::new(x + w, y + ch),
        Point2::new(x + w, y + h),
        Point2::new(x, y + h),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreModel {
    /// Footprint IoU against the ground truth, clipped to `[0.05, 1]`.
    #[default]
    IouLinked,
    /// Constant 1.0 for every prediction.
    Uniform,
}

impl ScoreModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreModel::IouLinked => "iou_linked",
            ScoreModel::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "iou_linked" => Some(ScoreModel::IouLinked),
            "uniform" => Some(ScoreModel::Uniform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseConfig {
    pub vertex_jitter_sigma: f64,
    pub offset_noise_sigma: f64,
    pub drop_rate: f64,
    /// Expected spurious predictions per image.
    pub spurious_rate: f64,
    pub score_model: ScoreModel,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let sigma_ok = |s: f64| s >= 0.0 && s.is_finite();
        if !sigma_ok(self.vertex_jitter_sigma) || !sigma_ok(self.offset_noise_sigma) {
            return Err(Error::InvalidConfig("noise sigmas must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidConfig("drop_rate must lie in [0, 1]"));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(Error::InvalidConfig("spurious_rate must be non-negative"));
        }
        Ok(())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn max_footprint_iou(candidate: &Region, gts: &[Region]) -> f64 {
    gts.iter().map(|g| candidate.iou(g)).fold(0.0, f64::max)
}

fn score_for(model: ScoreModel, iou: impl FnOnce() -> f64) -> f64 {
    match model {
        ScoreModel::Uniform => 1.0,
        ScoreModel::IouLinked => iou().clamp(0.05, 1.0),
    }
}

/// Degrades ground truth into predictions.
///
/// Per annotation: roof vertices get iid Gaussian jitter, the offset gets iid
/// Gaussian noise per component, the footprint is re-derived from both, and
/// the instance survives with probability `1 - drop_rate`. Each image then
/// receives `Poisson(spurious_rate)` rectangles placed uniformly at random.
/// Noise is drawn for every annotation whether or not it is dropped.
pub fn perturb_predictions(gt: &Dataset, n: &NoiseConfig) -> Result<Vec<PredictionInstance>> {
    n.validate()?;
    let mut jitter = purpose_rng(n.seed, stream::VERTEX_JITTER);
    let mut offset_noise = purpose_rng(n.seed, stream::OFFSET_NOISE);
    let mut drops = purpose_rng(n.seed, stream::DROP);
    let mut spurious = purpose_rng(n.seed, stream::SPURIOUS);
    let poisson = if n.spurious_rate > 0.0 {
        Some(Poisson::new(n.spurious_rate).map_err(|_| Error::InvalidConfig("spurious_rate"))?)
    } else {
        None
    };
    let mut next_id = gt.annotations().iter().map(|a| a.id).max().unwrap_or(0) + 1;

    let mut out = Vec::new();
    for image in gt.images() {
        let (w, h) = (image.width as usize, image.height as usize);
        let anns: Vec<_> = gt.annotations_for(image.id).collect();
        let gt_regions: Vec<Region> = match n.score_model {
            ScoreModel::IouLinked => anns
                .iter()
                .map(|a| rasterize_region(a.footprint.vertices(), w, h))
                .collect(),
            ScoreModel::Uniform => Vec::new(),
        };

        for (k, ann) in anns.iter().enumerate() {
            let jittered: Vec<Point2> = ann
                .roof
                .vertices()
                .iter()
                .map(|p| {
                    let dx = n.vertex_jitter_sigma * normal(&mut jitter);
                    let dy = n.vertex_jitter_sigma * normal(&mut jitter);
                    Point2::new(p.x + dx, p.y + dy)
                })
                .collect();
            let ox = n.offset_noise_sigma * normal(&mut offset_noise);
            let oy = n.offset_noise_sigma * normal(&mut offset_noise);
            let keep = drops.random::<f64>() >= n.drop_rate;
            if !keep {
                continue;
            }
            let roof = if n.vertex_jitter_sigma == 0.0 {
                ann.roof.clone()
            } else {
                // A jitter that collapses the roof falls back to the original.
                Polygon::new(jittered).unwrap_or_else(|_| ann.roof.clone())
            };
            let offset = OffsetVector::new(ann.offset.ox + ox, ann.offset.oy + oy);
            let footprint = roof.translate(offset);
            let score = score_for(n.score_model, || {
                rasterize_region(footprint.vertices(), w, h).iou(&gt_regions[k])
            });
            out.push(PredictionInstance {
                id: ann.id,
                image_id: image.id,
                footprint,
                roof: Some(roof),
                offset: Some(offset),
                score,
            });
        }

        let count = poisson.map_or(0, |p| p.sample(&mut spurious) as usize);
        let (mut s0, mut s1) = anns.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), a| {
            let b = a.roof.bounds();
            let side = (b.2 - b.0).min(b.3 - b.1);
            (lo.min(side), hi.max(side))
        });
        if anns.is_empty() {
            (s0, s1) = (16.0, 48.0);
        }
        s1 = s1.min(w.min(h) as f64);
        s0 = s0.min(s1);
        let mean_offset = if anns.is_empty() {
            OffsetVector::ZERO
        } else {
            let (sx, sy) = anns.iter().fold((0.0, 0.0), |(x, y), a| (x + a.offset.ox, y + a.offset.oy));
            OffsetVector::new(sx / anns.len() as f64, sy / anns.len() as f64)
        };
        for _ in 0..count {
            let bw = sample_range(&mut spurious, (s0, s1));
            let bh = sample_range(&mut spurious, (s0, s1));
            let x = sample_range(&mut spurious, (0.0, w as f64 - bw));
            let y = sample_range(&mut spurious, (0.0, h as f64 - bh));
            let roof = Polygon::rectangle(x, y, bw, bh)?;
            let footprint = roof.translate(mean_offset);
            let score = score_for(n.score_model, || {
                max_footprint_iou(&rasterize_region(footprint.vertices(), w, h), &gt_regions)
            });
            out.push(PredictionInstance {
                id: next_id,
                image_id: image.id,
                footprint,
                roof: Some(roof),
                offset: Some(mean_offset),
                score,
            });
            next_id += 1;
        }
    }
    Ok(out)
}

/// Offsets are divided by this before entering feature values.
pub const FEATURE_OFFSET_SCALE: f64 = 32.0;

/// Synthetic stand-in for a pooled offset feature.
///
/// Every channel vanishes outside the unit disk and is built from
/// `u = (o_x x - o_y y) / s` and `ρ / s` at normalized grid position
/// `(x, y)`. The minus sign mirrors the row axis, which is what makes
/// `generate(A_θ o) = rotate_feature_map(generate(o), θ)` hold for the
/// target-to-source sampling convention. Channel `c` uses, by `c mod 4`:
/// `u·w`, `u·r²·w`, `(ρ/s)·w`, `u²·w` with window `w = (1 - r²)²`.
pub fn generate_feature_for_offset(
    o: OffsetVector,
    channels: usize,
    height: usize,
    width: usize,
) -> Result<FeatureMap> {
    if height != width {
        return Err(Error::NonSquareFeatureMap { height, width });
    }
    let rho = o.norm() / FEATURE_OFFSET_SCALE;
    let mut f = FeatureMap::zeros(channels, height, width);
    for row in 0..height {
        let y = grid_coord(row, height);
        for col in 0..width {
            let x = grid_coord(col, width);
            let r2 = x * x + y * y;
            if r2 >= 1.0 {
                continue;
            }
            let window = (1.0 - r2) * (1.0 - r2);
            let u = (o.ox * x - o.oy * y) / FEATURE_OFFSET_SCALE;
            for c in 0..channels {
                let v = match c % 4 {
                    0 => u * window,
                    1 => u * r2 * window,
                    2 => rho * window,
                    _ => u * u * window,
                };
                f.set(c, row, col, v);
            }
        }
    }
    Ok(f)
}
