//! Feature-level offset augmentation numerics.
//!
//! Each branch rotates the pooled offset feature map and the ground-truth
//! offset by one angle of a fixed set; at inference the branch outputs are
//! rotated back and fused into a single offset.
//!
//! Feature maps are sampled in normalized coordinates: grid column `j` of a
//! `W`-wide map sits at `x = -1 + 2j / (W - 1)` (0 for `W = 1`), rows alike.
//! With that grid, quarter turns map grid points onto grid points.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::data_model::OffsetVector;
use crate::error::{Error, Result};

pub type Matrix2 = [[f64; 2]; 2];

/// `[[cos θ, -sin θ], [sin θ, cos θ]]`
pub fn rotation_matrix(theta: f64) -> Matrix2 {
    let (s, c) = libm::sincos(theta);
    [[c, -s], [s, c]]
}

fn apply(a: &Matrix2, x: f64, y: f64) -> (f64, f64) {
    (a[0][0] * x + a[0][1] * y, a[1][0] * x + a[1][1] * y)
}

pub fn rotate_offset(o: OffsetVector, theta: f64) -> OffsetVector {
    let (x, y) = apply(&rotation_matrix(theta), o.ox, o.oy);
    OffsetVector::new(x, y)
}

pub fn inverse_rotate_offset(o_star: OffsetVector, theta: f64) -> OffsetVector {
    rotate_offset(o_star, -theta)
}

/// Returns `(ρ, θ)` with `θ ∈ [0, 2π)`; the zero vector maps to `(0, 0)`.
pub fn to_polar(o: OffsetVector) -> (f64, f64) {
    let rho = o.norm();
    if rho == 0.0 {
        return (0.0, 0.0);
    }
    let mut theta = libm::atan2(o.oy, o.ox);
    if theta < 0.0 {
        theta += TAU;
    }
    // atan2 can return -0.0 or a value that rounds up to 2π after the shift.
    if theta >= TAU || theta == 0.0 {
        theta = 0.0;
    }
    (rho, theta)
}

pub fn from_polar(rho: f64, theta: f64) -> Result<OffsetVector> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::NegativeRadius(rho));
    }
    let (s, c) = libm::sincos(theta);
    Ok(OffsetVector::new(rho * c, rho * s))
}

/// Ordered branch angles in radians; the identity branch comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationAngleSet {
    angles: Vec<f64>,
}

impl RotationAngleSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.first() != Some(&0.0) || angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidAngleSet);
        }
        Ok(Self { angles })
    }

    pub fn identity() -> Self {
        Self { angles: vec![0.0] }
    }

    /// `{0, π/2, π, 3π/2}`
    pub fn quarter_turns() -> Self {
        Self {
            angles: vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
        }
    }

    pub fn from_degrees(degrees: &[f64]) -> Result<Self> {
        Self::new(degrees.iter().map(|d| d.to_radians()).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

impl Default for RotationAngleSet {
    fn default() -> Self {
        Self::quarter_turns()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionStrategy {
    /// Candidate with the largest Euclidean norm; ties go to the earliest branch.
    #[default]
    MaxNorm,
    /// Component-wise mean.
    Mean,
}

impl FusionStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionStrategy::MaxNorm => "max_norm",
            FusionStrategy::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max_norm" => Some(FusionStrategy::MaxNorm),
            "mean" => Some(FusionStrategy::Mean),
            _ => None,
        }
    }
}

pub fn fuse_offsets(candidates: &[OffsetVector], strategy: FusionStrategy) -> Result<OffsetVector> {
    let first = *candidates.first().ok_or(Error::EmptyCandidates)?;
    match strategy {
        FusionStrategy::MaxNorm => {
            let mut best = first;
            let mut best_norm = first.norm();
            for c in &candidates[1..] {
                let n = c.norm();
                if n > best_norm {
                    best = *c;
                    best_norm = n;
                }
            }
            Ok(best)
        }
        FusionStrategy::Mean => {
            let n = candidates.len() as f64;
            let (sx, sy) = candidates
                .iter()
                .fold((0.0, 0.0), |(x, y), c| (x + c.ox, y + c.oy));
            Ok(OffsetVector::new(sx / n, sy / n))
        }
    }
}

/// Dense `C × H × W` feature map, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(Error::FeatureShape {
                channels,
                height,
                width,
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }
}

/// Normalized coordinate of grid index `i` along an axis of length `n`.
pub fn grid_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

const SNAP: f64 = 1e-9;

/// Maps a normalized coordinate to a fractional grid index, snapping values
/// within `SNAP` of an integer. `None` outside `[-1, 1]`.
fn to_index(u: f64, n: usize) -> Option<f64> {
    let scale = if n <= 1 { 0.0 } else { (n - 1) as f64 / 2.0 };
    let mut idx = (u + 1.0) * scale;
    let rounded = libm::round(idx);
    if (idx - rounded).abs() < SNAP {
        idx = rounded;
    }
    if idx < 0.0 || idx > (n - 1) as f64 || !(-1.0 - SNAP..=1.0 + SNAP).contains(&u) {
        return None;
    }
    Some(idx)
}

/// Rotates a square map: each target point `t` reads the source at `A_θ t`,
/// bilinearly interpolated per channel, zero outside `[-1, 1]²`.
pub fn rotate_feature_map(f: &FeatureMap, theta: f64) -> Result<FeatureMap> {
    if f.height != f.width {
        return Err(Error::NonSquareFeatureMap {
            height: f.height,
            width: f.width,
        });
    }
    let n = f.width;
    if n == 0 {
        return Ok(f.clone());
    }
    let a = rotation_matrix(theta);
    let mut out = FeatureMap::zeros(f.channels, n, n);
    for ty in 0..n {
        for tx in 0..n {
            let (sx, sy) = apply(&a, grid_coord(tx, n), grid_coord(ty, n));
            let (Some(ix), Some(iy)) = (to_index(sx, n), to_index(sy, n)) else {
                continue;
            };
            let (x0, y0) = (libm::floor(ix) as usize, libm::floor(iy) as usize);
            let (fx, fy) = (ix - x0 as f64, iy - y0 as f64);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1, y0, fx * (1.0 - fy)),
                (x0, y0 + 1, (1.0 - fx) * fy),
                (x0 + 1, y0 + 1, fx * fy),
            ];
            for c in 0..f.channels {
                let mut v = 0.0;
                for &(x, y, wgt) in &taps {
                    if wgt != 0.0 && x < n && y < n {
                        v += wgt * f.get(c, y, x);
                    }
                }
                out.set(c, ty, tx, v);
            }
        }
    }
    Ok(out)
}
