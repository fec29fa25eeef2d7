//! Raster/vector conversions and overlap measures.
//!
//! Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` and is sampled at its center.

mod contour;
mod distance;
mod overlap;
mod raster;

use alloc::vec;
use alloc::vec::Vec;

use crate::data_model::Polygon;
use crate::error::{Error, Result};

pub use contour::mask_to_polygons;
pub use distance::squared_distance_to_background;
pub use overlap::{overlap_areas, polygon_intersection_area, polygon_iou};
pub use raster::{rasterize, rasterize_region};

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (bits.len(), 1),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Copy shifted by `(dx, dy)`; pixels leaving the grid are dropped.
    pub fn shifted(&self, dx: i64, dy: i64) -> BitMask {
        let mut out = BitMask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let (tx, ty) = (x as i64 + dx, y as i64 + dy);
                if tx >= 0 && ty >= 0 && tx < self.width as i64 && ty < self.height as i64 {
                    out.set(tx as usize, ty as usize, true);
                }
            }
        }
        out
    }
}

fn check_dims(a: &BitMask, b: &BitMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    Ok(())
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// `|a ∧ b| / |a ∨ b|`, 1.0 when both are empty.
pub fn mask_iou(a: &BitMask, b: &BitMask) -> Result<f64> {
    check_dims(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits.iter().zip(&b.bits) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(ratio(inter, union))
}

/// Foreground pixels within `d` of the inner contour.
///
/// A pixel's distance to the contour is its exact Euclidean distance to the
/// nearest background pixel center minus one, with everything outside the
/// grid counted as background. `d = 0` therefore keeps exactly the pixels
/// 4-adjacent to background.
pub fn boundary_band(m: &BitMask, d: f64) -> BitMask {
    let dist2 = squared_distance_to_background(m);
    let limit = (d.max(0.0) + 1.0) * (d.max(0.0) + 1.0);
    let bits = m
        .bits
        .iter()
        .zip(&dist2)
        .map(|(&fg, &d2)| fg && (d2 as f64) <= limit)
        .collect();
    BitMask {
        width: m.width,
        height: m.height,
        bits,
    }
}

pub fn boundary_iou(a: &BitMask, b: &BitMask, d: f64) -> Result<f64> {
    check_dims(a, b)?;
    mask_iou(&boundary_band(a, d), &boundary_band(b, d))
}

/// Band radius used when none is configured: 2% of the image diagonal.
pub fn default_boundary_d(width: u32, height: u32) -> f64 {
    0.02 * libm::hypot(width as f64, height as f64)
}

pub fn polygon_area(p: &Polygon) -> f64 {
    p.signed_area().abs()
}

/// A mask cropped to a sub-rectangle of a larger image.
///
/// Pixels outside the crop are background. Evaluation works on these so that
/// hundreds of instances on a large tile never allocate full-size grids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub left: usize,
    pub top: usize,
    pub mask: BitMask,
    count: usize,
}

impl Region {
    pub fn new(left: usize, top: usize, mask: BitMask) -> Self {
        let count = mask.count();
        Self {
            left,
            top,
            mask,
            count,
        }
    }

    pub fn empty() -> Self {
        Self::new(0, 0, BitMask::new(0, 0))
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.left
            && y >= self.top
            && x < self.left + self.mask.width
            && y < self.top + self.mask.height
            && self.mask.get(x - self.left, y - self.top)
    }

    pub fn intersection(&self, other: &Region) -> usize {
        let x0 = self.left.max(other.left);
        let y0 = self.top.max(other.top);
        let x1 = (self.left + self.mask.width).min(other.left + other.mask.width);
        let y1 = (self.top + self.mask.height).min(other.top + other.mask.height);
        let mut n = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                n += (self.mask.get(x - self.left, y - self.top)
                    && other.mask.get(x - other.left, y - other.top)) as usize;
            }
        }
        n
    }

    pub fn iou(&self, other: &Region) -> f64 {
        let inter = self.intersection(other);
        ratio(inter, self.count + other.count - inter)
    }

    /// Boundary band of the full-image mask, restricted to this crop.
    ///
    /// Exact: any background pixel outside the crop is at least as far as the
    /// background ring bordering it.
    pub fn boundary_band(&self, d: f64) -> Region {
        Region::new(self.left, self.top, boundary_band(&self.mask, d))
    }

    /// Materializes the crop into a full `width × height` mask.
    pub fn to_full(&self, width: usize, height: usize) -> BitMask {
        let mut out = BitMask::new(width, height);
        for y in 0..self.mask.height {
            for x in 0..self.mask.width {
                if self.mask.get(x, y) && self.left + x < width && self.top + y < height {
                    out.set(self.left + x, self.top + y, true);
                }
            }
        }
        out
    }
}
