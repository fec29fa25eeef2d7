use alloc::vec::Vec;

use super::{BitMask, Region};
use crate::data_model::{Point2, Polygon};

/// Pixel `(i, j)` is set iff `(i + 0.5, j + 0.5)` has non-zero winding number
/// with respect to `p`. Parts outside the grid are clipped.
pub fn rasterize(p: &Polygon, width: usize, height: usize) -> BitMask {
    rasterize_region(p.vertices(), width, height).to_full(width, height)
}

/// Scanline fill restricted to the vertex ring's pixel bounds.
///
/// Accepts arbitrary rings; fewer than three vertices or zero area yield an
/// empty region.
pub fn rasterize_region(vertices: &[Point2], width: usize, height: usize) -> Region {
    if vertices.len() < 3 || width == 0 || height == 0 {
        return Region::empty();
    }
    if vertices.iter().any(|v| !v.is_finite()) {
        return Region::empty();
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in vertices {
        min_x = min_x.min(v.x);
        min_y = min_y.min(v.y);
        max_x = max_x.max(v.x);
        max_y = max_y.max(v.y);
    }
    // Centers c = k + 0.5 with min <= c < max.
    let first = |lo: f64| libm::ceil(lo - 0.5).max(0.0);
    let last_excl = |hi: f64, n: usize| libm::ceil(hi - 0.5).min(n as f64);
    let (x0, x1) = (first(min_x), last_excl(max_x, width));
    let (y0, y1) = (first(min_y), last_excl(max_y, height));
    if x0 >= x1 || y0 >= y1 {
        return Region::empty();
    }
    let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
    let mut mask = BitMask::new(x1 - x0, y1 - y0);

    let n = vertices.len();
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for row in y0..y1 {
        let yc = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let dir = if a.y <= yc && yc < b.y {
                1
            } else if b.y <= yc && yc < a.y {
                -1
            } else {
                continue;
            };
            let t = (yc - a.y) / (b.y - a.y);
            crossings.push((a.x + t * (b.x - a.x), dir));
        }
        crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut winding = 0;
        for k in 0..crossings.len() {
            winding += crossings[k].1;
            if winding == 0 || k + 1 == crossings.len() {
                continue;
            }
            let lo = libm::ceil(crossings[k].0 - 0.5).max(x0 as f64);
            let hi = libm::ceil(crossings[k + 1].0 - 0.5).min(x1 as f64);
            if lo >= hi {
                continue;
            }
            for col in lo as usize..hi as usize {
                mask.set(col - x0, row - y0, true);
            }
        }
    }
    Region::new(x0, y0, mask)
}
