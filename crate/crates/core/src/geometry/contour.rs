//! Outer-border following on the pixel-corner grid.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::BitMask;
use crate::data_model::{Point2, Polygon};

// Right, Down, Left, Up in the y-down frame; turning right is `+1`.
const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// One outer contour per 8-connected foreground component, in raster order
/// of each component's first pixel. Vertices sit on pixel corners, only
/// direction changes are kept, and holes are ignored. Diagonally touching
/// pixels of one component produce a contour that pinches at the shared
/// corner.
pub fn mask_to_polygons(m: &BitMask) -> Vec<Polygon> {
    let (w, h) = m.dims();
    let mut labels = vec![0u32; w * h];
    let mut starts = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            let label = starts.len() as u32 + 1;
            starts.push((x, y));
            labels[y * w + x] = label;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if m.get_signed(nx, ny) && labels[ny as usize * w + nx as usize] == 0 {
                            labels[ny as usize * w + nx as usize] = label;
                            queue.push_back((nx as usize, ny as usize));
                        }
                    }
                }
            }
        }
    }

    starts
        .iter()
        .enumerate()
        .filter_map(|(i, &start)| {
            let label = i as u32 + 1;
            let inside = |px: i64, py: i64| {
                px >= 0
                    && py >= 0
                    && (px as usize) < w
                    && (py as usize) < h
                    && labels[py as usize * w + px as usize] == label
            };
            Polygon::new(trace(start, inside, w, h)).ok()
        })
        .collect()
}

/// Walks the component boundary keeping foreground on the right, starting
/// at the top-left corner of its topmost-leftmost pixel heading right.
fn trace(start: (usize, usize), inside: impl Fn(i64, i64) -> bool, w: usize, h: usize) -> Vec<Point2> {
    let origin = (start.0 as i64, start.1 as i64);
    let (mut x, mut y) = origin;
    let mut dir = 0usize;
    let mut vertices = vec![Point2::new(x as f64, y as f64)];
    let max_steps = 4 * (w + 1) * (h + 1);
    for _ in 0..max_steps {
        let (dx, dy) = DIRS[dir];
        // Squares flanking the unit edge ahead: the right-hand normal is
        // (-dy, dx). Doubling coordinates keeps everything integral.
        let ahead_left = ((2 * x + dx + dy - 1).div_euclid(2), (2 * y + dy - dx - 1).div_euclid(2));
        let ahead_right = ((2 * x + dx - dy - 1).div_euclid(2), (2 * y + dy + dx - 1).div_euclid(2));
        let next = if inside(ahead_left.0, ahead_left.1) {
            (dir + 3) % 4
        } else if inside(ahead_right.0, ahead_right.1) {
            dir
        } else {
            (dir + 1) % 4
        };
        if next != dir && (x, y) != origin {
            vertices.push(Point2::new(x as f64, y as f64));
        }
        dir = next;
        x += DIRS[dir].0;
        y += DIRS[dir].1;
        if (x, y) == origin {
            break;
        }
    }
    vertices
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mask_iou, rasterize};

    fn rect(m: &mut BitMask, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.set(x, y, true);
            }
        }
    }

    #[test]
    fn empty_mask_has_no_contours() {
        assert!(mask_to_polygons(&BitMask::new(8, 8)).is_empty());
    }

    #[test]
    fn rectangle_contour_is_its_corners() {
        let mut m = BitMask::new(10, 10);
        rect(&mut m, 2, 3, 4, 5);
        let polys = mask_to_polygons(&m);
        assert_eq!(polys.len(), 1);
        let v: Vec<(f64, f64)> = polys[0].vertices().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(v, vec![(2.0, 3.0), (6.0, 3.0), (6.0, 8.0), (2.0, 8.0)]);
        assert!(polys[0].signed_area() > 0.0);
    }

    #[test]
    fn disjoint_squares_give_two_polygons() {
        let mut m = BitMask::new(20, 20);
        rect(&mut m, 1, 1, 4, 4);
        rect(&mut m, 10, 12, 5, 3);
        assert_eq!(mask_to_polygons(&m).len(), 2);
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let mut m = BitMask::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 1, true);
        let polys = mask_to_polygons(&m);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].signed_area(), 2.0);
        assert_eq!(rasterize(&polys[0], 4, 4), m);
    }

    #[test]
    fn hole_is_dropped() {
        let mut m = BitMask::new(10, 10);
        rect(&mut m, 1, 1, 7, 7);
        m.set(4, 4, false);
        let polys = mask_to_polygons(&m);
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].signed_area(), 49.0);
    }

    #[test]
    fn staircase_round_trip_is_exact() {
        let mut m = BitMask::new(12, 12);
        for k in 0..8 {
            rect(&mut m, k, k, 12 - k, 1);
        }
        rect(&mut m, 3, 9, 2, 2);
        let polys = mask_to_polygons(&m);
        let mut back = BitMask::new(12, 12);
        for p in &polys {
            let r = rasterize(p, 12, 12);
            for y in 0..12 {
                for x in 0..12 {
                    if r.get(x, y) {
                        back.set(x, y, true);
                    }
                }
            }
        }
        assert_eq!(mask_iou(&back, &m).unwrap(), 1.0);
    }
}
