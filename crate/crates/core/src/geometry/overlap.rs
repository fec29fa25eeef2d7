//! Exact polygon overlap by vertical slab decomposition.
//!
//! Between consecutive breakpoints (vertex abscissae and edge crossings) no
//! two edges swap order, so the covered length of any vertical line is
//! linear in x and the midpoint rule integrates it exactly. Coverage uses
//! the nonzero winding rule, like the rasterizer.

use alloc::vec::Vec;

use crate::data_model::{Point2, Polygon};

type Edge = (Point2, Point2);

fn edges(p: &Polygon) -> impl Iterator<Item = Edge> + '_ {
    let v = p.vertices();
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

fn crossing_x(a: Edge, b: Edge) -> Option<f64> {
    let r = (a.1.x - a.0.x, a.1.y - a.0.y);
    let s = (b.1.x - b.0.x, b.1.y - b.0.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let q = (b.0.x - a.0.x, b.0.y - a.0.y);
    let t = (q.0 * s.1 - q.1 * s.0) / denom;
    let u = (q.0 * r.1 - q.1 * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(a.0.x + t * r.0)
}

/// Covered y-intervals of the vertical line at `x`, sorted and disjoint.
fn intervals(p: &Polygon, x: f64, out: &mut Vec<(f64, f64)>) {
    let mut hits: Vec<(f64, i32)> = edges(p)
        .filter(|(a, b)| a.x.min(b.x) < x && x < a.x.max(b.x))
        .map(|(a, b)| {
            let y = a.y + (x - a.x) * (b.y - a.y) / (b.x - a.x);
            (y, if b.x > a.x { 1 } else { -1 })
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.clear();
    let mut winding = 0;
    let mut start = 0.0;
    for (y, w) in hits {
        let was_inside = winding != 0;
        winding += w;
        match (was_inside, winding != 0) {
            (false, true) => start = y,
            (true, false) => out.push((start, y)),
            _ => {}
        }
    }
}

fn length(iv: &[(f64, f64)]) -> f64 {
    iv.iter().map(|(a, b)| b - a).sum()
}

fn overlap_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Areas of `a`, `b` and `a ∩ b`.
pub fn overlap_areas(a: &Polygon, b: &Polygon) -> (f64, f64, f64) {
    let all: Vec<Edge> = edges(a).chain(edges(b)).collect();
    let mut xs: Vec<f64> = a.vertices().iter().chain(b.vertices()).map(|v| v.x).collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            xs.extend(crossing_x(all[i], all[j]));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (mut ia, mut ib) = (Vec::new(), Vec::new());
    let (mut area_a, mut area_b, mut inter) = (0.0, 0.0, 0.0);
    for w in xs.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        intervals(a, mid, &mut ia);
        intervals(b, mid, &mut ib);
        area_a += width * length(&ia);
        area_b += width * length(&ib);
        inter += width * overlap_length(&ia, &ib);
    }
    (area_a, area_b, inter)
}

pub fn polygon_intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    overlap_areas(a, b).2
}

/// IoU of the covered regions; zero when both are empty.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    if ax1 <= bx0 || bx1 <= ax0 || ay1 <= by0 || by1 <= ay0 {
        return 0.0;
    }
    let (sa, sb, i) = overlap_areas(a, b);
    let union = sa + sb - i;
    if union <= 0.0 {
        0.0
    } else {
        (i / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Polygon {
        Polygon::rectangle(x, y, w, h).unwrap()
    }

    #[test]
    fn overlapping_rectangles() {
        let (a, b, i) = overlap_areas(&rect(0.0, 0.0, 10.0, 10.0), &rect(5.0, 2.0, 10.0, 10.0));
        assert_eq!((a, b, i), (100.0, 100.0, 40.0));
        assert_eq!(polygon_iou(&rect(0.0, 0.0, 10.0, 10.0), &rect(5.0, 2.0, 10.0, 10.0)), 40.0 / 160.0);
    }

    #[test]
    fn identical_and_disjoint() {
        let r = rect(1.5, 2.5, 7.0, 3.0);
        assert_eq!(polygon_iou(&r, &r), 1.0);
        assert_eq!(polygon_iou(&r, &rect(20.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn triangle_inside_square() {
        let t = Polygon::from_coords(&[[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]).unwrap();
        let (_, ta, i) = overlap_areas(&rect(0.0, 0.0, 4.0, 4.0), &t);
        assert!((ta - 8.0).abs() < 1e-12 && (i - 8.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_diamond_and_square() {
        // Diamond |x| + |y| <= 1 against [0, 1]²: one quarter of area 2.
        let d = Polygon::from_coords(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        let i = polygon_intersection_area(&d, &rect(0.0, 0.0, 1.0, 1.0));
        assert!((i - 0.5).abs() < 1e-12);
        let i = polygon_intersection_area(&d, &rect(-0.5, -0.5, 1.0, 1.0));
        assert!((i - 1.0).abs() < 1e-12, "{i}");
    }
}
