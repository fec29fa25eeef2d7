//! Exact squared Euclidean distance transform (Felzenszwalb–Huttenlocher).

use alloc::vec;
use alloc::vec::Vec;

use super::BitMask;

const FAR: f64 = 1e18;

/// Squared distance from each pixel center to the nearest background pixel
/// center, with a one-pixel background ring around the grid. Background
/// pixels map to 0.
pub fn squared_distance_to_background(m: &BitMask) -> Vec<u64> {
    let (w, h) = m.dims();
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                grid[(y + 1) * pw + x + 1] = FAR;
            }
        }
    }

    let n = pw.max(ph);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 2];

    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        transform_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        f[..pw].copy_from_slice(row);
        transform_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        row.copy_from_slice(&out[..pw]);
    }

    let mut result = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            result.push(grid[(y + 1) * pw + x + 1] as u64);
        }
    }
    result
}

/// Lower envelope of the parabolas rooted at every finite sample.
fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: Option<usize> = None;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        let qf = q as f64;
        loop {
            match k {
                None => {
                    k = Some(0);
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                Some(top) => {
                    let p = v[top];
                    let pf = p as f64;
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                    if s <= z[top] {
                        k = top.checked_sub(1);
                        continue;
                    }
                    v[top + 1] = q;
                    z[top + 1] = s;
                    z[top + 2] = f64::INFINITY;
                    k = Some(top + 1);
                    break;
                }
            }
        }
    }
    let Some(_) = k else {
        d.iter_mut().for_each(|x| *x = FAR);
        return;
    };
    let mut j = 0usize;
    for q in 0..n {
        let qf = q as f64;
        while z[j + 1] < qf {
            j += 1;
        }
        let p = v[j] as f64;
        d[q] = (qf - p) * (qf - p) + f[v[j]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(m: &BitMask) -> Vec<u64> {
        let (w, h) = (m.width() as i64, m.height() as i64);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !m.get(x as usize, y as usize) {
                    out.push(0);
                    continue;
                }
                let mut best = i64::MAX;
                for by in -1..=h {
                    for bx in -1..=w {
                        if !m.get_signed(bx, by) {
                            best = best.min((bx - x).pow(2) + (by - y).pow(2));
                        }
                    }
                }
                out.push(best as u64);
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_masks() {
        let mut state = 0x9e3779b97f4a7c15u64;
        for trial in 0..20 {
            let (w, h) = (5 + trial % 7, 4 + trial % 9);
            let mut m = BitMask::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    m.set(x, y, state % 5 != 0);
                }
            }
            assert_eq!(squared_distance_to_background(&m), brute(&m), "trial {trial}");
        }
    }

    #[test]
    fn full_mask_measures_to_border() {
        let mut m = BitMask::new(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                m.set(x, y, true);
            }
        }
        let d = squared_distance_to_background(&m);
        assert_eq!(d[2 * 5 + 2], 9);
        assert_eq!(d[0], 1);
    }
}
