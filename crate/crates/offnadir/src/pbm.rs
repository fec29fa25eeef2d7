//! Binary PBM (P4) mask dumps. A set bit is a black (1) pixel.

use offnadir_core::BitMask;

pub fn to_pbm(m: &BitMask) -> Vec<u8> {
    let (w, h) = m.dims();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for y in 0..h {
        let start = out.len();
        out.resize(start + row_bytes, 0);
        for x in 0..w {
            if m.get(x, y) {
                out[start + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    out
}
