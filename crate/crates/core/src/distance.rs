//! Inner-product kernel shared by every scoring path.
//!
//! Exact-probe IVF search and the brute-force oracle must produce bit-identical
//! scores, so all scoring goes through [`dot`] with a fixed accumulation order.

const LANES: usize = 8;

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// Inner product against int8 codes, scaled back by `scale`.
#[inline]
pub fn dot_i8(query: &[f32], codes: &[i8], scale: f32) -> f32 {
    debug_assert_eq!(query.len(), codes.len());
    let mut acc = [0.0f32; LANES];
    let cq = query.chunks_exact(LANES);
    let cc = codes.chunks_exact(LANES);
    let (rq, rc) = (cq.remainder(), cc.remainder());
    for (x, y) in cq.zip(cc) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i] as f32;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in rq.iter().zip(rc) {
        tail += x * *y as f32;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    ((s0 + s1) + tail) * scale
}
