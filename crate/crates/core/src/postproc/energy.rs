use crate::error::{Error, Result};
use crate::maps::{ChannelMap, Grid, Mask};

/// 3×3 Sobel derivative of channel `ch`, replicate-padded at the border.
/// `axis` 0 differentiates along columns, 1 along rows.
fn sobel<T: Copy + Into<f64>>(hv: &ChannelMap<T>, ch: usize, axis: usize) -> Vec<f32> {
    let (h, w) = (hv.height, hv.width);
    let at = |r: usize, c: usize| -> f32 {
        let v: f64 = hv.data[(r * w + c) * 2 + ch].into();
        v as f32
    };
    let mut out = vec![0.0f32; h * w];
    if h == 0 || w == 0 {
        return out;
    }
    for r in 0..h {
        let ru = r.saturating_sub(1);
        let rd = (r + 1).min(h - 1);
        for c in 0..w {
            let cl = c.saturating_sub(1);
            let cr = (c + 1).min(w - 1);
            out[r * w + c] = if axis == 0 {
                (at(ru, cr) - at(ru, cl)) + 2.0 * (at(r, cr) - at(r, cl)) + (at(rd, cr) - at(rd, cl))
            } else {
                (at(rd, cl) - at(ru, cl)) + 2.0 * (at(rd, c) - at(ru, c)) + (at(rd, cr) - at(ru, cr))
            };
        }
    }
    out
}

/// Min-max normalizes `v` over masked pixels in place. A flat response
/// normalizes to 0.
fn normalize_over(v: &mut [f32], mask: &Mask) {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for (x, &m) in v.iter().zip(&mask.data) {
        if m != 0 {
            lo = lo.min(*x);
            hi = hi.max(*x);
        }
    }
    let span = hi - lo;
    for (x, &m) in v.iter_mut().zip(&mask.data) {
        *x = if m != 0 && span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

/// Marker energy from the HV maps.
///
/// Inside a nucleus the horizontal map increases left to right and the
/// vertical map top to bottom, so their Sobel derivatives are positive;
/// instance borders show up as descents. The descent magnitude of each
/// channel is min-max normalized over the mask and
/// `energy = 1 - max(edge_h, edge_v)`: 1 in nucleus interiors, low on
/// borders, 0 outside the mask.
pub fn sobel_energy<T: Copy + Into<f64>>(hv: &ChannelMap<T>, np_mask: &Mask) -> Result<Grid<f32>> {
    if hv.channels != 2 || [hv.height, hv.width] != np_mask.shape() {
        return Err(Error::shape(hv.shape(), np_mask.shape()));
    }
    let mut edge_h = sobel(hv, 0, 0);
    let mut edge_v = sobel(hv, 1, 1);
    for v in edge_h.iter_mut().chain(edge_v.iter_mut()) {
        *v = (-*v).max(0.0);
    }
    normalize_over(&mut edge_h, np_mask);
    normalize_over(&mut edge_v, np_mask);
    let data = edge_h
        .iter()
        .zip(&edge_v)
        .zip(&np_mask.data)
        .map(|((&a, &b), &m)| if m != 0 { 1.0 - a.max(b) } else { 0.0 })
        .collect();
    Ok(Grid {
        height: hv.height,
        width: hv.width,
        data,
    })
}
