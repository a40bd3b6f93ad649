use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::maps::{Grid, InstanceMap, Mask};

/// Order-preserving integer key of an `f32`.
#[inline]
fn key(v: f32) -> u32 {
    let b = v.to_bits();
    if b >> 31 == 1 {
        !b
    } else {
        b | 0x8000_0000
    }
}

/// Marker-controlled watershed.
///
/// Best-first flood from the markers in order of descending energy. A pixel
/// takes the label of the first labelled neighbour to reach it; among equal
/// energies the earlier-queued pixel is expanded first (FIFO). Flooding uses
/// 4-connectivity and stays inside `mask`; mask pixels not reachable from a
/// marker keep label 0.
pub fn watershed(energy: &Grid<f32>, markers: &InstanceMap, mask: &Mask) -> Result<InstanceMap> {
    if energy.shape() != markers.shape() || energy.shape() != mask.shape() {
        return Err(Error::shape(energy.shape(), markers.shape()));
    }
    let (h, w) = (energy.height, energy.width);
    let mut out = markers.clone();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u32;
    for (i, &l) in markers.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        if mask.data[i] == 0 {
            return Err(Error::MarkerOutsideMask { row: i / w, col: i % w });
        }
        heap.push((key(energy.data[i]), Reverse(seq), i as u32));
        seq += 1;
    }
    while let Some((_, _, i)) = heap.pop() {
        let i = i as usize;
        let label = out.labels[i];
        let (r, c) = (i / w, i % w);
        let mut claim = |j: usize| {
            if mask.data[j] != 0 && out.labels[j] == 0 {
                out.labels[j] = label;
                heap.push((key(energy.data[j]), Reverse(seq), j as u32));
                seq += 1;
            }
        };
        if r > 0 {
            claim(i - w);
        }
        if c > 0 {
            claim(i - 1);
        }
        if c + 1 < w {
            claim(i + 1);
        }
        if r + 1 < h {
            claim(i + w);
        }
    }
    Ok(out)
}
