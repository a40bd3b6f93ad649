//! PanNuke fold ingestion.
//!
//! The public release ships each fold as three arrays: `images.npy`
//! `(N, H, W, 3)`, `masks.npy` `(N, H, W, 6)` and `types.npy` `(N,)`. Mask
//! channels 0..=4 hold per-class instance labels (neoplastic, inflammatory,
//! connective, dead, epithelial); channel 5 is background and ignored.

use std::collections::HashMap;
use std::path::Path;

use super::npy::{read_npy, read_npy_strings, NpyArray};
use super::overlay::TileImage;
use crate::error::{Error, Result};
use crate::maps::{ClassTable, InstanceMap};

pub const CLASS_CHANNELS: usize = 5;
pub const MASK_CHANNELS: usize = 6;
pub const CLASS_NAMES: [&str; CLASS_CHANNELS] =
    ["neoplastic", "inflammatory", "connective", "dead", "epithelial"];

#[derive(Debug, Clone)]
pub struct PannukeTile {
    pub image: TileImage,
    pub instances: InstanceMap,
    /// Label → source mask channel (0..=4).
    pub classes: ClassTable,
    pub tissue: String,
    /// Pixels claimed by more than one class channel.
    pub collisions: usize,
}

impl PannukeTile {
    /// Label → type id `1..=5` (channel + 1), the convention used by target
    /// generation and metrics where 0 is background.
    pub fn type_ids(&self) -> ClassTable {
        self.classes.iter().map(|(&l, &c)| (l, c + 1)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PannukeFold {
    pub tiles: Vec<PannukeTile>,
    /// Total label collisions across the fold.
    pub collisions: usize,
}

/// Fuses per-class instance channels into one instance map.
///
/// `mask` is `H×W×channels` (channels ≥ `CLASS_CHANNELS`), channels-last.
/// The lowest channel wins where two channels claim a pixel. Output labels
/// are renumbered `1..=K` in raster order of first appearance.
pub fn fuse_mask_channels(
    height: usize,
    width: usize,
    channels: usize,
    mask: &[u32],
) -> Result<(InstanceMap, ClassTable, usize)> {
    if channels < CLASS_CHANNELS || mask.len() != height * width * channels {
        return Err(Error::shape([height, width, channels], [mask.len()]));
    }
    let mut inst = InstanceMap::empty(height, width);
    let mut classes = ClassTable::new();
    let mut ids: HashMap<(usize, u32), u32> = HashMap::new();
    let mut collisions = 0;
    for (i, px) in mask.chunks_exact(channels).enumerate() {
        let mut claimed = false;
        for (ch, &src) in px[..CLASS_CHANNELS].iter().enumerate() {
            if src == 0 {
                continue;
            }
            if claimed {
                collisions += 1;
                continue;
            }
            claimed = true;
            let next = ids.len() as u32 + 1;
            let label = *ids.entry((ch, src)).or_insert(next);
            classes.insert(label, ch as u32);
            inst.labels[i] = label;
        }
    }
    Ok((inst, classes, collisions))
}

fn shape4(arr: &NpyArray, last: usize, what: &str) -> Result<[usize; 3]> {
    match arr.shape.as_slice() {
        &[n, h, w, c] if c == last => Ok([n, h, w]),
        other => Err(Error::ShapeMismatch {
            left: format!("{what} {other:?}"),
            right: format!("expected (N, H, W, {last})"),
        }),
    }
}

pub fn load_pannuke_fold(
    images_path: impl AsRef<Path>,
    masks_path: impl AsRef<Path>,
    types_path: impl AsRef<Path>,
) -> Result<PannukeFold> {
    let images = read_npy(images_path)?;
    let masks = read_npy(masks_path)?;
    let types = read_npy_strings(types_path)?;

    let [n, h, w] = shape4(&images, 3, "images")?;
    let [mn, mh, mw] = shape4(&masks, MASK_CHANNELS, "masks")?;
    if (n, h, w) != (mn, mh, mw) || types.len() != n {
        return Err(Error::ShapeMismatch {
            left: format!("images {:?}, types ({},)", images.shape, types.len()),
            right: format!("masks {:?}", masks.shape),
        });
    }

    let px = h * w;
    let mut tiles = Vec::with_capacity(n);
    let mut total = 0;
    for (t, tissue) in types.into_iter().enumerate() {
        let rgb = images
            .f64_range(t * px * 3, px * 3)
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        let raw = masks.f64_range(t * px * MASK_CHANNELS, px * MASK_CHANNELS);
        let labels = raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::NotAnInteger {
                        index: t * px * MASK_CHANNELS + i,
                        value: v,
                    })
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        let (instances, classes, collisions) = fuse_mask_channels(h, w, MASK_CHANNELS, &labels)?;
        total += collisions;
        tiles.push(PannukeTile {
            image: TileImage {
                height: h,
                width: w,
                rgb,
            },
            instances,
            classes,
            tissue,
            collisions,
        });
    }
    Ok(PannukeFold {
        tiles,
        collisions: total,
    })
}
