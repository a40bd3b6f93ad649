use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::{ClassTable, InstanceMap};

/// An 8-bit RGB tile, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct TileImage {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<u8>,
}

impl TileImage {
    pub fn new(height: usize, width: usize, rgb: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || rgb.len() != height * width * 3 {
            return Err(Error::shape([height, width, 3], [rgb.len()]));
        }
        Ok(Self { height, width, rgb })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        Self {
            height,
            width,
            rgb: rgb.iter().copied().cycle().take(height * width * 3).collect(),
        }
    }
}

/// Contour colour per class id; index 0 is used for unclassified nuclei.
pub const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 165, 0],
    [255, 0, 255],
    [0, 255, 255],
];

pub fn class_color(class: u32) -> [u8; 3] {
    PALETTE[class as usize % PALETTE.len()]
}

/// Instance pixels with a 4-neighbour carrying another label (the image
/// edge counts as another label).
pub fn boundary_pixels(inst: &InstanceMap) -> Vec<usize> {
    let (h, w) = (inst.height, inst.width);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let l = inst.get(r, c);
            if l == 0 {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || inst.get(r - 1, c) != l
                || inst.get(r + 1, c) != l
                || inst.get(r, c - 1) != l
                || inst.get(r, c + 1) != l;
            if edge {
                out.push(r * w + c);
            }
        }
    }
    out
}

/// Renders instance boundaries over the tile.
pub fn overlay_rgb(image: &TileImage, inst: &InstanceMap, classes: &ClassTable) -> Result<Vec<u8>> {
    if [image.height, image.width] != inst.shape() {
        return Err(Error::shape([image.height, image.width], inst.shape()));
    }
    let mut out = image.rgb.clone();
    for i in boundary_pixels(inst) {
        let class = classes.get(&inst.labels[i]).copied().unwrap_or(0);
        out[3 * i..3 * i + 3].copy_from_slice(&class_color(class));
    }
    Ok(out)
}

pub fn write_overlay_png(
    image: &TileImage,
    inst: &InstanceMap,
    classes: &ClassTable,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let rgb = overlay_rgb(image, inst, classes)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(&rgb)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}
