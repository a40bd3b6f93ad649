//! Instance extraction from network outputs: thresholding, HV marker energy,
//! marker-controlled watershed, per-instance typing and record extraction.

mod classify;
mod contour;
mod energy;
mod label;
mod watershed;

pub use classify::classify_instances;
pub use contour::trace_contour;
pub use energy::sobel_energy;
pub use label::{connected_components, remove_small_objects};
pub use watershed::watershed;

use crate::error::{Error, Result};
use crate::io::NucleusJsonRecord;
use crate::maps::{ChannelMap, ClassTable, Grid, InstanceMap, Mask, ProbTable};

/// In-memory nucleus record; identical to what is written to JSON.
pub type NucleusRecord = NucleusJsonRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocConfig {
    /// Foreground probability threshold (strict).
    pub np_threshold: f32,
    /// Marker energy threshold (strict).
    pub energy_threshold: f32,
    /// Smallest admissible object, in pixels, for both blobs and markers.
    pub min_size: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            np_threshold: 0.5,
            energy_threshold: 0.4,
            min_size: 10,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.np_threshold) || !(0.0..=1.0).contains(&self.energy_threshold) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must lie in [0, 1], got np {} energy {}",
                self.np_threshold, self.energy_threshold
            )));
        }
        Ok(())
    }
}

pub fn threshold<T: Copy + Into<f64>>(probs: &Grid<T>, thr: f32) -> Mask {
    probs.map(|p| u8::from(p.into() > f64::from(thr)))
}

/// Full instance segmentation from the foreground probability map and the HV
/// maps. Labels in the result are `1..=K` in raster order of first pixel.
pub fn instance_segment<P, H>(
    np_probs: &Grid<P>,
    hv: &ChannelMap<H>,
    cfg: &PostprocConfig,
) -> Result<InstanceMap>
where
    P: Copy + Into<f64>,
    H: Copy + Into<f64>,
{
    cfg.validate()?;
    if hv.channels != 2 || [hv.height, hv.width] != np_probs.shape() {
        return Err(Error::shape(np_probs.shape(), hv.shape()));
    }
    if np_probs.data.iter().any(|&p| !p.into().is_finite()) {
        return Err(Error::NonFinite("np probabilities"));
    }
    if hv.data.iter().any(|&v| !v.into().is_finite()) {
        return Err(Error::NonFinite("hv maps"));
    }
    let mask = remove_small_objects(&threshold(np_probs, cfg.np_threshold), cfg.min_size);
    let energy = sobel_energy(hv, &mask)?;
    let seeds = Grid {
        height: mask.height,
        width: mask.width,
        data: energy
            .data
            .iter()
            .zip(&mask.data)
            .map(|(&e, &m)| u8::from(m != 0 && e > cfg.energy_threshold))
            .collect(),
    };
    let (markers, _) = connected_components(&remove_small_objects(&seeds, cfg.min_size));
    Ok(watershed(&energy, &markers, &mask)?.relabel_sequential())
}

/// Geometry and typing of every instance, in ascending label order.
pub fn extract_records(
    inst: &InstanceMap,
    classes: &ClassTable,
    probs: &ProbTable,
) -> Result<Vec<NucleusRecord>> {
    let w = inst.width;
    inst.pixel_lists()
        .into_iter()
        .map(|(label, pixels)| {
            let class_id = *classes.get(&label).ok_or(Error::MissingClass { label })?;
            let class_prob = *probs.get(&label).ok_or(Error::MissingClass { label })?;
            let (mut sr, mut sc) = (0u64, 0u64);
            let mut bbox = [u32::MAX, u32::MAX, 0, 0];
            for &i in &pixels {
                let (r, c) = ((i / w) as u32, (i % w) as u32);
                sr += u64::from(r);
                sc += u64::from(c);
                bbox = [bbox[0].min(r), bbox[1].min(c), bbox[2].max(r), bbox[3].max(c)];
            }
            let n = pixels.len() as f64;
            // pixel lists are in raster order
            let start = pixels[0];
            Ok(NucleusRecord {
                id: label,
                class_id,
                class_prob,
                centroid: [(sr as f64 / n) as f32, (sc as f64 / n) as f32],
                bbox,
                contour: trace_contour(inst, label, (start / w, start % w)),
            })
        })
        .collect()
}

/// Everything produced for one tile.
#[derive(Debug, Clone)]
pub struct TileResult {
    pub instances: InstanceMap,
    pub classes: ClassTable,
    pub probs: ProbTable,
    pub records: Vec<NucleusRecord>,
}

pub fn postprocess_tile<P, H, Q>(
    np_probs: &Grid<P>,
    hv: &ChannelMap<H>,
    tp_probs: &ChannelMap<Q>,
    cfg: &PostprocConfig,
) -> Result<TileResult>
where
    P: Copy + Into<f64>,
    H: Copy + Into<f64>,
    Q: Copy + Into<f64>,
{
    let instances = instance_segment(np_probs, hv, cfg)?;
    let (classes, probs) = classify_instances(&instances, tp_probs)?;
    let records = extract_records(&instances, &classes, &probs)?;
    Ok(TileResult {
        instances,
        classes,
        probs,
        records,
    })
}
