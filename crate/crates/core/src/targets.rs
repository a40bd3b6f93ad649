//! Target maps (NP, HV, TP) generated from an instance map, plus class
//! balancing weights for the weighted cross-entropy.

use crate::error::{Error, Result};
use crate::maps::{ChannelMap, ClassTable, Grid, InstanceMap, Mask};

/// Generated ground truth for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    /// Binary nuclei mask.
    pub np: Mask,
    /// `H×W×2`; channel 0 horizontal, channel 1 vertical, both in `[-1, 1]`.
    pub hv: ChannelMap<f32>,
    /// Per-pixel class index, `0` = background.
    pub tp: Grid<u32>,
}

impl TargetMaps {
    /// Builds all three targets. Without a class table every nucleus is
    /// assigned class 1.
    pub fn generate(inst: &InstanceMap, classes: Option<&ClassTable>) -> Result<Self> {
        let tp = match classes {
            Some(table) => gen_tp_target(inst, table)?,
            None => inst.foreground().map(u32::from),
        };
        Ok(Self {
            np: gen_np_target(inst),
            hv: gen_hv_targets(inst),
            tp,
        })
    }

    pub fn shape(&self) -> [usize; 2] {
        self.np.shape()
    }
}

pub fn gen_np_target(inst: &InstanceMap) -> Mask {
    inst.foreground()
}

/// Horizontal and vertical offset maps.
///
/// Each instance's pixel offsets from its centre of mass are scaled so that
/// the negative side reaches exactly -1 and the positive side exactly +1;
/// the centroid stays at 0. An axis along which the instance is one pixel
/// wide maps to 0. Offsets are computed in bbox-local coordinates so the
/// result is exactly translation-equivariant.
pub fn gen_hv_targets(inst: &InstanceMap) -> ChannelMap<f32> {
    let mut hv = ChannelMap::zeros(inst.height, inst.width, 2);
    let w = inst.width;
    for pixels in inst.pixel_lists().values() {
        let (mut rmin, mut cmin) = (usize::MAX, usize::MAX);
        for &i in pixels {
            rmin = rmin.min(i / w);
            cmin = cmin.min(i % w);
        }
        let n = pixels.len() as f64;
        let (mut rsum, mut csum) = (0.0f64, 0.0f64);
        for &i in pixels {
            rsum += (i / w - rmin) as f64;
            csum += (i % w - cmin) as f64;
        }
        let (rmean, cmean) = (rsum / n, csum / n);

        let (mut dr_lo, mut dr_hi, mut dc_lo, mut dc_hi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &i in pixels {
            let dr = (i / w - rmin) as f64 - rmean;
            let dc = (i % w - cmin) as f64 - cmean;
            dr_lo = dr_lo.min(dr);
            dr_hi = dr_hi.max(dr);
            dc_lo = dc_lo.min(dc);
            dc_hi = dc_hi.max(dc);
        }
        let scale = |d: f64, lo: f64, hi: f64| -> f32 {
            if d < 0.0 && lo < 0.0 {
                (d / -lo) as f32
            } else if d > 0.0 && hi > 0.0 {
                (d / hi) as f32
            } else {
                0.0
            }
        };
        for &i in pixels {
            let dr = (i / w - rmin) as f64 - rmean;
            let dc = (i % w - cmin) as f64 - cmean;
            hv.data[2 * i] = scale(dc, dc_lo, dc_hi);
            hv.data[2 * i + 1] = scale(dr, dr_lo, dr_hi);
        }
    }
    hv
}

pub fn gen_tp_target(inst: &InstanceMap, classes: &ClassTable) -> Result<Grid<u32>> {
    let mut out = Grid::zeros(inst.height, inst.width);
    for (o, &l) in out.data.iter_mut().zip(&inst.labels) {
        if l > 0 {
            *o = *classes.get(&l).ok_or(Error::MissingClass { label: l })?;
        }
    }
    Ok(out)
}

/// Per-class weights for the weighted cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f32>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        Self {
            weights: vec![1.0; classes],
        }
    }

    pub fn new(weights: Vec<f32>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(
                "class weights must be finite and positive".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn get(&self, class: usize) -> f64 {
        self.weights[class] as f64
    }
}

/// Inverse square-root frequency weights `sqrt(N / max(n_k, 1))`,
/// normalized to sum to the class count.
pub fn compute_class_weights(counts: &[u64], classes: usize) -> Result<ClassWeights> {
    if classes == 0 || counts.len() != classes {
        return Err(Error::shape([classes], [counts.len()]));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::AllZeroCounts);
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| (total as f64 / n.max(1) as f64).sqrt())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(ClassWeights {
        weights: raw
            .iter()
            .map(|w| (w / sum * classes as f64) as f32)
            .collect(),
    })
}
