use std::path::PathBuf;

use hoverpost_core::io::{write_npy, NpyArray};
use hoverpost_core::targets::{compute_class_weights, TargetMaps};

use crate::arrays::{label_tile, load};
use crate::error::CliResult;

#[derive(Debug, Clone)]
pub struct GenTargetsOptions {
    /// `H×W` instance labels or `H×W×2` labels plus types.
    pub instances: PathBuf,
    /// Output prefix for `<out>_np.npy`, `<out>_hv.npy`, `<out>_tp.npy`.
    pub out: PathBuf,
    /// Type channels including background; inferred from the tile if absent.
    pub num_types: Option<usize>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GenTargetsReport {
    pub instances: usize,
    pub foreground_pixels: usize,
    /// Pixel counts per type, background first.
    pub type_counts: Vec<u64>,
    pub tp_weights: Vec<f32>,
    pub np_weights: Vec<f32>,
}

pub fn run_gen_targets(opts: &GenTargetsOptions) -> CliResult<GenTargetsReport> {
    let (inst, classes) = label_tile(&load(&opts.instances)?)?;
    let t = TargetMaps::generate(&inst, Some(&classes))?;
    let (h, w) = (inst.height, inst.width);
    let suffixed = |s: &str| {
        let mut p = opts.out.as_os_str().to_owned();
        p.push(s);
        PathBuf::from(p)
    };
    write_npy(&NpyArray::from_slice(&[h, w], &t.np.data)?, suffixed("_np.npy"))?;
    write_npy(&NpyArray::from_slice(&[h, w, 2], &t.hv.data)?, suffixed("_hv.npy"))?;
    write_npy(&NpyArray::from_slice(&[h, w], &t.tp.data)?, suffixed("_tp.npy"))?;

    let max_type = t.tp.data.iter().copied().max().unwrap_or(0) as usize;
    let nt = opts.num_types.unwrap_or(max_type + 1).max(max_type + 1).max(2);
    let mut type_counts = vec![0u64; nt];
    for &k in &t.tp.data {
        type_counts[k as usize] += 1;
    }
    let fg = t.np.data.iter().filter(|&&m| m != 0).count();
    let np_counts = [(h * w - fg) as u64, fg as u64];
    Ok(GenTargetsReport {
        instances: inst.count(),
        foreground_pixels: fg,
        tp_weights: compute_class_weights(&type_counts, nt)?.weights,
        np_weights: compute_class_weights(&np_counts, 2)?.weights,
        type_counts,
    })
}
