use std::path::{Path, PathBuf};

use hoverpost_core::io::{write_instances_json, write_npy, write_overlay_png, NpyArray, TileImage};
use hoverpost_core::postproc::{postprocess_tile, PostprocConfig, TileResult};
use hoverpost_core::Error;

use crate::arrays::{load, np_probabilities, tp_probabilities};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct PostprocessOptions {
    pub np: PathBuf,
    pub hv: PathBuf,
    pub tp: PathBuf,
    pub tp_are_probs: bool,
    /// Output prefix; `<out>.npy` and `<out>.json` are written.
    pub out: PathBuf,
    pub overlay: Option<PathBuf>,
    /// `H×W×3` RGB tile for the overlay; the NP map is drawn in grey if absent.
    pub image: Option<PathBuf>,
    pub config: PostprocConfig,
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_image(path: &Path, h: usize, w: usize) -> CliResult<TileImage> {
    let arr = load(path)?;
    if arr.shape != [h, w, 3] {
        return Err(Error::ShapeMismatch {
            left: format!("image {:?}", arr.shape),
            right: format!("instances {:?}", [h, w]),
        }
        .into());
    }
    let vals = arr.to_f64_vec();
    // float images in [0, 1] are rescaled
    let scale = if vals.iter().all(|&v| (0.0..=1.0).contains(&v)) && arr.dtype != hoverpost_core::io::DType::U8 {
        255.0
    } else {
        1.0
    };
    let rgb = vals.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    Ok(TileImage::new(h, w, rgb)?)
}

pub fn run_postprocess(opts: &PostprocessOptions) -> CliResult<TileResult> {
    let np = np_probabilities(&load(&opts.np)?)?;
    let hv_arr = load(&opts.hv)?;
    let tp = tp_probabilities(&load(&opts.tp)?, opts.tp_are_probs)?;
    if hv_arr.shape != [np.height, np.width, 2] {
        return Err(Error::ShapeMismatch {
            left: format!("NP {:?}", [np.height, np.width]),
            right: format!("HV {:?}", hv_arr.shape),
        }
        .into());
    }
    if [tp.height, tp.width] != [np.height, np.width] {
        return Err(Error::ShapeMismatch {
            left: format!("NP {:?}", [np.height, np.width]),
            right: format!("TP {:?}", tp.shape()),
        }
        .into());
    }
    let hv = crate::arrays::channel_map(&hv_arr, "HV map")?;
    let result = postprocess_tile(&np, &hv, &tp, &opts.config)?;

    let inst = &result.instances;
    let arr = NpyArray::from_slice(&[inst.height, inst.width], &inst.labels)?;
    write_npy(&arr, with_ext(&opts.out, "npy"))?;
    write_instances_json(&result.records, with_ext(&opts.out, "json"))?;
    if let Some(path) = &opts.overlay {
        let image = match &opts.image {
            Some(p) => load_image(p, inst.height, inst.width)?,
            None => {
                let rgb = np
                    .data
                    .iter()
                    .flat_map(|&p| {
                        let g = (255.0 - 200.0 * p.clamp(0.0, 1.0)) as u8;
                        [g, g, g]
                    })
                    .collect();
                TileImage::new(inst.height, inst.width, rgb)?
            }
        };
        write_overlay_png(&image, inst, &result.classes, path)?;
    }
    Ok(result)
}

/// Printed summary, kept free of paths so it is reproducible.
pub fn summary(result: &TileResult) -> CliResult<String> {
    let counts = result.classes.values().fold(std::collections::BTreeMap::new(), |mut m, &c| {
        *m.entry(c.to_string()).or_insert(0usize) += 1;
        m
    });
    let v = serde_json::json!({
        "instances": result.records.len(),
        "per_class": counts,
        "shape": [result.instances.height, result.instances.width],
    });
    serde_json::to_string(&v).map_err(|e| CliError::Core(e.into()))
}
