use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hoverpost_core::io::read_instances_json;
use hoverpost_core::metrics::{
    aggregate, evaluate_tile, remap_classes, ClassMapping, ClassScheme, CommonClass, EvalConfig, EvalReport,
    SchemeClasses, TilePair,
};
use hoverpost_core::{ClassTable, InstanceMap};
use rayon::prelude::*;

use crate::arrays::{label_tile, load};
use crate::error::{CliError, CliResult};

/// Class remapping applied before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Remap {
    /// Score the class ids as they are.
    #[default]
    None,
    /// Both sides use PanNuke type ids; map both to the common scheme.
    Pannuke,
    /// Ground truth uses CoNSeP type ids and predictions PanNuke type ids;
    /// map both to the common scheme.
    Consep,
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub gt_dir: PathBuf,
    pub pred_dir: PathBuf,
    pub remap: Remap,
    /// Classes `1..=n` to score; inferred from the data if absent.
    pub num_classes: Option<u32>,
    pub radius: f64,
    pub threads: usize,
}

struct Tile {
    name: String,
    gt: InstanceMap,
    gt_classes: ClassTable,
    pred: InstanceMap,
    pred_classes: ClassTable,
}

fn npy_names(dir: &Path) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|e| e == "npy") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Label tile plus classes. A sibling `<name>.json` instance document, when
/// present, overrides the classes derived from the array.
fn load_side(dir: &Path, name: &str) -> CliResult<(InstanceMap, ClassTable)> {
    let (inst, mut classes) = label_tile(&load(&dir.join(format!("{name}.npy")))?)?;
    let json = dir.join(format!("{name}.json"));
    if json.exists() {
        let doc = read_instances_json(&json)?;
        classes = doc.nuclei.iter().map(|r| (r.id, r.class_id)).collect();
    }
    Ok((inst, classes))
}

fn remapped(classes: ClassTable, scheme: ClassScheme, mapping: &ClassMapping) -> CliResult<ClassTable> {
    Ok(remap_classes(&SchemeClasses { scheme, classes }, mapping)?.classes)
}

pub fn run_evaluate(opts: &EvaluateOptions) -> CliResult<EvalReport> {
    let gt_names = npy_names(&opts.gt_dir)?;
    let pred_names = npy_names(&opts.pred_dir)?;
    if let Some(missing) = gt_names.iter().find(|n| !pred_names.contains(n)) {
        return Err(CliError::Input(format!("no prediction for tile `{missing}`")));
    }
    if let Some(extra) = pred_names.iter().find(|n| !gt_names.contains(n)) {
        return Err(CliError::Input(format!("no ground truth for tile `{extra}`")));
    }
    let mapping = ClassMapping::default();
    let schemes = match opts.remap {
        Remap::None => None,
        Remap::Pannuke => Some((ClassScheme::PanNuke, ClassScheme::PanNuke)),
        Remap::Consep => Some((ClassScheme::Consep, ClassScheme::PanNuke)),
    };
    let mut tiles = Vec::with_capacity(gt_names.len());
    for name in gt_names {
        let (gt, mut gt_classes) = load_side(&opts.gt_dir, &name)?;
        let (pred, mut pred_classes) = load_side(&opts.pred_dir, &name)?;
        if let Some((gs, ps)) = schemes {
            gt_classes = remapped(gt_classes, gs, &mapping)?;
            pred_classes = remapped(pred_classes, ps, &mapping)?;
        }
        tiles.push(Tile {
            name,
            gt,
            gt_classes,
            pred,
            pred_classes,
        });
    }

    let mut cfg = match opts.remap {
        Remap::None => {
            let observed = tiles
                .iter()
                .flat_map(|t| t.gt_classes.values().chain(t.pred_classes.values()))
                .copied()
                .max()
                .unwrap_or(1);
            let n = opts.num_classes.unwrap_or(observed).max(1);
            EvalConfig::new((1..=n).collect())
        }
        _ => {
            let mut c = EvalConfig::new(CommonClass::ALL.iter().map(|c| c.id()).collect());
            c.class_names = CommonClass::names();
            c
        }
    };
    cfg.radius = opts.radius;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    // collect keeps filename order regardless of scheduling
    let per_tile = pool.install(|| {
        tiles
            .par_iter()
            .map(|t| {
                evaluate_tile(
                    &TilePair {
                        name: &t.name,
                        gt: &t.gt,
                        gt_classes: &t.gt_classes,
                        pred: &t.pred,
                        pred_classes: &t.pred_classes,
                    },
                    &cfg,
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(aggregate(per_tile, &cfg))
}

/// Per-class entries keyed by class name for readability in summaries.
pub fn mean_line(report: &EvalReport) -> String {
    let m = &report.mean;
    let per: BTreeMap<&str, f64> = m.per_class_pq.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    format!(
        "tiles {} pq_b {:.4} pq_m {:.4} f_d {:.4} per-class pq {:?}",
        report.tiles.len(),
        m.pq_b,
        m.pq_m,
        m.f_d,
        per
    )
}
