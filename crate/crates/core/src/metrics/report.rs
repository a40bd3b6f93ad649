use std::collections::BTreeMap;

use serde::Serialize;

use super::detection::{f1_from_counts, match_centroids, ClassCounts, FScoreCoefficients, DEFAULT_RADIUS};
use super::panoptic::{iou_matrix, match_instances, multiclass_pq_from_table, PanopticScores};
use crate::error::{Error, Result};
use crate::maps::{ClassTable, InstanceMap};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Classes scored by the multi-class metrics.
    pub class_ids: Vec<u32>,
    /// Report keys for the per-class entries; ids are used when absent.
    pub class_names: BTreeMap<u32, String>,
    pub radius: f64,
    pub coefficients: FScoreCoefficients,
    /// Score of a comparison with nothing on either side.
    pub empty_value: f64,
    /// Leave classes absent from both sides of a tile out of its mPQ.
    pub exclude_absent: bool,
}

impl EvalConfig {
    pub fn new(class_ids: Vec<u32>) -> Self {
        Self {
            class_ids,
            class_names: BTreeMap::new(),
            radius: DEFAULT_RADIUS,
            coefficients: FScoreCoefficients::default(),
            empty_value: 1.0,
            exclude_absent: true,
        }
    }

    fn key(&self, class: u32) -> String {
        self.class_names
            .get(&class)
            .cloned()
            .unwrap_or_else(|| class.to_string())
    }
}

/// One gt/prediction tile pair.
#[derive(Debug, Clone, Copy)]
pub struct TilePair<'a> {
    pub name: &'a str,
    pub gt: &'a InstanceMap,
    pub gt_classes: &'a ClassTable,
    pub pred: &'a InstanceMap,
    pub pred_classes: &'a ClassTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileMetrics {
    pub name: String,
    pub pq_b: f64,
    pub pq_m: f64,
    pub per_class_pq: BTreeMap<String, f64>,
    pub f_d: f64,
    pub per_class_f: BTreeMap<String, f64>,
    #[serde(skip)]
    pub binary: PanopticScores,
    #[serde(skip)]
    pub detection_counts: [usize; 3],
    #[serde(skip)]
    pub class_counts: BTreeMap<u32, ClassCounts>,
    #[serde(skip)]
    pub class_pq: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub pq_b: f64,
    pub pq_m: f64,
    pub per_class_pq: BTreeMap<String, f64>,
    pub f_d: f64,
    pub per_class_f: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tiles: Vec<TileMetrics>,
    pub mean: MeanMetrics,
}

impl EvalReport {
    /// Pretty-printed JSON with keys sorted at every level.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self)?)?;
        s.push('\n');
        Ok(s)
    }
}

/// Centroids `[row, col]` and classes of every instance, ascending label.
fn centroids(inst: &InstanceMap, classes: &ClassTable) -> Result<(Vec<[f64; 2]>, Vec<u32>)> {
    let w = inst.width;
    let mut acc: BTreeMap<u32, (f64, f64, f64)> = BTreeMap::new();
    for (i, &l) in inst.labels.iter().enumerate() {
        if l != 0 {
            let e = acc.entry(l).or_default();
            e.0 += (i / w) as f64;
            e.1 += (i % w) as f64;
            e.2 += 1.0;
        }
    }
    let mut pts = Vec::with_capacity(acc.len());
    let mut cls = Vec::with_capacity(acc.len());
    for (label, (r, c, n)) in acc {
        pts.push([r / n, c / n]);
        cls.push(*classes.get(&label).ok_or(Error::MissingClass { label })?);
    }
    Ok((pts, cls))
}

pub fn evaluate_tile(t: &TilePair<'_>, cfg: &EvalConfig) -> Result<TileMetrics> {
    let iou = iou_matrix(t.gt, t.pred)?;
    let binary = PanopticScores::from_matches(&match_instances(&iou), cfg.empty_value);
    let multi = multiclass_pq_from_table(
        &iou,
        t.gt_classes,
        t.pred_classes,
        &cfg.class_ids,
        cfg.empty_value,
        cfg.exclude_absent,
    )?;
    let class_pq: BTreeMap<u32, f64> = multi
        .per_class
        .iter()
        .filter_map(|(&c, s)| s.map(|s| (c, s.pq)))
        .collect();

    let (gt_pts, gt_cls) = centroids(t.gt, t.gt_classes)?;
    let (pred_pts, pred_cls) = centroids(t.pred, t.pred_classes)?;
    let det = match_centroids(&gt_pts, &pred_pts, cfg.radius)?;
    let detection_counts = [det.pairs.len(), det.unmatched_pred.len(), det.unmatched_gt.len()];
    let mut class_counts = BTreeMap::new();
    for &c in &cfg.class_ids {
        class_counts.insert(c, ClassCounts::tally(&det, &gt_cls, &pred_cls, c)?);
    }
    let per_class_f = class_counts
        .iter()
        .filter_map(|(&c, k)| k.f_score(&cfg.coefficients).map(|f| (cfg.key(c), f)))
        .collect();
    Ok(TileMetrics {
        name: t.name.to_string(),
        pq_b: binary.pq,
        pq_m: multi.mpq,
        per_class_pq: class_pq.iter().map(|(&c, &v)| (cfg.key(c), v)).collect(),
        f_d: det.f1(),
        per_class_f,
        binary,
        detection_counts,
        class_counts,
        class_pq,
    })
}

/// Aggregates per-tile metrics. Panoptic scores are averaged over tiles
/// (per-class over the tiles where the class occurs); F-scores are computed
/// from counts pooled over all tiles.
pub fn aggregate(tiles: Vec<TileMetrics>, cfg: &EvalConfig) -> EvalReport {
    let n = tiles.len().max(1) as f64;
    let pq_b = tiles.iter().map(|t| t.pq_b).sum::<f64>() / n;
    let pq_m = tiles.iter().map(|t| t.pq_m).sum::<f64>() / n;
    let mut per_class_pq = BTreeMap::new();
    let mut per_class_f = BTreeMap::new();
    for &c in &cfg.class_ids {
        let vals: Vec<f64> = tiles.iter().filter_map(|t| t.class_pq.get(&c).copied()).collect();
        if !vals.is_empty() {
            per_class_pq.insert(cfg.key(c), vals.iter().sum::<f64>() / vals.len() as f64);
        }
        let mut k = ClassCounts::default();
        for t in &tiles {
            if let Some(tk) = t.class_counts.get(&c) {
                k.add(tk);
            }
        }
        if let Some(f) = k.f_score(&cfg.coefficients) {
            per_class_f.insert(cfg.key(c), f);
        }
    }
    let mut det = [0usize; 3];
    for t in &tiles {
        for (d, x) in det.iter_mut().zip(t.detection_counts) {
            *d += x;
        }
    }
    let f_d = if tiles.is_empty() {
        cfg.empty_value
    } else {
        f1_from_counts(det[0], det[1], det[2])
    };
    EvalReport {
        mean: MeanMetrics {
            pq_b: if tiles.is_empty() { cfg.empty_value } else { pq_b },
            pq_m: if tiles.is_empty() { cfg.empty_value } else { pq_m },
            per_class_pq,
            f_d,
            per_class_f,
        },
        tiles,
    }
}

pub fn evaluate_dataset(tiles: &[TilePair<'_>], cfg: &EvalConfig) -> Result<EvalReport> {
    let per_tile = tiles
        .iter()
        .map(|t| evaluate_tile(t, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(per_tile, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, at: &[(u32, usize, usize, usize)]) -> InstanceMap {
        let mut m = InstanceMap::empty(h, w);
        for &(l, r0, c0, s) in at {
            for r in r0..r0 + s {
                for c in c0..c0 + s {
                    m.set(r, c, l);
                }
            }
        }
        m
    }

    #[test]
    fn perfect_tile() {
        let m = square(32, 32, &[(1, 2, 2, 4), (2, 20, 20, 5)]);
        let cls = ClassTable::from([(1, 1), (2, 3)]);
        let cfg = EvalConfig::new(vec![1, 2, 3, 4]);
        let pair = TilePair {
            name: "a",
            gt: &m,
            gt_classes: &cls,
            pred: &m,
            pred_classes: &cls,
        };
        let r = evaluate_dataset(&[pair], &cfg).unwrap();
        let mean = &r.mean;
        assert_eq!((mean.pq_b, mean.pq_m, mean.f_d), (1.0, 1.0, 1.0));
        assert!(mean.per_class_pq.values().chain(mean.per_class_f.values()).all(|&v| v == 1.0));
        assert_eq!(mean.per_class_pq.len(), 2);

        let twice = evaluate_dataset(&[pair, pair], &cfg).unwrap();
        assert_eq!(twice.mean, r.mean);
    }

    #[test]
    fn two_tile_mean() {
        let m = square(16, 16, &[(1, 2, 2, 4)]);
        let e = InstanceMap::empty(16, 16);
        let cls = ClassTable::from([(1, 1)]);
        let none = ClassTable::new();
        let cfg = EvalConfig::new(vec![1]);
        let tiles = [
            TilePair {
                name: "good",
                gt: &m,
                gt_classes: &cls,
                pred: &m,
                pred_classes: &cls,
            },
            TilePair {
                name: "bad",
                gt: &m,
                gt_classes: &cls,
                pred: &e,
                pred_classes: &none,
            },
        ];
        let r = evaluate_dataset(&tiles, &cfg).unwrap();
        assert_eq!(r.mean.pq_b, 0.5);
        assert_eq!(r.tiles[1].pq_b, 0.0);
    }

    #[test]
    fn json_keys_sorted() {
        let m = square(8, 8, &[(1, 0, 0, 3)]);
        let cls = ClassTable::from([(1, 2)]);
        let mut cfg = EvalConfig::new(vec![1, 2]);
        cfg.class_names = BTreeMap::from([(1, "zeta".into()), (2, "alpha".into())]);
        let pair = TilePair {
            name: "t",
            gt: &m,
            gt_classes: &cls,
            pred: &m,
            pred_classes: &cls,
        };
        let json = evaluate_dataset(&[pair], &cfg).unwrap().to_json().unwrap();
        let keys = ["\"mean\"", "\"f_d\"", "\"per_class_f\"", "\"alpha\"", "\"per_class_pq\"", "\"pq_b\"", "\"pq_m\""];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        assert!(json.find("\"mean\"").unwrap() < json.find("\"tiles\"").unwrap());
    }
}
