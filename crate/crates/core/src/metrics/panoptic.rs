use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::maps::{ClassTable, InstanceMap};

/// Sparse IoU table over overlapping instance pairs, together with the full
/// label sets of both maps so that non-overlapping instances are not lost.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IouTable {
    pub gt_labels: Vec<u32>,
    pub pred_labels: Vec<u32>,
    pub pairs: BTreeMap<(u32, u32), f64>,
}

impl IouTable {
    pub fn get(&self, gt: u32, pred: u32) -> f64 {
        self.pairs.get(&(gt, pred)).copied().unwrap_or(0.0)
    }

    /// Keeps only the instances accepted by the two predicates.
    pub fn restricted(&self, keep_gt: impl Fn(u32) -> bool, keep_pred: impl Fn(u32) -> bool) -> IouTable {
        IouTable {
            gt_labels: self.gt_labels.iter().copied().filter(|&l| keep_gt(l)).collect(),
            pred_labels: self.pred_labels.iter().copied().filter(|&l| keep_pred(l)).collect(),
            pairs: self
                .pairs
                .iter()
                .filter(|(&(g, p), _)| keep_gt(g) && keep_pred(p))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }
}

pub fn iou_matrix(gt: &InstanceMap, pred: &InstanceMap) -> Result<IouTable> {
    if gt.shape() != pred.shape() {
        return Err(Error::shape(gt.shape(), pred.shape()));
    }
    let mut gt_area: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pred_area: BTreeMap<u32, u64> = BTreeMap::new();
    let mut inter: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        if g != 0 {
            *gt_area.entry(g).or_default() += 1;
        }
        if p != 0 {
            *pred_area.entry(p).or_default() += 1;
        }
        if g != 0 && p != 0 {
            *inter.entry((g, p)).or_default() += 1;
        }
    }
    let pairs = inter
        .into_iter()
        .map(|((g, p), i)| {
            let union = gt_area[&g] + pred_area[&p] - i;
            ((g, p), i as f64 / union as f64)
        })
        .collect();
    Ok(IouTable {
        gt_labels: gt_area.into_keys().collect(),
        pred_labels: pred_area.into_keys().collect(),
        pairs,
    })
}

/// IoU above which a pair counts as a match.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    /// `(gt_label, pred_label, iou)`, sorted by gt label.
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

/// Pairs every gt/pred couple with IoU strictly above one half. Such pairs
/// never share a label, so no assignment step is needed.
pub fn match_instances(iou: &IouTable) -> MatchSet {
    let pairs: Vec<_> = iou
        .pairs
        .iter()
        .filter(|(_, &v)| v > MATCH_IOU)
        .map(|(&(g, p), &v)| (g, p, v))
        .collect();
    let used_gt: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    let used_pred: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    MatchSet {
        unmatched_gt: iou.gt_labels.iter().copied().filter(|l| !used_gt.contains(l)).collect(),
        unmatched_pred: iou
            .pred_labels
            .iter()
            .copied()
            .filter(|l| !used_pred.contains(l))
            .collect(),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanopticScores {
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl PanopticScores {
    /// Scores of a match set. `empty_value` is reported when both sides are
    /// empty.
    pub fn from_matches(m: &MatchSet, empty_value: f64) -> Self {
        let (tp, fp, fneg) = (m.pairs.len(), m.unmatched_pred.len(), m.unmatched_gt.len());
        if tp + fp + fneg == 0 {
            return PanopticScores {
                dq: empty_value,
                sq: empty_value,
                pq: empty_value,
                true_pos: 0,
                false_pos: 0,
                false_neg: 0,
            };
        }
        let dq = tp as f64 / (tp as f64 + 0.5 * fp as f64 + 0.5 * fneg as f64);
        let sq = if tp == 0 {
            0.0
        } else {
            m.pairs.iter().map(|p| p.2).sum::<f64>() / tp as f64
        };
        PanopticScores {
            dq,
            sq,
            pq: dq * sq,
            true_pos: tp,
            false_pos: fp,
            false_neg: fneg,
        }
    }
}

/// Binary panoptic quality with the empty-versus-empty tile scoring 1.
pub fn panoptic_quality(gt: &InstanceMap, pred: &InstanceMap) -> Result<PanopticScores> {
    Ok(PanopticScores::from_matches(&match_instances(&iou_matrix(gt, pred)?), 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassScores {
    /// `None` for classes absent from both maps.
    pub per_class: BTreeMap<u32, Option<PanopticScores>>,
    pub mpq: f64,
}

fn class_of(classes: &ClassTable, label: u32, valid: &[u32]) -> Result<u32> {
    let c = *classes.get(&label).ok_or(Error::MissingClass { label })?;
    if !valid.contains(&c) {
        return Err(Error::UnknownClass { class: c });
    }
    Ok(c)
}

/// Per-class panoptic quality over `class_ids`.
///
/// Restricting both maps to one class leaves the IoU of every surviving pair
/// unchanged, so the class tables are applied to a single shared IoU table.
/// With `exclude_absent`, classes absent from both sides are left out of the
/// mean; a tile where every class is absent scores `empty_value`.
pub fn multiclass_pq_from_table(
    iou: &IouTable,
    gt_classes: &ClassTable,
    pred_classes: &ClassTable,
    class_ids: &[u32],
    empty_value: f64,
    exclude_absent: bool,
) -> Result<MulticlassScores> {
    let gt_c: BTreeMap<u32, u32> = iou
        .gt_labels
        .iter()
        .map(|&l| Ok((l, class_of(gt_classes, l, class_ids)?)))
        .collect::<Result<_>>()?;
    let pred_c: BTreeMap<u32, u32> = iou
        .pred_labels
        .iter()
        .map(|&l| Ok((l, class_of(pred_classes, l, class_ids)?)))
        .collect::<Result<_>>()?;
    let mut per_class = BTreeMap::new();
    let (mut sum, mut n) = (0.0, 0usize);
    for &c in class_ids {
        let sub = iou.restricted(|g| gt_c[&g] == c, |p| pred_c[&p] == c);
        let absent = sub.gt_labels.is_empty() && sub.pred_labels.is_empty();
        let scores = PanopticScores::from_matches(&match_instances(&sub), empty_value);
        if absent && exclude_absent {
            per_class.insert(c, None);
            continue;
        }
        sum += scores.pq;
        n += 1;
        per_class.insert(c, Some(scores));
    }
    let mpq = if n == 0 { empty_value } else { sum / n as f64 };
    Ok(MulticlassScores { per_class, mpq })
}

pub fn multiclass_pq(
    gt: &InstanceMap,
    gt_classes: &ClassTable,
    pred: &InstanceMap,
    pred_classes: &ClassTable,
    class_ids: &[u32],
) -> Result<MulticlassScores> {
    multiclass_pq_from_table(&iou_matrix(gt, pred)?, gt_classes, pred_classes, class_ids, 1.0, true)
}
