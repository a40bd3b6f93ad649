use crate::error::{Error, Result};

/// Default centroid pairing radius in pixels.
pub const DEFAULT_RADIUS: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionMatch {
    /// `(gt_index, pred_index, distance)` in the order they were accepted.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl DetectionMatch {
    pub fn f1(&self) -> f64 {
        f1_from_counts(self.pairs.len(), self.unmatched_pred.len(), self.unmatched_gt.len())
    }
}

/// `2TP / (2TP + FP + FN)`; 1 when there is nothing to detect on either side.
pub fn f1_from_counts(tp: usize, fp: usize, fneg: usize) -> f64 {
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Greedy centroid pairing: candidate pairs within `radius` are taken in
/// ascending distance order (ties by gt then pred index), each point at most
/// once.
pub fn match_centroids(gt: &[[f64; 2]], pred: &[[f64; 2]], radius: f64) -> Result<DetectionMatch> {
    if gt.iter().chain(pred).flatten().any(|v| !v.is_finite()) || radius.is_nan() || radius < 0.0 {
        return Err(Error::NonFinite("centroids"));
    }
    // Predictions sorted by row so each gt only scans a row window.
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[a][0].total_cmp(&pred[b][0]).then(a.cmp(&b)));
    let rows: Vec<f64> = order.iter().map(|&i| pred[i][0]).collect();
    let mut cand = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        let lo = rows.partition_point(|&r| r < g[0] - radius);
        for &pi in &order[lo..] {
            let p = pred[pi];
            if p[0] > g[0] + radius {
                break;
            }
            let d = (p[0] - g[0]).hypot(p[1] - g[1]);
            if d <= radius {
                cand.push((d, gi, pi));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (d, gi, pi) in cand {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            pairs.push((gi, pi, d));
        }
    }
    Ok(DetectionMatch {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&i| !pred_used[i]).collect(),
    })
}

pub fn detection_f1(gt: &[[f64; 2]], pred: &[[f64; 2]], radius: f64) -> Result<(f64, DetectionMatch)> {
    let m = match_centroids(gt, pred, radius)?;
    Ok((m.f1(), m))
}

/// Weights of the error terms in the per-class F-score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScoreCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for FScoreCoefficients {
    fn default() -> Self {
        Self {
            a0: 2.0,
            a1: 2.0,
            a2: 1.0,
            a3: 1.0,
        }
    }
}

impl FScoreCoefficients {
    pub fn new(a0: f64, a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let all = [a0, a1, a2, a3];
        if all.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || all.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "F-score coefficients must be non-negative and not all zero, got {all:?}"
            )));
        }
        Ok(Self { a0, a1, a2, a3 })
    }
}

/// Per-class detection/classification tallies. They add across tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    /// Paired and labelled `c` on both sides.
    pub tp: u64,
    /// Paired, predicted `c`, gt another class.
    pub fp_class: u64,
    /// Paired, gt `c`, predicted another class.
    pub fn_class: u64,
    /// Unpaired predictions of class `c`.
    pub fp_det: u64,
    /// Unpaired gt instances of class `c`.
    pub fn_det: u64,
}

impl ClassCounts {
    pub fn tally(det: &DetectionMatch, gt_classes: &[u32], pred_classes: &[u32], class: u32) -> Result<Self> {
        if class == 0 {
            return Err(Error::UnknownClass { class });
        }
        if gt_classes.len() != det.pairs.len() + det.unmatched_gt.len()
            || pred_classes.len() != det.pairs.len() + det.unmatched_pred.len()
        {
            return Err(Error::InvalidArgument(
                "class lists do not cover the matched centroids".into(),
            ));
        }
        let mut k = ClassCounts::default();
        for &(g, p, _) in &det.pairs {
            match (gt_classes[g] == class, pred_classes[p] == class) {
                (true, true) => k.tp += 1,
                (false, true) => k.fp_class += 1,
                (true, false) => k.fn_class += 1,
                (false, false) => {}
            }
        }
        k.fp_det = det.unmatched_pred.iter().filter(|&&p| pred_classes[p] == class).count() as u64;
        k.fn_det = det.unmatched_gt.iter().filter(|&&g| gt_classes[g] == class).count() as u64;
        Ok(k)
    }

    pub fn add(&mut self, o: &ClassCounts) {
        self.tp += o.tp;
        self.fp_class += o.fp_class;
        self.fn_class += o.fn_class;
        self.fp_det += o.fp_det;
        self.fn_det += o.fn_det;
    }

    /// `None` when the class never occurs on either side.
    pub fn f_score(&self, a: &FScoreCoefficients) -> Option<f64> {
        let tp2 = 2.0 * self.tp as f64;
        let den = tp2
            + a.a0 * self.fp_class as f64
            + a.a1 * self.fn_class as f64
            + a.a2 * self.fp_det as f64
            + a.a3 * self.fn_det as f64;
        let occurs = self.tp + self.fp_class + self.fn_class + self.fp_det + self.fn_det > 0;
        occurs.then(|| if den > 0.0 { tp2 / den } else { 0.0 })
    }
}

/// Per-class F-score of a centroid matching; `None` if class `c` occurs on
/// neither side.
pub fn classification_f1(
    det: &DetectionMatch,
    gt_classes: &[u32],
    pred_classes: &[u32],
    class: u32,
    coeff: &FScoreCoefficients,
) -> Result<Option<f64>> {
    Ok(ClassCounts::tally(det, gt_classes, pred_classes, class)?.f_score(coeff))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets() {
        let pts = [[1.0, 2.0], [30.0, 40.0], [50.5, 3.0]];
        let (f1, m) = detection_f1(&pts, &pts, DEFAULT_RADIUS).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(m.pairs.len(), 3);
    }

    #[test]
    fn all_far_apart() {
        let (f1, _) = detection_f1(&[[0.0, 0.0]], &[[0.0, 13.0]], 12.0).unwrap();
        assert_eq!(f1, 0.0);
    }

    #[test]
    fn one_pair_two_strays() {
        let gt = [[10.0, 10.0], [100.0, 100.0]];
        let pred = [[13.0, 14.0], [200.0, 0.0]];
        let (f1, m) = detection_f1(&gt, &pred, 12.0).unwrap();
        assert_eq!(m.pairs, vec![(0, 0, 5.0)]);
        assert_eq!(f1, 0.5);
    }

    #[test]
    fn greedy_prefers_closest() {
        let gt = [[0.0, 0.0], [0.0, 6.0]];
        let pred = [[0.0, 4.0]];
        let (_, m) = detection_f1(&gt, &pred, 12.0).unwrap();
        assert_eq!(m.pairs, vec![(1, 0, 2.0)]);
        assert_eq!(m.unmatched_gt, vec![0]);
    }

    #[test]
    fn radius_is_inclusive() {
        let (f1, _) = detection_f1(&[[0.0, 0.0]], &[[0.0, 12.0]], 12.0).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn both_empty() {
        assert_eq!(detection_f1(&[], &[], 12.0).unwrap().0, 1.0);
    }

    #[test]
    fn class_f_formula() {
        let k = ClassCounts {
            tp: 2,
            fp_class: 1,
            fn_det: 1,
            ..Default::default()
        };
        let f = k.f_score(&FScoreCoefficients::default()).unwrap();
        assert!((f - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn misclassified_single_detection() {
        let det = DetectionMatch {
            pairs: vec![(0, 0, 1.0)],
            ..Default::default()
        };
        let f = classification_f1(&det, &[1], &[2], 1, &FScoreCoefficients::default()).unwrap();
        assert_eq!(f, Some(0.0));
        let f = classification_f1(&det, &[1], &[2], 3, &FScoreCoefficients::default()).unwrap();
        assert_eq!(f, None);
        assert!(classification_f1(&det, &[1], &[2], 0, &FScoreCoefficients::default()).is_err());
    }

    #[test]
    fn coefficients_validated() {
        assert!(FScoreCoefficients::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(FScoreCoefficients::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(FScoreCoefficients::new(1.0, 0.0, 0.0, 0.0).is_ok());
    }
}
