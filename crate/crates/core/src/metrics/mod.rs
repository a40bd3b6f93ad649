//! Panoptic quality, centroid detection and classification F-scores, class
//! remapping between dataset taxonomies, and dataset-level reports.

mod classes;
mod detection;
mod panoptic;
mod report;

pub use classes::{remap_classes, ClassMapping, ClassScheme, CommonClass, SchemeClasses};
pub use detection::{
    classification_f1, detection_f1, f1_from_counts, match_centroids, ClassCounts, DetectionMatch,
    FScoreCoefficients, DEFAULT_RADIUS,
};
pub use panoptic::{
    iou_matrix, match_instances, multiclass_pq, multiclass_pq_from_table, panoptic_quality, IouTable,
    MatchSet, MulticlassScores, PanopticScores, MATCH_IOU,
};
pub use report::{aggregate, evaluate_dataset, evaluate_tile, EvalConfig, EvalReport, MeanMetrics, TileMetrics, TilePair};
