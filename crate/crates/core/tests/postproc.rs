mod common;

use std::collections::BTreeSet;

use hoverpost_core::metrics::iou_matrix;
use hoverpost_core::postproc::{
    classify_instances, extract_records, instance_segment, postprocess_tile, sobel_energy, threshold, PostprocConfig,
};
use hoverpost_core::synth::{ideal_outputs, separated_ellipses, touching_pair, EllipseFieldConfig};
use hoverpost_core::targets::gen_hv_targets;
use hoverpost_core::{ChannelMap, ClassTable, Grid, InstanceMap, Mask, ProbTable};
use proptest::prelude::*;
use rand::Rng;

fn disk(size: usize, center: (f64, f64), radius: f64) -> InstanceMap {
    let mut m = InstanceMap::empty(size, size);
    for r in 0..size {
        for c in 0..size {
            if (r as f64 - center.0).hypot(c as f64 - center.1) <= radius {
                m.set(r, c, 1);
            }
        }
    }
    m
}

fn erode(mask: &Mask) -> Mask {
    let (h, w) = (mask.height, mask.width);
    let mut out = mask.clone();
    for r in 0..h {
        for c in 0..w {
            let inside = |rr: isize, cc: isize| {
                rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && mask.get(rr as usize, cc as usize) != 0
            };
            let (ri, ci) = (r as isize, c as isize);
            let keep = inside(ri, ci) && inside(ri - 1, ci) && inside(ri + 1, ci) && inside(ri, ci - 1) && inside(ri, ci + 1);
            out.set(r, c, u8::from(keep));
        }
    }
    out
}

/// Pixels with a 4-neighbour outside the instance (image border counts as
/// outside).
fn boundary_oracle(inst: &InstanceMap, label: u32) -> BTreeSet<[u32; 2]> {
    let (h, w) = (inst.height as isize, inst.width as isize);
    let at = |r: isize, c: isize| r >= 0 && c >= 0 && r < h && c < w && inst.get(r as usize, c as usize) == label;
    let mut out = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            if at(r, c) && !(at(r - 1, c) && at(r + 1, c) && at(r, c - 1) && at(r, c + 1)) {
                out.insert([r as u32, c as u32]);
            }
        }
    }
    out
}

fn uniform_probs(inst: &InstanceMap, p: f32) -> Grid<f32> {
    inst.foreground().map(|m| if m != 0 { p } else { 0.0 })
}

#[test]
fn flat_hv_gives_unit_energy_on_mask() {
    let inst = disk(12, (5.0, 6.0), 4.0);
    let hv = ChannelMap::from_vec(12, 12, 2, vec![0.3f32; 288]).unwrap();
    let e = sobel_energy(&hv, &inst.foreground()).unwrap();
    for (v, m) in e.data.iter().zip(&inst.foreground().data) {
        assert_eq!(*v, if *m != 0 { 1.0 } else { 0.0 });
    }
}

#[test]
fn empty_mask_gives_zero_energy() {
    let hv = gen_hv_targets(&disk(9, (4.0, 4.0), 3.0));
    let e = sobel_energy(&hv, &Grid::zeros(9, 9)).unwrap();
    assert!(e.data.iter().all(|&v| v == 0.0));
}

#[test]
fn disk_energy_peaks_inside_eroded_mask() {
    // 9-pixel-wide disk in a padded frame
    let inst = disk(13, (6.0, 6.0), 4.0);
    let mask = inst.foreground();
    let e = sobel_energy(&gen_hv_targets(&inst), &mask).unwrap();
    let max = e.data.iter().copied().fold(f32::MIN, f32::max);
    let core = erode(&mask);
    for (i, &v) in e.data.iter().enumerate() {
        if v == max {
            assert_eq!(core.data[i], 1, "maximum at rim pixel {i}");
        }
    }
    let rim: Vec<f32> = (0..169)
        .filter(|&i| mask.data[i] != 0 && core.data[i] == 0)
        .map(|i| e.data[i])
        .collect();
    assert!(rim.iter().sum::<f32>() / (rim.len() as f32) < max);
}

#[test]
fn zero_probabilities_give_no_instances() {
    let hv = ChannelMap::<f32>::zeros(20, 20, 2);
    let out = instance_segment(&Grid::<f32>::zeros(20, 20), &hv, &PostprocConfig::default()).unwrap();
    assert_eq!(out.count(), 0);
}

#[test]
fn uniform_hv_blob_is_one_instance() {
    let inst = disk(32, (15.0, 14.0), 8.0);
    let hv = ChannelMap::<f32>::zeros(32, 32, 2);
    let out = instance_segment(&uniform_probs(&inst, 0.9), &hv, &PostprocConfig::default()).unwrap();
    assert_eq!(out.labels, inst.labels);
}

#[test]
fn touching_pairs_are_split() {
    let mut rng = common::rng(11);
    let mut ok = 0;
    for _ in 0..20 {
        let tile = touching_pair(&mut rng, 64, 64, (6.0, 12.0)).unwrap();
        let o = ideal_outputs(&tile, 3, 0.95).unwrap();
        let out = instance_segment(&o.np_probs, &o.hv, &PostprocConfig::default()).unwrap();
        if out.count() != 2 {
            continue;
        }
        let t = iou_matrix(&tile.instances, &out).unwrap();
        let best = |g: u32| t.pairs.iter().filter(|(k, _)| k.0 == g).map(|(_, &v)| v).fold(0.0, f64::max);
        if best(1) >= 0.9 && best(2) >= 0.9 {
            ok += 1;
        }
    }
    assert!(ok >= 18, "{ok}/20 pairs split correctly");
}

#[test]
fn shape_mismatch_is_reported() {
    let hv = ChannelMap::<f32>::zeros(4, 5, 2);
    assert!(instance_segment(&Grid::<f32>::zeros(4, 4), &hv, &PostprocConfig::default()).is_err());
}

#[test]
fn non_finite_inputs_rejected() {
    let mut p = Grid::<f32>::zeros(4, 4);
    p.set(1, 1, f32::NAN);
    assert!(instance_segment(&p, &ChannelMap::<f32>::zeros(4, 4, 2), &PostprocConfig::default()).is_err());
}

#[test]
fn record_examples() {
    let mut inst = InstanceMap::empty(8, 8);
    inst.set(3, 4, 1);
    for (r, c) in [(1, 5), (1, 6), (2, 5), (2, 6)] {
        inst.set(r, c, 2);
    }
    let classes = ClassTable::from([(1, 1), (2, 3)]);
    let probs = ProbTable::from([(1, 0.5), (2, 0.75)]);
    let recs = extract_records(&inst, &classes, &probs).unwrap();
    assert_eq!(recs[0].centroid, [3.0, 4.0]);
    assert_eq!(recs[0].bbox, [3, 4, 3, 4]);
    assert_eq!(recs[0].contour, vec![[3, 4]]);
    assert_eq!(recs[1].centroid, [1.5, 5.5]);
    assert_eq!(recs[1].bbox, [1, 5, 2, 6]);
    assert_eq!((recs[1].class_id, recs[1].class_prob), (3, 0.75));

    let missing = extract_records(&inst, &ClassTable::from([(1, 1)]), &probs);
    assert!(missing.is_err());
}

#[test]
fn l_shape_contour_matches_boundary_scan() {
    let mut inst = InstanceMap::empty(12, 12);
    for r in 2..10 {
        for c in 2..5 {
            inst.set(r, c, 1);
        }
    }
    for r in 7..10 {
        for c in 5..10 {
            inst.set(r, c, 1);
        }
    }
    let recs = extract_records(&inst, &ClassTable::from([(1, 1)]), &ProbTable::from([(1, 1.0)])).unwrap();
    let contour = &recs[0].contour;
    let oracle = boundary_oracle(&inst, 1);
    assert_eq!(contour.len(), oracle.len());
    assert_eq!(contour.iter().copied().collect::<BTreeSet<_>>(), oracle);
    assert_eq!(contour[0], [2, 2]);
    // clockwise: the trace leaves the start eastwards along the top edge
    assert_eq!(contour[1], [2, 3]);
}

#[test]
fn ellipse_contours_cover_their_boundary() {
    let mut rng = common::rng(5);
    let tile = separated_ellipses(&mut rng, &EllipseFieldConfig::default());
    let probs: ProbTable = tile.classes.keys().map(|&l| (l, 1.0)).collect();
    let recs = extract_records(&tile.instances, &tile.classes, &probs).unwrap();
    for rec in &recs {
        rec.validate().unwrap();
        let traced: BTreeSet<[u32; 2]> = rec.contour.iter().copied().collect();
        assert_eq!(traced, boundary_oracle(&tile.instances, rec.id), "nucleus {}", rec.id);
        for w in rec.contour.windows(2) {
            let (dr, dc) = (w[0][0].abs_diff(w[1][0]), w[0][1].abs_diff(w[1][1]));
            assert!(dr <= 1 && dc <= 1 && dr + dc > 0);
        }
    }
}

#[test]
fn results_identical_across_threads() {
    let mut rng = common::rng(21);
    let tile = separated_ellipses(&mut rng, &EllipseFieldConfig::default());
    let o = ideal_outputs(&tile, 5, 0.9).unwrap();
    let cfg = PostprocConfig::default();
    let reference = postprocess_tile(&o.np_probs, &o.hv, &o.tp_probs, &cfg).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let o = o.clone();
            std::thread::spawn(move || postprocess_tile(&o.np_probs, &o.hv, &o.tp_probs, &cfg).unwrap())
        })
        .collect();
    for h in handles {
        let r = h.join().unwrap();
        assert_eq!(r.instances, reference.instances);
        assert_eq!(r.records, reference.records);
    }
}

fn noisy_tile(seed: u64) -> (Grid<f32>, ChannelMap<f32>) {
    let mut rng = common::rng(seed);
    let cfg = EllipseFieldConfig {
        height: 64,
        width: 64,
        count: (1, 8),
        semi_axes: (3.0, 9.0),
        num_classes: 1,
        ..Default::default()
    };
    let tile = separated_ellipses(&mut rng, &cfg);
    let mut o = ideal_outputs(&tile, 2, 0.8).unwrap();
    for p in o.np_probs.data.iter_mut() {
        *p = (*p + rng.random_range(-0.45f32..0.45)).clamp(0.0, 1.0);
    }
    for v in o.hv.data.iter_mut() {
        *v += rng.random_range(-0.2f32..0.2);
    }
    (o.np_probs, o.hv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_invariants(seed in any::<u64>(), thr in 0.2f32..0.8, min_size in 0usize..30) {
        let (np, hv) = noisy_tile(seed);
        let cfg = PostprocConfig { np_threshold: thr, min_size, ..Default::default() };
        let out = instance_segment(&np, &hv, &cfg).unwrap();
        prop_assert!(out.is_sequential());
        prop_assert_eq!(out.label_set(), (1..=out.count() as u32).collect::<Vec<_>>());
        let mask = threshold(&np, thr);
        for (l, m) in out.labels.iter().zip(&mask.data) {
            prop_assert!(*l == 0 || *m == 1);
        }
        for px in out.pixel_lists().values() {
            prop_assert!(px.len() >= min_size);
        }
        prop_assert_eq!(instance_segment(&np, &hv, &cfg).unwrap(), out);
    }

    #[test]
    fn raising_threshold_never_adds_foreground(seed in any::<u64>(), lo in 0.2f32..0.6, step in 0.0f32..0.3) {
        let (np, hv) = noisy_tile(seed);
        let at = |t: f32| {
            let cfg = PostprocConfig { np_threshold: t, ..Default::default() };
            instance_segment(&np, &hv, &cfg).unwrap().foreground_pixels()
        };
        prop_assert!(at(lo + step) <= at(lo));
    }

    #[test]
    fn classification_probabilities_in_range(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cfg = EllipseFieldConfig { height: 48, width: 48, count: (1, 5), semi_axes: (3.0, 7.0), ..Default::default() };
        let tile = separated_ellipses(&mut rng, &cfg);
        let c = 5;
        let mut tp = ChannelMap::<f32>::zeros(48, 48, c);
        for i in 0..48 * 48 {
            let raw: Vec<f32> = (0..c).map(|_| rng.random_range(0.01f32..1.0)).collect();
            let s: f32 = raw.iter().sum();
            for (k, v) in raw.iter().enumerate() {
                tp.data[i * c + k] = v / s;
            }
        }
        let (classes, probs) = classify_instances(&tile.instances, &tp).unwrap();
        prop_assert_eq!(classes.len(), tile.instances.count());
        for (l, &k) in &classes {
            prop_assert!(k >= 1 && (k as usize) < c);
            prop_assert!((0.0..=1.0).contains(&probs[l]));
        }
    }
}
