//! End-to-end exercise of the distillation loss: a per-pixel affine student
//! on fixed image features is fitted to a synthetic teacher by plain
//! gradient descent on the combined loss.

use hoverpost_core::loss::{combined_loss_grad, LossConfig, PredictionMaps};
use hoverpost_core::synth::{separated_ellipses, EllipseFieldConfig};
use hoverpost_core::targets::TargetMaps;
use hoverpost_core::{ChannelMap, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Type channels including background.
const TYPES: usize = 4;
/// Student outputs per pixel: NP logits, HV, TP logits.
const OUTPUTS: usize = 2 + 2 + TYPES;
const FEATURES: usize = 7;
const TEACHER_LOGIT: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct ToyDistillOptions {
    pub seed: u64,
    pub steps: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub size: usize,
}

impl Default for ToyDistillOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 500,
            alpha: 0.5,
            temperature: 3.0,
            learning_rate: 0.2,
            size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyDistillReport {
    pub seed: u64,
    pub steps: usize,
    pub alpha: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_ratio: f64,
    pub initial_student: f64,
    pub final_student: f64,
    pub initial_distill: f64,
    pub final_distill: f64,
    /// Fraction of pixels where student and teacher NP argmax agree.
    pub np_agreement: f64,
    pub tp_agreement: f64,
    /// Combined loss every 50 steps.
    pub history: Vec<f64>,
    pub pass: bool,
}

struct Scene {
    features: Vec<[f64; FEATURES]>,
    gt: TargetMaps,
    teacher: PredictionMaps<f64>,
}

fn box_blur(img: &Grid<f64>, radius: usize) -> Grid<f64> {
    let (h, w) = (img.height, img.width);
    let mut out = Grid::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(h - 1));
            let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(w - 1));
            let mut s = 0.0;
            for rr in r0..=r1 {
                for cc in c0..=c1 {
                    s += img.get(rr, cc);
                }
            }
            out.set(r, c, s / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64);
        }
    }
    out
}

fn scene(opts: &ToyDistillOptions) -> CliResult<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.size;
    let field = EllipseFieldConfig {
        height: n,
        width: n,
        count: (4, 10),
        semi_axes: (4.0, 9.0),
        num_classes: TYPES as u32 - 1,
        ..Default::default()
    };
    let tile = separated_ellipses(&mut rng, &field);
    let gt = TargetMaps::generate(&tile.instances, Some(&tile.classes))?;

    // Stained tile: bright background, nuclei darker by type, pixel noise.
    let mut image = Grid::zeros(n, n);
    for (i, v) in image.data.iter_mut().enumerate() {
        let base = match gt.tp.data[i] {
            0 => 0.85,
            k => 0.15 + 0.15 * (k - 1) as f64,
        };
        *v = base + rng.random_range(-0.04..0.04);
    }
    let fine = box_blur(&image, 1);
    let coarse = box_blur(&image, 3);
    let mut features = vec![[0.0; FEATURES]; n * n];
    for r in 0..n {
        for c in 0..n {
            let dx = coarse.get(r, (c + 1).min(n - 1)) - coarse.get(r, c.saturating_sub(1));
            let dy = coarse.get((r + 1).min(n - 1), c) - coarse.get(r.saturating_sub(1), c);
            let v = image.get(r, c);
            features[r * n + c] = [v, fine.get(r, c), coarse.get(r, c), dx, dy, v * v, 1.0];
        }
    }
    // standardize all but the constant
    for f in 0..FEATURES - 1 {
        let mean = features.iter().map(|x| x[f]).sum::<f64>() / features.len() as f64;
        let var = features.iter().map(|x| (x[f] - mean).powi(2)).sum::<f64>() / features.len() as f64;
        let sd = var.sqrt().max(1e-12);
        for x in features.iter_mut() {
            x[f] = (x[f] - mean) / sd;
        }
    }

    // Teacher: saturated logits of the true targets with fixed noise.
    let mut np = ChannelMap::zeros(n, n, 2);
    let mut hv = ChannelMap::zeros(n, n, 2);
    let mut tp = ChannelMap::zeros(n, n, TYPES);
    for i in 0..n * n {
        for k in 0..2 {
            let on = usize::from(gt.np.data[i]) == k;
            np.data[i * 2 + k] = if on { TEACHER_LOGIT } else { -TEACHER_LOGIT } + rng.random_range(-1.0..1.0);
            hv.data[i * 2 + k] = f64::from(gt.hv.data[i * 2 + k]) + rng.random_range(-0.05..0.05);
        }
        for k in 0..TYPES {
            let on = gt.tp.data[i] as usize == k;
            tp.data[i * TYPES + k] = if on { TEACHER_LOGIT } else { -TEACHER_LOGIT } + rng.random_range(-1.0..1.0);
        }
    }
    let teacher = PredictionMaps::new(np, hv, tp)?;
    Ok(Scene { features, gt, teacher })
}

/// Affine student: `out[o] = sum_f weights[o][f] * feature[f]`.
fn forward(weights: &[[f64; FEATURES]; OUTPUTS], features: &[[f64; FEATURES]], n: usize) -> CliResult<PredictionMaps<f64>> {
    let mut np = ChannelMap::zeros(n, n, 2);
    let mut hv = ChannelMap::zeros(n, n, 2);
    let mut tp = ChannelMap::zeros(n, n, TYPES);
    for (i, x) in features.iter().enumerate() {
        let out = |o: usize| weights[o].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..2 {
            np.data[i * 2 + k] = out(k);
            hv.data[i * 2 + k] = out(2 + k);
        }
        for k in 0..TYPES {
            tp.data[i * TYPES + k] = out(4 + k);
        }
    }
    Ok(PredictionMaps::new(np, hv, tp)?)
}

fn agreement(a: &ChannelMap<f64>, b: &ChannelMap<f64>) -> f64 {
    let (x, y) = (a.argmax(), b.argmax());
    x.data.iter().zip(&y.data).filter(|(p, q)| p == q).count() as f64 / x.data.len() as f64
}

pub fn run_toy_distill(opts: &ToyDistillOptions) -> CliResult<ToyDistillReport> {
    if opts.size < 16 || !(0.0..=1.0).contains(&opts.alpha) || !(opts.temperature.is_finite() && opts.temperature > 0.0) {
        return Err(CliError::Input("toy-distill needs size >= 16, alpha in [0, 1] and T > 0".into()));
    }
    let s = scene(opts)?;
    let n = opts.size;
    let mut cfg = LossConfig::new(TYPES);
    cfg.alpha = opts.alpha;
    cfg.temperature = opts.temperature;

    let mut weights = [[0.0; FEATURES]; OUTPUTS];
    let mut history = Vec::new();
    let mut first = None;
    let mut last = None;
    for step in 0..=opts.steps {
        let x = forward(&weights, &s.features, n)?;
        let (loss, grad) = combined_loss_grad(&x, &s.gt, &s.teacher, &cfg)?;
        if step % 50 == 0 {
            history.push(loss.combined);
        }
        first.get_or_insert(loss);
        if step == opts.steps {
            last = Some((loss, x));
            break;
        }
        let mut dw = [[0.0; FEATURES]; OUTPUTS];
        for (i, feat) in s.features.iter().enumerate() {
            let mut g = [0.0; OUTPUTS];
            g[..2].copy_from_slice(&grad.d_np_logits.data[i * 2..i * 2 + 2]);
            g[2..4].copy_from_slice(&grad.d_hv.data[i * 2..i * 2 + 2]);
            g[4..].copy_from_slice(&grad.d_tp_logits.data[i * TYPES..(i + 1) * TYPES]);
            for (row, go) in dw.iter_mut().zip(g) {
                for (d, f) in row.iter_mut().zip(feat) {
                    *d += go * f;
                }
            }
        }
        for (row, drow) in weights.iter_mut().zip(&dw) {
            for (w, d) in row.iter_mut().zip(drow) {
                *w -= opts.learning_rate * d;
            }
        }
    }
    let first = first.expect("at least one step");
    let (last, x) = last.expect("loop ends on the final step");
    let ratio = last.combined / first.combined;
    let np_agreement = agreement(&x.np_logits, &s.teacher.np_logits);
    Ok(ToyDistillReport {
        seed: opts.seed,
        steps: opts.steps,
        alpha: opts.alpha,
        temperature: opts.temperature,
        learning_rate: opts.learning_rate,
        initial_loss: first.combined,
        final_loss: last.combined,
        loss_ratio: ratio,
        initial_student: first.student_total,
        final_student: last.student_total,
        initial_distill: first.distill_total,
        final_distill: last.distill_total,
        np_agreement,
        tp_agreement: agreement(&x.tp_logits, &s.teacher.tp_logits),
        history,
        pass: ratio <= 0.5 && np_agreement >= 0.9,
    })
}
