use hoverpost_core::loss::{combined_loss, combined_loss_grad, DistillTarget, LossConfig, PredictionMaps};
use hoverpost_core::targets::{ClassWeights, TargetMaps};
use hoverpost_core::{ChannelMap, ClassTable, InstanceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct LossCheckOptions {
    pub seed: u64,
    /// Tile sizes `(height, width)`; fixtures cycle through them.
    pub sizes: Vec<(usize, usize)>,
    pub fixtures: usize,
    /// Type channels including background.
    pub classes: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Scales the analytic gradient by 1.01 to exercise the failure path.
    pub corrupt_gradient: bool,
}

impl Default for LossCheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: vec![(8, 8)],
            fixtures: 20,
            classes: 5,
            step: 1e-4,
            tolerance: 1e-4,
            corrupt_gradient: false,
        }
    }
}

/// Worst relative error per head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct HeadErrors {
    pub np: f64,
    pub hv: f64,
    pub tp: f64,
}

impl HeadErrors {
    pub fn max(&self) -> f64 {
        self.np.max(self.hv).max(self.tp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheckReport {
    pub fixtures: usize,
    pub step: f64,
    pub tolerance: f64,
    pub max_relative_error: HeadErrors,
    pub pass: bool,
}

pub struct LossFixture {
    pub x: PredictionMaps<f64>,
    pub gt: TargetMaps,
    pub teacher: PredictionMaps<f64>,
    pub cfg: LossConfig,
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, scale: f64) -> ChannelMap<f64> {
    let data = (0..h * w * c).map(|_| rng.random_range(-scale..scale)).collect();
    ChannelMap::from_vec(h, w, c, data).expect("sized")
}

fn random_outputs(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> PredictionMaps<f64> {
    PredictionMaps::new(
        random_map(rng, h, w, 2, 2.0),
        random_map(rng, h, w, 2, 1.0),
        random_map(rng, h, w, c, 2.0),
    )
    .expect("valid shapes")
}

/// A random fixture: ground truth from a few random rectangles, random
/// student and teacher outputs, random class weights, temperature cycling
/// through 1, 3, 5 and both teacher-target modes.
pub fn loss_fixture(rng: &mut ChaCha8Rng, index: usize, h: usize, w: usize, classes: usize) -> CliResult<LossFixture> {
    let mut inst = InstanceMap::empty(h, w);
    let mut table = ClassTable::new();
    let n = rng.random_range(1..=3u32);
    for l in 1..=n {
        let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (rh, rw) = (rng.random_range(2..=h.max(2) / 2 + 1), rng.random_range(2..=w.max(2) / 2 + 1));
        for r in r0..(r0 + rh).min(h) {
            for c in c0..(c0 + rw).min(w) {
                inst.set(r, c, l);
            }
        }
        table.insert(l, rng.random_range(1..classes as u32));
    }
    let gt = TargetMaps::generate(&inst, Some(&table))?;
    let x = random_outputs(rng, h, w, classes);
    let teacher = random_outputs(rng, h, w, classes);
    let mut cfg = LossConfig::new(classes);
    cfg.alpha = rng.random_range(0.0..1.0);
    cfg.temperature = [1.0, 3.0, 5.0][index % 3];
    cfg.distill_target = if index.is_multiple_of(2) { DistillTarget::Hard } else { DistillTarget::Soft };
    cfg.np_weights = ClassWeights::new((0..2).map(|_| rng.random_range(0.3f32..2.0)).collect())?;
    cfg.tp_weights = ClassWeights::new((0..classes).map(|_| rng.random_range(0.3f32..2.0)).collect())?;
    Ok(LossFixture { x, gt, teacher, cfg })
}

fn entry(m: &mut PredictionMaps<f64>, head: usize, i: usize) -> &mut f64 {
    match head {
        0 => &mut m.np_logits.data[i],
        1 => &mut m.hv.data[i],
        _ => &mut m.tp_logits.data[i],
    }
}

/// Central finite differences over every student output entry, compared to
/// the analytic gradient. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn finite_difference_errors(f: &LossFixture, step: f64, grad_scale: f64) -> CliResult<HeadErrors> {
    let (_, grad) = combined_loss_grad(&f.x, &f.gt, &f.teacher, &f.cfg)?;
    let eval = |m: &PredictionMaps<f64>| -> CliResult<f64> {
        Ok(combined_loss(m, &f.gt, &f.teacher, &f.cfg)?.combined)
    };
    let mut worst = [0.0f64; 3];
    let analytic = [&grad.d_np_logits.data, &grad.d_hv.data, &grad.d_tp_logits.data];
    let mut probe = f.x.clone();
    for (head, values) in analytic.iter().enumerate() {
        for (i, &g) in values.iter().enumerate() {
            let orig = *entry(&mut probe, head, i);
            *entry(&mut probe, head, i) = orig + step;
            let plus = eval(&probe)?;
            *entry(&mut probe, head, i) = orig - step;
            let minus = eval(&probe)?;
            *entry(&mut probe, head, i) = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = g * grad_scale;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst[head] = worst[head].max(rel);
        }
    }
    Ok(HeadErrors {
        np: worst[0],
        hv: worst[1],
        tp: worst[2],
    })
}

pub fn run_loss_check(opts: &LossCheckOptions) -> CliResult<LossCheckReport> {
    if opts.sizes.is_empty() || opts.classes < 2 || !(opts.step.is_finite() && opts.step > 0.0) {
        return Err(CliError::Input("loss-check needs sizes, >= 2 classes and a positive step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = if opts.corrupt_gradient { 1.01 } else { 1.0 };
    let mut worst = HeadErrors::default();
    for i in 0..opts.fixtures {
        let (h, w) = opts.sizes[i % opts.sizes.len()];
        let fixture = loss_fixture(&mut rng, i, h, w, opts.classes)?;
        let e = finite_difference_errors(&fixture, opts.step, scale)?;
        worst.np = worst.np.max(e.np);
        worst.hv = worst.hv.max(e.hv);
        worst.tp = worst.tp.max(e.tp);
    }
    Ok(LossCheckReport {
        fixtures: opts.fixtures,
        step: opts.step,
        tolerance: opts.tolerance,
        pass: worst.max() <= opts.tolerance,
        max_relative_error: worst,
    })
}
