//! Distillation loss family.
//!
//! The total loss mixes a student loss against generated ground truth with a
//! distillation loss against teacher outputs:
//! `combined = alpha * student + (1 - alpha) * distill`.
//!
//! Each side is a sum over the three heads:
//!
//! | head | student            | distill                 |
//! |------|--------------------|-------------------------|
//! | HV   | MSE + MSGE         | MSE + MSGE              |
//! | NP   | weighted CE + Dice | weighted CE + KLD(T)    |
//! | TP   | weighted CE + Dice | weighted CE + KLD(T)    |
//!
//! All accumulation happens in `f64`, whatever the input precision.

mod terms;

pub use terms::{
    dice_loss, kld_temp, mse_hv, msge_hv, softmax_map, softmax_with_temperature, weighted_ce,
    ClassTarget, LOG_CLAMP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{ChannelMap, Grid, Mask};
use crate::targets::{ClassWeights, TargetMaps};
use terms::{dice_loss_acc, kld_temp_acc, msge_hv_acc, mse_hv_acc, weighted_ce_acc};

/// Raw network outputs for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps<T> {
    /// `H×W×2` nuclei/background logits.
    pub np_logits: ChannelMap<T>,
    /// `H×W×2` horizontal/vertical regression maps.
    pub hv: ChannelMap<T>,
    /// `H×W×C` type logits, class 0 = background.
    pub tp_logits: ChannelMap<T>,
}

impl<T: Copy + Into<f64>> PredictionMaps<T> {
    pub fn new(np_logits: ChannelMap<T>, hv: ChannelMap<T>, tp_logits: ChannelMap<T>) -> Result<Self> {
        let maps = Self {
            np_logits,
            hv,
            tp_logits,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.np_logits.height, self.np_logits.width]
    }

    pub fn num_types(&self) -> usize {
        self.tp_logits.channels
    }

    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.shape();
        if self.np_logits.channels != 2 {
            return Err(Error::shape(self.np_logits.shape(), [h, w, 2]));
        }
        if self.hv.shape() != [h, w, 2] {
            return Err(Error::shape(self.hv.shape(), [h, w, 2]));
        }
        if self.tp_logits.channels < 2 || [self.tp_logits.height, self.tp_logits.width] != [h, w] {
            return Err(Error::shape(self.tp_logits.shape(), [h, w, 2]));
        }
        let finite = |m: &ChannelMap<T>| m.data.iter().all(|&v| v.into().is_finite());
        if !(finite(&self.np_logits) && finite(&self.hv) && finite(&self.tp_logits)) {
            return Err(Error::NonFinite("prediction maps"));
        }
        Ok(())
    }

    /// Converts to another float type.
    pub fn cast<U: Copy>(&self, f: impl Fn(T) -> U + Copy) -> PredictionMaps<U> {
        PredictionMaps {
            np_logits: self.np_logits.map(f),
            hv: self.hv.map(f),
            tp_logits: self.tp_logits.map(f),
        }
    }
}

/// Multipliers of the six terms on each side. Index order: HV MSE, HV MSGE,
/// NP CE, NP Dice/KLD, TP CE, TP Dice/KLD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermScales {
    pub hv_mse: f64,
    pub hv_msge: f64,
    pub np_ce: f64,
    pub np_aux: f64,
    pub tp_ce: f64,
    pub tp_aux: f64,
}

impl Default for TermScales {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl TermScales {
    pub fn uniform(v: f64) -> Self {
        Self {
            hv_mse: v,
            hv_msge: v,
            np_ce: v,
            np_aux: v,
            tp_ce: v,
            tp_aux: v,
        }
    }
}

/// How teacher outputs are turned into cross-entropy targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillTarget {
    /// Teacher argmax as hard labels.
    #[default]
    Hard,
    /// Teacher softmax (at T = 1) as soft labels.
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub np_weights: ClassWeights,
    pub tp_weights: ClassWeights,
    pub scales: TermScales,
    pub dice_epsilon: f64,
    pub distill_target: DistillTarget,
}

impl LossConfig {
    /// Defaults: `alpha = 0.5`, `T = 1`, uniform class weights.
    pub fn new(num_types: usize) -> Self {
        Self {
            alpha: 0.5,
            temperature: 1.0,
            np_weights: ClassWeights::uniform(2),
            tp_weights: ClassWeights::uniform(num_types),
            scales: TermScales::default(),
            dice_epsilon: 1e-3,
            distill_target: DistillTarget::Hard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be > 0");
        }
        if !(self.dice_epsilon.is_finite() && self.dice_epsilon > 0.0) {
            return bad("dice epsilon must be > 0");
        }
        let s = &self.scales;
        if [s.hv_mse, s.hv_msge, s.np_ce, s.np_aux, s.tp_ce, s.tp_aux]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("term scales must be finite and non-negative");
        }
        if self.np_weights.len() != 2 {
            return bad("np weights need exactly two classes");
        }
        Ok(())
    }
}

/// The six per-side terms, unscaled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchTerms {
    pub hv_mse: f64,
    pub hv_msge: f64,
    pub np_ce: f64,
    pub np_dice_or_kld: f64,
    pub tp_ce: f64,
    pub tp_dice_or_kld: f64,
}

impl BranchTerms {
    pub fn weighted_sum(&self, s: &TermScales) -> f64 {
        s.hv_mse * self.hv_mse
            + s.hv_msge * self.hv_msge
            + s.np_ce * self.np_ce
            + s.np_aux * self.np_dice_or_kld
            + s.tp_ce * self.tp_ce
            + s.tp_aux * self.tp_dice_or_kld
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.hv_mse,
            self.hv_msge,
            self.np_ce,
            self.np_dice_or_kld,
            self.tp_ce,
            self.tp_dice_or_kld,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub student: BranchTerms,
    pub distill: BranchTerms,
    pub student_total: f64,
    pub distill_total: f64,
    pub combined: f64,
}

/// Gradients of the combined loss with respect to the student outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub d_np_logits: ChannelMap<f64>,
    pub d_hv: ChannelMap<f64>,
    pub d_tp_logits: ChannelMap<f64>,
}

impl LossGrad {
    fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            d_np_logits: ChannelMap::zeros(h, w, 2),
            d_hv: ChannelMap::zeros(h, w, 2),
            d_tp_logits: ChannelMap::zeros(h, w, c),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.d_np_logits
            .data
            .iter()
            .chain(&self.d_hv.data)
            .chain(&self.d_tp_logits.data)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_targets<T: Copy + Into<f64>>(x: &PredictionMaps<T>, gt: &TargetMaps, cfg: &LossConfig) -> Result<()> {
    x.validate()?;
    cfg.validate()?;
    if gt.shape() != x.shape() || gt.hv.shape() != x.hv.shape() || gt.tp.shape() != x.shape() {
        return Err(Error::shape(x.shape(), gt.shape()));
    }
    if cfg.tp_weights.len() != x.num_types() {
        return Err(Error::shape([x.num_types()], [cfg.tp_weights.len()]));
    }
    Ok(())
}

fn check_teacher<T: Copy + Into<f64>, U: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    teacher: &PredictionMaps<U>,
    cfg: &LossConfig,
) -> Result<()> {
    x.validate()?;
    teacher.validate()?;
    cfg.validate()?;
    if x.tp_logits.shape() != teacher.tp_logits.shape() || x.shape() != teacher.shape() {
        return Err(Error::shape(x.tp_logits.shape(), teacher.tp_logits.shape()));
    }
    if cfg.tp_weights.len() != x.num_types() {
        return Err(Error::shape([x.num_types()], [cfg.tp_weights.len()]));
    }
    Ok(())
}

fn student_terms<T: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    gt: &TargetMaps,
    cfg: &LossConfig,
    mut grad: Option<(&mut LossGrad, f64)>,
) -> Result<BranchTerms> {
    let s = cfg.scales;
    let np_labels = gt.np.map(u32::from);
    let np_target = ClassTarget::Labels(&np_labels);
    let tp_target = ClassTarget::Labels(&gt.tp);
    macro_rules! g {
        ($field:ident, $scale:expr) => {
            grad.as_mut().map(|(g, f)| (g.$field.data.as_mut_slice(), *f * $scale))
        };
    }
    Ok(BranchTerms {
        hv_mse: mse_hv_acc(&x.hv, &gt.hv, g!(d_hv, s.hv_mse))?,
        hv_msge: msge_hv_acc(&x.hv, &gt.hv, &gt.np, g!(d_hv, s.hv_msge))?,
        np_ce: weighted_ce_acc(&x.np_logits, np_target, &cfg.np_weights, g!(d_np_logits, s.np_ce))?,
        np_dice_or_kld: dice_loss_acc(&x.np_logits, np_target, cfg.dice_epsilon, g!(d_np_logits, s.np_aux))?,
        tp_ce: weighted_ce_acc(&x.tp_logits, tp_target, &cfg.tp_weights, g!(d_tp_logits, s.tp_ce))?,
        tp_dice_or_kld: dice_loss_acc(&x.tp_logits, tp_target, cfg.dice_epsilon, g!(d_tp_logits, s.tp_aux))?,
    })
}

/// The CE target derived from a teacher head under the configured mode.
enum TeacherTarget {
    Labels(Grid<u32>),
    Probs(ChannelMap<f64>),
}

impl TeacherTarget {
    fn new<U: Copy + Into<f64>>(logits: &ChannelMap<U>, mode: DistillTarget) -> Self {
        match mode {
            DistillTarget::Hard => {
                TeacherTarget::Labels(logits.map(|v| v.into()).argmax())
            }
            DistillTarget::Soft => TeacherTarget::Probs(softmax_map(logits, 1.0)),
        }
    }

    fn as_target(&self) -> ClassTarget<'_> {
        match self {
            TeacherTarget::Labels(g) => ClassTarget::Labels(g),
            TeacherTarget::Probs(p) => ClassTarget::Probs(p),
        }
    }
}

/// Teacher NP argmax as a foreground mask.
pub fn teacher_mask<U: Copy + Into<f64>>(teacher: &PredictionMaps<U>) -> Mask {
    teacher.np_logits.map(|v| v.into()).argmax().map(|k| k as u8)
}

fn distill_terms<T: Copy + Into<f64>, U: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    teacher: &PredictionMaps<U>,
    cfg: &LossConfig,
    mut grad: Option<(&mut LossGrad, f64)>,
) -> Result<BranchTerms> {
    let s = cfg.scales;
    let mask = teacher_mask(teacher);
    let np_t = TeacherTarget::new(&teacher.np_logits, cfg.distill_target);
    let tp_t = TeacherTarget::new(&teacher.tp_logits, cfg.distill_target);
    let t = cfg.temperature;
    macro_rules! g {
        ($field:ident, $scale:expr) => {
            grad.as_mut().map(|(g, f)| (g.$field.data.as_mut_slice(), *f * $scale))
        };
    }
    Ok(BranchTerms {
        hv_mse: mse_hv_acc(&x.hv, &teacher.hv, g!(d_hv, s.hv_mse))?,
        hv_msge: msge_hv_acc(&x.hv, &teacher.hv, &mask, g!(d_hv, s.hv_msge))?,
        np_ce: weighted_ce_acc(&x.np_logits, np_t.as_target(), &cfg.np_weights, g!(d_np_logits, s.np_ce))?,
        np_dice_or_kld: kld_temp_acc(&x.np_logits, &teacher.np_logits, t, g!(d_np_logits, s.np_aux))?,
        tp_ce: weighted_ce_acc(&x.tp_logits, tp_t.as_target(), &cfg.tp_weights, g!(d_tp_logits, s.tp_ce))?,
        tp_dice_or_kld: kld_temp_acc(&x.tp_logits, &teacher.tp_logits, t, g!(d_tp_logits, s.tp_aux))?,
    })
}

/// Student loss against generated ground truth. Returns the terms and their
/// scaled sum.
pub fn student_loss<T: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    gt: &TargetMaps,
    cfg: &LossConfig,
) -> Result<(BranchTerms, f64)> {
    check_targets(x, gt, cfg)?;
    let terms = student_terms(x, gt, cfg, None)?;
    Ok((terms, terms.weighted_sum(&cfg.scales)))
}

/// Distillation loss against teacher outputs.
pub fn distill_loss<T: Copy + Into<f64>, U: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    teacher: &PredictionMaps<U>,
    cfg: &LossConfig,
) -> Result<(BranchTerms, f64)> {
    check_teacher(x, teacher, cfg)?;
    let terms = distill_terms(x, teacher, cfg, None)?;
    Ok((terms, terms.weighted_sum(&cfg.scales)))
}

fn breakdown(student: BranchTerms, distill: BranchTerms, cfg: &LossConfig) -> LossBreakdown {
    let student_total = student.weighted_sum(&cfg.scales);
    let distill_total = distill.weighted_sum(&cfg.scales);
    LossBreakdown {
        student,
        distill,
        student_total,
        distill_total,
        combined: cfg.alpha * student_total + (1.0 - cfg.alpha) * distill_total,
    }
}

pub fn combined_loss<T: Copy + Into<f64>, U: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    gt: &TargetMaps,
    teacher: &PredictionMaps<U>,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    check_targets(x, gt, cfg)?;
    check_teacher(x, teacher, cfg)?;
    let s = student_terms(x, gt, cfg, None)?;
    let d = distill_terms(x, teacher, cfg, None)?;
    Ok(breakdown(s, d, cfg))
}

/// Combined loss and its analytic gradient with respect to `x`.
pub fn combined_loss_grad<T: Copy + Into<f64>, U: Copy + Into<f64>>(
    x: &PredictionMaps<T>,
    gt: &TargetMaps,
    teacher: &PredictionMaps<U>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGrad)> {
    check_targets(x, gt, cfg)?;
    check_teacher(x, teacher, cfg)?;
    let [h, w] = x.shape();
    let mut grad = LossGrad::zeros(h, w, x.num_types());
    let s = student_terms(x, gt, cfg, Some((&mut grad, cfg.alpha)))?;
    let d = distill_terms(x, teacher, cfg, Some((&mut grad, 1.0 - cfg.alpha)))?;
    Ok((breakdown(s, d, cfg), grad))
}
