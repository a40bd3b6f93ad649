//! Individual loss terms. Every kernel accumulates into an `f64` gradient
//! buffer when one is supplied, scaled by the caller's factor.

use crate::error::{Error, Result};
use crate::maps::{ChannelMap, Grid, Mask};
use crate::targets::ClassWeights;

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

/// Gradient sink: buffer laid out like the differentiated input, plus the
/// factor the term's derivative is multiplied by before accumulation.
pub type GradSink<'a> = Option<(&'a mut [f64], f64)>;

/// Target of a per-pixel classification term.
#[derive(Debug, Clone, Copy)]
pub enum ClassTarget<'a> {
    /// Hard class indices, one per pixel.
    Labels(&'a Grid<u32>),
    /// Per-pixel probability vectors (rows sum to one).
    Probs(&'a ChannelMap<f64>),
}

impl ClassTarget<'_> {
    fn check(&self, h: usize, w: usize, c: usize) -> Result<()> {
        match self {
            ClassTarget::Labels(g) => {
                if g.shape() != [h, w] {
                    return Err(Error::shape([h, w, c], g.shape()));
                }
                if let Some(&label) = g.data.iter().find(|&&l| l as usize >= c) {
                    return Err(Error::LabelOutOfRange { label, classes: c });
                }
            }
            ClassTarget::Probs(p) => {
                if p.shape() != [h, w, c] {
                    return Err(Error::shape([h, w, c], p.shape()));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn weight_of(&self, idx: usize, k: usize) -> f64 {
        match self {
            ClassTarget::Labels(g) => f64::from(g.data[idx] as usize == k),
            ClassTarget::Probs(p) => p.data[idx * p.channels + k],
        }
    }
}

/// Numerically stable `softmax(z / t)` of one pixel into `out`.
#[inline]
pub(crate) fn softmax_into<T: Copy + Into<f64>>(z: &[T], inv_t: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in z {
        max = max.max(v.into() * inv_t);
    }
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v.into() * inv_t - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log softmax(z / t)` of one pixel into `out`.
#[inline]
fn log_softmax_into<T: Copy + Into<f64>>(z: &[T], inv_t: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in z {
        max = max.max(v.into() * inv_t);
    }
    let mut sum = 0.0;
    for &v in z {
        sum += (v.into() * inv_t - max).exp();
    }
    let lse = max + sum.ln();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = v.into() * inv_t - lse;
    }
}

/// Temperature-scaled softmax of a logit vector.
pub fn softmax_with_temperature<T: Copy + Into<f64>>(logits: &[T], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be > 0")));
    }
    if logits.iter().any(|&v| !v.into().is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, 1.0 / temperature, &mut out);
    Ok(out)
}

/// Per-pixel softmax of a logit map at temperature `t`.
pub fn softmax_map<T: Copy + Into<f64>>(logits: &ChannelMap<T>, temperature: f64) -> ChannelMap<f64> {
    let c = logits.channels;
    let mut out = ChannelMap::zeros(logits.height, logits.width, c);
    for (src, dst) in logits.data.chunks_exact(c).zip(out.data.chunks_exact_mut(c)) {
        softmax_into(src, 1.0 / temperature, dst);
    }
    out
}

fn same_shape<T, U>(x: &ChannelMap<T>, y: &ChannelMap<U>) -> Result<()>
where
    T: Copy,
    U: Copy,
{
    if x.shape() != y.shape() {
        return Err(Error::shape(x.shape(), y.shape()));
    }
    Ok(())
}

/// Mean squared error over every entry.
pub fn mse_hv<T, U>(x: &ChannelMap<T>, y: &ChannelMap<U>) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    mse_hv_acc(x, y, None)
}

pub(crate) fn mse_hv_acc<T, U>(x: &ChannelMap<T>, y: &ChannelMap<U>, grad: GradSink) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    same_shape(x, y)?;
    let n = x.data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let inv_n = 1.0 / n as f64;
    let mut sum = 0.0;
    match grad {
        Some((g, s)) => {
            for ((&a, &b), gi) in x.data.iter().zip(&y.data).zip(g.iter_mut()) {
                let d = a.into() - b.into();
                sum += d * d;
                *gi += s * 2.0 * d * inv_n;
            }
        }
        None => {
            for (&a, &b) in x.data.iter().zip(&y.data) {
                let d = a.into() - b.into();
                sum += d * d;
            }
        }
    }
    Ok(sum * inv_n)
}

/// Stencil of the first derivative of `f` along an axis of length `len`
/// at position `i`: central in the interior, one-sided at both ends.
/// Returns `(plus, minus, coefficient)` positions such that
/// `derivative = coefficient * (f[plus] - f[minus])`.
#[inline]
fn stencil(i: usize, len: usize) -> (usize, usize, f64) {
    if i == 0 {
        (1, 0, 1.0)
    } else if i + 1 == len {
        (i, i - 1, 1.0)
    } else {
        (i + 1, i - 1, 0.5)
    }
}

/// Mean squared error between the horizontal derivative of channel 0 and
/// the vertical derivative of channel 1, over masked pixels. Axes shorter
/// than two pixels have no valid stencil and contribute nothing.
pub fn msge_hv<T, U>(x: &ChannelMap<T>, y: &ChannelMap<U>, mask: &Mask) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    msge_hv_acc(x, y, mask, None)
}

pub(crate) fn msge_hv_acc<T, U>(
    x: &ChannelMap<T>,
    y: &ChannelMap<U>,
    mask: &Mask,
    grad: GradSink,
) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    same_shape(x, y)?;
    if x.channels != 2 {
        return Err(Error::shape(x.shape(), [x.height, x.width, 2]));
    }
    if mask.shape() != [x.height, x.width] {
        return Err(Error::shape(x.shape(), mask.shape()));
    }
    let (h, w) = (x.height, x.width);
    let fg = mask.data.iter().filter(|&&m| m != 0).count();
    let entries = fg * (usize::from(w >= 2) + usize::from(h >= 2));
    if entries == 0 {
        return Ok(0.0);
    }
    let inv_m = 1.0 / entries as f64;
    let at = |m: &ChannelMap<T>, r: usize, c: usize, ch: usize| -> f64 { m.get(r, c, ch).into() };
    let at_y = |r: usize, c: usize, ch: usize| -> f64 { y.get(r, c, ch).into() };

    let mut sum = 0.0;
    let mut grad = grad;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) == 0 {
                continue;
            }
            if w >= 2 {
                let (p, q, k) = stencil(c, w);
                let res = k * (at(x, r, p, 0) - at(x, r, q, 0)) - k * (at_y(r, p, 0) - at_y(r, q, 0));
                sum += res * res;
                if let Some((g, s)) = grad.as_mut() {
                    let coef = *s * 2.0 * res * inv_m * k;
                    g[(r * w + p) * 2] += coef;
                    g[(r * w + q) * 2] -= coef;
                }
            }
            if h >= 2 {
                let (p, q, k) = stencil(r, h);
                let res = k * (at(x, p, c, 1) - at(x, q, c, 1)) - k * (at_y(p, c, 1) - at_y(q, c, 1));
                sum += res * res;
                if let Some((g, s)) = grad.as_mut() {
                    let coef = *s * 2.0 * res * inv_m * k;
                    g[(p * w + c) * 2 + 1] += coef;
                    g[(q * w + c) * 2 + 1] -= coef;
                }
            }
        }
    }
    Ok(sum * inv_m)
}

/// Class-weighted cross-entropy, mean over pixels.
pub fn weighted_ce<T: Copy + Into<f64>>(
    x_logits: &ChannelMap<T>,
    target: ClassTarget,
    weights: &ClassWeights,
) -> Result<f64> {
    weighted_ce_acc(x_logits, target, weights, None)
}

pub(crate) fn weighted_ce_acc<T: Copy + Into<f64>>(
    x_logits: &ChannelMap<T>,
    target: ClassTarget,
    weights: &ClassWeights,
    mut grad: GradSink,
) -> Result<f64> {
    let (h, w, c) = (x_logits.height, x_logits.width, x_logits.channels);
    target.check(h, w, c)?;
    if weights.len() != c {
        return Err(Error::shape([c], [weights.len()]));
    }
    let n = h * w;
    if n == 0 {
        return Ok(0.0);
    }
    let inv_n = 1.0 / n as f64;
    let mut p = vec![0.0; c];
    let mut sum = 0.0;
    for i in 0..n {
        softmax_into(x_logits.pixel(i), 1.0, &mut p);
        // Σ_k w_k q_k over unclamped classes, for the gradient
        let mut active = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            let q = target.weight_of(i, k);
            if q == 0.0 {
                continue;
            }
            let wk = weights.get(k);
            sum -= wk * q * pk.max(LOG_CLAMP).ln();
            if pk >= LOG_CLAMP {
                active += wk * q;
            }
        }
        if let Some((g, s)) = grad.as_mut() {
            let row = &mut g[i * c..(i + 1) * c];
            for (j, gj) in row.iter_mut().enumerate() {
                let q = target.weight_of(i, j);
                let own = if q != 0.0 && p[j] >= LOG_CLAMP {
                    weights.get(j) * q
                } else {
                    0.0
                };
                *gj += *s * inv_n * (p[j] * active - own);
            }
        }
    }
    Ok(sum * inv_n)
}

/// Soft Dice loss averaged over classes.
pub fn dice_loss<T: Copy + Into<f64>>(x_logits: &ChannelMap<T>, target: ClassTarget, epsilon: f64) -> Result<f64> {
    dice_loss_acc(x_logits, target, epsilon, None)
}

pub(crate) fn dice_loss_acc<T: Copy + Into<f64>>(
    x_logits: &ChannelMap<T>,
    target: ClassTarget,
    epsilon: f64,
    mut grad: GradSink,
) -> Result<f64> {
    let (h, w, c) = (x_logits.height, x_logits.width, x_logits.channels);
    target.check(h, w, c)?;
    let n = h * w;
    let probs = softmax_map(x_logits, 1.0);
    let mut inter = vec![0.0; c];
    let mut psum = vec![0.0; c];
    let mut qsum = vec![0.0; c];
    for i in 0..n {
        for k in 0..c {
            let p = probs.data[i * c + k];
            let q = target.weight_of(i, k);
            inter[k] += p * q;
            psum[k] += p;
            qsum[k] += q;
        }
    }
    let inv_c = 1.0 / c as f64;
    let mut loss = 0.0;
    let mut num = vec![0.0; c];
    let mut den = vec![0.0; c];
    for k in 0..c {
        num[k] = 2.0 * inter[k] + epsilon;
        den[k] = psum[k] + qsum[k] + epsilon;
        loss += 1.0 - num[k] / den[k];
    }
    if let Some((g, s)) = grad.as_mut() {
        let mut dp = vec![0.0; c];
        for i in 0..n {
            let p = &probs.data[i * c..(i + 1) * c];
            let mut dot = 0.0;
            for k in 0..c {
                let q = target.weight_of(i, k);
                dp[k] = -inv_c * (2.0 * q * den[k] - num[k]) / (den[k] * den[k]);
                dot += p[k] * dp[k];
            }
            for k in 0..c {
                g[i * c + k] += *s * p[k] * (dp[k] - dot);
            }
        }
    }
    Ok(loss * inv_c)
}

/// `(1/T²) · mean_i KL(softmax(y_i/T) ‖ softmax(x_i/T))`; the teacher `y` is
/// the reference distribution.
pub fn kld_temp<T, U>(x_logits: &ChannelMap<T>, y_logits: &ChannelMap<U>, temperature: f64) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    kld_temp_acc(x_logits, y_logits, temperature, None)
}

pub(crate) fn kld_temp_acc<T, U>(
    x_logits: &ChannelMap<T>,
    y_logits: &ChannelMap<U>,
    temperature: f64,
    mut grad: GradSink,
) -> Result<f64>
where
    T: Copy + Into<f64>,
    U: Copy + Into<f64>,
{
    same_shape(x_logits, y_logits)?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be > 0")));
    }
    let c = x_logits.channels;
    let n = x_logits.pixels();
    if n == 0 {
        return Ok(0.0);
    }
    let inv_t = 1.0 / temperature;
    let inv_n = 1.0 / n as f64;
    let (mut lp, mut lq) = (vec![0.0; c], vec![0.0; c]);
    let mut sum = 0.0;
    for i in 0..n {
        log_softmax_into(x_logits.pixel(i), inv_t, &mut lp);
        log_softmax_into(y_logits.pixel(i), inv_t, &mut lq);
        let mut kl = 0.0;
        for k in 0..c {
            let q = lq[k].exp();
            if q > 0.0 {
                kl += q * (lq[k] - lp[k]);
            }
        }
        sum += kl.max(0.0);
        if let Some((g, s)) = grad.as_mut() {
            let coef = *s * inv_n * inv_t * inv_t * inv_t;
            for k in 0..c {
                g[i * c + k] += coef * (lp[k].exp() - lq[k].exp());
            }
        }
    }
    Ok(sum * inv_n * inv_t * inv_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(h: usize, w: usize, c: usize, v: &[f64]) -> ChannelMap<f64> {
        ChannelMap::from_vec(h, w, c, v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_with_temperature(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        let p = softmax_with_temperature(&[4f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        let e = std::f64::consts::E;
        let p = softmax_with_temperature(&[2.0, 0.0], 2.0).unwrap();
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.731059).abs() < 1e-6 && (p[1] - 0.268941).abs() < 1e-6);
        assert!(matches!(
            softmax_with_temperature(&[f64::NAN, 0.0], 1.0),
            Err(Error::NonFinite(_))
        ));
        let big = softmax_with_temperature(&[1000.0f32, -1000.0], 1.0).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mse_examples() {
        let x = cm(2, 1, 2, &[0.0, 1.0, 2.0, 3.0]);
        let y = cm(2, 1, 2, &[1.0, 1.0, 0.0, 3.0]);
        assert_eq!(mse_hv(&x, &y).unwrap(), 1.25);
        assert_eq!(mse_hv(&x, &x).unwrap(), 0.0);
        let y1 = x.map(|v| v + 1.0);
        assert_eq!(mse_hv(&y1, &x).unwrap(), 1.0);
        assert!(mse_hv(&x, &cm(1, 2, 2, &[0.0; 4])).is_err());
    }

    #[test]
    fn msge_examples() {
        // 1×6 row, horizontal ramp of slope 1 vs constant; vertical axis has
        // no valid stencil so only the six horizontal entries count.
        let x = cm(1, 6, 2, &[0., 0., 1., 0., 2., 0., 3., 0., 4., 0., 5., 0.]);
        let y = cm(1, 6, 2, &[7.0; 12]);
        let full = Grid::filled(1, 6, 1u8);
        assert_eq!(msge_hv(&x, &y, &full).unwrap(), 1.0);
        assert_eq!(msge_hv(&x, &x, &full).unwrap(), 0.0);
        assert_eq!(msge_hv(&x, &y, &Grid::zeros(1, 6)).unwrap(), 0.0);
    }

    #[test]
    fn ce_examples() {
        let uniform = ClassWeights::uniform(2);
        let labels0 = Grid::from_vec(1, 1, vec![0u32]).unwrap();
        let labels1 = Grid::from_vec(1, 1, vec![1u32]).unwrap();
        let sat = cm(1, 1, 2, &[40.0, -40.0]);
        assert!(weighted_ce(&sat, ClassTarget::Labels(&labels0), &uniform).unwrap() < 1e-12);
        let flat = cm(1, 1, 2, &[0.0, 0.0]);
        let v = weighted_ce(&flat, ClassTarget::Labels(&labels1), &uniform).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-6);
        // exact weights from counts [4, 1]; the rounded 0.6667/1.3333 give 0.924173
        let w = ClassWeights::new(vec![2.0 / 3.0, 4.0 / 3.0]).unwrap();
        let v = weighted_ce(&flat, ClassTarget::Labels(&labels1), &w).unwrap();
        assert!((v - 0.924196).abs() < 1e-5);
        let bad = Grid::from_vec(1, 1, vec![2u32]).unwrap();
        assert!(matches!(
            weighted_ce(&flat, ClassTarget::Labels(&bad), &uniform),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn ce_clamp_keeps_saturated_wrong_label_finite() {
        let labels1 = Grid::from_vec(1, 1, vec![1u32]).unwrap();
        let sat = cm(1, 1, 2, &[800.0, -800.0]);
        let v = weighted_ce(&sat, ClassTarget::Labels(&labels1), &ClassWeights::uniform(2)).unwrap();
        assert!((v - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn dice_examples() {
        let labels = Grid::from_vec(1, 1, vec![1u32]).unwrap();
        let x = cm(1, 1, 2, &[60.0, -60.0]);
        let eps = 1e-3;
        let v = dice_loss(&x, ClassTarget::Labels(&labels), eps).unwrap();
        let expected = 1.0 - eps / (1.0 + eps);
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 0.999).abs() < 1e-5);
        let v_big = dice_loss(&x, ClassTarget::Labels(&labels), 1e-1).unwrap();
        assert!(v_big <= v);
        let good = cm(1, 1, 2, &[-60.0, 60.0]);
        assert!(dice_loss(&good, ClassTarget::Labels(&labels), eps).unwrap() < 1e-6);
    }

    #[test]
    fn kld_examples() {
        let x = cm(1, 1, 2, &[0.0, 0.0]);
        let y = cm(1, 1, 2, &[4f64.ln(), 0.0]);
        let v1 = kld_temp(&x, &y, 1.0).unwrap();
        let expected = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        assert!((v1 - expected).abs() < 1e-12);
        assert!((v1 - 0.192745).abs() < 1e-6);
        let v2 = kld_temp(&x, &y, 2.0).unwrap();
        assert!(v2 < v1);
        assert_eq!(kld_temp(&y, &y, 3.0).unwrap(), 0.0);
    }
}
