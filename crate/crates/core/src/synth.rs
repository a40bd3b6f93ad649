//! Synthetic nuclei tiles: random ellipses, touching pairs and dense fields,
//! plus idealized network outputs derived from them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::maps::{ChannelMap, ClassTable, Grid, InstanceMap};
use crate::targets::gen_hv_targets;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes along the rotated row and column directions.
    pub axes: [f64; 2],
    pub angle: f64,
}

impl Ellipse {
    pub fn random(rng: &mut impl Rng, center: [f64; 2], axis_range: (f64, f64)) -> Self {
        Ellipse {
            center,
            axes: [
                rng.random_range(axis_range.0..=axis_range.1),
                rng.random_range(axis_range.0..=axis_range.1),
            ],
            angle: rng.random_range(0.0..std::f64::consts::PI),
        }
    }

    /// Normalized radius of a pixel center; inside when `<= 1`.
    pub fn level(&self, r: usize, c: usize) -> f64 {
        let (dr, dc) = (r as f64 - self.center[0], c as f64 - self.center[1]);
        let (s, co) = self.angle.sin_cos();
        let u = dr * co + dc * s;
        let v = -dr * s + dc * co;
        (u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2)
    }

    /// Inclusive pixel window covering the ellipse, clipped to the tile.
    fn window(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let ext = self.axes[0].max(self.axes[1]).ceil() + 1.0;
        let clip = |v: f64, n: usize| v.max(0.0).min(n as f64 - 1.0) as usize;
        (
            clip(self.center[0] - ext, h),
            clip(self.center[1] - ext, w),
            clip(self.center[0] + ext, h),
            clip(self.center[1] + ext, w),
        )
    }

    pub fn pixels(&self, h: usize, w: usize) -> Vec<usize> {
        if h == 0 || w == 0 {
            return Vec::new();
        }
        let (r0, c0, r1, c1) = self.window(h, w);
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if self.level(r, c) <= 1.0 {
                    out.push(r * w + c);
                }
            }
        }
        out
    }
}

/// Instance map with a class per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTile {
    pub instances: InstanceMap,
    pub classes: ClassTable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFieldConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of the number of nuclei.
    pub count: (usize, usize),
    pub semi_axes: (f64, f64),
    /// Minimum number of background pixels between two nuclei.
    pub gap: usize,
    /// Smallest accepted nucleus area.
    pub min_area: usize,
    /// Classes are drawn uniformly from `1..=num_classes`.
    pub num_classes: u32,
}

impl Default for EllipseFieldConfig {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            count: (5, 25),
            semi_axes: (4.0, 12.0),
            gap: 2,
            min_area: 20,
            num_classes: 4,
        }
    }
}

fn random_class(rng: &mut impl Rng, num_classes: u32) -> u32 {
    rng.random_range(1..=num_classes.max(1))
}

/// Randomly placed ellipses separated by at least `gap` background pixels
/// (Chebyshev distance) and kept off the tile border. Placement is by
/// rejection, so crowded configurations may end with fewer nuclei than
/// requested.
pub fn separated_ellipses(rng: &mut impl Rng, cfg: &EllipseFieldConfig) -> SynthTile {
    let (h, w) = (cfg.height, cfg.width);
    let mut inst = InstanceMap::empty(h, w);
    let mut classes = ClassTable::new();
    let mut blocked = vec![false; h * w];
    let target = rng.random_range(cfg.count.0..=cfg.count.1);
    let margin = cfg.semi_axes.1 + 1.0;
    if (h as f64) <= 2.0 * margin || (w as f64) <= 2.0 * margin {
        return SynthTile { instances: inst, classes };
    }
    let g = cfg.gap as isize;
    let mut label = 0u32;
    for _ in 0..target * 200 {
        if label as usize == target {
            break;
        }
        let center = [
            rng.random_range(margin..h as f64 - margin),
            rng.random_range(margin..w as f64 - margin),
        ];
        let e = Ellipse::random(rng, center, cfg.semi_axes);
        let px = e.pixels(h, w);
        if px.len() < cfg.min_area.max(1) || px.iter().any(|&i| blocked[i]) {
            continue;
        }
        label += 1;
        for &i in &px {
            inst.labels[i] = label;
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for rr in (r - g).max(0)..=(r + g).min(h as isize - 1) {
                for cc in (c - g).max(0)..=(c + g).min(w as isize - 1) {
                    blocked[rr as usize * w + cc as usize] = true;
                }
            }
        }
        classes.insert(label, random_class(rng, cfg.num_classes));
    }
    SynthTile { instances: inst, classes }
}

/// Paints two overlapping ellipses and splits the overlap by normalized
/// radius, producing two instances that share a boundary. Returns false
/// (and paints nothing) if the pair would touch existing nuclei or the tile
/// border.
fn paint_touching_pair(
    rng: &mut impl Rng,
    inst: &mut InstanceMap,
    center: [f64; 2],
    semi_axes: (f64, f64),
    labels: (u32, u32),
) -> bool {
    let (h, w) = (inst.height, inst.width);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let a = Ellipse::random(rng, [0.0, 0.0], semi_axes);
    let b = Ellipse::random(rng, [0.0, 0.0], semi_axes);
    let min_a = a.axes[0].min(a.axes[1]);
    let min_b = b.axes[0].min(b.axes[1]);
    // Closer than the sum of minor semi-axes guarantees overlap.
    let d = 0.8 * (min_a + min_b);
    let (s, c) = theta.sin_cos();
    let ea = Ellipse {
        center: [center[0] - s * d * min_a / (min_a + min_b), center[1] - c * d * min_a / (min_a + min_b)],
        ..a
    };
    let eb = Ellipse {
        center: [center[0] + s * d * min_b / (min_a + min_b), center[1] + c * d * min_b / (min_a + min_b)],
        ..b
    };
    let mut painted = Vec::new();
    for (i, e) in [ea, eb].iter().enumerate() {
        let (r0, c0, r1, c1) = e.window(h, w);
        if r0 == 0 || c0 == 0 || r1 + 1 >= h || c1 + 1 >= w {
            return false;
        }
        for p in e.pixels(h, w) {
            let (r, col) = (p / w, p % w);
            let other = if i == 0 { &eb } else { &ea };
            if e.level(r, col) <= other.level(r, col) || other.level(r, col) > 1.0 {
                painted.push((p, if i == 0 { labels.0 } else { labels.1 }));
            }
        }
    }
    if painted.iter().any(|&(p, _)| inst.labels[p] != 0) {
        return false;
    }
    for (p, l) in painted {
        inst.labels[p] = l;
    }
    true
}

/// A tile holding exactly two touching nuclei.
pub fn touching_pair(rng: &mut impl Rng, height: usize, width: usize, semi_axes: (f64, f64)) -> Result<SynthTile> {
    let mut inst = InstanceMap::empty(height, width);
    let center = [height as f64 / 2.0, width as f64 / 2.0];
    for _ in 0..100 {
        if paint_touching_pair(rng, &mut inst, center, semi_axes, (1, 2)) {
            let classes = ClassTable::from([(1, 1), (2, 2)]);
            return Ok(SynthTile { instances: inst, classes });
        }
    }
    Err(Error::InvalidArgument(format!(
        "a {height}x{width} tile cannot hold a touching pair with semi-axes {semi_axes:?}"
    )))
}

/// Dense field on a jittered grid of `cell`-sized cells, one nucleus per
/// cell, with roughly `pair_fraction` of the cells holding a touching pair
/// instead. Neighbouring cells never touch.
pub fn dense_field(
    rng: &mut impl Rng,
    height: usize,
    width: usize,
    cell: usize,
    pair_fraction: f64,
    num_classes: u32,
) -> SynthTile {
    let mut inst = InstanceMap::empty(height, width);
    let mut classes = ClassTable::new();
    let mut label = 0u32;
    let half = cell as f64 / 2.0;
    let max_axis = (half - 2.0).clamp(2.0, 12.0);
    let single = (max_axis * 0.5, max_axis);
    let paired = (max_axis * 0.3, max_axis * 0.45);
    for gr in 0..height / cell {
        for gc in 0..width / cell {
            let jitter = (half - max_axis - 1.5).max(0.0);
            let center = [
                (gr * cell) as f64 + half + rng.random_range(-jitter..=jitter),
                (gc * cell) as f64 + half + rng.random_range(-jitter..=jitter),
            ];
            if rng.random_bool(pair_fraction.clamp(0.0, 1.0))
                && paint_touching_pair(rng, &mut inst, center, paired, (label + 1, label + 2))
            {
                for _ in 0..2 {
                    label += 1;
                    classes.insert(label, random_class(rng, num_classes));
                }
                continue;
            }
            let e = Ellipse::random(rng, center, single);
            label += 1;
            for p in e.pixels(height, width) {
                inst.labels[p] = label;
            }
            classes.insert(label, random_class(rng, num_classes));
        }
    }
    SynthTile { instances: inst, classes }
}

/// Network-style outputs for a tile.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutputs {
    pub np_probs: Grid<f32>,
    pub hv: ChannelMap<f32>,
    /// Per-pixel type probabilities, channel 0 background.
    pub tp_probs: ChannelMap<f32>,
}

/// Outputs a perfect network would produce: the foreground probability is
/// `confidence` on nuclei and `1 - confidence` elsewhere, HV maps equal the
/// targets, and the type distribution puts `confidence` on the true class.
pub fn ideal_outputs(tile: &SynthTile, num_types: usize, confidence: f32) -> Result<SynthOutputs> {
    let inst = &tile.instances;
    let (h, w) = (inst.height, inst.width);
    if num_types < 2 {
        return Err(Error::InvalidArgument("need at least 2 type channels".into()));
    }
    let np_probs = inst.foreground().map(|m| if m != 0 { confidence } else { 1.0 - confidence });
    let rest = (1.0 - confidence) / (num_types - 1) as f32;
    let mut tp_probs = ChannelMap::from_vec(h, w, num_types, vec![rest; h * w * num_types])?;
    for (i, &l) in inst.labels.iter().enumerate() {
        let k = if l == 0 {
            0
        } else {
            *tile.classes.get(&l).ok_or(Error::MissingClass { label: l })? as usize
        };
        if k >= num_types {
            return Err(Error::LabelOutOfRange {
                label: k as u32,
                classes: num_types,
            });
        }
        tp_probs.data[i * num_types + k] = confidence;
    }
    Ok(SynthOutputs {
        np_probs,
        hv: gen_hv_targets(inst),
        tp_probs,
    })
}
