#![allow(dead_code)]

use hoverpost_core::loss::PredictionMaps;
use hoverpost_core::targets::{ClassWeights, TargetMaps};
use hoverpost_core::{ChannelMap, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, scale: f64) -> ChannelMap<f64> {
    let data = (0..h * w * c).map(|_| rng.random_range(-scale..scale)).collect();
    ChannelMap::from_vec(h, w, c, data).unwrap()
}

pub fn random_predictions(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> PredictionMaps<f64> {
    PredictionMaps::new(
        random_map(rng, h, w, 2, 2.0),
        random_map(rng, h, w, 2, 1.0),
        random_map(rng, h, w, c, 2.0),
    )
    .unwrap()
}

pub fn random_targets(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> TargetMaps {
    let tp: Vec<u32> = (0..h * w)
        .map(|_| if rng.random_bool(0.5) { rng.random_range(1..c as u32) } else { 0 })
        .collect();
    let np: Vec<u8> = tp.iter().map(|&t| u8::from(t > 0)).collect();
    let hv: Vec<f32> = np
        .iter()
        .flat_map(|&m| [m, m])
        .map(|m| if m == 1 { rng.random_range(-1.0f32..1.0) } else { 0.0 })
        .collect();
    TargetMaps {
        np: Grid::from_vec(h, w, np).unwrap(),
        hv: ChannelMap::from_vec(h, w, 2, hv).unwrap(),
        tp: Grid::from_vec(h, w, tp).unwrap(),
    }
}

pub fn random_weights(rng: &mut ChaCha8Rng, c: usize) -> ClassWeights {
    ClassWeights::new((0..c).map(|_| rng.random_range(0.3f32..2.0)).collect()).unwrap()
}
