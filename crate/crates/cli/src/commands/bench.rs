use std::time::Instant;

use hoverpost_core::postproc::{classify_instances, instance_segment, PostprocConfig};
use hoverpost_core::synth::{dense_field, ideal_outputs, SynthOutputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

const TYPES: usize = 5;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub size: usize,
    /// Tiles per throughput run.
    pub tiles: usize,
    pub repetitions: usize,
    pub threads: Vec<usize>,
    /// Grid pitch of the synthetic field; one nucleus (or touching pair) per
    /// cell.
    pub cell: usize,
    pub seed: u64,
    pub config: PostprocConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            size: 1000,
            tiles: 8,
            repetitions: 3,
            threads: vec![1, 2, 4],
            cell: 40,
            seed: 0,
            config: PostprocConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub threads: usize,
    pub tiles_per_second: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub size: usize,
    pub tiles: usize,
    pub repetitions: usize,
    pub mean_nuclei_per_tile: f64,
    pub mean_segmented_per_tile: f64,
    /// Single-threaded time of segmentation plus classification per tile.
    pub latency: LatencyStats,
    pub scaling: Vec<ScalingPoint>,
    /// Hardware threads reported by the OS.
    pub available_parallelism: usize,
}

/// Synthetic tiles with mildly noisy network outputs.
pub fn bench_tiles(opts: &BenchOptions) -> Vec<(usize, SynthOutputs)> {
    (0..opts.tiles)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(t as u64));
            let tile = dense_field(&mut rng, opts.size, opts.size, opts.cell, 0.2, TYPES as u32 - 1);
            let mut out = ideal_outputs(&tile, TYPES, 0.9).expect("classes fit the type channels");
            for p in out.np_probs.data.iter_mut() {
                *p = (*p + rng.random_range(-0.05f32..0.05)).clamp(0.0, 1.0);
            }
            for v in out.hv.data.iter_mut() {
                *v += rng.random_range(-0.02f32..0.02);
            }
            (tile.instances.count(), out)
        })
        .collect()
}

fn process(o: &SynthOutputs, cfg: &PostprocConfig) -> usize {
    let inst = instance_segment(&o.np_probs, &o.hv, cfg).expect("synthetic inputs are valid");
    let (classes, _) = classify_instances(&inst, &o.tp_probs).expect("shapes agree");
    classes.len()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn run_bench(opts: &BenchOptions) -> CliResult<BenchReport> {
    if opts.tiles == 0 || opts.repetitions == 0 || opts.threads.contains(&0) {
        return Err(CliError::Input("tiles, repetitions and thread counts must be >= 1".into()));
    }
    opts.config.validate()?;
    let tiles = bench_tiles(opts);
    let mut times = Vec::new();
    let mut segmented = 0;
    for rep in 0..opts.repetitions {
        for (_, o) in &tiles {
            let start = Instant::now();
            let k = process(o, &opts.config);
            times.push(start.elapsed().as_secs_f64() * 1e3);
            if rep == 0 {
                segmented += k;
            }
        }
    }
    times.sort_by(f64::total_cmp);
    let latency = LatencyStats {
        p50_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        samples: times.len(),
    };

    let mut scaling: Vec<ScalingPoint> = Vec::new();
    let mut base = None;
    let mut counts = opts.threads.clone();
    if !counts.contains(&1) {
        counts.insert(0, 1);
    }
    counts.sort_unstable();
    counts.dedup();
    for &t in &counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
        let mut best = f64::INFINITY;
        for _ in 0..opts.repetitions {
            let start = Instant::now();
            let total: usize = pool.install(|| tiles.par_iter().map(|(_, o)| process(o, &opts.config)).sum());
            best = best.min(start.elapsed().as_secs_f64());
            debug_assert_eq!(total, segmented);
        }
        let tps = tiles.len() as f64 / best;
        let b = *base.get_or_insert(tps);
        scaling.push(ScalingPoint {
            threads: t,
            tiles_per_second: tps,
            speedup: tps / b,
        });
    }
    let n = tiles.len() as f64;
    Ok(BenchReport {
        size: opts.size,
        tiles: tiles.len(),
        repetitions: opts.repetitions,
        mean_nuclei_per_tile: tiles.iter().map(|t| t.0).sum::<usize>() as f64 / n,
        mean_segmented_per_tile: segmented as f64 / n,
        latency,
        scaling,
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
    })
}
