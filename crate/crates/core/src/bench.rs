//! Throughput harness on seeded synthetic patches.
//!
//! `total_ms` is the summed busy time of every timed iteration across
//! workers, so `ms_per_patch` is a per-patch cost regardless of the worker
//! count; `wall_ms` and `patches_per_s` describe the parallel run.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::rng::RngStream;
use crate::synth::synthetic_sample;
use crate::volume::Sample;

/// Epoch structure used for the synthetic-epoch estimate.
pub const EPOCH_ITERATIONS: usize = 250;
pub const EPOCH_BATCH_SIZE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// Whole pipeline per patch with its configured gates.
    Pipeline,
    /// Every transform forced on and timed in isolation on the same input.
    PerTransform,
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pipeline" => Ok(BenchMode::Pipeline),
            "per-transform" => Ok(BenchMode::PerTransform),
            other => Err(Error::arg(format!("unknown bench mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub patch_dims: [usize; 3],
    pub iterations: usize,
    pub warmup: usize,
    pub mode: BenchMode,
    pub workers: usize,
    /// Overrides every gate in pipeline mode.
    pub force_probability: Option<f64>,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            patch_dims: [128, 128, 128],
            iterations: 50,
            warmup: 5,
            mode: BenchMode::Pipeline,
            workers: 1,
            force_probability: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub config_name: String,
    pub mode: BenchMode,
    pub patch_dims: [usize; 3],
    pub iterations: usize,
    pub workers: usize,
    pub total_ms: f64,
    pub ms_per_patch: f64,
    pub patches_per_s: f64,
    pub wall_ms: f64,
    /// Mean milliseconds per patch spent in each transform.
    pub per_transform_ms: BTreeMap<String, f64>,
    /// Per-patch time not attributed to any transform (copies, gates).
    pub overhead_ms: f64,
    pub epoch_estimate_s: f64,
}

impl BenchReport {
    pub fn transform_ms_sum(&self) -> f64 {
        self.per_transform_ms.values().sum()
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.patch_dims;
        writeln!(
            f,
            "config {} | mode {:?} | patch {x}x{y}x{z} | {} iterations | {} worker(s)",
            self.config_name, self.mode, self.iterations, self.workers
        )?;
        writeln!(f, "{:<26}{:>12}", "transform", "ms/patch")?;
        for (name, ms) in &self.per_transform_ms {
            writeln!(f, "{name:<26}{ms:>12.3}")?;
        }
        writeln!(f, "{:<26}{:>12.3}", "overhead", self.overhead_ms)?;
        writeln!(f, "{:<26}{:>12.3}", "total", self.ms_per_patch)?;
        writeln!(f, "throughput: {:.2} patches/s ({:.1} ms wall)", self.patches_per_s, self.wall_ms)?;
        write!(
            f,
            "synthetic epoch ({EPOCH_ITERATIONS} x {EPOCH_BATCH_SIZE} patches): {:.2} s",
            self.epoch_estimate_s
        )
    }
}

#[derive(Default)]
struct WorkerTimes {
    busy_ms: f64,
    per_transform: BTreeMap<String, f64>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn run_worker(pipeline: &Pipeline, sample: &Sample<f32>, ids: &[u64], warmup: usize, mode: BenchMode) -> Result<WorkerTimes> {
    let mut times = WorkerTimes::default();
    for (n, &id) in ids.iter().enumerate() {
        let timed = n >= warmup;
        let start = Instant::now();
        let mut local: Vec<(&'static str, f64)> = Vec::new();
        match mode {
            BenchMode::Pipeline => {
                let (_, trace) = pipeline.apply_traced(sample, id, 0)?;
                local.extend(trace.iter().map(|e| (e.name, e.elapsed.as_secs_f64() * 1e3)));
            }
            BenchMode::PerTransform => {
                for step in &pipeline.steps {
                    let input = sample.clone();
                    let mut rng = RngStream::derive(pipeline.global_seed, id, 0, step.position as u64).rng();
                    let t = Instant::now();
                    let out = step.transform.apply(input, &mut rng)?;
                    local.push((step.transform.name(), ms(t)));
                    drop(out);
                }
            }
        }
        let busy = ms(start);
        if timed {
            times.busy_ms += busy;
            for (name, t) in local {
                *times.per_transform.entry(name.to_string()).or_default() += t;
            }
        }
    }
    Ok(times)
}

pub fn run_benchmark(cfg: &PipelineConfig, config_name: &str, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.iterations == 0 {
        return Err(Error::arg("bench needs at least one iteration"));
    }
    if opts.workers == 0 {
        return Err(Error::arg("bench needs at least one worker"));
    }
    if opts.patch_dims.contains(&0) {
        return Err(Error::arg(format!("patch dims {:?} must be positive", opts.patch_dims)));
    }
    let mut pipeline = Pipeline::compile(cfg)?;
    match (opts.mode, opts.force_probability) {
        (BenchMode::PerTransform, _) => pipeline = pipeline.with_all_probabilities(1.0),
        (BenchMode::Pipeline, Some(p)) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("forced probability {p} outside [0, 1]")));
            }
            pipeline = pipeline.with_all_probabilities(p);
        }
        (BenchMode::Pipeline, None) => {}
    }
    let workers = opts.workers.min(opts.iterations);
    // Iteration i is timed on worker i % workers; each worker warms up on
    // its own leading ids.
    let shards: Vec<Vec<u64>> = (0..workers)
        .map(|w| {
            let warm = (0..opts.warmup).map(|n| (opts.iterations + n * workers + w) as u64);
            warm.chain((w..opts.iterations).step_by(workers).map(|i| i as u64)).collect()
        })
        .collect();
    let samples: Vec<Sample<f32>> = (0..workers)
        .map(|w| synthetic_sample(opts.patch_dims, opts.seed.wrapping_add(w as u64)))
        .collect();
    let wall = Instant::now();
    let results: Vec<Result<WorkerTimes>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .zip(&samples)
            .map(|(ids, sample)| {
                let pipeline = &pipeline;
                scope.spawn(move || run_worker(pipeline, sample, ids, opts.warmup, opts.mode))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invariant("bench worker panicked".into()))))
            .collect()
    });
    let wall_ms = ms(wall);
    let mut total_ms = 0.0;
    let mut per_transform: BTreeMap<String, f64> = BTreeMap::new();
    for r in results {
        let w = r?;
        total_ms += w.busy_ms;
        for (k, v) in w.per_transform {
            *per_transform.entry(k).or_default() += v;
        }
    }
    let n = opts.iterations as f64;
    per_transform.values_mut().for_each(|v| *v /= n);
    let ms_per_patch = total_ms / n;
    let attributed: f64 = per_transform.values().sum();
    let timed_wall = wall_ms.max(f64::MIN_POSITIVE);
    Ok(BenchReport {
        config_name: config_name.to_string(),
        mode: opts.mode,
        patch_dims: opts.patch_dims,
        iterations: opts.iterations,
        workers,
        total_ms,
        ms_per_patch,
        patches_per_s: (opts.iterations + opts.warmup * workers) as f64 / (timed_wall / 1e3),
        wall_ms,
        per_transform_ms: per_transform,
        overhead_ms: (ms_per_patch - attributed).max(0.0),
        epoch_estimate_s: ms_per_patch * (EPOCH_ITERATIONS * EPOCH_BATCH_SIZE) as f64 / 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: BenchMode, workers: usize) -> BenchOptions {
        BenchOptions {
            patch_dims: [12, 16, 12],
            iterations: 6,
            warmup: 1,
            mode,
            workers,
            ..Default::default()
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        let opts = BenchOptions { iterations: 0, ..small(BenchMode::Pipeline, 1) };
        assert!(matches!(run_benchmark(&PipelineConfig::default_config(), "default", &opts), Err(Error::Argument(_))));
    }

    #[test]
    fn empty_pipeline_is_overhead_only() {
        let mut cfg = PipelineConfig::default_config();
        cfg.geometric.clear();
        cfg.novel.clear();
        cfg.baseline_intensity.clear();
        let r = run_benchmark(&cfg, "empty", &small(BenchMode::Pipeline, 1)).unwrap();
        assert!(r.per_transform_ms.is_empty());
        assert_eq!(r.overhead_ms, r.ms_per_patch);
    }

    #[test]
    fn accounting_holds_in_both_modes() {
        let cfg = PipelineConfig::default_config();
        for (mode, workers) in [(BenchMode::Pipeline, 1), (BenchMode::PerTransform, 1), (BenchMode::Pipeline, 3)] {
            let r = run_benchmark(&cfg, "default", &small(mode, workers)).unwrap();
            assert!(r.total_ms >= r.transform_ms_sum());
            assert!(r.ms_per_patch >= r.transform_ms_sum());
            assert!((r.ms_per_patch - r.total_ms / r.iterations as f64).abs() < 1e-9);
            assert!(r.patches_per_s > 0.0);
        }
        let r = run_benchmark(&cfg, "default", &small(BenchMode::PerTransform, 1)).unwrap();
        assert_eq!(r.per_transform_ms.len(), 14);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("per-transform".parse::<BenchMode>().unwrap(), BenchMode::PerTransform);
        assert!("fast".parse::<BenchMode>().is_err());
    }
}
