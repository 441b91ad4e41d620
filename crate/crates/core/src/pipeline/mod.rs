//! Ordered, probabilistic and deterministic transform composition.
//!
//! Each spec owns a random substream derived from
//! `(global_seed, sample_id, epoch, position)`, where `position` is the
//! spec's index in canonical config order (geometric, novel, baseline).
//! The first draw of that substream is the spec's Bernoulli gate and is
//! consumed whether or not the transform runs.

mod ablation;
mod config;

pub use ablation::{ablation_variants, make_ablation_config};
pub use config::{
    OrderMode, PipelineConfig, Section, Transform, TransformSpec, BASELINE_INTENSITY_NAMES, DEFAULT_CONFIG_JSON,
    NOVEL_ORDER, SPATIAL_NAMES,
};

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{bernoulli, RngStream, StreamRng};
use crate::scalar::Real;
use crate::transforms::{self, clamp_drift};
use crate::volume::Sample;

/// Substream position reserved for the shuffle permutation.
const SHUFFLE_POSITION: u64 = u64::MAX;

/// One validated spec.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub position: usize,
    pub section: Section,
    pub probability: f64,
    pub transform: Transform,
}

/// A validated, immutable pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub global_seed: u64,
    pub order_mode: OrderMode,
    pub steps: Vec<Step>,
}

/// What happened to one spec during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub position: usize,
    pub name: &'static str,
    pub section: Section,
    pub applied: bool,
    pub elapsed: Duration,
}

impl Transform {
    /// Applies the transform to an owned sample using `rng` for every draw.
    pub fn apply<T: Real>(&self, mut s: Sample<T>, rng: &mut StreamRng) -> Result<Sample<T>> {
        use Transform::*;
        let reference = self.needs_drift_clamp().then(|| s.image.min_max());
        let img = &mut s.image;
        match self {
            Spatial(p) => return Ok(transforms::random_spatial(&s, rng, p)),
            RedistributeSeg(p) => transforms::redistribute_seg_in_place(img, &s.labels, rng, p),
            IntensityInversion => transforms::intensity_inversion_in_place(img),
            ScharrFilter => *img = transforms::scharr_filter(img)?,
            RandomConv(p) => *img = transforms::random_conv(img, rng, p),
            HistogramEqualization(p) => transforms::histogram_equalization_in_place(img, p.bins),
            BiasField(p) => transforms::bias_field_in_place(img, rng, p),
            UnsharpMasking(p) => *img = transforms::unsharp_masking(img, rng, p),
            FunctionTransform(p) => transforms::function_transform_in_place(img, rng, &p.functions)?,
            GaussianNoise(p) => transforms::gaussian_noise_in_place(img, rng, p.sigma_range),
            GaussianBlur(p) => *img = transforms::gaussian_blur(img, rng, p.sigma_range),
            SimulateLowResolution(p) => *img = transforms::simulate_low_resolution(img, rng, p.factor_range),
            BrightnessContrast(p) => {
                transforms::brightness_contrast_in_place(img, rng, p.brightness_range, p.contrast_range)
            }
            GammaCorrection(p) => transforms::gamma_correction_in_place(img, rng, p.gamma_range),
        }
        if let Some(reference) = reference {
            s.image = clamp_drift(s.image, reference);
        }
        Ok(s)
    }

    /// Forces every internal probability (spatial gates) to `p`.
    pub fn with_probabilities(self, p: f64) -> Self {
        match self {
            Transform::Spatial(sp) => Transform::Spatial(sp.with_probabilities(p)),
            other => other,
        }
    }
}

impl Pipeline {
    /// Validates a config. Errors name the offending spec, e.g. `novel[2]`.
    pub fn compile(cfg: &PipelineConfig) -> Result<Self> {
        let mut steps = Vec::new();
        for (section, specs) in cfg.sections() {
            for (idx, spec) in specs.iter().enumerate() {
                let at = |msg: String| Error::config(format!("{}[{idx}] ({}): {msg}", section.key(), spec.name));
                if !(0.0..=1.0).contains(&spec.probability) {
                    return Err(at(format!("probability {} outside [0, 1]", spec.probability)));
                }
                let transform = Transform::from_spec(&spec.name, &spec.params).map_err(|e| match e {
                    Error::Config(m) => at(m),
                    other => other,
                })?;
                if transform.is_spatial() != (section == Section::Geometric) {
                    return Err(at(if section == Section::Geometric {
                        "only spatial transforms belong in the geometric list".into()
                    } else {
                        "spatial transforms belong in the geometric list".into()
                    }));
                }
                steps.push(Step {
                    position: steps.len(),
                    section,
                    probability: spec.probability,
                    transform,
                });
            }
        }
        Ok(Pipeline {
            global_seed: cfg.global_seed,
            order_mode: cfg.order_mode,
            steps,
        })
    }

    /// Sets every gate, including internal spatial gates, to `p`.
    pub fn with_all_probabilities(mut self, p: f64) -> Self {
        for step in &mut self.steps {
            step.probability = p;
            step.transform = step.transform.clone().with_probabilities(p);
        }
        self
    }

    /// Execution order of step indices for one (sample, epoch).
    pub fn order(&self, sample_id: u64, epoch: u64) -> Vec<usize> {
        let (geo, mut rest): (Vec<usize>, Vec<usize>) =
            (0..self.steps.len()).partition(|&i| self.steps[i].section == Section::Geometric);
        if self.order_mode == OrderMode::ShuffleNonGeometric {
            let mut rng = RngStream::derive(self.global_seed, sample_id, epoch, SHUFFLE_POSITION).rng();
            rest.shuffle(&mut rng);
        }
        geo.into_iter().chain(rest).collect()
    }

    pub fn apply<T: Real>(&self, s: &Sample<T>, sample_id: u64, epoch: u64) -> Result<Sample<T>> {
        self.apply_traced(s, sample_id, epoch).map(|(out, _)| out)
    }

    /// Runs the pipeline and reports, in execution order, whether each spec
    /// fired and how long it took.
    pub fn apply_traced<T: Real>(&self, s: &Sample<T>, sample_id: u64, epoch: u64) -> Result<(Sample<T>, Vec<TraceEvent>)> {
        let mut cur = s.clone();
        let mut trace = Vec::with_capacity(self.steps.len());
        for idx in self.order(sample_id, epoch) {
            let step = &self.steps[idx];
            let mut rng = RngStream::derive(self.global_seed, sample_id, epoch, step.position as u64).rng();
            let applied = bernoulli(&mut rng, step.probability);
            let start = Instant::now();
            if applied {
                cur = step.transform.apply(cur, &mut rng)?;
            }
            trace.push(TraceEvent {
                position: step.position,
                name: step.transform.name(),
                section: step.section,
                applied,
                elapsed: start.elapsed(),
            });
        }
        check_output(s, &cur)?;
        Ok((cur, trace))
    }
}

fn check_output<T: Real>(input: &Sample<T>, out: &Sample<T>) -> Result<()> {
    out.image.check_finite()?;
    if out.image.geometry() != input.image.geometry() || out.labels.geometry() != input.labels.geometry() {
        return Err(Error::Invariant("pipeline changed sample geometry".into()));
    }
    Ok(())
}

/// Compiles `cfg` and applies it to one sample.
pub fn apply_pipeline<T: Real>(s: &Sample<T>, cfg: &PipelineConfig, sample_id: u64, epoch: u64) -> Result<Sample<T>> {
    Pipeline::compile(cfg)?.apply(s, sample_id, epoch)
}
