//! In-memory entry point for array-based data loaders.
//!
//! Arrays are indexed `[i, j, k]` along the volume axes. Loaders usually hold
//! C-ordered arrays (last index fastest); the engine stores axis 0 fastest,
//! so C input is transposed on the way in and out.

use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::volume::{Geometry, LabelMap, Orientation, Sample, Volume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MemoryOrder {
    #[default]
    C,
    Fortran,
}

/// Borrowed image/label arrays plus optional geometry metadata.
#[derive(Clone, Copy, Debug)]
pub struct ArrayBatchView<'a> {
    pub image: &'a [f32],
    pub labels: &'a [u8],
    pub shape: [usize; 3],
    pub order: MemoryOrder,
    pub spacing: Option<[f64; 3]>,
    pub orientation: Option<Orientation>,
}

impl<'a> ArrayBatchView<'a> {
    pub fn new(image: &'a [f32], labels: &'a [u8], shape: [usize; 3]) -> Self {
        ArrayBatchView {
            image,
            labels,
            shape,
            order: MemoryOrder::C,
            spacing: None,
            orientation: None,
        }
    }

    fn geometry(&self) -> Result<Geometry> {
        let n: usize = self.shape.iter().product();
        if n == 0 {
            return Err(Error::arg(format!("array shape {:?} has no voxels", self.shape)));
        }
        if self.image.len() != n || self.labels.len() != n {
            return Err(Error::arg(format!(
                "shape {:?} needs {n} voxels, got image {} and labels {}",
                self.shape,
                self.image.len(),
                self.labels.len()
            )));
        }
        Geometry::aligned(
            self.shape,
            self.spacing.unwrap_or([1.0; 3]),
            self.orientation.unwrap_or(Orientation::PIR),
        )
    }

    pub fn to_sample(&self) -> Result<Sample<f32>> {
        let geometry = self.geometry()?;
        Ok(Sample {
            image: Volume::new(geometry.clone(), to_engine(self.image, self.shape, self.order))?,
            labels: LabelMap::new(geometry, to_engine(self.labels, self.shape, self.order))?,
        })
    }
}

/// Owned output arrays in the same memory order as the input view.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayBatch {
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
    pub shape: [usize; 3],
    pub order: MemoryOrder,
}

impl ArrayBatch {
    pub fn from_sample(s: &Sample<f32>, order: MemoryOrder) -> Self {
        let shape = s.image.dims();
        ArrayBatch {
            image: from_engine(s.image.data(), shape, order),
            labels: from_engine(s.labels.data(), shape, order),
            shape,
            order,
        }
    }
}

fn to_engine<V: Copy>(data: &[V], [nx, ny, nz]: [usize; 3], order: MemoryOrder) -> Vec<V> {
    match order {
        MemoryOrder::Fortran => data.to_vec(),
        MemoryOrder::C => {
            let mut out = Vec::with_capacity(data.len());
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        out.push(data[(i * ny + j) * nz + k]);
                    }
                }
            }
            out
        }
    }
}

fn from_engine<V: Copy>(data: &[V], [nx, ny, nz]: [usize; 3], order: MemoryOrder) -> Vec<V> {
    match order {
        MemoryOrder::Fortran => data.to_vec(),
        MemoryOrder::C => {
            let mut out = Vec::with_capacity(data.len());
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        out.push(data[i + nx * (j + ny * k)]);
                    }
                }
            }
            out
        }
    }
}

/// Applies `cfg` with `seed` replacing its global seed. The caller's arrays
/// are only read.
pub fn apply_arrays(view: &ArrayBatchView<'_>, cfg: &PipelineConfig, seed: u64, sample_id: u64, epoch: u64) -> Result<ArrayBatch> {
    let sample = view.to_sample()?;
    let mut pipeline = Pipeline::compile(cfg)?;
    pipeline.global_seed = seed;
    let out = pipeline.apply(&sample, sample_id, epoch)?;
    Ok(ArrayBatch::from_sample(&out, view.order))
}

/// Same as [`apply_arrays`] for a grid that is already in engine layout.
pub fn apply_sample(sample: &Sample<f32>, cfg: &PipelineConfig, seed: u64, sample_id: u64, epoch: u64) -> Result<Sample<f32>> {
    let mut pipeline = Pipeline::compile(cfg)?;
    pipeline.global_seed = seed;
    pipeline.apply(sample, sample_id, epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthetic_sample;

    #[test]
    fn c_order_round_trip() {
        let shape = [3, 4, 5];
        let data: Vec<u32> = (0..60).collect();
        let e = to_engine(&data, shape, MemoryOrder::C);
        // C index (1, 2, 3) = 1*20 + 2*5 + 3 = 33 lands at engine 1 + 3*(2 + 4*3).
        assert_eq!(e[1 + 3 * (2 + 4 * 3)], 33);
        assert_eq!(from_engine(&e, shape, MemoryOrder::C), data);
    }

    #[test]
    fn matches_engine_pipeline_and_leaves_input_alone() {
        let s = synthetic_sample::<f32>([10, 12, 9], 4);
        let cfg = PipelineConfig::default_config().with_all_probabilities(1.0);
        let c = ArrayBatch::from_sample(&s, MemoryOrder::C);
        let before = c.clone();
        let view = ArrayBatchView::new(&c.image, &c.labels, c.shape);
        let out = apply_arrays(&view, &cfg, 11, 2, 1).unwrap();
        assert_eq!(c, before);
        let reference = apply_sample(&s, &cfg, 11, 2, 1).unwrap();
        assert_eq!(out, ArrayBatch::from_sample(&reference, MemoryOrder::C));
        let f = ArrayBatch::from_sample(&s, MemoryOrder::Fortran);
        let view = ArrayBatchView { order: MemoryOrder::Fortran, ..ArrayBatchView::new(&f.image, &f.labels, f.shape) };
        assert_eq!(apply_arrays(&view, &cfg, 11, 2, 1).unwrap().image, reference.image.data());
    }

    #[test]
    fn zero_probability_is_identity() {
        let s = synthetic_sample::<f32>([6, 6, 6], 1);
        let c = ArrayBatch::from_sample(&s, MemoryOrder::C);
        let cfg = PipelineConfig::default_config().with_all_probabilities(0.0);
        let out = apply_arrays(&ArrayBatchView::new(&c.image, &c.labels, c.shape), &cfg, 1, 0, 0).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn shape_errors() {
        let img = vec![0.0f32; 8];
        let lab = vec![0u8; 7];
        let cfg = PipelineConfig::default_config();
        let r = apply_arrays(&ArrayBatchView::new(&img, &lab, [2, 2, 2]), &cfg, 0, 0, 0);
        assert!(matches!(r, Err(Error::Argument(_))));
    }
}
