//! Documentation mosaic: one row per input image, one column per novel
//! transform (first column unmodified). Each tile is the middle slice along
//! `axis`, rescaled to [0, 1]; tile (row, col) starts at voxel
//! `(col * w, row * h, 0)` of a single-slice volume.

use std::path::{Path, PathBuf};

use super::load_pair;
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineConfig, Section};
use crate::rng::{RngStream, StreamRng};
use crate::synth::synthetic_sample;
use crate::volume::{min_max_normalize, save_nifti, Geometry, Sample, Volume};

const SYNTHETIC_DIMS: [usize; 3] = [64, 96, 64];

/// Middle slice along `axis` as (width, height, values).
fn mid_slice(v: &Volume<f32>, axis: usize) -> (usize, usize, Vec<f32>) {
    let d = v.dims();
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mid = d[axis] / 2;
    let mut out = Vec::with_capacity(d[a] * d[b]);
    for y in 0..d[b] {
        for x in 0..d[a] {
            let mut idx = [0; 3];
            idx[axis] = mid;
            idx[a] = x;
            idx[b] = y;
            out.push(v.get(idx[0], idx[1], idx[2]));
        }
    }
    (d[a], d[b], out)
}

/// Writes the mosaic and returns the column titles.
pub fn render_preview(images: &[PathBuf], labels: &[PathBuf], cfg: &PipelineConfig, seed: u64, axis: usize, out: &Path) -> Result<Vec<String>> {
    if axis > 2 {
        return Err(Error::arg(format!("slice axis {axis} must be 0, 1 or 2")));
    }
    if images.len() != labels.len() {
        return Err(Error::arg(format!("{} --image but {} --labels", images.len(), labels.len())));
    }
    let samples: Vec<Sample<f32>> = if images.is_empty() {
        vec![synthetic_sample(SYNTHETIC_DIMS, seed)]
    } else {
        images.iter().zip(labels).map(|(i, l)| load_pair(i, l)).collect::<Result<_>>()?
    };
    let pipeline = Pipeline::compile(cfg)?.with_all_probabilities(1.0);
    let steps: Vec<_> = pipeline.steps.iter().filter(|s| s.section == Section::Novel).collect();
    let mut columns = vec!["original".to_string()];
    columns.extend(steps.iter().map(|s| s.transform.name().to_string()));

    let mut rows: Vec<Vec<(usize, usize, Vec<f32>)>> = Vec::new();
    for (r, s) in samples.iter().enumerate() {
        let mut tiles = vec![s.image.clone()];
        for step in &steps {
            let mut rng: StreamRng = RngStream::derive(seed, r as u64, 0, step.position as u64).rng();
            tiles.push(step.transform.apply(s.clone(), &mut rng)?.image);
        }
        rows.push(tiles.iter().map(|t| mid_slice(&min_max_normalize(t).0, axis)).collect());
    }
    let w = rows.iter().flatten().map(|t| t.0).max().unwrap_or(1);
    let h = rows.iter().flatten().map(|t| t.1).max().unwrap_or(1);
    let dims = [w * columns.len(), h * rows.len(), 1];
    let mut data = vec![0f32; dims[0] * dims[1]];
    for (r, row) in rows.iter().enumerate() {
        for (c, (tw, th, vals)) in row.iter().enumerate() {
            for y in 0..*th {
                let start = (r * h + y) * dims[0] + c * w;
                data[start..start + tw].copy_from_slice(&vals[y * tw..(y + 1) * tw]);
            }
        }
    }
    save_nifti(&Volume::new(Geometry::identity(dims), data)?, out)?;
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::load_nifti;

    #[test]
    fn synthetic_mosaic_layout() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("mosaic.nii.gz");
        let cfg = PipelineConfig::default_config();
        let cols = render_preview(&[], &[], &cfg, 1, 2, &out).unwrap();
        assert_eq!(cols.len(), 9);
        let m: Volume<f32> = load_nifti(&out).unwrap();
        assert_eq!(m.dims(), [SYNTHETIC_DIMS[0] * 9, SYNTHETIC_DIMS[1], 1]);
        let (lo, hi) = m.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn slice_axes() {
        let v = Volume::from_fn(Geometry::identity([2, 3, 4]), |i, j, k| (i + 10 * j + 100 * k) as f32);
        let (w, h, s) = mid_slice(&v, 2);
        assert_eq!((w, h), (2, 3));
        assert_eq!(s[1 + 2 * 2], 1.0 + 20.0 + 200.0);
        let (w, h, _) = mid_slice(&v, 0);
        assert_eq!((w, h), (3, 4));
    }
}
