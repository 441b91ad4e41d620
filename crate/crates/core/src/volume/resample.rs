//! Axis-aligned regridding. Trilinear interpolation on an axis-aligned grid
//! is separable, so both modes run as three 1D passes.

use super::{Geometry, Grid};
use crate::error::{Error, Result};
use crate::scalar::{Voxel, VoxelKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// For each output index along one axis: the two source taps and the weight
/// of the upper tap.
pub(crate) struct AxisMap {
    taps: Vec<(usize, usize, f64)>,
}

impl AxisMap {
    /// `coord(o)` is the continuous source index of output index `o`;
    /// coordinates are clamped to the source extent.
    pub(crate) fn new(n_in: usize, n_out: usize, mode: Interpolation, coord: impl Fn(usize) -> f64) -> Self {
        let last = (n_in - 1) as f64;
        let taps = (0..n_out)
            .map(|o| {
                let x = coord(o).clamp(0.0, last);
                match mode {
                    Interpolation::Nearest => {
                        let i = x.round() as usize;
                        (i, i, 0.0)
                    }
                    Interpolation::Trilinear => {
                        let lo = x.floor() as usize;
                        let hi = (lo + 1).min(n_in - 1);
                        (lo, hi, x - lo as f64)
                    }
                }
            })
            .collect();
        AxisMap { taps }
    }

    fn len(&self) -> usize {
        self.taps.len()
    }
}

/// Separable resize of a dense grid. Intermediate passes run in `f64`;
/// `store` converts the final values.
pub(crate) fn resize<S: Voxel, D>(data: &[S], dims: [usize; 3], maps: &[AxisMap; 3], store: impl Fn(f64) -> D) -> Vec<D> {
    let [nx, ny, nz] = dims;
    let (mx, my, mz) = (maps[0].len(), maps[1].len(), maps[2].len());
    // Exact when both taps agree, so constant regions stay constant.
    let lerp = |x0: f64, x1: f64, w: f64| x0 + (x1 - x0) * w;

    let mut a = Vec::with_capacity(mx * ny * nz);
    for src in data.chunks_exact(nx) {
        a.extend(maps[0].taps.iter().map(|&(lo, hi, w)| lerp(src[lo].to_f64(), src[hi].to_f64(), w)));
    }

    let mut b = Vec::with_capacity(mx * my * nz);
    for k in 0..nz {
        for &(lo, hi, w) in &maps[1].taps {
            let s0 = &a[(k * ny + lo) * mx..(k * ny + lo + 1) * mx];
            let s1 = &a[(k * ny + hi) * mx..(k * ny + hi + 1) * mx];
            b.extend(s0.iter().zip(s1).map(|(&x0, &x1)| lerp(x0, x1, w)));
        }
    }

    let plane = mx * my;
    let mut c = Vec::with_capacity(plane * mz);
    for &(lo, hi, w) in &maps[2].taps {
        let s0 = &b[lo * plane..(lo + 1) * plane];
        let s1 = &b[hi * plane..(hi + 1) * plane];
        c.extend(s0.iter().zip(s1).map(|(&x0, &x1)| store(lerp(x0, x1, w))));
    }
    c
}

/// Output dims for a spacing change: `round(dim * old / new)`, at least 1.
pub fn resampled_dims(dims: [usize; 3], spacing: [f64; 3], target: [f64; 3]) -> [usize; 3] {
    [0, 1, 2].map(|a| ((dims[a] as f64 * spacing[a] / target[a]).round() as usize).max(1))
}

/// Regrids to `target_spacing` (mm). Voxel (0, 0, 0) keeps its world
/// position. Label grids must use nearest-neighbour.
pub fn resample<V: Voxel>(grid: &Grid<V>, target_spacing: [f64; 3], mode: Interpolation) -> Result<Grid<V>> {
    if target_spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::arg(format!("target spacing must be > 0, got {target_spacing:?}")));
    }
    if V::KIND == VoxelKind::Label && mode == Interpolation::Trilinear {
        return Err(Error::arg("trilinear interpolation is not defined for label maps"));
    }
    let src = grid.geometry();
    let dims = src.dims();
    let spacing = src.spacing();
    let out_dims = resampled_dims(dims, spacing, target_spacing);
    let ratio = [0, 1, 2].map(|a| target_spacing[a] / spacing[a]);

    let mut affine = *src.affine();
    for (c, r) in ratio.iter().enumerate() {
        for row in 0..3 {
            affine[(row, c)] *= r;
        }
    }
    let geometry = Geometry::from_affine(out_dims, affine)?;
    if out_dims == dims && ratio == [1.0; 3] {
        return Ok(Grid::from_parts(geometry, grid.data().to_vec()));
    }

    let maps = [0, 1, 2].map(|a| AxisMap::new(dims[a], out_dims[a], mode, |o| o as f64 * ratio[a]));
    let out = resize(grid.data(), dims, &maps, |x| x);
    let data = out
        .into_iter()
        .map(|x| V::from_f64_checked(x).ok_or_else(|| Error::Invariant(format!("resampled value {x} not representable"))))
        .collect::<Result<Vec<V>>>()?;
    Ok(Grid::from_parts(geometry, data))
}
