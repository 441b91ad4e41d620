//! Volumes, label maps and the preprocessing operations that act on them.

mod nifti;
mod ops;
mod orientation;
pub(crate) mod resample;

pub use nifti::{load_nifti, save_nifti, NiftiHeader};
pub use ops::{
    extract_patch, min_max_normalize, preprocess, relabel, reorient, restore_range, LabelMapping, MAX_CLASS,
    TARGET_ORIENTATION, TARGET_SPACING,
};
pub use orientation::{Direction, Orientation};
pub use resample::{resample, Interpolation};

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::scalar::{Real, Voxel};

/// Relative tolerance used when comparing spacing and affines of paired grids.
pub const GEOMETRY_RTOL: f64 = 1e-5;

/// Grid extent plus voxel-to-world mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
    orientation: Orientation,
}

impl Geometry {
    /// Builds a geometry from a voxel-to-world affine (mm). Spacing is the
    /// column norm of the affine's linear part.
    pub fn from_affine(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::arg(format!("dims must be >= 1, got {dims:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("affine has non-finite entries"));
        }
        let det = affine.fixed_view::<3, 3>(0, 0).determinant();
        if det.abs() < 1e-12 {
            return Err(Error::arg("affine is singular"));
        }
        let spacing = [0, 1, 2].map(|c| affine.fixed_view::<3, 1>(0, c).norm());
        let orientation = Orientation::from_affine(&affine)?;
        Ok(Geometry {
            dims,
            spacing,
            affine,
            orientation,
        })
    }

    /// Axis-aligned geometry with the world origin at voxel (0, 0, 0).
    pub fn aligned(dims: [usize; 3], spacing: [f64; 3], orientation: Orientation) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::arg(format!("spacing must be > 0, got {spacing:?}")));
        }
        let mut affine = Matrix4::identity();
        affine.fixed_view_mut::<3, 3>(0, 0).fill(0.0);
        for (axis, dir) in orientation.0.iter().enumerate() {
            affine[(dir.world_axis(), axis)] = dir.sign() * spacing[axis];
        }
        Geometry::from_affine(dims, affine)
    }

    /// RAS geometry with 1 mm spacing.
    pub fn identity(dims: [usize; 3]) -> Self {
        Geometry::aligned(dims, [1.0; 3], Orientation::RAS).expect("identity geometry is valid")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of voxel (i, j, k); axis 0 varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// World coordinate (mm) of a possibly fractional voxel index.
    pub fn world(&self, idx: [f64; 3]) -> [f64; 3] {
        let p = self.affine * Vector4::new(idx[0], idx[1], idx[2], 1.0);
        [p[0], p[1], p[2]]
    }

    /// Same dims and orientation; spacing and affine equal within `rtol`
    /// relative to the affine's scale.
    pub fn matches(&self, other: &Geometry, rtol: f64) -> bool {
        if self.dims != other.dims || self.orientation != other.orientation {
            return false;
        }
        let scale = self.affine.amax().max(other.affine.amax()).max(1.0);
        let spacing_ok = self
            .spacing
            .iter()
            .zip(other.spacing)
            .all(|(a, b)| (a - b).abs() <= rtol * a.abs().max(b.abs()));
        spacing_ok && (self.affine - other.affine).amax() <= rtol * scale
    }
}

/// Dense 3D grid of voxels with geometry. Immutable by convention: every
/// operation returns a new grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<V> {
    geometry: Geometry,
    data: Vec<V>,
}

/// Image intensities.
pub type Volume<T = f32> = Grid<T>;

/// Semantic segmentation: 0 background, 1 vertebrae, 2 intervertebral disc,
/// 3 spinal canal.
pub type LabelMap = Grid<u8>;

/// Source segmentation before relabeling.
pub type RawLabelMap = Grid<u32>;

impl<V: Voxel> Grid<V> {
    pub fn new(geometry: Geometry, data: Vec<V>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Shape(format!(
                "{} voxels for dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Grid { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: V) -> Self {
        let data = vec![value; geometry.len()];
        Grid { geometry, data }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> V) -> Self {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Grid { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[V] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [V] {
        &mut self.data
    }

    /// Replaces every voxel by `f(voxel)` in storage order.
    pub fn update(&mut self, mut f: impl FnMut(V) -> V) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn into_data(self) -> Vec<V> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> V {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Same geometry, new contents.
    pub fn with_data<W: Voxel>(&self, data: Vec<W>) -> Grid<W> {
        assert_eq!(data.len(), self.data.len(), "voxel count must not change");
        Grid {
            geometry: self.geometry.clone(),
            data,
        }
    }

    pub fn map<W: Voxel>(&self, f: impl Fn(V) -> W) -> Grid<W> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn from_parts(geometry: Geometry, data: Vec<V>) -> Self {
        debug_assert_eq!(geometry.len(), data.len());
        Grid { geometry, data }
    }
}

impl<T: Real> Grid<T> {
    pub fn min_max(&self) -> (T, T) {
        crate::scalar::min_max(&self.data)
    }

    /// Errors when any voxel is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Invariant(format!("non-finite voxel at linear index {i}"))),
            None => Ok(()),
        }
    }

    /// Converts to another real type (e.g. f32 to f64).
    pub fn cast<U: Real>(&self) -> Grid<U> {
        self.map(|v| U::lit(v.as_f64()))
    }
}

impl Grid<u8> {
    /// Sorted distinct label values.
    pub fn label_set(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..=255u8).filter(|&v| seen[v as usize]).collect()
    }
}

/// Image/label pair sharing one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T: Real = f32> {
    pub image: Volume<T>,
    pub labels: LabelMap,
}

impl<T: Real> Sample<T> {
    pub fn new(image: Volume<T>, labels: LabelMap) -> Result<Self> {
        if !image.geometry().matches(labels.geometry(), GEOMETRY_RTOL) {
            return Err(Error::Shape(format!(
                "image {:?} {} and labels {:?} {} do not share geometry",
                image.dims(),
                image.geometry().orientation(),
                labels.dims(),
                labels.geometry().orientation()
            )));
        }
        Ok(Sample { image, labels })
    }

    pub fn geometry(&self) -> &Geometry {
        self.image.geometry()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_pir_affine() {
        let g = Geometry::aligned([4, 5, 6], [2.0, 1.0, 0.5], Orientation::PIR).unwrap();
        let a = g.affine();
        assert_eq!(a[(1, 0)], -2.0);
        assert_eq!(a[(2, 1)], -1.0);
        assert_eq!(a[(0, 2)], 0.5);
        assert_eq!(g.orientation(), Orientation::PIR);
        assert_eq!(g.spacing(), [2.0, 1.0, 0.5]);
    }

    #[test]
    fn zero_dim_and_singular_affine_rejected() {
        assert!(Geometry::from_affine([0, 1, 1], Matrix4::identity()).is_err());
        let mut a = Matrix4::identity();
        a[(2, 2)] = 0.0;
        assert!(Geometry::from_affine([1, 1, 1], a).is_err());
    }

    #[test]
    fn sample_requires_matching_geometry() {
        let img = Volume::<f32>::filled(Geometry::identity([2, 2, 2]), 0.0);
        let lab = LabelMap::filled(Geometry::identity([2, 2, 3]), 0);
        assert!(Sample::new(img.clone(), lab).is_err());
        let lab = LabelMap::filled(Geometry::identity([2, 2, 2]), 0);
        assert!(Sample::new(img, lab).is_ok());
    }
}
