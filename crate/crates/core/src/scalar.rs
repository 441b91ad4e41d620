//! Scalar and voxel element traits.
//!
//! Image math is generic over [`Real`] (implemented for `f32` and `f64`);
//! label grids use `u8`. Anything stored in a [`Grid`](crate::Grid) is a
//! [`Voxel`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// What a grid element represents. Interpolating resamplers refuse label data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxelKind {
    Intensity,
    Label,
}

/// Element type of a [`Grid`](crate::Grid).
pub trait Voxel: Copy + Debug + PartialEq + PartialOrd + Default + Send + Sync + 'static {
    const KIND: VoxelKind;
    /// NIfTI `datatype` code used when this element type is saved.
    const NIFTI_DATATYPE: i16;

    fn to_f64(self) -> f64;
    /// Converts a decoded file value. `None` when the value is not representable.
    fn from_f64_checked(x: f64) -> Option<Self>;
}

/// Floating point scalar used for image intensities.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Voxel + Display
{
    /// Converts an `f64` literal or computed value into `Self` with an `as`
    /// cast (values beyond the `f32` range become infinite).
    fn lit(x: f64) -> Self;

    #[inline]
    fn as_f64(self) -> f64 {
        Voxel::to_f64(self)
    }
}

impl Voxel for f32 {
    const KIND: VoxelKind = VoxelKind::Intensity;
    const NIFTI_DATATYPE: i16 = 16;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64_checked(x: f64) -> Option<Self> {
        let v = x as f32;
        v.is_finite().then_some(v)
    }
}

impl Voxel for f64 {
    const KIND: VoxelKind = VoxelKind::Intensity;
    const NIFTI_DATATYPE: i16 = 64;

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    fn from_f64_checked(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
}

impl Voxel for u8 {
    const KIND: VoxelKind = VoxelKind::Label;
    const NIFTI_DATATYPE: i16 = 2;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64_checked(x: f64) -> Option<Self> {
        (x.fract() == 0.0 && (0.0..=255.0).contains(&x)).then_some(x as u8)
    }
}

/// Raw integer labels as found in source segmentations, before relabeling.
impl Voxel for u32 {
    const KIND: VoxelKind = VoxelKind::Label;
    const NIFTI_DATATYPE: i16 = 768;

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64_checked(x: f64) -> Option<Self> {
        (x.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&x)).then_some(x as u32)
    }
}

/// Integer label element that can be relabeled.
pub trait LabelValue: Voxel + Ord + Display {
    fn as_u32(self) -> u32;
}

impl LabelValue for u8 {
    fn as_u32(self) -> u32 {
        self as u32
    }
}

impl LabelValue for u32 {
    fn as_u32(self) -> u32 {
        self
    }
}

/// Min and max of a slice of reals, computed in one pass.
pub fn min_max<T: Real>(data: &[T]) -> (T, T) {
    if data.is_empty() {
        return (T::zero(), T::zero());
    }
    // Independent lanes keep the loop free of carried branches so it vectorizes.
    const LANES: usize = 16;
    let mut lo = [T::infinity(); LANES];
    let mut hi = [T::neg_infinity(); LANES];
    let mut chunks = data.chunks_exact(LANES);
    for c in &mut chunks {
        for i in 0..LANES {
            lo[i] = if c[i] < lo[i] { c[i] } else { lo[i] };
            hi[i] = if c[i] > hi[i] { c[i] } else { hi[i] };
        }
    }
    let tail = chunks.remainder();
    let lo = lo.iter().chain(tail).fold(T::infinity(), |a, &v| if v < a { v } else { a });
    let hi = hi.iter().chain(tail).fold(T::neg_infinity(), |a, &v| if v > a { v } else { a });
    (lo, hi)
}

/// Mean accumulated in `f64`.
pub fn mean<T: Real>(data: &[T]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    data.iter().map(|v| v.as_f64()).sum::<f64>() / data.len() as f64
}
