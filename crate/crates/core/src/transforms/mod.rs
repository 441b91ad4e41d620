//! Augmentation transforms.
//!
//! Baseline transforms mirror a conventional segmentation-training default
//! set; the appearance transforms in [`novel`] perturb intensity and texture
//! to mimic cross-modality shifts. All are pure functions of their inputs
//! and the random stream they are handed.

pub mod baseline;
pub mod novel;
pub mod spatial;

pub use baseline::*;
pub use novel::*;
pub use spatial::{apply_spatial, random_spatial, warp_image, warp_labels, SpatialMap, SpatialParams};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::Volume;

pub(crate) fn check_probabilities(what: &str, probs: impl IntoIterator<Item = f64>) -> Result<()> {
    for p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg(format!("{what}: probability {p} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Linearly maps `field` onto `[lo, hi]`. A constant field maps to `lo`.
pub(crate) fn rescale_to_range<S: Real, T: Real>(field: &[S], lo: T, hi: T) -> Vec<T> {
    let (fmin, fmax) = crate::scalar::min_max(field);
    let (fmin, fmax) = (fmin.as_f64(), fmax.as_f64());
    let (lo64, hi64) = (lo.as_f64(), hi.as_f64());
    let range = hi64 - lo64;
    if fmax > fmin {
        let inv = 1.0 / (fmax - fmin);
        field
            .iter()
            .map(|&f| T::lit(((f.as_f64() - fmin) * inv * range + lo64).max(lo64).min(hi64)))
            .collect()
    } else {
        vec![lo; field.len()]
    }
}

/// Clamps to `[min - R, max + R]` where `R = max - min` of `reference`.
pub fn clamp_drift<T: Real>(mut vol: Volume<T>, reference: (T, T)) -> Volume<T> {
    let (lo, hi) = reference;
    let r = hi - lo;
    let (a, b) = (lo - r, hi + r);
    for v in vol.data_mut() {
        *v = v.max(a).min(b);
    }
    vol
}
