//! Retained default intensity augmentations.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::rng::Interval;
use crate::scalar::{mean, Real};
use crate::volume::resample::{resize, AxisMap};
use crate::volume::{Interpolation, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub sigma_range: Interval,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            sigma_range: Interval(0.0, 0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurParams {
    /// Gaussian sigma in voxels, drawn independently per axis.
    pub sigma_range: Interval,
}

impl Default for BlurParams {
    fn default() -> Self {
        BlurParams {
            sigma_range: Interval(0.5, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowResParams {
    pub factor_range: Interval,
}

impl Default for LowResParams {
    fn default() -> Self {
        LowResParams {
            factor_range: Interval(1.0, 2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrightnessContrastParams {
    /// Offset as a fraction of the intensity range.
    pub brightness_range: Interval,
    pub contrast_range: Interval,
}

impl Default for BrightnessContrastParams {
    fn default() -> Self {
        BrightnessContrastParams {
            brightness_range: Interval(-0.25, 0.25),
            contrast_range: Interval(0.75, 1.25),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaParams {
    pub gamma_range: Interval,
}

impl Default for GammaParams {
    fn default() -> Self {
        GammaParams {
            gamma_range: Interval(0.7, 1.5),
        }
    }
}

fn non_negative(iv: &Interval, what: &str) -> Result<()> {
    iv.validate(what)?;
    if iv.lo() < 0.0 {
        return Err(Error::arg(format!("{what}: must be >= 0")));
    }
    Ok(())
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        non_negative(&self.sigma_range, "gaussian_noise.sigma_range")
    }
}

impl BlurParams {
    pub fn validate(&self) -> Result<()> {
        non_negative(&self.sigma_range, "gaussian_blur.sigma_range")
    }
}

impl LowResParams {
    pub fn validate(&self) -> Result<()> {
        self.factor_range.validate("simulate_low_resolution.factor_range")?;
        if self.factor_range.lo() < 1.0 {
            return Err(Error::arg("simulate_low_resolution.factor_range: factors must be >= 1"));
        }
        Ok(())
    }
}

impl BrightnessContrastParams {
    pub fn validate(&self) -> Result<()> {
        self.brightness_range.validate("brightness_contrast.brightness_range")?;
        self.contrast_range.validate("brightness_contrast.contrast_range")
    }
}

impl GammaParams {
    pub fn validate(&self) -> Result<()> {
        self.gamma_range.validate("gamma_correction.gamma_range")?;
        if self.gamma_range.lo() <= 0.0 {
            return Err(Error::arg("gamma_correction.gamma_range: gamma must be > 0"));
        }
        Ok(())
    }
}

/// Adds i.i.d. zero-mean Gaussian noise with a sampled sigma.
pub fn gaussian_noise<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, sigma_range: Interval) -> Volume<T> {
    let mut out = v.clone();
    gaussian_noise_in_place(&mut out, rng, sigma_range);
    out
}

pub fn gaussian_noise_in_place<T: Real, R: RngCore + ?Sized>(v: &mut Volume<T>, rng: &mut R, sigma_range: Interval) {
    let sigma = sigma_range.sample(rng);
    if sigma == 0.0 {
        return;
    }
    v.update(|x| {
        let n: f64 = StandardNormal.sample(rng);
        T::lit(x.as_f64() + sigma * n)
    });
}

/// Separable Gaussian blur with one sampled sigma per axis.
pub fn gaussian_blur<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, sigma_range: Interval) -> Volume<T> {
    let sigma = [0; 3].map(|_| sigma_range.sample(rng));
    v.with_data(filter::gaussian_blur(v.data(), v.dims(), sigma))
}

/// Nearest-neighbour downsampling by `factor` followed by trilinear
/// upsampling back to the original grid.
pub fn low_resolution_with_factor<T: Real>(v: &Volume<T>, factor: f64) -> Volume<T> {
    if factor <= 1.0 {
        return v.clone();
    }
    let dims = v.dims();
    let small = dims.map(|n| ((n as f64 / factor).round() as usize).max(1));
    if small == dims {
        return v.clone();
    }
    // Corner-aligned coordinates so both grids span the same extent.
    let ratio = |from: usize, to: usize| if to > 1 { (from - 1) as f64 / (to - 1) as f64 } else { 0.0 };
    let down = [0, 1, 2].map(|a| {
        let r = ratio(dims[a], small[a]);
        AxisMap::new(dims[a], small[a], Interpolation::Nearest, move |o| o as f64 * r)
    });
    let up = [0, 1, 2].map(|a| {
        let r = ratio(small[a], dims[a]);
        AxisMap::new(small[a], dims[a], Interpolation::Trilinear, move |o| o as f64 * r)
    });
    let low = resize(v.data(), dims, &down, |x| x);
    v.with_data(resize(&low, small, &up, T::lit))
}

pub fn simulate_low_resolution<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, factor_range: Interval) -> Volume<T> {
    let factor = factor_range.sample(rng);
    low_resolution_with_factor(v, factor)
}

/// `mean + c * (v - mean) + b * (max - min)` with fixed `b` and `c`.
pub fn brightness_contrast_with<T: Real>(v: &Volume<T>, brightness: f64, contrast: f64) -> Volume<T> {
    let mut out = v.clone();
    brightness_contrast_mut(&mut out, brightness, contrast);
    out
}

fn brightness_contrast_mut<T: Real>(v: &mut Volume<T>, brightness: f64, contrast: f64) {
    if brightness == 0.0 && contrast == 1.0 {
        return;
    }
    let m = mean(v.data());
    let (lo, hi) = v.min_max();
    let offset = brightness * (hi.as_f64() - lo.as_f64());
    v.update(|x| T::lit(m + contrast * (x.as_f64() - m) + offset));
}

pub fn brightness_contrast<T: Real, R: RngCore + ?Sized>(
    v: &Volume<T>,
    rng: &mut R,
    b_range: Interval,
    c_range: Interval,
) -> Volume<T> {
    let mut out = v.clone();
    brightness_contrast_in_place(&mut out, rng, b_range, c_range);
    out
}

pub fn brightness_contrast_in_place<T: Real, R: RngCore + ?Sized>(
    v: &mut Volume<T>,
    rng: &mut R,
    b_range: Interval,
    c_range: Interval,
) {
    let b = b_range.sample(rng);
    let c = c_range.sample(rng);
    brightness_contrast_mut(v, b, c);
}

/// Normalizes to [0, 1], raises to `gamma`, restores the original range.
pub fn gamma_with<T: Real>(v: &Volume<T>, gamma: f64) -> Volume<T> {
    let mut out = v.clone();
    gamma_mut(&mut out, gamma);
    out
}

fn gamma_mut<T: Real>(v: &mut Volume<T>, gamma: f64) {
    let (lo, hi) = v.min_max();
    if hi <= lo || gamma == 1.0 {
        return;
    }
    let (lo, range) = (lo.as_f64(), hi.as_f64() - lo.as_f64());
    let inv = 1.0 / range;
    // n^gamma as exp(gamma ln n); exact at n = 0 and n = 1.
    v.update(|x| {
        let n = ((x.as_f64() - lo) * inv).max(0.0).min(1.0);
        T::lit((gamma * n.ln()).exp() * range + lo)
    });
}

pub fn gamma_correction<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, gamma_range: Interval) -> Volume<T> {
    let mut out = v.clone();
    gamma_correction_in_place(&mut out, rng, gamma_range);
    out
}

pub fn gamma_correction_in_place<T: Real, R: RngCore + ?Sized>(v: &mut Volume<T>, rng: &mut R, gamma_range: Interval) {
    let gamma = gamma_range.sample(rng);
    gamma_mut(v, gamma);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::volume::Geometry;

    fn noise_volume(dims: [usize; 3], seed: u64) -> Volume<f32> {
        let mut r = RngStream::new(seed, 99).rng();
        let g = Geometry::identity(dims);
        Volume::from_fn(g, |_, _, _| {
            let u: f64 = rand::Rng::random(&mut r);
            u as f32
        })
    }

    fn var(d: &[f32]) -> f64 {
        let m = mean(d);
        d.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / d.len() as f64
    }

    #[test]
    fn noise_zero_sigma_and_determinism() {
        let v = noise_volume([8, 8, 8], 1);
        let mut r = RngStream::new(3, 3).rng();
        assert_eq!(gaussian_noise(&v, &mut r, Interval::point(0.0)), v);
        let a = gaussian_noise(&v, &mut RngStream::new(3, 4).rng(), Interval(0.0, 0.1));
        let b = gaussian_noise(&v, &mut RngStream::new(3, 4).rng(), Interval(0.0, 0.1));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_mean_within_statistical_bound() {
        let v = noise_volume([64, 64, 64], 2);
        let out = gaussian_noise(&v, &mut RngStream::new(11, 0).rng(), Interval::point(0.1));
        let bound = 3.0 * 0.1 / (64f64.powi(3)).sqrt();
        assert!((mean(out.data()) - mean(v.data())).abs() <= bound);
    }

    #[test]
    fn blur_cases() {
        let v = noise_volume([16, 16, 16], 3);
        assert_eq!(gaussian_blur(&v, &mut RngStream::new(0, 0).rng(), Interval::point(0.0)), v);
        let c = Volume::filled(Geometry::identity([9, 9, 9]), 3.5f32);
        assert_eq!(gaussian_blur(&c, &mut RngStream::new(0, 0).rng(), Interval(0.5, 1.0)), c);
        for seed in 0..5 {
            let v = noise_volume([16, 16, 16], 10 + seed);
            let out = gaussian_blur(&v, &mut RngStream::new(seed, 1).rng(), Interval(0.5, 1.0));
            assert!(var(out.data()) <= var(v.data()));
        }
    }

    #[test]
    fn low_res_cases() {
        let v = noise_volume([12, 10, 9], 4);
        assert_eq!(low_resolution_with_factor(&v, 1.0), v);
        let c = Volume::filled(Geometry::identity([12, 10, 9]), -7.25f32);
        assert_eq!(low_resolution_with_factor(&c, 2.0), c);
        let out = low_resolution_with_factor(&v, 2.7);
        assert_eq!(out.dims(), v.dims());
        assert_ne!(out, v);
    }

    #[test]
    fn brightness_contrast_formula() {
        let g = Geometry::identity([3, 1, 1]);
        let v = Volume::new(g, vec![0.0f32, 1.0, 2.0]).unwrap();
        assert_eq!(brightness_contrast_with(&v, 0.0, 1.0), v);
        assert_eq!(brightness_contrast_with(&v, 0.0, 2.0).data(), &[-1.0, 1.0, 3.0]);
        // Offset is b * (max - min) = 0.5 * 2.
        assert_eq!(brightness_contrast_with(&v, 0.5, 2.0).data(), &[0.0, 2.0, 4.0]);
    }

    #[test]
    fn gamma_cases() {
        let g = Geometry::identity([1000, 1, 1]);
        let v = Volume::from_fn(g.clone(), |i, _, _| i as f32 * 0.25 - 40.0);
        let id = gamma_with(&v, 1.0);
        assert_eq!(id, v);
        for gamma in [0.7, 1.5] {
            let out = gamma_with(&v, gamma);
            assert!(out.data().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(out.min_max(), v.min_max());
        }
        let c = Volume::filled(g, 2.0f32);
        assert_eq!(gamma_with(&c, 0.7), c);
    }
}
