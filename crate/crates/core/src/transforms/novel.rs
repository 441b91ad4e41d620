//! Appearance transforms for cross-modality generalization: intensity
//! inversion, Scharr edge magnitude, segmentation-driven intensity
//! redistribution, random convolution, histogram equalization, bias field,
//! unsharp masking and a random monotone intensity curve.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rescale_to_range;
use crate::error::{Error, Result};
use crate::filter;
use crate::rng::Interval;
use crate::scalar::Real;
use crate::volume::{LabelMap, Sample, Volume};

/// Bound on the bias-field exponent so the field stays finite.
pub const BIAS_EXPONENT_LIMIT: f64 = 20.0;

const SCHARR_DERIVATIVE: [f64; 3] = [-0.5, 0.0, 0.5];
const SCHARR_SMOOTHING: [f64; 3] = [3.0 / 16.0, 10.0 / 16.0, 3.0 / 16.0];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedistributeParams {
    pub alpha_range: Interval,
    pub bins: usize,
    pub include_background: bool,
}

impl Default for RedistributeParams {
    fn default() -> Self {
        RedistributeParams {
            alpha_range: Interval(-1.0, 1.0),
            bins: 64,
            include_background: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomConvParams {
    pub kernel_sizes: Vec<usize>,
    pub weight_sigma: f64,
}

impl Default for RandomConvParams {
    fn default() -> Self {
        RandomConvParams {
            kernel_sizes: vec![1, 3, 5, 7],
            weight_sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistEqParams {
    pub bins: usize,
}

impl Default for HistEqParams {
    fn default() -> Self {
        HistEqParams { bins: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasFieldParams {
    pub order: usize,
    pub coeff_range: Interval,
}

impl Default for BiasFieldParams {
    fn default() -> Self {
        BiasFieldParams {
            order: 3,
            coeff_range: Interval(-0.5, 0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnsharpParams {
    /// Blur sigma in voxels.
    pub sigma_range: Interval,
    pub amount_range: Interval,
}

impl Default for UnsharpParams {
    fn default() -> Self {
        UnsharpParams {
            sigma_range: Interval(0.5, 1.5),
            amount_range: Interval(0.5, 2.0),
        }
    }
}

/// Monotone curves on [0, 1] with `f(0) = 0` and `f(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityCurve {
    Identity,
    Square,
    Sqrt,
    LogCompress,
    SigmoidContrast,
    Sine,
}

impl IntensityCurve {
    pub const ALL: [IntensityCurve; 6] = [
        IntensityCurve::Identity,
        IntensityCurve::Square,
        IntensityCurve::Sqrt,
        IntensityCurve::LogCompress,
        IntensityCurve::SigmoidContrast,
        IntensityCurve::Sine,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            IntensityCurve::Identity => x,
            IntensityCurve::Square => x * x,
            IntensityCurve::Sqrt => x.sqrt(),
            IntensityCurve::LogCompress => (1.0 + 9.0 * x).ln() / 10f64.ln(),
            IntensityCurve::SigmoidContrast => {
                let (s0, s1) = (sigmoid(0.0), sigmoid(1.0));
                (sigmoid(x) - s0) / (s1 - s0)
            }
            IntensityCurve::Sine => (std::f64::consts::FRAC_PI_2 * x).sin(),
        }
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-10.0 * (t - 0.5)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionParams {
    pub functions: Vec<IntensityCurve>,
}

impl Default for FunctionParams {
    fn default() -> Self {
        FunctionParams {
            functions: IntensityCurve::ALL.to_vec(),
        }
    }
}

impl RedistributeParams {
    pub fn validate(&self) -> Result<()> {
        self.alpha_range.validate("redistribute_seg.alpha_range")?;
        if self.bins < 2 {
            return Err(Error::arg("redistribute_seg.bins must be >= 2"));
        }
        Ok(())
    }
}

impl RandomConvParams {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes.is_empty() {
            return Err(Error::arg("random_conv.kernel_sizes must not be empty"));
        }
        if let Some(k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::arg(format!("random_conv.kernel_sizes: {k} is not odd")));
        }
        if !(self.weight_sigma > 0.0 && self.weight_sigma.is_finite()) {
            return Err(Error::arg("random_conv.weight_sigma must be > 0"));
        }
        Ok(())
    }
}

impl HistEqParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::arg("histogram_equalization.bins must be >= 2"));
        }
        Ok(())
    }
}

impl BiasFieldParams {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::arg("bias_field.order must be >= 1"));
        }
        self.coeff_range.validate("bias_field.coeff_range")
    }
}

impl UnsharpParams {
    pub fn validate(&self) -> Result<()> {
        self.sigma_range.validate("unsharp_masking.sigma_range")?;
        self.amount_range.validate("unsharp_masking.amount_range")?;
        if self.sigma_range.lo() < 0.0 || self.amount_range.lo() < 0.0 {
            return Err(Error::arg("unsharp_masking: ranges must be non-negative"));
        }
        Ok(())
    }
}

impl FunctionParams {
    pub fn validate(&self) -> Result<()> {
        if self.functions.is_empty() {
            return Err(Error::arg("function_transform.functions must not be empty"));
        }
        Ok(())
    }
}

/// `min + max - v`.
pub fn intensity_inversion<T: Real>(v: &Volume<T>) -> Volume<T> {
    let mut out = v.clone();
    intensity_inversion_in_place(&mut out);
    out
}

pub fn intensity_inversion_in_place<T: Real>(v: &mut Volume<T>) {
    let (lo, hi) = v.min_max();
    let s = lo.as_f64() + hi.as_f64();
    v.update(|x| T::lit(s - x.as_f64()));
}

/// Per-plane partial Scharr responses for slice `k`: smoothed along x and y
/// (`ss`), smoothed along x and differentiated along y (`sd`), and
/// differentiated along x and smoothed along y (`ds`).
struct ScharrPlane {
    ss: Vec<f64>,
    sd: Vec<f64>,
    ds: Vec<f64>,
}

impl ScharrPlane {
    fn new(n: usize) -> Self {
        ScharrPlane {
            ss: vec![0.0; n],
            sd: vec![0.0; n],
            ds: vec![0.0; n],
        }
    }
}

/// In-plane smoothing/derivative combinations of slice `k`; `sx` and `dx`
/// are scratch rows of one plane each.
fn scharr_plane<T: Real>(data: &[T], dims: [usize; 3], k: usize, out: &mut ScharrPlane, sx: &mut [f64], dx: &mut [f64]) {
    let [nx, ny, _] = dims;
    let [d0, _, d2] = SCHARR_DERIVATIVE;
    let [s0, s1, s2] = SCHARR_SMOOTHING;
    let plane = &data[k * nx * ny..(k + 1) * nx * ny];
    for j in 0..ny {
        let row = &plane[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let l = row[i.saturating_sub(1)].as_f64();
            let c = row[i].as_f64();
            let r = row[(i + 1).min(nx - 1)].as_f64();
            sx[j * nx + i] = s0 * l + s1 * c + s2 * r;
            dx[j * nx + i] = d0 * l + d2 * r;
        }
    }
    for j in 0..ny {
        let (a, b, c) = (j.saturating_sub(1) * nx, j * nx, (j + 1).min(ny - 1) * nx);
        for i in 0..nx {
            out.ss[b + i] = s0 * sx[a + i] + s1 * sx[b + i] + s2 * sx[c + i];
            out.sd[b + i] = d0 * sx[a + i] + d2 * sx[c + i];
            out.ds[b + i] = s0 * dx[a + i] + s1 * dx[b + i] + s2 * dx[c + i];
        }
    }
}

/// Gradient magnitude from separable 3D Scharr derivatives, before any
/// rescaling. Every axis needs at least 3 voxels.
pub fn scharr_magnitude<T: Real>(v: &Volume<T>) -> Result<Vec<f64>> {
    let dims = v.dims();
    if dims.iter().any(|&d| d < 3) {
        return Err(Error::Size(format!("scharr filter needs >= 3 voxels per axis, got {dims:?}")));
    }
    let [nx, ny, nz] = dims;
    let [d0, _, d2] = SCHARR_DERIVATIVE;
    let [s0, s1, s2] = SCHARR_SMOOTHING;
    let data = v.data();
    let n = nx * ny;
    let mut mag = Vec::with_capacity(data.len());
    let (mut sx, mut dx) = (vec![0.0; n], vec![0.0; n]);
    // Rolling window over slices k - 1, k, k + 1 with clamped borders.
    let [mut prev, mut cur, mut next] = [(); 3].map(|_| ScharrPlane::new(n));
    scharr_plane(data, dims, 0, &mut cur, &mut sx, &mut dx);
    prev.ss.copy_from_slice(&cur.ss);
    prev.sd.copy_from_slice(&cur.sd);
    prev.ds.copy_from_slice(&cur.ds);
    scharr_plane(data, dims, 1, &mut next, &mut sx, &mut dx);
    for k in 0..nz {
        let ds = prev.ds.iter().zip(&cur.ds).zip(&next.ds);
        let sd = prev.sd.iter().zip(&cur.sd).zip(&next.sd);
        let ss = prev.ss.iter().zip(&next.ss);
        mag.extend(ds.zip(sd.zip(ss)).map(|(((a, b), c), (((e, f), g), (h, l)))| {
            let gx = s0 * a + s1 * b + s2 * c;
            let gy = s0 * e + s1 * f + s2 * g;
            let gz = d0 * h + d2 * l;
            (gx * gx + gy * gy + gz * gz).sqrt()
        }));
        if k + 1 < nz {
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            scharr_plane(data, dims, (k + 2).min(nz - 1), &mut next, &mut sx, &mut dx);
        }
    }
    Ok(mag)
}

/// Replaces the image by its Scharr gradient magnitude, rescaled onto the
/// input's [min, max].
pub fn scharr_filter<T: Real>(v: &Volume<T>) -> Result<Volume<T>> {
    let mag = scharr_magnitude(v)?;
    let (lo, hi) = v.min_max();
    Ok(v.with_data(rescale_to_range(&mag, lo, hi)))
}

/// Smoothed, max-normalized intensity histogram of one region.
fn region_density(counts: &[u64]) -> Vec<f64> {
    let n = counts.len();
    let at = |i: isize| counts[i.clamp(0, n as isize - 1) as usize] as f64;
    let smoothed: Vec<f64> = (0..n as isize)
        .map(|i| 0.25 * at(i - 1) + 0.5 * at(i) + 0.25 * at(i + 1))
        .collect();
    let peak = smoothed.iter().cloned().fold(0.0, f64::max);
    smoothed.into_iter().map(|d| if peak > 0.0 { d / peak } else { 0.0 }).collect()
}

#[inline]
fn bin_of(x: f64, lo: f64, inv_width: f64, bins: usize) -> usize {
    (((x - lo) * inv_width) as i64).clamp(0, bins as i64 - 1) as usize
}

/// Per region: `v + alpha * density(v) * (max_r - min_r)`, one `alpha` drawn
/// per region in ascending label order.
pub fn redistribute_seg_image<T: Real, R: RngCore + ?Sized>(
    image: &Volume<T>,
    labels: &LabelMap,
    rng: &mut R,
    p: &RedistributeParams,
) -> Volume<T> {
    let mut out = image.clone();
    redistribute_seg_in_place(&mut out, labels, rng, p);
    out
}

pub fn redistribute_seg_in_place<T: Real, R: RngCore + ?Sized>(
    image: &mut Volume<T>,
    labels: &LabelMap,
    rng: &mut R,
    p: &RedistributeParams,
) {
    let data = image.data();
    let lab = labels.data();
    let mut lo = [f64::INFINITY; 256];
    let mut hi = [f64::NEG_INFINITY; 256];
    for (&x, &l) in data.iter().zip(lab) {
        let x = x.as_f64();
        let l = l as usize;
        if x < lo[l] {
            lo[l] = x;
        }
        if x > hi[l] {
            hi[l] = x;
        }
    }
    let bins = p.bins;
    let mut alpha = [0.0f64; 256];
    let mut active = [false; 256];
    for l in 0..256 {
        if lo[l] > hi[l] || (l == 0 && !p.include_background) {
            continue;
        }
        alpha[l] = p.alpha_range.sample(rng);
        active[l] = hi[l] > lo[l] && alpha[l] != 0.0;
    }
    if !active.iter().any(|&a| a) {
        return;
    }
    let inv_width: Vec<f64> = (0..256)
        .map(|l| if hi[l] > lo[l] { bins as f64 / (hi[l] - lo[l]) } else { 0.0 })
        .collect();
    let mut counts = vec![0u64; 256 * bins];
    for (&x, &l) in data.iter().zip(lab) {
        let l = l as usize;
        if active[l] {
            counts[l * bins + bin_of(x.as_f64(), lo[l], inv_width[l], bins)] += 1;
        }
    }
    let mut gain = vec![0.0f64; 256 * bins];
    for l in (0..256).filter(|&l| active[l]) {
        let density = region_density(&counts[l * bins..(l + 1) * bins]);
        let scale = alpha[l] * (hi[l] - lo[l]);
        for (g, d) in gain[l * bins..(l + 1) * bins].iter_mut().zip(density) {
            *g = scale * d;
        }
    }
    for (x, &l) in image.data_mut().iter_mut().zip(lab) {
        let l = l as usize;
        if active[l] {
            let xf = x.as_f64();
            *x = T::lit(xf + gain[l * bins + bin_of(xf, lo[l], inv_width[l], bins)]);
        }
    }
}

/// Segmentation-driven regional intensity redistribution. Labels pass
/// through untouched.
pub fn redistribute_seg<T: Real, R: RngCore + ?Sized>(s: &Sample<T>, rng: &mut R, p: &RedistributeParams) -> Sample<T> {
    Sample {
        image: redistribute_seg_image(&s.image, &s.labels, rng, p),
        labels: s.labels.clone(),
    }
}

/// Convolves with a given dense kernel and rescales onto the input range.
pub fn convolve_renormalized<T: Real>(v: &Volume<T>, kernel: &[f64], size: usize) -> Volume<T> {
    let out = filter::convolve_dense(v.data(), v.dims(), kernel, size);
    let (lo, hi) = v.min_max();
    v.with_data(rescale_to_range(&out, lo, hi))
}

/// Random `k^3` kernel with weights drawn from N(0, sigma^2 / k^3).
pub fn sample_conv_kernel<R: RngCore + ?Sized>(rng: &mut R, p: &RandomConvParams) -> (Vec<f64>, usize) {
    let k = p.kernel_sizes[rng.random_range(0..p.kernel_sizes.len())];
    let n = k * k * k;
    let std = p.weight_sigma / (n as f64).sqrt();
    let w = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    (w, k)
}

pub fn random_conv<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, p: &RandomConvParams) -> Volume<T> {
    let (kernel, k) = sample_conv_kernel(rng, p);
    convolve_renormalized(v, &kernel, k)
}

/// Remaps intensities through the normalized cumulative histogram. Bin `b`
/// maps to `min + P(bin <= b) * (max - min)`.
pub fn histogram_equalization<T: Real>(v: &Volume<T>, bins: usize) -> Volume<T> {
    let mut out = v.clone();
    histogram_equalization_in_place(&mut out, bins);
    out
}

pub fn histogram_equalization_in_place<T: Real>(v: &mut Volume<T>, bins: usize) {
    let (lo, hi) = v.min_max();
    if hi <= lo || bins < 1 {
        return;
    }
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    let inv_width = bins as f64 / (hi - lo);
    let mut counts = vec![0u64; bins];
    for &x in v.data() {
        counts[bin_of(x.as_f64(), lo, inv_width, bins)] += 1;
    }
    let n = v.data().len() as f64;
    let mut acc = 0u64;
    let lut: Vec<T> = counts
        .iter()
        .map(|&c| {
            acc += c;
            T::lit(lo + (acc as f64 / n) * (hi - lo))
        })
        .collect();
    v.update(|x| lut[bin_of(x.as_f64(), lo, inv_width, bins)]);
}

/// Exponents `(a, b, c)` with `a + b + c <= order`, by total degree.
pub fn bias_basis(order: usize) -> Vec<[usize; 3]> {
    let mut terms = Vec::new();
    for deg in 0..=order {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                terms.push([a, b, deg - a - b]);
            }
        }
    }
    terms
}

/// Calls `f(row, field)` for every axis-0 row of the multiplicative field
/// `exp(sum_i c_i * x^a y^b z^c)`, coordinates normalized to [-1, 1] per
/// axis and the exponent clamped to [`BIAS_EXPONENT_LIMIT`].
fn for_each_bias_row(dims: [usize; 3], order: usize, coeffs: &[f64], mut f: impl FnMut(usize, &[f64])) {
    let terms = bias_basis(order);
    assert_eq!(terms.len(), coeffs.len(), "one coefficient per basis term");
    let coord = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if n > 1 { -1.0 + 2.0 * i as f64 / (n - 1) as f64 } else { 0.0 })
            .collect()
    };
    let axes = dims.map(coord);
    let pow = |x: f64, e: usize| x.powi(e as i32);
    let mut poly_x = vec![0.0; order + 1];
    let mut row = vec![0.0; dims[0]];
    for (k, &z) in axes[2].iter().enumerate() {
        for (j, &y) in axes[1].iter().enumerate() {
            // Collapse y and z into a polynomial in x for this row.
            poly_x.iter_mut().for_each(|c| *c = 0.0);
            for (t, &cf) in terms.iter().zip(coeffs) {
                poly_x[t[0]] += cf * pow(y, t[1]) * pow(z, t[2]);
            }
            for (r, &x) in row.iter_mut().zip(&axes[0]) {
                let e = poly_x.iter().rev().fold(0.0, |acc, &c| acc * x + c);
                *r = e.clamp(-BIAS_EXPONENT_LIMIT, BIAS_EXPONENT_LIMIT).exp();
            }
            f(k * dims[1] + j, &row);
        }
    }
}

/// The multiplicative field itself, in storage order.
pub fn bias_field_values(dims: [usize; 3], order: usize, coeffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.iter().product());
    for_each_bias_row(dims, order, coeffs, |_, row| out.extend_from_slice(row));
    out
}

pub fn bias_field_with<T: Real>(v: &Volume<T>, order: usize, coeffs: &[f64]) -> Volume<T> {
    let mut out = v.clone();
    bias_field_mut(&mut out, order, coeffs);
    out
}

fn bias_field_mut<T: Real>(v: &mut Volume<T>, order: usize, coeffs: &[f64]) {
    let dims = v.dims();
    let data = v.data_mut();
    for_each_bias_row(dims, order, coeffs, |r, field| {
        for (x, f) in data[r * dims[0]..(r + 1) * dims[0]].iter_mut().zip(field) {
            *x = T::lit(x.as_f64() * f);
        }
    });
}

/// Smooth multiplicative shading with one random coefficient per basis term.
pub fn bias_field<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, p: &BiasFieldParams) -> Volume<T> {
    let mut out = v.clone();
    bias_field_in_place(&mut out, rng, p);
    out
}

pub fn bias_field_in_place<T: Real, R: RngCore + ?Sized>(v: &mut Volume<T>, rng: &mut R, p: &BiasFieldParams) {
    let n = bias_basis(p.order).len();
    let coeffs: Vec<f64> = (0..n).map(|_| p.coeff_range.sample(rng)).collect();
    bias_field_mut(v, p.order, &coeffs);
}

/// `v + amount * (v - blur(v, sigma))`.
pub fn unsharp_with<T: Real>(v: &Volume<T>, sigma: f64, amount: f64) -> Volume<T> {
    if amount == 0.0 {
        return v.clone();
    }
    let blurred = filter::gaussian_blur(v.data(), v.dims(), [sigma; 3]);
    let out = v
        .data()
        .iter()
        .zip(&blurred)
        .map(|(&x, &b)| {
            let x = x.as_f64();
            T::lit(x + amount * (x - b.as_f64()))
        })
        .collect();
    v.with_data(out)
}

pub fn unsharp_masking<T: Real, R: RngCore + ?Sized>(v: &Volume<T>, rng: &mut R, p: &UnsharpParams) -> Volume<T> {
    let sigma = p.sigma_range.sample(rng);
    let amount = p.amount_range.sample(rng);
    unsharp_with(v, sigma, amount)
}

/// Normalizes to [0, 1], applies `curve`, restores the original range.
pub fn apply_curve<T: Real>(v: &Volume<T>, curve: IntensityCurve) -> Volume<T> {
    let mut out = v.clone();
    apply_curve_mut(&mut out, curve);
    out
}

fn apply_curve_mut<T: Real>(v: &mut Volume<T>, curve: IntensityCurve) {
    let (lo, hi) = v.min_max();
    if hi <= lo || curve == IntensityCurve::Identity {
        return;
    }
    let (lo, range) = (lo.as_f64(), hi.as_f64() - lo.as_f64());
    fn remap<T: Real>(v: &mut Volume<T>, lo: f64, range: f64, f: impl Fn(f64) -> f64) {
        let inv = 1.0 / range;
        v.update(|x| {
            let n = ((x.as_f64() - lo) * inv).clamp(0.0, 1.0);
            T::lit(f(n).clamp(0.0, 1.0) * range + lo)
        })
    }
    // One loop per curve keeps the per-voxel work branch free.
    match curve {
        IntensityCurve::Identity => {}
        IntensityCurve::Square => remap(v, lo, range, |n| IntensityCurve::Square.eval(n)),
        IntensityCurve::Sqrt => remap(v, lo, range, |n| IntensityCurve::Sqrt.eval(n)),
        IntensityCurve::LogCompress => remap(v, lo, range, |n| IntensityCurve::LogCompress.eval(n)),
        IntensityCurve::SigmoidContrast => {
            let (s0, s1) = (sigmoid(0.0), sigmoid(1.0));
            remap(v, lo, range, |n| (sigmoid(n) - s0) / (s1 - s0))
        }
        IntensityCurve::Sine => remap(v, lo, range, |n| IntensityCurve::Sine.eval(n)),
    }
}

pub fn function_transform<T: Real, R: RngCore + ?Sized>(
    v: &Volume<T>,
    rng: &mut R,
    functions: &[IntensityCurve],
) -> Result<Volume<T>> {
    if functions.is_empty() {
        return Err(Error::arg("function_transform: empty function set"));
    }
    let curve = functions[rng.random_range(0..functions.len())];
    Ok(apply_curve(v, curve))
}

pub fn function_transform_in_place<T: Real, R: RngCore + ?Sized>(
    v: &mut Volume<T>,
    rng: &mut R,
    functions: &[IntensityCurve],
) -> Result<()> {
    if functions.is_empty() {
        return Err(Error::arg("function_transform: empty function set"));
    }
    let curve = functions[rng.random_range(0..functions.len())];
    apply_curve_mut(v, curve);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::volume::Geometry;

    fn ramp(n: usize, f: impl Fn(f64, f64, f64) -> f64) -> Volume<f64> {
        Volume::from_fn(Geometry::identity([n, n, n]), |i, j, k| f(i as f64, j as f64, k as f64))
    }

    fn random_volume(dims: [usize; 3], seed: u64) -> Volume<f32> {
        let mut r = RngStream::new(seed, 5).rng();
        Volume::from_fn(Geometry::identity(dims), |_, _, _| r.random::<f32>() * 100.0 - 20.0)
    }

    #[test]
    fn inversion_formula_and_involution() {
        let v = Volume::new(Geometry::identity([3, 1, 1]), vec![0.0f32, 3.0, 10.0]).unwrap();
        let inv = intensity_inversion(&v);
        assert_eq!(inv.data(), &[10.0, 7.0, 0.0]);
        assert_eq!(intensity_inversion(&inv), v);
        let c = Volume::filled(Geometry::identity([2, 2, 2]), 4.5f32);
        assert_eq!(intensity_inversion(&c), c);
    }

    #[test]
    fn scharr_ramp_oracle() {
        // Central difference of 2x is 2 everywhere off the border.
        let v = ramp(9, |x, _, _| 2.0 * x);
        let m = scharr_magnitude(&v).unwrap();
        for k in 1..8 {
            for j in 1..8 {
                for i in 1..8 {
                    assert!((m[i + 9 * (j + 9 * k)] - 2.0).abs() < 1e-12);
                }
            }
        }
        let v = ramp(9, |x, y, _| x + y);
        let m = scharr_magnitude(&v).unwrap();
        assert!((m[4 + 9 * (4 + 9 * 4)] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scharr_constant_and_size_error() {
        let c = Volume::filled(Geometry::identity([4, 4, 4]), 3.0f32);
        assert!(scharr_magnitude(&c).unwrap().iter().all(|&m| m == 0.0));
        assert_eq!(scharr_filter(&c).unwrap(), c);
        let z = Volume::filled(Geometry::identity([4, 4, 4]), 0.0f32);
        assert_eq!(scharr_filter(&z).unwrap(), z);
        let thin = Volume::filled(Geometry::identity([4, 2, 4]), 0.0f32);
        assert!(matches!(scharr_filter(&thin), Err(Error::Size(_))));
    }

    #[test]
    fn redistribute_cases() {
        let img = random_volume([10, 10, 10], 1);
        let labels = LabelMap::from_fn(img.geometry().clone(), |i, j, _| ((i / 4 + j / 5) % 4) as u8);
        let s = Sample::new(img.clone(), labels.clone()).unwrap();
        let mut rng = RngStream::new(1, 1).rng();
        let zero = RedistributeParams {
            alpha_range: Interval::point(0.0),
            ..Default::default()
        };
        assert_eq!(redistribute_seg(&s, &mut rng, &zero), s);

        let no_bg = RedistributeParams {
            include_background: false,
            alpha_range: Interval(0.5, 1.0),
            ..Default::default()
        };
        let out = redistribute_seg(&s, &mut rng, &no_bg);
        assert_eq!(out.labels, labels);
        let mut changed = 0;
        for ((a, b), l) in out.image.data().iter().zip(img.data()).zip(labels.data()) {
            if *l == 0 {
                assert_eq!(a.to_bits(), b.to_bits());
            } else if a != b {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn redistribute_shift_bounded_by_region_range() {
        let img = random_volume([12, 12, 12], 2);
        let labels = LabelMap::from_fn(img.geometry().clone(), |i, _, _| (i % 3) as u8);
        let mut rng = RngStream::new(2, 2).rng();
        let p = RedistributeParams::default();
        let out = redistribute_seg_image(&img, &labels, &mut rng, &p);
        let range = 100.0;
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= range + 1e-3);
        }
    }

    #[test]
    fn random_conv_cases() {
        let v = random_volume([9, 8, 7], 3);
        let mut dirac = vec![0.0; 27];
        dirac[13] = 1.0;
        let out = convolve_renormalized(&v, &dirac, 3);
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
        let p = RandomConvParams::default();
        let a = random_conv(&v, &mut RngStream::new(4, 4).rng(), &p);
        let b = random_conv(&v, &mut RngStream::new(4, 4).rng(), &p);
        assert_eq!(a, b);
        let (lo, hi) = v.min_max();
        let (alo, ahi) = a.min_max();
        assert!((alo - lo).abs() <= 1e-5 * lo.abs().max(1.0));
        assert!((ahi - hi).abs() <= 1e-5 * hi.abs().max(1.0));
    }

    #[test]
    fn kernel_variance_scales_with_size() {
        let p = RandomConvParams {
            kernel_sizes: vec![7],
            weight_sigma: 2.0,
        };
        let (w, k) = sample_conv_kernel(&mut RngStream::new(0, 9).rng(), &p);
        assert_eq!((w.len(), k), (343, 7));
        let var = w.iter().map(|x| x * x).sum::<f64>() / 343.0;
        let expected = 4.0 / 343.0;
        assert!((var - expected).abs() < 0.3 * expected, "{var} vs {expected}");
    }

    #[test]
    fn hist_eq_counting_oracle() {
        let mut data = vec![0.0f32; 75];
        data.extend(vec![1.0f32; 25]);
        let v = Volume::new(Geometry::identity([100, 1, 1]), data).unwrap();
        let out = histogram_equalization(&v, 2);
        assert!(out.data()[..75].iter().all(|&x| x == 0.75));
        assert!(out.data()[75..].iter().all(|&x| x == 1.0));
        let c = Volume::filled(Geometry::identity([3, 3, 3]), 2.0f32);
        assert_eq!(histogram_equalization(&c, 16), c);
    }

    #[test]
    fn bias_basis_size() {
        assert_eq!(bias_basis(1).len(), 4);
        assert_eq!(bias_basis(3).len(), 20);
        assert_eq!(bias_basis(3)[0], [0, 0, 0]);
    }

    #[test]
    fn bias_field_cases() {
        let v = random_volume([6, 5, 4], 7);
        assert_eq!(bias_field_with(&v, 3, &[0.0; 20]), v);
        let coeffs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 0.5).collect();
        let f = bias_field_values([6, 5, 4], 3, &coeffs);
        for c in [2.0f32, 7.5] {
            let cv = Volume::filled(Geometry::identity([6, 5, 4]), c);
            let out = bias_field_with(&cv, 3, &coeffs);
            for (o, fv) in out.data().iter().zip(&f) {
                assert!(((*o / c) as f64 - fv).abs() < 1e-5 * fv);
            }
        }
        let extreme = bias_field_values([5, 5, 5], 3, &[50.0; 20]);
        assert!(extreme.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn unsharp_cases() {
        let c = Volume::filled(Geometry::identity([7, 7, 7]), 1.25f32);
        assert_eq!(unsharp_with(&c, 1.0, 1.5), c);
        let v = random_volume([7, 7, 7], 8);
        assert_eq!(unsharp_with(&v, 1.0, 0.0), v);
        let r = ramp(15, |x, y, z| 0.5 * x - 0.25 * y + 2.0 * z);
        let out = unsharp_with(&r, 1.0, 1.5);
        // Radius of a sigma-1 kernel is 3 voxels.
        for k in 3..12 {
            for j in 3..12 {
                for i in 3..12 {
                    assert!((out.get(i, j, k) - r.get(i, j, k)).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn curves_are_monotone_and_range_preserving() {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for c in IntensityCurve::ALL {
            assert!((c.eval(0.0)).abs() < 1e-12, "{c:?}");
            assert!((c.eval(1.0) - 1.0).abs() < 1e-12, "{c:?}");
            assert!(xs.windows(2).all(|w| c.eval(w[0]) <= c.eval(w[1])), "{c:?}");
        }
        let v = random_volume([5, 5, 5], 9);
        let (lo, hi) = v.min_max();
        for c in IntensityCurve::ALL {
            let out = apply_curve(&v, c);
            let (a, b) = out.min_max();
            assert!((a - lo).abs() <= 1e-5 * lo.abs().max(1.0));
            assert!((b - hi).abs() <= 1e-5 * hi.abs().max(1.0));
        }
        assert_eq!(apply_curve(&v, IntensityCurve::Identity), v);
        assert!(function_transform(&v, &mut RngStream::new(0, 0).rng(), &[]).is_err());
    }
}
