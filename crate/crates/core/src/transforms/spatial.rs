//! Random rotation, scaling and flipping about the volume center.
//!
//! One map is sampled per call and applied to both the image (trilinear) and
//! the labels (nearest) on the unchanged grid.

use std::ops::Range;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{bernoulli, Interval};
use crate::scalar::Real;
use crate::volume::{Grid, LabelMap, Sample, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialParams {
    /// Per-axis probability of rotating about that axis.
    pub rotation_prob: f64,
    pub max_angle_deg: [f64; 3],
    pub flip_prob: [f64; 3],
    pub scale_prob: f64,
    pub scale_range: Interval,
}

impl Default for SpatialParams {
    fn default() -> Self {
        SpatialParams {
            rotation_prob: 0.2,
            max_angle_deg: [30.0; 3],
            flip_prob: [0.5; 3],
            scale_prob: 0.2,
            scale_range: Interval(0.7, 1.4),
        }
    }
}

impl SpatialParams {
    /// Every gate disabled.
    pub fn disabled() -> Self {
        SpatialParams {
            rotation_prob: 0.0,
            flip_prob: [0.0; 3],
            scale_prob: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.rotation_prob, self.scale_prob]
            .into_iter()
            .chain(self.flip_prob);
        super::check_probabilities("spatial", probs)?;
        if self.max_angle_deg.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(crate::Error::arg("spatial: max_angle_deg must be >= 0"));
        }
        self.scale_range.validate("spatial.scale_range")?;
        if self.scale_range.lo() <= 0.0 {
            return Err(crate::Error::arg("spatial: scale_range must be positive"));
        }
        Ok(())
    }

    /// Forces every internal gate to `p` (used for worst-case benchmarking).
    pub fn with_probabilities(mut self, p: f64) -> Self {
        self.rotation_prob = p;
        self.flip_prob = [p; 3];
        self.scale_prob = p;
        self
    }
}

/// A sampled spatial map: flips, then isotropic scale, then rotation about
/// axes 0, 1, 2 (applied in that order).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialMap {
    pub angles_rad: [f64; 3],
    pub scale: f64,
    pub flips: [bool; 3],
}

impl SpatialMap {
    pub fn identity() -> Self {
        SpatialMap {
            angles_rad: [0.0; 3],
            scale: 1.0,
            flips: [false; 3],
        }
    }

    /// Draws a map. Always consumes the same number of values (eleven) so
    /// downstream draws do not depend on which gates fired.
    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, p: &SpatialParams) -> Self {
        let mut angles_rad = [0.0; 3];
        for (a, max) in angles_rad.iter_mut().zip(p.max_angle_deg) {
            let fire = bernoulli(rng, p.rotation_prob);
            let angle = Interval(-max, max).sample(rng);
            if fire {
                *a = angle.to_radians();
            }
        }
        let fire = bernoulli(rng, p.scale_prob);
        let s = p.scale_range.sample(rng);
        let scale = if fire { s } else { 1.0 };
        let mut flips = [false; 3];
        for (f, prob) in flips.iter_mut().zip(p.flip_prob) {
            *f = bernoulli(rng, prob);
        }
        SpatialMap { angles_rad, scale, flips }
    }

    fn is_pure_flip(&self) -> bool {
        self.angles_rad == [0.0; 3] && self.scale == 1.0
    }

    /// Linear part of the inverse map (output to input) in physical space.
    fn inverse_linear(&self) -> [[f64; 3]; 3] {
        let rot = |axis: usize, t: f64| {
            let (s, c) = t.sin_cos();
            let mut m = [[0.0; 3]; 3];
            m[axis][axis] = 1.0;
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            m[u][u] = c;
            m[u][v] = -s;
            m[v][u] = s;
            m[v][v] = c;
            m
        };
        // forward = R2 R1 R0 S F, inverse = F S^-1 R0^T R1^T R2^T
        let r = matmul(matmul(rot(2, self.angles_rad[2]), rot(1, self.angles_rad[1])), rot(0, self.angles_rad[0]));
        let mut inv = transpose(r);
        for row in inv.iter_mut() {
            for v in row.iter_mut() {
                *v /= self.scale;
            }
        }
        for (a, &f) in self.flips.iter().enumerate() {
            if f {
                for v in inv[a].iter_mut() {
                    *v = -*v;
                }
            }
        }
        inv
    }
}

fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn transpose(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    m
}

/// Index-space affine: input index = `lin * out_index + offset`.
fn index_map(map: &SpatialMap, dims: [usize; 3], spacing: [f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let m = map.inverse_linear();
    let mut lin = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            lin[i][j] = m[i][j] * spacing[j] / spacing[i];
        }
    }
    let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let mut offset = c;
    for i in 0..3 {
        for j in 0..3 {
            offset[i] -= lin[i][j] * c[j];
        }
    }
    (lin, offset)
}

fn flip_grid<V: crate::Voxel>(grid: &Grid<V>, flips: [bool; 3]) -> Grid<V> {
    let [nx, ny, nz] = grid.dims();
    let idx = |o: usize, n: usize, f: bool| if f { n - 1 - o } else { o };
    let data = grid.data();
    let mut out = Vec::with_capacity(data.len());
    for k in 0..nz {
        let sk = idx(k, nz, flips[2]);
        for j in 0..ny {
            let sj = idx(j, ny, flips[1]);
            let row = &data[(sk * ny + sj) * nx..(sk * ny + sj + 1) * nx];
            if flips[0] {
                out.extend(row.iter().rev());
            } else {
                out.extend_from_slice(row);
            }
        }
    }
    grid.with_data(out)
}

/// `f64::floor` for the coordinate range of a grid; avoids a libm call on
/// targets without a rounding instruction.
#[inline]
fn floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

/// Source position of one output voxel: integer cell and fractional offset per axis.
#[derive(Clone, Copy)]
struct Source {
    cell: [f64; 3],
    frac: [f64; 3],
}

impl Source {
    #[inline]
    fn at(p: [f64; 3]) -> Self {
        let cell = p.map(floor);
        Source {
            cell,
            frac: [p[0] - cell[0], p[1] - cell[1], p[2] - cell[2]],
        }
    }

    /// Nearest index per axis, ties away from zero like `f64::round`.
    #[inline]
    fn nearest(&self, axis: usize) -> f64 {
        let (c, f) = (self.cell[axis], self.frac[axis]);
        if f > 0.5 || (f == 0.5 && c >= 0.0) {
            c + 1.0
        } else {
            c
        }
    }
}

/// An axis-0 row of output voxels mapped into source index space.
#[derive(Clone, Copy)]
struct Row {
    base: [f64; 3],
    step: [f64; 3],
}

impl Row {
    #[inline]
    fn position(&self, i: usize) -> [f64; 3] {
        let i = i as f64;
        let [b, s] = [self.base, self.step];
        [s[0] * i + b[0], s[1] * i + b[1], s[2] * i + b[2]]
    }

    #[inline]
    fn source(&self, i: usize) -> Source {
        Source::at(self.position(i))
    }

    /// Whether all eight trilinear neighbours of voxel `i`'s source are in the grid.
    fn is_interior(&self, i: usize, dims: [usize; 3]) -> bool {
        let p = self.position(i);
        (0..3).all(|a| p[a] >= 0.0 && p[a] < dims[a] as f64 - 1.0)
    }

    /// The voxels of a row of length `dims[0]` whose sources are interior.
    /// Source positions are monotone along the row, so these form one range.
    fn interior(&self, dims: [usize; 3]) -> Range<usize> {
        let (mut lo, mut hi) = (0.0f64, dims[0] as f64);
        for a in 0..3 {
            let (b, s, top) = (self.base[a], self.step[a], dims[a] as f64 - 1.0);
            if s == 0.0 {
                if !(b >= 0.0 && b < top) {
                    return 0..0;
                }
            } else {
                let (t0, t1) = ((0.0 - b) / s, (top - b) / s);
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
        }
        if !(lo < hi) {
            return 0..0;
        }
        let mut start = lo.ceil() as usize;
        let mut end = (hi.floor() as usize + 1).min(dims[0]);
        while start < end && !self.is_interior(start, dims) {
            start += 1;
        }
        while end > start && !self.is_interior(end - 1, dims) {
            end -= 1;
        }
        start..end
    }
}

/// Calls `f` for every axis-0 row of the output in storage order.
#[inline]
fn for_each_row(map: &SpatialMap, dims: [usize; 3], spacing: [f64; 3], mut f: impl FnMut(Row)) {
    let (lin, off) = index_map(map, dims, spacing);
    let [_, ny, nz] = dims;
    let step = [lin[0][0], lin[1][0], lin[2][0]];
    for k in 0..nz {
        for j in 0..ny {
            let base = [0, 1, 2].map(|r| lin[r][1] * j as f64 + lin[r][2] * k as f64 + off[r]);
            f(Row { base, step });
        }
    }
}

#[inline]
fn trilinear<T: Real>(data: &[T], dims: [usize; 3], s: &Source, fill: f64) -> f64 {
    let [nx, ny, nz] = dims;
    let [x0, y0, z0] = s.cell;
    let [fx, fy, fz] = s.frac;
    let lerp = |a: f64, b: f64, t: f64| a * (1.0 - t) + b * t;
    if x0 >= 0.0 && y0 >= 0.0 && z0 >= 0.0 && x0 + 1.0 < nx as f64 && y0 + 1.0 < ny as f64 && z0 + 1.0 < nz as f64 {
        let p = x0 as usize + nx * (y0 as usize + ny * z0 as usize);
        let (sy, sz) = (nx, nx * ny);
        let d = |o: usize| data[p + o].as_f64();
        let c0 = lerp(lerp(d(0), d(1), fx), lerp(d(sy), d(sy + 1), fx), fy);
        let c1 = lerp(lerp(d(sz), d(sz + 1), fx), lerp(d(sy + sz), d(sy + sz + 1), fx), fy);
        lerp(c0, c1, fz)
    } else if x0 < -1.0 || y0 < -1.0 || z0 < -1.0 || x0 >= nx as f64 || y0 >= ny as f64 || z0 >= nz as f64 {
        fill
    } else {
        let (i0, j0, k0) = (x0 as isize, y0 as isize, z0 as isize);
        let at = |i: isize, j: isize, k: isize| -> f64 {
            if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
                fill
            } else {
                data[i as usize + nx * (j as usize + ny * k as usize)].as_f64()
            }
        };
        let c0 = lerp(lerp(at(i0, j0, k0), at(i0 + 1, j0, k0), fx), lerp(at(i0, j0 + 1, k0), at(i0 + 1, j0 + 1, k0), fx), fy);
        let c1 = lerp(
            lerp(at(i0, j0, k0 + 1), at(i0 + 1, j0, k0 + 1), fx),
            lerp(at(i0, j0 + 1, k0 + 1), at(i0 + 1, j0 + 1, k0 + 1), fx),
            fy,
        );
        lerp(c0, c1, fz)
    }
}

#[inline]
fn nearest(data: &[u8], dims: [usize; 3], s: &Source) -> u8 {
    let [nx, ny, nz] = dims;
    let (x, y, z) = (s.nearest(0), s.nearest(1), s.nearest(2));
    if x >= 0.0 && y >= 0.0 && z >= 0.0 && x < nx as f64 && y < ny as f64 && z < nz as f64 {
        data[x as usize + nx * (y as usize + ny * z as usize)]
    } else {
        0
    }
}

/// Lower trilinear corner and fractional offsets of an interior position
/// (see [`Row::interior`]).
#[derive(Clone, Copy)]
struct Cell {
    corner: [usize; 3],
    frac: [f64; 3],
}

impl Cell {
    #[inline]
    fn inside(p: [f64; 3]) -> Self {
        // Interior coordinates are non-negative, so truncation is floor.
        let c = p.map(|x| x as i64);
        Cell {
            corner: c.map(|v| v as usize),
            frac: [p[0] - c[0] as f64, p[1] - c[1] as f64, p[2] - c[2] as f64],
        }
    }

    #[inline]
    fn trilinear<T: Real>(&self, data: &[T], dims: [usize; 3]) -> f64 {
        let [nx, ny, _] = dims;
        let [x0, y0, z0] = self.corner;
        let [fx, fy, fz] = self.frac;
        let lerp = |a: f64, b: f64, t: f64| a * (1.0 - t) + b * t;
        let (sy, sz) = (nx, nx * ny);
        let q = x0 + nx * (y0 + ny * z0);
        let w = &data[q..q + sy + sz + 2];
        let d = |o: usize| w[o].as_f64();
        let c0 = lerp(lerp(d(0), d(1), fx), lerp(d(sy), d(sy + 1), fx), fy);
        let c1 = lerp(lerp(d(sz), d(sz + 1), fx), lerp(d(sy + sz), d(sy + sz + 1), fx), fy);
        lerp(c0, c1, fz)
    }

    /// Nearest voxel; ties round up, which is away from zero here.
    #[inline]
    fn nearest(&self, data: &[u8], dims: [usize; 3]) -> u8 {
        let [nx, ny, _] = dims;
        let n = [0, 1, 2].map(|a| self.corner[a] + (self.frac[a] >= 0.5) as usize);
        data[n[0] + nx * (n[1] + ny * n[2])]
    }
}

fn image_row<T: Real>(data: &[T], dims: [usize; 3], row: &Row, fill: f64, out: &mut Vec<T>) {
    let inner = row.interior(dims);
    let general = |i: usize| T::lit(trilinear(data, dims, &row.source(i), fill));
    out.extend((0..inner.start).map(general));
    out.extend(inner.clone().map(|i| T::lit(Cell::inside(row.position(i)).trilinear(data, dims))));
    out.extend((inner.end..dims[0]).map(general));
}

fn label_row(data: &[u8], dims: [usize; 3], row: &Row, out: &mut Vec<u8>) {
    let inner = row.interior(dims);
    let general = |i: usize| nearest(data, dims, &row.source(i));
    out.extend((0..inner.start).map(general));
    out.extend(inner.clone().map(|i| Cell::inside(row.position(i)).nearest(data, dims)));
    out.extend((inner.end..dims[0]).map(general));
}

/// Trilinear resampling of an image under `map`; samples outside the grid
/// take `fill`.
pub fn warp_image<T: Real>(vol: &Volume<T>, map: &SpatialMap, fill: T) -> Volume<T> {
    if map.is_pure_flip() {
        return flip_grid(vol, map.flips);
    }
    let dims = vol.dims();
    let data = vol.data();
    let fill = fill.as_f64();
    let mut out = Vec::with_capacity(data.len());
    for_each_row(map, dims, vol.geometry().spacing(), |row| image_row(data, dims, &row, fill, &mut out));
    vol.with_data(out)
}

/// Nearest-neighbour resampling of labels under `map`; outside is background.
pub fn warp_labels(labels: &LabelMap, map: &SpatialMap) -> LabelMap {
    if map.is_pure_flip() {
        return flip_grid(labels, map.flips);
    }
    let dims = labels.dims();
    let data = labels.data();
    let mut out = Vec::with_capacity(data.len());
    for_each_row(map, dims, labels.geometry().spacing(), |row| label_row(data, dims, &row, &mut out));
    labels.with_data(out)
}

/// Applies one map to both halves of a sample. Image fill is the image
/// minimum, label fill is background.
pub fn apply_spatial<T: Real>(s: &Sample<T>, map: &SpatialMap) -> Sample<T> {
    let (lo, _) = s.image.min_max();
    if map.is_pure_flip() {
        return Sample {
            image: flip_grid(&s.image, map.flips),
            labels: flip_grid(&s.labels, map.flips),
        };
    }
    let dims = s.image.dims();
    let (src, lab) = (s.image.data(), s.labels.data());
    let fill = lo.as_f64();
    let mut image = Vec::with_capacity(src.len());
    let mut labels = Vec::with_capacity(src.len());
    for_each_row(map, dims, s.image.geometry().spacing(), |row| {
        let inner = row.interior(dims);
        for i in 0..dims[0] {
            let (v, l) = if inner.contains(&i) {
                let c = Cell::inside(row.position(i));
                (c.trilinear(src, dims), c.nearest(lab, dims))
            } else {
                let p = row.source(i);
                (trilinear(src, dims, &p, fill), nearest(lab, dims, &p))
            };
            image.push(T::lit(v));
            labels.push(l);
        }
    });
    Sample {
        image: s.image.with_data(image),
        labels: s.labels.with_data(labels),
    }
}

/// Samples a spatial map and applies it to image and labels.
pub fn random_spatial<T: Real, R: RngCore + ?Sized>(s: &Sample<T>, rng: &mut R, p: &SpatialParams) -> Sample<T> {
    let map = SpatialMap::sample(rng, p);
    if map == SpatialMap::identity() {
        return s.clone();
    }
    apply_spatial(s, &map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::volume::{Geometry, Orientation};

    fn sample(dims: [usize; 3]) -> Sample<f32> {
        let g = Geometry::aligned(dims, [1.0, 1.2, 0.8], Orientation::PIR).unwrap();
        let image = Volume::from_fn(g.clone(), |i, j, k| ((i * 7 + j * 3 + k * 5) % 13) as f32);
        let labels = LabelMap::from_fn(g, |i, j, k| ((i / 3 + j / 2 + k) % 4) as u8);
        Sample::new(image, labels).unwrap()
    }

    #[test]
    fn disabled_params_are_identity() {
        let s = sample([8, 7, 6]);
        let mut rng = RngStream::new(1, 2).rng();
        assert_eq!(random_spatial(&s, &mut rng, &SpatialParams::disabled()), s);
    }

    #[test]
    fn flip_is_involution() {
        let s = sample([8, 7, 6]);
        let map = SpatialMap {
            flips: [true, false, false],
            ..SpatialMap::identity()
        };
        let once = apply_spatial(&s, &map);
        assert_ne!(once, s);
        assert_eq!(once.image.get(0, 2, 3), s.image.get(7, 2, 3));
        assert_eq!(apply_spatial(&once, &map), s);
    }

    #[test]
    fn flip_via_general_path_matches_fast_path() {
        let s = sample([6, 5, 4]);
        let flip = SpatialMap {
            flips: [false, true, true],
            ..SpatialMap::identity()
        };
        // A full-turn rotation defeats the fast path but is geometrically a no-op.
        let turned = SpatialMap {
            angles_rad: [2.0 * std::f64::consts::PI, 0.0, 0.0],
            ..flip
        };
        let a = apply_spatial(&s, &flip);
        let b = apply_spatial(&s, &turned);
        assert_eq!(a.labels, b.labels);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn rotation_keeps_label_vocabulary_and_geometry() {
        let s = sample([16, 16, 16]);
        let map = SpatialMap {
            angles_rad: [30f64.to_radians(), 0.0, 0.0],
            ..SpatialMap::identity()
        };
        let out = apply_spatial(&s, &map);
        assert!(out.labels.label_set().iter().all(|l| *l <= 3));
        assert_eq!(out.geometry(), s.geometry());
        let (lo, hi) = s.image.min_max();
        assert!(out.image.data().iter().all(|&v| v >= lo - 1e-4 && v <= hi + 1e-4));
    }

    #[test]
    fn floor_and_nearest_match_std() {
        let xs = [-3.5, -2.0, -1.25, -0.5, -0.0, 0.0, 0.49, 0.5, 0.49999999999999994, 1.0, 2.5, 127.999, 1e9 + 0.5];
        for x in xs {
            assert_eq!(floor(x), x.floor(), "{x}");
            assert_eq!(Source::at([x; 3]).nearest(1), x.round(), "{x}");
        }
    }

    #[test]
    fn interior_fast_path_matches_general_path() {
        let s = sample([13, 11, 9]);
        let dims = s.image.dims();
        let mut rng = RngStream::new(5, 0).rng();
        let p = SpatialParams::default().with_probabilities(1.0);
        for _ in 0..20 {
            let map = SpatialMap::sample(&mut rng, &p);
            let out = apply_spatial(&s, &map);
            if map.is_pure_flip() {
                continue;
            }
            let (lo, _) = s.image.min_max();
            let mut n = 0;
            for_each_row(&map, dims, s.image.geometry().spacing(), |row| {
                let inner = row.interior(dims);
                for i in 0..dims[0] {
                    assert_eq!(inner.contains(&i), row.is_interior(i, dims));
                    let src = row.source(i);
                    assert_eq!(out.image.data()[n], trilinear(s.image.data(), dims, &src, lo as f64) as f32);
                    assert_eq!(out.labels.data()[n], nearest(s.labels.data(), dims, &src));
                    n += 1;
                }
            });
        }
    }

    #[test]
    fn fused_warp_matches_separate_warps() {
        let s = sample([11, 9, 10]);
        let map = SpatialMap {
            angles_rad: [0.3, -0.2, 0.1],
            scale: 1.1,
            ..SpatialMap::identity()
        };
        let both = apply_spatial(&s, &map);
        let (lo, _) = s.image.min_max();
        assert_eq!(both.image, warp_image(&s.image, &map, lo));
        assert_eq!(both.labels, warp_labels(&s.labels, &map));
    }

    #[test]
    fn ninety_degree_rotation_permutes_exactly() {
        let g = Geometry::identity([5, 5, 5]);
        let img = Volume::from_fn(g.clone(), |i, j, k| (i + 5 * j + 25 * k) as f32);
        let s = Sample::new(img, LabelMap::filled(g, 1)).unwrap();
        let map = SpatialMap {
            angles_rad: [std::f64::consts::FRAC_PI_2, 0.0, 0.0],
            ..SpatialMap::identity()
        };
        let out = apply_spatial(&s, &map);
        // Rotation about axis 0 by +90 deg sends (j, k) -> (-k, j) about the center.
        for k in 0..5 {
            for j in 0..5 {
                let (sj, sk) = (k, 4 - j);
                assert!((out.image.get(2, j, k) - s.image.get(2, sj, sk)).abs() < 1e-3);
            }
        }
    }
}
