//! Edge-replicating convolution kernels shared by the transforms.
//!
//! All routines compute correlation `out[x] = sum_t w[t] * in[x + t - r]`
//! with out-of-range indices clamped to the border.

use crate::scalar::Real;

/// Normalized 1D Gaussian with radius `ceil(3 sigma)`. `sigma <= 0` yields
/// the identity kernel `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[inline]
fn accumulate<T: Real>(dst: &mut [T], src: &[T], w: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

#[inline]
fn accumulate_f64<T: Real>(acc: &mut [f64], src: &[T], w: f64) {
    for (a, &s) in acc.iter_mut().zip(src) {
        *a += w * s.as_f64();
    }
}

/// 1D correlation along one axis of a grid stored with axis 0 fastest.
/// `dst` is cleared and refilled. Each output row is accumulated in `f64`,
/// so normalized kernels leave constant regions exactly constant.
pub fn convolve_axis_into<T: Real>(src: &[T], dst: &mut Vec<T>, dims: [usize; 3], axis: usize, kernel: &[f64]) {
    assert!(kernel.len() % 2 == 1, "kernel length must be odd");
    dst.clear();
    if kernel == [1.0] {
        dst.extend_from_slice(src);
        return;
    }
    let [nx, ny, nz] = dims;
    let r = (kernel.len() / 2) as isize;
    // Output is produced in blocks of BLOCK voxels whose sums stay in
    // registers across all taps; `acc` holds the row tail.
    const BLOCK: usize = 8;
    let mut acc = vec![0.0; BLOCK];
    match axis {
        0 => {
            let r = r as usize;
            let mut pad = Vec::with_capacity(nx + 2 * r);
            let full = nx - nx % BLOCK;
            for s in src.chunks_exact(nx) {
                pad.clear();
                pad.extend(std::iter::repeat_n(s[0].as_f64(), r));
                pad.extend(s.iter().map(|v| v.as_f64()));
                pad.extend(std::iter::repeat_n(s[nx - 1].as_f64(), r));
                for x in (0..full).step_by(BLOCK) {
                    let mut sum = [0.0f64; BLOCK];
                    for (t, &wt) in kernel.iter().enumerate() {
                        for (a, &v) in sum.iter_mut().zip(&pad[x + t..x + t + BLOCK]) {
                            *a += wt * v;
                        }
                    }
                    dst.extend(sum.iter().map(|&a| T::lit(a)));
                }
                let tail = &mut acc[..nx - full];
                tail.fill(0.0);
                for (t, &wt) in kernel.iter().enumerate() {
                    for (a, &v) in tail.iter_mut().zip(&pad[full + t..]) {
                        *a += wt * v;
                    }
                }
                dst.extend(tail.iter().map(|&a| T::lit(a)));
            }
        }
        1 | 2 => {
            let mut rows: Vec<&[T]> = Vec::with_capacity(kernel.len());
            for k in 0..nz {
                for j in 0..ny {
                    rows.clear();
                    rows.extend((0..kernel.len() as isize).map(|t| {
                        let row = if axis == 1 {
                            k * ny + (j as isize + t - r).clamp(0, ny as isize - 1) as usize
                        } else {
                            (k as isize + t - r).clamp(0, nz as isize - 1) as usize * ny + j
                        };
                        &src[row * nx..(row + 1) * nx]
                    }));
                    let full = nx - nx % BLOCK;
                    for x in (0..full).step_by(BLOCK) {
                        let mut sum = [0.0f64; BLOCK];
                        for (row, &wt) in rows.iter().zip(kernel) {
                            for (a, &v) in sum.iter_mut().zip(&row[x..x + BLOCK]) {
                                *a += wt * v.as_f64();
                            }
                        }
                        dst.extend(sum.iter().map(|&a| T::lit(a)));
                    }
                    let tail = &mut acc[..nx - full];
                    tail.fill(0.0);
                    for (row, &wt) in rows.iter().zip(kernel) {
                        accumulate_f64(tail, &row[full..], wt);
                    }
                    dst.extend(tail.iter().map(|&a| T::lit(a)));
                }
            }
        }
        _ => panic!("axis {axis} out of range"),
    }
}

/// 1D correlation along one axis.
pub fn convolve_axis<T: Real>(data: &[T], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    convolve_axis_into(data, &mut out, dims, axis, kernel);
    out
}

/// Applies one 1D kernel per axis.
pub fn convolve_separable<T: Real>(data: &[T], dims: [usize; 3], kernels: [&[f64]; 3]) -> Vec<T> {
    let mut a = Vec::with_capacity(data.len());
    let mut b = Vec::with_capacity(data.len());
    convolve_axis_into(data, &mut a, dims, 0, kernels[0]);
    convolve_axis_into(&a, &mut b, dims, 1, kernels[1]);
    convolve_axis_into(&b, &mut a, dims, 2, kernels[2]);
    a
}

/// Gaussian blur with one sigma per axis (in voxels).
pub fn gaussian_blur<T: Real>(data: &[T], dims: [usize; 3], sigma: [f64; 3]) -> Vec<T> {
    let k = sigma.map(gaussian_kernel);
    convolve_separable(data, dims, [&k[0], &k[1], &k[2]])
}

/// Dense `size^3` correlation; `kernel[a + size * (b + size * c)]` weights
/// the offset (a, b, c) - r along axes (0, 1, 2).
pub fn convolve_dense<T: Real>(data: &[T], dims: [usize; 3], kernel: &[f64], size: usize) -> Vec<T> {
    assert!(size % 2 == 1 && kernel.len() == size * size * size);
    let [nx, ny, nz] = dims;
    let r = size / 2;
    let (px, py, pz) = (nx + 2 * r, ny + 2 * r, nz + 2 * r);
    let mut pad = Vec::with_capacity(px * py * pz);
    for k in 0..pz {
        let sk = (k as isize - r as isize).clamp(0, nz as isize - 1) as usize;
        for j in 0..py {
            let sj = (j as isize - r as isize).clamp(0, ny as isize - 1) as usize;
            let src = &data[(sk * ny + sj) * nx..(sk * ny + sj + 1) * nx];
            pad.extend((0..px).map(|p| src[(p as isize - r as isize).clamp(0, nx as isize - 1) as usize]));
        }
    }
    let w: Vec<T> = kernel.iter().map(|&x| T::lit(x)).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut acc = vec![T::zero(); nx];
    for k in 0..nz {
        for j in 0..ny {
            acc.fill(T::zero());
            for c in 0..size {
                for b in 0..size {
                    let row = ((k + c) * py + (j + b)) * px;
                    let src = &pad[row..row + px];
                    let taps = &w[size * (b + size * c)..size * (b + size * c) + size];
                    for (a, &wt) in taps.iter().enumerate() {
                        if wt != T::zero() {
                            accumulate(&mut acc, &src[a..a + nx], wt);
                        }
                    }
                }
            }
            out.extend_from_slice(&acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct triple-loop correlation with clamped indices.
    fn brute_dense(data: &[f64], dims: [usize; 3], kernel: &[f64], size: usize) -> Vec<f64> {
        let r = (size / 2) as isize;
        let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
        let mut out = vec![0.0; data.len()];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let mut acc = 0.0;
                    for c in 0..size {
                        for b in 0..size {
                            for a in 0..size {
                                let si = clamp(i as isize + a as isize - r, dims[0]);
                                let sj = clamp(j as isize + b as isize - r, dims[1]);
                                let sk = clamp(k as isize + c as isize - r, dims[2]);
                                acc += kernel[a + size * (b + size * c)] * data[si + dims[0] * (sj + dims[1] * sk)];
                            }
                        }
                    }
                    out[i + dims[0] * (j + dims[1] * k)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn gaussian_kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(1.3);
        assert_eq!(k.len(), 9);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
        assert_eq!(gaussian_kernel(0.0), vec![1.0]);
    }

    #[test]
    fn dense_matches_brute_force() {
        let dims = [5, 4, 6];
        let data: Vec<f64> = (0..120).map(|x| ((x * 37) % 11) as f64 - 3.0).collect();
        let kernel: Vec<f64> = (0..27).map(|x| ((x * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let fast = convolve_dense(&data, dims, &kernel, 3);
        let slow = brute_dense(&data, dims, &kernel, 3);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_matches_dense_outer_product() {
        let dims = [6, 5, 4];
        let data: Vec<f64> = (0..120).map(|x| ((x * 13) % 17) as f64).collect();
        let k = [0.25, 0.5, 0.25];
        let dense: Vec<f64> = (0..27).map(|x| k[x % 3] * k[(x / 3) % 3] * k[x / 9]).collect();
        let a = convolve_separable(&data, dims, [&k, &k, &k]);
        let b = brute_dense(&data, dims, &dense, 3);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn axis_passes_match_brute_force() {
        let dims = [19, 6, 7];
        let data: Vec<f64> = (0..19 * 42).map(|x| ((x * 29) % 23) as f64 * 0.5).collect();
        let k = [0.1, -0.3, 0.7, 0.2, 0.3];
        for axis in 0..3 {
            let mut dense = vec![0.0; 125];
            for (t, &w) in k.iter().enumerate() {
                let mut idx = [2usize; 3];
                idx[axis] = t;
                dense[idx[0] + 5 * (idx[1] + 5 * idx[2])] = w;
            }
            let fast = convolve_axis(&data, dims, axis, &k);
            let slow = brute_dense(&data, dims, &dense, 5);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "axis {axis}");
            }
        }
    }

    #[test]
    fn blur_keeps_constant() {
        let data = vec![4.2f32; 7 * 6 * 5];
        let out = gaussian_blur(&data, [7, 6, 5], [1.0, 0.7, 2.0]);
        assert!(out.iter().all(|&v| v == 4.2));
    }
}
