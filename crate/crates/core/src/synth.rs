//! Seeded synthetic spine-like samples for benchmarks and tests.
//!
//! The image is a smooth random field plus per-class intensity offsets,
//! quantized to multiples of 1/64 the way scanner output is fixed-point.
//! Labels are ellipsoidal vertebral bodies (1) stacked along axis 1 with
//! discs (2) between them and a cylindrical canal (3) behind.

use rand::Rng;

use crate::rng::RngStream;
use crate::scalar::Real;
use crate::volume::{Geometry, LabelMap, Orientation, Sample, Volume};

const SYNTH_SUBSTREAM: u64 = 0x5EED_5A4D;
const QUANTUM: f64 = 1.0 / 64.0;

pub fn synthetic_labels(dims: [usize; 3], seed: u64) -> LabelMap {
    let mut rng = RngStream::new(seed, SYNTH_SUBSTREAM ^ 1).rng();
    let [nx, ny, nz] = dims.map(|d| d as f64);
    let jitter = |rng: &mut crate::StreamRng| rng.random_range(-0.05..0.05);
    let body_x = nx * (0.4 + jitter(&mut rng));
    let body_z = nz * (0.5 + jitter(&mut rng));
    let canal_x = nx * (0.78 + jitter(&mut rng) * 0.5);
    let levels = 4usize;
    let pitch = ny / levels as f64;
    let body_r = [nx * 0.2, pitch * 0.36, nz * 0.25];
    let disc_r = [nx * 0.19, pitch * 0.1, nz * 0.23];
    let canal_r = nx.min(nz) * 0.08;
    let geometry = Geometry::aligned(dims, [1.0; 3], Orientation::PIR).expect("synthetic geometry");
    let inside = |p: [f64; 3], c: [f64; 3], r: [f64; 3]| {
        (0..3).map(|a| ((p[a] - c[a]) / r[a].max(0.5)).powi(2)).sum::<f64>() <= 1.0
    };
    LabelMap::from_fn(geometry, |i, j, k| {
        let p = [i as f64, j as f64, k as f64];
        let rc = ((p[0] - canal_x).powi(2) + (p[2] - body_z).powi(2)).sqrt();
        if rc <= canal_r.max(0.5) {
            return 3;
        }
        let level = (p[1] / pitch).floor().min(levels as f64 - 1.0);
        let body_c = [body_x, (level + 0.5) * pitch, body_z];
        if inside(p, body_c, body_r) {
            return 1;
        }
        let disc_c = [body_x, (p[1] / pitch).round() * pitch, body_z];
        if inside(p, disc_c, disc_r) {
            2
        } else {
            0
        }
    })
}

pub fn synthetic_image<T: Real>(labels: &LabelMap, seed: u64) -> Volume<T> {
    let mut rng = RngStream::new(seed, SYNTH_SUBSTREAM ^ 2).rng();
    let dims = labels.dims();
    let waves: Vec<(f64, [Vec<f64>; 3])> = (0..6)
        .map(|_| {
            let amp = rng.random_range(20.0..80.0);
            let axes = [0, 1, 2].map(|a| {
                let freq = rng.random_range(0.5..3.0) * std::f64::consts::TAU / dims[a] as f64;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (0..dims[a]).map(|x| (freq * x as f64 + phase).cos()).collect()
            });
            (amp, axes)
        })
        .collect();
    let offsets = [0.0, 400.0, 150.0, -120.0];
    let mut data = Vec::with_capacity(labels.data().len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let field: f64 = waves.iter().map(|(a, ax)| a * ax[0][i] * ax[1][j] * ax[2][k]).sum();
                let l = labels.get(i, j, k) as usize;
                let v = 200.0 + field + offsets[l.min(3)];
                data.push(T::lit((v / QUANTUM).round() * QUANTUM));
            }
        }
    }
    labels.with_data(data)
}

/// Deterministic image/label pair in PIR orientation at 1 mm.
pub fn synthetic_sample<T: Real>(dims: [usize; 3], seed: u64) -> Sample<T> {
    let labels = synthetic_labels(dims, seed);
    let image = synthetic_image(&labels, seed);
    Sample { image, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_has_all_classes() {
        let a = synthetic_sample::<f32>([32, 48, 32], 7);
        assert_eq!(a, synthetic_sample::<f32>([32, 48, 32], 7));
        assert_ne!(a, synthetic_sample::<f32>([32, 48, 32], 8));
        assert_eq!(a.labels.label_set(), vec![0, 1, 2, 3]);
        assert!(a.image.data().iter().all(|v| (v * 64.0).fract() == 0.0));
    }
}
