use std::collections::BTreeMap;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::{Geometry, Grid, LabelMap, Orientation, Sample, Volume};
use crate::error::{Error, Result};
use crate::scalar::{LabelValue, Real, Voxel};

/// Highest semantic class id after relabeling.
pub const MAX_CLASS: u8 = 3;

/// Permutes and flips grid axes so the result has orientation `target`.
/// No interpolation; world coordinates of every voxel are unchanged.
pub fn reorient<V: Voxel>(grid: &Grid<V>, target: Orientation) -> Result<Grid<V>> {
    let src = grid.geometry();
    let plan = src.orientation().transform_to(&target);
    if plan == [(0, false), (1, false), (2, false)] {
        return Ok(grid.clone());
    }
    let in_dims = src.dims();
    let in_strides = [1, in_dims[0], in_dims[0] * in_dims[1]];
    let a = src.affine();

    let mut out_dims = [0usize; 3];
    let mut affine = *a;
    let mut origin = a.column(3).into_owned();
    let mut base = 0isize;
    let mut strides = [0isize; 3];
    for (t, &(s, flip)) in plan.iter().enumerate() {
        out_dims[t] = in_dims[s];
        let col = a.column(s).into_owned();
        let last = (in_dims[s] - 1) as f64;
        if flip {
            affine.set_column(t, &(-col));
            origin += col * last;
            base += ((in_dims[s] - 1) * in_strides[s]) as isize;
            strides[t] = -(in_strides[s] as isize);
        } else {
            affine.set_column(t, &col);
            strides[t] = in_strides[s] as isize;
        }
    }
    origin[3] = 1.0;
    affine.set_column(3, &origin);

    let geometry = Geometry::from_affine(out_dims, affine)?;
    debug_assert_eq!(geometry.orientation(), target);
    let src_data = grid.data();
    let mut data = Vec::with_capacity(src_data.len());
    for k in 0..out_dims[2] {
        let bk = base + k as isize * strides[2];
        for j in 0..out_dims[1] {
            let bj = bk + j as isize * strides[1];
            for i in 0..out_dims[0] {
                data.push(src_data[(bj + i as isize * strides[0]) as usize]);
            }
        }
    }
    Ok(Grid::from_parts(geometry, data))
}

/// Source label value to semantic class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMapping {
    pub entries: BTreeMap<u32, u8>,
    /// Unmapped non-zero labels are an error instead of becoming background.
    #[serde(default)]
    pub strict: bool,
}

impl LabelMapping {
    pub fn new(entries: BTreeMap<u32, u8>, strict: bool) -> Result<Self> {
        let m = LabelMapping { entries, strict };
        m.validate()?;
        Ok(m)
    }

    /// Maps 1, 2, 3 to themselves.
    pub fn identity() -> Self {
        LabelMapping {
            entries: (1..=MAX_CLASS).map(|c| (c as u32, c)).collect(),
            strict: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.entries.iter().find(|(_, &t)| t > MAX_CLASS) {
            Some((s, t)) => Err(Error::arg(format!(
                "label mapping {s} -> {t}: target classes must be 0..={MAX_CLASS}"
            ))),
            None => Ok(()),
        }
    }

    /// Class for a source label. Background 0 maps to 0 unless overridden.
    pub fn lookup(&self, label: u32) -> Result<u8> {
        match self.entries.get(&label) {
            Some(&t) => Ok(t),
            None if label == 0 || !self.strict => Ok(0),
            None => Err(Error::UnmappedLabel(label)),
        }
    }
}

pub fn relabel<S: LabelValue>(labels: &Grid<S>, mapping: &LabelMapping) -> Result<LabelMap> {
    mapping.validate()?;
    let mut cache: Option<(S, u8)> = None;
    let mut out = Vec::with_capacity(labels.data().len());
    for &v in labels.data() {
        let t = match cache {
            Some((k, t)) if k == v => t,
            _ => {
                let t = mapping.lookup(v.as_u32())?;
                cache = Some((v, t));
                t
            }
        };
        out.push(t);
    }
    Ok(labels.with_data(out))
}

/// Rescales to [0, 1] and returns the original (min, max). A constant volume
/// maps to all zeros.
pub fn min_max_normalize<T: Real>(vol: &Volume<T>) -> (Volume<T>, (T, T)) {
    let (lo, hi) = vol.min_max();
    let range = hi - lo;
    let out = if range > T::zero() {
        let inv = T::one() / range;
        vol.map(|v| ((v - lo) * inv).max(T::zero()).min(T::one()))
    } else {
        vol.map(|_| T::zero())
    };
    (out, (lo, hi))
}

/// Inverse of [`min_max_normalize`]: `v * (max - min) + min`.
pub fn restore_range<T: Real>(normalized: &Volume<T>, (lo, hi): (T, T)) -> Volume<T> {
    let range = hi - lo;
    normalized.map(|v| v * range + lo)
}

fn patch_grid<V: Voxel>(grid: &Grid<V>, origin: [i64; 3], size: [usize; 3], fill: V) -> Result<Grid<V>> {
    let src = grid.geometry();
    let a = src.affine();
    let o = a * Vector4::new(origin[0] as f64, origin[1] as f64, origin[2] as f64, 1.0);
    let mut affine = *a;
    affine.set_column(3, &o);
    let geometry = Geometry::from_affine(size, affine)?;
    let dims = src.dims().map(|d| d as i64);
    let mut data = Vec::with_capacity(geometry.len());
    for k in 0..size[2] as i64 {
        let sk = origin[2] + k;
        for j in 0..size[1] as i64 {
            let sj = origin[1] + j;
            let row_inside = (0..dims[1]).contains(&sj) && (0..dims[2]).contains(&sk);
            for i in 0..size[0] as i64 {
                let si = origin[0] + i;
                if row_inside && (0..dims[0]).contains(&si) {
                    data.push(grid.get(si as usize, sj as usize, sk as usize));
                } else {
                    data.push(fill);
                }
            }
        }
    }
    Ok(Grid::from_parts(geometry, data))
}

/// Crops (and pads where the window leaves the grid) a sample. Image padding
/// is the source minimum, label padding is background.
pub fn extract_patch<T: Real>(s: &Sample<T>, origin: [i64; 3], size: [usize; 3]) -> Result<Sample<T>> {
    if size.iter().any(|&d| d == 0) {
        return Err(Error::arg(format!("patch size must be >= 1, got {size:?}")));
    }
    let (lo, _) = s.image.min_max();
    Ok(Sample {
        image: patch_grid(&s.image, origin, size, lo)?,
        labels: patch_grid(&s.labels, origin, size, 0)?,
    })
}

/// Canonical training layout: PIR orientation at 1 mm isotropic spacing.
pub const TARGET_ORIENTATION: Orientation = Orientation::PIR;
pub const TARGET_SPACING: [f64; 3] = [1.0; 3];

/// Reorients to PIR, resamples to 1 mm (trilinear image, nearest labels)
/// and maps raw labels onto the semantic classes.
pub fn preprocess<T: Real, S: LabelValue>(image: &Volume<T>, labels: &Grid<S>, mapping: &LabelMapping) -> Result<Sample<T>> {
    if !image.geometry().matches(labels.geometry(), super::GEOMETRY_RTOL) {
        return Err(Error::Shape(format!(
            "image {:?} and labels {:?} do not share geometry",
            image.dims(),
            labels.dims()
        )));
    }
    let classes = relabel(labels, mapping)?;
    let image = reorient(image, TARGET_ORIENTATION)?;
    let classes = reorient(&classes, TARGET_ORIENTATION)?;
    let image = super::resample(&image, TARGET_SPACING, super::Interpolation::Trilinear)?;
    let classes = super::resample(&classes, TARGET_SPACING, super::Interpolation::Nearest)?;
    Sample::new(image, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn ramp(dims: [usize; 3], orientation: Orientation) -> Volume<f32> {
        let g = Geometry::aligned(dims, [1.0, 2.0, 3.0], orientation).unwrap();
        Volume::from_fn(g, |i, j, k| (i + 10 * j + 100 * k) as f32)
    }

    /// Hand-computed orientation letter per axis from the affine's largest
    /// column component, used to check the permutation independently.
    fn letters(g: &Geometry) -> String {
        let a = g.affine();
        (0..3)
            .map(|c| {
                let col = [a[(0, c)], a[(1, c)], a[(2, c)]];
                let m = (0..3).max_by(|&x, &y| col[x].abs().total_cmp(&col[y].abs())).unwrap();
                ["LR", "PA", "IS"][m].chars().nth((col[m] > 0.0) as usize).unwrap()
            })
            .collect()
    }

    #[test]
    fn ras_to_pir_dims_and_world_positions() {
        let v = ramp([2, 3, 4], Orientation::RAS);
        let out = reorient(&v, Orientation::PIR).unwrap();
        assert_eq!(out.dims(), [3, 4, 2]);
        assert_eq!(letters(out.geometry()), "PIR");
        for k in 0..2 {
            for j in 0..4 {
                for i in 0..3 {
                    // P = reversed A (axis 1), I = reversed S (axis 2), R = axis 0.
                    let (si, sj, sk) = (k, 2 - i, 3 - j);
                    assert_eq!(out.get(i, j, k), v.get(si, sj, sk));
                    let w_out = out.geometry().world([i as f64, j as f64, k as f64]);
                    let w_in = v.geometry().world([si as f64, sj as f64, sk as f64]);
                    for d in 0..3 {
                        assert!((w_out[d] - w_in[d]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn reorient_identity_and_round_trip() {
        let v = ramp([3, 4, 5], Orientation::PIR);
        assert_eq!(reorient(&v, Orientation::PIR).unwrap(), v);
        for code in ["RAS", "LPI", "SAL", "IRP"] {
            let t: Orientation = code.parse().unwrap();
            let back = reorient(&reorient(&v, t).unwrap(), Orientation::PIR).unwrap();
            assert_eq!(back.data(), v.data());
            assert!((back.geometry().affine() - v.geometry().affine()).amax() < 1e-9);
        }
    }

    #[test]
    fn relabel_cases() {
        let g = Geometry::identity([4, 1, 1]);
        let raw = Grid::<u32>::new(g, vec![0, 7, 12, 7]).unwrap();
        let m = LabelMapping::new([(7, 1)].into_iter().collect(), false).unwrap();
        assert_eq!(relabel(&raw, &m).unwrap().data(), &[0, 1, 0, 1]);
        let strict = LabelMapping::new([(7, 1)].into_iter().collect(), true).unwrap();
        assert!(matches!(relabel(&raw, &strict), Err(Error::UnmappedLabel(12))));
        let raw99 = raw.map(|v| if v == 12 { 99 } else { v });
        match relabel(&raw99, &strict) {
            Err(e) => assert!(e.to_string().contains("99")),
            Ok(_) => panic!("expected unmapped-label error"),
        }
        assert!(LabelMapping::new([(1, 4)].into_iter().collect(), false).is_err());
    }

    #[test]
    fn mapping_json_round_trip() {
        let m: LabelMapping = serde_json::from_str(r#"{"entries": {"41": 1, "100": 3}, "strict": true}"#).unwrap();
        assert_eq!(m.lookup(41).unwrap(), 1);
        assert_eq!(m.lookup(100).unwrap(), 3);
        assert!(serde_json::from_str::<LabelMapping>(r#"{"entries": {}, "oops": 1}"#).is_err());
    }

    #[test]
    fn normalize_cases() {
        let g = Geometry::identity([3, 1, 1]);
        let v = Volume::new(g.clone(), vec![2.0f32, 4.0, 6.0]).unwrap();
        let (n, (lo, hi)) = min_max_normalize(&v);
        assert_eq!(n.data(), &[0.0, 0.5, 1.0]);
        assert_eq!((lo, hi), (2.0, 6.0));
        assert_eq!(restore_range(&n, (lo, hi)), v);
        let c = Volume::filled(g.clone(), 5.0f32);
        assert!(min_max_normalize(&c).0.data().iter().all(|&x| x == 0.0));
        let unit = Volume::new(g, vec![0.0f32, 0.3, 1.0]).unwrap();
        let (n, _) = min_max_normalize(&unit);
        for (a, b) in n.data().iter().zip(unit.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn patch_cases() {
        let img = ramp([4, 5, 6], Orientation::RAS);
        let labels = img.map(|v| (v as u32 % 4) as u8);
        let s = Sample::new(img.clone(), labels).unwrap();
        assert_eq!(extract_patch(&s, [0, 0, 0], [4, 5, 6]).unwrap(), s);

        let p = extract_patch(&s, [1, 2, 3], [2, 2, 2]).unwrap();
        assert_eq!(p.image.get(1, 1, 1), img.get(2, 3, 4));
        let w = p.image.geometry().world([0.0, 0.0, 0.0]);
        assert_eq!(w, img.geometry().world([1.0, 2.0, 3.0]));

        let p = extract_patch(&s, [-2, 0, 0], [4, 5, 6]).unwrap();
        for k in 0..6 {
            for j in 0..5 {
                for i in 0..2 {
                    assert_eq!(p.image.get(i, j, k), 0.0);
                    assert_eq!(p.labels.get(i, j, k), 0);
                }
                assert_eq!(p.image.get(2, j, k), img.get(0, j, k));
            }
        }
        assert!(extract_patch(&s, [0, 0, 0], [0, 1, 1]).is_err());
    }

    #[test]
    fn preprocess_identity_and_ras_2mm() {
        let s = crate::synth::synthetic_sample::<f32>([10, 12, 8], 3);
        let out = preprocess(&s.image, &s.labels, &LabelMapping::identity()).unwrap();
        assert_eq!(out, s);

        let g = Geometry::aligned([6, 5, 4], [2.0; 3], Orientation::RAS).unwrap();
        let img = Volume::from_fn(g.clone(), |i, j, k| (i + 2 * j + 3 * k) as f32);
        let lab = Grid::<u32>::from_fn(g, |i, _, _| if i < 3 { 7 } else { 0 });
        let mapping = LabelMapping::new([(7, 1)].into_iter().collect(), true).unwrap();
        let out = preprocess(&img, &lab, &mapping).unwrap();
        assert_eq!(out.geometry().orientation(), Orientation::PIR);
        assert_eq!(out.geometry().spacing(), [1.0; 3]);
        // RAS (6, 5, 4) -> PIR axes (y, z, x) = (5, 4, 6), doubled.
        assert_eq!(out.geometry().dims(), [10, 8, 12]);
        assert_eq!(out.labels.label_set(), vec![0, 1]);
    }

    #[test]
    fn preprocess_rejects_mismatched_pair() {
        let img = Volume::<f32>::filled(Geometry::identity([3, 3, 3]), 0.0);
        let lab = Grid::<u8>::filled(Geometry::identity([3, 3, 4]), 0);
        assert!(matches!(preprocess(&img, &lab, &LabelMapping::identity()), Err(Error::Shape(_))));
    }
}
