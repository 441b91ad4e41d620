//! NIfTI-1 single-file (`.nii`, `.nii.gz`) reading and writing.
//!
//! Reads either byte order; always writes little-endian with both the sform
//! (exact affine) and a qform derived from it.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4};

use super::{Geometry, Grid};
use crate::error::{Error, Result};
use crate::scalar::Voxel;

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;

/// The header fields this crate reads or writes.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub big_endian: bool,
}

impl NiftiHeader {
    fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_SIZE {
            return Err(Error::Parse(format!(
                "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
                buf.len()
            )));
        }
        if LittleEndian::read_i32(&buf[0..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<LittleEndian>(buf, false)
        } else if BigEndian::read_i32(&buf[0..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<BigEndian>(buf, true)
        } else {
            Err(Error::Parse("sizeof_hdr is not 348".into()))
        }
    }

    fn parse_with<B: ByteOrder>(buf: &[u8], big_endian: bool) -> Result<Self> {
        let magic = &buf[344..348];
        if magic != b"n+1\0" {
            return Err(Error::Parse(format!(
                "magic {magic:?} is not a single-file NIfTI-1 header"
            )));
        }
        let f32_at = |off: usize| B::read_f32(&buf[off..off + 4]);
        let i16_at = |off: usize| B::read_i16(&buf[off..off + 2]);
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for k in 0..8 {
            dim[k] = i16_at(40 + 2 * k);
            pixdim[k] = f32_at(76 + 4 * k);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(280 + 16 * r + 4 * c);
            }
        }
        Ok(NiftiHeader {
            dim,
            datatype: i16_at(70),
            bitpix: i16_at(72),
            pixdim,
            vox_offset: f32_at(108),
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
            qform_code: i16_at(252),
            sform_code: i16_at(254),
            quatern: [f32_at(256), f32_at(260), f32_at(264)],
            qoffset: [f32_at(268), f32_at(272), f32_at(276)],
            srow,
            big_endian,
        })
    }

    fn spatial_dims(&self) -> Result<[usize; 3]> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::Parse(format!("dim[0] = {ndim} out of range")));
        }
        if ndim < 3 {
            return Err(Error::Dimensionality(format!("{ndim}D image")));
        }
        let extra = (4..=ndim as usize).map(|k| self.dim[k]).filter(|&d| d > 1).count();
        if extra > 0 {
            return Err(Error::Dimensionality(format!(
                "{ndim}D image with dims {:?}",
                &self.dim[1..=ndim as usize]
            )));
        }
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let d = self.dim[k + 1];
            if d < 1 {
                return Err(Error::Parse(format!("dim[{}] = {d}", k + 1)));
            }
            dims[k] = d as usize;
        }
        Ok(dims)
    }

    fn affine(&self) -> Matrix4<f64> {
        if self.sform_code > 0 {
            let mut a = Matrix4::identity();
            for r in 0..3 {
                for c in 0..4 {
                    a[(r, c)] = self.srow[r][c] as f64;
                }
            }
            a
        } else if self.qform_code > 0 {
            self.qform_affine()
        } else {
            let mut a = Matrix4::identity();
            for k in 0..3 {
                let s = self.pixdim[k + 1].abs() as f64;
                a[(k, k)] = if s > 0.0 { s } else { 1.0 };
            }
            a
        }
    }

    fn qform_affine(&self) -> Matrix4<f64> {
        let [b, c, d] = self.quatern.map(|v| v as f64);
        let mut a = 1.0 - (b * b + c * c + d * d);
        let (b, c, d) = if a < 1e-7 {
            let n = (b * b + c * c + d * d).sqrt();
            a = 0.0;
            (b / n, c / n, d / n)
        } else {
            a = a.sqrt();
            (b, c, d)
        };
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let spacing = [1, 2, 3].map(|k| {
            let s = self.pixdim[k].abs() as f64;
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        let r = Matrix3::new(
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        );
        let mut m = Matrix4::identity();
        for row in 0..3 {
            m[(row, 0)] = r[(row, 0)] * spacing[0];
            m[(row, 1)] = r[(row, 1)] * spacing[1];
            m[(row, 2)] = r[(row, 2)] * spacing[2] * qfac;
            m[(row, 3)] = self.qoffset[row] as f64;
        }
        m
    }
}

/// Quaternion (b, c, d) and qfac for the rotation part of an affine.
fn affine_to_quatern(affine: &Matrix4<f64>, spacing: [f64; 3]) -> ([f64; 3], f64) {
    let mut r = Matrix3::zeros();
    for c in 0..3 {
        for row in 0..3 {
            r[(row, c)] = affine[(row, c)] / spacing[c];
        }
    }
    let qfac = if r.determinant() < 0.0 {
        for row in 0..3 {
            r[(row, 2)] = -r[(row, 2)];
        }
        -1.0
    } else {
        1.0
    };
    // Polar decomposition would be more robust for sheared input; the sform
    // carries the exact affine so the qform is informational.
    let (r11, r12, r13) = (r[(0, 0)], r[(0, 1)], r[(0, 2)]);
    let (r21, r22, r23) = (r[(1, 0)], r[(1, 1)], r[(1, 2)]);
    let (r31, r32, r33) = (r[(2, 0)], r[(2, 1)], r[(2, 2)]);
    let trace = r11 + r22 + r33 + 1.0;
    let (a, b, c, d);
    if trace > 0.5 {
        let a0 = 0.5 * trace.sqrt();
        a = a0;
        b = 0.25 * (r32 - r23) / a0;
        c = 0.25 * (r13 - r31) / a0;
        d = 0.25 * (r21 - r12) / a0;
    } else {
        let xd = 1.0 + r11 - (r22 + r33);
        let yd = 1.0 + r22 - (r11 + r33);
        let zd = 1.0 + r33 - (r11 + r22);
        if xd > 1.0 {
            let b0 = 0.5 * xd.sqrt();
            b = b0;
            c = 0.25 * (r12 + r21) / b0;
            d = 0.25 * (r13 + r31) / b0;
            a = 0.25 * (r32 - r23) / b0;
        } else if yd > 1.0 {
            let c0 = 0.5 * yd.sqrt();
            c = c0;
            b = 0.25 * (r12 + r21) / c0;
            d = 0.25 * (r23 + r32) / c0;
            a = 0.25 * (r13 - r31) / c0;
        } else {
            let d0 = 0.5 * zd.sqrt();
            d = d0;
            b = 0.25 * (r13 + r31) / d0;
            c = 0.25 * (r23 + r32) / d0;
            a = 0.25 * (r21 - r12) / d0;
        }
    }
    let sign = if a < 0.0 { -1.0 } else { 1.0 };
    ([b * sign, c * sign, d * sign], qfac)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse(format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn decode_values<B: ByteOrder>(datatype: i16, bytes: &[u8], n: usize) -> Result<Vec<f64>> {
    let width = match datatype {
        2 | 256 => 1,
        4 | 512 => 2,
        8 | 16 | 768 => 4,
        64 | 1024 | 1280 => 8,
        other => {
            return Err(Error::UnsupportedFormat(format!("NIfTI datatype {other}")));
        }
    };
    let need = n * width;
    if bytes.len() < need {
        return Err(Error::Parse(format!(
            "data section has {} bytes, expected {need}",
            bytes.len()
        )));
    }
    let chunks = bytes[..need].chunks_exact(width);
    Ok(match datatype {
        2 => chunks.map(|c| c[0] as f64).collect(),
        256 => chunks.map(|c| c[0] as i8 as f64).collect(),
        4 => chunks.map(|c| B::read_i16(c) as f64).collect(),
        512 => chunks.map(|c| B::read_u16(c) as f64).collect(),
        8 => chunks.map(|c| B::read_i32(c) as f64).collect(),
        768 => chunks.map(|c| B::read_u32(c) as f64).collect(),
        16 => chunks.map(|c| B::read_f32(c) as f64).collect(),
        64 => chunks.map(B::read_f64).collect(),
        1024 => chunks.map(|c| B::read_i64(c) as f64).collect(),
        _ => chunks.map(|c| B::read_u64(c) as f64).collect(),
    })
}

/// Reads a NIfTI-1 file into a grid of `V`, applying `scl_slope`/`scl_inter`.
///
/// Values that `V` cannot represent (negative or fractional labels, labels
/// above the element range, non-finite intensities) are a parse error.
pub fn load_nifti<V: Voxel>(path: impl AsRef<Path>) -> Result<Grid<V>> {
    let path = path.as_ref();
    let buf = read_all(path)?;
    let hdr = NiftiHeader::parse(&buf)?;
    let dims = hdr.spatial_dims()?;
    let n: usize = dims.iter().product();
    let offset = if hdr.vox_offset >= HEADER_SIZE as f32 {
        hdr.vox_offset as usize
    } else {
        DATA_OFFSET
    };
    let body = buf
        .get(offset..)
        .ok_or_else(|| Error::Parse(format!("vox_offset {offset} beyond end of file")))?;
    let raw = if hdr.big_endian {
        decode_values::<BigEndian>(hdr.datatype, body, n)?
    } else {
        decode_values::<LittleEndian>(hdr.datatype, body, n)?
    };
    let (slope, inter) = (hdr.scl_slope as f64, hdr.scl_inter as f64);
    let scaled = slope != 0.0 && slope.is_finite() && inter.is_finite() && !(slope == 1.0 && inter == 0.0);
    let mut data = Vec::with_capacity(n);
    for (idx, r) in raw.into_iter().enumerate() {
        let v = if scaled { r * slope + inter } else { r };
        let converted = V::from_f64_checked(v).ok_or_else(|| {
            Error::Parse(format!(
                "{}: voxel {idx} value {v} is not representable as {}",
                path.display(),
                std::any::type_name::<V>()
            ))
        })?;
        data.push(converted);
    }
    let geometry = Geometry::from_affine(dims, hdr.affine()).map_err(|e| match e {
        Error::Orientation(m) | Error::Argument(m) => Error::Parse(format!("affine: {m}")),
        other => other,
    })?;
    Grid::new(geometry, data)
}

fn encode_header(geometry: &Geometry, datatype: i16, bitpix: i16) -> Vec<u8> {
    let mut h = vec![0u8; DATA_OFFSET];
    let dims = geometry.dims();
    let spacing = geometry.spacing();
    let affine = geometry.affine();
    let (quatern, qfac) = affine_to_quatern(affine, spacing);
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let dim = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * k..], *d);
    }
    LittleEndian::write_i16(&mut h[70..], datatype);
    LittleEndian::write_i16(&mut h[72..], bitpix);
    let pixdim = [qfac as f32, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (k, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * k..], *p);
    }
    LittleEndian::write_f32(&mut h[108..], DATA_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..], 1.0);
    h[123] = 2; // mm
    LittleEndian::write_i16(&mut h[252..], 1);
    LittleEndian::write_i16(&mut h[254..], 1);
    for (k, q) in quatern.iter().enumerate() {
        LittleEndian::write_f32(&mut h[256 + 4 * k..], *q as f32);
        LittleEndian::write_f32(&mut h[268 + 4 * k..], affine[(k, 3)] as f32);
    }
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut h[280 + 16 * r + 4 * c..], affine[(r, c)] as f32);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

/// Writes a grid as NIfTI-1; a `.gz` suffix selects gzip compression.
///
/// Output bytes are a pure function of the grid, so repeated saves are
/// byte-identical.
pub fn save_nifti<V: Voxel>(grid: &Grid<V>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let width = match V::NIFTI_DATATYPE {
        2 => 1,
        16 | 768 => 4,
        _ => 8,
    };
    let mut bytes = encode_header(grid.geometry(), V::NIFTI_DATATYPE, (width * 8) as i16);
    bytes.reserve(grid.data().len() * width);
    let mut scratch = [0u8; 8];
    for &v in grid.data() {
        let x = v.to_f64();
        match V::NIFTI_DATATYPE {
            2 => bytes.push(x as u8),
            16 => {
                LittleEndian::write_f32(&mut scratch, x as f32);
                bytes.extend_from_slice(&scratch[..4]);
            }
            768 => {
                LittleEndian::write_u32(&mut scratch, x as u32);
                bytes.extend_from_slice(&scratch[..4]);
            }
            _ => {
                LittleEndian::write_f64(&mut scratch, x);
                bytes.extend_from_slice(&scratch);
            }
        }
    }
    let write_err = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(write_err)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(&bytes).map_err(write_err)?;
        enc.finish().and_then(|mut w| w.flush()).map_err(write_err)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush()).map_err(write_err)?;
    }
    Ok(())
}
