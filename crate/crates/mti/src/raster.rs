//! On-disk volume formats.
//!
//! Two formats are understood:
//!
//! * the project's portable raster stack (`.mtir`) — a small documented
//!   container so tests and toy runs work without any external data, and
//! * uncompressed single-file NIfTI-1 (`.nii`) for real challenge volumes.
//!
//! # Raster stack layout
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"MTIRSTK1"
//! 8       4     dtype  u32 LE: 0=u8, 1=u16, 2=f32, 3=f64
//! 12      4     ndim   u32 LE, always 3
//! 16      12    dims   u32 LE × 3: depth, height, width
//! 28      ..    payload, little-endian, row-major (depth, then row, then col)
//! ```

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MTIRSTK1";

/// Element type of a stored raster stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
    F32 = 2,
    F64 = 3,
}

impl Dtype {
    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::U16),
            2 => Some(Dtype::F32),
            3 => Some(Dtype::F64),
            _ => None,
        }
    }

    fn byte_width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Writes a `(depth, height, width)` stack in the portable raster format.
///
/// Values are cast to `dtype` without range checks; callers keep label stacks
/// in `U8` and intensity stacks in `F32`/`F64`.
pub fn write_stack(path: &Path, stack: &Array3<f64>, dtype: Dtype) -> Result<()> {
    let (d, h, w) = stack.dim();
    let mut buf = Vec::with_capacity(28 + d * h * w * dtype.byte_width());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(dtype as u32).to_le_bytes());
    buf.extend_from_slice(&3u32.to_le_bytes());
    for dim in [d, h, w] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in stack.iter() {
        match dtype {
            Dtype::U8 => buf.push(v as u8),
            Dtype::U16 => buf.extend_from_slice(&(v as u16).to_le_bytes()),
            Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a portable raster stack back as `f64`.
pub fn read_stack(path: &Path) -> Result<Array3<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |detail: &str| Error::MalformedRaster {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < 28 {
        return Err(malformed("file shorter than header"));
    }
    if &bytes[0..8] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let dtype = Dtype::from_code(u32_at(8)).ok_or_else(|| malformed("unknown dtype code"))?;
    if u32_at(12) != 3 {
        return Err(malformed("ndim must be 3"));
    }
    let (d, h, w) = (u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize);
    let n = d * h * w;
    let payload = &bytes[28..];
    if payload.len() != n * dtype.byte_width() {
        return Err(malformed("payload size does not match dims"));
    }
    let mut data = Vec::with_capacity(n);
    match dtype {
        Dtype::U8 => data.extend(payload.iter().map(|&b| b as f64)),
        Dtype::U16 => {
            for c in payload.chunks_exact(2) {
                data.push(u16::from_le_bytes([c[0], c[1]]) as f64);
            }
        }
        Dtype::F32 => {
            for c in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for c in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(c.try_into().unwrap()));
            }
        }
    }
    Array3::from_shape_vec((d, h, w), data).map_err(|_| malformed("shape/vec mismatch"))
}

/// Reads a volume stack from either supported format, keyed on the file
/// extension (`.mtir` or `.nii`).
pub fn read_volume_any(path: &Path) -> Result<Array3<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtir") => read_stack(path),
        Some("nii") => read_nifti(path),
        other => Err(Error::MalformedRaster {
            path: path.to_path_buf(),
            detail: format!("unsupported extension {:?}", other),
        }),
    }
}

/// Reads an uncompressed little-endian single-file NIfTI-1 volume.
///
/// Only the fields needed for slice stacks are interpreted: dims, datatype,
/// `vox_offset` and the `scl_slope`/`scl_inter` rescale. Orientation metadata
/// is ignored; data is returned as stored, `(nz, ny, nx)`.
pub fn read_nifti(path: &Path) -> Result<Array3<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |detail: String| Error::MalformedRaster {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(malformed(
            "gzip-compressed NIfTI is not supported; decompress to .nii first".into(),
        ));
    }
    if bytes.len() < 352 {
        return Err(malformed("file shorter than NIfTI-1 header".into()));
    }
    let i32_at = |off: usize| i32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let i16_at = |off: usize| i16::from_le_bytes(bytes[off..off + 2].try_into().unwrap());
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    if i32_at(0) != 348 {
        return Err(malformed(
            "sizeof_hdr != 348 (big-endian or NIfTI-2 files are not supported)".into(),
        ));
    }
    let ndim = i16_at(40);
    if !(2..=4).contains(&ndim) {
        return Err(malformed(format!("unsupported ndim {ndim}")));
    }
    let nx = i16_at(42).max(1) as usize;
    let ny = i16_at(44).max(1) as usize;
    let nz = i16_at(46).max(1) as usize;
    if ndim == 4 && i16_at(48).max(1) != 1 {
        return Err(malformed("4D volumes with multiple timepoints are not supported".into()));
    }
    let datatype = i16_at(70);
    let vox_offset = f32_at(108) as usize;
    let slope = f32_at(112);
    let inter = f32_at(116);
    let magic = &bytes[344..348];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(malformed("bad NIfTI magic".into()));
    }
    let n = nx * ny * nz;
    let width = match datatype {
        2 => 1,    // u8
        4 => 2,    // i16
        8 => 4,    // i32
        16 => 4,   // f32
        64 => 8,   // f64
        512 => 2,  // u16
        dt => return Err(malformed(format!("unsupported datatype {dt}"))),
    };
    if bytes.len() < vox_offset + n * width {
        return Err(malformed("payload truncated".into()));
    }
    let payload = &bytes[vox_offset..vox_offset + n * width];
    let mut data = Vec::with_capacity(n);
    match datatype {
        2 => data.extend(payload.iter().map(|&b| b as f64)),
        4 => {
            for c in payload.chunks_exact(2) {
                data.push(i16::from_le_bytes([c[0], c[1]]) as f64);
            }
        }
        8 => {
            for c in payload.chunks_exact(4) {
                data.push(i32::from_le_bytes(c.try_into().unwrap()) as f64);
            }
        }
        16 => {
            for c in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
            }
        }
        64 => {
            for c in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(c.try_into().unwrap()));
            }
        }
        512 => {
            for c in payload.chunks_exact(2) {
                data.push(u16::from_le_bytes([c[0], c[1]]) as f64);
            }
        }
        _ => unreachable!(),
    }
    if slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope as f64 + inter as f64;
        }
    }
    // stored x-fastest, so (nz, ny, nx) is row-major as-is
    Array3::from_shape_vec((nz, ny, nx), data)
        .map_err(|_| malformed("shape/vec mismatch".into()))
}
