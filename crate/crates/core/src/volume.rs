//! 3D volume containers and the two on-disk volume formats (SNKV1 and
//! single-file NIfTI-1, float32 little-endian).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Voxel counts along (x, y, z).
pub type Dims = [usize; 3];

pub type RealVolume<T> = Array3<T>;
pub type ComplexVolume<T> = Array3<Complex<T>>;

pub const SNKV_MAGIC: &[u8; 5] = b"SNKV1";

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

pub fn dims_of<A>(v: &Array3<A>) -> Dims {
    let s = v.shape();
    [s[0], s[1], s[2]]
}

pub fn to_complex<T: Real>(v: &RealVolume<T>) -> ComplexVolume<T> {
    v.mapv(|x| Complex::new(x, T::zero()))
}

pub fn magnitude<T: Real>(v: &ComplexVolume<T>) -> RealVolume<T> {
    v.mapv(|c| c.norm())
}

pub fn cast_volume<A: Real, B: Real>(v: &Array3<Complex<A>>) -> Array3<Complex<B>> {
    v.mapv(|c| Complex::new(B::lit(c.re.as_f64()), B::lit(c.im.as_f64())))
}

/// A real volume with its voxel size, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredVolume {
    pub data: Array3<f32>,
    pub voxel_size: [f32; 3],
}

pub fn write_snkv(path: &Path, data: &Array3<f32>, voxel_size: [f32; 3]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snkv_to(&mut w, data, voxel_size)?;
    w.flush()?;
    Ok(())
}

pub fn write_snkv_to<W: Write>(w: &mut W, data: &Array3<f32>, voxel_size: [f32; 3]) -> Result<()> {
    w.write_all(SNKV_MAGIC)?;
    for &d in data.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in voxel_size {
        w.write_all(&v.to_le_bytes())?;
    }
    // iter() walks in logical row-major order regardless of memory layout
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &x in data.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snkv(path: &Path) -> Result<StoredVolume> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_snkv(&bytes)
}

pub fn parse_snkv(bytes: &[u8]) -> Result<StoredVolume> {
    let bad = |reason: &str| Error::Format {
        kind: "SNKV1",
        reason: reason.to_string(),
    };
    if bytes.len() < 29 || &bytes[..5] != SNKV_MAGIC {
        return Err(bad("missing magic or truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dims = [u32_at(5), u32_at(9), u32_at(13)];
    let voxel_size = [f32_at(17), f32_at(21), f32_at(25)];
    let n = voxel_count(dims);
    if bytes.len() != 29 + 4 * n {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            4 * n,
            bytes.len() - 29
        )));
    }
    let values: Vec<f32> = bytes[29..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array3::from_shape_vec(dims, values).map_err(|e| bad(&e.to_string()))?;
    Ok(StoredVolume { data, voxel_size })
}

const NIFTI_HEADER_LEN: usize = 348;
const NIFTI_FLOAT32: i16 = 16;

/// Reads a single-file NIfTI-1 (`n+1`) float32 little-endian volume.
/// Voxel data on disk is x-fastest; the returned array is indexed `[x, y, z]`.
pub fn read_nifti(path: &Path) -> Result<StoredVolume> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_nifti(&bytes)
}

pub fn parse_nifti(bytes: &[u8]) -> Result<StoredVolume> {
    let bad = |reason: String| Error::Format {
        kind: "NIfTI-1",
        reason,
    };
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(bad("truncated header".into()));
    }
    let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let i16_at = |o: usize| i16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if i32_at(0) != NIFTI_HEADER_LEN as i32 {
        return Err(bad("sizeof_hdr is not 348 (big-endian files are not supported)".into()));
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(bad("only single-file n+1 volumes are supported".into()));
    }
    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(bad(format!("invalid dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate().take((ndim as usize).min(3)) {
        let v = i16_at(42 + 2 * a);
        if v < 1 {
            return Err(bad(format!("invalid dim[{}] = {v}", a + 1)));
        }
        *d = v as usize;
    }
    for a in 3..ndim as usize {
        if i16_at(42 + 2 * a) > 1 {
            return Err(bad("4D and higher volumes are not supported".into()));
        }
    }
    if i16_at(70) != NIFTI_FLOAT32 || i16_at(72) != 32 {
        return Err(bad("datatype must be float32".into()));
    }
    let voxel_size = [f32_at(80), f32_at(84), f32_at(88)];
    let offset = f32_at(108) as usize;
    let (slope, inter) = (f32_at(112), f32_at(116));
    let n = voxel_count(dims);
    if offset < NIFTI_HEADER_LEN || bytes.len() < offset + 4 * n {
        return Err(bad("truncated voxel data".into()));
    }
    let raw = &bytes[offset..offset + 4 * n];
    let mut data = Array3::<f32>::zeros(dims);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let mut v = f32::from_le_bytes(chunk.try_into().unwrap());
        if slope != 0.0 && slope.is_finite() {
            v = v * slope + inter;
        }
        let x = i % dims[0];
        let y = (i / dims[0]) % dims[1];
        let z = i / (dims[0] * dims[1]);
        data[[x, y, z]] = v;
    }
    Ok(StoredVolume { data, voxel_size })
}

/// Writes a minimal single-file NIfTI-1 float32 volume.
pub fn write_nifti(path: &Path, data: &Array3<f32>, voxel_size: [f32; 3]) -> Result<()> {
    let dims = dims_of(data);
    let mut hdr = vec![0u8; NIFTI_HEADER_LEN + 4];
    hdr[0..4].copy_from_slice(&(NIFTI_HEADER_LEN as i32).to_le_bytes());
    hdr[40..42].copy_from_slice(&3i16.to_le_bytes());
    for (a, &d) in dims.iter().enumerate() {
        hdr[42 + 2 * a..44 + 2 * a].copy_from_slice(&(d as i16).to_le_bytes());
    }
    hdr[70..72].copy_from_slice(&NIFTI_FLOAT32.to_le_bytes());
    hdr[72..74].copy_from_slice(&32i16.to_le_bytes());
    hdr[76..80].copy_from_slice(&1f32.to_le_bytes());
    for (a, v) in voxel_size.iter().enumerate() {
        hdr[80 + 4 * a..84 + 4 * a].copy_from_slice(&v.to_le_bytes());
    }
    hdr[108..112].copy_from_slice(&352f32.to_le_bytes());
    hdr[344..348].copy_from_slice(b"n+1\0");
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&hdr)?;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                w.write_all(&data[[x, y, z]].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, dispatching on the leading magic bytes.
pub fn read_any(path: &Path) -> Result<StoredVolume> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.starts_with(SNKV_MAGIC) {
        parse_snkv(&bytes)
    } else {
        parse_nifti(&bytes)
    }
}
