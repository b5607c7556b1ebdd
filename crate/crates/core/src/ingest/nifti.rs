//! NIfTI-1 single-file reader/writer for integer label and mask volumes.
//!
//! Voxels are stored x-fastest, so `dim[1]` is columns, `dim[2]` rows and
//! `dim[3]` slices. Orientation fields are written as identity and ignored
//! on read.

use crate::volume::{BinaryMask, LabelMask, TissueClass, Volume, VolumeDims};
use thiserror::Error;

pub const HEADER_LEN: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

#[derive(Debug, Error, PartialEq)]
pub enum NiftiError {
    #[error("bad NIfTI-1 header: {0}")]
    BadHeader(String),
    #[error("unsupported NIfTI datatype code {0} (uint8=2 and int16=4 are supported)")]
    UnsupportedDatatype(i16),
    #[error("volume is {found} but {expected} was expected")]
    DimMismatch {
        expected: VolumeDims,
        found: VolumeDims,
    },
    #[error("voxel {index} holds unknown label code {value}")]
    UnknownLabelCode { index: usize, value: i32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDatatype {
    U8,
    I16,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::U8 => 2,
            NiftiDatatype::I16 => 4,
        }
    }

    fn bytes_per_voxel(self) -> usize {
        match self {
            NiftiDatatype::U8 => 1,
            NiftiDatatype::I16 => 2,
        }
    }
}

/// Decoded integer volume.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiVolume {
    pub dims: VolumeDims,
    pub datatype: NiftiDatatype,
    /// Voxels in (slice, row, col) order.
    pub values: Vec<i32>,
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
    fn i16(&self, at: usize) -> i16 {
        let b = [self.bytes[at], self.bytes[at + 1]];
        if self.big_endian {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        let b = [
            self.bytes[at],
            self.bytes[at + 1],
            self.bytes[at + 2],
            self.bytes[at + 3],
        ];
        if self.big_endian {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }
}

/// Parses a NIfTI-1 integer volume (uint8 or int16).
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiVolume, NiftiError> {
    if bytes.len() < HEADER_LEN {
        return Err(NiftiError::BadHeader(format!(
            "{} bytes is shorter than the 348-byte header",
            bytes.len()
        )));
    }
    let size = [bytes[0], bytes[1], bytes[2], bytes[3]];
    let big_endian = if i32::from_le_bytes(size) == 348 {
        false
    } else if i32::from_be_bytes(size) == 348 {
        true
    } else {
        return Err(NiftiError::BadHeader(format!(
            "sizeof_hdr is {}, expected 348",
            i32::from_le_bytes(size)
        )));
    };
    let hdr = Fields { bytes, big_endian };

    let magic = &bytes[344..348];
    let single = magic == MAGIC_SINGLE;
    if !single && magic != MAGIC_PAIR {
        return Err(NiftiError::BadHeader(format!("bad magic {magic:?}")));
    }

    let ndim = hdr.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(NiftiError::BadHeader(format!("dim[0] = {ndim}")));
    }
    let mut dim = [1usize; 8];
    for (i, d) in dim.iter_mut().enumerate().take(ndim as usize + 1).skip(1) {
        let v = hdr.i16(40 + 2 * i);
        if v < 1 {
            return Err(NiftiError::BadHeader(format!("dim[{i}] = {v}")));
        }
        *d = v as usize;
    }
    if dim[4..].iter().any(|&d| d != 1) {
        return Err(NiftiError::BadHeader(
            "only 3-D volumes (trailing dims of 1) are supported".into(),
        ));
    }
    let dims = VolumeDims::new(dim[3], dim[2], dim[1]);

    let datatype = match hdr.i16(70) {
        2 => NiftiDatatype::U8,
        4 => NiftiDatatype::I16,
        other => return Err(NiftiError::UnsupportedDatatype(other)),
    };

    let vox_offset = hdr.f32(108);
    if !vox_offset.is_finite() || vox_offset < 0.0 {
        return Err(NiftiError::BadHeader(format!("vox_offset = {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    if single && vox_offset < SINGLE_FILE_OFFSET {
        return Err(NiftiError::BadHeader(format!(
            "vox_offset {vox_offset} < 352 in a single-file volume"
        )));
    }
    // Header-only files concatenated with their image payload.
    let start = vox_offset.max(HEADER_LEN);
    let needed = dims.voxel_count() * datatype.bytes_per_voxel();
    let payload = bytes.get(start..start + needed).ok_or_else(|| {
        NiftiError::BadHeader(format!(
            "payload needs {needed} bytes at offset {start}, file has {}",
            bytes.len()
        ))
    })?;
    let values = match datatype {
        NiftiDatatype::U8 => payload.iter().map(|&b| i32::from(b)).collect(),
        NiftiDatatype::I16 => payload
            .chunks_exact(2)
            .map(|b| {
                let v = if big_endian {
                    i16::from_be_bytes([b[0], b[1]])
                } else {
                    i16::from_le_bytes([b[0], b[1]])
                };
                i32::from(v)
            })
            .collect(),
    };
    Ok(NiftiVolume {
        dims,
        datatype,
        values,
    })
}

/// Parses an expert label file and checks it against the paired CT volume.
pub fn parse_nifti_labels(bytes: &[u8], expected: VolumeDims) -> Result<LabelMask, NiftiError> {
    let vol = parse_nifti(bytes)?;
    if vol.dims != expected {
        return Err(NiftiError::DimMismatch {
            expected,
            found: vol.dims,
        });
    }
    let classes = vol
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            u8::try_from(value)
                .ok()
                .and_then(TissueClass::from_code)
                .ok_or(NiftiError::UnknownLabelCode { index, value })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Volume::from_flat(vol.dims, &classes).expect("dims checked"))
}

/// Reads a binary mask: any nonzero voxel is inside.
pub fn parse_nifti_mask(bytes: &[u8], expected: VolumeDims) -> Result<BinaryMask, NiftiError> {
    let vol = parse_nifti(bytes)?;
    if vol.dims != expected {
        return Err(NiftiError::DimMismatch {
            expected,
            found: vol.dims,
        });
    }
    let bits: Vec<bool> = vol.values.iter().map(|&v| v != 0).collect();
    Ok(Volume::from_flat(vol.dims, &bits).expect("dims checked"))
}

/// Writes a little-endian single-file (`n+1`) volume. Values are truncated
/// to the datatype's width.
pub fn encode_nifti(dims: VolumeDims, datatype: NiftiDatatype, values: &[i32]) -> Vec<u8> {
    assert_eq!(values.len(), dims.voxel_count(), "voxel count mismatch");
    let mut out = vec![0u8; SINGLE_FILE_OFFSET];
    out[0..4].copy_from_slice(&348i32.to_le_bytes());
    let put_i16 = |out: &mut Vec<u8>, at: usize, v: i16| {
        out[at..at + 2].copy_from_slice(&v.to_le_bytes());
    };
    let put_f32 = |out: &mut Vec<u8>, at: usize, v: f32| {
        out[at..at + 4].copy_from_slice(&v.to_le_bytes());
    };
    put_i16(&mut out, 40, 3);
    put_i16(&mut out, 42, dims.cols as i16);
    put_i16(&mut out, 44, dims.rows as i16);
    put_i16(&mut out, 46, dims.slices as i16);
    for i in 4..8 {
        put_i16(&mut out, 40 + 2 * i, 1);
    }
    put_i16(&mut out, 70, datatype.code());
    put_i16(&mut out, 72, (datatype.bytes_per_voxel() * 8) as i16);
    for i in 0..4 {
        put_f32(&mut out, 76 + 4 * i, 1.0);
    }
    put_f32(&mut out, 108, SINGLE_FILE_OFFSET as f32);
    out[344..348].copy_from_slice(MAGIC_SINGLE);
    match datatype {
        NiftiDatatype::U8 => out.extend(values.iter().map(|&v| v as u8)),
        NiftiDatatype::I16 => out.extend(values.iter().flat_map(|&v| (v as i16).to_le_bytes())),
    }
    out
}

pub fn encode_label_mask(labels: &LabelMask) -> Vec<u8> {
    let codes: Vec<i32> = labels.iter().map(|c| i32::from(c.code())).collect();
    encode_nifti(labels.dims(), NiftiDatatype::U8, &codes)
}

pub fn encode_binary_mask(mask: &BinaryMask) -> Vec<u8> {
    let bits: Vec<i32> = mask.iter().map(|&b| i32::from(b)).collect();
    encode_nifti(mask.dims(), NiftiDatatype::U8, &bits)
}
