//! File ingestion: CT slices, series assembly and expert label volumes.

mod dicom;
mod nifti;

pub use dicom::{encode_dicom_slice, parse_dicom_slice, to_hu, DicomError, RawSlice};
pub use nifti::{
    encode_binary_mask, encode_label_mask, encode_nifti, parse_nifti, parse_nifti_labels,
    parse_nifti_mask, NiftiDatatype, NiftiError, NiftiVolume,
};

use crate::volume::{HuVolume, Plane, Volume};
use rayon::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Dicom { path: PathBuf, source: DicomError },
    #[error("no parseable DICOM slices")]
    EmptySeries,
    #[error("slice {instance} is {found:?} but the series is {expected:?}")]
    InconsistentDimensions {
        instance: i32,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("two slices share sort key {0}")]
    DuplicateSortKey(String),
}

/// Orders slices and stacks their Hounsfield planes.
///
/// Slices sort by slice location when every slice carries one, otherwise by
/// instance number.
pub fn assemble_series(
    mut slices: Vec<RawSlice>,
    fallback_patient_id: &str,
) -> Result<HuVolume, IngestError> {
    let first = slices.first().ok_or(IngestError::EmptySeries)?;
    let expected = (first.rows, first.cols);
    if let Some(bad) = slices.iter().find(|s| (s.rows, s.cols) != expected) {
        return Err(IngestError::InconsistentDimensions {
            instance: bad.instance_number,
            expected,
            found: (bad.rows, bad.cols),
        });
    }

    if slices.iter().all(|s| s.slice_location.is_some()) {
        slices.sort_by(|a, b| {
            a.slice_location
                .unwrap()
                .total_cmp(&b.slice_location.unwrap())
        });
        if let Some(w) = slices
            .windows(2)
            .find(|w| w[0].slice_location == w[1].slice_location)
        {
            return Err(IngestError::DuplicateSortKey(format!(
                "slice_location={}",
                w[0].slice_location.unwrap()
            )));
        }
    } else {
        slices.sort_by_key(|s| s.instance_number);
        if let Some(w) = slices
            .windows(2)
            .find(|w| w[0].instance_number == w[1].instance_number)
        {
            return Err(IngestError::DuplicateSortKey(format!(
                "instance_number={}",
                w[0].instance_number
            )));
        }
    }

    let patient_id = slices
        .iter()
        .find_map(|s| s.patient_id.clone())
        .unwrap_or_else(|| fallback_patient_id.to_string());
    let planes: Vec<Plane<i32>> = slices.iter().map(to_hu).collect();
    Ok(HuVolume {
        patient_id,
        voxels: Volume::from_planes(planes).expect("dimensions checked"),
    })
}

/// Loads every DICOM file in `dir`. Files without the DICM magic are skipped;
/// any other parse failure aborts the load.
pub fn load_series(dir: &Path) -> Result<HuVolume, IngestError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IngestError::Io { path, source }
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let parsed: Vec<Option<RawSlice>> = paths
        .par_iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(io_err(path))?;
            match parse_dicom_slice(&bytes) {
                Ok(raw) => Ok(Some(raw)),
                Err(DicomError::MissingMagic) => {
                    log::debug!("skipping non-DICOM file {}", path.display());
                    Ok(None)
                }
                Err(source) => Err(IngestError::Dicom {
                    path: path.clone(),
                    source,
                }),
            }
        })
        .collect::<Result<_, _>>()?;

    let fallback = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    assemble_series(parsed.into_iter().flatten().collect(), &fallback)
}

/// Converts a Hounsfield volume back into signed 16-bit slices with
/// intercept −1024 and slope 1, one file per slice.
pub fn volume_to_slices(volume: &HuVolume, slice_spacing_mm: f64) -> Vec<RawSlice> {
    volume
        .voxels
        .planes()
        .iter()
        .enumerate()
        .map(|(z, plane)| {
            let stored = plane.map(|&hu| (hu + 1024).clamp(i16::MIN as i32, i16::MAX as i32));
            let mut raw = RawSlice::new(stored, z as i32 + 1);
            raw.rescale_intercept = -1024.0;
            raw.slice_location = Some(z as f64 * slice_spacing_mm);
            raw.patient_id = Some(volume.patient_id.clone());
            raw
        })
        .collect()
}

/// Writes a series as `slice_NNNN.dcm` files.
pub fn write_series(volume: &HuVolume, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for raw in volume_to_slices(volume, 1.0) {
        let path = dir.join(format!("slice_{:04}.dcm", raw.instance_number));
        fs::write(&path, encode_dicom_slice(&raw)).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}
