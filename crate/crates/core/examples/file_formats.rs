//! DICOM slice and NIfTI label volume encode/parse, plus the key=value
//! config dump.
//!
//! cargo run --example file_formats

use lungcad::cli::PipelineConfig;
use lungcad::ingest::{
    encode_dicom_slice, encode_label_mask, parse_dicom_slice, parse_nifti, to_hu, RawSlice,
};
use lungcad::{Plane, TissueClass, Volume};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut raw = RawSlice::new(Plane::from_fn(4, 4, |r, c| (r * 100 + c) as i32), 1);
    raw.rescale_slope = 2.0;
    raw.rescale_intercept = -1024.0;
    raw.rescale_defaulted = false;
    let bytes = encode_dicom_slice(&raw);
    let parsed = parse_dicom_slice(&bytes)?;
    println!(
        "DICOM: {} bytes, first row HU {:?}",
        bytes.len(),
        &to_hu(&parsed).as_slice()[..4]
    );

    let labels = Volume::filled(2, 3, 3, TissueClass::GroundGlass);
    let nii = parse_nifti(&encode_label_mask(&labels))?;
    println!(
        "NIfTI: dims {} {:?}, codes {:?}",
        nii.dims,
        nii.datatype,
        &nii.values[..3]
    );

    print!("{}", PipelineConfig::default().dump());
    Ok(())
}
