//! Writes a synthetic patient as a DICOM series, reads it back, segments the
//! lungs and scores the mask against the truth.
//!
//! cargo run --release --example segment_phantom

use lungcad::cli::image::{encode_pgm, mask_to_gray};
use lungcad::ingest::{load_series, write_series};
use lungcad::phantom::{generate_phantom, PhantomSpec};
use lungcad::segmentation::{dice, segment_lungs, SegmentationParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phantom = generate_phantom(&PhantomSpec::standard(256, 256, 8, 1))?;
    let dir = std::env::temp_dir().join("lungcad_segment_phantom");
    write_series(&phantom.volume, &dir.join("dicom"))?;

    let volume = load_series(&dir.join("dicom"))?;
    println!("loaded {} ({})", volume.patient_id, volume.voxels.dims());
    let mask = segment_lungs(&volume, &SegmentationParams::default())?;
    println!(
        "lung voxels {} (truth {}), dice={:.3}",
        mask.cardinality(),
        phantom.lung_mask.cardinality(),
        dice(&mask, &phantom.lung_mask)?
    );
    let pgm = dir.join("mask_slice_0000.pgm");
    std::fs::write(&pgm, encode_pgm(&mask_to_gray(mask.plane(0))))?;
    println!("wrote {}", pgm.display());
    Ok(())
}
