//! Library-level pipeline checks through on-disk formats.

use lungcad::blocking::{blockify_volume, class_counts, grid_rois, BlockingParams};
use lungcad::ingest::{encode_label_mask, load_series, parse_nifti_labels, write_series};
use lungcad::phantom::{generate_phantom, phantom_patient_set, PhantomSpec};
use lungcad::segmentation::{apply_mask, dice, segment_lungs, SegmentationParams};
use lungcad::{LabelMask, Tissue, TissueClass};

#[test]
fn series_round_trips_through_dicom_files() {
    let p = generate_phantom(&PhantomSpec::standard(96, 80, 3, 12)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_series(&p.volume, tmp.path()).unwrap();
    // A stray non-DICOM file is skipped.
    std::fs::write(tmp.path().join("README"), b"not a slice").unwrap();
    let back = load_series(tmp.path()).unwrap();
    assert_eq!(back.voxels, p.volume.voxels);
    assert_eq!(back.patient_id, p.volume.patient_id);

    let labels = parse_nifti_labels(&encode_label_mask(&p.labels), back.voxels.dims()).unwrap();
    assert_eq!(labels, p.labels);
}

#[test]
fn segmentation_recovers_jittered_lungs() {
    for p in phantom_patient_set(6, 21, 160, 160, 2).unwrap() {
        let mask = segment_lungs(&p.phantom.volume, &SegmentationParams::default()).unwrap();
        let d = dice(&mask, &p.phantom.lung_mask).unwrap();
        assert!(d >= 0.95, "patient {}: {d}", p.patient_id);
    }
}

#[test]
fn single_class_lung_gives_one_block_per_roi_inside() {
    let p = generate_phantom(&PhantomSpec::standard(128, 128, 2, 3)).unwrap();
    let seg = SegmentationParams::default();
    let params = BlockingParams::default();
    // Label the entire true lung healthy.
    let labels: LabelMask = p.lung_mask.map(|&m| {
        if m {
            TissueClass::Healthy
        } else {
            TissueClass::Unlabeled
        }
    });
    let masked = apply_mask(&p.volume, &p.lung_mask, seg.excluded_sentinel_hu).unwrap();
    let blocks = blockify_volume(&masked, &labels, 1, &params, seg.excluded_sentinel_hu).unwrap();

    // Closed form: ROIs with at least half of their pixels in the lung.
    let mut expected = 0;
    for plane in p.lung_mask.planes() {
        for cell in grid_rois(128, 128, 4) {
            let inside = (0..16)
                .filter(|i| *plane.get(cell.origin_row + i / 4, cell.origin_col + i % 4))
                .count();
            if inside * 2 >= 16 {
                expected += 1;
            }
        }
    }
    assert_eq!(class_counts(&blocks), [0, 0, expected]);
    assert!(blocks.iter().all(|b| b.label == Tissue::Healthy));
}
