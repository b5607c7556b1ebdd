//! End-to-end glue: segmentation → masking → blocking → balancing, and
//! per-ROI prediction maps.

use crate::blocking::{
    self, balance_blocks, blockify_volume, extract_block, grid_rois, normalize_block, Block,
    BlockingError, BlockingParams,
};
use crate::cnn::{self, CnnError, CnnModel};
use crate::evaluation::PatientRecord;
use crate::segmentation::{self, SegmentationError, SegmentationParams};
use crate::volume::{BinaryMask, HuVolume, LabelMask, Plane, Tissue};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Blocking(#[from] BlockingError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
}

/// A patient carried through segmentation and blocking.
#[derive(Clone, Debug)]
pub struct PreparedPatient {
    pub record: PatientRecord,
    pub lung_mask: BinaryMask,
    /// Block counts before balancing, in `Tissue` order.
    pub raw_counts: [usize; 3],
}

/// Segments `volume`, scores against `reference` when given, and emits the
/// balanced block set. Balancing uses `blk.rng_seed + patient_id`.
pub fn prepare_patient(
    patient_id: u16,
    volume: &HuVolume,
    labels: &LabelMask,
    reference: Option<&BinaryMask>,
    seg: &SegmentationParams,
    blk: &BlockingParams,
) -> Result<PreparedPatient, PipelineError> {
    let lung_mask = segmentation::segment_lungs(volume, seg)?;
    let segmentation_dice = reference
        .map(|r| segmentation::dice(&lung_mask, r))
        .transpose()?;
    let masked = segmentation::apply_mask(volume, &lung_mask, seg.excluded_sentinel_hu)?;
    let blocks = blockify_volume(&masked, labels, patient_id, blk, seg.excluded_sentinel_hu)?;
    let raw_counts = blocking::class_counts(&blocks);
    let blocks = balance_blocks(
        blocks,
        blk.balance_ratios,
        blk.rng_seed.wrapping_add(u64::from(patient_id)),
    )?;
    Ok(PreparedPatient {
        record: PatientRecord {
            patient_id,
            section_count: volume.voxels.slice_count(),
            blocks,
            excluded: None,
            segmentation_dice,
        },
        lung_mask,
        raw_counts,
    })
}

/// Per-slice ROI class maps: 0 for ROIs outside the lung (less than
/// `min_labeled_fraction` of the ROI in the mask), otherwise the predicted
/// label code (1 healthy, 2 ground-glass, 3 honeycombing).
pub fn predict_class_maps(
    model: &CnnModel<f32>,
    volume: &HuVolume,
    lung_mask: &BinaryMask,
    seg: &SegmentationParams,
    blk: &BlockingParams,
) -> Result<Vec<Plane<u8>>, PipelineError> {
    let masked = segmentation::apply_mask(volume, lung_mask, seg.excluded_sentinel_hu)?;
    let (rows, cols) = (volume.voxels.rows(), volume.voxels.cols());
    let roi = blk.roi_px;
    let cells = grid_rois(rows, cols, roi);
    let mut maps = Vec::with_capacity(volume.voxels.slice_count());
    for (z, (hu, mask)) in masked
        .voxels
        .planes()
        .iter()
        .zip(lung_mask.planes())
        .enumerate()
    {
        let mut map = Plane::filled(rows / roi, cols / roi, 0u8);
        for &cell in &cells {
            let inside = (0..roi * roi)
                .filter(|i| *mask.get(cell.origin_row + i / roi, cell.origin_col + i % roi))
                .count();
            if (inside as f64) < blk.min_labeled_fraction * (roi * roi) as f64 || inside == 0 {
                continue;
            }
            let block = Block {
                patch: normalize_block(&extract_block(hu, cell, blk, seg.excluded_sentinel_hu)),
                side: blk.block_side(),
                label: Tissue::Healthy,
                patient_id: 0,
                slice_index: z as u16,
                grid_row: cell.grid_row as u16,
                grid_col: cell.grid_col as u16,
            };
            let (class, _) = cnn::predict(model, &block)?;
            map.set(cell.grid_row, cell.grid_col, class.label_class().code());
        }
        maps.push(map);
    }
    Ok(maps)
}
