//! ROI grid partitioning, padded block extraction, label assignment and
//! per-patient class balancing.

use crate::volume::{HuVolume, LabelMask, Plane, Tissue, TissueClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use thiserror::Error;

/// HU used for context that lies outside the image or the lung mask.
pub const AIR_FILL_HU: i32 = -1000;
const NORMALIZE_LOW_HU: f32 = -1000.0;
const NORMALIZE_HIGH_HU: f32 = 400.0;

#[derive(Debug, Error, PartialEq)]
pub enum BlockingError {
    #[error("no {0} blocks available to balance")]
    EmptyClass(Tissue),
    #[error("invalid blocking parameters: {0}")]
    InvalidParams(String),
    #[error("block files hold 12x12 patches; got side {0}")]
    UnsupportedBlockSide(usize),
    #[error("not a block file (bad magic)")]
    BadMagic,
    #[error("block file version {0} is not supported")]
    VersionMismatch(u32),
    #[error("block file truncated")]
    Truncated,
    #[error("block {index} has invalid label code {code}")]
    BadLabel { index: u64, code: u8 },
}

/// Relative class sizes after balancing, keyed by class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceRatios {
    pub honeycombing: f64,
    pub groundglass: f64,
    pub healthy: f64,
}

impl Default for BalanceRatios {
    fn default() -> Self {
        BalanceRatios {
            honeycombing: 1.0,
            groundglass: 1.5,
            healthy: 2.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockingParams {
    pub roi_px: usize,
    pub padding_px: usize,
    /// Fraction of labeled in-lung voxels an ROI needs to be kept.
    pub min_labeled_fraction: f64,
    pub balance_ratios: BalanceRatios,
    pub rng_seed: u64,
}

impl Default for BlockingParams {
    fn default() -> Self {
        BlockingParams {
            roi_px: 4,
            padding_px: 4,
            min_labeled_fraction: 0.5,
            balance_ratios: BalanceRatios::default(),
            rng_seed: 0,
        }
    }
}

impl BlockingParams {
    pub fn block_side(&self) -> usize {
        self.roi_px + 2 * self.padding_px
    }

    pub fn validate(&self) -> Result<(), BlockingError> {
        if self.roi_px == 0 {
            return Err(BlockingError::InvalidParams("roi_px must be >= 1".into()));
        }
        if !(self.min_labeled_fraction > 0.0 && self.min_labeled_fraction <= 1.0) {
            return Err(BlockingError::InvalidParams(format!(
                "min_labeled_fraction must lie in (0, 1], got {}",
                self.min_labeled_fraction
            )));
        }
        let r = self.balance_ratios;
        if [r.honeycombing, r.groundglass, r.healthy]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(BlockingError::InvalidParams(
                "balance ratios must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One cell of the non-overlapping ROI grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoiCell {
    pub grid_row: usize,
    pub grid_col: usize,
    pub origin_row: usize,
    pub origin_col: usize,
}

/// Tiles the image with stride `roi_px`; trailing partial strips are dropped.
pub fn grid_rois(rows: usize, cols: usize, roi_px: usize) -> Vec<RoiCell> {
    assert!(roi_px >= 1, "roi_px must be >= 1");
    let (gr, gc) = (rows / roi_px, cols / roi_px);
    (0..gr)
        .flat_map(|grid_row| {
            (0..gc).map(move |grid_col| RoiCell {
                grid_row,
                grid_col,
                origin_row: grid_row * roi_px,
                origin_col: grid_col * roi_px,
            })
        })
        .collect()
}

/// Majority class over the ROI's labeled voxels, or `None` (discard) when
/// fewer than `min_labeled_fraction` of them are labeled.
///
/// Ties resolve Honeycombing > GroundGlass > Healthy.
pub fn dominant_label(roi_labels: &[TissueClass], min_labeled_fraction: f64) -> Option<Tissue> {
    if roi_labels.is_empty() {
        return None;
    }
    let mut counts = [0usize; 3];
    for &c in roi_labels {
        if let Some(t) = Tissue::from_label_class(c) {
            counts[t.index()] += 1;
        }
    }
    let labeled: usize = counts.iter().sum();
    if (labeled as f64) < min_labeled_fraction * roi_labels.len() as f64 || labeled == 0 {
        return None;
    }
    // Tissue::ALL is already in tie-break priority order.
    Tissue::ALL
        .into_iter()
        .fold(None, |best: Option<Tissue>, t| match best {
            Some(b) if counts[b.index()] >= counts[t.index()] => Some(b),
            _ => Some(t),
        })
}

/// Copies the padded window around `cell` out of a masked slice. Pixels
/// outside the image or equal to `sentinel` read as air.
pub fn extract_block(
    slice: &Plane<i32>,
    cell: RoiCell,
    params: &BlockingParams,
    sentinel: i32,
) -> Vec<i32> {
    let side = params.block_side();
    let pad = params.padding_px as isize;
    let (rows, cols) = (slice.rows() as isize, slice.cols() as isize);
    let mut out = Vec::with_capacity(side * side);
    for dr in 0..side as isize {
        for dc in 0..side as isize {
            let r = cell.origin_row as isize - pad + dr;
            let c = cell.origin_col as isize - pad + dc;
            let v = if r < 0 || c < 0 || r >= rows || c >= cols {
                AIR_FILL_HU
            } else {
                match *slice.get(r as usize, c as usize) {
                    v if v == sentinel => AIR_FILL_HU,
                    v => v,
                }
            };
            out.push(v);
        }
    }
    out
}

/// Clips to [−1000, 400] HU and rescales to [0, 1].
pub fn normalize_block(patch: &[i32]) -> Vec<f32> {
    patch
        .iter()
        .map(|&hu| {
            let v = (hu as f32).clamp(NORMALIZE_LOW_HU, NORMALIZE_HIGH_HU);
            (v - NORMALIZE_LOW_HU) / (NORMALIZE_HIGH_HU - NORMALIZE_LOW_HU)
        })
        .collect()
}

/// A normalized network input with its label and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// Row-major `side * side` values in [0, 1].
    pub patch: Vec<f32>,
    pub side: usize,
    pub label: Tissue,
    pub patient_id: u16,
    pub slice_index: u16,
    pub grid_row: u16,
    pub grid_col: u16,
}

/// Emits one block per ROI whose in-lung labels pass [`dominant_label`].
/// Voxels of `masked` equal to `sentinel` are outside the lung; their labels
/// are ignored.
pub fn blockify_volume(
    masked: &HuVolume,
    labels: &LabelMask,
    patient_id: u16,
    params: &BlockingParams,
    sentinel: i32,
) -> Result<Vec<Block>, BlockingError> {
    params.validate()?;
    if masked.dims() != labels.dims() {
        return Err(BlockingError::InvalidParams(format!(
            "label volume {} does not match CT volume {}",
            labels.dims(),
            masked.dims()
        )));
    }
    let roi = params.roi_px;
    let cells = grid_rois(masked.voxels.rows(), masked.voxels.cols(), roi);
    let mut blocks = Vec::new();
    let mut roi_labels = Vec::with_capacity(roi * roi);
    for (z, (hu, lab)) in masked
        .voxels
        .planes()
        .iter()
        .zip(labels.planes())
        .enumerate()
    {
        for &cell in &cells {
            roi_labels.clear();
            for r in cell.origin_row..cell.origin_row + roi {
                for c in cell.origin_col..cell.origin_col + roi {
                    roi_labels.push(if *hu.get(r, c) == sentinel {
                        TissueClass::Unlabeled
                    } else {
                        *lab.get(r, c)
                    });
                }
            }
            let Some(label) = dominant_label(&roi_labels, params.min_labeled_fraction) else {
                continue;
            };
            blocks.push(Block {
                patch: normalize_block(&extract_block(hu, cell, params, sentinel)),
                side: params.block_side(),
                label,
                patient_id,
                slice_index: z as u16,
                grid_row: cell.grid_row as u16,
                grid_col: cell.grid_col as u16,
            });
        }
    }
    Ok(blocks)
}

/// Per-class block counts in `Tissue` index order.
pub fn class_counts(blocks: &[Block]) -> [usize; 3] {
    let mut counts = [0; 3];
    for b in blocks {
        counts[b.label.index()] += 1;
    }
    counts
}

/// Target counts for balancing.
///
/// The smaller diseased class is the anchor and keeps all `m` of its blocks.
/// The two diseased ratios are assigned by rank (the anchor takes the smaller
/// one), every class is scaled relative to the anchor's ratio, and targets
/// are capped at availability.
pub fn balance_targets(
    counts: [usize; 3],
    ratios: BalanceRatios,
) -> Result<[usize; 3], BlockingError> {
    for t in Tissue::ALL {
        if counts[t.index()] == 0 {
            return Err(BlockingError::EmptyClass(t));
        }
    }
    let (hc, gg) = (
        counts[Tissue::Honeycombing.index()],
        counts[Tissue::GroundGlass.index()],
    );
    let (anchor, other) = if gg < hc {
        (Tissue::GroundGlass, Tissue::Honeycombing)
    } else {
        (Tissue::Honeycombing, Tissue::GroundGlass)
    };
    let low = ratios.honeycombing.min(ratios.groundglass);
    let high = ratios.honeycombing.max(ratios.groundglass);
    let m = counts[anchor.index()] as f64;
    let mut targets = [0; 3];
    targets[anchor.index()] = counts[anchor.index()];
    targets[other.index()] = ((high / low) * m).round() as usize;
    targets[Tissue::Healthy.index()] = ((ratios.healthy / low) * m).round() as usize;
    for i in 0..3 {
        targets[i] = targets[i].min(counts[i]);
    }
    Ok(targets)
}

/// Downsamples each class to its [`balance_targets`] count, uniformly without
/// replacement. Output keeps input order and is reproducible for a seed.
pub fn balance_blocks(
    blocks: Vec<Block>,
    ratios: BalanceRatios,
    seed: u64,
) -> Result<Vec<Block>, BlockingError> {
    let targets = balance_targets(class_counts(&blocks), ratios)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; blocks.len()];
    for t in Tissue::ALL {
        let members: Vec<usize> = blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.label == t)
            .map(|(i, _)| i)
            .collect();
        for j in rand::seq::index::sample(&mut rng, members.len(), targets[t.index()]) {
            keep[members[j]] = true;
        }
    }
    Ok(blocks
        .into_iter()
        .zip(keep)
        .filter_map(|(b, k)| k.then_some(b))
        .collect())
}

const BLOCK_MAGIC: &[u8; 4] = b"IPFB";
const BLOCK_VERSION: u32 = 1;
const FILE_BLOCK_SIDE: usize = 12;

/// Serializes blocks into the flat `IPFB` layout.
pub fn write_block_file(blocks: &[Block]) -> Result<Vec<u8>, BlockingError> {
    let per = FILE_BLOCK_SIDE * FILE_BLOCK_SIDE;
    let mut out = Vec::with_capacity(16 + blocks.len() * (9 + per * 4));
    out.extend_from_slice(BLOCK_MAGIC);
    out.extend_from_slice(&BLOCK_VERSION.to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u64).to_le_bytes());
    for b in blocks {
        if b.side != FILE_BLOCK_SIDE || b.patch.len() != per {
            return Err(BlockingError::UnsupportedBlockSide(b.side));
        }
        for v in [b.patient_id, b.slice_index, b.grid_row, b.grid_col] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(b.label.label_class().code());
        for v in &b.patch {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_block_file(bytes: &[u8]) -> Result<Vec<Block>, BlockingError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], BlockingError> {
        let s = bytes.get(pos..pos + n).ok_or(BlockingError::Truncated)?;
        pos += n;
        Ok(s)
    };
    if take(4)? != BLOCK_MAGIC {
        return Err(BlockingError::BadMagic);
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != BLOCK_VERSION {
        return Err(BlockingError::VersionMismatch(version));
    }
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let per = FILE_BLOCK_SIDE * FILE_BLOCK_SIDE;
    let mut blocks = Vec::new();
    for index in 0..count {
        let head = take(9)?;
        let u16_at = |i: usize| u16::from_le_bytes([head[i], head[i + 1]]);
        let code = head[8];
        let label = TissueClass::from_code(code)
            .and_then(Tissue::from_label_class)
            .ok_or(BlockingError::BadLabel { index, code })?;
        let patch = take(per * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        blocks.push(Block {
            patch,
            side: FILE_BLOCK_SIDE,
            label,
            patient_id: u16_at(0),
            slice_index: u16_at(2),
            grid_row: u16_at(4),
            grid_col: u16_at(6),
        });
    }
    if pos != bytes.len() {
        return Err(BlockingError::Truncated);
    }
    Ok(blocks)
}

/// `patient_id,class,count` rows, one per (patient, class) present.
pub fn write_manifest<W: Write>(blocks: &[Block], out: W) -> csv::Result<()> {
    let mut per_patient = std::collections::BTreeMap::<u16, [usize; 3]>::new();
    for b in blocks {
        per_patient.entry(b.patient_id).or_default()[b.label.index()] += 1;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "class", "count"])?;
    for (pid, counts) in per_patient {
        for t in Tissue::ALL {
            w.write_record([
                pid.to_string(),
                t.name().to_string(),
                counts[t.index()].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
