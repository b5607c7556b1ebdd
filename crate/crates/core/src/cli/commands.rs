//! Subcommand bodies. Each returns `Ok` or a [`CliError`] carrying its exit code.

use super::config::PipelineConfig;
use super::image::{
    encode_pgm, encode_png, mask_to_gray, read_class_map_csv, render_overlay, write_class_map_csv,
    ImageError,
};
use super::CliError;
use crate::blocking::{self, BlockingError};
use crate::cnn::{self, CnnError};
use crate::evaluation::{self, EvalError, PatientRecord};
use crate::ingest::{self, IngestError, NiftiError};
use crate::phantom::{self, PhantomError};
use crate::pipeline::{self, PipelineError};
use crate::segmentation::{self, SegmentationError};
use crate::volume::{BinaryMask, HuVolume, LabelMask};
use std::fs;
use std::path::{Path, PathBuf};

/// Patient directory layout written by `phantom` and read by `evaluate`.
pub const DICOM_SUBDIR: &str = "dicom";
pub const LABELS_FILE: &str = "labels.nii";
pub const LUNG_MASK_FILE: &str = "lung_mask.nii";

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InconsistentDimensions { .. } | IngestError::DuplicateSortKey(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<NiftiError> for CliError {
    fn from(e: NiftiError) -> Self {
        match e {
            NiftiError::DimMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SegmentationError> for CliError {
    fn from(e: SegmentationError) -> Self {
        match e {
            SegmentationError::DimMismatch(..) | SegmentationError::EmptyVolume => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BlockingError> for CliError {
    fn from(e: BlockingError) -> Self {
        match e {
            BlockingError::InvalidParams(_) | BlockingError::UnsupportedBlockSide(_) => {
                CliError::Usage(e.to_string())
            }
            BlockingError::BadMagic
            | BlockingError::VersionMismatch(_)
            | BlockingError::Truncated
            | BlockingError::BadLabel { .. } => CliError::Usage(e.to_string()),
            BlockingError::EmptyClass(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<CnnError> for CliError {
    fn from(e: CnnError) -> Self {
        match e {
            CnnError::NonFiniteLoss | CnnError::NonFiniteParameter => {
                CliError::Diverged(e.to_string())
            }
            CnnError::InsufficientData(_) | CnnError::ShapeMismatch(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Segmentation(e) => e.into(),
            PipelineError::Blocking(e) => e.into(),
            PipelineError::Cnn(e) => e.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Fold { source, patient_id } => {
                let message = format!("fold testing patient {patient_id}: {source}");
                CliError::from(source).with_message(message)
            }
            EvalError::TooFewPatients(_) | EvalError::InvalidRecord(..) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::DimMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

fn load_volume(dir: &Path) -> Result<HuVolume, CliError> {
    require_dir(dir, "input")?;
    Ok(ingest::load_series(dir)?)
}

fn load_labels(path: &Path, volume: &HuVolume) -> Result<LabelMask, CliError> {
    Ok(ingest::parse_nifti_labels(
        &read(path)?,
        volume.voxels.dims(),
    )?)
}

fn load_mask(path: &Path, volume: &HuVolume) -> Result<BinaryMask, CliError> {
    Ok(ingest::parse_nifti_mask(
        &read(path)?,
        volume.voxels.dims(),
    )?)
}

pub struct SegmentArgs<'a> {
    pub input: &'a Path,
    pub out_mask: &'a Path,
    pub ref_mask: Option<&'a Path>,
    /// Directory for per-slice PGMs; defaults to the mask's directory.
    pub out_dir: Option<&'a Path>,
}

/// Writes the NIfTI mask plus `mask_slice_NNNN.pgm` per slice. Returns the
/// Dice score when a reference was given.
pub fn cmd_segment(cfg: &PipelineConfig, a: SegmentArgs) -> Result<Option<f64>, CliError> {
    let volume = load_volume(a.input)?;
    let reference = a.ref_mask.map(|p| load_mask(p, &volume)).transpose()?;
    let mask = segmentation::segment_lungs(&volume, &cfg.segmentation_params())?;
    write(a.out_mask, ingest::encode_binary_mask(&mask))?;
    let pgm_dir = a
        .out_dir
        .map(Path::to_path_buf)
        .or_else(|| a.out_mask.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    for (z, plane) in mask.planes().iter().enumerate() {
        write(
            &pgm_dir.join(format!("mask_slice_{z:04}.pgm")),
            encode_pgm(&mask_to_gray(plane)),
        )?;
    }
    let dice = reference
        .map(|r| segmentation::dice(&mask, &r))
        .transpose()?;
    Ok(dice)
}

/// Segments, blockifies and balances one patient; writes `IPFB` and a
/// manifest CSV next to it. Returns the balanced class counts.
pub fn cmd_blocks(
    cfg: &PipelineConfig,
    input: &Path,
    labels: &Path,
    patient_id: u16,
    out: &Path,
) -> Result<[usize; 3], CliError> {
    let volume = load_volume(input)?;
    let labels = load_labels(labels, &volume)?;
    let prepared = pipeline::prepare_patient(
        patient_id,
        &volume,
        &labels,
        None,
        &cfg.segmentation_params(),
        &cfg.blocking_params(),
    )?;
    let blocks = &prepared.record.blocks;
    write(out, blocking::write_block_file(blocks)?)?;
    let mut manifest = Vec::new();
    blocking::write_manifest(blocks, &mut manifest)
        .map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
    write(&out.with_extension("csv"), manifest)?;
    Ok(blocking::class_counts(blocks))
}

/// `<model stem>_history.csv` beside the model.
pub fn history_path(model: &Path) -> PathBuf {
    let stem = model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}_history.csv"))
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    blocks: &[PathBuf],
    out_model: &Path,
) -> Result<(), CliError> {
    if blocks.is_empty() {
        return Err(CliError::Usage("no block files given".into()));
    }
    let mut all = Vec::new();
    for path in blocks {
        all.extend(blocking::read_block_file(&read(path)?)?);
    }
    let (model, history) = cnn::train(&all, &cfg.train_config())?;
    write(out_model, cnn::write_model(&model))?;
    write(&history_path(out_model), history.to_csv())?;
    Ok(())
}

fn load_model(path: &Path) -> Result<cnn::CnnModel<f32>, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "model file not found: {}",
            path.display()
        )));
    }
    Ok(cnn::read_model(&read(path)?)?)
}

/// Writes `classmap_NNNN.csv` per slice into `out_dir`.
pub fn cmd_predict(
    cfg: &PipelineConfig,
    model: &Path,
    input: &Path,
    out_dir: &Path,
) -> Result<usize, CliError> {
    let model = load_model(model)?;
    let volume = load_volume(input)?;
    let seg = cfg.segmentation_params();
    let mask = segmentation::segment_lungs(&volume, &seg)?;
    let maps = pipeline::predict_class_maps(&model, &volume, &mask, &seg, &cfg.blocking_params())?;
    for (z, map) in maps.iter().enumerate() {
        write(
            &out_dir.join(format!("classmap_{z:04}.csv")),
            write_class_map_csv(map),
        )?;
    }
    Ok(maps.len())
}

/// Trailing digits of the directory name, e.g. `patient_003` → 3.
pub fn patient_id_from_dir(dir: &Path) -> Result<u16, CliError> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let digits: String = name
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot derive a patient id from {name:?}")))
}

/// Parses `ID=reason`.
pub fn parse_exclusion(s: &str) -> Result<(u16, String), CliError> {
    let bad = || CliError::Usage(format!("exclusion {s:?} is not ID=reason"));
    let (id, reason) = s.split_once('=').ok_or_else(bad)?;
    let reason = reason.trim();
    if reason.is_empty() {
        return Err(bad());
    }
    Ok((id.trim().parse().map_err(|_| bad())?, reason.to_string()))
}

/// Prepares each patient directory, runs leave-one-patient-out and writes
/// `report.txt` and `report.csv`. Returns the text table.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    patient_dirs: &[PathBuf],
    exclusions: &[(u16, String)],
    out_dir: &Path,
) -> Result<String, CliError> {
    let seg = cfg.segmentation_params();
    let blk = cfg.blocking_params();
    let mut records: Vec<PatientRecord> = Vec::with_capacity(patient_dirs.len());
    for dir in patient_dirs {
        require_dir(dir, "patient")?;
        let id = patient_id_from_dir(dir)?;
        if records.iter().any(|r| r.patient_id == id) {
            return Err(CliError::Usage(format!("patient id {id} given twice")));
        }
        let volume = load_volume(&dir.join(DICOM_SUBDIR))?;
        let labels = load_labels(&dir.join(LABELS_FILE), &volume)?;
        let ref_path = dir.join(LUNG_MASK_FILE);
        let reference = ref_path
            .is_file()
            .then(|| load_mask(&ref_path, &volume))
            .transpose()?;
        let mut record =
            pipeline::prepare_patient(id, &volume, &labels, reference.as_ref(), &seg, &blk)?.record;
        record.excluded = exclusions
            .iter()
            .find(|(e, _)| *e == id)
            .map(|(_, r)| r.clone());
        records.push(record);
    }
    for (id, _) in exclusions {
        if !records.iter().any(|r| r.patient_id == *id) {
            return Err(CliError::Usage(format!(
                "excluded patient {id} was not given"
            )));
        }
    }
    let report = evaluation::run_evaluation(&records, &cfg.train_config())?;
    let (text, csv) = evaluation::render_report(&report);
    write(&out_dir.join("report.txt"), &text)?;
    write(&out_dir.join("report.csv"), csv)?;
    Ok(text)
}

/// Writes `patient_NNN/{dicom/, labels.nii, lung_mask.nii}` per phantom.
pub fn cmd_phantom(
    cfg: &PipelineConfig,
    count: usize,
    rows: usize,
    cols: usize,
    slices: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let set = phantom::phantom_patient_set(count, cfg.seed, rows, cols, slices)?;
    let mut dirs = Vec::with_capacity(set.len());
    for p in &set {
        let dir = out_dir.join(format!("patient_{:03}", p.patient_id));
        ingest::write_series(&p.phantom.volume, &dir.join(DICOM_SUBDIR))?;
        write(
            &dir.join(LABELS_FILE),
            ingest::encode_label_mask(&p.phantom.labels),
        )?;
        write(
            &dir.join(LUNG_MASK_FILE),
            ingest::encode_binary_mask(&p.phantom.lung_mask),
        )?;
        dirs.push(dir);
    }
    Ok(dirs)
}

pub fn cmd_overlay(
    cfg: &PipelineConfig,
    input: &Path,
    class_map: &Path,
    slice: usize,
    out: &Path,
) -> Result<(), CliError> {
    let volume = load_volume(input)?;
    if slice >= volume.voxels.slice_count() {
        return Err(CliError::Usage(format!(
            "slice {slice} out of range (series has {})",
            volume.voxels.slice_count()
        )));
    }
    let text = String::from_utf8(read(class_map)?)
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8", class_map.display())))?;
    let map = read_class_map_csv(&text)?;
    let rgb = render_overlay(
        volume.voxels.plane(slice),
        &map,
        cfg.roi,
        cfg.window_center,
        cfg.window_width,
    )?;
    write(out, encode_png(&rgb)?)
}
