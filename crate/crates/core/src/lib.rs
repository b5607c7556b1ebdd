//! Computer-aided detection of fibrotic lung patterns in CT.
//!
//! The pipeline stages are:
//!
//! 1. **Ingest** – CT slices (DICOM subset) and expert label volumes (NIfTI-1).
//! 2. **Segmentation** – Hounsfield thresholding, border/small-object removal, hole filling.
//! 3. **Blocking** – 4 px ROI grid with 4 px context padding, dominant labels, balancing.
//! 4. **CNN** – a small convolutional classifier trained from scratch.
//! 5. **Evaluation** – leave-one-patient-out folds and section-weighted averages.
//!
//! [`pipeline`] chains segmentation, blocking and balancing for one patient,
//! [`phantom`] builds synthetic patients with exact ground truth and [`cli`]
//! backs the `lungcad` binary.

pub mod blocking;
pub mod cli;
pub mod cnn;
pub mod evaluation;
pub mod ingest;
pub mod phantom;
pub mod pipeline;
pub mod segmentation;
pub mod volume;

pub use volume::{BinaryMask, HuVolume, LabelMask, Plane, Tissue, TissueClass, Volume, VolumeDims};
