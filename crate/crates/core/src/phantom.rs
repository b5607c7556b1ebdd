//! Synthetic chest CT with exact lung and tissue-class ground truth.
//!
//! A phantom is a body ellipse of soft tissue in air holding two lung
//! ellipses. Lung parenchyma gets Gaussian texture; lesion ellipses inside
//! the lungs are rendered as ground-glass haze (raised mean, no structure)
//! or as honeycombing (a square lattice of low-HU lumens with dense walls).
//! The HU numbers are test-design constants chosen on the Hounsfield scale,
//! not measurements.

use crate::volume::{BinaryMask, HuVolume, LabelMask, Plane, Tissue, TissueClass, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const AIR_HU: i32 = -1000;
pub const MAX_HU: i32 = 400;

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("phantom spec invariant violated: {0}")]
    SpecInvariantViolation(String),
}

/// Axis-aligned ellipse in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center_row: f64,
    pub center_col: f64,
    pub semi_rows: f64,
    pub semi_cols: f64,
}

impl Ellipse {
    pub fn contains(&self, r: f64, c: f64) -> bool {
        let dy = (r - self.center_row) / self.semi_rows;
        let dx = (c - self.center_col) / self.semi_cols;
        dy * dy + dx * dx <= 1.0
    }

    fn boundary(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..n).map(move |i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            (
                self.center_row + self.semi_rows * t.sin(),
                self.center_col + self.semi_cols * t.cos(),
            )
        })
    }

    /// Whether `self` lies inside `outer` (checked on its boundary).
    pub fn inside(&self, outer: &Ellipse) -> bool {
        self.boundary(360).all(|(r, c)| outer.contains(r, c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureParams {
    pub body_mean: f64,
    /// Uniform half-range of body noise.
    pub body_jitter: f64,
    pub healthy_mean: f64,
    pub healthy_sigma: f64,
    pub groundglass_mean: f64,
    pub groundglass_sigma: f64,
    pub lumen_hu: f64,
    pub wall_hu: f64,
    /// Noise added to lumen and wall values.
    pub honeycomb_sigma: f64,
    /// Lattice cell pitch in pixels (4..=6).
    pub cell_pitch: usize,
}

impl Default for TextureParams {
    fn default() -> Self {
        TextureParams {
            body_mean: 40.0,
            body_jitter: 10.0,
            healthy_mean: -650.0,
            healthy_sigma: 30.0,
            groundglass_mean: -450.0,
            groundglass_sigma: 40.0,
            lumen_hu: -900.0,
            wall_hu: -200.0,
            honeycomb_sigma: 20.0,
            cell_pitch: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lesion {
    pub region: Ellipse,
    pub class: Tissue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub rows: usize,
    pub cols: usize,
    pub slice_count: usize,
    pub body: Ellipse,
    pub lungs: [Ellipse; 2],
    pub texture: TextureParams,
    pub lesions: Vec<Lesion>,
    pub rng_seed: u64,
}

/// Lesion layout relative to a lung: (row offset, col offset, row semi-axis,
/// col semi-axis) as fractions of the lung's semi-axes.
const LOWER_LESION: (f64, f64, f64, f64) = (0.38, 0.0, 0.28, 0.5);
const UPPER_LESION: (f64, f64, f64, f64) = (-0.42, 0.0, 0.22, 0.45);

fn lesion_in(lung: &Ellipse, layout: (f64, f64, f64, f64), class: Tissue) -> Lesion {
    let (dr, dc, sr, sc) = layout;
    Lesion {
        region: Ellipse {
            center_row: lung.center_row + dr * lung.semi_rows,
            center_col: lung.center_col + dc * lung.semi_cols,
            semi_rows: sr * lung.semi_rows,
            semi_cols: sc * lung.semi_cols,
        },
        class,
    }
}

impl PhantomSpec {
    /// Geometry scaled to the image: a body filling most of the frame, two
    /// upright lungs, and in each lung one ground-glass and one honeycombing
    /// lesion.
    pub fn standard(rows: usize, cols: usize, slice_count: usize, rng_seed: u64) -> Self {
        let (h, w) = (rows as f64, cols as f64);
        let body = Ellipse {
            center_row: h / 2.0,
            center_col: w / 2.0,
            semi_rows: 0.40 * h,
            semi_cols: 0.46 * w,
        };
        let lung = |side: f64| Ellipse {
            center_row: h / 2.0,
            center_col: w / 2.0 + side * 0.20 * w,
            semi_rows: 0.28 * h,
            semi_cols: 0.14 * w,
        };
        Self::with_lungs(
            rows,
            cols,
            slice_count,
            body,
            [lung(-1.0), lung(1.0)],
            rng_seed,
        )
    }

    fn with_lungs(
        rows: usize,
        cols: usize,
        slice_count: usize,
        body: Ellipse,
        lungs: [Ellipse; 2],
        rng_seed: u64,
    ) -> Self {
        let lesions = vec![
            lesion_in(&lungs[0], LOWER_LESION, Tissue::GroundGlass),
            lesion_in(&lungs[0], UPPER_LESION, Tissue::Honeycombing),
            lesion_in(&lungs[1], LOWER_LESION, Tissue::Honeycombing),
            lesion_in(&lungs[1], UPPER_LESION, Tissue::GroundGlass),
        ];
        PhantomSpec {
            rows,
            cols,
            slice_count,
            body,
            lungs,
            texture: TextureParams::default(),
            lesions,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let fail = |m: String| Err(PhantomError::SpecInvariantViolation(m));
        if self.rows == 0 || self.cols == 0 || self.slice_count == 0 {
            return fail("empty volume".into());
        }
        for (i, lung) in self.lungs.iter().enumerate() {
            if !lung.inside(&self.body) {
                return fail(format!("lung {i} is not inside the body"));
            }
        }
        for (i, lesion) in self.lesions.iter().enumerate() {
            if !self.lungs.iter().any(|l| lesion.region.inside(l)) {
                return fail(format!("lesion {i} is not inside a lung"));
            }
            if lesion.class == Tissue::Healthy {
                return fail(format!("lesion {i} is labelled healthy"));
            }
        }
        let t = &self.texture;
        if !(t.lumen_hu < t.healthy_mean
            && t.healthy_mean < t.groundglass_mean
            && t.groundglass_mean < t.wall_hu)
        {
            return fail("texture means must satisfy lumen < healthy < ground-glass < wall".into());
        }
        if !(4..=6).contains(&t.cell_pitch) {
            return fail(format!("cell pitch {} outside 4..=6", t.cell_pitch));
        }
        Ok(())
    }
}

/// A generated volume with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub volume: HuVolume,
    pub lung_mask: BinaryMask,
    pub labels: LabelMask,
}

fn clamp_hu(v: f64) -> i32 {
    (v.round() as i32).clamp(AIR_HU, MAX_HU)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let t = spec.texture;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let healthy = Normal::new(t.healthy_mean, t.healthy_sigma).expect("finite sigma");
    let glass = Normal::new(t.groundglass_mean, t.groundglass_sigma).expect("finite sigma");
    let honey = Normal::new(0.0, t.honeycomb_sigma).expect("finite sigma");
    let pitch = t.cell_pitch;

    // Labels are identical on every slice.
    let labels_plane = Plane::from_fn(spec.rows, spec.cols, |r, c| {
        let (y, x) = (r as f64, c as f64);
        if !spec.lungs.iter().any(|l| l.contains(y, x)) {
            return TissueClass::Unlabeled;
        }
        spec.lesions
            .iter()
            .rev()
            .find(|les| les.region.contains(y, x))
            .map_or(TissueClass::Healthy, |les| les.class.label_class())
    });
    let body_plane = Plane::from_fn(spec.rows, spec.cols, |r, c| {
        spec.body.contains(r as f64, c as f64)
    });

    let mut hu_planes = Vec::with_capacity(spec.slice_count);
    for _ in 0..spec.slice_count {
        let mut plane = Plane::filled(spec.rows, spec.cols, AIR_HU);
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let v = match labels_plane.get(r, c) {
                    TissueClass::Healthy => clamp_hu(healthy.sample(&mut rng)),
                    TissueClass::GroundGlass => clamp_hu(glass.sample(&mut rng)),
                    TissueClass::Honeycombing => {
                        let base = if r % pitch == 0 || c % pitch == 0 {
                            t.wall_hu
                        } else {
                            t.lumen_hu
                        };
                        clamp_hu(base + honey.sample(&mut rng))
                    }
                    TissueClass::Unlabeled if *body_plane.get(r, c) => {
                        clamp_hu(t.body_mean + rng.random_range(-t.body_jitter..=t.body_jitter))
                    }
                    TissueClass::Unlabeled => AIR_HU,
                };
                plane.set(r, c, v);
            }
        }
        hu_planes.push(plane);
    }

    let labels = Volume::from_planes(vec![labels_plane; spec.slice_count]).expect("same dims");
    let lung_mask = labels.map(|&c| c != TissueClass::Unlabeled);
    Ok(Phantom {
        volume: HuVolume {
            patient_id: format!("PHANTOM-{}", spec.rng_seed),
            voxels: Volume::from_planes(hu_planes).expect("same dims"),
        },
        lung_mask,
        labels,
    })
}

/// One synthetic patient.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPatient {
    pub patient_id: u16,
    pub phantom: Phantom,
}

fn jitter(rng: &mut ChaCha8Rng, e: Ellipse) -> Ellipse {
    Ellipse {
        semi_rows: e.semi_rows * rng.random_range(0.9..=1.1),
        semi_cols: e.semi_cols * rng.random_range(0.9..=1.1),
        ..e
    }
}

/// `n` phantoms (ids 1..=n) with body and lung semi-axes jittered by ±10%.
pub fn phantom_patient_set(
    n: usize,
    base_seed: u64,
    rows: usize,
    cols: usize,
    slices: usize,
) -> Result<Vec<SyntheticPatient>, PhantomError> {
    if n < 2 {
        return Err(PhantomError::SpecInvariantViolation(format!(
            "a patient set needs at least 2 patients, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    (0..n)
        .map(|i| {
            let base = PhantomSpec::standard(rows, cols, slices, 0);
            let body = jitter(&mut rng, base.body);
            let mut lungs = base.lungs.map(|l| jitter(&mut rng, l));
            // Keep lungs inside a shrunken body.
            for lung in &mut lungs {
                while !lung.inside(&body) {
                    lung.semi_rows *= 0.97;
                    lung.semi_cols *= 0.97;
                }
            }
            let seed = rng.random::<u64>();
            let spec = PhantomSpec::with_lungs(rows, cols, slices, body, lungs, seed);
            Ok(SyntheticPatient {
                patient_id: i as u16 + 1,
                phantom: generate_phantom(&spec)?,
            })
        })
        .collect()
}
