//! Lung segmentation by Hounsfield thresholding, plus mask scoring.

use crate::volume::{BinaryMask, HuVolume, Plane, Volume, VolumeDims};
use rayon::prelude::*;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("window width must be positive")]
    ZeroWidth,
    #[error("volume has no slices")]
    EmptyVolume,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(VolumeDims, VolumeDims),
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationParams {
    /// Voxels at or below this value are air/lung candidates.
    pub air_threshold_hu: i32,
    /// Components smaller than this (per slice) are discarded.
    pub min_object_area_px: usize,
    pub fill_holes: bool,
    /// Value written outside the mask by [`apply_mask`].
    pub excluded_sentinel_hu: i32,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            air_threshold_hu: -500,
            min_object_area_px: 64,
            fill_holes: true,
            excluded_sentinel_hu: -2048,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        if self.air_threshold_hu >= 0 {
            return Err(SegmentationError::InvalidParams(format!(
                "air_threshold_hu must be negative, got {}",
                self.air_threshold_hu
            )));
        }
        if self.min_object_area_px == 0 {
            return Err(SegmentationError::InvalidParams(
                "min_object_area_px must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Linear window/level mapping to 8-bit gray.
pub fn window_enrich(
    slice: &Plane<i32>,
    center: f64,
    width: f64,
) -> Result<Plane<u8>, SegmentationError> {
    if width.is_nan() || width <= 0.0 {
        return Err(SegmentationError::ZeroWidth);
    }
    let floor = center - width / 2.0;
    Ok(slice.map(|&hu| {
        ((f64::from(hu) - floor) * 255.0 / width)
            .round()
            .clamp(0.0, 255.0) as u8
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub touches_border: bool,
}

/// Component labelling of one slice. `labels` holds 0 for background and
/// `k + 1` for pixels of `components[k]`.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Plane<u32>,
    pub components: Vec<Component>,
}

pub fn connected_components(mask: &Plane<bool>, connectivity: Connectivity) -> Components {
    let (rows, cols) = mask.dims();
    let mut labels = Plane::filled(rows, cols, 0u32);
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for r0 in 0..rows {
        for c0 in 0..cols {
            if !*mask.get(r0, c0) || *labels.get(r0, c0) != 0 {
                continue;
            }
            let id = components.len() as u32 + 1;
            let mut comp = Component {
                area: 0,
                touches_border: false,
            };
            labels.set(r0, c0, id);
            queue.push_back((r0, c0));
            while let Some((r, c)) = queue.pop_front() {
                comp.area += 1;
                comp.touches_border |= r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
                for &(dr, dc) in connectivity.offsets() {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if *mask.get(nr, nc) && *labels.get(nr, nc) == 0 {
                        labels.set(nr, nc, id);
                        queue.push_back((nr, nc));
                    }
                }
            }
            components.push(comp);
        }
    }
    Components { labels, components }
}

/// Sets every false pixel not 4-connected to the image border.
pub fn fill_holes(mask: &Plane<bool>) -> Plane<bool> {
    let background = mask.map(|&v| !v);
    let cc = connected_components(&background, Connectivity::Four);
    mask.zip_map(&cc.labels, |&inside, &label| {
        inside || (label != 0 && !cc.components[label as usize - 1].touches_border)
    })
}

/// Lung mask of a single slice.
pub fn segment_slice(slice: &Plane<i32>, params: &SegmentationParams) -> Plane<bool> {
    let candidate = slice.map(|&hu| hu <= params.air_threshold_hu);
    let cc = connected_components(&candidate, Connectivity::Eight);
    let keep: Vec<bool> = cc
        .components
        .iter()
        .map(|c| !c.touches_border && c.area >= params.min_object_area_px)
        .collect();
    let kept = cc.labels.map(|&l| l != 0 && keep[l as usize - 1]);
    if params.fill_holes {
        fill_holes(&kept)
    } else {
        kept
    }
}

pub fn segment_lungs(
    vol: &HuVolume,
    params: &SegmentationParams,
) -> Result<BinaryMask, SegmentationError> {
    params.validate()?;
    if vol.voxels.slice_count() == 0 {
        return Err(SegmentationError::EmptyVolume);
    }
    let planes: Vec<Plane<bool>> = vol
        .voxels
        .planes()
        .par_iter()
        .map(|p| segment_slice(p, params))
        .collect();
    Ok(Volume::from_planes(planes).expect("planes share source dims"))
}

/// Keeps HU inside the mask and writes `sentinel` elsewhere.
pub fn apply_mask(
    vol: &HuVolume,
    mask: &BinaryMask,
    sentinel: i32,
) -> Result<HuVolume, SegmentationError> {
    if vol.dims() != mask.dims() {
        return Err(SegmentationError::DimMismatch(vol.dims(), mask.dims()));
    }
    let planes = vol
        .voxels
        .planes()
        .iter()
        .zip(mask.planes())
        .map(|(p, m)| p.zip_map(m, |&hu, &inside| if inside { hu } else { sentinel }))
        .collect();
    Ok(HuVolume {
        patient_id: vol.patient_id.clone(),
        voxels: Volume::from_planes(planes).expect("dims checked"),
    })
}

/// Sørensen–Dice overlap `2|A∩B| / (|A|+|B|)`. Two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, SegmentationError> {
    if a.dims() != b.dims() {
        return Err(SegmentationError::DimMismatch(a.dims(), b.dims()));
    }
    let (mut both, mut total) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b.iter()) {
        both += u64::from(x && y);
        total += u64::from(x) + u64::from(y);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok((2 * both) as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_slice(plane: Plane<bool>) -> BinaryMask {
        Volume::from_planes(vec![plane]).unwrap()
    }

    fn hu_volume(plane: Plane<i32>) -> HuVolume {
        HuVolume {
            patient_id: "t".into(),
            voxels: Volume::from_planes(vec![plane]).unwrap(),
        }
    }

    fn ellipse(r: usize, c: usize, cy: f64, cx: f64, ry: f64, rx: f64) -> bool {
        let dy = (r as f64 - cy) / ry;
        let dx = (c as f64 - cx) / rx;
        dy * dy + dx * dx <= 1.0
    }

    #[test]
    fn window_examples() {
        let p = Plane::from_vec(1, 3, vec![-600, -1350, 2000]).unwrap();
        let out = window_enrich(&p, -600.0, 1500.0).unwrap();
        assert_eq!(out.as_slice(), &[128, 0, 255]);
        let mid = window_enrich(&Plane::filled(1, 1, 40), 40.0, 400.0).unwrap();
        assert!((*mid.get(0, 0) as i32 - 128).abs() <= 1);
        assert_eq!(
            window_enrich(&p, 0.0, 0.0).unwrap_err(),
            SegmentationError::ZeroWidth
        );
    }

    #[test]
    fn components_examples() {
        let empty = Plane::filled(5, 5, false);
        assert!(connected_components(&empty, Connectivity::Eight)
            .components
            .is_empty());

        let two = Plane::from_fn(8, 8, |r, c| {
            (1..3).contains(&r) && (1..3).contains(&c) || (5..7).contains(&r) && (5..7).contains(&c)
        });
        let cc = connected_components(&two, Connectivity::Eight);
        let areas: Vec<_> = cc.components.iter().map(|c| c.area).collect();
        assert_eq!(areas, vec![4, 4]);
        assert!(cc.components.iter().all(|c| !c.touches_border));

        let full = connected_components(&Plane::filled(4, 6, true), Connectivity::Four);
        assert_eq!(
            full.components,
            vec![Component {
                area: 24,
                touches_border: true
            }]
        );
    }

    #[test]
    fn diagonal_pixels_join_only_under_eight() {
        let diag = Plane::from_fn(4, 4, |r, c| r == c);
        assert_eq!(
            connected_components(&diag, Connectivity::Eight)
                .components
                .len(),
            1
        );
        assert_eq!(
            connected_components(&diag, Connectivity::Four)
                .components
                .len(),
            4
        );
    }

    #[test]
    fn holes_filled_but_open_bays_not() {
        let ring = Plane::from_fn(7, 7, |r, c| {
            (1..6).contains(&r) && (1..6).contains(&c) && !(r == 3 && c == 3)
        });
        assert!(*fill_holes(&ring).get(3, 3));
        let bay = Plane::from_fn(5, 5, |r, c| c >= 1 && !(r == 2 && c < 3));
        assert!(!*fill_holes(&bay).get(2, 1));
    }

    fn two_lung_slice() -> (Plane<i32>, Plane<bool>) {
        let (rows, cols) = (128, 128);
        let lung =
            |r, c| ellipse(r, c, 64.0, 40.0, 30.0, 16.0) || ellipse(r, c, 64.0, 88.0, 30.0, 16.0);
        let hu = Plane::from_fn(rows, cols, |r, c| {
            if lung(r, c) {
                -650
            } else if ellipse(r, c, 64.0, 64.0, 50.0, 60.0) {
                40
            } else {
                -1000
            }
        });
        (hu, Plane::from_fn(rows, cols, lung))
    }

    #[test]
    fn phantom_slice_segments_to_the_lungs() {
        let (hu, truth) = two_lung_slice();
        let mask = segment_lungs(&hu_volume(hu), &SegmentationParams::default()).unwrap();
        let d = dice(&mask, &one_slice(truth)).unwrap();
        assert!(d >= 0.95, "dice {d}");
    }

    #[test]
    fn all_tissue_gives_empty_mask() {
        let mask =
            segment_lungs(&hu_volume(Plane::filled(32, 32, 40)), &Default::default()).unwrap();
        assert_eq!(mask.cardinality(), 0);
    }

    #[test]
    fn small_air_speck_removed() {
        let (mut hu, truth) = two_lung_slice();
        // 3-px air pocket in body tissue, away from both lungs.
        for c in 62..65 {
            hu.set(20, c, -650);
        }
        let mask = segment_lungs(&hu_volume(hu), &Default::default()).unwrap();
        assert!(!*mask.plane(0).get(20, 63));
        assert_eq!(mask, one_slice(truth));
    }

    #[test]
    fn dense_lesion_inside_lung_is_filled() {
        let (mut hu, truth) = two_lung_slice();
        for r in 60..68 {
            for c in 36..44 {
                hu.set(r, c, -200);
            }
        }
        let params = SegmentationParams::default();
        let filled = segment_lungs(&hu_volume(hu.clone()), &params).unwrap();
        assert_eq!(filled, one_slice(truth));
        let no_fill = SegmentationParams {
            fill_holes: false,
            ..params
        };
        let holed = segment_lungs(&hu_volume(hu), &no_fill).unwrap();
        assert!(!*holed.plane(0).get(64, 40));
    }

    #[test]
    fn empty_volume_and_bad_params() {
        let empty = HuVolume {
            patient_id: "e".into(),
            voxels: Volume::from_planes(vec![]).unwrap(),
        };
        assert_eq!(
            segment_lungs(&empty, &Default::default()).unwrap_err(),
            SegmentationError::EmptyVolume
        );
        let bad = SegmentationParams {
            air_threshold_hu: 10,
            ..Default::default()
        };
        assert!(segment_lungs(&empty, &bad).is_err());
    }

    #[test]
    fn apply_mask_examples() {
        let vol = hu_volume(Plane::filled(4, 4, -650));
        let full = one_slice(Plane::filled(4, 4, true));
        assert_eq!(apply_mask(&vol, &full, -2048).unwrap(), vol);
        let none = one_slice(Plane::filled(4, 4, false));
        assert!(apply_mask(&vol, &none, -2048)
            .unwrap()
            .voxels
            .iter()
            .all(|&v| v == -2048));
        let checker = one_slice(Plane::from_fn(4, 4, |r, c| (r + c) % 2 == 0));
        let out = apply_mask(&vol, &checker, -2048).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if (r + c) % 2 == 0 { -650 } else { -2048 };
                assert_eq!(*out.voxels.plane(0).get(r, c), want);
            }
        }
        let small = one_slice(Plane::filled(2, 2, true));
        assert!(matches!(
            apply_mask(&vol, &small, -2048),
            Err(SegmentationError::DimMismatch(..))
        ));
    }

    #[test]
    fn dice_examples() {
        let a = one_slice(Plane::from_fn(4, 4, |r, _| r == 0));
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = one_slice(Plane::from_fn(4, 4, |r, _| r == 3));
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let c = one_slice(Plane::from_fn(4, 4, |r, c| {
            (r == 0 && c < 2) || (r == 1 && c < 2)
        }));
        assert_eq!(dice(&a, &c).unwrap(), 0.5);
        let e = one_slice(Plane::filled(4, 4, false));
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(any::<bool>(), 64)
            .prop_map(|bits| one_slice(Plane::from_vec(8, 8, bits).unwrap()))
    }

    proptest! {
        #[test]
        fn dice_symmetric_and_bounded(a in mask_strategy(), b in mask_strategy()) {
            let ab = dice(&a, &b).unwrap();
            prop_assert_eq!(ab, dice(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.cardinality() > 0 {
                prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn mask_recovered_from_sentinel(bits in proptest::collection::vec(any::<bool>(), 36),
                                        hu in -1000i32..400) {
            let mask = one_slice(Plane::from_vec(6, 6, bits).unwrap());
            let vol = hu_volume(Plane::filled(6, 6, hu));
            let masked = apply_mask(&vol, &mask, -2048).unwrap();
            prop_assert_eq!(masked.voxels.map(|&v| v != -2048), mask);
        }

        #[test]
        fn segmentation_never_keeps_border_air(bits in proptest::collection::vec(any::<bool>(), 400)) {
            let hu = Plane::from_vec(20, 20, bits.iter().map(|&b| if b { -900 } else { 40 }).collect()).unwrap();
            let params = SegmentationParams { min_object_area_px: 1, ..Default::default() };
            let mask = segment_slice(&hu, &params);
            let candidate = hu.map(|&v| v <= params.air_threshold_hu);
            let filled = fill_holes(&candidate);
            let cc = connected_components(&candidate, Connectivity::Eight);
            for r in 0..20 {
                for c in 0..20 {
                    if *mask.get(r, c) {
                        prop_assert!(*filled.get(r, c));
                        let l = *cc.labels.get(r, c);
                        if l != 0 {
                            prop_assert!(!cc.components[l as usize - 1].touches_border);
                        }
                    }
                }
            }
        }
    }
}
