//! PGM/PNG writers, class-map CSV and the prediction overlay.

use crate::segmentation::{window_enrich, SegmentationError};
use crate::volume::{Plane, TissueClass};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("class map is {found_rows}x{found_cols}, slice grid is {rows}x{cols}")]
    DimMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error(transparent)]
    Window(#[from] SegmentationError),
    #[error("roi size must be positive")]
    ZeroRoi,
    #[error("png encoding: {0}")]
    Png(String),
    #[error("class map: {0}")]
    ClassMap(String),
}

pub type Rgb = [u8; 3];

pub const RED: Rgb = [255, 0, 0];
pub const GREEN: Rgb = [0, 255, 0];
pub const TINT_ALPHA: f64 = 0.4;

/// Binary PGM (`P5`, maxval 255).
pub fn encode_pgm(image: &Plane<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend_from_slice(image.as_slice());
    out
}

/// Mask slice as 0/255 gray.
pub fn mask_to_gray(mask: &Plane<bool>) -> Plane<u8> {
    mask.map(|&m| if m { 255 } else { 0 })
}

/// 8-bit RGB PNG.
pub fn encode_png(image: &Plane<Rgb>) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.cols() as u32, image.rows() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| ImageError::Png(e.to_string()))?;
        let flat: Vec<u8> = image.as_slice().iter().flatten().copied().collect();
        w.write_image_data(&flat)
            .map_err(|e| ImageError::Png(e.to_string()))?;
    }
    Ok(out)
}

fn tint(gray: u8, color: Rgb) -> Rgb {
    color.map(|c| ((1.0 - TINT_ALPHA) * f64::from(gray) + TINT_ALPHA * f64::from(c)).round() as u8)
}

/// Windowed grayscale with ground-glass ROIs tinted green and honeycombing
/// red. `class_map` holds one label code per `roi`×`roi` cell.
pub fn render_overlay(
    slice: &Plane<i32>,
    class_map: &Plane<u8>,
    roi: usize,
    window_center: f64,
    window_width: f64,
) -> Result<Plane<Rgb>, ImageError> {
    if roi == 0 {
        return Err(ImageError::ZeroRoi);
    }
    let (gr, gc) = (slice.rows() / roi, slice.cols() / roi);
    if class_map.dims() != (gr, gc) {
        return Err(ImageError::DimMismatch {
            rows: gr,
            cols: gc,
            found_rows: class_map.rows(),
            found_cols: class_map.cols(),
        });
    }
    let gray = window_enrich(slice, window_center, window_width)?;
    Ok(Plane::from_fn(slice.rows(), slice.cols(), |r, c| {
        let g = *gray.get(r, c);
        let code = if r / roi < gr && c / roi < gc {
            TissueClass::from_code(*class_map.get(r / roi, c / roi))
        } else {
            None
        };
        match code {
            Some(TissueClass::Honeycombing) => tint(g, RED),
            Some(TissueClass::GroundGlass) => tint(g, GREEN),
            _ => [g; 3],
        }
    }))
}

/// One CSV row per grid row, no header.
pub fn write_class_map_csv(map: &Plane<u8>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in 0..map.rows() {
        let row: Vec<String> = (0..map.cols()).map(|c| map.get(r, c).to_string()).collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn read_class_map_csv(text: &str) -> Result<Plane<u8>, ImageError> {
    let bad = |m: String| ImageError::ClassMap(m);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(bad(format!("row {rows} has {} cells", rec.len())));
        }
        for cell in rec.iter() {
            let code: u8 = cell
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad code {cell:?}")))?;
            if TissueClass::from_code(code).is_none() {
                return Err(bad(format!("unknown class code {code}")));
            }
            data.push(code);
        }
        rows += 1;
    }
    Plane::from_vec(rows, cols.unwrap_or(0), data).ok_or_else(|| bad("empty".into()))
}
