//! Reader and writer for single-frame CT slices in Explicit VR Little Endian.
//!
//! Only the handful of attributes the pipeline needs are interpreted; every
//! other element is skipped (including sequences of undefined length).

use crate::volume::Plane;
use thiserror::Error;

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";
const CT_IMAGE_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.2";
const PREAMBLE_LEN: usize = 128;
const MAGIC: &[u8; 4] = b"DICM";

#[derive(Debug, Error, PartialEq)]
pub enum DicomError {
    #[error("not a DICOM file: missing DICM magic at offset 128")]
    MissingMagic,
    #[error("unsupported transfer syntax {0:?}")]
    UnsupportedTransferSyntax(String),
    #[error("pixel data declares {declared} bytes but only {remaining} remain")]
    TruncatedPixelData { declared: usize, remaining: usize },
    #[error("unsupported bits allocated {0} (only 16 is supported)")]
    UnsupportedBitsAllocated(u16),
    #[error("missing required attribute {0}")]
    MissingTag(&'static str),
    #[error("malformed element at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

/// One decoded slice before Hounsfield rescaling.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSlice {
    pub rows: usize,
    pub cols: usize,
    pub bits_allocated: u16,
    /// `true` for two's-complement stored values.
    pub pixel_representation: bool,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    /// Set when either rescale attribute was absent and defaulted (slope 1, intercept 0).
    pub rescale_defaulted: bool,
    pub instance_number: i32,
    pub slice_location: Option<f64>,
    pub patient_id: Option<String>,
    pub stored_values: Plane<i32>,
}

impl RawSlice {
    /// A signed 16-bit slice with identity rescale.
    pub fn new(stored_values: Plane<i32>, instance_number: i32) -> Self {
        RawSlice {
            rows: stored_values.rows(),
            cols: stored_values.cols(),
            bits_allocated: 16,
            pixel_representation: true,
            rescale_slope: 1.0,
            rescale_intercept: 0.0,
            rescale_defaulted: false,
            instance_number,
            slice_location: None,
            patient_id: None,
            stored_values,
        }
    }
}

/// `HU = round(slope * stored + intercept)`.
pub fn to_hu(raw: &RawSlice) -> Plane<i32> {
    let (slope, intercept) = (raw.rescale_slope, raw.rescale_intercept);
    raw.stored_values
        .map(|&s| (slope * f64::from(s) + intercept).round() as i32)
}

type Tag = (u16, u16);

const ROWS: Tag = (0x0028, 0x0010);
const COLUMNS: Tag = (0x0028, 0x0011);
const BITS_ALLOCATED: Tag = (0x0028, 0x0100);
const PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103);
const RESCALE_INTERCEPT: Tag = (0x0028, 0x1052);
const RESCALE_SLOPE: Tag = (0x0028, 0x1053);
const INSTANCE_NUMBER: Tag = (0x0020, 0x0013);
const SLICE_LOCATION: Tag = (0x0020, 0x1041);
const PATIENT_ID: Tag = (0x0010, 0x0020);
const PIXEL_DATA: Tag = (0x7FE0, 0x0010);
const TRANSFER_SYNTAX: Tag = (0x0002, 0x0010);

const ITEM: Tag = (0xFFFE, 0xE000);
const ITEM_DELIM: Tag = (0xFFFE, 0xE00D);
const SEQ_DELIM: Tag = (0xFFFE, 0xE0DD);
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

fn has_long_length(vr: &[u8; 2]) -> bool {
    matches!(
        vr,
        b"OB"
            | b"OD"
            | b"OF"
            | b"OL"
            | b"OV"
            | b"OW"
            | b"SQ"
            | b"SV"
            | b"UC"
            | b"UN"
            | b"UR"
            | b"UT"
            | b"UV"
    )
}

struct Element<'a> {
    tag: Tag,
    offset: usize,
    value: &'a [u8],
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn malformed(&self, reason: impl Into<String>) -> DicomError {
        DicomError::Malformed {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        if self.remaining() < n {
            return Err(self.malformed(format!("need {n} bytes, {} remain", self.remaining())));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_tag(&self) -> Option<Tag> {
        let b = self.buf.get(self.pos..self.pos + 4)?;
        Some((
            u16::from_le_bytes([b[0], b[1]]),
            u16::from_le_bytes([b[2], b[3]]),
        ))
    }

    fn tag(&mut self) -> Result<Tag, DicomError> {
        Ok((self.u16()?, self.u16()?))
    }

    /// Reads one explicit-VR element. Sequences of undefined length are
    /// consumed and returned with an empty value.
    fn element(&mut self) -> Result<Element<'a>, DicomError> {
        let offset = self.pos;
        let tag = self.tag()?;
        let vr_bytes = self.take(2)?;
        let vr = [vr_bytes[0], vr_bytes[1]];
        let len = if has_long_length(&vr) {
            self.take(2)?;
            self.u32()?
        } else {
            u32::from(self.u16()?)
        };
        if len == UNDEFINED_LENGTH {
            if tag == PIXEL_DATA {
                return Err(DicomError::UnsupportedTransferSyntax(
                    "encapsulated pixel data".into(),
                ));
            }
            self.skip_undefined_sequence()?;
            return Ok(Element {
                tag,
                offset,
                value: &[],
            });
        }
        let len = len as usize;
        if tag == PIXEL_DATA && len > self.remaining() {
            return Err(DicomError::TruncatedPixelData {
                declared: len,
                remaining: self.remaining(),
            });
        }
        let value = self.take(len)?;
        Ok(Element { tag, offset, value })
    }

    fn skip_undefined_sequence(&mut self) -> Result<(), DicomError> {
        loop {
            let tag = self.tag()?;
            let len = self.u32()?;
            match tag {
                SEQ_DELIM => return Ok(()),
                ITEM if len == UNDEFINED_LENGTH => loop {
                    if self.peek_tag() == Some(ITEM_DELIM) {
                        self.take(8)?;
                        break;
                    }
                    self.element()?;
                },
                ITEM => {
                    self.take(len as usize)?;
                }
                other => {
                    return Err(self.malformed(format!(
                        "unexpected tag ({:04X},{:04X}) inside sequence",
                        other.0, other.1
                    )))
                }
            }
        }
    }
}

fn text(value: &[u8]) -> String {
    String::from_utf8_lossy(value)
        .trim_matches(|c: char| c == '\0' || c.is_whitespace())
        .to_string()
}

fn us(el: &Element<'_>) -> Result<u16, DicomError> {
    match el.value {
        [a, b, ..] => Ok(u16::from_le_bytes([*a, *b])),
        _ => Err(DicomError::Malformed {
            offset: el.offset,
            reason: "US value shorter than 2 bytes".into(),
        }),
    }
}

fn decimal(el: &Element<'_>) -> Result<f64, DicomError> {
    // Multi-valued strings keep only the first value.
    let s = text(el.value);
    let first = s.split('\\').next().unwrap_or("").trim();
    first.parse::<f64>().map_err(|_| DicomError::Malformed {
        offset: el.offset,
        reason: format!("not a decimal string: {s:?}"),
    })
}

fn integer(el: &Element<'_>) -> Result<i32, DicomError> {
    let s = text(el.value);
    let first = s.split('\\').next().unwrap_or("").trim();
    first.parse::<i32>().map_err(|_| DicomError::Malformed {
        offset: el.offset,
        reason: format!("not an integer string: {s:?}"),
    })
}

/// Parses one uncompressed Explicit VR Little Endian slice.
pub fn parse_dicom_slice(bytes: &[u8]) -> Result<RawSlice, DicomError> {
    if bytes.len() < PREAMBLE_LEN + 4 || &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] != MAGIC {
        return Err(DicomError::MissingMagic);
    }
    let mut cur = Cursor {
        buf: bytes,
        pos: PREAMBLE_LEN + 4,
    };

    let mut transfer_syntax = None;
    while matches!(cur.peek_tag(), Some((0x0002, _))) {
        let el = cur.element()?;
        if el.tag == TRANSFER_SYNTAX {
            transfer_syntax = Some(text(el.value));
        }
    }
    match transfer_syntax.as_deref() {
        Some(EXPLICIT_VR_LITTLE_ENDIAN) => {}
        Some(other) => return Err(DicomError::UnsupportedTransferSyntax(other.to_string())),
        None => return Err(DicomError::UnsupportedTransferSyntax("<absent>".into())),
    }

    let mut rows = None;
    let mut cols = None;
    let mut bits = None;
    let mut signed = false;
    let mut slope = None;
    let mut intercept = None;
    let mut instance = None;
    let mut location = None;
    let mut patient_id = None;
    let mut pixels = None;

    while cur.remaining() > 0 {
        let el = cur.element()?;
        match el.tag {
            ROWS => rows = Some(us(&el)?),
            COLUMNS => cols = Some(us(&el)?),
            BITS_ALLOCATED => bits = Some(us(&el)?),
            PIXEL_REPRESENTATION => signed = us(&el)? == 1,
            RESCALE_SLOPE => slope = Some(decimal(&el)?),
            RESCALE_INTERCEPT => intercept = Some(decimal(&el)?),
            INSTANCE_NUMBER => instance = Some(integer(&el)?),
            SLICE_LOCATION => location = Some(decimal(&el)?),
            PATIENT_ID => patient_id = Some(text(el.value)).filter(|s| !s.is_empty()),
            PIXEL_DATA => {
                pixels = Some(el);
                break;
            }
            _ => {}
        }
    }

    let rows = usize::from(rows.ok_or(DicomError::MissingTag("Rows (0028,0010)"))?);
    let cols = usize::from(cols.ok_or(DicomError::MissingTag("Columns (0028,0011)"))?);
    let bits = bits.ok_or(DicomError::MissingTag("BitsAllocated (0028,0100)"))?;
    if bits != 16 {
        return Err(DicomError::UnsupportedBitsAllocated(bits));
    }
    let pixels = pixels.ok_or(DicomError::MissingTag("PixelData (7FE0,0010)"))?;
    if rows == 0 || cols == 0 {
        return Err(DicomError::Malformed {
            offset: pixels.offset,
            reason: "zero rows or columns".into(),
        });
    }
    let needed = rows * cols * 2;
    if pixels.value.len() < needed {
        return Err(DicomError::Malformed {
            offset: pixels.offset,
            reason: format!(
                "pixel data has {} bytes, {needed} needed",
                pixels.value.len()
            ),
        });
    }
    let values: Vec<i32> = pixels.value[..needed]
        .chunks_exact(2)
        .map(|b| {
            let raw = u16::from_le_bytes([b[0], b[1]]);
            if signed {
                i32::from(raw as i16)
            } else {
                i32::from(raw)
            }
        })
        .collect();

    let rescale_defaulted = slope.is_none() || intercept.is_none();
    if rescale_defaulted {
        log::warn!("rescale slope/intercept missing; defaulting to slope 1, intercept 0");
    }
    Ok(RawSlice {
        rows,
        cols,
        bits_allocated: bits,
        pixel_representation: signed,
        rescale_slope: slope.unwrap_or(1.0),
        rescale_intercept: intercept.unwrap_or(0.0),
        rescale_defaulted,
        instance_number: instance.unwrap_or(0),
        slice_location: location,
        patient_id,
        stored_values: Plane::from_vec(rows, cols, values).expect("length checked"),
    })
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn element(&mut self, tag: Tag, vr: &[u8; 2], value: &[u8]) {
        let mut value = value.to_vec();
        if value.len() % 2 == 1 {
            value.push(if vr == b"UI" || vr == b"OB" { 0 } else { b' ' });
        }
        self.buf.extend_from_slice(&tag.0.to_le_bytes());
        self.buf.extend_from_slice(&tag.1.to_le_bytes());
        self.buf.extend_from_slice(vr);
        if has_long_length(vr) {
            self.buf.extend_from_slice(&[0, 0]);
            self.buf
                .extend_from_slice(&(value.len() as u32).to_le_bytes());
        } else {
            self.buf
                .extend_from_slice(&(value.len() as u16).to_le_bytes());
        }
        self.buf.extend_from_slice(&value);
    }

    fn us(&mut self, tag: Tag, v: u16) {
        self.element(tag, b"US", &v.to_le_bytes());
    }
}

/// Writes `raw` as a minimal CT image file. Rescale attributes are omitted
/// when `raw.rescale_defaulted` is set.
pub fn encode_dicom_slice(raw: &RawSlice) -> Vec<u8> {
    let sop_instance = format!(
        "1.2.826.0.1.3680043.10.1.{}",
        raw.instance_number.unsigned_abs()
    );
    let mut meta = Writer { buf: Vec::new() };
    meta.element((0x0002, 0x0001), b"OB", &[0, 1]);
    meta.element((0x0002, 0x0002), b"UI", CT_IMAGE_STORAGE.as_bytes());
    meta.element((0x0002, 0x0003), b"UI", sop_instance.as_bytes());
    meta.element(TRANSFER_SYNTAX, b"UI", EXPLICIT_VR_LITTLE_ENDIAN.as_bytes());

    let mut w = Writer {
        buf: vec![0u8; PREAMBLE_LEN],
    };
    w.buf.extend_from_slice(MAGIC);
    w.element(
        (0x0002, 0x0000),
        b"UL",
        &(meta.buf.len() as u32).to_le_bytes(),
    );
    w.buf.extend_from_slice(&meta.buf);

    w.element((0x0008, 0x0016), b"UI", CT_IMAGE_STORAGE.as_bytes());
    w.element((0x0008, 0x0018), b"UI", sop_instance.as_bytes());
    if let Some(id) = &raw.patient_id {
        w.element(PATIENT_ID, b"LO", id.as_bytes());
    }
    w.element(
        INSTANCE_NUMBER,
        b"IS",
        raw.instance_number.to_string().as_bytes(),
    );
    if let Some(loc) = raw.slice_location {
        w.element(SLICE_LOCATION, b"DS", format!("{loc}").as_bytes());
    }
    w.us((0x0028, 0x0002), 1);
    w.element((0x0028, 0x0004), b"CS", b"MONOCHROME2");
    w.us(ROWS, raw.rows as u16);
    w.us(COLUMNS, raw.cols as u16);
    w.us(BITS_ALLOCATED, raw.bits_allocated);
    w.us((0x0028, 0x0101), raw.bits_allocated);
    w.us((0x0028, 0x0102), raw.bits_allocated - 1);
    w.us(PIXEL_REPRESENTATION, u16::from(raw.pixel_representation));
    if !raw.rescale_defaulted {
        w.element(
            RESCALE_INTERCEPT,
            b"DS",
            format!("{}", raw.rescale_intercept).as_bytes(),
        );
        w.element(
            RESCALE_SLOPE,
            b"DS",
            format!("{}", raw.rescale_slope).as_bytes(),
        );
    }
    let pixels: Vec<u8> = raw
        .stored_values
        .as_slice()
        .iter()
        .flat_map(|&v| (v as u16).to_le_bytes())
        .collect();
    w.element(PIXEL_DATA, b"OW", &pixels);
    w.buf
}
