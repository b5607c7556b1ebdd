//! `IPFM` model files.
//!
//! Layout (little-endian): magic `IPFM`, version u32, layer count u16, input
//! height/width/channels as u32, then per layer a type tag u8, a dimension
//! count u8 with that many u32 dimensions, a parameter count u32 and the
//! f32 parameters (weights then biases). A CRC-32 of all preceding bytes
//! closes the file.

use super::layers::Shape;
use super::model::{CnnModel, Layer};
use super::CnnError;

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"IPFM";

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_DROPOUT: u8 = 6;
const TAG_SOFTMAX: u8 = 7;

pub fn write_model(model: &CnnModel<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u16).to_le_bytes());
    for d in [model.input.h, model.input.w, model.input.c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for layer in &model.layers {
        let (tag, dims, params): (u8, Vec<usize>, Vec<f32>) = match layer {
            Layer::Conv2d {
                kernel,
                in_channels,
                filters,
                weights,
                bias,
            } => (
                TAG_CONV,
                vec![*kernel, *in_channels, *filters],
                [weights.as_slice(), bias.as_slice()].concat(),
            ),
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => (
                TAG_DENSE,
                vec![*inputs, *outputs],
                [weights.as_slice(), bias.as_slice()].concat(),
            ),
            Layer::Relu => (TAG_RELU, vec![], vec![]),
            Layer::MaxPool2 => (TAG_POOL, vec![], vec![]),
            Layer::Flatten => (TAG_FLATTEN, vec![], vec![]),
            Layer::Dropout { rate } => (TAG_DROPOUT, vec![], vec![*rate as f32]),
            Layer::Softmax => (TAG_SOFTMAX, vec![], vec![]),
        };
        out.push(tag);
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CnnError> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or(CnnError::Truncated)?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CnnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CnnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_model(bytes: &[u8]) -> Result<CnnModel<f32>, CnnError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CnnError::BadMagic);
    }
    let version = u32::from_le_bytes(
        bytes
            .get(4..8)
            .ok_or(CnnError::Truncated)?
            .try_into()
            .unwrap(),
    );
    if version != MODEL_VERSION {
        return Err(CnnError::VersionMismatch(version));
    }
    if bytes.len() < 12 {
        return Err(CnnError::Truncated);
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(CnnError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 8 };
    let count = r.u16()?;
    let input = Shape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let broken = |i: u16, why: &str| CnnError::ShapeChainBroken(format!("layer {i}: {why}"));
    let mut layers = Vec::with_capacity(count as usize);
    for i in 0..count {
        let tag = r.u8()?;
        let ndims = r.u8()?;
        let dims = (0..ndims)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let nparams = r.u32()? as usize;
        let params: Vec<f32> = r
            .take(nparams.checked_mul(4).ok_or(CnnError::Truncated)?)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let layer = match (tag, dims.as_slice()) {
            (TAG_CONV, &[kernel, in_channels, filters]) => {
                let nw = kernel * kernel * in_channels * filters;
                if params.len() != nw + filters {
                    return Err(broken(i, "conv parameter count"));
                }
                Layer::Conv2d {
                    kernel,
                    in_channels,
                    filters,
                    weights: params[..nw].to_vec(),
                    bias: params[nw..].to_vec(),
                }
            }
            (TAG_DENSE, &[inputs, outputs]) => {
                let nw = inputs * outputs;
                if params.len() != nw + outputs {
                    return Err(broken(i, "dense parameter count"));
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights: params[..nw].to_vec(),
                    bias: params[nw..].to_vec(),
                }
            }
            (TAG_DROPOUT, &[]) if params.len() == 1 => Layer::Dropout {
                rate: f64::from(params[0]),
            },
            (TAG_RELU, &[]) if params.is_empty() => Layer::Relu,
            (TAG_POOL, &[]) if params.is_empty() => Layer::MaxPool2,
            (TAG_FLATTEN, &[]) if params.is_empty() => Layer::Flatten,
            (TAG_SOFTMAX, &[]) if params.is_empty() => Layer::Softmax,
            _ => {
                return Err(broken(
                    i,
                    &format!("unknown layer tag {tag} / dims {dims:?}"),
                ))
            }
        };
        layers.push(layer);
    }
    if r.pos != body.len() {
        return Err(CnnError::ShapeChainBroken(
            "trailing bytes after last layer".into(),
        ));
    }
    let model = CnnModel { input, layers };
    model.validate()?;
    Ok(model)
}
