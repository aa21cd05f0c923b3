//! `SPWW` weights file, the contract between the trainer and the engine.
//!
//! All integers little-endian:
//!
//! ```text
//! "SPWW"                magic
//! u16                   format version (1)
//! u8 u8                 Q-format integer bits, fraction bits
//! u16                   layer count
//! per layer:
//!   u8                  kind: 1 conv, 2 dense, 3 maxpool, 4 relu
//!   conv:  8 x u16      filters, in_channels, kernel_h, kernel_w,
//!                       pad_top, pad_left, pad_bottom, pad_right
//!   dense: 2 x u16      outputs, inputs
//!   i16 ...             weights (row-major), then biases     [conv, dense]
//! u32                   CRC32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::fixedpoint::{Fx16, QFormat};
use crate::nn::{Conv2d, Dense, Layer, Model, Padding, Tensor};

pub const MAGIC: &[u8; 4] = b"SPWW";
pub const VERSION: u16 = 1;

const KIND_CONV: u8 = 1;
const KIND_DENSE: u8 = 2;
const KIND_MAXPOOL: u8 = 3;
const KIND_RELU: u8 = 4;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::WeightsFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn dims<const N: usize>(&mut self) -> Result<[usize; N]> {
        let mut out = [0; N];
        for d in &mut out {
            *d = usize::from(self.u16()?);
        }
        Ok(out)
    }

    fn tensor(&mut self, shape: Vec<usize>) -> Result<Tensor<Fx16>> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 2)?;
        let values = raw
            .chunks_exact(2)
            .map(|c| Fx16(i16::from_le_bytes([c[0], c[1]])))
            .collect();
        Tensor::new(shape, values)
    }
}

/// Parses a weights image; verifies magic, version, Q-format and CRC.
pub fn decode_weights(bytes: &[u8]) -> Result<Model<Fx16>> {
    if bytes.len() < 4 + 2 + 2 + 2 + 4 {
        return Err(Error::WeightsFormat("file too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::WeightsFormat("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::WeightsFormat(format!("unsupported version {version}")));
    }
    let qformat = QFormat {
        int_bits: r.u8()?,
        frac_bits: r.u8()?,
    };
    if qformat != QFormat::Q4_11 {
        return Err(Error::WeightsFormat(format!("engine runs Q4.11, file is {qformat}")));
    }
    let count = r.u16()?;
    let mut layers = Vec::with_capacity(usize::from(count));
    for i in 0..count {
        let layer = match r.u8()? {
            KIND_CONV => {
                let [f, c, kh, kw, top, left, bottom, right] = r.dims::<8>()?;
                let weights = r.tensor(vec![f, c, kh, kw])?;
                let bias = r.tensor(vec![f])?;
                let padding = Padding {
                    top,
                    left,
                    bottom,
                    right,
                };
                Layer::Conv(Conv2d::new(padding, weights, bias)?)
            }
            KIND_DENSE => {
                let [out, inp] = r.dims::<2>()?;
                let weights = r.tensor(vec![out, inp])?;
                let bias = r.tensor(vec![out])?;
                Layer::Dense(Dense::new(weights, bias)?)
            }
            KIND_MAXPOOL => Layer::MaxPool,
            KIND_RELU => Layer::Relu,
            other => {
                return Err(Error::WeightsFormat(format!("layer {i}: unknown kind tag {other}")));
            }
        };
        layers.push(layer);
    }
    if r.pos != body.len() {
        return Err(Error::WeightsFormat(format!(
            "{} trailing bytes before CRC",
            body.len() - r.pos
        )));
    }
    Ok(Model::new(layers, qformat))
}

pub fn encode_weights(model: &Model<Fx16>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.qformat().int_bits);
    out.push(model.qformat().frac_bits);
    out.extend_from_slice(&(model.layers().len() as u16).to_le_bytes());
    let put_dims = |out: &mut Vec<u8>, dims: &[usize]| {
        for &d in dims {
            out.extend_from_slice(&(d as u16).to_le_bytes());
        }
    };
    let put_tensor = |out: &mut Vec<u8>, t: &Tensor<Fx16>| {
        for v in t.values() {
            out.extend_from_slice(&v.0.to_le_bytes());
        }
    };
    for layer in model.layers() {
        match layer {
            Layer::Conv(c) => {
                out.push(KIND_CONV);
                let p = c.padding;
                put_dims(&mut out, c.weights.shape());
                put_dims(&mut out, &[p.top, p.left, p.bottom, p.right]);
                put_tensor(&mut out, &c.weights);
                put_tensor(&mut out, &c.bias);
            }
            Layer::Dense(d) => {
                out.push(KIND_DENSE);
                put_dims(&mut out, d.weights.shape());
                put_tensor(&mut out, &d.weights);
                put_tensor(&mut out, &d.bias);
            }
            Layer::MaxPool => out.push(KIND_MAXPOOL),
            Layer::Relu => out.push(KIND_RELU),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn load_model(path: &Path) -> Result<Model<Fx16>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_weights(&bytes)
}

/// Loads a model and checks it is exactly the LeNet variant the campaign
/// tooling expects.
pub fn validate_model(path: &Path) -> Result<Model<Fx16>> {
    let model = load_model(path)?;
    model.check_topology()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_model(seed: i16) -> Model<Fx16> {
        let m = Model::<Fx16>::lenet_zeros();
        let tensors = m
            .params()
            .into_iter()
            .enumerate()
            .map(|(k, (_, t))| {
                let mut t = t.clone();
                for (i, v) in t.values_mut().iter_mut().enumerate() {
                    *v = Fx16(((i as i32 * 31 + k as i32 * 7 + i32::from(seed)) % 4000 - 2000) as i16);
                }
                t
            })
            .collect();
        m.with_params(tensors).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = sample_model(3);
        let bytes = encode_weights(&m);
        assert_eq!(&bytes[..4], b"SPWW");
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(back, m);
        back.check_topology().unwrap();
    }

    #[test]
    fn header_layout() {
        let bytes = encode_weights(&Model::<Fx16>::lenet_zeros());
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(bytes[6], 4);
        assert_eq!(bytes[7], 11);
        assert_eq!(&bytes[8..10], &11u16.to_le_bytes());
        assert_eq!(bytes[10], KIND_CONV);
        // 4 + 2 + 2 + 2 + 11 kind tags + 2 conv * 16 + 3 dense * 4 dims bytes
        // + 2 bytes per parameter + 4 CRC
        let params = 80_680 + 238;
        assert_eq!(bytes.len(), 10 + 11 + 2 * 16 + 3 * 4 + 2 * params + 4);
    }

    #[test]
    fn corruption_is_caught_by_crc() {
        let mut bytes = encode_weights(&sample_model(1));
        bytes[100] ^= 0x10;
        assert!(matches!(decode_weights(&bytes), Err(Error::Crc { .. })));
    }

    #[test]
    fn rejects_wrong_magic_and_qformat() {
        let reseal = |mut body: Vec<u8>| {
            body.truncate(body.len() - 4);
            let crc = crc32fast::hash(&body);
            body.extend_from_slice(&crc.to_le_bytes());
            body
        };
        let mut bytes = encode_weights(&sample_model(1));
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&reseal(bytes)), Err(Error::WeightsFormat(_))));
        let mut bytes = encode_weights(&sample_model(1));
        bytes[7] = 14;
        assert!(matches!(decode_weights(&reseal(bytes)), Err(Error::WeightsFormat(_))));
        let mut bytes = encode_weights(&sample_model(1));
        bytes[10] = 9;
        assert!(decode_weights(&reseal(bytes)).is_err());
        assert!(decode_weights(b"SPWW").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn any_truncation_fails_cleanly(cut in 1usize..161_000) {
            let bytes = encode_weights(&sample_model(2));
            let cut = cut.min(bytes.len() - 1);
            prop_assert!(decode_weights(&bytes[..cut]).is_err());
        }
    }
}
