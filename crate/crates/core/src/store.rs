//! Parameter memory image under a protection policy.
//!
//! `Ecc` and `Spw` store each 16-bit parameter as a SECDED codeword and
//! decode on read. They differ only on a detected double error: `Ecc` hands
//! the stored data bits through uncorrected, `Spw` masks the whole word to
//! zero so the corruption cannot reach the arithmetic.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::Fx16;
use crate::nn::{LayerClass, Model, ParamId, Tensor};
use crate::secded::{self, CodeWord, DataWord, DecodeOutcome, CHECK_BITS, CODEWORD_BITS, DATA_BITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionMode {
    /// Raw 16-bit words, faults pass straight through.
    None,
    /// SECDED only.
    #[serde(alias = "ecc_only")]
    Ecc,
    /// SECDED correction plus zero-masking of detected double errors.
    Spw,
}

impl ProtectionMode {
    pub const ALL: [ProtectionMode; 3] = [ProtectionMode::None, ProtectionMode::Ecc, ProtectionMode::Spw];

    /// Width in bits of one stored word.
    pub fn word_bits(self) -> u32 {
        match self {
            ProtectionMode::None => DATA_BITS,
            ProtectionMode::Ecc | ProtectionMode::Spw => CODEWORD_BITS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtectionMode::None => "none",
            ProtectionMode::Ecc => "ecc",
            ProtectionMode::Spw => "spw",
        }
    }
}

impl fmt::Display for ProtectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ProtectionMode::None),
            "ecc" | "ecc_only" | "ecconly" => Ok(ProtectionMode::Ecc),
            "spw" => Ok(ProtectionMode::Spw),
            other => Err(Error::Config(format!("unknown protection mode {other:?}"))),
        }
    }
}

/// Check bits stored per data bit.
pub fn storage_overhead(mode: ProtectionMode) -> f64 {
    match mode {
        ProtectionMode::None => 0.0,
        ProtectionMode::Ecc | ProtectionMode::Spw => f64::from(CHECK_BITS) / f64::from(DATA_BITS),
    }
}

/// Per-read tally of decode outcomes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadReport {
    pub words_read: u64,
    pub clean: u64,
    pub singles_corrected: u64,
    pub parity_bit_faults: u64,
    /// Detected doubles zeroed (`Spw`).
    pub doubles_masked: u64,
    /// Detected doubles passed through uncorrected (`Ecc`).
    pub doubles_passed: u64,
}

impl ReadReport {
    pub fn doubles(&self) -> u64 {
        self.doubles_masked + self.doubles_passed
    }

    pub fn is_conserved(&self) -> bool {
        self.clean + self.singles_corrected + self.parity_bit_faults + self.doubles() == self.words_read
    }
}

impl AddAssign for ReadReport {
    fn add_assign(&mut self, o: ReadReport) {
        self.words_read += o.words_read;
        self.clean += o.clean;
        self.singles_corrected += o.singles_corrected;
        self.parity_bit_faults += o.parity_bit_faults;
        self.doubles_masked += o.doubles_masked;
        self.doubles_passed += o.doubles_passed;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtectedTensor {
    shape: Vec<usize>,
    words: Vec<u32>,
    mode: ProtectionMode,
}

impl ProtectedTensor {
    pub fn protect(t: &Tensor<Fx16>, mode: ProtectionMode) -> Self {
        let words = t
            .values()
            .iter()
            .map(|v| match mode {
                ProtectionMode::None => u32::from(v.to_bits()),
                ProtectionMode::Ecc | ProtectionMode::Spw => secded::encode(DataWord(v.to_bits())).bits(),
            })
            .collect();
        ProtectedTensor {
            shape: t.shape().to_vec(),
            words,
            mode,
        }
    }

    pub fn mode(&self) -> ProtectionMode {
        self.mode
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn word_bits(&self) -> u32 {
        self.mode.word_bits()
    }

    /// XORs `mask` into a copy of the stored words.
    pub fn xor(&self, mask: &[u32]) -> Result<ProtectedTensor> {
        if mask.len() != self.words.len() {
            return Err(Error::WidthMismatch(format!(
                "mask has {} words, tensor has {}",
                mask.len(),
                self.words.len()
            )));
        }
        let limit = (1u64 << self.word_bits()) as u32 - 1;
        if let Some(bad) = mask.iter().find(|&&m| m & !limit != 0) {
            return Err(Error::WidthMismatch(format!(
                "mask word {bad:#x} exceeds {} bits",
                self.word_bits()
            )));
        }
        Ok(ProtectedTensor {
            shape: self.shape.clone(),
            words: self.words.iter().zip(mask).map(|(w, m)| w ^ m).collect(),
            mode: self.mode,
        })
    }

    pub fn read(&self, mode: ProtectionMode) -> Result<(Tensor<Fx16>, ReadReport)> {
        if mode != self.mode {
            return Err(Error::ModeMismatch {
                built: self.mode,
                requested: mode,
            });
        }
        let mut report = ReadReport {
            words_read: self.words.len() as u64,
            ..ReadReport::default()
        };
        let values = self
            .words
            .iter()
            .map(|&w| {
                if mode == ProtectionMode::None {
                    report.clean += 1;
                    return Fx16::from_bits(w as u16);
                }
                let (data, outcome) = secded::decode(CodeWord::from_bits(w));
                match outcome {
                    DecodeOutcome::NoFault => report.clean += 1,
                    DecodeOutcome::SingleCorrected(_) => report.singles_corrected += 1,
                    DecodeOutcome::OverallParityFault => report.parity_bit_faults += 1,
                    DecodeOutcome::DoubleDetected if mode == ProtectionMode::Spw => {
                        report.doubles_masked += 1;
                        return Fx16::ZERO;
                    }
                    DecodeOutcome::DoubleDetected => report.doubles_passed += 1,
                }
                Fx16::from_bits(data.0)
            })
            .collect();
        Ok((Tensor::new(self.shape.clone(), values)?, report))
    }
}

/// Shape of one stored tensor as seen by the fault injector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorLayout {
    pub name: String,
    pub class: LayerClass,
    pub len: usize,
    pub word_bits: u32,
}

/// Every parameter tensor of a model, protected under one mode.
#[derive(Clone, Debug)]
pub struct ProtectedModel {
    template: Model<Fx16>,
    ids: Vec<ParamId>,
    tensors: Vec<ProtectedTensor>,
    mode: ProtectionMode,
}

impl ProtectedModel {
    pub fn protect(model: &Model<Fx16>, mode: ProtectionMode) -> Self {
        let (ids, tensors) = model
            .params()
            .into_iter()
            .map(|(id, t)| (id, ProtectedTensor::protect(t, mode)))
            .unzip();
        ProtectedModel {
            template: model.clone(),
            ids,
            tensors,
            mode,
        }
    }

    pub fn mode(&self) -> ProtectionMode {
        self.mode
    }

    pub fn tensors(&self) -> &[ProtectedTensor] {
        &self.tensors
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn layout(&self) -> Vec<TensorLayout> {
        self.ids
            .iter()
            .zip(&self.tensors)
            .map(|(id, t)| TensorLayout {
                name: id.name.clone(),
                class: id.class,
                len: t.words.len(),
                word_bits: t.word_bits(),
            })
            .collect()
    }

    pub fn word_count(&self) -> usize {
        self.tensors.iter().map(|t| t.words.len()).sum()
    }

    /// Fresh copy with each tensor XORed by its mask.
    pub fn xor(&self, masks: &[Vec<u32>]) -> Result<ProtectedModel> {
        if masks.len() != self.tensors.len() {
            return Err(Error::WidthMismatch(format!(
                "mask covers {} tensors, store has {}",
                masks.len(),
                self.tensors.len()
            )));
        }
        let tensors = self
            .tensors
            .iter()
            .zip(masks)
            .map(|(t, m)| t.xor(m))
            .collect::<Result<_>>()?;
        Ok(ProtectedModel {
            template: self.template.clone(),
            ids: self.ids.clone(),
            tensors,
            mode: self.mode,
        })
    }

    /// Decodes every word (one scrub) and rebuilds the network from it.
    pub fn read(&self) -> Result<(Model<Fx16>, ReadReport)> {
        let mut report = ReadReport::default();
        let mut values = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let (v, r) = t.read(self.mode)?;
            report += r;
            values.push(v);
        }
        Ok((self.template.with_params(values)?, report))
    }
}
