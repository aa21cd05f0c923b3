//! SECDED(22,16): a Hamming(21,16) code extended with one overall parity bit.
//!
//! Packed layout of a [`CodeWord`]:
//!
//! ```text
//! index:   21 20 19 18 17 16 15 14 13 12 11 10  9  8  7  6  5  4  3  2  1  0
//! role:    d  d  d  d  d  p16 d  d  d  d  d  d  d  p8 d  d  d  p4 d  p2 p1 P
//! ```
//!
//! Indices 1..=21 are the 1-based Hamming positions: every power of two is a
//! parity bit, every other position holds the next data bit (LSB first).
//! Index 0 holds `P`, the XOR of all 22 bits of a valid codeword is zero.
//! The fault injector addresses codeword bits by these indices.

use std::fmt;

/// Number of bits in a packed codeword.
pub const CODEWORD_BITS: u32 = 22;
/// Number of protected data bits.
pub const DATA_BITS: u32 = 16;
/// Hamming parity bits plus the overall parity bit.
pub const CHECK_BITS: u32 = CODEWORD_BITS - DATA_BITS;
/// Mask covering every valid codeword bit.
pub const CODEWORD_MASK: u32 = (1 << CODEWORD_BITS) - 1;

/// Highest Hamming position.
const MAX_POSITION: u32 = CODEWORD_BITS - 1;

/// Hamming positions of the data bits, indexed by data-bit significance.
pub const DATA_POSITIONS: [u32; 16] = data_positions();

/// Hamming positions of the five parity bits.
pub const PARITY_POSITIONS: [u32; 5] = [1, 2, 4, 8, 16];

/// Bit mask (packed index space) of the 16 data positions.
pub const DATA_POSITION_MASK: u32 = data_position_mask();

/// `COVERAGE[j]` is the set of data positions whose index has bit `j` set,
/// i.e. the positions checked by parity bit `2^j`.
const COVERAGE: [u32; 5] = coverage_masks();

const fn data_positions() -> [u32; 16] {
    let mut out = [0u32; 16];
    let mut pos = 1;
    let mut i = 0;
    while pos <= MAX_POSITION {
        if !pos.is_power_of_two() {
            out[i] = pos;
            i += 1;
        }
        pos += 1;
    }
    out
}

const fn data_position_mask() -> u32 {
    let mut mask = 0;
    let mut i = 0;
    while i < DATA_POSITIONS.len() {
        mask |= 1 << DATA_POSITIONS[i];
        i += 1;
    }
    mask
}

const fn coverage_masks() -> [u32; 5] {
    let mut out = [0u32; 5];
    let mut j = 0;
    while j < 5 {
        let mut i = 0;
        while i < DATA_POSITIONS.len() {
            if DATA_POSITIONS[i] & (1 << j) != 0 {
                out[j] |= 1 << DATA_POSITIONS[i];
            }
            i += 1;
        }
        j += 1;
    }
    out
}

/// Raw storage of one 16-bit network parameter.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DataWord(pub u16);

impl fmt::Debug for DataWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DataWord({:#06x})", self.0)
    }
}

/// A 22-bit protected word, see the module docs for the layout.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CodeWord(u32);

impl fmt::Debug for CodeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CodeWord({:#08x})", self.0)
    }
}

impl CodeWord {
    /// Wraps raw bits; anything above bit 21 is discarded.
    pub fn from_bits(bits: u32) -> Self {
        CodeWord(bits & CODEWORD_MASK)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Flips the bit at packed index `index` (0 = overall parity).
    pub fn flip(self, index: u32) -> Self {
        assert!(index < CODEWORD_BITS, "codeword index {index} out of range");
        CodeWord(self.0 ^ (1 << index))
    }

    /// Gathers the 16 data positions back into a data word, without any checking.
    pub fn data(self) -> DataWord {
        let mut d = 0u16;
        for (i, &pos) in DATA_POSITIONS.iter().enumerate() {
            d |= (((self.0 >> pos) & 1) as u16) << i;
        }
        DataWord(d)
    }

    fn stored_parity(self) -> u8 {
        let mut c = 0u8;
        for (j, &pos) in PARITY_POSITIONS.iter().enumerate() {
            c |= (((self.0 >> pos) & 1) as u8) << j;
        }
        c
    }
}

/// Result of comparing stored against recomputed check bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Syndrome {
    /// Stored Hamming parities XOR recomputed ones, bit `j` for parity `2^j`.
    pub c: u8,
    /// Overall parity mismatch.
    pub p_check: bool,
}

/// Fault class read off a syndrome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecodeOutcome {
    NoFault,
    /// Single flip at the given Hamming position (1..=21), corrected.
    SingleCorrected(u32),
    /// Only the overall parity bit is wrong; data is intact.
    OverallParityFault,
    /// Two (or an uncorrectable even/odd pattern of more) flips.
    DoubleDetected,
}

impl DecodeOutcome {
    pub fn is_double(self) -> bool {
        matches!(self, DecodeOutcome::DoubleDetected)
    }
}

fn parity(x: u32) -> u8 {
    (x.count_ones() & 1) as u8
}

fn hamming_parities(data_part: u32) -> u8 {
    let mut c = 0u8;
    for (j, &cov) in COVERAGE.iter().enumerate() {
        c |= parity(data_part & cov) << j;
    }
    c
}

pub fn encode(data: DataWord) -> CodeWord {
    let mut bits = 0u32;
    for (i, &pos) in DATA_POSITIONS.iter().enumerate() {
        bits |= (((data.0 >> i) & 1) as u32) << pos;
    }
    let c = hamming_parities(bits);
    for (j, &pos) in PARITY_POSITIONS.iter().enumerate() {
        bits |= (((c >> j) & 1) as u32) << pos;
    }
    bits |= parity(bits) as u32;
    CodeWord(bits)
}

pub fn compute_syndrome(cw: CodeWord) -> Syndrome {
    let recomputed = hamming_parities(cw.0 & DATA_POSITION_MASK);
    Syndrome {
        c: recomputed ^ cw.stored_parity(),
        p_check: parity(cw.0) == 1,
    }
}

/// Table lookup from syndrome to fault class.
///
/// A nonzero `c` with odd overall parity names the flipped position. Values of
/// `c` beyond position 21 can only arise from three or more flips and are
/// reported as uncorrectable.
pub fn classify(s: Syndrome) -> DecodeOutcome {
    match (s.c, s.p_check) {
        (0, false) => DecodeOutcome::NoFault,
        (0, true) => DecodeOutcome::OverallParityFault,
        (c, true) if u32::from(c) <= MAX_POSITION => DecodeOutcome::SingleCorrected(u32::from(c)),
        _ => DecodeOutcome::DoubleDetected,
    }
}

/// Decodes a codeword. On `DoubleDetected` the stored data bits are returned
/// uncorrected; the caller's protection policy decides what to do with them.
pub fn decode(cw: CodeWord) -> (DataWord, DecodeOutcome) {
    let outcome = classify(compute_syndrome(cw));
    let data = match outcome {
        DecodeOutcome::SingleCorrected(pos) => cw.flip(pos).data(),
        _ => cw.data(),
    };
    (data, outcome)
}
