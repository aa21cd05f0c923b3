use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LayerClass;
use crate::secded::{CODEWORD_MASK, DATA_BITS, DATA_POSITION_MASK};
use crate::store::{ProtectionMode, TensorLayout};

/// Redraws allowed per word before the flip limit is enforced by truncation.
pub const MAX_REDRAWS: u32 = 100;

/// Which layers receive faults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    #[serde(alias = "all_layers")]
    All,
    #[serde(alias = "conv_only")]
    Conv,
    #[serde(alias = "fc_only")]
    Fc,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::All, Target::Fc, Target::Conv];

    pub fn includes(self, class: LayerClass) -> bool {
        match self {
            Target::All => true,
            Target::Conv => class == LayerClass::Conv,
            Target::Fc => class == LayerClass::Fc,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::All => "all",
            Target::Conv => "conv",
            Target::Fc => "fc",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which bits of a stored word may flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitScope {
    /// Only the 16 data bits (in codeword modes: the data positions).
    Data,
    /// Every stored bit, check bits included.
    Codeword,
}

impl BitScope {
    /// Codeword modes expose their check bits to faults; raw storage has
    /// nothing but data.
    pub fn default_for(mode: ProtectionMode) -> BitScope {
        match mode {
            ProtectionMode::None => BitScope::Data,
            ProtectionMode::Ecc | ProtectionMode::Spw => BitScope::Codeword,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BitScope::Data => "data",
            BitScope::Codeword => "codeword",
        }
    }

    /// In-scope bit mask for a word of the given width.
    pub fn mask(self, word_bits: u32) -> u32 {
        if word_bits == DATA_BITS {
            return (1 << DATA_BITS) - 1;
        }
        match self {
            BitScope::Data => DATA_POSITION_MASK,
            BitScope::Codeword => CODEWORD_MASK,
        }
    }
}

/// How the per-bit uniform draw is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandVariant {
    /// One uniform per bit; flip probability `p`.
    #[default]
    Standard,
    /// Minimum of three uniforms per bit; flip probability `1 - (1 - p)^3`.
    MinOfThree,
}

impl RandVariant {
    pub fn name(self) -> &'static str {
        match self {
            RandVariant::Standard => "standard",
            RandVariant::MinOfThree => "min_of_three",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Per-bit flip probability.
    pub p: f64,
    /// Maximum flips per stored word.
    pub limit: Option<u32>,
    pub target: Target,
    pub bit_scope: BitScope,
    pub rand_variant: RandVariant,
    pub seed: u64,
}

impl FaultConfig {
    pub fn new(p: f64, mode: ProtectionMode) -> Self {
        FaultConfig {
            p,
            limit: None,
            target: Target::All,
            bit_scope: BitScope::default_for(mode),
            rand_variant: RandVariant::Standard,
            seed: 0,
        }
    }

    pub fn with_limit(mut self, limit: Option<u32>) -> Self {
        self.limit = limit;
        self
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rand_variant(mut self, v: RandVariant) -> Self {
        self.rand_variant = v;
        self
    }

    pub fn with_bit_scope(mut self, scope: BitScope) -> Self {
        self.bit_scope = scope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidProbability(self.p));
        }
        Ok(())
    }

    /// Per-bit flip probability before any limit is applied.
    pub fn effective_probability(&self) -> f64 {
        match self.rand_variant {
            RandVariant::Standard => self.p,
            RandVariant::MinOfThree => 1.0 - (1.0 - self.p).powi(3),
        }
    }
}

/// Error pattern `e` per stored tensor; the faulty store is `stored ^ e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultMask {
    tensors: Vec<Vec<u32>>,
}

impl FaultMask {
    pub fn zeros(layout: &[TensorLayout]) -> Self {
        FaultMask {
            tensors: layout.iter().map(|t| vec![0; t.len]).collect(),
        }
    }

    pub fn from_words(tensors: Vec<Vec<u32>>) -> Self {
        FaultMask { tensors }
    }

    pub fn tensors(&self) -> &[Vec<u32>] {
        &self.tensors
    }

    pub fn total_flips(&self) -> u64 {
        self.words().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn max_flips_per_word(&self) -> u32 {
        self.words().map(u32::count_ones).max().unwrap_or(0)
    }

    fn words(&self) -> impl Iterator<Item = u32> + '_ {
        self.tensors.iter().flatten().copied()
    }
}

fn bit_draw<R: Rng + ?Sized>(rng: &mut R, p: f64, variant: RandVariant) -> bool {
    let u = match variant {
        RandVariant::Standard => rng.gen::<f64>(),
        RandVariant::MinOfThree => {
            let (a, b, c) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            a.min(b).min(c)
        }
    };
    u < p
}

/// One Bernoulli draw for every bit index in `bits`.
pub(crate) fn draw_word<R: Rng + ?Sized>(rng: &mut R, bits: &[u32], p: f64, variant: RandVariant) -> u32 {
    bits.iter()
        .fold(0, |w, &b| if bit_draw(rng, p, variant) { w | (1 << b) } else { w })
}

fn keep_lowest_bits(mut w: u32, k: u32) -> u32 {
    let mut out = 0;
    for _ in 0..k {
        if w == 0 {
            break;
        }
        let low = w & w.wrapping_neg();
        out |= low;
        w &= !low;
    }
    out
}

fn draw_limited<R: Rng + ?Sized>(rng: &mut R, bits: &[u32], cfg: &FaultConfig) -> u32 {
    let mut w = draw_word(rng, bits, cfg.p, cfg.rand_variant);
    let Some(k) = cfg.limit else { return w };
    let mut redraws = 0;
    while w.count_ones() > k && redraws < MAX_REDRAWS {
        w = draw_word(rng, bits, cfg.p, cfg.rand_variant);
        redraws += 1;
    }
    if w.count_ones() > k {
        w = keep_lowest_bits(w, k);
    }
    w
}

/// Draws a fault mask for every tensor in `layout`. Bits outside the
/// configured scope and tensors outside the target stay zero; the RNG is
/// consumed only for in-target tensors.
pub fn gen_mask<R: Rng + ?Sized>(cfg: &FaultConfig, layout: &[TensorLayout], rng: &mut R) -> Result<FaultMask> {
    cfg.validate()?;
    let tensors = layout
        .iter()
        .map(|t| {
            if !cfg.target.includes(t.class) || cfg.p == 0.0 {
                return vec![0; t.len];
            }
            let scope = cfg.bit_scope.mask(t.word_bits);
            let bits: Vec<u32> = (0..t.word_bits).filter(|b| scope & (1 << b) != 0).collect();
            (0..t.len).map(|_| draw_limited(rng, &bits, cfg)).collect()
        })
        .collect();
    Ok(FaultMask { tensors })
}
