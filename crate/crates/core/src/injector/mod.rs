//! Statistical fault injection: Bernoulli bit-flip masks over the stored
//! parameters and the accuracy chain built from them.

mod chain;
mod mask;
mod symmetry;

pub use chain::{
    acceptance_probability, iid_campaign, metropolis_chain, metropolis_filter, AccuracyDistribution,
    ChainConfig, FaultExperiment, Sampler, TrialOutcome, TrialRecord,
};
pub use mask::{gen_mask, BitScope, FaultConfig, FaultMask, RandVariant, Target, MAX_REDRAWS};
pub use symmetry::{proposal_symmetry_check, transition_probability, SymmetryReport, MAX_SYMMETRY_WIDTH};

use crate::error::Result;
use crate::store::ProtectedModel;

/// The faulty store `stored ^ e`.
pub fn apply_mask(store: &ProtectedModel, mask: &FaultMask) -> Result<ProtectedModel> {
    store.xor(mask.tensors())
}
