//! Accuracy-distribution sampling under random parameter faults.
//!
//! Every trial perturbs the clean stored parameters with a fresh mask, reads
//! them back through the protection policy and measures accuracy. The
//! Metropolis filter then decides, trial by trial, whether the new accuracy
//! is recorded or the previously recorded value repeats. The Bernoulli
//! proposal kernel is symmetric, so the acceptance probability reduces to
//! `min(1, acc_current / acc_previous)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::Fx16;
use crate::injector::{gen_mask, FaultConfig, FaultMask};
use crate::nn::{count_correct, AccuracyMode, EvalSet, Model};
use crate::stats::Summary;
use crate::store::{ProtectedModel, ProtectionMode, ReadReport};

/// RNG stream reserved for acceptance draws; trial `t` uses stream `t + 1`.
const ACCEPT_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Number of fault trials `M`.
    pub iterations: usize,
    pub accuracy_mode: AccuracyMode,
    pub protection: ProtectionMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Metropolis acceptance filter over trial accuracies.
    #[default]
    Metropolis,
    /// Every trial recorded unconditionally.
    Iid,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Metropolis => "metropolis",
            Sampler::Iid => "iid",
        }
    }
}

/// Raw outcome of one faulty evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub correct: usize,
    pub accuracy: f64,
    pub flips_injected: u64,
    pub report: ReadReport,
}

/// One entry of the recorded chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Value entered into the distribution.
    pub accuracy: f64,
    /// Accuracy measured in this trial (equal to `accuracy` when accepted).
    pub proposed: f64,
    pub accepted: bool,
    pub flips_injected: u64,
    pub report: ReadReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDistribution {
    pub samples: Vec<f64>,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    pub fault: FaultConfig,
    pub chain: ChainConfig,
    pub sampler: Sampler,
    pub fault_free_accuracy: f64,
}

impl AccuracyDistribution {
    pub fn median(&self) -> f64 {
        self.summary.median
    }

    /// Sum of all per-trial read reports.
    pub fn total_report(&self) -> ReadReport {
        let mut r = ReadReport::default();
        for t in &self.trials {
            r += t.report;
        }
        r
    }
}

/// Clean protected store plus evaluation data, shared by every trial.
pub struct FaultExperiment<'a> {
    clean: ProtectedModel,
    set: &'a EvalSet<Fx16>,
    mode: AccuracyMode,
    fault_free: f64,
}

impl<'a> FaultExperiment<'a> {
    pub fn new(
        model: &Model<Fx16>,
        set: &'a EvalSet<Fx16>,
        protection: ProtectionMode,
        mode: AccuracyMode,
    ) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let clean = ProtectedModel::protect(model, protection);
        let fault_free = count_correct(model, set, mode)? as f64 / set.len() as f64;
        Ok(FaultExperiment {
            clean,
            set,
            mode,
            fault_free,
        })
    }

    pub fn fault_free_accuracy(&self) -> f64 {
        self.fault_free
    }

    pub fn protection(&self) -> ProtectionMode {
        self.clean.mode()
    }

    pub fn store(&self) -> &ProtectedModel {
        &self.clean
    }

    /// Mask for trial `index`; depends only on `(cfg.seed, index)`.
    pub fn trial_mask(&self, cfg: &FaultConfig, index: usize) -> Result<FaultMask> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64 + 1);
        gen_mask(cfg, &self.clean.layout(), &mut rng)
    }

    pub fn trial(&self, cfg: &FaultConfig, index: usize) -> Result<TrialOutcome> {
        let mask = self.trial_mask(cfg, index)?;
        let faulty = super::apply_mask(&self.clean, &mask)?;
        let (model, report) = faulty.read()?;
        let correct = count_correct(&model, self.set, self.mode)?;
        Ok(TrialOutcome {
            correct,
            accuracy: correct as f64 / self.set.len() as f64,
            flips_injected: mask.total_flips(),
            report,
        })
    }

    pub fn run(&self, fcfg: &FaultConfig, ccfg: &ChainConfig, sampler: Sampler) -> Result<AccuracyDistribution> {
        fcfg.validate()?;
        if ccfg.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if ccfg.protection != self.protection() || ccfg.accuracy_mode != self.mode {
            return Err(Error::Config("chain config does not match the prepared experiment".into()));
        }
        let outcomes = (0..ccfg.iterations)
            .map(|t| self.trial(fcfg, t))
            .collect::<Result<Vec<_>>>()?;
        let proposals: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
        let decisions = match sampler {
            Sampler::Metropolis => {
                let mut rng = ChaCha8Rng::seed_from_u64(fcfg.seed);
                rng.set_stream(ACCEPT_STREAM);
                metropolis_filter(&proposals, &mut rng)
            }
            Sampler::Iid => proposals.iter().map(|&a| (a, true)).collect(),
        };
        let trials: Vec<TrialRecord> = outcomes
            .iter()
            .zip(decisions)
            .enumerate()
            .map(|(trial, (o, (accuracy, accepted)))| TrialRecord {
                trial,
                accuracy,
                proposed: o.accuracy,
                accepted,
                flips_injected: o.flips_injected,
                report: o.report,
            })
            .collect();
        let samples: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
        let summary = Summary::from_samples(&samples).expect("iterations >= 1");
        Ok(AccuracyDistribution {
            samples,
            trials,
            summary,
            fault: *fcfg,
            chain: *ccfg,
            sampler,
            fault_free_accuracy: self.fault_free,
        })
    }
}

/// Acceptance ratio `min(1, current / previous)`; a zero previous value
/// (the chain's initial state) accepts unconditionally.
pub fn acceptance_probability(current: f64, previous: f64) -> f64 {
    if previous <= 0.0 {
        1.0
    } else {
        (current / previous).min(1.0)
    }
}

/// Runs the accept/reject recursion over measured accuracies. Returns the
/// recorded value and acceptance flag per trial.
pub fn metropolis_filter<R: Rng + ?Sized>(proposals: &[f64], rng: &mut R) -> Vec<(f64, bool)> {
    let mut previous = 0.0;
    proposals
        .iter()
        .map(|&current| {
            let u: f64 = rng.gen();
            if u < acceptance_probability(current, previous) {
                previous = current;
                (current, true)
            } else {
                (previous, false)
            }
        })
        .collect()
}

pub fn metropolis_chain(
    model: &Model<Fx16>,
    set: &EvalSet<Fx16>,
    fcfg: &FaultConfig,
    ccfg: &ChainConfig,
) -> Result<AccuracyDistribution> {
    FaultExperiment::new(model, set, ccfg.protection, ccfg.accuracy_mode)?.run(fcfg, ccfg, Sampler::Metropolis)
}

pub fn iid_campaign(
    model: &Model<Fx16>,
    set: &EvalSet<Fx16>,
    fcfg: &FaultConfig,
    ccfg: &ChainConfig,
) -> Result<AccuracyDistribution> {
    FaultExperiment::new(model, set, ccfg.protection, ccfg.accuracy_mode)?.run(fcfg, ccfg, Sampler::Iid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_proposal_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for seed in 0..50 {
            rng.set_stream(seed);
            let out = metropolis_filter(&[0.01, 0.5], &mut rng);
            assert_eq!(out[0], (0.01, true));
        }
    }

    #[test]
    fn acceptance_ratio_cases() {
        assert_eq!(acceptance_probability(0.3, 0.0), 1.0);
        assert_eq!(acceptance_probability(0.0, 0.0), 1.0);
        assert_eq!(acceptance_probability(0.9, 0.3), 1.0);
        assert!((acceptance_probability(0.3, 0.9) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(acceptance_probability(0.0, 0.5), 0.0);
    }

    #[test]
    fn constant_proposals_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = metropolis_filter(&[0.7; 20], &mut rng);
        assert!(out.iter().all(|&(a, acc)| a == 0.7 && acc));
    }

    #[test]
    fn zero_accuracy_after_nonzero_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = metropolis_filter(&[0.5, 0.0, 0.0], &mut rng);
        assert_eq!(out, vec![(0.5, true), (0.5, false), (0.5, false)]);
    }

    #[test]
    fn acceptance_rate_matches_ratio() {
        // alternating 0.8 / 0.4: every drop is accepted with probability 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut accepted_drops = 0;
        let n = 20_000;
        for _ in 0..n {
            let out = metropolis_filter(&[0.8, 0.4], &mut rng);
            accepted_drops += usize::from(out[1].1);
        }
        let rate = accepted_drops as f64 / n as f64;
        assert!((rate - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn recorded_value_is_current_or_previous(
            proposals in proptest::collection::vec(0.0f64..=1.0, 1..60),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = metropolis_filter(&proposals, &mut rng);
            let mut previous = None;
            for (i, &(value, accepted)) in out.iter().enumerate() {
                if accepted {
                    prop_assert_eq!(value, proposals[i]);
                } else {
                    prop_assert_eq!(Some(value), previous);
                }
                previous = Some(value);
            }
        }
    }
}
