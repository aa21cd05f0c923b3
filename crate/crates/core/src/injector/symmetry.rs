//! Empirical check that the bit-flip proposal kernel is symmetric.
//!
//! For a word of `n` bits, flipping each bit independently with probability
//! `p` moves state `a` to state `b` with probability
//! `p^d (1 - p)^(n - d)`, `d = popcount(a ^ b)`, which equals the reverse
//! move. The Metropolis acceptance ratio relies on that equality.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::injector::mask::draw_word;
use crate::injector::RandVariant;

pub const MAX_SYMMETRY_WIDTH: u32 = 8;

/// Cells with fewer expected counts than this are pooled before a
/// chi-square fit.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub width: u32,
    pub p: f64,
    /// Proposals drawn from every starting state.
    pub trials_per_state: u64,
    /// `counts[a][b]`: proposals from `a` that landed on `b`.
    pub counts: Vec<Vec<u64>>,
    pub symmetry_chi2: f64,
    pub symmetry_df: usize,
    pub symmetry_p_value: f64,
    pub fit_chi2: f64,
    pub fit_df: usize,
    pub fit_p_value: f64,
}

impl SymmetryReport {
    pub fn frequency(&self, a: usize, b: usize) -> f64 {
        self.counts[a][b] as f64 / self.trials_per_state as f64
    }

    /// Neither the symmetry nor the goodness-of-fit test rejects at `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.symmetry_p_value > alpha && self.fit_p_value > alpha
    }
}

/// Exact kernel probability of moving from `a` to `b`.
pub fn transition_probability(width: u32, p: f64, a: usize, b: usize) -> f64 {
    let d = (a ^ b).count_ones() as i32;
    p.powi(d) * (1.0 - p).powi(width as i32 - d)
}

fn chi2_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Draws `trials_per_state` proposals from each of the `2^width` states and
/// tests the transition counts for pairwise symmetry and for agreement with
/// the analytic kernel.
pub fn proposal_symmetry_check(width: u32, p: f64, trials_per_state: u64, seed: u64) -> Result<SymmetryReport> {
    if !(1..=MAX_SYMMETRY_WIDTH).contains(&width) {
        return Err(Error::Config(format!("symmetry check width must be 1..={MAX_SYMMETRY_WIDTH}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let states = 1usize << width;
    let bits: Vec<u32> = (0..width).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![vec![0u64; states]; states];
    for (a, row) in counts.iter_mut().enumerate() {
        for _ in 0..trials_per_state {
            let e = draw_word(&mut rng, &bits, p, RandVariant::Standard) as usize;
            row[a ^ e] += 1;
        }
    }

    // Bowker's test: under symmetry n_ab and n_ba split their total evenly.
    let mut symmetry_chi2 = 0.0;
    let mut symmetry_df = 0;
    for (a, row) in counts.iter().enumerate() {
        for (b, &forward) in row.iter().enumerate().skip(a + 1) {
            let (x, y) = (forward as f64, counts[b][a] as f64);
            if x + y > 0.0 {
                symmetry_chi2 += (x - y).powi(2) / (x + y);
                symmetry_df += 1;
            }
        }
    }

    let n = trials_per_state as f64;
    let mut fit_chi2 = 0.0;
    let mut fit_df = 0;
    for (a, row) in counts.iter().enumerate() {
        let mut pooled = (0.0, 0.0);
        let mut cells = 0;
        for (b, &c) in row.iter().enumerate() {
            let expected = n * transition_probability(width, p, a, b);
            if expected >= MIN_EXPECTED {
                fit_chi2 += (c as f64 - expected).powi(2) / expected;
                cells += 1;
            } else {
                pooled.0 += c as f64;
                pooled.1 += expected;
            }
        }
        if pooled.1 > 0.0 {
            fit_chi2 += (pooled.0 - pooled.1).powi(2) / pooled.1;
            cells += 1;
        } else if pooled.0 > 0.0 {
            // an impossible transition happened
            fit_chi2 = f64::INFINITY;
        }
        fit_df += cells.max(1) - 1;
    }

    Ok(SymmetryReport {
        width,
        p,
        trials_per_state,
        counts,
        symmetry_p_value: chi2_sf(symmetry_chi2, symmetry_df),
        symmetry_chi2,
        symmetry_df,
        fit_p_value: if fit_chi2.is_finite() { chi2_sf(fit_chi2, fit_df) } else { 0.0 },
        fit_chi2,
        fit_df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_kernel_values() {
        assert!((transition_probability(4, 0.5, 0, 9) - 1.0 / 16.0).abs() < 1e-15);
        assert!((transition_probability(4, 0.1, 0, 3) - 0.0081).abs() < 1e-15);
        assert_eq!(transition_probability(4, 0.1, 5, 3), transition_probability(4, 0.1, 3, 5));
        let row: f64 = (0..16).map(|b| transition_probability(4, 0.3, 6, b)).sum();
        assert!((row - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_probability_is_uniform() {
        let r = proposal_symmetry_check(4, 0.5, 40_000, 1).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                assert!((r.frequency(a, b) - 1.0 / 16.0).abs() < 0.006, "{a}->{b}");
            }
        }
        assert!(r.passes(0.001));
    }

    #[test]
    fn two_bit_move_frequency() {
        let r = proposal_symmetry_check(4, 0.1, 100_000, 2).unwrap();
        assert!((r.frequency(0, 3) - 0.0081).abs() < 0.0012);
        assert!(r.passes(0.001), "{r:?}");
    }

    #[test]
    fn zero_probability_stays_on_diagonal() {
        let r = proposal_symmetry_check(3, 0.0, 100, 3).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                assert_eq!(r.counts[a][b], if a == b { 100 } else { 0 });
            }
        }
        assert_eq!(r.symmetry_df, 0);
        assert!(r.passes(0.001));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(proposal_symmetry_check(0, 0.1, 10, 0).is_err());
        assert!(proposal_symmetry_check(9, 0.1, 10, 0).is_err());
        assert!(proposal_symmetry_check(4, 1.2, 10, 0).is_err());
    }
}
