//! Batch experiment harness over repeated protocol runs.
//!
//! Estimates the protocol's branch probabilities, reliabilities and
//! cheating probabilities with binomial confidence bands. Trials are
//! independent; each draws its generator from `(experiment seed, trial
//! index)`, so results are bit-identical regardless of scheduling and the
//! harness can fan out across threads.

use crate::bit::Bit;
use crate::error::{Error, Result};
use crate::geometry::ProtocolGeometry;
use crate::protocol::{alice_guess_attack, run_protocol, AdversaryConfig, NoiseModel};
use crate::scalar::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

/// How the sender's bit is chosen per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitPolicy {
    Fixed(Bit),
    UniformRandom,
}

/// One batch configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub trials: usize,
    pub seed: u64,
    pub geometry: ProtocolGeometry,
    pub adversary: AdversaryConfig,
    pub noise: NoiseModel,
    pub b_policy: BitPolicy,
}

impl ExperimentSpec {
    /// Honest, noiseless batch with a uniformly random bit per trial.
    pub fn honest(geometry: ProtocolGeometry, trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            geometry,
            adversary: AdversaryConfig::honest(),
            noise: NoiseModel::NOISELESS,
            b_policy: BitPolicy::UniformRandom,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be >= 1".to_string()));
        }
        self.adversary.validate()?;
        self.noise.validate()
    }
}

/// Aggregate estimates over one batch.
///
/// Rates conditioned on a subset (conclusive runs, non-aborted runs) report
/// zero when the subset is empty. `p_conclusive` and `avg_reliability` are
/// over non-aborted runs; `abort_rate`, `u_hat` and `v_hat` are over all
/// runs. Inconclusive runs score reliability 1/2 (the receiver guesses);
/// aborted runs are excluded from reliability averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub trials: usize,
    /// Fraction of non-aborted runs that were conclusive.
    pub p_conclusive: f64,
    /// Half-width of the 3-sigma binomial band around `p_conclusive`.
    pub p_conclusive_3sigma: f64,
    /// Fraction of conclusive runs whose decoded bit was correct.
    pub reliability_conclusive: f64,
    /// Mean reliability over non-aborted runs.
    pub avg_reliability: f64,
    /// Sender's estimated cheating margin: guess rate minus one half.
    pub v_hat: f64,
    /// Receiver's estimated cheating margin: rate of certain, correct
    /// conclusions minus one half.
    pub u_hat: f64,
    /// Fraction of all runs that aborted.
    pub abort_rate: f64,
}

impl ExperimentStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct TrialCounts {
    conclusive: usize,
    inconclusive: usize,
    aborted: usize,
    correct_conclusive: usize,
    /// Conclusive with matching delays and a correct bit: the receiver
    /// knows the bit with certainty.
    unambiguous_success: usize,
    guess_correct: usize,
}

impl TrialCounts {
    fn merge(mut self, other: TrialCounts) -> TrialCounts {
        self.conclusive += other.conclusive;
        self.inconclusive += other.inconclusive;
        self.aborted += other.aborted;
        self.correct_conclusive += other.correct_conclusive;
        self.unambiguous_success += other.unambiguous_success;
        self.guess_correct += other.guess_correct;
        self
    }
}

/// splitmix64 finalizer over `(seed, index)`. Keeps per-trial generators
/// decorrelated while staying schedule-independent.
fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_trial<T: Real>(spec: &ExperimentSpec, index: u64) -> TrialCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec.seed, index));
    let b = match spec.b_policy {
        BitPolicy::Fixed(bit) => bit,
        BitPolicy::UniformRandom => Bit::from(rng.gen_bool(0.5)),
    };
    let transcript = run_protocol::<T, _>(&mut rng, b, spec.geometry, &spec.adversary, &spec.noise)
        .expect("validated spec runs");
    let outcome = transcript.outcome().expect("runs always conclude");
    let guess = alice_guess_attack(&transcript, &mut rng);

    let mut counts = TrialCounts::default();
    if guess == outcome.is_conclusive() {
        counts.guess_correct = 1;
    }
    match outcome.conclusive_bit() {
        Some(b_prime) => {
            counts.conclusive = 1;
            let correct = b_prime == b;
            if correct {
                counts.correct_conclusive = 1;
                if transcript.announced_tau() == transcript.effective_bob_tau() {
                    counts.unambiguous_success = 1;
                }
            }
        }
        None if outcome.is_abort() => counts.aborted = 1,
        None => counts.inconclusive = 1,
    }
    counts
}

/// Runs `spec.trials` independent seeded protocol runs and aggregates the
/// estimators. Deterministic given the spec, including its seed.
pub fn run_experiment<T: Real>(spec: &ExperimentSpec) -> Result<ExperimentStats> {
    spec.validate()?;
    let counts = (0..spec.trials as u64)
        .into_par_iter()
        .map(|i| run_trial::<T>(spec, i))
        .reduce(TrialCounts::default, TrialCounts::merge);

    let trials = spec.trials as f64;
    let non_aborted = counts.conclusive + counts.inconclusive;
    let (p_conclusive, p_band, avg_reliability) = if non_aborted > 0 {
        let p = counts.conclusive as f64 / non_aborted as f64;
        let band = 3.0 * (p * (1.0 - p) / non_aborted as f64).sqrt();
        let avg = (counts.correct_conclusive as f64 + 0.5 * counts.inconclusive as f64)
            / non_aborted as f64;
        (p, band, avg)
    } else {
        (0.0, 0.0, 0.0)
    };
    let reliability_conclusive = if counts.conclusive > 0 {
        counts.correct_conclusive as f64 / counts.conclusive as f64
    } else {
        0.0
    };
    Ok(ExperimentStats {
        trials: spec.trials,
        p_conclusive,
        p_conclusive_3sigma: p_band,
        reliability_conclusive,
        avg_reliability,
        v_hat: counts.guess_correct as f64 / trials - 0.5,
        u_hat: counts.unambiguous_success as f64 / trials - 0.5,
        abort_rate: counts.aborted as f64 / trials,
    })
}

/// Plug-in empirical mutual information in bits with the Miller-Madow bias
/// correction, clamped at zero. Requires at least 1000 samples.
pub fn mutual_information_bits<O: Eq + Hash>(samples: &[(O, Bit)]) -> Result<f64> {
    const MIN_SAMPLES: usize = 1000;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_SAMPLES,
        });
    }
    let n = samples.len() as f64;
    let mut joint: HashMap<(&O, Bit), usize> = HashMap::new();
    let mut marginal_o: HashMap<&O, usize> = HashMap::new();
    let mut marginal_b: HashMap<Bit, usize> = HashMap::new();
    for (o, b) in samples {
        *joint.entry((o, *b)).or_insert(0) += 1;
        *marginal_o.entry(o).or_insert(0) += 1;
        *marginal_b.entry(*b).or_insert(0) += 1;
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    let h_o = entropy(&marginal_o.values().copied().collect::<Vec<_>>());
    let h_b = entropy(&marginal_b.values().copied().collect::<Vec<_>>());
    let h_joint = entropy(&joint.values().copied().collect::<Vec<_>>());
    let plugin = h_o + h_b - h_joint;
    // Miller-Madow: each entropy estimate is low by (K - 1)/(2N) nats.
    let correction = ((marginal_o.len() as f64 - 1.0) + (marginal_b.len() as f64 - 1.0)
        - (joint.len() as f64 - 1.0))
        / (2.0 * n * std::f64::consts::LN_2);
    Ok((plugin + correction).max(0.0))
}

/// One grid cell of the noise sensitivity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisePoint {
    pub p_loss: f64,
    pub p_dark: f64,
    pub stats: ExperimentStats,
}

/// Runs the experiment across a grid of noise settings. The grid must be
/// nonempty; each point reuses the base spec with the noise swapped in.
pub fn noise_sensitivity<T: Real>(
    base: &ExperimentSpec,
    grid: &[(f64, f64)],
) -> Result<Vec<NoisePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig(
            "noise grid must be nonempty".to_string(),
        ));
    }
    grid.iter()
        .map(|&(p_loss, p_dark)| {
            let mut spec = *base;
            spec.noise = NoiseModel::new(p_loss, p_dark)?;
            let stats = run_experiment::<T>(&spec)?;
            Ok(NoisePoint {
                p_loss,
                p_dark,
                stats,
            })
        })
        .collect()
}

/// CSV with header `p_loss,p_dark,abort_rate,p_conclusive,avg_reliability`.
pub fn noise_grid_csv(points: &[NoisePoint]) -> String {
    let mut out = String::from("p_loss,p_dark,abort_rate,p_conclusive,avg_reliability\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.p_loss, p.p_dark, p.stats.abort_rate, p.stats.p_conclusive, p.stats.avg_reliability
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::BobStrategy;

    fn geom(n: usize, delta: usize) -> ProtocolGeometry {
        ProtocolGeometry::new(n, delta).unwrap()
    }

    #[test]
    fn honest_statistics_match_the_branch_model() {
        let spec = ExperimentSpec::honest(geom(16, 1), 20_000, 99);
        let stats = run_experiment::<f64>(&spec).unwrap();
        assert!((stats.p_conclusive - 0.5).abs() < stats.p_conclusive_3sigma);
        assert_eq!(stats.reliability_conclusive, 1.0);
        assert!((stats.avg_reliability - 0.75).abs() < 0.01);
        assert!(stats.v_hat.abs() < 0.015);
        assert!(stats.u_hat.abs() < 0.015);
        assert_eq!(stats.abort_rate, 0.0);
        // Identity between the aggregates.
        let predicted =
            stats.p_conclusive * stats.reliability_conclusive + (1.0 - stats.p_conclusive) * 0.5;
        assert!((stats.avg_reliability - predicted).abs() < 1e-12);
    }

    #[test]
    fn long_memory_attack_saturates_the_estimators() {
        let mut spec = ExperimentSpec::honest(geom(16, 1), 5_000, 7);
        spec.adversary = AdversaryConfig::with_strategy(BobStrategy::StoreAndWait {
            memory_lifetime: 10 * crate::DEFAULT_ANNOUNCE_DELAY,
        });
        let stats = run_experiment::<f64>(&spec).unwrap();
        assert_eq!(stats.p_conclusive, 1.0);
        assert_eq!(stats.reliability_conclusive, 1.0);
        assert_eq!(stats.u_hat, 0.5);
        assert_eq!(stats.abort_rate, 0.0);
    }

    #[test]
    fn short_memory_attack_looks_honest() {
        let mut spec = ExperimentSpec::honest(geom(16, 1), 20_000, 13);
        spec.adversary = AdversaryConfig::with_strategy(BobStrategy::StoreAndWait {
            memory_lifetime: crate::DEFAULT_ANNOUNCE_DELAY / 2,
        });
        let stats = run_experiment::<f64>(&spec).unwrap();
        assert!((stats.p_conclusive - 0.5).abs() < 0.015);
        assert_eq!(stats.reliability_conclusive, 1.0);
        assert!(stats.u_hat.abs() < 0.015);
    }

    #[test]
    fn immediate_guess_claims_everything_but_gains_nothing() {
        let mut spec = ExperimentSpec::honest(geom(16, 1), 20_000, 17);
        spec.adversary = AdversaryConfig::with_strategy(BobStrategy::ImmediateGuess);
        let stats = run_experiment::<f64>(&spec).unwrap();
        assert_eq!(stats.p_conclusive, 1.0);
        assert!((stats.reliability_conclusive - 0.75).abs() < 0.01);
        assert!((stats.avg_reliability - 0.75).abs() < 0.01);
        assert!(
            stats.u_hat.abs() < 0.015,
            "guessing must not raise u: {}",
            stats.u_hat
        );
    }

    #[test]
    fn experiments_are_bit_identical_given_a_spec() {
        let mut spec = ExperimentSpec::honest(geom(12, 2), 4_000, 1234);
        spec.noise = NoiseModel::new(0.05, 0.01).unwrap();
        let a = run_experiment::<f64>(&spec).unwrap();
        let b = run_experiment::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn estimators_tighten_with_more_trials() {
        let bands: Vec<f64> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&trials| {
                let spec = ExperimentSpec::honest(geom(8, 1), trials, 5);
                let stats = run_experiment::<f64>(&spec).unwrap();
                assert!(stats.v_hat.abs() < 4.0 * (0.25f64 / trials as f64).sqrt() + 1e-9);
                assert!(stats.u_hat.abs() < 4.0 * (0.25f64 / trials as f64).sqrt() + 1e-9);
                stats.p_conclusive_3sigma
            })
            .collect();
        assert!(bands[0] > bands[1] && bands[1] > bands[2]);
    }

    #[test]
    fn zero_trials_is_rejected() {
        let spec = ExperimentSpec {
            trials: 0,
            ..ExperimentSpec::honest(geom(8, 1), 1, 0)
        };
        assert!(run_experiment::<f64>(&spec).is_err());
    }

    #[test]
    fn mutual_information_edge_cases() {
        let n = 2000;
        // Constant observable carries nothing.
        let constant: Vec<(u8, Bit)> = (0..n).map(|i| (0u8, Bit::from(i % 2 == 0))).collect();
        assert_eq!(mutual_information_bits(&constant).unwrap(), 0.0);

        // The identity channel carries one full bit.
        let identity: Vec<(u8, Bit)> = (0..n)
            .map(|i| {
                let b = Bit::from(i % 2 == 0);
                (b.as_u8(), b)
            })
            .collect();
        let mi = mutual_information_bits(&identity).unwrap();
        assert!((mi - 1.0).abs() < 0.01, "identity MI {mi}");

        assert!(matches!(
            mutual_information_bits(&constant[..999]),
            Err(Error::TooFewSamples {
                got: 999,
                need: 1000
            })
        ));
    }

    #[test]
    fn noise_grid_behaves_monotonically() {
        let base = ExperimentSpec::honest(geom(8, 1), 4_000, 2024);
        let grid = [(0.0, 0.0), (0.25, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let points = noise_sensitivity::<f64>(&base, &grid).unwrap();
        assert_eq!(points[0].stats.abort_rate, 0.0);
        assert!(points[1].stats.abort_rate < points[2].stats.abort_rate);
        assert_eq!(points[3].stats.abort_rate, 1.0);
        assert_eq!(points[4].stats.abort_rate, 1.0);
        // Pure loss aborts runs but never flips bits.
        for p in &points[..3] {
            assert_eq!(p.stats.reliability_conclusive, 1.0);
        }
        // Abort rate is monotone in the dark-count axis too, including at
        // high loss.
        let dark_axis = [(0.8, 0.0), (0.8, 0.4), (0.8, 0.9), (0.8, 1.0)];
        let points = noise_sensitivity::<f64>(&base, &dark_axis).unwrap();
        for pair in points.windows(2) {
            assert!(pair[0].stats.abort_rate <= pair[1].stats.abort_rate);
        }
        assert_eq!(points[3].stats.abort_rate, 1.0);
        // Empty grid is rejected.
        assert!(noise_sensitivity::<f64>(&base, &[]).is_err());
    }

    #[test]
    fn half_loss_aborts_half_the_runs() {
        // Loss maps one-to-one to no-click aborts, so abort_rate tracks
        // p_loss; 25k trials keep the 3-sigma band inside +-0.01.
        let mut spec = ExperimentSpec::honest(geom(8, 1), 25_000, 808);
        spec.noise = NoiseModel::new(0.5, 0.0).unwrap();
        let stats = run_experiment::<f64>(&spec).unwrap();
        assert!(
            (stats.abort_rate - 0.5).abs() < 0.01,
            "abort rate {} at p_loss = 0.5",
            stats.abort_rate
        );
        assert_eq!(stats.reliability_conclusive, 1.0);
    }

    #[test]
    fn noise_grid_csv_format() {
        let base = ExperimentSpec::honest(geom(8, 1), 1_000, 3);
        let points = noise_sensitivity::<f64>(&base, &[(0.0, 0.0)]).unwrap();
        let csv = noise_grid_csv(&points);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "p_loss,p_dark,abort_rate,p_conclusive,avg_reliability"
        );
        assert!(lines.next().unwrap().starts_with("0,0,0,"));
    }
}
