use powertalk::detector::{reconstruct_aggregate, DetectorError, LevelTable, MAX_GROUP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Exhaustive Bayes rule: every bit pattern weighted by its Gaussian
/// likelihood and uniform prior, summed by number of ones.
fn brute_force_map(gains: &[f64], obs: f64, sigma: f64) -> usize {
    let m = gains.len();
    let mut posterior = vec![0.0f64; m + 1];
    let mut log_terms = Vec::new();
    for pattern in 0u32..(1 << m) {
        let level: f64 = (0..m).map(|j| if pattern >> j & 1 == 1 { gains[j] } else { -gains[j] }).sum();
        log_terms.push((pattern.count_ones() as usize, -(obs - level).powi(2) / (2.0 * sigma * sigma)));
    }
    let peak = log_terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    for (theta, l) in log_terms {
        posterior[theta] += (l - peak).exp();
    }
    let mut best = 0;
    for theta in 1..=m {
        if posterior[theta] > posterior[best] {
            best = theta;
        }
    }
    best
}

#[test]
fn matches_brute_force_on_observation_grid() {
    let gain_sets: [&[f64]; 5] = [&[], &[0.2], &[0.2, 0.2], &[0.3, 0.1, 0.25], &[0.1, 0.1, 0.12, 0.3]];
    for gains in gain_sets {
        let table = LevelTable::from_gains(0, 0, (1..=gains.len()).collect(), gains).unwrap();
        assert_eq!(table.hypotheses(), gains.len() + 1);
        assert_eq!(table.patterns(), 1 << gains.len());
        for sigma in [0.01, 0.1, 0.5] {
            for i in 0..1000 {
                let obs = -1.5 + 3.0 * i as f64 / 999.0;
                assert_eq!(table.detect(obs, sigma), brute_force_map(gains, obs, sigma), "{gains:?} {sigma} {obs}");
            }
        }
    }
}

#[test]
fn single_transmitter_reduces_to_sign_threshold() {
    let table = LevelTable::from_gains(0, 0, vec![1], &[0.04]).unwrap();
    for obs in [-0.3, -0.01, -1e-9, 1e-9, 0.02, 0.5] {
        assert_eq!(table.detect(obs, 0.05), usize::from(obs > 0.0));
    }
    // exactly between the two levels both posteriors are equal
    assert_eq!(table.detect(0.0, 0.05), 0);
}

/// Decision thresholds of the three-level constellation `{-2a, 0, 2a}` with
/// priors `1/4, 1/2, 1/4`.
fn three_level_threshold(a: f64, sigma: f64) -> f64 {
    a + sigma * sigma * std::f64::consts::LN_2 / (2.0 * a)
}

#[test]
fn equal_gains_follow_three_level_threshold_rule() {
    let (a, sigma) = (0.05, 0.04);
    let table = LevelTable::from_gains(9, 0, vec![1, 2], &[a, a]).unwrap();
    let tau = three_level_threshold(a, sigma);
    for obs in [-tau - 1e-6, -tau + 1e-6, 0.0, tau - 1e-6, tau + 1e-6] {
        let expected = if obs < -tau {
            0
        } else if obs > tau {
            2
        } else {
            1
        };
        assert_eq!(table.detect(obs, sigma), expected, "obs {obs}");
    }
}

#[test]
fn equal_gains_error_rate_matches_q_function() {
    let (a, sigma) = (0.05, 0.04);
    let table = LevelTable::from_gains(9, 0, vec![1, 2], &[a, a]).unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let q = |z: f64| std_normal.sf(z);
    let tau = three_level_threshold(a, sigma);
    let expected = 0.5 * q((2.0 * a - tau) / sigma) + q(tau / sigma);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 200_000;
    let mut errors = 0;
    for _ in 0..trials {
        let (b1, b2): (bool, bool) = (rng.random(), rng.random());
        let level = if b1 { a } else { -a } + if b2 { a } else { -a };
        let z: f64 = rng.sample(StandardNormal);
        if table.detect(level + sigma * z, sigma) != usize::from(b1) + usize::from(b2) {
            errors += 1;
        }
    }
    let rate = errors as f64 / trials as f64;
    let se = (expected * (1.0 - expected) / trials as f64).sqrt();
    assert!((rate - expected).abs() < 4.0 * se, "simulated {rate}, predicted {expected}");
}

#[test]
fn noiseless_detection_is_exact_for_distinct_gains() {
    let gains = [0.11, 0.07, 0.23, 0.05];
    let table = LevelTable::from_gains(0, 0, vec![1, 2, 3, 4], &gains).unwrap();
    for pattern in 0u32..16 {
        let level: f64 = (0..4).map(|j| if pattern >> j & 1 == 1 { gains[j] } else { -gains[j] }).sum();
        assert_eq!(table.detect(level, 0.0), pattern.count_ones() as usize);
    }
}

#[test]
fn error_rate_falls_with_amplitude() {
    let sigma = 0.05;
    let rate = |a: f64| {
        let table = LevelTable::from_gains(0, 0, vec![1, 2, 3], &[a, a, a]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 40_000;
        let errors = (0..trials)
            .filter(|_| {
                let bits: [bool; 3] = rng.random();
                let level: f64 = bits.iter().map(|&b| if b { a } else { -a }).sum();
                let z: f64 = rng.sample(StandardNormal);
                table.detect(level + sigma * z, sigma) != bits.iter().filter(|&&b| b).count()
            })
            .count();
        errors as f64 / trials as f64
    };
    let rates: Vec<f64> = [0.02, 0.04, 0.06, 0.08].iter().map(|&a| rate(a)).collect();
    assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
}

#[test]
fn group_cap_is_enforced() {
    let gains = vec![0.01; MAX_GROUP + 1];
    let err = LevelTable::from_gains(0, 0, (1..=MAX_GROUP + 1).collect(), &gains).unwrap_err();
    assert_eq!(err, DetectorError::GroupTooLarge(MAX_GROUP + 1));
}

#[test]
fn extreme_observations_do_not_underflow() {
    let table = LevelTable::from_gains(0, 0, vec![1, 2], &[0.01, 0.01]).unwrap();
    assert_eq!(table.detect(1e3, 1e-6), 2);
    assert_eq!(table.detect(-1e3, 1e-6), 0);
    let scores = table.posterior_scores(1e3, 1e-6);
    assert!(scores.iter().all(|s| s.is_finite()));
}

#[test]
fn aggregate_reconstruction_inverts_word_sums() {
    // three other transmitters with words 5, 2 and 7 over Q = 3
    let words = [5u64, 2, 7];
    let sums: Vec<usize> = (0..3).map(|t| words.iter().filter(|&&w| w >> t & 1 == 1).count()).collect();
    let step = 10.0;
    let agg = reconstruct_aggregate(&sums, step, 4, true);
    let expected: f64 = words.iter().map(|&w| (w as f64 + 0.5) * step).sum();
    assert!((agg - expected).abs() < 1e-12);
    assert!((reconstruct_aggregate(&sums, step, 3, false) - expected).abs() < 1e-12);
}

proptest! {
    #[test]
    fn detector_agrees_with_oracle_anywhere(
        gains in prop::collection::vec(0.001f64..0.5, 0..=4),
        obs in -3.0f64..3.0,
        sigma in 0.001f64..1.0,
    ) {
        let table = LevelTable::from_gains(0, 0, (1..=gains.len()).collect(), &gains).unwrap();
        prop_assert_eq!(table.detect(obs, sigma), brute_force_map(&gains, obs, sigma));
    }
}
