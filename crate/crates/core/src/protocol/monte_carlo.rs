use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PeriodContext;
use crate::stats::MeanEstimate;
use crate::Error;

/// How trials are spread over threads. `Parallel` degrades to sequential
/// when the crate is built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapacityDistribution {
    /// Independent uniform draws per DER.
    Uniform { low: f64, high: f64 },
}

impl CapacityDistribution {
    pub fn sample(&self, ders: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            CapacityDistribution::Uniform { low, high } => {
                let dist = Uniform::new_inclusive(low, high).expect("valid capacity range");
                (0..ders).map(|_| dist.sample(rng)).collect()
            }
        }
    }
}

/// Random stream of trial `trial`: one ChaCha stream per trial under a common key.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: u64,
    pub period_cost: f64,
    pub omega: f64,
    pub optimum_omega: f64,
    pub overhead: f64,
    pub deficit: f64,
    pub surplus: f64,
    pub detection_errors: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloStats {
    pub trials: usize,
    pub period_cost: MeanEstimate,
    pub omega: MeanEstimate,
    pub optimum_omega: MeanEstimate,
    /// Fraction of per-slot integer-sum decisions that were wrong.
    pub error_rate: f64,
    pub deficit_frequency: f64,
    pub surplus_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub trials: Vec<TrialSummary>,
    pub stats: MonteCarloStats,
}

fn run_trial(
    ctx: &PeriodContext,
    distribution: &CapacityDistribution,
    seed: u64,
    trial: u64,
) -> Result<TrialSummary, Error> {
    let mut rng = trial_rng(seed, trial);
    let capacities = distribution.sample(ctx.config().num_ders(), &mut rng);
    let trace = ctx.simulate(&capacities, &mut rng)?;
    Ok(TrialSummary {
        trial,
        period_cost: trace.period_cost,
        omega: trace.outcome.omega,
        optimum_omega: trace.optimum.omega,
        overhead: trace.overhead,
        deficit: trace.outcome.imbalance.deficit,
        surplus: trace.outcome.imbalance.surplus,
        detection_errors: trace.detection_errors(),
        detections: trace.detection_count(),
    })
}

/// Independent dispatch periods with fresh capacities and noise per trial.
///
/// Results are collected in trial order before aggregation, so the report
/// is identical for both execution modes.
pub fn monte_carlo(
    ctx: &PeriodContext,
    trials: usize,
    distribution: CapacityDistribution,
    seed: u64,
    execution: Execution,
) -> Result<MonteCarloReport, Error> {
    let ids = 0..trials as u64;
    let results: Result<Vec<_>, Error> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ids.into_par_iter().map(|t| run_trial(ctx, &distribution, seed, t)).collect()
        }
        _ => ids.map(|t| run_trial(ctx, &distribution, seed, t)).collect(),
    };
    let trials = results?;
    let stats = summarize(&trials);
    Ok(MonteCarloReport { trials, stats })
}

fn summarize(trials: &[TrialSummary]) -> MonteCarloStats {
    let n = trials.len();
    let (errors, detections) = trials
        .iter()
        .fold((0usize, 0usize), |(e, d), t| (e + t.detection_errors, d + t.detections));
    let fraction = |f: fn(&TrialSummary) -> bool| {
        if n == 0 {
            0.0
        } else {
            trials.iter().filter(|t| f(t)).count() as f64 / n as f64
        }
    };
    MonteCarloStats {
        trials: n,
        period_cost: MeanEstimate::from_samples(trials.iter().map(|t| t.period_cost)),
        omega: MeanEstimate::from_samples(trials.iter().map(|t| t.omega)),
        optimum_omega: MeanEstimate::from_samples(trials.iter().map(|t| t.optimum_omega)),
        error_rate: if detections == 0 { 0.0 } else { errors as f64 / detections as f64 },
        deficit_frequency: fraction(|t| t.deficit > 0.0),
        surplus_frequency: fraction(|t| t.surplus > 0.0),
    }
}
