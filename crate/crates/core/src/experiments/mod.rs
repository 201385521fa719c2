//! Scenario loading and the three evaluation studies: quantization loss,
//! detector error rate and the signaling-overhead cost trade-off.

pub mod output;
mod scenario;

pub use scenario::{
    load_scenario, parse_scenario, reference_scenario, Scenario, ScenarioError, Sweeps,
    REFERENCE_SCENARIO, SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, SMALL_SIGNAL_LIMIT};
use crate::detector::{self, LevelTable};
use crate::protocol::{monte_carlo, trial_rng, Execution, PeriodTrace};
use crate::signaling;
use crate::stats::{MeanEstimate, Proportion};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationRow {
    pub bits: u32,
    pub mean_omega: f64,
    pub mean_optimum: f64,
    /// `(mean_omega - mean_optimum) / mean_optimum`
    pub relative_gap: f64,
    pub gap_std_error: f64,
}

/// Cost of dispatching on quantized capacities with error-free detection,
/// against the dispatch on exact capacities.
///
/// Every word length sees the same capacity draws.
pub fn experiment_quantization(
    scenario: &Scenario,
    bits: &[u32],
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<QuantizationRow>, Error> {
    bits.iter()
        .map(|&q| {
            let protocol = scenario.protocol_with(q, scenario.protocol.slot_duration);
            let ctx = scenario.noiseless_context(&protocol)?;
            let report = monte_carlo(&ctx, trials, scenario.capacity, seed, execution)?;
            let optimum = report.stats.optimum_omega.mean;
            let gaps = MeanEstimate::from_samples(report.trials.iter().map(|t| t.omega - t.optimum_omega));
            Ok(QuantizationRow {
                bits: q,
                mean_omega: report.stats.omega.mean,
                mean_optimum: optimum,
                relative_gap: gaps.mean / optimum,
                gap_std_error: gaps.std_error / optimum,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub power_budget: f64,
    pub transmitters: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub errors: usize,
    pub decisions: usize,
    pub error_rate: f64,
    pub std_error: f64,
}

impl DetectionRow {
    pub fn proportion(&self) -> Proportion {
        Proportion { successes: self.errors, trials: self.decisions }
    }
}

/// Type group whose first `size` members transmit together, and its index.
fn transmitting_group(scenario: &Scenario, size: usize) -> Option<(usize, Vec<usize>)> {
    (0..scenario.config.num_types())
        .map(|g| (g, scenario.config.group(g)))
        .find(|(_, grp)| grp.len() >= size)
        .map(|(g, grp)| (g, grp[..size].to_vec()))
}

/// Per-slot error rate of the integer-sum detector.
///
/// For each group size, the first members of the lowest type large enough
/// transmit random bits at the budget-limited amplitude and every DER that
/// listens in that sub-phase detects. The same noise and bit streams are
/// reused across budgets.
pub fn experiment_detection(
    scenario: &Scenario,
    budgets: &[f64],
    group_sizes: &[usize],
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<DetectionRow>, Error> {
    let ctx = scenario.context(&scenario.protocol)?;
    let channel = ctx.channel();
    let sigma = scenario.noise(scenario.protocol.slot_duration).sigma();
    let guard = scenario
        .droop
        .reference_voltages
        .iter()
        .map(|x| SMALL_SIGNAL_LIMIT * x)
        .fold(f64::INFINITY, f64::min);

    let mut rows = Vec::new();
    for &size in group_sizes {
        let (g, transmitters) = transmitting_group(scenario, size)
            .ok_or_else(|| Error::Mismatch(format!("no type has {size} DERs")))?;
        let receivers: Vec<usize> =
            (0..scenario.config.num_ders()).filter(|&k| scenario.config.der_type()[k] >= g).collect();
        for &budget in budgets {
            let amplitude = channel.lambda_budget(&transmitters, budget).min(guard);
            let tables = receivers
                .iter()
                .map(|&k| {
                    let others: Vec<usize> = transmitters.iter().copied().filter(|&l| l != k).collect();
                    let gains: Vec<f64> = others.iter().map(|&l| amplitude * channel.gain(k, l)).collect();
                    LevelTable::from_gains(k, g, others, &gains)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let errors = count_errors(channel, &transmitters, &tables, amplitude, sigma, trials, seed, execution)?;
            let p = Proportion { successes: errors, trials: trials * receivers.len() };
            rows.push(DetectionRow {
                power_budget: budget,
                transmitters: size,
                amplitude,
                sigma,
                errors,
                decisions: p.trials,
                error_rate: p.rate(),
                std_error: p.std_error(),
            });
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn count_errors(
    channel: &ChannelModel,
    transmitters: &[usize],
    tables: &[LevelTable],
    amplitude: f64,
    sigma: f64,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<usize, Error> {
    use rand::Rng;
    let one_slot = |trial: u64| -> Result<usize, Error> {
        let mut rng = trial_rng(seed, trial);
        let mut deviations = vec![0.0; channel.num_ders()];
        let mut bits = vec![false; channel.num_ders()];
        for &l in transmitters {
            bits[l] = rng.random::<bool>();
            deviations[l] = signaling::modulate(bits[l], amplitude);
        }
        let obs = channel.observe_slot(sigma, &deviations, &mut rng)?;
        Ok(tables
            .iter()
            .filter(|table| {
                let k = table.receiver;
                let own = transmitters.contains(&k).then_some(deviations[k]);
                let cancelled = detector::cancel_self(obs[k], channel, k, own);
                let truth = table.others.iter().filter(|&&l| bits[l]).count();
                table.detect(cancelled, sigma) != truth
            })
            .count())
    };
    let ids = 0..trials as u64;
    let counts: Result<Vec<usize>, Error> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            ids.into_par_iter().map(one_slot).collect()
        }
        _ => ids.map(one_slot).collect(),
    };
    Ok(counts?.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub slot_duration: f64,
    pub bits: u32,
    pub sigma: f64,
    pub amplitude: f64,
    pub mean_cost: f64,
    pub ci95: f64,
    pub mean_omega: f64,
    pub mean_overhead: f64,
    pub error_rate: f64,
}

/// Mean period cost over the slot duration x word length grid.
pub fn experiment_cost_tradeoff(
    scenario: &Scenario,
    slot_durations: &[f64],
    bits: &[u32],
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<CostRow>, Error> {
    let mut rows = Vec::new();
    for &slot_duration in slot_durations {
        for &q in bits {
            let protocol = scenario.protocol_with(q, slot_duration);
            let ctx = scenario.context(&protocol)?;
            let report = monte_carlo(&ctx, trials, scenario.capacity, seed, execution)?;
            let overhead = MeanEstimate::from_samples(report.trials.iter().map(|t| t.overhead));
            rows.push(CostRow {
                slot_duration,
                bits: q,
                sigma: ctx.sigma(),
                amplitude: ctx.amplitude(),
                mean_cost: report.stats.period_cost.mean,
                ci95: report.stats.period_cost.ci95(),
                mean_omega: report.stats.omega.mean,
                mean_overhead: overhead.mean,
                error_rate: report.stats.error_rate,
            });
        }
    }
    Ok(rows)
}

/// Word length minimizing the mean cost of one slot-duration series, when
/// the minimum lies strictly inside the swept range.
pub fn interior_minimum(rows: &[CostRow], slot_duration: f64) -> Option<u32> {
    let series: Vec<&CostRow> = rows.iter().filter(|r| r.slot_duration == slot_duration).collect();
    let (pos, _) = series
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean_cost.total_cmp(&b.1.mean_cost))?;
    (pos > 0 && pos + 1 < series.len()).then(|| series[pos].bits)
}

/// One dispatch period of the scenario, with capacities drawn exactly as
/// trial 0 of a Monte Carlo run with the same seed.
pub fn run_reference_period(scenario: &Scenario, seed: u64) -> Result<PeriodTrace, Error> {
    let ctx = scenario.context(&scenario.protocol)?;
    let mut rng = trial_rng(seed, 0);
    let capacities = scenario.capacity.sample(scenario.config.num_ders(), &mut rng);
    let mut trace = ctx.simulate(&capacities, &mut rng)?;
    trace.seed = Some(seed);
    Ok(trace)
}
