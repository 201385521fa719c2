//! One dispatch period end to end: signaling phase, detection, dispatch and
//! cost settlement.

mod monte_carlo;

pub use monte_carlo::{
    monte_carlo, trial_rng, CapacityDistribution, Execution, MonteCarloReport, MonteCarloStats,
    TrialSummary,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, ChannelModel, NoiseModel, SMALL_SIGNAL_LIMIT};
use crate::detector::{self, LevelTable};
use crate::dispatch::{self, DispatchOutcome};
use crate::grid::{self, DroopSetting, MicrogridConfig};
use crate::signaling::{self, ProtocolConfig, SlotPlan};
use crate::Error;

/// Prices charged for unserved and excess power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub deficit: f64,
    pub surplus: f64,
}

/// Everything about a dispatch period that does not depend on the capacities:
/// operating point, channel, signaling amplitude and detector tables.
#[derive(Debug, Clone)]
pub struct PeriodContext {
    config: MicrogridConfig,
    protocol: ProtocolConfig,
    penalties: Penalties,
    channel: ChannelModel,
    sigma: f64,
    amplitude: f64,
    plan: SlotPlan,
    groups: Vec<Vec<usize>>,
    /// `tables[k][g]`, present when DER `k` listens in sub-phase `g`.
    tables: Vec<Vec<Option<LevelTable>>>,
    operating_cost: f64,
    events: Vec<String>,
}

impl PeriodContext {
    pub fn new(
        config: &MicrogridConfig,
        protocol: &ProtocolConfig,
        noise: &NoiseModel,
        droop: &DroopSetting,
        penalties: Penalties,
    ) -> Result<Self, Error> {
        Self::with_sigma(config, protocol, noise.sigma(), droop, penalties)
    }

    /// Context with an explicit per-slot noise standard deviation.
    pub fn with_sigma(
        config: &MicrogridConfig,
        protocol: &ProtocolConfig,
        sigma: f64,
        droop: &DroopSetting,
        penalties: Penalties,
    ) -> Result<Self, Error> {
        protocol.validate()?;
        if protocol.num_types != config.num_types() {
            return Err(Error::Mismatch(format!(
                "protocol has {} types, microgrid has {}",
                protocol.num_types,
                config.num_types()
            )));
        }
        let op = grid::solve_steady_state(config, droop)?;
        let channel = channel::linearize(config, &op)?;

        let groups: Vec<Vec<usize>> = (0..config.num_types()).map(|g| config.group(g)).collect();
        let mut events = Vec::new();
        let mut amplitude = groups
            .iter()
            .filter(|grp| !grp.is_empty())
            .map(|grp| channel.lambda_budget(grp, protocol.power_budget))
            .fold(f64::INFINITY, f64::min);
        let guard = droop
            .reference_voltages
            .iter()
            .map(|x| SMALL_SIGNAL_LIMIT * x)
            .fold(f64::INFINITY, f64::min);
        if amplitude > guard {
            events.push(format!(
                "signaling amplitude {amplitude:.6} V clamped to small-signal limit {guard:.6} V"
            ));
            amplitude = guard;
        }
        events.push(format!("signaling amplitude {amplitude:.9} V, slot noise sigma {sigma:.9} V"));

        let der_type = config.der_type();
        let tables = (0..config.num_ders())
            .map(|k| {
                (0..config.num_types())
                    .map(|g| {
                        (der_type[k] >= g)
                            .then(|| LevelTable::build(&channel, der_type, g, k, amplitude))
                            .transpose()
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        let operating_cost = dispatch::base_cost(&op.der_powers, der_type, config.costs());
        let plan = signaling::schedule(protocol.bits, der_type, protocol.num_types);
        Ok(Self {
            config: config.clone(),
            protocol: protocol.clone(),
            penalties,
            channel,
            sigma,
            amplitude,
            plan,
            groups,
            tables,
            operating_cost,
            events,
        })
    }

    pub fn config(&self) -> &MicrogridConfig {
        &self.config
    }

    pub fn protocol(&self) -> &ProtocolConfig {
        &self.protocol
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn plan(&self) -> &SlotPlan {
        &self.plan
    }

    pub fn penalties(&self) -> Penalties {
        self.penalties
    }

    /// Generation cost while every DER sits at its operating-point output.
    pub fn operating_cost(&self) -> f64 {
        self.operating_cost
    }

    pub fn table(&self, receiver: usize, subphase: usize) -> Option<&LevelTable> {
        self.tables[receiver][subphase].as_ref()
    }

    /// Simulates one dispatch period for the given capacities.
    pub fn simulate<R: Rng + ?Sized>(&self, capacities: &[f64], rng: &mut R) -> Result<PeriodTrace, Error> {
        let cfg = &self.config;
        let u_count = cfg.num_ders();
        if capacities.len() != u_count {
            return Err(Error::Mismatch(format!(
                "{} capacities for {u_count} DERs",
                capacities.len()
            )));
        }
        let der_type = cfg.der_type();
        let q = self.protocol.bits;
        let step = self.protocol.quant_step();
        let words = capacities
            .iter()
            .map(|&w| signaling::quantize(w, step, q))
            .collect::<Result<Vec<_>, _>>()?;
        let bits: Vec<Vec<bool>> = words.iter().map(|w| signaling::bits_of_index(w.index, q)).collect();

        // beliefs[k][g]: what DER k holds for the aggregate capacity of type g
        let mut beliefs: Vec<Vec<Option<f64>>> = vec![vec![None; cfg.num_types()]; u_count];
        let mut sums: Vec<Vec<usize>> = vec![Vec::with_capacity(q as usize); u_count];
        let mut slots = Vec::with_capacity(self.plan.slots.len());

        for slot in &self.plan.slots {
            let g = slot.subphase;
            let t = slot.offset as usize;
            let mut deviations = vec![0.0; u_count];
            for &u in &slot.transmitters {
                deviations[u] = signaling::modulate(bits[u][t], self.amplitude);
            }
            let observations = self.channel.observe_slot(self.sigma, &deviations, rng)?;
            let detections = slot
                .receivers
                .iter()
                .map(|&k| {
                    let own = (der_type[k] == g).then_some(deviations[k]);
                    let cancelled = detector::cancel_self(observations[k], &self.channel, k, own);
                    let table = self.tables[k][g].as_ref().expect("receiver table");
                    let theta_hat = table.detect(cancelled, self.sigma);
                    let theta_true = table.others.iter().filter(|&&l| bits[l][t]).count();
                    sums[k].push(theta_hat);
                    Detection { receiver: k, cancelled, theta_hat, theta_true }
                })
                .collect();
            slots.push(SlotRecord {
                index: slot.index,
                subphase: g,
                offset: slot.offset,
                deviations,
                observations,
                detections,
            });

            if t + 1 == q as usize {
                for &k in &slot.receivers {
                    let in_group = der_type[k] == g;
                    let rest = detector::reconstruct_aggregate(&sums[k], step, self.groups[g].len(), in_group);
                    let own = if in_group { words[k].value } else { 0.0 };
                    beliefs[k][g] = Some(rest + own);
                    sums[k].clear();
                }
            }
        }

        let demand = cfg.total_demand();
        let ders: Vec<DerRecord> = (0..u_count)
            .map(|k| {
                let g = der_type[k];
                let believed: Vec<f64> = beliefs[k][..=g]
                    .iter()
                    .map(|b| b.expect("aggregate collected by end of own sub-phase"))
                    .collect();
                let policy = dispatch::distributed_policy(capacities[k], g, demand, &believed);
                DerRecord {
                    der: k,
                    der_type: g,
                    capacity: capacities[k],
                    word_index: words[k].index,
                    quantized: words[k].value,
                    believed_aggregates: believed,
                    policy,
                    operating_power: self.channel.operating_point().der_powers[k],
                }
            })
            .collect();

        let policy: Vec<f64> = ders.iter().map(|d| d.policy).collect();
        let outcome = self.evaluate(policy);
        let overhead = dispatch::communication_overhead(&outcome, &self.protocol, self.operating_cost);
        let period_cost = outcome.omega + overhead;
        let optimum = self.exact_dispatch(capacities);

        Ok(PeriodTrace {
            seed: None,
            amplitude: self.amplitude,
            sigma: self.sigma,
            demand,
            operating_cost: self.operating_cost,
            slots,
            ders,
            outcome,
            overhead,
            period_cost,
            optimum,
            events: self.events.clone(),
        })
    }

    fn evaluate(&self, policy: Vec<f64>) -> DispatchOutcome {
        DispatchOutcome::evaluate(
            policy,
            self.config.der_type(),
            self.config.costs(),
            self.config.total_demand(),
            self.penalties.deficit,
            self.penalties.surplus,
        )
    }

    /// Dispatch every DER would reach with exact, unquantized aggregates.
    pub fn exact_dispatch(&self, capacities: &[f64]) -> DispatchOutcome {
        let der_type = self.config.der_type();
        let aggregates: Vec<f64> = self
            .groups
            .iter()
            .map(|grp| grp.iter().map(|&u| capacities[u]).sum())
            .collect();
        let demand = self.config.total_demand();
        let policy = (0..capacities.len())
            .map(|u| dispatch::distributed_policy(capacities[u], der_type[u], demand, &aggregates))
            .collect();
        self.evaluate(policy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub receiver: usize,
    /// Observation after self-interference cancellation.
    pub cancelled: f64,
    pub theta_hat: usize,
    pub theta_true: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub index: usize,
    pub subphase: usize,
    pub offset: u32,
    /// Reference voltage deviation of every DER.
    pub deviations: Vec<f64>,
    /// Noisy slot average at every DER, listening or not.
    pub observations: Vec<f64>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerRecord {
    pub der: usize,
    pub der_type: usize,
    pub capacity: f64,
    pub word_index: u64,
    pub quantized: f64,
    /// Believed aggregate capacity of types `0..=der_type`.
    pub believed_aggregates: Vec<f64>,
    pub policy: f64,
    pub operating_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTrace {
    pub seed: Option<u64>,
    pub amplitude: f64,
    pub sigma: f64,
    pub demand: f64,
    pub operating_cost: f64,
    pub slots: Vec<SlotRecord>,
    pub ders: Vec<DerRecord>,
    pub outcome: DispatchOutcome,
    /// `period_cost - omega`.
    pub overhead: f64,
    pub period_cost: f64,
    /// Reference dispatch with exact aggregates.
    pub optimum: DispatchOutcome,
    pub events: Vec<String>,
}

impl PeriodTrace {
    pub fn detection_errors(&self) -> usize {
        self.detections().filter(|d| d.theta_hat != d.theta_true).count()
    }

    pub fn detection_count(&self) -> usize {
        self.detections().count()
    }

    fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.slots.iter().flat_map(|s| s.detections.iter())
    }
}

/// Builds the period context and simulates one period from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_period(
    config: &MicrogridConfig,
    protocol: &ProtocolConfig,
    noise: &NoiseModel,
    droop: &DroopSetting,
    penalties: Penalties,
    capacities: &[f64],
    seed: u64,
) -> Result<PeriodTrace, Error> {
    let ctx = PeriodContext::new(config, protocol, noise, droop, penalties)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = ctx.simulate(capacities, &mut rng)?;
    trace.seed = Some(seed);
    Ok(trace)
}
