//! TOML scenario files.
//!
//! A scenario bundles the microgrid, the protocol, the noise front end, the
//! capacity model and the experiment sweeps. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::channel::NoiseModel;
use crate::grid::{DroopSetting, MicrogridConfig, ZipLoad};
use crate::protocol::{CapacityDistribution, Penalties, PeriodContext};
use crate::signaling::ProtocolConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// The evaluation scenario shipped with the crate.
pub const REFERENCE_SCENARIO: &str = include_str!("../../scenarios/reference.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

impl ScenarioError {
    pub fn category(&self) -> &'static str {
        match self {
            ScenarioError::Io { .. } => "io",
            ScenarioError::Parse { .. } => "parse",
            ScenarioError::Validation(_) => "validation",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    grid: GridSection,
    ders: Vec<DerEntry>,
    costs: CostSection,
    protocol: ProtocolSection,
    noise: NoiseSection,
    capacity: CapacitySection,
    experiments: ExperimentSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    rated_voltage: f64,
    buses: usize,
    #[serde(default)]
    lines: Vec<LineEntry>,
    #[serde(default)]
    loads: Vec<LoadEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineEntry {
    from: usize,
    to: usize,
    admittance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadEntry {
    bus: usize,
    #[serde(default)]
    constant_admittance: f64,
    #[serde(default)]
    constant_current: f64,
    #[serde(default)]
    constant_power: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerEntry {
    bus: usize,
    #[serde(rename = "type")]
    der_type: usize,
    virtual_admittance: f64,
    reference_voltage: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    incremental: Vec<f64>,
    deficit: f64,
    surplus: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSection {
    bits: u32,
    period: f64,
    slot_duration: f64,
    max_capacity: f64,
    power_budget: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    /// Standard deviation of a single voltage sample, V.
    sample_std: f64,
    sampling_frequency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "distribution", rename_all = "snake_case")]
enum CapacitySection {
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    seed: u64,
    trials: usize,
    detection_trials: usize,
    bits_sweep: Vec<u32>,
    cost_bits_sweep: Vec<u32>,
    slot_duration_sweep: Vec<f64>,
    power_budget_sweep: Vec<f64>,
    group_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweeps {
    /// Word lengths for the quantization study.
    pub bits: Vec<u32>,
    /// Word lengths for the cost trade-off study.
    pub cost_bits: Vec<u32>,
    pub slot_durations: Vec<f64>,
    pub power_budgets: Vec<f64>,
    pub group_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: MicrogridConfig,
    pub droop: DroopSetting,
    pub protocol: ProtocolConfig,
    /// Per-sample noise variance, V^2.
    pub n0: f64,
    pub sampling_frequency: f64,
    pub penalties: Penalties,
    pub capacity: CapacityDistribution,
    pub sweeps: Sweeps,
    pub seed: u64,
    pub trials: usize,
    pub detection_trials: usize,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn reference_scenario() -> Scenario {
    parse_scenario(REFERENCE_SCENARIO).expect("bundled scenario is valid")
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, column)
            })
            .unwrap_or((0, 0));
        ScenarioError::Parse { line, column, message: e.message().to_string() }
    })?;

    if file.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }

    let n = file.grid.buses;
    if n == 0 {
        return Err(invalid("grid.buses must be at least 1"));
    }
    let mut lines = vec![vec![0.0; n]; n];
    for l in &file.grid.lines {
        if l.from >= n || l.to >= n || l.from == l.to {
            return Err(invalid(format!("line {}-{} does not join two distinct buses", l.from, l.to)));
        }
        if lines[l.from][l.to] != 0.0 {
            return Err(invalid(format!("line {}-{} listed twice", l.from, l.to)));
        }
        lines[l.from][l.to] = l.admittance;
        lines[l.to][l.from] = l.admittance;
    }
    let mut loads = vec![ZipLoad::default(); n];
    let mut seen = vec![false; n];
    for l in &file.grid.loads {
        if l.bus >= n {
            return Err(invalid(format!("load on unknown bus {}", l.bus)));
        }
        if std::mem::replace(&mut seen[l.bus], true) {
            return Err(invalid(format!("bus {} has more than one load entry", l.bus)));
        }
        loads[l.bus] = ZipLoad {
            constant_admittance: l.constant_admittance,
            constant_current: l.constant_current,
            constant_power: l.constant_power,
        };
    }

    let config = MicrogridConfig::new(
        file.grid.rated_voltage,
        lines,
        loads,
        file.ders.iter().map(|d| d.bus).collect(),
        file.ders.iter().map(|d| d.der_type).collect(),
        file.costs.incremental.clone(),
    )
    .map_err(|e| invalid(e.to_string()))?;

    let droop = DroopSetting {
        reference_voltages: file
            .ders
            .iter()
            .map(|d| d.reference_voltage.unwrap_or(file.grid.rated_voltage))
            .collect(),
        virtual_admittances: file.ders.iter().map(|d| d.virtual_admittance).collect(),
    };
    if let Some(u) = droop.virtual_admittances.iter().position(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(invalid(format!("DER {u}: virtual admittance must be positive")));
    }
    if let Some(u) = droop.reference_voltages.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(invalid(format!("DER {u}: reference voltage must be positive")));
    }

    let penalties = Penalties { deficit: file.costs.deficit, surplus: file.costs.surplus };
    if !(penalties.deficit > 0.0 && penalties.surplus > 0.0) {
        return Err(invalid("deficit and surplus prices must be positive"));
    }

    let p = &file.protocol;
    let protocol = ProtocolConfig {
        bits: p.bits,
        period: p.period,
        slot_duration: p.slot_duration,
        num_types: config.num_types(),
        max_capacity: p.max_capacity,
        power_budget: p.power_budget,
    };
    protocol.validate().map_err(|e| invalid(e.to_string()))?;

    let n0 = file.noise.sample_std.powi(2);
    NoiseModel::new(n0, file.noise.sampling_frequency, protocol.slot_duration)
        .map_err(|e| invalid(e.to_string()))?;

    let capacity = match file.capacity {
        CapacitySection::Uniform { low, high } => {
            if !(0.0 <= low && low <= high && high <= protocol.max_capacity) {
                return Err(invalid("capacity range must satisfy 0 <= low <= high <= max_capacity"));
            }
            CapacityDistribution::Uniform { low, high }
        }
    };

    let e = &file.experiments;
    if e.trials == 0 || e.detection_trials == 0 {
        return Err(invalid("trial counts must be positive"));
    }
    for &bits in e.bits_sweep.iter().chain(&e.cost_bits_sweep) {
        for &slot_duration in e.slot_duration_sweep.iter().chain([&protocol.slot_duration]) {
            let candidate = ProtocolConfig { bits, slot_duration, ..protocol.clone() };
            candidate
                .validate()
                .map_err(|err| invalid(format!("sweep point Q={bits}, T_S={slot_duration}: {err}")))?;
            NoiseModel::new(n0, file.noise.sampling_frequency, slot_duration)
                .map_err(|err| invalid(err.to_string()))?;
        }
    }
    if e.power_budget_sweep.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(invalid("power budgets must be positive"));
    }
    let largest_group = (0..config.num_types()).map(|g| config.group(g).len()).max().unwrap_or(0);
    if let Some(&size) = e.group_sizes.iter().find(|&&s| s == 0 || s > largest_group) {
        return Err(invalid(format!(
            "group size {size} not available; the largest type has {largest_group} DERs"
        )));
    }

    Ok(Scenario {
        name: file.name,
        config,
        droop,
        protocol,
        n0,
        sampling_frequency: file.noise.sampling_frequency,
        penalties,
        capacity,
        sweeps: Sweeps {
            bits: e.bits_sweep.clone(),
            cost_bits: e.cost_bits_sweep.clone(),
            slot_durations: e.slot_duration_sweep.clone(),
            power_budgets: e.power_budget_sweep.clone(),
            group_sizes: e.group_sizes.clone(),
        },
        seed: e.seed,
        trials: e.trials,
        detection_trials: e.detection_trials,
    })
}

impl Scenario {
    pub fn noise(&self, slot_duration: f64) -> NoiseModel {
        NoiseModel::new(self.n0, self.sampling_frequency, slot_duration).expect("validated noise model")
    }

    /// Scenario protocol with a different word length and slot duration.
    pub fn protocol_with(&self, bits: u32, slot_duration: f64) -> ProtocolConfig {
        ProtocolConfig { bits, slot_duration, ..self.protocol.clone() }
    }

    pub fn context(&self, protocol: &ProtocolConfig) -> Result<PeriodContext, crate::Error> {
        PeriodContext::new(
            &self.config,
            protocol,
            &self.noise(protocol.slot_duration),
            &self.droop,
            self.penalties,
        )
    }

    /// Context with detection forced error free (no noise).
    pub fn noiseless_context(&self, protocol: &ProtocolConfig) -> Result<PeriodContext, crate::Error> {
        PeriodContext::with_sigma(&self.config, protocol, 0.0, &self.droop, self.penalties)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_matches_evaluation_setup() {
        let s = reference_scenario();
        assert_eq!(s.config.num_ders(), 10);
        assert_eq!(s.config.num_types(), 4);
        assert_eq!(s.config.num_buses(), 1);
        assert_eq!(s.config.der_type(), &[0, 0, 0, 1, 1, 2, 2, 2, 3, 3]);
        let per_der: Vec<f64> = (0..10).map(|u| s.config.der_cost(u)).collect();
        assert_eq!(per_der, vec![5.0, 5.0, 5.0, 7.5, 7.5, 10.0, 10.0, 10.0, 50.0, 50.0]);
        assert_eq!(s.config.total_demand(), 5000.0);
        assert_eq!(s.protocol.period, 300.0);
        assert_eq!(s.protocol.max_capacity, 2000.0);
        assert_eq!(s.penalties, Penalties { deficit: 100.0, surplus: 100.0 });
        assert_eq!(s.sampling_frequency, 50_000.0);
        assert!((s.n0 - 0.01).abs() < 1e-15);
        assert_eq!(s.capacity, CapacityDistribution::Uniform { low: 0.0, high: 2000.0 });
        assert_eq!(s.sweeps.slot_durations, vec![0.01, 0.05, 0.15, 0.2]);
    }

    fn mutated(from: &str, to: &str) -> Result<Scenario, ScenarioError> {
        assert!(REFERENCE_SCENARIO.contains(from), "{from}");
        parse_scenario(&REFERENCE_SCENARIO.replacen(from, to, 1))
    }

    #[test]
    fn unsorted_costs_rejected() {
        let err = mutated("incremental = [5.0, 7.5, 10.0, 50.0]", "incremental = [5.0, 10.0, 7.5, 50.0]")
            .unwrap_err();
        assert_eq!(err.category(), "validation");
        assert!(err.to_string().contains("non-decreasing"), "{err}");
    }

    #[test]
    fn overlong_schedule_rejected() {
        let err = mutated("slot_duration = 0.1", "slot_duration = 8.0").unwrap_err();
        assert_eq!(err.category(), "validation");
        assert!(err.to_string().contains("exceeds dispatch period"), "{err}");
    }

    #[test]
    fn unknown_field_reports_position() {
        let err = mutated("rated_voltage = 400.0", "rated_voltage = 400.0\nfrequency = 50").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert!(line > 1),
            other => panic!("unexpected {other}"),
        }
    }
}
