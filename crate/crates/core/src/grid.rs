//! DC microgrid topology and droop-controlled steady state.
//!
//! Every DER is a voltage source converter obeying the droop law
//! `v_n = x_u - i_u / y_u`, and every bus carries an aggregate ZIP load
//! (constant admittance, constant current and constant power components,
//! all rated at the system voltage). The steady state solves the per-bus
//! current balance with a Gauss-Seidel sweep over the closed-form single
//! bus root, refined by Newton-Raphson on the full residual.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Per-bus residual tolerance in amperes.
pub const KCL_TOLERANCE: f64 = 1e-9;
/// Iteration cap shared by the Gauss-Seidel and Newton stages.
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("microgrid needs at least one bus and one DER")]
    Empty,
    #[error("rated voltage must be positive, got {0}")]
    RatedVoltage(f64),
    #[error("line admittance matrix must be {n}x{n}")]
    AdmittanceShape { n: usize },
    #[error("line admittance between buses {0} and {1} is not symmetric")]
    Asymmetric(usize, usize),
    #[error("line admittance between buses {0} and {1} is negative or not finite")]
    NegativeAdmittance(usize, usize),
    #[error("bus {0} has a self-admittance entry; the diagonal must be zero")]
    SelfLoop(usize),
    #[error("expected {expected} load entries, got {got}")]
    LoadCount { expected: usize, got: usize },
    #[error("load at bus {0} has a negative or non-finite component")]
    NegativeLoad(usize),
    #[error("DER {der} sits on bus {bus}, which does not exist")]
    DerBus { der: usize, bus: usize },
    #[error("DER {der} has type {ty}, but only {types} cost entries exist")]
    DerType { der: usize, ty: usize, types: usize },
    #[error("DER bus and type lists differ in length")]
    DerCount,
    #[error("incremental costs must be finite, non-negative and non-decreasing")]
    CostOrder,
    #[error("bus {0} is not connected to any DER")]
    IsolatedBus(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("droop setting has {got} entries, expected {expected}")]
    DroopLength { expected: usize, got: usize },
    #[error("virtual admittance of DER {0} must be positive")]
    VirtualAdmittance(usize),
    #[error("no steady state: {0}")]
    NoSolution(String),
    #[error("power flow did not converge, residual {residual:e} A after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

/// Rated demands of the aggregate load at one bus, in watts at the rated voltage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZipLoad {
    pub constant_admittance: f64,
    pub constant_current: f64,
    pub constant_power: f64,
}

impl ZipLoad {
    pub fn constant_power(watts: f64) -> Self {
        Self { constant_power: watts, ..Self::default() }
    }

    pub fn total(&self) -> f64 {
        self.constant_admittance + self.constant_current + self.constant_power
    }

    /// Power actually drawn at bus voltage `v`.
    pub fn consumed(&self, v: f64, rated: f64) -> f64 {
        v * v * self.constant_admittance / (rated * rated)
            + v * self.constant_current / rated
            + self.constant_power
    }
}

/// Static description of the microgrid.
///
/// The bus assignment and type matrices are stored as one index per DER,
/// which makes the "exactly one 1 per column" invariant structural.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridConfig {
    rated_voltage: f64,
    lines: Vec<Vec<f64>>,
    loads: Vec<ZipLoad>,
    der_bus: Vec<usize>,
    der_type: Vec<usize>,
    costs: Vec<f64>,
}

impl MicrogridConfig {
    pub fn new(
        rated_voltage: f64,
        lines: Vec<Vec<f64>>,
        loads: Vec<ZipLoad>,
        der_bus: Vec<usize>,
        der_type: Vec<usize>,
        costs: Vec<f64>,
    ) -> Result<Self, ConfigError> {
        let n = lines.len();
        if n == 0 || der_bus.is_empty() || costs.is_empty() {
            return Err(ConfigError::Empty);
        }
        if !(rated_voltage > 0.0 && rated_voltage.is_finite()) {
            return Err(ConfigError::RatedVoltage(rated_voltage));
        }
        if lines.iter().any(|row| row.len() != n) {
            return Err(ConfigError::AdmittanceShape { n });
        }
        for i in 0..n {
            if lines[i][i] != 0.0 {
                return Err(ConfigError::SelfLoop(i));
            }
            for j in 0..n {
                let y = lines[i][j];
                if !(y >= 0.0 && y.is_finite()) {
                    return Err(ConfigError::NegativeAdmittance(i, j));
                }
                if y != lines[j][i] {
                    return Err(ConfigError::Asymmetric(i, j));
                }
            }
        }
        if loads.len() != n {
            return Err(ConfigError::LoadCount { expected: n, got: loads.len() });
        }
        for (i, load) in loads.iter().enumerate() {
            let parts = [load.constant_admittance, load.constant_current, load.constant_power];
            if parts.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(ConfigError::NegativeLoad(i));
            }
        }
        if der_bus.len() != der_type.len() {
            return Err(ConfigError::DerCount);
        }
        for (u, (&bus, &ty)) in der_bus.iter().zip(&der_type).enumerate() {
            if bus >= n {
                return Err(ConfigError::DerBus { der: u, bus });
            }
            if ty >= costs.len() {
                return Err(ConfigError::DerType { der: u, ty, types: costs.len() });
            }
        }
        if costs.iter().any(|c| !(*c >= 0.0 && c.is_finite()))
            || costs.windows(2).any(|w| w[0] > w[1])
        {
            return Err(ConfigError::CostOrder);
        }

        // Every connected component must host at least one DER.
        let mut component = vec![usize::MAX; n];
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            component[start] = start;
            while let Some(b) = stack.pop() {
                for m in 0..n {
                    if lines[b][m] > 0.0 && component[m] == usize::MAX {
                        component[m] = start;
                        stack.push(m);
                    }
                }
            }
        }
        for bus in 0..n {
            if !der_bus.iter().any(|&b| component[b] == component[bus]) {
                return Err(ConfigError::IsolatedBus(bus));
            }
        }

        Ok(Self { rated_voltage, lines, loads, der_bus, der_type, costs })
    }

    /// All DERs and loads on one bus.
    pub fn single_bus(
        rated_voltage: f64,
        load: ZipLoad,
        der_type: Vec<usize>,
        costs: Vec<f64>,
    ) -> Result<Self, ConfigError> {
        let der_bus = vec![0; der_type.len()];
        Self::new(rated_voltage, vec![vec![0.0]], vec![load], der_bus, der_type, costs)
    }

    pub fn num_buses(&self) -> usize {
        self.lines.len()
    }

    pub fn num_ders(&self) -> usize {
        self.der_bus.len()
    }

    pub fn num_types(&self) -> usize {
        self.costs.len()
    }

    pub fn rated_voltage(&self) -> f64 {
        self.rated_voltage
    }

    pub fn line_admittance(&self, n: usize, m: usize) -> f64 {
        self.lines[n][m]
    }

    pub fn loads(&self) -> &[ZipLoad] {
        &self.loads
    }

    pub fn der_bus(&self) -> &[usize] {
        &self.der_bus
    }

    pub fn der_type(&self) -> &[usize] {
        &self.der_type
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Incremental cost of DER `u`.
    pub fn der_cost(&self, u: usize) -> f64 {
        self.costs[self.der_type[u]]
    }

    /// Total rated demand of all loads.
    pub fn total_demand(&self) -> f64 {
        self.loads.iter().map(ZipLoad::total).sum()
    }

    /// DERs of type `g`, in index order.
    pub fn group(&self, g: usize) -> Vec<usize> {
        (0..self.num_ders()).filter(|&u| self.der_type[u] == g).collect()
    }

    pub fn ders_on_bus(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_ders()).filter(move |&u| self.der_bus[u] == n)
    }

    /// The N x U bus assignment matrix.
    pub fn bus_assignment(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_buses(), self.num_ders(), |n, u| {
            f64::from(u8::from(self.der_bus[u] == n))
        })
    }

    /// The G x U type indicator matrix.
    pub fn type_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_types(), self.num_ders(), |g, u| {
            f64::from(u8::from(self.der_type[u] == g))
        })
    }
}

/// Bus admittance matrix: off-diagonal `-y_nm`, diagonal the row sum of line admittances.
pub fn build_admittance(config: &MicrogridConfig) -> DMatrix<f64> {
    let n = config.num_buses();
    let mut psi = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            let y = config.lines[i][j];
            if i != j {
                psi[(i, j)] = -y;
                diag += y;
            }
        }
        psi[(i, i)] = diag;
    }
    psi
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroopSetting {
    pub reference_voltages: Vec<f64>,
    pub virtual_admittances: Vec<f64>,
}

impl DroopSetting {
    /// Every DER at the same reference voltage.
    pub fn uniform(reference: f64, virtual_admittances: Vec<f64>) -> Self {
        Self {
            reference_voltages: vec![reference; virtual_admittances.len()],
            virtual_admittances,
        }
    }

    pub fn with_reference_offsets(&self, offsets: &[f64]) -> Self {
        let reference_voltages = self
            .reference_voltages
            .iter()
            .zip(offsets)
            .map(|(x, dx)| x + dx)
            .collect();
        Self { reference_voltages, virtual_admittances: self.virtual_admittances.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub droop: DroopSetting,
    pub bus_voltages: Vec<f64>,
    pub der_currents: Vec<f64>,
    pub der_powers: Vec<f64>,
}

/// Current and power injected by a DER under the droop law.
pub fn der_output(
    reference: f64,
    virtual_admittance: f64,
    bus_voltage: f64,
) -> (f64, f64) {
    let current = (reference - bus_voltage) * virtual_admittance;
    (current, bus_voltage * current)
}

impl OperatingPoint {
    pub fn der_output(&self, config: &MicrogridConfig, u: usize) -> (f64, f64) {
        der_output(
            self.droop.reference_voltages[u],
            self.droop.virtual_admittances[u],
            self.bus_voltages[config.der_bus[u]],
        )
    }
}

/// Per-bus coefficients of the current balance that do not depend on voltages.
struct BusTerms {
    /// `sum_u x_u y_u`
    source: f64,
    /// `sum_u y_u + sum_m y_nm + d_ca / x^2`
    conductance: f64,
    /// `d_cc / x`
    current: f64,
    /// `d_cp`
    power: f64,
}

fn bus_terms(config: &MicrogridConfig, droop: &DroopSetting) -> Vec<BusTerms> {
    let x = config.rated_voltage;
    (0..config.num_buses())
        .map(|n| {
            let (mut source, mut droop_y) = (0.0, 0.0);
            for u in config.ders_on_bus(n) {
                source += droop.reference_voltages[u] * droop.virtual_admittances[u];
                droop_y += droop.virtual_admittances[u];
            }
            let line_y: f64 = config.lines[n].iter().sum();
            let load = &config.loads[n];
            BusTerms {
                source,
                conductance: droop_y + line_y + load.constant_admittance / (x * x),
                current: load.constant_current / x,
                power: load.constant_power,
            }
        })
        .collect()
}

/// Current balance residual at every bus: injected minus withdrawn, in amperes.
pub fn kcl_residual(config: &MicrogridConfig, droop: &DroopSetting, v: &[f64]) -> Vec<f64> {
    let x = config.rated_voltage;
    (0..config.num_buses())
        .map(|n| {
            let injected: f64 = config
                .ders_on_bus(n)
                .map(|u| {
                    (droop.reference_voltages[u] - v[n]) * droop.virtual_admittances[u]
                })
                .sum();
            let lines: f64 = (0..config.num_buses())
                .map(|m| (v[n] - v[m]) * config.lines[n][m])
                .sum();
            let load = &config.loads[n];
            let withdrawn = lines
                + v[n] * load.constant_admittance / (x * x)
                + load.constant_current / x
                + load.constant_power / v[n];
            injected - withdrawn
        })
        .collect()
}

/// High-voltage root of the quadratic current balance at one bus, given the
/// neighbour voltages.
fn bus_root(terms: &BusTerms, neighbour_current: f64) -> Option<f64> {
    let b = terms.source + neighbour_current - terms.current;
    let disc = b * b - 4.0 * terms.power * terms.conductance;
    if disc < 0.0 || terms.conductance <= 0.0 {
        return None;
    }
    let v = (b + disc.sqrt()) / (2.0 * terms.conductance);
    (v > 0.0).then_some(v)
}

pub fn solve_steady_state(
    config: &MicrogridConfig,
    droop: &DroopSetting,
) -> Result<OperatingPoint, SolveError> {
    let start = vec![config.rated_voltage; config.num_buses()];
    solve_steady_state_from(config, droop, &start)
}

/// Same as [`solve_steady_state`] but warm-started from `initial` bus voltages.
pub fn solve_steady_state_from(
    config: &MicrogridConfig,
    droop: &DroopSetting,
    initial: &[f64],
) -> Result<OperatingPoint, SolveError> {
    let u_count = config.num_ders();
    for (len, expected) in [
        (droop.reference_voltages.len(), u_count),
        (droop.virtual_admittances.len(), u_count),
    ] {
        if len != expected {
            return Err(SolveError::DroopLength { expected, got: len });
        }
    }
    if let Some(u) = droop.virtual_admittances.iter().position(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(SolveError::VirtualAdmittance(u));
    }

    let n = config.num_buses();
    let terms = bus_terms(config, droop);
    let mut v = initial.to_vec();

    // Gauss-Seidel over the closed-form bus root.
    let scale = config.rated_voltage;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut change: f64 = 0.0;
        for bus in 0..n {
            let neighbour: f64 = (0..n).map(|m| config.lines[bus][m] * v[m]).sum();
            let next = bus_root(&terms[bus], neighbour).ok_or_else(|| {
                SolveError::NoSolution(format!(
                    "negative discriminant at bus {bus}: constant-power demand exceeds deliverable power"
                ))
            })?;
            change = change.max((next - v[bus]).abs());
            v[bus] = next;
        }
        if change <= 1e-12 * scale {
            break;
        }
    }

    // Newton refinement on the full residual.
    let mut residual = kcl_residual(config, droop, &v);
    let mut worst = max_abs(&residual);
    let mut newton_steps = 0;
    loop {
        if !worst.is_finite() {
            return Err(SolveError::NoSolution("residual diverged".into()));
        }
        let step = newton_step(config, &terms, &v, &residual)?;
        let step_size = max_abs(step.as_slice());
        for (vi, dv) in v.iter_mut().zip(step.iter()) {
            *vi += dv;
        }
        if v.iter().any(|vi| *vi <= 0.0 || !vi.is_finite()) {
            return Err(SolveError::NoSolution("voltage collapsed to a non-physical value".into()));
        }
        residual = kcl_residual(config, droop, &v);
        worst = max_abs(&residual);
        newton_steps += 1;
        iterations += 1;
        if worst <= KCL_TOLERANCE && step_size <= 1e-13 * scale {
            break;
        }
        if newton_steps >= MAX_ITERATIONS {
            if worst <= KCL_TOLERANCE {
                break;
            }
            return Err(SolveError::NotConverged { residual: worst, iterations });
        }
    }

    let (der_currents, der_powers) = (0..u_count)
        .map(|u| {
            der_output(
                droop.reference_voltages[u],
                droop.virtual_admittances[u],
                v[config.der_bus[u]],
            )
        })
        .unzip();
    Ok(OperatingPoint { droop: droop.clone(), bus_voltages: v, der_currents, der_powers })
}

/// Jacobian of the residual with respect to the bus voltages.
pub(crate) fn residual_jacobian(
    config: &MicrogridConfig,
    droop: &DroopSetting,
    v: &[f64],
) -> DMatrix<f64> {
    jacobian_from_terms(config, &bus_terms(config, droop), v)
}

fn jacobian_from_terms(config: &MicrogridConfig, terms: &[BusTerms], v: &[f64]) -> DMatrix<f64> {
    let n = config.num_buses();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -terms[i].conductance + terms[i].power / (v[i] * v[i])
        } else {
            config.lines[i][j]
        }
    })
}

fn newton_step(
    config: &MicrogridConfig,
    terms: &[BusTerms],
    v: &[f64],
    residual: &[f64],
) -> Result<DVector<f64>, SolveError> {
    let jac = jacobian_from_terms(config, terms, v);
    let rhs = -DVector::from_column_slice(residual);
    jac.lu()
        .solve(&rhs)
        .ok_or_else(|| SolveError::NoSolution("singular power-flow Jacobian".into()))
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, r| acc.max(r.abs()))
}
