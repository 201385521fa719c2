//! Linearized power talk multiple access channel.
//!
//! Around an operating point, a small deviation of the reference voltages
//! `dx` moves the bus voltages by `H dx` and the DER output powers by
//! `Phi dx`. Both maps are extracted as central-difference Jacobians of the
//! nonlinear steady state, so they carry no model assumptions beyond the
//! power flow itself.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::grid::{self, MicrogridConfig, OperatingPoint, SolveError};

/// Largest allowed `|dx_u| / x_u`.
pub const SMALL_SIGNAL_LIMIT: f64 = 0.01;
/// Relative finite-difference step.
pub const JACOBIAN_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("operating point could not be perturbed: {0}")]
    Solve(#[from] SolveError),
    #[error("linearization matrix is singular at this operating point")]
    SingularJacobian,
    #[error("voltage gain of DER {der} at bus {bus} is {gain:e}; expected a positive value")]
    NonPositiveGain { bus: usize, der: usize, gain: f64 },
    #[error("deviation {deviation} V at DER {der} exceeds the small-signal limit")]
    AmplitudeTooLarge { der: usize, deviation: f64 },
    #[error("input has {got} entries, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("noise model invalid: {0}")]
    Noise(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// `H[n][u] = dv_n / dx_u`, N x U.
    voltage_gain: DMatrix<f64>,
    /// `Phi[u][l] = dp_u / dx_l`, U x U.
    power_sensitivity: DMatrix<f64>,
    /// Diagonal scaling that reproduces the Jacobian in the modified-admittance form.
    kappa: Vec<f64>,
    der_bus: Vec<usize>,
    operating_point: OperatingPoint,
}

pub fn linearize(config: &MicrogridConfig, op: &OperatingPoint) -> Result<ChannelModel, ChannelError> {
    let n = config.num_buses();
    let u_count = config.num_ders();

    // Implicit-function Jacobian; used for the invertibility check and kappa.
    let jac = grid::residual_jacobian(config, &op.droop, &op.bus_voltages);
    if jac.clone().lu().try_inverse().is_none() {
        return Err(ChannelError::SingularJacobian);
    }
    let psi = grid::build_admittance(config);
    let x = config.rated_voltage();
    let kappa = (0..n)
        .map(|b| {
            let droop_y: f64 = config.ders_on_bus(b).map(|u| op.droop.virtual_admittances[u]).sum();
            let ca = config.loads()[b].constant_admittance / (x * x);
            let unscaled = psi[(b, b)] + droop_y + ca;
            unscaled / -jac[(b, b)]
        })
        .collect();

    let mut voltage_gain = DMatrix::zeros(n, u_count);
    let mut power_sensitivity = DMatrix::zeros(u_count, u_count);
    let mut offsets = vec![0.0; u_count];
    for l in 0..u_count {
        let eps = JACOBIAN_STEP * op.droop.reference_voltages[l];
        offsets[l] = eps;
        let plus = grid::solve_steady_state_from(
            config,
            &op.droop.with_reference_offsets(&offsets),
            &op.bus_voltages,
        )?;
        offsets[l] = -eps;
        let minus = grid::solve_steady_state_from(
            config,
            &op.droop.with_reference_offsets(&offsets),
            &op.bus_voltages,
        )?;
        offsets[l] = 0.0;
        for b in 0..n {
            voltage_gain[(b, l)] = (plus.bus_voltages[b] - minus.bus_voltages[b]) / (2.0 * eps);
        }
        for u in 0..u_count {
            power_sensitivity[(u, l)] = (plus.der_powers[u] - minus.der_powers[u]) / (2.0 * eps);
        }
    }

    for b in 0..n {
        for u in 0..u_count {
            let gain = voltage_gain[(b, u)];
            if !(gain > 0.0) {
                return Err(ChannelError::NonPositiveGain { bus: b, der: u, gain });
            }
        }
    }

    Ok(ChannelModel {
        voltage_gain,
        power_sensitivity,
        kappa,
        der_bus: config.der_bus().to_vec(),
        operating_point: op.clone(),
    })
}

impl ChannelModel {
    pub fn num_ders(&self) -> usize {
        self.der_bus.len()
    }

    pub fn voltage_gain(&self) -> &DMatrix<f64> {
        &self.voltage_gain
    }

    pub fn power_sensitivity(&self) -> &DMatrix<f64> {
        &self.power_sensitivity
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.operating_point
    }

    pub fn der_bus(&self) -> &[usize] {
        &self.der_bus
    }

    /// Gain from DER `source`'s reference deviation to the voltage seen by DER `receiver`.
    pub fn gain(&self, receiver: usize, source: usize) -> f64 {
        self.voltage_gain[(self.der_bus[receiver], source)]
    }

    fn check_input(&self, dx: &[f64]) -> Result<(), ChannelError> {
        if dx.len() != self.num_ders() {
            return Err(ChannelError::Length { expected: self.num_ders(), got: dx.len() });
        }
        for (u, d) in dx.iter().enumerate() {
            let x = self.operating_point.droop.reference_voltages[u];
            if d.abs() > SMALL_SIGNAL_LIMIT * x {
                return Err(ChannelError::AmplitudeTooLarge { der: u, deviation: *d });
            }
        }
        Ok(())
    }

    /// Noiseless bus voltage deviations `H dx`.
    pub fn bus_deviation(&self, dx: &[f64]) -> Result<Vec<f64>, ChannelError> {
        self.check_input(dx)?;
        Ok((&self.voltage_gain * DVector::from_column_slice(dx)).as_slice().to_vec())
    }

    /// Slot-averaged observation at every DER.
    ///
    /// One Gaussian draw per DER, in DER order, regardless of who listens, so
    /// the noise stream position never depends on the transmitted data.
    pub fn observe_slot<R: Rng + ?Sized>(
        &self,
        sigma: f64,
        dx: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, ChannelError> {
        let dv = self.bus_deviation(dx)?;
        Ok(self
            .der_bus
            .iter()
            .map(|&bus| {
                let z: f64 = rng.sample(StandardNormal);
                dv[bus] + sigma * z
            })
            .collect())
    }

    /// Linearized output power deviation of DER `u`.
    pub fn power_deviation(&self, dx: &[f64], u: usize) -> Result<f64, ChannelError> {
        self.check_input(dx)?;
        Ok(self.power_sensitivity.row(u).iter().zip(dx).map(|(phi, d)| phi * d).sum())
    }

    /// Largest signaling amplitude that keeps the output power standard
    /// deviation of every DER within `budget` while the DERs in `transmitters`
    /// send independent equiprobable antipodal symbols.
    pub fn lambda_budget(&self, transmitters: &[usize], budget: f64) -> f64 {
        (0..self.num_ders())
            .map(|u| {
                let spread: f64 = transmitters
                    .iter()
                    .map(|&l| self.power_sensitivity[(u, l)].powi(2))
                    .sum();
                budget / spread.sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Front-end sampling noise, averaged over one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Per-sample noise variance, V^2.
    pub n0: f64,
    pub sampling_frequency: f64,
    pub slot_duration: f64,
}

impl NoiseModel {
    pub fn new(n0: f64, sampling_frequency: f64, slot_duration: f64) -> Result<Self, ChannelError> {
        let model = Self { n0, sampling_frequency, slot_duration };
        if !(n0 >= 0.0 && n0.is_finite()) {
            return Err(ChannelError::Noise(format!("noise variance {n0} must be non-negative")));
        }
        if !(sampling_frequency > 0.0 && slot_duration > 0.0) {
            return Err(ChannelError::Noise("sampling frequency and slot duration must be positive".into()));
        }
        if model.samples_per_slot() < 1 {
            return Err(ChannelError::Noise("a slot must contain at least one sample".into()));
        }
        Ok(model)
    }

    pub fn samples_per_slot(&self) -> u64 {
        (self.slot_duration * self.sampling_frequency).round() as u64
    }

    /// Standard deviation of the slot-averaged noise.
    pub fn sigma(&self) -> f64 {
        (self.n0 / (self.slot_duration * self.sampling_frequency)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DroopSetting, ZipLoad};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel(load: ZipLoad, y: Vec<f64>) -> ChannelModel {
        let cfg = MicrogridConfig::single_bus(400.0, load, vec![0; y.len()], vec![1.0]).unwrap();
        let op = grid::solve_steady_state(&cfg, &DroopSetting::uniform(400.0, y)).unwrap();
        linearize(&cfg, &op).unwrap()
    }

    #[test]
    fn lossless_follower() {
        let chan = channel(ZipLoad::default(), vec![1.0]);
        assert_relative_eq!(chan.voltage_gain()[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(chan.kappa()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_sources_and_resistive_load_split_thirds() {
        // d_ca = x^2 * 1 S
        let load = ZipLoad { constant_admittance: 160_000.0, ..ZipLoad::default() };
        let chan = channel(load, vec![1.0, 1.0]);
        for u in 0..2 {
            assert_relative_eq!(chan.voltage_gain()[(0, u)], 1.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn kappa_at_least_one_with_constant_power() {
        let chan = channel(ZipLoad::constant_power(5000.0), vec![0.2; 4]);
        assert!(chan.kappa()[0] >= 1.0);
    }

    #[test]
    fn noise_sigma_examples() {
        let noise = NoiseModel::new(0.01, 50_000.0, 0.1).unwrap();
        assert_relative_eq!(noise.sigma(), 1.414_213_562_373_095e-3, max_relative = 1e-12);
        assert_eq!(noise.samples_per_slot(), 5000);
        assert_eq!(NoiseModel::new(0.0, 50_000.0, 0.1).unwrap().sigma(), 0.0);
        let doubled = NoiseModel::new(0.01, 50_000.0, 0.2).unwrap();
        assert_relative_eq!(doubled.sigma().powi(2), noise.sigma().powi(2) / 2.0, max_relative = 1e-12);
        assert!(NoiseModel::new(0.01, 50_000.0, 1e-6).is_err());
    }

    #[test]
    fn antipodal_inputs_cancel() {
        let chan = channel(ZipLoad::default(), vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = chan.observe_slot(0.0, &[2.0, -2.0], &mut rng).unwrap();
        for o in obs {
            assert!(o.abs() < 1e-9);
        }
        let zero = chan.observe_slot(0.0, &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn guard_rejects_large_deviation() {
        let chan = channel(ZipLoad::default(), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = chan.observe_slot(0.0, &[4.5], &mut rng).unwrap_err();
        assert!(matches!(err, ChannelError::AmplitudeTooLarge { der: 0, .. }));
        assert!(chan.power_deviation(&[4.5], 0).is_err());
    }

    #[test]
    fn lambda_budget_single_term_and_scaling() {
        let chan = channel(ZipLoad::constant_power(5000.0), vec![0.2; 3]);
        let phi = chan.power_sensitivity();
        let lam = chan.lambda_budget(&[0], 10.0);
        let expected = (0..3).map(|u| 10.0 / phi[(u, 0)].abs()).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(lam, expected, max_relative = 1e-15);
        assert_relative_eq!(chan.lambda_budget(&[0], 20.0), 2.0 * lam, max_relative = 1e-15);
    }

    #[test]
    fn observation_mean_converges() {
        let chan = channel(ZipLoad::constant_power(5000.0), vec![0.2; 2]);
        let sigma = 0.05;
        let dx = [1.0, 0.5];
        let clean = chan.bus_deviation(&dx).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 100_000;
        let mut sum = 0.0;
        for _ in 0..trials {
            sum += chan.observe_slot(sigma, &dx, &mut rng).unwrap()[1];
        }
        let mean = sum / trials as f64;
        assert!((mean - clean).abs() <= 4.0 * sigma / (trials as f64).sqrt());
    }
}
