//! Integer-sum MAP detection of simultaneously transmitted bits.
//!
//! A receiver does not resolve who sent what. In every slot it decides how
//! many of the other transmitters of the active group sent a one, then
//! rebuilds the group's aggregate capacity from the per-slot sums.

use thiserror::Error;

use crate::channel::ChannelModel;

/// Largest number of co-transmitters a level table may enumerate.
pub const MAX_GROUP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("{0} simultaneous transmitters exceed the table cap of {MAX_GROUP}")]
    GroupTooLarge(usize),
}

/// Noiseless observation levels of one receiver in one sub-phase, grouped by
/// the number of ones among the other transmitters.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    pub receiver: usize,
    pub subphase: usize,
    /// Transmitters other than the receiver.
    pub others: Vec<usize>,
    /// `levels[theta]` holds one entry per bit pattern with `theta` ones.
    pub levels: Vec<Vec<f64>>,
    /// Prior probability of a single pattern (uniform i.i.d. bits).
    pub pattern_prior: f64,
}

impl LevelTable {
    pub fn build(
        chan: &ChannelModel,
        der_type: &[usize],
        subphase: usize,
        receiver: usize,
        amplitude: f64,
    ) -> Result<Self, DetectorError> {
        let others: Vec<usize> = (0..der_type.len())
            .filter(|&l| der_type[l] == subphase && l != receiver)
            .collect();
        let gains: Vec<f64> = others.iter().map(|&l| amplitude * chan.gain(receiver, l)).collect();
        Self::from_gains(receiver, subphase, others, &gains)
    }

    /// Table from explicit per-transmitter amplitudes `lambda * h`.
    pub fn from_gains(
        receiver: usize,
        subphase: usize,
        others: Vec<usize>,
        gains: &[f64],
    ) -> Result<Self, DetectorError> {
        let m = gains.len();
        if m > MAX_GROUP {
            return Err(DetectorError::GroupTooLarge(m));
        }
        let mut levels = vec![Vec::new(); m + 1];
        for pattern in 0u32..(1u32 << m) {
            let level: f64 = gains
                .iter()
                .enumerate()
                .map(|(j, a)| if pattern >> j & 1 == 1 { *a } else { -*a })
                .sum();
            levels[pattern.count_ones() as usize].push(level);
        }
        Ok(Self { receiver, subphase, others, levels, pattern_prior: 0.5f64.powi(m as i32) })
    }

    /// Number of hypotheses the detector weighs.
    pub fn hypotheses(&self) -> usize {
        self.levels.len()
    }

    pub fn patterns(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Unnormalized posterior weight of every hypothesis, scaled so the
    /// largest single pattern term is 1.
    pub fn posterior_scores(&self, observation: f64, sigma: f64) -> Vec<f64> {
        let exponent = |level: f64| -(observation - level).powi(2) / (2.0 * sigma * sigma);
        let peak = self
            .levels
            .iter()
            .flatten()
            .map(|&l| exponent(l))
            .fold(f64::NEG_INFINITY, f64::max);
        self.levels
            .iter()
            .map(|class| {
                class.iter().map(|&l| (exponent(l) - peak).exp()).sum::<f64>() * self.pattern_prior
            })
            .collect()
    }

    /// MAP estimate of the integer sum; ties go to the smaller sum.
    pub fn detect(&self, observation: f64, sigma: f64) -> usize {
        if sigma == 0.0 {
            return self.nearest(observation);
        }
        let scores = self.posterior_scores(observation, sigma);
        let mut best = 0;
        for (theta, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = theta;
            }
        }
        best
    }

    fn nearest(&self, observation: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (theta, class) in self.levels.iter().enumerate() {
            let d = class.iter().map(|l| (observation - l).abs()).fold(f64::INFINITY, f64::min);
            if d < best.1 {
                best = (theta, d);
            }
        }
        best.0
    }
}

/// Removes the receiver's own contribution from its observation.
pub fn cancel_self(observation: f64, chan: &ChannelModel, receiver: usize, own_deviation: Option<f64>) -> f64 {
    match own_deviation {
        Some(dx) => observation - chan.gain(receiver, receiver) * dx,
        None => observation,
    }
}

/// Aggregate capacity of the other transmitters from the detected per-slot
/// sums, each slot weighted `2^t`, plus the half-step offset of every word.
pub fn reconstruct_aggregate(sums: &[usize], step: f64, group_size: usize, receiver_in_group: bool) -> f64 {
    let others = group_size - usize::from(receiver_in_group);
    let weighted: f64 = sums
        .iter()
        .enumerate()
        .map(|(t, &theta)| theta as f64 * 2f64.powi(t as i32))
        .sum();
    (weighted + others as f64 / 2.0) * step
}
