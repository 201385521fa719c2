//! Capacity quantization, bit mapping and the sub-phase slot schedule.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalingError {
    #[error("capacity {value} W outside [0, {max}] W")]
    OutOfRange { value: f64, max: f64 },
    #[error("protocol invalid: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Bits per capacity word.
    pub bits: u32,
    /// Dispatch period, seconds.
    pub period: f64,
    /// Power talk slot duration, seconds.
    pub slot_duration: f64,
    /// Number of DER types (sub-phases).
    pub num_types: usize,
    /// Largest single-DER capacity, watts.
    pub max_capacity: f64,
    /// Standard deviation budget for output power deviations, watts.
    pub power_budget: f64,
}

/// Largest word length; keeps `2^Q` exact in both `u64` and `f64`.
pub const MAX_BITS: u32 = 40;

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), SignalingError> {
        let err = |m: &str| Err(SignalingError::Protocol(m.to_string()));
        if self.bits == 0 || self.bits > MAX_BITS {
            return err("bits per word must be in 1..=40");
        }
        if self.num_types == 0 {
            return err("at least one DER type is required");
        }
        if !(self.period > 0.0 && self.slot_duration > 0.0) {
            return err("period and slot duration must be positive");
        }
        if !(self.max_capacity > 0.0 && self.max_capacity.is_finite()) {
            return err("maximum capacity must be positive");
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return err("power deviation budget must be positive");
        }
        if self.communication_time() > self.period {
            return Err(SignalingError::Protocol(format!(
                "communication phase {} s exceeds dispatch period {} s",
                self.communication_time(),
                self.period
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn quant_step(&self) -> f64 {
        self.max_capacity / self.levels() as f64
    }

    pub fn num_slots(&self) -> usize {
        self.num_types * self.bits as usize
    }

    /// Duration of the communication phase, `G Q T_S`.
    pub fn communication_time(&self) -> f64 {
        self.num_slots() as f64 * self.slot_duration
    }

    /// Duration left for the dispatch phase.
    pub fn dispatch_time(&self) -> f64 {
        self.period - self.communication_time()
    }

    /// Fraction of the period spent signaling.
    pub fn overhead_fraction(&self) -> f64 {
        self.slot_duration / self.period * self.bits as f64 * self.num_types as f64
    }
}

/// Quantized capacity of one DER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityWord {
    pub index: u64,
    pub value: f64,
}

/// Mid-rise quantizer with `2^bits` cells of width `step`; `w = 2^bits * step`
/// falls in the top cell.
pub fn quantize(w: f64, step: f64, bits: u32) -> Result<CapacityWord, SignalingError> {
    let levels = 1u64 << bits;
    let max = step * levels as f64;
    if !(0.0..=max).contains(&w) {
        return Err(SignalingError::OutOfRange { value: w, max });
    }
    let index = ((w / step).floor() as u64).min(levels - 1);
    Ok(CapacityWord { index, value: (index as f64 + 0.5) * step })
}

/// Little-endian expansion: entry `t` carries weight `2^t`.
pub fn bits_of_index(index: u64, bits: u32) -> Vec<bool> {
    (0..bits).map(|t| (index >> t) & 1 == 1).collect()
}

pub fn index_of_bits(bits: &[bool]) -> u64 {
    bits.iter().enumerate().map(|(t, &b)| u64::from(b) << t).sum()
}

/// Antipodal mapping of a bit onto a reference voltage deviation.
pub fn modulate(bit: bool, amplitude: f64) -> f64 {
    if bit {
        amplitude
    } else {
        -amplitude
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    /// Global slot index `g Q + t`.
    pub index: usize,
    pub subphase: usize,
    /// Bit position within the word.
    pub offset: u32,
    pub transmitters: Vec<usize>,
    pub receivers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotPlan {
    pub slots: Vec<Slot>,
}

/// Type `g` transmits in sub-phase `g`; types `g..G` listen.
pub fn schedule(bits: u32, der_type: &[usize], num_types: usize) -> SlotPlan {
    let mut slots = Vec::with_capacity(num_types * bits as usize);
    for g in 0..num_types {
        let transmitters: Vec<usize> =
            (0..der_type.len()).filter(|&u| der_type[u] == g).collect();
        let receivers: Vec<usize> = (0..der_type.len()).filter(|&u| der_type[u] >= g).collect();
        for t in 0..bits {
            slots.push(Slot {
                index: g * bits as usize + t as usize,
                subphase: g,
                offset: t,
                transmitters: transmitters.clone(),
                receivers: receivers.clone(),
            });
        }
    }
    SlotPlan { slots }
}

impl SlotPlan {
    pub fn subphase(&self, g: usize) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(move |s| s.subphase == g)
    }
}
