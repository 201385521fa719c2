//! Small summary statistics used by the Monte Carlo drivers.

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let count = values.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, std_error: f64::NAN };
        }
        let mut sum = NeumaierSum::default();
        values.iter().for_each(|v| sum.add(*v));
        let mean = sum.value() / count as f64;
        if count == 1 {
            return Self { count, mean, std_error: 0.0 };
        }
        let mut squares = NeumaierSum::default();
        values.iter().for_each(|v| squares.add((v - mean).powi(2)));
        let variance = squares.value() / (count - 1) as f64;
        Self { count, mean, std_error: (variance / count as f64).sqrt() }
    }

    /// Half width of the normal-approximation 95% interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_error
    }
}

/// Binomial proportion with its normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Whether `self` is larger than `other` by more than `z` standard errors
    /// of the difference.
    pub fn exceeds(&self, other: &Proportion, z: f64) -> bool {
        let se = (self.std_error().powi(2) + other.std_error().powi(2)).sqrt();
        self.rate() - other.rate() > z * se
    }
}
