//! Power talk: information exchange between droop-controlled DERs of a DC
//! microgrid by modulating their reference voltages, applied to running the
//! merit-order economic dispatch without a separate communication network.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: topology, admittance matrix and droop steady state.
//! - [`channel`]: linearized multiple access channel and slot noise.
//! - [`signaling`]: quantizer, bit mapping and slot schedule.
//! - [`detector`]: integer-sum MAP detection and aggregate reconstruction.
//! - [`dispatch`]: merit-order policy and period cost.
//! - [`protocol`]: a full dispatch period and the Monte Carlo driver.
//! - [`experiments`]: scenario files, parameter sweeps and CSV output.

pub mod channel;
pub mod detector;
pub mod dispatch;
pub mod experiments;
pub mod grid;
pub mod protocol;
pub mod signaling;
pub mod stats;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] grid::ConfigError),
    #[error(transparent)]
    Solve(#[from] grid::SolveError),
    #[error(transparent)]
    Channel(#[from] channel::ChannelError),
    #[error(transparent)]
    Signaling(#[from] signaling::SignalingError),
    #[error(transparent)]
    Detector(#[from] detector::DetectorError),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Scenario(#[from] experiments::ScenarioError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Mismatch(_) => "validation",
            Error::Scenario(e) => e.category(),
            Error::Solve(_) | Error::Channel(_) => "numerical",
            Error::Signaling(_) | Error::Detector(_) => "protocol",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }
}
