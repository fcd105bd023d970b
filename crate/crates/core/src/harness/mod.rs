//! Workload generation, capture files, experiment driving and reporting.

pub mod config;
pub mod experiment;
pub mod pcap;
pub mod report;
pub mod workload;

use thiserror::Error;

use crate::acquire::AcquireError;
use crate::boundary::OrderError;
use crate::clock::ClockError;
use crate::ring::RingError;

pub use config::FileConfig;
pub use experiment::{run_experiment, AlertOutput, ClockMode, EngineConfig, SimCosts};
pub use pcap::{pcap_read, pcap_write, PcapError, PcapPacket, PcapReader, PcapWriter};
pub use report::{ConservationError, IntervalStats, Report, Totals, INTERVAL_SECS};
pub use workload::{gen_synth, AttackInjection, WorkloadKind, WorkloadSpec, HEARTBLEED_SID};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("pcap: {0}")]
    Pcap(#[from] PcapError),
    #[error("lifecycle: {0}")]
    Lifecycle(#[from] OrderError),
    #[error("acquisition: {0}")]
    Acquire(#[from] AcquireError),
    #[error("ring: {0}")]
    Ring(#[from] RingError),
    #[error("clock: {0}")]
    Clock(#[from] ClockError),
    #[error("accounting: {0}")]
    Conservation(#[from] ConservationError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules: {0}")]
    Rules(String),
    #[error("{0} thread panicked")]
    Thread(&'static str),
}
