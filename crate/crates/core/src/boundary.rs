//! The trusted/untrusted boundary: the five-call lifecycle the analysis side
//! uses to drive acquisition, and a parametric model of what running inside
//! a memory-limited enclave costs.

use std::fmt;
use std::sync::atomic::{AtomicU8, Ordering};

use serde::Deserialize;
use thiserror::Error;

use crate::rules::RULE_FOOTPRINT_BYTES;

const MIB: usize = 1024 * 1024;

/// Protected memory usable for data.
pub const DEFAULT_EPC_BYTES: usize = 96 * MIB;
/// Engine code, rings and pool metadata that always live inside.
pub const BASE_FOOTPRINT_BYTES: usize = 24 * MIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LifecycleState {
    Uninitialized = 0,
    Initialized,
    DeviceStarted,
    Running,
    Stopped,
    Shutdown,
}

impl LifecycleState {
    fn from_u8(v: u8) -> Self {
        use LifecycleState::*;
        [Uninitialized, Initialized, DeviceStarted, Running, Stopped, Shutdown][v as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifecycleEvent {
    Initialize,
    StartDevice,
    Acquire,
    Stop,
    Shutdown,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 5] = [
        LifecycleEvent::Initialize,
        LifecycleEvent::StartDevice,
        LifecycleEvent::Acquire,
        LifecycleEvent::Stop,
        LifecycleEvent::Shutdown,
    ];

    /// The only state this event may be applied in, and where it leads.
    fn edge(self) -> (LifecycleState, LifecycleState) {
        use LifecycleState::*;
        match self {
            LifecycleEvent::Initialize => (Uninitialized, Initialized),
            LifecycleEvent::StartDevice => (Initialized, DeviceStarted),
            LifecycleEvent::Acquire => (DeviceStarted, Running),
            LifecycleEvent::Stop => (Running, Stopped),
            LifecycleEvent::Shutdown => (Stopped, LifecycleState::Shutdown),
        }
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LifecycleEvent::Initialize => "initialize",
            LifecycleEvent::StartDevice => "start_device",
            LifecycleEvent::Acquire => "acquire",
            LifecycleEvent::Stop => "stop",
            LifecycleEvent::Shutdown => "shutdown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{event} is not allowed in state {state:?}")]
pub struct OrderError {
    pub state: LifecycleState,
    pub event: LifecycleEvent,
}

/// Strictly linear lifecycle; shared between the orchestrating thread and
/// acquisition threads, which check for `Running`.
#[derive(Debug)]
pub struct Lifecycle {
    state: AtomicU8,
}

impl Default for Lifecycle {
    fn default() -> Self {
        Lifecycle::new()
    }
}

impl Lifecycle {
    pub fn new() -> Self {
        Lifecycle { state: AtomicU8::new(LifecycleState::Uninitialized as u8) }
    }

    pub fn state(&self) -> LifecycleState {
        LifecycleState::from_u8(self.state.load(Ordering::Acquire))
    }

    pub fn is_running(&self) -> bool {
        self.state() == LifecycleState::Running
    }

    pub fn transition(&self, event: LifecycleEvent) -> Result<LifecycleState, OrderError> {
        let (from, to) = event.edge();
        self.state
            .compare_exchange(from as u8, to as u8, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| to)
            .map_err(|cur| OrderError { state: LifecycleState::from_u8(cur), event })
    }
}

/// Enclave cost parameters. Disabled, it costs nothing anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub enabled: bool,
    pub epc_bytes: usize,
    /// Extra latency of each lifecycle call. Zero: the packet path never
    /// leaves the enclave, only the five lifecycle calls do.
    pub crossing_cost_us: f64,
    /// Slowdown per EPC-size worth of overflow.
    pub paging_penalty: f64,
    /// Code and data paged in before analysis can run at full speed.
    pub warmup_bytes: usize,
    pub warmup_rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            enabled: false,
            epc_bytes: DEFAULT_EPC_BYTES,
            crossing_cost_us: 0.0,
            paging_penalty: 2.0,
            // 48 MiB at 8 MiB/s: six seconds of startup paging.
            warmup_bytes: 48 * MIB,
            warmup_rate: 8.0 * MIB as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostModelError {
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("epc size must be positive")]
    ZeroEpc,
}

impl CostModel {
    pub fn enabled() -> Self {
        CostModel { enabled: true, ..CostModel::default() }
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        for (name, v) in [
            ("crossing_cost_us", self.crossing_cost_us),
            ("paging_penalty", self.paging_penalty),
            ("warmup_rate", self.warmup_rate),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CostModelError::Negative(name));
            }
        }
        if self.epc_bytes == 0 {
            return Err(CostModelError::ZeroEpc);
        }
        Ok(())
    }

    /// Multiplier (at least 1) on per-packet analysis time.
    pub fn paging_factor(&self, trusted_footprint_bytes: usize) -> f64 {
        if !self.enabled || trusted_footprint_bytes <= self.epc_bytes {
            return 1.0;
        }
        let over = (trusted_footprint_bytes - self.epc_bytes) as f64;
        1.0 + self.paging_penalty * over / self.epc_bytes as f64
    }

    /// How long startup paging stalls analysis.
    pub fn warmup_us(&self) -> u64 {
        if !self.enabled || self.warmup_bytes == 0 {
            return 0;
        }
        if self.warmup_rate == 0.0 {
            return u64::MAX;
        }
        (self.warmup_bytes as f64 / self.warmup_rate * 1e6).round() as u64
    }

    pub fn crossing_us(&self) -> f64 {
        if self.enabled {
            self.crossing_cost_us
        } else {
            0.0
        }
    }

    /// Overlays the keys present in a config file.
    pub fn apply(&mut self, cfg: &CostModelConfig) {
        if let Some(e) = cfg.enabled {
            self.enabled = e;
        }
        if let Some(m) = cfg.epc_mib {
            self.epc_bytes = (m * MIB as f64) as usize;
        }
        if let Some(p) = cfg.paging_penalty {
            self.paging_penalty = p;
        }
        if let Some(w) = cfg.warmup_seconds {
            self.warmup_bytes = (w * self.warmup_rate) as usize;
        }
    }
}

/// `[cost_model]` table of the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelConfig {
    pub enabled: Option<bool>,
    pub epc_mib: Option<f64>,
    pub paging_penalty: Option<f64>,
    pub warmup_seconds: Option<f64>,
}

/// Memory that must stay inside the enclave: flow state, rules and a fixed
/// base.
pub fn trusted_footprint(flow_bytes: usize, n_rules: usize) -> usize {
    flow_bytes + n_rules * RULE_FOOTPRINT_BYTES + BASE_FOOTPRINT_BYTES
}
