//! The engine's only time source.
//!
//! [`CounterClock`] is a counter bumped in a tight loop by a dedicated thread;
//! readers divide it by a fixed ticks-per-microsecond coefficient. It measures
//! relative time only and can be slowed down by the scheduler, but it never
//! goes backwards. [`SimClock`] is a deterministic stand-in driven by the
//! harness simulator.

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

/// Ticks per microsecond of the reference machine.
pub const DEFAULT_CPUFREQ: f64 = 3785.0;

/// Increments between voluntary yields of the counter thread.
const YIELD_EVERY: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("clock thread is already running")]
    AlreadyRunning,
    #[error("clock was never started")]
    NotStarted,
    #[error("cpufreq must be a positive finite number")]
    BadFrequency,
}

/// `floor(ticks / cpufreq)`.
pub fn ticks_to_us(ticks: u64, cpufreq: f64) -> u64 {
    (ticks as f64 / cpufreq) as u64
}

pub struct CounterClock {
    counter: AtomicU64,
    cpufreq: f64,
    running: AtomicBool,
    started: AtomicBool,
    handle: Mutex<Option<JoinHandle<()>>>,
}

impl CounterClock {
    /// A stopped clock. Reads fail with `NotStarted` until [`CounterClock::start`].
    pub fn new(cpufreq: f64) -> Result<Arc<Self>, ClockError> {
        if !(cpufreq.is_finite() && cpufreq > 0.0) {
            return Err(ClockError::BadFrequency);
        }
        Ok(Arc::new(CounterClock {
            counter: AtomicU64::new(0),
            cpufreq,
            running: AtomicBool::new(false),
            started: AtomicBool::new(false),
            handle: Mutex::new(None),
        }))
    }

    /// Spawns the counter thread. Restarting after [`CounterClock::stop`]
    /// continues from the retained value.
    pub fn start(self: &Arc<Self>) -> Result<(), ClockError> {
        if self.running.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(ClockError::AlreadyRunning);
        }
        self.started.store(true, Ordering::Release);
        let me = Arc::clone(self);
        let handle =
            thread::Builder::new().name("trusted-clock".into()).spawn(move || me.run()).expect("spawn clock thread");
        *self.handle.lock().unwrap() = Some(handle);
        Ok(())
    }

    fn run(&self) {
        // Single writer: plain load/store is enough, readers only need to see
        // some recent value and each reader sees a non-decreasing sequence.
        let mut value = self.counter.load(Ordering::Relaxed);
        while self.running.load(Ordering::Relaxed) {
            for _ in 0..YIELD_EVERY {
                value += 1;
                self.counter.store(value, Ordering::Relaxed);
            }
            thread::yield_now();
        }
    }

    pub fn stop(&self) {
        self.running.store(false, Ordering::Release);
        if let Some(h) = self.handle.lock().unwrap().take() {
            let _ = h.join();
        }
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::Acquire)
    }

    pub fn cpufreq(&self) -> f64 {
        self.cpufreq
    }

    pub fn ticks(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn gettime_us(&self) -> Result<u64, ClockError> {
        if !self.started.load(Ordering::Acquire) {
            return Err(ClockError::NotStarted);
        }
        Ok(ticks_to_us(self.ticks(), self.cpufreq))
    }

    #[cfg(test)]
    fn set_ticks(&self, ticks: u64) {
        self.started.store(true, Ordering::Release);
        self.counter.store(ticks, Ordering::Relaxed);
    }
}

impl Drop for CounterClock {
    fn drop(&mut self) {
        self.running.store(false, Ordering::Release);
    }
}

impl fmt::Debug for CounterClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CounterClock")
            .field("ticks", &self.ticks())
            .field("cpufreq", &self.cpufreq)
            .field("running", &self.is_running())
            .finish()
    }
}

/// Starts a counter clock at the given frequency coefficient.
pub fn start_clock(cpufreq: f64) -> Result<Arc<CounterClock>, ClockError> {
    let clock = CounterClock::new(cpufreq)?;
    clock.start()?;
    Ok(clock)
}

/// Deterministic clock advanced explicitly, with nanosecond resolution.
#[derive(Debug, Default)]
pub struct SimClock {
    ns: AtomicU64,
}

impl SimClock {
    pub fn new() -> Arc<Self> {
        Arc::new(SimClock::default())
    }

    pub fn now_ns(&self) -> u64 {
        self.ns.load(Ordering::Relaxed)
    }

    /// Moves the clock to `ns` unless it is already past it.
    pub fn set_ns(&self, ns: u64) {
        self.ns.fetch_max(ns, Ordering::Relaxed);
    }

    pub fn advance_ns(&self, delta: u64) {
        self.ns.fetch_add(delta, Ordering::Relaxed);
    }
}

/// Time source handed to engine components.
#[derive(Debug, Clone)]
pub enum Clock {
    Counter(Arc<CounterClock>),
    Simulated(Arc<SimClock>),
}

impl Clock {
    pub fn simulated() -> (Clock, Arc<SimClock>) {
        let sim = SimClock::new();
        (Clock::Simulated(Arc::clone(&sim)), sim)
    }

    /// Microseconds since the clock's epoch (engine start).
    pub fn now_us(&self) -> u64 {
        match self {
            Clock::Counter(c) => ticks_to_us(c.ticks(), c.cpufreq()),
            Clock::Simulated(s) => s.now_ns() / 1_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn conversion_matches_reference_formula() {
        let c = CounterClock::new(DEFAULT_CPUFREQ).unwrap();
        assert_eq!(c.gettime_us(), Err(ClockError::NotStarted));
        c.set_ticks(3785);
        assert_eq!(c.gettime_us(), Ok(1));
        c.set_ticks(0);
        assert_eq!(c.gettime_us(), Ok(0));
        c.set_ticks(3784);
        assert_eq!(c.gettime_us(), Ok(0));
        assert_eq!(ticks_to_us(3785 * 1_000_000, 3785.0), 1_000_000);
    }

    #[test]
    fn rejects_bad_frequency() {
        assert_eq!(CounterClock::new(0.0).unwrap_err(), ClockError::BadFrequency);
        assert_eq!(CounterClock::new(f64::NAN).unwrap_err(), ClockError::BadFrequency);
    }

    #[test]
    fn runs_stops_and_refuses_double_start() {
        let c = start_clock(DEFAULT_CPUFREQ).unwrap();
        assert_eq!(c.start(), Err(ClockError::AlreadyRunning));
        let a = c.ticks();
        thread::sleep(Duration::from_millis(10));
        let b = c.ticks();
        assert!(b > a, "counter did not advance over 10ms");
        c.stop();
        let s1 = c.ticks();
        let s2 = c.ticks();
        assert_eq!(s1, s2);
        assert!(s1 >= b);
        assert_eq!(c.gettime_us().unwrap(), ticks_to_us(s1, DEFAULT_CPUFREQ));
    }

    #[test]
    fn sim_clock_never_goes_back() {
        let (clock, sim) = Clock::simulated();
        sim.set_ns(5_000);
        sim.set_ns(1_000);
        assert_eq!(clock.now_us(), 5);
        sim.advance_ns(2_500);
        assert_eq!(clock.now_us(), 7);
    }
}
