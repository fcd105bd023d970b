//! Experiment runner: lifecycle, one acquisition side, N analysis workers,
//! stop, drain and report.
//!
//! Two drivers share the engine code. The simulated driver is a
//! single-threaded discrete-event schedule on the simulated clock: frames
//! arrive at line rate, each worker is busy for a modelled time per packet,
//! and identical inputs give identical reports. The threaded driver runs real
//! acquisition and worker threads against the counter clock.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::report::{interval_count, percent, IntervalStats, Report, Totals, INTERVAL_SECS};
use super::workload::{WorkloadKind, WorkloadSpec};
use super::HarnessError;
use crate::acquire::{
    AcquireError, Acquirer, CountingSink, Dataplane, DispatchConfig, PacketSource, DEFAULT_BURST_SIZE,
};
use crate::boundary::{trusted_footprint, CostModel, Lifecycle, LifecycleEvent};
use crate::clock::{start_clock, Clock, DEFAULT_CPUFREQ};
use crate::detect::{Alert, AlertSink, Analyzer, NullSink, Outcome, WorkerConfig};
use crate::flow::FlowConfig;
use crate::packet::PacketDescriptor;
use crate::ring::DEFAULT_RING_CAPACITY;
use crate::rules::CompiledRuleSet;

/// Preamble, start delimiter and inter-frame gap, in bytes.
const WIRE_OVERHEAD: usize = 20;
const NS_PER_S: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Simulated,
    Real,
}

#[derive(Clone, Default)]
pub enum AlertOutput {
    #[default]
    None,
    Memory(Arc<Mutex<Vec<Alert>>>),
    Sink(Arc<Mutex<dyn AlertSink>>),
}

impl AlertOutput {
    fn sink(&self) -> Box<dyn AlertSink> {
        match self {
            AlertOutput::None => Box::new(NullSink),
            AlertOutput::Memory(v) => Box::new(v.clone()),
            AlertOutput::Sink(s) => Box::new(s.clone()),
        }
    }

    fn flush(&self) {
        if let AlertOutput::Sink(s) = self {
            s.lock().expect("alert sink poisoned").flush();
        }
    }
}

impl std::fmt::Debug for AlertOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlertOutput::None => "None",
            AlertOutput::Memory(_) => "Memory",
            AlertOutput::Sink(_) => "Sink",
        })
    }
}

/// Modelled analysis time per packet on the simulated clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCosts {
    pub base_ns: f64,
    pub per_payload_byte_ns: f64,
    pub per_candidate_ns: f64,
    pub per_alert_ns: f64,
    /// Fetch-and-allow with no analysis.
    pub useless_ns: f64,
}

impl Default for SimCosts {
    fn default() -> Self {
        SimCosts {
            base_ns: 300.0,
            per_payload_byte_ns: 0.25,
            per_candidate_ns: 150.0,
            per_alert_ns: 200.0,
            useless_ns: 50.0,
        }
    }
}

impl SimCosts {
    fn packet_ns(&self, useless: bool, o: &Outcome) -> f64 {
        if useless {
            return self.useless_ns;
        }
        self.base_ns
            + self.per_payload_byte_ns * o.payload_len as f64
            + self.per_candidate_ns * o.candidates as f64
            + self.per_alert_ns * o.alerts as f64
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Analysis workers, one RX ring each.
    pub threads: usize,
    pub acquire_threads: usize,
    pub rules: Arc<CompiledRuleSet>,
    pub inline: bool,
    pub useless: bool,
    pub alerts: AlertOutput,
    pub cost: CostModel,
    pub clock: ClockMode,
    /// Arrival rate of the simulated link.
    pub line_rate_bps: f64,
    pub ring_capacity: usize,
    pub burst_size: usize,
    pub flow: FlowConfig,
    pub cpufreq: f64,
    pub sim: SimCosts,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            threads: 1,
            acquire_threads: 1,
            rules: Arc::new(CompiledRuleSet::empty()),
            inline: false,
            useless: false,
            alerts: AlertOutput::None,
            cost: CostModel::default(),
            clock: ClockMode::Simulated,
            line_rate_bps: 10e9,
            ring_capacity: DEFAULT_RING_CAPACITY,
            burst_size: DEFAULT_BURST_SIZE,
            flow: FlowConfig::default(),
            cpufreq: DEFAULT_CPUFREQ,
            sim: SimCosts::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.threads == 0 {
            return bad("at least one analysis thread is required");
        }
        if self.acquire_threads == 0 {
            return bad("at least one acquisition thread is required");
        }
        if !(self.line_rate_bps.is_finite() && self.line_rate_bps > 0.0) {
            return bad("line rate must be positive");
        }
        if !self.ring_capacity.is_power_of_two() || self.ring_capacity < 2 {
            return bad("ring capacity must be a power of two of at least 2");
        }
        if self.clock == ClockMode::Simulated && self.acquire_threads != 1 {
            return bad("the simulated clock drives a single acquisition thread");
        }
        self.cost.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    fn dispatch(&self) -> DispatchConfig {
        DispatchConfig {
            n_rx_rings: self.threads,
            n_acquire_threads: self.acquire_threads,
            burst_size: self.burst_size,
            inline_mode: self.inline,
        }
    }

    fn worker(&self) -> WorkerConfig {
        WorkerConfig { inline: self.inline, useless: self.useless, flow: self.flow, ..WorkerConfig::default() }
    }

    fn echo(&self, workload: &WorkloadSpec) -> Vec<(String, String)> {
        let w = match &workload.kind {
            WorkloadKind::Synth { packet_size, n_flows } => format!("synth {packet_size}B x {n_flows} flows"),
            WorkloadKind::Pcap { path } => format!("pcap {}", path.display()),
        };
        let mut v = vec![
            ("workload", w),
            ("seed", workload.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("rules", self.rules.len().to_string()),
            ("mode", if self.inline { "inline" } else { "passive" }.to_string()),
            ("useless", self.useless.to_string()),
            ("clock", format!("{:?}", self.clock).to_lowercase()),
            ("line_rate_gbps", format!("{}", self.line_rate_bps / 1e9)),
            ("cost_model", self.cost.enabled.to_string()),
        ];
        if self.cost.enabled {
            v.push(("epc_mib", format!("{}", self.cost.epc_bytes as f64 / (1024.0 * 1024.0))));
            v.push(("paging_penalty", self.cost.paging_penalty.to_string()));
            v.push(("warmup_seconds", format!("{}", self.cost.warmup_us() as f64 / 1e6)));
        }
        if let Some(c) = workload.count {
            v.push(("count", c.to_string()));
        }
        if let Some(d) = workload.duration_s {
            v.push(("duration_s", d.to_string()));
        }
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Runs one experiment and checks its accounting.
pub fn run_experiment(workload: &WorkloadSpec, config: &EngineConfig) -> Result<Report, HarnessError> {
    workload.validate()?;
    config.validate()?;
    let report = match config.clock {
        ClockMode::Simulated => run_simulated(workload, config)?,
        ClockMode::Real => run_threaded(workload, config)?,
    };
    config.alerts.flush();
    report.check_conservation()?;
    Ok(report)
}

/// Source that yields one frame.
struct One<'a>(Option<&'a [u8]>);

impl PacketSource for One<'_> {
    fn next_frame(&mut self) -> Option<&[u8]> {
        self.0.take()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Bucket {
    received: u64,
    analyzed: u64,
    dropped: u64,
    paging_ns: f64,
}

struct Buckets {
    start_ns: u64,
    slots: Vec<Bucket>,
}

impl Buckets {
    fn new(start_ns: u64) -> Self {
        Buckets { start_ns, slots: Vec::new() }
    }

    fn at(&mut self, t_ns: u64) -> &mut Bucket {
        let i = ((t_ns.saturating_sub(self.start_ns)) as f64 / (INTERVAL_SECS * NS_PER_S)) as usize;
        if self.slots.len() <= i {
            self.slots.resize(i + 1, Bucket::default());
        }
        &mut self.slots[i]
    }

    /// Folds everything past the last interval into it.
    fn finish(mut self, duration_s: f64, n_workers: usize) -> Vec<IntervalStats> {
        let n = interval_count(duration_s);
        self.slots.resize(self.slots.len().max(n), Bucket::default());
        let tail: Vec<Bucket> = self.slots.drain(n..).collect();
        for b in tail {
            let last = &mut self.slots[n - 1];
            last.received += b.received;
            last.analyzed += b.analyzed;
            last.dropped += b.dropped;
            last.paging_ns += b.paging_ns;
        }
        self.slots
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let start = i as f64 * INTERVAL_SECS;
                let len = if i + 1 == n { (duration_s - start).clamp(1e-9, INTERVAL_SECS) } else { INTERVAL_SECS };
                let capacity = len * NS_PER_S * n_workers as f64;
                IntervalStats {
                    index: i,
                    start_s: start,
                    received: b.received,
                    analyzed: b.analyzed,
                    dropped: b.dropped,
                    drop_rate_pct: percent(b.dropped, b.received),
                    paging_activity_pct: (b.paging_ns / capacity * 100.0).clamp(0.0, 100.0),
                }
            })
            .collect()
    }
}

struct SimWorker {
    analyzer: Analyzer,
    busy_until: u64,
    flow_bytes: usize,
}

fn wire_ns(frame_len: usize, line_rate_bps: f64) -> u64 {
    (((frame_len + WIRE_OVERHEAD) * 8) as f64 / line_rate_bps * NS_PER_S).round().max(1.0) as u64
}

fn forward(plane: &Dataplane, sink: &mut CountingSink, d: PacketDescriptor) {
    if let Err(full) = plane.tx.enqueue(d) {
        // The acquisition side empties TX on every iteration; model it
        // catching up before the worker retries.
        plane.drain_tx(sink, usize::MAX);
        plane.tx.enqueue(full.0).expect("TX ring empty after drain");
    }
}

fn run_simulated(workload: &WorkloadSpec, cfg: &EngineConfig) -> Result<Report, HarnessError> {
    let mut source = workload.open()?;
    let lc = Lifecycle::new();
    let (clock, sim) = Clock::simulated();
    let crossing_ns = (cfg.cost.crossing_us() * 1e3).round() as u64;
    let mut now = 0u64;
    let cross = |e: LifecycleEvent, now: &mut u64| -> Result<(), HarnessError> {
        lc.transition(e)?;
        *now += crossing_ns;
        sim.set_ns(*now);
        Ok(())
    };

    cross(LifecycleEvent::Initialize, &mut now)?;
    let plane = Dataplane::new(cfg.threads, cfg.ring_capacity, cfg.burst_size)?;
    cross(LifecycleEvent::StartDevice, &mut now)?;
    let mut acquirer = Acquirer::new(cfg.dispatch())?;
    let mut sink = CountingSink::default();
    let mut workers: Vec<SimWorker> = (0..cfg.threads)
        .map(|_| SimWorker {
            analyzer: Analyzer::new(cfg.rules.clone(), cfg.worker(), clock.clone(), cfg.alerts.sink()),
            busy_until: 0,
            flow_bytes: 0,
        })
        .collect();
    cross(LifecycleEvent::Acquire, &mut now)?;

    let t0 = now;
    let warmup_end = t0.saturating_add(cfg.cost.warmup_us().saturating_mul(1000));
    let stop_at = workload.duration_s.map(|d| t0 + (d * NS_PER_S) as u64);
    let n_rules = cfg.rules.len();
    let mut buckets = Buckets::new(t0);
    let mut frame = Vec::with_capacity(2048);
    let mut last_arrival = t0;
    let fetch = |source: &mut Box<dyn PacketSource + Send>, frame: &mut Vec<u8>, last: &mut u64| -> Option<u64> {
        let f = source.next_frame()?;
        let at = *last + wire_ns(f.len(), cfg.line_rate_bps);
        if stop_at.is_some_and(|s| at > s) {
            return None;
        }
        frame.clear();
        frame.extend_from_slice(f);
        *last = at;
        Some(at)
    };
    let mut next_arrival = fetch(&mut source, &mut frame, &mut last_arrival);
    let mut stopped = false;
    let mut flow_total = 0usize;
    let mut last_done = t0;
    let mut analyzed_bits = 0u64;
    let mut peak_footprint = trusted_footprint(0, n_rules);
    let mut peak_factor = cfg.cost.paging_factor(peak_footprint);

    loop {
        if next_arrival.is_none() && !stopped {
            lc.transition(LifecycleEvent::Stop)?;
            stopped = true;
        }
        let ready = workers
            .iter()
            .enumerate()
            .filter(|(i, _)| !plane.rx[*i].is_empty())
            .map(|(i, w)| (w.busy_until.max(warmup_end), i))
            .min();
        match (next_arrival, ready) {
            (Some(ta), r) if r.is_none_or(|(tw, _)| ta <= tw) => {
                now = ta;
                sim.set_ns(now);
                let before = plane.stats.snapshot();
                acquirer.step(&lc, &plane, &mut One(Some(&frame)), &mut sink, now / 1000)?;
                let after = plane.stats.snapshot();
                let b = buckets.at(ta);
                b.received += after.received - before.received;
                b.dropped += (after.dropped + after.decode_failed) - (before.dropped + before.decode_failed);
                next_arrival = fetch(&mut source, &mut frame, &mut last_arrival);
            }
            (_, Some((tw, i))) => {
                now = tw;
                sim.set_ns(now);
                let d = plane.rx[i].dequeue().expect("ring checked non-empty");
                let w = &mut workers[i];
                let outcome = w.analyzer.process_packet(&plane.pool, &d);
                let fb = w.analyzer.flows().footprint_bytes();
                flow_total = flow_total + fb - w.flow_bytes;
                w.flow_bytes = fb;
                let footprint = trusted_footprint(flow_total, n_rules);
                let factor = cfg.cost.paging_factor(footprint);
                peak_footprint = peak_footprint.max(footprint);
                peak_factor = peak_factor.max(factor);
                let base = cfg.sim.packet_ns(cfg.useless, &outcome);
                let busy = (base * factor).round().max(1.0) as u64;
                w.busy_until = tw + busy;
                last_done = last_done.max(w.busy_until);
                analyzed_bits += u64::from(d.frame_len) * 8;
                let b = buckets.at(tw);
                b.analyzed += 1;
                b.paging_ns += base * (factor - 1.0);
                if outcome.forward {
                    forward(&plane, &mut sink, d);
                } else {
                    plane.pool.release(d);
                }
            }
            (None, None) => break,
            (Some(_), None) => unreachable!("arrival arm covers a missing worker"),
        }
    }

    let end = last_done.max(last_arrival);
    sim.set_ns(end);
    if cfg.inline {
        plane.drain_tx(&mut sink, usize::MAX);
    }
    lc.transition(LifecycleEvent::Shutdown)?;
    let residual = plane.drain_all() as u64;

    let duration_s = workload.duration_s.unwrap_or((last_arrival - t0) as f64 / NS_PER_S);
    // Startup paging occupies every worker until warmup ends.
    if warmup_end > t0 {
        let span = INTERVAL_SECS * NS_PER_S;
        let n = interval_count(duration_s);
        for k in 0..n {
            let lo = t0 as f64 + k as f64 * span;
            let overlap = (warmup_end as f64).min(lo + span) - lo;
            if overlap > 0.0 {
                buckets.at(lo as u64).paging_ns += overlap * cfg.threads as f64;
            }
        }
    }
    for w in &mut workers {
        w.analyzer.flush();
    }
    let intervals = buckets.finish(duration_s, cfg.threads);
    let elapsed_s = (end - t0) as f64 / NS_PER_S;
    Ok(assemble(
        workload,
        cfg,
        &plane,
        workers.iter().map(|w| &w.analyzer),
        residual,
        elapsed_s,
        analyzed_bits,
        intervals,
        peak_footprint,
        peak_factor,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble<'a>(
    workload: &WorkloadSpec,
    cfg: &EngineConfig,
    plane: &Dataplane,
    analyzers: impl Iterator<Item = &'a Analyzer>,
    residual: u64,
    elapsed_s: f64,
    analyzed_bits: u64,
    intervals: Vec<IntervalStats>,
    peak_footprint: usize,
    peak_factor: f64,
) -> Report {
    let s = plane.stats.snapshot();
    let mut t = Totals {
        received: s.received,
        dropped: s.dropped + s.decode_failed,
        decode_failed: s.decode_failed,
        tx_sent: s.tx_sent,
        residual,
        ..Totals::default()
    };
    for a in analyzers {
        let w = a.stats();
        t.analyzed += w.analyzed;
        t.allowed += w.allowed;
        t.blocked += w.blocked;
        t.alerts += w.alerts;
        t.flows += a.flows().stats().created;
    }
    let (pps, bps) =
        if elapsed_s > 0.0 { (t.analyzed as f64 / elapsed_s, analyzed_bits as f64 / elapsed_s) } else { (0.0, 0.0) };
    Report {
        totals: t,
        elapsed_s,
        throughput_pps: pps,
        throughput_bps: bps,
        mean_frame_bytes: if t.analyzed > 0 { analyzed_bits as f64 / 8.0 / t.analyzed as f64 } else { 0.0 },
        peak_footprint_bytes: peak_footprint as u64,
        peak_paging_factor: peak_factor,
        intervals,
        config: cfg.echo(workload),
    }
}

/// Frames from a source shared by several acquisition threads.
struct Shared {
    inner: Arc<Mutex<Box<dyn PacketSource + Send>>>,
    buf: Vec<u8>,
}

impl PacketSource for Shared {
    fn next_frame(&mut self) -> Option<&[u8]> {
        let mut src = self.inner.lock().expect("source poisoned");
        let f = src.next_frame()?;
        self.buf.clear();
        self.buf.extend_from_slice(f);
        Some(&self.buf)
    }
}

struct WorkerResult {
    analyzer: Analyzer,
    bits: u64,
    peak_footprint: usize,
    peak_factor: f64,
}

fn run_threaded(workload: &WorkloadSpec, cfg: &EngineConfig) -> Result<Report, HarnessError> {
    let source = Arc::new(Mutex::new(workload.open()?));
    let counter = start_clock(cfg.cpufreq)?;
    let clock = Clock::Counter(counter.clone());
    let lc = Arc::new(Lifecycle::new());
    let crossing = Duration::from_secs_f64(cfg.cost.crossing_us() / 1e6);
    let cross = |e: LifecycleEvent| -> Result<(), HarnessError> {
        lc.transition(e)?;
        if !crossing.is_zero() {
            thread::sleep(crossing);
        }
        Ok(())
    };

    cross(LifecycleEvent::Initialize)?;
    let plane = Arc::new(Dataplane::new(cfg.threads, cfg.ring_capacity, cfg.burst_size)?);
    cross(LifecycleEvent::StartDevice)?;
    let acquirers = (0..cfg.acquire_threads).map(|_| Acquirer::new(cfg.dispatch())).collect::<Result<Vec<_>, _>>()?;
    cross(LifecycleEvent::Acquire)?;

    let t0 = Instant::now();
    let warmup_end = t0 + Duration::from_micros(cfg.cost.warmup_us().min(u64::MAX / 2));
    let finish_workers = Arc::new(AtomicBool::new(false));
    let analyzed = Arc::new(AtomicU64::new(0));
    let paging_ns = Arc::new(AtomicU64::new(0));
    let flow_total = Arc::new(AtomicU64::new(0));
    let n_rules = cfg.rules.len();

    let acq_handles: Vec<_> = acquirers
        .into_iter()
        .map(|mut acq| {
            let (lc, plane, counter) = (lc.clone(), plane.clone(), counter.clone());
            let mut src = Shared { inner: source.clone(), buf: Vec::with_capacity(2048) };
            thread::spawn(move || {
                let mut sink = CountingSink::default();
                loop {
                    let now = counter.gettime_us().unwrap_or(0);
                    match acq.step(&lc, &plane, &mut src, &mut sink, now) {
                        Ok(_) => {}
                        Err(AcquireError::SourceExhausted | AcquireError::NotRunning(_)) => break,
                        Err(AcquireError::Config(_)) => unreachable!("validated at construction"),
                    }
                }
            })
        })
        .collect();

    let worker_handles: Vec<_> = (0..cfg.threads)
        .map(|i| {
            let mut analyzer = Analyzer::new(cfg.rules.clone(), cfg.worker(), clock.clone(), cfg.alerts.sink());
            let (plane, finish) = (plane.clone(), finish_workers.clone());
            let (analyzed, paging_ns, flow_total) = (analyzed.clone(), paging_ns.clone(), flow_total.clone());
            let (cost, burst) = (cfg.cost, cfg.burst_size);
            thread::spawn(move || {
                let mut batch = Vec::with_capacity(burst);
                let (mut bits, mut peak_footprint, mut peak_factor) = (0u64, 0usize, 1.0f64);
                let mut my_flow_bytes = 0u64;
                while Instant::now() < warmup_end && !finish.load(Ordering::Acquire) {
                    thread::sleep(Duration::from_millis(1));
                }
                loop {
                    batch.clear();
                    if plane.rx[i].dequeue_burst(&mut batch, burst) == 0 {
                        if finish.load(Ordering::Acquire) && plane.rx[i].is_empty() {
                            break;
                        }
                        thread::yield_now();
                        continue;
                    }
                    for d in batch.drain(..) {
                        let started = Instant::now();
                        let outcome = analyzer.process_packet(&plane.pool, &d);
                        let fb = analyzer.flows().footprint_bytes() as u64;
                        let total = if fb >= my_flow_bytes {
                            flow_total.fetch_add(fb - my_flow_bytes, Ordering::Relaxed) + (fb - my_flow_bytes)
                        } else {
                            flow_total.fetch_sub(my_flow_bytes - fb, Ordering::Relaxed) - (my_flow_bytes - fb)
                        };
                        my_flow_bytes = fb;
                        let footprint = trusted_footprint(total as usize, n_rules);
                        let factor = cost.paging_factor(footprint);
                        peak_footprint = peak_footprint.max(footprint);
                        peak_factor = peak_factor.max(factor);
                        if factor > 1.0 {
                            let target = started.elapsed().mul_f64(factor - 1.0);
                            let spin = Instant::now();
                            while spin.elapsed() < target {
                                std::hint::spin_loop();
                            }
                            paging_ns.fetch_add(target.as_nanos() as u64, Ordering::Relaxed);
                        }
                        bits += u64::from(d.frame_len) * 8;
                        analyzed.fetch_add(1, Ordering::Relaxed);
                        if outcome.forward {
                            let mut d = d;
                            loop {
                                match plane.tx.enqueue(d) {
                                    Ok(()) => break,
                                    Err(full) => {
                                        d = full.0;
                                        thread::yield_now();
                                    }
                                }
                            }
                        } else {
                            plane.pool.release(d);
                        }
                    }
                }
                analyzer.flush();
                WorkerResult { analyzer, bits, peak_footprint, peak_factor }
            })
        })
        .collect();

    // Sample the counters at every interval boundary until the workload ends.
    let deadline = workload.duration_s.map(|d| t0 + Duration::from_secs_f64(d));
    let span = Duration::from_secs_f64(INTERVAL_SECS);
    let mut intervals = Vec::new();
    let mut prev = (0u64, 0u64, 0u64, 0u64);
    let mut sample = |index: usize, len_s: f64, intervals: &mut Vec<IntervalStats>| {
        let s = plane.stats.snapshot();
        let cur = (
            s.received,
            s.dropped + s.decode_failed,
            analyzed.load(Ordering::Relaxed),
            paging_ns.load(Ordering::Relaxed),
        );
        let (rx, dr, an, pg) = (cur.0 - prev.0, cur.1 - prev.1, cur.2 - prev.2, cur.3 - prev.3);
        prev = cur;
        let start = t0 + span * index as u32;
        let warm = warmup_end.min(start + span).saturating_duration_since(start).as_nanos() as f64 * cfg.threads as f64;
        let capacity = len_s.max(1e-9) * NS_PER_S * cfg.threads as f64;
        intervals.push(IntervalStats {
            index,
            start_s: index as f64 * INTERVAL_SECS,
            received: rx,
            analyzed: an,
            dropped: dr,
            drop_rate_pct: percent(dr, rx),
            paging_activity_pct: ((pg as f64 + warm) / capacity * 100.0).clamp(0.0, 100.0),
        });
    };
    loop {
        let done = acq_handles.iter().all(|h| h.is_finished()) || deadline.is_some_and(|d| Instant::now() >= d);
        let boundary = t0 + span * (intervals.len() as u32 + 1);
        if Instant::now() >= boundary {
            let k = intervals.len();
            sample(k, INTERVAL_SECS, &mut intervals);
        }
        if done {
            break;
        }
        thread::sleep(Duration::from_millis(2));
    }
    let stop_elapsed = t0.elapsed().as_secs_f64();
    lc.transition(LifecycleEvent::Stop)?;
    for h in acq_handles {
        h.join().map_err(|_| HarnessError::Thread("acquisition"))?;
    }
    finish_workers.store(true, Ordering::Release);
    let mut tx_sink = CountingSink::default();
    while !worker_handles.iter().all(|h| h.is_finished()) {
        plane.drain_tx(&mut tx_sink, usize::MAX);
        thread::sleep(Duration::from_micros(200));
    }
    let results = worker_handles
        .into_iter()
        .map(|h| h.join().map_err(|_| HarnessError::Thread("analysis")))
        .collect::<Result<Vec<_>, _>>()?;
    if cfg.inline {
        plane.drain_tx(&mut tx_sink, usize::MAX);
    }
    let elapsed_s = t0.elapsed().as_secs_f64();
    let duration_s = workload.duration_s.unwrap_or(stop_elapsed);
    // Whatever happened after the last boundary goes into the final interval.
    let n = interval_count(duration_s);
    while intervals.len() < n {
        let k = intervals.len();
        let len = (duration_s - k as f64 * INTERVAL_SECS).clamp(1e-9, INTERVAL_SECS);
        sample(k, len, &mut intervals);
    }
    let extra: Vec<IntervalStats> = intervals.drain(n..).collect();
    if let Some(last) = intervals.last_mut() {
        for e in extra {
            last.received += e.received;
            last.analyzed += e.analyzed;
            last.dropped += e.dropped;
        }
        last.drop_rate_pct = percent(last.dropped, last.received);
    }
    cross(LifecycleEvent::Shutdown)?;
    let residual = plane.drain_all() as u64;
    counter.stop();

    let bits = results.iter().map(|r| r.bits).sum();
    let peak_footprint = results.iter().map(|r| r.peak_footprint).max().unwrap_or(0).max(trusted_footprint(0, n_rules));
    let peak_factor = results.iter().map(|r| r.peak_factor).fold(1.0, f64::max);
    Ok(assemble(
        workload,
        cfg,
        &plane,
        results.iter().map(|r| &r.analyzer),
        residual,
        elapsed_s,
        bits,
        intervals,
        peak_footprint,
        peak_factor,
    ))
}
