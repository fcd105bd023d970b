//! Untrusted-side acquisition: read frame bursts, decode them into the pool,
//! spread descriptors over per-worker RX rings by symmetric flow hash, and in
//! inline mode push allowed packets from the TX ring back out.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::boundary::{Lifecycle, LifecycleState};
use crate::packet::{canonical_key, DecodeError, FiveTuple, PacketDescriptor, PacketPool};
use crate::ring::Ring;

pub const DEFAULT_BURST_SIZE: usize = 32;

/// MurmurHash3, x86 32-bit variant.
pub fn murmur3_32(data: &[u8], seed: u32) -> u32 {
    const C1: u32 = 0xcc9e_2d51;
    const C2: u32 = 0x1b87_3593;
    let mut h = seed;
    let mut blocks = data.chunks_exact(4);
    for b in &mut blocks {
        let k = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        h ^= k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h = h.rotate_left(13).wrapping_mul(5).wrapping_add(0xe654_6b64);
    }
    let tail = blocks.remainder();
    if !tail.is_empty() {
        let k = tail.iter().rev().fold(0u32, |k, &b| (k << 8) | u32::from(b));
        h ^= k.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
    }
    h ^= data.len() as u32;
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^ (h >> 16)
}

/// Symmetric flow hash: both directions of a connection hash identically.
pub fn rss_hash(tuple: &FiveTuple) -> u32 {
    murmur3_32(&canonical_key(tuple).0.to_bytes(), 0)
}

/// RX ring for a hash: the low six bits, folded onto the ring count.
pub fn select_ring(hash: u32, n_rings: usize) -> usize {
    assert!(n_rings >= 1, "at least one ring");
    (hash & 63) as usize % n_rings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchConfig {
    pub n_rx_rings: usize,
    pub n_acquire_threads: usize,
    pub burst_size: usize,
    pub inline_mode: bool,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig { n_rx_rings: 1, n_acquire_threads: 1, burst_size: DEFAULT_BURST_SIZE, inline_mode: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcquireError {
    #[error("invalid dispatch config: {0}")]
    Config(&'static str),
    #[error("acquisition requires the Running state, found {0:?}")]
    NotRunning(LifecycleState),
    #[error("packet source exhausted")]
    SourceExhausted,
}

impl DispatchConfig {
    pub fn validate(&self) -> Result<(), AcquireError> {
        if self.n_rx_rings == 0 {
            return Err(AcquireError::Config("n_rx_rings must be at least 1"));
        }
        if self.burst_size == 0 {
            return Err(AcquireError::Config("burst_size must be at least 1"));
        }
        if self.n_acquire_threads == 0 {
            return Err(AcquireError::Config("n_acquire_threads must be at least 1"));
        }
        Ok(())
    }
}

/// A stream of raw Ethernet frames. `None` means the stream is over.
pub trait PacketSource {
    fn next_frame(&mut self) -> Option<&[u8]>;
}

/// Where allowed packets go in inline mode.
pub trait PacketSink {
    fn send(&mut self, frame: &[u8]);
}

/// Counts frames and bytes, keeps nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct CountingSink {
    pub frames: u64,
    pub bytes: u64,
}

impl PacketSink for CountingSink {
    fn send(&mut self, frame: &[u8]) {
        self.frames += 1;
        self.bytes += frame.len() as u64;
    }
}

impl PacketSink for Vec<Vec<u8>> {
    fn send(&mut self, frame: &[u8]) {
        self.push(frame.to_vec());
    }
}

/// Replays an in-memory frame list, optionally forever. With a stride it
/// yields every `stride`-th frame starting at `start`, so several
/// acquisition threads can split one capture.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frames: Arc<Vec<Vec<u8>>>,
    start: usize,
    stride: usize,
    next: usize,
    repeat: bool,
}

impl ReplaySource {
    pub fn new(frames: Arc<Vec<Vec<u8>>>, repeat: bool) -> Self {
        ReplaySource::sharded(frames, 0, 1, repeat)
    }

    pub fn sharded(frames: Arc<Vec<Vec<u8>>>, start: usize, stride: usize, repeat: bool) -> Self {
        assert!(stride >= 1);
        ReplaySource { frames, start, stride, next: start, repeat }
    }
}

impl PacketSource for ReplaySource {
    fn next_frame(&mut self) -> Option<&[u8]> {
        if self.next >= self.frames.len() {
            if !self.repeat || self.start >= self.frames.len() {
                return None;
            }
            self.next = self.start;
        }
        let i = self.next;
        self.next += self.stride;
        Some(&self.frames[i])
    }
}

/// Shared acquisition counters.
#[derive(Debug, Default)]
pub struct AcquireStats {
    pub received: AtomicU64,
    pub enqueued: AtomicU64,
    /// Frames lost to a full RX ring or an exhausted pool.
    pub dropped: AtomicU64,
    pub pool_exhausted: AtomicU64,
    /// Frames that could not be decoded, or were not IPv4.
    pub decode_failed: AtomicU64,
    pub tx_sent: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcquireSnapshot {
    pub received: u64,
    pub enqueued: u64,
    pub dropped: u64,
    pub pool_exhausted: u64,
    pub decode_failed: u64,
    pub tx_sent: u64,
}

impl AcquireStats {
    pub fn snapshot(&self) -> AcquireSnapshot {
        AcquireSnapshot {
            received: self.received.load(Ordering::Relaxed),
            enqueued: self.enqueued.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
            pool_exhausted: self.pool_exhausted.load(Ordering::Relaxed),
            decode_failed: self.decode_failed.load(Ordering::Relaxed),
            tx_sent: self.tx_sent.load(Ordering::Relaxed),
        }
    }
}

fn bump(c: &AtomicU64, n: u64) {
    if n > 0 {
        c.fetch_add(n, Ordering::Relaxed);
    }
}

/// The rings and pool shared by acquisition and analysis.
#[derive(Debug)]
pub struct Dataplane {
    pub pool: PacketPool,
    pub rx: Vec<Ring<PacketDescriptor>>,
    pub tx: Ring<PacketDescriptor>,
    pub stats: AcquireStats,
}

impl Dataplane {
    /// Pool sized so that every ring can be full at once with a burst to spare.
    pub fn new(n_rx: usize, ring_capacity: usize, burst: usize) -> Result<Self, crate::ring::RingError> {
        use crate::ring::Discipline;
        let rx = (0..n_rx).map(|_| Ring::new(ring_capacity, Discipline::Mpsc)).collect::<Result<Vec<_>, _>>()?;
        let tx = Ring::new(ring_capacity, Discipline::Mpmc)?;
        let pool = PacketPool::new((n_rx + 1) * ring_capacity + burst.max(1) * 4);
        Ok(Dataplane { pool, rx, tx, stats: AcquireStats::default() })
    }

    /// Releases everything left in the rings. Returns how many descriptors
    /// were still queued.
    pub fn drain_all(&self) -> usize {
        let mut n = 0;
        for ring in self.rx.iter().chain(std::iter::once(&self.tx)) {
            while let Some(d) = ring.dequeue() {
                self.pool.release(d);
                n += 1;
            }
        }
        n
    }

    /// Writes every queued TX descriptor to `sink` and frees its slot.
    pub fn drain_tx(&self, sink: &mut dyn PacketSink, max: usize) -> usize {
        let mut n = 0;
        while n < max {
            let Some(d) = self.tx.dequeue() else { break };
            sink.send(self.pool.frame(&d));
            self.pool.release(d);
            n += 1;
        }
        bump(&self.stats.tx_sent, n as u64);
        n
    }
}

/// Per-thread acquisition state.
#[derive(Debug)]
pub struct Acquirer {
    config: DispatchConfig,
    pending: Vec<Vec<PacketDescriptor>>,
}

impl Acquirer {
    pub fn new(config: DispatchConfig) -> Result<Self, AcquireError> {
        config.validate()?;
        Ok(Acquirer { config, pending: (0..config.n_rx_rings).map(|_| Vec::new()).collect() })
    }

    pub fn config(&self) -> &DispatchConfig {
        &self.config
    }

    /// One iteration: up to `burst_size` frames from `source` into the RX
    /// rings, then (inline mode only) the TX ring out to `sink`. Returns the
    /// number of frames read.
    pub fn step(
        &mut self,
        lifecycle: &Lifecycle,
        plane: &Dataplane,
        source: &mut dyn PacketSource,
        sink: &mut dyn PacketSink,
        now_us: u64,
    ) -> Result<usize, AcquireError> {
        let state = lifecycle.state();
        if state != LifecycleState::Running {
            return Err(AcquireError::NotRunning(state));
        }
        assert_eq!(plane.rx.len(), self.config.n_rx_rings, "ring count differs from dispatch config");
        let stats = &plane.stats;
        let mut read = 0;
        let (mut decode_failed, mut pool_exhausted) = (0, 0);
        while read < self.config.burst_size {
            let Some(frame) = source.next_frame() else { break };
            read += 1;
            match plane.pool.decode(frame, now_us) {
                Ok(d) if d.decode_ok => {
                    let r = select_ring(rss_hash(&d.tuple), self.config.n_rx_rings);
                    self.pending[r].push(d);
                }
                Ok(d) => {
                    plane.pool.release(d);
                    decode_failed += 1;
                }
                Err(DecodeError::PoolExhausted) => pool_exhausted += 1,
                Err(_) => decode_failed += 1,
            }
        }
        bump(&stats.received, read as u64);
        bump(&stats.decode_failed, decode_failed);
        bump(&stats.pool_exhausted, pool_exhausted);

        let mut enqueued = 0;
        let mut full = 0;
        for (ring, batch) in plane.rx.iter().zip(self.pending.iter_mut()) {
            if batch.is_empty() {
                continue;
            }
            enqueued += ring.enqueue_burst(batch);
            for d in batch.drain(..) {
                plane.pool.release(d);
                full += 1;
            }
        }
        bump(&stats.enqueued, enqueued as u64);
        bump(&stats.dropped, full + pool_exhausted);

        if self.config.inline_mode {
            plane.drain_tx(sink, usize::MAX);
        }
        if read == 0 {
            return Err(AcquireError::SourceExhausted);
        }
        Ok(read)
    }
}

/// Free-function form of [`Acquirer::step`].
pub fn acquisition_step(
    acquirer: &mut Acquirer,
    lifecycle: &Lifecycle,
    plane: &Dataplane,
    source: &mut dyn PacketSource,
    sink: &mut dyn PacketSink,
    now_us: u64,
) -> Result<usize, AcquireError> {
    acquirer.step(lifecycle, plane, source, sink, now_us)
}
