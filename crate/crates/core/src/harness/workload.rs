//! Workload descriptions and the seeded synthetic TCP traffic generator.

use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pcap::read_pcap_frames;
use super::HarnessError;
use crate::acquire::{PacketSource, ReplaySource};
use crate::packet::build::{write_tcp_frame, TcpSpec};
use crate::packet::{FiveTuple, Proto, TCP_ACK, TCP_PSH, TCP_SYN};

pub const MIN_PACKET_SIZE: usize = 64;
pub const MAX_PACKET_SIZE: usize = 1518;
const TCP_HEADERS: usize = 14 + 20 + 20;

/// Sids the generator knows how to trigger.
pub const HEARTBLEED_SID: u32 = 30514;
const HEARTBLEED_RESPONSE: [u8; 5] = [0x18, 0x03, 0x00, 0x00, 0x90];

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadKind {
    Synth { packet_size: usize, n_flows: usize },
    Pcap { path: PathBuf },
}

/// Makes a fraction of packets satisfy one rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackInjection {
    pub sid: u32,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Restart a finite capture when it runs out.
    pub repeat: bool,
    pub count: Option<u64>,
    pub duration_s: Option<f64>,
    pub seed: u64,
    pub attack: Option<AttackInjection>,
}

impl WorkloadSpec {
    pub fn synth(packet_size: usize, n_flows: usize, count: u64) -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Synth { packet_size, n_flows },
            repeat: false,
            count: Some(count),
            duration_s: None,
            seed: 0,
            attack: None,
        }
    }

    pub fn pcap(path: impl Into<PathBuf>) -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Pcap { path: path.into() },
            repeat: false,
            count: None,
            duration_s: None,
            seed: 0,
            attack: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, secs: f64) -> Self {
        self.duration_s = Some(secs);
        self
    }

    pub fn with_attack(mut self, sid: u32, rate: f64) -> Self {
        self.attack = Some(AttackInjection { sid, rate });
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if let WorkloadKind::Synth { packet_size, n_flows } = self.kind {
            if !(MIN_PACKET_SIZE..=MAX_PACKET_SIZE).contains(&packet_size) {
                return bad(format!("packet size {packet_size} outside {MIN_PACKET_SIZE}..={MAX_PACKET_SIZE}"));
            }
            if n_flows == 0 {
                return bad("at least one flow is required".into());
            }
            if self.count.is_none() && self.duration_s.is_none() {
                return bad("a synthetic workload needs a packet count or a duration".into());
            }
        }
        if self.repeat && self.count.is_none() && self.duration_s.is_none() {
            return bad("a repeating workload needs a packet count or a duration".into());
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("duration must be positive, got {d}"));
            }
        }
        if let Some(a) = self.attack {
            if a.sid != HEARTBLEED_SID {
                return bad(format!("no attack template for sid {}", a.sid));
            }
            if !(0.0..=1.0).contains(&a.rate) {
                return bad(format!("attack rate {} outside [0, 1]", a.rate));
            }
            if !matches!(self.kind, WorkloadKind::Synth { .. }) {
                return bad("attack injection needs a synthetic workload".into());
            }
        }
        Ok(())
    }

    /// A fresh packet source for this workload.
    pub fn open(&self) -> Result<Box<dyn PacketSource + Send>, HarnessError> {
        self.validate()?;
        match &self.kind {
            WorkloadKind::Synth { .. } => Ok(Box::new(gen_synth(self)?)),
            WorkloadKind::Pcap { path } => {
                let frames = Arc::new(read_pcap_frames(path)?);
                let replay = ReplaySource::new(frames, self.repeat);
                Ok(match self.count {
                    Some(n) => Box::new(Take { inner: replay, left: n }),
                    None => Box::new(replay),
                })
            }
        }
    }
}

/// At most `left` frames of `inner`.
#[derive(Debug)]
pub struct Take<S> {
    inner: S,
    left: u64,
}

impl<S: PacketSource> PacketSource for Take<S> {
    fn next_frame(&mut self) -> Option<&[u8]> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        self.inner.next_frame()
    }
}

#[derive(Debug, Clone, Copy)]
struct SynthFlow {
    tuple: FiveTuple,
    client_isn: u32,
    server_isn: u32,
    client_next: u32,
    server_next: u32,
}

/// Deterministic TCP traffic over a fixed set of connections.
///
/// The first `3 * n_flows` packets are the handshakes, one flow at a time.
/// Data packets then visit the flows round-robin, client to server on even
/// rounds and server to client on odd ones. Every frame is exactly
/// `packet_size` bytes.
#[derive(Debug)]
pub struct SynthGenerator {
    rng: ChaCha8Rng,
    packet_size: usize,
    flows: Vec<SynthFlow>,
    count: Option<u64>,
    emitted: u64,
    attack_rate: f64,
    injected: u64,
    buf: Vec<u8>,
    payload: Vec<u8>,
}

pub fn gen_synth(spec: &WorkloadSpec) -> Result<SynthGenerator, HarnessError> {
    spec.validate()?;
    let WorkloadKind::Synth { packet_size, n_flows } = spec.kind else {
        return Err(HarnessError::Config("gen_synth needs a synthetic workload".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let server_port = if spec.attack.is_some() { 443 } else { 80 };
    let server = Ipv4Addr::new(172, 16, 0, 1);
    let flows = (0..n_flows)
        .map(|i| {
            let client = Ipv4Addr::from(u32::from(Ipv4Addr::new(10, 0, 0, 0)) + i as u32 + 1);
            let port = 1024 + (i % 64_000) as u16;
            let client_isn = rng.next_u32();
            let server_isn = rng.next_u32();
            SynthFlow {
                tuple: FiveTuple::new(Proto::Tcp, client, port, server, server_port),
                client_isn,
                server_isn,
                client_next: client_isn.wrapping_add(1),
                server_next: server_isn.wrapping_add(1),
            }
        })
        .collect();
    Ok(SynthGenerator {
        rng,
        packet_size,
        flows,
        count: spec.count,
        emitted: 0,
        attack_rate: spec.attack.map_or(0.0, |a| a.rate),
        injected: 0,
        buf: Vec::with_capacity(packet_size),
        payload: vec![0; packet_size - TCP_HEADERS],
    })
}

impl SynthGenerator {
    /// Attack payloads emitted so far.
    pub fn injected(&self) -> u64 {
        self.injected
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    fn build(&mut self) {
        let i = self.emitted;
        let n = self.flows.len() as u64;
        self.buf.clear();
        if i < 3 * n {
            let f = self.flows[(i / 3) as usize];
            let (t, spec) = match i % 3 {
                0 => (f.tuple, TcpSpec { seq: f.client_isn, ack: 0, flags: TCP_SYN }),
                1 => (
                    f.tuple.reversed(),
                    TcpSpec { seq: f.server_isn, ack: f.client_isn.wrapping_add(1), flags: TCP_SYN | TCP_ACK },
                ),
                _ => (
                    f.tuple,
                    TcpSpec { seq: f.client_isn.wrapping_add(1), ack: f.server_isn.wrapping_add(1), flags: TCP_ACK },
                ),
            };
            write_tcp_frame(&mut self.buf, &t, &spec, &[], self.packet_size);
            return;
        }

        let j = i - 3 * n;
        let fi = (j % n) as usize;
        let mut to_server = (j / n).is_multiple_of(2);
        // Injection keeps pace with ceil(rate * packets so far); handshake
        // packets cannot carry it, so any backlog is paid off by data packets.
        let due = ((i + 1) as f64 * self.attack_rate).ceil() as u64;
        let attack = self.injected < due;
        self.rng.fill_bytes(&mut self.payload);
        if attack {
            self.injected += 1;
            to_server = false;
            self.payload[..HEARTBLEED_RESPONSE.len()].copy_from_slice(&HEARTBLEED_RESPONSE);
        } else if self.attack_rate > 0.0 && self.payload[0] == HEARTBLEED_RESPONSE[0] {
            // Random payloads must never trigger the rule by accident.
            self.payload[0] ^= 0x01;
        }
        let f = &mut self.flows[fi];
        let len = self.payload.len() as u32;
        let (t, spec) = if to_server {
            let s = TcpSpec { seq: f.client_next, ack: f.server_next, flags: TCP_ACK | TCP_PSH };
            f.client_next = f.client_next.wrapping_add(len);
            (f.tuple, s)
        } else {
            let s = TcpSpec { seq: f.server_next, ack: f.client_next, flags: TCP_ACK | TCP_PSH };
            f.server_next = f.server_next.wrapping_add(len);
            (f.tuple.reversed(), s)
        };
        write_tcp_frame(&mut self.buf, &t, &spec, &self.payload, self.packet_size);
    }
}

impl PacketSource for SynthGenerator {
    fn next_frame(&mut self) -> Option<&[u8]> {
        if self.count.is_some_and(|c| self.emitted >= c) {
            return None;
        }
        self.build();
        self.emitted += 1;
        Some(&self.buf)
    }
}

/// Drains a source into memory.
pub fn collect_frames(source: &mut dyn PacketSource) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    while let Some(f) = source.next_frame() {
        out.push(f.to_vec());
    }
    out
}
