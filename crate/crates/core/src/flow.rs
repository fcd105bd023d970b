//! Per-worker flow table: connection tracking, TCP state, idle expiry and
//! stream reassembly.
//!
//! Each analysis worker owns one table outright; nothing here is shared.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::packet::{
    Direction, FlowKey, PacketDescriptor, Proto, TcpMeta, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN,
};

pub const MIN_FLOW_BYTES: usize = 2048;
pub const MAX_FLOW_BYTES: usize = 4096;
/// Fixed per-flow state size before any buffered segments.
pub const DEFAULT_FLOW_BYTES: usize = 3072;
/// Undelivered bytes allowed per direction of a flow.
pub const DEFAULT_REASSEMBLY_CAP: usize = 64 * 1024;
pub const DEFAULT_TCP_TIMEOUT_US: u64 = 30_000_000;
pub const DEFAULT_UDP_TIMEOUT_US: u64 = 10_000_000;
pub const DEFAULT_MAX_FLOWS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowState {
    New,
    SynSeen,
    Established,
    Closing,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("flow table full ({0} flows)")]
    TableFull(usize),
}

/// Out-of-order segment store for one direction of a TCP stream.
///
/// Offsets are relative to `base` (the first expected sequence number).
/// Stored segments never overlap: bytes already held or delivered win over
/// later arrivals.
#[derive(Debug, Clone, Default)]
pub struct SegmentBuffer {
    base: Option<u32>,
    segments: BTreeMap<u64, Vec<u8>>,
    delivered: u64,
    buffered: usize,
    cap: usize,
    overflows: u64,
}

impl SegmentBuffer {
    pub fn new(cap: usize) -> Self {
        SegmentBuffer { cap, ..Default::default() }
    }

    pub fn with_base(base: u32, cap: usize) -> Self {
        SegmentBuffer { base: Some(base), cap, ..Default::default() }
    }

    /// Fixes the stream origin if no segment has done so yet.
    pub fn set_base(&mut self, seq: u32) {
        if self.base.is_none() {
            self.base = Some(seq);
        }
    }

    pub fn base(&self) -> Option<u32> {
        self.base
    }

    pub fn delivered_upto(&self) -> u64 {
        self.delivered
    }

    pub fn buffered_bytes(&self) -> usize {
        self.buffered
    }

    /// Times the cap forced a gap to be skipped.
    pub fn overflows(&self) -> u64 {
        self.overflows
    }

    /// Inserts a segment and returns the bytes that became contiguous.
    pub fn insert(&mut self, seq: u32, payload: &[u8]) -> Vec<u8> {
        if payload.is_empty() {
            return Vec::new();
        }
        let base = *self.base.get_or_insert(seq);
        let rel = seq.wrapping_sub(base);
        let (mut start, mut data) = if rel >= 1 << 31 {
            // Starts before the stream origin; keep only the part after it.
            let behind = base.wrapping_sub(seq) as usize;
            if behind >= payload.len() {
                return Vec::new();
            }
            (0u64, &payload[behind..])
        } else {
            (u64::from(rel), payload)
        };
        let end = start + data.len() as u64;
        if end <= self.delivered {
            return Vec::new();
        }
        if start < self.delivered {
            data = &data[(self.delivered - start) as usize..];
            start = self.delivered;
        }

        let overlapping: Vec<(u64, u64)> = {
            let first = self.segments.range(..start).next_back().map(|(&k, _)| k).unwrap_or(start);
            self.segments.range(first..end).map(|(&k, v)| (k, k + v.len() as u64)).filter(|&(_, e)| e > start).collect()
        };
        let mut cursor = start;
        for (s, e) in overlapping {
            if cursor < s {
                self.store(cursor, &data[(cursor - start) as usize..(s.min(end) - start) as usize]);
            }
            cursor = cursor.max(e);
            if cursor >= end {
                break;
            }
        }
        if cursor < end {
            self.store(cursor, &data[(cursor - start) as usize..]);
        }

        let mut out = self.take_contiguous();
        while self.buffered > self.cap {
            let (&first, _) = self.segments.iter().next().expect("buffered bytes imply a segment");
            self.delivered = first;
            self.overflows += 1;
            out.extend(self.take_contiguous());
        }
        out
    }

    fn store(&mut self, at: u64, bytes: &[u8]) {
        if !bytes.is_empty() {
            self.buffered += bytes.len();
            self.segments.insert(at, bytes.to_vec());
        }
    }

    fn take_contiguous(&mut self) -> Vec<u8> {
        let mut out = Vec::new();
        while let Some(entry) = self.segments.first_entry() {
            if *entry.key() != self.delivered {
                break;
            }
            let seg = entry.remove();
            self.delivered += seg.len() as u64;
            self.buffered -= seg.len();
            out.extend_from_slice(&seg);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: FlowState,
    pub to: FlowState,
    /// Nonsensical flag combination; state left unchanged.
    pub anomaly: bool,
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub key: FlowKey,
    pub state: FlowState,
    pub created_us: u64,
    pub last_seen_us: u64,
    pub pkts_fwd: u64,
    pub pkts_rev: u64,
    /// Canonical orientation of client-to-server packets.
    pub client_dir: Direction,
    pub anomalies: u32,
    reassembly: [SegmentBuffer; 2],
    base_bytes: usize,
    syn_ack_seen: bool,
    fin_seen: [bool; 2],
}

impl Flow {
    pub fn new(key: FlowKey, now_us: u64, first_dir: Direction, base_bytes: usize, reassembly_cap: usize) -> Self {
        Flow {
            key,
            state: FlowState::New,
            created_us: now_us,
            last_seen_us: now_us,
            pkts_fwd: 0,
            pkts_rev: 0,
            client_dir: first_dir,
            anomalies: 0,
            reassembly: [SegmentBuffer::new(reassembly_cap), SegmentBuffer::new(reassembly_cap)],
            base_bytes,
            syn_ack_seen: false,
            fin_seen: [false; 2],
        }
    }

    pub fn footprint_bytes(&self) -> usize {
        self.base_bytes + self.reassembly[0].buffered_bytes() + self.reassembly[1].buffered_bytes()
    }

    pub fn is_established(&self) -> bool {
        self.state == FlowState::Established
    }

    pub fn to_server(&self, dir: Direction) -> bool {
        dir == self.client_dir
    }

    pub fn segments(&self, dir: Direction) -> &SegmentBuffer {
        &self.reassembly[dir.index()]
    }

    pub fn reassembly_overflows(&self) -> u64 {
        self.reassembly.iter().map(SegmentBuffer::overflows).sum()
    }

    /// Updates counters and drives the connection state machine.
    pub fn update(&mut self, desc: &PacketDescriptor, dir: Direction, now_us: u64) -> Transition {
        let from = self.state;
        match dir {
            Direction::Forward => self.pkts_fwd += 1,
            Direction::Reverse => self.pkts_rev += 1,
        }
        self.last_seen_us = self.last_seen_us.max(now_us);

        if self.key.proto != Proto::Tcp {
            if self.state == FlowState::New && dir != self.client_dir {
                self.state = FlowState::Established;
            }
            return Transition { from, to: self.state, anomaly: false };
        }
        let Some(tcp) = desc.tcp else {
            return Transition { from, to: from, anomaly: false };
        };
        if is_anomalous(&tcp) {
            self.anomalies += 1;
            return Transition { from, to: from, anomaly: true };
        }
        self.apply_tcp(&tcp, dir);
        Transition { from, to: self.state, anomaly: false }
    }

    fn apply_tcp(&mut self, tcp: &TcpMeta, dir: Direction) {
        use FlowState::*;
        let d = dir.index();
        if tcp.has(TCP_RST) {
            self.state = Closed;
        } else if tcp.has(TCP_SYN) && !tcp.has(TCP_ACK) {
            if self.state == New {
                self.state = SynSeen;
                self.client_dir = dir;
                self.reassembly[d].set_base(tcp.seq.wrapping_add(1));
            }
        } else if tcp.has(TCP_SYN) {
            if matches!(self.state, New | SynSeen) {
                if self.state == New {
                    self.client_dir = dir.flip();
                }
                if dir != self.client_dir {
                    self.state = SynSeen;
                    self.syn_ack_seen = true;
                    self.reassembly[d].set_base(tcp.seq.wrapping_add(1));
                }
            }
        } else if tcp.has(TCP_FIN) {
            if self.state != Closed {
                self.fin_seen[d] = true;
                self.state = if self.fin_seen[0] && self.fin_seen[1] { Closed } else { Closing };
            }
        } else {
            let both_ways = self.pkts_fwd > 0 && self.pkts_rev > 0;
            match self.state {
                SynSeen if self.syn_ack_seen && dir == self.client_dir && tcp.has(TCP_ACK) => self.state = Established,
                New | SynSeen if both_ways => self.state = Established,
                _ => {}
            }
        }
    }

    pub fn reassemble(&mut self, dir: Direction, seq: u32, payload: &[u8]) -> Vec<u8> {
        self.reassembly[dir.index()].insert(seq, payload)
    }
}

fn is_anomalous(tcp: &TcpMeta) -> bool {
    let syn = tcp.has(TCP_SYN);
    (syn && tcp.has(TCP_FIN))
        || (syn && tcp.has(TCP_RST))
        || tcp.flags & (TCP_SYN | TCP_ACK | TCP_FIN | TCP_RST | TCP_PSH | 0x20) == 0
}

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub max_flows: usize,
    pub per_flow_bytes: usize,
    pub reassembly_cap: usize,
    pub tcp_timeout_us: u64,
    pub udp_timeout_us: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            max_flows: DEFAULT_MAX_FLOWS,
            per_flow_bytes: DEFAULT_FLOW_BYTES,
            reassembly_cap: DEFAULT_REASSEMBLY_CAP,
            tcp_timeout_us: DEFAULT_TCP_TIMEOUT_US,
            udp_timeout_us: DEFAULT_UDP_TIMEOUT_US,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowTableStats {
    pub created: u64,
    pub expired: u64,
    pub table_full: u64,
}

/// Result of running one packet through the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracked {
    pub created: bool,
    pub transition: Transition,
    /// Stream bytes that became contiguous because of this packet.
    pub stream: Vec<u8>,
}

#[derive(Debug)]
pub struct FlowTable {
    flows: HashMap<FlowKey, Flow>,
    config: FlowConfig,
    footprint: usize,
    stats: FlowTableStats,
}

impl FlowTable {
    pub fn new(config: FlowConfig) -> Self {
        FlowTable { flows: HashMap::new(), config, footprint: 0, stats: FlowTableStats::default() }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Sum of every live flow's footprint.
    pub fn footprint_bytes(&self) -> usize {
        self.footprint
    }

    pub fn stats(&self) -> FlowTableStats {
        self.stats
    }

    pub fn get(&self, key: &FlowKey) -> Option<&Flow> {
        self.flows.get(key)
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    pub fn lookup_or_create(
        &mut self,
        key: FlowKey,
        dir: Direction,
        now_us: u64,
    ) -> Result<(&mut Flow, bool), FlowError> {
        let full = self.flows.len() >= self.config.max_flows;
        let created = !self.flows.contains_key(&key);
        if created {
            if full {
                self.stats.table_full += 1;
                return Err(FlowError::TableFull(self.config.max_flows));
            }
            let flow = Flow::new(key, now_us, dir, self.config.per_flow_bytes, self.config.reassembly_cap);
            self.footprint += flow.footprint_bytes();
            self.stats.created += 1;
            self.flows.insert(key, flow);
        }
        Ok((self.flows.get_mut(&key).expect("present"), created))
    }

    /// Looks up (or creates) the packet's flow, updates its state and feeds
    /// TCP payload into reassembly.
    pub fn track(
        &mut self,
        key: FlowKey,
        desc: &PacketDescriptor,
        payload: &[u8],
        dir: Direction,
        now_us: u64,
    ) -> Result<Tracked, FlowError> {
        let (flow, created) = self.lookup_or_create(key, dir, now_us)?;
        let before = flow.footprint_bytes();
        let transition = flow.update(desc, dir, now_us);
        let stream = match desc.tcp {
            Some(tcp) if !payload.is_empty() && !transition.anomaly => flow.reassemble(dir, tcp.seq, payload),
            _ => Vec::new(),
        };
        let after = flow.footprint_bytes();
        self.footprint = self.footprint + after - before;
        Ok(Tracked { created, transition, stream })
    }

    pub fn reassemble(&mut self, key: &FlowKey, dir: Direction, seq: u32, payload: &[u8]) -> Option<Vec<u8>> {
        let flow = self.flows.get_mut(key)?;
        let before = flow.footprint_bytes();
        let out = flow.reassemble(dir, seq, payload);
        self.footprint = self.footprint + flow.footprint_bytes() - before;
        Some(out)
    }

    /// Removes every flow idle for longer than `timeout_us`.
    pub fn expire_flows(&mut self, now_us: u64, timeout_us: u64) -> Vec<Flow> {
        self.expire_by(now_us, |_| timeout_us)
    }

    /// Expiry with the configured per-protocol timeouts.
    pub fn expire_idle(&mut self, now_us: u64) -> Vec<Flow> {
        let (tcp, udp) = (self.config.tcp_timeout_us, self.config.udp_timeout_us);
        self.expire_by(now_us, |proto| if proto == Proto::Tcp { tcp } else { udp })
    }

    fn expire_by(&mut self, now_us: u64, timeout: impl Fn(Proto) -> u64) -> Vec<Flow> {
        let stale: Vec<FlowKey> = self
            .flows
            .values()
            .filter(|f| now_us.saturating_sub(f.last_seen_us) > timeout(f.key.proto))
            .map(|f| f.key)
            .collect();
        let mut out = Vec::with_capacity(stale.len());
        for key in stale {
            let flow = self.flows.remove(&key).expect("listed above");
            self.footprint -= flow.footprint_bytes();
            out.push(flow);
        }
        self.stats.expired += out.len() as u64;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::build::{tcp_frame, udp_frame, TcpSpec};
    use crate::packet::{canonical_key, FiveTuple, PacketPool};
    use std::net::Ipv4Addr;

    fn tuple(proto: Proto, sport: u16, dport: u16) -> FiveTuple {
        FiveTuple::new(proto, Ipv4Addr::new(10, 0, 0, 1), sport, Ipv4Addr::new(10, 0, 0, 2), dport)
    }

    struct Feed {
        pool: PacketPool,
        table: FlowTable,
    }

    impl Feed {
        fn new() -> Self {
            Feed { pool: PacketPool::new(8), table: FlowTable::new(FlowConfig::default()) }
        }

        fn tcp(&mut self, t: &FiveTuple, flags: u8, seq: u32, payload: &[u8], now: u64) -> Tracked {
            let f = tcp_frame(t, &TcpSpec { seq, ack: 0, flags }, payload, 0);
            self.feed(&f, now)
        }

        fn feed(&mut self, frame: &[u8], now: u64) -> Tracked {
            let d = self.pool.decode(frame, now).unwrap();
            let (key, dir) = canonical_key(&d.tuple);
            let r = self.table.track(key, &d, self.pool.payload(&d), dir, now).unwrap();
            self.pool.release(d);
            r
        }

        fn state(&self, t: &FiveTuple) -> FlowState {
            self.table.get(&canonical_key(t).0).unwrap().state
        }
    }

    #[test]
    fn handshake_reaches_established() {
        let mut f = Feed::new();
        let c2s = tuple(Proto::Tcp, 40000, 80);
        let s2c = c2s.reversed();
        let r = f.tcp(&c2s, TCP_SYN, 100, &[], 1);
        assert!(r.created);
        assert_eq!(f.state(&c2s), FlowState::SynSeen);
        let r = f.tcp(&s2c, TCP_SYN | TCP_ACK, 900, &[], 2);
        assert!(!r.created);
        f.tcp(&c2s, TCP_ACK, 101, &[], 3);
        assert_eq!(f.state(&c2s), FlowState::Established);
        let flow = f.table.get(&canonical_key(&c2s).0).unwrap();
        let (_, c2s_dir) = canonical_key(&c2s);
        assert!(flow.to_server(c2s_dir));
        assert_eq!((flow.pkts_fwd + flow.pkts_rev), 3);

        // Stream origin comes from the SYNs.
        assert_eq!(f.tcp(&c2s, TCP_ACK, 101, b"GET", 4).stream, b"GET");
        assert_eq!(f.tcp(&s2c, TCP_ACK, 901, b"200", 5).stream, b"200");
    }

    #[test]
    fn midstream_bidirectional_fallback() {
        let mut f = Feed::new();
        let c2s = tuple(Proto::Tcp, 40000, 443);
        f.tcp(&c2s, TCP_ACK | TCP_PSH, 5, b"hi", 1);
        assert_eq!(f.state(&c2s), FlowState::New);
        f.tcp(&c2s.reversed(), TCP_ACK | TCP_PSH, 77, b"yo", 2);
        assert_eq!(f.state(&c2s), FlowState::Established);
    }

    #[test]
    fn fin_both_ways_closes() {
        let mut f = Feed::new();
        let c2s = tuple(Proto::Tcp, 1, 2);
        f.tcp(&c2s, TCP_ACK, 0, b"a", 0);
        f.tcp(&c2s.reversed(), TCP_ACK, 0, b"b", 0);
        f.tcp(&c2s, TCP_FIN | TCP_ACK, 1, &[], 1);
        assert_eq!(f.state(&c2s), FlowState::Closing);
        f.tcp(&c2s.reversed(), TCP_FIN | TCP_ACK, 1, &[], 2);
        assert_eq!(f.state(&c2s), FlowState::Closed);
    }

    #[test]
    fn anomalous_flags_leave_state() {
        let mut f = Feed::new();
        let t = tuple(Proto::Tcp, 1, 2);
        let r = f.tcp(&t, TCP_SYN | TCP_FIN, 0, &[], 0);
        assert!(r.transition.anomaly);
        assert_eq!(f.state(&t), FlowState::New);
        let r = f.tcp(&t, 0, 0, &[], 0);
        assert!(r.transition.anomaly);
        assert_eq!(f.table.get(&canonical_key(&t).0).unwrap().anomalies, 2);
    }

    #[test]
    fn udp_established_on_reply() {
        let mut f = Feed::new();
        let t = tuple(Proto::Udp, 5353, 53);
        f.feed(&udp_frame(&t, b"q", 0), 0);
        assert_eq!(f.state(&t), FlowState::New);
        f.feed(&udp_frame(&t, b"q2", 0), 0);
        assert_eq!(f.state(&t), FlowState::New);
        f.feed(&udp_frame(&t.reversed(), b"a", 0), 0);
        assert_eq!(f.state(&t), FlowState::Established);
    }

    #[test]
    fn reverse_packet_hits_same_flow() {
        let mut t = FlowTable::new(FlowConfig::default());
        let tup = tuple(Proto::Tcp, 1234, 80);
        let (k1, d1) = canonical_key(&tup);
        let (k2, d2) = canonical_key(&tup.reversed());
        let (_, created) = t.lookup_or_create(k1, d1, 0).unwrap();
        assert!(created);
        let (flow, created) = t.lookup_or_create(k2, d2, 5).unwrap();
        assert!(!created);
        assert_eq!(flow.state, FlowState::New);
        assert_eq!(flow.pkts_fwd + flow.pkts_rev, 0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn table_full_is_reported() {
        let mut t = FlowTable::new(FlowConfig { max_flows: 1, ..FlowConfig::default() });
        let (a, da) = canonical_key(&tuple(Proto::Tcp, 1, 2));
        let (b, db) = canonical_key(&tuple(Proto::Tcp, 3, 4));
        t.lookup_or_create(a, da, 0).unwrap();
        assert_eq!(t.lookup_or_create(b, db, 0).unwrap_err(), FlowError::TableFull(1));
        assert!(t.lookup_or_create(a, da, 0).is_ok());
        assert_eq!(t.stats().table_full, 1);
    }

    #[test]
    fn footprint_for_32k_flows_straddles_epc_budget() {
        let mut t = FlowTable::new(FlowConfig::default());
        for i in 0..32_000u32 {
            let tup =
                FiveTuple::new(Proto::Tcp, Ipv4Addr::from(0x0a00_0000 + i), 1000, Ipv4Addr::new(192, 168, 0, 1), 80);
            let (k, d) = canonical_key(&tup);
            t.lookup_or_create(k, d, 0).unwrap();
        }
        assert_eq!(t.len(), 32_000);
        let fp = t.footprint_bytes();
        assert!((32_000 * MIN_FLOW_BYTES..=32_000 * MAX_FLOW_BYTES).contains(&fp));
        assert_eq!(fp, 32_000 * DEFAULT_FLOW_BYTES);
        // 62.5 MiB .. 125 MiB brackets the 96 MiB budget.
        const { assert!(32_000 * MIN_FLOW_BYTES < 96 << 20 && 32_000 * MAX_FLOW_BYTES > 96 << 20) };
    }

    #[test]
    fn expiry() {
        let mut t = FlowTable::new(FlowConfig::default());
        let (a, da) = canonical_key(&tuple(Proto::Tcp, 1, 2));
        let (b, db) = canonical_key(&tuple(Proto::Tcp, 3, 4));
        t.lookup_or_create(a, da, 0).unwrap();
        t.lookup_or_create(b, db, 30_000_000).unwrap();
        t.reassemble(&a, Direction::Forward, 10, b"pending").unwrap();
        t.reassemble(&a, Direction::Forward, 0, b"x").unwrap();
        let before = t.footprint_bytes();
        let a_fp = t.get(&a).unwrap().footprint_bytes();
        let gone = t.expire_flows(31_000_000, 30_000_000);
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].key, a);
        assert_eq!(t.footprint_bytes(), before - a_fp);
        assert!(t.get(&b).is_some());
        assert_eq!(t.stats().expired, 1);
    }

    #[test]
    fn reassembly_examples() {
        let mut s = SegmentBuffer::with_base(0, DEFAULT_REASSEMBLY_CAP);
        assert_eq!(s.insert(0, &[1; 10]).len(), 10);
        assert_eq!(s.insert(10, &[2; 5]).len(), 5);
        assert_eq!(s.delivered_upto(), 15);

        let mut s = SegmentBuffer::with_base(0, DEFAULT_REASSEMBLY_CAP);
        assert!(s.insert(10, &[2; 10]).is_empty());
        assert_eq!(s.buffered_bytes(), 10);
        let out = s.insert(0, &[1; 10]);
        assert_eq!(out.len(), 20);
        assert_eq!(s.buffered_bytes(), 0);

        let mut s = SegmentBuffer::with_base(0, DEFAULT_REASSEMBLY_CAP);
        let mut out = s.insert(0, b"AAAAAAAAAA");
        out.extend(s.insert(5, b"BBBBBBBBBB"));
        assert_eq!(out, b"AAAAAAAAAABBBBB");
    }

    #[test]
    fn first_arrival_wins_inside_buffer() {
        let mut s = SegmentBuffer::with_base(0, DEFAULT_REASSEMBLY_CAP);
        assert!(s.insert(4, b"xxxx").is_empty());
        assert!(s.insert(2, b"yyyyyyyy").is_empty());
        assert_eq!(s.insert(0, b"zz"), b"zzyyxxxxyy");
    }

    #[test]
    fn sequence_wraparound() {
        let mut s = SegmentBuffer::with_base(u32::MAX - 2, DEFAULT_REASSEMBLY_CAP);
        assert_eq!(s.insert(u32::MAX - 2, b"abc"), b"abc");
        assert_eq!(s.insert(0, b"def"), b"def");
        // Before the origin: only the part past it survives.
        let mut s = SegmentBuffer::with_base(100, DEFAULT_REASSEMBLY_CAP);
        assert_eq!(s.insert(98, b"xxab"), b"ab");
    }

    #[test]
    fn cap_flushes_oldest_gap() {
        let mut s = SegmentBuffer::with_base(0, 8);
        assert!(s.insert(4, b"abcd").is_empty());
        assert!(s.insert(20, b"efgh").is_empty());
        assert_eq!(s.overflows(), 0);
        let out = s.insert(30, b"ij");
        assert_eq!(out, b"abcd");
        assert_eq!(s.overflows(), 1);
        assert_eq!(s.delivered_upto(), 8);
        assert_eq!(s.buffered_bytes(), 6);
    }
}
