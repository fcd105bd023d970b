//! Frame decoding into zero-copy packet descriptors.
//!
//! Frames are copied exactly once, into a slot of the shared [`PacketPool`].
//! Everything downstream (rings, flow tracking, detection) works on a
//! [`PacketDescriptor`], which carries the slot index plus decoded header
//! offsets, and reads the bytes back out of the pool.

use std::cell::UnsafeCell;
use std::fmt;
use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicU16, AtomicU32, Ordering};

use thiserror::Error;

use crate::ring::{Discipline, Ring};

pub mod build;

/// Size of every pool slot. Covers a 1518-byte Ethernet frame.
pub const SLOT_SIZE: usize = 2048;
pub const ETH_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
    /// Any other IP protocol (or a frame that is not IPv4 at all).
    Other(u8),
}

impl Proto {
    pub fn from_ip_proto(n: u8) -> Self {
        match n {
            6 => Proto::Tcp,
            17 => Proto::Udp,
            1 => Proto::Icmp,
            n => Proto::Other(n),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Proto::Tcp => 6,
            Proto::Udp => 17,
            Proto::Icmp => 1,
            Proto::Other(n) => n,
        }
    }

    pub fn has_ports(self) -> bool {
        matches!(self, Proto::Tcp | Proto::Udp)
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proto::Tcp => f.write_str("TCP"),
            Proto::Udp => f.write_str("UDP"),
            Proto::Icmp => f.write_str("ICMP"),
            Proto::Other(n) => write!(f, "PROTO:{n:03}"),
        }
    }
}

/// Ports are zero exactly when the protocol has none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FiveTuple {
    pub proto: Proto,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FiveTuple {
    pub fn new(proto: Proto, src_ip: Ipv4Addr, src_port: u16, dst_ip: Ipv4Addr, dst_port: u16) -> Self {
        let (src_port, dst_port) = if proto.has_ports() { (src_port, dst_port) } else { (0, 0) };
        FiveTuple { proto, src_ip, dst_ip, src_port, dst_port }
    }

    pub fn reversed(&self) -> Self {
        FiveTuple {
            proto: self.proto,
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            src_port: self.dst_port,
            dst_port: self.src_port,
        }
    }
}

impl Default for FiveTuple {
    fn default() -> Self {
        FiveTuple::new(Proto::Other(0), Ipv4Addr::UNSPECIFIED, 0, Ipv4Addr::UNSPECIFIED, 0)
    }
}

/// Orientation of a packet relative to its flow's canonical key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Bidirectional flow identity: the lower (ip, port) endpoint is `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub proto: Proto,
    pub lo_ip: Ipv4Addr,
    pub lo_port: u16,
    pub hi_ip: Ipv4Addr,
    pub hi_port: u16,
}

impl FlowKey {
    /// Fixed 13-byte big-endian encoding: proto, lo ip, lo port, hi ip, hi port.
    pub fn to_bytes(&self) -> [u8; 13] {
        let mut out = [0u8; 13];
        out[0] = self.proto.number();
        out[1..5].copy_from_slice(&self.lo_ip.octets());
        out[5..7].copy_from_slice(&self.lo_port.to_be_bytes());
        out[7..11].copy_from_slice(&self.hi_ip.octets());
        out[11..13].copy_from_slice(&self.hi_port.to_be_bytes());
        out
    }
}

pub fn canonical_key(tuple: &FiveTuple) -> (FlowKey, Direction) {
    let src = (tuple.src_ip, tuple.src_port);
    let dst = (tuple.dst_ip, tuple.dst_port);
    let (lo, hi, dir) = if src <= dst { (src, dst, Direction::Forward) } else { (dst, src, Direction::Reverse) };
    let key = FlowKey { proto: tuple.proto, lo_ip: lo.0, lo_port: lo.1, hi_ip: hi.0, hi_port: hi.1 };
    (key, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpMeta {
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
}

impl TcpMeta {
    pub fn has(&self, flag: u8) -> bool {
        self.flags & flag != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("frame truncated: {0}")]
    Truncated(&'static str),
    #[error("malformed header: {0}")]
    Malformed(&'static str),
    #[error("frame of {0} bytes exceeds the pool slot size")]
    Oversized(usize),
    #[error("packet pool exhausted")]
    PoolExhausted,
}

/// Header layout of a frame, independent of where its bytes live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Headers {
    pub l3_offset: usize,
    pub l4_offset: usize,
    pub payload_offset: usize,
    /// End of the IP datagram; Ethernet padding past it is not payload.
    pub payload_end: usize,
    pub tuple: FiveTuple,
    pub tcp: Option<TcpMeta>,
    /// False for frames that are not IPv4 (counted, never analyzed).
    pub decode_ok: bool,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses Ethernet/IPv4/transport headers and sanity-checks their lengths.
pub fn parse_headers(frame: &[u8]) -> Result<Headers, DecodeError> {
    if frame.len() < ETH_HEADER_LEN {
        return Err(DecodeError::Truncated("shorter than an Ethernet header"));
    }
    let l3 = ETH_HEADER_LEN;
    if be16(frame, 12) != ETHERTYPE_IPV4 {
        return Ok(Headers {
            l3_offset: l3,
            l4_offset: l3,
            payload_offset: l3,
            payload_end: l3,
            tuple: FiveTuple::default(),
            tcp: None,
            decode_ok: false,
        });
    }
    if frame.len() < l3 + 20 {
        return Err(DecodeError::Truncated("IPv4 header"));
    }
    let vihl = frame[l3];
    if vihl >> 4 != 4 {
        return Err(DecodeError::Malformed("IP version is not 4"));
    }
    let ihl = usize::from(vihl & 0x0f) * 4;
    if ihl < 20 {
        return Err(DecodeError::Malformed("IPv4 header length below 20"));
    }
    let total_len = usize::from(be16(frame, l3 + 2));
    if total_len < ihl {
        return Err(DecodeError::Malformed("IPv4 total length below header length"));
    }
    if l3 + total_len > frame.len() {
        return Err(DecodeError::Truncated("IPv4 total length exceeds frame"));
    }
    let end = l3 + total_len;
    let proto = Proto::from_ip_proto(frame[l3 + 9]);
    let src_ip = Ipv4Addr::new(frame[l3 + 12], frame[l3 + 13], frame[l3 + 14], frame[l3 + 15]);
    let dst_ip = Ipv4Addr::new(frame[l3 + 16], frame[l3 + 17], frame[l3 + 18], frame[l3 + 19]);
    let l4 = l3 + ihl;

    let (payload, ports, tcp) = match proto {
        Proto::Tcp => {
            if l4 + 20 > end {
                return Err(DecodeError::Truncated("TCP header"));
            }
            let data_off = usize::from(frame[l4 + 12] >> 4) * 4;
            if data_off < 20 {
                return Err(DecodeError::Malformed("TCP data offset below 20"));
            }
            if l4 + data_off > end {
                return Err(DecodeError::Truncated("TCP options"));
            }
            let meta = TcpMeta { seq: be32(frame, l4 + 4), ack: be32(frame, l4 + 8), flags: frame[l4 + 13] };
            (l4 + data_off, (be16(frame, l4), be16(frame, l4 + 2)), Some(meta))
        }
        Proto::Udp => {
            if l4 + 8 > end {
                return Err(DecodeError::Truncated("UDP header"));
            }
            (l4 + 8, (be16(frame, l4), be16(frame, l4 + 2)), None)
        }
        Proto::Icmp => {
            if l4 + 8 > end {
                return Err(DecodeError::Truncated("ICMP header"));
            }
            (l4 + 8, (0, 0), None)
        }
        Proto::Other(_) => (l4, (0, 0), None),
    };

    Ok(Headers {
        l3_offset: l3,
        l4_offset: l4,
        payload_offset: payload,
        payload_end: end,
        tuple: FiveTuple::new(proto, src_ip, ports.0, dst_ip, ports.1),
        tcp,
        decode_ok: true,
    })
}

/// A decoded packet living in a pool slot.
///
/// Descriptors are move-only: releasing one back to the pool consumes it, so a
/// slot cannot be recycled while a descriptor for it is still borrowed.
#[derive(Debug, PartialEq, Eq)]
pub struct PacketDescriptor {
    pool_id: u32,
    slot: u32,
    pub frame_len: u16,
    pub arrival_us: u64,
    pub l3_offset: u16,
    pub l4_offset: u16,
    pub payload_offset: u16,
    pub payload_end: u16,
    pub tuple: FiveTuple,
    pub tcp: Option<TcpMeta>,
    pub decode_ok: bool,
}

impl PacketDescriptor {
    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn payload_len(&self) -> usize {
        usize::from(self.payload_end - self.payload_offset)
    }
}

struct Slot {
    len: AtomicU16,
    data: UnsafeCell<[u8; SLOT_SIZE]>,
}

static NEXT_POOL_ID: AtomicU32 = AtomicU32::new(1);

/// Fixed set of frame buffers shared by acquisition and analysis.
pub struct PacketPool {
    id: u32,
    slots: Box<[Slot]>,
    free: Ring<u32>,
    writes: AtomicU32,
}

// A slot is written only by the thread that popped its index off the free
// ring, and read only through descriptors, which exist only between that
// write and the matching release.
unsafe impl Sync for PacketPool {}
unsafe impl Send for PacketPool {}

impl PacketPool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "pool capacity must be positive");
        let free = Ring::new(capacity.next_power_of_two(), Discipline::Mpmc).expect("power of two");
        let slots = (0..capacity)
            .map(|i| {
                free.enqueue(i as u32).expect("free ring sized for all slots");
                Slot { len: AtomicU16::new(0), data: UnsafeCell::new([0u8; SLOT_SIZE]) }
            })
            .collect::<Vec<_>>()
            .into_boxed_slice();
        PacketPool { id: NEXT_POOL_ID.fetch_add(1, Ordering::Relaxed), slots, free, writes: AtomicU32::new(0) }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn available(&self) -> usize {
        self.free.len()
    }

    /// Total frame copies performed into the pool since creation.
    pub fn writes(&self) -> u32 {
        self.writes.load(Ordering::Relaxed)
    }

    /// Decodes `frame` and stores it in a free slot.
    pub fn decode(&self, frame: &[u8], arrival_us: u64) -> Result<PacketDescriptor, DecodeError> {
        if frame.len() > SLOT_SIZE {
            return Err(DecodeError::Oversized(frame.len()));
        }
        let h = parse_headers(frame)?;
        let slot = self.free.dequeue().ok_or(DecodeError::PoolExhausted)?;
        let cell = &self.slots[slot as usize];
        unsafe { (&mut *cell.data.get())[..frame.len()].copy_from_slice(frame) };
        cell.len.store(frame.len() as u16, Ordering::Release);
        self.writes.fetch_add(1, Ordering::Relaxed);
        Ok(PacketDescriptor {
            pool_id: self.id,
            slot,
            frame_len: frame.len() as u16,
            arrival_us,
            l3_offset: h.l3_offset as u16,
            l4_offset: h.l4_offset as u16,
            payload_offset: h.payload_offset as u16,
            payload_end: h.payload_end as u16,
            tuple: h.tuple,
            tcp: h.tcp,
            decode_ok: h.decode_ok,
        })
    }

    pub fn frame<'a>(&'a self, desc: &'a PacketDescriptor) -> &'a [u8] {
        assert_eq!(desc.pool_id, self.id, "descriptor belongs to another pool");
        let cell = &self.slots[desc.slot as usize];
        let len = cell.len.load(Ordering::Acquire) as usize;
        unsafe { &(&*cell.data.get())[..len] }
    }

    pub fn payload<'a>(&'a self, desc: &'a PacketDescriptor) -> &'a [u8] {
        &self.frame(desc)[usize::from(desc.payload_offset)..usize::from(desc.payload_end)]
    }

    pub fn release(&self, desc: PacketDescriptor) {
        assert_eq!(desc.pool_id, self.id, "descriptor belongs to another pool");
        self.free.enqueue(desc.slot).expect("free ring cannot overflow: one entry per slot");
    }
}

impl fmt::Debug for PacketPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PacketPool").field("capacity", &self.capacity()).field("available", &self.available()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::build::{icmp_echo, tcp_frame, udp_frame, TcpSpec};
    use super::*;
    use proptest::prelude::*;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    #[test]
    fn decodes_tcp_frame() {
        let pool = PacketPool::new(4);
        let t = FiveTuple::new(Proto::Tcp, ip("10.0.0.1"), 1234, ip("10.0.0.2"), 80);
        let frame = tcp_frame(&t, &TcpSpec::default(), &[], 0);
        assert_eq!(frame.len(), 54);
        let mut padded = frame.clone();
        padded.resize(60, 0);
        let d = pool.decode(&padded, 7).unwrap();
        assert!(d.decode_ok);
        assert_eq!(d.tuple, t);
        assert_eq!(d.frame_len, 60);
        assert_eq!(d.l3_offset, 14);
        assert_eq!(d.l4_offset, 34);
        assert_eq!(d.payload_offset, 14 + 20 + 20);
        assert_eq!(d.payload_len(), 0);
        assert_eq!(d.arrival_us, 7);
        assert_eq!(pool.available(), 3);
        pool.release(d);
        assert_eq!(pool.available(), 4);
    }

    #[test]
    fn short_frame_is_truncated() {
        let pool = PacketPool::new(1);
        assert!(matches!(pool.decode(&[0u8; 13], 0), Err(DecodeError::Truncated(_))));
        assert_eq!(pool.available(), 1);
    }

    #[test]
    fn icmp_has_zero_ports() {
        let pool = PacketPool::new(1);
        let frame = icmp_echo(ip("10.0.0.1"), ip("10.0.0.9"), b"ping");
        let d = pool.decode(&frame, 0).unwrap();
        assert_eq!(d.tuple.proto, Proto::Icmp);
        assert_eq!((d.tuple.src_port, d.tuple.dst_port), (0, 0));
        assert_eq!(pool.payload(&d), b"ping");
    }

    #[test]
    fn non_ipv4_is_countable_but_not_ok() {
        let pool = PacketPool::new(1);
        let mut frame = vec![0u8; 60];
        frame[12] = 0x86;
        frame[13] = 0xdd;
        let d = pool.decode(&frame, 0).unwrap();
        assert!(!d.decode_ok);
    }

    #[test]
    fn header_sanity_checks() {
        let t = FiveTuple::new(Proto::Udp, ip("1.1.1.1"), 53, ip("2.2.2.2"), 5353);
        let good = udp_frame(&t, b"hello", 0);
        assert!(parse_headers(&good).is_ok());

        let mut bad_version = good.clone();
        bad_version[14] = 0x65;
        assert!(matches!(parse_headers(&bad_version), Err(DecodeError::Malformed(_))));

        let mut long_total = good.clone();
        long_total[16] = 0x05;
        assert!(matches!(parse_headers(&long_total), Err(DecodeError::Truncated(_))));

        let cut = &good[..good.len() - 10];
        assert!(matches!(parse_headers(cut), Err(DecodeError::Truncated(_))));
    }

    #[test]
    fn pool_exhaustion() {
        let pool = PacketPool::new(1);
        let t = FiveTuple::new(Proto::Tcp, ip("10.0.0.1"), 1, ip("10.0.0.2"), 2);
        let f = tcp_frame(&t, &TcpSpec::default(), b"x", 0);
        let d = pool.decode(&f, 0).unwrap();
        assert_eq!(pool.decode(&f, 0), Err(DecodeError::PoolExhausted));
        pool.release(d);
        assert!(pool.decode(&f, 0).is_ok());
        assert_eq!(pool.writes(), 2);
    }

    #[test]
    fn oversized_frame_rejected() {
        let pool = PacketPool::new(1);
        assert_eq!(pool.decode(&vec![0u8; SLOT_SIZE + 1], 0), Err(DecodeError::Oversized(SLOT_SIZE + 1)));
    }

    #[test]
    fn canonical_key_examples() {
        let a = FiveTuple::new(Proto::Tcp, ip("10.0.0.1"), 1234, ip("10.0.0.2"), 80);
        let (ka, da) = canonical_key(&a);
        let (kb, db) = canonical_key(&a.reversed());
        assert_eq!(ka, kb);
        assert_ne!(da, db);

        let same = FiveTuple::new(Proto::Tcp, ip("10.0.0.1"), 1, ip("10.0.0.1"), 1);
        assert_eq!(canonical_key(&same).1, Direction::Forward);

        let udp = FiveTuple { proto: Proto::Udp, ..a };
        assert_ne!(canonical_key(&udp).0, ka);
    }

    fn arb_tuple() -> impl Strategy<Value = FiveTuple> {
        (0u8..4, any::<u32>(), any::<u16>(), any::<u32>(), any::<u16>()).prop_map(|(p, s, sp, d, dp)| {
            let proto = [Proto::Tcp, Proto::Udp, Proto::Icmp, Proto::Other(47)][p as usize];
            FiveTuple::new(proto, Ipv4Addr::from(s), sp, Ipv4Addr::from(d), dp)
        })
    }

    proptest! {
        #[test]
        fn canonical_key_reverse_invariant(t in arb_tuple()) {
            let (k, d) = canonical_key(&t);
            let (kr, dr) = canonical_key(&t.reversed());
            prop_assert_eq!(k, kr);
            if t != t.reversed() {
                prop_assert_ne!(d, dr);
            }
            // Idempotent: the canonical orientation maps to itself, forward.
            let canon = FiveTuple::new(k.proto, k.lo_ip, k.lo_port, k.hi_ip, k.hi_port);
            prop_assert_eq!(canonical_key(&canon), (k, Direction::Forward));
        }

        #[test]
        fn decode_recovers_built_tuple(t in arb_tuple(), payload in proptest::collection::vec(any::<u8>(), 0..200)) {
            let frame = match t.proto {
                Proto::Tcp => tcp_frame(&t, &TcpSpec::default(), &payload, 0),
                Proto::Udp => udp_frame(&t, &payload, 0),
                Proto::Icmp => icmp_echo(t.src_ip, t.dst_ip, &payload),
                Proto::Other(n) => build::ip_frame(n, t.src_ip, t.dst_ip, &payload, 0),
            };
            let pool = PacketPool::new(1);
            let d = pool.decode(&frame, 0).unwrap();
            prop_assert!(d.decode_ok);
            prop_assert_eq!(d.tuple, t);
            prop_assert_eq!(pool.payload(&d), &payload[..]);
            prop_assert!(d.payload_offset >= d.l4_offset && d.l4_offset >= d.l3_offset && d.l3_offset >= 14);
            prop_assert!(d.payload_end <= d.frame_len);
        }
    }
}
