//! Hand-built Ethernet/IPv4 frames for the generator and tests.

use std::net::Ipv4Addr;

use super::{FiveTuple, ETHERTYPE_IPV4, TCP_ACK};

const SRC_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x01];
const DST_MAC: [u8; 6] = [0x02, 0x00, 0x00, 0x00, 0x00, 0x02];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpSpec {
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
}

impl Default for TcpSpec {
    fn default() -> Self {
        TcpSpec { seq: 0, ack: 0, flags: TCP_ACK }
    }
}

fn checksum(bytes: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in bytes.chunks(2) {
        let word =
            if chunk.len() == 2 { u16::from_be_bytes([chunk[0], chunk[1]]) } else { u16::from_be_bytes([chunk[0], 0]) };
        sum += u32::from(word);
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn push_eth_ip(buf: &mut Vec<u8>, proto: u8, src: Ipv4Addr, dst: Ipv4Addr, l4_len: usize) {
    buf.extend_from_slice(&DST_MAC);
    buf.extend_from_slice(&SRC_MAC);
    buf.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    let start = buf.len();
    let total = (20 + l4_len) as u16;
    buf.extend_from_slice(&[0x45, 0x00]);
    buf.extend_from_slice(&total.to_be_bytes());
    buf.extend_from_slice(&[0x00, 0x00, 0x40, 0x00, 64, proto, 0x00, 0x00]);
    buf.extend_from_slice(&src.octets());
    buf.extend_from_slice(&dst.octets());
    let sum = checksum(&buf[start..start + 20]);
    buf[start + 10..start + 12].copy_from_slice(&sum.to_be_bytes());
}

fn pad(buf: &mut Vec<u8>, pad_to: usize) {
    if buf.len() < pad_to {
        buf.resize(pad_to, 0);
    }
}

/// Writes an Ethernet/IPv4/TCP frame into `buf` (cleared first). Frames
/// shorter than `pad_to` get trailing Ethernet padding, which is not part of
/// the IP datagram.
pub fn write_tcp_frame(buf: &mut Vec<u8>, t: &FiveTuple, tcp: &TcpSpec, payload: &[u8], pad_to: usize) {
    buf.clear();
    push_eth_ip(buf, 6, t.src_ip, t.dst_ip, 20 + payload.len());
    buf.extend_from_slice(&t.src_port.to_be_bytes());
    buf.extend_from_slice(&t.dst_port.to_be_bytes());
    buf.extend_from_slice(&tcp.seq.to_be_bytes());
    buf.extend_from_slice(&tcp.ack.to_be_bytes());
    buf.extend_from_slice(&[0x50, tcp.flags, 0xff, 0xff, 0x00, 0x00, 0x00, 0x00]);
    buf.extend_from_slice(payload);
    pad(buf, pad_to);
}

pub fn tcp_frame(t: &FiveTuple, tcp: &TcpSpec, payload: &[u8], pad_to: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(54 + payload.len());
    write_tcp_frame(&mut buf, t, tcp, payload, pad_to);
    buf
}

pub fn udp_frame(t: &FiveTuple, payload: &[u8], pad_to: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(42 + payload.len());
    push_eth_ip(&mut buf, 17, t.src_ip, t.dst_ip, 8 + payload.len());
    buf.extend_from_slice(&t.src_port.to_be_bytes());
    buf.extend_from_slice(&t.dst_port.to_be_bytes());
    buf.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(payload);
    pad(&mut buf, pad_to);
    buf
}

pub fn icmp_echo(src: Ipv4Addr, dst: Ipv4Addr, payload: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(42 + payload.len());
    push_eth_ip(&mut buf, 1, src, dst, 8 + payload.len());
    let start = buf.len();
    buf.extend_from_slice(&[8, 0, 0, 0, 0, 1, 0, 1]);
    buf.extend_from_slice(payload);
    let sum = checksum(&buf[start..]);
    buf[start + 2..start + 4].copy_from_slice(&sum.to_be_bytes());
    buf
}

/// Bare IPv4 datagram with an arbitrary protocol number.
pub fn ip_frame(proto: u8, src: Ipv4Addr, dst: Ipv4Addr, payload: &[u8], pad_to: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(34 + payload.len());
    push_eth_ip(&mut buf, proto, src, dst, payload.len());
    buf.extend_from_slice(payload);
    pad(&mut buf, pad_to);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ip_checksum_verifies() {
        let t = FiveTuple::new(super::super::Proto::Tcp, Ipv4Addr::new(10, 0, 0, 1), 1, Ipv4Addr::new(10, 0, 0, 2), 2);
        let f = tcp_frame(&t, &TcpSpec::default(), b"abc", 0);
        // A header including its checksum sums to 0xffff, i.e. complements to 0.
        assert_eq!(checksum(&f[14..34]), 0);
    }
}
