//! Classic libpcap capture files.
//!
//! Reads either byte order and both the microsecond and nanosecond magic;
//! writes little-endian microsecond files with an Ethernet link type.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;
const DEFAULT_SNAPLEN: u32 = 65_535;
/// Upper bound on a record we are willing to allocate for.
const MAX_RECORD: u32 = 256 * 1024;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("file ends inside the global header")]
    TruncatedHeader,
    #[error("record {index} is truncated")]
    TruncatedRecord { index: u64 },
    #[error("record {index} claims {len} bytes")]
    OversizedRecord { index: u64, len: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub big_endian: bool,
    pub nanos: bool,
    pub version: (u16, u16),
    pub snaplen: u32,
    pub linktype: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapPacket {
    pub ts_us: u64,
    /// Length on the wire; may exceed `data.len()` when the capture was cut.
    pub orig_len: u32,
    pub data: Vec<u8>,
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean EOF before the
/// first byte, `UnexpectedEof` on a partial read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

#[derive(Debug)]
pub struct PcapReader<R> {
    inner: R,
    header: PcapHeader,
    index: u64,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut h = [0u8; 24];
        match read_full(&mut inner, &mut h) {
            Ok(true) => {}
            Ok(false) => return Err(PcapError::TruncatedHeader),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(PcapError::TruncatedHeader),
            Err(e) => return Err(e.into()),
        }
        let le = u32::from_le_bytes([h[0], h[1], h[2], h[3]]);
        let (big_endian, nanos) = match (le, le.swap_bytes()) {
            (MAGIC_MICROS, _) => (false, false),
            (MAGIC_NANOS, _) => (false, true),
            (_, MAGIC_MICROS) => (true, false),
            (_, MAGIC_NANOS) => (true, true),
            _ => return Err(PcapError::BadMagic(u32::from_be_bytes([h[0], h[1], h[2], h[3]]))),
        };
        let u16_at = |i: usize| {
            let b = [h[i], h[i + 1]];
            if big_endian {
                u16::from_be_bytes(b)
            } else {
                u16::from_le_bytes(b)
            }
        };
        let u32_at = |i: usize| {
            let b = [h[i], h[i + 1], h[i + 2], h[i + 3]];
            if big_endian {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        let header = PcapHeader {
            big_endian,
            nanos,
            version: (u16_at(4), u16_at(6)),
            snaplen: u32_at(16),
            linktype: u32_at(20),
        };
        Ok(PcapReader { inner, header, index: 0 })
    }

    pub fn header(&self) -> &PcapHeader {
        &self.header
    }

    fn u32(&self, b: &[u8]) -> u32 {
        let b = [b[0], b[1], b[2], b[3]];
        if self.header.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    }

    /// Next record, or `None` at end of file.
    pub fn next_packet(&mut self) -> Result<Option<PcapPacket>, PcapError> {
        let index = self.index;
        let truncated = |e: io::Error| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                PcapError::TruncatedRecord { index }
            } else {
                PcapError::Io(e)
            }
        };
        let mut rh = [0u8; 16];
        if !read_full(&mut self.inner, &mut rh).map_err(truncated)? {
            return Ok(None);
        }
        let secs = u64::from(self.u32(&rh[0..4]));
        let frac = u64::from(self.u32(&rh[4..8]));
        let incl = self.u32(&rh[8..12]);
        let orig_len = self.u32(&rh[12..16]);
        if incl > MAX_RECORD {
            return Err(PcapError::OversizedRecord { index, len: incl });
        }
        let mut data = vec![0u8; incl as usize];
        if !read_full(&mut self.inner, &mut data).map_err(truncated)? && incl > 0 {
            return Err(PcapError::TruncatedRecord { index });
        }
        self.index += 1;
        let ts_us = secs * 1_000_000 + if self.header.nanos { frac / 1000 } else { frac };
        Ok(Some(PcapPacket { ts_us, orig_len, data }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PcapPacket, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_packet().transpose()
    }
}

#[derive(Debug)]
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        let mut h = Vec::with_capacity(24);
        h.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&0i32.to_le_bytes());
        h.extend_from_slice(&0u32.to_le_bytes());
        h.extend_from_slice(&DEFAULT_SNAPLEN.to_le_bytes());
        h.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&h)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_packet(&mut self, ts_us: u64, frame: &[u8]) -> io::Result<()> {
        let mut rh = [0u8; 16];
        rh[0..4].copy_from_slice(&((ts_us / 1_000_000) as u32).to_le_bytes());
        rh[4..8].copy_from_slice(&((ts_us % 1_000_000) as u32).to_le_bytes());
        rh[8..12].copy_from_slice(&(frame.len() as u32).to_le_bytes());
        rh[12..16].copy_from_slice(&(frame.len() as u32).to_le_bytes());
        self.inner.write_all(&rh)?;
        self.inner.write_all(frame)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn pcap_read(path: impl AsRef<Path>) -> Result<Vec<PcapPacket>, PcapError> {
    PcapReader::new(BufReader::new(File::open(path)?))?.collect()
}

pub(crate) fn read_pcap_frames(path: &Path) -> Result<Vec<Vec<u8>>, PcapError> {
    Ok(pcap_read(path)?.into_iter().map(|p| p.data).collect())
}

/// Writes frames with timestamps `ts_us`.
pub fn pcap_write<'a>(
    path: impl AsRef<Path>,
    packets: impl IntoIterator<Item = (u64, &'a [u8])>,
) -> Result<u64, PcapError> {
    let mut w = PcapWriter::new(BufWriter::new(File::create(path)?))?;
    let mut n = 0;
    for (ts, frame) in packets {
        w.write_packet(ts, frame)?;
        n += 1;
    }
    w.into_inner()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn file(records: &[(u64, Vec<u8>)]) -> Vec<u8> {
        let mut w = PcapWriter::new(Vec::new()).unwrap();
        for (ts, f) in records {
            w.write_packet(*ts, f).unwrap();
        }
        w.into_inner().unwrap()
    }

    #[test]
    fn round_trip() {
        let recs = vec![(1_500_000, vec![1, 2, 3]), (2_000_001, vec![]), (3, vec![9; 1500])];
        let bytes = file(&recs);
        assert_eq!(&bytes[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        let r = PcapReader::new(Cursor::new(bytes)).unwrap();
        assert_eq!(r.header().linktype, LINKTYPE_ETHERNET);
        let got: Vec<(u64, Vec<u8>)> = r.map(|p| p.map(|p| (p.ts_us, p.data))).collect::<Result<_, _>>().unwrap();
        assert_eq!(got, recs);
    }

    #[test]
    fn big_endian_and_nanosecond_files() {
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC_NANOS.to_be_bytes());
        b.extend_from_slice(&2u16.to_be_bytes());
        b.extend_from_slice(&4u16.to_be_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&65535u32.to_be_bytes());
        b.extend_from_slice(&1u32.to_be_bytes());
        b.extend_from_slice(&7u32.to_be_bytes());
        b.extend_from_slice(&5_000u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&60u32.to_be_bytes());
        b.extend_from_slice(&[0xaa, 0xbb]);
        let mut r = PcapReader::new(Cursor::new(b)).unwrap();
        assert!(r.header().big_endian && r.header().nanos);
        let p = r.next_packet().unwrap().unwrap();
        assert_eq!((p.ts_us, p.orig_len, p.data), (7_000_005, 60, vec![0xaa, 0xbb]));
        assert!(r.next_packet().unwrap().is_none());
    }

    #[test]
    fn errors() {
        let bytes = file(&[(0, vec![1, 2, 3, 4])]);
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(PcapReader::new(Cursor::new(bad)), Err(PcapError::BadMagic(_))));
        assert!(matches!(PcapReader::new(Cursor::new(&bytes[..10])), Err(PcapError::TruncatedHeader)));
        for cut in [bytes.len() - 1, 24 + 8] {
            let mut r = PcapReader::new(Cursor::new(&bytes[..cut])).unwrap();
            assert!(matches!(r.next_packet(), Err(PcapError::TruncatedRecord { index: 0 })));
        }
    }
}
