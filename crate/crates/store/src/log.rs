//! Record framing for the append-only log.
//!
//! ```text
//! offset  size  field
//! 0       4     payload length N, u32 little-endian
//! 4       1     kind: 0x01 put, 0x02 tombstone
//! 5       32    SHA-256 of the payload
//! 37      N     payload
//! ```
//!
//! A put payload is a canonical scenario document; a tombstone payload is
//! the UTF-8 scenario id.

use std::fs::File;
use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};

pub const HEADER_LEN: usize = 37;
pub const KIND_PUT: u8 = 0x01;
pub const KIND_TOMBSTONE: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub kind: u8,
    pub payload: Vec<u8>,
}

pub fn encode(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&Sha256::digest(payload));
    out.extend_from_slice(payload);
    out
}

/// Outcome of scanning a log image.
#[derive(Debug)]
pub struct Scan {
    /// `(offset, record)` for every intact record.
    pub records: Vec<(u64, Record)>,
    /// Length of the intact prefix.
    pub valid_len: u64,
    /// Why scanning stopped before the end, if it did.
    pub stop: Option<ScanStop>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanStop {
    /// The final record is incomplete: an interrupted append.
    TornTail { offset: u64 },
    /// A complete record failed its checksum or has an unknown kind.
    Corrupt { offset: u64, reason: String },
}

pub fn scan(bytes: &[u8]) -> Scan {
    let mut records = Vec::new();
    let mut pos = 0usize;
    let stop = loop {
        if pos == bytes.len() {
            break None;
        }
        let offset = pos as u64;
        if bytes.len() - pos < HEADER_LEN {
            break Some(ScanStop::TornTail { offset });
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let kind = bytes[pos + 4];
        let sum = &bytes[pos + 5..pos + HEADER_LEN];
        let body = pos + HEADER_LEN;
        if bytes.len() - body < len {
            break Some(ScanStop::TornTail { offset });
        }
        let payload = &bytes[body..body + len];
        let at_end = body + len == bytes.len();
        if Sha256::digest(payload).as_slice() != sum {
            // A bad checksum on the last record is a torn write that happened
            // to include a plausible length.
            break Some(if at_end {
                ScanStop::TornTail { offset }
            } else {
                ScanStop::Corrupt { offset, reason: "checksum mismatch".into() }
            });
        }
        if kind != KIND_PUT && kind != KIND_TOMBSTONE {
            break Some(ScanStop::Corrupt { offset, reason: format!("unknown record kind {kind:#04x}") });
        }
        records.push((offset, Record { kind, payload: payload.to_vec() }));
        pos = body + len;
    };
    let valid_len = match &stop {
        None => bytes.len() as u64,
        Some(ScanStop::TornTail { offset }) | Some(ScanStop::Corrupt { offset, .. }) => *offset,
    };
    Scan { records, valid_len, stop }
}

pub fn read_all(file: &mut File) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Appends one framed record and flushes it to stable storage.
pub fn append(file: &mut File, kind: u8, payload: &[u8]) -> io::Result<u64> {
    let frame = encode(kind, payload);
    file.write_all(&frame)?;
    file.sync_data()?;
    Ok(frame.len() as u64)
}
