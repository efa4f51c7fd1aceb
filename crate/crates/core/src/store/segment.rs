//! Bit-exact segment file layout (all integers little-endian):
//!
//! ```text
//! header:  "TECG" | version u16 | meta_len u32 | meta (JSON, meta_len bytes)
//! record:  seq u32 | start_ts_us u64 | count u16 | codes count*u16 | flags count*u8 | crc32 u32
//! ```
//!
//! The record CRC covers every record byte before it.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::signal::AdcConfig;
use crate::wire::{SampleBatch, StoredSample};

pub const MAGIC: &[u8; 4] = b"TECG";
pub const VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "tecg";

const HEADER_FIXED: usize = 4 + 2 + 4;
const RECORD_FIXED: usize = 4 + 8 + 2;
const CRC_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub session_id: String,
    pub device_id: String,
    pub patient_id: String,
    pub sample_rate_hz: u32,
    pub adc: AdcConfig,
}

pub fn encode_header(meta: &SegmentMeta) -> Vec<u8> {
    let json = serde_json::to_vec(meta).expect("segment meta serializes");
    let mut out = Vec::with_capacity(HEADER_FIXED + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

/// Returns the metadata and the header's byte length.
pub fn decode_header(buf: &[u8]) -> Result<(SegmentMeta, usize), StoreError> {
    if buf.len() < HEADER_FIXED {
        return Err(StoreError::BadHeader(format!(
            "{} bytes is shorter than the fixed header",
            buf.len()
        )));
    }
    if &buf[..4] != MAGIC {
        return Err(StoreError::BadHeader("magic is not TECG".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(StoreError::BadHeader(format!(
            "unsupported version {version}"
        )));
    }
    let meta_len = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let end = HEADER_FIXED + meta_len;
    if buf.len() < end {
        return Err(StoreError::BadHeader("metadata truncated".into()));
    }
    let meta = serde_json::from_slice(&buf[HEADER_FIXED..end])
        .map_err(|e| StoreError::BadHeader(format!("metadata: {e}")))?;
    Ok((meta, end))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRecord {
    pub seq: u32,
    pub start_ts_us: u64,
    pub codes: Vec<u16>,
    pub flags: Vec<u8>,
}

/// Why decoding stopped before the end of the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFault {
    /// Not enough bytes left for a complete record.
    Truncated,
    ZeroCount,
    CrcMismatch,
}

impl SegmentRecord {
    pub fn from_batch(batch: &SampleBatch) -> Result<Self, StoreError> {
        if batch.codes.is_empty() || batch.codes.len() != batch.flags.len() {
            return Err(StoreError::MalformedBatch(
                "codes and flags must be equal-length and nonempty".into(),
            ));
        }
        if batch.codes.len() > u16::MAX as usize {
            return Err(StoreError::MalformedBatch(format!(
                "{} samples exceeds record capacity",
                batch.codes.len()
            )));
        }
        let codes = batch
            .codes
            .iter()
            .map(|&c| {
                u16::try_from(c)
                    .map_err(|_| StoreError::MalformedBatch(format!("code {c} wider than 16 bits")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            seq: batch.seq,
            start_ts_us: batch.start_ts_us,
            codes,
            flags: batch.flags.clone(),
        })
    }

    pub fn to_batch(&self) -> SampleBatch {
        SampleBatch {
            seq: self.seq,
            start_ts_us: self.start_ts_us,
            codes: self.codes.iter().map(|&c| c as u32).collect(),
            flags: self.flags.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        RECORD_FIXED + 3 * self.codes.len() + CRC_LEN
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        debug_assert_eq!(self.codes.len(), self.flags.len());
        let start = out.len();
        out.reserve(self.encoded_len());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.start_ts_us.to_le_bytes());
        out.extend_from_slice(&(self.codes.len() as u16).to_le_bytes());
        for c in &self.codes {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&self.flags);
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decode one record from the front of `buf`, returning it with the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), RecordFault> {
        if buf.len() < RECORD_FIXED {
            return Err(RecordFault::Truncated);
        }
        let seq = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let start_ts_us = u64::from_le_bytes(buf[4..12].try_into().unwrap());
        let count = u16::from_le_bytes([buf[12], buf[13]]) as usize;
        let total = RECORD_FIXED + 3 * count + CRC_LEN;
        if buf.len() < total {
            return Err(RecordFault::Truncated);
        }
        let body_end = total - CRC_LEN;
        let stored = u32::from_le_bytes(buf[body_end..total].try_into().unwrap());
        if crc32fast::hash(&buf[..body_end]) != stored {
            return Err(RecordFault::CrcMismatch);
        }
        if count == 0 {
            return Err(RecordFault::ZeroCount);
        }
        let codes_end = RECORD_FIXED + 2 * count;
        let codes = buf[RECORD_FIXED..codes_end]
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        let flags = buf[codes_end..body_end].to_vec();
        Ok((
            Self {
                seq,
                start_ts_us,
                codes,
                flags,
            },
            total,
        ))
    }

    /// Expand to per-sample timestamps `start + round(i * 1e6 / rate)`.
    pub fn samples(&self, rate_hz: u32) -> impl Iterator<Item = StoredSample> + '_ {
        self.codes
            .iter()
            .zip(&self.flags)
            .enumerate()
            .map(move |(i, (&code, &flags))| StoredSample {
                ts_us: sample_ts_us(self.start_ts_us, i as u64, rate_hz),
                code,
                flags,
            })
    }
}

/// `start + round_half_up(index * 1e6 / rate)` in exact integer arithmetic.
pub fn sample_ts_us(start_ts_us: u64, index: u64, rate_hz: u32) -> u64 {
    let rate = rate_hz as u128;
    let offset = (2 * index as u128 * 1_000_000 + rate) / (2 * rate);
    start_ts_us + offset as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Corruption {
    /// The file ends partway through a record.
    Truncated { offset: u64, trailing_bytes: u64 },
    /// A complete-looking record failed its checksum or is structurally
    /// invalid.
    BadRecord { offset: u64, fault: RecordFault },
    /// A valid record whose seq does not follow its predecessor.
    SeqOutOfOrder { offset: u64, prev: u32, got: u32 },
}

impl Corruption {
    pub fn offset(&self) -> u64 {
        match *self {
            Corruption::Truncated { offset, .. }
            | Corruption::BadRecord { offset, .. }
            | Corruption::SeqOutOfOrder { offset, .. } => offset,
        }
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Corruption::Truncated {
                offset,
                trailing_bytes,
            } => write!(
                f,
                "truncated record at byte {offset} ({trailing_bytes} trailing bytes)"
            ),
            Corruption::BadRecord { offset, fault } => {
                write!(f, "invalid record at byte {offset}: {fault:?}")
            }
            Corruption::SeqOutOfOrder { offset, prev, got } => {
                write!(f, "record at byte {offset} has seq {got} after {prev}")
            }
        }
    }
}

/// Result of validating a segment from its first byte.
#[derive(Debug, Clone)]
pub struct SegmentScan {
    pub meta: SegmentMeta,
    pub records: Vec<SegmentRecord>,
    /// Length of the longest valid prefix.
    pub valid_len: u64,
    pub total_len: u64,
    pub corruption: Option<Corruption>,
}

impl SegmentScan {
    pub fn last_seq(&self) -> Option<u32> {
        self.records.last().map(|r| r.seq)
    }

    pub fn sample_count(&self) -> usize {
        self.records.iter().map(SegmentRecord::len).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.corruption.is_none()
    }

    /// Samples with `from_us <= ts < to_us`, ascending.
    pub fn range(&self, from_us: u64, to_us: u64) -> Vec<StoredSample> {
        let rate = self.meta.sample_rate_hz;
        self.records
            .iter()
            .flat_map(|r| r.samples(rate))
            .filter(|s| s.ts_us >= from_us && s.ts_us < to_us)
            .collect()
    }

    pub fn all_samples(&self) -> Vec<StoredSample> {
        self.range(0, u64::MAX)
    }
}

/// Decode a whole segment image. Only a bad header is an error; damage
/// after it is reported in [`SegmentScan::corruption`].
pub fn scan_bytes(buf: &[u8]) -> Result<SegmentScan, StoreError> {
    let (meta, mut pos) = decode_header(buf)?;
    let mut records: Vec<SegmentRecord> = Vec::new();
    let mut corruption = None;
    while pos < buf.len() {
        match SegmentRecord::decode(&buf[pos..]) {
            Ok((rec, used)) => {
                if let Some(prev) = records.last() {
                    if rec.seq != prev.seq.wrapping_add(1) {
                        corruption = Some(Corruption::SeqOutOfOrder {
                            offset: pos as u64,
                            prev: prev.seq,
                            got: rec.seq,
                        });
                        break;
                    }
                }
                records.push(rec);
                pos += used;
            }
            Err(RecordFault::Truncated) => {
                corruption = Some(Corruption::Truncated {
                    offset: pos as u64,
                    trailing_bytes: (buf.len() - pos) as u64,
                });
                break;
            }
            Err(fault) => {
                corruption = Some(Corruption::BadRecord {
                    offset: pos as u64,
                    fault,
                });
                break;
            }
        }
    }
    Ok(SegmentScan {
        meta,
        records,
        valid_len: pos as u64,
        total_len: buf.len() as u64,
        corruption,
    })
}
