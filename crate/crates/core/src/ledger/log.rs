//! Event log file format.
//!
//! A log is a sequence of records, each a 4-byte big-endian length followed
//! by that many bytes of canonical JSON. The first record is a
//! [`LogHeader`] naming the format and the genesis configuration; every
//! following record is one [`LedgerEvent`]. A record is canonical when
//! re-encoding its decoded value reproduces it byte for byte; anything else
//! is refused.
//!
//! The log digest is SHA-256 over the concatenated record bytes (without
//! the length prefixes), rendered as lowercase hex.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::event::LedgerEvent;
use crate::allocation::AllocationConfig;

pub const LOG_FORMAT: &str = "crowdrl-ledger/1";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("record {index}: {message}")]
    Malformed { index: usize, message: String },

    #[error("record {index} is not in canonical form")]
    NonCanonical { index: usize },

    #[error("unsupported log format {0:?}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub config: AllocationConfig,
}

impl LogHeader {
    pub fn new(config: AllocationConfig) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            config,
        }
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("header serializes")
    }
}

fn frame(out: &mut Vec<u8>, record: &[u8]) {
    let len = u32::try_from(record.len()).expect("record under 4 GiB");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(record);
}

/// Encodes a complete log into bytes.
pub fn encode_log(header: &LogHeader, events: &[LedgerEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    frame(&mut out, &header.canonical_bytes());
    for ev in events {
        frame(&mut out, &ev.canonical_bytes());
    }
    out
}

pub fn write_log(path: &Path, header: &LogHeader, events: &[LedgerEvent]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_log(header, events))?;
    f.sync_all()
}

fn split_records(bytes: &[u8]) -> Result<Vec<&[u8]>, LogError> {
    let mut records = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let index = records.len();
        if rest.len() < 4 {
            return Err(LogError::Malformed {
                index,
                message: "truncated length prefix".into(),
            });
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(LogError::Malformed {
                index,
                message: format!("record needs {len} bytes, {} left", rest.len()),
            });
        }
        records.push(&rest[..len]);
        rest = &rest[len..];
    }
    Ok(records)
}

fn decode_canonical<T>(index: usize, bytes: &[u8]) -> Result<T, LogError>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let value: T = serde_json::from_slice(bytes).map_err(|e| LogError::Malformed {
        index,
        message: e.to_string(),
    })?;
    if serde_json::to_vec(&value).expect("decoded value re-encodes") != bytes {
        return Err(LogError::NonCanonical { index });
    }
    Ok(value)
}

pub fn decode_log(bytes: &[u8]) -> Result<(LogHeader, Vec<LedgerEvent>), LogError> {
    let records = split_records(bytes)?;
    let Some((first, rest)) = records.split_first() else {
        return Err(LogError::Malformed {
            index: 0,
            message: "missing header".into(),
        });
    };
    let header: LogHeader = decode_canonical(0, first)?;
    if header.format != LOG_FORMAT {
        return Err(LogError::Format(header.format));
    }
    let events = rest
        .iter()
        .enumerate()
        .map(|(i, r)| decode_canonical(i + 1, r))
        .collect::<Result<Vec<LedgerEvent>, _>>()?;
    Ok((header, events))
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<LedgerEvent>), LogError> {
    decode_log(&fs::read(path)?)
}

/// SHA-256 over the concatenated canonical record bytes.
pub fn log_digest(header: &LogHeader, events: &[LedgerEvent]) -> String {
    let mut h = Sha256::new();
    h.update(header.canonical_bytes());
    for ev in events {
        h.update(ev.canonical_bytes());
    }
    hex::encode(h.finalize())
}
