use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::codec::DecodeError;
use crate::messages::{decode, encode, peek_type, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptFileError {
    #[error("record at byte {offset}: length prefix truncated")]
    TruncatedLength { offset: usize },
    #[error("record at byte {offset}: needs {need} bytes, {have} left")]
    TruncatedRecord { offset: usize, need: usize, have: usize },
    #[error("record at byte {offset}: {source}")]
    Record { offset: usize, source: DecodeError },
    #[error("record {index} is not after tick {previous}")]
    TickOrder { index: usize, previous: u64 },
    #[error("io: {0}")]
    Io(String),
}

/// Append-only log of delivery attempts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `.gsett` layout: each record as a u32 big-endian length followed by
    /// its canonical encoding. No header.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            let enc = encode(r).expect("transcript records always encode");
            out.extend_from_slice(&(enc.len() as u32).to_be_bytes());
            out.extend_from_slice(&enc);
        }
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, TranscriptFileError> {
        let mut records: Vec<TranscriptRecord> = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            let len_bytes: [u8; 4] = bytes
                .get(at..at + 4)
                .and_then(|b| b.try_into().ok())
                .ok_or(TranscriptFileError::TruncatedLength { offset: at })?;
            let need = u32::from_be_bytes(len_bytes) as usize;
            let start = at + 4;
            let have = bytes.len() - start;
            if need > have {
                return Err(TranscriptFileError::TruncatedRecord { offset: at, need, have });
            }
            let record: TranscriptRecord = decode(&bytes[start..start + need])
                .map_err(|source| TranscriptFileError::Record { offset: start, source })?;
            if let Some(prev) = records.last() {
                if record.tick <= prev.tick {
                    return Err(TranscriptFileError::TickOrder { index: records.len(), previous: prev.tick });
                }
            }
            records.push(record);
            at = start + need;
        }
        Ok(Transcript { records })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), TranscriptFileError> {
        std::fs::write(path, self.to_file_bytes()).map_err(|e| TranscriptFileError::Io(e.to_string()))
    }

    pub fn read_from(path: &Path) -> Result<Self, TranscriptFileError> {
        let bytes = std::fs::read(path).map_err(|e| TranscriptFileError::Io(e.to_string()))?;
        Self::from_file_bytes(&bytes)
    }
}

impl FromIterator<TranscriptRecord> for Transcript {
    fn from_iter<I: IntoIterator<Item = TranscriptRecord>>(iter: I) -> Self {
        Transcript { records: iter.into_iter().collect() }
    }
}

/// One line per record: index, tick, route, message type, size, adversary action.
impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.records.iter().enumerate() {
            let ty = peek_type(&r.bytes).map_or("<undecodable>", |t| t.name());
            writeln!(
                f,
                "{i:>4} t={:<5} {} -> {} {} {}B {}",
                r.tick,
                r.from_id,
                r.to_id,
                ty,
                r.bytes.len(),
                r.adversary_action.as_str()
            )?;
        }
        Ok(())
    }
}
