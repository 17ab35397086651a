use serde::{Deserialize, Serialize};

use super::wire::{MessageKind, WireMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Master,
    Worker(u32),
}

/// Whether payload bytes are kept. `Headers` keeps only length and checksum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TranscriptMode {
    #[default]
    Headers,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub task_id: u64,
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload_len: usize,
    /// CRC32 of the payload, as carried on the wire.
    pub checksum: u32,
    #[serde(skip)]
    pub payload: Option<Vec<u8>>,
}

/// Message totals derived from a transcript.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCounts {
    pub master_to_worker: u64,
    pub worker_to_master: u64,
    pub worker_to_worker: u64,
    pub bytes_master_to_worker: u64,
    pub bytes_worker_to_master: u64,
}

/// Append-only record of every message the master sent or received.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub mode: TranscriptMode,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(mode: TranscriptMode) -> Self {
        Transcript {
            mode,
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, msg: &WireMessage, from: Endpoint, to: Endpoint) {
        self.entries.push(TranscriptEntry {
            seq: self.entries.len() as u64,
            task_id: msg.task_id,
            kind: msg.kind,
            from,
            to,
            payload_len: msg.payload.len(),
            checksum: msg.checksum(),
            payload: (self.mode == TranscriptMode::Full).then(|| msg.payload.clone()),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every entry with worker `i` at either end.
    pub fn view_of(&self, i: u32) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries
            .iter()
            .filter(move |e| e.from == Endpoint::Worker(i) || e.to == Endpoint::Worker(i))
    }

    pub fn counts(&self) -> TrafficCounts {
        let mut c = TrafficCounts::default();
        for e in &self.entries {
            match (e.from, e.to) {
                (Endpoint::Master, Endpoint::Worker(_)) => {
                    c.master_to_worker += 1;
                    c.bytes_master_to_worker += e.payload_len as u64;
                }
                (Endpoint::Worker(_), Endpoint::Master) => {
                    c.worker_to_master += 1;
                    c.bytes_worker_to_master += e.payload_len as u64;
                }
                (Endpoint::Worker(_), Endpoint::Worker(_)) => c.worker_to_worker += 1,
                (Endpoint::Master, Endpoint::Master) => {}
            }
        }
        c
    }
}

/// Whether `needle` occurs in `haystack`.
pub fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}
