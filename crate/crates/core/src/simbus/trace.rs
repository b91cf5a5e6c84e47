use sha2::{Digest, Sha256};

use super::clock::{ticks_to_seconds, Tick};
use super::message::{Field, Payload, SharedMessage};

/// One delivered message and the step at which it was delivered.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub tick: Tick,
    pub msg: SharedMessage,
}

impl TraceEntry {
    pub fn delivered_at(&self) -> f64 {
        ticks_to_seconds(self.tick)
    }
}

/// Ordered record of every message delivered during a run.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    entries: Vec<TraceEntry>,
}

impl RunTrace {
    pub(crate) fn push(&mut self, e: TraceEntry) {
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn on_topic<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a TraceEntry> + 'a {
        self.entries.iter().filter(move |e| e.msg.topic == topic)
    }

    /// Sorted, de-duplicated topic names.
    pub fn topics(&self) -> Vec<String> {
        let mut t: Vec<String> = self.entries.iter().map(|e| e.msg.topic.clone()).collect();
        t.sort();
        t.dedup();
        t
    }

    /// Canonical byte encoding: delivery tick, topic, stamp bits, seq,
    /// publisher and payload leaves with exact float bits.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.entries.len() * 64);
        for e in &self.entries {
            out.extend_from_slice(&e.tick.to_le_bytes());
            encode_str(&mut out, &e.msg.topic);
            out.extend_from_slice(&e.msg.stamp.to_bits().to_le_bytes());
            out.extend_from_slice(&e.msg.seq.to_le_bytes());
            out.extend_from_slice(&(e.msg.publisher as u64).to_le_bytes());
            encode_payload(&mut out, &e.msg.payload);
        }
        out
    }

    /// SHA-256 of [`RunTrace::canonical_bytes`], hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn encode_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_payload(out: &mut Vec<u8>, p: &Payload) {
    out.push(b'{');
    for (k, v) in p.iter() {
        encode_str(out, k);
        match v {
            Field::Scalar(x) => {
                out.push(b's');
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
            Field::Vector(xs) => {
                out.push(b'v');
                out.extend_from_slice(&(xs.len() as u32).to_le_bytes());
                for x in xs {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
            Field::Text(t) => {
                out.push(b't');
                encode_str(out, t);
            }
            Field::Tree(t) => encode_payload(out, t),
        }
    }
    out.push(b'}');
}
