//! Binary transmission-outcome traces.
//!
//! An [`OutcomeTrace`] is the ordered list of outcomes `x_i` logged for one
//! channel, one sample every `period_s` seconds: `1` when the ACK for the
//! probe frame came back, `0` when it did not. Traces come from the
//! Gilbert-Elliott simulator in [`sim`] or from disk via the CSV ([`text`])
//! and bit-packed ([`packed`]) codecs.

mod packed;
mod sim;
mod stats;
mod text;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use packed::{decode_packed, encode_packed, HEADER_LEN, MAGIC};
pub use sim::{
    conditional_fdr, simulate_many, simulate_trace, simulate_with_states, stationary_fdr,
    ChannelState, Drift, GeChannelSpec, PRESET_NAMES,
};
pub use stats::{trace_stats, TraceStats};
pub use text::{load_trace_text, read_trace_text, save_trace_text, write_trace_text, ParsedTrace};

/// Sampling period of the probe stream, in seconds.
pub const DEFAULT_PERIOD_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTrace {
    channel_id: u32,
    period_s: f64,
    outcomes: Vec<u8>,
}

impl OutcomeTrace {
    /// Builds a trace, checking that every outcome is 0 or 1, the period is
    /// positive and the trace is not empty.
    pub fn new(channel_id: u32, period_s: f64, outcomes: Vec<u8>) -> Result<Self> {
        if !(period_s.is_finite() && period_s > 0.0) {
            return Err(Error::InvalidTrace(format!("period_s must be > 0, got {period_s}")));
        }
        if outcomes.is_empty() {
            return Err(Error::InvalidTrace("trace has no samples".into()));
        }
        if let Some(pos) = outcomes.iter().position(|&x| x > 1) {
            return Err(Error::InvalidTrace(format!(
                "outcome at index {pos} is {}, expected 0 or 1",
                outcomes[pos]
            )));
        }
        Ok(Self { channel_id, period_s, outcomes })
    }

    pub fn from_bools(channel_id: u32, period_s: f64, outcomes: &[bool]) -> Result<Self> {
        Self::new(channel_id, period_s, outcomes.iter().map(|&b| b as u8).collect())
    }

    pub fn channel_id(&self) -> u32 {
        self.channel_id
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn successes(&self) -> u64 {
        self.outcomes.iter().map(|&x| x as u64).sum()
    }

    /// Fraction of successful attempts over the whole trace.
    pub fn mean(&self) -> f64 {
        self.successes() as f64 / self.len() as f64
    }

    /// Duration covered by the trace in seconds.
    pub fn duration_s(&self) -> f64 {
        self.len() as f64 * self.period_s
    }

    /// Joins traces end to end. Channel id and period come from the first part.
    pub fn concat(parts: &[OutcomeTrace]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("trace list"))?;
        let outcomes = parts.iter().flat_map(|t| t.outcomes.iter().copied()).collect();
        Self::new(first.channel_id, first.period_s, outcomes)
    }

    /// Hex SHA-256 of the packed encoding; identifies a trace in manifests.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(encode_packed(self)))
    }
}
