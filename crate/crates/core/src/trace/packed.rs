//! Bit-packed trace format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FDR1"
//! 4       4     channel_id, u32 little-endian
//! 8       8     period_s, f64 little-endian
//! 16      8     N, u64 little-endian
//! 24      ...   ceil(N/8) payload bytes, outcome i in bit (i % 8) of byte i / 8
//! ```
//!
//! Unused high bits of the last byte must be zero.

use super::OutcomeTrace;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FDR1";
pub const HEADER_LEN: usize = 24;

pub fn encode_packed(trace: &OutcomeTrace) -> Vec<u8> {
    let n = trace.len();
    let mut out = Vec::with_capacity(HEADER_LEN + n.div_ceil(8));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&trace.channel_id().to_le_bytes());
    out.extend_from_slice(&trace.period_s().to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for chunk in trace.outcomes().chunks(8) {
        let byte = chunk.iter().enumerate().fold(0u8, |acc, (bit, &x)| acc | (x << bit));
        out.push(byte);
    }
    out
}

pub fn decode_packed(bytes: &[u8]) -> Result<OutcomeTrace> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} bytes, need {HEADER_LEN}",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let channel_id = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let period_s = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let needed = n.div_ceil(8);
    if needed > payload.len() as u64 {
        return Err(Error::Format(format!(
            "declared {n} outcomes need {needed} payload bytes, found {}",
            payload.len()
        )));
    }
    if needed < payload.len() as u64 {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() as u64 - needed
        )));
    }
    let n = n as usize;
    if n % 8 != 0 {
        let last = payload[payload.len() - 1];
        if last >> (n % 8) != 0 {
            return Err(Error::Format("nonzero padding bits in last payload byte".into()));
        }
    }
    let outcomes = (0..n).map(|i| (payload[i / 8] >> (i % 8)) & 1).collect();
    OutcomeTrace::new(channel_id, period_s, outcomes).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lsb_first_bit_order() {
        let t = OutcomeTrace::new(1, 0.5, vec![1, 0, 1, 1, 0, 0, 1, 0]).unwrap();
        let bytes = encode_packed(&t);
        assert_eq!(bytes.len(), HEADER_LEN + 1);
        assert_eq!(bytes[HEADER_LEN], 0b0100_1101);
        assert_eq!(&bytes[..4], b"FDR1");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let t = OutcomeTrace::new(9, 0.5, vec![1; 100]).unwrap();
        let bytes = encode_packed(&t);
        let err = decode_packed(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn bad_magic_and_header() {
        let t = OutcomeTrace::new(9, 0.5, vec![1; 10]).unwrap();
        let mut bytes = encode_packed(&t);
        assert!(decode_packed(&bytes[..10]).is_err());
        bytes[0] = b'X';
        assert!(decode_packed(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn count_larger_than_payload() {
        let t = OutcomeTrace::new(9, 0.5, vec![1; 16]).unwrap();
        let mut bytes = encode_packed(&t);
        bytes[16..24].copy_from_slice(&1000u64.to_le_bytes());
        assert!(decode_packed(&bytes).is_err());
    }

    #[test]
    fn dirty_padding_and_zero_count() {
        let t = OutcomeTrace::new(9, 0.5, vec![1; 3]).unwrap();
        let mut bytes = encode_packed(&t);
        bytes[HEADER_LEN] |= 0b1000_0000;
        assert!(decode_packed(&bytes).is_err());
        let mut empty = bytes[..HEADER_LEN].to_vec();
        empty[16..24].copy_from_slice(&0u64.to_le_bytes());
        assert!(decode_packed(&empty).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(0u8..=1, 1..2000), ch in any::<u32>(), period in 1e-3f64..10.0) {
            let t = OutcomeTrace::new(ch, period, bits).unwrap();
            let bytes = encode_packed(&t);
            prop_assert_eq!(bytes.len(), HEADER_LEN + t.len().div_ceil(8));
            prop_assert_eq!(decode_packed(&bytes).unwrap(), t);
        }
    }
}
