//! CSV trace format.
//!
//! ```text
//! # channel=1
//! # period_s=0.5
//! idx,outcome,rssi_dbm,latency_us
//! 0,1,-61,812
//! 1,0,,
//! ```
//!
//! The `rssi_dbm` and `latency_us` columns are optional; they are accepted
//! and dropped. `idx` starts at 0 and increases by one per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{OutcomeTrace, DEFAULT_PERIOD_S};
use crate::{Error, Result};

const OPTIONAL_COLUMNS: [&str; 2] = ["rssi_dbm", "latency_us"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub trace: OutcomeTrace,
    pub warnings: Vec<String>,
}

pub fn write_trace_text<W: Write>(trace: &OutcomeTrace, mut w: W) -> Result<()> {
    writeln!(w, "# channel={}", trace.channel_id())?;
    writeln!(w, "# period_s={:?}", trace.period_s())?;
    writeln!(w, "idx,outcome")?;
    for (i, x) in trace.outcomes().iter().enumerate() {
        writeln!(w, "{i},{x}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_text(trace: &OutcomeTrace, path: impl AsRef<Path>) -> Result<()> {
    write_trace_text(trace, BufWriter::new(File::create(path)?))
}

pub fn load_trace_text(path: impl AsRef<Path>) -> Result<OutcomeTrace> {
    let path = path.as_ref();
    let parsed = read_trace_text(BufReader::new(File::open(path)?)).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: Some(path.to_owned()), line, msg },
        other => other,
    })?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.trace)
}

pub fn read_trace_text<R: BufRead>(reader: R) -> Result<ParsedTrace> {
    let err = |line: usize, msg: String| Error::Parse { path: None, line, msg };
    let mut channel_id = 0u32;
    let mut period_s = DEFAULT_PERIOD_S;
    let mut columns: Option<usize> = None;
    let mut outcomes = Vec::new();
    let mut warnings = Vec::new();

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if columns.is_some() {
                continue;
            }
            if let Some((key, value)) = comment.trim().split_once('=') {
                match key.trim() {
                    "channel" => {
                        channel_id = value.trim().parse().map_err(|_| {
                            err(lineno, format!("bad channel id {:?}", value.trim()))
                        })?
                    }
                    "period_s" => {
                        period_s = value.trim().parse().map_err(|_| {
                            err(lineno, format!("bad period_s {:?}", value.trim()))
                        })?;
                        if !(period_s.is_finite() && period_s > 0.0) {
                            return Err(err(lineno, format!("period_s must be > 0, got {period_s}")));
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(width) = columns else {
            if fields.len() < 2 || fields[0] != "idx" || fields[1] != "outcome" {
                return Err(err(lineno, format!("expected header idx,outcome[,...], got {line:?}")));
            }
            for (extra, expected) in fields[2..].iter().zip(OPTIONAL_COLUMNS.iter().chain(std::iter::repeat(&""))) {
                if extra != expected {
                    return Err(err(lineno, format!("unexpected column {extra:?}")));
                }
            }
            if fields.len() > 2 {
                warnings.push(format!("ignoring columns {}", fields[2..].join(",")));
            }
            columns = Some(fields.len());
            continue;
        };

        if fields.len() != width {
            return Err(err(lineno, format!("expected {width} fields, got {}", fields.len())));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad index {:?}", fields[0])))?;
        if idx != outcomes.len() {
            return Err(err(
                lineno,
                format!("index {idx} out of sequence, expected {}", outcomes.len()),
            ));
        }
        let x = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(err(lineno, format!("outcome {other:?} is not 0 or 1"))),
        };
        outcomes.push(x);
    }

    if columns.is_none() {
        return Err(err(0, "missing header row".into()));
    }
    let trace = OutcomeTrace::new(channel_id, period_s, outcomes)
        .map_err(|e| err(0, e.to_string()))?;
    Ok(ParsedTrace { trace, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<ParsedTrace> {
        read_trace_text(s.as_bytes())
    }

    #[test]
    fn round_trip_file() {
        let outcomes = (0..1000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 31) as u8).collect();
        let t = OutcomeTrace::new(13, 0.5, outcomes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch13.csv");
        save_trace_text(&t, &path).unwrap();
        assert_eq!(load_trace_text(&path).unwrap(), t);
    }

    #[test]
    fn bad_outcome_names_line() {
        let e = parse("# channel=1\nidx,outcome\n0,1\n1,2\n").unwrap_err();
        match e {
            Error::Parse { line, ref msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("\"2\""), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(e.to_string().starts_with("line 4"));
    }

    #[test]
    fn non_monotonic_index() {
        let e = parse("idx,outcome\n0,1\n2,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse("idx,outcome\n1,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn extra_columns_dropped_with_warning() {
        let src = "# channel=5\n# period_s=0.25\nidx,outcome,rssi_dbm,latency_us\n0,1,-60,900\n1,0,,\n2,1,-58,1200\n";
        let p = parse(src).unwrap();
        assert_eq!(p.trace.outcomes(), &[1, 0, 1]);
        assert_eq!(p.trace.channel_id(), 5);
        assert_eq!(p.trace.period_s(), 0.25);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn malformed_rows() {
        assert!(parse("idx,outcome\n0\n").is_err());
        assert!(parse("idx,outcome\n0,1,5\n").is_err());
        assert!(parse("idx,value\n0,1\n").is_err());
        assert!(parse("# channel=1\n").is_err());
        assert!(parse("idx,outcome\n").is_err());
        assert!(parse("# period_s=-1\nidx,outcome\n0,1\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(bits in proptest::collection::vec(0u8..=1, 1..500), ch in any::<u32>(), period in 1e-6f64..1e3) {
            let t = OutcomeTrace::new(ch, period, bits).unwrap();
            let mut buf = Vec::new();
            write_trace_text(&t, &mut buf).unwrap();
            prop_assert_eq!(read_trace_text(buf.as_slice()).unwrap().trace, t);
        }
    }
}
