//! Two-column `t_s value_mv` debug format, one sample per line.

use std::io::{self, BufRead, Write};

use super::{AnalogSample, LeadState};

pub fn write_analog_text<W: Write>(mut w: W, samples: &[AnalogSample]) -> io::Result<()> {
    for s in samples {
        writeln!(w, "{} {}", s.t_s, s.value_mv)?;
    }
    w.flush()
}

/// Parse the two-column format. Blank lines and `#` comments are skipped;
/// lead state is not carried by this format and reads back as attached.
pub fn read_analog_text<R: BufRead>(r: R) -> io::Result<Vec<AnalogSample>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: {msg}", lineno + 1),
            )
        };
        let mut cols = line.split_whitespace();
        let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad(format!("expected 2 columns in {line:?}")));
        };
        let t_s: f64 = t.parse().map_err(|e| bad(format!("{t:?}: {e}")))?;
        let value_mv: f64 = v.parse().map_err(|e| bad(format!("{v:?}: {e}")))?;
        out.push(AnalogSample {
            t_s,
            value_mv,
            lead_state: LeadState::ATTACHED,
        });
    }
    Ok(out)
}
