//! Line-oriented textual channel format.
//!
//! ```text
//! fscv1
//! states <k>
//! init <r0> <r1> ...
//! kernel <s> <x> <y> <rat>     # one line per nonzero kernel entry
//! update <s> <x> <y> <s'>      # one line per (s, x, y) triple
//! ```
//!
//! Rationals are written `p/q` or as plain integers. Blank lines and lines
//! starting with `#` are ignored. The writer emits lines in a fixed sorted
//! order so the format round-trips byte-for-byte through parse/write.

use std::fmt::Write as _;

use crate::channel::{RawChannel, UnifilarChannel, ValidationReport};
use crate::rat::Rat;

pub const HEADER: &str = "fscv1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextFormatError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(ValidationReport),
}

fn parse_field<T: std::str::FromStr>(
    tok: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, TextFormatError> {
    let tok = tok.ok_or_else(|| TextFormatError::Parse {
        line,
        reason: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| TextFormatError::Parse {
        line,
        reason: format!("invalid {what} `{tok}`"),
    })
}

/// Parses the textual format and validates the result.
pub fn parse_channel(text: &str) -> Result<UnifilarChannel, TextFormatError> {
    let mut raw = RawChannel::default();
    let mut saw_header = false;
    let mut saw_states = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(TextFormatError::Parse {
                    line: lineno,
                    reason: format!("expected header `{HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("states") => {
                if saw_states {
                    return Err(TextFormatError::Parse {
                        line: lineno,
                        reason: "duplicate `states` line".into(),
                    });
                }
                raw.num_states = parse_field(toks.next(), lineno, "state count")?;
                saw_states = true;
            }
            Some("init") => {
                for tok in toks.by_ref() {
                    raw.initial.push(parse_field::<Rat>(Some(tok), lineno, "initial probability")?);
                }
            }
            Some("kernel") => {
                let s: usize = parse_field(toks.next(), lineno, "state")?;
                let x: usize = parse_field(toks.next(), lineno, "input")?;
                let y: usize = parse_field(toks.next(), lineno, "output")?;
                let p: Rat = parse_field(toks.next(), lineno, "probability")?;
                raw.kernel.push(((s, x, y), p));
            }
            Some("update") => {
                let s: usize = parse_field(toks.next(), lineno, "state")?;
                let x: usize = parse_field(toks.next(), lineno, "input")?;
                let y: usize = parse_field(toks.next(), lineno, "output")?;
                let s2: usize = parse_field(toks.next(), lineno, "next state")?;
                raw.update.push(((s, x, y), s2));
            }
            Some(other) => {
                return Err(TextFormatError::Parse {
                    line: lineno,
                    reason: format!("unknown directive `{other}`"),
                });
            }
            None => unreachable!("blank lines are skipped"),
        }
        if let Some(extra) = toks.next() {
            return Err(TextFormatError::Parse {
                line: lineno,
                reason: format!("unexpected trailing token `{extra}`"),
            });
        }
    }
    if !saw_header {
        return Err(TextFormatError::Parse { line: 1, reason: format!("missing header `{HEADER}`") });
    }
    if !saw_states {
        return Err(TextFormatError::Parse { line: 1, reason: "missing `states` line".into() });
    }
    raw.validate().map_err(TextFormatError::Invalid)
}

/// Writes the canonical textual form: header, states, init, nonzero kernel
/// entries sorted by `(s, x, y)`, then the full update table.
pub fn write_channel(channel: &UnifilarChannel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "states {}", channel.num_states());
    let init: Vec<String> = channel.initial().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "init {}", init.join(" "));
    for s in 0..channel.num_states() {
        for x in 0..2 {
            for y in 0..2 {
                let p = channel.prob(s, x, y);
                if !p.is_zero() {
                    let _ = writeln!(out, "kernel {s} {x} {y} {p}");
                }
            }
        }
    }
    for s in 0..channel.num_states() {
        for x in 0..2 {
            for y in 0..2 {
                let _ = writeln!(out, "update {s} {x} {y} {}", channel.next_state(s, x, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DelayedActivationSpec, FamilyVariant, Violation};

    #[test]
    fn round_trip() {
        let c = DelayedActivationSpec::new(2, FamilyVariant::Bad).unwrap().channel();
        let text = write_channel(&c);
        let back = parse_channel(&text).unwrap();
        assert!(back == c);
        assert_eq!(write_channel(&back), text);
    }

    #[test]
    fn header_required() {
        let err = parse_channel("states 1\n").unwrap_err();
        assert!(matches!(err, TextFormatError::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "# a channel\nfscv1\n\nstates 1\ninit 1\nkernel 0 0 0 1\nkernel 0 1 1 1\nupdate 0 0 0 0\nupdate 0 0 1 0\nupdate 0 1 0 0\nupdate 0 1 1 0\n";
        let c = parse_channel(text).unwrap();
        assert_eq!(c.num_states(), 1);
    }

    #[test]
    fn missing_update_is_invalid_channel() {
        let text = "fscv1\nstates 1\ninit 1\nkernel 0 0 0 1\nkernel 0 1 1 1\nupdate 0 0 0 0\nupdate 0 0 1 0\nupdate 0 1 0 0\n";
        match parse_channel(text) {
            Err(TextFormatError::Invalid(report)) => {
                assert!(report
                    .violations
                    .iter()
                    .any(|v| matches!(v, Violation::PartialUpdate { .. })));
            }
            other => panic!("expected invalid channel, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_line() {
        let text = "fscv1\nstates 1\ninit 1\nkernel 0 0 zero 1\n";
        match parse_channel(text) {
            Err(TextFormatError::Parse { line: 4, .. }) => {}
            other => panic!("expected parse error on line 4, got {other:?}"),
        }
    }
}
