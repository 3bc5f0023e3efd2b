//! Format-version tags carried by every file this crate writes.
//!
//! Text outputs start with a line `# <kind> v<version>`. Loaders accept files
//! without such a line (hand-written inputs) but reject a tag naming another
//! kind or an unknown version.

use crate::{Error, Result};

pub const VERSION: u32 = 1;

pub fn header_line(kind: &str) -> String {
    format!("# {kind} v{VERSION}\n")
}

/// Checks an optional leading version tag and returns the remaining text.
pub fn strip_header<'a>(text: &'a str, kind: &'static str) -> Result<&'a str> {
    let Some(first) = text.lines().next() else {
        return Ok(text);
    };
    let first = first.trim();
    if !first.starts_with('#') {
        return Ok(text);
    }
    let tag = first.trim_start_matches('#').trim();
    let expected = format!("{kind} v{VERSION}");
    if tag != expected {
        return Err(Error::Version {
            expected: kind,
            supported: VERSION,
            found: tag.to_string(),
        });
    }
    let rest = text.find('\n').map(|i| &text[i + 1..]).unwrap_or("");
    Ok(rest)
}

/// Meaningful lines of a text file: trimmed, skipping blanks and `#` comments.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: expected a number, found {tok:?}")))
}

pub(crate) fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: expected an integer, found {tok:?}")))
}
