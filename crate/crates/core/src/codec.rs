//! Base-36 identifiers and type-prefixed fullnames.
//!
//! Record IDs in the dumps are lowercase base-36 strings (`"c3"`), while
//! cross-references carry a type prefix (`"t1_c3"` for a comment, `"t3_c3"`
//! for a submission). Everything downstream works on the decoded integer.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest accepted base-36 string.
pub const MAX_DIGITS: usize = 12;

/// Largest value the codec accepts, `36^12 - 1`.
pub const MAX_VALUE: u64 = 4_738_381_338_321_616_895;

const ALPHABET: &[u8; 36] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("empty identifier")]
    Empty,
    #[error("invalid base-36 digit {ch:?} at position {pos}")]
    InvalidDigit { ch: char, pos: usize },
    #[error("identifier exceeds {MAX_DIGITS} base-36 digits or value {MAX_VALUE}")]
    Overflow,
    #[error("unknown fullname prefix {0:?}")]
    UnknownPrefix(String),
    #[error("malformed fullname {0:?}")]
    MalformedFullname(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Comment,
    Submission,
}

impl RecordKind {
    pub const ALL: [RecordKind; 2] = [RecordKind::Comment, RecordKind::Submission];

    /// Fullname prefix, without the trailing underscore.
    pub fn prefix(self) -> &'static str {
        match self {
            RecordKind::Comment => "t1",
            RecordKind::Submission => "t3",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Comment => "comment",
            RecordKind::Submission => "submission",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comment" | "comments" => Ok(RecordKind::Comment),
            "submission" | "submissions" => Ok(RecordKind::Submission),
            other => Err(format!("unknown record kind {other:?}")),
        }
    }
}

/// A decoded, typed sequential identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordId {
    pub kind: RecordKind,
    pub value: u64,
}

impl RecordId {
    pub fn comment(value: u64) -> Self {
        Self { kind: RecordKind::Comment, value }
    }

    pub fn submission(value: u64) -> Self {
        Self { kind: RecordKind::Submission, value }
    }

    /// `t1_<base36>` / `t3_<base36>`.
    pub fn fullname(&self) -> String {
        // Values built through the codec are always within range.
        let digits = encode_base36(self.value).unwrap_or_else(|_| "?".into());
        format!("{}_{}", self.kind.prefix(), digits)
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fullname())
    }
}

fn digit_value(b: u8) -> Option<u64> {
    match b {
        b'0'..=b'9' => Some((b - b'0') as u64),
        b'a'..=b'z' => Some((b - b'a') as u64 + 10),
        _ => None,
    }
}

/// Decode a lowercase base-36 string. Uppercase digits are rejected.
pub fn decode_base36(s: &str) -> Result<u64, CodecError> {
    if s.is_empty() {
        return Err(CodecError::Empty);
    }
    let bytes = s.as_bytes();
    let mut value: u64 = 0;
    for (pos, &b) in bytes.iter().enumerate() {
        let d = digit_value(b).ok_or_else(|| CodecError::InvalidDigit { ch: s[pos..].chars().next().unwrap_or('\u{fffd}'), pos })?;
        if pos >= MAX_DIGITS {
            return Err(CodecError::Overflow);
        }
        // 12 digits of base 36 always fit in u64.
        value = value * 36 + d;
    }
    Ok(value)
}

/// Canonical lowercase encoding with no leading zeros.
pub fn encode_base36(mut v: u64) -> Result<String, CodecError> {
    if v > MAX_VALUE {
        return Err(CodecError::Overflow);
    }
    if v == 0 {
        return Ok("0".to_string());
    }
    let mut buf = [0u8; MAX_DIGITS];
    let mut i = MAX_DIGITS;
    while v > 0 {
        i -= 1;
        buf[i] = ALPHABET[(v % 36) as usize];
        v /= 36;
    }
    Ok(String::from_utf8_lossy(&buf[i..]).into_owned())
}

/// Parse `t1_<base36>` or `t3_<base36>`.
pub fn parse_fullname(s: &str) -> Result<RecordId, CodecError> {
    let (prefix, suffix) = s.split_once('_').ok_or_else(|| CodecError::MalformedFullname(s.to_string()))?;
    if suffix.is_empty() || prefix.is_empty() {
        return Err(CodecError::MalformedFullname(s.to_string()));
    }
    let kind = match prefix {
        "t1" => RecordKind::Comment,
        "t3" => RecordKind::Submission,
        p if p.len() >= 2 && p.starts_with('t') && p[1..].bytes().all(|b| b.is_ascii_digit()) => {
            return Err(CodecError::UnknownPrefix(p.to_string()))
        }
        _ => return Err(CodecError::MalformedFullname(s.to_string())),
    };
    Ok(RecordId { kind, value: decode_base36(suffix)? })
}

/// Parse an identifier that may or may not carry a fullname prefix.
pub fn parse_id_for_kind(s: &str, kind: RecordKind) -> Result<RecordId, CodecError> {
    if s.contains('_') {
        parse_fullname(s)
    } else {
        Ok(RecordId { kind, value: decode_base36(s)? })
    }
}
