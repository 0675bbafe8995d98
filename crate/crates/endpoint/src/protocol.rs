use std::io::{self, BufRead, Read};

use serde::{Deserialize, Serialize};

/// Longest accepted message, excluding the newline.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: u64,
    pub state: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Exactly one of `action` and `error` is present. `id` is null only when
/// the request was too malformed to recover one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn action(id: u64, action: Vec<f64>) -> Self {
        Self {
            id: Some(id),
            action: Some(action),
            error: None,
        }
    }

    pub fn error(id: Option<u64>, message: impl Into<String>) -> Self {
        Self {
            id,
            action: None,
            error: Some(message.into()),
        }
    }
}

/// Serializes `value` followed by a newline. Fails on non-finite numbers,
/// which JSON cannot carry.
pub(crate) fn encode_line<T: Serialize>(value: &T, numbers: &[&[f64]]) -> Result<Vec<u8>, String> {
    if numbers.iter().any(|xs| xs.iter().any(|x| !x.is_finite())) {
        return Err("non-finite value cannot be encoded".into());
    }
    let mut line = serde_json::to_vec(value).map_err(|e| e.to_string())?;
    line.push(b'\n');
    Ok(line)
}

/// Parses one request line. On failure the error message starts with
/// "parse error" and the id is recovered if the line is a JSON object with an
/// integer `id`.
pub(crate) fn parse_request(line: &[u8]) -> Result<Request, (Option<u64>, String)> {
    serde_json::from_slice::<Request>(line).map_err(|e| {
        let id = serde_json::from_slice::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("id").and_then(|id| id.as_u64()));
        (id, format!("parse error: {e}"))
    })
}

#[derive(Debug, PartialEq)]
pub enum LineRead {
    /// A complete line; the buffer holds it without the newline.
    Line,
    Eof,
    TooLong,
}

/// Reads one newline-terminated line of at most `cap` bytes into `buf`.
/// A final line without a newline is accepted at end of stream.
pub fn read_line_capped<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>, cap: usize) -> io::Result<LineRead> {
    buf.clear();
    let n = reader.by_ref().take(cap as u64 + 1).read_until(b'\n', buf)?;
    if n == 0 {
        return Ok(LineRead::Eof);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        return Ok(LineRead::Line);
    }
    if n > cap {
        Ok(LineRead::TooLong)
    } else {
        Ok(LineRead::Line)
    }
}
