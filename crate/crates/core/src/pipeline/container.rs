//! Header + little-endian reals container used for matrices, `Q₀`, patch
//! sets and checkpoints.
//!
//! Layout:
//!
//! ```text
//! EPNET1 kind=<kind> key=value ...\n     UTF-8 metadata line
//! <u64 LE>                              number of values
//! <f64 LE> * count                      values
//! ```
//!
//! Keys and values may not contain whitespace or `=`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "EPNET1";
const MAX_HEADER: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    /// Ordered metadata pairs (excluding `kind`).
    pub meta: Vec<(String, String)>,
    pub values: Vec<f64>,
}

impl Container {
    pub fn new(kind: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            kind: kind.into(),
            meta: Vec::new(),
            values,
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn header_line(&self) -> String {
        let mut line = format!("{MAGIC} kind={}", self.kind);
        for (k, v) in &self.meta {
            line.push(' ');
            line.push_str(k);
            line.push('=');
            line.push_str(v);
        }
        line
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header_line();
        let mut out = Vec::with_capacity(header.len() + 9 + 8 * self.values.len());
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        let newline = bytes
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| bad("header is not UTF-8".into()))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(bad(format!("header does not start with {MAGIC}")));
        }
        let mut kind = None;
        let mut meta = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("header token `{tok}` is not key=value")))?;
            if k == "kind" {
                kind = Some(v.to_string());
            } else {
                meta.push((k.to_string(), v.to_string()));
            }
        }
        let kind = kind.ok_or_else(|| bad("header has no kind".into()))?;

        let body = &bytes[newline + 1..];
        if body.len() < 8 {
            return Err(bad("truncated before value count".into()));
        }
        let count = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
        let payload = &body[8..];
        let expected = count
            .checked_mul(8)
            .ok_or_else(|| bad(format!("value count {count} overflows")))?;
        if payload.len() != expected {
            return Err(bad(format!(
                "declares {count} values ({expected} bytes) but carries {} bytes",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { kind, meta, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }

    /// Reads a container and checks its kind.
    pub fn read_kind(path: &Path, kind: &str) -> Result<Self> {
        let c = Self::read(path)?;
        if c.kind != kind {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected kind `{kind}`, found `{}`", c.kind),
            });
        }
        Ok(c)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, origin: &Path) -> Result<T> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                reason: format!("missing or malformed header field `{key}`"),
            })
    }
}
