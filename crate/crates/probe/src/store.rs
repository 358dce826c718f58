//! The activation file format and its sidecar record.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"APZACT1\n"
//! 8       4     version     u32 LE, = 1
//! 12      4     n_tokens    u32 LE, may be 0
//! 16      4     n_layers    u32 LE, > 0
//! 20      4     hidden_dim  u32 LE, > 0
//! 24      4·N   values      f32 LE, [token][layer][dim], N = n_tokens·n_layers·hidden_dim
//! ```
//!
//! Nothing follows the payload. Text, token spans and capture metadata
//! live in the [`Sidecar`], one JSON line per puzzle.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use apz_core::tokenize::TokenSpan;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

pub const MAGIC: &[u8; 8] = b"APZACT1\n";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

/// Dense per-token, per-layer hidden states.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    pub n_tokens: usize,
    pub n_layers: usize,
    pub hidden_dim: usize,
    /// `[token][layer][dim]`, row-major.
    pub values: Vec<f32>,
}

impl Activations {
    pub fn new(n_tokens: usize, n_layers: usize, hidden_dim: usize, values: Vec<f32>) -> Result<Self> {
        let a = Activations { n_tokens, n_layers, hidden_dim, values };
        a.validate()?;
        Ok(a)
    }

    pub fn zeros(n_tokens: usize, n_layers: usize, hidden_dim: usize) -> Self {
        Activations { n_tokens, n_layers, hidden_dim, values: vec![0.0; n_tokens * n_layers * hidden_dim] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden_dim == 0 {
            return Err(ProbeError::Shape("n_layers and hidden_dim must be positive".into()));
        }
        for (what, v) in [("n_tokens", self.n_tokens), ("n_layers", self.n_layers), ("hidden_dim", self.hidden_dim)] {
            if u32::try_from(v).is_err() {
                return Err(ProbeError::Shape(format!("{what} = {v} does not fit the header")));
            }
        }
        let want = self.n_tokens * self.n_layers * self.hidden_dim;
        if self.values.len() != want {
            return Err(ProbeError::Shape(format!("{} values for a {want}-value tensor", self.values.len())));
        }
        Ok(())
    }

    /// The `hidden_dim` vector of one token at one layer.
    pub fn vector(&self, token: usize, layer: usize) -> &[f32] {
        let start = (token * self.n_layers + layer) * self.hidden_dim;
        &self.values[start..start + self.hidden_dim]
    }

    pub fn vector_mut(&mut self, token: usize, layer: usize) -> &mut [f32] {
        let start = (token * self.n_layers + layer) * self.hidden_dim;
        &mut self.values[start..start + self.hidden_dim]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.n_tokens as u32, self.n_layers as u32, self.hidden_dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let expected = header.payload_len()? + HEADER_LEN as u64;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(ProbeError::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(ProbeError::Format {
                offset: expected,
                message: format!("{} unexpected bytes after the payload", actual - expected),
            });
        }
        let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Activations {
            n_tokens: header.n_tokens as usize,
            n_layers: header.n_layers as usize,
            hidden_dim: header.hidden_dim as usize,
            values,
        })
    }
}

/// The four header integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub n_tokens: u32,
    pub n_layers: u32,
    pub hidden_dim: u32,
}

impl Header {
    pub fn payload_len(&self) -> Result<u64> {
        (self.n_tokens as u64)
            .checked_mul(self.n_layers as u64)
            .and_then(|x| x.checked_mul(self.hidden_dim as u64))
            .and_then(|x| x.checked_mul(4))
            .ok_or(ProbeError::Format { offset: 12, message: "declared dimensions overflow".into() })
    }
}

/// Validates magic, version and dimensions; the payload is not looked at.
pub fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(ProbeError::Format { offset: 0, message: "bad magic".into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(ProbeError::Format {
            offset: bytes.len() as u64,
            message: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        });
    }
    let word = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let header = Header { version: word(8), n_tokens: word(12), n_layers: word(16), hidden_dim: word(20) };
    if header.version != VERSION {
        return Err(ProbeError::Format { offset: 8, message: format!("unsupported version {}", header.version) });
    }
    if header.n_layers == 0 {
        return Err(ProbeError::Format { offset: 16, message: "n_layers is 0".into() });
    }
    if header.hidden_dim == 0 {
        return Err(ProbeError::Format { offset: 20, message: "hidden_dim is 0".into() });
    }
    Ok(header)
}

pub fn write_activations(a: &Activations, mut w: impl Write) -> Result<()> {
    w.write_all(&a.to_bytes()?)?;
    w.flush()?;
    Ok(())
}

pub fn read_activations(mut r: impl Read) -> Result<Activations> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Activations::from_bytes(&bytes)
}

/// Per-puzzle metadata written next to an activation file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub puzzle_id: String,
    /// File name of the activations, relative to the sidecar's directory.
    pub activation_file: String,
    /// The text the activations were captured over.
    pub text: String,
    /// One span per activation row, character offsets into `text`.
    pub token_spans: Vec<TokenSpan>,
    pub n_layers: usize,
    pub hidden_dim: usize,
    /// Source layer index of each stored layer row.
    pub layers: Vec<usize>,
    /// `synthetic`, or the hidden-state choice of a model capture.
    pub capture_point: String,
    pub tokenizer: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Sidecar {
    /// Checks the sidecar against itself and against a decoded tensor.
    pub fn check(&self, a: &Activations) -> Result<()> {
        if self.schema_version != SIDECAR_SCHEMA_VERSION {
            return Err(ProbeError::Shape(format!("sidecar schema version {}", self.schema_version)));
        }
        if a.n_tokens != self.token_spans.len() || a.n_layers != self.n_layers || a.hidden_dim != self.hidden_dim {
            return Err(ProbeError::Shape(format!(
                "sidecar says {}x{}x{}, file holds {}x{}x{}",
                self.token_spans.len(),
                self.n_layers,
                self.hidden_dim,
                a.n_tokens,
                a.n_layers,
                a.hidden_dim
            )));
        }
        if self.layers.len() != self.n_layers {
            return Err(ProbeError::Shape(format!("{} layer ids for {} layers", self.layers.len(), self.n_layers)));
        }
        let len = self.text.chars().count();
        let mut prev_end = 0;
        for (i, s) in self.token_spans.iter().enumerate() {
            if s.start >= s.end || s.end > len || s.start < prev_end {
                return Err(ProbeError::Shape(format!("token span #{i} {s:?} is empty, unsorted or out of range")));
            }
            prev_end = s.end;
        }
        Ok(())
    }
}
