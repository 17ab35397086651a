//! `ASHR` framed binary layout and JSON debug form of a [`ShareSet`].
//!
//! ```text
//! "ASHR" | version u16 BE | shape tag u8 | dims u64 BE (0, 1 or 2 of them)
//!        | N u32 BE | params digest [32] | N x len x (re f64 LE, im f64 LE)
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Shape, ShareSet};
use crate::error::{Error, Result};

pub const SHARE_MAGIC: &[u8; 4] = b"ASHR";
pub const SHARE_VERSION: u16 = 1;

const TAG_SCALAR: u8 = 0;
const TAG_VECTOR: u8 = 1;
const TAG_MATRIX: u8 = 2;

pub(crate) fn write_shape(out: &mut Vec<u8>, shape: Shape) {
    match shape {
        Shape::Scalar => out.push(TAG_SCALAR),
        Shape::Vector { len } => {
            out.push(TAG_VECTOR);
            out.extend_from_slice(&(len as u64).to_be_bytes());
        }
        Shape::Matrix { rows, cols } => {
            out.push(TAG_MATRIX);
            out.extend_from_slice(&(rows as u64).to_be_bytes());
            out.extend_from_slice(&(cols as u64).to_be_bytes());
        }
    }
}

pub(crate) fn write_complex_le(out: &mut Vec<u8>, values: &[Complex64]) {
    out.reserve(values.len() * 16);
    for z in values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

/// Cursor over a byte slice with field-named truncation errors.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(
                field,
                format!(
                    "truncated: need {n} bytes at offset {}, only {} remain",
                    self.pos,
                    self.buf.len() - self.pos
                ),
            )
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub(crate) fn u16_be(&mut self, field: &'static str) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    pub(crate) fn u32_be(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub(crate) fn u64_be(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub(crate) fn f64_le(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn dim(&mut self, field: &'static str) -> Result<usize> {
        let v = self.u64_be(field)?;
        usize::try_from(v).map_err(|_| Error::format(field, format!("dimension {v} does not fit in memory")))
    }

    pub(crate) fn shape(&mut self) -> Result<Shape> {
        match self.u8("shape tag")? {
            TAG_SCALAR => Ok(Shape::Scalar),
            TAG_VECTOR => Ok(Shape::Vector {
                len: self.dim("vector length")?,
            }),
            TAG_MATRIX => {
                let rows = self.dim("matrix rows")?;
                let cols = self.dim("matrix cols")?;
                Ok(Shape::Matrix { rows, cols })
            }
            other => Err(Error::format("shape tag", format!("unknown tag {other}"))),
        }
    }

    pub(crate) fn complex_le(&mut self, count: usize, field: &'static str) -> Result<Vec<Complex64>> {
        let bytes = count
            .checked_mul(16)
            .ok_or_else(|| Error::format(field, "element count overflows"))?;
        let raw = self.take(bytes, field)?;
        Ok(raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect())
    }
}

impl ShareSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.n() * self.shape.len() * 16);
        out.extend_from_slice(SHARE_MAGIC);
        out.extend_from_slice(&SHARE_VERSION.to_be_bytes());
        write_shape(&mut out, self.shape);
        out.extend_from_slice(&(self.n() as u32).to_be_bytes());
        out.extend_from_slice(&self.params_digest);
        for s in &self.shares {
            write_complex_le(&mut out, s);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let magic = r.take(4, "magic")?;
        if magic != SHARE_MAGIC {
            return Err(Error::format("magic", format!("expected \"ASHR\", found {magic:02x?}")));
        }
        let version = r.u16_be("version")?;
        if version != SHARE_VERSION {
            return Err(Error::format("version", format!("unsupported version {version}")));
        }
        let shape = r.shape()?;
        let n = r.u32_be("server count")? as usize;
        let params_digest: [u8; 32] = r.take(32, "params digest")?.try_into().unwrap();
        let mut shares = Vec::with_capacity(n);
        for _ in 0..n {
            shares.push(r.complex_le(shape.len(), "share payload")?);
        }
        if r.remaining() != 0 {
            return Err(Error::format("trailer", format!("{} unexpected trailing bytes", r.remaining())));
        }
        ShareSet::new(shape, shares, params_digest)
    }

    pub fn to_json(&self) -> ShareSetJson {
        ShareSetJson {
            shape: self.shape,
            n: self.n(),
            params_digest: hex(&self.params_digest),
            shares: self
                .shares
                .iter()
                .map(|s| s.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn from_json(j: &ShareSetJson) -> Result<Self> {
        if j.shares.len() != j.n {
            return Err(Error::format("n", format!("declares {} servers, has {}", j.n, j.shares.len())));
        }
        let digest = unhex(&j.params_digest)?;
        let shares = j
            .shares
            .iter()
            .map(|s| s.iter().map(|p| Complex64::new(p[0], p[1])).collect())
            .collect();
        ShareSet::new(j.shape, shares, digest)
    }
}

/// JSON debug mirror of the binary layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareSetJson {
    pub shape: Shape,
    pub n: usize,
    pub params_digest: String,
    pub shares: Vec<Vec<[f64; 2]>>,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::format("params digest", "expected 64 hex characters"));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|e| Error::format("params digest", e.to_string()))?;
    }
    Ok(out)
}
