//! `AMSG` message framing and the task / share payloads it carries.
//!
//! ```text
//! "AMSG" | version u16 BE | kind u8 | task_id u64 BE | server_index u32 BE
//!        | payload length u32 BE | payload | CRC32 of payload u32 BE
//! ```
//!
//! On a stream each message is preceded by its total length as a BE u32.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharing::{write_shape, Polynomial, ProtocolParams, Reader, Shape, ShareSet};

pub const WIRE_MAGIC: &[u8; 4] = b"AMSG";
pub const WIRE_VERSION: u16 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Task,
    Shares,
    Result,
    Error,
    Shutdown,
}

impl MessageKind {
    fn tag(self) -> u8 {
        match self {
            MessageKind::Task => 1,
            MessageKind::Shares => 2,
            MessageKind::Result => 3,
            MessageKind::Error => 4,
            MessageKind::Shutdown => 5,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            1 => MessageKind::Task,
            2 => MessageKind::Shares,
            3 => MessageKind::Result,
            4 => MessageKind::Error,
            5 => MessageKind::Shutdown,
            other => return Err(Error::format("message kind", format!("unknown kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub task_id: u64,
    /// Destination worker for master messages, source worker for replies.
    pub server_index: u32,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(kind: MessageKind, task_id: u64, server_index: u32, payload: Vec<u8>) -> Self {
        WireMessage {
            kind,
            task_id,
            server_index,
            payload,
        }
    }

    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.payload)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u32::try_from(self.payload.len())
            .map_err(|_| Error::arg(format!("payload of {} bytes exceeds the 4 GiB frame limit", self.payload.len())))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + 4);
        out.extend_from_slice(WIRE_MAGIC);
        out.extend_from_slice(&WIRE_VERSION.to_be_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.task_id.to_be_bytes());
        out.extend_from_slice(&self.server_index.to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.checksum().to_be_bytes());
        Ok(out)
    }

    /// Parses one message. A bad checksum is a transport error; any other
    /// malformation is a format error.
    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let magic = r.take(4, "magic")?;
        if magic != WIRE_MAGIC {
            return Err(Error::format("magic", format!("expected \"AMSG\", found {magic:02x?}")));
        }
        let version = r.u16_be("version")?;
        if version != WIRE_VERSION {
            return Err(Error::format("version", format!("unsupported version {version}")));
        }
        let kind = MessageKind::from_tag(r.u8("kind")?)?;
        let task_id = r.u64_be("task id")?;
        let server_index = r.u32_be("server index")?;
        let len = r.u32_be("payload length")? as usize;
        let payload = r.take(len, "payload")?.to_vec();
        let crc = r.u32_be("checksum")?;
        if r.remaining() != 0 {
            return Err(Error::format("trailer", format!("{} unexpected trailing bytes", r.remaining())));
        }
        let msg = WireMessage::new(kind, task_id, server_index, payload);
        if msg.checksum() != crc {
            return Err(Error::Transport(format!(
                "checksum mismatch on {kind:?} message for task {task_id} (server {server_index})"
            )));
        }
        Ok(msg)
    }

    pub fn error(task_id: u64, server_index: u32, text: &str) -> Self {
        WireMessage::new(MessageKind::Error, task_id, server_index, text.as_bytes().to_vec())
    }
}

/// Writes a BE u32 length prefix followed by `frame`.
pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> io::Result<()> {
    let len = u32::try_from(frame.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(frame)?;
    w.flush()
}

/// Reads one length-prefixed frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// What a worker computes on its shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Apply `f` element-wise to the operand share.
    EvalPolynomial(Polynomial),
    /// `X^T (X w)` for the stored matrix share `X` and the operand share `w`.
    LRIterationProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub params_digest: [u8; 32],
    pub result_shape: Shape,
}

const TASK_EVAL: u8 = 0;
const TASK_LR: u8 = 1;

impl TaskSpec {
    /// A polynomial task; the degree of `f` may not exceed the protocol degree
    /// or the master could not decode.
    pub fn eval_polynomial(f: Polynomial, params: &ProtocolParams, shape: Shape) -> Result<Self> {
        if f.degree() > params.degree() {
            return Err(Error::param(format!(
                "polynomial degree {} exceeds protocol degree D = {}",
                f.degree(),
                params.degree()
            )));
        }
        Ok(TaskSpec {
            kind: TaskKind::EvalPolynomial(f),
            params_digest: params.digest(),
            result_shape: shape,
        })
    }

    /// The training product needs `D = 3` (two data factors and one model factor).
    pub fn lr_product(params: &ProtocolParams, features: usize) -> Result<Self> {
        if params.degree() != 3 {
            return Err(Error::param(format!(
                "the training product has degree 3, params declare D = {}",
                params.degree()
            )));
        }
        Ok(TaskSpec {
            kind: TaskKind::LRIterationProduct,
            params_digest: params.digest(),
            result_shape: Shape::Vector { len: features },
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match &self.kind {
            TaskKind::EvalPolynomial(_) => out.push(TASK_EVAL),
            TaskKind::LRIterationProduct => out.push(TASK_LR),
        }
        out.extend_from_slice(&self.params_digest);
        write_shape(&mut out, self.result_shape);
        if let TaskKind::EvalPolynomial(f) = &self.kind {
            out.extend_from_slice(&(f.coeffs().len() as u32).to_be_bytes());
            for c in f.coeffs() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let tag = r.u8("task kind")?;
        let params_digest: [u8; 32] = r.take(32, "params digest")?.try_into().unwrap();
        let result_shape = r.shape()?;
        let kind = match tag {
            TASK_EVAL => {
                let n = r.u32_be("coefficient count")? as usize;
                let coeffs = (0..n).map(|_| r.f64_le("coefficient")).collect::<Result<Vec<_>>>()?;
                TaskKind::EvalPolynomial(Polynomial::new(coeffs)?)
            }
            TASK_LR => TaskKind::LRIterationProduct,
            other => return Err(Error::format("task kind", format!("unknown task {other}"))),
        };
        if r.remaining() != 0 {
            return Err(Error::format("trailer", format!("{} unexpected trailing bytes", r.remaining())));
        }
        Ok(TaskSpec {
            kind,
            params_digest,
            result_shape,
        })
    }
}

/// Where a worker files an incoming share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    /// Input of the current task.
    Operand,
    /// Kept across tasks (the shared training data).
    Matrix,
}

/// The `Shares` payload: one or more single-server `ASHR` blobs, each tagged with a slot.
///
/// ```text
/// count u8 | (slot u8 | length u32 BE | ASHR bytes)*
/// ```
pub fn encode_bundle(parts: &[(Slot, &ShareSet)]) -> Result<Vec<u8>> {
    let mut out = vec![u8::try_from(parts.len()).map_err(|_| Error::arg("too many share blobs in one message"))?];
    for (slot, set) in parts {
        if set.n() != 1 {
            return Err(Error::arg(format!("a worker receives one share, got {}", set.n())));
        }
        let bytes = set.to_bytes();
        out.push(match slot {
            Slot::Operand => 0,
            Slot::Matrix => 1,
        });
        let len = u32::try_from(bytes.len()).map_err(|_| Error::arg("share blob exceeds 4 GiB"))?;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn decode_bundle(buf: &[u8]) -> Result<Vec<(Slot, ShareSet)>> {
    let mut r = Reader::new(buf);
    let count = r.u8("share count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let slot = match r.u8("slot")? {
            0 => Slot::Operand,
            1 => Slot::Matrix,
            other => return Err(Error::format("slot", format!("unknown slot {other}"))),
        };
        let len = r.u32_be("share length")? as usize;
        let set = ShareSet::from_bytes(r.take(len, "share blob")?)?;
        if set.n() != 1 {
            return Err(Error::format("share blob", format!("expected one share, found {}", set.n())));
        }
        out.push((slot, set));
    }
    if r.remaining() != 0 {
        return Err(Error::format("trailer", format!("{} unexpected trailing bytes", r.remaining())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn message_round_trip_and_layout() {
        let m = WireMessage::new(MessageKind::Result, 7, 3, vec![1, 2, 3]);
        let b = m.encode().unwrap();
        assert_eq!(&b[..4], b"AMSG");
        assert_eq!(b[6], 3);
        assert_eq!(&b[7..15], &7u64.to_be_bytes());
        assert_eq!(&b[15..19], &3u32.to_be_bytes());
        assert_eq!(&b[19..23], &3u32.to_be_bytes());
        assert_eq!(&b[26..], &crc32fast::hash(&[1, 2, 3]).to_be_bytes());
        assert_eq!(WireMessage::decode(&b).unwrap(), m);
    }

    #[test]
    fn corrupted_payload_is_a_transport_error() {
        let mut b = WireMessage::new(MessageKind::Shares, 1, 1, vec![9; 40]).encode().unwrap();
        b[HEADER_LEN + 5] ^= 0xff;
        assert!(matches!(WireMessage::decode(&b), Err(Error::Transport(_))));
        b[0] = b'B';
        assert!(matches!(WireMessage::decode(&b), Err(Error::Format { field: "magic", .. })));
        assert!(WireMessage::decode(&b[..10]).is_err());
    }

    #[test]
    fn frames_over_a_stream() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut cur = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"abc");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"");
        assert!(read_frame(&mut cur).unwrap().is_none());
    }

    #[test]
    fn task_round_trip() {
        let p = ProtocolParams::new(4, 1, 3, 1.0, 10.0, 1.0, 0).unwrap();
        let f = Polynomial::new(vec![0.0, -1.0, 0.0, 1.0]).unwrap();
        let t = TaskSpec::eval_polynomial(f, &p, Shape::Vector { len: 5 }).unwrap();
        assert_eq!(TaskSpec::from_bytes(&t.to_bytes()).unwrap(), t);
        let lr = TaskSpec::lr_product(&p, 12).unwrap();
        assert_eq!(TaskSpec::from_bytes(&lr.to_bytes()).unwrap(), lr);
        assert!(TaskSpec::eval_polynomial(Polynomial::monomial(4), &p, Shape::Scalar).is_err());
        let p1 = p.with_degree(1).unwrap();
        assert!(TaskSpec::lr_product(&p1, 3).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let a = ShareSet::single(Shape::Vector { len: 2 }, vec![Complex64::new(1.0, 2.0); 2], [1; 32]).unwrap();
        let b = ShareSet::single(Shape::Matrix { rows: 1, cols: 1 }, vec![Complex64::new(3.0, 0.0)], [1; 32]).unwrap();
        let bytes = encode_bundle(&[(Slot::Matrix, &b), (Slot::Operand, &a)]).unwrap();
        let back = decode_bundle(&bytes).unwrap();
        assert_eq!(back, vec![(Slot::Matrix, b), (Slot::Operand, a)]);
    }
}
