//! Frames: 4-byte big-endian payload length, then a UTF-8 JSON object
//! `{"v": 1, "type": ..., "seq": ..., "sender": ..., "body": ...}`.

use std::io::{self, Read, Write};

use serde_json::{Map, Value};

use super::{Addr, Envelope, Message};

pub const WIRE_VERSION: u64 = 1;
const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("invalid payload at byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("unsupported wire version {0}")]
    Version(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn payload(env: &Envelope) -> Vec<u8> {
    let Value::Object(mut obj) = serde_json::to_value(&env.msg).expect("messages serialize") else {
        unreachable!("messages serialize to objects")
    };
    let mut out = Map::new();
    out.insert("v".into(), WIRE_VERSION.into());
    out.insert("type".into(), obj.remove("type").unwrap_or(Value::Null));
    out.insert("seq".into(), env.seq.into());
    out.insert("sender".into(), env.from.to_string().into());
    out.insert("body".into(), obj.remove("body").unwrap_or(Value::Null));
    serde_json::to_vec(&Value::Object(out)).expect("json values serialize")
}

/// Encodes one frame. The destination is not part of the frame.
pub fn encode(env: &Envelope) -> Vec<u8> {
    let body = payload(env);
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn encoded_len(env: &Envelope) -> usize {
    4 + payload(env).len()
}

fn invalid(offset: usize, message: impl Into<String>) -> CodecError {
    CodecError::Invalid {
        offset,
        message: message.into(),
    }
}

/// Decodes a JSON payload (no length prefix). `base` is the payload's
/// offset within the enclosing buffer, used in error positions.
pub fn decode_frame(payload: &[u8], to: Addr, base: usize) -> Result<Envelope, CodecError> {
    let value: Value = serde_json::from_slice(payload).map_err(|e| {
        // serde_json reports line/column; payloads are single-line
        invalid(base + e.column().saturating_sub(1), e.to_string())
    })?;
    let Value::Object(mut obj) = value else {
        return Err(invalid(base, "payload is not a JSON object"));
    };
    let v = obj.get("v").and_then(Value::as_u64).ok_or_else(|| invalid(base, "missing field v"))?;
    if v != WIRE_VERSION {
        return Err(CodecError::Version(v));
    }
    let seq = obj.get("seq").and_then(Value::as_u64).ok_or_else(|| invalid(base, "missing field seq"))?;
    let from: Addr = obj
        .get("sender")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid(base, "missing field sender"))?
        .parse()
        .map_err(|e: String| invalid(base, e))?;
    let mut m = Map::new();
    m.insert("type".into(), obj.remove("type").unwrap_or(Value::Null));
    m.insert("body".into(), obj.remove("body").unwrap_or(Value::Null));
    let msg: Message = serde_json::from_value(Value::Object(m)).map_err(|e| invalid(base, e.to_string()))?;
    Ok(Envelope { from, to, seq, msg })
}

/// Decodes one frame from the front of `buf`, returning the envelope and
/// the number of bytes consumed. Nothing is returned for partial frames.
pub fn decode(buf: &[u8], to: Addr) -> Result<(Envelope, usize), CodecError> {
    if buf.len() < 4 {
        return Err(CodecError::Truncated {
            needed: 4,
            have: buf.len(),
        });
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME {
        return Err(CodecError::TooLarge(len));
    }
    if buf.len() < 4 + len {
        return Err(CodecError::Truncated {
            needed: 4 + len,
            have: buf.len(),
        });
    }
    Ok((decode_frame(&buf[4..4 + len], to, 4)?, 4 + len))
}

pub fn write_frame(w: &mut impl Write, env: &Envelope) -> io::Result<usize> {
    let frame = encode(env);
    w.write_all(&frame)?;
    Ok(frame.len())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read, to: Addr) -> Result<Option<Envelope>, CodecError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(CodecError::TooLarge(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CodecError::Truncated { needed: 4 + n, have: 4 },
        _ => e.into(),
    })?;
    decode_frame(&body, to, 4).map(Some)
}
