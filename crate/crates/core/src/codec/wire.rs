//! Binary wire format.
//!
//! ```text
//! message  := payload_len:u32 payload
//! payload  := field*                      (schema order, no tags)
//! bool     := u8 (0 or 1)
//! int/f    := little-endian, natural width
//! string   := len:u32 utf8-bytes
//! bytes    := len:u32 raw-bytes
//! array    := count:u32 element*
//! nested   := field*                      (inline, no length header)
//! ```
//!
//! Worked examples:
//!
//! * a schema with no fields encodes to `00 00 00 00`;
//! * `std/Twist` with all components zero encodes to `30 00 00 00`
//!   followed by 48 zero bytes;
//! * `std/String { data: "hi" }` encodes to
//!   `06 00 00 00 | 02 00 00 00 | 68 69`.

use std::sync::Arc;

use thiserror::Error;

use super::schema::{FieldType, MessageSchema, Primitive};
use super::value::{ConformanceError, MessageValue, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(#[from] ConformanceError),
    #[error("payload of {0} bytes exceeds the u32 length header")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated input while reading {path} at byte {offset}")]
    Truncated { path: String, offset: usize },
    #[error("{count} trailing bytes after the last field")]
    TrailingBytes { count: usize },
    #[error("invalid UTF-8 in {path}")]
    InvalidUtf8 { path: String },
    #[error("invalid bool byte {byte:#04x} in {path}")]
    InvalidBool { path: String, byte: u8 },
    #[error("element count {count} in {path} is implausible")]
    Oversized { path: String, count: u64 },
}

/// Encodes a conforming message. Output is deterministic.
pub fn encode(value: &MessageValue) -> Result<Vec<u8>, EncodeError> {
    value.check()?;
    let mut out = vec![0u8; 4];
    for v in &value.fields {
        write_value(&mut out, v);
    }
    let len = out.len() - 4;
    let len32 = u32::try_from(len).map_err(|_| EncodeError::TooLarge(len))?;
    out[..4].copy_from_slice(&len32.to_le_bytes());
    Ok(out)
}

fn write_len(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn write_value(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Bool(b) => out.push(*b as u8),
        Value::I8(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::I64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::U8(x) => out.push(*x),
        Value::U16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::U32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::U64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::F32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::F64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::String(s) => {
            write_len(out, s.len());
            out.extend_from_slice(s.as_bytes());
        }
        Value::Bytes(b) => {
            write_len(out, b.len());
            out.extend_from_slice(b);
        }
        Value::Array(items) => {
            write_len(out, items.len());
            for item in items {
                write_value(out, item);
            }
        }
        Value::Message(fields) => {
            for f in fields {
                write_value(out, f);
            }
        }
    }
}

/// Decodes `bytes` under `schema`. Never panics on arbitrary input.
pub fn decode(bytes: &[u8], schema: &Arc<MessageSchema>) -> Result<MessageValue, DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated { path: "<length header>".into(), offset: 0 });
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let avail = &bytes[4..];
    let payload = if avail.len() >= declared { &avail[..declared] } else { avail };
    let mut r = Reader { buf: payload, pos: 0, base: 4 };
    let mut path = String::new();
    let fields = read_fields(&mut r, schema, &mut path)?;
    if payload.len() < declared {
        return Err(DecodeError::Truncated { path: "<payload end>".into(), offset: bytes.len() });
    }
    let trailing = (payload.len() - r.pos) + (avail.len() - payload.len());
    if trailing > 0 {
        return Err(DecodeError::TrailingBytes { count: trailing });
    }
    Ok(MessageValue { schema: schema.clone(), fields })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, path: &str) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated {
                path: path.to_string(),
                offset: self.base + self.pos,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, path: &str) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N, path)?.try_into().unwrap())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_fields(
    r: &mut Reader<'_>,
    schema: &MessageSchema,
    path: &mut String,
) -> Result<Vec<Value>, DecodeError> {
    let mut out = Vec::with_capacity(schema.fields.len());
    for f in &schema.fields {
        let len = path.len();
        if !path.is_empty() {
            path.push('.');
        }
        path.push_str(&f.name);
        out.push(read_value(r, &f.ty, path)?);
        path.truncate(len);
    }
    Ok(out)
}

fn read_value(r: &mut Reader<'_>, ty: &FieldType, path: &mut String) -> Result<Value, DecodeError> {
    Ok(match ty {
        FieldType::Primitive(p) => match p {
            Primitive::Bool => match r.take(1, path)?[0] {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                byte => return Err(DecodeError::InvalidBool { path: path.clone(), byte }),
            },
            Primitive::I8 => Value::I8(i8::from_le_bytes(r.array(path)?)),
            Primitive::I16 => Value::I16(i16::from_le_bytes(r.array(path)?)),
            Primitive::I32 => Value::I32(i32::from_le_bytes(r.array(path)?)),
            Primitive::I64 => Value::I64(i64::from_le_bytes(r.array(path)?)),
            Primitive::U8 => Value::U8(r.take(1, path)?[0]),
            Primitive::U16 => Value::U16(u16::from_le_bytes(r.array(path)?)),
            Primitive::U32 => Value::U32(u32::from_le_bytes(r.array(path)?)),
            Primitive::U64 => Value::U64(u64::from_le_bytes(r.array(path)?)),
            Primitive::F32 => Value::F32(f32::from_le_bytes(r.array(path)?)),
            Primitive::F64 => Value::F64(f64::from_le_bytes(r.array(path)?)),
            Primitive::String => {
                let n = u32::from_le_bytes(r.array(path)?) as usize;
                let raw = r.take(n, path)?;
                let s = std::str::from_utf8(raw)
                    .map_err(|_| DecodeError::InvalidUtf8 { path: path.clone() })?;
                Value::String(s.to_string())
            }
            Primitive::Bytes => {
                let n = u32::from_le_bytes(r.array(path)?) as usize;
                Value::Bytes(r.take(n, path)?.to_vec())
            }
        },
        FieldType::Array(inner) => {
            let count = u32::from_le_bytes(r.array(path)?) as usize;
            let min = inner.min_wire_size();
            // Zero-width elements would let a 4-byte count allocate billions of values.
            let limit = r.remaining().checked_div(min).unwrap_or(1 << 20);
            if count > limit {
                if min == 0 {
                    return Err(DecodeError::Oversized { path: path.clone(), count: count as u64 });
                }
                return Err(DecodeError::Truncated {
                    path: format!("{path}[{limit}]"),
                    offset: r.base + r.buf.len(),
                });
            }
            let mut items = Vec::with_capacity(count);
            for i in 0..count {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                items.push(read_value(r, inner, path)?);
                path.truncate(len);
            }
            Value::Array(items)
        }
        FieldType::Message(s) => Value::Message(read_fields(r, s, path)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::schema::{SchemaDef, SchemaRegistry};

    #[test]
    fn empty_message_is_bare_header() {
        let reg = SchemaRegistry::new();
        reg.register(SchemaDef::new("t/Empty")).unwrap();
        let v = MessageValue::default_of(reg.get("t/Empty").unwrap());
        assert_eq!(encode(&v).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(decode(&[0, 0, 0, 0], &v.schema).unwrap(), v);
    }

    #[test]
    fn zero_twist_is_48_zero_bytes() {
        let reg = SchemaRegistry::with_std();
        let v = MessageValue::default_of(reg.get("std/Twist").unwrap());
        let bytes = encode(&v).unwrap();
        assert_eq!(&bytes[..4], &[0x30, 0, 0, 0]);
        assert_eq!(bytes.len(), 52);
        assert!(bytes[4..].iter().all(|&b| b == 0));
    }

    #[test]
    fn string_layout() {
        let reg = SchemaRegistry::with_std();
        let v = MessageValue::new(reg.get("std/String").unwrap(), vec![Value::String("hi".into())])
            .unwrap();
        assert_eq!(encode(&v).unwrap(), vec![6, 0, 0, 0, 2, 0, 0, 0, b'h', b'i']);
    }

    #[test]
    fn truncation_names_last_field() {
        let reg = SchemaRegistry::with_std();
        let v = MessageValue::default_of(reg.get("std/Twist").unwrap());
        let bytes = encode(&v).unwrap();
        match decode(&bytes[..bytes.len() - 1], &v.schema) {
            Err(DecodeError::Truncated { path, .. }) => assert_eq!(path, "angular.z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_and_utf8_errors() {
        let reg = SchemaRegistry::with_std();
        let s = reg.get("std/String").unwrap();
        let mut bytes = vec![6, 0, 0, 0, 2, 0, 0, 0, b'h', b'i', 0xAA];
        assert_eq!(decode(&bytes, &s), Err(DecodeError::TrailingBytes { count: 1 }));
        bytes.pop();
        bytes[8] = 0xFF;
        assert_eq!(decode(&bytes, &s), Err(DecodeError::InvalidUtf8 { path: "data".into() }));
    }

    #[test]
    fn non_conforming_value_is_rejected() {
        let reg = SchemaRegistry::with_std();
        let v = MessageValue { schema: reg.get("std/String").unwrap(), fields: vec![Value::U8(1)] };
        assert!(matches!(encode(&v), Err(EncodeError::SchemaMismatch(_))));
    }

    #[test]
    fn huge_array_count_does_not_allocate() {
        let reg = SchemaRegistry::new();
        reg.register(SchemaDef::new("t/E")).unwrap();
        reg.register(
            SchemaDef::new("t/A").array_of("xs", crate::codec::TypeRef::Named("t/E".into())),
        )
        .unwrap();
        let s = reg.get("t/A").unwrap();
        let bytes = [4, 0, 0, 0, 0xFF, 0xFF, 0xFF, 0xFF];
        assert!(matches!(decode(&bytes, &s), Err(DecodeError::Oversized { .. })));
    }
}
