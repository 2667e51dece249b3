//! JSON form of messages.
//!
//! Messages become objects with fields in schema order, arrays become
//! arrays, `bytes` become standard base64 text. Integers are JSON numbers.
//! Floats use the shortest text that parses back to the same bits;
//! non-finite floats are the strings `"NaN"`, `"Infinity"` and
//! `"-Infinity"`. Input objects must name every field and nothing else.

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::{Map, Number, Value as Json};
use thiserror::Error;

use crate::codec::{FieldType, MessageSchema, MessageValue, Primitive, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JsonError {
    #[error("{path}: field missing")]
    FieldMissing { path: String },
    #[error("{path}: expected {expected}")]
    TypeMismatch { path: String, expected: String },
    #[error("{path}: unknown field")]
    UnknownField { path: String },
}

impl JsonError {
    pub fn path(&self) -> &str {
        match self {
            JsonError::FieldMissing { path } | JsonError::TypeMismatch { path, .. } | JsonError::UnknownField { path } => {
                path
            }
        }
    }
}

pub fn message_to_json(msg: &MessageValue) -> Json {
    fields_to_json(&msg.schema, &msg.fields)
}

fn fields_to_json(schema: &MessageSchema, fields: &[Value]) -> Json {
    let mut map = Map::new();
    for (f, v) in schema.fields.iter().zip(fields) {
        map.insert(f.name.clone(), typed_to_json(&f.ty, v));
    }
    Json::Object(map)
}

fn float_json(x: f64) -> Json {
    match Number::from_f64(x) {
        Some(n) => Json::Number(n),
        None if x.is_nan() => Json::String("NaN".into()),
        None if x > 0.0 => Json::String("Infinity".into()),
        None => Json::String("-Infinity".into()),
    }
}

/// Leaf conversion; messages and arrays are handled by `typed_to_json`.
fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::I8(x) => Json::from(*x),
        Value::I16(x) => Json::from(*x),
        Value::I32(x) => Json::from(*x),
        Value::I64(x) => Json::from(*x),
        Value::U8(x) => Json::from(*x),
        Value::U16(x) => Json::from(*x),
        Value::U32(x) => Json::from(*x),
        Value::U64(x) => Json::from(*x),
        Value::F32(x) => float_json(*x as f64),
        Value::F64(x) => float_json(*x),
        Value::String(s) => Json::String(s.clone()),
        Value::Bytes(b) => Json::String(B64.encode(b)),
        Value::Array(items) => Json::Array(items.iter().map(value_to_json).collect()),
        Value::Message(_) => Json::Null,
    }
}

fn typed_to_json(ty: &FieldType, v: &Value) -> Json {
    match (ty, v) {
        (FieldType::Message(s), Value::Message(fields)) => fields_to_json(s, fields),
        (FieldType::Array(inner), Value::Array(items)) => {
            Json::Array(items.iter().map(|i| typed_to_json(inner, i)).collect())
        }
        _ => value_to_json(v),
    }
}

pub fn json_to_message(json: &Json, schema: &Arc<MessageSchema>) -> Result<MessageValue, JsonError> {
    let fields = object_fields(json, schema, "")?;
    Ok(MessageValue { schema: schema.clone(), fields })
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

fn object_fields(json: &Json, schema: &MessageSchema, path: &str) -> Result<Vec<Value>, JsonError> {
    let obj = json.as_object().ok_or_else(|| JsonError::TypeMismatch {
        path: if path.is_empty() { "$".into() } else { path.into() },
        expected: format!("{} object", schema.name),
    })?;
    if let Some(extra) = obj.keys().find(|k| schema.field_index(k).is_none()) {
        return Err(JsonError::UnknownField { path: join(path, extra) });
    }
    schema
        .fields
        .iter()
        .map(|f| {
            let p = join(path, &f.name);
            let v = obj.get(&f.name).ok_or_else(|| JsonError::FieldMissing { path: p.clone() })?;
            convert(v, &f.ty, &p)
        })
        .collect()
}

fn convert(json: &Json, ty: &FieldType, path: &str) -> Result<Value, JsonError> {
    let mismatch = || JsonError::TypeMismatch { path: path.to_string(), expected: ty.type_name() };
    match ty {
        FieldType::Message(s) => Ok(Value::Message(object_fields(json, s, path)?)),
        FieldType::Array(inner) => {
            let items = json.as_array().ok_or_else(mismatch)?;
            items
                .iter()
                .enumerate()
                .map(|(i, item)| convert(item, inner, &format!("{path}[{i}]")))
                .collect::<Result<_, _>>()
                .map(Value::Array)
        }
        FieldType::Primitive(p) => {
            let int = || json.as_i64().map(i128::from).or_else(|| json.as_u64().map(i128::from));
            let ranged = |lo: i128, hi: i128| int().filter(|v| (lo..=hi).contains(v)).ok_or_else(mismatch);
            Ok(match p {
                Primitive::Bool => Value::Bool(json.as_bool().ok_or_else(mismatch)?),
                Primitive::I8 => Value::I8(ranged(i8::MIN as i128, i8::MAX as i128)? as i8),
                Primitive::I16 => Value::I16(ranged(i16::MIN as i128, i16::MAX as i128)? as i16),
                Primitive::I32 => Value::I32(ranged(i32::MIN as i128, i32::MAX as i128)? as i32),
                Primitive::I64 => Value::I64(ranged(i64::MIN as i128, i64::MAX as i128)? as i64),
                Primitive::U8 => Value::U8(ranged(0, u8::MAX as i128)? as u8),
                Primitive::U16 => Value::U16(ranged(0, u16::MAX as i128)? as u16),
                Primitive::U32 => Value::U32(ranged(0, u32::MAX as i128)? as u32),
                Primitive::U64 => Value::U64(ranged(0, u64::MAX as i128)? as u64),
                Primitive::F32 => Value::F32(float(json).ok_or_else(mismatch)? as f32),
                Primitive::F64 => Value::F64(float(json).ok_or_else(mismatch)?),
                Primitive::String => Value::String(json.as_str().ok_or_else(mismatch)?.to_string()),
                Primitive::Bytes => {
                    let text = json.as_str().ok_or_else(mismatch)?;
                    Value::Bytes(B64.decode(text).map_err(|_| JsonError::TypeMismatch {
                        path: path.to_string(),
                        expected: "base64 bytes".into(),
                    })?)
                }
            })
        }
    }
}

fn float(json: &Json) -> Option<f64> {
    match json {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => match s.as_str() {
            "NaN" => Some(f64::NAN),
            "Infinity" => Some(f64::INFINITY),
            "-Infinity" => Some(f64::NEG_INFINITY),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ImageFrame, SchemaRegistry, TwistCommand, TypedMessage};
    use serde_json::json;

    #[test]
    fn twist_from_json() {
        let reg = SchemaRegistry::with_std();
        let j = json!({"linear": {"x": 0.5, "y": 0.0, "z": 0.0}, "angular": {"x": 0.0, "y": 0.0, "z": -1.25}});
        let m = json_to_message(&j, &reg.get("std/Twist").unwrap()).unwrap();
        let t = TwistCommand::from_message(&m).unwrap();
        assert_eq!((t.linear.x, t.angular.z), (0.5, -1.25));
        assert_eq!(message_to_json(&m), j);
    }

    #[test]
    fn image_bytes_roundtrip() {
        let reg = SchemaRegistry::with_std();
        let mut img = ImageFrame::black(3, 2);
        img.data.iter_mut().enumerate().for_each(|(i, b)| *b = (i * 37) as u8);
        let m = img.to_message(&reg).unwrap();
        let j = message_to_json(&m);
        assert!(j["data"].is_string());
        assert_eq!(json_to_message(&j, &m.schema).unwrap(), m);
    }

    #[test]
    fn errors_name_the_path() {
        let reg = SchemaRegistry::with_std();
        let twist = reg.get("std/Twist").unwrap();
        let j = json!({"linear": {"x": 0.5, "y": 0.0}, "angular": {"x": 0.0, "y": 0.0, "z": 0.0}});
        assert_eq!(json_to_message(&j, &twist), Err(JsonError::FieldMissing { path: "linear.z".into() }));
        let j = json!({"linear": {"x": "fast", "y": 0, "z": 0}, "angular": {"x": 0, "y": 0, "z": 0}});
        assert!(matches!(json_to_message(&j, &twist), Err(JsonError::TypeMismatch { path, .. }) if path == "linear.x"));
        let j = json!({"data": "x", "extra": 1});
        assert_eq!(
            json_to_message(&j, &reg.get("std/String").unwrap()),
            Err(JsonError::UnknownField { path: "extra".into() })
        );
        let j = json!({"header": {"seq": -1, "stamp_ns": 0, "frame_id": ""}, "dtype": "u8", "shape": [], "data": ""});
        assert!(matches!(json_to_message(&j, &reg.get("std/NdArray").unwrap()), Err(JsonError::TypeMismatch { path, .. }) if path == "header.seq"));
    }

    #[test]
    fn special_floats() {
        let reg = SchemaRegistry::with_std();
        let v3 = reg.get("std/Vector3").unwrap();
        let m = MessageValue { schema: v3.clone(), fields: vec![Value::F64(f64::NAN), Value::F64(f64::INFINITY), Value::F64(0.1)] };
        let j = message_to_json(&m);
        assert_eq!(j, json!({"x": "NaN", "y": "Infinity", "z": 0.1}));
        assert_eq!(json_to_message(&j, &v3).unwrap(), m);
    }
}
