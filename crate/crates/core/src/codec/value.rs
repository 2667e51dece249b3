use std::sync::Arc;

use thiserror::Error;

use super::schema::{FieldType, MessageSchema, Primitive};

/// A single field value. Nested messages carry their fields positionally;
/// the schema supplies names and types.
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    I8(i8),
    I16(i16),
    I32(i32),
    I64(i64),
    U8(u8),
    U16(u16),
    U32(u32),
    U64(u64),
    F32(f32),
    F64(f64),
    String(String),
    Bytes(Vec<u8>),
    Array(Vec<Value>),
    Message(Vec<Value>),
}

// Floats compare by bit pattern so that NaN payloads survive roundtrip checks.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a == b,
            (I8(a), I8(b)) => a == b,
            (I16(a), I16(b)) => a == b,
            (I32(a), I32(b)) => a == b,
            (I64(a), I64(b)) => a == b,
            (U8(a), U8(b)) => a == b,
            (U16(a), U16(b)) => a == b,
            (U32(a), U32(b)) => a == b,
            (U64(a), U64(b)) => a == b,
            (F32(a), F32(b)) => a.to_bits() == b.to_bits(),
            (F64(a), F64(b)) => a.to_bits() == b.to_bits(),
            (String(a), String(b)) => a == b,
            (Bytes(a), Bytes(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (Message(a), Message(b)) => a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::I8(_) => "i8",
            Value::I16(_) => "i16",
            Value::I32(_) => "i32",
            Value::I64(_) => "i64",
            Value::U8(_) => "u8",
            Value::U16(_) => "u16",
            Value::U32(_) => "u32",
            Value::U64(_) => "u64",
            Value::F32(_) => "f32",
            Value::F64(_) => "f64",
            Value::String(_) => "string",
            Value::Bytes(_) => "bytes",
            Value::Array(_) => "array",
            Value::Message(_) => "message",
        }
    }

    /// Zero value for a field type: numbers 0, empty strings and arrays,
    /// nested messages filled recursively.
    pub fn default_for(ty: &FieldType) -> Value {
        match ty {
            FieldType::Primitive(p) => match p {
                Primitive::Bool => Value::Bool(false),
                Primitive::I8 => Value::I8(0),
                Primitive::I16 => Value::I16(0),
                Primitive::I32 => Value::I32(0),
                Primitive::I64 => Value::I64(0),
                Primitive::U8 => Value::U8(0),
                Primitive::U16 => Value::U16(0),
                Primitive::U32 => Value::U32(0),
                Primitive::U64 => Value::U64(0),
                Primitive::F32 => Value::F32(0.0),
                Primitive::F64 => Value::F64(0.0),
                Primitive::String => Value::String(String::new()),
                Primitive::Bytes => Value::Bytes(Vec::new()),
            },
            FieldType::Array(_) => Value::Array(Vec::new()),
            FieldType::Message(s) => {
                Value::Message(s.fields.iter().map(|f| Value::default_for(&f.ty)).collect())
            }
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::F64(v) => Some(v),
            Value::F32(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            Value::U8(v) => Some(v as u64),
            Value::U16(v) => Some(v as u64),
            Value::U32(v) => Some(v as u64),
            Value::U64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Value]> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_message(&self) -> Option<&[Value]> {
        match self {
            Value::Message(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConformanceError {
    #[error("field {path}: expected {expected}, found {found}")]
    TypeMismatch { path: String, expected: String, found: String },
    #[error("{path}: expected {expected} fields, found {found}")]
    FieldCount { path: String, expected: usize, found: usize },
    #[error("message is {found}, expected {expected}")]
    WrongSchema { expected: String, found: String },
}

/// A message instance: a schema plus one value per field, in schema order.
#[derive(Debug, Clone)]
pub struct MessageValue {
    pub schema: Arc<MessageSchema>,
    pub fields: Vec<Value>,
}

impl PartialEq for MessageValue {
    fn eq(&self, other: &Self) -> bool {
        self.schema.name == other.schema.name && self.fields == other.fields
    }
}

impl MessageValue {
    /// Builds a value and checks it against the schema.
    pub fn new(schema: Arc<MessageSchema>, fields: Vec<Value>) -> Result<Self, ConformanceError> {
        let v = MessageValue { schema, fields };
        v.check()?;
        Ok(v)
    }

    pub fn default_of(schema: Arc<MessageSchema>) -> Self {
        let fields = schema.fields.iter().map(|f| Value::default_for(&f.ty)).collect();
        MessageValue { schema, fields }
    }

    pub fn schema_name(&self) -> &str {
        &self.schema.name
    }

    pub fn get(&self, field: &str) -> Option<&Value> {
        self.schema.field_index(field).map(|i| &self.fields[i])
    }

    pub fn set(&mut self, field: &str, value: Value) -> Result<(), ConformanceError> {
        let i = self.schema.field_index(field).ok_or_else(|| ConformanceError::TypeMismatch {
            path: field.to_string(),
            expected: "existing field".into(),
            found: "unknown field".into(),
        })?;
        check_value(&value, &self.schema.fields[i].ty, &mut field.to_string())?;
        self.fields[i] = value;
        Ok(())
    }

    /// Verifies that the value tree matches the schema exactly.
    pub fn check(&self) -> Result<(), ConformanceError> {
        check_fields(&self.fields, &self.schema, &mut String::new())
    }

    pub fn check_schema(&self, expected: &MessageSchema) -> Result<(), ConformanceError> {
        if *self.schema != *expected {
            return Err(ConformanceError::WrongSchema {
                expected: expected.name.clone(),
                found: self.schema.name.clone(),
            });
        }
        self.check()
    }
}

fn check_fields(
    fields: &[Value],
    schema: &MessageSchema,
    path: &mut String,
) -> Result<(), ConformanceError> {
    if fields.len() != schema.fields.len() {
        return Err(ConformanceError::FieldCount {
            path: if path.is_empty() { schema.name.clone() } else { path.clone() },
            expected: schema.fields.len(),
            found: fields.len(),
        });
    }
    for (v, f) in fields.iter().zip(&schema.fields) {
        let len = path.len();
        if !path.is_empty() {
            path.push('.');
        }
        path.push_str(&f.name);
        check_value(v, &f.ty, path)?;
        path.truncate(len);
    }
    Ok(())
}

fn check_value(v: &Value, ty: &FieldType, path: &mut String) -> Result<(), ConformanceError> {
    let ok = match (ty, v) {
        (FieldType::Primitive(p), v) => matches!(
            (p, v),
            (Primitive::Bool, Value::Bool(_))
                | (Primitive::I8, Value::I8(_))
                | (Primitive::I16, Value::I16(_))
                | (Primitive::I32, Value::I32(_))
                | (Primitive::I64, Value::I64(_))
                | (Primitive::U8, Value::U8(_))
                | (Primitive::U16, Value::U16(_))
                | (Primitive::U32, Value::U32(_))
                | (Primitive::U64, Value::U64(_))
                | (Primitive::F32, Value::F32(_))
                | (Primitive::F64, Value::F64(_))
                | (Primitive::String, Value::String(_))
                | (Primitive::Bytes, Value::Bytes(_))
        ),
        (FieldType::Array(inner), Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                check_value(item, inner, path)?;
                path.truncate(len);
            }
            true
        }
        (FieldType::Message(s), Value::Message(fields)) => {
            check_fields(fields, s, path)?;
            true
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(ConformanceError::TypeMismatch {
            path: path.clone(),
            expected: ty.type_name(),
            found: v.kind().to_string(),
        })
    }
}

/// Sequential typed access to message fields, used by the typed wrappers.
pub struct FieldReader<'a> {
    schema: &'a str,
    fields: &'a [Value],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{schema}: field #{index} is not {expected}")]
pub struct ReadError {
    pub schema: String,
    pub index: usize,
    pub expected: &'static str,
}

macro_rules! reader_fn {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&mut self) -> Result<$ty, ReadError> {
            match self.next() {
                Some(Value::$variant(v)) => Ok(v.clone()),
                _ => Err(self.err(stringify!($name))),
            }
        }
    };
}

impl<'a> FieldReader<'a> {
    pub fn new(msg: &'a MessageValue) -> Self {
        FieldReader { schema: &msg.schema.name, fields: &msg.fields, pos: 0 }
    }

    pub fn nested(schema: &'a str, fields: &'a [Value]) -> Self {
        FieldReader { schema, fields, pos: 0 }
    }

    fn next(&mut self) -> Option<&'a Value> {
        let v = self.fields.get(self.pos);
        self.pos += 1;
        v
    }

    fn err(&self, expected: &'static str) -> ReadError {
        ReadError { schema: self.schema.to_string(), index: self.pos - 1, expected }
    }

    reader_fn!(bool, Bool, bool);
    reader_fn!(u8, U8, u8);
    reader_fn!(u32, U32, u32);
    reader_fn!(u64, U64, u64);
    reader_fn!(i64, I64, i64);
    reader_fn!(f32, F32, f32);
    reader_fn!(f64, F64, f64);
    reader_fn!(string, String, String);
    reader_fn!(bytes, Bytes, Vec<u8>);

    pub fn array(&mut self) -> Result<&'a [Value], ReadError> {
        match self.next() {
            Some(Value::Array(v)) => Ok(v),
            _ => Err(self.err("array")),
        }
    }

    pub fn message(&mut self) -> Result<&'a [Value], ReadError> {
        match self.next() {
            Some(Value::Message(v)) => Ok(v),
            _ => Err(self.err("message")),
        }
    }
}
