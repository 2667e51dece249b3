//! Typed views of the standard messages.

use std::sync::Arc;

use thiserror::Error;

use super::ndarray::{DType, FlatArray, FlatData};
use super::schema::{MessageSchema, SchemaRegistry};
use super::std_schemas as names;
use super::value::{ConformanceError, FieldReader, MessageValue, ReadError, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypedError {
    #[error("expected a {expected} message, got {found}")]
    WrongSchema { expected: &'static str, found: String },
    #[error("schema {0} is not registered")]
    UnknownSchema(&'static str),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Conformance(#[from] ConformanceError),
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

/// A Rust struct mirroring one registered schema.
pub trait TypedMessage: Sized {
    const SCHEMA: &'static str;

    fn to_fields(&self) -> Vec<Value>;
    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError>;

    fn to_message_with(&self, schema: Arc<MessageSchema>) -> Result<MessageValue, TypedError> {
        if schema.name != Self::SCHEMA {
            return Err(TypedError::WrongSchema { expected: Self::SCHEMA, found: schema.name.clone() });
        }
        Ok(MessageValue::new(schema, self.to_fields())?)
    }

    fn to_message(&self, registry: &SchemaRegistry) -> Result<MessageValue, TypedError> {
        let schema = registry.get(Self::SCHEMA).ok_or(TypedError::UnknownSchema(Self::SCHEMA))?;
        self.to_message_with(schema)
    }

    fn from_message(msg: &MessageValue) -> Result<Self, TypedError> {
        if msg.schema.name != Self::SCHEMA {
            return Err(TypedError::WrongSchema {
                expected: Self::SCHEMA,
                found: msg.schema.name.clone(),
            });
        }
        Self::read_fields(&mut FieldReader::new(msg))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Header {
    pub seq: u64,
    pub stamp_ns: u64,
    pub frame_id: String,
}

impl Header {
    pub fn new(seq: u64, stamp_ns: u64) -> Self {
        Header { seq, stamp_ns, frame_id: String::new() }
    }

    pub fn to_value(&self) -> Value {
        Value::Message(self.to_fields())
    }

    pub fn read_nested(r: &mut FieldReader<'_>) -> Result<Header, TypedError> {
        let fields = r.message()?;
        Header::read_fields(&mut FieldReader::nested(names::HEADER, fields))
    }
}

impl TypedMessage for Header {
    const SCHEMA: &'static str = names::HEADER;

    fn to_fields(&self) -> Vec<Value> {
        vec![Value::U64(self.seq), Value::U64(self.stamp_ns), Value::String(self.frame_id.clone())]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(Header { seq: r.u64()?, stamp_ns: r.u64()?, frame_id: r.string()? })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StringMsg {
    pub data: String,
}

impl StringMsg {
    pub fn new(data: impl Into<String>) -> Self {
        StringMsg { data: data.into() }
    }
}

impl TypedMessage for StringMsg {
    const SCHEMA: &'static str = names::STRING;

    fn to_fields(&self) -> Vec<Value> {
        vec![Value::String(self.data.clone())]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(StringMsg { data: r.string()? })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    fn value(&self) -> Value {
        Value::Message(vec![Value::F64(self.x), Value::F64(self.y), Value::F64(self.z)])
    }

    fn read(r: &mut FieldReader<'_>) -> Result<Vector3, TypedError> {
        let f = r.message()?;
        let mut r = FieldReader::nested(names::VECTOR3, f);
        Ok(Vector3 { x: r.f64()?, y: r.f64()?, z: r.f64()? })
    }
}

/// Velocity command: linear m/s, angular rad/s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwistCommand {
    pub linear: Vector3,
    pub angular: Vector3,
}

impl TwistCommand {
    pub fn is_finite(&self) -> bool {
        [self.linear, self.angular].iter().all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }
}

impl TypedMessage for TwistCommand {
    const SCHEMA: &'static str = names::TWIST;

    fn to_fields(&self) -> Vec<Value> {
        vec![self.linear.value(), self.angular.value()]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let t = TwistCommand { linear: Vector3::read(r)?, angular: Vector3::read(r)? };
        if !t.is_finite() {
            return Err(TypedError::Invalid { what: "twist", reason: "non-finite component".into() });
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("stride {stride} is smaller than 3 * width ({width})")]
    StrideTooSmall { stride: u32, width: u32 },
    #[error("data has {actual} bytes, expected height * stride = {expected}")]
    BadLength { expected: usize, actual: usize },
    #[error("unsupported encoding {0:?}")]
    Encoding(String),
}

/// An rgb8 camera frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    pub header: Header,
    pub width: u32,
    pub height: u32,
    pub stride: u32,
    pub data: Vec<u8>,
}

pub const RGB8: &str = "rgb8";

impl ImageFrame {
    /// Tightly packed black frame.
    pub fn black(width: u32, height: u32) -> Self {
        ImageFrame {
            header: Header::default(),
            width,
            height,
            stride: width * 3,
            data: vec![0; (width * height * 3) as usize],
        }
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if (self.stride as u64) < 3 * self.width as u64 {
            return Err(ImageError::StrideTooSmall { stride: self.stride, width: self.width });
        }
        let expected = self.height as usize * self.stride as usize;
        if self.data.len() != expected {
            return Err(ImageError::BadLength { expected, actual: self.data.len() });
        }
        Ok(())
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y * self.stride + 3 * x) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y * self.stride + 3 * x) as usize;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

impl TypedMessage for ImageFrame {
    const SCHEMA: &'static str = names::IMAGE;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            self.header.to_value(),
            Value::U32(self.width),
            Value::U32(self.height),
            Value::String(RGB8.into()),
            Value::U32(self.stride),
            Value::Bytes(self.data.clone()),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let header = Header::read_nested(r)?;
        let width = r.u32()?;
        let height = r.u32()?;
        let encoding = r.string()?;
        if encoding != RGB8 {
            return Err(TypedError::Invalid { what: "image", reason: ImageError::Encoding(encoding).to_string() });
        }
        Ok(ImageFrame { header, width, height, stride: r.u32()?, data: r.bytes()? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraInfo {
    pub header: Header,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraInfo {
    /// Pinhole model with a 60 degree horizontal field of view.
    pub fn for_size(width: u32, height: u32) -> Self {
        let f = width as f64 / (2.0 * (30f64).to_radians().tan());
        CameraInfo {
            header: Header::default(),
            width,
            height,
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0 && self.height > 0 && self.fx > 0.0 && self.fy > 0.0
    }
}

impl TypedMessage for CameraInfo {
    const SCHEMA: &'static str = names::CAMERA_INFO;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            self.header.to_value(),
            Value::U32(self.width),
            Value::U32(self.height),
            Value::F64(self.fx),
            Value::F64(self.fy),
            Value::F64(self.cx),
            Value::F64(self.cy),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        Ok(CameraInfo {
            header: Header::read_nested(r)?,
            width: r.u32()?,
            height: r.u32()?,
            fx: r.f64()?,
            fy: r.f64()?,
            cx: r.f64()?,
            cy: r.f64()?,
        })
    }
}

/// `std/NdArray` payload: header plus a flat array.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArrayFrame {
    pub header: Header,
    pub array: FlatArray,
}

impl TypedMessage for NdArrayFrame {
    const SCHEMA: &'static str = names::NDARRAY;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            self.header.to_value(),
            Value::String(self.array.dtype().name().into()),
            Value::Array(self.array.shape.iter().map(|&d| Value::U32(d as u32)).collect()),
            Value::Bytes(self.array.data.to_le_bytes()),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let header = Header::read_nested(r)?;
        let dtype_name = r.string()?;
        let dtype = DType::from_name(&dtype_name).ok_or_else(|| TypedError::Invalid {
            what: "ndarray",
            reason: format!("unknown dtype {dtype_name:?}"),
        })?;
        let shape = r
            .array()?
            .iter()
            .map(|v| v.as_u64().map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or(TypedError::Invalid { what: "ndarray", reason: "shape must be u32".into() })?;
        let bytes = r.bytes()?;
        let data = FlatData::from_le_bytes(dtype, &bytes).ok_or(TypedError::Invalid {
            what: "ndarray",
            reason: "data length is not a multiple of the dtype width".into(),
        })?;
        let array = FlatArray::new(shape, data)
            .map_err(|e| TypedError::Invalid { what: "ndarray", reason: e.to_string() })?;
        Ok(NdArrayFrame { header, array })
    }
}
