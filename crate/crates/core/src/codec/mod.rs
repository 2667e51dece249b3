//! Schema-driven message model and its binary wire format.

mod ndarray;
mod schema;
pub mod std_schemas;
mod text;
mod types;
mod value;
mod wire;

pub use ndarray::{
    element_count, nested_to_ndarray, ndarray_to_nested, DType, FlatArray, FlatData, NdArrayError,
    NdArrayMessage, Nested, Scalar,
};
pub use schema::{
    Field, FieldDef, FieldType, MessageSchema, Primitive, SchemaDef, SchemaError, SchemaId,
    SchemaRegistry, TypeRef,
};
pub use text::{closure_to_text, parse_schema_text, schema_to_text, SchemaParseError};
pub use types::{
    CameraInfo, Header, ImageError, ImageFrame, NdArrayFrame, StringMsg, TwistCommand,
    TypedError, TypedMessage, Vector3, RGB8,
};
pub use value::{ConformanceError, FieldReader, MessageValue, ReadError, Value};
pub use wire::{decode, encode, DecodeError, EncodeError};
