//! Defines a message schema at runtime, encodes a value, decodes it back,
//! then ships a camera-sized array through the standard `std/NdArray` type.
//!
//! ```text
//! cargo run --example codec_roundtrip
//! ```

use socialbot::codec::{
    decode, encode, ndarray_to_nested, FlatArray, FlatData, Header, MessageValue, NdArrayFrame, Primitive,
    SchemaDef, SchemaRegistry, TypeRef, TypedMessage, Value,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::with_std();
    reg.register(
        SchemaDef::new("demo/Reading")
            .nested("header", "std/Header")
            .prim("sensor", Primitive::String)
            .array_of("samples", TypeRef::Primitive(Primitive::F32)),
    )?;
    let schema = reg.get("demo/Reading").expect("just registered");

    let header = Header::new(7, 1_700_000_000_000_000_000);
    let value = MessageValue::new(
        schema.clone(),
        vec![
            Value::Message(header.to_fields()),
            Value::String("thermo-1".into()),
            Value::Array(vec![Value::F32(21.5), Value::F32(21.75), Value::F32(22.0)]),
        ],
    )?;
    let bytes = encode(&value)?;
    let back = decode(&bytes, &schema)?;
    println!("demo/Reading: {} bytes on the wire, roundtrip equal: {}", bytes.len(), back == value);

    let n = 240 * 320 * 3;
    let pixels: Vec<u8> = (0..n).map(|i| (i % 251) as u8).collect();
    let frame = NdArrayFrame { header, array: FlatArray::new(vec![240, 320, 3], FlatData::U8(pixels))? };
    let msg = frame.to_message(&reg)?;
    let wire = encode(&msg)?;
    let decoded = NdArrayFrame::from_message(&decode(&wire, &msg.schema)?)?;
    println!("ndarray {:?}: {} bytes, roundtrip equal: {}", decoded.array.shape, wire.len(), decoded == frame);

    let small = ndarray_to_nested(&[2, 3], &FlatData::I16(vec![1, 2, 3, 4, 5, 6]))?;
    println!("nested form of a 2x3 i16 array: {:?}", small.data);
    Ok(())
}
