//! Recording file format.
//!
//! ```text
//! "SBAG" u16 version=1
//! u32 len, schema text (closure of all recorded schemas)
//! u16 topic_count, per topic: u16 len, name, u16 len, schema name
//! records until EOF: u64 stamp_ns, u16 topic index, u32 len, payload
//! ```
//!
//! All integers little-endian; payloads use the bus wire encoding.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{
    closure_to_text, decode, encode, parse_schema_text, DecodeError, EncodeError, MessageSchema, MessageValue,
    SchemaRegistry,
};

const MAGIC: &[u8; 4] = b"SBAG";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum BagError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a bag file")]
    BadMagic,
    #[error("unsupported bag version {0}")]
    Version(u16),
    #[error("corrupt bag at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("schema {0} is not registered")]
    UnknownSchema(String),
    #[error("topic {0} was not declared when the bag was created")]
    UnknownTopic(String),
    #[error("message on {topic} has schema {found}, bag declares {expected}")]
    SchemaMismatch { topic: String, expected: String, found: String },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagTopic {
    pub name: String,
    pub schema: Arc<MessageSchema>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagRecord {
    pub stamp_ns: u64,
    pub topic: String,
    pub message: MessageValue,
}

pub struct BagWriter<W: Write = BufWriter<File>> {
    out: W,
    topics: Vec<BagTopic>,
    records: u64,
}

impl BagWriter {
    pub fn create(
        path: impl AsRef<Path>,
        registry: &SchemaRegistry,
        topics: &[(&str, &str)],
    ) -> Result<Self, BagError> {
        BagWriter::new(BufWriter::new(File::create(path)?), registry, topics)
    }
}

impl<W: Write> BagWriter<W> {
    /// Writes the header for `(topic, schema)` pairs.
    pub fn new(mut out: W, registry: &SchemaRegistry, topics: &[(&str, &str)]) -> Result<Self, BagError> {
        let mut declared = Vec::with_capacity(topics.len());
        for (name, schema) in topics {
            let schema = registry.get(schema).ok_or_else(|| BagError::UnknownSchema(schema.to_string()))?;
            declared.push(BagTopic { name: name.to_string(), schema });
        }
        let names: Vec<&str> = declared.iter().map(|t| t.schema.name.as_str()).collect();
        let text = closure_to_text(registry, &names);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(text.len() as u32).to_le_bytes())?;
        out.write_all(text.as_bytes())?;
        out.write_all(&(declared.len() as u16).to_le_bytes())?;
        for t in &declared {
            write_short(&mut out, &t.name)?;
            write_short(&mut out, &t.schema.name)?;
        }
        Ok(BagWriter { out, topics: declared, records: 0 })
    }

    pub fn topics(&self) -> &[BagTopic] {
        &self.topics
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn write(&mut self, stamp_ns: u64, topic: &str, message: &MessageValue) -> Result<(), BagError> {
        let index = self
            .topics
            .iter()
            .position(|t| t.name == topic)
            .ok_or_else(|| BagError::UnknownTopic(topic.to_string()))?;
        let expected = &self.topics[index].schema.name;
        if message.schema_name() != expected {
            return Err(BagError::SchemaMismatch {
                topic: topic.to_string(),
                expected: expected.clone(),
                found: message.schema_name().to_string(),
            });
        }
        let payload = encode(message)?;
        self.out.write_all(&stamp_ns.to_le_bytes())?;
        self.out.write_all(&(index as u16).to_le_bytes())?;
        self.out.write_all(&(payload.len() as u32).to_le_bytes())?;
        self.out.write_all(&payload)?;
        self.records += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), BagError> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W, BagError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_short(out: &mut impl Write, s: &str) -> io::Result<()> {
    out.write_all(&(s.len() as u16).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

/// Sequential reader; iterate it for records.
pub struct BagReader<R: Read = BufReader<File>> {
    input: R,
    offset: u64,
    registry: Arc<SchemaRegistry>,
    topics: Vec<BagTopic>,
    done: bool,
}

impl BagReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BagError> {
        BagReader::new(BufReader::new(File::open(path)?))
    }

    /// Reads every record into memory.
    pub fn read_all(path: impl AsRef<Path>) -> Result<(Vec<BagTopic>, Vec<BagRecord>), BagError> {
        let mut r = BagReader::open(path)?;
        let topics = r.topics.clone();
        let records = r.by_ref().collect::<Result<Vec<_>, _>>()?;
        Ok((topics, records))
    }
}

impl<R: Read> BagReader<R> {
    pub fn new(input: R) -> Result<Self, BagError> {
        let mut r = BagReader {
            input,
            offset: 0,
            registry: Arc::new(SchemaRegistry::new()),
            topics: Vec::new(),
            done: false,
        };
        let mut magic = [0u8; 4];
        r.exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(BagError::BadMagic);
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(BagError::Version(version));
        }
        let at = r.offset;
        let len = u32::from_le_bytes(r.array()?) as usize;
        let text = r.string(len)?;
        let defs = parse_schema_text(&text).map_err(|e| r.corrupt_at(at, e.to_string()))?;
        r.registry.register_all(defs).map_err(|e| r.corrupt_at(at, e.to_string()))?;
        let count = u16::from_le_bytes(r.array()?);
        for _ in 0..count {
            let name = r.short()?;
            let at = r.offset;
            let schema_name = r.short()?;
            let schema = r
                .registry
                .get(&schema_name)
                .ok_or_else(|| r.corrupt_at(at, format!("schema {schema_name} missing from header")))?;
            r.topics.push(BagTopic { name, schema });
        }
        Ok(r)
    }

    pub fn topics(&self) -> &[BagTopic] {
        &self.topics
    }

    /// Schemas embedded in the file.
    pub fn registry(&self) -> &Arc<SchemaRegistry> {
        &self.registry
    }

    fn corrupt_at(&self, offset: u64, reason: impl Into<String>) -> BagError {
        BagError::Corrupt { offset, reason: reason.into() }
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<(), BagError> {
        match self.input.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(self.corrupt_at(self.offset, "unexpected end of file"))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], BagError> {
        let mut b = [0u8; N];
        self.exact(&mut b)?;
        Ok(b)
    }

    fn string(&mut self, len: usize) -> Result<String, BagError> {
        let at = self.offset;
        let mut buf = vec![0u8; len];
        self.exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| self.corrupt_at(at, "invalid utf-8"))
    }

    fn short(&mut self) -> Result<String, BagError> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        self.string(len)
    }

    /// Reads one byte, or `None` at a clean end of file.
    fn first_byte(&mut self) -> Result<Option<u8>, BagError> {
        let mut b = [0u8; 1];
        loop {
            match self.input.read(&mut b) {
                Ok(0) => return Ok(None),
                Ok(_) => {
                    self.offset += 1;
                    return Ok(Some(b[0]));
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn next_record(&mut self) -> Result<Option<BagRecord>, BagError> {
        let start = self.offset;
        let Some(b0) = self.first_byte()? else { return Ok(None) };
        let rest: [u8; 7] = self.array()?;
        let mut stamp = [0u8; 8];
        stamp[0] = b0;
        stamp[1..].copy_from_slice(&rest);
        let stamp_ns = u64::from_le_bytes(stamp);
        let index = u16::from_le_bytes(self.array()?) as usize;
        let topic = self
            .topics
            .get(index)
            .cloned()
            .ok_or_else(|| self.corrupt_at(start, format!("topic index {index} out of range")))?;
        let len = u32::from_le_bytes(self.array()?) as usize;
        let mut payload = vec![0u8; len];
        self.exact(&mut payload)?;
        let message = decode(&payload, &topic.schema)
            .map_err(|e: DecodeError| self.corrupt_at(start, format!("{}: {e}", topic.name)))?;
        Ok(Some(BagRecord { stamp_ns, topic: topic.name, message }))
    }
}

impl<R: Read> Iterator for BagReader<R> {
    type Item = Result<BagRecord, BagError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{StringMsg, TypedMessage};

    fn sample() -> Vec<u8> {
        let reg = SchemaRegistry::with_std();
        let mut w = BagWriter::new(Vec::new(), &reg, &[("/chat", "std/String"), ("/cam", "std/CameraInfo")]).unwrap();
        for i in 0..3u64 {
            w.write(i * 1000, "/chat", &StringMsg::new(format!("m{i}")).to_message(&reg).unwrap()).unwrap();
        }
        w.write(5000, "/cam", &crate::codec::CameraInfo::for_size(4, 3).to_message(&reg).unwrap()).unwrap();
        w.into_inner().unwrap()
    }

    #[test]
    fn roundtrip() {
        let bytes = sample();
        let r = BagReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.topics().len(), 2);
        assert_eq!(r.topics()[1].schema.name, "std/CameraInfo");
        let recs: Vec<BagRecord> = r.map(Result::unwrap).collect();
        assert_eq!(recs.len(), 4);
        assert_eq!(StringMsg::from_message(&recs[2].message).unwrap().data, "m2");
        assert_eq!(recs[3].stamp_ns, 5000);
        assert_eq!(recs[3].topic, "/cam");
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let bytes = sample();
        let cut = &bytes[..bytes.len() - 3];
        let results: Vec<_> = BagReader::new(cut).unwrap().collect();
        assert_eq!(results.len(), 4);
        assert!(matches!(results[3], Err(BagError::Corrupt { offset, .. }) if offset > 0));
    }

    #[test]
    fn rejects_foreign_files_and_topics() {
        assert!(matches!(BagReader::new(&b"JUNKJUNK"[..]), Err(BagError::BadMagic)));
        let reg = SchemaRegistry::with_std();
        let mut w = BagWriter::new(Vec::new(), &reg, &[("/chat", "std/String")]).unwrap();
        let m = StringMsg::new("x").to_message(&reg).unwrap();
        assert!(matches!(w.write(0, "/other", &m), Err(BagError::UnknownTopic(_))));
        let cam = crate::codec::CameraInfo::for_size(1, 1).to_message(&reg).unwrap();
        assert!(matches!(w.write(0, "/chat", &cam), Err(BagError::SchemaMismatch { .. })));
    }
}
