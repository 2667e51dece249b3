use crate::codec::std_schemas as names;
use crate::codec::{FieldReader, TypedError, TypedMessage, Value};

pub const DEFAULT_CHUNK: usize = 512;

/// Mono 16-bit PCM block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioChunk {
    pub sample_rate: u32,
    pub channels: u8,
    pub sequence: u64,
    /// Set on the final chunk of a finite stream when it was zero-filled.
    pub padded: bool,
    pub samples: Vec<i16>,
}

impl TypedMessage for AudioChunk {
    const SCHEMA: &'static str = names::AUDIO_CHUNK;

    fn to_fields(&self) -> Vec<Value> {
        vec![
            Value::U32(self.sample_rate),
            Value::U8(self.channels),
            Value::U64(self.sequence),
            Value::Bool(self.padded),
            Value::Array(self.samples.iter().map(|&s| Value::I16(s)).collect()),
        ]
    }

    fn read_fields(r: &mut FieldReader<'_>) -> Result<Self, TypedError> {
        let sample_rate = r.u32()?;
        let channels = r.u8()?;
        let sequence = r.u64()?;
        let padded = r.bool()?;
        let samples = r
            .array()?
            .iter()
            .map(|v| match v {
                Value::I16(s) => Ok(*s),
                _ => Err(TypedError::Invalid { what: "audio chunk", reason: "sample is not i16".into() }),
            })
            .collect::<Result<_, _>>()?;
        if channels != 1 {
            return Err(TypedError::Invalid { what: "audio chunk", reason: format!("{channels} channels") });
        }
        Ok(AudioChunk { sample_rate, channels, sequence, padded, samples })
    }
}

/// Splits a finite signal into fixed-size chunks; a short tail is
/// zero-filled and flagged.
pub fn chunk_signal(samples: &[i16], sample_rate: u32, size: usize, first_sequence: u64) -> Vec<AudioChunk> {
    samples
        .chunks(size.max(1))
        .enumerate()
        .map(|(i, part)| {
            let mut s = part.to_vec();
            let padded = s.len() < size;
            s.resize(size, 0);
            AudioChunk { sample_rate, channels: 1, sequence: first_sequence + i as u64, padded, samples: s }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SchemaRegistry;

    #[test]
    fn one_second_chunking() {
        let chunks = chunk_signal(&vec![1; 16_000], 16_000, DEFAULT_CHUNK, 0);
        assert_eq!(chunks.len(), 32);
        assert_eq!(chunks.iter().filter(|c| !c.padded).count(), 31);
        let last = chunks.last().unwrap();
        assert!(last.padded);
        assert_eq!(last.samples.iter().filter(|&&s| s == 1).count(), 16_000 - 31 * 512);
        assert!(chunks.iter().enumerate().all(|(i, c)| c.sequence == i as u64 && c.samples.len() == 512));
    }

    #[test]
    fn roundtrip() {
        let reg = SchemaRegistry::with_std();
        let c = AudioChunk { sample_rate: 16_000, channels: 1, sequence: 9, padded: true, samples: vec![-3, 0, 7] };
        assert_eq!(AudioChunk::from_message(&c.to_message(&reg).unwrap()).unwrap(), c);
    }
}
