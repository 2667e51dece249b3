//! Multidimensional arrays carried as rectangular nested lists.
//!
//! A rank-k array is a list of lists nested k deep; a rank-0 array is a bare
//! scalar leaf. On the wire (`std/NdArray`) the same array travels as its
//! dtype, its shape and its leaves in row-major order.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::I16 => "i16",
            DType::I32 => "i32",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn from_name(s: &str) -> Option<DType> {
        Some(match s {
            "u8" => DType::U8,
            "i16" => DType::I16,
            "i32" => DType::I32,
            "f32" => DType::F32,
            "f64" => DType::F64,
            _ => return None,
        })
    }

    pub fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I16 => 2,
            DType::I32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Scalar {
    U8(u8),
    I16(i16),
    I32(i32),
    F32(f32),
    F64(f64),
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::U8(a), Scalar::U8(b)) => a == b,
            (Scalar::I16(a), Scalar::I16(b)) => a == b,
            (Scalar::I32(a), Scalar::I32(b)) => a == b,
            (Scalar::F32(a), Scalar::F32(b)) => a.to_bits() == b.to_bits(),
            (Scalar::F64(a), Scalar::F64(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Scalar {
    pub fn dtype(&self) -> DType {
        match self {
            Scalar::U8(_) => DType::U8,
            Scalar::I16(_) => DType::I16,
            Scalar::I32(_) => DType::I32,
            Scalar::F32(_) => DType::F32,
            Scalar::F64(_) => DType::F64,
        }
    }
}

/// Typed flat storage in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub enum FlatData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl FlatData {
    pub fn empty(dtype: DType) -> FlatData {
        match dtype {
            DType::U8 => FlatData::U8(Vec::new()),
            DType::I16 => FlatData::I16(Vec::new()),
            DType::I32 => FlatData::I32(Vec::new()),
            DType::F32 => FlatData::F32(Vec::new()),
            DType::F64 => FlatData::F64(Vec::new()),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            FlatData::U8(_) => DType::U8,
            FlatData::I16(_) => DType::I16,
            FlatData::I32(_) => DType::I32,
            FlatData::F32(_) => DType::F32,
            FlatData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FlatData::U8(v) => v.len(),
            FlatData::I16(v) => v.len(),
            FlatData::I32(v) => v.len(),
            FlatData::F32(v) => v.len(),
            FlatData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> Scalar {
        match self {
            FlatData::U8(v) => Scalar::U8(v[i]),
            FlatData::I16(v) => Scalar::I16(v[i]),
            FlatData::I32(v) => Scalar::I32(v[i]),
            FlatData::F32(v) => Scalar::F32(v[i]),
            FlatData::F64(v) => Scalar::F64(v[i]),
        }
    }

    fn push(&mut self, s: Scalar) -> bool {
        match (self, s) {
            (FlatData::U8(v), Scalar::U8(x)) => v.push(x),
            (FlatData::I16(v), Scalar::I16(x)) => v.push(x),
            (FlatData::I32(v), Scalar::I32(x)) => v.push(x),
            (FlatData::F32(v), Scalar::F32(x)) => v.push(x),
            (FlatData::F64(v), Scalar::F64(x)) => v.push(x),
            _ => return false,
        }
        true
    }

    /// Little-endian leaf bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            FlatData::U8(v) => v.clone(),
            FlatData::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            FlatData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            FlatData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            FlatData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dtype: DType, bytes: &[u8]) -> Option<FlatData> {
        if !bytes.len().is_multiple_of(dtype.width()) {
            return None;
        }
        Some(match dtype {
            DType::U8 => FlatData::U8(bytes.to_vec()),
            DType::I16 => FlatData::I16(
                bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
            ),
            DType::I32 => FlatData::I32(
                bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F32 => FlatData::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F64 => FlatData::F64(
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
        })
    }
}

/// A nested list of scalars.
#[derive(Debug, Clone, PartialEq)]
pub enum Nested {
    Leaf(Scalar),
    List(Vec<Nested>),
}

/// Shape plus row-major leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatArray {
    pub shape: Vec<usize>,
    pub data: FlatData,
}

impl FlatArray {
    pub fn new(shape: Vec<usize>, data: FlatData) -> Result<Self, NdArrayError> {
        let expected = element_count(&shape);
        if expected != Some(data.len()) {
            return Err(NdArrayError::LengthMismatch { expected, actual: data.len() });
        }
        Ok(FlatArray { shape, data })
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }
}

/// Array message in nested-list form.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArrayMessage {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Nested,
}

impl NdArrayMessage {
    /// Flattens and checks the declared shape against the nesting.
    pub fn to_flat(&self) -> Result<FlatArray, NdArrayError> {
        let flat = nested_to_ndarray(self.dtype, &self.data)?;
        if flat.shape != self.shape {
            return Err(NdArrayError::ShapeMismatch {
                declared: self.shape.clone(),
                actual: flat.shape,
            });
        }
        Ok(flat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NdArrayError {
    #[error("data has {actual} elements, shape requires {expected:?}")]
    LengthMismatch { expected: Option<usize>, actual: usize },
    #[error("ragged nesting at {path}")]
    RaggedInput { path: String },
    #[error("leaf at {path} is {found}, expected {expected}")]
    MixedLeafTypes { path: String, expected: DType, found: DType },
    #[error("declared shape {declared:?} differs from nesting {actual:?}")]
    ShapeMismatch { declared: Vec<usize>, actual: Vec<usize> },
}

/// Product of the shape; `None` on overflow. Rank-0 gives 1.
pub fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Builds the rectangular nested-list form of a row-major array.
pub fn ndarray_to_nested(shape: &[usize], data: &FlatData) -> Result<NdArrayMessage, NdArrayError> {
    let expected = element_count(shape);
    if expected != Some(data.len()) {
        return Err(NdArrayError::LengthMismatch { expected, actual: data.len() });
    }
    fn build(shape: &[usize], data: &FlatData, offset: &mut usize) -> Nested {
        match shape.split_first() {
            None => {
                let s = data.get(*offset);
                *offset += 1;
                Nested::Leaf(s)
            }
            Some((&n, rest)) => Nested::List((0..n).map(|_| build(rest, data, offset)).collect()),
        }
    }
    let mut offset = 0;
    let nested = build(shape, data, &mut offset);
    Ok(NdArrayMessage { dtype: data.dtype(), shape: shape.to_vec(), data: nested })
}

/// Recovers shape and row-major leaves from a nested list, rejecting ragged
/// nesting and leaves whose type differs from `dtype`.
pub fn nested_to_ndarray(dtype: DType, nested: &Nested) -> Result<FlatArray, NdArrayError> {
    // Shape by descent along first elements; zero-length lists stop descent.
    let mut shape = Vec::new();
    let mut probe = nested;
    while let Nested::List(items) = probe {
        shape.push(items.len());
        match items.first() {
            Some(first) => probe = first,
            None => break,
        }
    }
    let mut out = FlatData::empty(dtype);
    let mut path = String::new();
    collect(nested, &shape, dtype, &mut out, &mut path)?;
    Ok(FlatArray { shape, data: out })
}

fn collect(
    node: &Nested,
    shape: &[usize],
    dtype: DType,
    out: &mut FlatData,
    path: &mut String,
) -> Result<(), NdArrayError> {
    let ragged = |path: &str| NdArrayError::RaggedInput {
        path: if path.is_empty() { "<root>".into() } else { path.to_string() },
    };
    match (node, shape.split_first()) {
        (Nested::Leaf(s), None) => {
            if !out.push(*s) {
                return Err(NdArrayError::MixedLeafTypes {
                    path: if path.is_empty() { "<root>".into() } else { path.clone() },
                    expected: dtype,
                    found: s.dtype(),
                });
            }
            Ok(())
        }
        (Nested::List(items), Some((&n, rest))) if items.len() == n => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                collect(item, rest, dtype, out, path)?;
                path.truncate(len);
            }
            Ok(())
        }
        _ => Err(ragged(path)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(x: i32) -> Nested {
        Nested::Leaf(Scalar::I32(x))
    }

    #[test]
    fn two_by_two_row_major() {
        let m = ndarray_to_nested(&[2, 2], &FlatData::I32(vec![1, 2, 3, 4])).unwrap();
        assert_eq!(
            m.data,
            Nested::List(vec![
                Nested::List(vec![leaf(1), leaf(2)]),
                Nested::List(vec![leaf(3), leaf(4)])
            ])
        );
        let flat = nested_to_ndarray(DType::I32, &m.data).unwrap();
        assert_eq!(flat.shape, vec![2, 2]);
        assert_eq!(flat.data, FlatData::I32(vec![1, 2, 3, 4]));
    }

    #[test]
    fn zero_extent_dimension() {
        let m = ndarray_to_nested(&[3, 0], &FlatData::U8(vec![])).unwrap();
        assert_eq!(
            m.data,
            Nested::List(vec![Nested::List(vec![]), Nested::List(vec![]), Nested::List(vec![])])
        );
        assert_eq!(m.to_flat().unwrap().shape, vec![3, 0]);
    }

    #[test]
    fn rank_zero_is_bare_scalar() {
        let flat = nested_to_ndarray(DType::I32, &leaf(7)).unwrap();
        assert!(flat.shape.is_empty());
        assert_eq!(flat.data, FlatData::I32(vec![7]));
        let m = ndarray_to_nested(&[], &FlatData::I32(vec![7])).unwrap();
        assert_eq!(m.data, leaf(7));
    }

    #[test]
    fn ragged_and_mixed_rejected() {
        let ragged = Nested::List(vec![
            Nested::List(vec![leaf(1), leaf(2)]),
            Nested::List(vec![leaf(3)]),
        ]);
        assert!(matches!(
            nested_to_ndarray(DType::I32, &ragged),
            Err(NdArrayError::RaggedInput { .. })
        ));
        let depth = Nested::List(vec![Nested::List(vec![leaf(1)]), leaf(2)]);
        assert!(matches!(nested_to_ndarray(DType::I32, &depth), Err(NdArrayError::RaggedInput { .. })));
        let mixed = Nested::List(vec![leaf(1), Nested::Leaf(Scalar::F64(2.0))]);
        assert!(matches!(
            nested_to_ndarray(DType::I32, &mixed),
            Err(NdArrayError::MixedLeafTypes { .. })
        ));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            ndarray_to_nested(&[2, 3], &FlatData::U8(vec![0; 5])),
            Err(NdArrayError::LengthMismatch { .. })
        ));
    }
}
