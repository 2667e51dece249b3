//! Message schemas and the schema registry.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

/// Leaf types a schema field can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Bool,
    I8,
    I16,
    I32,
    I64,
    U8,
    U16,
    U32,
    U64,
    F32,
    F64,
    String,
    Bytes,
}

impl Primitive {
    pub const ALL: [Primitive; 13] = [
        Primitive::Bool,
        Primitive::I8,
        Primitive::I16,
        Primitive::I32,
        Primitive::I64,
        Primitive::U8,
        Primitive::U16,
        Primitive::U32,
        Primitive::U64,
        Primitive::F32,
        Primitive::F64,
        Primitive::String,
        Primitive::Bytes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Bool => "bool",
            Primitive::I8 => "i8",
            Primitive::I16 => "i16",
            Primitive::I32 => "i32",
            Primitive::I64 => "i64",
            Primitive::U8 => "u8",
            Primitive::U16 => "u16",
            Primitive::U32 => "u32",
            Primitive::U64 => "u64",
            Primitive::F32 => "f32",
            Primitive::F64 => "f64",
            Primitive::String => "string",
            Primitive::Bytes => "bytes",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Primitive::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Minimum number of wire bytes a value of this type occupies.
    pub(crate) fn min_wire_size(self) -> usize {
        match self {
            Primitive::Bool | Primitive::I8 | Primitive::U8 => 1,
            Primitive::I16 | Primitive::U16 => 2,
            Primitive::I32 | Primitive::U32 | Primitive::F32 => 4,
            Primitive::I64 | Primitive::U64 | Primitive::F64 => 8,
            Primitive::String | Primitive::Bytes => 4,
        }
    }
}

/// A field type as written in a schema definition, before name resolution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeRef {
    Primitive(Primitive),
    Array(Box<TypeRef>),
    Named(String),
}

impl TypeRef {
    pub fn parse(text: &str) -> Option<TypeRef> {
        let text = text.trim();
        if let Some(inner) = text.strip_suffix("[]") {
            return TypeRef::parse(inner).map(|t| TypeRef::Array(Box::new(t)));
        }
        if text.is_empty() {
            return None;
        }
        if let Some(p) = Primitive::from_name(text) {
            return Some(TypeRef::Primitive(p));
        }
        if valid_schema_name(text) {
            Some(TypeRef::Named(text.to_string()))
        } else {
            None
        }
    }

    fn named_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            TypeRef::Primitive(_) => {}
            TypeRef::Array(inner) => inner.named_refs(out),
            TypeRef::Named(n) => out.push(n),
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Primitive(p) => f.write_str(p.name()),
            TypeRef::Array(inner) => write!(f, "{inner}[]"),
            TypeRef::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldDef {
    pub name: String,
    pub ty: TypeRef,
}

/// Unresolved schema as declared in a schema file or in code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchemaDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

impl SchemaDef {
    pub fn new(name: impl Into<String>) -> Self {
        SchemaDef { name: name.into(), fields: Vec::new() }
    }

    pub fn field(mut self, name: impl Into<String>, ty: TypeRef) -> Self {
        self.fields.push(FieldDef { name: name.into(), ty });
        self
    }

    pub fn prim(self, name: impl Into<String>, p: Primitive) -> Self {
        self.field(name, TypeRef::Primitive(p))
    }

    pub fn nested(self, name: impl Into<String>, schema: impl Into<String>) -> Self {
        self.field(name, TypeRef::Named(schema.into()))
    }

    pub fn array_of(self, name: impl Into<String>, elem: TypeRef) -> Self {
        self.field(name, TypeRef::Array(Box::new(elem)))
    }

    fn validate_shape(&self) -> Result<(), SchemaError> {
        if !valid_schema_name(&self.name) {
            return Err(SchemaError::InvalidName(self.name.clone()));
        }
        let mut seen = HashSet::new();
        for f in &self.fields {
            if !valid_field_name(&f.name) {
                return Err(SchemaError::InvalidFieldName {
                    schema: self.name.clone(),
                    field: f.name.clone(),
                });
            }
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateField {
                    schema: self.name.clone(),
                    field: f.name.clone(),
                });
            }
        }
        Ok(())
    }

    fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for f in &self.fields {
            f.ty.named_refs(&mut out);
        }
        out
    }
}

pub(crate) fn valid_schema_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('/')
        && !name.ends_with('/')
        && !name.contains("//")
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '/')
}

fn valid_field_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemaId(pub u32);

/// A field type with nested schemas resolved.
#[derive(Debug, Clone)]
pub enum FieldType {
    Primitive(Primitive),
    Array(Box<FieldType>),
    Message(Arc<MessageSchema>),
}

impl FieldType {
    pub(crate) fn min_wire_size(&self) -> usize {
        match self {
            FieldType::Primitive(p) => p.min_wire_size(),
            FieldType::Array(_) => 4,
            FieldType::Message(s) => s.min_wire_size,
        }
    }

    pub fn type_name(&self) -> String {
        match self {
            FieldType::Primitive(p) => p.name().to_string(),
            FieldType::Array(inner) => format!("{}[]", inner.type_name()),
            FieldType::Message(s) => s.name.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
}

/// A registered, fully resolved schema.
#[derive(Debug)]
pub struct MessageSchema {
    pub id: SchemaId,
    pub name: String,
    pub fields: Vec<Field>,
    def: SchemaDef,
    min_wire_size: usize,
}

impl MessageSchema {
    pub fn def(&self) -> &SchemaDef {
        &self.def
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

impl PartialEq for MessageSchema {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.def == other.def
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema name {0:?} already registered with a different definition")]
    DuplicateName(String),
    #[error("cyclic schema reference: {}", .0.join(" -> "))]
    CyclicSchema(Vec<String>),
    #[error("schema {schema:?} references unknown schema {missing:?}")]
    UnknownSchema { schema: String, missing: String },
    #[error("invalid schema name {0:?}")]
    InvalidName(String),
    #[error("invalid field name {field:?} in schema {schema:?}")]
    InvalidFieldName { schema: String, field: String },
    #[error("duplicate field {field:?} in schema {schema:?}")]
    DuplicateField { schema: String, field: String },
}

#[derive(Default)]
struct RegistryInner {
    by_name: HashMap<String, Arc<MessageSchema>>,
    next_id: u32,
}

/// Thread-safe schema registry. Reads are concurrent; each registration
/// batch is applied atomically.
#[derive(Default)]
pub struct SchemaRegistry {
    inner: RwLock<RegistryInner>,
}

impl fmt::Debug for SchemaRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemaRegistry").field("schemas", &self.names()).finish()
    }
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the standard schema set.
    pub fn with_std() -> Self {
        let reg = Self::new();
        reg.register_all(super::std_schemas::std_defs())
            .expect("standard schema set is valid");
        reg
    }

    pub fn register(&self, def: SchemaDef) -> Result<SchemaId, SchemaError> {
        self.register_all(vec![def]).map(|ids| ids[0])
    }

    /// Registers a batch of definitions that may reference each other.
    /// Either every definition is registered or none is.
    pub fn register_all(&self, defs: Vec<SchemaDef>) -> Result<Vec<SchemaId>, SchemaError> {
        for d in &defs {
            d.validate_shape()?;
        }
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());

        // Name collisions, within the batch and against the registry.
        let mut batch: BTreeMap<&str, &SchemaDef> = BTreeMap::new();
        for d in &defs {
            if let Some(prev) = batch.insert(d.name.as_str(), d) {
                if prev != d {
                    return Err(SchemaError::DuplicateName(d.name.clone()));
                }
            }
            if let Some(existing) = inner.by_name.get(&d.name) {
                if existing.def != *d {
                    return Err(SchemaError::DuplicateName(d.name.clone()));
                }
            }
        }
        let pending: Vec<&SchemaDef> = batch
            .values()
            .copied()
            .filter(|d| !inner.by_name.contains_key(&d.name))
            .collect();

        for d in &pending {
            for r in d.references() {
                if !batch.contains_key(r) && !inner.by_name.contains_key(r) {
                    return Err(SchemaError::UnknownSchema {
                        schema: d.name.clone(),
                        missing: r.to_string(),
                    });
                }
            }
        }

        let order = topo_order(&pending)?;
        let mut staged: HashMap<String, Arc<MessageSchema>> = HashMap::new();
        let mut next_id = inner.next_id;
        for d in order {
            let lookup = |n: &str| staged.get(n).or_else(|| inner.by_name.get(n)).cloned();
            let fields = d
                .fields
                .iter()
                .map(|f| Field { name: f.name.clone(), ty: resolve(&f.ty, &lookup) })
                .collect::<Vec<_>>();
            let min_wire_size = fields.iter().map(|f| f.ty.min_wire_size()).sum();
            let schema = MessageSchema {
                id: SchemaId(next_id),
                name: d.name.clone(),
                fields,
                def: d.clone(),
                min_wire_size,
            };
            next_id += 1;
            staged.insert(d.name.clone(), Arc::new(schema));
        }
        inner.next_id = next_id;
        inner.by_name.extend(staged);
        Ok(defs.iter().map(|d| inner.by_name[&d.name].id).collect())
    }

    pub fn get(&self, name: &str) -> Option<Arc<MessageSchema>> {
        let inner = self.inner.read().unwrap_or_else(|e| e.into_inner());
        inner.by_name.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let inner = self.inner.read().unwrap_or_else(|e| e.into_inner());
        let mut names: Vec<String> = inner.by_name.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn all(&self) -> Vec<Arc<MessageSchema>> {
        let inner = self.inner.read().unwrap_or_else(|e| e.into_inner());
        let mut all: Vec<_> = inner.by_name.values().cloned().collect();
        all.sort_by(|a, b| a.name.cmp(&b.name));
        all
    }
}

fn resolve(ty: &TypeRef, lookup: &dyn Fn(&str) -> Option<Arc<MessageSchema>>) -> FieldType {
    match ty {
        TypeRef::Primitive(p) => FieldType::Primitive(*p),
        TypeRef::Array(inner) => FieldType::Array(Box::new(resolve(inner, lookup))),
        TypeRef::Named(n) => {
            FieldType::Message(lookup(n).expect("references checked before resolution"))
        }
    }
}

/// Orders pending definitions so every definition follows the ones it
/// references. Fails with the offending cycle.
fn topo_order<'a>(pending: &[&'a SchemaDef]) -> Result<Vec<&'a SchemaDef>, SchemaError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    let index: HashMap<&str, usize> =
        pending.iter().enumerate().map(|(i, d)| (d.name.as_str(), i)).collect();
    let mut marks = vec![Mark::Fresh; pending.len()];
    let mut out = Vec::with_capacity(pending.len());

    fn visit<'a>(
        i: usize,
        pending: &[&'a SchemaDef],
        index: &HashMap<&str, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<String>,
        out: &mut Vec<&'a SchemaDef>,
    ) -> Result<(), SchemaError> {
        match marks[i] {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let start = stack.iter().position(|n| *n == pending[i].name).unwrap_or(0);
                let mut cycle = stack[start..].to_vec();
                cycle.push(pending[i].name.clone());
                return Err(SchemaError::CyclicSchema(cycle));
            }
            Mark::Fresh => {}
        }
        marks[i] = Mark::Active;
        stack.push(pending[i].name.clone());
        for r in pending[i].references() {
            if let Some(&j) = index.get(r) {
                visit(j, pending, index, marks, stack, out)?;
            }
        }
        stack.pop();
        marks[i] = Mark::Done;
        out.push(pending[i]);
        Ok(())
    }

    let mut stack = Vec::new();
    for i in 0..pending.len() {
        visit(i, pending, &index, &mut marks, &mut stack, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twist_flat() -> SchemaDef {
        ["lx", "ly", "lz", "ax", "ay", "az"]
            .iter()
            .fold(SchemaDef::new("test/FlatTwist"), |d, n| d.prim(*n, Primitive::F64))
    }

    #[test]
    fn register_and_lookup_roundtrip() {
        let reg = SchemaRegistry::new();
        let id = reg.register(twist_flat()).unwrap();
        let s = reg.get("test/FlatTwist").unwrap();
        assert_eq!(s.id, id);
        assert_eq!(s.def(), &twist_flat());
        assert_eq!(s.fields.len(), 6);
    }

    #[test]
    fn identical_reregistration_is_idempotent() {
        let reg = SchemaRegistry::new();
        let a = reg.register(twist_flat()).unwrap();
        let b = reg.register(twist_flat()).unwrap();
        assert_eq!(a, b);
        assert_eq!(reg.names().len(), 1);
    }

    #[test]
    fn different_definition_same_name_is_rejected() {
        let reg = SchemaRegistry::new();
        reg.register(twist_flat()).unwrap();
        let other = SchemaDef::new("test/FlatTwist").prim("x", Primitive::F64);
        assert_eq!(
            reg.register(other),
            Err(SchemaError::DuplicateName("test/FlatTwist".into()))
        );
    }

    #[test]
    fn mutual_reference_is_cyclic() {
        let reg = SchemaRegistry::new();
        let a = SchemaDef::new("a").nested("b", "b");
        let b = SchemaDef::new("b").nested("a", "a");
        match reg.register_all(vec![a, b]) {
            Err(SchemaError::CyclicSchema(path)) => {
                assert_eq!(path.first(), path.last());
                assert!(path.len() == 3);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
        assert!(reg.names().is_empty(), "failed batch must not register anything");
    }

    #[test]
    fn self_reference_through_array_is_cyclic() {
        let reg = SchemaRegistry::new();
        let a = SchemaDef::new("tree/Node")
            .array_of("children", TypeRef::Named("tree/Node".into()));
        assert!(matches!(reg.register(a), Err(SchemaError::CyclicSchema(_))));
    }

    #[test]
    fn unknown_reference_and_bad_fields() {
        let reg = SchemaRegistry::new();
        let a = SchemaDef::new("a").nested("b", "missing/B");
        assert!(matches!(reg.register(a), Err(SchemaError::UnknownSchema { .. })));
        let dup = SchemaDef::new("d").prim("x", Primitive::U8).prim("x", Primitive::U8);
        assert!(matches!(reg.register(dup), Err(SchemaError::DuplicateField { .. })));
        assert!(matches!(reg.register(SchemaDef::new("")), Err(SchemaError::InvalidName(_))));
    }

    #[test]
    fn type_ref_parsing() {
        assert_eq!(TypeRef::parse("f64"), Some(TypeRef::Primitive(Primitive::F64)));
        assert_eq!(
            TypeRef::parse("u8[][]"),
            Some(TypeRef::Array(Box::new(TypeRef::Array(Box::new(TypeRef::Primitive(
                Primitive::U8
            ))))))
        );
        assert_eq!(TypeRef::parse("std/Header"), Some(TypeRef::Named("std/Header".into())));
        assert_eq!(TypeRef::parse("bad name"), None);
    }
}
