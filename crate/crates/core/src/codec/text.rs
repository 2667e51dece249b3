//! Declarative schema file format.
//!
//! ```text
//! # comments run to end of line
//! message std/Vector3
//!   f64 x
//!   f64 y
//!   f64 z
//!
//! message std/Twist
//!   std/Vector3 linear
//!   std/Vector3 angular
//! ```
//!
//! Each `message <name>` line opens a schema; following `<type> <field>`
//! lines add fields in order. Types are primitives, schema names, or any
//! of those suffixed with `[]` for arrays.

use std::collections::BTreeSet;

use thiserror::Error;

use super::schema::{FieldDef, SchemaDef, SchemaRegistry, TypeRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema file line {line}: {message}")]
pub struct SchemaParseError {
    pub line: usize,
    pub message: String,
}

pub fn parse_schema_text(text: &str) -> Result<Vec<SchemaDef>, SchemaParseError> {
    let mut defs: Vec<SchemaDef> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SchemaParseError { line: line_no, message };
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap_or_default();
        let second = parts.next();
        if parts.next().is_some() {
            return Err(err(format!("expected two tokens, got {line:?}")));
        }
        if first == "message" {
            let name = second.ok_or_else(|| err("missing message name".into()))?;
            defs.push(SchemaDef::new(name));
            continue;
        }
        let field = second.ok_or_else(|| err(format!("missing field name after {first:?}")))?;
        let ty = TypeRef::parse(first).ok_or_else(|| err(format!("unknown type {first:?}")))?;
        let current = defs
            .last_mut()
            .ok_or_else(|| err("field declared before any `message` line".into()))?;
        current.fields.push(FieldDef { name: field.to_string(), ty });
    }
    Ok(defs)
}

pub fn schema_to_text(def: &SchemaDef) -> String {
    let mut out = format!("message {}\n", def.name);
    for f in &def.fields {
        out.push_str(&format!("  {} {}\n", f.ty, f.name));
    }
    out
}

/// Renders `names` and everything they reference, dependencies first.
pub fn closure_to_text(registry: &SchemaRegistry, names: &[&str]) -> String {
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    fn walk(
        reg: &SchemaRegistry,
        name: &str,
        seen: &mut BTreeSet<String>,
        order: &mut Vec<SchemaDef>,
    ) {
        if !seen.insert(name.to_string()) {
            return;
        }
        let Some(schema) = reg.get(name) else { return };
        let def = schema.def().clone();
        for f in &def.fields {
            let mut t = &f.ty;
            while let TypeRef::Array(inner) = t {
                t = inner;
            }
            if let TypeRef::Named(n) = t {
                walk(reg, n, seen, order);
            }
        }
        order.push(def);
    }
    for n in names {
        walk(registry, n, &mut seen, &mut order);
    }
    order.iter().map(schema_to_text).collect::<Vec<_>>().join("\n")
}
