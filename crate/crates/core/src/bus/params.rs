use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Scalar launch parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => write!(f, "{s:?}"),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parameter {key:?}: {reason}")]
pub struct ParamError {
    pub key: String,
    pub reason: String,
}

/// Typed lookups with defaults over a parameter map.
pub trait ParamsExt {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ParamError>;
    fn u64_or(&self, key: &str, default: u64) -> Result<u64, ParamError>;
    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ParamError>;
    fn str_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str, ParamError>;
}

fn bad(key: &str, reason: impl Into<String>) -> ParamError {
    ParamError { key: key.to_string(), reason: reason.into() }
}

impl ParamsExt for Params {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ParamError> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Float(x)) if x.is_finite() => Ok(*x),
            Some(ParamValue::Int(i)) => Ok(*i as f64),
            Some(other) => Err(bad(key, format!("expected a finite number, got {other}"))),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64, ParamError> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as u64),
            Some(other) => Err(bad(key, format!("expected a non-negative integer, got {other}"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ParamError> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Bool(b)) => Ok(*b),
            Some(other) => Err(bad(key, format!("expected a bool, got {other}"))),
        }
    }

    fn str_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str, ParamError> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Str(s)) => Ok(s),
            Some(other) => Err(bad(key, format!("expected a string, got {other}"))),
        }
    }
}
