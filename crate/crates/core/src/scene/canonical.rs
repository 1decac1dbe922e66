//! Canonical scenario documents.
//!
//! A document is `{"scenario": {...}, "schema_version": 1}` written compactly
//! with object keys sorted bytewise and every float rounded to nine
//! significant digits. Serializing a deserialized canonical document
//! reproduces it byte for byte.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{validate, Scenario, Violation};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DocumentErrorCode {
    /// Not parseable as JSON.
    Malformed,
    MalformedNumber,
    VersionMissing,
    VersionMismatch,
    /// Parseable JSON that does not match the scenario schema.
    Schema,
    DanglingRef,
    /// Well-formed, resolvable, but breaks a scenario invariant.
    Invalid,
}

impl DocumentErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentErrorCode::Malformed => "MALFORMED",
            DocumentErrorCode::MalformedNumber => "MALFORMED_NUMBER",
            DocumentErrorCode::VersionMissing => "VERSION_MISSING",
            DocumentErrorCode::VersionMismatch => "VERSION_MISMATCH",
            DocumentErrorCode::Schema => "SCHEMA",
            DocumentErrorCode::DanglingRef => "DANGLING_REF",
            DocumentErrorCode::Invalid => "INVALID",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {message}", code.as_str())]
pub struct DocumentError {
    pub code: DocumentErrorCode,
    pub message: String,
    pub violations: Vec<Violation>,
}

impl DocumentError {
    fn new(code: DocumentErrorCode, message: impl Into<String>) -> Self {
        DocumentError {
            code,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn invalid(violations: Vec<Violation>) -> Self {
        DocumentError {
            code: DocumentErrorCode::Invalid,
            message: format!("{} invariant violation(s)", violations.len()),
            violations,
        }
    }
}

/// Float rendering used by the canonical form.
pub(crate) fn canonical_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                let _ = write!(out, "{i}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                out.push_str(&canonical_float(n.as_f64().unwrap_or(0.0)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => write_object(out, map),
    }
}

fn write_object(out: &mut String, map: &Map<String, Value>) {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    out.push('{');
    for (i, k) in keys.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&serde_json::to_string(k).expect("key encodes"));
        out.push(':');
        write_value(out, &map[k]);
    }
    out.push('}');
}

/// Canonical JSON text for any serializable value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v);
    Ok(out)
}

fn document(s: &Scenario) -> Result<String, DocumentError> {
    let violations = validate(s);
    if !violations.is_empty() {
        return Err(DocumentError::invalid(violations));
    }
    let mut root = Map::new();
    root.insert(
        "scenario".into(),
        serde_json::to_value(s).map_err(|e| DocumentError::new(DocumentErrorCode::Schema, e.to_string()))?,
    );
    root.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    let mut out = String::new();
    write_object(&mut out, &root);
    Ok(out)
}

/// Canonical document for a valid scenario.
pub fn serialize(s: &Scenario) -> Result<String, DocumentError> {
    document(s)
}

/// Canonical document with the fork-link list (`children`) cleared.
///
/// This is the frozen part of a scenario: forking appends to `children` but
/// never changes the content bytes.
pub fn serialize_content(s: &Scenario) -> Result<String, DocumentError> {
    if s.children.is_empty() {
        return document(s);
    }
    let mut content = s.clone();
    content.children.clear();
    document(&content)
}

/// Hex SHA-256 of [`serialize_content`].
pub fn content_digest(s: &Scenario) -> Result<String, DocumentError> {
    let bytes = serialize_content(s)?;
    Ok(hex::encode(Sha256::digest(bytes.as_bytes())))
}

/// Parses a scenario document, checking version, references and invariants.
pub fn deserialize(doc: &str) -> Result<Scenario, DocumentError> {
    let value: Value = serde_json::from_str(doc).map_err(|e| {
        let msg = e.to_string();
        let code = if e.is_syntax() && msg.contains("number") {
            DocumentErrorCode::MalformedNumber
        } else {
            DocumentErrorCode::Malformed
        };
        DocumentError::new(code, msg)
    })?;
    let Value::Object(mut root) = value else {
        return Err(DocumentError::new(DocumentErrorCode::Schema, "document must be a JSON object"));
    };
    match root.get("schema_version") {
        None => {
            return Err(DocumentError::new(
                DocumentErrorCode::VersionMissing,
                "document has no schema_version",
            ))
        }
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(DocumentError::new(
                DocumentErrorCode::VersionMismatch,
                format!("unsupported schema_version {v}; expected {SCHEMA_VERSION}"),
            ))
        }
    }
    let body = root
        .remove("scenario")
        .ok_or_else(|| DocumentError::new(DocumentErrorCode::Schema, "document has no scenario"))?;
    let scenario: Scenario = serde_json::from_value(body)
        .map_err(|e| DocumentError::new(DocumentErrorCode::Schema, e.to_string()))?;

    let dangling = dangling_refs(&scenario);
    if !dangling.is_empty() {
        return Err(DocumentError {
            code: DocumentErrorCode::DanglingRef,
            message: format!("unresolved reference(s): {}", dangling.join(", ")),
            violations: Vec::new(),
        });
    }
    let violations = validate(&scenario);
    if !violations.is_empty() {
        return Err(DocumentError::invalid(violations));
    }
    Ok(scenario)
}

fn dangling_refs(s: &Scenario) -> Vec<String> {
    let ids: HashSet<&str> = s.spheres.iter().map(|x| x.id.as_str()).collect();
    let mut out = Vec::new();
    for sp in &s.sparks {
        for end in &sp.sphere_pair {
            if !ids.contains(end.as_str()) {
                out.push(format!("spark -> {end}"));
            }
        }
    }
    for b in &s.beams {
        if let Some(src) = &b.source_sphere {
            if !ids.contains(src.as_str()) {
                out.push(format!("beam {} -> {src}", b.id));
            }
        }
    }
    for sphere in &s.spheres {
        for ch in &sphere.children {
            if !ids.contains(ch.as_str()) {
                out.push(format!("sphere {} -> {ch}", sphere.id));
            }
        }
    }
    out
}
