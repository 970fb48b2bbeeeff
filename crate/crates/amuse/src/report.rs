//! Report types, the JSON schemas they are published against, and run
//! manifests with content hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::error::{AmuseError, Result};
use crate::fusion::MODULE_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl CategoryStat {
    pub fn new(correct: usize, total: usize) -> Self {
        CategoryStat {
            correct,
            total,
            accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<String, CategoryStat>,
    pub overall: CategoryStat,
}

impl EvalReport {
    pub fn category_accuracy(&self, name: &str) -> f64 {
        self.per_category.get(name).map(|s| s.accuracy).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub modules: Vec<String>,
    /// One row per question category; each row is a probability vector over
    /// `modules`.
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl ImportanceReport {
    pub fn new(rows: BTreeMap<String, Vec<f64>>) -> Self {
        ImportanceReport {
            modules: MODULE_NAMES.iter().map(|m| m.to_string()).collect(),
            rows,
        }
    }

    pub fn score(&self, category: &str, module: &str) -> Option<f64> {
        let idx = self.modules.iter().position(|m| m == module)?;
        self.rows.get(category).map(|row| row[idx])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunReport {
    pub epoch_losses: Vec<f64>,
    pub lr_trace: Vec<f64>,
}

pub const EVAL_SCHEMA: &str = include_str!("../schemas/eval_report.schema.json");
pub const IMPORTANCE_SCHEMA: &str = include_str!("../schemas/importance_report.schema.json");
pub const ABLATION_SCHEMA: &str = include_str!("../schemas/ablation_report.schema.json");
pub const RHYTHM_SCHEMA: &str = include_str!("../schemas/rhythm_timeline.schema.json");
pub const SOURCE_SCHEMA: &str = include_str!("../schemas/source_timeline.schema.json");

/// Validates a JSON value against the subset of JSON Schema the shipped
/// schemas use: `type`, `properties`, `required`, `items`,
/// `additionalProperties`, `enum`, `minimum`, `maximum`.
pub fn validate_schema(value: &Json, schema: &Json) -> std::result::Result<(), String> {
    validate_at(value, schema, "$")
}

fn type_matches(value: &Json, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn validate_at(value: &Json, schema: &Json, path: &str) -> std::result::Result<(), String> {
    let obj = match schema.as_object() {
        Some(o) => o,
        None => return Ok(()),
    };
    if let Some(ty) = obj.get("type") {
        let ok = match ty {
            Json::String(s) => type_matches(value, s),
            Json::Array(options) => options
                .iter()
                .filter_map(|t| t.as_str())
                .any(|s| type_matches(value, s)),
            _ => true,
        };
        if !ok {
            return Err(format!("{}: expected type {}, got {}", path, ty, value));
        }
    }
    if let Some(allowed) = obj.get("enum").and_then(|e| e.as_array()) {
        if !allowed.contains(value) {
            return Err(format!("{}: {} not in enum", path, value));
        }
    }
    if let Some(min) = obj.get("minimum").and_then(|m| m.as_f64()) {
        if let Some(v) = value.as_f64() {
            if v < min {
                return Err(format!("{}: {} below minimum {}", path, v, min));
            }
        }
    }
    if let Some(max) = obj.get("maximum").and_then(|m| m.as_f64()) {
        if let Some(v) = value.as_f64() {
            if v > max {
                return Err(format!("{}: {} above maximum {}", path, v, max));
            }
        }
    }
    if let Some(props) = obj.get("properties").and_then(|p| p.as_object()) {
        if let Some(map) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = map.get(key) {
                    validate_at(v, sub, &format!("{}.{}", path, key))?;
                }
            }
            match obj.get("additionalProperties") {
                Some(Json::Bool(false)) => {
                    for key in map.keys() {
                        if !props.contains_key(key) {
                            return Err(format!("{}: unexpected property '{}'", path, key));
                        }
                    }
                }
                Some(schema @ Json::Object(_)) => {
                    for (key, v) in map {
                        if !props.contains_key(key) {
                            validate_at(v, schema, &format!("{}.{}", path, key))?;
                        }
                    }
                }
                _ => {}
            }
        }
    } else if let Some(extra) = obj.get("additionalProperties") {
        if let (Some(map), Json::Object(_)) = (value.as_object(), extra) {
            for (key, v) in map {
                validate_at(v, extra, &format!("{}.{}", path, key))?;
            }
        }
    }
    if let Some(required) = obj.get("required").and_then(|r| r.as_array()) {
        if let Some(map) = value.as_object() {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !map.contains_key(key) {
                    return Err(format!("{}: missing required property '{}'", path, key));
                }
            }
        }
    }
    if let Some(items) = obj.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate_at(v, items, &format!("{}[{}]", path, i))?;
            }
        }
    }
    Ok(())
}

/// Serializes a report, validates it against its schema, and writes it.
pub fn write_validated<T: Serialize>(path: &Path, report: &T, schema: &str) -> Result<()> {
    let value = serde_json::to_value(report)?;
    let schema: Json = serde_json::from_str(schema)?;
    validate_schema(&value, &schema)
        .map_err(|e| AmuseError::Data(format!("report failed schema validation: {}", e)))?;
    std::fs::write(path, serde_json::to_vec_pretty(&value)?)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

/// What a subcommand consumed and produced, with content hashes. Contains
/// no timestamps, so identical runs write identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Written next to the main output as `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<()> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
