//! On-disk JSON documents. Every document carries `schema_version` as
//! `"MAJOR.MINOR"`; readers accept any minor of major 1 and refuse the rest.

use std::path::Path;

use romcim_core::cim::MacroConfig;
use romcim_core::graph::{LayerSpec, NetworkGraph, Shape3};
use romcim_core::rebranch::TransformSpec;
use romcim_core::sysmodel::{CostModel, StudyConfig};
use romcim_core::tensor::FloatWeights;
use romcim_core::train::Dataset;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: &str = "1.0";
pub const SCHEMA_MAJOR: u64 = 1;

fn version() -> String {
    SCHEMA_VERSION.to_string()
}

/// Network description plus transforms still to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub schema_version: String,
    #[serde(default)]
    pub name: String,
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<TransformSpec>,
}

impl NetFile {
    pub fn new(net: &NetworkGraph, transforms: Vec<TransformSpec>) -> Self {
        Self {
            schema_version: version(),
            name: net.name.clone(),
            input_shape: net.input_shape,
            layers: net.layers.clone(),
            transforms,
        }
    }

    pub fn graph(&self) -> NetworkGraph {
        NetworkGraph::new(&self.name, self.input_shape, self.layers.clone())
    }
}

/// Cost constants (units in the field names), macro parameters and study knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    pub schema_version: String,
    #[serde(default)]
    pub cost: CostModel,
    /// Replaces the preset picked by `--cell` when present.
    #[serde(default, rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macro_config: Option<MacroConfig>,
    #[serde(default)]
    pub study: StudyConfig,
}

impl Default for CostFile {
    fn default() -> Self {
        Self { schema_version: version(), cost: CostModel::default(), macro_config: None, study: StudyConfig::default() }
    }
}

/// Labelled samples, `data` flattened sample-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub schema_version: String,
    pub input_shape: Shape3,
    pub classes: usize,
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DatasetFile {
    pub fn new(d: &Dataset) -> Self {
        Self {
            schema_version: version(),
            input_shape: d.shape,
            classes: d.classes,
            data: d.values().to_vec(),
            labels: d.labels().to_vec(),
        }
    }

    pub fn dataset(self) -> CliResult<Dataset> {
        Ok(Dataset::new(self.input_shape, self.classes, self.data, self.labels)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub schema_version: String,
    pub weights: FloatWeights,
}

impl WeightsFile {
    pub fn new(weights: FloatWeights) -> Self {
        Self { schema_version: version(), weights }
    }
}

fn check_version(v: &Value, what: &str) -> CliResult<()> {
    let bad = |m: String| Err(CliError::Validation(format!("{what}: at `schema_version`: {m}")));
    let Some(field) = v.get("schema_version") else {
        return bad("missing field".into());
    };
    let Some(s) = field.as_str() else {
        return bad(format!("expected a \"MAJOR.MINOR\" string, got {field}"));
    };
    let major = s.split('.').next().and_then(|m| m.parse::<u64>().ok());
    match major {
        Some(SCHEMA_MAJOR) => Ok(()),
        Some(m) => bad(format!("unsupported major version {m} (this build reads {SCHEMA_MAJOR}.x)")),
        None => bad(format!("malformed version `{s}`")),
    }
}

/// Parses `text` as a versioned document. Errors name the JSON path.
pub fn parse<T: DeserializeOwned>(text: &str, what: &str) -> CliResult<T> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{what}: invalid JSON: {e}")))?;
    if !v.is_object() {
        return Err(CliError::Validation(format!("{what}: expected a JSON object")));
    }
    check_version(&v, what)?;
    serde_path_to_error::deserialize(v).map_err(|e| CliError::Validation(format!("{what}: at `{}`: {}", e.path(), e.inner())))
}

pub fn read<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minor_versions_accepted_majors_refused() {
        let net = r#"{"schema_version": "1.7", "input_shape": [1, 2, 2], "layers": [{"name": "r", "kind": "relu"}]}"#;
        assert!(parse::<NetFile>(net, "n").is_ok());
        let e = parse::<NetFile>(&net.replace("1.7", "2.0"), "n").unwrap_err();
        assert!(e.to_string().contains("unsupported major version 2"));
        assert!(parse::<NetFile>(r#"{"input_shape": [1, 1, 1], "layers": []}"#, "n").is_err());
    }

    #[test]
    fn errors_carry_the_json_path() {
        let net = r#"{"schema_version": "1.0", "input_shape": [1, 2, 2], "layers": [{"name": "r", "kind": "relu"}, {"name": "c"}]}"#;
        let e = parse::<NetFile>(net, "n").unwrap_err().to_string();
        assert!(e.contains("layers[1]") && e.contains("kind"), "{e}");
        let cost = r#"{"schema_version": "1.0", "cost": {"dram_energy_j_per_byte": "lots"}}"#;
        let e = parse::<CostFile>(cost, "c").unwrap_err().to_string();
        assert!(e.contains("cost.dram_energy_j_per_byte"), "{e}");
    }

    #[test]
    fn documents_round_trip() {
        let f = CostFile::default();
        assert_eq!(parse::<CostFile>(&to_json(&f).unwrap(), "c").unwrap(), f);
        let n = NetFile::new(&romcim_core::workloads::vgg8(10), vec![TransformSpec::Atl { k: 2 }]);
        assert_eq!(parse::<NetFile>(&to_json(&n).unwrap(), "n").unwrap(), n);
    }
}
