use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::DecisionRule;

pub const SCHEMA_VERSION: &str = "1";

/// Serialized fit. Floats are written in shortest round-trip form, so a
/// read followed by a write reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: String,
    pub method: String,
    pub beta: Vec<f64>,
    pub c: f64,
    pub support: Vec<usize>,
    pub metadata: BTreeMap<String, Value>,
}

/// Half-fit fields stored under the `halves` metadata key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfRecord {
    pub train_rows: Vec<usize>,
    pub beta: Vec<f64>,
    pub c: f64,
    pub k_star: Option<usize>,
    pub pooled_lambda: f64,
    pub calibration_lambda: f64,
    pub fallback: bool,
}

impl ModelArtifact {
    pub fn new(method: &str, rule: &DecisionRule) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_owned(),
            method: method.to_owned(),
            beta: rule.beta.to_vec(),
            c: rule.c,
            support: rule
                .beta
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j)
                .collect(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn rule(&self) -> Result<DecisionRule> {
        DecisionRule::new(self.beta.clone().into(), self.c)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Self = serde_json::from_str(text)?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported artifact schema version `{}`",
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Half fits stored by the cross-fitted methods; a contract error when
    /// the artifact has none.
    pub fn halves(&self) -> Result<[HalfRecord; 2]> {
        let value = self.metadata.get("halves").ok_or_else(|| {
            Error::Contract(format!(
                "artifact for method `{}` has no half-fit metadata; inference needs a `proposed` fit",
                self.method
            ))
        })?;
        let halves: Vec<HalfRecord> = serde_json::from_value(value.clone())?;
        <[HalfRecord; 2]>::try_from(halves)
            .map_err(|_| Error::InvalidInput("expected exactly two half fits".into()))
    }

    /// String list stored under `key`, if any.
    pub fn names(&self, key: &str) -> Option<Vec<String>> {
        self.metadata
            .get(key)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}
