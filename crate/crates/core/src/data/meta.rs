use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a column plays in the panel. Instruments occupy the leading columns
/// of every assembled dataset; core variables are the sign-restricted block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Instrument,
    Core,
    Other,
}

/// Stationarity transform codes:
/// 1 level, 2 first difference, 4 100*log, 5 100*monthly log difference,
/// 7 100*twelve-month log difference.
pub const VALID_TCODES: [u8; 5] = [1, 2, 4, 5, 7];

/// Per-variable metadata: mnemonic, role, transform code, free-text description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub mnemonic: String,
    pub role: Role,
    pub tcode: u8,
    #[serde(default)]
    pub description: String,
}

impl VariableMeta {
    pub fn new(mnemonic: &str, role: Role, tcode: u8) -> VariableMeta {
        VariableMeta {
            mnemonic: mnemonic.to_string(),
            role,
            tcode,
            description: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !VALID_TCODES.contains(&self.tcode) {
            return Err(Error::schema(format!(
                "variable {:?} has invalid tcode {} (allowed: 1, 2, 4, 5, 7)",
                self.mnemonic, self.tcode
            )));
        }
        if self.mnemonic.is_empty() {
            return Err(Error::schema("empty mnemonic".to_string()));
        }
        Ok(())
    }
}

/// Validate a schema and return it ordered INSTRUMENT, CORE, OTHER (stable
/// within each role). Duplicate mnemonics are rejected.
pub fn ordered_schema(schema: &[VariableMeta]) -> Result<Vec<VariableMeta>> {
    for v in schema {
        v.validate()?;
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in schema {
        if !seen.insert(v.mnemonic.clone()) {
            return Err(Error::schema(format!(
                "duplicate mnemonic {:?} in schema",
                v.mnemonic
            )));
        }
    }
    let mut out = Vec::with_capacity(schema.len());
    for role in [Role::Instrument, Role::Core, Role::Other] {
        out.extend(schema.iter().filter(|v| v.role == role).cloned());
    }
    Ok(out)
}

/// Parse a JSON schema file: an array of {mnemonic, role, tcode, description}.
pub fn schema_from_json(text: &str) -> Result<Vec<VariableMeta>> {
    let schema: Vec<VariableMeta> = serde_json::from_str(text).map_err(|e| Error::Json {
        path: "<schema>".to_string(),
        source: e,
    })?;
    for v in &schema {
        v.validate()?;
    }
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tcode_validated_at_load() {
        let bad = VariableMeta::new("X", Role::Core, 3);
        assert!(bad.validate().is_err());
        for t in VALID_TCODES {
            assert!(VariableMeta::new("X", Role::Core, t).validate().is_ok());
        }
    }

    #[test]
    fn ordering_puts_instruments_first() {
        let schema = vec![
            VariableMeta::new("RGDP", Role::Core, 7),
            VariableMeta::new("Target", Role::Instrument, 1),
            VariableMeta::new("VIX", Role::Other, 1),
            VariableMeta::new("Path", Role::Instrument, 1),
        ];
        let ordered = ordered_schema(&schema).unwrap();
        let names: Vec<&str> = ordered.iter().map(|v| v.mnemonic.as_str()).collect();
        assert_eq!(names, vec!["Target", "Path", "RGDP", "VIX"]);
    }

    #[test]
    fn duplicate_mnemonic_rejected() {
        let schema = vec![
            VariableMeta::new("A", Role::Core, 1),
            VariableMeta::new("A", Role::Core, 1),
        ];
        assert!(ordered_schema(&schema).is_err());
    }

    #[test]
    fn schema_json_round_trip() {
        let text = r#"[
            {"mnemonic": "Target", "role": "INSTRUMENT", "tcode": 1, "description": "target factor"},
            {"mnemonic": "RGDP", "role": "CORE", "tcode": 7, "description": ""}
        ]"#;
        let schema = schema_from_json(text).unwrap();
        assert_eq!(schema.len(), 2);
        assert_eq!(schema[0].role, Role::Instrument);
        assert_eq!(schema[1].tcode, 7);
    }
}
