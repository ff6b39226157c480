use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BankMapping, OpKind, Policy};

const BUILTIN: &str = include_str!("../../config/anchors.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperandTemplate {
    pub role: String,
    pub rank: usize,
    pub axis: usize,
    pub policy: Policy,
}

impl OperandTemplate {
    pub fn mapping(&self, banks: u32) -> BankMapping {
        BankMapping { axis: self.axis, banks, policy: self.policy }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot read registry {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    UnknownKind(String),
    #[error("{kind} operand `{role}` banks axis {axis} but has rank {rank}")]
    AxisOutOfRange { kind: OpKind, role: String, axis: usize, rank: usize },
}

/// Per operator kind, the mapping each operand must have.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorRegistry {
    anchors: BTreeMap<OpKind, Vec<OperandTemplate>>,
}

impl Default for AnchorRegistry {
    fn default() -> Self {
        Self::from_toml_str(BUILTIN).expect("built-in registry parses")
    }
}

impl AnchorRegistry {
    pub fn empty() -> Self {
        AnchorRegistry { anchors: BTreeMap::new() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let raw: BTreeMap<String, Vec<OperandTemplate>> = toml::from_str(text)?;
        let mut anchors = BTreeMap::new();
        for (kind, templates) in raw {
            let kind: OpKind = kind.parse().map_err(RegistryError::UnknownKind)?;
            for t in &templates {
                if t.axis >= t.rank {
                    return Err(RegistryError::AxisOutOfRange { kind, role: t.role.clone(), axis: t.axis, rank: t.rank });
                }
            }
            anchors.insert(kind, templates);
        }
        Ok(AnchorRegistry { anchors })
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RegistryError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn builtin_text() -> &'static str {
        BUILTIN
    }

    pub fn insert(&mut self, kind: OpKind, templates: Vec<OperandTemplate>) {
        self.anchors.insert(kind, templates);
    }

    pub fn templates(&self, kind: OpKind) -> Option<&[OperandTemplate]> {
        self.anchors.get(&kind).map(Vec::as_slice)
    }

    pub fn is_anchored(&self, kind: OpKind) -> bool {
        self.anchors.contains_key(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.anchors.keys().copied()
    }
}
