//! Storage descriptions: how each relation's coordinate tree is laid out and
//! which access capabilities each level exposes. Serialized as TOML.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::relation::Schema;
use crate::storage::StorageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Sorted values with CSR-style child offsets.
    Sorted,
    /// Hash index per node; values are still kept sorted so iteration can be
    /// enabled on demand.
    Hash,
    /// Contiguous integer range per node.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Lookup,
    Iterate,
    Both,
}

impl Capability {
    pub fn can_lookup(&self) -> bool {
        matches!(self, Capability::Lookup | Capability::Both)
    }

    pub fn can_iterate(&self) -> bool {
        matches!(self, Capability::Iterate | Capability::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDesc {
    pub kind: LayerKind,
    pub capability: Capability,
}

impl LevelDesc {
    pub fn sorted() -> LevelDesc {
        LevelDesc { kind: LayerKind::Sorted, capability: Capability::Both }
    }

    pub fn hash() -> LevelDesc {
        LevelDesc { kind: LayerKind::Hash, capability: Capability::Lookup }
    }
}

/// Per-relation storage layout: attribute order, one level descriptor per
/// key attribute, an optional primary-key declaration, and related-value
/// attributes stored as payload under the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageDescription {
    pub order: Vec<String>,
    #[serde(default)]
    pub levels: Vec<LevelEntry>,
    #[serde(default)]
    pub primary_key_len: usize,
    #[serde(default)]
    pub related: Vec<String>,
}

/// TOML-friendly level entry; `capability` defaults by kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub kind: LayerKind,
    #[serde(default)]
    pub capability: Option<Capability>,
}

impl LevelEntry {
    pub fn resolve(&self) -> LevelDesc {
        let capability = self.capability.unwrap_or(match self.kind {
            LayerKind::Hash => Capability::Lookup,
            _ => Capability::Both,
        });
        LevelDesc { kind: self.kind, capability }
    }
}

impl StorageDescription {
    /// All-sorted iterable levels in schema order, no primary key.
    pub fn default_for(schema: &Schema) -> StorageDescription {
        StorageDescription {
            order: schema.attrs().map(str::to_string).collect(),
            levels: Vec::new(),
            primary_key_len: 0,
            related: Vec::new(),
        }
    }

    pub fn with_order(order: &[&str]) -> StorageDescription {
        StorageDescription {
            order: order.iter().map(|s| s.to_string()).collect(),
            levels: Vec::new(),
            primary_key_len: 0,
            related: Vec::new(),
        }
    }

    /// Key attributes: the storage order minus the related suffix.
    pub fn key_attrs(&self) -> &[String] {
        &self.order[..self.order.len() - self.related.len()]
    }

    pub fn level_descs(&self) -> Vec<LevelDesc> {
        let n = self.key_attrs().len();
        if self.levels.is_empty() {
            return vec![LevelDesc::sorted(); n];
        }
        self.levels.iter().map(LevelEntry::resolve).collect()
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), StorageError> {
        let mut names: Vec<&str> = self.order.iter().map(String::as_str).collect();
        names.sort_unstable();
        let mut schema_names: Vec<&str> = schema.attrs().collect();
        schema_names.sort_unstable();
        if names != schema_names {
            return Err(StorageError::OrderMismatch(self.order.clone()));
        }
        let key_len = self.order.len() - self.related.len();
        let suffix = &self.order[key_len..];
        if self.related.len() > self.order.len()
            || suffix.iter().any(|a| !self.related.contains(a))
        {
            return Err(StorageError::RelatedNotSuffix);
        }
        if !self.related.is_empty() && self.primary_key_len != key_len {
            return Err(StorageError::RelatedNeedsKey);
        }
        if self.primary_key_len > key_len {
            return Err(StorageError::KeyTooLong(self.primary_key_len, key_len));
        }
        if !self.levels.is_empty() && self.levels.len() != key_len {
            return Err(StorageError::LevelCount(self.levels.len(), key_len));
        }
        Ok(())
    }
}

/// Storage descriptions for a set of relations, read from and written to a
/// TOML file with a single `[relations.<name>]` table per relation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageMap {
    #[serde(default)]
    pub relations: BTreeMap<String, StorageDescription>,
}

impl StorageMap {
    pub fn get(&self, name: &str) -> Option<&StorageDescription> {
        self.relations.get(name)
    }

    pub fn insert(&mut self, name: &str, desc: StorageDescription) {
        self.relations.insert(name.to_string(), desc);
    }

    pub fn parse(text: &str) -> Result<StorageMap, StorageError> {
        toml::from_str(text).map_err(|e| StorageError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("storage map serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
[relations.A]
order = ["x", "y"]
levels = [{ kind = "sorted" }, { kind = "hash", capability = "lookup" }]
primary_key_len = 0
related = []

[relations.K]
order = ["k", "v"]
primary_key_len = 1
related = ["v"]
"#;
        let map = StorageMap::parse(text).unwrap();
        assert_eq!(map.get("A").unwrap().level_descs()[1].kind, LayerKind::Hash);
        assert_eq!(map.get("K").unwrap().key_attrs(), ["k".to_string()]);
        let back = StorageMap::parse(&map.to_toml()).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn related_must_be_suffix_with_key() {
        let schema = Schema::ints(&["x", "y"]);
        let desc = StorageDescription {
            order: vec!["x".into(), "y".into()],
            levels: vec![],
            primary_key_len: 0,
            related: vec!["y".into()],
        };
        assert!(matches!(desc.validate(&schema), Err(StorageError::RelatedNeedsKey)));
        let desc = StorageDescription { primary_key_len: 1, ..desc };
        assert!(desc.validate(&schema).is_ok());
    }
}
