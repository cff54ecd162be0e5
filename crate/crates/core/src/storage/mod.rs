//! Coordinate-tree storage: per-attribute layers with lookup and iteration
//! capabilities, builders from relations, and the storage-description model.

mod cursor;
mod desc;
mod tree;

pub use cursor::{DupCursor, LevelCursor, LevelLookup, PredicateLookup, RangeCursor, SingletonCursor};
pub use desc::{Capability, LayerKind, LevelDesc, LevelEntry, StorageDescription, StorageMap};
pub use tree::{build_tree, CoordinateTree, Level};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage order {0:?} is not a permutation of the schema")]
    OrderMismatch(Vec<String>),
    #[error("related attributes must form a suffix of the storage order")]
    RelatedNotSuffix,
    #[error("related attributes require a primary key over all key levels")]
    RelatedNeedsKey,
    #[error("primary_key_len {0} exceeds the number of key levels {1}")]
    KeyTooLong(usize, usize),
    #[error("level count {0} does not match key attribute count {1}")]
    LevelCount(usize, usize),
    #[error("duplicate primary key {0:?}")]
    DuplicatePrimaryKey(Vec<String>),
    #[error("dense level `{0}` has non-contiguous integer values")]
    DenseGap(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Relation(#[from] crate::relation::RelationError),
}
