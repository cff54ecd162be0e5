//! Coordinate trees: one sorted level per key attribute, CSR child offsets,
//! subtree tuple counts, and optional related-value payloads under a
//! primary key.

use std::collections::HashMap;

use crate::relation::{Relation, Schema, Tuple};
use crate::storage::desc::{LayerKind, LevelDesc, StorageDescription};
use crate::storage::StorageError;
use crate::value::{Kind, Value};

/// One tree level. Node `n` of the level above owns the value slice
/// `values[seg_starts[n]..seg_starts[n+1]]`; values are sorted within each
/// segment and distinct per node.
#[derive(Debug, Clone)]
pub struct Level {
    pub desc: LevelDesc,
    pub values: Vec<Value>,
    pub seg_starts: Vec<usize>,
    /// Number of relation tuples below each node.
    pub subtree: Vec<u64>,
    /// Value -> node index per parent segment, built for hash levels.
    pub hash: Option<Vec<HashMap<Value, usize>>>,
}

impl Level {
    pub fn segment(&self, parent: usize) -> (usize, usize) {
        (self.seg_starts[parent], self.seg_starts[parent + 1])
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }
}

/// Hierarchical storage for one relation: levels over the key attributes,
/// duplicate counts at the leaves, related payloads attached under the
/// primary key.
#[derive(Debug, Clone)]
pub struct CoordinateTree {
    pub key_attrs: Vec<String>,
    pub key_kinds: Vec<Kind>,
    pub levels: Vec<Level>,
    pub related_attrs: Vec<String>,
    pub related_kinds: Vec<Kind>,
    /// One payload row per leaf node when related attributes are declared.
    pub related: Vec<Vec<Value>>,
    pub cardinality: u64,
}

impl CoordinateTree {
    pub fn level_of(&self, attr: &str) -> Option<usize> {
        self.key_attrs.iter().position(|a| a == attr)
    }

    pub fn related_index(&self, attr: &str) -> Option<usize> {
        self.related_attrs.iter().position(|a| a == attr)
    }

    /// Tuples under the node at `level` with index `node`; the whole
    /// relation for the implicit root.
    pub fn subtree_count(&self, level: Option<usize>, node: usize) -> u64 {
        match level {
            None => self.cardinality,
            Some(l) => self.levels[l].subtree[node],
        }
    }

    /// Expand every root-to-leaf path back into a relation over
    /// key-then-related attribute order. Inverse of `build_tree` up to
    /// column order.
    pub fn flatten(&self) -> Relation {
        let mut entries: Vec<(String, Kind)> = self
            .key_attrs
            .iter()
            .zip(&self.key_kinds)
            .map(|(a, k)| (a.clone(), *k))
            .collect();
        entries.extend(
            self.related_attrs
                .iter()
                .zip(&self.related_kinds)
                .map(|(a, k)| (a.clone(), *k)),
        );
        let schema = Schema::new(entries).expect("tree schema is valid");
        let mut out = Relation::empty(schema);
        if self.levels.is_empty() {
            return out;
        }
        let mut path: Vec<Value> = Vec::with_capacity(self.key_attrs.len());
        self.walk(0, 0, &mut path, &mut out);
        out
    }

    fn walk(&self, level: usize, parent: usize, path: &mut Vec<Value>, out: &mut Relation) {
        let (lo, hi) = self.levels[level].segment(parent);
        for node in lo..hi {
            path.push(self.levels[level].values[node].clone());
            if level + 1 == self.levels.len() {
                let mut values = path.clone();
                if !self.related_attrs.is_empty() {
                    values.extend(self.related[node].iter().cloned());
                }
                let count = self.levels[level].subtree[node];
                out.insert_n(Tuple::new(values), count).expect("flatten conforms");
            } else {
                self.walk(level + 1, node, path, out);
            }
            path.pop();
        }
    }
}

/// Build a coordinate tree for `rel` according to `desc`.
pub fn build_tree(rel: &Relation, desc: &StorageDescription) -> Result<CoordinateTree, StorageError> {
    desc.validate(rel.schema())?;
    let schema = rel.schema();
    let key_attrs: Vec<String> = desc.key_attrs().to_vec();
    let key_idx: Vec<usize> = key_attrs
        .iter()
        .map(|a| schema.index_of(a).expect("validated"))
        .collect();
    let related_idx: Vec<usize> = desc
        .related
        .iter()
        .map(|a| schema.index_of(a).expect("validated"))
        .collect();
    let level_descs = desc.level_descs();

    // Distinct key paths with aggregated counts and payloads.
    let mut paths: Vec<(Vec<Value>, u64, Vec<Value>)> = Vec::new();
    {
        let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
        for (row, count) in rel.rows().iter() {
            let key: Vec<Value> = key_idx.iter().map(|&i| row.get(i).clone()).collect();
            let payload: Vec<Value> = related_idx.iter().map(|&i| row.get(i).clone()).collect();
            match index.get(&key) {
                Some(&at) => {
                    let entry = &mut paths[at];
                    entry.1 += count;
                    if entry.2 != payload {
                        return Err(StorageError::DuplicatePrimaryKey(display_key(&key)));
                    }
                }
                None => {
                    index.insert(key.clone(), paths.len());
                    paths.push((key, count, payload));
                }
            }
        }
    }
    paths.sort_by(|a, b| Tuple::new(a.0.clone()).canonical_cmp(&Tuple::new(b.0.clone())));

    if desc.primary_key_len > 0 {
        // Uniqueness over the declared prefix (paths are sorted).
        for w in paths.windows(2) {
            let (a, b) = (&w[0].0, &w[1].0);
            if a[..desc.primary_key_len] == b[..desc.primary_key_len] {
                return Err(StorageError::DuplicatePrimaryKey(display_key(
                    &a[..desc.primary_key_len],
                )));
            }
        }
        for (_, count, _) in &paths {
            if *count > 1 && desc.primary_key_len == key_attrs.len() {
                return Err(StorageError::DuplicatePrimaryKey(vec!["<repeated row>".into()]));
            }
        }
    }

    let depth = key_attrs.len();
    let mut levels: Vec<Level> = Vec::with_capacity(depth);
    // Node id of each path's ancestor at the level currently being built.
    let mut parent_of_path: Vec<usize> = vec![0; paths.len()];
    for level_no in 0..depth {
        let mut values = Vec::new();
        let mut seg_starts = vec![0usize];
        let mut subtree = Vec::new();
        let mut next_parent = vec![0usize; paths.len()];
        let mut cur_parent = usize::MAX;
        for (i, (key, count, _)) in paths.iter().enumerate() {
            let parent = parent_of_path[i];
            let v = &key[level_no];
            let new_node = parent != cur_parent
                || values.is_empty()
                || values.last().unwrap() != v;
            if parent != cur_parent {
                while seg_starts.len() <= parent {
                    seg_starts.push(values.len());
                }
                cur_parent = parent;
            }
            if new_node {
                values.push(v.clone());
                subtree.push(0);
            }
            let node = values.len() - 1;
            subtree[node] += count;
            next_parent[i] = node;
        }
        let parent_count = if level_no == 0 {
            1
        } else {
            levels[level_no - 1].values.len()
        };
        while seg_starts.len() <= parent_count {
            seg_starts.push(values.len());
        }
        let desc_l = level_descs[level_no];
        if desc_l.kind == LayerKind::Dense {
            check_dense(&key_attrs[level_no], &values, &seg_starts)?;
        }
        let hash = if desc_l.kind == LayerKind::Hash {
            let mut maps = Vec::with_capacity(parent_count);
            for p in 0..parent_count {
                let (lo, hi) = (seg_starts[p], seg_starts[p + 1]);
                let mut m = HashMap::with_capacity(hi - lo);
                for n in lo..hi {
                    m.insert(values[n].clone(), n);
                }
                maps.push(m);
            }
            Some(maps)
        } else {
            None
        };
        levels.push(Level { desc: desc_l, values, seg_starts, subtree, hash });
        parent_of_path = next_parent;
    }

    let related = if related_idx.is_empty() {
        Vec::new()
    } else {
        // One payload per leaf; leaves are in path order.
        paths.iter().map(|(_, _, payload)| payload.clone()).collect()
    };

    Ok(CoordinateTree {
        key_kinds: key_idx.iter().map(|&i| schema.kind_at(i)).collect(),
        key_attrs,
        levels,
        related_attrs: desc.related.clone(),
        related_kinds: related_idx.iter().map(|&i| schema.kind_at(i)).collect(),
        related,
        cardinality: rel.cardinality(),
    })
}

fn display_key(key: &[Value]) -> Vec<String> {
    key.iter().map(|v| v.to_string()).collect()
}

fn check_dense(attr: &str, values: &[Value], seg_starts: &[usize]) -> Result<(), StorageError> {
    for w in seg_starts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for n in lo..hi {
            match (&values[n], n + 1 < hi, values.get(n + 1)) {
                (Value::Int(a), true, Some(Value::Int(b))) if *b == a + 1 => {}
                (Value::Int(_), false, _) => {}
                (Value::Int(_), true, _) => return Err(StorageError::DenseGap(attr.into())),
                _ => return Err(StorageError::DenseGap(attr.into())),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_tree_shape() {
        // {(1,1),(1,3),(2,2),(2,2)} over (a,b): level 1 = [1,2]; under 1:
        // [1,3]; under 2: [2] with duplicate count 2.
        let rel = Relation::of_ints(&["a", "b"], &[&[1, 1], &[1, 3], &[2, 2], &[2, 2]]);
        let tree = build_tree(&rel, &StorageDescription::default_for(rel.schema())).unwrap();
        assert_eq!(tree.levels[0].values, vec![Value::Int(1), Value::Int(2)]);
        let (lo, hi) = tree.levels[1].segment(0);
        assert_eq!(&tree.levels[1].values[lo..hi], &[Value::Int(1), Value::Int(3)]);
        let (lo, hi) = tree.levels[1].segment(1);
        assert_eq!(&tree.levels[1].values[lo..hi], &[Value::Int(2)]);
        assert_eq!(tree.levels[1].subtree[lo], 2);
        assert_eq!(tree.levels[0].subtree, vec![2, 2]);
        assert!(tree.flatten().same_contents(&rel));
    }

    #[test]
    fn empty_relation_builds_empty_level() {
        let rel = Relation::empty(crate::relation::Schema::ints(&["a", "b"]));
        let tree = build_tree(&rel, &StorageDescription::default_for(rel.schema())).unwrap();
        assert_eq!(tree.levels[0].node_count(), 0);
        assert_eq!(tree.flatten().cardinality(), 0);
    }

    #[test]
    fn primary_key_with_related_payload() {
        let rel = Relation::of_ints(&["x", "y"], &[&[1, 10]]);
        let desc = StorageDescription {
            order: vec!["x".into(), "y".into()],
            levels: vec![],
            primary_key_len: 1,
            related: vec!["y".into()],
        };
        let tree = build_tree(&rel, &desc).unwrap();
        assert_eq!(tree.levels.len(), 1);
        assert_eq!(tree.levels[0].values, vec![Value::Int(1)]);
        assert_eq!(tree.related[0], vec![Value::Int(10)]);

        let dup = Relation::of_ints(&["x", "y"], &[&[1, 10], &[1, 11]]);
        assert!(matches!(
            build_tree(&dup, &desc),
            Err(StorageError::DuplicatePrimaryKey(_))
        ));
    }
}
