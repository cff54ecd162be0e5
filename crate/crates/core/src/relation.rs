//! Schemas, tuples, relations with bag semantics, and the canonical CSV
//! text format (`name:kind` headers, empty cell = null, sorted output).

use std::cmp::Ordering;
use std::fmt;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::multiset::Multiset;
use crate::value::{Kind, Value};

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("duplicate attribute name `{0}` in schema")]
    DuplicateAttr(String),
    #[error("tuple arity {got} does not match schema arity {want}")]
    Arity { got: usize, want: usize },
    #[error("value for attribute `{attr}` has kind {got}, schema expects {want}")]
    KindMismatch { attr: String, got: String, want: Kind },
    #[error("unknown attribute `{0}`")]
    UnknownAttr(String),
    #[error("schemas do not match: {0}")]
    SchemaMismatch(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Ordered list of named, kinded attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attrs: Vec<(String, Kind)>,
}

impl Schema {
    pub fn new(attrs: Vec<(String, Kind)>) -> Result<Schema, RelationError> {
        for (i, (name, _)) in attrs.iter().enumerate() {
            if attrs[..i].iter().any(|(n, _)| n == name) {
                return Err(RelationError::DuplicateAttr(name.clone()));
            }
        }
        Ok(Schema { attrs })
    }

    pub fn ints(names: &[&str]) -> Schema {
        Schema {
            attrs: names.iter().map(|n| (n.to_string(), Kind::Int)).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }

    pub fn attrs(&self) -> impl Iterator<Item = &str> {
        self.attrs.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Kind)] {
        &self.attrs
    }

    pub fn kind_of(&self, name: &str) -> Option<Kind> {
        self.attrs.iter().find(|(n, _)| n == name).map(|(_, k)| *k)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|(n, _)| n == name)
    }

    pub fn name_at(&self, idx: usize) -> &str {
        &self.attrs[idx].0
    }

    pub fn kind_at(&self, idx: usize) -> Kind {
        self.attrs[idx].1
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<String> = self.attrs.iter().map(|(n, k)| format!("{n}:{k}")).collect();
        write!(f, "({})", cols.join(", "))
    }
}

/// One row. Attribute names and kinds live in the owning relation's schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tuple {
    values: Vec<Value>,
}

impl Tuple {
    pub fn new(values: Vec<Value>) -> Tuple {
        Tuple { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> &Value {
        &self.values[idx]
    }

    pub fn canonical_cmp(&self, other: &Tuple) -> Ordering {
        for (a, b) in self.values.iter().zip(&other.values) {
            match a.canonical_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.values.len().cmp(&other.values.len())
    }
}

impl From<Vec<Value>> for Tuple {
    fn from(values: Vec<Value>) -> Self {
        Tuple::new(values)
    }
}

/// A schema-tagged multiset of tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    schema: Schema,
    rows: Multiset<Tuple>,
}

impl Relation {
    pub fn empty(schema: Schema) -> Relation {
        Relation { schema, rows: Multiset::new() }
    }

    pub fn from_rows<I>(schema: Schema, rows: I) -> Result<Relation, RelationError>
    where
        I: IntoIterator<Item = Tuple>,
    {
        let mut rel = Relation::empty(schema);
        for row in rows {
            rel.insert(row)?;
        }
        Ok(rel)
    }

    /// Convenience constructor for integer test relations.
    pub fn of_ints(names: &[&str], rows: &[&[i64]]) -> Relation {
        let schema = Schema::ints(names);
        let mut rel = Relation::empty(schema);
        for row in rows {
            rel.insert(Tuple::new(row.iter().map(|&v| Value::Int(v)).collect()))
                .unwrap();
        }
        rel
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &Multiset<Tuple> {
        &self.rows
    }

    pub fn cardinality(&self) -> u64 {
        self.rows.len()
    }

    fn check(&self, tuple: &Tuple) -> Result<(), RelationError> {
        if tuple.values().len() != self.schema.arity() {
            return Err(RelationError::Arity {
                got: tuple.values().len(),
                want: self.schema.arity(),
            });
        }
        for (i, v) in tuple.values().iter().enumerate() {
            if let Some(kind) = v.kind() {
                if kind != self.schema.kind_at(i) {
                    return Err(RelationError::KindMismatch {
                        attr: self.schema.name_at(i).to_string(),
                        got: kind.to_string(),
                        want: self.schema.kind_at(i),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, tuple: Tuple) -> Result<(), RelationError> {
        self.insert_n(tuple, 1)
    }

    pub fn insert_n(&mut self, tuple: Tuple, n: u64) -> Result<(), RelationError> {
        self.check(&tuple)?;
        self.rows.insert_n(tuple, n);
        Ok(())
    }

    /// Rows sorted by the total value order, with multiplicities expanded.
    pub fn sorted_rows(&self) -> Vec<Tuple> {
        let mut out: Vec<Tuple> = self.rows.expand().cloned().collect();
        out.sort_by(|a, b| a.canonical_cmp(b));
        out
    }

    /// Multiset equality over rows; schemas must agree exactly.
    pub fn same_contents(&self, other: &Relation) -> bool {
        self.schema == other.schema && self.rows == other.rows
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), RelationError> {
        let mut wtr = csv::Writer::from_writer(w);
        let header: Vec<String> = self
            .schema
            .entries()
            .iter()
            .map(|(n, k)| format!("{n}:{k}"))
            .collect();
        wtr.write_record(&header).map_err(|e| RelationError::Csv(e.to_string()))?;
        for row in self.sorted_rows() {
            let rec: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
            wtr.write_record(&rec).map_err(|e| RelationError::Csv(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Relation, RelationError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| RelationError::Csv(e.to_string()))?
            .clone();
        let mut attrs = Vec::new();
        for col in header.iter() {
            let (name, kind) = col
                .split_once(':')
                .ok_or_else(|| RelationError::Csv(format!("header `{col}` is not name:kind")))?;
            let kind = Kind::parse(kind.trim())
                .ok_or_else(|| RelationError::Csv(format!("unknown kind in `{col}`")))?;
            attrs.push((name.trim().to_string(), kind));
        }
        let schema = Schema::new(attrs)?;
        let mut rel = Relation::empty(schema);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| RelationError::Csv(e.to_string()))?;
            let mut values = Vec::with_capacity(rel.schema.arity());
            for (i, cell) in rec.iter().enumerate() {
                if cell.is_empty() {
                    values.push(Value::Null);
                    continue;
                }
                let v = match rel.schema.kind_at(i) {
                    Kind::Int => Value::Int(
                        cell.parse()
                            .map_err(|_| RelationError::Csv(format!("bad int `{cell}`")))?,
                    ),
                    Kind::Float => Value::Float(
                        cell.parse()
                            .map_err(|_| RelationError::Csv(format!("bad float `{cell}`")))?,
                    ),
                    Kind::Str => Value::Str(cell.to_string()),
                };
                values.push(v);
            }
            rel.insert(Tuple::new(values))?;
        }
        Ok(rel)
    }

    pub fn read_csv_path(path: &Path) -> Result<Relation, RelationError> {
        let file = std::fs::File::open(path)?;
        Relation::read_csv(file)
    }

    /// Same rows with columns permuted into the given attribute order.
    pub fn reorder_columns(&self, order: &[String]) -> Result<Relation, RelationError> {
        let idx: Vec<usize> = order
            .iter()
            .map(|a| {
                self.schema
                    .index_of(a)
                    .ok_or_else(|| RelationError::UnknownAttr(a.clone()))
            })
            .collect::<Result<_, _>>()?;
        let entries: Vec<(String, Kind)> = idx
            .iter()
            .map(|&i| (self.schema.name_at(i).to_string(), self.schema.kind_at(i)))
            .collect();
        let mut out = Relation::empty(Schema::new(entries)?);
        for (row, count) in self.rows.iter() {
            out.insert_n(
                Tuple::new(idx.iter().map(|&i| row.get(i).clone()).collect()),
                count,
            )?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_duplicate_names() {
        assert!(Schema::new(vec![
            ("x".into(), Kind::Int),
            ("x".into(), Kind::Int)
        ])
        .is_err());
    }

    #[test]
    fn insert_checks_kinds_nulls_allowed() {
        let mut rel = Relation::empty(Schema::ints(&["x"]));
        rel.insert(Tuple::new(vec![Value::Null])).unwrap();
        assert!(rel.insert(Tuple::new(vec![Value::Str("a".into())])).is_err());
    }

    #[test]
    fn csv_round_trip_with_null_sorted() {
        let mut rel = Relation::empty(Schema::ints(&["x", "y"]));
        rel.insert(Tuple::new(vec![Value::Int(2), Value::Null])).unwrap();
        rel.insert(Tuple::new(vec![Value::Int(1), Value::Int(5)])).unwrap();
        rel.insert(Tuple::new(vec![Value::Int(1), Value::Int(5)])).unwrap();
        let mut buf = Vec::new();
        rel.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x:int,y:int\n1,5\n1,5\n2,\n"));
        let back = Relation::read_csv(&buf[..]).unwrap();
        assert!(back.same_contents(&rel));
    }
}
