//! Relational-algebra expressions and their brute-force bag-semantics
//! evaluator. This is the semantic ground truth the compiled loop programs
//! are verified against; clarity beats speed everywhere in this module.

use std::collections::HashMap;

use thiserror::Error;

use crate::multiset::{MsOp, Multiset};
use crate::relation::{Relation, RelationError, Schema, Tuple};
use crate::scalar::{Env, EvalError, ScalarExpr};
use crate::value::{Kind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggOp {
    Sum,
    Count,
    Min,
    Max,
}

impl AggOp {
    pub fn name(&self) -> &'static str {
        match self {
            AggOp::Sum => "sum",
            AggOp::Count => "count",
            AggOp::Min => "min",
            AggOp::Max => "max",
        }
    }
}

/// A relational-algebra expression tree over named base relations.
///
/// Joins come in two flavors: natural (`pred: None`), which equates and
/// merges all same-named attributes, and theta (`pred: Some`), which keeps
/// both operand schemas (they must be disjoint) and filters the product.
#[derive(Debug, Clone, PartialEq)]
pub enum RaExpr {
    Base(String),
    Select {
        child: Box<RaExpr>,
        pred: ScalarExpr,
    },
    Project {
        child: Box<RaExpr>,
        attrs: Vec<String>,
        keep_dups: bool,
    },
    Join {
        kind: JoinKind,
        left: Box<RaExpr>,
        right: Box<RaExpr>,
        pred: Option<ScalarExpr>,
    },
    Difference {
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    Union {
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    Concat {
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    Product {
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    GroupAggregate {
        child: Box<RaExpr>,
        group: Vec<String>,
        aggs: Vec<(AggOp, String)>,
    },
    Distinct {
        child: Box<RaExpr>,
    },
    Rename {
        child: Box<RaExpr>,
        renames: Vec<(String, String)>,
    },
}

#[derive(Debug, Error)]
pub enum RaError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttr(String),
    #[error("operand schemas must match for set operations, got {0} vs {1}")]
    SchemaMismatch(String, String),
    #[error("theta join operands must have disjoint attributes (shared `{0}`)")]
    SharedAttr(String),
    #[error("natural join operands share no attributes")]
    NoSharedAttrs,
    #[error("attribute `{attr}` has kind {l} on the left and {r} on the right")]
    JoinKindMismatch { attr: String, l: Kind, r: Kind },
    #[error("sum over non-numeric attribute `{0}`")]
    SumNonNumeric(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Kind(#[from] crate::value::KindError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

struct RowEnv<'a> {
    schema: &'a Schema,
    row: &'a [Value],
}

impl Env for RowEnv<'_> {
    fn var(&self, name: &str) -> Option<&Value> {
        self.schema.index_of(name).map(|i| &self.row[i])
    }
}

/// Compute the output schema of `expr` given the base relation schemas.
pub fn schema_of(
    expr: &RaExpr,
    schemas: &HashMap<String, Schema>,
) -> Result<Schema, RaError> {
    match expr {
        RaExpr::Base(name) => schemas
            .get(name)
            .cloned()
            .ok_or_else(|| RaError::UnknownRelation(name.clone())),
        RaExpr::Select { child, pred } => {
            let schema = schema_of(child, schemas)?;
            let mut vars = Vec::new();
            pred.free_vars(&mut vars);
            for v in vars {
                if schema.index_of(&v).is_none() {
                    return Err(RaError::UnknownAttr(v));
                }
            }
            Ok(schema)
        }
        RaExpr::Project { child, attrs, .. } => {
            let schema = schema_of(child, schemas)?;
            let mut entries = Vec::new();
            for a in attrs {
                let kind = schema.kind_of(a).ok_or_else(|| RaError::UnknownAttr(a.clone()))?;
                entries.push((a.clone(), kind));
            }
            Ok(Schema::new(entries)?)
        }
        RaExpr::Join { left, right, pred, .. } => {
            let ls = schema_of(left, schemas)?;
            let rs = schema_of(right, schemas)?;
            match pred {
                None => {
                    let shared: Vec<&str> =
                        ls.attrs().filter(|a| rs.index_of(a).is_some()).collect();
                    if shared.is_empty() {
                        return Err(RaError::NoSharedAttrs);
                    }
                    for a in &shared {
                        let (lk, rk) = (ls.kind_of(a).unwrap(), rs.kind_of(a).unwrap());
                        if lk != rk {
                            return Err(RaError::JoinKindMismatch {
                                attr: a.to_string(),
                                l: lk,
                                r: rk,
                            });
                        }
                    }
                    let mut entries: Vec<(String, Kind)> = ls.entries().to_vec();
                    for (n, k) in rs.entries() {
                        if ls.index_of(n).is_none() {
                            entries.push((n.clone(), *k));
                        }
                    }
                    Ok(Schema::new(entries)?)
                }
                Some(pred) => {
                    for (n, _) in rs.entries() {
                        if ls.index_of(n).is_some() {
                            return Err(RaError::SharedAttr(n.clone()));
                        }
                    }
                    let mut entries: Vec<(String, Kind)> = ls.entries().to_vec();
                    entries.extend(rs.entries().iter().cloned());
                    let schema = Schema::new(entries)?;
                    let mut vars = Vec::new();
                    pred.free_vars(&mut vars);
                    for v in vars {
                        if schema.index_of(&v).is_none() {
                            return Err(RaError::UnknownAttr(v));
                        }
                    }
                    Ok(schema)
                }
            }
        }
        RaExpr::Difference { left, right }
        | RaExpr::Union { left, right }
        | RaExpr::Concat { left, right } => {
            let ls = schema_of(left, schemas)?;
            let rs = schema_of(right, schemas)?;
            if ls != rs {
                return Err(RaError::SchemaMismatch(ls.to_string(), rs.to_string()));
            }
            Ok(ls)
        }
        RaExpr::Product { left, right } => {
            let ls = schema_of(left, schemas)?;
            let rs = schema_of(right, schemas)?;
            for (n, _) in rs.entries() {
                if ls.index_of(n).is_some() {
                    return Err(RaError::SharedAttr(n.clone()));
                }
            }
            let mut entries: Vec<(String, Kind)> = ls.entries().to_vec();
            entries.extend(rs.entries().iter().cloned());
            Ok(Schema::new(entries)?)
        }
        RaExpr::GroupAggregate { child, group, aggs } => {
            let schema = schema_of(child, schemas)?;
            let mut entries = Vec::new();
            for g in group {
                let kind = schema.kind_of(g).ok_or_else(|| RaError::UnknownAttr(g.clone()))?;
                entries.push((g.clone(), kind));
            }
            for (op, attr) in aggs {
                let kind = schema
                    .kind_of(attr)
                    .ok_or_else(|| RaError::UnknownAttr(attr.clone()))?;
                if *op == AggOp::Sum && kind == Kind::Str {
                    return Err(RaError::SumNonNumeric(attr.clone()));
                }
                let out_kind = match op {
                    AggOp::Count => Kind::Int,
                    _ => kind,
                };
                entries.push((format!("{}_{attr}", op.name()), out_kind));
            }
            Ok(Schema::new(entries)?)
        }
        RaExpr::Distinct { child } => schema_of(child, schemas),
        RaExpr::Rename { child, renames } => {
            let schema = schema_of(child, schemas)?;
            let mut entries = Vec::new();
            for (n, k) in schema.entries() {
                let name = renames
                    .iter()
                    .find(|(old, _)| old == n)
                    .map(|(_, new)| new.clone())
                    .unwrap_or_else(|| n.clone());
                entries.push((name, *k));
            }
            for (old, _) in renames {
                if schema.index_of(old).is_none() {
                    return Err(RaError::UnknownAttr(old.clone()));
                }
            }
            Ok(Schema::new(entries)?)
        }
    }
}

/// Do all natural-join key attributes match? Null keys never match.
fn natural_match(shared: &[(usize, usize)], l: &Tuple, r: &Tuple) -> Result<bool, RaError> {
    for &(li, ri) in shared {
        match l.get(li).compare(r.get(ri))? {
            Some(ord) if ord.is_eq() => continue,
            _ => return Ok(false),
        }
    }
    Ok(true)
}

/// Evaluate `expr` against the environment by brute force.
pub fn ra_eval(expr: &RaExpr, env: &HashMap<String, Relation>) -> Result<Relation, RaError> {
    let schemas: HashMap<String, Schema> = env
        .iter()
        .map(|(k, v)| (k.clone(), v.schema().clone()))
        .collect();
    eval_inner(expr, env, &schemas)
}

fn eval_inner(
    expr: &RaExpr,
    env: &HashMap<String, Relation>,
    schemas: &HashMap<String, Schema>,
) -> Result<Relation, RaError> {
    let out_schema = schema_of(expr, schemas)?;
    match expr {
        RaExpr::Base(name) => Ok(env[name.as_str()].clone()),
        RaExpr::Select { child, pred } => {
            let rel = eval_inner(child, env, schemas)?;
            let mut out = Relation::empty(out_schema);
            for (row, count) in rel.rows().iter() {
                let renv = RowEnv { schema: rel.schema(), row: row.values() };
                if pred.eval_bool(&renv)? {
                    out.insert_n(row.clone(), count)?;
                }
            }
            Ok(out)
        }
        RaExpr::Project { child, attrs, keep_dups } => {
            let rel = eval_inner(child, env, schemas)?;
            let idx: Vec<usize> = attrs
                .iter()
                .map(|a| rel.schema().index_of(a).unwrap())
                .collect();
            let mut out = Relation::empty(out_schema);
            for (row, count) in rel.rows().iter() {
                let projected =
                    Tuple::new(idx.iter().map(|&i| row.get(i).clone()).collect());
                out.insert_n(projected, if *keep_dups { count } else { 1 })?;
            }
            if !keep_dups {
                // Re-collapse: distinct keeps each tuple once.
                let mut dedup = Relation::empty(out.schema().clone());
                for (row, _) in out.rows().iter() {
                    dedup.insert(row.clone())?;
                }
                return Ok(dedup);
            }
            Ok(out)
        }
        RaExpr::Join { kind, left, right, pred } => {
            let l = eval_inner(left, env, schemas)?;
            let r = eval_inner(right, env, schemas)?;
            eval_join(*kind, &l, &r, pred.as_ref(), out_schema)
        }
        RaExpr::Difference { left, right } => {
            let l = eval_inner(left, env, schemas)?;
            let r = eval_inner(right, env, schemas)?;
            let rows = Multiset::binop(MsOp::Difference, l.rows(), r.rows());
            collect(out_schema, rows)
        }
        RaExpr::Union { left, right } => {
            let l = eval_inner(left, env, schemas)?;
            let r = eval_inner(right, env, schemas)?;
            let rows = Multiset::binop(MsOp::Union, l.rows(), r.rows());
            collect(out_schema, rows)
        }
        RaExpr::Concat { left, right } => {
            let l = eval_inner(left, env, schemas)?;
            let r = eval_inner(right, env, schemas)?;
            let rows = Multiset::binop(MsOp::Concat, l.rows(), r.rows());
            collect(out_schema, rows)
        }
        RaExpr::Product { left, right } => {
            let l = eval_inner(left, env, schemas)?;
            let r = eval_inner(right, env, schemas)?;
            let mut out = Relation::empty(out_schema);
            for (lr, lc) in l.rows().iter() {
                for (rr, rc) in r.rows().iter() {
                    let mut values = lr.values().to_vec();
                    values.extend(rr.values().iter().cloned());
                    out.insert_n(Tuple::new(values), lc * rc)?;
                }
            }
            Ok(out)
        }
        RaExpr::GroupAggregate { child, group, aggs } => {
            let rel = eval_inner(child, env, schemas)?;
            ra_aggregate(&rel, group, aggs)
        }
        RaExpr::Distinct { child } => {
            let rel = eval_inner(child, env, schemas)?;
            let mut out = Relation::empty(out_schema);
            for (row, _) in rel.rows().iter() {
                out.insert(row.clone())?;
            }
            Ok(out)
        }
        RaExpr::Rename { child, .. } => {
            let rel = eval_inner(child, env, schemas)?;
            let mut out = Relation::empty(out_schema);
            for (row, count) in rel.rows().iter() {
                out.insert_n(row.clone(), count)?;
            }
            Ok(out)
        }
    }
}

fn collect(schema: Schema, rows: Multiset<Tuple>) -> Result<Relation, RaError> {
    let mut out = Relation::empty(schema);
    for (row, count) in rows.iter() {
        out.insert_n(row.clone(), count)?;
    }
    Ok(out)
}

fn eval_join(
    kind: JoinKind,
    l: &Relation,
    r: &Relation,
    pred: Option<&ScalarExpr>,
    out_schema: Schema,
) -> Result<Relation, RaError> {
    let ls = l.schema();
    let rs = r.schema();
    let mut out = Relation::empty(out_schema.clone());

    // Indices shared by name (natural join only).
    let shared: Vec<(usize, usize)> = match pred {
        None => ls
            .attrs()
            .filter_map(|a| rs.index_of(a).map(|ri| (ls.index_of(a).unwrap(), ri)))
            .collect(),
        Some(_) => Vec::new(),
    };
    let right_extra: Vec<usize> = (0..rs.arity())
        .filter(|ri| match pred {
            None => !shared.iter().any(|&(_, i)| i == *ri),
            Some(_) => true,
        })
        .collect();

    let mut left_matched: std::collections::HashSet<Tuple> = Default::default();
    let mut right_matched: std::collections::HashSet<Tuple> = Default::default();

    for (lr, lc) in l.rows().iter() {
        for (rr, rc) in r.rows().iter() {
            let matched = match pred {
                None => natural_match(&shared, lr, rr)?,
                Some(p) => {
                    let mut values = lr.values().to_vec();
                    values.extend(rr.values().iter().cloned());
                    let renv = RowEnv { schema: &out_schema, row: &values };
                    p.eval_bool(&renv)?
                }
            };
            if matched {
                let mut values = lr.values().to_vec();
                values.extend(right_extra.iter().map(|&i| rr.get(i).clone()));
                out.insert_n(Tuple::new(values), lc * rc)?;
                left_matched.insert(lr.clone());
                right_matched.insert(rr.clone());
            }
        }
    }

    if matches!(kind, JoinKind::Left | JoinKind::Full) {
        for (lr, lc) in l.rows().iter() {
            if !left_matched.contains(lr) {
                let mut values = lr.values().to_vec();
                values.extend(right_extra.iter().map(|_| Value::Null));
                out.insert_n(Tuple::new(values), lc)?;
            }
        }
    }
    if matches!(kind, JoinKind::Right | JoinKind::Full) {
        for (rr, rc) in r.rows().iter() {
            if !right_matched.contains(rr) {
                // Left columns are null; shared columns take the right value.
                let mut values: Vec<Value> = (0..ls.arity())
                    .map(|li| {
                        shared
                            .iter()
                            .find(|&&(l_i, _)| l_i == li)
                            .map(|&(_, ri)| rr.get(ri).clone())
                            .unwrap_or(Value::Null)
                    })
                    .collect();
                values.extend(right_extra.iter().map(|&i| rr.get(i).clone()));
                out.insert_n(Tuple::new(values), rc)?;
            }
        }
    }
    Ok(out)
}

/// Group-and-aggregate with multiplicities: a tuple with count k contributes
/// k times. Sum/min/max skip nulls (an all-null group yields null); count
/// counts rows.
pub fn ra_aggregate(
    rel: &Relation,
    group: &[String],
    aggs: &[(AggOp, String)],
) -> Result<Relation, RaError> {
    let schema = rel.schema();
    let group_idx: Vec<usize> = group
        .iter()
        .map(|g| schema.index_of(g).ok_or_else(|| RaError::UnknownAttr(g.clone())))
        .collect::<Result<_, _>>()?;
    let agg_idx: Vec<usize> = aggs
        .iter()
        .map(|(_, a)| schema.index_of(a).ok_or_else(|| RaError::UnknownAttr(a.clone())))
        .collect::<Result<_, _>>()?;
    for ((op, attr), &idx) in aggs.iter().zip(&agg_idx) {
        if *op == AggOp::Sum && schema.kind_at(idx) == Kind::Str {
            return Err(RaError::SumNonNumeric(attr.clone()));
        }
    }

    #[derive(Clone)]
    enum Acc {
        Sum(Option<Value>),
        Count(u64),
        Min(Option<Value>),
        Max(Option<Value>),
    }

    let mut groups: HashMap<Tuple, Vec<Acc>> = HashMap::new();
    for (row, count) in rel.rows().iter() {
        let key = Tuple::new(group_idx.iter().map(|&i| row.get(i).clone()).collect());
        let accs = groups.entry(key).or_insert_with(|| {
            aggs.iter()
                .map(|(op, _)| match op {
                    AggOp::Sum => Acc::Sum(None),
                    AggOp::Count => Acc::Count(0),
                    AggOp::Min => Acc::Min(None),
                    AggOp::Max => Acc::Max(None),
                })
                .collect()
        });
        for (acc, &idx) in accs.iter_mut().zip(&agg_idx) {
            let v = row.get(idx);
            match acc {
                Acc::Count(c) => *c += count,
                Acc::Sum(slot) => {
                    if !v.is_null() {
                        let add = match v {
                            Value::Int(i) => Value::Int(i * count as i64),
                            Value::Float(f) => Value::Float(f * count as f64),
                            _ => unreachable!("checked non-numeric above"),
                        };
                        *slot = Some(match slot.take() {
                            None => add,
                            Some(Value::Int(a)) => match add {
                                Value::Int(b) => Value::Int(a + b),
                                _ => unreachable!(),
                            },
                            Some(Value::Float(a)) => match add {
                                Value::Float(b) => Value::Float(a + b),
                                _ => unreachable!(),
                            },
                            Some(_) => unreachable!(),
                        });
                    }
                }
                Acc::Min(slot) => {
                    if !v.is_null() {
                        match slot {
                            None => *slot = Some(v.clone()),
                            Some(cur) => {
                                if v.canonical_cmp(cur).is_lt() {
                                    *slot = Some(v.clone());
                                }
                            }
                        }
                    }
                }
                Acc::Max(slot) => {
                    if !v.is_null() {
                        match slot {
                            None => *slot = Some(v.clone()),
                            Some(cur) => {
                                if v.canonical_cmp(cur).is_gt() {
                                    *slot = Some(v.clone());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut entries: Vec<(String, Kind)> = group_idx
        .iter()
        .map(|&i| (schema.name_at(i).to_string(), schema.kind_at(i)))
        .collect();
    for ((op, attr), &idx) in aggs.iter().zip(&agg_idx) {
        let kind = match op {
            AggOp::Count => Kind::Int,
            _ => schema.kind_at(idx),
        };
        entries.push((format!("{}_{attr}", op.name()), kind));
    }
    let mut out = Relation::empty(Schema::new(entries)?);
    for (key, accs) in groups {
        let mut values = key.values().to_vec();
        for acc in accs {
            values.push(match acc {
                Acc::Count(c) => Value::Int(c as i64),
                Acc::Sum(v) | Acc::Min(v) | Acc::Max(v) => v.unwrap_or(Value::Null),
            });
        }
        out.insert(Tuple::new(values))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(rels: &[(&str, Relation)]) -> HashMap<String, Relation> {
        rels.iter().map(|(n, r)| (n.to_string(), r.clone())).collect()
    }

    fn fig_join_inputs() -> HashMap<String, Relation> {
        env(&[
            ("A", Relation::of_ints(&["x", "y"], &[&[1, 1], &[2, 2]])),
            ("B", Relation::of_ints(&["y", "z"], &[&[2, 3], &[3, 4]])),
        ])
    }

    fn join(kind: JoinKind) -> RaExpr {
        RaExpr::Join {
            kind,
            left: Box::new(RaExpr::Base("A".into())),
            right: Box::new(RaExpr::Base("B".into())),
            pred: None,
        }
    }

    #[test]
    fn full_outer_join_pads_each_side_once() {
        let out = ra_eval(&join(JoinKind::Full), &fig_join_inputs()).unwrap();
        let mut want = Relation::of_ints(&["x", "y", "z"], &[&[2, 2, 3]]);
        want.insert(Tuple::new(vec![Value::Int(1), Value::Int(1), Value::Null]))
            .unwrap();
        want.insert(Tuple::new(vec![Value::Null, Value::Int(3), Value::Int(4)]))
            .unwrap();
        assert!(out.same_contents(&want));
    }

    #[test]
    fn duplicate_join_count_multiplies() {
        let e = env(&[
            ("A", Relation::of_ints(&["x"], &[&[1], &[1]])),
            ("B", Relation::of_ints(&["y"], &[&[1], &[1]])),
        ]);
        let expr = RaExpr::Join {
            kind: JoinKind::Inner,
            left: Box::new(RaExpr::Base("A".into())),
            right: Box::new(RaExpr::Base("B".into())),
            pred: Some(ScalarExpr::cmp(
                crate::scalar::CmpOp::Eq,
                ScalarExpr::var("x"),
                ScalarExpr::var("y"),
            )),
        };
        let out = ra_eval(&expr, &e).unwrap();
        assert_eq!(out.cardinality(), 4);
        assert_eq!(out.rows().support_len(), 1);
    }

    #[test]
    fn nonequi_left_join_table() {
        let e = env(&[
            ("A", Relation::of_ints(&["x", "ay"], &[&[1, 1], &[3, 3]])),
            ("B", Relation::of_ints(&["by", "z"], &[&[1, 2], &[3, 4]])),
        ]);
        let expr = RaExpr::Join {
            kind: JoinKind::Left,
            left: Box::new(RaExpr::Base("A".into())),
            right: Box::new(RaExpr::Base("B".into())),
            pred: Some(ScalarExpr::cmp(
                crate::scalar::CmpOp::Lt,
                ScalarExpr::var("ay"),
                ScalarExpr::var("by"),
            )),
        };
        let out = ra_eval(&expr, &e).unwrap();
        let mut want = Relation::of_ints(&["x", "ay", "by", "z"], &[&[1, 1, 3, 4]]);
        want.insert(Tuple::new(vec![
            Value::Int(3),
            Value::Int(3),
            Value::Null,
            Value::Null,
        ]))
        .unwrap();
        assert!(out.same_contents(&want));
    }

    #[test]
    fn empty_inputs_give_empty_output() {
        let e = env(&[
            ("A", Relation::empty(Schema::ints(&["x", "y"]))),
            ("B", Relation::empty(Schema::ints(&["y", "z"]))),
        ]);
        let out = ra_eval(&join(JoinKind::Inner), &e).unwrap();
        assert_eq!(out.cardinality(), 0);
    }

    #[test]
    fn null_keys_never_join() {
        let mut a = Relation::empty(Schema::ints(&["x", "y"]));
        a.insert(Tuple::new(vec![Value::Int(1), Value::Null])).unwrap();
        let mut b = Relation::empty(Schema::ints(&["y", "z"]));
        b.insert(Tuple::new(vec![Value::Null, Value::Int(9)])).unwrap();
        let e = env(&[("A", a), ("B", b)]);
        let inner = ra_eval(&join(JoinKind::Inner), &e).unwrap();
        assert_eq!(inner.cardinality(), 0);
        let full = ra_eval(&join(JoinKind::Full), &e).unwrap();
        assert_eq!(full.cardinality(), 2);
    }

    #[test]
    fn aggregate_single_group_sum() {
        let rel = Relation::of_ints(&["x", "y"], &[&[1, 2], &[1, 3]]);
        let out = ra_aggregate(&rel, &["x".into()], &[(AggOp::Sum, "y".into())]).unwrap();
        let want = Relation::of_ints(&["x", "sum_y"], &[&[1, 5]]);
        assert!(out.same_contents(&want));
    }

    #[test]
    fn aggregate_count_respects_multiplicity() {
        let mut rel = Relation::empty(Schema::ints(&["x", "y"]));
        rel.insert_n(Tuple::new(vec![Value::Int(1), Value::Int(2)]), 2)
            .unwrap();
        let out = ra_aggregate(&rel, &["x".into()], &[(AggOp::Count, "y".into())]).unwrap();
        let want = Relation::of_ints(&["x", "count_y"], &[&[1, 2]]);
        assert!(out.same_contents(&want));
    }

    #[test]
    fn aggregate_empty_input_is_empty() {
        let rel = Relation::empty(Schema::ints(&["x", "y"]));
        let out = ra_aggregate(&rel, &[], &[(AggOp::Sum, "y".into())]).unwrap();
        assert_eq!(out.cardinality(), 0);
    }

    #[test]
    fn inner_join_equals_select_over_product() {
        let e = env(&[
            ("A", Relation::of_ints(&["x", "ay"], &[&[1, 2], &[2, 2], &[2, 2]])),
            ("B", Relation::of_ints(&["by", "z"], &[&[2, 3], &[2, 4]])),
        ]);
        let theta = RaExpr::Join {
            kind: JoinKind::Inner,
            left: Box::new(RaExpr::Base("A".into())),
            right: Box::new(RaExpr::Base("B".into())),
            pred: Some(ScalarExpr::cmp(
                crate::scalar::CmpOp::Eq,
                ScalarExpr::var("ay"),
                ScalarExpr::var("by"),
            )),
        };
        let via_product = RaExpr::Select {
            child: Box::new(RaExpr::Product {
                left: Box::new(RaExpr::Base("A".into())),
                right: Box::new(RaExpr::Base("B".into())),
            }),
            pred: ScalarExpr::cmp(
                crate::scalar::CmpOp::Eq,
                ScalarExpr::var("ay"),
                ScalarExpr::var("by"),
            ),
        };
        let a = ra_eval(&theta, &e).unwrap();
        let b = ra_eval(&via_product, &e).unwrap();
        assert!(a.same_contents(&b));
    }
}
