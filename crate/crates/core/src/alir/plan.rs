//! Planner: relational algebra to ALIR. Inner joins, products, filters, and
//! duplicate-keeping projections fuse into one conjunctive loop nest;
//! duplicate handling goes to a dedicated innermost loop over counters;
//! unions and concatenations co-iterate per level; differences attach the
//! subtrahend as an index-only input and subtract in the duplicates loop;
//! outer joins use null-extending domains; non-inner non-equi joins
//! decompose through an inner-join temporary plus augmentation loops.

use std::collections::HashMap;

use thiserror::Error;

use crate::alir::ast::*;
use crate::ra::{schema_of, AggOp, JoinKind, RaError, RaExpr};
use crate::relation::Schema;
use crate::scalar::{CmpOp, ScalarExpr};
use crate::storage::{StorageDescription, StorageMap};
use crate::value::{Kind, Value};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Ra(#[from] RaError),
    #[error("unsatisfiable loop ordering: {0}")]
    UnsatisfiableOrdering(String),
    #[error("planner limitation: {0}")]
    Unsupported(String),
}

/// Plan a relational expression into an ALIR program over the given base
/// relations.
pub fn plan(
    expr: &RaExpr,
    storage: &StorageMap,
    schemas: &HashMap<String, Schema>,
) -> Result<AlirProgram, PlanError> {
    let mut planner = Planner {
        schemas: schemas.clone(),
        storage: storage.clone(),
        aliases: Vec::new(),
        use_counts: HashMap::new(),
        temp_count: 0,
    };
    let out_schema = schema_of(expr, schemas)?;
    let attrs: Vec<String> = out_schema.attrs().map(str::to_string).collect();
    let tail = move |env: &AttrEnv| -> Vec<AlirStmt> {
        vec![AlirStmt::Emit(attrs.iter().map(|a| env[a].clone()).collect())]
    };
    let stmts = planner.produce(expr, &tail)?;
    Ok(AlirProgram { aliases: planner.aliases, stmts })
}

/// Maps the output attributes of a sub-plan to scalar expressions valid at
/// its innermost producing position.
type AttrEnv = HashMap<String, ScalarExpr>;
type Tail<'a> = dyn Fn(&AttrEnv) -> Vec<AlirStmt> + 'a;

/// One relation instance participating in a kernel.
#[derive(Debug, Clone)]
struct Inst {
    name: String,
    /// Key attributes in storage order.
    key_attrs: Vec<String>,
    /// Related (payload) attributes.
    related: Vec<String>,
    schema: Schema,
}

struct Planner {
    schemas: HashMap<String, Schema>,
    storage: StorageMap,
    aliases: Vec<RelationAlias>,
    use_counts: HashMap<String, usize>,
    temp_count: usize,
}

/// How an instance's storage order must relate to the plan.
enum OrderReq {
    Any,
    /// All-key storage whose order starts with these attributes.
    Prefix(Vec<String>),
    /// Exact all-key order.
    Exact(Vec<String>),
}

impl Planner {
    fn temp_name(&mut self) -> String {
        let name = format!("_t{}", self.temp_count);
        self.temp_count += 1;
        name
    }

    fn desc_for(&self, name: &str, schema: &Schema) -> StorageDescription {
        self.storage
            .get(name)
            .cloned()
            .unwrap_or_else(|| StorageDescription::default_for(schema))
    }

    /// Instance for a base relation, aliasing repeated uses.
    fn base_instance(&mut self, name: &str) -> Inst {
        let schema = self.schemas[name].clone();
        let desc = self.desc_for(name, &schema);
        let n = self.use_counts.entry(name.to_string()).or_insert(0);
        *n += 1;
        let inst_name = if *n == 1 {
            name.to_string()
        } else {
            let alias = format!("{name}_{n}");
            self.aliases.push(RelationAlias { name: alias.clone(), base: name.to_string() });
            alias
        };
        Inst {
            name: inst_name,
            key_attrs: desc.key_attrs().to_vec(),
            related: desc.related.clone(),
            schema,
        }
    }

    /// Turn any expression into an instance satisfying the order
    /// requirement, materializing a temporary when needed. Returns the
    /// instance and the let-wrappers to apply around the consuming code.
    fn instance(
        &mut self,
        expr: &RaExpr,
        req: OrderReq,
    ) -> Result<(Inst, Vec<(TempDecl, Vec<AlirStmt>)>), PlanError> {
        if let RaExpr::Base(name) = expr {
            let schema = self.schemas[name.as_str()].clone();
            let desc = self.desc_for(name, &schema);
            let ok = match &req {
                OrderReq::Any => true,
                OrderReq::Prefix(prefix) => {
                    desc.related.is_empty() && desc.key_attrs().starts_with(prefix)
                }
                OrderReq::Exact(order) => {
                    desc.related.is_empty() && desc.key_attrs() == order.as_slice()
                }
            };
            if ok {
                return Ok((self.base_instance(name), Vec::new()));
            }
        }
        let schema = schema_of(expr, &self.schemas)?;
        let order: Vec<String> = match req {
            OrderReq::Exact(order) => order,
            OrderReq::Prefix(prefix) => {
                let mut order = prefix.clone();
                order.extend(schema.attrs().map(str::to_string).filter(|a| !prefix.contains(a)));
                order
            }
            OrderReq::Any => schema.attrs().map(str::to_string).collect(),
        };
        let name = self.temp_name();
        let decl = TempDecl {
            name: name.clone(),
            schema: schema.entries().to_vec(),
            storage: StorageDescription {
                order: order.clone(),
                levels: Vec::new(),
                primary_key_len: 0,
                related: Vec::new(),
            },
        };
        let attrs: Vec<String> = schema.attrs().map(str::to_string).collect();
        let tail = move |env: &AttrEnv| -> Vec<AlirStmt> {
            vec![AlirStmt::Emit(attrs.iter().map(|a| env[a].clone()).collect())]
        };
        let producer = self.produce(expr, &tail)?;
        let inst = Inst { name, key_attrs: order, related: Vec::new(), schema };
        Ok((inst, vec![(decl, producer)]))
    }

    /// Emit statements computing `expr`, running `tail` once per output row
    /// occurrence with the attribute environment bound.
    fn produce(&mut self, expr: &RaExpr, tail: &Tail) -> Result<Vec<AlirStmt>, PlanError> {
        match expr {
            RaExpr::Project { keep_dups: false, .. } | RaExpr::Distinct { .. } => {
                self.distinct_like(expr, tail)
            }
            RaExpr::Base(_)
            | RaExpr::Select { .. }
            | RaExpr::Rename { .. }
            | RaExpr::Product { .. }
            | RaExpr::Project { .. }
            | RaExpr::Join { kind: JoinKind::Inner, .. } => {
                let mut kernel = Conj::default();
                let mut wrappers = Vec::new();
                let out = self.extract_conj(expr, &mut kernel, &mut wrappers)?;
                let stmts = kernel.emit(out, tail)?;
                Ok(wrap_lets(wrappers, stmts))
            }
            RaExpr::Union { left, right } => self.flat_setop(MsSetOp::Union, left, right, tail),
            RaExpr::Concat { left, right } => self.flat_setop(MsSetOp::Concat, left, right, tail),
            RaExpr::Difference { left, right } => self.difference(left, right, tail),
            RaExpr::Join { kind, left, right, pred: None } => {
                self.outer_equi(*kind, left, right, tail)
            }
            RaExpr::Join { kind, left, right, pred: Some(pred) } => {
                self.outer_theta(*kind, left, right, pred, tail)
            }
            RaExpr::GroupAggregate { child, group, aggs } => {
                self.aggregate(child, group, aggs, tail)
            }
        }
    }

    /// Distinct and distinct-projection: materialize, then iterate the
    /// temporary's tree without a duplicates loop (paths are distinct).
    fn distinct_like(&mut self, expr: &RaExpr, tail: &Tail) -> Result<Vec<AlirStmt>, PlanError> {
        let (source, attrs): (RaExpr, Vec<String>) = match expr {
            RaExpr::Distinct { child } => {
                let schema = schema_of(child, &self.schemas)?;
                ((**child).clone(), schema.attrs().map(str::to_string).collect())
            }
            RaExpr::Project { child, attrs, keep_dups: false } => (
                RaExpr::Project {
                    child: child.clone(),
                    attrs: attrs.clone(),
                    keep_dups: true,
                },
                attrs.clone(),
            ),
            _ => unreachable!(),
        };
        let (inst, wrappers) = self.instance(&source, OrderReq::Exact(attrs.clone()))?;
        let mut kernel = Conj::default();
        let ii = kernel.add_instance(inst);
        let mut out = Vec::new();
        for a in &attrs {
            out.push((a.clone(), kernel.var_of(ii, a).expect("all-key instance")));
        }
        kernel.distinct = true;
        let stmts = kernel.emit(out, tail)?;
        Ok(wrap_lets(wrappers, stmts))
    }

    /// Union and concatenation: co-iterate both legs per level with the bag
    /// operator, duplicates combined in the innermost loop.
    fn flat_setop(
        &mut self,
        op: MsSetOp,
        left: &RaExpr,
        right: &RaExpr,
        tail: &Tail,
    ) -> Result<Vec<AlirStmt>, PlanError> {
        let schema = schema_of(left, &self.schemas)?;
        let order: Vec<String> = schema.attrs().map(str::to_string).collect();
        let (li, mut wrappers) = self.instance(left, OrderReq::Exact(order.clone()))?;
        let (ri, w2) = self.instance(right, OrderReq::Exact(order.clone()))?;
        wrappers.extend(w2);

        let mut env = AttrEnv::new();
        for a in &order {
            env.insert(a.clone(), ScalarExpr::var(a));
        }
        let dups = MultisetExpr::binop(
            op,
            MultisetExpr::DupCounter { relation: li.name.clone() },
            MultisetExpr::DupCounter { relation: ri.name.clone() },
        );
        let mut body = vec![AlirStmt::For {
            var: "_d".into(),
            domain: dups,
            universe: None,
            body: tail(&env),
        }];
        for a in order.iter().rev() {
            let domain = MultisetExpr::binop(
                op,
                MultisetExpr::level(&li.name, a),
                MultisetExpr::level(&ri.name, a),
            );
            body = vec![AlirStmt::For { var: a.clone(), domain, universe: None, body }];
        }
        Ok(wrap_lets(wrappers, body))
    }

    /// Difference: the left side fuses as a kernel, the right side rides
    /// along index-only on every level, and the actual subtraction happens
    /// in the duplicates loop.
    fn difference(
        &mut self,
        left: &RaExpr,
        right: &RaExpr,
        tail: &Tail,
    ) -> Result<Vec<AlirStmt>, PlanError> {
        let schema = schema_of(left, &self.schemas)?;
        let order: Vec<String> = schema.attrs().map(str::to_string).collect();
        let mut kernel = Conj::default();
        let mut wrappers = Vec::new();
        let out = self.extract_conj(left, &mut kernel, &mut wrappers)?;
        let (ri, w2) = self.instance(right, OrderReq::Exact(order.clone()))?;
        wrappers.extend(w2);
        // The subtrahend aligns per level only when every output column is a
        // plain loop variable, no extra variable fragments the per-path
        // counts, and its order embeds into the kernel's; otherwise
        // materialize the left side first.
        if out.iter().all(|(_, e)| matches!(e, ScalarExpr::Var(_))) {
            kernel.subtractor = Some((ri.clone(), out.clone()));
            if kernel.fused_difference_ok(&out) {
                let stmts = kernel.emit(out, tail)?;
                return Ok(wrap_lets(wrappers, stmts));
            }
            kernel.subtractor = None;
        }
        let (inst, w) = self.instance(left, OrderReq::Exact(order.clone()))?;
        wrappers.extend(w);
        let mut kernel = Conj::default();
        let ii = kernel.add_instance(inst);
        let out: Vec<(String, ScalarExpr)> = order
            .iter()
            .map(|a| (a.clone(), kernel.var_of(ii, a).expect("all-key")))
            .collect();
        kernel.subtractor = Some((ri, out.clone()));
        let stmts = kernel.emit(out, tail)?;
        Ok(wrap_lets(wrappers, stmts))
    }

    /// Left, right, and full equi joins on shared attribute names.
    fn outer_equi(
        &mut self,
        kind: JoinKind,
        left: &RaExpr,
        right: &RaExpr,
        tail: &Tail,
    ) -> Result<Vec<AlirStmt>, PlanError> {
        let ls = schema_of(left, &self.schemas)?;
        let rs = schema_of(right, &self.schemas)?;
        let shared: Vec<String> = ls
            .attrs()
            .filter(|a| rs.index_of(a).is_some())
            .map(str::to_string)
            .collect();
        let left_extra: Vec<String> = ls
            .attrs()
            .filter(|a| !shared.contains(&a.to_string()))
            .map(str::to_string)
            .collect();
        let right_extra: Vec<String> = rs
            .attrs()
            .filter(|a| !shared.contains(&a.to_string()))
            .map(str::to_string)
            .collect();

        match kind {
            JoinKind::Inner => unreachable!("inner joins fuse in the kernel"),
            JoinKind::Left | JoinKind::Right => {
                let (drive_expr, other_expr) =
                    if kind == JoinKind::Left { (left, right) } else { (right, left) };
                let other_extra =
                    if kind == JoinKind::Left { &right_extra } else { &left_extra };
                // Try the driver's native storage; it must iterate every
                // join attribute as a key level.
                let (di, mut wrappers) = self.instance(drive_expr, OrderReq::Any)?;
                let usable = di.related.iter().all(|a| !shared.contains(a));
                let di = if usable {
                    di
                } else {
                    let order: Vec<String> = di
                        .schema
                        .attrs()
                        .map(str::to_string)
                        .collect();
                    let (di2, w) = self.instance(drive_expr, OrderReq::Exact(order))?;
                    wrappers.extend(w);
                    di2
                };
                let shared_seq: Vec<String> =
                    di.key_attrs.iter().filter(|a| shared.contains(a)).cloned().collect();
                let (oi, w2) = self.instance(other_expr, OrderReq::Prefix(shared_seq))?;
                wrappers.extend(w2);

                let mut env = AttrEnv::new();
                for a in ls.attrs().chain(rs.attrs()) {
                    env.insert(a.to_string(), ScalarExpr::var(a));
                }
                let dups = MultisetExpr::binop(
                    MsSetOp::Union,
                    MultisetExpr::binop(
                        MsSetOp::Product,
                        MultisetExpr::DupCounter { relation: di.name.clone() },
                        MultisetExpr::DupCounter { relation: oi.name.clone() },
                    ),
                    MultisetExpr::DupCounter { relation: di.name.clone() },
                );
                let mut body = vec![AlirStmt::For {
                    var: "_d".into(),
                    domain: dups,
                    universe: None,
                    body: tail(&env),
                }];
                for a in other_extra.iter().rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::UnionEmpty(Box::new(MultisetExpr::level(
                            &oi.name, a,
                        ))),
                        universe: None,
                        body,
                    }];
                }
                for a in di.key_attrs.iter().rev() {
                    let domain = if shared.contains(a) {
                        MultisetExpr::IndexOnly {
                            base: Box::new(MultisetExpr::level(&di.name, a)),
                            extras: vec![MultisetExpr::Level(
                                LevelRef::new(&oi.name, a).no_nulls(),
                            )],
                        }
                    } else {
                        MultisetExpr::level(&di.name, a)
                    };
                    body = vec![AlirStmt::For { var: a.clone(), domain, universe: None, body }];
                }
                Ok(wrap_lets(wrappers, body))
            }
            JoinKind::Full => {
                // Join attributes outermost on both sides; non-null values
                // union-merge, null join keys pad one row per side.
                let (li, mut wrappers) =
                    self.instance(left, OrderReq::Prefix(shared.clone()))?;
                let (ri, w2) = self.instance(right, OrderReq::Prefix(shared.clone()))?;
                wrappers.extend(w2);

                let mut env = AttrEnv::new();
                for a in ls.attrs().chain(rs.attrs()) {
                    env.insert(a.to_string(), ScalarExpr::var(a));
                }
                let dups = MultisetExpr::binop(
                    MsSetOp::Union,
                    MultisetExpr::binop(
                        MsSetOp::Union,
                        MultisetExpr::binop(
                            MsSetOp::Product,
                            MultisetExpr::DupCounter { relation: li.name.clone() },
                            MultisetExpr::DupCounter { relation: ri.name.clone() },
                        ),
                        MultisetExpr::DupCounter { relation: li.name.clone() },
                    ),
                    MultisetExpr::DupCounter { relation: ri.name.clone() },
                );
                let mut body = vec![AlirStmt::For {
                    var: "_d".into(),
                    domain: dups,
                    universe: None,
                    body: tail(&env),
                }];
                for a in right_extra.iter().rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::UnionEmpty(Box::new(MultisetExpr::level(
                            &ri.name, a,
                        ))),
                        universe: None,
                        body,
                    }];
                }
                for a in left_extra.iter().rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::UnionEmpty(Box::new(MultisetExpr::level(
                            &li.name, a,
                        ))),
                        universe: None,
                        body,
                    }];
                }
                let isnull = |rel: &str, attr: &str| {
                    MultisetExpr::binop(
                        MsSetOp::Intersect,
                        MultisetExpr::level(rel, attr),
                        MultisetExpr::Predicate {
                            var: "_v".into(),
                            pred: ScalarExpr::IsNull(Box::new(ScalarExpr::var("_v"))),
                        },
                    )
                };
                for a in shared.iter().rev() {
                    let merged = MultisetExpr::binop(
                        MsSetOp::Union,
                        MultisetExpr::Level(LevelRef::new(&li.name, a).no_nulls()),
                        MultisetExpr::Level(LevelRef::new(&ri.name, a).no_nulls()),
                    );
                    let domain = MultisetExpr::binop(
                        MsSetOp::Concat,
                        MultisetExpr::binop(MsSetOp::Concat, merged, isnull(&li.name, a)),
                        isnull(&ri.name, a),
                    );
                    body = vec![AlirStmt::For { var: a.clone(), domain, universe: None, body }];
                }
                Ok(wrap_lets(wrappers, body))
            }
        }
    }

    /// Non-inner theta joins: materialize the inner join, emit it (reading
    /// it back through the driving side for left/full to add pads), and
    /// augment with unmatched right rows through a per-level difference.
    fn outer_theta(
        &mut self,
        kind: JoinKind,
        left: &RaExpr,
        right: &RaExpr,
        pred: &ScalarExpr,
        tail: &Tail,
    ) -> Result<Vec<AlirStmt>, PlanError> {
        let ls = schema_of(left, &self.schemas)?;
        let rs = schema_of(right, &self.schemas)?;
        let l_attrs: Vec<String> = ls.attrs().map(str::to_string).collect();
        let r_attrs: Vec<String> = rs.attrs().map(str::to_string).collect();

        let inner = RaExpr::Join {
            kind: JoinKind::Inner,
            left: Box::new(left.clone()),
            right: Box::new(right.clone()),
            pred: Some(pred.clone()),
        };
        let mut order = l_attrs.clone();
        order.extend(r_attrs.iter().cloned());
        let (ti, mut wrappers) = self.instance(&inner, OrderReq::Exact(order))?;

        let mut stmts: Vec<AlirStmt> = Vec::new();
        match kind {
            JoinKind::Left | JoinKind::Full => {
                let (li, w) = self.instance(left, OrderReq::Exact(l_attrs.clone()))?;
                wrappers.extend(w);
                let mut env = AttrEnv::new();
                for a in l_attrs.iter().chain(&r_attrs) {
                    env.insert(a.clone(), ScalarExpr::var(a));
                }
                let dups = MultisetExpr::binop(
                    MsSetOp::Union,
                    MultisetExpr::DupCounter { relation: ti.name.clone() },
                    MultisetExpr::DupCounter { relation: li.name.clone() },
                );
                let mut body = vec![AlirStmt::For {
                    var: "_d".into(),
                    domain: dups,
                    universe: None,
                    body: tail(&env),
                }];
                for a in r_attrs.iter().rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::UnionEmpty(Box::new(MultisetExpr::level(
                            &ti.name, a,
                        ))),
                        universe: None,
                        body,
                    }];
                }
                for a in l_attrs.iter().rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::IndexOnly {
                            base: Box::new(MultisetExpr::level(&li.name, a)),
                            extras: vec![MultisetExpr::level(&ti.name, a)],
                        },
                        universe: None,
                        body,
                    }];
                }
                stmts.extend(body);
            }
            JoinKind::Right => {
                // The matched part is exactly T.
                let mut env = AttrEnv::new();
                for a in l_attrs.iter().chain(&r_attrs) {
                    env.insert(a.clone(), ScalarExpr::var(a));
                }
                let mut body = vec![AlirStmt::For {
                    var: "_d".into(),
                    domain: MultisetExpr::DupCounter { relation: ti.name.clone() },
                    universe: None,
                    body: tail(&env),
                }];
                for a in l_attrs.iter().chain(&r_attrs).rev() {
                    body = vec![AlirStmt::For {
                        var: a.clone(),
                        domain: MultisetExpr::level(&ti.name, a),
                        universe: None,
                        body,
                    }];
                }
                stmts.extend(body);
            }
            _ => unreachable!("inner handled in the kernel"),
        }

        if matches!(kind, JoinKind::Right | JoinKind::Full) {
            // Unmatched right rows: iterate the right side with the
            // projection of T riding index-only and a set difference at the
            // last level.
            let proj = RaExpr::Project {
                child: Box::new(inner),
                attrs: r_attrs.clone(),
                keep_dups: true,
            };
            let (t2, w) = self.instance(&proj, OrderReq::Exact(r_attrs.clone()))?;
            wrappers.extend(w);
            let (ri, w) = self.instance(right, OrderReq::Exact(r_attrs.clone()))?;
            wrappers.extend(w);

            let mut env = AttrEnv::new();
            for a in &l_attrs {
                env.insert(a.clone(), ScalarExpr::Const(Value::Null));
            }
            for a in &r_attrs {
                env.insert(a.clone(), ScalarExpr::var(a));
            }
            let mut body = vec![AlirStmt::For {
                var: "_d".into(),
                domain: MultisetExpr::DupCounter { relation: ri.name.clone() },
                universe: None,
                body: tail(&env),
            }];
            let last = r_attrs.len() - 1;
            for (i, a) in r_attrs.iter().enumerate().rev() {
                let domain = if i == last {
                    MultisetExpr::binop(
                        MsSetOp::Difference,
                        MultisetExpr::level(&ri.name, a),
                        MultisetExpr::level(&t2.name, a),
                    )
                } else {
                    MultisetExpr::IndexOnly {
                        base: Box::new(MultisetExpr::level(&ri.name, a)),
                        extras: vec![MultisetExpr::level(&t2.name, a)],
                    }
                };
                body = vec![AlirStmt::For { var: a.clone(), domain, universe: None, body }];
            }
            stmts.extend(body);
        }
        Ok(wrap_lets(wrappers, stmts))
    }

    /// Group-and-aggregate through a keyed temporary with the accumulators
    /// stored as related values.
    fn aggregate(
        &mut self,
        child: &RaExpr,
        group: &[String],
        aggs: &[(AggOp, String)],
        tail: &Tail,
    ) -> Result<Vec<AlirStmt>, PlanError> {
        let child_schema = schema_of(child, &self.schemas)?;
        let name = self.temp_name();
        // Empty grouping still needs one key level.
        let synth_key = group.is_empty();
        let mut key_attrs: Vec<String> = group.to_vec();
        if synth_key {
            key_attrs.push("_k".to_string());
        }

        let mut schema_entries: Vec<(String, Kind)> = key_attrs
            .iter()
            .map(|g| (g.clone(), child_schema.kind_of(g).unwrap_or(Kind::Int)))
            .collect();
        let mut acc_names = Vec::new();
        for (op, attr) in aggs {
            let mut acc = format!("{}_{attr}", op.name());
            while key_attrs.contains(&acc) || acc_names.contains(&acc) {
                acc.push('_');
            }
            let kind = match op {
                AggOp::Count => Kind::Int,
                _ => child_schema.kind_of(attr).unwrap_or(Kind::Int),
            };
            schema_entries.push((acc.clone(), kind));
            acc_names.push(acc);
        }
        let decl = TempDecl {
            name: name.clone(),
            schema: schema_entries,
            storage: StorageDescription {
                order: key_attrs.iter().chain(&acc_names).cloned().collect(),
                levels: Vec::new(),
                primary_key_len: key_attrs.len(),
                related: acc_names.clone(),
            },
        };

        let group2 = group.to_vec();
        let aggs2 = aggs.to_vec();
        let name2 = name.clone();
        let acc_names2 = acc_names.clone();
        let agg_tail = move |env: &AttrEnv| -> Vec<AlirStmt> {
            let mut keys: Vec<ScalarExpr> = group2.iter().map(|g| env[g].clone()).collect();
            if keys.is_empty() {
                keys.push(ScalarExpr::int(0));
            }
            aggs2
                .iter()
                .zip(&acc_names2)
                .map(|((op, attr), acc)| AlirStmt::AggUpdate {
                    target: name2.clone(),
                    keys: keys.clone(),
                    attr: acc.clone(),
                    op: match op {
                        AggOp::Sum => AssignOp::Add,
                        AggOp::Count => AssignOp::Count,
                        AggOp::Min => AssignOp::Min,
                        AggOp::Max => AssignOp::Max,
                    },
                    value: env[attr].clone(),
                })
                .collect()
        };
        let producer = self.produce(child, &agg_tail)?;

        // Read back: iterate the group levels, accumulators as payload.
        let out_schema_attrs: Vec<String> = {
            // Output attribute names follow the oracle's convention.
            let mut v: Vec<String> = group.to_vec();
            v.extend(aggs.iter().map(|(op, attr)| format!("{}_{attr}", op.name())));
            v
        };
        let mut env = AttrEnv::new();
        for g in group {
            env.insert(g.clone(), ScalarExpr::var(g));
        }
        for (acc, out_name) in acc_names.iter().zip(out_schema_attrs.iter().skip(group.len()))
        {
            env.insert(
                out_name.clone(),
                ScalarExpr::Related { relation: name.clone(), attr: acc.clone() },
            );
        }
        let mut body = tail(&env);
        for g in key_attrs.iter().rev() {
            body = vec![AlirStmt::For {
                var: g.clone(),
                domain: MultisetExpr::level(&name, g),
                universe: None,
                body,
            }];
        }
        Ok(vec![AlirStmt::Let { decl, producer, body }])
    }

    /// Flatten a fusable sub-expression into the conjunctive kernel,
    /// returning the output column mapping in schema order.
    fn extract_conj(
        &mut self,
        expr: &RaExpr,
        kernel: &mut Conj,
        wrappers: &mut Vec<(TempDecl, Vec<AlirStmt>)>,
    ) -> Result<Vec<(String, ScalarExpr)>, PlanError> {
        match expr {
            RaExpr::Base(_) => {
                let (inst, w) = self.instance(expr, OrderReq::Any)?;
                wrappers.extend(w);
                let schema = inst.schema.clone();
                let name = inst.name.clone();
                let ii = kernel.add_instance(inst);
                let mut out = Vec::new();
                for a in schema.attrs() {
                    let e = kernel.var_of(ii, a).unwrap_or(ScalarExpr::Related {
                        relation: name.clone(),
                        attr: a.to_string(),
                    });
                    out.push((a.to_string(), e));
                }
                Ok(out)
            }
            RaExpr::Rename { child, renames } => {
                let out = self.extract_conj(child, kernel, wrappers)?;
                Ok(out
                    .into_iter()
                    .map(|(n, e)| {
                        let name = renames
                            .iter()
                            .find(|(old, _)| *old == n)
                            .map(|(_, new)| new.clone())
                            .unwrap_or(n);
                        (name, e)
                    })
                    .collect())
            }
            RaExpr::Select { child, pred } => {
                let out = self.extract_conj(child, kernel, wrappers)?;
                let rewritten = rewrite_pred(pred, &out);
                kernel.filters.push(rewritten);
                Ok(out)
            }
            RaExpr::Project { child, attrs, keep_dups: true } => {
                let out = self.extract_conj(child, kernel, wrappers)?;
                Ok(attrs
                    .iter()
                    .map(|a| {
                        let e = out.iter().find(|(n, _)| n == a).expect("typed").1.clone();
                        (a.clone(), e)
                    })
                    .collect())
            }
            RaExpr::Product { left, right } => {
                let lo = self.extract_conj(left, kernel, wrappers)?;
                let ro = self.extract_conj(right, kernel, wrappers)?;
                Ok(lo.into_iter().chain(ro).collect())
            }
            RaExpr::Join { kind: JoinKind::Inner, left, right, pred } => {
                let lo = self.extract_conj(left, kernel, wrappers)?;
                let ro = self.extract_conj(right, kernel, wrappers)?;
                match pred {
                    None => {
                        let mut out = lo.clone();
                        for (name, re) in &ro {
                            match lo.iter().find(|(n, _)| n == name) {
                                Some((_, le)) => kernel.equate(le.clone(), re.clone()),
                                None => out.push((name.clone(), re.clone())),
                            }
                        }
                        Ok(out)
                    }
                    Some(pred) => {
                        let out: Vec<(String, ScalarExpr)> =
                            lo.into_iter().chain(ro).collect();
                        for conj in split_conjuncts(pred) {
                            if let ScalarExpr::Cmp(CmpOp::Eq, a, b) = &conj {
                                if let (ScalarExpr::Var(x), ScalarExpr::Var(y)) = (&**a, &**b) {
                                    let xe = out.iter().find(|(n, _)| n == x).cloned();
                                    let ye = out.iter().find(|(n, _)| n == y).cloned();
                                    if let (Some((_, xe)), Some((_, ye))) = (xe, ye) {
                                        kernel.equate(xe, ye);
                                        continue;
                                    }
                                }
                            }
                            let rewritten = rewrite_pred(&conj, &out);
                            kernel.filters.push(rewritten);
                        }
                        Ok(out)
                    }
                }
            }
            // Anything else becomes a materialized instance.
            other => {
                let (inst, w) = self.instance(other, OrderReq::Any)?;
                wrappers.extend(w);
                let schema = inst.schema.clone();
                let ii = kernel.add_instance(inst);
                Ok(schema
                    .attrs()
                    .map(|a| (a.to_string(), kernel.var_of(ii, a).expect("all-key temp")))
                    .collect())
            }
        }
    }
}

/// Rewrite attribute references in a predicate to the kernel's expressions.
fn rewrite_pred(pred: &ScalarExpr, out: &[(String, ScalarExpr)]) -> ScalarExpr {
    match pred {
        ScalarExpr::Var(v) => out
            .iter()
            .find(|(n, _)| n == v)
            .map(|(_, e)| e.clone())
            .unwrap_or_else(|| ScalarExpr::Var(v.clone())),
        ScalarExpr::Const(_) | ScalarExpr::Related { .. } => pred.clone(),
        ScalarExpr::Cmp(op, a, b) => ScalarExpr::Cmp(
            *op,
            Box::new(rewrite_pred(a, out)),
            Box::new(rewrite_pred(b, out)),
        ),
        ScalarExpr::Arith(op, a, b) => ScalarExpr::Arith(
            *op,
            Box::new(rewrite_pred(a, out)),
            Box::new(rewrite_pred(b, out)),
        ),
        ScalarExpr::And(a, b) => {
            ScalarExpr::And(Box::new(rewrite_pred(a, out)), Box::new(rewrite_pred(b, out)))
        }
        ScalarExpr::Or(a, b) => {
            ScalarExpr::Or(Box::new(rewrite_pred(a, out)), Box::new(rewrite_pred(b, out)))
        }
        ScalarExpr::Not(a) => ScalarExpr::Not(Box::new(rewrite_pred(a, out))),
        ScalarExpr::IsNull(a) => ScalarExpr::IsNull(Box::new(rewrite_pred(a, out))),
        ScalarExpr::IsNotNull(a) => ScalarExpr::IsNotNull(Box::new(rewrite_pred(a, out))),
    }
}

fn split_conjuncts(pred: &ScalarExpr) -> Vec<ScalarExpr> {
    match pred {
        ScalarExpr::And(a, b) => {
            let mut out = split_conjuncts(a);
            out.extend(split_conjuncts(b));
            out
        }
        other => vec![other.clone()],
    }
}

fn wrap_lets(wrappers: Vec<(TempDecl, Vec<AlirStmt>)>, core: Vec<AlirStmt>) -> Vec<AlirStmt> {
    wrappers.into_iter().rev().fold(core, |body, (decl, producer)| {
        vec![AlirStmt::Let { decl, producer, body }]
    })
}

/// The conjunctive kernel: instances, variables with a union-find over
/// join equalities, filters, and the duplicates loop.
#[derive(Default)]
struct Conj {
    instances: Vec<Inst>,
    /// Variable id per (instance, key level).
    level_vars: Vec<Vec<usize>>,
    /// Union-find parent per variable.
    parent: Vec<usize>,
    filters: Vec<ScalarExpr>,
    subtractor: Option<(Inst, Vec<(String, ScalarExpr)>)>,
    distinct: bool,
}

impl Conj {
    fn add_instance(&mut self, inst: Inst) -> usize {
        let mut vars = Vec::new();
        for _ in &inst.key_attrs {
            let v = self.parent.len();
            self.parent.push(v);
            vars.push(v);
        }
        self.instances.push(inst);
        self.level_vars.push(vars);
        self.instances.len() - 1
    }

    fn find(&self, mut v: usize) -> usize {
        while self.parent[v] != v {
            v = self.parent[v];
        }
        v
    }

    /// The expression for an instance's key attribute, if any.
    fn var_of(&self, inst: usize, attr: &str) -> Option<ScalarExpr> {
        let level = self.instances[inst].key_attrs.iter().position(|a| a == attr)?;
        let v = self.find(self.level_vars[inst][level]);
        Some(ScalarExpr::Var(format!("_v{v}")))
    }

    /// Record an equality between two output expressions: merge variables
    /// when both are variables of different instances and the merge keeps
    /// the ordering solvable; otherwise keep a filter.
    fn equate(&mut self, a: ScalarExpr, b: ScalarExpr) {
        if let (Some(x), Some(y)) = (var_id_of(&a), var_id_of(&b)) {
            let (rx, ry) = (self.find(x), self.find(y));
            if rx == ry {
                return;
            }
            // A same-instance merge would need one loop at two levels.
            let shares_instance = self.level_vars.iter().any(|vars| {
                vars.iter().any(|&v| self.find(v) == rx)
                    && vars.iter().any(|&v| self.find(v) == ry)
            });
            if !shares_instance {
                let root = rx.min(ry);
                let child = rx.max(ry);
                self.parent[child] = root;
                if self.solve_order().is_some() {
                    return;
                }
                // Undo: fall back to a filter.
                self.parent[child] = child;
            }
        }
        self.filters.push(ScalarExpr::cmp(CmpOp::Eq, a, b));
    }

    /// Topological order over variable roots: each instance's levels in
    /// storage order, plus the subtractor's alignment chain. Ties prefer
    /// variables shared by more instances, then lower ids.
    fn solve_order(&self) -> Option<Vec<usize>> {
        let roots: Vec<usize> =
            (0..self.parent.len()).filter(|&v| self.find(v) == v).collect();
        let mut chains: Vec<Vec<usize>> = Vec::new();
        for vars in &self.level_vars {
            chains.push(vars.iter().map(|&v| self.find(v)).collect());
        }
        if let Some((inst, out)) = &self.subtractor {
            let mut chain = Vec::new();
            for attr in &inst.key_attrs {
                let e = &out.iter().find(|(n, _)| n == attr)?.1;
                chain.push(self.find(var_id_of(e)?));
            }
            chains.push(chain);
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for chain in &chains {
            for w in chain.windows(2) {
                if w[0] != w[1] {
                    edges.push((w[0], w[1]));
                }
            }
        }
        let mut share_count: HashMap<usize, usize> = HashMap::new();
        for chain in &chains {
            let mut seen = Vec::new();
            for &v in chain {
                if !seen.contains(&v) {
                    seen.push(v);
                    *share_count.entry(v).or_insert(0) += 1;
                }
            }
        }
        let mut indeg: HashMap<usize, usize> = roots.iter().map(|&r| (r, 0)).collect();
        for &(_, b) in &edges {
            *indeg.get_mut(&b).unwrap() += 1;
        }
        let mut order = Vec::new();
        let mut remaining: Vec<usize> = roots;
        while !remaining.is_empty() {
            let mut ready: Vec<usize> =
                remaining.iter().copied().filter(|v| indeg[v] == 0).collect();
            if ready.is_empty() {
                return None;
            }
            ready.sort_by_key(|v| {
                (std::cmp::Reverse(share_count.get(v).copied().unwrap_or(0)), *v)
            });
            let next = ready[0];
            order.push(next);
            remaining.retain(|&v| v != next);
            for &(a, b) in &edges {
                if a == next && remaining.contains(&b) {
                    *indeg.get_mut(&b).unwrap() -= 1;
                }
            }
        }
        Some(order)
    }

    /// Compute which variables are looped, in which order, and how many
    /// levels of each instance are used.
    fn layout(&self, out: &[(String, ScalarExpr)]) -> Option<Layout> {
        let order_all = self.solve_order()?;

        // Needed variables: outputs, filters, joins, subtractor alignment.
        let mut needed: Vec<usize> = Vec::new();
        for (_, e) in out {
            for v in expr_var_ids(e) {
                let r = self.find(v);
                if !needed.contains(&r) {
                    needed.push(r);
                }
            }
        }
        for f in &self.filters {
            for v in expr_var_ids(f) {
                let r = self.find(v);
                if !needed.contains(&r) {
                    needed.push(r);
                }
            }
        }
        let mut bind_count: HashMap<usize, usize> = HashMap::new();
        for vars in &self.level_vars {
            let mut seen = Vec::new();
            for &v in vars {
                let r = self.find(v);
                if !seen.contains(&r) {
                    seen.push(r);
                    *bind_count.entry(r).or_insert(0) += 1;
                }
            }
        }
        if self.subtractor.is_some() {
            // Alignment needs every output variable looped.
            for (_, e) in out {
                if let Some(v) = var_id_of(e) {
                    *bind_count.entry(self.find(v)).or_insert(0) += 1;
                }
            }
        }
        for (&v, &c) in &bind_count {
            if c >= 2 && !needed.contains(&v) {
                needed.push(v);
            }
        }
        // Payload reads need every key level of their instance.
        let mut payload_insts: Vec<usize> = Vec::new();
        let note_payload = |refs: &[(String, String)], insts: &[Inst], o: &mut Vec<usize>| {
            for (rel, _) in refs {
                if let Some(i) = insts.iter().position(|inst| &inst.name == rel) {
                    if !o.contains(&i) {
                        o.push(i);
                    }
                }
            }
        };
        for (_, e) in out {
            let mut refs = Vec::new();
            e.related_refs(&mut refs);
            note_payload(&refs, &self.instances, &mut payload_insts);
        }
        for f in &self.filters {
            let mut refs = Vec::new();
            f.related_refs(&mut refs);
            note_payload(&refs, &self.instances, &mut payload_insts);
        }

        // Used level count per instance: deepest needed level, or all key
        // levels when the payload is read.
        let mut used: Vec<usize> = Vec::new();
        for (i, vars) in self.level_vars.iter().enumerate() {
            let mut u = 0;
            for (l, &v) in vars.iter().enumerate() {
                if needed.contains(&self.find(v)) {
                    u = l + 1;
                }
            }
            if payload_insts.contains(&i) {
                u = vars.len();
            }
            used.push(u);
        }

        let mut looped: Vec<usize> = Vec::new();
        for (i, vars) in self.level_vars.iter().enumerate() {
            for &v in vars.iter().take(used[i]) {
                let r = self.find(v);
                if !looped.contains(&r) {
                    looped.push(r);
                }
            }
        }
        let order: Vec<usize> = order_all.into_iter().filter(|v| looped.contains(v)).collect();

        let mut var_levels: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for (i, vars) in self.level_vars.iter().enumerate() {
            for (l, &v) in vars.iter().enumerate().take(used[i]) {
                var_levels.entry(self.find(v)).or_default().push((i, l));
            }
        }
        Some(Layout { order, used, var_levels })
    }

    /// A fused difference is sound only when the loop variables are exactly
    /// the output columns: any extra variable would fragment per-path counts
    /// and subtract the subtrahend once per fragment.
    fn fused_difference_ok(&self, out: &[(String, ScalarExpr)]) -> bool {
        let Some(layout) = self.layout(out) else {
            return false;
        };
        let out_roots: Vec<usize> = out
            .iter()
            .filter_map(|(_, e)| var_id_of(e).map(|v| self.find(v)))
            .collect();
        layout.order.iter().all(|v| out_roots.contains(v))
    }

    /// Build the loop nest. `out` maps output attribute names (in schema
    /// order) to expressions over kernel variables.
    fn emit(mut self, out: Vec<(String, ScalarExpr)>, tail: &Tail) -> Result<Vec<AlirStmt>, PlanError> {
        let Layout { order, used, var_levels } = self
            .layout(&out)
            .ok_or_else(|| PlanError::UnsatisfiableOrdering("variable order".to_string()))?;

        // Filter placement: the earliest loop where every referenced
        // variable is bound and every referenced payload is reachable.
        let var_pos: HashMap<usize, usize> =
            order.iter().enumerate().map(|(p, &v)| (v, p)).collect();
        let inst_done_pos: Vec<usize> = (0..self.instances.len())
            .map(|i| {
                self.level_vars[i]
                    .iter()
                    .take(used[i])
                    .map(|&v| var_pos.get(&self.find(v)).map(|p| p + 1).unwrap_or(0))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut filters_at: HashMap<usize, Vec<ScalarExpr>> = HashMap::new();
        let mut guards: Vec<ScalarExpr> = Vec::new();
        for f in std::mem::take(&mut self.filters) {
            let mut pos = 0;
            for v in expr_var_ids(&f) {
                let r = self.find(v);
                // A variable binds inside its own loop.
                pos = pos.max(var_pos.get(&r).copied().unwrap_or(usize::MAX));
            }
            let mut refs = Vec::new();
            f.related_refs(&mut refs);
            for (rel, _) in &refs {
                if let Some(i) = self.instances.iter().position(|inst| &inst.name == rel) {
                    pos = pos.max(inst_done_pos[i]);
                }
            }
            if pos == usize::MAX {
                return Err(PlanError::Unsupported(
                    "filter references an unlooped variable".into(),
                ));
            }
            if pos < order.len() {
                filters_at.entry(pos).or_default().push(f);
            } else {
                guards.push(f);
            }
        }

        // Innermost first: tail, then the duplicates loop, then guards.
        let display = |v: usize| format!("_v{}", self.find(v));
        let mut env = AttrEnv::new();
        for (name, e) in &out {
            env.insert(name.clone(), canonical_vars(e, &self.parent));
        }
        let mut body = tail(&env);
        if !self.distinct {
            let mut dups: Option<MultisetExpr> = None;
            for inst in &self.instances {
                let c = MultisetExpr::DupCounter { relation: inst.name.clone() };
                dups = Some(match dups {
                    None => c,
                    Some(d) => MultisetExpr::binop(MsSetOp::Product, d, c),
                });
            }
            if let Some((inst, _)) = &self.subtractor {
                let c = MultisetExpr::DupCounter { relation: inst.name.clone() };
                dups = Some(match dups {
                    None => c,
                    Some(d) => MultisetExpr::binop(MsSetOp::Difference, d, c),
                });
            }
            if let Some(d) = dups {
                body =
                    vec![AlirStmt::For { var: "_d".into(), domain: d, universe: None, body }];
            }
        }
        for g in guards.into_iter().rev() {
            let pred = canonical_vars(&g, &self.parent);
            body = vec![AlirStmt::For {
                var: "_g".into(),
                domain: MultisetExpr::binop(
                    MsSetOp::Intersect,
                    MultisetExpr::Singleton(ScalarExpr::int(0)),
                    MultisetExpr::Predicate { var: "_g".into(), pred },
                ),
                universe: None,
                body,
            }];
        }

        // Subtractor level per variable root.
        let sub_ref: HashMap<usize, (String, String)> = match &self.subtractor {
            Some((inst, sout)) => inst
                .key_attrs
                .iter()
                .map(|attr| {
                    let e = &sout.iter().find(|(n, _)| n == attr).expect("aligned").1;
                    let v = var_id_of(e).expect("subtractor aligns on variables");
                    (self.find(v), (inst.name.clone(), attr.clone()))
                })
                .collect(),
            None => HashMap::new(),
        };

        for (pos, &v) in order.iter().enumerate().rev() {
            let bindings = &var_levels[&v];
            let mut distinct_insts: Vec<usize> = Vec::new();
            for &(i, _) in bindings {
                if !distinct_insts.contains(&i) {
                    distinct_insts.push(i);
                }
            }
            let veto = distinct_insts.len() >= 2;
            let mut refs: Vec<MultisetExpr> = bindings
                .iter()
                .map(|&(i, l)| {
                    let inst = &self.instances[i];
                    let mut r = LevelRef::new(&inst.name, &inst.key_attrs[l]);
                    if veto {
                        r.match_nulls = false;
                    }
                    MultisetExpr::Level(r)
                })
                .collect();
            for pred in filters_at.remove(&pos).unwrap_or_default() {
                let pred = canonical_vars(&pred, &self.parent);
                refs.push(MultisetExpr::Predicate { var: display(v), pred });
            }
            let mut domain = MultisetExpr::fold(MsSetOp::Intersect, refs);
            if let Some((rel, attr)) = sub_ref.get(&v) {
                domain = MultisetExpr::IndexOnly {
                    base: Box::new(domain),
                    extras: vec![MultisetExpr::Level(LevelRef::new(rel, attr))],
                };
            }
            body = vec![AlirStmt::For { var: display(v), domain, universe: None, body }];
        }
        Ok(body)
    }
}

struct Layout {
    /// Looped variable roots, outermost first.
    order: Vec<usize>,
    /// Used level count per instance.
    used: Vec<usize>,
    /// (instance, level) bindings per looped variable root.
    var_levels: HashMap<usize, Vec<(usize, usize)>>,
}

fn var_id_of(e: &ScalarExpr) -> Option<usize> {
    match e {
        ScalarExpr::Var(name) => name.strip_prefix("_v")?.parse().ok(),
        _ => None,
    }
}

fn expr_var_ids(e: &ScalarExpr) -> Vec<usize> {
    let mut names = Vec::new();
    e.free_vars(&mut names);
    names.iter().filter_map(|n| n.strip_prefix("_v")?.parse().ok()).collect()
}

/// Rewrite `_v<id>` references to their union-find roots.
fn canonical_vars(e: &ScalarExpr, parent: &[usize]) -> ScalarExpr {
    let find = |mut v: usize| {
        while parent[v] != v {
            v = parent[v];
        }
        v
    };
    match e {
        ScalarExpr::Var(name) => match name.strip_prefix("_v").and_then(|s| s.parse::<usize>().ok())
        {
            Some(v) => ScalarExpr::Var(format!("_v{}", find(v))),
            None => e.clone(),
        },
        ScalarExpr::Const(_) | ScalarExpr::Related { .. } => e.clone(),
        ScalarExpr::Cmp(op, a, b) => ScalarExpr::Cmp(
            *op,
            Box::new(canonical_vars(a, parent)),
            Box::new(canonical_vars(b, parent)),
        ),
        ScalarExpr::Arith(op, a, b) => ScalarExpr::Arith(
            *op,
            Box::new(canonical_vars(a, parent)),
            Box::new(canonical_vars(b, parent)),
        ),
        ScalarExpr::And(a, b) => ScalarExpr::And(
            Box::new(canonical_vars(a, parent)),
            Box::new(canonical_vars(b, parent)),
        ),
        ScalarExpr::Or(a, b) => ScalarExpr::Or(
            Box::new(canonical_vars(a, parent)),
            Box::new(canonical_vars(b, parent)),
        ),
        ScalarExpr::Not(a) => ScalarExpr::Not(Box::new(canonical_vars(a, parent))),
        ScalarExpr::IsNull(a) => ScalarExpr::IsNull(Box::new(canonical_vars(a, parent))),
        ScalarExpr::IsNotNull(a) => ScalarExpr::IsNotNull(Box::new(canonical_vars(a, parent))),
    }
}
