//! Lowering: validated ALIR plus storage descriptions into an executable
//! `LoopProgram`.

use std::collections::HashMap;

use crate::alir::domain::{build_domain, DomainMachine};
use crate::alir::validate::{validate, Diagnostic, RelInfo};
use crate::alir::{AlirProgram, AlirStmt, LevelRef, MsSetOp, MultisetExpr, TempDecl};
use crate::codegen::{
    Branch, CompiledScalar, ConcreteLoop, GallopExpr, InputBinding, LetPlan, LoopPlan,
    LoopProgram, LoweredStmt,
};
use crate::machine::{Behavior, InputId, InputSet};
use crate::relation::Schema;
use crate::scalar::ScalarExpr;
use crate::storage::{Capability, StorageDescription, StorageMap};
use crate::value::Kind;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LowerError {
    #[error("program does not validate:\n{}", format_diags(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Relation(#[from] crate::relation::RelationError),
}

fn format_diags(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

struct RelEntry {
    slot: usize,
    info: RelInfo,
}

struct Lowerer {
    rels: HashMap<String, RelEntry>,
    rel_slots: usize,
    bound: HashMap<String, usize>,
    var_stack: Vec<String>,
    var_slot_of: HashMap<String, Vec<usize>>,
    var_kinds: Vec<Option<Kind>>,
    var_of_level: HashMap<(String, String), usize>,
    sink_depth: usize,
    /// Open aggregation temporaries: name -> sink depth.
    open_aggs: HashMap<String, usize>,
    output: Option<(Vec<String>, Vec<Option<Kind>>)>,
}

/// Lower a program. Validation must be clean; its diagnostics are returned
/// otherwise.
pub fn lower(
    prog: &AlirProgram,
    storage: &StorageMap,
    schemas: &HashMap<String, Schema>,
) -> Result<LoopProgram, LowerError> {
    let diags = validate(prog, storage, schemas);
    if !diags.is_empty() {
        return Err(LowerError::Invalid(diags));
    }
    let mut base_rels: Vec<(String, String)> = Vec::new();
    let mut rels = HashMap::new();
    let mut names: Vec<&String> = schemas.keys().collect();
    names.sort();
    for name in names {
        let schema = &schemas[name];
        let default_desc;
        let desc = match storage.get(name) {
            Some(d) => d,
            None => {
                default_desc = StorageDescription::default_for(schema);
                &default_desc
            }
        };
        let slot = base_rels.len();
        base_rels.push((name.clone(), name.clone()));
        rels.insert(name.clone(), RelEntry { slot, info: RelInfo::from_parts(schema, desc) });
    }
    for alias in &prog.aliases {
        let info = rels[&alias.base].info.clone();
        let slot = base_rels.len();
        base_rels.push((alias.name.clone(), alias.base.clone()));
        rels.insert(alias.name.clone(), RelEntry { slot, info });
    }

    let mut lw = Lowerer {
        rel_slots: base_rels.len(),
        rels,
        bound: HashMap::new(),
        var_stack: Vec::new(),
        var_slot_of: HashMap::new(),
        var_kinds: Vec::new(),
        var_of_level: HashMap::new(),
        sink_depth: 0,
        open_aggs: HashMap::new(),
        output: None,
    };
    let stmts = lw.block(&prog.stmts)?;
    let (names, kinds) = lw.output.unwrap_or_default();
    let entries: Vec<(String, Kind)> = names
        .into_iter()
        .zip(kinds)
        .map(|(n, k)| (n, k.unwrap_or(Kind::Int)))
        .collect();
    let output = Schema::new(entries).expect("emit names deduplicated");
    Ok(LoopProgram {
        base_rels,
        rel_slots: lw.rel_slots,
        var_slots: lw.var_kinds.len(),
        output,
        stmts,
    })
}

impl Lowerer {
    fn block(&mut self, stmts: &[AlirStmt]) -> Result<Vec<LoweredStmt>, LowerError> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, stmt: &AlirStmt) -> Result<LoweredStmt, LowerError> {
        match stmt {
            AlirStmt::For { var, domain, universe, body } => {
                self.for_stmt(var, domain, *universe, body)
            }
            AlirStmt::Emit(exprs) => {
                let compiled: Vec<CompiledScalar> =
                    exprs.iter().map(|e| self.scalar(e)).collect::<Result<_, _>>()?;
                if self.sink_depth == 0 && self.output.is_none() {
                    let mut names = Vec::new();
                    let mut kinds = Vec::new();
                    for (i, (e, c)) in exprs.iter().zip(&compiled).enumerate() {
                        let base = match e {
                            ScalarExpr::Var(v) => v.clone(),
                            ScalarExpr::Related { attr, .. } => attr.clone(),
                            _ => format!("c{i}"),
                        };
                        let mut name = base.clone();
                        let mut k = 2;
                        while names.contains(&name) {
                            name = format!("{base}_{k}");
                            k += 1;
                        }
                        names.push(name);
                        kinds.push(self.kind_of(c));
                    }
                    self.output = Some((names, kinds));
                }
                Ok(LoweredStmt::Emit { sink_depth: self.sink_depth, exprs: compiled })
            }
            AlirStmt::AggUpdate { target, keys, attr, op, value } => {
                let sink_depth = self.open_aggs[target];
                let acc_index = self.rels[target]
                    .info
                    .related
                    .iter()
                    .position(|a| a == attr)
                    .expect("validated accumulator attr");
                Ok(LoweredStmt::AggUpdate {
                    sink_depth,
                    keys: keys.iter().map(|e| self.scalar(e)).collect::<Result<_, _>>()?,
                    acc_index,
                    op: *op,
                    value: self.scalar(value)?,
                })
            }
            AlirStmt::Let { decl, producer, body } => self.let_stmt(decl, producer, body),
        }
    }

    fn let_stmt(
        &mut self,
        decl: &TempDecl,
        producer: &[AlirStmt],
        body: &[AlirStmt],
    ) -> Result<LoweredStmt, LowerError> {
        let schema = Schema::new(decl.schema.clone()).expect("validated");
        let slot = self.rel_slots;
        self.rel_slots += 1;
        let agg = uses_agg(producer, &decl.name);
        let info = RelInfo::from_parts(&schema, &decl.storage);

        self.sink_depth += 1;
        if agg {
            self.open_aggs.insert(decl.name.clone(), self.sink_depth);
            self.rels.insert(decl.name.clone(), RelEntry { slot, info: info.clone() });
        }
        let producer = self.block(producer)?;
        self.sink_depth -= 1;
        if agg {
            self.open_aggs.remove(&decl.name);
        } else {
            self.rels.insert(decl.name.clone(), RelEntry { slot, info });
        }

        self.bound.insert(decl.name.clone(), 0);
        let body = self.block(body)?;
        self.bound.remove(&decl.name);
        self.rels.remove(&decl.name);

        Ok(LoweredStmt::Let(Box::new(LetPlan {
            name: decl.name.clone(),
            rel_slot: slot,
            schema,
            storage: decl.storage.clone(),
            agg,
            producer,
            body,
        })))
    }

    fn for_stmt(
        &mut self,
        var: &str,
        domain: &MultisetExpr,
        universe: Option<(i64, i64)>,
        body: &[AlirStmt],
    ) -> Result<LoweredStmt, LowerError> {
        let rels = &self.rels;
        let caps = |r: &LevelRef| -> Result<Capability, String> {
            let info = &rels
                .get(&r.relation)
                .ok_or_else(|| format!("unknown relation `{}`", r.relation))?
                .info;
            match info.key_attrs.iter().position(|a| *a == r.attr) {
                Some(level) => Ok(info.caps[level]),
                None => Ok(Capability::Both), // related value: singleton payload
            }
        };
        let dm = build_domain(domain, &caps, universe).map_err(LowerError::Domain)?;

        // Variable slot: reuse by depth.
        let var_slot = self.var_stack.len();
        self.var_stack.push(var.to_string());
        if self.var_kinds.len() <= var_slot {
            self.var_kinds.push(None);
        }
        self.var_slot_of.entry(var.to_string()).or_default().push(var_slot);

        // Input bindings.
        let mut bound_here: Vec<String> = Vec::new();
        let mut inputs: Vec<InputBinding> = Vec::new();
        let mut var_kind: Option<Kind> = None;
        for leaf in &dm.leaves {
            let binding = match &leaf.expr {
                MultisetExpr::Level(r) => {
                    let entry = &self.rels[&r.relation];
                    let depth = *self.bound.get(&r.relation).unwrap_or(&0);
                    if let Some(level) = entry.info.key_attrs.iter().position(|a| *a == r.attr) {
                        debug_assert_eq!(level, depth, "validated prefix order");
                        if !bound_here.contains(&r.relation) {
                            bound_here.push(r.relation.clone());
                        }
                        var_kind = var_kind.or(entry.info.kinds.get(&r.attr).copied());
                        InputBinding::Level {
                            rel_slot: entry.slot,
                            level,
                            expanded: r.expanded,
                            match_nulls: r.match_nulls,
                            iterate: leaf.iterate,
                            display: format!("{}.{}", r.relation, r.attr),
                        }
                    } else {
                        // Related value: a singleton payload read.
                        let idx = entry
                            .info
                            .related
                            .iter()
                            .position(|a| *a == r.attr)
                            .expect("validated related attr");
                        var_kind = var_kind.or(entry.info.kinds.get(&r.attr).copied());
                        InputBinding::Singleton {
                            expr: CompiledScalar::Payload { rel_slot: entry.slot, index: idx },
                            display: format!("{}.{}", r.relation, r.attr),
                        }
                    }
                }
                MultisetExpr::DupCounter { relation } => {
                    let entry = &self.rels[relation];
                    let depth = *self.bound.get(relation).unwrap_or(&0);
                    InputBinding::Dup {
                        rel_slot: entry.slot,
                        level: depth.checked_sub(1),
                        display: relation.clone(),
                    }
                }
                MultisetExpr::Predicate { var: pv, pred } => {
                    // The candidate value is bound to this loop's slot.
                    self.var_slot_of.entry(pv.clone()).or_default().push(var_slot);
                    let compiled = self.scalar(pred)?;
                    self.var_slot_of.get_mut(pv).unwrap().pop();
                    InputBinding::Predicate {
                        var_slot,
                        pred: compiled,
                        display: format!("{{{pv} | ...}}"),
                    }
                }
                MultisetExpr::Singleton(expr) => {
                    var_kind = var_kind.or(self.kind_of(&self.scalar(expr)?));
                    InputBinding::Singleton {
                        expr: self.scalar(expr)?,
                        display: "{...}".to_string(),
                    }
                }
                MultisetExpr::Range { lo, hi } => {
                    var_kind = var_kind.or(Some(Kind::Int));
                    InputBinding::Range { lo: *lo, hi: *hi, display: format!("range({lo}, {hi})") }
                }
                other => unreachable!("non-leaf in leaves: {other:?}"),
            };
            inputs.push(binding);
        }
        if let Some((_, lo, hi)) = dm.universe {
            inputs.push(InputBinding::Range { lo, hi, display: "universe".to_string() });
            var_kind = var_kind.or(Some(Kind::Int));
        }
        self.var_kinds[var_slot] = self.var_kinds[var_slot].or(var_kind);

        // Record level -> var mapping and bind depths for the body.
        for leaf in &dm.leaves {
            if let MultisetExpr::Level(r) = &leaf.expr {
                if self.rels[&r.relation].info.key_attrs.iter().any(|a| *a == r.attr) {
                    self.var_of_level
                        .insert((r.relation.clone(), r.attr.clone()), var_slot);
                }
            }
        }
        for rel in &bound_here {
            *self.bound.entry(rel.clone()).or_insert(0) += 1;
        }

        let loops = generate_loop(&dm, &inputs);
        let body = self.block(body)?;

        for rel in &bound_here {
            *self.bound.get_mut(rel).unwrap() -= 1;
        }
        self.var_stack.pop();
        self.var_slot_of.get_mut(var).unwrap().pop();

        Ok(LoweredStmt::Loop(Box::new(LoopPlan {
            var: var.to_string(),
            var_slot,
            union_empty: dm.union_empty,
            inputs,
            domain: dm,
            loops,
            body,
        })))
    }

    fn scalar(&self, e: &ScalarExpr) -> Result<CompiledScalar, LowerError> {
        Ok(match e {
            ScalarExpr::Var(v) => {
                let slot = self
                    .var_slot_of
                    .get(v)
                    .and_then(|s| s.last())
                    .copied()
                    .expect("validated variable scope");
                CompiledScalar::Slot(slot)
            }
            ScalarExpr::Related { relation, attr } => {
                let entry = &self.rels[relation];
                if let Some(idx) = entry.info.related.iter().position(|a| a == attr) {
                    CompiledScalar::Payload { rel_slot: entry.slot, index: idx }
                } else {
                    let slot = self.var_of_level[&(relation.clone(), attr.clone())];
                    CompiledScalar::Slot(slot)
                }
            }
            ScalarExpr::Const(v) => CompiledScalar::Const(v.clone()),
            ScalarExpr::Cmp(op, a, b) => CompiledScalar::Cmp(
                *op,
                Box::new(self.scalar(a)?),
                Box::new(self.scalar(b)?),
            ),
            ScalarExpr::Arith(op, a, b) => CompiledScalar::Arith(
                *op,
                Box::new(self.scalar(a)?),
                Box::new(self.scalar(b)?),
            ),
            ScalarExpr::And(a, b) => {
                CompiledScalar::And(Box::new(self.scalar(a)?), Box::new(self.scalar(b)?))
            }
            ScalarExpr::Or(a, b) => {
                CompiledScalar::Or(Box::new(self.scalar(a)?), Box::new(self.scalar(b)?))
            }
            ScalarExpr::Not(a) => CompiledScalar::Not(Box::new(self.scalar(a)?)),
            ScalarExpr::IsNull(a) => CompiledScalar::IsNull(Box::new(self.scalar(a)?)),
            ScalarExpr::IsNotNull(a) => CompiledScalar::IsNotNull(Box::new(self.scalar(a)?)),
        })
    }

    fn kind_of(&self, e: &CompiledScalar) -> Option<Kind> {
        match e {
            CompiledScalar::Const(v) => v.kind(),
            CompiledScalar::Slot(s) => self.var_kinds.get(*s).copied().flatten(),
            CompiledScalar::Payload { rel_slot, index } => {
                let (name, _) = self
                    .rels
                    .iter()
                    .find(|(_, e)| e.slot == *rel_slot)
                    .map(|(n, e)| (n.clone(), e.slot))?;
                let info = &self.rels[&name].info;
                let attr = info.related.get(*index)?;
                info.kinds.get(attr).copied()
            }
            CompiledScalar::Arith(_, a, b) => self.kind_of(a).or_else(|| self.kind_of(b)),
            _ => None,
        }
    }
}

fn uses_agg(stmts: &[AlirStmt], target: &str) -> bool {
    stmts.iter().any(|s| match s {
        AlirStmt::AggUpdate { target: t, .. } => t == target,
        AlirStmt::For { body, .. } => uses_agg(body, target),
        AlirStmt::Let { body, .. } => uses_agg(body, target),
        AlirStmt::Emit(_) => false,
    })
}

/// Generate the concrete loop sequence for one domain machine: one loop per
/// state with a reachable producer, in topological order, each carrying its
/// branch table and galloping guard.
pub fn generate_loop(dm: &DomainMachine, inputs: &[InputBinding]) -> Vec<ConcreteLoop> {
    let m = &dm.machine;
    let is_iter = |id: InputId| -> bool {
        if Some(id) == dm.universe.map(|(u, _, _)| u) {
            return true;
        }
        inputs.get(id as usize).map(|b| b.is_iterator()).unwrap_or(false)
    };
    let display_of = |id: InputId| -> String {
        if Some(id) == dm.universe.map(|(u, _, _)| u) {
            return "universe".to_string();
        }
        format!("{}#{id}", inputs[id as usize].display())
    };
    let set_display = |s: &InputSet| -> String {
        let parts: Vec<String> = s.iter().map(|&i| display_of(i)).collect();
        format!("({})", parts.join(", "))
    };

    let mut out = Vec::new();
    for state in m.topo_nodes() {
        if state.label.is_empty() {
            continue;
        }
        let reachable = m.reachable_from(state);
        if !reachable.iter().any(|n| n.behavior.is_producer()) {
            continue;
        }
        let state_inputs = state.label.inputs();
        let iterators: Vec<InputId> =
            state_inputs.iter().copied().filter(|&i| is_iter(i)).collect();

        // Inputs inside a not-ready advance set do not contribute galloping
        // bounds in this loop.
        let mut disabled = InputSet::new();
        for n in &reachable {
            if let Behavior::NotReady { advance } = &n.behavior {
                disabled.extend(advance.iter().copied());
            }
        }
        let mut counter: InputId = 0;
        let gallop = build_gallop(&dm.expr, &mut counter, &state_inputs, &disabled, inputs);

        let mut branches = Vec::new();
        for t in &reachable {
            let t_inputs = t.label.inputs();
            let (producer, not_ready, mut advance) = match &t.behavior {
                Behavior::Producer { advance } => (true, false, advance.clone()),
                Behavior::NotReady { advance } => (false, true, advance.clone()),
                Behavior::Omitter => (false, false, t_inputs.clone()),
            };
            let mut descend = advance.clone();
            if producer {
                for g in &dm.extras {
                    let sub: InputSet = t_inputs.intersection(&g.inputs).copied().collect();
                    if !sub.is_empty() && g.machine.interpret(&sub).is_producer() {
                        advance.extend(sub.iter().copied());
                        descend.extend(sub.iter().copied());
                    }
                }
            }
            advance.retain(|&id| is_iter(id));
            let products: Vec<Vec<InputId>> = t
                .label
                .products()
                .iter()
                .filter(|p| p.len() > 1)
                .map(|p| p.iter().copied().collect())
                .collect();
            branches.push(Branch {
                inputs: t_inputs.clone(),
                display: set_display(&t_inputs),
                producer,
                not_ready,
                advance,
                descend,
                products,
            });
        }

        out.push(ConcreteLoop {
            display: set_display(&state_inputs),
            state: state_inputs,
            iterators,
            gallop,
            branches,
        });
    }
    out
}

fn gallop_max(a: GallopExpr, b: GallopExpr) -> GallopExpr {
    match (a, b) {
        (GallopExpr::PosInf, _) | (_, GallopExpr::PosInf) => GallopExpr::PosInf,
        (GallopExpr::NegInf, x) | (x, GallopExpr::NegInf) => x,
        (a, b) => GallopExpr::Max(Box::new(a), Box::new(b)),
    }
}

fn gallop_min(a: GallopExpr, b: GallopExpr) -> GallopExpr {
    match (a, b) {
        (GallopExpr::NegInf, _) | (_, GallopExpr::NegInf) => GallopExpr::NegInf,
        (GallopExpr::PosInf, x) | (x, GallopExpr::PosInf) => x,
        (a, b) => GallopExpr::Min(Box::new(a), Box::new(b)),
    }
}

fn skip_leaf_ids(e: &MultisetExpr, counter: &mut InputId) {
    e.for_each_leaf(&mut |_| *counter += 1);
}

/// Galloping value, specialized per concrete loop: inputs that dropped out
/// of the state are +inf, live iterators contribute their current value,
/// lookup-only inputs -inf; intersections take the max, unions the min, a
/// difference gallops on its left side, and complement disables galloping.
/// Inputs inside a not-ready advance set are conservatively disabled.
fn build_gallop(
    e: &MultisetExpr,
    counter: &mut InputId,
    state: &InputSet,
    disabled: &InputSet,
    inputs: &[InputBinding],
) -> GallopExpr {
    match e {
        MultisetExpr::Level(_)
        | MultisetExpr::DupCounter { .. }
        | MultisetExpr::Predicate { .. }
        | MultisetExpr::Singleton(_)
        | MultisetExpr::Range { .. } => {
            let id = *counter;
            *counter += 1;
            if !state.contains(&id) {
                GallopExpr::PosInf
            } else if inputs[id as usize].is_iterator() && !disabled.contains(&id) {
                GallopExpr::Cur(id)
            } else {
                GallopExpr::NegInf
            }
        }
        MultisetExpr::Binop { op, lhs, rhs } => {
            let l = build_gallop(lhs, counter, state, disabled, inputs);
            match op {
                MsSetOp::Intersect | MsSetOp::Product => {
                    let r = build_gallop(rhs, counter, state, disabled, inputs);
                    gallop_max(l, r)
                }
                MsSetOp::Union | MsSetOp::Concat => {
                    let r = build_gallop(rhs, counter, state, disabled, inputs);
                    gallop_min(l, r)
                }
                MsSetOp::Difference => {
                    skip_leaf_ids(rhs, counter);
                    l
                }
            }
        }
        MultisetExpr::IndexOnly { base, extras } => {
            let b = build_gallop(base, counter, state, disabled, inputs);
            for extra in extras {
                skip_leaf_ids(extra, counter);
            }
            b
        }
        MultisetExpr::Complement(base) => {
            skip_leaf_ids(base, counter);
            GallopExpr::NegInf
        }
        MultisetExpr::UnionEmpty(_) => unreachable!("union-empty stripped before lowering"),
    }
}
