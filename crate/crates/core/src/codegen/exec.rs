//! Interpreting executor for lowered loop programs. Each execution owns its
//! cursors, bindings, and sinks; control flow between the concrete loops of
//! one abstract loop relies purely on their topological order.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::alir::AssignOp;
use crate::codegen::{
    CompiledScalar, DataMap, GallopExpr, InputBinding, LetPlan, LoopPlan, LoopProgram,
    LoweredStmt,
};
use crate::machine::InputId;
use crate::relation::{Relation, Tuple};
use crate::scalar::EvalError;
use crate::storage::{
    build_tree, CoordinateTree, DupCursor, LevelCursor, LevelLookup, RangeCursor,
    SingletonCursor,
};
use crate::value::Value;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no data bound for relation `{0}`")]
    MissingRelation(String),
    #[error("executor stalled in loop state {0} (no cursor advanced)")]
    Stalled(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Storage(#[from] crate::storage::StorageError),
    #[error(transparent)]
    Relation(#[from] crate::relation::RelationError),
}

/// Test-support fault injection: inflate every duplicate count by one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    DupCountPlusOne,
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub galloping: bool,
    pub trace: bool,
    pub fault: Option<Fault>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { galloping: true, trace: false, fault: None }
    }
}

/// Interface-call counters, the primary performance signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub advances: u64,
    pub skiptos: u64,
    pub present_checks: u64,
    pub body_execs: u64,
}

impl ExecStats {
    pub fn cursor_ops(&self) -> u64 {
        self.advances + self.skiptos + self.present_checks
    }

    pub fn total_ops(&self) -> u64 {
        self.cursor_ops() + self.body_execs
    }
}

impl fmt::Display for ExecStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "advances={} skiptos={} present_checks={} body_execs={}",
            self.advances, self.skiptos, self.present_checks, self.body_execs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// A concrete loop started running; `floor_state` is the machine floor
    /// of the remaining valid iterators at that moment.
    LoopEnter { loop_state: String, floor_state: String, matches: bool },
    /// One iteration dispatched to a branch.
    Branch { branch: String, action: &'static str, advanced: Vec<String>, value: Value },
}

#[derive(Debug)]
pub struct ExecReport {
    pub output: Relation,
    pub stats: ExecStats,
    pub trace: Vec<TraceEvent>,
    pub lemma4_violations: u64,
}

enum Sink {
    Rows(Vec<Vec<Value>>),
    Agg(HashMap<Vec<Value>, Vec<Option<Value>>>),
}

struct Ctx<'a> {
    vars: &'a [Value],
    trees: &'a [Option<Rc<CoordinateTree>>],
    paths: &'a [Vec<Option<usize>>],
    override_slot: Option<(usize, &'a Value)>,
}

fn eval_value(e: &CompiledScalar, ctx: &Ctx) -> Result<Value, EvalError> {
    match e {
        CompiledScalar::Const(v) => Ok(v.clone()),
        CompiledScalar::Slot(s) => {
            if let Some((os, ov)) = ctx.override_slot {
                if os == *s {
                    return Ok((*ov).clone());
                }
            }
            Ok(ctx.vars[*s].clone())
        }
        CompiledScalar::Payload { rel_slot, index } => {
            let Some(tree) = &ctx.trees[*rel_slot] else {
                return Ok(Value::Null);
            };
            let node = ctx.paths[*rel_slot].last().copied().flatten();
            Ok(match node {
                Some(n) => tree.related[n][*index].clone(),
                None => Value::Null,
            })
        }
        CompiledScalar::Arith(op, a, b) => {
            let a = eval_value(a, ctx)?;
            let b = eval_value(b, ctx)?;
            crate::scalar::ScalarExpr::Arith(
                *op,
                Box::new(crate::scalar::ScalarExpr::Const(a)),
                Box::new(crate::scalar::ScalarExpr::Const(b)),
            )
            .eval_value(&EMPTY_ENV)
        }
        _ => Err(EvalError::NotValue),
    }
}

fn eval_bool(e: &CompiledScalar, ctx: &Ctx) -> Result<bool, EvalError> {
    match e {
        CompiledScalar::Cmp(op, a, b) => {
            let a = eval_value(a, ctx)?;
            let b = eval_value(b, ctx)?;
            match a.compare(&b)? {
                None => Ok(false),
                Some(ord) => Ok(match op {
                    crate::scalar::CmpOp::Eq => ord.is_eq(),
                    crate::scalar::CmpOp::Ne => !ord.is_eq(),
                    crate::scalar::CmpOp::Lt => ord.is_lt(),
                    crate::scalar::CmpOp::Le => ord.is_le(),
                    crate::scalar::CmpOp::Gt => ord.is_gt(),
                    crate::scalar::CmpOp::Ge => ord.is_ge(),
                }),
            }
        }
        CompiledScalar::And(a, b) => Ok(eval_bool(a, ctx)? && eval_bool(b, ctx)?),
        CompiledScalar::Or(a, b) => Ok(eval_bool(a, ctx)? || eval_bool(b, ctx)?),
        CompiledScalar::Not(a) => Ok(!eval_bool(a, ctx)?),
        CompiledScalar::IsNull(a) => Ok(eval_value(a, ctx)?.is_null()),
        CompiledScalar::IsNotNull(a) => Ok(!eval_value(a, ctx)?.is_null()),
        _ => Err(EvalError::NotBool),
    }
}

struct EmptyEnv;
static EMPTY_ENV: EmptyEnv = EmptyEnv;
impl crate::scalar::Env for EmptyEnv {
    fn var(&self, _name: &str) -> Option<&Value> {
        None
    }
}

enum RtIter<'f> {
    Level(LevelCursor<'f>),
    Dup(DupCursor),
    Singleton(SingletonCursor),
    Range(RangeCursor),
}

impl RtIter<'_> {
    fn valid(&self) -> bool {
        match self {
            RtIter::Level(c) => c.valid(),
            RtIter::Dup(c) => c.valid(),
            RtIter::Singleton(c) => c.valid(),
            RtIter::Range(c) => c.valid(),
        }
    }

    fn curval(&self) -> &Value {
        match self {
            RtIter::Level(c) => c.curval(),
            RtIter::Dup(c) => c.curval(),
            RtIter::Singleton(c) => c.curval(),
            RtIter::Range(c) => c.curval(),
        }
    }

    fn advance(&mut self) {
        match self {
            RtIter::Level(c) => c.advance(),
            RtIter::Dup(c) => c.advance(),
            RtIter::Singleton(c) => c.advance(),
            RtIter::Range(c) => c.advance(),
        }
    }

    fn skipto(&mut self, v: &Value) {
        match self {
            RtIter::Level(c) => c.skipto(v),
            RtIter::Dup(c) => c.skipto(v),
            RtIter::Singleton(c) => c.skipto(v),
            RtIter::Range(c) => c.skipto(v),
        }
    }

    fn present(&self, v: &Value) -> bool {
        match self {
            RtIter::Level(c) => c.present(v),
            RtIter::Dup(c) => c.present(v),
            RtIter::Singleton(c) => c.present(v),
            RtIter::Range(c) => c.present(v),
        }
    }

    fn reset(&mut self) {
        match self {
            RtIter::Level(c) => c.reset(),
            RtIter::Dup(c) => c.reset(),
            RtIter::Singleton(c) => c.reset(),
            RtIter::Range(c) => c.reset(),
        }
    }

    fn child(&self) -> Option<usize> {
        match self {
            RtIter::Level(c) => Some(c.child()),
            _ => None,
        }
    }
}

enum RtInput<'f> {
    Iter { it: RtIter<'f>, match_nulls: bool },
    Lookup { lk: LevelLookup<'f>, match_nulls: bool },
    Pred { var_slot: usize, pred: &'f CompiledScalar },
}

impl RtInput<'_> {
    fn iter_valid(&self) -> bool {
        match self {
            RtInput::Iter { it, .. } => it.valid(),
            _ => true,
        }
    }
}

enum Bound {
    NegInf,
    Val(Value),
    PosInf,
}

fn bound_max(a: Bound, b: Bound) -> Bound {
    match (a, b) {
        (Bound::PosInf, _) | (_, Bound::PosInf) => Bound::PosInf,
        (Bound::NegInf, x) | (x, Bound::NegInf) => x,
        (Bound::Val(a), Bound::Val(b)) => {
            if a.canonical_cmp(&b).is_ge() {
                Bound::Val(a)
            } else {
                Bound::Val(b)
            }
        }
    }
}

fn bound_min(a: Bound, b: Bound) -> Bound {
    match (a, b) {
        (Bound::NegInf, _) | (_, Bound::NegInf) => Bound::NegInf,
        (Bound::PosInf, x) | (x, Bound::PosInf) => x,
        (Bound::Val(a), Bound::Val(b)) => {
            if a.canonical_cmp(&b).is_le() {
                Bound::Val(a)
            } else {
                Bound::Val(b)
            }
        }
    }
}

fn eval_gallop(g: &GallopExpr, cursors: &[RtInput]) -> Bound {
    match g {
        GallopExpr::NegInf => Bound::NegInf,
        GallopExpr::PosInf => Bound::PosInf,
        GallopExpr::Cur(id) => match &cursors[*id as usize] {
            RtInput::Iter { it, .. } => Bound::Val(it.curval().clone()),
            _ => Bound::NegInf,
        },
        GallopExpr::Max(a, b) => bound_max(eval_gallop(a, cursors), eval_gallop(b, cursors)),
        GallopExpr::Min(a, b) => bound_min(eval_gallop(a, cursors), eval_gallop(b, cursors)),
    }
}

struct Exec<'p> {
    opts: &'p ExecOptions,
    trees: Vec<Option<Rc<CoordinateTree>>>,
    paths: Vec<Vec<Option<usize>>>,
    vars: Vec<Value>,
    sinks: Vec<Sink>,
    stats: ExecStats,
    trace: Vec<TraceEvent>,
    lemma4_violations: u64,
}

/// Run a lowered program against bound data.
pub fn execute(
    prog: &LoopProgram,
    data: &DataMap,
    opts: &ExecOptions,
) -> Result<ExecReport, ExecError> {
    let mut ex = Exec {
        opts,
        trees: vec![None; prog.rel_slots],
        paths: vec![Vec::new(); prog.rel_slots],
        vars: vec![Value::Null; prog.var_slots],
        sinks: vec![Sink::Rows(Vec::new())],
        stats: ExecStats::default(),
        trace: Vec::new(),
        lemma4_violations: 0,
    };
    for (slot, (name, data_name)) in prog.base_rels.iter().enumerate() {
        let tree = data
            .get(data_name)
            .ok_or_else(|| ExecError::MissingRelation(name.clone()))?;
        ex.paths[slot] = vec![None; tree.levels.len()];
        ex.trees[slot] = Some(tree.clone());
    }
    ex.exec_block(&prog.stmts)?;
    let Some(Sink::Rows(rows)) = ex.sinks.pop() else {
        unreachable!("program output sink");
    };
    let mut output = Relation::empty(prog.output.clone());
    for row in rows {
        output.insert(Tuple::new(row))?;
    }
    Ok(ExecReport {
        output,
        stats: ex.stats,
        trace: ex.trace,
        lemma4_violations: ex.lemma4_violations,
    })
}

impl Exec<'_> {
    fn ctx(&self) -> Ctx<'_> {
        Ctx { vars: &self.vars, trees: &self.trees, paths: &self.paths, override_slot: None }
    }

    fn exec_block(&mut self, stmts: &[LoweredStmt]) -> Result<(), ExecError> {
        for s in stmts {
            self.exec_stmt(s)?;
        }
        Ok(())
    }

    fn exec_stmt(&mut self, stmt: &LoweredStmt) -> Result<(), ExecError> {
        match stmt {
            LoweredStmt::Loop(plan) => self.exec_loop(plan),
            LoweredStmt::Emit { sink_depth, exprs } => {
                let row: Vec<Value> = {
                    let ctx = self.ctx();
                    exprs
                        .iter()
                        .map(|e| eval_value(e, &ctx))
                        .collect::<Result<_, _>>()?
                };
                match &mut self.sinks[*sink_depth] {
                    Sink::Rows(rows) => rows.push(row),
                    Sink::Agg(_) => unreachable!("emit into aggregation sink"),
                }
                Ok(())
            }
            LoweredStmt::AggUpdate { sink_depth, keys, acc_index, op, value } => {
                let (key, v): (Vec<Value>, Value) = {
                    let ctx = self.ctx();
                    let key = keys
                        .iter()
                        .map(|e| eval_value(e, &ctx))
                        .collect::<Result<_, _>>()?;
                    (key, eval_value(value, &ctx)?)
                };
                let Sink::Agg(table) = &mut self.sinks[*sink_depth] else {
                    unreachable!("aggregation into row sink");
                };
                let accs = table.entry(key).or_default();
                if accs.len() <= *acc_index {
                    accs.resize(*acc_index + 1, None);
                }
                let slot = &mut accs[*acc_index];
                match op {
                    AssignOp::Assign => *slot = Some(v),
                    AssignOp::Count => {
                        let cur = match slot {
                            Some(Value::Int(c)) => *c,
                            _ => 0,
                        };
                        *slot = Some(Value::Int(cur + 1));
                    }
                    AssignOp::Add => {
                        if !v.is_null() {
                            let next = match (&slot, &v) {
                                (None, _) => v.clone(),
                                (Some(Value::Int(a)), Value::Int(b)) => Value::Int(a + b),
                                (Some(Value::Float(a)), Value::Float(b)) => Value::Float(a + b),
                                _ => return Err(EvalError::NonNumeric.into()),
                            };
                            *slot = Some(next);
                        }
                    }
                    AssignOp::Min => {
                        if !v.is_null() {
                            match slot {
                                None => *slot = Some(v),
                                Some(cur) => {
                                    if v.canonical_cmp(cur).is_lt() {
                                        *slot = Some(v);
                                    }
                                }
                            }
                        }
                    }
                    AssignOp::Max => {
                        if !v.is_null() {
                            match slot {
                                None => *slot = Some(v),
                                Some(cur) => {
                                    if v.canonical_cmp(cur).is_gt() {
                                        *slot = Some(v);
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(())
            }
            LoweredStmt::Let(plan) => self.exec_let(plan),
        }
    }

    fn exec_let(&mut self, plan: &LetPlan) -> Result<(), ExecError> {
        self.sinks.push(if plan.agg {
            Sink::Agg(HashMap::new())
        } else {
            Sink::Rows(Vec::new())
        });
        self.exec_block(&plan.producer)?;
        let sink = self.sinks.pop().expect("matching sink");

        let mut rel = Relation::empty(plan.schema.clone());
        match sink {
            Sink::Rows(rows) => {
                for row in rows {
                    rel.insert(Tuple::new(row))?;
                }
            }
            Sink::Agg(table) => {
                let key_attrs = plan.storage.key_attrs().to_vec();
                let related = &plan.storage.related;
                for (key, accs) in table {
                    let mut values = Vec::with_capacity(plan.schema.arity());
                    for (attr, _) in plan.schema.entries() {
                        let v = if let Some(i) = key_attrs.iter().position(|a| a == attr) {
                            key[i].clone()
                        } else {
                            let i = related
                                .iter()
                                .position(|a| a == attr)
                                .expect("attr is key or related");
                            accs.get(i).cloned().flatten().unwrap_or(Value::Null)
                        };
                        values.push(v);
                    }
                    rel.insert(Tuple::new(values))?;
                }
            }
        }
        let tree = build_tree(&rel, &plan.storage)?;
        self.paths[plan.rel_slot] = vec![None; tree.levels.len()];
        self.trees[plan.rel_slot] = Some(Rc::new(tree));
        self.exec_block(&plan.body)?;
        self.trees[plan.rel_slot] = None;
        Ok(())
    }

    fn build_input<'f>(
        &self,
        binding: &'f InputBinding,
        tree: Option<&'f CoordinateTree>,
    ) -> Result<RtInput<'f>, ExecError> {
        Ok(match binding {
            InputBinding::Level { level, expanded, match_nulls, iterate, .. } => {
                let tree = tree.expect("relation bound");
                let parent = if *level == 0 {
                    Some(0)
                } else {
                    self.paths[binding.rel_slot().unwrap()][*level - 1]
                };
                if *iterate {
                    let mut c = LevelCursor::new(&tree.levels[*level], *expanded);
                    c.init(parent);
                    RtInput::Iter { it: RtIter::Level(c), match_nulls: *match_nulls }
                } else {
                    let mut l = LevelLookup::new(&tree.levels[*level]);
                    l.init(parent);
                    RtInput::Lookup { lk: l, match_nulls: *match_nulls }
                }
            }
            InputBinding::Dup { rel_slot, level, .. } => {
                let tree = tree.expect("relation bound");
                let mut count = match level {
                    None => tree.cardinality,
                    Some(l) => self.paths[*rel_slot][*l]
                        .map(|n| tree.levels[*l].subtree[n])
                        .unwrap_or(0),
                };
                if self.opts.fault == Some(Fault::DupCountPlusOne) && count > 0 {
                    count += 1;
                }
                let mut c = DupCursor::new();
                c.init(count);
                RtInput::Iter { it: RtIter::Dup(c), match_nulls: true }
            }
            InputBinding::Predicate { var_slot, pred, .. } => {
                RtInput::Pred { var_slot: *var_slot, pred }
            }
            InputBinding::Singleton { expr, .. } => {
                let v = eval_value(expr, &self.ctx())?;
                let mut c = SingletonCursor::new(v);
                c.init();
                RtInput::Iter { it: RtIter::Singleton(c), match_nulls: true }
            }
            InputBinding::Range { lo, hi, .. } => {
                let mut c = RangeCursor::new(*lo, *hi);
                c.init();
                RtInput::Iter { it: RtIter::Range(c), match_nulls: true }
            }
        })
    }

    fn exec_loop(&mut self, plan: &LoopPlan) -> Result<(), ExecError> {
        assert!(plan.inputs.len() <= 64, "too many inputs in one domain");
        // Frame-local trees keep the borrows alive across body recursion.
        let frame_trees: Vec<Option<Rc<CoordinateTree>>> = plan
            .inputs
            .iter()
            .map(|b| b.rel_slot().and_then(|s| self.trees[s].clone()))
            .collect();
        let mut cursors: Vec<RtInput> = Vec::with_capacity(plan.inputs.len());
        for (i, b) in plan.inputs.iter().enumerate() {
            cursors.push(self.build_input(b, frame_trees[i].as_deref())?);
        }

        // (rel_slot, level) pairs this domain descends through.
        let level_inputs: Vec<(InputId, usize, usize)> = plan
            .inputs
            .iter()
            .enumerate()
            .filter_map(|(i, b)| match b {
                InputBinding::Level { rel_slot, level, .. } => {
                    Some((i as InputId, *rel_slot, *level))
                }
                _ => None,
            })
            .collect();

        let mut produced = false;
        for cl in &plan.loops {
            let branch_masks: Vec<u64> = cl
                .branches
                .iter()
                .map(|b| b.inputs.iter().fold(0u64, |m, &i| m | (1 << i)))
                .collect();
            let mut entered = false;
            'iteration: loop {
                if !cl.iterators.iter().all(|&i| cursors[i as usize].iter_valid()) {
                    break;
                }
                if self.opts.trace && !entered {
                    entered = true;
                    self.check_lemma4(plan, cl, &cursors);
                }

                // Current value: minimum over the state's iterators.
                let mut min: Option<Value> = None;
                for &i in &cl.iterators {
                    if let RtInput::Iter { it, .. } = &cursors[i as usize] {
                        let v = it.curval();
                        if min.as_ref().map_or(true, |m| v.canonical_cmp(m).is_lt()) {
                            min = Some(v.clone());
                        }
                    }
                }
                let min = min.expect("legal state has an iterator");

                // Galloping guard.
                if self.opts.galloping && !cl.gallop.is_disabled() {
                    match eval_gallop(&cl.gallop, &cursors) {
                        Bound::Val(g) => {
                            if !g.canonical_cmp(&min).is_eq() {
                                for &i in &cl.iterators {
                                    if let RtInput::Iter { it, .. } = &mut cursors[i as usize] {
                                        it.skipto(&g);
                                        self.stats.skiptos += 1;
                                    }
                                }
                                continue 'iteration;
                            }
                        }
                        Bound::NegInf => {}
                        Bound::PosInf => {
                            debug_assert!(false, "galloping value +inf in a generated loop");
                            break 'iteration;
                        }
                    }
                }

                // Presence of the current value per input, plus lookup children.
                let mut present: u64 = 0;
                let mut min_holders: u64 = 0;
                let mut children: Vec<Option<usize>> = vec![None; plan.inputs.len()];
                for &i in &cl.state {
                    let idx = i as usize;
                    self.stats.present_checks += 1;
                    let here = match &cursors[idx] {
                        RtInput::Iter { it, match_nulls } => {
                            let p = it.valid() && it.present(&min);
                            if p {
                                min_holders |= 1 << i;
                                children[idx] = it.child();
                            }
                            p && (*match_nulls || !min.is_null())
                        }
                        RtInput::Lookup { lk, match_nulls } => {
                            children[idx] = lk.child(&min);
                            children[idx].is_some() && (*match_nulls || !min.is_null())
                        }
                        RtInput::Pred { var_slot, pred } => {
                            let ctx = Ctx {
                                vars: &self.vars,
                                trees: &self.trees,
                                paths: &self.paths,
                                override_slot: Some((*var_slot, &min)),
                            };
                            eval_bool(pred, &ctx)?
                        }
                    };
                    if here {
                        present |= 1 << i;
                    }
                }

                // Most-specific branch whose inputs all contain the value.
                let (bi, branch) = cl
                    .branches
                    .iter()
                    .enumerate()
                    .find(|(bi, _)| branch_masks[*bi] & !present == 0)
                    .map(|(bi, b)| (bi, b))
                    .expect("bottom branch is a catch-all");
                let _ = bi;

                if branch.producer {
                    self.vars[plan.var_slot] = min.clone();
                    // Reset the descent for this domain's levels, then record
                    // children of the active inputs (several cursors on one
                    // level agree on the child when present).
                    for &(_, slot, level) in &level_inputs {
                        self.paths[slot][level] = None;
                    }
                    for &(i, slot, level) in &level_inputs {
                        if branch.descend.contains(&i) && present & (1 << i) != 0 {
                            if let Some(child) = children[i as usize] {
                                self.paths[slot][level] = Some(child);
                            }
                        }
                    }
                    if self.opts.trace {
                        self.trace.push(TraceEvent::Branch {
                            branch: branch.display.clone(),
                            action: "produce",
                            advanced: advance_names(plan, branch, min_holders),
                            value: min.clone(),
                        });
                    }
                    self.stats.body_execs += 1;
                    produced = true;
                    self.exec_block(&plan.body)?;
                } else if self.opts.trace {
                    self.trace.push(TraceEvent::Branch {
                        branch: branch.display.clone(),
                        action: if branch.not_ready { "not-ready" } else { "omit" },
                        advanced: advance_names(plan, branch, min_holders),
                        value: min.clone(),
                    });
                }

                // Advance: the branch's set plus dead inputs holding the min.
                let mut adv: u64 = branch.advance.iter().fold(0u64, |m, &i| m | (1 << i));
                adv |= min_holders & !branch_masks[bi];
                let mut advanced = 0u64;
                for group in &branch.products {
                    let gmask = group.iter().fold(0u64, |m, &i| m | (1 << i));
                    if adv & gmask == gmask {
                        advanced += self.advance_product(&mut cursors, group);
                        adv &= !gmask;
                    }
                }
                for i in 0..plan.inputs.len() {
                    if adv & (1 << i) != 0 {
                        if let RtInput::Iter { it, .. } = &mut cursors[i] {
                            if it.valid() {
                                it.advance();
                                self.stats.advances += 1;
                                advanced += 1;
                            }
                        }
                    }
                }
                if advanced == 0 {
                    // Fall back to draining the min-holders.
                    for i in 0..plan.inputs.len() {
                        if min_holders & (1 << i) != 0 {
                            if let RtInput::Iter { it, .. } = &mut cursors[i] {
                                it.advance();
                                self.stats.advances += 1;
                                advanced += 1;
                            }
                        }
                    }
                }
                if advanced == 0 {
                    return Err(ExecError::Stalled(cl.display.clone()));
                }
            }
        }

        if plan.union_empty && !produced {
            self.vars[plan.var_slot] = Value::Null;
            for &(_, slot, level) in &level_inputs {
                self.paths[slot][level] = None;
            }
            self.exec_block(&plan.body)?;
        }
        Ok(())
    }

    /// Odometer advance over one product group (ascending input order).
    fn advance_product(&mut self, cursors: &mut [RtInput], group: &[InputId]) -> u64 {
        let n = group.len();
        let mut advanced = 0;
        if let RtInput::Iter { it, .. } = &mut cursors[group[n - 1] as usize] {
            if it.valid() {
                it.advance();
                self.stats.advances += 1;
                advanced += 1;
            }
        }
        for i in (0..n - 1).rev() {
            let next_invalid = !cursors[group[i + 1] as usize].iter_valid();
            if next_invalid {
                if let RtInput::Iter { it, .. } = &mut cursors[group[i + 1] as usize] {
                    it.reset();
                }
                if let RtInput::Iter { it, .. } = &mut cursors[group[i] as usize] {
                    if it.valid() {
                        it.advance();
                        self.stats.advances += 1;
                        advanced += 1;
                    }
                }
            }
        }
        advanced
    }

    fn check_lemma4(&mut self, plan: &LoopPlan, cl: &crate::codegen::ConcreteLoop, cursors: &[RtInput]) {
        let mut p = crate::machine::InputSet::new();
        for (i, c) in cursors.iter().enumerate() {
            match c {
                RtInput::Iter { it, .. } => {
                    if it.valid() {
                        p.insert(i as InputId);
                    }
                }
                RtInput::Lookup { .. } | RtInput::Pred { .. } => {
                    p.insert(i as InputId);
                }
            }
        }
        if let Some((u, _, _)) = plan.domain.universe {
            // Already counted if valid via the cursor at that index.
            let _ = u;
        }
        let floor = plan.domain.machine.floor(&p);
        let floor_inputs = floor.label.inputs();
        let matches = floor_inputs == cl.state;
        if !matches {
            self.lemma4_violations += 1;
        }
        self.trace.push(TraceEvent::LoopEnter {
            loop_state: cl.display.clone(),
            floor_state: format!("{floor_inputs:?}"),
            matches,
        });
    }
}

fn advance_names(plan: &LoopPlan, branch: &crate::codegen::Branch, min_holders: u64) -> Vec<String> {
    let mut out: Vec<String> = branch
        .advance
        .iter()
        .map(|&i| plan.inputs[i as usize].display().to_string())
        .collect();
    for (i, b) in plan.inputs.iter().enumerate() {
        if min_holders & (1 << i) != 0
            && !branch.inputs.contains(&(i as InputId))
            && !branch.advance.contains(&(i as InputId))
        {
            out.push(b.display().to_string());
        }
    }
    out
}

