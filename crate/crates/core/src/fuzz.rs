//! Randomized verification: generate relational expressions over small
//! random relations, run them through plan -> validate -> lower -> execute,
//! and compare against the brute-force evaluator. Mismatches shrink to a
//! minimal reproducer.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alir::{plan, validate};
use crate::codegen::{build_data, execute, lower, ExecOptions, Fault};
use crate::ra::{ra_eval, schema_of, AggOp, JoinKind, RaExpr};
use crate::relation::{Relation, Schema, Tuple};
use crate::scalar::{CmpOp, ScalarExpr};
use crate::storage::StorageMap;
use crate::value::{Kind, Value};

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub cases: u64,
    pub seed: u64,
    /// Maximum number of base relations per case.
    pub max_relations: usize,
    pub max_rows: usize,
    pub max_value: i64,
    pub max_multiplicity: u64,
    pub max_depth: usize,
    /// Probability of a null cell in generated data.
    pub null_chance: f64,
    /// Run each case a second time with galloping disabled and compare.
    pub check_gallop_toggle: bool,
    /// Check the loop-sequencing trace property on every case.
    pub check_lemma4: bool,
    /// Test-support fault injection to prove the verifier catches bugs.
    pub inject: Option<Fault>,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            cases: 100,
            seed: 0,
            max_relations: 4,
            max_rows: 6,
            max_value: 8,
            max_multiplicity: 3,
            max_depth: 3,
            null_chance: 0.08,
            check_gallop_toggle: false,
            check_lemma4: false,
            inject: None,
        }
    }
}

/// One generated case.
#[derive(Debug, Clone)]
pub struct Case {
    pub env: HashMap<String, Relation>,
    pub expr: RaExpr,
}

#[derive(Debug)]
pub struct Counterexample {
    pub case_index: u64,
    pub case: Case,
    pub detail: String,
    /// Serialized reproducer: relation CSVs plus the expression.
    pub reproducer: String,
}

#[derive(Debug, Default)]
pub struct VerifySummary {
    pub cases_run: u64,
    pub planned_fused: u64,
    pub lemma4_checked: bool,
}

/// Run the corpus; `Err` carries the first (shrunk) counterexample.
pub fn run_verification(cfg: &FuzzConfig) -> Result<VerifySummary, Box<Counterexample>> {
    let mut summary = VerifySummary { lemma4_checked: cfg.check_lemma4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.cases {
        let case = gen_case(&mut rng, cfg);
        summary.cases_run += 1;
        if let Err(detail) = check_case(&case, cfg) {
            let shrunk = shrink(case, cfg, &detail);
            let reproducer = serialize_case(&shrunk.0);
            return Err(Box::new(Counterexample {
                case_index: i,
                case: shrunk.0,
                detail: shrunk.1,
                reproducer,
            }));
        }
        summary.planned_fused += 1;
    }
    Ok(summary)
}

/// Compare compiled execution against the oracle for one case.
pub fn check_case(case: &Case, cfg: &FuzzConfig) -> Result<(), String> {
    let schemas: HashMap<String, Schema> = case
        .env
        .iter()
        .map(|(n, r)| (n.clone(), r.schema().clone()))
        .collect();
    let expected = ra_eval(&case.expr, &case.env).map_err(|e| format!("oracle: {e}"))?;
    let storage = StorageMap::default();
    let prog =
        plan(&case.expr, &storage, &schemas).map_err(|e| format!("plan: {e}"))?;
    let diags = validate(&prog, &storage, &schemas);
    if !diags.is_empty() {
        return Err(format!("plan output does not validate: {}", diags[0]));
    }
    let lowered = lower(&prog, &storage, &schemas).map_err(|e| format!("lower: {e}"))?;
    let data = build_data(&case.env, &storage).map_err(|e| format!("build: {e}"))?;
    let opts = ExecOptions { trace: cfg.check_lemma4, fault: cfg.inject, ..Default::default() };
    let report = execute(&lowered, &data, &opts).map_err(|e| format!("execute: {e}"))?;
    if !same_bag(&report.output, &expected) {
        return Err(format!(
            "result mismatch: engine produced {} rows, oracle {} rows",
            report.output.cardinality(),
            expected.cardinality()
        ));
    }
    if cfg.check_lemma4 && report.lemma4_violations > 0 {
        return Err(format!("{} loop-sequencing violations", report.lemma4_violations));
    }
    if cfg.check_gallop_toggle {
        let opts = ExecOptions { galloping: false, fault: cfg.inject, ..Default::default() };
        let off = execute(&lowered, &data, &opts).map_err(|e| format!("execute: {e}"))?;
        if !same_bag(&off.output, &expected) {
            return Err("galloping toggle changed the result".into());
        }
    }
    Ok(())
}

/// Multiset equality over rows, ignoring attribute names (planned programs
/// may name columns differently than the oracle).
fn same_bag(a: &Relation, b: &Relation) -> bool {
    if a.schema().arity() != b.schema().arity() {
        return false;
    }
    a.rows() == b.rows()
}

// ---- generation ----

const ATTR_POOL: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn gen_case(rng: &mut ChaCha8Rng, cfg: &FuzzConfig) -> Case {
    let nrels = rng.gen_range(1..=cfg.max_relations);
    let mut env = HashMap::new();
    let mut rels = Vec::new();
    for i in 0..nrels {
        let name = format!("R{i}");
        // Schemas draw ordered subsets of a global attribute order, so
        // shared attributes always agree on relative order.
        let arity = rng.gen_range(1..=3.min(ATTR_POOL.len()));
        let mut idxs: Vec<usize> = (0..ATTR_POOL.len()).collect();
        idxs.shuffle(rng);
        let mut chosen: Vec<usize> = idxs.into_iter().take(arity).collect();
        chosen.sort_unstable();
        let attrs: Vec<&str> = chosen.iter().map(|&i| ATTR_POOL[i]).collect();
        let schema = Schema::ints(&attrs);
        let rows = rng.gen_range(0..=cfg.max_rows);
        let mut rel = Relation::empty(schema);
        for _ in 0..rows {
            let values: Vec<Value> = (0..arity)
                .map(|_| {
                    if rng.gen_bool(cfg.null_chance) {
                        Value::Null
                    } else {
                        Value::Int(rng.gen_range(1..=cfg.max_value))
                    }
                })
                .collect();
            let mult = rng.gen_range(1..=cfg.max_multiplicity);
            rel.insert_n(Tuple::new(values), mult).unwrap();
        }
        env.insert(name.clone(), rel);
        rels.push(name);
    }
    let schemas: HashMap<String, Schema> =
        env.iter().map(|(n, r)| (n.clone(), r.schema().clone())).collect();
    let mut fresh = 0;
    let expr = gen_expr(rng, cfg, &rels, &schemas, cfg.max_depth, &mut fresh);
    Case { env, expr }
}

fn expr_schema(e: &RaExpr, schemas: &HashMap<String, Schema>) -> Schema {
    schema_of(e, schemas).expect("generated expressions are well-typed")
}

fn gen_expr(
    rng: &mut ChaCha8Rng,
    cfg: &FuzzConfig,
    rels: &[String],
    schemas: &HashMap<String, Schema>,
    depth: usize,
    fresh: &mut usize,
) -> RaExpr {
    fn pick_base(rng: &mut ChaCha8Rng, rels: &[String]) -> RaExpr {
        RaExpr::Base(rels.choose(rng).unwrap().clone())
    }
    if depth == 0 {
        return pick_base(rng, rels);
    }
    match rng.gen_range(0..14u32) {
        0 | 1 => pick_base(rng, rels),
        2 => {
            // Select with a random comparison.
            let child = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let schema = expr_schema(&child, schemas);
            let attrs: Vec<String> = schema.attrs().map(str::to_string).collect();
            let a = attrs.choose(rng).unwrap().clone();
            let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
                .choose(rng)
                .unwrap();
            let pred = if rng.gen_bool(0.7) || attrs.len() < 2 {
                ScalarExpr::cmp(
                    op,
                    ScalarExpr::var(&a),
                    ScalarExpr::int(rng.gen_range(1..=cfg.max_value)),
                )
            } else {
                let b = attrs.choose(rng).unwrap().clone();
                ScalarExpr::cmp(op, ScalarExpr::var(&a), ScalarExpr::var(&b))
            };
            RaExpr::Select { child: Box::new(child), pred }
        }
        3 => {
            let child = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let schema = expr_schema(&child, schemas);
            let mut attrs: Vec<String> = schema.attrs().map(str::to_string).collect();
            let keep = rng.gen_range(1..=attrs.len());
            attrs.shuffle(rng);
            attrs.truncate(keep);
            RaExpr::Project {
                child: Box::new(child),
                attrs,
                keep_dups: rng.gen_bool(0.7),
            }
        }
        4..=6 => {
            // Natural join (any kind) on shared attributes.
            for _ in 0..6 {
                let l = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
                let r = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
                let ls = expr_schema(&l, schemas);
                let rs = expr_schema(&r, schemas);
                let shared = ls.attrs().any(|a| rs.index_of(a).is_some());
                let all_shared = ls.attrs().all(|a| rs.index_of(a).is_some())
                    && rs.attrs().all(|a| ls.index_of(a).is_some());
                if shared && !all_shared {
                    let kind = *[
                        JoinKind::Inner,
                        JoinKind::Inner,
                        JoinKind::Left,
                        JoinKind::Right,
                        JoinKind::Full,
                    ]
                    .choose(rng)
                    .unwrap();
                    return RaExpr::Join {
                        kind,
                        left: Box::new(l),
                        right: Box::new(r),
                        pred: None,
                    };
                }
            }
            pick_base(rng, rels)
        }
        7 => {
            // Theta join; attributes disambiguated by renaming.
            let l = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let r = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let ls = expr_schema(&l, schemas);
            let rs = expr_schema(&r, schemas);
            *fresh += 1;
            let sfx = format!("_r{fresh}");
            let renames: Vec<(String, String)> = rs
                .attrs()
                .map(|a| (a.to_string(), format!("{a}{sfx}")))
                .collect();
            let r = RaExpr::Rename { child: Box::new(r), renames: renames.clone() };
            let la = ls.attrs().choose(rng).unwrap().to_string();
            let ra = format!("{}{sfx}", rs.attrs().choose(rng).unwrap());
            let op = *[CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap();
            let kind = *[
                JoinKind::Inner,
                JoinKind::Inner,
                JoinKind::Left,
                JoinKind::Right,
                JoinKind::Full,
            ]
            .choose(rng)
            .unwrap();
            RaExpr::Join {
                kind,
                left: Box::new(l),
                right: Box::new(r),
                pred: Some(ScalarExpr::cmp(op, ScalarExpr::var(&la), ScalarExpr::var(&ra))),
            }
        }
        8 | 9 => {
            // Set operations need matching schemas: project both sides onto
            // the shared attribute set.
            for _ in 0..6 {
                let l = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
                let r = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
                let ls = expr_schema(&l, schemas);
                let rs = expr_schema(&r, schemas);
                let common: Vec<String> = ls
                    .attrs()
                    .filter(|a| rs.index_of(a).is_some())
                    .map(str::to_string)
                    .collect();
                if common.is_empty() {
                    continue;
                }
                let lp = RaExpr::Project {
                    child: Box::new(l),
                    attrs: common.clone(),
                    keep_dups: true,
                };
                let rp = RaExpr::Project {
                    child: Box::new(r),
                    attrs: common,
                    keep_dups: true,
                };
                return match rng.gen_range(0..3u32) {
                    0 => RaExpr::Union { left: Box::new(lp), right: Box::new(rp) },
                    1 => RaExpr::Concat { left: Box::new(lp), right: Box::new(rp) },
                    _ => RaExpr::Difference { left: Box::new(lp), right: Box::new(rp) },
                };
            }
            pick_base(rng, rels)
        }
        10 => {
            // Product with disjoint attribute names.
            let l = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let r = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let rs = expr_schema(&r, schemas);
            *fresh += 1;
            let sfx = format!("_p{fresh}");
            let renames: Vec<(String, String)> =
                rs.attrs().map(|a| (a.to_string(), format!("{a}{sfx}"))).collect();
            RaExpr::Product {
                left: Box::new(l),
                right: Box::new(RaExpr::Rename { child: Box::new(r), renames }),
            }
        }
        11 | 12 => {
            let child = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            let schema = expr_schema(&child, schemas);
            let attrs: Vec<String> = schema.attrs().map(str::to_string).collect();
            let groups = rng.gen_range(0..attrs.len());
            let mut shuffled = attrs.clone();
            shuffled.shuffle(rng);
            let group: Vec<String> = shuffled.iter().take(groups).cloned().collect();
            let mut aggs: Vec<(AggOp, String)> = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let op = *[AggOp::Sum, AggOp::Count, AggOp::Min, AggOp::Max]
                    .choose(rng)
                    .unwrap();
                let attr = attrs.choose(rng).unwrap().clone();
                // Output names must stay unique across groups and aggregates.
                let out_name = format!("{}_{attr}", op.name());
                if group.contains(&out_name)
                    || aggs.iter().any(|(o, a)| format!("{}_{a}", o.name()) == out_name)
                {
                    continue;
                }
                aggs.push((op, attr));
            }
            if aggs.is_empty() {
                return pick_base(rng, rels);
            }
            RaExpr::GroupAggregate { child: Box::new(child), group, aggs }
        }
        _ => {
            let child = gen_expr(rng, cfg, rels, schemas, depth - 1, fresh);
            RaExpr::Distinct { child: Box::new(child) }
        }
    }
}

// ---- shrinking ----

fn shrink(case: Case, cfg: &FuzzConfig, detail: &str) -> (Case, String) {
    let mut best = case;
    let mut best_detail = detail.to_string();
    let mut changed = true;
    while changed {
        changed = false;
        // Try dropping rows.
        for (name, rel) in best.env.clone() {
            for victim in rel.rows().iter().map(|(t, _)| t.clone()).collect::<Vec<_>>() {
                let mut smaller = Relation::empty(rel.schema().clone());
                for (row, count) in rel.rows().iter() {
                    if *row == victim {
                        if count > 1 {
                            smaller.insert_n(row.clone(), count - 1).unwrap();
                        }
                    } else {
                        smaller.insert_n(row.clone(), count).unwrap();
                    }
                }
                let mut candidate = best.clone();
                candidate.env.insert(name.clone(), smaller);
                if let Err(d) = check_case(&candidate, cfg) {
                    best = candidate;
                    best_detail = d;
                    changed = true;
                    break;
                }
            }
            if changed {
                break;
            }
        }
        if changed {
            continue;
        }
        // Try replacing the expression with a failing sub-expression.
        for sub in sub_exprs(&best.expr) {
            let candidate = Case { env: best.env.clone(), expr: sub };
            if check_case(&candidate, cfg).is_err() {
                best_detail = check_case(&candidate, cfg).unwrap_err();
                best = candidate;
                changed = true;
                break;
            }
        }
    }
    (best, best_detail)
}

fn sub_exprs(e: &RaExpr) -> Vec<RaExpr> {
    match e {
        RaExpr::Base(_) => vec![],
        RaExpr::Select { child, .. }
        | RaExpr::Project { child, .. }
        | RaExpr::GroupAggregate { child, .. }
        | RaExpr::Distinct { child }
        | RaExpr::Rename { child, .. } => vec![(**child).clone()],
        RaExpr::Join { left, right, .. }
        | RaExpr::Difference { left, right }
        | RaExpr::Union { left, right }
        | RaExpr::Concat { left, right }
        | RaExpr::Product { left, right } => vec![(**left).clone(), (**right).clone()],
    }
}

/// Human-readable reproducer: expression plus relation CSVs.
pub fn serialize_case(case: &Case) -> String {
    let mut out = String::new();
    writeln!(out, "expression: {}", format_expr(&case.expr)).unwrap();
    let mut names: Vec<&String> = case.env.keys().collect();
    names.sort();
    for name in names {
        writeln!(out, "--- {name}.csv").unwrap();
        let mut buf = Vec::new();
        case.env[name].write_csv(&mut buf).unwrap();
        out.push_str(&String::from_utf8(buf).unwrap());
    }
    out
}

/// Render an expression in the CLI's expression syntax.
pub fn format_expr(e: &RaExpr) -> String {
    match e {
        RaExpr::Base(n) => n.clone(),
        RaExpr::Select { child, pred } => {
            format!("select({}, {pred})", format_expr(child))
        }
        RaExpr::Project { child, attrs, keep_dups } => format!(
            "project({}, [{}]{})",
            format_expr(child),
            attrs.join(", "),
            if *keep_dups { "" } else { ", distinct" }
        ),
        RaExpr::Join { kind, left, right, pred } => {
            let name = match kind {
                JoinKind::Inner => "join",
                JoinKind::Left => "leftjoin",
                JoinKind::Right => "rightjoin",
                JoinKind::Full => "fulljoin",
            };
            match pred {
                None => format!("{name}({}, {})", format_expr(left), format_expr(right)),
                Some(p) => {
                    format!("{name}({}, {}, {p})", format_expr(left), format_expr(right))
                }
            }
        }
        RaExpr::Difference { left, right } => {
            format!("diff({}, {})", format_expr(left), format_expr(right))
        }
        RaExpr::Union { left, right } => {
            format!("union({}, {})", format_expr(left), format_expr(right))
        }
        RaExpr::Concat { left, right } => {
            format!("concat({}, {})", format_expr(left), format_expr(right))
        }
        RaExpr::Product { left, right } => {
            format!("product({}, {})", format_expr(left), format_expr(right))
        }
        RaExpr::GroupAggregate { child, group, aggs } => {
            let aggs: Vec<String> = aggs
                .iter()
                .map(|(op, a)| format!("{}({a})", op.name()))
                .collect();
            format!(
                "agg({}, [{}], [{}])",
                format_expr(child),
                group.join(", "),
                aggs.join(", ")
            )
        }
        RaExpr::Distinct { child } => format!("distinct({})", format_expr(child)),
        RaExpr::Rename { child, renames } => {
            let rs: Vec<String> =
                renames.iter().map(|(o, n)| format!("{o}={n}")).collect();
            format!("rename({}, {})", format_expr(child), rs.join(", "))
        }
    }
}

/// Kind of a generated value column; generation is integer-only, so this is
/// fixed, but kept for future extension of the corpus.
pub fn generated_kind() -> Kind {
    Kind::Int
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_corpus_passes() {
        let cfg = FuzzConfig { cases: 40, seed: 11, ..Default::default() };
        let summary = run_verification(&cfg)
            .map_err(|c| format!("{}\n{}", c.detail, c.reproducer))
            .unwrap();
        assert_eq!(summary.cases_run, 40);
    }

    #[test]
    fn injected_dup_fault_is_caught_and_shrunk() {
        let cfg = FuzzConfig {
            cases: 60,
            seed: 3,
            inject: Some(Fault::DupCountPlusOne),
            ..Default::default()
        };
        let err = run_verification(&cfg).expect_err("fault must surface");
        assert!(err.reproducer.contains("expression:"));
        assert!(err.detail.contains("mismatch"));
    }
}
