//! Program validation: storage-order consistency, domain legality, variable
//! scoping, aggregation targets, and union-empty context. Produces
//! diagnostics rather than failing on the first problem.

use std::collections::HashMap;

use crate::alir::ast::*;
use crate::alir::domain::build_domain;
use crate::relation::Schema;
use crate::scalar::ScalarExpr;
use crate::storage::{Capability, StorageDescription, StorageMap};
use crate::value::Kind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub context: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RelInfo {
    pub key_attrs: Vec<String>,
    pub caps: Vec<Capability>,
    pub related: Vec<String>,
    pub kinds: HashMap<String, Kind>,
}

impl RelInfo {
    pub fn from_parts(schema: &Schema, desc: &StorageDescription) -> RelInfo {
        RelInfo {
            key_attrs: desc.key_attrs().to_vec(),
            caps: desc.level_descs().iter().map(|l| l.capability).collect(),
            related: desc.related.clone(),
            kinds: schema
                .entries()
                .iter()
                .map(|(n, k)| (n.clone(), *k))
                .collect(),
        }
    }
}

struct Validator<'a> {
    rels: HashMap<String, RelInfo>,
    bound: HashMap<String, usize>,
    vars: Vec<String>,
    var_of_level: HashMap<(String, String), String>,
    /// Temporaries whose producer block we are inside.
    open_aggs: Vec<String>,
    /// Expected arity of the innermost sink, when fixed by a let.
    sink_arity: Vec<Option<usize>>,
    loop_depth: usize,
    diags: &'a mut Vec<Diagnostic>,
}

/// Validate a program against base relation schemas and their storage
/// descriptions. Relations not in `storage` get the default all-sorted
/// description.
pub fn validate(
    prog: &AlirProgram,
    storage: &StorageMap,
    schemas: &HashMap<String, Schema>,
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut rels = HashMap::new();
    for (name, schema) in schemas {
        let default_desc;
        let desc = match storage.get(name) {
            Some(d) => d,
            None => {
                default_desc = StorageDescription::default_for(schema);
                &default_desc
            }
        };
        if let Err(e) = desc.validate(schema) {
            diags.push(Diagnostic {
                context: format!("storage for {name}"),
                message: e.to_string(),
            });
            continue;
        }
        rels.insert(name.clone(), RelInfo::from_parts(schema, desc));
    }
    for alias in &prog.aliases {
        match rels.get(&alias.base) {
            Some(info) => {
                let info = info.clone();
                if rels.insert(alias.name.clone(), info).is_some() {
                    diags.push(Diagnostic {
                        context: format!("alias {}", alias.name),
                        message: "name already in scope".into(),
                    });
                }
            }
            None => diags.push(Diagnostic {
                context: format!("alias {}", alias.name),
                message: format!("unknown base relation `{}`", alias.base),
            }),
        }
    }
    let mut v = Validator {
        rels,
        bound: HashMap::new(),
        vars: Vec::new(),
        var_of_level: HashMap::new(),
        open_aggs: Vec::new(),
        sink_arity: vec![None],
        loop_depth: 0,
        diags: &mut diags,
    };
    v.block(&prog.stmts);
    diags
}

impl Validator<'_> {
    fn diag(&mut self, context: impl Into<String>, message: impl Into<String>) {
        self.diags.push(Diagnostic { context: context.into(), message: message.into() });
    }

    fn block(&mut self, stmts: &[AlirStmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, stmt: &AlirStmt) {
        match stmt {
            AlirStmt::For { var, domain, universe, body } => {
                self.for_stmt(var, domain, *universe, body)
            }
            AlirStmt::Emit(exprs) => {
                let ctx = "emit".to_string();
                for e in exprs {
                    self.scalar(&ctx, e);
                }
                if let Some(Some(arity)) = self.sink_arity.last() {
                    if exprs.len() != *arity {
                        self.diag(ctx, format!(
                            "emits {} values but the enclosing temporary has {arity} attributes",
                            exprs.len()
                        ));
                    }
                }
            }
            AlirStmt::AggUpdate { target, keys, attr, value, .. } => {
                let ctx = format!("aggregate into {target}");
                if !self.open_aggs.iter().any(|t| t == target) {
                    self.diag(&ctx, "target is not a temporary declared by an enclosing let");
                    return;
                }
                if let Some(info) = self.rels.get(target).cloned() {
                    if keys.len() != info.key_attrs.len() {
                        self.diag(&ctx, format!(
                            "{} key expressions for {} key attributes",
                            keys.len(),
                            info.key_attrs.len()
                        ));
                    }
                    if !info.related.iter().any(|a| a == attr) {
                        self.diag(&ctx, format!(
                            "`{attr}` is not a related (accumulator) attribute of {target}"
                        ));
                    }
                }
                for k in keys {
                    self.scalar(&ctx, k);
                }
                self.scalar(&ctx, value);
            }
            AlirStmt::Let { decl, producer, body } => self.let_stmt(decl, producer, body),
        }
    }

    fn for_stmt(
        &mut self,
        var: &str,
        domain: &MultisetExpr,
        universe: Option<(i64, i64)>,
        body: &[AlirStmt],
    ) {
        let ctx = format!("loop {var}");
        let (base, union_empty) = domain.split_union_empty();
        if union_empty && self.loop_depth == 0 {
            self.diag(&ctx, "`| null` needs an enclosing loop to scope its emptiness test");
        }

        // Collect level references and bind relations.
        let mut bound_here: Vec<String> = Vec::new();
        let mut refs: Vec<LevelRef> = Vec::new();
        let mut ok = true;
        base.for_each_leaf(&mut |leaf| match leaf {
            MultisetExpr::Level(r) => refs.push(r.clone()),
            MultisetExpr::DupCounter { relation } => {
                if !self.rels.contains_key(relation) {
                    self.diags.push(Diagnostic {
                        context: ctx.clone(),
                        message: format!("unknown relation `{relation}`"),
                    });
                    ok = false;
                }
            }
            _ => {}
        });
        for r in &refs {
            let Some(info) = self.rels.get(&r.relation).cloned() else {
                self.diag(&ctx, format!("unknown relation `{}`", r.relation));
                ok = false;
                continue;
            };
            if let Some(level) = info.key_attrs.iter().position(|a| *a == r.attr) {
                let depth = *self.bound.get(&r.relation).unwrap_or(&0);
                if level != depth {
                    self.diag(&ctx, format!(
                        "level `{}.{}` is out of order: storage order expects `{}` next",
                        r.relation,
                        r.attr,
                        info.key_attrs.get(depth).cloned().unwrap_or_else(|| "<end>".into())
                    ));
                    ok = false;
                } else if !bound_here.contains(&r.relation) {
                    bound_here.push(r.relation.clone());
                }
            } else if info.related.iter().any(|a| *a == r.attr) {
                let depth = *self.bound.get(&r.relation).unwrap_or(&0);
                if depth != info.key_attrs.len() {
                    self.diag(&ctx, format!(
                        "related value `{}.{}` needs all key levels bound",
                        r.relation, r.attr
                    ));
                    ok = false;
                }
            } else {
                self.diag(&ctx, format!("`{}` has no attribute `{}`", r.relation, r.attr));
                ok = false;
            }
        }

        // Scalar sub-expressions inside predicates and singletons see the
        // loop variable as bound.
        self.vars.push(var.to_string());
        base.for_each_leaf(&mut |leaf| match leaf {
            MultisetExpr::Predicate { var: pv, pred } => {
                let mut vars = Vec::new();
                pred.free_vars(&mut vars);
                let mut shadow = vec![pv.clone()];
                shadow.extend(self.vars.iter().cloned());
                for v in vars {
                    if !shadow.contains(&v) {
                        self.diags.push(Diagnostic {
                            context: ctx.clone(),
                            message: format!("unbound variable `{v}` in predicate"),
                        });
                    }
                }
            }
            MultisetExpr::Singleton(expr) => {
                let mut vars = Vec::new();
                expr.free_vars(&mut vars);
                for v in vars {
                    if !self.vars.contains(&v) {
                        self.diags.push(Diagnostic {
                            context: ctx.clone(),
                            message: format!("unbound variable `{v}` in singleton"),
                        });
                    }
                }
            }
            _ => {}
        });

        // Legality of the domain machine.
        if ok {
            let rels = &self.rels;
            let bound = &self.bound;
            let caps = |r: &LevelRef| -> Result<Capability, String> {
                let info = rels
                    .get(&r.relation)
                    .ok_or_else(|| format!("unknown relation `{}`", r.relation))?;
                match info.key_attrs.iter().position(|a| *a == r.attr) {
                    Some(level) => Ok(info.caps[level]),
                    None if info.related.iter().any(|a| *a == r.attr) => Ok(Capability::Both),
                    None => Err(format!("`{}` has no attribute `{}`", r.relation, r.attr)),
                }
            };
            let _ = bound; // levels already checked above
            if let Err(e) = build_domain(base, &caps, universe) {
                self.diag(&ctx, e);
            }
        }

        for r in &refs {
            if let Some(info) = self.rels.get(&r.relation) {
                if info.key_attrs.iter().any(|a| *a == r.attr) {
                    self.var_of_level
                        .insert((r.relation.clone(), r.attr.clone()), var.to_string());
                }
            }
        }
        for rel in &bound_here {
            *self.bound.entry(rel.clone()).or_insert(0) += 1;
        }
        self.loop_depth += 1;
        self.block(body);
        self.loop_depth -= 1;
        for rel in &bound_here {
            *self.bound.get_mut(rel).unwrap() -= 1;
        }
        self.vars.pop();
    }

    fn let_stmt(&mut self, decl: &TempDecl, producer: &[AlirStmt], body: &[AlirStmt]) {
        let ctx = format!("let {}", decl.name);
        let schema = match Schema::new(decl.schema.clone()) {
            Ok(s) => s,
            Err(e) => {
                self.diag(&ctx, e.to_string());
                return;
            }
        };
        if let Err(e) = decl.storage.validate(&schema) {
            self.diag(&ctx, e.to_string());
            return;
        }
        if self.rels.contains_key(&decl.name) {
            self.diag(&ctx, "name already in scope");
            return;
        }
        let uses_agg = stmts_use_agg(producer, &decl.name);
        let uses_emit = stmts_use_emit(producer);
        if uses_agg && uses_emit {
            self.diag(&ctx, "producer mixes emit and aggregation updates");
        }
        if uses_agg {
            // Aggregation needs the accumulators stored as related values.
            self.rels
                .insert(decl.name.clone(), RelInfo::from_parts(&schema, &decl.storage));
            self.open_aggs.push(decl.name.clone());
            self.sink_arity.push(None);
            self.block(producer);
            self.sink_arity.pop();
            self.open_aggs.pop();
        } else {
            self.sink_arity.push(Some(decl.schema.len()));
            self.block(producer);
            self.sink_arity.pop();
            self.rels
                .insert(decl.name.clone(), RelInfo::from_parts(&schema, &decl.storage));
        }
        self.bound.insert(decl.name.clone(), 0);
        self.block(body);
        self.bound.remove(&decl.name);
        self.rels.remove(&decl.name);
    }

    fn scalar(&mut self, ctx: &str, e: &ScalarExpr) {
        let mut vars = Vec::new();
        e.free_vars(&mut vars);
        for v in vars {
            if !self.vars.contains(&v) {
                self.diag(ctx, format!("unbound variable `{v}`"));
            }
        }
        let mut quals = Vec::new();
        e.related_refs(&mut quals);
        for (rel, attr) in quals {
            let Some(info) = self.rels.get(&rel).cloned() else {
                self.diag(ctx, format!("unknown relation `{rel}`"));
                continue;
            };
            if info.related.iter().any(|a| a == &attr) {
                let depth = *self.bound.get(&rel).unwrap_or(&0);
                if depth != info.key_attrs.len() {
                    self.diag(ctx, format!(
                        "related value `{rel}.{attr}` needs all key levels of `{rel}` bound"
                    ));
                }
            } else if info.key_attrs.iter().any(|a| a == &attr) {
                if !self.var_of_level.contains_key(&(rel.clone(), attr.clone())) {
                    self.diag(ctx, format!("level `{rel}.{attr}` is not bound by any loop"));
                }
            } else {
                self.diag(ctx, format!("`{rel}` has no attribute `{attr}`"));
            }
        }
    }
}

fn stmts_use_agg(stmts: &[AlirStmt], target: &str) -> bool {
    stmts.iter().any(|s| match s {
        AlirStmt::AggUpdate { target: t, .. } => t == target,
        AlirStmt::For { body, .. } => stmts_use_agg(body, target),
        AlirStmt::Let { body, .. } => stmts_use_agg(body, target),
        AlirStmt::Emit(_) => false,
    })
}

fn stmts_use_emit(stmts: &[AlirStmt]) -> bool {
    stmts.iter().any(|s| match s {
        AlirStmt::Emit(_) => true,
        AlirStmt::For { body, .. } => stmts_use_emit(body),
        // Emits inside a nested let belong to that let.
        AlirStmt::Let { body, .. } => stmts_use_emit(body),
        AlirStmt::AggUpdate { .. } => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alir::text::parse_program;

    fn schemas(rels: &[(&str, &[&str])]) -> HashMap<String, Schema> {
        rels.iter()
            .map(|(n, attrs)| (n.to_string(), Schema::ints(attrs)))
            .collect()
    }

    fn check(src: &str, storage: &StorageMap, rels: &[(&str, &[&str])]) -> Vec<Diagnostic> {
        validate(&parse_program(src).unwrap(), storage, &schemas(rels))
    }

    const FIG_INNER: &str = r#"
for x in A.x {
  for y in A.y! & B.y! {
    for z in B.z {
      for d in A >< B {
        emit(x, y, z)
      }
    }
  }
}
"#;

    #[test]
    fn inner_join_program_is_clean() {
        let diags = check(FIG_INNER, &StorageMap::default(), &[
            ("A", &["x", "y"]),
            ("B", &["y", "z"]),
        ]);
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn wrong_storage_order_is_diagnosed() {
        let mut storage = StorageMap::default();
        storage.insert("B", crate::storage::StorageDescription::with_order(&["z", "y"]));
        let diags = check(FIG_INNER, &storage, &[("A", &["x", "y"]), ("B", &["y", "z"])]);
        assert!(diags.iter().any(|d| d.message.contains("out of order")), "{diags:?}");
    }

    #[test]
    fn lookup_only_domain_without_universe_is_diagnosed() {
        use crate::storage::{Capability, LayerKind};
        let mut storage = StorageMap::default();
        storage.insert(
            "A",
            crate::storage::StorageDescription {
                order: vec!["x".into()],
                levels: vec![crate::storage::LevelEntry {
                    kind: LayerKind::Hash,
                    capability: Some(Capability::Lookup),
                }],
                primary_key_len: 0,
                related: vec![],
            },
        );
        let diags = check("for x in A.x { emit(x) }", &storage, &[("A", &["x"])]);
        assert!(diags.iter().any(|d| d.message.contains("universe")), "{diags:?}");
    }

    #[test]
    fn unbound_variable_is_diagnosed() {
        let diags = check("for x in A.x { emit(y) }", &StorageMap::default(), &[("A", &["x"])]);
        assert!(diags.iter().any(|d| d.message.contains("unbound variable `y`")));
    }

    #[test]
    fn agg_target_must_be_enclosing_temp() {
        let src = "for x in A.x { T[x].s += x }";
        let diags = check(src, &StorageMap::default(), &[("A", &["x"])]);
        assert!(diags.iter().any(|d| d.message.contains("not a temporary")));
    }
}
