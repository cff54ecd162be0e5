//! Readable pseudocode rendering of a lowered program, for inspection and
//! golden tests. Deterministic; not meant to be parsed back.

use std::fmt::Write;

use crate::codegen::{
    CompiledScalar, GallopExpr, LoopPlan, LoopProgram, LoweredStmt,
};
use crate::machine::InputId;

fn scalar_str(e: &CompiledScalar, vars: &[String]) -> String {
    match e {
        CompiledScalar::Const(crate::value::Value::Null) => "null".into(),
        CompiledScalar::Const(v) => v.to_string(),
        CompiledScalar::Slot(s) => vars.get(*s).cloned().unwrap_or_else(|| format!("v{s}")),
        CompiledScalar::Payload { rel_slot, index } => format!("payload(r{rel_slot}, {index})"),
        CompiledScalar::Cmp(op, a, b) => {
            format!("({} {op} {})", scalar_str(a, vars), scalar_str(b, vars))
        }
        CompiledScalar::Arith(op, a, b) => {
            format!("({} {op} {})", scalar_str(a, vars), scalar_str(b, vars))
        }
        CompiledScalar::And(a, b) => {
            format!("({} and {})", scalar_str(a, vars), scalar_str(b, vars))
        }
        CompiledScalar::Or(a, b) => {
            format!("({} or {})", scalar_str(a, vars), scalar_str(b, vars))
        }
        CompiledScalar::Not(a) => format!("(not {})", scalar_str(a, vars)),
        CompiledScalar::IsNull(a) => format!("({} is null)", scalar_str(a, vars)),
        CompiledScalar::IsNotNull(a) => format!("({} is not null)", scalar_str(a, vars)),
    }
}

fn gallop_str(g: &GallopExpr, names: &dyn Fn(InputId) -> String) -> String {
    match g {
        GallopExpr::NegInf => "-inf".into(),
        GallopExpr::PosInf => "+inf".into(),
        GallopExpr::Cur(i) => format!("cur({})", names(*i)),
        GallopExpr::Max(a, b) => format!("max({}, {})", gallop_str(a, names), gallop_str(b, names)),
        GallopExpr::Min(a, b) => format!("min({}, {})", gallop_str(a, names), gallop_str(b, names)),
    }
}

fn emit_loop(plan: &LoopPlan, indent: usize, vars: &mut Vec<String>, out: &mut String) {
    let pad = "  ".repeat(indent);
    let name = |i: InputId| -> String {
        plan.inputs
            .get(i as usize)
            .map(|b| format!("{}#{i}", b.display()))
            .unwrap_or_else(|| format!("#{i}"))
    };
    for (i, b) in plan.inputs.iter().enumerate() {
        let cap = if b.is_iterator() { "iter" } else { "lookup" };
        writeln!(out, "{pad}init {cap} c{i} = {}", b.display()).unwrap();
    }
    vars.push(plan.var.clone());
    for cl in &plan.loops {
        let conds: Vec<String> = cl.iterators.iter().map(|&i| format!("c{i}.valid()")).collect();
        writeln!(out, "{pad}while {} {{  # state {}", conds.join(" && "), cl.display).unwrap();
        let ipad = "  ".repeat(indent + 1);
        let curs: Vec<String> = cl.iterators.iter().map(|&i| format!("c{i}.curval()")).collect();
        writeln!(out, "{ipad}{} = min({})", plan.var, curs.join(", ")).unwrap();
        if !cl.gallop.is_disabled() {
            writeln!(out, "{ipad}g = {}", gallop_str(&cl.gallop, &name)).unwrap();
            let skips: Vec<String> =
                cl.iterators.iter().map(|&i| format!("c{i}.skipto(g)")).collect();
            writeln!(out, "{ipad}if {} != g {{ {}; continue }}", plan.var, skips.join("; "))
                .unwrap();
        }
        for branch in &cl.branches {
            let tests: Vec<String> = branch
                .inputs
                .iter()
                .map(|&i| format!("c{i}.present({})", plan.var))
                .collect();
            let cond = if tests.is_empty() { "true".to_string() } else { tests.join(" && ") };
            writeln!(out, "{ipad}if {cond} {{  # case {}", branch.display).unwrap();
            let bpad = "  ".repeat(indent + 2);
            if branch.producer {
                emit_block_inner(&plan.body, indent + 2, vars, out);
            } else if branch.not_ready {
                writeln!(out, "{bpad}# not ready: pass the misalignment").unwrap();
            }
            let mut advanced: Vec<String> = Vec::new();
            for group in &branch.products {
                let names: Vec<String> = group.iter().map(|&i| format!("c{i}")).collect();
                advanced.push(format!("advance_product({})", names.join(", ")));
            }
            for &i in &branch.advance {
                if branch.products.iter().all(|g| !g.contains(&i)) {
                    advanced.push(format!("c{i}.advance()"));
                }
            }
            if advanced.is_empty() {
                advanced.push("advance cursors at min".to_string());
            }
            writeln!(out, "{bpad}{}; continue", advanced.join("; ")).unwrap();
            writeln!(out, "{ipad}}}").unwrap();
        }
        writeln!(out, "{pad}}}").unwrap();
    }
    if plan.union_empty {
        writeln!(out, "{pad}if nothing produced {{").unwrap();
        let ipad = "  ".repeat(indent + 1);
        writeln!(out, "{ipad}{} = null", plan.var).unwrap();
        emit_block_inner(&plan.body, indent + 1, vars, out);
        writeln!(out, "{pad}}}").unwrap();
    }
    vars.pop();
}

fn emit_block_inner(stmts: &[LoweredStmt], indent: usize, vars: &mut Vec<String>, out: &mut String) {
    let pad = "  ".repeat(indent);
    for s in stmts {
        match s {
            LoweredStmt::Loop(plan) => emit_loop(plan, indent, vars, out),
            LoweredStmt::Emit { exprs, .. } => {
                let parts: Vec<String> = exprs.iter().map(|e| scalar_str(e, vars)).collect();
                writeln!(out, "{pad}output({})", parts.join(", ")).unwrap();
            }
            LoweredStmt::AggUpdate { keys, acc_index, op, value, .. } => {
                let parts: Vec<String> = keys.iter().map(|e| scalar_str(e, vars)).collect();
                writeln!(
                    out,
                    "{pad}agg[{}].acc{acc_index} {} {}",
                    parts.join(", "),
                    op.ascii(),
                    scalar_str(value, vars)
                )
                .unwrap();
            }
            LoweredStmt::Let(plan) => {
                writeln!(out, "{pad}build {} {{", plan.name).unwrap();
                emit_block_inner(&plan.producer, indent + 1, vars, out);
                writeln!(out, "{pad}}} then {{").unwrap();
                emit_block_inner(&plan.body, indent + 1, vars, out);
                writeln!(out, "{pad}}}").unwrap();
            }
        }
    }
}

/// Render the whole program.
pub fn emit_source(prog: &LoopProgram) -> String {
    let mut out = String::new();
    let cols: Vec<String> = prog
        .output
        .entries()
        .iter()
        .map(|(n, k)| format!("{n}:{k}"))
        .collect();
    writeln!(out, "# output schema: ({})", cols.join(", ")).unwrap();
    let mut vars = Vec::new();
    emit_block_inner(&prog.stmts, 0, &mut vars, &mut out);
    out
}
