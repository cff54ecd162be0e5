//! Benchmark support: the triangle-query scaling family, an instrumented
//! binary-join reference strategy, skewed intersection inputs, and log-log
//! slope fitting. Counter-based so results are hardware-independent.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::alir::{plan, AlirProgram};
use crate::codegen::{build_data, execute, lower, ExecOptions, ExecStats};
use crate::ra::{JoinKind, RaExpr};
use crate::relation::{Relation, Schema};
use crate::storage::{Capability, LayerKind, LevelEntry, StorageDescription, StorageMap};

/// Star-shaped edge set: {(1, i)} ∪ {(i, 1)} for i in 1..=n. Any binary
/// join plan materializes a quadratic intermediate on it.
pub fn star_edges(n: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(2 * n as usize);
    for i in 1..=n {
        out.push((1, i));
    }
    for i in 2..=n {
        out.push((i, 1));
    }
    out
}

fn edge_relation(attrs: [&str; 2], edges: &[(i64, i64)]) -> Relation {
    let rows: Vec<Vec<i64>> = edges.iter().map(|&(a, b)| vec![a, b]).collect();
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    Relation::of_ints(&attrs, &refs)
}

/// The three renamed copies of the edge set for the triangle query
/// A(a,b) join B(b,c) join C(a,c).
pub fn triangle_relations(n: i64) -> HashMap<String, Relation> {
    let edges = star_edges(n);
    let mut env = HashMap::new();
    env.insert("A".to_string(), edge_relation(["a", "b"], &edges));
    env.insert("B".to_string(), edge_relation(["b", "c"], &edges));
    env.insert("C".to_string(), edge_relation(["a", "c"], &edges));
    env
}

pub fn triangle_expr() -> RaExpr {
    RaExpr::Join {
        kind: JoinKind::Inner,
        left: Box::new(RaExpr::Join {
            kind: JoinKind::Inner,
            left: Box::new(RaExpr::Base("A".into())),
            right: Box::new(RaExpr::Base("B".into())),
            pred: None,
        }),
        right: Box::new(RaExpr::Base("C".into())),
        pred: None,
    }
}

pub fn triangle_plan() -> AlirProgram {
    let env = triangle_relations(2);
    let schemas: HashMap<String, Schema> =
        env.iter().map(|(n, r)| (n.clone(), r.schema().clone())).collect();
    plan(&triangle_expr(), &StorageMap::default(), &schemas).expect("triangle plans")
}

/// Run the fused triangle plan at size `n`; returns (result rows, stats).
pub fn triangle_fused(n: i64, galloping: bool) -> (u64, ExecStats) {
    let env = triangle_relations(n);
    let schemas: HashMap<String, Schema> =
        env.iter().map(|(r, v)| (r.clone(), v.schema().clone())).collect();
    let storage = StorageMap::default();
    let prog = plan(&triangle_expr(), &storage, &schemas).expect("plans");
    let lowered = lower(&prog, &storage, &schemas).expect("lowers");
    let data = build_data(&env, &storage).expect("builds");
    let opts = ExecOptions { galloping, ..Default::default() };
    let report = execute(&lowered, &data, &opts).expect("executes");
    (report.output.cardinality(), report.stats)
}

/// Reference strategy: pipelined binary hash joins (A join B, probing C per
/// intermediate row). Counts index inserts, hash probes, and intermediate
/// row visits; the intermediate streams instead of materializing, so only
/// the operation count is quadratic.
pub fn triangle_binary_join(n: i64) -> (u64, u64) {
    let edges = star_edges(n);
    let mut ops: u64 = 0;

    let mut b_index: HashMap<i64, Vec<i64>> = HashMap::new();
    for &(b, c) in &edges {
        b_index.entry(b).or_default().push(c);
        ops += 1;
    }
    let mut c_index: std::collections::HashSet<(i64, i64)> = Default::default();
    for &(a, c) in &edges {
        c_index.insert((a, c));
        ops += 1;
    }

    let mut results: u64 = 0;
    for &(a, b) in &edges {
        ops += 1; // probe B
        if let Some(cs) = b_index.get(&b) {
            for &c in cs {
                ops += 1; // visit intermediate row (a, b, c), probe C
                if c_index.contains(&(a, c)) {
                    results += 1;
                }
            }
        }
    }
    (results, ops)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> =
        points.iter().map(|&(x, y)| (x.ln(), y.max(1.0).ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Random sorted set of `density * n` distinct values from 1..=n, as a
/// single-attribute relation.
pub fn density_relation(attr: &str, n: i64, density: f64, seed: u64) -> Relation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = ((n as f64) * density).round() as usize;
    let mut values: Vec<i64> = (1..=n).collect();
    values.shuffle(&mut rng);
    values.truncate(take);
    values.sort_unstable();
    let rows: Vec<Vec<i64>> = values.into_iter().map(|v| vec![v]).collect();
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    Relation::of_ints(&[attr], &refs)
}

/// Physical variant for the intersection-join comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntersectVariant {
    SortedMerge,
    SortedGalloping,
    HashProbe,
}

impl IntersectVariant {
    pub fn name(&self) -> &'static str {
        match self {
            IntersectVariant::SortedMerge => "sorted",
            IntersectVariant::SortedGalloping => "galloping",
            IntersectVariant::HashProbe => "hash",
        }
    }
}

/// Intersect two single-attribute relations named A and B (attribute `x`)
/// under the chosen variant; returns (result cardinality, stats).
pub fn intersect_run(a: &Relation, b: &Relation, variant: IntersectVariant) -> (u64, ExecStats) {
    let mut storage = StorageMap::default();
    if variant == IntersectVariant::HashProbe {
        storage.insert(
            "B",
            StorageDescription {
                order: vec!["x".into()],
                levels: vec![LevelEntry {
                    kind: LayerKind::Hash,
                    capability: Some(Capability::Lookup),
                }],
                primary_key_len: 0,
                related: vec![],
            },
        );
    }
    let src = "for x in A.x & B.x { for d in A >< B { emit(x) } }";
    let prog = crate::alir::parse_program(src).expect("parses");
    let mut schemas = HashMap::new();
    schemas.insert("A".to_string(), a.schema().clone());
    schemas.insert("B".to_string(), b.schema().clone());
    let lowered = lower(&prog, &storage, &schemas).expect("lowers");
    let mut env = HashMap::new();
    env.insert("A".to_string(), a.clone());
    env.insert("B".to_string(), b.clone());
    let data = build_data(&env, &storage).expect("builds");
    let opts = ExecOptions {
        galloping: variant == IntersectVariant::SortedGalloping,
        ..Default::default()
    };
    let report = execute(&lowered, &data, &opts).expect("executes");
    (report.output.cardinality(), report.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ra::ra_eval;

    #[test]
    fn fused_triangle_matches_brute_force() {
        for n in [2, 5, 9] {
            let env = triangle_relations(n);
            let expected = ra_eval(&triangle_expr(), &env).unwrap().cardinality();
            let (got, _) = triangle_fused(n, true);
            assert_eq!(got, expected, "n={n}");
            let (ref_count, _) = triangle_binary_join(n);
            assert_eq!(ref_count, expected, "reference n={n}");
        }
    }

    #[test]
    fn reference_ops_grow_quadratically() {
        let pts: Vec<(f64, f64)> = [64, 128, 256, 512]
            .iter()
            .map(|&n| (n as f64, triangle_binary_join(n).1 as f64))
            .collect();
        let slope = loglog_slope(&pts);
        assert!(slope > 1.7, "slope {slope}");
    }

    #[test]
    fn fused_ops_grow_linearly() {
        let pts: Vec<(f64, f64)> = [64, 128, 256, 512]
            .iter()
            .map(|&n| {
                let (_, stats) = triangle_fused(n, true);
                (n as f64, stats.total_ops() as f64)
            })
            .collect();
        let slope = loglog_slope(&pts);
        assert!(slope < 1.2, "slope {slope}");
    }

    #[test]
    fn skewed_intersection_gallops() {
        let n = 20_000;
        let a = density_relation("x", n, 0.002, 7);
        let b = density_relation("x", n, 0.8, 8);
        let (c1, merge) = intersect_run(&a, &b, IntersectVariant::SortedMerge);
        let (c2, gallop) = intersect_run(&a, &b, IntersectVariant::SortedGalloping);
        let (c3, _hash) = intersect_run(&a, &b, IntersectVariant::HashProbe);
        assert_eq!(c1, c2);
        assert_eq!(c1, c3);
        assert!(
            gallop.cursor_ops() * 10 <= merge.cursor_ops(),
            "gallop {} vs merge {}",
            gallop.cursor_ops(),
            merge.cursor_ops()
        );
    }
}
