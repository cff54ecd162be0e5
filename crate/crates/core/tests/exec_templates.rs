//! End-to-end execution of hand-written ALIR templates against the
//! brute-force oracle and the worked examples.

use std::collections::HashMap;

use relfuse::alir::text::parse_program;
use relfuse::codegen::{build_data, execute, lower, ExecOptions, TraceEvent};
use relfuse::relation::{Relation, Schema, Tuple};
use relfuse::storage::StorageMap;
use relfuse::value::Value;

fn run(
    src: &str,
    rels: &[(&str, Relation)],
    storage: &StorageMap,
    opts: &ExecOptions,
) -> relfuse::codegen::ExecReport {
    let prog = parse_program(src).unwrap();
    let schemas: HashMap<String, Schema> = rels
        .iter()
        .map(|(n, r)| (n.to_string(), r.schema().clone()))
        .collect();
    let lowered = lower(&prog, storage, &schemas).unwrap();
    let env: HashMap<String, Relation> =
        rels.iter().map(|(n, r)| (n.to_string(), r.clone())).collect();
    let data = build_data(&env, storage).unwrap();
    execute(&lowered, &data, opts).unwrap()
}

fn run_plain(src: &str, rels: &[(&str, Relation)]) -> Relation {
    run(src, rels, &StorageMap::default(), &ExecOptions::default()).output
}

const INNER_JOIN: &str = r#"
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

fn fig_inputs() -> Vec<(&'static str, Relation)> {
    vec![
        ("A", Relation::of_ints(&["x", "y"], &[&[1, 1], &[2, 2]])),
        ("B", Relation::of_ints(&["y", "z"], &[&[2, 3], &[3, 4]])),
    ]
}

#[test]
fn inner_join_template_matches_table() {
    let out = run_plain(INNER_JOIN, &fig_inputs());
    let want = Relation::of_ints(&["x", "y", "z"], &[&[2, 2, 3]]);
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn inner_join_respects_duplicates() {
    // Leaf multiplicities multiply through the dups loop.
    let rels = vec![
        ("A", Relation::of_ints(&["x", "y"], &[&[2, 2], &[2, 2]])),
        ("B", Relation::of_ints(&["y", "z"], &[&[2, 3], &[2, 3], &[2, 3]])),
    ];
    let out = run_plain(INNER_JOIN, &rels);
    assert_eq!(out.cardinality(), 6);
}

#[test]
fn single_attribute_join_with_merged_variable() {
    // A(x) = B(y) = {{1,1}}: joining on x = y gives cardinality 4.
    let rels = vec![
        ("A", Relation::of_ints(&["x"], &[&[1], &[1]])),
        ("B", Relation::of_ints(&["y"], &[&[1], &[1]])),
    ];
    let src = "for v in A.x! & B.y! { for d in A >< B { emit(v, v) } }";
    let out = run_plain(src, &rels);
    assert_eq!(out.cardinality(), 4);
    // Intersection of the expanded multisets gives 2.
    let src = "for v in A.x* & B.y* { emit(v) }";
    let out = run_plain(src, &rels);
    assert_eq!(out.cardinality(), 2);
}

#[test]
fn difference_alignment_produces_one() {
    // (A - B) & C with A = {{1,1}}, B = {{1}}, C = {{1}}.
    let rels = vec![
        ("A", Relation::of_ints(&["x"], &[&[1], &[1]])),
        ("B", Relation::of_ints(&["x"], &[&[1]])),
        ("C", Relation::of_ints(&["x"], &[&[1]])),
    ];
    let src = "for x in (A.x* - B.x*) & C.x* { emit(x) }";
    let opts = ExecOptions { trace: true, ..Default::default() };
    let report = run(src, &rels, &StorageMap::default(), &opts);
    assert!(report.output.same_contents(&Relation::of_ints(&["x"], &[&[1]])));

    // The not-ready alignment first advances only A and B, leaving C in
    // place; the second iteration produces from state (A, C).
    let branches: Vec<&TraceEvent> = report
        .trace
        .iter()
        .filter(|e| matches!(e, TraceEvent::Branch { .. }))
        .collect();
    match branches[0] {
        TraceEvent::Branch { action, advanced, .. } => {
            assert_eq!(*action, "not-ready");
            assert_eq!(advanced.clone(), vec!["A.x".to_string(), "B.x".to_string()]);
        }
        _ => unreachable!(),
    }
    match branches[1] {
        TraceEvent::Branch { action, value, .. } => {
            assert_eq!(*action, "produce");
            assert_eq!(*value, Value::Int(1));
        }
        _ => unreachable!(),
    }
}

#[test]
fn left_join_template_with_index_only_and_union_empty() {
    let src = r#"
for x in A.x {
  for y in A.y(B.y!) {
    for z in B.z | null {
      for d in (A >< B) | A {
        emit(x, y, z)
      }
    }
  }
}
"#;
    let out = run_plain(src, &fig_inputs());
    let mut want = Relation::of_ints(&["x", "y", "z"], &[&[2, 2, 3]]);
    want.insert(Tuple::new(vec![Value::Int(1), Value::Int(1), Value::Null])).unwrap();
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn full_outer_join_template() {
    // Join attributes outermost: A stored as (y, x).
    let mut storage = StorageMap::default();
    storage.insert("A", relfuse::storage::StorageDescription::with_order(&["y", "x"]));
    let src = r#"
for y in ((A.y! | B.y!) + (A.y & { v | v is null }) + (B.y & { v | v is null })) {
  for x in A.x | null {
    for z in B.z | null {
      for d in ((A >< B) | A) | B {
        emit(x, y, z)
      }
    }
  }
}
"#;
    let report = run(src, &fig_inputs(), &storage, &ExecOptions::default());
    let mut want = Relation::of_ints(&["x", "y", "z"], &[&[2, 2, 3]]);
    want.insert(Tuple::new(vec![Value::Int(1), Value::Int(1), Value::Null])).unwrap();
    want.insert(Tuple::new(vec![Value::Null, Value::Int(3), Value::Int(4)])).unwrap();
    assert!(report.output.same_contents(&want), "got {:?}", report.output.sorted_rows());
}

#[test]
fn join_difference_dups_counts() {
    // Per-key counts 2 * 3 - 1 = 5 through the duplicate loop.
    let a = Relation::of_ints(&["x", "y"], &[&[1, 1], &[1, 1]]);
    let b = Relation::of_ints(&["y", "z"], &[&[1, 2], &[1, 2], &[1, 2]]);
    let c = Relation::of_ints(&["x", "y", "z"], &[&[1, 1, 2]]);
    let src = r#"
for x in A.x(C.x!) {
  for y in (A.y! & B.y!)(C.y!) {
    for z in B.z(C.z!) {
      for d in (A >< B) - C {
        emit(x, y, z)
      }
    }
  }
}
"#;
    let out = run_plain(src, &[("A", a), ("B", b), ("C", c)]);
    assert_eq!(out.cardinality(), 5);
}

#[test]
fn precompute_filter_into_temporary() {
    // T(x, y) = filter of A on x*x + y*y == 25, then join with B on y.
    let a = Relation::of_ints(&["x", "y"], &[&[3, 4], &[4, 3], &[1, 1]]);
    let b = Relation::of_ints(&["y", "z"], &[&[4, 9], &[3, 7]]);
    let src = r#"
let T(y, x) {
  for x in A.x {
    for y in A.y & { y | ((x * x) + (y * y)) == 25 } {
      for d in A {
        emit(y, x)
      }
    }
  }
} in {
  for y in T.y! & B.y! {
    for z in B.z {
      for x in T.x {
        for d in T >< B {
          emit(x, y, z)
        }
      }
    }
  }
}
"#;
    let out = run_plain(src, &[("A", a), ("B", b)]);
    let want = Relation::of_ints(&["x", "y", "z"], &[&[3, 4, 9], &[4, 3, 7]]);
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn aggregation_into_related_values() {
    // T keyed by y with sum of x as payload, then joined with B.
    let a = Relation::of_ints(&["x", "y"], &[&[1, 2], &[4, 2], &[5, 9]]);
    let b = Relation::of_ints(&["y", "z"], &[&[2, 6]]);
    let src = r#"
let T(y, sx) related(sx) pk(1) {
  for x in A.x {
    for y in A.y {
      for d in A {
        T[y].sx += x
      }
    }
  }
} in {
  for y in T.y! & B.y! {
    for z in B.z {
      emit(T.sx, y, z)
    }
  }
}
"#;
    let out = run_plain(src, &[("A", a), ("B", b)]);
    let want = Relation::of_ints(&["sx", "y", "z"], &[&[5, 2, 6]]);
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn triangle_query_small() {
    // Triangle edges over a 4-cycle plus a chord.
    let edges: &[&[i64]] = &[&[1, 2], &[2, 3], &[1, 3], &[3, 4], &[1, 4]];
    let a = Relation::of_ints(&["a", "b"], edges);
    let b = Relation::of_ints(&["b", "c"], edges);
    let c = Relation::of_ints(&["a", "c"], edges);
    let src = r#"
for a in A.a! & C.a! {
  for b in A.b! & B.b! {
    for c in B.c! & C.c! {
      for d in (A >< B) >< C {
        emit(a, b, c)
      }
    }
  }
}
"#;
    let out = run_plain(src, &[("A", a), ("B", b), ("C", c)]);
    // Triangles: (1,2,3), (1,3,4).
    let want = Relation::of_ints(&["a", "b", "c"], &[&[1, 2, 3], &[1, 3, 4]]);
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn galloping_toggle_preserves_results() {
    let rels = vec![
        ("A", Relation::of_ints(&["x"], &[&[1], &[5], &[900]])),
        ("B", Relation::of_ints(&["x"], (1..=1000).map(|i| vec![i]).collect::<Vec<_>>().iter().map(|v| v.as_slice()).collect::<Vec<_>>().as_slice())),
    ];
    let src = "for x in A.x & B.x { emit(x) }";
    let on = run(src, &rels, &StorageMap::default(), &ExecOptions::default());
    let off = run(
        src,
        &rels,
        &StorageMap::default(),
        &ExecOptions { galloping: false, ..Default::default() },
    );
    assert!(on.output.same_contents(&off.output));
    assert!(
        on.stats.cursor_ops() < off.stats.cursor_ops() / 5,
        "galloping {} vs merge {}",
        on.stats.cursor_ops(),
        off.stats.cursor_ops()
    );
}

#[test]
fn complement_with_universe_range() {
    let rels = vec![("A", Relation::of_ints(&["x"], &[&[2], &[4]]))];
    let src = "for x in ~A.x universe range(1, 5) { emit(x) }";
    let out = run_plain(src, &rels);
    let want = Relation::of_ints(&["x"], &[&[1], &[3], &[5]]);
    assert!(out.same_contents(&want), "got {:?}", out.sorted_rows());
}

#[test]
fn lemma4_trace_clean_on_union() {
    let rels = vec![
        ("A", Relation::of_ints(&["x"], &[&[1], &[3]])),
        ("B", Relation::of_ints(&["x"], &[&[2], &[3]])),
        ("C", Relation::of_ints(&["x"], &[&[0], &[9]])),
    ];
    let src = "for x in (A.x & B.x) | C.x { emit(x) }";
    let opts = ExecOptions { trace: true, ..Default::default() };
    let report = run(src, &rels, &StorageMap::default(), &opts);
    assert_eq!(report.lemma4_violations, 0);
    let want = Relation::of_ints(&["x"], &[&[0], &[3], &[9]]);
    assert!(report.output.same_contents(&want));
}
