//! Compiling a loop-domain expression into its iteration machine: leaf
//! enumeration (one cursor per leaf occurrence), bottom-up construction,
//! minimization, index-only re-introduction, and legalization.

use crate::alir::ast::{LevelRef, MsSetOp, MultisetExpr};
use crate::machine::{
    self, InputId, InputSet, IterationMachine, MachineError, MsBinOp,
};
use crate::storage::Capability;

/// One enumerated input of a domain.
#[derive(Debug, Clone)]
pub struct DomainLeaf {
    pub expr: MultisetExpr,
    pub iterate: bool,
    pub lookup: bool,
    /// Input that only gates branches, introduced by `base(extras)`.
    pub index_only: bool,
}

/// Machine for one index-only extra, used to decide whether the extra is
/// matched (and its relation descended) in a given branch.
#[derive(Debug, Clone)]
pub struct ExtraGroup {
    pub machine: IterationMachine,
    pub inputs: InputSet,
}

#[derive(Debug, Clone)]
pub struct DomainMachine {
    pub machine: IterationMachine,
    /// The domain with any `| null` wrapper stripped. Leaf ids follow its
    /// depth-first order (base before extras).
    pub expr: MultisetExpr,
    pub leaves: Vec<DomainLeaf>,
    pub union_empty: bool,
    pub universe: Option<(InputId, i64, i64)>,
    pub extras: Vec<ExtraGroup>,
}

impl DomainMachine {
    pub fn iterable_inputs(&self) -> InputSet {
        let mut out: InputSet = self
            .leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.iterate)
            .map(|(i, _)| i as InputId)
            .collect();
        if let Some((u, _, _)) = self.universe {
            out.insert(u);
        }
        out
    }
}

/// Errors carry plain strings; the validator turns them into diagnostics
/// and the lowerer into hard errors.
pub fn build_domain(
    domain: &MultisetExpr,
    caps_of: &dyn Fn(&LevelRef) -> Result<Capability, String>,
    universe: Option<(i64, i64)>,
) -> Result<DomainMachine, String> {
    let (base, union_empty) = domain.split_union_empty();
    let mut b = Builder { caps_of, leaves: Vec::new(), extras: Vec::new() };
    let m = b.build(base, false)?;
    let m = machine::minimize(&m);
    let m = machine::reintroduce_index_only(&m);

    let mut iterable: InputSet = b
        .leaves
        .iter()
        .enumerate()
        .filter(|(_, l)| l.iterate)
        .map(|(i, _)| i as InputId)
        .collect();
    let universe_id = b.leaves.len() as InputId;
    let m = machine::legalize(&m, &iterable, universe.map(|_| universe_id))
        .map_err(|e| e.to_string())?;
    let universe = match (m.universe_input(), universe) {
        (Some(id), Some((lo, hi))) => {
            iterable.insert(id);
            Some((id, lo, hi))
        }
        _ => None,
    };

    Ok(DomainMachine {
        machine: m,
        expr: base.clone(),
        leaves: b.leaves,
        union_empty,
        universe,
        extras: b.extras,
    })
}

struct Builder<'a> {
    caps_of: &'a dyn Fn(&LevelRef) -> Result<Capability, String>,
    leaves: Vec<DomainLeaf>,
    extras: Vec<ExtraGroup>,
}

impl Builder<'_> {
    fn leaf(&mut self, expr: &MultisetExpr, index_only: bool) -> Result<InputId, String> {
        let (iterate, lookup) = match expr {
            MultisetExpr::Level(r) => {
                let cap = (self.caps_of)(r)?;
                (cap.can_iterate(), cap.can_lookup())
            }
            MultisetExpr::DupCounter { .. } => (true, true),
            MultisetExpr::Predicate { .. } => (false, true),
            MultisetExpr::Singleton(_) => (true, true),
            MultisetExpr::Range { .. } => (true, true),
            _ => unreachable!("leaf() called on non-leaf"),
        };
        let id = self.leaves.len() as InputId;
        self.leaves.push(DomainLeaf { expr: expr.clone(), iterate, lookup, index_only });
        Ok(id)
    }

    fn build(&mut self, e: &MultisetExpr, index_only: bool) -> Result<IterationMachine, String> {
        match e {
            MultisetExpr::Level(_)
            | MultisetExpr::DupCounter { .. }
            | MultisetExpr::Predicate { .. }
            | MultisetExpr::Singleton(_)
            | MultisetExpr::Range { .. } => {
                let id = self.leaf(e, index_only)?;
                Ok(machine::segment(id))
            }
            MultisetExpr::Binop { op, lhs, rhs } => {
                if *op == MsSetOp::Difference && !e.is_set_semantics() {
                    for (side, name) in [(lhs, "left"), (rhs, "right")] {
                        if !self.side_has_iterator(side)? {
                            return Err(format!(
                                "multiset difference needs an iterate-capable input on the {name} side"
                            ));
                        }
                    }
                }
                let set_semantics = lhs.is_set_semantics() && rhs.is_set_semantics();
                let m1 = self.build(lhs, index_only)?;
                let m2 = self.build(rhs, index_only)?;
                let op = match op {
                    MsSetOp::Union => MsBinOp::Union,
                    MsSetOp::Intersect => MsBinOp::Intersect,
                    MsSetOp::Difference => MsBinOp::Difference { set_semantics },
                    MsSetOp::Concat => MsBinOp::Concat,
                    MsSetOp::Product => MsBinOp::Product,
                };
                Ok(machine::product(&m1, &m2, op))
            }
            MultisetExpr::IndexOnly { base, extras } => {
                let m = self.build(base, index_only)?;
                let mut tag_set = InputSet::new();
                for extra in extras {
                    if contains_index_only(extra) {
                        return Err("nested index-only inside an extra is not supported".into());
                    }
                    let em = self.build(extra, true)?;
                    let inputs = em.universe().clone();
                    tag_set.extend(inputs.iter().copied());
                    self.extras.push(ExtraGroup { machine: machine::minimize(&em), inputs });
                }
                Ok(m.tag_non_bottom(&tag_set))
            }
            MultisetExpr::Complement(base) => {
                if contains_index_only(base) {
                    return Err("complement over an index-only expression is not supported".into());
                }
                if !base.is_set_semantics() {
                    return Err(MachineError::ComplementOfMultiset.to_string());
                }
                let m = self.build(base, index_only)?;
                machine::complement(&m).map_err(|e| e.to_string())
            }
            MultisetExpr::UnionEmpty(_) => {
                Err("`| null` is only allowed outermost in a loop domain".into())
            }
        }
    }

    fn side_has_iterator(&self, e: &MultisetExpr) -> Result<bool, String> {
        let mut found = false;
        let mut err = None;
        e.for_each_leaf(&mut |leaf| {
            if found || err.is_some() {
                return;
            }
            let it = match leaf {
                MultisetExpr::Level(r) => match (self.caps_of)(r) {
                    Ok(cap) => cap.can_iterate(),
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                },
                MultisetExpr::Predicate { .. } => false,
                _ => true,
            };
            found |= it;
        });
        match err {
            Some(e) => Err(e),
            None => Ok(found),
        }
    }
}

fn contains_index_only(e: &MultisetExpr) -> bool {
    match e {
        MultisetExpr::IndexOnly { .. } => true,
        MultisetExpr::Binop { lhs, rhs, .. } => {
            contains_index_only(lhs) || contains_index_only(rhs)
        }
        MultisetExpr::UnionEmpty(b) | MultisetExpr::Complement(b) => contains_index_only(b),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alir::text::parse_program;
    use crate::alir::AlirStmt;
    use crate::machine::Behavior;

    fn domain_of(src: &str) -> MultisetExpr {
        let prog = parse_program(src).unwrap();
        match prog.stmts.into_iter().next().unwrap() {
            AlirStmt::For { domain, .. } => domain,
            _ => panic!(),
        }
    }

    fn all_both(_: &LevelRef) -> Result<Capability, String> {
        Ok(Capability::Both)
    }

    fn inputs(ids: &[u32]) -> InputSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn intersect_union_machine_matches_expected_states() {
        // (A & B) | C: four states.
        let d = domain_of("for x in (A.x & B.x) | C.x { emit(x) }");
        let dm = build_domain(&d, &all_both, None).unwrap();
        let m = &dm.machine;
        assert_eq!(m.nodes().len(), 4);
        for p in [vec![0, 1, 2], vec![0, 1], vec![2], vec![]] {
            assert!(m.node_by_inputs(&p.iter().map(|&i| i as u32).collect()).is_some());
        }
        // Transition checks: drop C from the top lands on (A,B); drop A lands on (C).
        let top = m.initial();
        assert_eq!(m.transition(top, 2).label.inputs(), inputs(&[0, 1]));
        assert_eq!(m.transition(top, 0).label.inputs(), inputs(&[2]));
        m.check_structure().unwrap();
    }

    #[test]
    fn difference_intersect_machine_matches_expected_behaviors() {
        // (A - B) & C over multisets: I(A,B,C) = not-ready(A,B), I(A,C) = produce.
        let d = domain_of("for x in (A.x* - B.x*) & C.x* { emit(x) }");
        let dm = build_domain(&d, &all_both, None).unwrap();
        let m = &dm.machine;
        assert_eq!(m.nodes().len(), 3);
        match m.interpret(&inputs(&[0, 1, 2])) {
            Behavior::NotReady { advance } => assert_eq!(advance, &inputs(&[0, 1])),
            b => panic!("expected not-ready, got {b:?}"),
        }
        assert!(m.interpret(&inputs(&[0, 2])).is_producer());
        assert!(matches!(m.interpret(&inputs(&[])), Behavior::Omitter));
    }

    #[test]
    fn index_only_reintroduction_adds_states() {
        let d = domain_of("for y in A.y(B.y) { emit(y) }");
        let dm = build_domain(&d, &all_both, None).unwrap();
        let m = &dm.machine;
        assert!(m.node_by_inputs(&inputs(&[0])).is_some());
        assert!(m.node_by_inputs(&inputs(&[0, 1])).is_some());
        assert_eq!(dm.extras.len(), 1);
    }

    #[test]
    fn multiple_cursors_for_repeated_relation() {
        // (A - B) | (C - A): the two A occurrences get distinct cursor ids.
        let d = domain_of("for x in (A.x* - B.x*) | (C.x* - A.x*) { emit(x) }");
        let dm = build_domain(&d, &all_both, None).unwrap();
        assert_eq!(dm.leaves.len(), 4);
        // State (A0, C, A3): right side not-ready advances only C and the
        // right-hand A cursor.
        match dm.machine.interpret(&inputs(&[0, 2, 3])) {
            Behavior::NotReady { advance } => assert_eq!(advance, &inputs(&[2, 3])),
            b => panic!("expected not-ready, got {b:?}"),
        }
    }

    #[test]
    fn complement_needs_universe() {
        let d = domain_of("for x in ~A.x { emit(x) }");
        assert!(build_domain(&d, &all_both, None).is_err());
        let dm = build_domain(&d, &all_both, Some((1, 10))).unwrap();
        assert!(dm.universe.is_some());
    }
}
