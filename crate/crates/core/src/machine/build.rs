//! Machine constructors: the segment rule, the complement rule, the product
//! construction for binary operators, and index-only re-introduction.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{Behavior, InputId, InputSet, IterationMachine, MachineError, Node, NodeLabel};

/// Multiset operator as seen by the product construction. Difference
/// distinguishes set semantics (both operands have unique values), where
/// aligned producers cancel to an omitter so that complement stays
/// well-defined, from multiset semantics, where they become not-ready.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsBinOp {
    Union,
    Intersect,
    Difference { set_semantics: bool },
    Concat,
    Product,
}

/// Machine for a single input: `(A)` produces, `()` ends iteration.
pub fn segment(id: InputId) -> IterationMachine {
    let nodes = vec![
        Node {
            label: NodeLabel::singleton(id),
            behavior: Behavior::Producer { advance: InputSet::from([id]) },
            tags: InputSet::new(),
        },
        Node { label: NodeLabel::empty(), behavior: Behavior::Omitter, tags: InputSet::new() },
    ];
    IterationMachine::from_nodes(nodes, InputSet::from([id]))
}

/// Reverse producer and omitter behaviors; only defined over set semantics.
pub fn complement(m: &IterationMachine) -> Result<IterationMachine, MachineError> {
    let mut nodes = Vec::with_capacity(m.nodes().len());
    for n in m.nodes() {
        let behavior = match &n.behavior {
            Behavior::Producer { .. } => Behavior::Omitter,
            Behavior::Omitter => Behavior::Producer { advance: n.label.inputs() },
            Behavior::NotReady { .. } => return Err(MachineError::ComplementOfMultiset),
        };
        nodes.push(Node { label: n.label.clone(), behavior, tags: n.tags.clone() });
    }
    Ok(IterationMachine::from_nodes(nodes, m.universe().clone()))
}

fn combine(op: MsBinOp, b1: &Behavior, b2: &Behavior) -> Behavior {
    use Behavior::*;
    let isect_like = matches!(op, MsBinOp::Intersect | MsBinOp::Product);
    match (b1, b2) {
        (NotReady { advance: a1 }, NotReady { advance: a2 }) => {
            NotReady { advance: a1.union(a2).copied().collect() }
        }
        // The one exception: a missing intersection side wins over not-ready.
        (NotReady { .. }, Omitter) | (Omitter, NotReady { .. }) if isect_like => Omitter,
        (NotReady { advance }, _) | (_, NotReady { advance }) => {
            NotReady { advance: advance.clone() }
        }
        (Producer { advance: a1 }, Producer { advance: a2 }) => match op {
            MsBinOp::Union | MsBinOp::Intersect | MsBinOp::Product => {
                Producer { advance: a1.union(a2).copied().collect() }
            }
            // Disjoint union visits the left operand's copy first.
            MsBinOp::Concat => Producer { advance: a1.clone() },
            MsBinOp::Difference { set_semantics: true } => Omitter,
            MsBinOp::Difference { set_semantics: false } => {
                NotReady { advance: a1.union(a2).copied().collect() }
            }
        },
        (Producer { advance }, Omitter) => match op {
            MsBinOp::Union | MsBinOp::Concat | MsBinOp::Difference { .. } => {
                Producer { advance: advance.clone() }
            }
            MsBinOp::Intersect | MsBinOp::Product => Omitter,
        },
        (Omitter, Producer { advance }) => match op {
            MsBinOp::Union | MsBinOp::Concat => Producer { advance: advance.clone() },
            MsBinOp::Intersect | MsBinOp::Product | MsBinOp::Difference { .. } => Omitter,
        },
        (Omitter, Omitter) => Omitter,
    }
}

/// Breadth-first product construction over two machines with disjoint
/// input spaces.
pub fn product(m1: &IterationMachine, m2: &IterationMachine, op: MsBinOp) -> IterationMachine {
    let universe: InputSet = m1.universe().union(m2.universe()).copied().collect();
    let mut queue: VecDeque<(InputSet, InputSet)> = VecDeque::new();
    let mut seen_pairs: BTreeSet<(InputSet, InputSet)> = BTreeSet::new();
    let mut by_inputs: HashMap<InputSet, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();

    let start = (m1.universe().clone(), m2.universe().clone());
    seen_pairs.insert(start.clone());
    queue.push_back(start);

    while let Some((u1, u2)) = queue.pop_front() {
        let n1 = m1.node_by_inputs(&u1).expect("floored label");
        let n2 = m2.node_by_inputs(&u2).expect("floored label");
        let label = if op == MsBinOp::Product {
            n1.label.cross(&n2.label)
        } else {
            n1.label.union(&n2.label)
        };
        let inputs = label.inputs();
        if !by_inputs.contains_key(&inputs) {
            by_inputs.insert(inputs.clone(), nodes.len());
            nodes.push(Node {
                label,
                behavior: combine(op, &n1.behavior, &n2.behavior),
                tags: n1.tags.union(&n2.tags).copied().collect(),
            });
        }
        for &r in &inputs {
            let mut t1 = u1.clone();
            t1.remove(&r);
            let mut t2 = u2.clone();
            t2.remove(&r);
            let v1 = m1.floor(&t1).label.inputs();
            let v2 = m2.floor(&t2).label.inputs();
            let pair = (v1, v2);
            if seen_pairs.insert(pair.clone()) {
                queue.push_back(pair);
            }
        }
    }
    // The all-empty pair is always reachable, but make the bottom explicit
    // even for degenerate operand machines.
    if !by_inputs.contains_key(&InputSet::new()) {
        nodes.push(Node {
            label: NodeLabel::empty(),
            behavior: combine(
                op,
                &m1.floor(&InputSet::new()).behavior,
                &m2.floor(&InputSet::new()).behavior,
            ),
            tags: InputSet::new(),
        });
    }
    IterationMachine::from_nodes(nodes, universe)
}

/// Expand index-only tags: for each tagged node `u` with tags `N`, add a
/// node `u ∪ n` for every non-empty `n ⊆ N`, interpreting it as the
/// pre-expansion machine interprets `floor(u ∪ n)`. The bottom node is
/// never tagged or expanded.
pub fn reintroduce_index_only(m: &IterationMachine) -> IterationMachine {
    let mut universe = m.universe().clone();
    let mut nodes: Vec<Node> = Vec::new();
    let mut seen: BTreeSet<InputSet> = BTreeSet::new();
    for n in m.nodes() {
        seen.insert(n.label.inputs());
        nodes.push(Node { label: n.label.clone(), behavior: n.behavior.clone(), tags: InputSet::new() });
    }
    for n in m.nodes() {
        if n.tags.is_empty() {
            continue;
        }
        universe.extend(n.tags.iter().copied());
        let tags: Vec<InputId> = n.tags.iter().copied().collect();
        assert!(tags.len() <= 16, "index-only tag set too large");
        for mask in 1u32..(1 << tags.len()) {
            let subset: InputSet = tags
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &id)| id)
                .collect();
            let label = n.label.with_inputs(&subset);
            if !seen.insert(label.inputs()) {
                continue;
            }
            let behavior = m.floor(&label.inputs()).behavior.clone();
            nodes.push(Node { label, behavior, tags: InputSet::new() });
        }
    }
    IterationMachine::from_nodes(nodes, universe)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(ids: &[InputId]) -> InputSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn segment_has_two_nodes() {
        let m = segment(0);
        assert_eq!(m.nodes().len(), 2);
        assert!(matches!(m.interpret(&inputs(&[0])), Behavior::Producer { advance } if advance == &inputs(&[0])));
        assert!(matches!(m.interpret(&inputs(&[])), Behavior::Omitter));
        m.check_structure().unwrap();
    }

    #[test]
    fn complement_swaps_and_is_involutive() {
        let m = segment(0);
        let c = complement(&m).unwrap();
        assert!(matches!(c.interpret(&inputs(&[0])), Behavior::Omitter));
        assert!(c.interpret(&inputs(&[])).is_producer());
        let cc = complement(&c).unwrap();
        for p in [inputs(&[]), inputs(&[0])] {
            assert_eq!(m.interpret(&p), cc.interpret(&p));
        }
    }

    #[test]
    fn concat_advances_left_side_only() {
        let m = product(&segment(0), &segment(1), MsBinOp::Concat);
        match m.interpret(&inputs(&[0, 1])) {
            Behavior::Producer { advance } => assert_eq!(advance, &inputs(&[0])),
            b => panic!("expected producer, got {b:?}"),
        }
    }

    #[test]
    fn product_label_is_cross() {
        let m = product(&segment(0), &segment(1), MsBinOp::Product);
        let init = m.initial();
        assert_eq!(init.label.products().len(), 1);
        assert!(init.label.products().contains(&inputs(&[0, 1])));
        assert!(init.behavior.is_producer());
        m.check_structure().unwrap();
    }
}
