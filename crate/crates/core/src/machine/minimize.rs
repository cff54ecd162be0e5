//! Interpretation-preserving machine minimization: one reverse-topological
//! pass that removes every node whose representative below it behaves the
//! same way.

use std::collections::HashMap;

use super::{InputSet, IterationMachine, Node, NodeLabel};

/// Remove redundant nodes. A node is removable when the node that would
/// represent its patterns after removal has an identical behavior;
/// removability only flows upward, so a single bottom-up pass suffices.
pub fn minimize(m: &IterationMachine) -> IterationMachine {
    let n = m.nodes().len();
    let idx_of: HashMap<InputSet, usize> = m
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| (node.label.inputs(), i))
        .collect();

    // Derived edge multiset: one edge per (node, input) transition.
    let mut out_deg = vec![0usize; n];
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n]; // target -> sources
    for (i, node) in m.nodes().iter().enumerate() {
        let inputs = node.label.inputs();
        for &x in &inputs {
            let mut t = inputs.clone();
            t.remove(&x);
            let dst = idx_of[&m.floor(&t).label.inputs()];
            out_deg[i] += 1;
            rev[dst].push(i);
        }
    }

    // ip(v): the label of v's representative in the minimized machine.
    let mut ip: Vec<NodeLabel> = vec![NodeLabel::empty(); n];
    let mut removed = vec![false; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| out_deg[i] == 0).collect();
    while let Some(v) = queue.pop() {
        let node = &m.nodes()[v];
        if ip[v] != node.label {
            let rep = &m.nodes()[idx_of[&ip[v].inputs()]];
            if rep.behavior == node.behavior {
                removed[v] = true;
            }
        }
        // Propagate: a removed successor contributes its own representative.
        let contribution = if removed[v] { ip[v].clone() } else { node.label.clone() };
        for &u in &rev[v] {
            ip[u] = ip[u].union(&contribution);
            out_deg[u] -= 1;
            if out_deg[u] == 0 {
                queue.push(u);
            }
        }
    }

    let nodes: Vec<Node> = m
        .nodes()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(node, _)| node.clone())
        .collect();
    IterationMachine::from_nodes(nodes, m.universe().clone())
}

/// True when no node could still be removed; used by the property suite.
pub fn is_minimal(m: &IterationMachine) -> bool {
    for node in m.nodes() {
        if node.label.is_empty() {
            continue;
        }
        // Candidate representative: floor over the remaining nodes.
        let mut rep = NodeLabel::empty();
        for other in m.nodes() {
            if other.label != node.label && other.label.inputs().is_subset(&node.label.inputs()) {
                rep = rep.union(&other.label);
            }
        }
        if rep != node.label {
            if let Some(r) = m.node_by_inputs(&rep.inputs()) {
                if r.behavior == node.behavior {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{product, segment, Behavior, MsBinOp};

    fn inputs(ids: &[u32]) -> InputSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn intersection_collapses_to_two_nodes() {
        let m = product(&segment(0), &segment(1), MsBinOp::Intersect);
        // Product construction yields {(A,B),(A),(B),()}.
        assert_eq!(m.nodes().len(), 4);
        let min = minimize(&m);
        assert_eq!(min.nodes().len(), 2);
        assert!(min.node_by_inputs(&inputs(&[0, 1])).is_some());
        assert!(min.node_by_inputs(&inputs(&[])).is_some());
        min.check_structure().unwrap();
        assert!(is_minimal(&min));
        // Interpretation preserved on all subsets.
        for p in [inputs(&[]), inputs(&[0]), inputs(&[1]), inputs(&[0, 1])] {
            assert_eq!(m.interpret(&p), min.interpret(&p));
        }
    }

    #[test]
    fn minimal_machine_is_fixpoint() {
        let m = minimize(&product(&segment(0), &segment(1), MsBinOp::Union));
        let again = minimize(&m);
        assert_eq!(m.nodes().len(), again.nodes().len());
    }

    #[test]
    fn difference_keeps_not_ready_node() {
        let m = minimize(&product(&segment(0), &segment(1), MsBinOp::Difference { set_semantics: false }));
        // {(A,B) not-ready, (A) producer, ()}.
        assert_eq!(m.nodes().len(), 3);
        assert!(m.node_by_inputs(&inputs(&[0, 1])).unwrap().behavior.is_not_ready());
        assert!(m.node_by_inputs(&inputs(&[0])).unwrap().behavior.is_producer());
        assert!(matches!(m.node_by_inputs(&inputs(&[])).unwrap().behavior, Behavior::Omitter));
    }
}
