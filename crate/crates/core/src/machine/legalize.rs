//! Legality: a machine can generate loops only if its bottom node is not a
//! producer and every other node has at least one iterate-capable input.
//! Illegal machines are legalized by co-iterating a universal set.

use super::{Behavior, InputId, InputSet, IterationMachine, MachineError, Node, NodeLabel};

pub fn is_legal(m: &IterationMachine, iterable: &InputSet) -> bool {
    if m.bottom().behavior.is_producer() {
        return false;
    }
    m.nodes().iter().all(|n| {
        n.label.is_empty() || n.label.inputs().iter().any(|id| iterable.contains(id))
    })
}

/// Augment every node with the universal set input and append a fresh
/// (unreachable) omitter bottom. `universe` is the input id to use for the
/// universal layer; `None` means no iterable universe exists.
pub fn legalize(
    m: &IterationMachine,
    iterable: &InputSet,
    universe: Option<InputId>,
) -> Result<IterationMachine, MachineError> {
    if is_legal(m, iterable) {
        return Ok(m.clone());
    }
    let u = universe.ok_or(MachineError::IllegalNotLegalizable)?;
    let extra = InputSet::from([u]);
    let mut nodes: Vec<Node> = m
        .nodes()
        .iter()
        .map(|n| {
            let behavior = match &n.behavior {
                Behavior::Producer { advance } => Behavior::Producer {
                    advance: advance.union(&extra).copied().collect(),
                },
                // The universe must not skip values during alignment.
                Behavior::NotReady { advance } => Behavior::NotReady { advance: advance.clone() },
                Behavior::Omitter => Behavior::Omitter,
            };
            Node { label: n.label.with_inputs(&extra), behavior, tags: n.tags.clone() }
        })
        .collect();
    nodes.push(Node { label: NodeLabel::empty(), behavior: Behavior::Omitter, tags: InputSet::new() });
    let mut universe_set = m.universe().clone();
    universe_set.insert(u);
    let mut out = IterationMachine::from_nodes(nodes, universe_set);
    out.set_universe_input(u);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{complement, segment};

    fn inputs(ids: &[u32]) -> InputSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn legal_machine_is_unchanged() {
        let m = segment(0);
        let out = legalize(&m, &inputs(&[0]), Some(9)).unwrap();
        assert_eq!(out.nodes().len(), m.nodes().len());
        assert!(out.universe_input().is_none());
    }

    #[test]
    fn complement_legalizes_with_universe() {
        let m = complement(&segment(0)).unwrap();
        assert!(!is_legal(&m, &inputs(&[0])));
        let out = legalize(&m, &inputs(&[0]), Some(1)).unwrap();
        assert_eq!(out.universe_input(), Some(1));
        // {A,U} omits, {U} produces, new bottom omits.
        assert!(matches!(out.node_by_inputs(&inputs(&[0, 1])).unwrap().behavior, Behavior::Omitter));
        assert!(out.node_by_inputs(&inputs(&[1])).unwrap().behavior.is_producer());
        assert!(matches!(out.node_by_inputs(&inputs(&[])).unwrap().behavior, Behavior::Omitter));
        out.check_structure().unwrap();
    }

    #[test]
    fn complement_without_universe_fails() {
        let m = complement(&segment(0)).unwrap();
        assert_eq!(
            legalize(&m, &inputs(&[0]), None).unwrap_err(),
            MachineError::IllegalNotLegalizable
        );
    }

    #[test]
    fn lookup_only_domain_needs_universe() {
        let m = segment(0);
        // Input 0 is lookup-only: the single non-bottom node has no iterator.
        assert!(!is_legal(&m, &inputs(&[])));
        let out = legalize(&m, &inputs(&[]), Some(1)).unwrap();
        assert!(out.node_by_inputs(&inputs(&[0, 1])).unwrap().behavior.is_producer());
    }
}
