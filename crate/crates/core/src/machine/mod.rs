//! Iteration machines: DFAs over the inputs of a multiset expression whose
//! states drive both the sequence of generated loops and per-iteration case
//! handling.
//!
//! A machine's nodes are labeled with sets of products of inputs (a plain
//! input is a singleton product), the initial node carries every input, the
//! transition on input `x` from node `n` is `floor(n - {x})`, and the node
//! set is closed under label union.

mod build;
mod dump;
mod legalize;
mod minimize;

pub use build::{complement, product, reintroduce_index_only, segment, MsBinOp};
pub use dump::{dump_dot, dump_text};
pub use legalize::{is_legal, legalize};
pub use minimize::{is_minimal, minimize};

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub type InputId = u32;
pub type InputSet = BTreeSet<InputId>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("complement over an expression with multiset semantics")]
    ComplementOfMultiset,
    #[error("domain has no iterable input and no iterable universe")]
    IllegalNotLegalizable,
}

/// A node label: a set of products over input ids. Equality is set equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeLabel {
    products: BTreeSet<InputSet>,
}

impl NodeLabel {
    pub fn empty() -> NodeLabel {
        NodeLabel::default()
    }

    pub fn singleton(id: InputId) -> NodeLabel {
        let mut p = BTreeSet::new();
        p.insert(BTreeSet::from([id]));
        NodeLabel { products: p }
    }

    pub fn from_products(products: BTreeSet<InputSet>) -> NodeLabel {
        NodeLabel { products: products.into_iter().filter(|p| !p.is_empty()).collect() }
    }

    pub fn products(&self) -> &BTreeSet<InputSet> {
        &self.products
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    /// Union of all products: the inputs this label co-iterates.
    pub fn inputs(&self) -> InputSet {
        self.products.iter().flatten().copied().collect()
    }

    pub fn union(&self, other: &NodeLabel) -> NodeLabel {
        NodeLabel { products: self.products.union(&other.products).cloned().collect() }
    }

    /// Add a set of plain inputs as singleton products.
    pub fn with_inputs(&self, extra: &InputSet) -> NodeLabel {
        let mut products = self.products.clone();
        for &id in extra {
            products.insert(BTreeSet::from([id]));
        }
        NodeLabel { products }
    }

    /// Cross product of two labels: every pair of products fuses into one.
    pub fn cross(&self, other: &NodeLabel) -> NodeLabel {
        let mut products = BTreeSet::new();
        for a in &self.products {
            for b in &other.products {
                products.insert(a.union(b).copied().collect());
            }
        }
        NodeLabel { products }
    }
}

/// What a state does when the current value falls into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Behavior {
    /// Run the body, then advance the given inputs.
    Producer { advance: InputSet },
    /// Skip the value; every iterator in the state advances.
    Omitter,
    /// Misaligned difference: advance only the involved inputs and retry.
    NotReady { advance: InputSet },
}

impl Behavior {
    pub fn is_producer(&self) -> bool {
        matches!(self, Behavior::Producer { .. })
    }

    pub fn is_not_ready(&self) -> bool {
        matches!(self, Behavior::NotReady { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub label: NodeLabel,
    pub behavior: Behavior,
    /// Index-only inputs pending re-introduction.
    pub tags: InputSet,
}

/// The machine itself. Transitions are derived (`floor(n - {x})`), not
/// stored; construction keeps a separate edge list for minimization.
#[derive(Debug, Clone)]
pub struct IterationMachine {
    nodes: Vec<Node>,
    by_inputs: HashMap<InputSet, usize>,
    universe: InputSet,
    /// Extra input appended by legalization, if any.
    universe_input: Option<InputId>,
}

impl IterationMachine {
    pub(crate) fn from_nodes(nodes: Vec<Node>, universe: InputSet) -> IterationMachine {
        let mut by_inputs = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            let prev = by_inputs.insert(n.label.inputs(), i);
            assert!(prev.is_none(), "duplicate node label {:?}", n.label);
        }
        IterationMachine { nodes, by_inputs, universe, universe_input: None }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn universe(&self) -> &InputSet {
        &self.universe
    }

    pub fn universe_input(&self) -> Option<InputId> {
        self.universe_input
    }

    pub(crate) fn set_universe_input(&mut self, id: InputId) {
        self.universe_input = Some(id);
    }

    pub fn node_by_inputs(&self, inputs: &InputSet) -> Option<&Node> {
        self.by_inputs.get(inputs).map(|&i| &self.nodes[i])
    }

    pub fn initial(&self) -> &Node {
        self.node_by_inputs(&self.universe).expect("initial node exists")
    }

    pub fn bottom(&self) -> &Node {
        self.node_by_inputs(&InputSet::new()).expect("bottom node exists")
    }

    /// The unique floor node of a membership pattern: the union of all node
    /// labels whose inputs are contained in `p`.
    pub fn floor(&self, p: &InputSet) -> &Node {
        let mut label = NodeLabel::empty();
        for n in &self.nodes {
            if n.label.inputs().is_subset(p) {
                label = label.union(&n.label);
            }
        }
        self.node_by_inputs(&label.inputs())
            .expect("floor label is a node (closure under union)")
    }

    /// `[[M]](p) = I(floor(p))`.
    pub fn interpret(&self, p: &InputSet) -> &Behavior {
        &self.floor(p).behavior
    }

    /// Transition: drop input `x` from node `n`.
    pub fn transition(&self, n: &Node, x: InputId) -> &Node {
        let mut inputs = n.label.inputs();
        inputs.remove(&x);
        self.floor(&inputs)
    }

    /// Nodes reachable from `n` (those whose inputs are contained in `n`'s),
    /// in topological order: more inputs first, ties by label.
    pub fn reachable_from(&self, n: &Node) -> Vec<&Node> {
        let from = n.label.inputs();
        let mut out: Vec<&Node> = self
            .nodes
            .iter()
            .filter(|m| m.label.inputs().is_subset(&from))
            .collect();
        out.sort_by(|a, b| {
            let (ai, bi) = (a.label.inputs(), b.label.inputs());
            bi.len().cmp(&ai.len()).then_with(|| ai.cmp(&bi))
        });
        out
    }

    /// All nodes in topological order (supersets first, ties by label).
    pub fn topo_nodes(&self) -> Vec<&Node> {
        let mut out: Vec<&Node> = self.nodes.iter().collect();
        out.sort_by(|a, b| {
            let (ai, bi) = (a.label.inputs(), b.label.inputs());
            bi.len().cmp(&ai.len()).then_with(|| ai.cmp(&bi))
        });
        out
    }

    /// Tag every non-bottom node with additional index-only inputs, for
    /// later re-introduction.
    pub fn tag_non_bottom(&self, tags: &InputSet) -> IterationMachine {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                label: n.label.clone(),
                behavior: n.behavior.clone(),
                tags: if n.label.is_empty() {
                    n.tags.clone()
                } else {
                    n.tags.union(tags).copied().collect()
                },
            })
            .collect();
        IterationMachine::from_nodes(nodes, self.universe.clone())
    }

    /// Check the structural properties. Returns the first violation found;
    /// run by tests after every construction step.
    pub fn check_structure(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.label.clone()) {
                return Err(format!("duplicate label {:?}", n.label));
            }
        }
        if self.node_by_inputs(&self.universe).is_none() {
            return Err("initial node missing".into());
        }
        if self.node_by_inputs(&InputSet::new()).is_none() {
            return Err("bottom node missing".into());
        }
        for n in &self.nodes {
            let inputs = n.label.inputs();
            for &x in &inputs {
                let mut target = inputs.clone();
                target.remove(&x);
                let dst = self.floor(&target);
                let dsti = dst.label.inputs();
                if !dsti.is_subset(&target) {
                    return Err(format!(
                        "transition adds inputs: {inputs:?} -{x}-> {dsti:?}"
                    ));
                }
                for s in &self.nodes {
                    let si = s.label.inputs();
                    if si.is_subset(&target) && dsti.is_subset(&si) && si != dsti {
                        return Err(format!(
                            "intermediate state {si:?} between {inputs:?} and {dsti:?}"
                        ));
                    }
                }
            }
        }
        for a in &self.nodes {
            for b in &self.nodes {
                let u = a.label.union(&b.label);
                if self.node_by_inputs(&u.inputs()).is_none() {
                    return Err(format!(
                        "union of {:?} and {:?} is not a node",
                        a.label, b.label
                    ));
                }
            }
        }
        Ok(())
    }
}
