//! Deterministic text and dot renderings of a machine for golden tests and
//! documentation.

use std::fmt::Write;

use super::{Behavior, InputId, InputSet, IterationMachine, NodeLabel};

fn label_str(label: &NodeLabel, name: &dyn Fn(InputId) -> String) -> String {
    if label.is_empty() {
        return "()".to_string();
    }
    let parts: Vec<String> = label
        .products()
        .iter()
        .map(|p| {
            let names: Vec<String> = p.iter().map(|&id| name(id)).collect();
            names.join("*")
        })
        .collect();
    format!("({})", parts.join(", "))
}

fn set_str(set: &InputSet, name: &dyn Fn(InputId) -> String) -> String {
    let names: Vec<String> = set.iter().map(|&id| name(id)).collect();
    names.join(", ")
}

fn behavior_str(b: &Behavior, name: &dyn Fn(InputId) -> String) -> String {
    match b {
        Behavior::Producer { advance } => format!("produce(advance: {})", set_str(advance, name)),
        Behavior::Omitter => "omit".to_string(),
        Behavior::NotReady { advance } => {
            format!("not-ready(advance: {})", set_str(advance, name))
        }
    }
}

/// Topologically sorted listing of states, behaviors, and transitions.
pub fn dump_text(m: &IterationMachine, name: &dyn Fn(InputId) -> String) -> String {
    let mut out = String::new();
    for node in m.topo_nodes() {
        writeln!(
            out,
            "state {}: {}",
            label_str(&node.label, name),
            behavior_str(&node.behavior, name)
        )
        .unwrap();
        let inputs = node.label.inputs();
        for &x in &inputs {
            let dst = m.transition(node, x);
            writeln!(
                out,
                "  drop {} -> {}",
                name(x),
                label_str(&dst.label, name)
            )
            .unwrap();
        }
    }
    out
}

/// Graphviz rendering; producers are doubly circled, not-ready dashed.
pub fn dump_dot(m: &IterationMachine, name: &dyn Fn(InputId) -> String) -> String {
    let mut out = String::from("digraph machine {\n  rankdir=TB;\n");
    for node in m.topo_nodes() {
        let shape = match node.behavior {
            Behavior::Producer { .. } => "doublecircle",
            Behavior::Omitter => "circle",
            Behavior::NotReady { .. } => "circle\", style=\"dashed",
        };
        writeln!(
            out,
            "  \"{}\" [shape=\"{}\"];",
            label_str(&node.label, name),
            shape
        )
        .unwrap();
    }
    for node in m.topo_nodes() {
        let inputs = node.label.inputs();
        for &x in &inputs {
            let dst = m.transition(node, x);
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                label_str(&node.label, name),
                label_str(&dst.label, name),
                name(x)
            )
            .unwrap();
        }
    }
    out.push_str("}\n");
    out
}
