//! Lowering validated ALIR to executable loop programs and running them
//! against coordinate trees.
//!
//! The lowered form mirrors the generation algorithm directly: one concrete
//! loop per machine state with a reachable producer (supersets first), a
//! presence-branch table per loop ordered most-specific-first, a galloping
//! guard specialized per loop, and advance actions that treat product
//! labels as odometers.

pub mod emit;
pub mod exec;
pub mod lower;

pub use emit::emit_source;
pub use exec::{execute, ExecError, ExecOptions, ExecReport, ExecStats, Fault, TraceEvent};
pub use lower::{generate_loop, lower, LowerError};

use std::collections::HashMap;

use crate::alir::domain::DomainMachine;
use crate::machine::{InputId, InputSet};
use crate::relation::Schema;
use crate::scalar::{ArithOp, CmpOp};
use crate::storage::StorageDescription;
use crate::value::Value;

/// Scalar expression with names resolved to runtime slots.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledScalar {
    Const(Value),
    /// A loop-variable binding slot.
    Slot(usize),
    /// A related-value payload of a relation instance, read at its current
    /// leaf node.
    Payload { rel_slot: usize, index: usize },
    Cmp(CmpOp, Box<CompiledScalar>, Box<CompiledScalar>),
    Arith(ArithOp, Box<CompiledScalar>, Box<CompiledScalar>),
    And(Box<CompiledScalar>, Box<CompiledScalar>),
    Or(Box<CompiledScalar>, Box<CompiledScalar>),
    Not(Box<CompiledScalar>),
    IsNull(Box<CompiledScalar>),
    IsNotNull(Box<CompiledScalar>),
}

/// One runtime input of a loop domain.
#[derive(Debug, Clone)]
pub enum InputBinding {
    Level {
        rel_slot: usize,
        level: usize,
        expanded: bool,
        match_nulls: bool,
        /// Co-iterate (sorted cursor) vs membership probes only.
        iterate: bool,
        display: String,
    },
    /// Duplicate-counter tokens below the relation's node at `level`
    /// (`None` = whole relation).
    Dup { rel_slot: usize, level: Option<usize>, display: String },
    Predicate { var_slot: usize, pred: CompiledScalar, display: String },
    Singleton { expr: CompiledScalar, display: String },
    Range { lo: i64, hi: i64, display: String },
}

impl InputBinding {
    pub fn display(&self) -> &str {
        match self {
            InputBinding::Level { display, .. }
            | InputBinding::Dup { display, .. }
            | InputBinding::Predicate { display, .. }
            | InputBinding::Singleton { display, .. }
            | InputBinding::Range { display, .. } => display,
        }
    }

    pub fn is_iterator(&self) -> bool {
        match self {
            InputBinding::Level { iterate, .. } => *iterate,
            InputBinding::Predicate { .. } => false,
            _ => true,
        }
    }

    pub fn rel_slot(&self) -> Option<usize> {
        match self {
            InputBinding::Level { rel_slot, .. } | InputBinding::Dup { rel_slot, .. } => {
                Some(*rel_slot)
            }
            _ => None,
        }
    }
}

/// Compile-time galloping expression, evaluated once per loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum GallopExpr {
    NegInf,
    PosInf,
    Cur(InputId),
    Max(Box<GallopExpr>, Box<GallopExpr>),
    Min(Box<GallopExpr>, Box<GallopExpr>),
}

/// One presence branch of a concrete loop.
#[derive(Debug, Clone)]
pub struct Branch {
    /// Inputs whose presence selects this branch (tested in order, relying
    /// on fallthrough from more to less specific).
    pub inputs: InputSet,
    pub display: String,
    pub producer: bool,
    pub not_ready: bool,
    /// Iterator inputs advanced after the action.
    pub advance: InputSet,
    /// Inputs whose relations descend for the body (producers only).
    pub descend: InputSet,
    /// Product groups of this branch's label with more than one member;
    /// advanced with odometer semantics.
    pub products: Vec<Vec<InputId>>,
}

/// One generated while-loop: a machine state with a reachable producer.
#[derive(Debug, Clone)]
pub struct ConcreteLoop {
    pub state: InputSet,
    pub display: String,
    /// Iterator inputs whose validity forms the loop condition.
    pub iterators: Vec<InputId>,
    pub gallop: GallopExpr,
    pub branches: Vec<Branch>,
}

/// Lowered form of one abstract `for` loop.
#[derive(Debug)]
pub struct LoopPlan {
    pub var: String,
    pub var_slot: usize,
    pub union_empty: bool,
    pub inputs: Vec<InputBinding>,
    pub domain: DomainMachine,
    pub loops: Vec<ConcreteLoop>,
    pub body: Vec<LoweredStmt>,
}

#[derive(Debug)]
pub struct AggSpec {
    pub acc_index: usize,
    pub op: crate::alir::AssignOp,
}

#[derive(Debug)]
pub struct LetPlan {
    pub name: String,
    pub rel_slot: usize,
    pub schema: Schema,
    pub storage: StorageDescription,
    /// Set when the producer aggregates rather than emits.
    pub agg: bool,
    pub producer: Vec<LoweredStmt>,
    pub body: Vec<LoweredStmt>,
}

#[derive(Debug)]
pub enum LoweredStmt {
    Loop(Box<LoopPlan>),
    /// Append a tuple to the sink at the given stack depth.
    Emit { sink_depth: usize, exprs: Vec<CompiledScalar> },
    AggUpdate {
        sink_depth: usize,
        keys: Vec<CompiledScalar>,
        acc_index: usize,
        op: crate::alir::AssignOp,
        value: CompiledScalar,
    },
    Let(Box<LetPlan>),
}

/// Executable program: relation slots, variable slots, statement tree.
#[derive(Debug)]
pub struct LoopProgram {
    /// Base relation instances: (instance name, data name) per slot prefix.
    pub base_rels: Vec<(String, String)>,
    /// Total relation slots (bases + temporaries).
    pub rel_slots: usize,
    pub var_slots: usize,
    pub output: Schema,
    pub stmts: Vec<LoweredStmt>,
}

/// Data bound to relation names for execution.
pub type DataMap = HashMap<String, std::rc::Rc<crate::storage::CoordinateTree>>;

/// Build coordinate trees for a set of relations using their storage
/// descriptions (default layout when absent).
pub fn build_data(
    rels: &HashMap<String, crate::relation::Relation>,
    storage: &crate::storage::StorageMap,
) -> Result<DataMap, crate::storage::StorageError> {
    let mut out = DataMap::new();
    for (name, rel) in rels {
        let default_desc;
        let desc = match storage.get(name) {
            Some(d) => d,
            None => {
                default_desc = StorageDescription::default_for(rel.schema());
                &default_desc
            }
        };
        out.insert(
            name.clone(),
            std::rc::Rc::new(crate::storage::build_tree(rel, desc)?),
        );
    }
    Ok(out)
}

impl GallopExpr {
    /// Kind inference helper: does any cursor contribute?
    pub fn is_disabled(&self) -> bool {
        matches!(self, GallopExpr::NegInf)
    }
}
