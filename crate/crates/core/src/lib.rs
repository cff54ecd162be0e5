//! relfuse: a compiler and execution engine for fused relational algebra
//! with bag semantics.
//!
//! Relational expressions are lowered to an abstract loop IR (ALIR) over
//! coordinate-tree storage, each loop domain is compiled to an iteration
//! machine (a DFA over its inputs), and the machines drive generation of
//! co-iterating loop programs that execute without materializing
//! intermediates. A brute-force relational-algebra oracle provides the
//! correctness reference throughout.

pub mod alir;
pub mod codegen;
pub mod fuzz;
pub mod machine;
pub mod multiset;
pub mod ra;
pub mod reference;
pub mod relation;
pub mod scalar;
pub mod storage;
pub mod value;

pub use multiset::{MsOp, Multiset};
pub use relation::{Relation, Schema, Tuple};
pub use scalar::ScalarExpr;
pub use value::{Kind, Value};
