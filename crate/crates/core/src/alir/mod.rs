//! The abstract loop IR: nested loops over multiset-expression domains with
//! lets, aggregation updates, and output statements, plus its textual form,
//! validator, and the planner from relational algebra.

mod ast;
pub mod domain;
pub mod plan;
pub mod text;
pub mod validate;

pub use ast::{
    AlirProgram, AlirStmt, AssignOp, LevelRef, MsSetOp, MultisetExpr, RelationAlias, TempDecl,
};
pub use plan::{plan, PlanError};
pub use text::{parse_program, parse_raexpr, print_program, ParseError};
pub use validate::{validate, Diagnostic};
