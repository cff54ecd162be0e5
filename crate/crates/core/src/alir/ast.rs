//! ALIR abstract syntax.

use crate::scalar::ScalarExpr;
use crate::storage::StorageDescription;
use crate::value::Kind;

/// Multiset binary operator over loop domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsSetOp {
    Union,
    Intersect,
    Difference,
    Concat,
    Product,
}

impl MsSetOp {
    pub fn ascii(&self) -> &'static str {
        match self {
            MsSetOp::Union => "|",
            MsSetOp::Intersect => "&",
            MsSetOp::Difference => "-",
            MsSetOp::Concat => "+",
            MsSetOp::Product => "><",
        }
    }
}

/// Reference to one coordinate-tree level of a relation (or alias).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRef {
    pub relation: String,
    pub attr: String,
    /// `A.x*`: iterate each value once per duplicate below it (only valid on
    /// the relation's deepest referenced level).
    pub expanded: bool,
    /// `A.x!`: this reference never reports presence at null; join-derived
    /// references use it so null keys do not match.
    pub match_nulls: bool,
}

impl LevelRef {
    pub fn new(relation: &str, attr: &str) -> LevelRef {
        LevelRef {
            relation: relation.to_string(),
            attr: attr.to_string(),
            expanded: false,
            match_nulls: true,
        }
    }

    pub fn no_nulls(mut self) -> LevelRef {
        self.match_nulls = false;
        self
    }

    pub fn expanded(mut self) -> LevelRef {
        self.expanded = true;
        self
    }
}

/// A loop-domain expression.
#[derive(Debug, Clone, PartialEq)]
pub enum MultisetExpr {
    Level(LevelRef),
    /// Bare relation name: the duplicate-counter tokens below the current
    /// node of that relation.
    DupCounter { relation: String },
    /// `{ v | pred }`: a lookup-only virtual relation.
    Predicate { var: String, pred: ScalarExpr },
    /// `{ expr }`: a single-value iterable virtual relation.
    Singleton(ScalarExpr),
    /// Inclusive integer range, iterable; also serves as a universal set.
    Range { lo: i64, hi: i64 },
    Binop {
        op: MsSetOp,
        lhs: Box<MultisetExpr>,
        rhs: Box<MultisetExpr>,
    },
    /// `base(e1, e2, ...)`: index-only inputs that constrain branching but
    /// contribute no values.
    IndexOnly {
        base: Box<MultisetExpr>,
        extras: Vec<MultisetExpr>,
    },
    /// `base | null`: bind null and run the body once if the domain is empty
    /// in the current iteration. Only allowed outermost.
    UnionEmpty(Box<MultisetExpr>),
    /// `~base`: complement; requires set semantics and a universe.
    Complement(Box<MultisetExpr>),
}

impl MultisetExpr {
    pub fn level(relation: &str, attr: &str) -> MultisetExpr {
        MultisetExpr::Level(LevelRef::new(relation, attr))
    }

    pub fn binop(op: MsSetOp, lhs: MultisetExpr, rhs: MultisetExpr) -> MultisetExpr {
        MultisetExpr::Binop { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// Fold a list of operands with one operator, left-associated.
    pub fn fold(op: MsSetOp, exprs: Vec<MultisetExpr>) -> MultisetExpr {
        let mut it = exprs.into_iter();
        let first = it.next().expect("fold over non-empty list");
        it.fold(first, |acc, e| MultisetExpr::binop(op, acc, e))
    }

    /// Does this expression have set semantics (each value at most once)?
    /// Complement is only defined over such expressions, and difference
    /// between them cancels to omitter rather than not-ready.
    pub fn is_set_semantics(&self) -> bool {
        match self {
            MultisetExpr::Level(r) => !r.expanded,
            MultisetExpr::DupCounter { .. } => false,
            MultisetExpr::Predicate { .. } => true,
            MultisetExpr::Singleton(_) => true,
            MultisetExpr::Range { .. } => true,
            MultisetExpr::Binop { op, lhs, rhs } => match op {
                MsSetOp::Union | MsSetOp::Intersect | MsSetOp::Difference => {
                    lhs.is_set_semantics() && rhs.is_set_semantics()
                }
                MsSetOp::Concat | MsSetOp::Product => false,
            },
            MultisetExpr::IndexOnly { base, .. } => base.is_set_semantics(),
            MultisetExpr::UnionEmpty(base) => base.is_set_semantics(),
            MultisetExpr::Complement(_) => true,
        }
    }

    /// Strip a `| null` wrapper, reporting whether one was present.
    pub fn split_union_empty(&self) -> (&MultisetExpr, bool) {
        match self {
            MultisetExpr::UnionEmpty(base) => (base, true),
            other => (other, false),
        }
    }

    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a MultisetExpr)) {
        match self {
            MultisetExpr::Level(_)
            | MultisetExpr::DupCounter { .. }
            | MultisetExpr::Predicate { .. }
            | MultisetExpr::Singleton(_)
            | MultisetExpr::Range { .. } => f(self),
            MultisetExpr::Binop { lhs, rhs, .. } => {
                lhs.for_each_leaf(f);
                rhs.for_each_leaf(f);
            }
            MultisetExpr::IndexOnly { base, extras } => {
                base.for_each_leaf(f);
                for e in extras {
                    e.for_each_leaf(f);
                }
            }
            MultisetExpr::UnionEmpty(base) | MultisetExpr::Complement(base) => {
                base.for_each_leaf(f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Assign,
    Add,
    Min,
    Max,
    Count,
}

impl AssignOp {
    pub fn ascii(&self) -> &'static str {
        match self {
            AssignOp::Assign => "=",
            AssignOp::Add => "+=",
            AssignOp::Min => "min=",
            AssignOp::Max => "max=",
            AssignOp::Count => "count+=",
        }
    }
}

/// Declaration of a let-bound temporary relation.
#[derive(Debug, Clone, PartialEq)]
pub struct TempDecl {
    pub name: String,
    pub schema: Vec<(String, Kind)>,
    pub storage: StorageDescription,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlirStmt {
    For {
        var: String,
        domain: MultisetExpr,
        /// Iterable universal set for legalization, when declared.
        universe: Option<(i64, i64)>,
        body: Vec<AlirStmt>,
    },
    Emit(Vec<ScalarExpr>),
    AggUpdate {
        target: String,
        keys: Vec<ScalarExpr>,
        attr: String,
        op: AssignOp,
        value: ScalarExpr,
    },
    Let {
        decl: TempDecl,
        producer: Vec<AlirStmt>,
        body: Vec<AlirStmt>,
    },
}

/// `use <base> as <name>`: a second cursor-independent instance of a base
/// relation, for self joins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationAlias {
    pub name: String,
    pub base: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlirProgram {
    pub aliases: Vec<RelationAlias>,
    pub stmts: Vec<AlirStmt>,
}
