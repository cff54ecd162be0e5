//! Scalar expressions shared by predicates, emit lists, and aggregation
//! updates. Predicate evaluation reduces three-valued logic to "null never
//! matches": any comparison touching null is false.

use std::fmt;

use thiserror::Error;

use crate::value::{KindError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Mod,
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Mod => "%",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalarExpr {
    /// A bound variable: a loop variable in ALIR, an attribute name in the
    /// relational-algebra oracle.
    Var(String),
    /// A related-value payload of a relation, addressed after its key levels
    /// are bound.
    Related { relation: String, attr: String },
    Const(Value),
    Cmp(CmpOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Arith(ArithOp, Box<ScalarExpr>, Box<ScalarExpr>),
    And(Box<ScalarExpr>, Box<ScalarExpr>),
    Or(Box<ScalarExpr>, Box<ScalarExpr>),
    Not(Box<ScalarExpr>),
    IsNull(Box<ScalarExpr>),
    IsNotNull(Box<ScalarExpr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unbound related value `{relation}.{attr}`")]
    UnboundRelated { relation: String, attr: String },
    #[error(transparent)]
    Kind(#[from] KindError),
    #[error("expected a boolean expression, found a value")]
    NotBool,
    #[error("expected a value expression, found a boolean")]
    NotValue,
    #[error("arithmetic on non-numeric value")]
    NonNumeric,
    #[error("integer overflow in arithmetic")]
    Overflow,
}

/// Name resolution for scalar evaluation.
pub trait Env {
    fn var(&self, name: &str) -> Option<&Value>;
    fn related(&self, _relation: &str, _attr: &str) -> Option<&Value> {
        None
    }
}

impl Env for std::collections::HashMap<String, Value> {
    fn var(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

impl ScalarExpr {
    pub fn var(name: &str) -> ScalarExpr {
        ScalarExpr::Var(name.to_string())
    }

    pub fn int(v: i64) -> ScalarExpr {
        ScalarExpr::Const(Value::Int(v))
    }

    pub fn cmp(op: CmpOp, lhs: ScalarExpr, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::Cmp(op, Box::new(lhs), Box::new(rhs))
    }

    /// Variables (and related refs) mentioned anywhere in the expression.
    pub fn free_vars(&self, out: &mut Vec<String>) {
        match self {
            ScalarExpr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            ScalarExpr::Related { .. } | ScalarExpr::Const(_) => {}
            ScalarExpr::Cmp(_, a, b) | ScalarExpr::Arith(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            ScalarExpr::And(a, b) | ScalarExpr::Or(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            ScalarExpr::Not(a) | ScalarExpr::IsNull(a) | ScalarExpr::IsNotNull(a) => {
                a.free_vars(out)
            }
        }
    }

    pub fn related_refs(&self, out: &mut Vec<(String, String)>) {
        match self {
            ScalarExpr::Related { relation, attr } => {
                let key = (relation.clone(), attr.clone());
                if !out.contains(&key) {
                    out.push(key);
                }
            }
            ScalarExpr::Var(_) | ScalarExpr::Const(_) => {}
            ScalarExpr::Cmp(_, a, b) | ScalarExpr::Arith(_, a, b) => {
                a.related_refs(out);
                b.related_refs(out);
            }
            ScalarExpr::And(a, b) | ScalarExpr::Or(a, b) => {
                a.related_refs(out);
                b.related_refs(out);
            }
            ScalarExpr::Not(a) | ScalarExpr::IsNull(a) | ScalarExpr::IsNotNull(a) => {
                a.related_refs(out)
            }
        }
    }

    /// Evaluate in value position. Arithmetic over null yields null.
    pub fn eval_value(&self, env: &dyn Env) -> Result<Value, EvalError> {
        match self {
            ScalarExpr::Var(name) => env
                .var(name)
                .cloned()
                .ok_or_else(|| EvalError::Unbound(name.clone())),
            ScalarExpr::Related { relation, attr } => env
                .related(relation, attr)
                .cloned()
                .ok_or_else(|| EvalError::UnboundRelated {
                    relation: relation.clone(),
                    attr: attr.clone(),
                }),
            ScalarExpr::Const(v) => Ok(v.clone()),
            ScalarExpr::Arith(op, a, b) => {
                let a = a.eval_value(env)?;
                let b = b.eval_value(env)?;
                match (a, b) {
                    (Value::Null, _) | (_, Value::Null) => Ok(Value::Null),
                    (Value::Int(a), Value::Int(b)) => {
                        let r = match op {
                            ArithOp::Add => a.checked_add(b),
                            ArithOp::Sub => a.checked_sub(b),
                            ArithOp::Mul => a.checked_mul(b),
                            ArithOp::Mod => a.checked_rem(b),
                        };
                        r.map(Value::Int).ok_or(EvalError::Overflow)
                    }
                    (Value::Float(a), Value::Float(b)) => {
                        let r = match op {
                            ArithOp::Add => a + b,
                            ArithOp::Sub => a - b,
                            ArithOp::Mul => a * b,
                            ArithOp::Mod => a % b,
                        };
                        Ok(Value::Float(r))
                    }
                    _ => Err(EvalError::NonNumeric),
                }
            }
            ScalarExpr::Cmp(..)
            | ScalarExpr::And(..)
            | ScalarExpr::Or(..)
            | ScalarExpr::Not(..)
            | ScalarExpr::IsNull(..)
            | ScalarExpr::IsNotNull(..) => Err(EvalError::NotValue),
        }
    }

    /// Evaluate in predicate position.
    pub fn eval_bool(&self, env: &dyn Env) -> Result<bool, EvalError> {
        match self {
            ScalarExpr::Cmp(op, a, b) => {
                let a = a.eval_value(env)?;
                let b = b.eval_value(env)?;
                match a.compare(&b)? {
                    // Comparisons involving null never match.
                    None => Ok(false),
                    Some(ord) => Ok(match op {
                        CmpOp::Eq => ord.is_eq(),
                        CmpOp::Ne => !ord.is_eq(),
                        CmpOp::Lt => ord.is_lt(),
                        CmpOp::Le => ord.is_le(),
                        CmpOp::Gt => ord.is_gt(),
                        CmpOp::Ge => ord.is_ge(),
                    }),
                }
            }
            ScalarExpr::And(a, b) => Ok(a.eval_bool(env)? && b.eval_bool(env)?),
            ScalarExpr::Or(a, b) => Ok(a.eval_bool(env)? || b.eval_bool(env)?),
            ScalarExpr::Not(a) => Ok(!a.eval_bool(env)?),
            ScalarExpr::IsNull(a) => Ok(a.eval_value(env)?.is_null()),
            ScalarExpr::IsNotNull(a) => Ok(!a.eval_value(env)?.is_null()),
            _ => Err(EvalError::NotBool),
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Var(v) => write!(f, "{v}"),
            ScalarExpr::Related { relation, attr } => write!(f, "{relation}.{attr}"),
            ScalarExpr::Const(Value::Null) => write!(f, "null"),
            ScalarExpr::Const(Value::Str(s)) => write!(f, "{s:?}"),
            ScalarExpr::Const(v) => write!(f, "{v}"),
            ScalarExpr::Cmp(op, a, b) => write!(f, "({a} {op} {b})"),
            ScalarExpr::Arith(op, a, b) => write!(f, "({a} {op} {b})"),
            ScalarExpr::And(a, b) => write!(f, "({a} and {b})"),
            ScalarExpr::Or(a, b) => write!(f, "({a} or {b})"),
            ScalarExpr::Not(a) => write!(f, "(not {a})"),
            ScalarExpr::IsNull(a) => write!(f, "({a} is null)"),
            ScalarExpr::IsNotNull(a) => write!(f, "({a} is not null)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn null_comparisons_are_false() {
        let mut env = HashMap::new();
        env.insert("x".to_string(), Value::Null);
        let expr = ScalarExpr::cmp(CmpOp::Eq, ScalarExpr::var("x"), ScalarExpr::var("x"));
        assert!(!expr.eval_bool(&env).unwrap());
        let expr = ScalarExpr::IsNull(Box::new(ScalarExpr::var("x")));
        assert!(expr.eval_bool(&env).unwrap());
    }

    #[test]
    fn arithmetic_propagates_null() {
        let mut env = HashMap::new();
        env.insert("x".to_string(), Value::Null);
        let expr = ScalarExpr::Arith(
            ArithOp::Add,
            Box::new(ScalarExpr::var("x")),
            Box::new(ScalarExpr::int(1)),
        );
        assert_eq!(expr.eval_value(&env).unwrap(), Value::Null);
    }
}
