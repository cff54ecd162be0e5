//! Textual ALIR: lexer, recursive-descent parser, and canonical printer.
//! The grammar is documented in `docs/alir.md`; ASCII operators are
//! canonical (`&`, `|`, `-`, `+`, `><`), with `∩ ∪ − × ⨯` accepted as
//! aliases on input.

use std::fmt::Write as _;

use thiserror::Error;

use crate::alir::ast::*;
use crate::scalar::{ArithOp, CmpOp, ScalarExpr};
use crate::storage::StorageDescription;
use crate::value::{Kind, Value};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at line {line}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    Star,
    Bang,
    Tilde,
    Amp,
    Pipe,
    Minus,
    Plus,
    Percent,
    Cross, // ><
    Assign,
    PlusAssign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1 }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, msg: msg.into() }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, u32)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek_byte() {
                if c == b'\n' {
                    self.line += 1;
                    self.pos += 1;
                } else if c.is_ascii_whitespace() {
                    self.pos += 1;
                } else if c == b'#' {
                    while let Some(c) = self.peek_byte() {
                        if c == b'\n' {
                            break;
                        }
                        self.pos += 1;
                    }
                } else {
                    break;
                }
            }
            let line = self.line;
            let Some(c) = self.peek_byte() else {
                out.push((Tok::Eof, line));
                return Ok(out);
            };
            let tok = match c {
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b'{' => {
                    self.pos += 1;
                    Tok::LBrace
                }
                b'}' => {
                    self.pos += 1;
                    Tok::RBrace
                }
                b'[' => {
                    self.pos += 1;
                    Tok::LBracket
                }
                b']' => {
                    self.pos += 1;
                    Tok::RBracket
                }
                b',' => {
                    self.pos += 1;
                    Tok::Comma
                }
                b';' => {
                    self.pos += 1;
                    Tok::Semi
                }
                b':' => {
                    self.pos += 1;
                    Tok::Colon
                }
                b'.' => {
                    self.pos += 1;
                    Tok::Dot
                }
                b'*' => {
                    self.pos += 1;
                    Tok::Star
                }
                b'~' => {
                    self.pos += 1;
                    Tok::Tilde
                }
                b'&' => {
                    self.pos += 1;
                    Tok::Amp
                }
                b'|' => {
                    self.pos += 1;
                    Tok::Pipe
                }
                b'-' => {
                    self.pos += 1;
                    Tok::Minus
                }
                b'+' => {
                    self.pos += 1;
                    if self.peek_byte() == Some(b'=') {
                        self.pos += 1;
                        Tok::PlusAssign
                    } else {
                        Tok::Plus
                    }
                }
                b'%' => {
                    self.pos += 1;
                    Tok::Percent
                }
                b'=' => {
                    self.pos += 1;
                    if self.peek_byte() == Some(b'=') {
                        self.pos += 1;
                        Tok::EqEq
                    } else {
                        Tok::Assign
                    }
                }
                b'!' => {
                    self.pos += 1;
                    if self.peek_byte() == Some(b'=') {
                        self.pos += 1;
                        Tok::NotEq
                    } else {
                        Tok::Bang
                    }
                }
                b'<' => {
                    self.pos += 1;
                    if self.peek_byte() == Some(b'=') {
                        self.pos += 1;
                        Tok::Le
                    } else {
                        Tok::Lt
                    }
                }
                b'>' => {
                    self.pos += 1;
                    match self.peek_byte() {
                        Some(b'=') => {
                            self.pos += 1;
                            Tok::Ge
                        }
                        Some(b'<') => {
                            self.pos += 1;
                            Tok::Cross
                        }
                        _ => Tok::Gt,
                    }
                }
                b'"' => {
                    self.pos += 1;
                    let mut s = String::new();
                    loop {
                        match self.peek_byte() {
                            Some(b'"') => {
                                self.pos += 1;
                                break;
                            }
                            Some(b'\\') => {
                                self.pos += 1;
                                match self.peek_byte() {
                                    Some(b'"') => s.push('"'),
                                    Some(b'\\') => s.push('\\'),
                                    Some(b'n') => s.push('\n'),
                                    _ => return Err(self.error("bad escape")),
                                }
                                self.pos += 1;
                            }
                            Some(c) => {
                                s.push(c as char);
                                self.pos += 1;
                            }
                            None => return Err(self.error("unterminated string")),
                        }
                    }
                    Tok::Str(s)
                }
                b'0'..=b'9' => {
                    let start = self.pos;
                    let mut is_float = false;
                    while let Some(c) = self.peek_byte() {
                        if c.is_ascii_digit() {
                            self.pos += 1;
                        } else if c == b'.'
                            && self
                                .src
                                .get(self.pos + 1)
                                .is_some_and(|d| d.is_ascii_digit())
                        {
                            is_float = true;
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    if is_float {
                        Tok::Float(text.parse().map_err(|_| self.error("bad float"))?)
                    } else {
                        Tok::Int(text.parse().map_err(|_| self.error("bad int"))?)
                    }
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while let Some(c) = self.peek_byte() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    Tok::Ident(text.to_string())
                }
                // Unicode operator aliases.
                _ => {
                    let rest = std::str::from_utf8(&self.src[self.pos..])
                        .map_err(|_| self.error("invalid utf-8"))?;
                    let ch = rest.chars().next().unwrap();
                    self.pos += ch.len_utf8();
                    match ch {
                        '∩' => Tok::Amp,
                        '∪' => Tok::Pipe,
                        '−' => Tok::Minus,
                        '×' | '⨯' => Tok::Cross,
                        '∅' => Tok::Ident("null".to_string()),
                        _ => return Err(self.error(format!("unexpected character `{ch}`"))),
                    }
                }
            };
            out.push((tok, line));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, u32)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].1
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line(), msg: msg.into() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {:?}", self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            other => Err(self.error(format!("expected {what}, found {other:?}"))),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn int_lit(&mut self) -> Result<i64, ParseError> {
        let neg = *self.peek() == Tok::Minus;
        if neg {
            self.bump();
        }
        match self.bump() {
            Tok::Int(v) => Ok(if neg { -v } else { v }),
            other => Err(self.error(format!("expected integer, found {other:?}"))),
        }
    }

    // ---- statements ----

    fn program(&mut self) -> Result<AlirProgram, ParseError> {
        let mut prog = AlirProgram::default();
        while *self.peek() != Tok::Eof {
            if self.eat_kw("use") {
                let base = self.ident("base relation")?;
                if !self.eat_kw("as") {
                    return Err(self.error("expected `as`"));
                }
                let name = self.ident("alias name")?;
                let _ = self.eat_semi();
                prog.aliases.push(RelationAlias { name, base });
            } else {
                prog.stmts.push(self.stmt()?);
            }
        }
        Ok(prog)
    }

    fn eat_semi(&mut self) -> bool {
        if *self.peek() == Tok::Semi {
            self.bump();
            true
        } else {
            false
        }
    }

    fn block(&mut self) -> Result<Vec<AlirStmt>, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.error("unterminated block"));
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<AlirStmt, ParseError> {
        if self.is_kw("for") {
            return self.for_stmt();
        }
        if self.is_kw("let") {
            return self.let_stmt();
        }
        if self.is_kw("emit") {
            self.bump();
            self.expect(Tok::LParen, "`(`")?;
            let mut exprs = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    exprs.push(self.scalar()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            let _ = self.eat_semi();
            return Ok(AlirStmt::Emit(exprs));
        }
        // Aggregation update: target[keys].attr op expr
        let target = self.ident("statement")?;
        self.expect(Tok::LBracket, "`[`")?;
        let mut keys = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                keys.push(self.scalar()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::Dot, "`.`")?;
        let attr = self.ident("aggregate attribute")?;
        let op = match self.peek().clone() {
            Tok::Assign => {
                self.bump();
                AssignOp::Assign
            }
            Tok::PlusAssign => {
                self.bump();
                AssignOp::Add
            }
            Tok::Ident(s) if s == "min" || s == "max" => {
                self.bump();
                self.expect(Tok::Assign, "`=`")?;
                if s == "min" {
                    AssignOp::Min
                } else {
                    AssignOp::Max
                }
            }
            Tok::Ident(s) if s == "count" => {
                self.bump();
                self.expect(Tok::PlusAssign, "`+=`")?;
                AssignOp::Count
            }
            other => return Err(self.error(format!("expected assignment op, found {other:?}"))),
        };
        let value = self.scalar()?;
        let _ = self.eat_semi();
        Ok(AlirStmt::AggUpdate { target, keys, attr, op, value })
    }

    fn for_stmt(&mut self) -> Result<AlirStmt, ParseError> {
        self.bump(); // for
        let var = self.ident("loop variable")?;
        if !self.eat_kw("in") {
            return Err(self.error("expected `in`"));
        }
        let domain = self.msexpr(true)?;
        let universe = if self.eat_kw("universe") {
            if !self.eat_kw("range") {
                return Err(self.error("expected `range` after `universe`"));
            }
            self.expect(Tok::LParen, "`(`")?;
            let lo = self.int_lit()?;
            self.expect(Tok::Comma, "`,`")?;
            let hi = self.int_lit()?;
            self.expect(Tok::RParen, "`)`")?;
            Some((lo, hi))
        } else {
            None
        };
        let body = self.block()?;
        Ok(AlirStmt::For { var, domain, universe, body })
    }

    fn let_stmt(&mut self) -> Result<AlirStmt, ParseError> {
        self.bump(); // let
        let name = self.ident("temporary name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut schema = Vec::new();
        loop {
            let attr = self.ident("attribute")?;
            let kind = if *self.peek() == Tok::Dot {
                return Err(self.error("unexpected `.` in declaration"));
            } else if self.eat_colon()? {
                let k = self.ident("kind")?;
                Kind::parse(&k).ok_or_else(|| self.error(format!("unknown kind `{k}`")))?
            } else {
                Kind::Int
            };
            schema.push((attr, kind));
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let mut storage = StorageDescription {
            order: schema.iter().map(|(a, _)| a.clone()).collect(),
            levels: Vec::new(),
            primary_key_len: 0,
            related: Vec::new(),
        };
        loop {
            if self.eat_kw("order") {
                self.expect(Tok::LParen, "`(`")?;
                let mut order = Vec::new();
                loop {
                    order.push(self.ident("attribute")?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                storage.order = order;
            } else if self.eat_kw("pk") {
                self.expect(Tok::LParen, "`(`")?;
                storage.primary_key_len = self.int_lit()? as usize;
                self.expect(Tok::RParen, "`)`")?;
            } else if self.eat_kw("related") {
                self.expect(Tok::LParen, "`(`")?;
                let mut related = Vec::new();
                loop {
                    related.push(self.ident("attribute")?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                storage.related = related;
            } else {
                break;
            }
        }
        let producer = self.block()?;
        if !self.eat_kw("in") {
            return Err(self.error("expected `in` after let producer"));
        }
        let body = self.block()?;
        Ok(AlirStmt::Let { decl: TempDecl { name, schema, storage }, producer, body })
    }

    fn eat_colon(&mut self) -> Result<bool, ParseError> {
        if *self.peek() == Tok::Colon {
            self.bump();
            return Ok(true);
        }
        Ok(false)
    }

    // ---- multiset expressions ----

    fn msexpr(&mut self, allow_union_empty: bool) -> Result<MultisetExpr, ParseError> {
        let first = self.msterm()?;
        let mut op: Option<MsSetOp> = None;
        let mut operands = vec![first];
        loop {
            let next_op = match self.peek() {
                Tok::Amp => MsSetOp::Intersect,
                Tok::Pipe => MsSetOp::Union,
                Tok::Minus => MsSetOp::Difference,
                Tok::Plus => MsSetOp::Concat,
                Tok::Cross => MsSetOp::Product,
                _ => break,
            };
            // `| null` terminates the domain.
            if next_op == MsSetOp::Union && matches!(self.peek2(), Tok::Ident(s) if s == "null") {
                if !allow_union_empty {
                    return Err(self.error("`| null` is only allowed outermost in a loop domain"));
                }
                self.bump();
                self.bump();
                let base = match op {
                    None => operands.pop().unwrap(),
                    Some(op) => MultisetExpr::fold(op, operands),
                };
                return Ok(MultisetExpr::UnionEmpty(Box::new(base)));
            }
            match op {
                None => op = Some(next_op),
                Some(cur) if cur == next_op => {}
                Some(cur) => {
                    return Err(self.error(format!(
                        "mixed multiset operators `{}` and `{}` need parentheses",
                        cur.ascii(),
                        next_op.ascii()
                    )))
                }
            }
            self.bump();
            operands.push(self.msterm()?);
        }
        Ok(match op {
            None => operands.pop().unwrap(),
            Some(op) => MultisetExpr::fold(op, operands),
        })
    }

    fn msterm(&mut self) -> Result<MultisetExpr, ParseError> {
        let mut base = self.msprimary()?;
        // Postfix index-only extras.
        while *self.peek() == Tok::LParen {
            self.bump();
            let mut extras = Vec::new();
            loop {
                extras.push(self.msexpr(false)?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            base = MultisetExpr::IndexOnly { base: Box::new(base), extras };
        }
        Ok(base)
    }

    fn msprimary(&mut self) -> Result<MultisetExpr, ParseError> {
        match self.peek().clone() {
            Tok::Tilde => {
                self.bump();
                let inner = self.msterm()?;
                Ok(MultisetExpr::Complement(Box::new(inner)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.msexpr(false)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::LBrace => {
                self.bump();
                // `{ v | pred }` or `{ expr }`.
                if let (Tok::Ident(v), Tok::Pipe) = (self.peek().clone(), self.peek2().clone()) {
                    self.bump();
                    self.bump();
                    let pred = self.scalar()?;
                    self.expect(Tok::RBrace, "`}`")?;
                    return Ok(MultisetExpr::Predicate { var: v, pred });
                }
                let expr = self.scalar()?;
                self.expect(Tok::RBrace, "`}`")?;
                Ok(MultisetExpr::Singleton(expr))
            }
            Tok::Ident(name) if name == "range" => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let lo = self.int_lit()?;
                self.expect(Tok::Comma, "`,`")?;
                let hi = self.int_lit()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(MultisetExpr::Range { lo, hi })
            }
            Tok::Ident(relation) => {
                self.bump();
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let attr = self.ident("attribute")?;
                    let mut r = LevelRef::new(&relation, &attr);
                    if *self.peek() == Tok::Star {
                        self.bump();
                        r.expanded = true;
                    }
                    if *self.peek() == Tok::Bang {
                        self.bump();
                        r.match_nulls = false;
                    }
                    Ok(MultisetExpr::Level(r))
                } else {
                    Ok(MultisetExpr::DupCounter { relation })
                }
            }
            other => Err(self.error(format!("expected multiset expression, found {other:?}"))),
        }
    }

    // ---- scalar expressions ----

    fn scalar(&mut self) -> Result<ScalarExpr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = ScalarExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = ScalarExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        if self.is_kw("not") {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(ScalarExpr::Not(Box::new(inner)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let lhs = self.add_expr()?;
        if self.is_kw("is") {
            self.bump();
            let negated = self.eat_kw("not");
            if !self.eat_kw("null") {
                return Err(self.error("expected `null` after `is`"));
            }
            return Ok(if negated {
                ScalarExpr::IsNotNull(Box::new(lhs))
            } else {
                ScalarExpr::IsNull(Box::new(lhs))
            });
        }
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::NotEq => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(ScalarExpr::cmp(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = ScalarExpr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Percent => ArithOp::Mod,
                _ => break,
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = ScalarExpr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(match self.unary_expr()? {
                ScalarExpr::Const(Value::Int(v)) => ScalarExpr::Const(Value::Int(-v)),
                ScalarExpr::Const(Value::Float(v)) => ScalarExpr::Const(Value::Float(-v)),
                e => ScalarExpr::Arith(ArithOp::Sub, Box::new(ScalarExpr::int(0)), Box::new(e)),
            });
        }
        self.primary_expr()
    }

    fn primary_expr(&mut self) -> Result<ScalarExpr, ParseError> {
        match self.bump() {
            Tok::Int(v) => Ok(ScalarExpr::Const(Value::Int(v))),
            Tok::Float(v) => Ok(ScalarExpr::Const(Value::Float(v))),
            Tok::Str(s) => Ok(ScalarExpr::Const(Value::Str(s))),
            Tok::Ident(s) if s == "null" => Ok(ScalarExpr::Const(Value::Null)),
            Tok::Ident(s) => {
                if *self.peek() == Tok::Dot {
                    self.bump();
                    let attr = self.ident("attribute")?;
                    Ok(ScalarExpr::Related { relation: s, attr })
                } else {
                    Ok(ScalarExpr::Var(s))
                }
            }
            Tok::LParen => {
                let inner = self.scalar()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            other => Err(self.error(format!("expected expression, found {other:?}"))),
        }
    }
}

pub fn parse_program(src: &str) -> Result<AlirProgram, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    let mut parser = Parser { toks, pos: 0 };
    parser.program()
}

/// Parse a relational-algebra expression in the call syntax used by the
/// command line and by verification reproducers: `join(A, B)`,
/// `select(A, (a < 3))`, `project(A, [a, b], distinct)`,
/// `agg(A, [a], [sum(b)])`, `rename(A, a=b)`, and so on.
pub fn parse_raexpr(src: &str) -> Result<crate::ra::RaExpr, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.raexpr()?;
    parser.expect(Tok::Eof, "end of input")?;
    Ok(expr)
}

impl Parser {
    fn raexpr(&mut self) -> Result<crate::ra::RaExpr, ParseError> {
        use crate::ra::{AggOp, JoinKind, RaExpr};
        let name = self.ident("relation or operator")?;
        if *self.peek() != Tok::LParen {
            return Ok(RaExpr::Base(name));
        }
        self.bump();
        let expr = match name.as_str() {
            "select" => {
                let child = self.raexpr()?;
                self.expect(Tok::Comma, "`,`")?;
                let pred = self.scalar()?;
                RaExpr::Select { child: Box::new(child), pred }
            }
            "project" => {
                let child = self.raexpr()?;
                self.expect(Tok::Comma, "`,`")?;
                let attrs = self.ident_list()?;
                let mut keep_dups = true;
                if *self.peek() == Tok::Comma {
                    self.bump();
                    if !self.eat_kw("distinct") {
                        return Err(self.error("expected `distinct`"));
                    }
                    keep_dups = false;
                }
                RaExpr::Project { child: Box::new(child), attrs, keep_dups }
            }
            "join" | "leftjoin" | "rightjoin" | "fulljoin" => {
                let left = self.raexpr()?;
                self.expect(Tok::Comma, "`,`")?;
                let right = self.raexpr()?;
                let pred = if *self.peek() == Tok::Comma {
                    self.bump();
                    Some(self.scalar()?)
                } else {
                    None
                };
                let kind = match name.as_str() {
                    "join" => JoinKind::Inner,
                    "leftjoin" => JoinKind::Left,
                    "rightjoin" => JoinKind::Right,
                    _ => JoinKind::Full,
                };
                RaExpr::Join { kind, left: Box::new(left), right: Box::new(right), pred }
            }
            "diff" | "union" | "concat" | "product" => {
                let left = Box::new(self.raexpr()?);
                self.expect(Tok::Comma, "`,`")?;
                let right = Box::new(self.raexpr()?);
                match name.as_str() {
                    "diff" => RaExpr::Difference { left, right },
                    "union" => RaExpr::Union { left, right },
                    "concat" => RaExpr::Concat { left, right },
                    _ => RaExpr::Product { left, right },
                }
            }
            "agg" => {
                let child = self.raexpr()?;
                self.expect(Tok::Comma, "`,`")?;
                let group = self.ident_list()?;
                self.expect(Tok::Comma, "`,`")?;
                self.expect(Tok::LBracket, "`[`")?;
                let mut aggs = Vec::new();
                while *self.peek() != Tok::RBracket {
                    let opname = self.ident("aggregate op")?;
                    let op = match opname.as_str() {
                        "sum" => AggOp::Sum,
                        "count" => AggOp::Count,
                        "min" => AggOp::Min,
                        "max" => AggOp::Max,
                        other => return Err(self.error(format!("unknown aggregate `{other}`"))),
                    };
                    self.expect(Tok::LParen, "`(`")?;
                    let attr = self.ident("attribute")?;
                    self.expect(Tok::RParen, "`)`")?;
                    aggs.push((op, attr));
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    }
                }
                self.bump();
                RaExpr::GroupAggregate { child: Box::new(child), group, aggs }
            }
            "distinct" => RaExpr::Distinct { child: Box::new(self.raexpr()?) },
            "rename" => {
                let child = self.raexpr()?;
                let mut renames = Vec::new();
                while *self.peek() == Tok::Comma {
                    self.bump();
                    let old = self.ident("attribute")?;
                    self.expect(Tok::Assign, "`=`")?;
                    let new = self.ident("attribute")?;
                    renames.push((old, new));
                }
                RaExpr::Rename { child: Box::new(child), renames }
            }
            other => return Err(self.error(format!("unknown operator `{other}`"))),
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(expr)
    }

    fn ident_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut out = Vec::new();
        while *self.peek() != Tok::RBracket {
            out.push(self.ident("attribute")?);
            if *self.peek() == Tok::Comma {
                self.bump();
            }
        }
        self.bump();
        Ok(out)
    }
}

// ---- printer ----

fn ms_prec(e: &MultisetExpr) -> u8 {
    match e {
        MultisetExpr::Binop { .. } => 0,
        _ => 1,
    }
}

pub fn print_msexpr(e: &MultisetExpr) -> String {
    match e {
        MultisetExpr::Level(r) => {
            let mut s = format!("{}.{}", r.relation, r.attr);
            if r.expanded {
                s.push('*');
            }
            if !r.match_nulls {
                s.push('!');
            }
            s
        }
        MultisetExpr::DupCounter { relation } => relation.clone(),
        MultisetExpr::Predicate { var, pred } => format!("{{ {var} | {pred} }}"),
        MultisetExpr::Singleton(expr) => format!("{{ {expr} }}"),
        MultisetExpr::Range { lo, hi } => format!("range({lo}, {hi})"),
        MultisetExpr::Binop { op, lhs, rhs } => {
            // Same-op chains stay flat; anything nested gets parens.
            let fmt = |side: &MultisetExpr| {
                let inner = print_msexpr(side);
                let needs = match side {
                    MultisetExpr::Binop { op: sop, .. } => sop != op,
                    _ => ms_prec(side) == 0,
                };
                if needs {
                    format!("({inner})")
                } else {
                    inner
                }
            };
            format!("{} {} {}", fmt(lhs), op.ascii(), fmt(rhs))
        }
        MultisetExpr::IndexOnly { base, extras } => {
            let base_s = match &**base {
                MultisetExpr::Binop { .. } => format!("({})", print_msexpr(base)),
                _ => print_msexpr(base),
            };
            let ex: Vec<String> = extras.iter().map(print_msexpr).collect();
            format!("{base_s}({})", ex.join(", "))
        }
        MultisetExpr::UnionEmpty(base) => format!("{} | null", print_msexpr(base)),
        MultisetExpr::Complement(base) => {
            let base_s = match &**base {
                MultisetExpr::Binop { .. } => format!("({})", print_msexpr(base)),
                _ => print_msexpr(base),
            };
            format!("~{base_s}")
        }
    }
}

fn print_stmt(s: &AlirStmt, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match s {
        AlirStmt::For { var, domain, universe, body } => {
            write!(out, "{pad}for {var} in {}", print_msexpr(domain)).unwrap();
            if let Some((lo, hi)) = universe {
                write!(out, " universe range({lo}, {hi})").unwrap();
            }
            out.push_str(" {\n");
            for st in body {
                print_stmt(st, indent + 1, out);
            }
            writeln!(out, "{pad}}}").unwrap();
        }
        AlirStmt::Emit(exprs) => {
            let parts: Vec<String> = exprs.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{pad}emit({})", parts.join(", ")).unwrap();
        }
        AlirStmt::AggUpdate { target, keys, attr, op, value } => {
            let parts: Vec<String> = keys.iter().map(|e| e.to_string()).collect();
            writeln!(out, "{pad}{target}[{}].{attr} {} {value}", parts.join(", "), op.ascii())
                .unwrap();
        }
        AlirStmt::Let { decl, producer, body } => {
            let attrs: Vec<String> = decl
                .schema
                .iter()
                .map(|(a, k)| {
                    if *k == Kind::Int {
                        a.clone()
                    } else {
                        format!("{a}: {k}")
                    }
                })
                .collect();
            write!(out, "{pad}let {}({})", decl.name, attrs.join(", ")).unwrap();
            let default_order: Vec<String> =
                decl.schema.iter().map(|(a, _)| a.clone()).collect();
            if decl.storage.order != default_order {
                write!(out, " order({})", decl.storage.order.join(", ")).unwrap();
            }
            if decl.storage.primary_key_len != 0 {
                write!(out, " pk({})", decl.storage.primary_key_len).unwrap();
            }
            if !decl.storage.related.is_empty() {
                write!(out, " related({})", decl.storage.related.join(", ")).unwrap();
            }
            out.push_str(" {\n");
            for st in producer {
                print_stmt(st, indent + 1, out);
            }
            writeln!(out, "{pad}}} in {{").unwrap();
            for st in body {
                print_stmt(st, indent + 1, out);
            }
            writeln!(out, "{pad}}}").unwrap();
        }
    }
}

/// Canonical text rendering; parses back to the same program.
pub fn print_program(p: &AlirProgram) -> String {
    let mut out = String::new();
    for a in &p.aliases {
        writeln!(out, "use {} as {}", a.base, a.name).unwrap();
    }
    for s in &p.stmts {
        print_stmt(s, 0, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_inner_join_template() {
        let src = r#"
# fused equi join
for x in A.x {
  for y in A.y & B.y {
    for z in B.z {
      emit(x, y, z)
    }
  }
}
"#;
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.stmts.len(), 1);
        let printed = print_program(&prog);
        let again = parse_program(&printed).unwrap();
        assert_eq!(prog, again);
    }

    #[test]
    fn parse_union_empty_and_index_only() {
        let src = "for y in A.y(B.y!) { for z in B.z | null { emit(y, z) } }";
        let prog = parse_program(src).unwrap();
        match &prog.stmts[0] {
            AlirStmt::For { domain, .. } => {
                assert!(matches!(domain, MultisetExpr::IndexOnly { .. }));
            }
            _ => panic!(),
        }
        let printed = print_program(&prog);
        assert!(printed.contains("B.z | null"));
        assert_eq!(parse_program(&printed).unwrap(), prog);
    }

    #[test]
    fn parse_let_and_aggregate() {
        let src = r#"
let T(y, sx) related(sx) pk(1) {
  for x in A.x {
    for y in A.y & { y | (x * x) + (y * y) == 25 } {
      T[y].sx += x
    }
  }
} in {
  for y in T.y & B.y {
    for z in B.z {
      emit(T.sx, y, z)
    }
  }
}
"#;
        let prog = parse_program(src).unwrap();
        let printed = print_program(&prog);
        assert_eq!(parse_program(&printed).unwrap(), prog);
    }

    #[test]
    fn mixed_operators_require_parens() {
        assert!(parse_program("for x in A.x & B.x | C.x { emit(x) }").is_err());
        assert!(parse_program("for x in (A.x & B.x) | C.x { emit(x) }").is_ok());
    }

    #[test]
    fn parse_dups_and_product() {
        let src = "for d in (A >< B) - C { emit(d) }";
        let prog = parse_program(src).unwrap();
        match &prog.stmts[0] {
            AlirStmt::For { domain: MultisetExpr::Binop { op, lhs, .. }, .. } => {
                assert_eq!(*op, MsSetOp::Difference);
                assert!(
                    matches!(&**lhs, MultisetExpr::Binop { op: MsSetOp::Product, .. })
                );
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unicode_aliases_accepted() {
        let a = parse_program("for y in A.y ∩ B.y { emit(y) }").unwrap();
        let b = parse_program("for y in A.y & B.y { emit(y) }").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_complement_and_universe() {
        let src = "for x in ~A.x universe range(1, 10) { emit(x) }";
        let prog = parse_program(src).unwrap();
        match &prog.stmts[0] {
            AlirStmt::For { domain, universe, .. } => {
                assert!(matches!(domain, MultisetExpr::Complement(_)));
                assert_eq!(*universe, Some((1, 10)));
            }
            _ => panic!(),
        }
        assert_eq!(parse_program(&print_program(&prog)).unwrap(), prog);
    }
}
