//! Cursors (iteration capability) and lookup handles (membership capability)
//! over tree levels and the virtual layers: dense ranges, singletons,
//! predicates, and duplicate counters.

use crate::storage::tree::Level;
use crate::value::Value;

/// Current-value token for duplicate counters: every token carries the same
/// unit value so co-iteration degenerates to lockstep counting.
pub const UNIT: Value = Value::Int(0);

/// First index in `values[lo..hi]` whose value is >= `v`, found by
/// exponential probing followed by binary search.
fn gallop_search(values: &[Value], lo: usize, hi: usize, v: &Value) -> usize {
    if lo >= hi || values[lo].canonical_cmp(v).is_ge() {
        return lo;
    }
    let mut step = 1;
    let mut prev = lo;
    while lo + step < hi && values[lo + step].canonical_cmp(v).is_lt() {
        prev = lo + step;
        step <<= 1;
    }
    let upper = usize::min(lo + step, hi);
    // Binary search in (prev, upper].
    let mut lo_b = prev + 1;
    let mut hi_b = upper;
    while lo_b < hi_b {
        let mid = (lo_b + hi_b) / 2;
        if values[mid].canonical_cmp(v).is_lt() {
            lo_b = mid + 1;
        } else {
            hi_b = mid;
        }
    }
    lo_b
}

/// Iterating cursor over one segment of a tree level.
///
/// In expanded mode (deepest bound level of a multiset reference) each value
/// is yielded once per tuple below it, so duplicates surface as repeated
/// cursor positions rather than a separate loop.
#[derive(Debug, Clone)]
pub struct LevelCursor<'t> {
    level: &'t Level,
    expanded: bool,
    lo: usize,
    hi: usize,
    pos: usize,
    rep: u64,
    initialized: bool,
}

impl<'t> LevelCursor<'t> {
    pub fn new(level: &'t Level, expanded: bool) -> Self {
        LevelCursor { level, expanded, lo: 0, hi: 0, pos: 0, rep: 0, initialized: false }
    }

    /// Position at the start of the parent's segment; `None` binds an empty
    /// segment (the input is absent at this path).
    pub fn init(&mut self, parent: Option<usize>) {
        match parent {
            Some(p) => {
                let (lo, hi) = self.level.segment(p);
                self.lo = lo;
                self.hi = hi;
            }
            None => {
                self.lo = 0;
                self.hi = 0;
            }
        }
        self.pos = self.lo;
        self.rep = 0;
        self.initialized = true;
    }

    pub fn valid(&self) -> bool {
        assert!(self.initialized, "cursor used before init");
        self.pos < self.hi
    }

    pub fn curval(&self) -> &Value {
        assert!(self.valid(), "curval on exhausted cursor");
        &self.level.values[self.pos]
    }

    pub fn advance(&mut self) {
        assert!(self.valid(), "advance on exhausted cursor");
        if self.expanded && self.rep + 1 < self.level.subtree[self.pos] {
            self.rep += 1;
        } else {
            self.pos += 1;
            self.rep = 0;
        }
    }

    pub fn skipto(&mut self, v: &Value) {
        assert!(self.initialized, "cursor used before init");
        if self.pos < self.hi && self.level.values[self.pos].canonical_cmp(v).is_ge() {
            return;
        }
        self.pos = gallop_search(&self.level.values, self.pos, self.hi, v);
        self.rep = 0;
    }

    pub fn present(&self, v: &Value) -> bool {
        assert!(self.initialized, "cursor used before init");
        self.pos < self.hi && self.level.values[self.pos] == *v
    }

    pub fn reset(&mut self) {
        assert!(self.initialized, "cursor used before init");
        self.pos = self.lo;
        self.rep = 0;
    }

    /// Node index for descending into the next level.
    pub fn child(&self) -> usize {
        assert!(self.valid(), "child on exhausted cursor");
        self.pos
    }
}

/// Lookup handle over one segment of a tree level.
#[derive(Debug, Clone)]
pub struct LevelLookup<'t> {
    level: &'t Level,
    parent: Option<usize>,
    initialized: bool,
}

impl<'t> LevelLookup<'t> {
    pub fn new(level: &'t Level) -> Self {
        LevelLookup { level, parent: None, initialized: false }
    }

    pub fn init(&mut self, parent: Option<usize>) {
        self.parent = parent;
        self.initialized = true;
    }

    pub fn present(&self, v: &Value) -> bool {
        self.child(v).is_some()
    }

    pub fn child(&self, v: &Value) -> Option<usize> {
        assert!(self.initialized, "lookup used before init");
        let parent = self.parent?;
        if let Some(maps) = &self.level.hash {
            return maps[parent].get(v).copied();
        }
        let (lo, hi) = self.level.segment(parent);
        let at = gallop_search(&self.level.values, lo, hi, v);
        (at < hi && self.level.values[at] == *v).then_some(at)
    }
}

/// Membership query over a predicate expression; virtual, lookup-only.
pub struct PredicateLookup<F: Fn(&Value) -> bool> {
    pred: F,
    initialized: bool,
}

impl<F: Fn(&Value) -> bool> PredicateLookup<F> {
    pub fn new(pred: F) -> Self {
        PredicateLookup { pred, initialized: false }
    }

    pub fn init(&mut self) {
        self.initialized = true;
    }

    pub fn present(&self, v: &Value) -> bool {
        assert!(self.initialized, "lookup used before init");
        (self.pred)(v)
    }
}

/// Duplicate-counter cursor: yields exactly `count` unit tokens.
#[derive(Debug, Clone)]
pub struct DupCursor {
    count: u64,
    pos: u64,
    initialized: bool,
}

impl DupCursor {
    pub fn new() -> Self {
        DupCursor { count: 0, pos: 0, initialized: false }
    }

    pub fn init(&mut self, count: u64) {
        self.count = count;
        self.pos = 0;
        self.initialized = true;
    }

    pub fn valid(&self) -> bool {
        assert!(self.initialized, "cursor used before init");
        self.pos < self.count
    }

    pub fn curval(&self) -> &Value {
        assert!(self.valid(), "curval on exhausted cursor");
        &UNIT
    }

    pub fn advance(&mut self) {
        assert!(self.valid(), "advance on exhausted cursor");
        self.pos += 1;
    }

    pub fn skipto(&mut self, v: &Value) {
        assert!(self.initialized, "cursor used before init");
        if UNIT.canonical_cmp(v).is_lt() {
            self.pos = self.count;
        }
    }

    pub fn present(&self, v: &Value) -> bool {
        assert!(self.initialized, "cursor used before init");
        self.pos < self.count && UNIT == *v
    }

    pub fn reset(&mut self) {
        assert!(self.initialized, "cursor used before init");
        self.pos = 0;
    }
}

impl Default for DupCursor {
    fn default() -> Self {
        Self::new()
    }
}

/// Iterable inclusive integer range; used for dense layers and as the
/// universal set during legalization.
#[derive(Debug, Clone)]
pub struct RangeCursor {
    lo: i64,
    hi: i64,
    cur: Value,
    done: bool,
    initialized: bool,
}

impl RangeCursor {
    pub fn new(lo: i64, hi: i64) -> Self {
        RangeCursor { lo, hi, cur: Value::Int(lo), done: lo > hi, initialized: false }
    }

    pub fn init(&mut self) {
        self.cur = Value::Int(self.lo);
        self.done = self.lo > self.hi;
        self.initialized = true;
    }

    fn cur_int(&self) -> i64 {
        match self.cur {
            Value::Int(v) => v,
            _ => unreachable!(),
        }
    }

    pub fn valid(&self) -> bool {
        assert!(self.initialized, "cursor used before init");
        !self.done
    }

    pub fn curval(&self) -> &Value {
        assert!(self.valid(), "curval on exhausted cursor");
        &self.cur
    }

    pub fn advance(&mut self) {
        assert!(self.valid(), "advance on exhausted cursor");
        if self.cur_int() == self.hi {
            self.done = true;
        } else {
            self.cur = Value::Int(self.cur_int() + 1);
        }
    }

    pub fn skipto(&mut self, v: &Value) {
        assert!(self.initialized, "cursor used before init");
        match v {
            Value::Int(t) => {
                if *t > self.hi {
                    self.done = true;
                } else if *t > self.cur_int() {
                    self.cur = Value::Int(*t);
                }
            }
            Value::Null => self.done = true,
            _ => self.done = true,
        }
    }

    pub fn present(&self, v: &Value) -> bool {
        assert!(self.initialized, "cursor used before init");
        !self.done && self.cur == *v
    }

    pub fn reset(&mut self) {
        self.init();
    }
}

/// Single-value iterable layer.
#[derive(Debug, Clone)]
pub struct SingletonCursor {
    value: Value,
    done: bool,
    initialized: bool,
}

impl SingletonCursor {
    pub fn new(value: Value) -> Self {
        SingletonCursor { value, done: false, initialized: false }
    }

    pub fn init(&mut self) {
        self.done = false;
        self.initialized = true;
    }

    pub fn valid(&self) -> bool {
        assert!(self.initialized, "cursor used before init");
        !self.done
    }

    pub fn curval(&self) -> &Value {
        assert!(self.valid(), "curval on exhausted cursor");
        &self.value
    }

    pub fn advance(&mut self) {
        assert!(self.valid(), "advance on exhausted cursor");
        self.done = true;
    }

    pub fn skipto(&mut self, v: &Value) {
        assert!(self.initialized, "cursor used before init");
        if self.value.canonical_cmp(v).is_lt() {
            self.done = true;
        }
    }

    pub fn present(&self, v: &Value) -> bool {
        assert!(self.initialized, "cursor used before init");
        !self.done && self.value == *v
    }

    pub fn reset(&mut self) {
        self.init();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::Relation;
    use crate::storage::desc::{Capability, LayerKind, LevelEntry, StorageDescription};
    use crate::storage::tree::build_tree;

    fn single_level(values: &[i64]) -> crate::storage::tree::CoordinateTree {
        let rows: Vec<Vec<i64>> = values.iter().map(|&v| vec![v]).collect();
        let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
        let rel = Relation::of_ints(&["x"], &refs);
        build_tree(&rel, &StorageDescription::default_for(rel.schema())).unwrap()
    }

    #[test]
    fn skipto_lands_on_first_geq() {
        let tree = single_level(&[1, 3, 5]);
        let mut c = LevelCursor::new(&tree.levels[0], false);
        c.init(Some(0));
        assert_eq!(c.curval(), &Value::Int(1));
        c.skipto(&Value::Int(4));
        assert_eq!(c.curval(), &Value::Int(5));
        assert!(c.present(&Value::Int(5)));
    }

    #[test]
    fn present_checks_only_current_element() {
        let tree = single_level(&[1, 3, 5]);
        let mut c = LevelCursor::new(&tree.levels[0], false);
        c.init(Some(0));
        c.skipto(&Value::Int(3));
        assert!(c.present(&Value::Int(3)));
        assert!(!c.present(&Value::Int(1)));
    }

    #[test]
    fn range_iterates_inclusive() {
        let mut c = RangeCursor::new(1, 3);
        c.init();
        let mut seen = Vec::new();
        while c.valid() {
            seen.push(c.curval().clone());
            c.advance();
        }
        assert_eq!(seen, vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
    }

    #[test]
    fn dup_cursor_yields_count_tokens() {
        let mut c = DupCursor::new();
        c.init(2);
        let mut n = 0;
        while c.valid() {
            assert_eq!(c.curval(), &UNIT);
            c.advance();
            n += 1;
        }
        assert_eq!(n, 2);
    }

    #[test]
    fn expanded_cursor_repeats_values() {
        let rel = Relation::of_ints(&["x"], &[&[1], &[1], &[5]]);
        let tree = build_tree(&rel, &StorageDescription::default_for(rel.schema())).unwrap();
        let mut c = LevelCursor::new(&tree.levels[0], true);
        c.init(Some(0));
        let mut seen = Vec::new();
        while c.valid() {
            seen.push(c.curval().clone());
            c.advance();
        }
        assert_eq!(seen, vec![Value::Int(1), Value::Int(1), Value::Int(5)]);
    }

    #[test]
    fn reset_then_rescan_is_identical() {
        let tree = single_level(&[2, 4, 6]);
        let mut c = LevelCursor::new(&tree.levels[0], false);
        c.init(Some(0));
        let scan = |c: &mut LevelCursor| {
            let mut out = Vec::new();
            while c.valid() {
                out.push(c.curval().clone());
                c.advance();
            }
            out
        };
        let first = scan(&mut c);
        c.reset();
        let second = scan(&mut c);
        assert_eq!(first, second);
    }

    #[test]
    fn hash_lookup_probes_segment() {
        let rel = Relation::of_ints(&["x"], &[&[1], &[3], &[5]]);
        let desc = StorageDescription {
            order: vec!["x".into()],
            levels: vec![LevelEntry { kind: LayerKind::Hash, capability: Some(Capability::Lookup) }],
            primary_key_len: 0,
            related: vec![],
        };
        let tree = build_tree(&rel, &desc).unwrap();
        let mut l = LevelLookup::new(&tree.levels[0]);
        l.init(Some(0));
        assert!(l.present(&Value::Int(3)));
        assert!(!l.present(&Value::Int(4)));
        let mut empty = LevelLookup::new(&tree.levels[0]);
        empty.init(None);
        assert!(!empty.present(&Value::Int(3)));
    }

    #[test]
    fn predicate_lookup_evaluates() {
        let mut p = PredicateLookup::new(|v: &Value| matches!(v, Value::Int(i) if i % 2 == 0));
        p.init();
        assert!(p.present(&Value::Int(4)));
        assert!(!p.present(&Value::Int(3)));
    }

    #[test]
    #[should_panic(expected = "before init")]
    fn lookup_before_init_panics() {
        let tree = single_level(&[1]);
        let l = LevelLookup::new(&tree.levels[0]);
        let _ = l.present(&Value::Int(1));
    }
}
