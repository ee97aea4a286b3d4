//! First-order formulas with counting and distance-guarded quantifiers.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::structure::Signature;

pub type Var = Arc<str>;

pub fn var(name: &str) -> Var {
    Arc::from(name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quant {
    Exists,
    Forall,
}

impl Quant {
    pub fn dual(self) -> Quant {
        match self {
            Quant::Exists => Quant::Forall,
            Quant::Forall => Quant::Exists,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CountMode {
    AtLeast(usize),
    Exactly(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Eq(Var, Var),
    Rel(Var, Vec<Var>),
    /// `dist<=k(x,y)`: Gaifman distance at most `k`.
    Dist(usize, Var, Var),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Quant(Quant, Var, Box<Formula>),
    Count(CountMode, Var, Box<Formula>),
    /// Quantifier restricted to `{w : dist(anchor, w) ≤ bound}`.
    Guarded {
        quant: Quant,
        var: Var,
        anchor: Var,
        bound: usize,
        body: Box<Formula>,
    },
}

impl Formula {
    pub fn eq(a: &Var, b: &Var) -> Formula {
        Formula::Eq(a.clone(), b.clone())
    }

    pub fn rel(name: &str, args: &[&Var]) -> Formula {
        Formula::Rel(var(name), args.iter().map(|&v| v.clone()).collect())
    }

    pub fn dist(bound: usize, a: &Var, b: &Var) -> Formula {
        Formula::Dist(bound, a.clone(), b.clone())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn neq(a: &Var, b: &Var) -> Formula {
        Formula::not(Formula::eq(a, b))
    }

    /// Conjunction; empty gives `true`, a single item is returned as is.
    pub fn and(mut items: Vec<Formula>) -> Formula {
        match items.len() {
            0 => Formula::True,
            1 => items.pop().unwrap(),
            _ => Formula::And(items),
        }
    }

    /// Disjunction; empty gives `false`, a single item is returned as is.
    pub fn or(mut items: Vec<Formula>) -> Formula {
        match items.len() {
            0 => Formula::False,
            1 => items.pop().unwrap(),
            _ => Formula::Or(items),
        }
    }

    /// Conjunction folded into a balanced binary tree.
    pub fn and_balanced(items: Vec<Formula>) -> Formula {
        balanced(items, Formula::and, Formula::True)
    }

    /// Disjunction folded into a balanced binary tree.
    pub fn or_balanced(items: Vec<Formula>) -> Formula {
        balanced(items, Formula::or, Formula::False)
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn exists(v: &Var, f: Formula) -> Formula {
        Formula::Quant(Quant::Exists, v.clone(), Box::new(f))
    }

    pub fn forall(v: &Var, f: Formula) -> Formula {
        Formula::Quant(Quant::Forall, v.clone(), Box::new(f))
    }

    pub fn exists_all(vs: &[Var], f: Formula) -> Formula {
        vs.iter().rev().fold(f, |acc, v| Formula::exists(v, acc))
    }

    pub fn count(mode: CountMode, v: &Var, f: Formula) -> Formula {
        Formula::Count(mode, v.clone(), Box::new(f))
    }

    pub fn guarded(quant: Quant, v: &Var, anchor: &Var, bound: usize, body: Formula) -> Formula {
        Formula::Guarded {
            quant,
            var: v.clone(),
            anchor: anchor.clone(),
            bound,
            body: Box::new(body),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::True | Formula::False | Formula::Eq(..) | Formula::Rel(..) | Formula::Dist(..))
    }

    /// Free variables in sorted order.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        self.collect_free(&mut bound, &mut out);
        out.into_iter().collect()
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        let see = |v: &Var, bound: &Vec<Var>, out: &mut BTreeSet<Var>| {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        };
        match self {
            Formula::True | Formula::False => {}
            Formula::Eq(a, b) | Formula::Dist(_, a, b) => {
                see(a, bound, out);
                see(b, bound, out);
            }
            Formula::Rel(_, args) => args.iter().for_each(|a| see(a, bound, out)),
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_free(bound, out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Quant(_, v, f) | Formula::Count(_, v, f) => {
                bound.push(v.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
            Formula::Guarded { var, anchor, body, .. } => {
                see(anchor, bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn has_free(&self, v: &Var) -> bool {
        match self {
            Formula::True | Formula::False => false,
            Formula::Eq(a, b) | Formula::Dist(_, a, b) => a == v || b == v,
            Formula::Rel(_, args) => args.contains(v),
            Formula::Not(f) => f.has_free(v),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(|f| f.has_free(v)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => a.has_free(v) || b.has_free(v),
            Formula::Quant(_, w, f) | Formula::Count(_, w, f) => w != v && f.has_free(v),
            Formula::Guarded { var, anchor, body, .. } => anchor == v || (var != v && body.has_free(v)),
        }
    }

    /// Every variable name occurring in the formula, free or bound.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    fn visit_vars(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Eq(a, b) | Formula::Dist(_, a, b) => {
                f(a);
                f(b);
            }
            Formula::Rel(_, args) => args.iter().for_each(f),
            Formula::Not(g) => g.visit_vars(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit_vars(f)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Formula::Quant(_, v, g) | Formula::Count(_, v, g) => {
                f(v);
                g.visit_vars(f);
            }
            Formula::Guarded { var, anchor, body, .. } => {
                f(var);
                f(anchor);
                body.visit_vars(f);
            }
        }
    }

    /// Relation symbols with the arity of their first use.
    pub fn relations(&self) -> Vec<(Var, usize)> {
        let mut out: Vec<(Var, usize)> = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Rel(name, args) = f {
                if !out.iter().any(|(n, _)| n == name) {
                    out.push((name.clone(), args.len()));
                }
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) | Formula::Quant(_, _, g) | Formula::Count(_, _, g) => g.visit(f),
            Formula::Guarded { body, .. } => body.visit(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit(f)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// The signature formed by the relation symbols occurring in the formula.
    pub fn inferred_signature(&self) -> Signature {
        let rels = self.relations();
        Signature::new(rels.iter().map(|(n, a)| (String::from(&**n), *a))).unwrap_or_default()
    }

    /// Word length of the desugared formula over the relation symbols it uses.
    pub fn size(&self) -> usize {
        self.size_in(&self.inferred_signature())
    }

    pub fn size_in(&self, sig: &Signature) -> usize {
        Measure::new(sig).measure(self).0
    }

    /// Quantifier rank of the desugared formula.
    pub fn quantifier_rank(&self) -> usize {
        self.quantifier_rank_in(&self.inferred_signature())
    }

    pub fn quantifier_rank_in(&self, sig: &Signature) -> usize {
        Measure::new(sig).measure(self).1
    }

    /// Number of AST nodes (no desugaring).
    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Capture-avoiding renaming of free variables.
    pub fn rename_free(&self, map: &BTreeMap<Var, Var>) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        let mut supply = NameSupply::new();
        supply.reserve_all(self.all_vars());
        supply.reserve_all(map.keys().cloned());
        supply.reserve_all(map.values().cloned());
        self.rename_rec(map, &mut supply)
    }

    pub fn substitute(&self, from: &Var, to: &Var) -> Formula {
        let mut map = BTreeMap::new();
        map.insert(from.clone(), to.clone());
        self.rename_free(&map)
    }

    fn rename_rec(&self, map: &BTreeMap<Var, Var>, supply: &mut NameSupply) -> Formula {
        let get = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Eq(a, b) => Formula::Eq(get(a), get(b)),
            Formula::Dist(k, a, b) => Formula::Dist(*k, get(a), get(b)),
            Formula::Rel(r, args) => Formula::Rel(r.clone(), args.iter().map(get).collect()),
            Formula::Not(f) => Formula::not(f.rename_rec(map, supply)),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.rename_rec(map, supply)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.rename_rec(map, supply)).collect()),
            Formula::Implies(a, b) => Formula::implies(a.rename_rec(map, supply), b.rename_rec(map, supply)),
            Formula::Iff(a, b) => Formula::iff(a.rename_rec(map, supply), b.rename_rec(map, supply)),
            Formula::Quant(q, v, f) => {
                let (v2, body) = rename_binder(v, f, map, supply);
                Formula::Quant(*q, v2, Box::new(body))
            }
            Formula::Count(m, v, f) => {
                let (v2, body) = rename_binder(v, f, map, supply);
                Formula::Count(*m, v2, Box::new(body))
            }
            Formula::Guarded {
                quant,
                var,
                anchor,
                bound,
                body,
            } => {
                let anchor = get(anchor);
                let (v2, body) = rename_binder(var, body, map, supply);
                Formula::Guarded {
                    quant: *quant,
                    var: v2,
                    anchor,
                    bound: *bound,
                    body: Box::new(body),
                }
            }
        }
    }

    /// Rewrites `∃w(dist<=b(a,w) & ψ)` and `∀w(dist<=b(a,w) -> ψ)` into guard nodes.
    pub fn recognize_guards(&self) -> Formula {
        let rec = |f: &Formula| f.recognize_guards();
        match self {
            Formula::Quant(q, w, body) => {
                if let Some((anchor, bound, rest)) = guard_pattern(*q, w, body) {
                    return Formula::guarded(*q, w, &anchor, bound, rest.recognize_guards());
                }
                Formula::Quant(*q, w.clone(), Box::new(rec(body)))
            }
            Formula::Not(f) => Formula::not(rec(f)),
            Formula::And(fs) => Formula::And(fs.iter().map(rec).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(rec).collect()),
            Formula::Implies(a, b) => Formula::implies(rec(a), rec(b)),
            Formula::Iff(a, b) => Formula::iff(rec(a), rec(b)),
            Formula::Count(m, v, f) => Formula::Count(*m, v.clone(), Box::new(rec(f))),
            Formula::Guarded {
                quant,
                var,
                anchor,
                bound,
                body,
            } => Formula::guarded(*quant, var, anchor, *bound, rec(body)),
            _ => self.clone(),
        }
    }

    /// Rewrites guard nodes into plain quantifiers with an explicit distance atom.
    pub fn expand_guards(&self) -> Formula {
        let rec = |f: &Formula| f.expand_guards();
        match self {
            Formula::Guarded {
                quant,
                var,
                anchor,
                bound,
                body,
            } => {
                let d = Formula::dist(*bound, anchor, var);
                let body = rec(body);
                match quant {
                    Quant::Exists => Formula::exists(var, Formula::And(vec![d, body])),
                    Quant::Forall => Formula::forall(var, Formula::implies(d, body)),
                }
            }
            Formula::Quant(q, v, f) => Formula::Quant(*q, v.clone(), Box::new(rec(f))),
            Formula::Not(f) => Formula::not(rec(f)),
            Formula::And(fs) => Formula::And(fs.iter().map(rec).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(rec).collect()),
            Formula::Implies(a, b) => Formula::implies(rec(a), rec(b)),
            Formula::Iff(a, b) => Formula::iff(rec(a), rec(b)),
            Formula::Count(m, v, f) => Formula::Count(*m, v.clone(), Box::new(rec(f))),
            _ => self.clone(),
        }
    }
}

fn guard_pattern(q: Quant, w: &Var, body: &Formula) -> Option<(Var, usize, Formula)> {
    let dist_anchor = |f: &Formula| match f {
        Formula::Dist(b, x, y) if y == w && x != w => Some((x.clone(), *b)),
        Formula::Dist(b, x, y) if x == w && y != w => Some((y.clone(), *b)),
        _ => None,
    };
    match (q, body) {
        (Quant::Exists, Formula::And(items)) if items.len() >= 2 => {
            let (anchor, bound) = dist_anchor(&items[0])?;
            Some((anchor, bound, Formula::and(items[1..].to_vec())))
        }
        (Quant::Forall, Formula::Implies(a, b)) => {
            let (anchor, bound) = dist_anchor(a)?;
            Some((anchor, bound, (**b).clone()))
        }
        _ => None,
    }
}

fn rename_binder(v: &Var, body: &Formula, map: &BTreeMap<Var, Var>, supply: &mut NameSupply) -> (Var, Formula) {
    let mut inner: BTreeMap<Var, Var> = map.iter().filter(|(k, _)| *k != v).map(|(k, t)| (k.clone(), t.clone())).collect();
    let captures = inner.iter().any(|(k, t)| t == v && body.has_free(k));
    if captures {
        let fresh = supply.fresh(v);
        inner.insert(v.clone(), fresh.clone());
        (fresh, body.rename_rec(&inner, supply))
    } else if inner.is_empty() {
        (v.clone(), body.clone())
    } else {
        (v.clone(), body.rename_rec(&inner, supply))
    }
}

fn balanced(mut items: Vec<Formula>, join: fn(Vec<Formula>) -> Formula, unit: Formula) -> Formula {
    match items.len() {
        0 => unit,
        1 => items.pop().unwrap(),
        2 => join(items),
        n => {
            let right = items.split_off(n / 2);
            let l = balanced(items, join, unit.clone());
            let r = balanced(right, join, unit);
            join(vec![l, r])
        }
    }
}

/// Generates variable names not yet in use by appending numeric suffixes.
#[derive(Clone, Debug, Default)]
pub struct NameSupply {
    used: BTreeSet<Var>,
}

impl NameSupply {
    pub fn new() -> Self {
        NameSupply::default()
    }

    pub fn avoiding(f: &Formula) -> Self {
        let mut s = NameSupply::new();
        s.reserve_all(f.all_vars());
        s
    }

    pub fn reserve(&mut self, v: &Var) {
        self.used.insert(v.clone());
    }

    pub fn reserve_all(&mut self, vs: impl IntoIterator<Item = Var>) {
        self.used.extend(vs);
    }

    pub fn is_used(&self, v: &str) -> bool {
        self.used.contains(v)
    }

    /// `base` followed by the smallest positive number giving an unused name.
    pub fn fresh(&mut self, base: &str) -> Var {
        let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
        let stem = if stem.is_empty() { "v" } else { stem };
        for i in 1.. {
            let name = format!("{stem}{i}");
            if !self.used.contains(name.as_str()) {
                let v = var(&name);
                self.used.insert(v.clone());
                return v;
            }
        }
        unreachable!()
    }

    /// `base` itself when unused, otherwise a suffixed variant.
    pub fn fresh_exact(&mut self, base: &str) -> Var {
        if !self.used.contains(base) {
            let v = var(base);
            self.used.insert(v.clone());
            v
        } else {
            self.fresh(base)
        }
    }
}

/// Size and rank of desugared formulas, with cached distance formulas.
struct Measure<'a> {
    sig: &'a Signature,
    dist: BTreeMap<usize, (usize, usize)>,
}

impl<'a> Measure<'a> {
    fn new(sig: &'a Signature) -> Self {
        Measure { sig, dist: BTreeMap::new() }
    }

    fn dist_measure(&mut self, b: usize) -> (usize, usize) {
        if let Some(&m) = self.dist.get(&b) {
            return m;
        }
        let f = crate::construct::dist_formula(self.sig, b);
        let m = self.measure(&f);
        self.dist.insert(b, m);
        m
    }

    /// (size, quantifier rank)
    fn measure(&mut self, f: &Formula) -> (usize, usize) {
        match f {
            Formula::True => (3, 0),
            Formula::False => (4, 0),
            Formula::Eq(..) => (3, 0),
            Formula::Rel(_, args) => (2 * args.len() + 2, 0),
            Formula::Dist(b, _, _) => self.dist_measure(*b),
            Formula::Not(g) => {
                let (s, q) = self.measure(g);
                (s + 1, q)
            }
            Formula::And(gs) | Formula::Or(gs) => {
                if gs.is_empty() {
                    return self.measure(if matches!(f, Formula::And(_)) { &Formula::True } else { &Formula::False });
                }
                let per = if matches!(f, Formula::And(_)) { 6 } else { 3 };
                let mut s = per * (gs.len() - 1);
                let mut q = 0;
                for g in gs {
                    let (gs_, gq) = self.measure(g);
                    s += gs_;
                    q = q.max(gq);
                }
                (s, q)
            }
            Formula::Implies(a, b) => {
                let (sa, qa) = self.measure(a);
                let (sb, qb) = self.measure(b);
                (sa + sb + 4, qa.max(qb))
            }
            Formula::Iff(a, b) => {
                let (sa, qa) = self.measure(a);
                let (sb, qb) = self.measure(b);
                (2 * sa + 2 * sb + 14, qa.max(qb))
            }
            Formula::Quant(q, _, g) => {
                let (s, r) = self.measure(g);
                (s + if *q == Quant::Exists { 2 } else { 4 }, r + 1)
            }
            Formula::Count(mode, _, g) => {
                let (s, r) = self.measure(g);
                match *mode {
                    CountMode::AtLeast(k) => at_least_measure(k, s, r),
                    CountMode::Exactly(0) => (s + 3, r + 1),
                    CountMode::Exactly(k) => {
                        let (s1, r1) = at_least_measure(k, s, r);
                        let (s2, r2) = at_least_measure(k + 1, s, r);
                        (s1 + s2 + 7, r1.max(r2))
                    }
                }
            }
            Formula::Guarded { quant, bound, body, .. } => {
                let (sd, qd) = self.dist_measure(*bound);
                let (sb, qb) = self.measure(body);
                let s = match quant {
                    Quant::Exists => 2 + sd + sb + 6,
                    Quant::Forall => 4 + sd + sb + 4,
                };
                (s, 1 + qd.max(qb))
            }
        }
    }
}

/// Size and rank of `∃y_1…∃y_k(⋀ y_i≠y_j ∧ ∀y(⋁ y=y_i → φ))`; `∃y φ` when k = 1.
fn at_least_measure(k: usize, s: usize, r: usize) -> (usize, usize) {
    match k {
        0 => (s + 3, r),
        1 => (s + 2, r + 1),
        _ => (5 * k * k + 3 * k + 5 + s, k + 1 + r),
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, g: &Formula) -> fmt::Result {
    match g {
        Formula::Quant(..) | Formula::Count(..) | Formula::Guarded { .. } => write!(f, "({g})"),
        _ => write!(f, "{g}"),
    }
}

fn write_list<'a>(f: &mut fmt::Formatter<'_>, items: impl IntoIterator<Item = &'a Formula>, op: &str) -> fmt::Result {
    f.write_str("(")?;
    for (i, g) in items.into_iter().enumerate() {
        if i > 0 {
            write!(f, " {op} ")?;
        }
        write_operand(f, g)?;
    }
    f.write_str(")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::Rel(r, args) => {
                write!(f, "{r}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str(a)?;
                }
                f.write_str(")")
            }
            Formula::Dist(k, a, b) => write!(f, "dist<={k}({a},{b})"),
            Formula::Not(g) => match &**g {
                Formula::Eq(..) | Formula::Quant(..) | Formula::Count(..) | Formula::Guarded { .. } => write!(f, "~({g})"),
                _ => write!(f, "~{g}"),
            },
            Formula::And(gs) => match gs.len() {
                0 => f.write_str("true"),
                1 => write!(f, "{}", gs[0]),
                _ => write_list(f, gs, "&"),
            },
            Formula::Or(gs) => match gs.len() {
                0 => f.write_str("false"),
                1 => write!(f, "{}", gs[0]),
                _ => write_list(f, gs, "|"),
            },
            Formula::Implies(a, b) => write_list(f, [&**a, &**b], "->"),
            Formula::Iff(a, b) => write_list(f, [&**a, &**b], "<->"),
            Formula::Quant(q, v, g) => {
                let kw = if *q == Quant::Exists { "exists" } else { "forall" };
                write!(f, "{kw} {v}. {g}")
            }
            Formula::Count(CountMode::AtLeast(k), v, g) => write!(f, "exists>={k} {v}. {g}"),
            Formula::Count(CountMode::Exactly(k), v, g) => write!(f, "exists={k} {v}. {g}"),
            Formula::Guarded {
                quant,
                var,
                anchor,
                bound,
                body,
            } => match quant {
                Quant::Exists => {
                    write!(f, "exists {var}. (dist<={bound}({anchor},{var}) & ")?;
                    write_operand(f, body)?;
                    f.write_str(")")
                }
                Quant::Forall => {
                    write!(f, "forall {var}. (dist<={bound}({anchor},{var}) -> ")?;
                    write_operand(f, body)?;
                    f.write_str(")")
                }
            },
        }
    }
}
