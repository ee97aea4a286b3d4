//! Model checking.
//!
//! [`Evaluator`] compiles a formula once into a slot-based negation normal
//! form, rewrites it so that quantifiers range over as little as possible
//! (miniscoping, one-point elimination, case splits on quantifier-free
//! selectors) and evaluates it with memoisation of quantified subformulas.
//! [`naive_check`] is the textbook recursive evaluator and serves as an oracle.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::error::{input, Result};
use crate::formula::{CountMode, Formula, Quant, Var};
use crate::structure::Structure;

/// Values of free variables.
pub type Assignment = BTreeMap<Var, usize>;

type Slot = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Atom {
    Eq(Slot, Slot),
    Rel(u32, Vec<Slot>),
    Dist(usize, Slot, Slot),
}

impl Atom {
    /// `Err(b)` when the atom is constantly `b`.
    fn normalize(self) -> core::result::Result<Atom, bool> {
        match self {
            Atom::Eq(a, b) | Atom::Dist(_, a, b) if a == b => Err(true),
            Atom::Eq(a, b) => Ok(Atom::Eq(a.min(b), a.max(b))),
            Atom::Dist(k, a, b) => Ok(Atom::Dist(k, a.min(b), a.max(b))),
            r => Ok(r),
        }
    }

    fn slots(&self, out: &mut Vec<Slot>) {
        match self {
            Atom::Eq(a, b) | Atom::Dist(_, a, b) => {
                out.push(*a);
                out.push(*b);
            }
            Atom::Rel(_, args) => out.extend_from_slice(args),
        }
    }

    fn mentions(&self, v: Slot) -> bool {
        match self {
            Atom::Eq(a, b) | Atom::Dist(_, a, b) => *a == v || *b == v,
            Atom::Rel(_, args) => args.contains(&v),
        }
    }

    fn subst(&self, from: Slot, to: Slot) -> Atom {
        let m = |s: Slot| if s == from { to } else { s };
        match self {
            Atom::Eq(a, b) => Atom::Eq(m(*a), m(*b)),
            Atom::Dist(k, a, b) => Atom::Dist(*k, m(*a), m(*b)),
            Atom::Rel(r, args) => Atom::Rel(*r, args.iter().map(|&s| m(s)).collect()),
        }
    }

    /// The slot `v` is equated with, if this is `v = t`.
    fn eq_partner(&self, v: Slot) -> Option<Slot> {
        match *self {
            Atom::Eq(a, b) if a == v && b != v => Some(b),
            Atom::Eq(a, b) if b == v && a != v => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Meta {
    fv: Vec<Slot>,
    weight: u64,
}

#[derive(Clone, Debug)]
struct QNode {
    exists: bool,
    v: Slot,
    guard: Option<(Slot, usize)>,
    body: P,
    meta: Meta,
}

#[derive(Clone, Debug)]
struct CNode {
    pos: bool,
    mode: CountMode,
    v: Slot,
    body: P,
    meta: Meta,
}

/// Negation normal form over slots.
#[derive(Clone, Debug)]
enum P {
    Const(bool),
    Lit(bool, Atom),
    And(Vec<P>, Meta),
    Or(Vec<P>, Meta),
    Q(Box<QNode>),
    Count(Box<CNode>),
}

fn union(parts: impl IntoIterator<Item = Vec<Slot>>) -> Vec<Slot> {
    let mut out: Vec<Slot> = parts.into_iter().flatten().collect();
    out.sort_unstable();
    out.dedup();
    out
}

impl P {
    fn fv(&self) -> Vec<Slot> {
        match self {
            P::Const(_) => Vec::new(),
            P::Lit(_, a) => {
                let mut v = Vec::new();
                a.slots(&mut v);
                v.sort_unstable();
                v.dedup();
                v
            }
            P::And(_, m) | P::Or(_, m) => m.fv.clone(),
            P::Q(q) => q.meta.fv.clone(),
            P::Count(c) => c.meta.fv.clone(),
        }
    }

    fn has_free(&self, v: Slot) -> bool {
        match self {
            P::Const(_) => false,
            P::Lit(_, a) => a.mentions(v),
            P::And(_, m) | P::Or(_, m) => m.fv.binary_search(&v).is_ok(),
            P::Q(q) => q.meta.fv.binary_search(&v).is_ok(),
            P::Count(c) => c.meta.fv.binary_search(&v).is_ok(),
        }
    }

    fn weight(&self) -> u64 {
        match self {
            P::Const(_) | P::Lit(..) => 1,
            P::And(_, m) | P::Or(_, m) => m.weight,
            P::Q(q) => q.meta.weight,
            P::Count(c) => c.meta.weight,
        }
    }
}

fn junction(conj: bool, items: Vec<P>) -> P {
    let unit = conj;
    let mut out: Vec<P> = Vec::with_capacity(items.len());
    let mut lits: Vec<(bool, Atom)> = Vec::new();
    let mut push = |p: P, out: &mut Vec<P>| -> bool {
        if let P::Lit(pos, a) = &p {
            for (q, b) in &lits {
                if b == a {
                    if q == pos {
                        return true;
                    }
                    return false;
                }
            }
            lits.push((*pos, a.clone()));
        }
        out.push(p);
        true
    };
    for it in items {
        match it {
            P::Const(b) if b == unit => {}
            P::Const(_) => return P::Const(!unit),
            P::And(xs, _) if conj => {
                for x in xs {
                    if !push(x, &mut out) {
                        return P::Const(!unit);
                    }
                }
            }
            P::Or(xs, _) if !conj => {
                for x in xs {
                    if !push(x, &mut out) {
                        return P::Const(!unit);
                    }
                }
            }
            x => {
                if !push(x, &mut out) {
                    return P::Const(!unit);
                }
            }
        }
    }
    match out.len() {
        0 => P::Const(unit),
        1 => out.pop().unwrap(),
        _ => {
            out.sort_by_key(P::weight);
            let meta = Meta {
                fv: union(out.iter().map(P::fv)),
                weight: out.iter().map(P::weight).fold(1u64, u64::saturating_add),
            };
            if conj {
                P::And(out, meta)
            } else {
                P::Or(out, meta)
            }
        }
    }
}

fn mk_and(items: Vec<P>) -> P {
    junction(true, items)
}

fn mk_or(items: Vec<P>) -> P {
    junction(false, items)
}

fn mk_lit(pos: bool, a: Atom) -> P {
    match a.normalize() {
        Ok(a) => P::Lit(pos, a),
        Err(b) => P::Const(b == pos),
    }
}

fn negate(p: P) -> P {
    match p {
        P::Const(b) => P::Const(!b),
        P::Lit(pos, a) => P::Lit(!pos, a),
        P::And(xs, m) => P::Or(xs.into_iter().map(negate).collect(), m),
        P::Or(xs, m) => P::And(xs.into_iter().map(negate).collect(), m),
        P::Q(mut q) => {
            q.exists = !q.exists;
            q.body = negate(q.body);
            P::Q(q)
        }
        P::Count(mut c) => {
            c.pos = !c.pos;
            P::Count(c)
        }
    }
}

fn mk_count(pos: bool, mode: CountMode, v: Slot, body: P) -> P {
    let mut fv = body.fv();
    fv.retain(|&s| s != v);
    let weight = body.weight().saturating_mul(8).saturating_add(1);
    P::Count(Box::new(CNode { pos, mode, v, body, meta: Meta { fv, weight } }))
}

/// Rebuilds `p` through the smart constructors after mapping literals.
fn rebuild(p: &P, lit: &mut dyn FnMut(bool, &Atom) -> P, touches: &dyn Fn(&P) -> bool) -> P {
    if !touches(p) {
        return p.clone();
    }
    match p {
        P::Const(_) => p.clone(),
        P::Lit(pos, a) => lit(*pos, a),
        P::And(xs, _) => mk_and(xs.iter().map(|x| rebuild(x, lit, touches)).collect()),
        P::Or(xs, _) => mk_or(xs.iter().map(|x| rebuild(x, lit, touches)).collect()),
        P::Q(q) => {
            let guard = q.guard;
            let body = rebuild(&q.body, lit, touches);
            quant(q.exists, q.v, guard, body)
        }
        P::Count(c) => mk_count(c.pos, c.mode, c.v, rebuild(&c.body, lit, touches)),
    }
}

fn subst(p: &P, from: Slot, to: Slot) -> P {
    let map_guard = |g: Option<(Slot, usize)>| g.map(|(a, b)| (if a == from { to } else { a }, b));
    match p {
        P::Q(q) if q.meta.fv.binary_search(&from).is_ok() => {
            let body = subst(&q.body, from, to);
            quant(q.exists, q.v, map_guard(q.guard), body)
        }
        P::Count(c) if c.meta.fv.binary_search(&from).is_ok() => {
            mk_count(c.pos, c.mode, c.v, subst(&c.body, from, to))
        }
        P::And(xs, m) if m.fv.binary_search(&from).is_ok() => mk_and(xs.iter().map(|x| subst(x, from, to)).collect()),
        P::Or(xs, m) if m.fv.binary_search(&from).is_ok() => mk_or(xs.iter().map(|x| subst(x, from, to)).collect()),
        P::Lit(pos, a) if a.mentions(from) => mk_lit(*pos, a.subst(from, to)),
        _ => p.clone(),
    }
}

fn assign_lit(p: &P, atom: &Atom, value: bool) -> P {
    let mut slots = Vec::new();
    atom.slots(&mut slots);
    rebuild(
        p,
        &mut |pos, a| if a == atom { P::Const(pos == value) } else { P::Lit(pos, a.clone()) },
        &|q| slots.iter().all(|&s| q.has_free(s)),
    )
}

fn items_of(p: &P, conj: bool) -> &[P] {
    match p {
        P::And(xs, _) if conj => xs,
        P::Or(xs, _) if !conj => xs,
        _ => core::slice::from_ref(p),
    }
}

/// Quantifier with rewriting: drops vacuous binders, distributes over the
/// matching connective, pulls out independent parts, eliminates `v = t`
/// and splits on quantifier-free selectors.
fn quant(exists: bool, v: Slot, guard: Option<(Slot, usize)>, body: P) -> P {
    if !body.has_free(v) {
        return body;
    }
    // ∃ over ∨, ∀ over ∧
    let spread = matches!((&body, exists), (P::Or(..), true) | (P::And(..), false));
    if spread {
        let xs = match body {
            P::Or(xs, _) | P::And(xs, _) => xs,
            _ => unreachable!(),
        };
        let parts = xs.into_iter().map(|x| quant(exists, v, guard, x)).collect();
        return if exists { mk_or(parts) } else { mk_and(parts) };
    }
    // inner connective: ∧ under ∃, ∨ under ∀
    let conj = exists;
    let items: Vec<P> = items_of(&body, conj).to_vec();
    let (dep, indep): (Vec<P>, Vec<P>) = items.into_iter().partition(|x| x.has_free(v));
    let join = |xs: Vec<P>| if conj { mk_and(xs) } else { mk_or(xs) };
    if !indep.is_empty() {
        let mut out = indep;
        out.push(quant(exists, v, guard, join(dep)));
        return join(out);
    }
    let items = dep;
    // one-point rule
    for (i, it) in items.iter().enumerate() {
        if let P::Lit(pos, a) = it {
            if *pos == exists {
                if let Some(t) = a.eq_partner(v) {
                    let mut rest: Vec<P> = items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| subst(x, v, t)).collect();
                    if let Some((anchor, b)) = guard {
                        rest.push(mk_lit(exists, Atom::Dist(b, anchor, t)));
                    }
                    return join(rest);
                }
            }
        }
    }
    // an item of the dual connective whose parts each offer a `v = t` literal
    let handle = |x: &P| {
        items_of(x, conj)
            .iter()
            .any(|y| matches!(y, P::Lit(pos, a) if *pos == exists && a.eq_partner(v).is_some()))
    };
    for (i, it) in items.iter().enumerate() {
        let inner = items_of(it, !conj);
        if inner.len() > 1 && inner.iter().all(handle) {
            let rest: Vec<P> = items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x.clone()).collect();
            let parts = inner
                .iter()
                .map(|c| {
                    let mut xs = rest.clone();
                    xs.push(c.clone());
                    quant(exists, v, guard, join(xs))
                })
                .collect();
            return if conj { mk_or(parts) } else { mk_and(parts) };
        }
    }
    // case split on a v-free literal occurring with both polarities
    if let Some((atom, _)) = selector(&items, v, !conj) {
        let body = join(items);
        let t = quant(exists, v, guard, assign_lit(&body, &atom, true));
        let f = quant(exists, v, guard, assign_lit(&body, &atom, false));
        return mk_or(vec![mk_and(vec![P::Lit(true, atom.clone()), t]), mk_and(vec![P::Lit(false, atom), f])]);
    }
    let body = join(items);
    let mut fv = body.fv();
    fv.retain(|&s| s != v);
    if let Some((a, _)) = guard {
        if let Err(i) = fv.binary_search(&a) {
            fv.insert(i, a);
        }
    }
    let weight = body.weight().saturating_mul(8).saturating_add(1);
    P::Q(Box::new(QNode { exists, v, guard, body, meta: Meta { fv, weight } }))
}

fn selector(items: &[P], v: Slot, inner_conj: bool) -> Option<(Atom, bool)> {
    let mut seen: Vec<(usize, bool, &Atom)> = Vec::new();
    for (i, it) in items.iter().enumerate() {
        for x in items_of(it, inner_conj) {
            if let P::Lit(pos, a) = x {
                if a.mentions(v) {
                    continue;
                }
                if seen.iter().any(|(j, q, b)| *j != i && *q != *pos && *b == a) {
                    return Some((a.clone(), *pos));
                }
                seen.push((i, *pos, a));
            }
        }
    }
    None
}

struct Builder {
    scopes: Vec<(Var, Slot)>,
    next: Slot,
    rels: Vec<(Var, usize)>,
}

impl Builder {
    fn slot(&self, v: &Var) -> Slot {
        self.scopes.iter().rev().find(|(w, _)| w == v).map(|&(_, s)| s).expect("free variables are pre-bound")
    }

    fn rel(&mut self, name: &Var, arity: usize) -> Result<u32> {
        if let Some(i) = self.rels.iter().position(|(n, _)| n == name) {
            if self.rels[i].1 != arity {
                return Err(input(format!("relation {name} used with arities {} and {arity}", self.rels[i].1)));
            }
            return Ok(i as u32);
        }
        self.rels.push((name.clone(), arity));
        Ok(self.rels.len() as u32 - 1)
    }

    fn bind<T>(&mut self, v: &Var, f: impl FnOnce(&mut Self, Slot) -> Result<T>) -> Result<T> {
        let s = self.next;
        self.next += 1;
        self.scopes.push((v.clone(), s));
        let out = f(self, s);
        self.scopes.pop();
        out
    }

    fn build(&mut self, f: &Formula, pos: bool) -> Result<P> {
        Ok(match f {
            Formula::True => P::Const(pos),
            Formula::False => P::Const(!pos),
            Formula::Eq(a, b) => mk_lit(pos, Atom::Eq(self.slot(a), self.slot(b))),
            Formula::Dist(k, a, b) => mk_lit(pos, Atom::Dist(*k, self.slot(a), self.slot(b))),
            Formula::Rel(r, args) => {
                let id = self.rel(r, args.len())?;
                P::Lit(pos, Atom::Rel(id, args.iter().map(|a| self.slot(a)).collect()))
            }
            Formula::Not(g) => self.build(g, !pos)?,
            Formula::And(gs) | Formula::Or(gs) => {
                let parts = gs.iter().map(|g| self.build(g, pos)).collect::<Result<Vec<_>>>()?;
                if matches!(f, Formula::And(_)) == pos {
                    mk_and(parts)
                } else {
                    mk_or(parts)
                }
            }
            Formula::Implies(a, b) => {
                let na = self.build(a, !pos)?;
                let b = self.build(b, pos)?;
                if pos {
                    mk_or(vec![na, b])
                } else {
                    mk_and(vec![na, b])
                }
            }
            Formula::Iff(a, b) => {
                let pa = self.build(a, true)?;
                let pb = self.build(b, true)?;
                let na = negate(pa.clone());
                let nb = negate(pb.clone());
                if pos {
                    mk_and(vec![mk_or(vec![na, pb]), mk_or(vec![pa, nb])])
                } else {
                    mk_and(vec![mk_or(vec![pa, pb]), mk_or(vec![na, nb])])
                }
            }
            Formula::Quant(q, v, g) => {
                let exists = (*q == Quant::Exists) == pos;
                self.bind(v, |b, s| Ok(quant(exists, s, None, b.build(g, pos)?)))?
            }
            Formula::Guarded {
                quant: q,
                var,
                anchor,
                bound,
                body,
            } => {
                let exists = (*q == Quant::Exists) == pos;
                let a = self.slot(anchor);
                self.bind(var, |b, s| Ok(quant(exists, s, Some((a, *bound)), b.build(body, pos)?)))?
            }
            Formula::Count(mode, v, g) => {
                if *mode == CountMode::AtLeast(0) {
                    return Err(input("the threshold quantifier needs k ≥ 1"));
                }
                self.bind(v, |b, s| Ok(mk_count(pos, *mode, s, b.build(g, true)?)))?
            }
        })
    }
}

#[derive(Clone, Debug)]
enum Node {
    Const(bool),
    Lit(bool, Atom),
    And(Vec<u32>),
    Or(Vec<u32>),
    Q {
        exists: bool,
        v: Slot,
        guard: Option<(Slot, usize)>,
        body: u32,
        memo: Option<Box<[Slot]>>,
    },
    Count {
        pos: bool,
        mode: CountMode,
        v: Slot,
        body: u32,
        memo: Option<Box<[Slot]>>,
    },
}

const MEMO_SLOTS: usize = 8;

fn memo_slots(meta: &Meta) -> Option<Box<[Slot]>> {
    (meta.fv.len() <= MEMO_SLOTS && meta.weight >= 4).then(|| meta.fv.clone().into_boxed_slice())
}

/// A compiled formula, reusable across structures.
#[derive(Clone, Debug)]
pub struct Evaluator {
    nodes: Vec<Node>,
    root: u32,
    free: Vec<Var>,
    slots: usize,
    rels: Vec<(Var, usize)>,
    max_arity: usize,
}

impl Evaluator {
    pub fn new(f: &Formula) -> Result<Evaluator> {
        let free = f.free_vars();
        let mut b = Builder {
            scopes: free.iter().cloned().zip(0..).collect(),
            next: free.len() as Slot,
            rels: Vec::new(),
        };
        let p = b.build(f, true)?;
        let mut ev = Evaluator {
            nodes: Vec::new(),
            root: 0,
            free,
            slots: b.next as usize,
            max_arity: b.rels.iter().map(|r| r.1).max().unwrap_or(0),
            rels: b.rels,
        };
        ev.root = ev.compile(&p);
        Ok(ev)
    }

    fn compile(&mut self, p: &P) -> u32 {
        let node = match p {
            P::Const(b) => Node::Const(*b),
            P::Lit(pos, a) => Node::Lit(*pos, a.clone()),
            P::And(xs, _) => Node::And(xs.iter().map(|x| self.compile(x)).collect()),
            P::Or(xs, _) => Node::Or(xs.iter().map(|x| self.compile(x)).collect()),
            P::Q(q) => Node::Q {
                exists: q.exists,
                v: q.v,
                guard: q.guard,
                body: self.compile(&q.body),
                memo: memo_slots(&q.meta),
            },
            P::Count(c) => Node::Count {
                pos: c.pos,
                mode: c.mode,
                v: c.v,
                body: self.compile(&c.body),
                memo: memo_slots(&c.meta),
            },
        };
        self.nodes.push(node);
        self.nodes.len() as u32 - 1
    }

    /// Free variables in the order expected by [`Session::eval`].
    pub fn free_vars(&self) -> &[Var] {
        &self.free
    }

    /// Number of compiled nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn session<'a>(&'a self, a: &'a Structure) -> Result<Session<'a>> {
        let sig = a.signature();
        let mut rel_map = Vec::with_capacity(self.rels.len());
        for (name, arity) in &self.rels {
            let i = sig.index_of(name).ok_or_else(|| input(format!("relation {name} is not in the signature {sig}")))?;
            if sig.arity(i) != *arity {
                return Err(input(format!("relation {name} has arity {} in the signature but {arity} in the formula", sig.arity(i))));
            }
            rel_map.push(i);
        }
        Ok(Session {
            ev: self,
            a,
            env: vec![0; self.slots],
            memo: HashMap::new(),
            use_memo: a.size() < (1 << 16),
            balls: vec![None; a.size()],
            rel_map,
            tuple: vec![0; self.max_arity],
        })
    }

    /// Truth value under `asg`.
    pub fn check(&self, a: &Structure, asg: &Assignment) -> Result<bool> {
        let mut s = self.session(a)?;
        let mut values = Vec::with_capacity(self.free.len());
        for v in &self.free {
            let e = *asg.get(v).ok_or_else(|| input(format!("free variable {v} is not assigned")))?;
            if e >= a.size() {
                return Err(input(format!("variable {v} is assigned {e}, outside 0..{}", a.size())));
            }
            values.push(e);
        }
        Ok(s.eval(&values))
    }
}

/// Evaluation state for one structure; the memo table survives across calls.
pub struct Session<'a> {
    ev: &'a Evaluator,
    a: &'a Structure,
    env: Vec<u32>,
    memo: HashMap<(u32, u128), bool>,
    use_memo: bool,
    balls: Vec<Option<Vec<(u32, u32)>>>,
    rel_map: Vec<usize>,
    tuple: Vec<usize>,
}

impl<'a> Session<'a> {
    pub fn structure(&self) -> &'a Structure {
        self.a
    }

    /// Truth value with the free variables bound to `values` (in
    /// [`Evaluator::free_vars`] order). Panics on out-of-range values.
    pub fn eval(&mut self, values: &[usize]) -> bool {
        assert_eq!(values.len(), self.ev.free.len(), "one value per free variable");
        for (i, &e) in values.iter().enumerate() {
            assert!(e < self.a.size(), "element out of range");
            self.env[i] = e as u32;
        }
        self.node(self.ev.root)
    }

    fn ball(&mut self, a: usize) -> usize {
        if self.balls[a].is_none() {
            let b = self.a.bfs(&[a], usize::MAX).into_iter().map(|(e, d)| (e as u32, d as u32)).collect();
            self.balls[a] = Some(b);
        }
        self.balls[a].as_ref().unwrap().len()
    }

    fn atom(&mut self, a: &Atom) -> bool {
        match a {
            Atom::Eq(x, y) => self.env[*x as usize] == self.env[*y as usize],
            Atom::Dist(k, x, y) => self
                .a
                .distance(self.env[*x as usize] as usize, self.env[*y as usize] as usize)
                .is_some_and(|d| d <= *k),
            Atom::Rel(r, args) => {
                for (i, s) in args.iter().enumerate() {
                    self.tuple[i] = self.env[*s as usize] as usize;
                }
                self.a.holds(self.rel_map[*r as usize], &self.tuple[..args.len()])
            }
        }
    }

    fn key(&self, slots: &[Slot]) -> u128 {
        slots.iter().fold(0u128, |k, &s| (k << 16) | self.env[s as usize] as u128)
    }

    fn node(&mut self, n: u32) -> bool {
        let ev = self.ev;
        match &ev.nodes[n as usize] {
            Node::Const(b) => *b,
            Node::Lit(pos, a) => self.atom(a) == *pos,
            Node::And(xs) => xs.iter().all(|&x| self.node(x)),
            Node::Or(xs) => xs.iter().any(|&x| self.node(x)),
            Node::Q { memo, .. } | Node::Count { memo, .. } => {
                let key = match memo {
                    Some(slots) if self.use_memo => {
                        let k = (n, self.key(slots));
                        if let Some(&b) = self.memo.get(&k) {
                            return b;
                        }
                        Some(k)
                    }
                    _ => None,
                };
                let b = self.quantified(n);
                if let Some(k) = key {
                    self.memo.insert(k, b);
                }
                b
            }
        }
    }

    fn quantified(&mut self, n: u32) -> bool {
        let ev = self.ev;
        match &ev.nodes[n as usize] {
            Node::Q {
                exists,
                v,
                guard,
                body,
                ..
            } => {
                let saved = self.env[*v as usize];
                let mut result = !*exists;
                match guard {
                    Some((anchor, bound)) => {
                        let a = self.env[*anchor as usize] as usize;
                        let len = self.ball(a);
                        for i in 0..len {
                            let (e, d) = self.balls[a].as_ref().unwrap()[i];
                            if d as usize > *bound {
                                break;
                            }
                            self.env[*v as usize] = e;
                            if self.node(*body) == *exists {
                                result = *exists;
                                break;
                            }
                        }
                    }
                    None => {
                        for e in 0..self.a.size() as u32 {
                            self.env[*v as usize] = e;
                            if self.node(*body) == *exists {
                                result = *exists;
                                break;
                            }
                        }
                    }
                }
                self.env[*v as usize] = saved;
                result
            }
            Node::Count { pos, mode, v, body, .. } => {
                let saved = self.env[*v as usize];
                let (k, exact) = match *mode {
                    CountMode::AtLeast(k) => (k, false),
                    CountMode::Exactly(k) => (k, true),
                };
                let mut count = 0;
                for e in 0..self.a.size() as u32 {
                    self.env[*v as usize] = e;
                    if self.node(*body) {
                        count += 1;
                        if count > k || (!exact && count >= k) {
                            break;
                        }
                    }
                }
                self.env[*v as usize] = saved;
                let holds = if exact { count == k } else { count >= k };
                holds == *pos
            }
            _ => unreachable!(),
        }
    }
}

/// `A ⊨ φ[asg]`.
pub fn model_check(a: &Structure, f: &Formula, asg: &Assignment) -> Result<bool> {
    Evaluator::new(f)?.check(a, asg)
}

/// Direct recursive evaluation following the definition of satisfaction.
pub fn naive_check(a: &Structure, f: &Formula, asg: &Assignment) -> Result<bool> {
    for v in f.free_vars() {
        match asg.get(&v) {
            None => return Err(input(format!("free variable {v} is not assigned"))),
            Some(&e) if e >= a.size() => return Err(input(format!("variable {v} is assigned {e}, outside 0..{}", a.size()))),
            _ => {}
        }
    }
    let mut env = asg.clone();
    naive(a, f, &mut env)
}

fn naive(a: &Structure, f: &Formula, env: &mut Assignment) -> Result<bool> {
    let get = |env: &Assignment, v: &Var| env[v];
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Eq(x, y) => get(env, x) == get(env, y),
        Formula::Rel(r, args) => {
            let sig = a.signature();
            let i = sig.index_of(r).ok_or_else(|| input(format!("relation {r} is not in the signature")))?;
            if sig.arity(i) != args.len() {
                return Err(input(format!("relation {r} used with the wrong arity")));
            }
            let t: Vec<usize> = args.iter().map(|v| get(env, v)).collect();
            a.holds(i, &t)
        }
        Formula::Dist(k, x, y) => a.distance(get(env, x), get(env, y)).is_some_and(|d| d <= *k),
        Formula::Not(g) => !naive(a, g, env)?,
        Formula::And(gs) => {
            for g in gs {
                if !naive(a, g, env)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(gs) => {
            for g in gs {
                if naive(a, g, env)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Implies(x, y) => !naive(a, x, env)? || naive(a, y, env)?,
        Formula::Iff(x, y) => naive(a, x, env)? == naive(a, y, env)?,
        Formula::Quant(q, v, g) => {
            let saved = env.get(v).copied();
            let mut result = *q == Quant::Forall;
            for e in 0..a.size() {
                env.insert(v.clone(), e);
                if naive(a, g, env)? != result {
                    result = !result;
                    break;
                }
            }
            restore(env, v, saved);
            result
        }
        Formula::Guarded {
            quant,
            var,
            anchor,
            bound,
            body,
        } => {
            let c = get(env, anchor);
            let saved = env.get(var).copied();
            let mut result = *quant == Quant::Forall;
            for e in 0..a.size() {
                if a.distance(c, e).is_none_or(|d| d > *bound) {
                    continue;
                }
                env.insert(var.clone(), e);
                if naive(a, body, env)? != result {
                    result = !result;
                    break;
                }
            }
            restore(env, var, saved);
            result
        }
        Formula::Count(mode, v, g) => {
            let saved = env.get(v).copied();
            let mut count = 0;
            for e in 0..a.size() {
                env.insert(v.clone(), e);
                if naive(a, g, env)? {
                    count += 1;
                }
            }
            restore(env, v, saved);
            match *mode {
                CountMode::AtLeast(0) => return Err(input("the threshold quantifier needs k ≥ 1")),
                CountMode::AtLeast(k) => count >= k,
                CountMode::Exactly(k) => count == k,
            }
        }
    })
}

fn restore(env: &mut Assignment, v: &Var, saved: Option<usize>) {
    match saved {
        Some(e) => env.insert(v.clone(), e),
        None => env.remove(v),
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::var;
    use crate::parse::parse_formula;
    use crate::structure::tests::{path, sig_e};
    use crate::structure::Signature;
    use alloc::sync::Arc;
    use proptest::prelude::*;

    fn asg(pairs: &[(&str, usize)]) -> Assignment {
        pairs.iter().map(|&(v, e)| (var(v), e)).collect()
    }

    #[test]
    fn edge_exists() {
        let a = Structure::new(sig_e(), 2, vec![vec![vec![0, 1]]]).unwrap();
        let f = parse_formula("exists x. exists y. E(x,y)").unwrap();
        assert!(model_check(&a, &f, &asg(&[])).unwrap());
    }

    #[test]
    fn counting_on_singleton() {
        let a = Structure::new(sig_e(), 1, vec![vec![]]).unwrap();
        let f = parse_formula("exists>=2 y. y = y").unwrap();
        assert!(!model_check(&a, &f, &asg(&[])).unwrap());
    }

    #[test]
    fn guard_restricts_range() {
        let a = path(3);
        let g = parse_formula("exists w. (dist<=1(z,w) & ~(w = z) & ~E(z,w))").unwrap().recognize_guards();
        assert!(matches!(g, Formula::Guarded { .. }));
        let plain = parse_formula("exists w. (dist<=1(z,w) & ~(w = z) & ~E(z,w))").unwrap();
        for z in 0..3 {
            let s = asg(&[("z", z)]);
            assert_eq!(model_check(&a, &g, &s).unwrap(), model_check(&a, &plain, &s).unwrap());
            assert_eq!(model_check(&a, &g, &s).unwrap(), naive_check(&a, &g, &s).unwrap());
        }
    }

    #[test]
    fn uncovered_variable_is_an_error() {
        let a = path(2);
        let f = parse_formula("E(x,y)").unwrap();
        assert!(model_check(&a, &f, &asg(&[("x", 0)])).is_err());
        assert!(naive_check(&a, &f, &asg(&[("x", 0)])).is_err());
    }

    #[test]
    fn unknown_relation_is_an_error() {
        let a = path(2);
        let f = parse_formula("exists x. L(x)").unwrap();
        assert!(model_check(&a, &f, &asg(&[])).is_err());
    }

    #[test]
    fn selector_split_matches_naive() {
        let f = parse_formula(
            "exists s. exists t. forall z. ((s = t & exists w. E(z,w)) | (~(s = t) & L(z)))",
        )
        .unwrap();
        let sig = Arc::new(Signature::new([("E", 2), ("L", 1)]).unwrap());
        for n in 1..4 {
            for bits in 0..(1u32 << n) {
                let labels: Vec<Vec<usize>> = (0..n).filter(|i| bits >> i & 1 == 1).map(|i| vec![i]).collect();
                let edges = vec![vec![0, n - 1]];
                let a = Structure::new(sig.clone(), n, vec![edges, labels]).unwrap();
                assert_eq!(model_check(&a, &f, &asg(&[])).unwrap(), naive_check(&a, &f, &asg(&[])).unwrap());
            }
        }
    }

    fn arb_structure() -> impl Strategy<Value = Structure> {
        (1usize..5).prop_flat_map(|n| {
            let pair = (0..n, 0..n).prop_map(|(a, b)| vec![a, b]);
            (
                Just(n),
                proptest::collection::vec(pair, 0..6),
                proptest::collection::vec(0..n, 0..n + 1),
            )
                .prop_map(|(n, es, ls)| {
                    let sig = Arc::new(Signature::new([("E", 2), ("L", 1)]).unwrap());
                    Structure::new(sig, n, vec![es, ls.into_iter().map(|l| vec![l]).collect()]).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn compiled_agrees_with_naive(f in crate::parse::tests::arb_formula(4), a in arb_structure()) {
            let free = f.free_vars();
            let ev = Evaluator::new(&f).unwrap();
            let mut s = ev.session(&a).unwrap();
            let n = a.size();
            let total = n.pow(free.len() as u32);
            for code in 0..total {
                let mut c = code;
                let values: Vec<usize> = free.iter().map(|_| { let e = c % n; c /= n; e }).collect();
                let asg: Assignment = free.iter().cloned().zip(values.iter().copied()).collect();
                prop_assert_eq!(s.eval(&values), naive_check(&a, &f, &asg).unwrap(), "{} {:?}", f, values);
            }
        }

        #[test]
        fn desugaring_preserves_truth(f in crate::parse::tests::arb_formula(2), a in arb_structure()) {
            let sig = a.signature().clone();
            let d = crate::construct::desugar(&f, &sig).unwrap();
            prop_assert_eq!(d.size_in(&sig), f.size_in(&sig));
            let free = d.free_vars();
            let ev = Evaluator::new(&d).unwrap();
            let n = a.size();
            for code in 0..n.pow(free.len() as u32) {
                let mut c = code;
                let asg: Assignment = free.iter().map(|v| { let e = c % n; c /= n; (v.clone(), e) }).collect();
                prop_assert_eq!(ev.check(&a, &asg).unwrap(), naive_check(&a, &f, &asg).unwrap());
            }
        }
    }
}
