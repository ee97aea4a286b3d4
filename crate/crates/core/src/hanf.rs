//! Boolean combinations of type formulas and counting sentences.
//!
//! `fo_to_hnf` is a desk-scale construction: it labels every (structure,
//! tuple) pair of a pool of small `d`-bounded structures with the truth value
//! of the input, describes each pair by the type of the tuple and the capped
//! type histogram of the structure, and grows a decision tree over those
//! features. The result agrees with the input on the pool by construction.

use alloc::boxed::Box;
use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use hashbrown::HashMap;

use crate::bsnf::advance;
use crate::construct::{type_formula, type_formula_with};
use crate::error::{input, resource, Error, Result};
use crate::eval::Evaluator;
use crate::formula::{CountMode, Formula, NameSupply, Var};
use crate::oracle::{for_each_structure, PoolSpec, DEFAULT_MAX_EVALUATIONS};
use crate::rtype::{canonical_form, extract_rtype, enumerate_types, RType, TypeBudget, TypeRegistry};
use crate::structure::{nu, Signature, Structure};

/// `∃≥k y type_τ(y)` or `∃=k y type_τ(y)` for a one-center type `τ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountingSentence {
    pub mode: CountMode,
    pub ty: RType,
}

impl CountingSentence {
    pub fn new(mode: CountMode, ty: &RType) -> Result<CountingSentence> {
        if ty.arity() != 1 {
            return Err(input(format!("counting sentences need a one-center type, got {} centers", ty.arity())));
        }
        if mode == CountMode::AtLeast(0) {
            return Err(input("the threshold quantifier needs k ≥ 1"));
        }
        Ok(CountingSentence {
            mode,
            ty: canonical_form(ty),
        })
    }

    pub fn to_formula(&self, y: &Var) -> Formula {
        let mut supply = NameSupply::new();
        supply.reserve(y);
        Formula::count(self.mode, y, type_formula_with(&self.ty, core::slice::from_ref(y), &mut supply))
    }
}

/// The combination tree of a formula in counting normal form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Hnf {
    Const(bool),
    Count(CountingSentence),
    /// `type_ρ(vars)`.
    Type { ty: RType, vars: Vec<Var> },
    Not(Box<Hnf>),
    And(Vec<Hnf>),
    Or(Vec<Hnf>),
}

impl Hnf {
    pub fn is_positive(&self) -> bool {
        match self {
            Hnf::Not(_) => false,
            Hnf::And(xs) | Hnf::Or(xs) => xs.iter().all(Hnf::is_positive),
            _ => true,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Hnf::Not(x) => x.leaf_count(),
            Hnf::And(xs) | Hnf::Or(xs) => xs.iter().map(Hnf::leaf_count).sum(),
            _ => 1,
        }
    }

    fn radius(&self) -> usize {
        match self {
            Hnf::Const(_) => 0,
            Hnf::Count(c) => c.ty.radius(),
            Hnf::Type { ty, .. } => ty.radius(),
            Hnf::Not(x) => x.radius(),
            Hnf::And(xs) | Hnf::Or(xs) => xs.iter().map(Hnf::radius).max().unwrap_or(0),
        }
    }

    fn to_formula(&self, y: &Var) -> Formula {
        match self {
            Hnf::Const(true) => Formula::True,
            Hnf::Const(false) => Formula::False,
            Hnf::Count(c) => c.to_formula(y),
            Hnf::Type { ty, vars } => type_formula(ty, vars).expect("arity checked on construction"),
            Hnf::Not(x) => Formula::not(x.to_formula(y)),
            Hnf::And(xs) => Formula::and(xs.iter().map(|x| x.to_formula(y)).collect()),
            Hnf::Or(xs) => Formula::or(xs.iter().map(|x| x.to_formula(y)).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HnfFormula {
    pub root: Hnf,
    /// Only `∧` and `∨` above the leaves.
    pub positive: bool,
    /// Largest radius of a leaf type.
    pub radius: usize,
    pub free: Vec<Var>,
}

impl HnfFormula {
    pub fn new(root: Hnf, mut free: Vec<Var>) -> Result<HnfFormula> {
        free.sort();
        free.dedup();
        let mut bad = None;
        check_leaves(&root, &mut |h| {
            if let Hnf::Type { ty, vars } = h {
                if ty.arity() != vars.len() {
                    bad = Some(input(format!("type with {} centers applied to {} variables", ty.arity(), vars.len())));
                } else if let Some(v) = vars.iter().find(|v| !free.contains(v)) {
                    bad = Some(input(format!("type formula over {v}, which is not free")));
                }
            }
        });
        if let Some(e) = bad {
            return Err(e);
        }
        Ok(HnfFormula {
            positive: root.is_positive(),
            radius: root.radius(),
            root,
            free,
        })
    }

    /// The first-order formula, with `x = x` conjuncts keeping every free
    /// variable that no leaf mentions.
    pub fn to_formula(&self) -> Formula {
        let mut supply = NameSupply::new();
        supply.reserve_all(self.free.iter().cloned());
        let y = supply.fresh("y");
        let f = self.root.to_formula(&y);
        pad_free(f, &self.free)
    }

    pub fn size(&self) -> usize {
        self.to_formula().size()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }
}

impl fmt::Display for HnfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

fn check_leaves(h: &Hnf, f: &mut dyn FnMut(&Hnf)) {
    match h {
        Hnf::Not(x) => check_leaves(x, f),
        Hnf::And(xs) | Hnf::Or(xs) => xs.iter().for_each(|x| check_leaves(x, f)),
        _ => f(h),
    }
}

pub(crate) fn pad_free(f: Formula, free: &[Var]) -> Formula {
    let have = f.free_vars();
    let missing: Vec<Formula> = free.iter().filter(|v| !have.contains(v)).map(|v| Formula::eq(v, v)).collect();
    if missing.is_empty() {
        return f;
    }
    let mut items = vec![f];
    items.extend(missing);
    Formula::and(items)
}

/// Realisation counts of one-center types, each capped at `threshold`
/// (a stored value equal to the threshold reads "at least").
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SphereHistogram {
    pub radius: usize,
    pub threshold: usize,
    /// Indexed like the registry members.
    pub counts: Vec<usize>,
}

pub fn histogram(a: &Structure, r: usize, t: usize, reg: &TypeRegistry) -> Result<SphereHistogram> {
    if reg.centers() != 1 || reg.radius() != r {
        return Err(input("histograms need the registry of one-center types of the same radius"));
    }
    let a = a.with_signature(reg.signature().clone())?;
    let mut counts = vec![0; reg.len()];
    for e in 0..a.size() {
        let ty = extract_rtype(&a, &[e], r)?;
        let i = reg
            .position(&ty)
            .ok_or_else(|| input(format!("element {e} has a type outside the registry (degree {} > {}?)", a.degree(), reg.degree())))?;
        counts[i] = (counts[i] + 1).min(t);
    }
    Ok(SphereHistogram {
        radius: r,
        threshold: t,
        counts,
    })
}

/// Limits for the construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HanfBudget {
    pub types: TypeBudget,
    /// Largest witness structure.
    pub pool_size: usize,
    /// Fixes the radius instead of searching for the smallest consistent one.
    pub radius: Option<usize>,
    /// Ceiling on (structure, tuple) pairs.
    pub max_evaluations: u64,
    /// Ceiling on leaves of the output.
    pub max_leaves: usize,
}

impl Default for HanfBudget {
    fn default() -> Self {
        HanfBudget {
            types: TypeBudget::default(),
            pool_size: 5,
            radius: None,
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            max_leaves: 200_000,
        }
    }
}

/// Facts about one run of the construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HnfReport {
    pub radius: usize,
    pub threshold: usize,
    pub pool_structures: usize,
    pub rows: usize,
    /// Realised types of the free tuple at the chosen radius.
    pub tuple_types: usize,
    /// Realised one-center types at the chosen radius.
    pub sphere_types: usize,
}

/// Largest radius tried for quantifier rank `q`.
pub fn radius_bound(q: usize) -> usize {
    let mut p: usize = 1;
    for _ in 0..q {
        p = p.saturating_mul(3);
    }
    (p - 1) / 2
}

/// Counting threshold for rank `q`, `n` free variables and radius `r`.
pub fn threshold(q: usize, n: usize, d: usize, r: usize) -> usize {
    let v = nu(d, r).unwrap_or(usize::MAX);
    (q + n).saturating_mul(v).saturating_add(1)
}

pub fn fo_to_hnf(phi: &Formula, d: usize, sig: &Signature, budget: &HanfBudget) -> Result<HnfFormula> {
    Ok(HanfContext::new(sig, d, budget)?.fo_to_hnf(phi)?.0)
}

/// Per-radius table of element types over the pool.
struct ElemTable {
    reps: Vec<RType>,
    /// Sparse uncapped histogram of each structure.
    hist: Vec<Vec<(u32, u32)>>,
}

/// Per-(arity, radius) table of tuple types over the pool.
struct TupleTable {
    reps: Vec<RType>,
    of: Vec<Vec<u32>>,
}

/// A witness pool with cached type tables, shared by many constructions.
pub struct HanfContext {
    sig: Arc<Signature>,
    degree: usize,
    budget: HanfBudget,
    pool: Vec<Structure>,
    elems: RefCell<BTreeMap<usize, Arc<ElemTable>>>,
    tuples: RefCell<BTreeMap<(usize, usize), Arc<TupleTable>>>,
}

impl HanfContext {
    pub fn new(sig: &Signature, d: usize, budget: &HanfBudget) -> Result<HanfContext> {
        if !sig.constants().is_empty() {
            return Err(input("the construction needs a relational signature"));
        }
        let sig = Arc::new(sig.relational());
        let spec = PoolSpec::new(sig.clone(), Some(d), budget.pool_size.max(1))
            .iso_classes()
            .with_max_evaluations(budget.max_evaluations);
        let mut pool = Vec::new();
        let mut over = false;
        for_each_structure(&spec, &mut |s| {
            if pool.len() as u64 >= budget.max_evaluations {
                over = true;
                return false;
            }
            pool.push(s);
            true
        })?;
        if over {
            return Err(resource(format!("witness pool exceeds {} structures", budget.max_evaluations)));
        }
        Ok(HanfContext {
            sig,
            degree: d,
            budget: *budget,
            pool,
            elems: RefCell::new(BTreeMap::new()),
            tuples: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn pool(&self) -> &[Structure] {
        &self.pool
    }

    fn elem_table(&self, r: usize) -> Arc<ElemTable> {
        if let Some(t) = self.elems.borrow().get(&r) {
            return t.clone();
        }
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut reps = Vec::new();
        let mut of = Vec::with_capacity(self.pool.len());
        for s in &self.pool {
            let row: Vec<u32> = (0..s.size())
                .map(|e| {
                    let t = extract_rtype(s, &[e], r).expect("element in range");
                    let code = t.code();
                    *ids.entry(code).or_insert_with(|| {
                        reps.push(canonical_form(&t));
                        reps.len() as u32 - 1
                    })
                })
                .collect();
            of.push(row);
        }
        let (reps, of) = sort_by_code(reps, of);
        let hist = of
            .iter()
            .map(|row| {
                let mut m: BTreeMap<u32, u32> = BTreeMap::new();
                for &t in row {
                    *m.entry(t).or_insert(0) += 1;
                }
                m.into_iter().collect()
            })
            .collect();
        let t = Arc::new(ElemTable { reps, hist });
        self.elems.borrow_mut().insert(r, t.clone());
        t
    }

    fn tuple_table(&self, n: usize, r: usize) -> Arc<TupleTable> {
        if let Some(t) = self.tuples.borrow().get(&(n, r)) {
            return t.clone();
        }
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut reps = Vec::new();
        let mut of = Vec::with_capacity(self.pool.len());
        for s in &self.pool {
            let mut row = Vec::new();
            let mut values = vec![0usize; n];
            loop {
                let t = extract_rtype(s, &values, r).expect("centers in range");
                let code = t.code();
                let id = *ids.entry(code).or_insert_with(|| {
                    reps.push(canonical_form(&t));
                    reps.len() as u32 - 1
                });
                row.push(id);
                if !advance(&mut values, s.size()) {
                    break;
                }
            }
            of.push(row);
        }
        let (reps, of) = sort_by_code(reps, of);
        let t = Arc::new(TupleTable { reps, of });
        self.tuples.borrow_mut().insert((n, r), t.clone());
        t
    }

    /// Builds the counting normal form of `φ` from the pool.
    pub fn fo_to_hnf(&self, phi: &Formula) -> Result<(HnfFormula, HnfReport)> {
        let free = phi.free_vars();
        let n = free.len();
        for (name, arity) in phi.relations() {
            match self.sig.index_of(&name) {
                Some(i) if self.sig.arity(i) == arity => {}
                _ => return Err(input(format!("relation {name}/{arity} is not in the signature"))),
            }
        }
        let q = phi.quantifier_rank_in(&self.sig);
        let tuples: u64 = self.pool.iter().map(|s| (s.size() as u64).saturating_pow(n as u32)).fold(0, u64::saturating_add);
        if tuples > self.budget.max_evaluations {
            return Err(resource(format!("{tuples} structure-tuple pairs exceed the ceiling {}", self.budget.max_evaluations)));
        }
        let labels = self.labels(phi)?;
        let radii: Vec<usize> = match self.budget.radius {
            Some(r) => vec![r],
            None => {
                let top = radius_bound(q).min(self.budget.pool_size.saturating_sub(1));
                (0..=top).collect()
            }
        };
        let mut last_conflict = None;
        for &r in &radii {
            let t = threshold(q, n, self.degree, r).min(u32::MAX as usize) as u32;
            match self.rows(n, r, t, &labels) {
                Ok(data) => {
                    let tree = grow(&data, &(0..data.rows.len()).collect::<Vec<_>>(), n > 0);
                    let root = data.to_hnf(&tree, &free);
                    if root.leaf_count() > self.budget.max_leaves {
                        return Err(resource(format!("{} leaves exceed the ceiling {}", root.leaf_count(), self.budget.max_leaves)));
                    }
                    let report = HnfReport {
                        radius: r,
                        threshold: t as usize,
                        pool_structures: self.pool.len(),
                        rows: data.rows.len(),
                        tuple_types: data.tuple_reps[r].len(),
                        sphere_types: data.elem_reps[r].len(),
                    };
                    return Ok((HnfFormula::new(root, free)?, report));
                }
                Err(e) => last_conflict = Some(e),
            }
        }
        Err(last_conflict.unwrap_or_else(|| Error::Inconsistent("no radius available".into())))
    }

    fn labels(&self, phi: &Formula) -> Result<Vec<Vec<bool>>> {
        let ev = Evaluator::new(phi)?;
        let free = ev.free_vars().to_vec();
        let mut sorted = free.clone();
        sorted.sort();
        let n = sorted.len();
        let order: Vec<usize> = free.iter().map(|v| sorted.binary_search(v).unwrap()).collect();
        let mut out = Vec::with_capacity(self.pool.len());
        for s in &self.pool {
            let mut session = ev.session(s)?;
            let mut row = Vec::new();
            let mut values = vec![0usize; n];
            let mut vs = vec![0usize; order.len()];
            loop {
                for (i, &p) in order.iter().enumerate() {
                    vs[i] = values[p];
                }
                row.push(session.eval(&vs));
                if !advance(&mut values, s.size()) {
                    break;
                }
            }
            out.push(row);
        }
        Ok(out)
    }

    fn rows(&self, n: usize, r: usize, t: u32, labels: &[Vec<bool>]) -> Result<Rows> {
        let elems: Vec<Arc<ElemTable>> = (0..=r).map(|k| self.elem_table(k)).collect();
        let tups: Vec<Option<Arc<TupleTable>>> = (0..=r).map(|k| (n > 0).then(|| self.tuple_table(n, k))).collect();
        // histograms interned per radius
        let mut hist_ids: Vec<HashMap<Vec<(u32, u32)>, u32>> = vec![HashMap::new(); r + 1];
        let mut hists: Vec<Vec<Vec<(u32, u32)>>> = vec![Vec::new(); r + 1];
        let mut index: HashMap<(u32, u32), usize> = HashMap::new();
        let mut rows: Vec<Row> = Vec::new();
        for (si, s) in self.pool.iter().enumerate() {
            let h: Vec<u32> = (0..=r)
                .map(|k| {
                    let capped: Vec<(u32, u32)> = elems[k].hist[si].iter().map(|&(ty, c)| (ty, c.min(t))).collect();
                    let next = hists[k].len() as u32;
                    *hist_ids[k].entry(capped.clone()).or_insert_with(|| {
                        hists[k].push(capped);
                        next
                    })
                })
                .collect();
            for (ti, &label) in labels[si].iter().enumerate() {
                let rho: Vec<u32> = (0..=r).map(|k| tups[k].as_ref().map_or(0, |tt| tt.of[si][ti])).collect();
                match index.get(&(rho[r], h[r])) {
                    Some(&i) => {
                        if rows[i].label != label {
                            let (wi, _) = rows[i].witness;
                            return Err(Error::Inconsistent(format!(
                                "radius {r}: structures of sizes {} and {} look alike but disagree",
                                self.pool[wi].size(),
                                s.size()
                            )));
                        }
                    }
                    None => {
                        index.insert((rho[r], h[r]), rows.len());
                        rows.push(Row {
                            rho,
                            hist: h.clone(),
                            label,
                            witness: (si, ti),
                        });
                    }
                }
            }
        }
        Ok(Rows {
            rows,
            hists,
            elem_reps: elems.iter().map(|e| e.reps.clone()).collect(),
            tuple_reps: tups.iter().map(|t| t.as_ref().map_or(Vec::new(), |t| t.reps.clone())).collect(),
            radius: r,
            threshold: t,
        })
    }
}

fn sort_by_code(reps: Vec<RType>, of: Vec<Vec<u32>>) -> (Vec<RType>, Vec<Vec<u32>>) {
    let mut order: Vec<(Vec<u32>, usize)> = reps.iter().enumerate().map(|(i, t)| (t.code(), i)).collect();
    order.sort();
    let mut remap = vec![0u32; reps.len()];
    for (new, (_, old)) in order.iter().enumerate() {
        remap[*old] = new as u32;
    }
    let mut reps: Vec<Option<RType>> = reps.into_iter().map(Some).collect();
    let sorted = order.iter().map(|(_, old)| reps[*old].take().unwrap()).collect();
    let of = of.into_iter().map(|row| row.into_iter().map(|i| remap[i as usize]).collect()).collect();
    (sorted, of)
}

struct Row {
    /// Tuple type id per radius.
    rho: Vec<u32>,
    /// Histogram id per radius.
    hist: Vec<u32>,
    label: bool,
    witness: (usize, usize),
}

struct Rows {
    rows: Vec<Row>,
    hists: Vec<Vec<Vec<(u32, u32)>>>,
    elem_reps: Vec<Vec<RType>>,
    tuple_reps: Vec<Vec<RType>>,
    radius: usize,
    threshold: u32,
}

enum Tree {
    Leaf(bool),
    /// `count of type ty at radius ≥ k`.
    Count {
        radius: usize,
        ty: u32,
        k: u32,
        yes: Box<Tree>,
        no: Box<Tree>,
    },
    /// One branch per realised type of the free tuple.
    Split { radius: usize, branches: Vec<(u32, Tree)> },
}

#[derive(Clone, Copy, PartialEq)]
enum Cand {
    Count { radius: usize, ty: u32, k: u32 },
    Split { radius: usize },
}

fn impurity(p: usize, m: usize) -> f64 {
    let n = (p + m) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - ((p * p + m * m) as f64) / n
}

/// Grows a tree over the rows `idx`, which must be non-empty.
fn grow(data: &Rows, idx: &[usize], splits: bool) -> Tree {
    let pos = idx.iter().filter(|&&i| data.rows[i].label).count();
    if pos == 0 || pos == idx.len() {
        return Tree::Leaf(pos > 0);
    }
    let base = impurity(pos, idx.len() - pos);
    // (gain, branches, radius, kind, ty, k)
    let mut best: Option<(f64, usize, Cand)> = None;
    let mut consider = |gain: f64, branches: usize, c: Cand| {
        let better = match &best {
            None => true,
            Some((g, b, old)) => {
                if gain > *g + 1e-9 {
                    true
                } else if gain + 1e-9 < *g {
                    false
                } else if branches != *b {
                    branches < *b
                } else {
                    rank(&c) < rank(old)
                }
            }
        };
        if better {
            best = Some((gain, branches, c));
        }
    };
    for radius in 0..=data.radius {
        // counting features
        let mut table: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
        for &i in idx {
            let row = &data.rows[i];
            for &(ty, c) in &data.hists[radius][row.hist[radius] as usize] {
                let e = table.entry(ty).or_insert_with(|| vec![(0, 0); data.threshold as usize + 1]);
                let slot = &mut e[c as usize];
                if row.label {
                    slot.0 += 1;
                } else {
                    slot.1 += 1;
                }
            }
        }
        for (ty, by_count) in &table {
            // rows with count ≥ k, for decreasing k
            let (mut yp, mut ym) = (0, 0);
            for k in (1..by_count.len()).rev() {
                yp += by_count[k].0;
                ym += by_count[k].1;
                let (np, nm) = (pos - yp, idx.len() - pos - ym);
                if yp + ym == 0 || np + nm == 0 {
                    continue;
                }
                let gain = base - impurity(yp, ym) - impurity(np, nm);
                consider(gain, 2, Cand::Count { radius, ty: *ty, k: k as u32 });
            }
        }
        if splits {
            let mut groups: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
            for &i in idx {
                let e = groups.entry(data.rows[i].rho[radius]).or_insert((0, 0));
                if data.rows[i].label {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
            if groups.len() > 1 {
                let rest: f64 = groups.values().map(|&(p, m)| impurity(p, m)).sum();
                consider(base - rest, groups.len(), Cand::Split { radius });
            }
        }
    }
    match best.expect("distinct rows are separated by some feature").2 {
        Cand::Count { radius, ty, k } => {
            let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| {
                let h = &data.hists[radius][data.rows[i].hist[radius] as usize];
                h.iter().any(|&(t, c)| t == ty && c >= k)
            });
            Tree::Count {
                radius,
                ty,
                k,
                yes: Box::new(grow(data, &yes, splits)),
                no: Box::new(grow(data, &no, splits)),
            }
        }
        Cand::Split { radius } => {
            let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &i in idx {
                groups.entry(data.rows[i].rho[radius]).or_default().push(i);
            }
            Tree::Split {
                radius,
                branches: groups.into_iter().map(|(t, rows)| (t, grow(data, &rows, splits))).collect(),
            }
        }
    }
}

fn rank(c: &Cand) -> (usize, usize, u32, u32) {
    match *c {
        Cand::Count { radius, ty, k } => (radius, 0, ty, k),
        Cand::Split { radius } => (radius, 1, 0, 0),
    }
}

impl Rows {
    fn to_hnf(&self, tree: &Tree, free: &[Var]) -> Hnf {
        match tree {
            Tree::Leaf(b) => Hnf::Const(*b),
            Tree::Count { radius, ty, k, yes, no } => {
                let c = Hnf::Count(CountingSentence {
                    mode: CountMode::AtLeast(*k as usize),
                    ty: self.elem_reps[*radius][*ty as usize].clone(),
                });
                let yes = self.to_hnf(yes, free);
                let no = self.to_hnf(no, free);
                let notc = Hnf::Not(Box::new(c.clone()));
                match (yes, no) {
                    (Hnf::Const(true), Hnf::Const(false)) => c,
                    (Hnf::Const(false), Hnf::Const(true)) => notc,
                    (Hnf::Const(true), n) => Hnf::Or(vec![c, n]),
                    (n, Hnf::Const(true)) => Hnf::Or(vec![notc, n]),
                    (Hnf::Const(false), n) => Hnf::And(vec![notc, n]),
                    (y, Hnf::Const(false)) => Hnf::And(vec![c, y]),
                    (y, n) => Hnf::Or(vec![Hnf::And(vec![c, y]), Hnf::And(vec![notc, n])]),
                }
            }
            Tree::Split { radius, branches } => {
                let mut out = Vec::new();
                for (t, sub) in branches {
                    let ty = Hnf::Type {
                        ty: self.tuple_reps[*radius][*t as usize].clone(),
                        vars: free.to_vec(),
                    };
                    match self.to_hnf(sub, free) {
                        Hnf::Const(false) => {}
                        Hnf::Const(true) => out.push(ty),
                        h => out.push(Hnf::And(vec![ty, h])),
                    }
                }
                match out.len() {
                    0 => Hnf::Const(false),
                    1 => out.pop().unwrap(),
                    _ => Hnf::Or(out),
                }
            }
        }
    }
}

/// Pushes negations to the leaves and replaces negated leaves by
/// disjunctions of positive ones.
pub fn hnf_to_positive(h: &HnfFormula, d: usize, sig: &Signature, budget: &TypeBudget) -> Result<HnfFormula> {
    let sig = Arc::new(sig.relational());
    let mut regs: BTreeMap<(usize, usize), TypeRegistry> = BTreeMap::new();
    let root = positive(&h.root, true, d, &sig, budget, &mut regs)?;
    let mut out = HnfFormula::new(root, h.free.clone())?;
    out.radius = h.radius;
    Ok(out)
}

fn positive(
    h: &Hnf,
    pos: bool,
    d: usize,
    sig: &Arc<Signature>,
    budget: &TypeBudget,
    regs: &mut BTreeMap<(usize, usize), TypeRegistry>,
) -> Result<Hnf> {
    Ok(match h {
        Hnf::Const(b) => Hnf::Const(*b == pos),
        Hnf::Not(x) => positive(x, !pos, d, sig, budget, regs)?,
        Hnf::And(xs) | Hnf::Or(xs) => {
            let items = xs.iter().map(|x| positive(x, pos, d, sig, budget, regs)).collect::<Result<Vec<_>>>()?;
            if matches!(h, Hnf::And(_)) == pos {
                Hnf::And(items)
            } else {
                Hnf::Or(items)
            }
        }
        Hnf::Count(_) | Hnf::Type { .. } if pos => h.clone(),
        Hnf::Count(c) => {
            let exact = |i: usize| {
                Hnf::Count(CountingSentence {
                    mode: CountMode::Exactly(i),
                    ty: c.ty.clone(),
                })
            };
            match c.mode {
                CountMode::AtLeast(k) => Hnf::Or((0..k).map(exact).collect()),
                CountMode::Exactly(k) => {
                    let mut alts: Vec<Hnf> = (0..k).map(exact).collect();
                    alts.push(Hnf::Count(CountingSentence {
                        mode: CountMode::AtLeast(k + 1),
                        ty: c.ty.clone(),
                    }));
                    Hnf::Or(alts)
                }
            }
        }
        Hnf::Type { ty, vars } => {
            let key = (ty.radius(), ty.arity());
            if let Entry::Vacant(slot) = regs.entry(key) {
                slot.insert(enumerate_types(sig, d, key.0, key.1, budget)?);
            }
            let reg = &regs[&key];
            let t = RType::new(ty.carrier().with_signature(sig.clone())?, ty.centers().to_vec(), ty.radius())?;
            let me = reg.position(&t);
            Hnf::Or(
                reg.members()
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| Some(i) != me)
                    .map(|(_, m)| Hnf::Type {
                        ty: m.clone(),
                        vars: vars.clone(),
                    })
                    .collect(),
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var;
    use crate::oracle::{check_equivalence, PoolSpec};
    use crate::parse::parse_formula;
    use crate::structure::{disjoint_union, tests::sig_e};

    fn loop_types() -> TypeRegistry {
        enumerate_types(&sig_e(), 2, 0, 1, &TypeBudget::default()).unwrap()
    }

    #[test]
    fn single_node_histogram() {
        let reg = loop_types();
        assert_eq!(reg.len(), 2);
        let s = Structure::new(sig_e(), 1, vec![vec![]]).unwrap();
        let h = histogram(&s, 0, 5, &reg).unwrap();
        let no_loop = reg.members().iter().position(|t| t.carrier().tuples(0).is_empty()).unwrap();
        assert_eq!(h.counts[no_loop], 1);
        assert_eq!(h.counts[1 - no_loop], 0);
    }

    #[test]
    fn histograms_add_and_cap() {
        let reg = enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap();
        let p = crate::structure::tests::path(3);
        let h1 = histogram(&p, 1, 100, &reg).unwrap();
        let two = disjoint_union(&[p.clone(), p]).unwrap().structure;
        let h2 = histogram(&two, 1, 100, &reg).unwrap();
        assert!(h1.counts.iter().zip(&h2.counts).all(|(a, b)| 2 * a == *b));
        let empty = Structure::new(sig_e(), 4, vec![vec![]]).unwrap();
        let reg0 = loop_types();
        let h = histogram(&empty, 0, 2, &reg0).unwrap();
        assert!(h.counts.contains(&2));
    }

    #[test]
    fn histogram_rejects_wide_degrees() {
        let reg = loop_types();
        let star = Structure::new(sig_e(), 4, vec![vec![vec![0, 1], vec![0, 2], vec![0, 3]]]).unwrap();
        assert!(histogram(&star, 0, 3, &reg).is_ok());
        let reg1 = enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap();
        assert!(matches!(histogram(&star, 1, 3, &reg1), Err(Error::Input(_))));
    }

    fn agrees_on_pool(phi: &str) -> HnfFormula {
        let f = parse_formula(phi).unwrap();
        let sig = sig_e();
        let h = fo_to_hnf(&f, 2, &sig, &HanfBudget::default()).unwrap();
        let spec = PoolSpec::new(sig.clone(), Some(2), 4);
        assert!(check_equivalence(&f, &h.to_formula(), &spec).unwrap().agrees(), "{phi}");
        let p = hnf_to_positive(&h, 2, &sig, &TypeBudget::default()).unwrap();
        assert!(p.positive);
        assert!(check_equivalence(&f, &p.to_formula(), &spec).unwrap().agrees(), "{phi}");
        h
    }

    #[test]
    fn loop_sentence() {
        let h = agrees_on_pool("exists x. E(x,x)");
        assert_eq!(h.radius, 0);
        assert!(matches!(h.root, Hnf::Count(_)));
    }

    #[test]
    fn valid_sentence() {
        let h = agrees_on_pool("exists x. x = x");
        assert_eq!(h.root, Hnf::Const(true));
    }

    #[test]
    fn free_variables() {
        let h = agrees_on_pool("E(x,y)");
        assert_eq!(h.free, vec![var("x"), var("y")]);
        agrees_on_pool("exists y. E(x,y)");
        agrees_on_pool("exists y. (E(y,y) & ~x = y)");
    }

    #[test]
    fn positive_rewrites() {
        let reg = loop_types();
        let t = reg.members()[0].clone();
        let c = CountingSentence::new(CountMode::AtLeast(2), &t).unwrap();
        let h = HnfFormula::new(Hnf::Not(Box::new(Hnf::Count(c.clone()))), vec![]).unwrap();
        let p = hnf_to_positive(&h, 2, &sig_e(), &TypeBudget::default()).unwrap();
        let exact = |k| {
            Hnf::Count(CountingSentence {
                mode: CountMode::Exactly(k),
                ty: t.clone(),
            })
        };
        assert_eq!(p.root, Hnf::Or(vec![exact(0), exact(1)]));
        let x = var("x");
        let ty = Hnf::Type {
            ty: t.clone(),
            vars: vec![x.clone()],
        };
        let h = HnfFormula::new(Hnf::Not(Box::new(ty)), vec![x.clone()]).unwrap();
        let p = hnf_to_positive(&h, 2, &sig_e(), &TypeBudget::default()).unwrap();
        assert_eq!(
            p.root,
            Hnf::Or(vec![Hnf::Type {
                ty: reg.members()[1].clone(),
                vars: vec![x]
            }])
        );
        let h = HnfFormula::new(Hnf::Not(Box::new(Hnf::Not(Box::new(Hnf::Count(c.clone()))))), vec![]).unwrap();
        assert_eq!(hnf_to_positive(&h, 2, &sig_e(), &TypeBudget::default()).unwrap().root, Hnf::Count(c));
    }

    #[test]
    fn isomorphic_structures_share_histograms() {
        let reg = enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap();
        let p = crate::structure::tests::path(4);
        let q = p.relabel(&[3, 1, 0, 2]);
        assert_eq!(histogram(&p, 1, 3, &reg).unwrap(), histogram(&q, 1, 3, &reg).unwrap());
    }
}
