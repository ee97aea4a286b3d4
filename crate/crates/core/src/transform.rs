//! From counting normal form to the local shape: counting sentences, type
//! formulas, and the two combination rules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bsnf::{is_bsnf, BsnfForm};
use crate::construct::{center_vars, diagram, type_formula_with};
use crate::error::{input, Error, Result};
use crate::formula::{CountMode, Formula, NameSupply, Quant, Var};
use crate::hanf::{hnf_to_positive, pad_free, CountingSentence, HanfBudget, HanfContext, Hnf, HnfFormula, HnfReport};
use crate::rtype::{enumerate_types, isomorphic, RType, TypeBudget};
use crate::structure::Signature;

fn form(free: Vec<Var>, prefix: Vec<Var>, universal: Var, matrix: Formula, radius: usize) -> BsnfForm {
    let mut free = free;
    free.sort();
    free.dedup();
    BsnfForm {
        free,
        prefix,
        universal,
        matrix,
        radius,
    }
}

/// Checks a constructed formula and reads off its radius.
fn checked(f: Formula) -> Result<BsnfForm> {
    is_bsnf(&f).map_err(|r| Error::Inconsistent(format!("construction left the local shape: {r}")))
}

/// `∀z z = z`.
pub fn bsnf_true() -> BsnfForm {
    let z = crate::var("z");
    form(Vec::new(), Vec::new(), z.clone(), Formula::eq(&z, &z), 0)
}

/// `∀z ¬z = z`, false on every non-empty structure.
pub fn bsnf_false() -> BsnfForm {
    let z = crate::var("z");
    form(Vec::new(), Vec::new(), z.clone(), Formula::neq(&z, &z), 0)
}

/// Counting sentence to local shape:
/// `∃≥k`: `∃y_1…y_k ∀z (⋀ ¬y_i=y_j ∧ (⋁ z=y_i → type_τ(z)))`,
/// `∃=k`: `∃y_1…y_k ∀z (⋀ ¬y_i=y_j ∧ (type_τ(z) ↔ ⋁ z=y_i))`,
/// `∃=0`: `∀z ¬type_τ(z)`.
pub fn counting_to_bsnf(c: &CountingSentence) -> BsnfForm {
    let mut supply = NameSupply::new();
    let z = supply.fresh_exact("z");
    let k = match c.mode {
        CountMode::AtLeast(k) | CountMode::Exactly(k) => k,
    };
    let ys: Vec<Var> = (0..k).map(|_| supply.fresh("y")).collect();
    let ty = type_formula_with(&c.ty, core::slice::from_ref(&z), &mut supply);
    let mut items = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            items.push(Formula::neq(&ys[i], &ys[j]));
        }
    }
    let pick = || Formula::or(ys.iter().map(|y| Formula::eq(&z, y)).collect());
    match c.mode {
        CountMode::Exactly(0) => items.push(Formula::not(ty)),
        CountMode::AtLeast(_) => items.push(Formula::implies(pick(), ty)),
        CountMode::Exactly(_) => items.push(Formula::iff(ty, pick())),
    }
    form(Vec::new(), ys, z, Formula::and(items), c.ty.radius())
}

/// One connected component of a type's carrier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentPart {
    /// Center indices `P_i`, increasing.
    pub centers: Vec<usize>,
    /// `ℓ_i·(2r+1)`.
    pub radius: usize,
    /// The component with the centers of `P_i`, in order.
    pub sub: RType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSplit {
    pub parts: Vec<ComponentPart>,
}

/// Splits a type by the connected components of its carrier, ordered by
/// smallest center index.
pub fn component_split(rho: &RType) -> Result<ComponentSplit> {
    let r = rho.radius();
    let mut parts = Vec::new();
    for comp in rho.carrier().components() {
        let centers: Vec<usize> = (0..rho.arity()).filter(|&i| comp.elements.binary_search(&rho.centers()[i]).is_ok()).collect();
        if centers.is_empty() {
            return Err(input("a carrier component without a center"));
        }
        let local = centers.iter().map(|&i| comp.elements.binary_search(&rho.centers()[i]).unwrap()).collect();
        parts.push(ComponentPart {
            radius: centers.len() * (2 * r + 1),
            sub: RType::new(comp.structure, local, r)?,
            centers,
        });
    }
    parts.sort_by_key(|p| p.centers[0]);
    Ok(ComponentSplit { parts })
}

/// How `γ_i` describes the neighbourhood of a component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GammaStrategy {
    /// The component itself, pinned down by exact-distance guards from its
    /// first center.
    #[default]
    Compact,
    /// A disjunction over all `r_i`-types around the first center whose
    /// `r`-neighbourhood of the centers is the component.
    Registry,
}

/// `γ_i` with the first center of `P_i` replaced by `y`: holds iff the
/// centers of `P_i` have the component as their `r`-type and every other
/// center is farther than `2r+1` from them.
#[allow(clippy::too_many_arguments)]
pub fn gamma_component(
    i: usize,
    split: &ComponentSplit,
    vars: &[Var],
    y: &Var,
    d: usize,
    sig: &Signature,
    strategy: GammaStrategy,
    budget: &TypeBudget,
) -> Result<Formula> {
    let part = split.parts.get(i).ok_or_else(|| input(format!("component {i} does not exist")))?;
    let mut supply = NameSupply::new();
    supply.reserve_all(vars.iter().cloned());
    supply.reserve(y);
    let foreign: Vec<Var> = (0..vars.len()).filter(|m| !part.centers.contains(m)).map(|m| vars[m].clone()).collect();
    let sub_vars: Vec<Var> = part
        .centers
        .iter()
        .enumerate()
        .map(|(j, &p)| if j == 0 { y.clone() } else { vars[p].clone() })
        .collect();
    match strategy {
        GammaStrategy::Compact => Ok(pinned(&part.sub, part.sub.radius(), &sub_vars, &foreign, None, &mut supply)),
        GammaStrategy::Registry => {
            let sig = alloc::sync::Arc::new(sig.relational());
            let r = part.sub.radius();
            let reg = enumerate_types(&sig, d, part.radius, part.centers.len(), budget)?;
            let target = RType::new(part.sub.carrier().with_signature(sig.clone())?, part.sub.centers().to_vec(), r)?;
            let mut alts = Vec::new();
            for tau in reg.members() {
                let b1 = tau.centers()[0];
                if tau.carrier().bfs(&[b1], part.radius).len() != tau.carrier().size() {
                    continue;
                }
                let inner = crate::rtype::extract_rtype(tau.carrier(), tau.centers(), r)?;
                if !isomorphic(&inner, &target)? {
                    continue;
                }
                alts.push(pinned(tau, r, &sub_vars, &foreign, Some(part.radius), &mut supply.clone()));
            }
            Ok(Formula::or(alts))
        }
    }
}

/// `∃z̄` over the carrier of `t` with exact-distance guards from the first
/// center, center equations, the diagram, coverage of the `r`-balls of the
/// centers (or of the `cover`-ball of the first center) and the `2r+1`
/// exclusion of `foreign`.
fn pinned(t: &RType, r: usize, vars: &[Var], foreign: &[Var], cover: Option<usize>, supply: &mut NameSupply) -> Formula {
    let c = t.carrier();
    let first = t.centers()[0];
    let order = c.bfs(&[first], usize::MAX);
    let mut dist = vec![0; c.size()];
    for &(e, k) in &order {
        dist[e] = k;
    }
    let zs: Vec<Var> = (0..c.size()).map(|_| supply.fresh("z")).collect();
    let w = supply.fresh("w");
    let mut items = Vec::new();
    for (j, &e) in t.centers().iter().enumerate() {
        items.push(Formula::eq(&vars[j], &zs[e]));
    }
    items.extend(diagram(c, &zs));
    let all = || Formula::or(zs.iter().map(|z| Formula::eq(&w, z)).collect());
    let mut distinct = t.centers().to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    match cover {
        Some(b) => items.push(Formula::guarded(Quant::Forall, &w, &vars[0], b, all())),
        None => {
            for &e in &distinct {
                items.push(Formula::guarded(Quant::Forall, &w, &zs[e], r, all()));
            }
        }
    }
    if !foreign.is_empty() {
        for &e in &distinct {
            let hit = Formula::or(foreign.iter().map(|x| Formula::eq(&w, x)).collect());
            items.push(Formula::guarded(Quant::Forall, &w, &zs[e], 2 * r + 1, Formula::not(hit)));
        }
    }
    let mut body = Formula::and(items);
    for &(e, _) in order.iter().rev() {
        body = Formula::guarded(Quant::Exists, &zs[e], &vars[0], dist[e], body);
    }
    body
}

/// Options for the type-formula stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TypeOptions {
    pub strategy: GammaStrategy,
    pub budget: TypeBudget,
}

/// `α^B(x̄) = ∀y ⋀_i (y = x_{p_i1} → γ_i)` over the default variables `x1…xn`.
pub fn type_to_bsnf(rho: &RType, d: usize, sig: &Signature, opts: &TypeOptions) -> Result<BsnfForm> {
    type_to_bsnf_vars(rho, &center_vars(rho.arity()), d, sig, opts)
}

pub fn type_to_bsnf_vars(rho: &RType, vars: &[Var], d: usize, sig: &Signature, opts: &TypeOptions) -> Result<BsnfForm> {
    if vars.len() != rho.arity() {
        return Err(input(format!("type has {} centers but {} variables were given", rho.arity(), vars.len())));
    }
    let split = component_split(rho)?;
    let mut supply = NameSupply::new();
    supply.reserve_all(vars.iter().cloned());
    let y = supply.fresh_exact("y");
    let mut items = Vec::new();
    for (i, part) in split.parts.iter().enumerate() {
        let g = gamma_component(i, &split, vars, &y, d, sig, opts.strategy, &opts.budget)?;
        items.push(Formula::implies(Formula::eq(&y, &vars[part.centers[0]]), g));
    }
    let f = Formula::forall(&y, Formula::and(items));
    let mut b = checked(f)?;
    b.free = {
        let mut v = vars.to_vec();
        v.sort();
        v.dedup();
        v
    };
    Ok(b)
}

/// Renames both operands apart and re-anchors them at one universal
/// variable. Returns the renamed prefixes, the shared variable and the
/// matrices, plus a supply that avoids every name in use.
fn align(b1: &BsnfForm, b2: &BsnfForm) -> (Vec<Var>, Vec<Var>, Var, Formula, Formula, NameSupply) {
    let f1 = b1.to_formula();
    let f2 = b2.to_formula();
    let vars1 = f1.all_vars();
    let vars2 = f2.all_vars();
    let mut supply = NameSupply::new();
    supply.reserve_all(vars1.iter().cloned());
    supply.reserve_all(vars2.iter().cloned());
    supply.reserve_all(b1.prefix.iter().cloned());
    supply.reserve_all(b2.prefix.iter().cloned());
    supply.reserve(&b1.universal);
    supply.reserve(&b2.universal);
    // names of the left operand that would capture free variables on the right
    let mut map1 = BTreeMap::new();
    for p in &b1.prefix {
        if b2.free.contains(p) {
            map1.insert(p.clone(), supply.fresh(p));
        }
    }
    let z = if b2.free.contains(&b1.universal) {
        let z = supply.fresh(&b1.universal);
        map1.insert(b1.universal.clone(), z.clone());
        z
    } else {
        b1.universal.clone()
    };
    let p1: Vec<Var> = b1.prefix.iter().map(|p| map1.get(p).cloned().unwrap_or_else(|| p.clone())).collect();
    let m1 = b1.matrix.rename_free(&map1);
    let mut map2 = BTreeMap::new();
    for p in &b2.prefix {
        if vars1.contains(p) || b1.prefix.contains(p) || *p == b1.universal || p1.contains(p) || *p == z {
            map2.insert(p.clone(), supply.fresh(p));
        }
    }
    if b2.universal != z {
        map2.insert(b2.universal.clone(), z.clone());
    }
    let p2: Vec<Var> = b2.prefix.iter().map(|p| map2.get(p).cloned().unwrap_or_else(|| p.clone())).collect();
    let m2 = b2.matrix.rename_free(&map2);
    (p1, p2, z, m1, m2, supply)
}

/// `∃ȳ ∃ȳ′ ∀z (φ ∧ φ′)`.
pub fn combine_and(b1: &BsnfForm, b2: &BsnfForm) -> BsnfForm {
    let (mut p1, p2, z, m1, m2, _) = align(b1, b2);
    p1.extend(p2);
    let mut free = b1.free.clone();
    free.extend(b2.free.iter().cloned());
    form(free, p1, z, Formula::And(vec![m1, m2]), b1.radius.max(b2.radius))
}

/// `∃y ∃y′ ∃ȳ ∃ȳ′ ∀z ((y=y′ ∧ φ) ∨ (¬y=y′ ∧ φ′))`. On one-element
/// structures the selectors coincide and only `φ` is consulted.
pub fn combine_or(b1: &BsnfForm, b2: &BsnfForm) -> BsnfForm {
    let (p1, p2, z, m1, m2, mut supply) = align(b1, b2);
    let s = supply.fresh("s");
    let s2 = supply.fresh("s");
    let mut prefix = vec![s.clone(), s2.clone()];
    prefix.extend(p1);
    prefix.extend(p2);
    let mut free = b1.free.clone();
    free.extend(b2.free.iter().cloned());
    let m = Formula::Or(vec![
        Formula::And(vec![Formula::eq(&s, &s2), m1]),
        Formula::And(vec![Formula::neq(&s, &s2), m2]),
    ]);
    form(free, prefix, z, m, b1.radius.max(b2.radius))
}

/// Folds with a balanced tree of binary combinations, left operands first.
pub fn combine_all(mut items: Vec<BsnfForm>, op: fn(&BsnfForm, &BsnfForm) -> BsnfForm) -> Option<BsnfForm> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(op(&a, &b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Local shape of a positive combination.
pub fn positive_to_bsnf(h: &HnfFormula, d: usize, sig: &Signature, opts: &TypeOptions) -> Result<BsnfForm> {
    if !h.positive {
        return Err(input("the combination still contains negations"));
    }
    let b = node_to_bsnf(&h.root, d, sig, opts)?;
    Ok(pad_bsnf(b, &h.free))
}

fn node_to_bsnf(h: &Hnf, d: usize, sig: &Signature, opts: &TypeOptions) -> Result<BsnfForm> {
    Ok(match h {
        Hnf::Const(true) => bsnf_true(),
        Hnf::Const(false) => bsnf_false(),
        Hnf::Count(c) => counting_to_bsnf(c),
        Hnf::Type { ty, vars } => type_to_bsnf_vars(ty, vars, d, sig, opts)?,
        Hnf::Not(_) => return Err(input("negation above a leaf")),
        Hnf::And(xs) => {
            let parts = xs.iter().map(|x| node_to_bsnf(x, d, sig, opts)).collect::<Result<Vec<_>>>()?;
            combine_all(parts, combine_and).unwrap_or_else(bsnf_true)
        }
        Hnf::Or(xs) => {
            let parts = xs.iter().map(|x| node_to_bsnf(x, d, sig, opts)).collect::<Result<Vec<_>>>()?;
            combine_all(parts, combine_or).unwrap_or_else(bsnf_false)
        }
    })
}

/// Keeps free variables that the matrix lost by conjoining `x = x`.
fn pad_bsnf(mut b: BsnfForm, free: &[Var]) -> BsnfForm {
    let missing: Vec<Var> = free.iter().filter(|v| !b.free.contains(v)).cloned().collect();
    if missing.is_empty() {
        return b;
    }
    let clash = missing.iter().any(|v| b.prefix.contains(v) || *v == b.universal);
    if clash {
        // rename the bound names out of the way first
        let other = form(missing.clone(), Vec::new(), b.universal.clone(), Formula::True, 0);
        let (p, _, z, m, _, _) = align(&b, &other);
        b.prefix = p;
        b.universal = z;
        b.matrix = m;
    }
    b.matrix = pad_free(b.matrix, free);
    b.free.extend(missing);
    b.free.sort();
    b
}

/// Every stage of the pipeline.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub hnf: HnfFormula,
    pub positive: HnfFormula,
    pub bsnf: BsnfForm,
    pub report: HnfReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    pub hanf: HanfBudget,
    pub types: TypeOptions,
}

pub fn fo_to_bsnf(phi: &Formula, d: usize, sig: &Signature, opts: &PipelineOptions) -> Result<Pipeline> {
    let ctx = HanfContext::new(sig, d, &opts.hanf)?;
    fo_to_bsnf_in(&ctx, phi, opts)
}

/// The pipeline against a prepared witness pool.
pub fn fo_to_bsnf_in(ctx: &HanfContext, phi: &Formula, opts: &PipelineOptions) -> Result<Pipeline> {
    let (hnf, report) = ctx.fo_to_hnf(phi)?;
    let sig = ctx.signature().clone();
    let d = ctx.degree();
    let positive = hnf_to_positive(&hnf, d, &sig, &opts.types.budget)?;
    let bsnf = positive_to_bsnf(&positive, d, &sig, &opts.types)?;
    Ok(Pipeline {
        hnf,
        positive,
        bsnf,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{check_equivalence, enumerate_pool, Comparison, PoolSpec};
    use crate::parse::parse_formula;
    use crate::rtype::extract_rtype;
    use crate::structure::tests::sig_e;
    use crate::structure::Structure;
    use crate::var;

    fn zero_types() -> Vec<RType> {
        enumerate_types(&sig_e(), 2, 0, 1, &TypeBudget::default()).unwrap().members().to_vec()
    }

    fn loop_free() -> RType {
        zero_types().into_iter().find(|t| t.carrier().tuples(0).is_empty()).unwrap()
    }

    #[test]
    fn counting_shapes() {
        let t = loop_free();
        let c0 = counting_to_bsnf(&CountingSentence::new(CountMode::Exactly(0), &t).unwrap());
        assert!(c0.prefix.is_empty());
        assert!(matches!(c0.matrix, Formula::Not(_)));
        let c1 = counting_to_bsnf(&CountingSentence::new(CountMode::AtLeast(1), &t).unwrap());
        assert_eq!(c1.prefix, vec![var("y1")]);
        match &c1.matrix {
            Formula::Implies(a, _) => assert_eq!(**a, Formula::eq(&var("z"), &var("y1"))),
            m => panic!("{m}"),
        }
        let c2 = counting_to_bsnf(&CountingSentence::new(CountMode::Exactly(2), &t).unwrap());
        assert_eq!(c2.prefix.len(), 2);
        assert!(matches!(&c2.matrix, Formula::And(xs) if matches!(xs[1], Formula::Iff(..))));
        for b in [c0, c1, c2] {
            assert_eq!(is_bsnf(&b.to_formula()).unwrap().radius, 0);
        }
    }

    #[test]
    fn counting_is_exact_without_degree_bound() {
        let pool = PoolSpec::new(sig_e(), None, 4);
        for t in enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap().members().iter().take(12) {
            for mode in [CountMode::AtLeast(1), CountMode::AtLeast(2), CountMode::Exactly(0), CountMode::Exactly(1)] {
                let c = CountingSentence::new(mode, t).unwrap();
                let b = counting_to_bsnf(&c);
                let v = check_equivalence(&c.to_formula(&var("y")), &b.to_formula(), &pool).unwrap();
                assert!(v.agrees(), "{mode:?} {v:?}");
            }
        }
    }

    #[test]
    fn splits() {
        let two = Structure::new(sig_e(), 2, vec![vec![]]).unwrap();
        let rho = extract_rtype(&two, &[0, 1], 0).unwrap();
        let s = component_split(&rho).unwrap();
        assert_eq!(s.parts.len(), 2);
        assert!(s.parts.iter().all(|p| p.radius == 1));
        let p = crate::structure::tests::path(2);
        let rho = extract_rtype(&p, &[0, 1], 1).unwrap();
        let s = component_split(&rho).unwrap();
        assert_eq!(s.parts.len(), 1);
        assert_eq!(s.parts[0].centers, vec![0, 1]);
        assert_eq!(s.parts[0].radius, 6);
        // five centers in three components: {1,4}, {3}, {2,5}
        let a = Structure::new(sig_e(), 5, vec![vec![vec![0, 3], vec![1, 4]]]).unwrap();
        let rho = extract_rtype(&a, &[0, 1, 2, 3, 4], 0).unwrap();
        let s = component_split(&rho).unwrap();
        let ps: Vec<Vec<usize>> = s.parts.iter().map(|p| p.centers.clone()).collect();
        assert_eq!(ps, vec![vec![0, 3], vec![1, 4], vec![2]]);
    }

    fn type_agrees(rho: &RType, opts: &TypeOptions, size: usize) {
        let b = type_to_bsnf(rho, 2, &sig_e(), opts).unwrap();
        let n = rho.arity();
        assert!(b.radius <= n * (2 * rho.radius() + 1), "{b}");
        assert!(b.prefix.is_empty());
        let f = crate::construct::type_formula(rho, &center_vars(n)).unwrap();
        let v = check_equivalence(&f, &b.to_formula(), &PoolSpec::new(sig_e(), Some(2), size).iso_classes()).unwrap();
        assert!(v.agrees(), "{v:?}");
    }

    #[test]
    fn loop_free_single_center() {
        let b = type_to_bsnf(&loop_free(), 2, &sig_e(), &TypeOptions::default()).unwrap();
        assert_eq!(b.universal, var("y"));
        assert!(matches!(&b.matrix, Formula::Implies(a, _) if **a == Formula::eq(&var("y"), &var("x1"))));
        assert!(b.radius <= 1);
    }

    #[test]
    fn small_types_are_pinned_down() {
        for n in 1..=2 {
            for rho in enumerate_types(&sig_e(), 2, 0, n, &TypeBudget::default()).unwrap().members() {
                type_agrees(rho, &TypeOptions::default(), 5);
            }
        }
        for rho in enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap().members().iter().step_by(7) {
            type_agrees(rho, &TypeOptions::default(), 5);
        }
    }

    #[test]
    fn registry_strategy_agrees() {
        let opts = TypeOptions {
            strategy: GammaStrategy::Registry,
            budget: TypeBudget::default(),
        };
        for rho in zero_types() {
            type_agrees(&rho, &opts, 5);
        }
        let two = Structure::new(sig_e(), 2, vec![vec![]]).unwrap();
        type_agrees(&extract_rtype(&two, &[0, 1], 0).unwrap(), &opts, 4);
        let joined = crate::structure::tests::path(2);
        let rho = extract_rtype(&joined, &[0, 1], 0).unwrap();
        assert!(matches!(type_to_bsnf(&rho, 2, &sig_e(), &opts), Err(Error::Resource(_))));
    }

    fn counting_forms() -> Vec<(Formula, BsnfForm)> {
        let ts = zero_types();
        let mut out = Vec::new();
        for t in &ts {
            for mode in [CountMode::AtLeast(1), CountMode::Exactly(1)] {
                let c = CountingSentence::new(mode, t).unwrap();
                out.push((c.to_formula(&var("y")), counting_to_bsnf(&c)));
            }
        }
        out
    }

    #[test]
    fn combinations() {
        let pool = enumerate_pool(&PoolSpec::new(sig_e(), None, 3)).unwrap();
        let forms = counting_forms();
        for (f1, b1) in &forms {
            for (f2, b2) in &forms {
                let and = combine_and(b1, b2);
                let or = combine_or(b1, b2);
                assert!(is_bsnf(&and.to_formula()).is_ok());
                assert_eq!(is_bsnf(&or.to_formula()).unwrap().radius, or.radius);
                let ca = Comparison::new(&Formula::And(vec![f1.clone(), f2.clone()]), &and.to_formula()).unwrap();
                let co = Comparison::new(&Formula::Or(vec![f1.clone(), f2.clone()]), &or.to_formula()).unwrap();
                let single = Comparison::new(f1, &or.to_formula()).unwrap();
                for a in &pool {
                    assert_eq!(ca.first_difference(a).unwrap(), None);
                    if a.size() >= 2 {
                        assert_eq!(co.first_difference(a).unwrap(), None);
                    } else {
                        assert_eq!(single.first_difference(a).unwrap(), None);
                    }
                }
            }
        }
        let (f, b) = &forms[0];
        let taut = combine_and(b, &bsnf_true());
        assert!(check_equivalence(f, &taut.to_formula(), &PoolSpec::new(sig_e(), None, 3)).unwrap().agrees());
    }

    #[test]
    fn renaming_avoids_capture() {
        let b1 = is_bsnf(&parse_formula("exists x. forall z. E(x,z)").unwrap()).unwrap();
        let b2 = is_bsnf(&parse_formula("forall y. E(x,y)").unwrap()).unwrap();
        let c = combine_and(&b1, &b2);
        assert_eq!(c.free, vec![var("x")]);
        assert!(!c.prefix.contains(&var("x")));
        let phi = parse_formula("(exists x. forall z. E(x,z)) & forall y. E(x,y)").unwrap();
        assert!(check_equivalence(&phi, &c.to_formula(), &PoolSpec::new(sig_e(), None, 3)).unwrap().agrees());
    }

    #[test]
    fn end_to_end() {
        let sig = sig_e();
        for text in ["exists x. E(x,x)", "x = y", "exists y. E(x,y)", "forall x. exists y. E(x,y)"] {
            let phi = parse_formula(text).unwrap();
            let p = fo_to_bsnf(&phi, 2, &sig, &PipelineOptions::default()).unwrap();
            let b = is_bsnf(&p.bsnf.to_formula()).unwrap();
            let n = phi.free_vars().len();
            let q = phi.quantifier_rank();
            assert!(b.radius <= (n + 1) * (2 * 4usize.pow(q as u32) + 1));
            assert_eq!(b.free, phi.free_vars());
            let spec = PoolSpec::new(sig.clone(), Some(2), 4).sizes(2, 4).iso_classes();
            assert!(check_equivalence(&phi, &p.bsnf.to_formula(), &spec).unwrap().agrees(), "{text}");
        }
    }
}
