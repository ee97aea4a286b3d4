//! Derived formulas: distance bounds, counting expansions and type formulas,
//! plus the desugaring into the core connectives `¬ ∨ ∃ =`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input, Result};
use crate::formula::{var, CountMode, Formula, NameSupply, Quant, Var};
use crate::rtype::RType;
use crate::structure::Signature;

/// `edge(a,b)`: some tuple has `a` and `b` at two distinct positions.
pub fn edge_formula(sig: &Signature, a: &Var, b: &Var, supply: &mut NameSupply) -> Formula {
    let mut alts = Vec::new();
    for rel in sig.relations() {
        for i in 0..rel.arity {
            for j in 0..rel.arity {
                if i == j {
                    continue;
                }
                let mut bound = Vec::new();
                let args: Vec<Var> = (0..rel.arity)
                    .map(|p| {
                        if p == i {
                            a.clone()
                        } else if p == j {
                            b.clone()
                        } else {
                            let w = supply.fresh("w");
                            bound.push(w.clone());
                            w
                        }
                    })
                    .collect();
                alts.push(Formula::exists_all(&bound, Formula::Rel(var(&rel.name), args)));
            }
        }
    }
    Formula::or(alts)
}

/// `dist_{≤d}(x, y)` over `sig`, built by doubling so that its size grows
/// with `log d`.
pub fn dist_formula(sig: &Signature, d: usize) -> Formula {
    let x = var("x");
    let y = var("y");
    let mut supply = NameSupply::new();
    supply.reserve(&x);
    supply.reserve(&y);
    dist_formula_vars(sig, d, &x, &y, &mut supply)
}

pub fn dist_formula_vars(sig: &Signature, d: usize, a: &Var, b: &Var, supply: &mut NameSupply) -> Formula {
    match d {
        0 => Formula::eq(a, b),
        1 => {
            let mut alts = vec![Formula::eq(a, b)];
            match edge_formula(sig, a, b, supply) {
                Formula::Or(es) => alts.extend(es),
                Formula::False => {}
                e => alts.push(e),
            }
            Formula::or(alts)
        }
        _ if d.is_multiple_of(2) => {
            let m = supply.fresh("m");
            let u = supply.fresh("u");
            let v = supply.fresh("v");
            let inner = dist_formula_vars(sig, d / 2, &u, &v, supply);
            let pick = Formula::Or(vec![
                Formula::And(vec![Formula::eq(&u, a), Formula::eq(&v, &m)]),
                Formula::And(vec![Formula::eq(&u, &m), Formula::eq(&v, b)]),
            ]);
            Formula::exists(&m, Formula::forall(&u, Formula::forall(&v, Formula::implies(pick, inner))))
        }
        _ => {
            let m = supply.fresh("m");
            let step = dist_formula_vars(sig, 1, a, &m, supply);
            let rest = dist_formula_vars(sig, d - 1, &m, b, supply);
            Formula::exists(&m, Formula::And(vec![step, rest]))
        }
    }
}

/// Expansion of a counting quantifier into plain first-order logic.
///
/// `∃≥k y φ` becomes `∃y_1…∃y_k (⋀_{i<j} ¬y_i=y_j ∧ ∀y (⋁_i y=y_i → φ))`,
/// which keeps a single copy of `φ`.
pub fn counting_expand(mode: CountMode, y: &Var, phi: &Formula) -> Result<Formula> {
    let mut supply = NameSupply::avoiding(phi);
    supply.reserve(y);
    counting_expand_with(mode, y, phi, &mut supply)
}

fn counting_expand_with(mode: CountMode, y: &Var, phi: &Formula, supply: &mut NameSupply) -> Result<Formula> {
    match mode {
        CountMode::AtLeast(0) => Err(input("the threshold quantifier needs k ≥ 1")),
        CountMode::AtLeast(1) => Ok(Formula::exists(y, phi.clone())),
        CountMode::AtLeast(k) => {
            let ys: Vec<Var> = (0..k).map(|_| supply.fresh(y)).collect();
            let mut items = Vec::new();
            for i in 0..k {
                for j in i + 1..k {
                    items.push(Formula::neq(&ys[i], &ys[j]));
                }
            }
            let pick = Formula::or(ys.iter().map(|yi| Formula::eq(y, yi)).collect());
            items.push(Formula::forall(y, Formula::implies(pick, phi.clone())));
            Ok(Formula::exists_all(&ys, Formula::and(items)))
        }
        CountMode::Exactly(0) => Ok(Formula::not(Formula::exists(y, phi.clone()))),
        CountMode::Exactly(k) => {
            let lo = counting_expand_with(CountMode::AtLeast(k), y, phi, supply)?;
            let hi = counting_expand_with(CountMode::AtLeast(k + 1), y, phi, supply)?;
            Ok(Formula::And(vec![lo, Formula::not(hi)]))
        }
    }
}

/// Rewrites every sugar node into `¬`, binary `∨`, `∃`, `=` and relation atoms.
/// Distance atoms are expanded over `sig`.
pub fn desugar(f: &Formula, sig: &Signature) -> Result<Formula> {
    let mut supply = NameSupply::avoiding(f);
    desugar_rec(f, sig, &mut supply)
}

fn desugar_rec(f: &Formula, sig: &Signature, supply: &mut NameSupply) -> Result<Formula> {
    Ok(match f {
        Formula::True => {
            let v = supply.fresh("v");
            Formula::eq(&v, &v)
        }
        Formula::False => {
            let v = supply.fresh("v");
            Formula::neq(&v, &v)
        }
        Formula::Eq(..) | Formula::Rel(..) => f.clone(),
        Formula::Dist(d, a, b) => {
            let g = dist_formula_vars(sig, *d, a, b, supply);
            desugar_rec(&g, sig, supply)?
        }
        Formula::Not(g) => Formula::not(desugar_rec(g, sig, supply)?),
        Formula::Or(gs) => {
            let items: Vec<Formula> = gs.iter().map(|g| desugar_rec(g, sig, supply)).collect::<Result<_>>()?;
            match items.len() {
                0 => desugar_rec(&Formula::False, sig, supply)?,
                _ => items.into_iter().rev().reduce(|acc, g| Formula::Or(vec![g, acc])).unwrap(),
            }
        }
        Formula::And(gs) => {
            let items: Vec<Formula> = gs.iter().map(|g| desugar_rec(g, sig, supply)).collect::<Result<_>>()?;
            match items.len() {
                0 => desugar_rec(&Formula::True, sig, supply)?,
                _ => items
                    .into_iter()
                    .rev()
                    .reduce(|acc, g| Formula::not(Formula::Or(vec![Formula::not(g), Formula::not(acc)])))
                    .unwrap(),
            }
        }
        Formula::Implies(a, b) => {
            let a = desugar_rec(a, sig, supply)?;
            let b = desugar_rec(b, sig, supply)?;
            Formula::Or(vec![Formula::not(a), b])
        }
        Formula::Iff(a, b) => {
            let g = Formula::And(vec![
                Formula::implies((**a).clone(), (**b).clone()),
                Formula::implies((**b).clone(), (**a).clone()),
            ]);
            desugar_rec(&g, sig, supply)?
        }
        Formula::Quant(Quant::Exists, v, g) => Formula::exists(v, desugar_rec(g, sig, supply)?),
        Formula::Quant(Quant::Forall, v, g) => {
            Formula::not(Formula::exists(v, Formula::not(desugar_rec(g, sig, supply)?)))
        }
        Formula::Count(mode, v, g) => {
            let e = counting_expand_with(*mode, v, g, supply)?;
            desugar_rec(&e, sig, supply)?
        }
        Formula::Guarded { .. } => desugar_rec(&f.expand_guards(), sig, supply)?,
    })
}

/// All atomic and negated atomic facts of `carrier` over the variables `zs`,
/// plus pairwise distinctness.
pub fn diagram(carrier: &crate::Structure, zs: &[Var]) -> Vec<Formula> {
    let n = carrier.size();
    let sig = carrier.signature();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push(Formula::neq(&zs[i], &zs[j]));
        }
    }
    for r in 0..sig.len() {
        let a = sig.arity(r);
        let name = var(&sig.relations()[r].name);
        let mut t = vec![0usize; a];
        'tuples: loop {
            let atom = Formula::Rel(name.clone(), t.iter().map(|&e| zs[e].clone()).collect());
            out.push(if carrier.holds(r, &t) { atom } else { Formula::not(atom) });
            let mut k = a;
            loop {
                if k == 0 {
                    break 'tuples;
                }
                k -= 1;
                if t[k] + 1 < n {
                    t[k] += 1;
                    for x in &mut t[k + 1..] {
                        *x = 0;
                    }
                    break;
                }
            }
        }
    }
    out
}

/// Index of the nearest center of each carrier element (first center on ties).
pub(crate) fn nearest_centers(t: &RType) -> Vec<(usize, usize)> {
    let c = t.carrier();
    (0..c.size())
        .map(|e| {
            t.centers()
                .iter()
                .enumerate()
                .filter_map(|(i, &ctr)| c.distance(ctr, e).map(|d| (d, i)))
                .min()
                .map(|(d, i)| (i, d))
                .expect("types are covered by their centers")
        })
        .collect()
}

/// `type_τ(x̄)`: holds at `ā` iff the `r`-neighbourhood of `ā` is isomorphic to `τ`.
///
/// Each witness `z_j` ranges over the `r`-ball of its nearest center, and every
/// element of each center's `r`-ball must be one of the witnesses.
pub fn type_formula(t: &RType, xs: &[Var]) -> Result<Formula> {
    if xs.len() != t.arity() {
        return Err(input(format!("type has {} centers but {} variables were given", t.arity(), xs.len())));
    }
    let mut supply = NameSupply::new();
    supply.reserve_all(xs.iter().cloned());
    Ok(type_formula_with(t, xs, &mut supply))
}

pub(crate) fn type_formula_with(t: &RType, xs: &[Var], supply: &mut NameSupply) -> Formula {
    let r = t.radius();
    let n = t.carrier().size();
    let zs: Vec<Var> = (0..n).map(|_| supply.fresh("z")).collect();
    let w = supply.fresh("w");
    let mut items = Vec::new();
    for (i, &c) in t.centers().iter().enumerate() {
        items.push(Formula::eq(&xs[i], &zs[c]));
    }
    items.extend(diagram(t.carrier(), &zs));
    let mut first_use = Vec::new();
    for (i, &c) in t.centers().iter().enumerate() {
        if !first_use.contains(&c) {
            first_use.push(c);
            let cover = Formula::or(zs.iter().map(|z| Formula::eq(&w, z)).collect());
            items.push(Formula::guarded(Quant::Forall, &w, &xs[i], r, cover));
        }
    }
    let nearest = nearest_centers(t);
    let mut body = Formula::and(items);
    for e in (0..n).rev() {
        let (i, _) = nearest[e];
        body = Formula::guarded(Quant::Exists, &zs[e], &xs[i], r, body);
    }
    body
}

/// Default center variables `x1, …, xn`.
pub fn center_vars(n: usize) -> Vec<Var> {
    (1..=n).map(|i| var(&format!("x{i}"))).collect()
}
