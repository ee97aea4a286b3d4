//! The local shape `∃y_1 … ∃y_m ∀z φ` and its checks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Result;
use crate::eval::{Assignment, Evaluator};
use crate::formula::{Formula, Quant, Var};
use crate::structure::Structure;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BsnfForm {
    pub free: Vec<Var>,
    pub prefix: Vec<Var>,
    pub universal: Var,
    /// Every quantifier is a distance guard reaching at most `radius` from `universal`.
    pub matrix: Formula,
    pub radius: usize,
}

impl BsnfForm {
    pub fn to_formula(&self) -> Formula {
        Formula::exists_all(&self.prefix, Formula::forall(&self.universal, self.matrix.clone()))
    }

    pub fn size(&self) -> usize {
        self.to_formula().size()
    }
}

impl fmt::Display for BsnfForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

/// Why a formula is not in the local shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection(pub String);

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Accepts `∃ȳ ∀z φ` where every quantifier of `φ` is a distance guard whose
/// anchor is within a known distance of `z`. Plain-syntax guards are
/// recognised. The radius is the largest distance from `z` that any guard or
/// distance atom can reach.
pub fn is_bsnf(f: &Formula) -> core::result::Result<BsnfForm, Rejection> {
    let f = f.recognize_guards();
    let free = f.free_vars();
    let mut prefix = Vec::new();
    let mut cur = &f;
    while let Formula::Quant(Quant::Exists, y, body) = cur {
        prefix.push(y.clone());
        cur = body;
    }
    let (z, matrix) = match cur {
        Formula::Quant(Quant::Forall, z, m) => (z.clone(), (**m).clone()),
        _ => return Err(Rejection(String::from("expected a universal quantifier after the existential prefix"))),
    };
    for (i, y) in prefix.iter().enumerate() {
        if prefix[..i].contains(y) {
            return Err(Rejection(format!("prefix variable {y} is bound twice")));
        }
        if *y == z {
            return Err(Rejection(format!("prefix variable {y} coincides with the universal variable")));
        }
    }
    let mut scope: Vec<(Var, Option<usize>)> = Vec::new();
    for v in free.iter().chain(&prefix) {
        scope.push((v.clone(), None));
    }
    scope.push((z.clone(), Some(0)));
    let mut radius = 0;
    locality(&matrix, &mut scope, &mut radius)?;
    Ok(BsnfForm {
        free,
        prefix,
        universal: z,
        matrix,
        radius,
    })
}

fn lookup(scope: &[(Var, Option<usize>)], v: &Var) -> Option<usize> {
    scope.iter().rev().find(|(w, _)| w == v).and_then(|&(_, d)| d)
}

fn locality(f: &Formula, scope: &mut Vec<(Var, Option<usize>)>, radius: &mut usize) -> core::result::Result<(), Rejection> {
    match f {
        Formula::True | Formula::False | Formula::Eq(..) | Formula::Rel(..) => Ok(()),
        Formula::Dist(k, a, b) => {
            let reach = match (lookup(scope, a), lookup(scope, b)) {
                (Some(x), Some(y)) => x.min(y),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => return Err(Rejection(format!("dist<={k}({a},{b}) is not anchored near the universal variable"))),
            };
            *radius = (*radius).max(reach + k);
            Ok(())
        }
        Formula::Not(g) => locality(g, scope, radius),
        Formula::And(gs) | Formula::Or(gs) => gs.iter().try_for_each(|g| locality(g, scope, radius)),
        Formula::Implies(a, b) | Formula::Iff(a, b) => {
            locality(a, scope, radius)?;
            locality(b, scope, radius)
        }
        Formula::Quant(_, v, _) => Err(Rejection(format!("quantifier over {v} is not distance-guarded"))),
        Formula::Count(_, v, _) => Err(Rejection(format!("counting quantifier over {v} inside the matrix"))),
        Formula::Guarded {
            var,
            anchor,
            bound,
            body,
            ..
        } => {
            let base = lookup(scope, anchor)
                .ok_or_else(|| Rejection(format!("guard on {var} is anchored at {anchor}, which is not near the universal variable")))?;
            let reach = base + bound;
            *radius = (*radius).max(reach);
            scope.push((var.clone(), Some(reach)));
            let out = locality(body, scope, radius);
            scope.pop();
            out
        }
    }
}

/// A structure with an assignment, reported when a check fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub structure: Structure,
    pub assignment: Assignment,
}

/// Checks that `φ` is `r`-local around `around`: on every pool structure and
/// assignment, `A ⊨ φ[ā]` iff `A[ā ∪ N_r(b̄)] ⊨ φ[ā]`. Returns the first
/// falsifying pair, or `None`.
pub fn semantic_locality_check(f: &Formula, around: &[Var], r: usize, pool: &[Structure]) -> Result<Option<Witness>> {
    let mut free = f.free_vars();
    for v in around {
        if !free.contains(v) {
            free.push(v.clone());
        }
    }
    free.sort();
    let ev = Evaluator::new(f)?;
    let order: Vec<usize> = ev.free_vars().iter().map(|v| free.binary_search(v).unwrap()).collect();
    let centers: Vec<usize> = around.iter().map(|v| free.binary_search(v).unwrap()).collect();
    for a in pool {
        let mut session = ev.session(a)?;
        let n = a.size();
        let mut values = alloc::vec![0usize; free.len()];
        loop {
            let direct = session.eval(&order.iter().map(|&i| values[i]).collect::<Vec<_>>());
            let mut keep: Vec<usize> = if centers.is_empty() {
                Vec::new()
            } else {
                a.neighborhood(&centers.iter().map(|&i| values[i]).collect::<Vec<_>>(), r)?
            };
            keep.extend(values.iter().copied());
            keep.sort_unstable();
            keep.dedup();
            let sub = a.induced(&keep);
            let local: Vec<usize> = values.iter().map(|e| keep.binary_search(e).unwrap()).collect();
            let inner = ev.session(&sub)?.eval(&order.iter().map(|&i| local[i]).collect::<Vec<_>>());
            if inner != direct {
                let assignment: BTreeMap<Var, usize> = free.iter().cloned().zip(values.iter().copied()).collect();
                return Ok(Some(Witness { structure: a.clone(), assignment }));
            }
            if !advance(&mut values, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Lexicographic successor of a tuple over `0..n`; `false` after the last one.
pub(crate) fn advance(values: &mut [usize], n: usize) -> bool {
    for i in (0..values.len()).rev() {
        values[i] += 1;
        if values[i] < n {
            return true;
        }
        values[i] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::var;
    use crate::parse::parse_formula;
    use crate::structure::tests::{path, sig_e};

    #[test]
    fn accepts_guarded_matrix() {
        let f = parse_formula("exists y. forall z. (E(y,z) | exists w. (dist<=2(z,w) & exists u. (dist<=1(w,u) & E(u,y))))").unwrap();
        let b = is_bsnf(&f).unwrap();
        assert_eq!(b.prefix, alloc::vec![var("y")]);
        assert_eq!(b.radius, 3);
        assert_eq!(b.to_formula(), f.recognize_guards());
    }

    #[test]
    fn rejects_unguarded() {
        let f = parse_formula("exists x. forall z. exists w. E(z,w)").unwrap();
        assert!(is_bsnf(&f).is_err());
        let g = parse_formula("exists y. forall z. exists w. (dist<=1(y,w) & E(z,w))").unwrap();
        assert!(is_bsnf(&g).is_err());
        assert!(is_bsnf(&parse_formula("E(x,y)").unwrap()).is_err());
    }

    #[test]
    fn universal_only() {
        let f = parse_formula("forall z. ~E(z,z)").unwrap();
        let b = is_bsnf(&f).unwrap();
        assert!(b.prefix.is_empty());
        assert_eq!(b.radius, 0);
    }

    #[test]
    fn locality_examples() {
        let pool: Vec<Structure> = (1..5).map(path).chain([Structure::new(sig_e(), 2, alloc::vec![alloc::vec![]]).unwrap()]).collect();
        let e = parse_formula("E(x,y)").unwrap();
        assert_eq!(semantic_locality_check(&e, &[var("x")], 1, &pool).unwrap(), None);
        let g = parse_formula("exists w. E(y,w)").unwrap();
        assert!(semantic_locality_check(&g, &[var("y")], 0, &pool).unwrap().is_some());
        assert_eq!(semantic_locality_check(&g, &[var("y")], 1, &pool).unwrap(), None);
    }
}
