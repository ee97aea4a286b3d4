//! Tree encodings, labelled chain and tree families, and the formulas that
//! compare components of ordered forests.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input, resource, Error, Result};
use crate::formula::{var, Formula, NameSupply, Var};
use crate::rtype::isomorphic_pointed;
use crate::structure::{disjoint_union, Signature, Structure};
use rand::Rng;

/// `⌊n / 2^i⌋ mod 2`.
pub fn bit(i: u32, n: u64) -> u64 {
    if i >= 64 {
        0
    } else {
        (n >> i) & 1
    }
}

/// `Tower(0) = 1`, `Tower(k+1) = 2^Tower(k)`.
pub fn tower(k: u32) -> Result<u64> {
    let mut t: u64 = 1;
    for _ in 0..k {
        if t >= 64 {
            return Err(Error::Overflow(format!("Tower({k}) does not fit in 64 bits")));
        }
        t = 1u64 << t;
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeEncoding {
    pub index: u64,
    /// A tree over `{E/2}`, root `0`, nodes in preorder.
    pub structure: Structure,
}

impl TreeEncoding {
    pub fn height(&self) -> usize {
        height_from(&self.structure, 0)
    }
}

fn height_from(s: &Structure, root: usize) -> usize {
    s.bfs(&[root], usize::MAX).last().map(|&(_, d)| d).unwrap_or(0)
}

fn sig_of(names: &[&str]) -> Arc<Signature> {
    Arc::new(Signature::new(names.iter().map(|&n| (n, if n == "L" { 1 } else { 2 }))).expect("fixed signature"))
}

/// `T(0)` is a single node; `T(i)` has a fresh root with the subtrees `T(j)`
/// for every set bit `j` of `i`, in increasing `j`.
pub fn tree_encoding(i: u64, max_nodes: usize) -> Result<TreeEncoding> {
    fn build(i: u64, edges: &mut Vec<Vec<usize>>, next: &mut usize, max: usize) -> Result<usize> {
        let me = *next;
        *next += 1;
        if *next > max {
            return Err(resource(format!("tree encoding exceeds {max} nodes")));
        }
        for j in 0..64 {
            if bit(j, i) == 1 {
                let c = build(j as u64, edges, next, max)?;
                edges.push(vec![me, c]);
            }
        }
        Ok(me)
    }
    let mut edges = Vec::new();
    let mut n = 0;
    build(i, &mut edges, &mut n, max_nodes)?;
    let structure = Structure::new(sig_of(&["E"]), n, vec![edges])?;
    Ok(TreeEncoding { index: i, structure })
}

/// A labelled ordered tree with `arity` children per inner node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedTree {
    pub structure: Structure,
    pub arity: usize,
    pub height: usize,
    pub complete: bool,
}

fn edge_names(d: usize) -> Vec<String> {
    if d == 2 {
        vec![String::from("E")]
    } else {
        (1..d).map(|i| format!("E{i}")).collect()
    }
}

/// Signature `{E_1, …, E_{d-1}, L}`; for `d = 2` the single edge relation is `E`.
pub fn forest_signature(d: usize) -> Arc<Signature> {
    let mut rels: Vec<(String, usize)> = edge_names(d).into_iter().map(|n| (n, 2)).collect();
    rels.push((String::from("L"), 1));
    Arc::new(Signature::new(rels).expect("fixed signature"))
}

fn complete_shape(d: usize, h: usize) -> Result<(usize, Vec<Vec<Vec<usize>>>)> {
    let k = d - 1;
    let mut n = 1usize;
    let mut level = 1usize;
    for _ in 0..h {
        level = level.checked_mul(k).ok_or_else(|| resource("tree too large"))?;
        n = n.checked_add(level).ok_or_else(|| resource("tree too large"))?;
    }
    let mut rels = vec![Vec::new(); k];
    let inner = n - level;
    for v in 0..inner {
        for (j, rel) in rels.iter_mut().enumerate() {
            rel.push(vec![v, v * k + j + 1]);
        }
    }
    Ok((n, rels))
}

/// All labellings of the complete ordered `(d-1)`-ary tree of height `h`
/// (nodes in breadth-first order), ordered by label bit-string with the root
/// first. For `d = 2` these are the labelled chains with `h + 1` nodes.
pub fn tree_family(d: usize, h: usize, max_members: usize) -> Result<Vec<OrderedTree>> {
    if d < 2 {
        return Err(input("tree families need d ≥ 2"));
    }
    let (n, rels) = complete_shape(d, h)?;
    if n >= 63 || (1u64 << n) > max_members as u64 {
        return Err(resource(format!("family has 2^{n} members, budget is {max_members}")));
    }
    let sig = forest_signature(d);
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u64..(1 << n) {
        let labels: Vec<Vec<usize>> = (0..n).filter(|&v| mask >> (n - 1 - v) & 1 == 1).map(|v| vec![v]).collect();
        let mut tuples = rels.clone();
        tuples.push(labels);
        out.push(OrderedTree {
            structure: Structure::new(sig.clone(), n, tuples)?,
            arity: d - 1,
            height: h,
            complete: true,
        });
    }
    Ok(out)
}

/// Labelled chains of height `h` over `{E, L}`.
pub fn chain_family(h: usize, max_members: usize) -> Result<Vec<OrderedTree>> {
    tree_family(2, h, max_members)
}

/// A family of structures usable as a test pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Chains { height: usize },
    Trees { d: usize, height: usize },
    Encodings { below: u64 },
}

impl Family {
    pub fn members(&self, max_members: usize) -> Result<Vec<Structure>> {
        Ok(match *self {
            Family::Chains { height } => chain_family(height, max_members)?.into_iter().map(|t| t.structure).collect(),
            Family::Trees { d, height } => tree_family(d, height, max_members)?.into_iter().map(|t| t.structure).collect(),
            Family::Encodings { below } => {
                if below > max_members as u64 {
                    return Err(resource(format!("{below} encodings requested, budget is {max_members}")));
                }
                (0..below).map(|i| tree_encoding(i, 1 << 16).map(|t| t.structure)).collect::<Result<_>>()?
            }
        })
    }
}

/// Nodes without an incoming edge in any binary relation.
pub fn roots(f: &Structure) -> Vec<usize> {
    let sig = f.signature();
    let mut has_parent = vec![false; f.size()];
    for r in 0..sig.len() {
        if sig.arity(r) == 2 {
            for t in f.tuples(r) {
                if t[0] != t[1] {
                    has_parent[t[1]] = true;
                }
            }
        }
    }
    (0..f.size()).filter(|&v| !has_parent[v]).collect()
}

fn edge_rels(d: usize) -> Vec<Var> {
    edge_names(d).iter().map(|n| var(n)).collect()
}

/// `coreach_{d,ℓ}(x, y, xp, yp)`: `y` and `yp` are reached from `x` and `xp`
/// along the same sequence of successor relations, of length at most `ℓ`.
pub fn coreach_formula(d: usize, l: usize) -> Formula {
    let vs = [var("x"), var("y"), var("xp"), var("yp")];
    let mut supply = NameSupply::new();
    supply.reserve_all(vs.iter().cloned());
    coreach_vars(d, l, &vs, &mut supply)
}

fn coreach_vars(d: usize, l: usize, v: &[Var; 4], supply: &mut NameSupply) -> Formula {
    let [x, y, xp, yp] = v;
    let base = Formula::And(vec![Formula::eq(x, y), Formula::eq(xp, yp)]);
    match l {
        0 => base,
        1 => {
            let mut alts = vec![base];
            for e in edge_rels(d) {
                alts.push(Formula::And(vec![
                    Formula::Rel(e.clone(), vec![x.clone(), y.clone()]),
                    Formula::Rel(e, vec![xp.clone(), yp.clone()]),
                ]));
            }
            Formula::Or(alts)
        }
        _ if l.is_multiple_of(2) => {
            let z = supply.fresh("z");
            let zp = supply.fresh("zp");
            let u = supply.fresh("u");
            let w = supply.fresh("v");
            let up = supply.fresh("up");
            let wp = supply.fresh("vp");
            let inner = coreach_vars(d, l / 2, &[u.clone(), w.clone(), up.clone(), wp.clone()], supply);
            let pick = Formula::Or(vec![
                Formula::And(vec![Formula::eq(&u, x), Formula::eq(&up, xp), Formula::eq(&w, &z), Formula::eq(&wp, &zp)]),
                Formula::And(vec![Formula::eq(&u, &z), Formula::eq(&up, &zp), Formula::eq(&w, y), Formula::eq(&wp, yp)]),
            ]);
            let body = Formula::implies(pick, inner);
            let body = [&u, &w, &up, &wp].iter().rev().fold(body, |acc, q| Formula::forall(q, acc));
            Formula::exists(&z, Formula::exists(&zp, body))
        }
        _ => {
            let z = supply.fresh("z");
            let zp = supply.fresh("zp");
            let step = coreach_vars(d, 1, &[x.clone(), z.clone(), xp.clone(), zp.clone()], supply);
            let rest = coreach_vars(d, l - 1, &[z.clone(), y.clone(), zp.clone(), yp.clone()], supply);
            Formula::exists(&z, Formula::exists(&zp, Formula::And(vec![step, rest])))
        }
    }
}

/// `iso_{d,h}(x, y) := ∀xp ∀yp (coreach_{d,2^h}(x, xp, y, yp) → (L(xp) ↔ L(yp)))`.
pub fn iso_formula(d: usize, h: u32) -> Formula {
    let (x, y, xp, yp) = (var("x"), var("y"), var("xp"), var("yp"));
    let mut supply = NameSupply::new();
    supply.reserve_all([x.clone(), y.clone(), xp.clone(), yp.clone()]);
    let reach = coreach_vars(d, 1usize << h, &[x, xp.clone(), y, yp.clone()], &mut supply);
    let same = Formula::iff(Formula::rel("L", &[&xp]), Formula::rel("L", &[&yp]));
    Formula::forall(&xp, Formula::forall(&yp, Formula::implies(reach, same)))
}

/// `Root(x)`: no incoming successor edge.
pub fn root_formula(d: usize, x: &Var) -> Formula {
    let y = var(if &**x == "y" { "w" } else { "y" });
    let alts = edge_rels(d).into_iter().map(|e| Formula::Rel(e, vec![y.clone(), x.clone()])).collect();
    Formula::not(Formula::exists(&y, Formula::or(alts)))
}

/// Every component is isomorphic to another one:
/// `∀x (Root(x) → ∃y (Root(y) ∧ ¬x=y ∧ iso_{d,h}(x,y)))`.
pub fn phi_h(d: usize, h: u32) -> Formula {
    let x = var("x");
    let y = var("y");
    let inner = Formula::And(vec![root_formula(d, &y), Formula::neq(&x, &y), iso_formula(d, h)]);
    Formula::forall(&x, Formula::implies(root_formula(d, &x), Formula::exists(&y, inner)))
}

/// Two copies of every member of `family`, and the same with component
/// `delete` (default: the last one) removed.
pub fn lemma8_scenario(family: &[Structure], delete: Option<usize>) -> Result<(Structure, Structure)> {
    if family.is_empty() {
        return Err(input("the scenario needs at least one structure"));
    }
    for (i, s) in family.iter().enumerate() {
        if !s.is_connected() {
            return Err(input(format!("member {i} is not connected")));
        }
        for (j, t) in family[..i].iter().enumerate() {
            if s.size() == t.size() && isomorphic_pointed(s, &[], t, &[])? {
                return Err(input(format!("members {j} and {i} are isomorphic")));
            }
        }
    }
    let parts: Vec<Structure> = family.iter().flat_map(|s| [s.clone(), s.clone()]).collect();
    let k = delete.unwrap_or(parts.len() - 1);
    if k >= parts.len() {
        return Err(input(format!("component {k} does not exist")));
    }
    let a = disjoint_union(&parts)?.structure;
    let rest: Vec<Structure> = parts.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, s)| s.clone()).collect();
    let b = disjoint_union(&rest)?.structure;
    Ok((a, b))
}

/// A random forest over `forest_signature(d)` with `nodes` nodes: each node
/// after the first hangs below a random earlier node with a free child slot,
/// or starts a new tree; labels are random.
pub fn random_forest(d: usize, nodes: usize, rng: &mut impl Rng) -> Result<Structure> {
    if d < 2 || nodes == 0 {
        return Err(input("random forests need d ≥ 2 and at least one node"));
    }
    let k = d - 1;
    let mut rels = vec![Vec::new(); k + 1];
    let mut used = vec![vec![false; k]; nodes];
    for v in 1..nodes {
        let slots: Vec<(usize, usize)> = (0..v).flat_map(|u| (0..k).map(move |j| (u, j))).filter(|&(u, j)| !used[u][j]).collect();
        if slots.is_empty() || rng.gen_range(0..4) == 0 {
            continue;
        }
        let (u, j) = slots[rng.gen_range(0..slots.len())];
        used[u][j] = true;
        rels[j].push(vec![u, v]);
    }
    for v in 0..nodes {
        if rng.gen_bool(0.5) {
            rels[k].push(vec![v]);
        }
    }
    Structure::new(forest_signature(d), nodes, rels)
}

/// A forest of `components` trees drawn from `tree_family(d, h)`, with
/// repetitions so that isomorphic pairs occur.
pub fn random_family_forest(d: usize, h: usize, components: usize, rng: &mut impl Rng, max_members: usize) -> Result<Structure> {
    let fam = tree_family(d, h, max_members)?;
    let pool: Vec<usize> = (0..components.div_ceil(2).max(1)).map(|_| rng.gen_range(0..fam.len())).collect();
    let parts: Vec<Structure> = (0..components).map(|_| fam[pool[rng.gen_range(0..pool.len())]].structure.clone()).collect();
    Ok(disjoint_union(&parts)?.structure)
}

/// Direct check of co-reachability by a simultaneous breadth-first search.
pub fn co_reachable(f: &Structure, a: usize, b: usize, a2: usize, b2: usize, l: usize) -> bool {
    let sig = f.signature();
    let rels: Vec<usize> = (0..sig.len()).filter(|&r| sig.arity(r) == 2).collect();
    let n = f.size();
    let mut seen = vec![false; n * n];
    let mut frontier = vec![(a, a2)];
    seen[a * n + a2] = true;
    for step in 0..=l {
        if frontier.contains(&(b, b2)) {
            return true;
        }
        if step == l {
            break;
        }
        let mut next = Vec::new();
        for &(u, u2) in &frontier {
            for &r in &rels {
                for t in f.tuples(r).iter().filter(|t| t[0] == u) {
                    for t2 in f.tuples(r).iter().filter(|t2| t2[0] == u2) {
                        let key = t[1] * n + t2[1];
                        if !seen[key] {
                            seen[key] = true;
                            next.push((t[1], t2[1]));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{model_check, Assignment, Evaluator};

    #[test]
    fn bits_and_towers() {
        assert_eq!((bit(0, 5), bit(1, 5), bit(2, 5)), (1, 0, 1));
        assert_eq!((tower(0).unwrap(), tower(2).unwrap(), tower(3).unwrap()), (1, 4, 16));
        assert_eq!(tower(4).unwrap(), 65536);
        assert!(tower(5).is_err());
    }

    #[test]
    fn encodings() {
        assert_eq!(tree_encoding(0, 100).unwrap().structure.size(), 1);
        let t1 = tree_encoding(1, 100).unwrap();
        assert_eq!(t1.structure.size(), 2);
        assert_eq!(t1.structure.tuples(0), &[vec![0, 1]]);
        let t5 = tree_encoding(5, 100).unwrap();
        // root, T(0), and T(2) = root → T(1) = root → T(0)
        assert_eq!(t5.structure.size(), 5);
        assert_eq!(t5.height(), 3);
        for h in 1..=3 {
            for i in 0..tower(h).unwrap() {
                assert!(tree_encoding(i, 1 << 12).unwrap().height() <= h as usize);
            }
        }
        assert!(tree_encoding(1 << 20, 4).is_err());
    }

    #[test]
    fn family_sizes() {
        assert_eq!(chain_family(2, 1 << 10).unwrap().len(), 8);
        assert_eq!(chain_family(4, 1 << 10).unwrap().len(), 32);
        let trees = tree_family(3, 2, 1 << 10).unwrap();
        assert_eq!(trees.len(), 128);
        assert!(trees.iter().all(|t| t.structure.size() == 7 && t.structure.degree() <= 3));
        assert!(tree_family(3, 5, 1 << 10).is_err());
        let chains = chain_family(2, 16).unwrap();
        for i in 0..chains.len() {
            for j in 0..i {
                assert!(!isomorphic_pointed(&chains[i].structure, &[], &chains[j].structure, &[]).unwrap());
            }
        }
    }

    #[test]
    fn coreach_base_cases() {
        assert_eq!(coreach_formula(3, 0).to_string(), "(x = y & xp = yp)");
        assert_eq!(
            coreach_formula(3, 1).to_string(),
            "((x = y & xp = yp) | (E1(x,y) & E1(xp,yp)) | (E2(x,y) & E2(xp,yp)))"
        );
    }

    #[test]
    fn scenario_and_duplication() {
        let family: Vec<Structure> = chain_family(2, 16).unwrap().into_iter().take(3).map(|t| t.structure).collect();
        let (a, b) = lemma8_scenario(&family, None).unwrap();
        assert_eq!(a.size(), 2 * 9);
        assert_eq!(a.components().len(), 6);
        let phi = phi_h(2, 1);
        assert!(model_check(&a, &phi, &Assignment::new()).unwrap());
        assert!(!model_check(&b, &phi, &Assignment::new()).unwrap());
        let dup = [family[0].clone(), family[0].clone()];
        assert!(lemma8_scenario(&dup, None).is_err());
    }

    #[test]
    fn iso_on_two_chains() {
        let chains = chain_family(2, 16).unwrap();
        let f = disjoint_union(&[chains[3].structure.clone(), chains[3].structure.clone(), chains[5].structure.clone()]).unwrap();
        let ev = Evaluator::new(&iso_formula(2, 1)).unwrap();
        let mut s = ev.session(&f.structure).unwrap();
        assert!(s.eval(&[0, 3]));
        assert!(!s.eval(&[0, 6]));
    }
}
