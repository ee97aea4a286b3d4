//! Finite relational structures and their Gaifman graphs.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use hashbrown::HashSet;

use crate::error::{input, Error, Result};

/// Distance matrices and BFS orders are precomputed up to this many elements.
const DENSE_LIMIT: usize = 256;
/// Tuple membership uses a bitset while `size^arity` stays below this.
const DENSE_TUPLES: usize = 1 << 20;

pub const INFINITY: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelSym {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Signature {
    relations: Vec<RelSym>,
    constants: Vec<String>,
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Signature {
    pub fn new<S: Into<String>>(relations: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut sig = Signature::default();
        for (name, arity) in relations {
            let name = name.into();
            if arity == 0 {
                return Err(input(format!("relation {name} has arity 0")));
            }
            if !valid_ident(&name) {
                return Err(input(format!("invalid relation name {name:?}")));
            }
            if sig.relations.iter().any(|r| r.name == name) {
                return Err(input(format!("duplicate relation {name}")));
            }
            sig.relations.push(RelSym { name, arity });
        }
        Ok(sig)
    }

    pub fn with_constants<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Result<Self> {
        for name in names {
            let name = name.into();
            if !valid_ident(&name) {
                return Err(input(format!("invalid constant name {name:?}")));
            }
            if self.constants.contains(&name) || self.relations.iter().any(|r| r.name == name) {
                return Err(input(format!("duplicate symbol {name}")));
            }
            self.constants.push(name);
        }
        Ok(self)
    }

    pub fn relations(&self) -> &[RelSym] {
        &self.relations
    }

    pub fn constants(&self) -> &[String] {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn arity(&self, rel: usize) -> usize {
        self.relations[rel].arity
    }

    pub fn max_arity(&self) -> usize {
        self.relations.iter().map(|r| r.arity).max().unwrap_or(0)
    }

    /// The same relations without constant symbols.
    pub fn relational(&self) -> Signature {
        Signature {
            relations: self.relations.clone(),
            constants: Vec::new(),
        }
    }

    /// Relations of `self` followed by those of `other` not already present.
    pub fn merge(&self, other: &Signature) -> Result<Signature> {
        let mut out = self.clone();
        for r in &other.relations {
            match out.index_of(&r.name) {
                Some(i) if out.relations[i].arity != r.arity => {
                    return Err(input(format!("relation {} used with arities {} and {}", r.name, out.relations[i].arity, r.arity)))
                }
                Some(_) => {}
                None => out.relations.push(r.clone()),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.relations.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}/{}", r.name, r.arity)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum TupleIndex {
    Dense(Vec<u64>),
    Sparse(HashSet<Vec<usize>>),
}

#[derive(Clone, Debug)]
struct Relation {
    tuples: Vec<Vec<usize>>,
    index: TupleIndex,
}

impl Relation {
    fn build(arity: usize, size: usize, mut tuples: Vec<Vec<usize>>) -> Relation {
        tuples.sort_unstable();
        tuples.dedup();
        let cells = size.checked_pow(arity as u32).filter(|&c| c <= DENSE_TUPLES);
        let index = match cells {
            Some(cells) => {
                let mut bits = vec![0u64; cells.div_ceil(64)];
                for t in &tuples {
                    let k = dense_index(t, size);
                    bits[k / 64] |= 1 << (k % 64);
                }
                TupleIndex::Dense(bits)
            }
            None => TupleIndex::Sparse(tuples.iter().cloned().collect()),
        };
        Relation { tuples, index }
    }

    fn contains(&self, t: &[usize], size: usize) -> bool {
        match &self.index {
            TupleIndex::Dense(bits) => {
                let k = dense_index(t, size);
                bits[k / 64] >> (k % 64) & 1 == 1
            }
            TupleIndex::Sparse(set) => set.contains(t),
        }
    }
}

fn dense_index(t: &[usize], size: usize) -> usize {
    t.iter().fold(0, |acc, &e| acc * size + e)
}

/// A finite structure with universe `0..size`.
#[derive(Clone, Debug)]
pub struct Structure {
    sig: Arc<Signature>,
    size: usize,
    rels: Vec<Relation>,
    constants: Vec<usize>,
    adj: Vec<Vec<usize>>,
    dist: Option<Vec<u32>>,
    by_dist: Option<Vec<Vec<u32>>>,
}

impl PartialEq for Structure {
    fn eq(&self, other: &Self) -> bool {
        self.size == other.size
            && self.sig == other.sig
            && self.constants == other.constants
            && self.rels.iter().zip(&other.rels).all(|(a, b)| a.tuples == b.tuples)
    }
}

impl Eq for Structure {}

impl Structure {
    /// Builds a structure; `tuples[i]` lists the tuples of relation `i`.
    pub fn new(sig: Arc<Signature>, size: usize, tuples: Vec<Vec<Vec<usize>>>) -> Result<Structure> {
        Structure::with_constants(sig, size, tuples, Vec::new())
    }

    pub fn with_constants(
        sig: Arc<Signature>,
        size: usize,
        tuples: Vec<Vec<Vec<usize>>>,
        constants: Vec<usize>,
    ) -> Result<Structure> {
        if size == 0 {
            return Err(input("universe must be non-empty"));
        }
        if tuples.len() != sig.len() {
            return Err(input(format!("expected {} relations, got {}", sig.len(), tuples.len())));
        }
        if constants.len() != sig.constants().len() {
            return Err(input("every constant must be interpreted"));
        }
        if let Some(&c) = constants.iter().find(|&&c| c >= size) {
            return Err(input(format!("constant interpreted by invalid element {c}")));
        }
        for (i, ts) in tuples.iter().enumerate() {
            let rel = &sig.relations()[i];
            for t in ts {
                if t.len() != rel.arity {
                    return Err(input(format!("tuple {t:?} has wrong arity for {}/{}", rel.name, rel.arity)));
                }
                if let Some(&e) = t.iter().find(|&&e| e >= size) {
                    return Err(input(format!("element {e} out of range in {}", rel.name)));
                }
            }
        }
        Ok(Structure::build(sig, size, tuples, constants))
    }

    fn build(sig: Arc<Signature>, size: usize, tuples: Vec<Vec<Vec<usize>>>, constants: Vec<usize>) -> Structure {
        let rels: Vec<Relation> = tuples
            .into_iter()
            .enumerate()
            .map(|(i, ts)| Relation::build(sig.arity(i), size, ts))
            .collect();
        let mut adj = vec![Vec::new(); size];
        for rel in &rels {
            for t in &rel.tuples {
                for (i, &a) in t.iter().enumerate() {
                    for &b in &t[i + 1..] {
                        if a != b {
                            adj[a].push(b);
                            adj[b].push(a);
                        }
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let mut s = Structure {
            sig,
            size,
            rels,
            constants,
            adj,
            dist: None,
            by_dist: None,
        };
        if size <= DENSE_LIMIT {
            let mut dist = vec![INFINITY; size * size];
            let mut by_dist = Vec::with_capacity(size);
            for a in 0..size {
                let order = s.bfs(&[a], usize::MAX);
                for &(b, d) in &order {
                    dist[a * size + b] = d as u32;
                }
                by_dist.push(order.iter().map(|&(b, _)| b as u32).collect());
            }
            s.dist = Some(dist);
            s.by_dist = Some(by_dist);
        }
        s
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn signature_arc(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn tuples(&self, rel: usize) -> &[Vec<usize>] {
        &self.rels[rel].tuples
    }

    pub fn holds(&self, rel: usize, t: &[usize]) -> bool {
        self.rels[rel].contains(t, self.size)
    }

    pub fn fact_count(&self) -> usize {
        self.rels.iter().map(|r| r.tuples.len()).sum()
    }

    pub fn constants(&self) -> &[usize] {
        &self.constants
    }

    pub fn constant(&self, name: &str) -> Option<usize> {
        let i = self.sig.constants().iter().position(|c| c == name)?;
        Some(self.constants[i])
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.adj[a]
    }

    fn check(&self, a: usize) -> Result<()> {
        if a >= self.size {
            Err(input(format!("element {a} out of range 0..{}", self.size)))
        } else {
            Ok(())
        }
    }

    /// Breadth-first order from `sources`: sources first, then by distance,
    /// ties broken by smaller element id.
    pub fn bfs(&self, sources: &[usize], limit: usize) -> Vec<(usize, usize)> {
        let mut seen = vec![false; self.size];
        let mut out = Vec::new();
        for &s in sources {
            if !seen[s] {
                seen[s] = true;
                out.push((s, 0));
            }
        }
        let mut level_start = 0;
        let mut depth = 0;
        while level_start < out.len() && depth < limit {
            let level_end = out.len();
            let mut next = Vec::new();
            for &(a, _) in &out[level_start..level_end] {
                for &b in &self.adj[a] {
                    if !seen[b] {
                        seen[b] = true;
                        next.push(b);
                    }
                }
            }
            next.sort_unstable();
            depth += 1;
            out.extend(next.into_iter().map(|b| (b, depth)));
            level_start = level_end;
        }
        out
    }

    /// Gaifman distance; `None` means the elements are in different components.
    pub fn distance(&self, a: usize, b: usize) -> Option<usize> {
        if let Some(dist) = &self.dist {
            let d = dist[a * self.size + b];
            return (d != INFINITY).then_some(d as usize);
        }
        if a == b {
            return Some(0);
        }
        let mut seen = vec![false; self.size];
        let mut queue = VecDeque::from([(a, 0usize)]);
        seen[a] = true;
        while let Some((x, d)) = queue.pop_front() {
            for &y in &self.adj[x] {
                if y == b {
                    return Some(d + 1);
                }
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back((y, d + 1));
                }
            }
        }
        None
    }

    pub fn gaifman_distance(&self, a: usize, b: usize) -> Result<Option<usize>> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.distance(a, b))
    }

    /// Calls `f` on every element within distance `r` of `a`, nearest first.
    pub fn for_each_in_ball(&self, a: usize, r: usize, mut f: impl FnMut(usize) -> bool) -> bool {
        if let (Some(by_dist), Some(dist)) = (&self.by_dist, &self.dist) {
            let row = &dist[a * self.size..(a + 1) * self.size];
            for &b in &by_dist[a] {
                if row[b as usize] as usize > r {
                    break;
                }
                if !f(b as usize) {
                    return false;
                }
            }
            return true;
        }
        for (b, _) in self.bfs(&[a], r) {
            if !f(b) {
                return false;
            }
        }
        true
    }

    /// Sorted union of the `r`-balls around `centers`.
    pub fn neighborhood(&self, centers: &[usize], r: usize) -> Result<Vec<usize>> {
        if centers.is_empty() {
            return Err(input("neighborhood needs at least one center"));
        }
        for &c in centers {
            self.check(c)?;
        }
        let mut out: Vec<usize> = self.bfs(centers, r).into_iter().map(|(b, _)| b).collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Maximum degree of the Gaifman graph.
    pub fn degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Substructure induced on `elements`; element `elements[i]` becomes `i`.
    /// Constants are dropped.
    pub fn induced(&self, elements: &[usize]) -> Structure {
        let mut map = vec![usize::MAX; self.size];
        for (i, &e) in elements.iter().enumerate() {
            map[e] = i;
        }
        let sig = if self.sig.constants().is_empty() {
            self.sig.clone()
        } else {
            Arc::new(self.sig.relational())
        };
        let tuples = self
            .rels
            .iter()
            .map(|rel| {
                rel.tuples
                    .iter()
                    .filter(|t| t.iter().all(|&e| map[e] != usize::MAX))
                    .map(|t| t.iter().map(|&e| map[e]).collect())
                    .collect()
            })
            .collect();
        Structure::build(sig, elements.len(), tuples, Vec::new())
    }

    /// Applies the bijection `perm` (old id to new id).
    pub fn relabel(&self, perm: &[usize]) -> Structure {
        let tuples = self
            .rels
            .iter()
            .map(|rel| rel.tuples.iter().map(|t| t.iter().map(|&e| perm[e]).collect()).collect())
            .collect();
        let constants = self.constants.iter().map(|&c| perm[c]).collect();
        Structure::build(self.sig.clone(), self.size, tuples, constants)
    }

    /// Same facts over a different signature whose relations line up by index.
    pub fn with_signature(&self, sig: Arc<Signature>) -> Result<Structure> {
        if sig.len() != self.sig.len()
            || sig.relations().iter().zip(self.sig.relations()).any(|(a, b)| a.arity != b.arity)
        {
            return Err(input("signatures are not compatible"));
        }
        let tuples = self.rels.iter().map(|r| r.tuples.clone()).collect();
        Structure::with_constants(sig, self.size, tuples, self.constants.clone())
    }

    /// Connected components of the Gaifman graph, ordered by smallest element.
    pub fn components(&self) -> Vec<Component> {
        let mut seen = vec![false; self.size];
        let mut out = Vec::new();
        for a in 0..self.size {
            if seen[a] {
                continue;
            }
            let mut elements: Vec<usize> = self.bfs(&[a], usize::MAX).into_iter().map(|(b, _)| b).collect();
            elements.sort_unstable();
            for &b in &elements {
                seen[b] = true;
            }
            let structure = self.induced(&elements);
            out.push(Component { structure, elements });
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.bfs(&[0], usize::MAX).len() == self.size
    }
}

/// A connected piece of a structure with the original element ids.
#[derive(Clone, Debug)]
pub struct Component {
    pub structure: Structure,
    pub elements: Vec<usize>,
}

/// A disjoint union together with the id range each part occupies.
#[derive(Clone, Debug)]
pub struct DisjointUnion {
    pub structure: Structure,
    pub parts: Vec<Range<usize>>,
}

pub fn disjoint_union(parts: &[Structure]) -> Result<DisjointUnion> {
    let first = parts.first().ok_or_else(|| input("disjoint union of no structures"))?;
    let sig = first.sig.clone();
    let mut tuples: Vec<Vec<Vec<usize>>> = vec![Vec::new(); sig.len()];
    let mut ranges = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for p in parts {
        if *p.sig != *sig {
            return Err(input("disjoint union of structures over different signatures"));
        }
        if !p.sig.constants().is_empty() {
            return Err(input("disjoint union is undefined in the presence of constants"));
        }
        for (i, rel) in p.rels.iter().enumerate() {
            tuples[i].extend(rel.tuples.iter().map(|t| t.iter().map(|&e| e + offset).collect::<Vec<_>>()));
        }
        ranges.push(offset..offset + p.size);
        offset += p.size;
    }
    Ok(DisjointUnion {
        structure: Structure::build(sig, offset, tuples, Vec::new()),
        parts: ranges,
    })
}

/// `ν_d(r) = 1 + d·Σ_{i<r} (d−1)^i`, the largest possible size of an r-ball.
pub fn nu(d: usize, r: usize) -> Result<usize> {
    let overflow = || Error::Overflow(format!("nu({d},{r})"));
    let mut sum: usize = 0;
    let mut term: usize = 1;
    for i in 0..r {
        sum = sum.checked_add(term).ok_or_else(overflow)?;
        if i + 1 < r {
            term = term.checked_mul(d.saturating_sub(1)).ok_or_else(overflow)?;
        }
    }
    d.checked_mul(sum).and_then(|s| s.checked_add(1)).ok_or_else(overflow)
}

/// Incremental construction of a structure by relation name.
pub struct StructureBuilder {
    sig: Arc<Signature>,
    size: usize,
    tuples: Vec<Vec<Vec<usize>>>,
    constants: Vec<usize>,
}

impl StructureBuilder {
    pub fn new(sig: Arc<Signature>, size: usize) -> Self {
        let n = sig.len();
        let c = sig.constants().len();
        StructureBuilder {
            sig,
            size,
            tuples: vec![Vec::new(); n],
            constants: vec![usize::MAX; c],
        }
    }

    pub fn fact(mut self, rel: &str, t: &[usize]) -> Result<Self> {
        self.add(rel, t)?;
        Ok(self)
    }

    pub fn add(&mut self, rel: &str, t: &[usize]) -> Result<()> {
        let i = self
            .sig
            .index_of(rel)
            .ok_or_else(|| input(format!("unknown relation {rel}")))?;
        self.tuples[i].push(t.to_vec());
        Ok(())
    }

    pub fn constant(&mut self, name: &str, e: usize) -> Result<()> {
        let i = self
            .sig
            .constants()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| input(format!("unknown constant {name}")))?;
        self.constants[i] = e;
        Ok(())
    }

    pub fn build(self) -> Result<Structure> {
        if let Some(i) = self.constants.iter().position(|&c| c == usize::MAX) {
            return Err(input(format!("constant {} is not interpreted", self.sig.constants()[i])));
        }
        Structure::with_constants(self.sig, self.size, self.tuples, self.constants)
    }
}

impl fmt::Display for Structure {
    /// The line-oriented text format: signature, universe, one line per relation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "signature: {}", self.sig)?;
        writeln!(f, "universe: {}", self.size)?;
        for (i, rel) in self.rels.iter().enumerate() {
            write!(f, "{}:", self.sig.relations()[i].name)?;
            for t in &rel.tuples {
                let parts: Vec<String> = t.iter().map(|e| e.to_string()).collect();
                write!(f, " ({})", parts.join(","))?;
            }
            writeln!(f)?;
        }
        if !self.constants.is_empty() {
            write!(f, "constants:")?;
            for (name, c) in self.sig.constants().iter().zip(&self.constants) {
                write!(f, " {name}={c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn sig_e() -> Arc<Signature> {
        Arc::new(Signature::new([("E", 2)]).unwrap())
    }

    pub fn path(n: usize) -> Structure {
        let tuples = (0..n.saturating_sub(1)).map(|i| vec![i, i + 1]).collect();
        Structure::new(sig_e(), n, vec![tuples]).unwrap()
    }

    #[test]
    fn distances_on_a_path() {
        let p = path(3);
        assert_eq!(p.gaifman_distance(0, 2).unwrap(), Some(2));
        assert_eq!(p.gaifman_distance(1, 1).unwrap(), Some(0));
        assert!(p.gaifman_distance(0, 3).is_err());
    }

    #[test]
    fn disconnected_is_infinite() {
        let s = Structure::new(sig_e(), 4, vec![vec![vec![0, 1], vec![2, 3]]]).unwrap();
        assert_eq!(s.distance(0, 3), None);
        assert_eq!(s.components().len(), 2);
    }

    #[test]
    fn self_tuples_add_no_edges() {
        let s = Structure::new(sig_e(), 2, vec![vec![vec![0, 0], vec![1, 1]]]).unwrap();
        assert_eq!(s.degree(), 0);
        assert_eq!(s.distance(0, 1), None);
    }

    #[test]
    fn nu_values() {
        assert_eq!(nu(2, 3).unwrap(), 7);
        assert_eq!(nu(3, 2).unwrap(), 1 + 3 * (1 + 2));
        assert_eq!(nu(5, 0).unwrap(), 1);
        assert_eq!(nu(2, 1).unwrap(), 3);
        assert!(nu(usize::MAX, 3).is_err());
    }

    #[test]
    fn neighborhood_of_path() {
        let p = path(4);
        assert_eq!(p.neighborhood(&[1], 1).unwrap(), vec![0, 1, 2]);
        assert_eq!(p.neighborhood(&[1, 3], 0).unwrap(), vec![1, 3]);
        assert!(p.neighborhood(&[], 1).is_err());
    }

    #[test]
    fn degree_of_star() {
        let star = Structure::new(sig_e(), 4, vec![vec![vec![0, 1], vec![0, 2], vec![3, 0]]]).unwrap();
        assert_eq!(star.degree(), 3);
        assert_eq!(path(3).degree(), 2);
        assert_eq!(Structure::new(sig_e(), 1, vec![vec![]]).unwrap().degree(), 0);
    }

    #[test]
    fn union_and_components_roundtrip() {
        let e = path(2);
        let u = disjoint_union(&[e.clone(), e.clone()]).unwrap();
        assert_eq!(u.structure.size(), 4);
        assert_eq!(u.parts, vec![0..2, 2..4]);
        let comps = u.structure.components();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.structure == e));
        assert_eq!(u.structure.degree(), e.degree());
    }

    #[test]
    fn union_rejects_constants() {
        let sig = Arc::new(Signature::new([("E", 2)]).unwrap().with_constants(["c"]).unwrap());
        let s = Structure::with_constants(sig, 1, vec![vec![]], vec![0]).unwrap();
        assert!(disjoint_union(&[s]).is_err());
    }

    #[test]
    fn rejects_bad_tuples() {
        assert!(Structure::new(sig_e(), 2, vec![vec![vec![0, 2]]]).is_err());
        assert!(Structure::new(sig_e(), 2, vec![vec![vec![0]]]).is_err());
        assert!(Structure::new(sig_e(), 0, vec![vec![]]).is_err());
        assert!(Signature::new([("E", 0)]).is_err());
        assert!(Signature::new([("E", 2), ("E", 1)]).is_err());
    }

    #[test]
    fn large_structure_uses_sparse_paths() {
        let n = DENSE_LIMIT + 10;
        let p = path(n);
        assert_eq!(p.distance(0, n - 1), Some(n - 1));
        let mut ball = Vec::new();
        p.for_each_in_ball(5, 2, |b| {
            ball.push(b);
            true
        });
        ball.sort_unstable();
        assert_eq!(ball, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn ternary_tuples_connect_all_positions() {
        let sig = Arc::new(Signature::new([("R", 3)]).unwrap());
        let s = Structure::new(sig, 4, vec![vec![vec![0, 1, 2]]]).unwrap();
        assert_eq!(s.neighbors(0), &[1, 2]);
        assert_eq!(s.distance(1, 2), Some(1));
        assert_eq!(s.distance(0, 3), None);
    }
}
