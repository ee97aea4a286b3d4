//! Neighbourhood types: extraction, isomorphism, canonical forms and registries.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::HashMap;

use crate::error::{input, resource, Result};
use crate::structure::{nu, Signature, Structure};

/// A structure with an ordered list of centers covering it within `radius`.
/// Centers may repeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RType {
    carrier: Structure,
    centers: Vec<usize>,
    radius: usize,
}

impl RType {
    pub fn new(carrier: Structure, centers: Vec<usize>, radius: usize) -> Result<RType> {
        if centers.is_empty() {
            return Err(input("a type needs at least one center"));
        }
        if let Some(&c) = centers.iter().find(|&&c| c >= carrier.size()) {
            return Err(input(format!("center {c} out of range")));
        }
        let covered = carrier.bfs(&centers, radius).len();
        if covered != carrier.size() {
            return Err(input(format!(
                "{} of {} carrier elements lie farther than {radius} from every center",
                carrier.size() - covered,
                carrier.size()
            )));
        }
        Ok(RType {
            carrier,
            centers,
            radius,
        })
    }

    pub fn carrier(&self) -> &Structure {
        &self.carrier
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn arity(&self) -> usize {
        self.centers.len()
    }

    pub fn signature(&self) -> &Signature {
        self.carrier.signature()
    }

    /// Canonical code: equal codes iff isomorphic types.
    pub fn code(&self) -> Vec<u32> {
        canonical_labeling(&self.carrier, &self.centers).code
    }

    pub fn is_connected(&self) -> bool {
        self.carrier.is_connected()
    }
}

/// The `r`-type of `centers` in `a`, renumbered in BFS order from the centers.
pub fn extract_rtype(a: &Structure, centers: &[usize], r: usize) -> Result<RType> {
    if centers.is_empty() {
        return Err(input("a type needs at least one center"));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= a.size()) {
        return Err(input(format!("center {c} out of range 0..{}", a.size())));
    }
    Ok(extract_unchecked(a, centers, r))
}

pub(crate) fn extract_unchecked(a: &Structure, centers: &[usize], r: usize) -> RType {
    let order: Vec<usize> = a.bfs(centers, r).into_iter().map(|(b, _)| b).collect();
    let mut pos = vec![usize::MAX; a.size()];
    for (i, &b) in order.iter().enumerate() {
        pos[b] = i;
    }
    RType {
        carrier: a.induced(&order),
        centers: centers.iter().map(|&c| pos[c]).collect(),
        radius: r,
    }
}

/// Whether `a1` and `a2` are isomorphic by a map sending `c1[i]` to `c2[i]`.
pub fn isomorphic_pointed(a1: &Structure, c1: &[usize], a2: &Structure, c2: &[usize]) -> Result<bool> {
    if a1.signature() != a2.signature() {
        return Err(input("isomorphism test across different signatures"));
    }
    if c1.len() != c2.len() {
        return Err(input("isomorphism test with different numbers of centers"));
    }
    if a1.size() != a2.size() {
        return Ok(false);
    }
    let sig = a1.signature();
    for r in 0..sig.len() {
        if a1.tuples(r).len() != a2.tuples(r).len() {
            return Ok(false);
        }
    }
    let n = a1.size();
    let mut fwd = vec![usize::MAX; n];
    let mut bwd = vec![usize::MAX; n];
    for (&x, &y) in c1.iter().zip(c2) {
        match (fwd[x], bwd[y]) {
            (usize::MAX, usize::MAX) => {
                fwd[x] = y;
                bwd[y] = x;
            }
            (fx, by) if fx == y && by == x => {}
            _ => return Ok(false),
        }
    }
    let inc1 = incidence(a1);
    let inc2 = incidence(a2);
    for x in 0..n {
        if fwd[x] != usize::MAX && !consistent(a1, a2, &inc1, &inc2, &fwd, &bwd, x) {
            return Ok(false);
        }
    }
    let start: Vec<usize> = if c1.is_empty() { vec![0] } else { c1.to_vec() };
    let mut order: Vec<usize> = a1.bfs(&start, usize::MAX).into_iter().map(|(b, _)| b).collect();
    for x in 0..n {
        if !order.contains(&x) {
            order.push(x);
        }
    }
    order.retain(|&x| fwd[x] == usize::MAX);
    Ok(iso_search(a1, a2, &inc1, &inc2, &order, 0, &mut fwd, &mut bwd))
}

pub fn isomorphic(t1: &RType, t2: &RType) -> Result<bool> {
    isomorphic_pointed(&t1.carrier, &t1.centers, &t2.carrier, &t2.centers)
}

type Incidence = Vec<Vec<(usize, usize)>>;

fn incidence(a: &Structure) -> Incidence {
    let mut inc = vec![Vec::new(); a.size()];
    for r in 0..a.signature().len() {
        for (i, t) in a.tuples(r).iter().enumerate() {
            let mut seen: Vec<usize> = t.clone();
            seen.sort_unstable();
            seen.dedup();
            for e in seen {
                inc[e].push((r, i));
            }
        }
    }
    inc
}

fn consistent(
    a1: &Structure,
    a2: &Structure,
    inc1: &Incidence,
    inc2: &Incidence,
    fwd: &[usize],
    bwd: &[usize],
    x: usize,
) -> bool {
    let mut img = Vec::new();
    for &(r, i) in &inc1[x] {
        let t = &a1.tuples(r)[i];
        if t.iter().all(|&e| fwd[e] != usize::MAX) {
            img.clear();
            img.extend(t.iter().map(|&e| fwd[e]));
            if !a2.holds(r, &img) {
                return false;
            }
        }
    }
    let y = fwd[x];
    for &(r, i) in &inc2[y] {
        let t = &a2.tuples(r)[i];
        if t.iter().all(|&e| bwd[e] != usize::MAX) {
            img.clear();
            img.extend(t.iter().map(|&e| bwd[e]));
            if !a1.holds(r, &img) {
                return false;
            }
        }
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn iso_search(
    a1: &Structure,
    a2: &Structure,
    inc1: &Incidence,
    inc2: &Incidence,
    order: &[usize],
    k: usize,
    fwd: &mut [usize],
    bwd: &mut [usize],
) -> bool {
    let Some(&x) = order.get(k) else {
        return true;
    };
    for y in 0..a2.size() {
        if bwd[y] != usize::MAX || a1.neighbors(x).len() != a2.neighbors(y).len() || inc1[x].len() != inc2[y].len() {
            continue;
        }
        fwd[x] = y;
        bwd[y] = x;
        if consistent(a1, a2, inc1, inc2, fwd, bwd, x) && iso_search(a1, a2, inc1, inc2, order, k + 1, fwd, bwd) {
            return true;
        }
        fwd[x] = usize::MAX;
        bwd[y] = usize::MAX;
    }
    false
}

/// Result of canonical labeling: `order[i]` is the old id placed at position `i`.
#[derive(Clone, Debug)]
pub struct Canon {
    pub order: Vec<usize>,
    pub code: Vec<u32>,
}

/// Lexicographically least row encoding over all relabelings that fix the
/// centers and respect a refined invariant colouring of the other elements.
pub fn canonical_labeling(s: &Structure, centers: &[usize]) -> Canon {
    let n = s.size();
    let mut fixed: Vec<usize> = Vec::new();
    let mut pattern = Vec::with_capacity(centers.len());
    for &c in centers {
        match fixed.iter().position(|&f| f == c) {
            Some(i) => pattern.push(i as u32),
            None => {
                pattern.push(fixed.len() as u32);
                fixed.push(c);
            }
        }
    }
    let colors = refined_colors(s, &fixed);
    let mut rest: Vec<usize> = (0..n).filter(|e| !fixed.contains(e)).collect();
    rest.sort_by_key(|&e| (colors[e], e));
    let m = fixed.len();
    let mut class_of_pos = vec![u32::MAX; n];
    for (i, &e) in rest.iter().enumerate() {
        class_of_pos[m + i] = colors[e];
    }
    let mut search = Search {
        s,
        colors: &colors,
        class_of_pos: &class_of_pos,
        order: fixed.clone(),
        used: vec![false; n],
        best_rows: Vec::new(),
        best_order: Vec::new(),
        scratch: Vec::new(),
    };
    for &f in &fixed {
        search.used[f] = true;
    }
    for k in 0..m {
        let row = search.row(k);
        search.best_rows.push(row);
    }
    search.order.resize(n, usize::MAX);
    search.run(m);
    let mut code = Vec::with_capacity(2 + pattern.len() + n * 2);
    code.push(n as u32);
    code.push(centers.len() as u32);
    code.extend(pattern);
    for row in &search.best_rows {
        code.extend_from_slice(row);
    }
    Canon {
        order: search.best_order,
        code,
    }
}

struct Search<'a> {
    s: &'a Structure,
    colors: &'a [u32],
    class_of_pos: &'a [u32],
    order: Vec<usize>,
    used: Vec<bool>,
    best_rows: Vec<Vec<u32>>,
    best_order: Vec<usize>,
    scratch: Vec<usize>,
}

impl Search<'_> {
    /// Facts among positions `0..=k` that mention position `k`, as packed bits.
    fn row(&mut self, k: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut word = 0u32;
        let mut nbits = 0;
        let sig = self.s.signature();
        for r in 0..sig.len() {
            let a = sig.arity(r);
            let mut idx = vec![0usize; a];
            'tuples: loop {
                if idx.contains(&k) {
                    self.scratch.clear();
                    self.scratch.extend(idx.iter().map(|&p| self.order[p]));
                    word = (word << 1) | self.s.holds(r, &self.scratch) as u32;
                    nbits += 1;
                    if nbits == 32 {
                        out.push(word);
                        word = 0;
                        nbits = 0;
                    }
                }
                let mut j = a;
                loop {
                    if j == 0 {
                        break 'tuples;
                    }
                    j -= 1;
                    if idx[j] < k {
                        idx[j] += 1;
                        for t in &mut idx[j + 1..] {
                            *t = 0;
                        }
                        break;
                    }
                }
            }
        }
        if nbits > 0 {
            out.push(word << (32 - nbits));
        }
        out
    }

    fn run(&mut self, k: usize) {
        let n = self.s.size();
        if k == n {
            self.best_order = self.order.clone();
            return;
        }
        let class = self.class_of_pos[k];
        for c in 0..n {
            if self.used[c] || self.colors[c] != class {
                continue;
            }
            self.order[k] = c;
            let row = self.row(k);
            match self.best_rows.get(k).map(|b| row.cmp(b)) {
                Some(Ordering::Greater) => continue,
                Some(Ordering::Equal) => {}
                Some(Ordering::Less) | None => {
                    self.best_rows.truncate(k);
                    self.best_rows.push(row);
                }
            }
            self.used[c] = true;
            self.run(k + 1);
            self.used[c] = false;
        }
    }
}

/// Colour refinement seeded with distances to the fixed elements, degrees and
/// per-position fact counts. Fixed elements get their own colours.
fn refined_colors(s: &Structure, fixed: &[usize]) -> Vec<u32> {
    let n = s.size();
    let sig = s.signature();
    let mut inv: Vec<Vec<u32>> = (0..n)
        .map(|e| {
            let mut v = Vec::new();
            match fixed.iter().position(|&f| f == e) {
                Some(i) => {
                    v.push(0);
                    v.push(i as u32);
                }
                None => v.push(1),
            }
            for &f in fixed {
                v.push(s.distance(f, e).map_or(u32::MAX, |d| d as u32));
            }
            v.push(s.neighbors(e).len() as u32);
            v
        })
        .collect();
    let mut links: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
    for r in 0..sig.len() {
        let a = sig.arity(r);
        let base = inv[0].len();
        for v in inv.iter_mut() {
            v.resize(base + a + 1, 0);
        }
        for t in s.tuples(r) {
            if t.iter().all(|&e| e == t[0]) {
                inv[t[0]][base + a] += 1;
            }
            for (p, &e) in t.iter().enumerate() {
                inv[e][base + p] += 1;
            }
            for (p, &e) in t.iter().enumerate() {
                for (q, &f) in t.iter().enumerate() {
                    if e != f {
                        links[e].push((f, ((r as u32) << 16) | ((p as u32) << 8) | q as u32));
                    }
                }
            }
        }
    }
    let mut colors = rank(&inv);
    let mut count = distinct(&colors);
    loop {
        let sigs: Vec<Vec<u32>> = (0..n)
            .map(|e| {
                let mut l: Vec<(u32, u32)> = links[e].iter().map(|&(f, k)| (colors[f], k)).collect();
                l.sort_unstable();
                let mut v = vec![colors[e]];
                for (c, k) in l {
                    v.push(c);
                    v.push(k);
                }
                v
            })
            .collect();
        let next = rank(&sigs);
        let next_count = distinct(&next);
        colors = next;
        if next_count == count {
            break;
        }
        count = next_count;
    }
    colors
}

fn rank(keys: &[Vec<u32>]) -> Vec<u32> {
    let mut sorted: Vec<&Vec<u32>> = keys.iter().collect();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(&k).unwrap() as u32)
        .collect()
}

fn distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// The canonical representative of the isomorphism class of `t`.
pub fn canonical_form(t: &RType) -> RType {
    let canon = canonical_labeling(&t.carrier, &t.centers);
    relabel_by(t, &canon.order)
}

fn relabel_by(t: &RType, order: &[usize]) -> RType {
    let mut perm = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    RType {
        carrier: t.carrier.relabel(&perm),
        centers: t.centers.iter().map(|&c| perm[c]).collect(),
        radius: t.radius,
    }
}

/// Limits for type enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypeBudget {
    /// Refuse when `n·ν_d(r)` exceeds this.
    pub max_elements: usize,
    /// Refuse when the registry would grow beyond this many members.
    pub max_members: usize,
}

impl Default for TypeBudget {
    fn default() -> Self {
        TypeBudget {
            max_elements: 9,
            max_members: 2_000_000,
        }
    }
}

/// A duplicate-free list of canonical types keyed by `(σ, d, r, n)`.
#[derive(Clone, Debug)]
pub struct TypeRegistry {
    signature: Arc<Signature>,
    degree: usize,
    radius: usize,
    centers: usize,
    members: Vec<RType>,
    index: HashMap<Vec<u32>, usize>,
}

impl TypeRegistry {
    fn from_map(signature: Arc<Signature>, degree: usize, radius: usize, centers: usize, map: HashMap<Vec<u32>, RType>) -> Self {
        let mut entries: Vec<(Vec<u32>, RType)> = map.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut index = HashMap::with_capacity(entries.len());
        let mut members = Vec::with_capacity(entries.len());
        for (i, (code, t)) in entries.into_iter().enumerate() {
            index.insert(code, i);
            members.push(t);
        }
        TypeRegistry {
            signature,
            degree,
            radius,
            centers,
            members,
            index,
        }
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.signature
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn centers(&self) -> usize {
        self.centers
    }

    pub fn members(&self) -> &[RType] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position_of_code(&self, code: &[u32]) -> Option<usize> {
        self.index.get(code).copied()
    }

    /// Index of the unique member isomorphic to `t`.
    pub fn position(&self, t: &RType) -> Option<usize> {
        self.position_of_code(&t.code())
    }
}

/// All `d`-bounded `r`-types with `n` centers over `sig`, one per class.
pub fn enumerate_types(sig: &Arc<Signature>, d: usize, r: usize, n: usize, budget: &TypeBudget) -> Result<TypeRegistry> {
    if n == 0 {
        return Err(input("types need at least one center"));
    }
    let bound = nu(d, r)?.saturating_mul(n);
    if bound > budget.max_elements {
        return Err(resource(format!(
            "type enumeration needs up to n·ν_d(r) = {bound} elements, budget is {}",
            budget.max_elements
        )));
    }
    if bound > 64 {
        return Err(resource("types with more than 64 elements are not supported"));
    }
    let sig = Arc::new(sig.relational());
    let mut map: HashMap<Vec<u32>, RType> = HashMap::new();
    for pattern in center_patterns(n) {
        let m = pattern.iter().copied().max().unwrap_or(0) + 1;
        for g in layered_graphs(m, d, r) {
            let centers = pattern.clone();
            let mut err = None;
            fill_relations(&sig, &g.adj, &mut |carrier| {
                let t = RType {
                    carrier,
                    centers: centers.clone(),
                    radius: r,
                };
                let canon = canonical_labeling(&t.carrier, &t.centers);
                if !map.contains_key(&canon.code) {
                    if map.len() >= budget.max_members {
                        err = Some(resource(format!("more than {} types", budget.max_members)));
                        return false;
                    }
                    let rep = relabel_by(&t, &canon.order);
                    map.insert(canon.code, rep);
                }
                true
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
    }
    Ok(TypeRegistry::from_map(sig, d, r, n, map))
}

/// Builds a registry from explicitly given types, deduplicating by class.
pub fn registry_from_types(sig: Arc<Signature>, degree: usize, radius: usize, centers: usize, types: impl IntoIterator<Item = RType>) -> TypeRegistry {
    let mut map = HashMap::new();
    for t in types {
        let canon = canonical_labeling(&t.carrier, &t.centers);
        map.entry(canon.code).or_insert_with(|| relabel_by(&t, &canon.order));
    }
    TypeRegistry::from_map(sig, degree, radius, centers, map)
}

/// Set partitions of `0..n` as restricted growth strings.
fn center_patterns(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[i] = v;
            rec(i + 1, max.max(v), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

/// A Gaifman graph on at most 64 vertices, vertices `0..m` being the centers.
#[derive(Clone, Debug)]
pub(crate) struct Graph {
    pub adj: Vec<u64>,
}

/// Connected-to-centers graphs of maximum degree `d` in which every vertex has
/// distance at most `r` from the first `m` vertices.
pub(crate) fn layered_graphs(m: usize, d: usize, r: usize) -> Vec<Graph> {
    let mut out = Vec::new();
    let base = Graph { adj: vec![0; m] };
    let layer: Vec<usize> = (0..m).collect();
    intra_edges(base, &layer, d, &mut |g| {
        grow(g, &layer, 0, d, r, &mut out);
    });
    out
}

fn deg(g: &Graph, v: usize) -> usize {
    g.adj[v].count_ones() as usize
}

fn intra_edges(g: Graph, layer: &[usize], d: usize, f: &mut dyn FnMut(Graph)) {
    let mut pairs = Vec::new();
    for (i, &u) in layer.iter().enumerate() {
        for &v in &layer[i + 1..] {
            pairs.push((u, v));
        }
    }
    fn rec(g: &mut Graph, pairs: &[(usize, usize)], d: usize, f: &mut dyn FnMut(Graph)) {
        let Some((&(u, v), rest)) = pairs.split_first() else {
            f(g.clone());
            return;
        };
        rec(g, rest, d, f);
        if deg(g, u) < d && deg(g, v) < d {
            g.adj[u] |= 1 << v;
            g.adj[v] |= 1 << u;
            rec(g, rest, d, f);
            g.adj[u] &= !(1 << v);
            g.adj[v] &= !(1 << u);
        }
    }
    let mut g = g;
    rec(&mut g, &pairs, d, f);
}

fn grow(g: Graph, layer: &[usize], depth: usize, d: usize, r: usize, out: &mut Vec<Graph>) {
    if depth == r {
        out.push(g);
        return;
    }
    let mut sets: Vec<u64> = Vec::new();
    choose_parents(&g, layer, d, 1, &mut sets, &mut |g, sets| {
        if sets.is_empty() {
            out.push(g.clone());
            return;
        }
        let mut h = g.clone();
        let start = h.adj.len();
        let new_layer: Vec<usize> = (start..start + sets.len()).collect();
        for (i, &mask) in sets.iter().enumerate() {
            let v = start + i;
            h.adj.push(mask);
            for p in 0..start {
                if mask >> p & 1 == 1 {
                    h.adj[p] |= 1 << v;
                }
            }
        }
        intra_edges(h, &new_layer, d, &mut |h2| grow(h2, &new_layer, depth + 1, d, r, out));
    });
}

/// Non-decreasing sequences of non-empty parent sets within `layer`.
fn choose_parents(g: &Graph, layer: &[usize], d: usize, min: u64, sets: &mut Vec<u64>, f: &mut dyn FnMut(&Graph, &[u64])) {
    f(g, sets);
    if g.adj.len() + sets.len() >= 64 {
        return;
    }
    let k = layer.len();
    let mut choices: Vec<u64> = (1u64..(1 << k))
        .map(|bits| {
            let mut mask = 0u64;
            for (i, &p) in layer.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    mask |= 1 << p;
                }
            }
            mask
        })
        .filter(|&mask| mask >= min && mask.count_ones() as usize <= d)
        .collect();
    choices.sort_unstable();
    for mask in choices {
        let fits = layer.iter().all(|&p| {
            if mask >> p & 1 == 0 {
                return true;
            }
            let extra = sets.iter().filter(|&&s| s >> p & 1 == 1).count();
            deg(g, p) + extra < d
        });
        if fits {
            sets.push(mask);
            choose_parents(g, layer, d, mask, sets, f);
            sets.pop();
        }
    }
}

/// Every assignment of relations over `sig` whose Gaifman graph is exactly
/// `adj`. The callback returns `false` to stop.
pub(crate) fn fill_relations(sig: &Arc<Signature>, adj: &[u64], f: &mut dyn FnMut(Structure) -> bool) -> bool {
    let n = adj.len();
    struct Group {
        rel: usize,
        tuples: Vec<Vec<usize>>,
        edges: Vec<usize>,
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (u, row) in adj.iter().enumerate() {
        for v in u + 1..n {
            if row >> v & 1 == 1 {
                edges.push((u, v));
            }
        }
    }
    let edge_id = |u: usize, v: usize| edges.iter().position(|&(a, b)| (a, b) == (u.min(v), u.max(v)));
    let mut groups: Vec<Group> = Vec::new();
    for r in 0..sig.len() {
        let a = sig.arity(r);
        let mut by_set: Vec<(u64, Vec<Vec<usize>>)> = Vec::new();
        let mut t = vec![0usize; a];
        'tuples: loop {
            let mut set = 0u64;
            for &e in &t {
                set |= 1 << e;
            }
            let members: Vec<usize> = (0..n).filter(|&e| set >> e & 1 == 1).collect();
            let clique = members
                .iter()
                .all(|&u| members.iter().all(|&v| u == v || adj[u] >> v & 1 == 1));
            if clique {
                match by_set.iter_mut().find(|(s, _)| *s == set) {
                    Some((_, ts)) => ts.push(t.clone()),
                    None => by_set.push((set, vec![t.clone()])),
                }
            }
            let mut j = a;
            loop {
                if j == 0 {
                    break 'tuples;
                }
                j -= 1;
                if t[j] + 1 < n {
                    t[j] += 1;
                    for x in &mut t[j + 1..] {
                        *x = 0;
                    }
                    break;
                }
            }
        }
        for (set, tuples) in by_set {
            let members: Vec<usize> = (0..n).filter(|&e| set >> e & 1 == 1).collect();
            let mut es = Vec::new();
            for (i, &u) in members.iter().enumerate() {
                for &v in &members[i + 1..] {
                    es.push(edge_id(u, v).unwrap());
                }
            }
            groups.push(Group { rel: r, tuples, edges: es });
        }
    }
    let mut last = vec![usize::MAX; edges.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &e in &g.edges {
            last[e] = gi;
        }
    }
    if last.contains(&usize::MAX) {
        return true;
    }
    let closing: Vec<Vec<usize>> = (0..groups.len())
        .map(|gi| (0..edges.len()).filter(|&e| last[e] == gi).collect())
        .collect();
    let mut covered = vec![0usize; edges.len()];
    let mut chosen: Vec<Vec<Vec<usize>>> = vec![Vec::new(); sig.len()];

    #[allow(clippy::too_many_arguments)]
    fn rec(
        gi: usize,
        groups: &[Group],
        closing: &[Vec<usize>],
        covered: &mut [usize],
        chosen: &mut Vec<Vec<Vec<usize>>>,
        sig: &Arc<Signature>,
        n: usize,
        f: &mut dyn FnMut(Structure) -> bool,
    ) -> bool {
        if gi == groups.len() {
            return f(Structure::new(sig.clone(), n, chosen.clone()).expect("generated tuples are valid"));
        }
        let g = &groups[gi];
        let k = g.tuples.len();
        for mask in 0u64..(1 << k) {
            if mask != 0 {
                for &e in &g.edges {
                    covered[e] += 1;
                }
            }
            let ok = closing[gi].iter().all(|&e| covered[e] > 0);
            let before = chosen[g.rel].len();
            let mut go = true;
            if ok {
                for (i, t) in g.tuples.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        chosen[g.rel].push(t.clone());
                    }
                }
                go = rec(gi + 1, groups, closing, covered, chosen, sig, n, f);
                chosen[g.rel].truncate(before);
            }
            if mask != 0 {
                for &e in &g.edges {
                    covered[e] -= 1;
                }
            }
            if !go {
                return false;
            }
        }
        true
    }
    rec(0, &groups, &closing, &mut covered, &mut chosen, sig, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::tests::{path, sig_e};

    fn sig_l() -> Arc<Signature> {
        Arc::new(Signature::new([("L", 1)]).unwrap())
    }

    #[test]
    fn extract_on_path() {
        let p = path(3);
        let t = extract_rtype(&p, &[1], 1).unwrap();
        assert_eq!(t.carrier().size(), 3);
        assert_eq!(t.centers(), &[0]);
        let t0 = extract_rtype(&p, &[0], 1).unwrap();
        assert_eq!(t0.carrier().size(), 2);
        assert_eq!(t0.carrier().tuples(0), &[vec![0, 1]]);
        assert_eq!(extract_rtype(&p, &[2], 0).unwrap().carrier().size(), 1);
    }

    #[test]
    fn repeated_centers_share_an_element() {
        let p = path(3);
        let t = extract_rtype(&p, &[1, 1], 0).unwrap();
        assert_eq!(t.carrier().size(), 1);
        assert_eq!(t.centers(), &[0, 0]);
    }

    #[test]
    fn reversed_paths_are_isomorphic() {
        let p = path(3);
        let a = extract_rtype(&p, &[0], 2).unwrap();
        let b = extract_rtype(&p.relabel(&[2, 1, 0]), &[2], 2).unwrap();
        assert!(isomorphic(&a, &b).unwrap());
        assert_eq!(canonical_form(&a), canonical_form(&b));
        assert_eq!(a.code(), b.code());
        let c = extract_rtype(&p, &[2], 2).unwrap();
        assert!(!isomorphic(&a, &c).unwrap());
        assert_ne!(a.code(), c.code());
    }

    #[test]
    fn loop_distinguishes_single_nodes() {
        let plain = Structure::new(sig_e(), 1, vec![vec![]]).unwrap();
        let looped = Structure::new(sig_e(), 1, vec![vec![vec![0, 0]]]).unwrap();
        let a = extract_rtype(&plain, &[0], 0).unwrap();
        let b = extract_rtype(&looped, &[0], 0).unwrap();
        assert!(!isomorphic(&a, &b).unwrap());
        assert!(isomorphic(&a, &a).unwrap());
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let s = Structure::new(sig_e(), 4, vec![vec![vec![0, 1], vec![2, 1], vec![3, 2], vec![3, 3]]]).unwrap();
        let t = extract_rtype(&s, &[2], 2).unwrap();
        let c = canonical_form(&t);
        assert_eq!(canonical_form(&c), c);
        assert!(isomorphic(&t, &c).unwrap());
    }

    #[test]
    fn smallest_registries() {
        let b = TypeBudget::default();
        assert_eq!(enumerate_types(&sig_e(), 2, 0, 1, &b).unwrap().len(), 2);
        assert_eq!(enumerate_types(&sig_l(), 2, 0, 1, &b).unwrap().len(), 2);
        // two centers at radius 0: equal (2 loop states) or distinct (4 loop states × 4 edge states)
        assert_eq!(enumerate_types(&sig_e(), 2, 0, 2, &b).unwrap().len(), 2 + 16);
    }

    #[test]
    fn budget_is_enforced() {
        let b = TypeBudget::default();
        let err = enumerate_types(&sig_e(), 2, 2, 2, &b).unwrap_err();
        assert!(matches!(err, crate::Error::Resource(_)));
    }

    #[test]
    fn registry_members_cover_themselves() {
        let reg = enumerate_types(&sig_e(), 2, 1, 1, &TypeBudget::default()).unwrap();
        for (i, t) in reg.members().iter().enumerate() {
            assert!(RType::new(t.carrier().clone(), t.centers().to_vec(), 1).is_ok());
            assert_eq!(reg.position(t), Some(i));
        }
    }

    #[test]
    fn center_patterns_are_bell_numbers() {
        assert_eq!(center_patterns(1).len(), 1);
        assert_eq!(center_patterns(2).len(), 2);
        assert_eq!(center_patterns(3).len(), 5);
        assert_eq!(center_patterns(4).len(), 15);
    }
}
