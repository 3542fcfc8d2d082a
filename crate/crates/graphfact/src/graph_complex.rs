//! Decorated graphs with external and internal vertices, their orientation
//! signs, operadic insertion, the differentials `δ_split` and `δ_pair`, the
//! bracket `{,}_G` and twisting by a partition function.
//!
//! A graph is stored as an ordered word of tokens: internal vertices `V`
//! (degree `n`), edges `E(u,v)` (degree `1−n`, `E(v,u) = (−1)ⁿE(u,v)`) and
//! decorations `D(v,α)` (degree `|α|`). The normal form lists internal
//! vertices by id, then edges, then decorations; reordering costs Koszul signs.
//! Vertex ids `0..r` are the external labels `1..r`, ids `r..r+s` are internal.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::pd_algebra::PDAlgebra;
use num_traits::Zero;

use crate::scalars::{qf, Coeff, Q};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Graph {
    pub r: usize,
    pub s: usize,
    /// Ordered and directed; for `n` even the order carries the orientation.
    pub edges: Vec<(usize, usize)>,
    /// `(vertex, basis index)` in orientation order.
    pub decorations: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(r: usize, s: usize, edges: Vec<(usize, usize)>, decorations: Vec<(usize, usize)>) -> Self {
        Graph { r, s, edges, decorations }
    }

    /// `r` external vertices, nothing else.
    pub fn empty(r: usize) -> Self {
        Graph::new(r, 0, Vec::new(), Vec::new())
    }

    pub fn vertex_count(&self) -> usize {
        self.r + self.s
    }

    pub fn is_internal(&self, v: usize) -> bool {
        v >= self.r
    }

    pub fn valence(&self, v: usize) -> usize {
        self.edges.iter().map(|&(a, b)| usize::from(a == v) + usize::from(b == v)).sum()
    }

    /// Every internal vertex has at least one edge.
    pub fn internal_vertices_univalent(&self) -> bool {
        (self.r..self.vertex_count()).all(|v| self.valence(v) > 0)
    }

    /// Every internal vertex lies in a component containing an external vertex.
    pub fn internal_vertices_anchored(&self) -> bool {
        let nv = self.vertex_count();
        let mut seen = vec![false; nv];
        let mut stack: Vec<usize> = (0..self.r).collect();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.iter().all(|&x| x)
    }

    fn vertex_name(&self, v: usize) -> String {
        if v < self.r {
            format!("{}", v + 1)
        } else {
            format!("i{}", v - self.r + 1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    V(usize),
    E(usize, usize),
    D(usize, usize),
}

/// Linear combination of canonical graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSum<C: Coeff = Q> {
    terms: BTreeMap<Graph, C>,
}

impl<C: Coeff> Default for GraphSum<C> {
    fn default() -> Self {
        GraphSum { terms: BTreeMap::new() }
    }
}

impl<C: Coeff> GraphSum<C> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &BTreeMap<Graph, C> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, g: &Graph) -> C {
        self.terms.get(g).cloned().unwrap_or_else(C::zero_value)
    }

    /// Adds `c·g` for an already canonical `g`.
    pub fn add_canonical(&mut self, g: Graph, c: C) {
        if c.vanishes() {
            return;
        }
        let entry = self.terms.entry(g);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().plus(&c);
                if s.vanishes() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, c) in &other.terms {
            out.add_canonical(g.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|c| c.negated())
    }

    pub fn scale(&self, s: &Q) -> Self {
        self.map_coeffs(|c| c.scale(s))
    }

    pub fn scale_by(&self, s: &C) -> Self {
        self.map_coeffs(|c| c.times(s))
    }

    pub fn map_coeffs(&self, f: impl Fn(&C) -> C) -> Self {
        let mut out = Self::zero();
        for (g, c) in &self.terms {
            out.add_canonical(g.clone(), f(c));
        }
        out
    }

    /// Keeps the terms whose graph satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(&Graph) -> bool) -> Self {
        let mut out = Self::zero();
        for (g, c) in &self.terms {
            if keep(g) {
                out.add_canonical(g.clone(), c.clone());
            }
        }
        out
    }
}

/// Bounds on internal vertices, edges and decorations for truncated checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectorBound {
    pub max_internal: usize,
    pub max_edges: usize,
}

impl SectorBound {
    pub fn contains(&self, g: &Graph) -> bool {
        g.s <= self.max_internal && g.edges.len() <= self.max_edges
    }
}

/// The graph complex over a fixed dimension and Poincaré duality algebra.
#[derive(Clone, Debug)]
pub struct GraphComplex {
    n: i64,
    alg: Arc<PDAlgebra>,
}

impl GraphComplex {
    pub fn new(alg: Arc<PDAlgebra>) -> Self {
        GraphComplex { n: alg.n(), alg }
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn algebra(&self) -> &Arc<PDAlgebra> {
        &self.alg
    }

    fn vertex_odd(&self) -> bool {
        self.n.rem_euclid(2) == 1
    }

    fn edge_odd(&self) -> bool {
        !self.vertex_odd()
    }

    fn token_odd(&self, t: &Token) -> bool {
        match *t {
            Token::V(_) => self.vertex_odd(),
            Token::E(..) => self.edge_odd(),
            Token::D(_, a) => self.alg.is_odd(a),
        }
    }

    /// Degree `n·s − (n−1)·e + Σ deg α` of a graph.
    pub fn degree(&self, g: &Graph) -> i64 {
        let deco: i64 = g.decorations.iter().map(|&(_, a)| self.alg.degree(a)).sum();
        self.n * g.s as i64 - (self.n - 1) * g.edges.len() as i64 + deco
    }

    /// Grading in which every differential has degree `+1`: decorations count
    /// with `−deg α`. Same parity as [`Self::degree`].
    pub fn homological_degree(&self, g: &Graph) -> i64 {
        let deco: i64 = g.decorations.iter().map(|&(_, a)| self.alg.degree(a)).sum();
        self.n * g.s as i64 - (self.n - 1) * g.edges.len() as i64 - deco
    }

    pub fn is_odd(&self, g: &Graph) -> bool {
        self.degree(g).rem_euclid(2) == 1
    }

    fn validate(&self, g: &Graph) -> Result<()> {
        let nv = g.vertex_count();
        for &(u, v) in &g.edges {
            if u >= nv || v >= nv {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) references a missing vertex")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", g.vertex_name(u))));
            }
        }
        for &(v, a) in &g.decorations {
            if v >= nv {
                return Err(Error::InvalidGraph(format!("decoration on missing vertex {v}")));
            }
            if a >= self.alg.dim() {
                return Err(Error::InvalidGraph(format!("unknown decoration class {a}")));
            }
        }
        Ok(())
    }

    fn word(g: &Graph) -> Vec<Token> {
        let mut w: Vec<Token> = (g.r..g.vertex_count()).map(Token::V).collect();
        w.extend(g.edges.iter().map(|&(u, v)| Token::E(u, v)));
        w.extend(g.decorations.iter().map(|&(v, a)| Token::D(v, a)));
        w
    }

    /// Sorts a token word into normal form. `None` when an odd token repeats.
    fn normalize_word(&self, r: usize, s: usize, word: Vec<Token>) -> Option<(Graph, bool)> {
        let mut negative = false;
        let mut w: Vec<Token> = Vec::with_capacity(word.len());
        for t in word {
            match t {
                Token::E(u, v) if u > v => {
                    if self.vertex_odd() {
                        negative = !negative;
                    }
                    w.push(Token::E(v, u));
                }
                Token::D(_, a) if a == self.alg.unit() => {}
                t => w.push(t),
            }
        }
        for i in 1..w.len() {
            let mut j = i;
            while j > 0 && w[j - 1] > w[j] {
                if self.token_odd(&w[j - 1]) && self.token_odd(&w[j]) {
                    negative = !negative;
                }
                w.swap(j - 1, j);
                j -= 1;
            }
        }
        if w.windows(2).any(|p| p[0] == p[1] && self.token_odd(&p[0])) {
            return None;
        }
        let mut g = Graph::new(r, s, Vec::new(), Vec::new());
        for t in w {
            match t {
                Token::V(_) => {}
                Token::E(u, v) => g.edges.push((u, v)),
                Token::D(v, a) => g.decorations.push((v, a)),
            }
        }
        Some((g, negative))
    }

    /// Canonical representative under relabeling of internal vertices.
    /// `Ok(None)` when the graph equals minus itself.
    pub fn canonicalize(&self, g: &Graph) -> Result<Option<(Graph, bool)>> {
        self.validate(g)?;
        Ok(self.canonicalize_unchecked(g))
    }

    fn canonicalize_unchecked(&self, g: &Graph) -> Option<(Graph, bool)> {
        let (r, s) = (g.r, g.s);
        let mut best: Option<(Graph, bool)> = None;
        let mut odd_symmetry = false;
        let mut perm: Vec<usize> = (0..s).collect();
        let mut visit = |perm: &[usize]| -> bool {
            let map = |v: usize| if v < r { v } else { r + perm[v - r] };
            let mut word: Vec<Token> = (0..s).map(|k| Token::V(r + perm[k])).collect();
            word.extend(g.edges.iter().map(|&(u, v)| Token::E(map(u), map(v))));
            word.extend(g.decorations.iter().map(|&(v, a)| Token::D(map(v), a)));
            let Some((h, neg)) = self.normalize_word(r, s, word) else {
                return false;
            };
            match &best {
                None => best = Some((h, neg)),
                Some((b, bneg)) => {
                    if h < *b {
                        best = Some((h, neg));
                        odd_symmetry = false;
                    } else if h == *b && neg != *bneg {
                        odd_symmetry = true;
                    }
                }
            }
            true
        };
        if !for_each_permutation(&mut perm, &mut visit) {
            return None;
        }
        if odd_symmetry {
            return None;
        }
        best
    }

    /// Canonicalizes an arbitrary token word and adds it with coefficient `c`.
    fn add_word<C: Coeff>(&self, out: &mut GraphSum<C>, r: usize, s: usize, word: Vec<Token>, c: &C) {
        let Some((g, neg1)) = self.normalize_word(r, s, word) else { return };
        let Some((h, neg2)) = self.canonicalize_unchecked(&g) else { return };
        out.add_canonical(h, if neg1 ^ neg2 { c.negated() } else { c.clone() });
    }

    /// The single graph `g` as a canonical sum.
    pub fn sum_of<C: Coeff>(&self, g: &Graph, c: C) -> Result<GraphSum<C>> {
        self.validate(g)?;
        let mut out = GraphSum::zero();
        self.add_word(&mut out, g.r, g.s, Self::word(g), &c);
        Ok(out)
    }

    /// Graph from external labels (1-based) and internal labels `i1, i2, …`.
    pub fn parse_vertex(&self, r: usize, s: usize, name: &str) -> Result<usize> {
        let bad = || Error::InvalidGraph(format!("unknown vertex {name}"));
        if let Some(k) = name.strip_prefix('i') {
            let k: usize = k.parse().map_err(|_| bad())?;
            if k == 0 || k > s {
                return Err(bad());
            }
            Ok(r + k - 1)
        } else {
            let k: usize = name.parse().map_err(|_| bad())?;
            if k == 0 || k > r {
                return Err(bad());
            }
            Ok(k - 1)
        }
    }

    // ========================================================================
    // Operadic structure
    // ========================================================================

    /// Enumerates every way of sending the listed edge ends and decorations to
    /// one of `targets`, yielding the reassigned graph data.
    fn reconnections(
        g: &Graph,
        v: usize,
        targets: &[usize],
        mut f: impl FnMut(&[(usize, usize)], &[(usize, usize)]),
    ) {
        let slots: Vec<(bool, usize)> = g
            .edges
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == v || b == v)
            .map(|(i, _)| (true, i))
            .chain(g.decorations.iter().enumerate().filter(|(_, &(w, _))| w == v).map(|(i, _)| (false, i)))
            .collect();
        let k = targets.len();
        let mut choice = vec![0usize; slots.len()];
        loop {
            let mut edges = g.edges.clone();
            let mut decos = g.decorations.clone();
            for (&(is_edge, i), &c) in slots.iter().zip(&choice) {
                let t = targets[c];
                if is_edge {
                    let (a, b) = edges[i];
                    edges[i] = if a == v { (t, b) } else { (a, t) };
                } else {
                    decos[i].0 = t;
                }
            }
            f(&edges, &decos);
            let mut pos = 0;
            loop {
                if pos == choice.len() {
                    return;
                }
                choice[pos] += 1;
                if choice[pos] < k {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
        }
    }

    /// `outer ∘_i inner`: replaces external vertex `i` (1-based) by `inner`,
    /// reconnecting its edges and decorations to every vertex of `inner` in
    /// all possible ways. The tokens of `inner` follow those of `outer`.
    pub fn insert<C: Coeff>(&self, outer: &Graph, i: usize, inner: &Graph) -> Result<GraphSum<C>> {
        self.validate(outer)?;
        self.validate(inner)?;
        if i == 0 || i > outer.r {
            return Err(Error::Index(format!("insertion slot {i} outside 1..={}", outer.r)));
        }
        let v = i - 1;
        let l = inner.r;
        let r = outer.r + l - 1;
        let s = outer.s + inner.s;
        // Placeholder ids for inner vertices during reconnection live above outer's range.
        let base = outer.vertex_count();
        let inner_map = |x: usize| if x < l { v + x } else { r + outer.s + (x - l) };
        let outer_map = |x: usize| {
            if x >= base {
                inner_map(x - base)
            } else if x < v {
                x
            } else if x < outer.r {
                x + l - 1
            } else {
                r + (x - outer.r)
            }
        };
        let targets: Vec<usize> = (0..inner.vertex_count()).map(|x| base + x).collect();
        let mut out = GraphSum::zero();
        let one = C::one_value();
        if targets.is_empty() {
            // Inserting the empty arity-0 graph: any incidence makes the term vanish.
            if outer.valence(v) > 0 || outer.decorations.iter().any(|&(w, _)| w == v) {
                return Ok(out);
            }
        }
        Self::reconnections(outer, v, &targets, |edges, decos| {
            let mut word: Vec<Token> = (outer.r..outer.vertex_count()).map(|x| Token::V(outer_map(x))).collect();
            word.extend(edges.iter().map(|&(a, b)| Token::E(outer_map(a), outer_map(b))));
            word.extend(decos.iter().map(|&(w, a)| Token::D(outer_map(w), a)));
            word.extend((inner.r..inner.vertex_count()).map(|x| Token::V(inner_map(x))));
            word.extend(inner.edges.iter().map(|&(a, b)| Token::E(inner_map(a), inner_map(b))));
            word.extend(inner.decorations.iter().map(|&(w, a)| Token::D(inner_map(w), a)));
            self.add_word(&mut out, r, s, word, &one);
        });
        Ok(out)
    }

    /// Renames external vertex `v` to `perm[v]`. Returns the canonical result
    /// and its sign, or `None` when it vanishes.
    pub fn relabel_external(&self, g: &Graph, perm: &[usize]) -> Option<(Graph, bool)> {
        debug_assert_eq!(perm.len(), g.r);
        let map = |x: usize| if x < g.r { perm[x] } else { x };
        let mut word: Vec<Token> = (g.r..g.vertex_count()).map(Token::V).collect();
        word.extend(g.edges.iter().map(|&(u, v)| Token::E(map(u), map(v))));
        word.extend(g.decorations.iter().map(|&(w, a)| Token::D(map(w), a)));
        let (h, neg1) = self.normalize_word(g.r, g.s, word)?;
        let (h, neg2) = self.canonicalize_unchecked(&h)?;
        Some((h, neg1 ^ neg2))
    }

    /// `Γ·Σ`: disjoint union, `Σ`'s external labels shifted above `Γ`'s, tokens concatenated.
    pub fn graph_product<C: Coeff>(&self, a: &Graph, b: &Graph) -> Result<GraphSum<C>> {
        self.validate(a)?;
        self.validate(b)?;
        let (r, s) = (a.r + b.r, a.s + b.s);
        let ma = |x: usize| if x < a.r { x } else { r + (x - a.r) };
        let mb = |x: usize| if x < b.r { a.r + x } else { r + a.s + (x - b.r) };
        let mut word: Vec<Token> = Vec::new();
        word.extend((a.r..a.vertex_count()).map(|x| Token::V(ma(x))));
        word.extend(a.edges.iter().map(|&(u, v)| Token::E(ma(u), ma(v))));
        word.extend(a.decorations.iter().map(|&(w, c)| Token::D(ma(w), c)));
        word.extend((b.r..b.vertex_count()).map(|x| Token::V(mb(x))));
        word.extend(b.edges.iter().map(|&(u, v)| Token::E(mb(u), mb(v))));
        word.extend(b.decorations.iter().map(|&(w, c)| Token::D(mb(w), c)));
        let mut out = GraphSum::zero();
        self.add_word(&mut out, r, s, word, &C::one_value());
        Ok(out)
    }

    pub fn product<C: Coeff>(&self, x: &GraphSum<C>, y: &GraphSum<C>) -> GraphSum<C> {
        let mut out = GraphSum::zero();
        for (a, ca) in &x.terms {
            for (b, cb) in &y.terms {
                let p = self.graph_product::<C>(a, b).expect("canonical graphs are valid");
                let c = ca.times(cb);
                for (g, cg) in p.terms {
                    out.add_canonical(g, cg.times(&c));
                }
            }
        }
        out
    }

    // ========================================================================
    // Differentials
    // ========================================================================

    /// `δ_split Γ = (−1)^{|Γ|} Σ_v Γ ∘_v (∘−•)`: the new vertex and edge are
    /// placed in front of the word, which absorbs the global sign. Splittings
    /// of internal vertices are unordered, hence the weight ½ on ordered ones.
    pub fn delta_split<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.split_terms(x, |_| true)
    }

    /// The part of `δ_split` whose new vertex is a bare univalent leaf: one
    /// edge, no decorations. It is the bracket with the unit-decorated
    /// one-vertex graph, which decorations cannot express since units are
    /// implicit.
    pub fn bare_leaves<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.split_terms(x, |leaf| leaf == Some(0))
    }

    /// The part of `δ_split` whose new vertex is a univalent leaf with at most
    /// one decoration: the one-edge-one-vertex terms.
    pub fn leaves<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.split_terms(x, |leaf| matches!(leaf, Some(d) if d <= 1))
    }

    /// `δ_split` without its leaves; a derivation of operadic insertion.
    pub fn delta_split_reduced<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.split_terms(x, |leaf| !matches!(leaf, Some(d) if d <= 1))
    }

    /// `keep` sees the decoration count of the split-off univalent leaf, or
    /// `None` when neither end of the new edge is one.
    fn split_terms<C: Coeff>(&self, x: &GraphSum<C>, keep: impl Fn(Option<usize>) -> bool) -> GraphSum<C> {
        let half = qf(1, 2);
        let mut out = GraphSum::zero();
        for (g, c) in &x.terms {
            let w = g.vertex_count();
            let (r, s) = (g.r, g.s + 1);
            for v in 0..g.vertex_count() {
                let internal = g.is_internal(v);
                let coeff = if internal { c.scale(&half) } else { c.clone() };
                Self::reconnections(g, v, &[v, w], |edges, decos| {
                    let leaf = |u: usize| {
                        if edges.iter().any(|&(a, b)| a == u || b == u) {
                            None
                        } else {
                            Some(decos.iter().filter(|&&(t, _)| t == u).count())
                        }
                    };
                    let here = if internal { leaf(v) } else { None };
                    let label = match (leaf(w), here) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                    if !keep(label) {
                        return;
                    }
                    let mut word = vec![Token::V(w), Token::E(v, w)];
                    word.extend((g.r..g.vertex_count()).map(Token::V));
                    word.extend(edges.iter().map(|&(a, b)| Token::E(a, b)));
                    word.extend(decos.iter().map(|&(u, a)| Token::D(u, a)));
                    self.add_word(&mut out, r, s, word, &coeff);
                });
            }
        }
        out
    }

    /// Pulls decorations `i < j` to the front of the word and replaces them by
    /// `⟨α_i, α_j⟩ E(u_i, u_j)`. Pairs on one vertex would form self-loops and
    /// are dropped.
    fn pair_terms<C: Coeff>(&self, g: &Graph, c: &C, accept: impl Fn(usize, usize) -> bool, out: &mut GraphSum<C>) {
        let head = (g.s as i64 * self.n + g.edges.len() as i64 * (1 - self.n)).rem_euclid(2);
        let degs: Vec<i64> = g.decorations.iter().map(|&(_, a)| self.alg.degree(a)).collect();
        let prefix: Vec<i64> = std::iter::once(head)
            .chain(degs.iter().scan(head, |acc, d| {
                *acc += d;
                Some(*acc)
            }))
            .collect();
        for j in 0..g.decorations.len() {
            for i in 0..j {
                if !accept(i, j) {
                    continue;
                }
                let ((u, a), (v, b)) = (g.decorations[i], g.decorations[j]);
                if u == v {
                    continue;
                }
                let p = self.alg.pair(a, b);
                if p.is_zero() {
                    continue;
                }
                let (da, db) = (degs[i], degs[j]);
                let exp = db * prefix[j] + da * (db + prefix[i]);
                let mut coeff = c.scale(p);
                if exp.rem_euclid(2) == 1 {
                    coeff = coeff.negated();
                }
                let mut word = vec![Token::E(u, v)];
                word.extend((g.r..g.vertex_count()).map(Token::V));
                word.extend(g.edges.iter().map(|&(x, y)| Token::E(x, y)));
                word.extend(
                    g.decorations
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i && k != j)
                        .map(|(_, &(w, d))| Token::D(w, d)),
                );
                self.add_word(out, g.r, g.s, word, &coeff);
            }
        }
    }

    pub fn delta_pair<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        let mut out = GraphSum::zero();
        for (g, c) in &x.terms {
            self.pair_terms(g, c, |_, _| true, &mut out);
        }
        out
    }

    pub fn delta<C: Coeff>(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.delta_split(x).add(&self.delta_pair(x))
    }

    /// `{Γ,Σ}_G = δ_pair(Γ·Σ) − δ_pair(Γ)·Σ − (−1)^{|Γ|} Γ·δ_pair(Σ)`.
    pub fn bracket<C: Coeff>(&self, x: &GraphSum<C>, y: &GraphSum<C>) -> GraphSum<C> {
        let mut out = GraphSum::zero();
        for (a, ca) in &x.terms {
            let sa = self.sum_of(a, ca.clone()).expect("canonical");
            let dpa = self.delta_pair(&sa);
            for (b, cb) in &y.terms {
                let sb = self.sum_of(b, cb.clone()).expect("canonical");
                let whole = self.delta_pair(&self.product(&sa, &sb));
                let left = self.product(&dpa, &sb);
                let mut right = self.product(&sa, &self.delta_pair(&sb));
                if self.is_odd(a) {
                    right = right.neg();
                }
                out = out.add(&whole.sub(&left).sub(&right));
            }
        }
        out
    }

    /// Pairings of one decoration of `Γ` with one of `Σ` inside `Γ·Σ`.
    pub fn cross_pairing<C: Coeff>(&self, x: &GraphSum<C>, y: &GraphSum<C>) -> GraphSum<C> {
        let mut out = GraphSum::zero();
        for (a, ca) in &x.terms {
            for (b, cb) in &y.terms {
                let (g, neg) = self.concatenation(a, b);
                let na = a.decorations.len();
                let c = ca.times(cb);
                let c = if neg { c.negated() } else { c };
                self.pair_terms(&g, &c, |i, j| i < na && j >= na, &mut out);
            }
        }
        out
    }

    /// `Γ·Σ` in grouped (not yet relabeling-canonical) form, keeping `Γ`'s
    /// decorations ahead of `Σ`'s.
    fn concatenation(&self, a: &Graph, b: &Graph) -> (Graph, bool) {
        let (r, s) = (a.r + b.r, a.s + b.s);
        let ma = |x: usize| if x < a.r { x } else { r + (x - a.r) };
        let mb = |x: usize| if x < b.r { a.r + x } else { r + a.s + (x - b.r) };
        // Group without sorting inside groups: V's and E's of Σ move left past Γ's tail.
        let deg_e = (1 - self.n).rem_euclid(2);
        let deg_v = self.n.rem_euclid(2);
        let deco_a: i64 = a.decorations.iter().map(|&(_, c)| self.alg.degree(c)).sum();
        let vb = deg_v * b.s as i64;
        let eb = deg_e * b.edges.len() as i64;
        let ea = deg_e * a.edges.len() as i64;
        let exp = vb * (ea + deco_a) + eb * deco_a;
        let mut edges: Vec<(usize, usize)> = a.edges.iter().map(|&(u, v)| (ma(u), ma(v))).collect();
        edges.extend(b.edges.iter().map(|&(u, v)| (mb(u), mb(v))));
        let mut decos: Vec<(usize, usize)> = a.decorations.iter().map(|&(w, c)| (ma(w), c)).collect();
        decos.extend(b.decorations.iter().map(|&(w, c)| (mb(w), c)));
        (Graph::new(r, s, edges, decos), exp.rem_euclid(2) == 1)
    }

    // ========================================================================
    // Partition functions and twisting
    // ========================================================================

    /// `δz + ½{z,z}_G` restricted to the sector.
    pub fn mc_defect<C: Coeff>(&self, z: &GraphSum<C>, bound: SectorBound) -> Result<GraphSum<C>> {
        if let Some(g) = z.terms.keys().find(|g| g.r > 0) {
            return Err(Error::InvalidGraph(format!(
                "partition function term with {} external vertices",
                g.r
            )));
        }
        let d = self.delta(z);
        let b = self.bracket(z, z).scale(&qf(1, 2));
        Ok(d.add(&b).filter(|g| bound.contains(g)))
    }

    pub fn check_mc_graph<C: Coeff>(&self, z: &GraphSum<C>, bound: SectorBound) -> Result<bool> {
        Ok(self.mc_defect(z, bound)?.is_zero())
    }

    pub fn twisted_differential<C: Coeff>(&self, z: &GraphSum<C>, bound: SectorBound) -> Result<GraphTwist<C>> {
        if !self.check_mc_graph(z, bound)? {
            return Err(Error::NotMaurerCartan("δz + ½{z,z} ≠ 0 within the sector".into()));
        }
        Ok(GraphTwist { complex: self.clone(), z: z.clone() })
    }

    // ========================================================================
    // Serialization
    // ========================================================================

    pub fn graph_to_json(&self, g: &Graph) -> Value {
        let edges: Vec<Value> = g.edges.iter().map(|&(u, v)| json!([g.vertex_name(u), g.vertex_name(v)])).collect();
        let decos: Vec<Value> =
            g.decorations.iter().map(|&(v, a)| json!([g.vertex_name(v), self.alg.name(a)])).collect();
        json!({
            "arity": g.r,
            "internal": g.s,
            "edges": edges,
            "decorations": decos,
            "orientation": {
                "internal_order": (0..g.s).map(|k| format!("i{}", k + 1)).collect::<Vec<_>>(),
                "edges": "listed order and direction",
                "decorations": "listed order",
            },
        })
    }

    /// Reads a graph; `orientation.internal_order` optionally lists the internal
    /// vertices in orientation order.
    pub fn graph_from_json(&self, v: &Value) -> Result<(Graph, bool)> {
        let err = |m: &str| Error::Parse(format!("graph JSON: {m}"));
        let r = v.get("arity").and_then(Value::as_u64).ok_or_else(|| err("missing arity"))? as usize;
        let s = v.get("internal").and_then(Value::as_u64).unwrap_or(0) as usize;
        let vertex = |x: &Value| -> Result<usize> {
            match x {
                Value::String(name) => self.parse_vertex(r, s, name),
                Value::Number(k) => {
                    let k = k.as_u64().ok_or_else(|| err("bad vertex"))? as usize;
                    self.parse_vertex(r, s, &k.to_string())
                }
                _ => Err(err("vertex must be a name or label")),
            }
        };
        let mut edges = Vec::new();
        for e in v.get("edges").and_then(Value::as_array).into_iter().flatten() {
            let a = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| err("edge must be [u, v]"))?;
            edges.push((vertex(&a[0])?, vertex(&a[1])?));
        }
        let mut decos = Vec::new();
        for d in v.get("decorations").and_then(Value::as_array).into_iter().flatten() {
            let a = d.as_array().filter(|a| a.len() == 2).ok_or_else(|| err("decoration must be [vertex, class]"))?;
            let class = match &a[1] {
                Value::String(nm) => self.alg.index_of(nm).ok_or_else(|| err(&format!("unknown class {nm}")))?,
                Value::Number(k) => k.as_u64().ok_or_else(|| err("bad class index"))? as usize,
                _ => return Err(err("class must be a name or index")),
            };
            decos.push((vertex(&a[0])?, class));
        }
        let g = Graph::new(r, s, edges, decos);
        self.validate(&g)?;
        let order = v.get("orientation").and_then(|o| o.get("internal_order")).and_then(Value::as_array);
        let Some(order) = order else { return Ok((g, false)) };
        // Internal vertex k of the listed order becomes the k-th vertex token.
        let ids = order.iter().map(&vertex).collect::<Result<Vec<_>>>()?;
        let mut sorted = ids.clone();
        sorted.sort();
        if sorted != (r..r + s).collect::<Vec<_>>() {
            return Err(err("internal_order must list every internal vertex once"));
        }
        let mut word: Vec<Token> = ids.iter().map(|&x| Token::V(x)).collect();
        word.extend(g.edges.iter().map(|&(a, b)| Token::E(a, b)));
        word.extend(g.decorations.iter().map(|&(w, c)| Token::D(w, c)));
        match self.normalize_word(r, s, word) {
            Some((h, neg)) => Ok((h, neg)),
            None => Ok((g, false)),
        }
    }

    pub fn sum_to_json<C: Coeff>(&self, x: &GraphSum<C>) -> Value {
        Value::Array(
            x.terms
                .iter()
                .map(|(g, c)| json!({ "graph": self.graph_to_json(g), "coefficient": c.to_json() }))
                .collect(),
        )
    }

    pub fn sum_from_json<C: Coeff>(&self, v: &Value) -> Result<GraphSum<C>> {
        let arr = v.as_array().ok_or_else(|| Error::Parse("graph sum must be a list".into()))?;
        let mut out = GraphSum::zero();
        for t in arr {
            let (g, neg) = self.graph_from_json(t.get("graph").ok_or_else(|| Error::Parse("term without graph".into()))?)?;
            let c = C::from_json(t.get("coefficient").unwrap_or(&json!(1)))?;
            let c = if neg { c.negated() } else { c };
            out = out.add(&self.sum_of(&g, c)?);
        }
        Ok(out)
    }

    // ========================================================================
    // Enumeration
    // ========================================================================

    /// All nonzero canonical graphs of arity `r` with `s ≤ max_internal`,
    /// `e ≤ max_edges`, at most `max_decorations` reduced decorations, every
    /// internal vertex anchored to an external one and of valence ≥ 1.
    pub fn enumerate(&self, r: usize, max_internal: usize, max_edges: usize, max_decorations: usize) -> Vec<Graph> {
        let mut out = std::collections::BTreeSet::new();
        let reduced = self.alg.reduced();
        for s in 0..=max_internal {
            let nv = r + s;
            let pairs: Vec<(usize, usize)> = (0..nv).flat_map(|u| (u + 1..nv).map(move |v| (u, v))).collect();
            let slots: Vec<(usize, usize)> = (0..nv).flat_map(|v| reduced.iter().map(move |&a| (v, a))).collect();
            for e in 0..=max_edges {
                for edges in multisets(&pairs, e) {
                    let bare = Graph::new(r, s, edges.clone(), Vec::new());
                    if !bare.internal_vertices_univalent() || !bare.internal_vertices_anchored() {
                        continue;
                    }
                    for k in 0..=max_decorations {
                        for decos in multisets(&slots, k) {
                            let g = Graph::new(r, s, edges.clone(), decos);
                            if let Some((h, _)) = self.canonicalize_unchecked(&g) {
                                out.insert(h);
                            }
                        }
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

/// The twisting differential `δ^z = {z, ·}_G`.
#[derive(Clone, Debug)]
pub struct GraphTwist<C: Coeff> {
    complex: GraphComplex,
    z: GraphSum<C>,
}

impl<C: Coeff> GraphTwist<C> {
    pub fn partition_function(&self) -> &GraphSum<C> {
        &self.z
    }

    pub fn apply(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.complex.bracket(&self.z, x)
    }

    /// `δ + δ^z`.
    pub fn full(&self, x: &GraphSum<C>) -> GraphSum<C> {
        self.complex.delta(x).add(&self.apply(x))
    }
}

/// Multisets of size `k` drawn from `items`, as sorted lists.
pub(crate) fn multisets<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn go<T: Clone>(items: &[T], start: usize, k: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i].clone());
            go(items, i, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, 0, k, &mut Vec::new(), &mut out);
    out
}

/// Calls `f` on every permutation of `perm` (Heap's algorithm); stops early
/// and returns `false` as soon as `f` does.
fn for_each_permutation(perm: &mut [usize], f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    let n = perm.len();
    if !f(perm) {
        return false;
    }
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            if !f(perm) {
                return false;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    true
}
