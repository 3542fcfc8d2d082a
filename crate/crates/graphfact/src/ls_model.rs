//! The configuration model `F*_A(k)` generated by edge classes `ω_ab` and
//! vertex decorations `α_a`, its dual forest model, the pairing between long
//! graphs and tall forests, and the inclusion of forests into graphs.
//!
//! Vertices are 0-based internally and 1-based in every textual form.
//! `ω_ab` has degree `n−1`, `α_a` the degree of its class; both multiply
//! graded-commutatively. The relations are skew symmetry
//! `ω_ab = (−1)ⁿ ω_ba`, `ω_ab² = 0`, the Arnold identity, moving a decoration
//! along an edge, and multiplying decorations at a vertex.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph_complex::{Graph, GraphComplex, GraphSum};
use crate::pd_algebra::PDAlgebra;
use crate::scalars::{format_q, parse_q, q, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Generator {
    /// `ω_ab`, directed.
    Omega(usize, usize),
    /// `α_a` for the basis class with the given index.
    Alpha(usize, usize),
}

/// A formal product of generators with a coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct LSWord {
    pub k: usize,
    pub factors: Vec<Generator>,
    pub coefficient: Q,
}

impl LSWord {
    pub fn new(k: usize, factors: Vec<Generator>, coefficient: Q) -> Self {
        LSWord { k, factors, coefficient }
    }

    pub fn unit(k: usize) -> Self {
        LSWord::new(k, Vec::new(), Q::one())
    }
}

/// Long-graph basis element. Every vertex lies on exactly one chain; a chain
/// starts at its minimal vertex, chains are sorted by that vertex, and each
/// chain carries one class (the unit when undecorated).
///
/// As a monomial it is the product of all chain edges in chain order followed
/// by the non-unit decorations at the chain heads.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LongGraph {
    pub chains: Vec<(Vec<usize>, usize)>,
}

impl LongGraph {
    pub fn arity(&self) -> usize {
        self.chains.iter().map(|(c, _)| c.len()).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.chains.iter().flat_map(|(c, _)| c.windows(2).map(|w| (w[0], w[1]))).collect()
    }

    pub fn to_word(&self, alg: &PDAlgebra, coefficient: Q) -> LSWord {
        let mut factors: Vec<Generator> = self.edges().into_iter().map(|(a, b)| Generator::Omega(a, b)).collect();
        factors.extend(
            self.chains.iter().filter(|(_, c)| *c != alg.unit()).map(|(chain, c)| Generator::Alpha(chain[0], *c)),
        );
        LSWord::new(self.arity(), factors, coefficient)
    }

    pub fn is_undecorated(&self, alg: &PDAlgebra) -> bool {
        self.chains.iter().all(|(_, c)| *c == alg.unit())
    }
}

/// Linear combination of long-graph basis elements of a fixed arity.
#[derive(Clone, Debug, PartialEq)]
pub struct LSElement {
    pub k: usize,
    terms: BTreeMap<LongGraph, Q>,
}

impl LSElement {
    pub fn zero(k: usize) -> Self {
        LSElement { k, terms: BTreeMap::new() }
    }

    pub fn terms(&self) -> &BTreeMap<LongGraph, Q> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, g: &LongGraph) -> Q {
        self.terms.get(g).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, g: LongGraph, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(g).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, c) in &other.terms {
            out.add_term(g.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Q) -> Self {
        let mut out = LSElement::zero(self.k);
        for (g, c) in &self.terms {
            out.add_term(g.clone(), c * s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&q(-1)))
    }
}

/// The configuration model over a Poincaré duality algebra.
#[derive(Clone, Debug)]
pub struct LSModel {
    alg: Arc<PDAlgebra>,
}

fn sign(negative: bool) -> Q {
    if negative {
        q(-1)
    } else {
        q(1)
    }
}

/// Stable insertion sort by `key`; returns whether the Koszul sign is negative.
fn koszul_sort<T, K: Ord>(items: &mut [T], key: impl Fn(&T) -> K, odd: impl Fn(&T) -> bool) -> bool {
    let mut negative = false;
    for i in 1..items.len() {
        let mut j = i;
        while j > 0 && key(&items[j - 1]) > key(&items[j]) {
            if odd(&items[j - 1]) && odd(&items[j]) {
                negative = !negative;
            }
            items.swap(j - 1, j);
            j -= 1;
        }
    }
    negative
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

/// Components of an edge set on `k` vertices as a root (minimal vertex) per vertex.
/// `None` when the edges contain a cycle or a repeated pair.
fn forest_roots(k: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut parent: Vec<usize> = (0..k).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return None;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    Some((0..k).map(|v| find(&mut parent, v)).collect())
}

/// Parent and depth of every vertex when each tree is rooted at its minimal vertex.
fn rooted(k: usize, edges: &[(usize, usize)], roots: &[usize]) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut adj = vec![Vec::new(); k];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut parent = vec![None; k];
    let mut depth = vec![0; k];
    let mut seen = vec![false; k];
    for v in 0..k {
        if roots[v] != v {
            continue;
        }
        seen[v] = true;
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some(x);
                    depth[y] = depth[x] + 1;
                    stack.push(y);
                }
            }
        }
    }
    (parent, depth)
}

impl LSModel {
    pub fn new(alg: Arc<PDAlgebra>) -> Self {
        LSModel { alg }
    }

    pub fn algebra(&self) -> &Arc<PDAlgebra> {
        &self.alg
    }

    pub fn n(&self) -> i64 {
        self.alg.n()
    }

    fn omega_odd(&self) -> bool {
        self.n().rem_euclid(2) == 0
    }

    fn generator_odd(&self, g: &Generator) -> bool {
        match *g {
            Generator::Omega(..) => self.omega_odd(),
            Generator::Alpha(_, c) => self.alg.is_odd(c),
        }
    }

    fn generator_degree(&self, g: &Generator) -> i64 {
        match *g {
            Generator::Omega(..) => self.n() - 1,
            Generator::Alpha(_, c) => self.alg.degree(c),
        }
    }

    pub fn word_degree(&self, w: &LSWord) -> i64 {
        w.factors.iter().map(|g| self.generator_degree(g)).sum()
    }

    /// `Σ (|chain|−1)(n−1) + deg(class)`.
    pub fn degree(&self, g: &LongGraph) -> i64 {
        g.chains.iter().map(|(c, a)| (c.len() as i64 - 1) * (self.n() - 1) + self.alg.degree(*a)).sum()
    }

    fn validate(&self, w: &LSWord) -> Result<()> {
        for g in &w.factors {
            match *g {
                Generator::Omega(a, b) => {
                    if a >= w.k || b >= w.k {
                        return Err(Error::Index(format!("ω_{}{} outside arity {}", a + 1, b + 1, w.k)));
                    }
                    if a == b {
                        return Err(Error::Index(format!("ω_{0}{0} has equal endpoints", a + 1)));
                    }
                }
                Generator::Alpha(a, c) => {
                    if a >= w.k {
                        return Err(Error::Index(format!("decoration on vertex {} outside arity {}", a + 1, w.k)));
                    }
                    if c >= self.alg.dim() {
                        return Err(Error::Index(format!("unknown decoration class {c}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Rewrites a word into the long-graph basis.
    pub fn normalize_word(&self, w: &LSWord) -> Result<LSElement> {
        self.validate(w)?;
        let mut out = LSElement::zero(w.k);
        self.reduce(w.k, w.coefficient.clone(), w.factors.clone(), &mut out);
        Ok(out)
    }

    pub fn normalize(&self, k: usize, words: &[LSWord]) -> Result<LSElement> {
        let mut out = LSElement::zero(k);
        for w in words {
            if w.k != k {
                return Err(Error::Arity { expected: k, got: w.k });
            }
            out = out.add(&self.normalize_word(w)?);
        }
        Ok(out)
    }

    fn reduce(&self, k: usize, coeff: Q, factors: Vec<Generator>, out: &mut LSElement) {
        let mut tokens: Vec<Generator> =
            factors.into_iter().filter(|g| !matches!(*g, Generator::Alpha(_, c) if c == self.alg.unit())).collect();
        let negative = koszul_sort(&mut tokens, |g| matches!(g, Generator::Alpha(..)), |g| self.generator_odd(g));
        let coeff = coeff * sign(negative);
        let split = tokens.iter().position(|g| matches!(g, Generator::Alpha(..))).unwrap_or(tokens.len());
        let decos: Vec<(usize, usize)> = tokens[split..]
            .iter()
            .map(|g| match *g {
                Generator::Alpha(a, c) => (a, c),
                Generator::Omega(..) => unreachable!(),
            })
            .collect();
        let edges: Vec<(usize, usize)> = tokens[..split]
            .iter()
            .map(|g| match *g {
                Generator::Omega(a, b) => (a, b),
                Generator::Alpha(..) => unreachable!(),
            })
            .collect();
        // Cycles and doubled edges vanish by Arnold and ω² = 0.
        let Some(roots) = forest_roots(k, &edges) else { return };
        for (c, chain_edges) in self.reduce_edges(k, &roots, coeff, edges) {
            self.reduce_decorations(k, &roots, c, &chain_edges, &decos, out);
        }
    }

    /// Arnold rewriting of a forest word into rooted chains in canonical order.
    /// Each step replaces a pair of sibling edges `ω_ab ω_ac` by
    /// `ω_ab ω_bc + ω_bc ω_ca`, which strictly increases the total depth.
    fn reduce_edges(&self, k: usize, roots: &[usize], coeff: Q, edges: Vec<(usize, usize)>) -> Vec<(Q, Vec<(usize, usize)>)> {
        let flip_negative = self.n().rem_euclid(2) == 1;
        let mut done = Vec::new();
        let mut work = vec![(coeff, edges)];
        while let Some((mut c, mut edges)) = work.pop() {
            let (parent, depth) = rooted(k, &edges, roots);
            for e in edges.iter_mut() {
                if parent[e.0] == Some(e.1) {
                    *e = (e.1, e.0);
                    if flip_negative {
                        c = -c;
                    }
                }
            }
            let mut first_child: Vec<Option<usize>> = vec![None; k];
            let mut cherry = None;
            for (pos, &(a, _)) in edges.iter().enumerate() {
                match first_child[a] {
                    None => first_child[a] = Some(pos),
                    Some(i) => {
                        cherry = Some((i, pos));
                        break;
                    }
                }
            }
            match cherry {
                Some((i, j)) => {
                    let (a, b) = edges[i];
                    let (_, cc) = edges[j];
                    let e = edges.remove(j);
                    edges.insert(i + 1, e);
                    if self.omega_odd() && (j - i - 1) % 2 == 1 {
                        c = -c;
                    }
                    let mut first = edges.clone();
                    first[i + 1] = (b, cc);
                    let mut second = edges;
                    second[i] = (b, cc);
                    second[i + 1] = (cc, a);
                    work.push((c.clone(), first));
                    work.push((c, second));
                }
                None => {
                    let negative =
                        koszul_sort(&mut edges, |&(a, _)| (roots[a], depth[a]), |_| self.omega_odd());
                    done.push((c * sign(negative), edges));
                }
            }
        }
        done
    }

    /// Moves decorations to chain heads, multiplies them, and records the basis terms.
    fn reduce_decorations(
        &self,
        k: usize,
        roots: &[usize],
        coeff: Q,
        edges: &[(usize, usize)],
        decos: &[(usize, usize)],
        out: &mut LSElement,
    ) {
        let mut moved: Vec<(usize, usize)> = decos.iter().map(|&(a, c)| (roots[a], c)).collect();
        let negative = koszul_sort(&mut moved, |&(a, _)| a, |&(_, c)| self.alg.is_odd(c));
        let coeff = coeff * sign(negative);
        // Product at each head, expanded over the basis.
        let mut partial: Vec<(Q, Vec<(usize, usize)>)> = vec![(coeff, Vec::new())];
        let mut idx = 0;
        while idx < moved.len() {
            let v = moved[idx].0;
            let mut prod = self.alg.basis_vec(self.alg.unit());
            while idx < moved.len() && moved[idx].0 == v {
                prod = self.alg.mul(&prod, &self.alg.basis_vec(moved[idx].1));
                idx += 1;
            }
            let mut next = Vec::new();
            for (c, ds) in &partial {
                for (cls, x) in prod.iter().enumerate() {
                    if x.is_zero() {
                        continue;
                    }
                    let mut ds = ds.clone();
                    ds.push((v, cls));
                    next.push((c * x, ds));
                }
            }
            partial = next;
        }
        let mut chains: Vec<(Vec<usize>, usize)> = Vec::new();
        for v in 0..k {
            if roots[v] == v {
                chains.push((vec![v], self.alg.unit()));
            }
        }
        for &(_, b) in edges {
            let head = roots[b];
            let chain = chains.iter_mut().find(|(c, _)| c[0] == head).expect("every vertex has a root");
            chain.0.push(b);
        }
        for (c, ds) in partial {
            let mut chains = chains.clone();
            for (v, cls) in ds {
                let chain = chains.iter_mut().find(|(c, _)| c[0] == v).expect("decorations sit at heads");
                chain.1 = cls;
            }
            out.add_term(LongGraph { chains }, c);
        }
    }
}

impl LSModel {
    /// The derivation with `d ω_ab = Σ_j α_a^j α_b^{j*}` and `d α = 0`, applied
    /// to a raw word and normalized.
    pub fn d_word(&self, w: &LSWord) -> Result<LSElement> {
        self.validate(w)?;
        let mut out = LSElement::zero(w.k);
        let mut before_odd = false;
        for (p, g) in w.factors.iter().enumerate() {
            if let Generator::Omega(a, b) = *g {
                let base = if before_odd { -w.coefficient.clone() } else { w.coefficient.clone() };
                for j in 0..self.alg.dim() {
                    for (l, x) in self.alg.dual_of(j).iter().enumerate() {
                        if x.is_zero() {
                            continue;
                        }
                        let mut factors = w.factors[..p].to_vec();
                        factors.push(Generator::Alpha(a, j));
                        factors.push(Generator::Alpha(b, l));
                        factors.extend_from_slice(&w.factors[p + 1..]);
                        self.reduce(w.k, &base * x, factors, &mut out);
                    }
                }
            }
            if self.generator_odd(g) {
                before_odd = !before_odd;
            }
        }
        Ok(out)
    }

    pub fn d_ls(&self, x: &LSElement) -> LSElement {
        let mut out = LSElement::zero(x.k);
        for (g, c) in x.terms() {
            let w = g.to_word(&self.alg, c.clone());
            out = out.add(&self.d_word(&w).expect("basis words are well formed"));
        }
        out
    }

    /// The long-graph basis of arity `k`.
    pub fn basis(&self, k: usize) -> Vec<LongGraph> {
        let mut out = Vec::new();
        for blocks in set_partitions(k) {
            let mut per_block: Vec<Vec<(Vec<usize>, usize)>> = Vec::new();
            for b in &blocks {
                let mut chains = Vec::new();
                for perm in permutations(&b[1..]) {
                    let mut chain = vec![b[0]];
                    chain.extend(perm);
                    for cls in 0..self.alg.dim() {
                        chains.push((chain.clone(), cls));
                    }
                }
                per_block.push(chains);
            }
            let mut acc: Vec<Vec<(Vec<usize>, usize)>> = vec![Vec::new()];
            for options in per_block {
                acc = acc
                    .into_iter()
                    .flat_map(|prefix| {
                        options.iter().map(move |o| {
                            let mut p = prefix.clone();
                            p.push(o.clone());
                            p
                        })
                    })
                    .collect();
            }
            out.extend(acc.into_iter().map(|chains| LongGraph { chains }));
        }
        out.sort();
        out
    }

    /// Undecorated part of the basis: every chain carries the unit.
    pub fn undecorated_basis(&self, k: usize) -> Vec<LongGraph> {
        self.basis(k).into_iter().filter(|g| g.is_undecorated(&self.alg)).collect()
    }
}

/// Set partitions of `0..k`, each block sorted, blocks sorted by minimum.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for v in 0..k {
        let mut next = Vec::new();
        for p in out {
            for i in 0..p.len() {
                let mut q = p.clone();
                q[i].push(v);
                next.push(q);
            }
            let mut q = p;
            q.push(vec![v]);
            next.push(q);
        }
        out = next;
    }
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Graded dimensions of the arity-`k` configuration model, by enumerating the
/// long-graph basis.
pub fn ls_dimension(alg: &Arc<PDAlgebra>, k: usize) -> BTreeMap<i64, usize> {
    let model = LSModel::new(alg.clone());
    let mut dims = BTreeMap::new();
    for g in model.basis(k) {
        *dims.entry(model.degree(&g)).or_insert(0) += 1;
    }
    dims
}

/// Graded dimensions from `F(k) = F(k−1) ⊗ A ⊕ F(k−1)[n−1]^{⊕(k−1)}`, where
/// the shift raises degrees by `n−1`.
pub fn ls_dimension_recursive(alg: &PDAlgebra, k: usize) -> BTreeMap<i64, usize> {
    let mut dims = BTreeMap::from([(0i64, 1usize)]);
    for j in 1..=k {
        let mut next: BTreeMap<i64, usize> = BTreeMap::new();
        for (&d, &m) in &dims {
            for c in 0..alg.dim() {
                *next.entry(d + alg.degree(c)).or_insert(0) += m;
            }
            if j > 1 {
                *next.entry(d + alg.n() - 1).or_insert(0) += (j - 1) * m;
            }
        }
        dims = next;
    }
    dims
}

/// A binary bracket expression with leaves labeled by vertices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tree {
    Leaf(usize),
    Node(Box<Tree>, Box<Tree>),
}

impl Tree {
    pub fn node(a: Tree, b: Tree) -> Tree {
        Tree::Node(Box::new(a), Box::new(b))
    }

    /// Leaves in planar order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            Tree::Leaf(v) => out.push(*v),
            Tree::Node(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn min_leaf(&self) -> usize {
        self.leaves().into_iter().min().expect("trees have leaves")
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node(a, b) => a.leaf_count() + b.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.leaf_count() - 1
    }

    /// Left comb `[..[[m, x₁], x₂].., x_t]` with `m` the minimal leaf.
    pub fn is_tall(&self) -> bool {
        match self {
            Tree::Leaf(_) => true,
            Tree::Node(a, b) => matches!(**b, Tree::Leaf(_)) && a.is_tall() && a.min_leaf() < b.min_leaf(),
        }
    }

    /// Branch points in infix order, each as the leaf sets of its two subtrees.
    fn branch_points(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut out = Vec::new();
        self.collect_branch_points(&mut out);
        out
    }

    fn collect_branch_points(&self, out: &mut Vec<(Vec<usize>, Vec<usize>)>) {
        if let Tree::Node(a, b) = self {
            a.collect_branch_points(out);
            out.push((a.leaves(), b.leaves()));
            b.collect_branch_points(out);
        }
    }

    fn render(&self) -> String {
        match self {
            Tree::Leaf(v) => format!("{}", v + 1),
            Tree::Node(a, b) => format!("[{},{}]", a.render(), b.render()),
        }
    }
}

/// A product of decorated trees; the leaves of all trees label `0..k` bijectively.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ForestTerm {
    pub k: usize,
    /// Each tree with its class (the unit when undecorated).
    pub trees: Vec<(Tree, usize)>,
}

impl ForestTerm {
    pub fn new(k: usize, trees: Vec<(Tree, usize)>) -> Self {
        ForestTerm { k, trees }
    }

    /// `k` undecorated single-leaf trees.
    pub fn singletons(k: usize, alg: &PDAlgebra) -> Self {
        ForestTerm::new(k, (0..k).map(|v| (Tree::Leaf(v), alg.unit())).collect())
    }
}

/// Linear combination of forests of a fixed arity.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestElement {
    pub k: usize,
    terms: BTreeMap<ForestTerm, Q>,
}

impl ForestElement {
    pub fn zero(k: usize) -> Self {
        ForestElement { k, terms: BTreeMap::new() }
    }

    pub fn from_term(f: ForestTerm, c: Q) -> Self {
        let mut out = ForestElement::zero(f.k);
        out.add_term(f, c);
        out
    }

    pub fn terms(&self) -> &BTreeMap<ForestTerm, Q> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, f: ForestTerm, c: Q) {
        if c.is_zero() {
            return;
        }
        let e = self.terms.entry(f.clone()).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&f);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (f, c) in &other.terms {
            out.add_term(f.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, s: &Q) -> Self {
        let mut out = ForestElement::zero(self.k);
        for (f, c) in &self.terms {
            out.add_term(f.clone(), c * s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&q(-1)))
    }
}

impl LSModel {
    /// Shifted parity `ℓ(n−1)` of a tree with `ℓ` leaves, the parity that
    /// governs the skew and Jacobi signs of the degree `n−1` bracket.
    fn shifted_odd(&self, t: &Tree) -> bool {
        self.omega_odd() && t.leaf_count() % 2 == 1
    }

    /// Parity of a decorated tree as a factor of a forest.
    fn tree_odd(&self, t: &Tree, class: usize) -> bool {
        (self.omega_odd() && t.node_count() % 2 == 1) ^ self.alg.is_odd(class)
    }

    pub fn forest_degree(&self, f: &ForestTerm) -> i64 {
        f.trees.iter().map(|(t, c)| t.node_count() as i64 * (self.n() - 1) + self.alg.degree(*c)).sum()
    }

    fn validate_forest(&self, f: &ForestTerm) -> Result<()> {
        let mut seen = vec![false; f.k];
        for (t, c) in &f.trees {
            if *c >= self.alg.dim() {
                return Err(Error::Index(format!("unknown decoration class {c}")));
            }
            for v in t.leaves() {
                if v >= f.k || seen[v] {
                    return Err(Error::InvalidGraph(format!("leaf {} is repeated or outside arity {}", v + 1, f.k)));
                }
                seen[v] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidGraph("every label must appear as a leaf".into()));
        }
        Ok(())
    }

    /// Expresses a tree in the tall-tree basis by skew symmetry and Jacobi.
    pub fn tree_normalize(&self, t: &Tree) -> Vec<(Q, Tree)> {
        match t {
            Tree::Leaf(_) => vec![(Q::one(), t.clone())],
            Tree::Node(a, b) => {
                let (a, b, c) = if b.min_leaf() < a.min_leaf() {
                    // [a,b] = −(−1)^{a'b'} [b,a]
                    let s = if self.shifted_odd(a) && self.shifted_odd(b) { q(1) } else { q(-1) };
                    (b.as_ref(), a.as_ref(), s)
                } else {
                    (a.as_ref(), b.as_ref(), q(1))
                };
                let mut out = Vec::new();
                for (x, l) in self.tree_normalize(a) {
                    for (y, t) in self.attach(&l, b) {
                        out.push((&c * &x * y, t));
                    }
                }
                out
            }
        }
    }

    /// `[l, b]` for tall `l` holding the minimal leaf, by
    /// `[l,[b₁,b₂]] = [[l,b₁],b₂] − (−1)^{b₁'b₂'} [[l,b₂],b₁]`.
    fn attach(&self, l: &Tree, b: &Tree) -> Vec<(Q, Tree)> {
        match b {
            Tree::Leaf(_) => vec![(Q::one(), Tree::node(l.clone(), b.clone()))],
            Tree::Node(b1, b2) => {
                let s = if self.shifted_odd(b1) && self.shifted_odd(b2) { q(1) } else { q(-1) };
                let mut out = Vec::new();
                for (x, l1) in self.attach(l, b1) {
                    for (y, t) in self.attach(&l1, b2) {
                        out.push((&x * y, t));
                    }
                }
                for (x, l2) in self.attach(l, b2) {
                    for (y, t) in self.attach(&l2, b1) {
                        out.push((&s * &x * y, t));
                    }
                }
                out
            }
        }
    }

    /// Rewrites every term over tall trees sorted by their minimal leaf.
    pub fn forest_normalize(&self, x: &ForestElement) -> Result<ForestElement> {
        let mut out = ForestElement::zero(x.k);
        for (f, c) in x.terms() {
            if f.k != x.k {
                return Err(Error::Arity { expected: x.k, got: f.k });
            }
            self.validate_forest(f)?;
            let mut partial: Vec<(Q, Vec<(Tree, usize)>)> = vec![(c.clone(), Vec::new())];
            for (t, cls) in &f.trees {
                let expanded = self.tree_normalize(t);
                partial = partial
                    .into_iter()
                    .flat_map(|(c0, prefix)| {
                        expanded.iter().map(move |(x, t)| {
                            let mut p = prefix.clone();
                            p.push((t.clone(), *cls));
                            (&c0 * x, p)
                        })
                    })
                    .collect();
            }
            for (c, mut trees) in partial {
                let negative = koszul_sort(&mut trees, |(t, _)| t.min_leaf(), |(t, cls)| self.tree_odd(t, *cls));
                out.add_term(ForestTerm::new(x.k, trees), c * sign(negative));
            }
        }
        Ok(out)
    }

    /// Tall forests of arity `k` with every tree decorated by the unit.
    pub fn tall_forest_basis(&self, k: usize) -> Vec<ForestTerm> {
        let mut out = Vec::new();
        for blocks in set_partitions(k) {
            let mut acc: Vec<Vec<(Tree, usize)>> = vec![Vec::new()];
            for b in &blocks {
                let trees: Vec<Tree> = permutations(&b[1..])
                    .into_iter()
                    .map(|perm| perm.into_iter().fold(Tree::Leaf(b[0]), |t, v| Tree::node(t, Tree::Leaf(v))))
                    .collect();
                acc = acc
                    .into_iter()
                    .flat_map(|prefix| {
                        trees.iter().map(move |t| {
                            let mut p = prefix.clone();
                            p.push((t.clone(), self.alg.unit()));
                            p
                        })
                    })
                    .collect();
            }
            out.extend(acc.into_iter().map(|trees| ForestTerm::new(k, trees)));
        }
        out.sort();
        out
    }
}

impl LSModel {
    /// `⟨Γ, F⟩` for an undecorated monomial `Γ` given by its ordered edges.
    ///
    /// Each edge `i→j` goes to the lowest branch point separating leaves `i`
    /// and `j`. The pairing is `±1` when this is a bijection onto the branch
    /// points and `0` otherwise. Branch points are ordered tree by tree in
    /// infix order; for `n` even the sign is the parity of the edge-to-branch
    /// matching, for `n` odd each edge whose source sits in the right subtree
    /// contributes `−1`.
    pub fn pair_edges_forest(&self, k: usize, edges: &[(usize, usize)], f: &ForestTerm) -> Result<Q> {
        if f.k != k {
            return Err(Error::Arity { expected: k, got: f.k });
        }
        self.validate_forest(f)?;
        if f.trees.iter().any(|(_, c)| *c != self.alg.unit()) {
            return Err(Error::InvalidGraph("the pairing takes undecorated forests".into()));
        }
        let nodes: Vec<(Vec<usize>, Vec<usize>)> = f.trees.iter().flat_map(|(t, _)| t.branch_points()).collect();
        if nodes.len() != edges.len() {
            return Ok(Q::zero());
        }
        let mut target = Vec::with_capacity(edges.len());
        let mut reversed = 0usize;
        for &(i, j) in edges {
            if i >= k || j >= k {
                return Err(Error::Index(format!("edge ({}, {}) outside arity {k}", i + 1, j + 1)));
            }
            let hit = nodes.iter().position(|(l, r)| {
                (l.contains(&i) && r.contains(&j)) || (r.contains(&i) && l.contains(&j))
            });
            let Some(p) = hit else { return Ok(Q::zero()) };
            if target.contains(&p) {
                return Ok(Q::zero());
            }
            if nodes[p].1.contains(&i) {
                reversed += 1;
            }
            target.push(p);
        }
        let negative = if self.omega_odd() {
            let inversions =
                (0..target.len()).flat_map(|a| (a + 1..target.len()).map(move |b| (a, b))).filter(|&(a, b)| target[a] > target[b]).count();
            inversions % 2 == 1
        } else {
            reversed % 2 == 1
        };
        Ok(sign(negative))
    }

    /// `⟨Γ, F⟩` for an undecorated word.
    pub fn pair_graph_forest(&self, w: &LSWord, f: &ForestTerm) -> Result<Q> {
        self.validate(w)?;
        let mut edges = Vec::new();
        for g in &w.factors {
            match *g {
                Generator::Omega(a, b) => edges.push((a, b)),
                Generator::Alpha(_, c) if c == self.alg.unit() => {}
                Generator::Alpha(..) => {
                    return Err(Error::InvalidGraph("the pairing takes undecorated words".into()));
                }
            }
        }
        Ok(&w.coefficient * self.pair_edges_forest(w.k, &edges, f)?)
    }

    /// Sends a bracket to the edge graph and a product to the disjoint union,
    /// composing operadically. A tree's class decorates its minimal leaf.
    pub fn include_forest_into_graphs(&self, gc: &GraphComplex, x: &ForestElement) -> Result<GraphSum> {
        if gc.n() != self.n() || gc.algebra().dim() != self.alg.dim() {
            return Err(Error::InvalidAlgebra("graph complex and configuration model use different algebras".into()));
        }
        let mut out = GraphSum::zero();
        for (f, c) in x.terms() {
            self.validate_forest(f)?;
            let mut words: Vec<Vec<Generator>> = vec![Vec::new()];
            for (t, cls) in &f.trees {
                let expansions = tree_edge_words(t);
                words = words
                    .into_iter()
                    .flat_map(|prefix| {
                        expansions.iter().map(move |e| {
                            let mut w = prefix.clone();
                            w.extend(e.iter().map(|&(a, b)| Generator::Omega(a, b)));
                            if *cls != self.alg.unit() {
                                w.push(Generator::Alpha(t.min_leaf(), *cls));
                            }
                            w
                        })
                    })
                    .collect();
            }
            for mut w in words {
                let negative = koszul_sort(&mut w, |g| matches!(g, Generator::Alpha(..)), |g| self.generator_odd(g));
                let mut edges = Vec::new();
                let mut decos = Vec::new();
                for g in w {
                    match g {
                        Generator::Omega(a, b) => edges.push((a, b)),
                        Generator::Alpha(a, cls) => decos.push((a, cls)),
                    }
                }
                let g = Graph::new(f.k, 0, edges, decos);
                out = out.add(&gc.sum_of(&g, c * sign(negative))?);
            }
        }
        Ok(out)
    }
}

/// Edge words of `ι(t)`: `ι([a,b]) = Σ ι(a) ω_{xy} ι(b)` over leaves `x ∈ a`, `y ∈ b`.
fn tree_edge_words(t: &Tree) -> Vec<Vec<(usize, usize)>> {
    match t {
        Tree::Leaf(_) => vec![Vec::new()],
        Tree::Node(a, b) => {
            let (wa, wb) = (tree_edge_words(a), tree_edge_words(b));
            let (la, lb) = (a.leaves(), b.leaves());
            let mut out = Vec::new();
            for x in &wa {
                for &u in &la {
                    for &v in &lb {
                        for y in &wb {
                            let mut w = x.clone();
                            w.push((u, v));
                            w.extend_from_slice(y);
                            out.push(w);
                        }
                    }
                }
            }
            out
        }
    }
}

// ============================================================================
// Serialization
// ============================================================================

fn parse_label(s: &str) -> Result<usize> {
    let v: usize = s.trim().parse().map_err(|_| Error::Parse(format!("bad vertex label {s:?}")))?;
    v.checked_sub(1).ok_or_else(|| Error::Parse("vertex labels start at 1".into()))
}

fn coefficient_from_json(v: Option<&Value>) -> Result<Q> {
    match v {
        None => Ok(Q::one()),
        Some(Value::String(s)) => parse_q(s),
        Some(Value::Number(n)) => parse_q(&n.to_string()),
        Some(_) => Err(Error::Parse("coefficient must be a number or a string".into())),
    }
}

impl LSModel {
    fn class_index(&self, s: &str) -> Result<usize> {
        self.alg
            .index_of(s)
            .or_else(|| s.parse().ok().filter(|&i: &usize| i < self.alg.dim()))
            .ok_or_else(|| Error::Parse(format!("unknown class {s:?}")))
    }

    /// Reads `"w12"`, `"w3,12"` or `"a1:v"`.
    pub fn parse_generator(&self, token: &str) -> Result<Generator> {
        let t = token.trim();
        if let Some(rest) = t.strip_prefix('w') {
            let (a, b) = match rest.split_once(',') {
                Some(p) => p,
                None if rest.len() == 2 => rest.split_at(1),
                None => return Err(Error::Parse(format!("edge token {token:?} needs a comma"))),
            };
            return Ok(Generator::Omega(parse_label(a)?, parse_label(b)?));
        }
        if let Some(rest) = t.strip_prefix('a') {
            let (v, c) = rest.split_once(':').ok_or_else(|| Error::Parse(format!("decoration token {token:?}")))?;
            return Ok(Generator::Alpha(parse_label(v)?, self.class_index(c)?));
        }
        Err(Error::Parse(format!("unknown generator {token:?}")))
    }

    pub fn render_generator(&self, g: &Generator) -> String {
        match *g {
            Generator::Omega(a, b) if a < 9 && b < 9 => format!("w{}{}", a + 1, b + 1),
            Generator::Omega(a, b) => format!("w{},{}", a + 1, b + 1),
            Generator::Alpha(a, c) => format!("a{}:{}", a + 1, self.alg.name(c)),
        }
    }

    /// `{"arity": k, "factors": [...], "coefficient": "q"}`.
    pub fn word_from_json(&self, v: &Value) -> Result<LSWord> {
        let k = v.get("arity").and_then(Value::as_u64).ok_or_else(|| Error::Parse("word without arity".into()))?;
        let factors = v
            .get("factors")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("word without factors".into()))?
            .iter()
            .map(|t| t.as_str().ok_or_else(|| Error::Parse("factor must be a string".into())).and_then(|s| self.parse_generator(s)))
            .collect::<Result<Vec<_>>>()?;
        let w = LSWord::new(k as usize, factors, coefficient_from_json(v.get("coefficient"))?);
        self.validate(&w)?;
        Ok(w)
    }

    pub fn word_to_json(&self, w: &LSWord) -> Value {
        json!({
            "arity": w.k,
            "factors": w.factors.iter().map(|g| self.render_generator(g)).collect::<Vec<_>>(),
            "coefficient": format_q(&w.coefficient),
        })
    }

    pub fn element_to_json(&self, x: &LSElement) -> Value {
        Value::Array(x.terms().iter().map(|(g, c)| self.word_to_json(&g.to_word(&self.alg, c.clone()))).collect())
    }

    /// A list of words, normalized.
    pub fn element_from_json(&self, k: usize, v: &Value) -> Result<LSElement> {
        let arr = v.as_array().ok_or_else(|| Error::Parse("expected a list of words".into()))?;
        let words = arr.iter().map(|w| self.word_from_json(w)).collect::<Result<Vec<_>>>()?;
        self.normalize(k, &words)
    }

    /// A tree as nested two-element lists of leaves `"3"` or `"3:a"`; at most
    /// one leaf per tree is decorated.
    pub fn tree_from_json(&self, v: &Value) -> Result<(Tree, usize)> {
        let mut class = None;
        let t = self.tree_from_json_inner(v, &mut class)?;
        Ok((t, class.unwrap_or(self.alg.unit())))
    }

    fn tree_from_json_inner(&self, v: &Value, class: &mut Option<usize>) -> Result<Tree> {
        match v {
            Value::Number(n) => {
                let s = n.to_string();
                Ok(Tree::Leaf(parse_label(&s)?))
            }
            Value::String(s) => match s.split_once(':') {
                None => Ok(Tree::Leaf(parse_label(s)?)),
                Some((l, c)) => {
                    if class.is_some() {
                        return Err(Error::Parse("a tree carries at most one decorated leaf".into()));
                    }
                    *class = Some(self.class_index(c)?);
                    Ok(Tree::Leaf(parse_label(l)?))
                }
            },
            Value::Array(a) if a.len() == 2 => {
                Ok(Tree::node(self.tree_from_json_inner(&a[0], class)?, self.tree_from_json_inner(&a[1], class)?))
            }
            _ => Err(Error::Parse("a tree is a leaf or a two-element list".into())),
        }
    }

    pub fn tree_to_json(&self, t: &Tree, class: usize) -> Value {
        let m = t.min_leaf();
        fn go(t: &Tree, m: usize, tag: &Option<String>) -> Value {
            match t {
                Tree::Leaf(v) if *v == m && tag.is_some() => json!(format!("{}:{}", v + 1, tag.as_ref().unwrap())),
                Tree::Leaf(v) => json!(format!("{}", v + 1)),
                Tree::Node(a, b) => json!([go(a, m, tag), go(b, m, tag)]),
            }
        }
        let tag = (class != self.alg.unit()).then(|| self.alg.name(class).to_string());
        go(t, m, &tag)
    }

    /// `{"arity": k, "trees": [...], "coefficient": q}`, or a bare tree whose
    /// arity is its number of leaves.
    pub fn forest_from_json(&self, v: &Value) -> Result<(ForestTerm, Q)> {
        if let Some(trees) = v.get("trees").and_then(Value::as_array) {
            let trees = trees.iter().map(|t| self.tree_from_json(t)).collect::<Result<Vec<_>>>()?;
            let leaves: usize = trees.iter().map(|(t, _)| t.leaf_count()).sum();
            let k = v.get("arity").and_then(Value::as_u64).map_or(leaves, |k| k as usize);
            let f = ForestTerm::new(k, trees);
            self.validate_forest(&f)?;
            return Ok((f, coefficient_from_json(v.get("coefficient"))?));
        }
        let (t, c) = self.tree_from_json(v)?;
        let f = ForestTerm::new(t.leaf_count(), vec![(t, c)]);
        self.validate_forest(&f)?;
        Ok((f, Q::one()))
    }

    pub fn forest_to_json(&self, f: &ForestTerm, c: &Q) -> Value {
        json!({
            "arity": f.k,
            "trees": f.trees.iter().map(|(t, cls)| self.tree_to_json(t, *cls)).collect::<Vec<_>>(),
            "coefficient": format_q(c),
        })
    }

    pub fn forest_element_to_json(&self, x: &ForestElement) -> Value {
        Value::Array(x.terms().iter().map(|(f, c)| self.forest_to_json(f, c)).collect())
    }

    pub fn render_forest(&self, f: &ForestTerm) -> String {
        f.trees
            .iter()
            .map(|(t, c)| {
                if *c == self.alg.unit() {
                    t.render()
                } else {
                    format!("{}⊗{}", self.alg.name(*c), t.render())
                }
            })
            .collect::<Vec<_>>()
            .join(" ∧ ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::det;
    use proptest::prelude::*;

    fn model(alg: PDAlgebra) -> LSModel {
        LSModel::new(Arc::new(alg))
    }

    fn w(m: &LSModel, k: usize, toks: &[&str], c: i64) -> LSWord {
        LSWord::new(k, toks.iter().map(|t| m.parse_generator(t).unwrap()).collect(), q(c))
    }

    fn norm(m: &LSModel, k: usize, words: &[LSWord]) -> LSElement {
        m.normalize(k, words).unwrap()
    }

    fn algebras() -> Vec<PDAlgebra> {
        vec![PDAlgebra::sphere(2), PDAlgebra::sphere(3), PDAlgebra::torus()]
    }

    #[test]
    fn arnold_and_decoration_moves_vanish() {
        for alg in algebras() {
            let m = model(alg);
            let arnold = [w(&m, 3, &["w12", "w23"], 1), w(&m, 3, &["w23", "w31"], 1), w(&m, 3, &["w31", "w12"], 1)];
            assert!(norm(&m, 3, &arnold).is_zero());
            for cls in 0..m.algebra().dim() {
                let name = m.algebra().name(cls).to_string();
                let moved =
                    [w(&m, 2, &["w12", &format!("a1:{name}")], 1), w(&m, 2, &["w12", &format!("a2:{name}")], -1)];
                assert!(norm(&m, 2, &moved).is_zero());
            }
        }
    }

    #[test]
    fn skew_symmetry() {
        for alg in algebras() {
            let m = model(alg);
            let sign = if m.n() % 2 == 0 { 1 } else { -1 };
            let lhs = norm(&m, 2, &[w(&m, 2, &["w21"], 1)]);
            let rhs = norm(&m, 2, &[w(&m, 2, &["w12"], sign)]);
            assert_eq!(lhs, rhs);
            assert_eq!(rhs.terms().len(), 1);
        }
    }

    #[test]
    fn cycles_and_squares_vanish() {
        for alg in algebras() {
            let m = model(alg);
            assert!(norm(&m, 3, &[w(&m, 3, &["w12", "w23", "w31"], 1)]).is_zero());
            assert!(norm(&m, 2, &[w(&m, 2, &["w12", "w21"], 1)]).is_zero());
            assert!(norm(&m, 4, &[w(&m, 4, &["w12", "w23", "w34", "w41"], 1)]).is_zero());
        }
    }

    #[test]
    fn decorations_multiply() {
        let m = model(PDAlgebra::torus());
        let ab = norm(&m, 1, &[w(&m, 1, &["a1:a", "a1:b"], 1)]);
        let ba = norm(&m, 1, &[w(&m, 1, &["a1:b", "a1:a"], 1)]);
        assert_eq!(ab, ba.scale(&q(-1)));
        assert_eq!(ab, norm(&m, 1, &[w(&m, 1, &["a1:ab"], 1)]));
        assert!(norm(&m, 1, &[w(&m, 1, &["a1:a", "a1:a"], 1)]).is_zero());
        // Moving along an edge then multiplying.
        let spread = norm(&m, 2, &[w(&m, 2, &["w12", "a1:a", "a2:b"], 1)]);
        assert_eq!(spread, norm(&m, 2, &[w(&m, 2, &["w12", "a1:ab"], 1)]));
    }

    #[test]
    fn d_of_edge_on_sphere() {
        for n in [2i64, 3] {
            let m = model(PDAlgebra::sphere(n));
            // Dual basis by hand: 1* = v and v* = (−1)ⁿ·1, so
            // dω₁₂ = α₁¹α₂ᵛ + (−1)ⁿ α₁ᵛα₂¹ = v₂ + (−1)ⁿ v₁.
            let expected = norm(&m, 2, &[w(&m, 2, &["a2:v"], 1), w(&m, 2, &["a1:v"], if n % 2 == 0 { 1 } else { -1 })]);
            assert_eq!(m.d_word(&w(&m, 2, &["w12"], 1)).unwrap(), expected);
            assert!(m.d_word(&w(&m, 2, &["a1:v"], 1)).unwrap().is_zero());
        }
    }

    #[test]
    fn d_is_leibniz_on_disjoint_edges() {
        for alg in algebras() {
            let m = model(alg);
            let d12 = m.d_word(&w(&m, 4, &["w12"], 1)).unwrap();
            let d34 = m.d_word(&w(&m, 4, &["w34"], 1)).unwrap();
            let mul = |x: &LSElement, tail: &[Generator], head: &[Generator], s: i64| -> LSElement {
                let mut out = LSElement::zero(4);
                for (g, c) in x.terms() {
                    let mut f = head.to_vec();
                    f.extend(g.to_word(m.algebra(), c.clone()).factors);
                    f.extend_from_slice(tail);
                    out = out.add(&m.normalize_word(&LSWord::new(4, f, c * q(s))).unwrap());
                }
                out
            };
            let s = if m.n() % 2 == 0 { -1 } else { 1 };
            let lhs = m.d_word(&w(&m, 4, &["w12", "w34"], 1)).unwrap();
            let rhs = mul(&d12, &[Generator::Omega(2, 3)], &[], 1).add(&mul(&d34, &[], &[Generator::Omega(0, 1)], s));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn d_respects_relations() {
        for alg in algebras() {
            let m = model(alg);
            let sign = if m.n() % 2 == 0 { 1 } else { -1 };
            let d = |words: &[LSWord]| {
                words.iter().fold(LSElement::zero(words[0].k), |acc, x| acc.add(&m.d_word(x).unwrap()))
            };
            assert!(d(&[w(&m, 3, &["w12", "w23"], 1), w(&m, 3, &["w23", "w31"], 1), w(&m, 3, &["w31", "w12"], 1)])
                .is_zero());
            assert!(d(&[w(&m, 2, &["w21"], 1), w(&m, 2, &["w12"], -sign)]).is_zero());
            assert!(d(&[w(&m, 2, &["w12", "w12"], 1)]).is_zero());
            for cls in m.algebra().reduced() {
                let name = m.algebra().name(cls).to_string();
                let moved =
                    [w(&m, 2, &["w12", &format!("a1:{name}")], 1), w(&m, 2, &["w12", &format!("a2:{name}")], -1)];
                assert!(d(&moved).is_zero(), "moving {name} is not closed under d");
            }
        }
    }

    #[test]
    fn d_squares_to_zero() {
        for alg in algebras() {
            let m = model(alg);
            for k in 0..=3 {
                for g in m.basis(k) {
                    let x = LSElement { k, terms: BTreeMap::from([(g.clone(), q(1))]) };
                    assert!(m.d_ls(&m.d_ls(&x)).is_zero(), "d² ≠ 0 on {g:?}");
                }
            }
        }
    }

    #[test]
    fn basis_elements_are_normal() {
        for alg in algebras() {
            let m = model(alg);
            for k in 0..=3 {
                for g in m.basis(k) {
                    let x = m.normalize_word(&g.to_word(m.algebra(), q(1))).unwrap();
                    assert_eq!(x.terms().len(), 1);
                    assert_eq!(x.coefficient(&g), q(1));
                }
            }
        }
    }

    /// Number of set partitions weighted by `Π (|B|−1)!`.
    fn species_count(k: usize) -> usize {
        set_partitions(k).iter().map(|p| p.iter().map(|b| (1..b.len()).product::<usize>()).product::<usize>()).sum()
    }

    #[test]
    fn dimensions_match_recursion() {
        assert_eq!(ls_dimension(&Arc::new(PDAlgebra::sphere(2)), 0), BTreeMap::from([(0, 1)]));
        let s2 = Arc::new(PDAlgebra::sphere(2));
        assert_eq!(ls_dimension(&s2, 1), BTreeMap::from([(0, 1), (2, 1)]));
        assert_eq!(ls_dimension(&s2, 2).values().sum::<usize>(), 6);
        for alg in algebras() {
            let alg = Arc::new(alg);
            for k in 0..=4 {
                assert_eq!(ls_dimension(&alg, k), ls_dimension_recursive(&alg, k));
            }
        }
        for (k, want) in [(1, 1), (2, 2), (3, 6), (4, 24)] {
            assert_eq!(species_count(k), want);
            assert_eq!(model(PDAlgebra::sphere(2)).undecorated_basis(k).len(), want);
        }
    }

    #[test]
    fn forest_relations() {
        for alg in algebras() {
            let m = model(alg);
            let (l1, l2, l3) = (Tree::Leaf(0), Tree::Leaf(1), Tree::Leaf(2));
            let unit = m.algebra().unit();
            let term = |t: Tree| ForestTerm::new(3, vec![(t, unit)]);
            let jac = ForestElement::from_term(term(Tree::node(Tree::node(l1.clone(), l2.clone()), l3.clone())), q(1))
                .add(&ForestElement::from_term(term(Tree::node(Tree::node(l2.clone(), l3.clone()), l1.clone())), q(1)))
                .add(&ForestElement::from_term(term(Tree::node(Tree::node(l3.clone(), l1.clone()), l2.clone())), q(1)));
            assert!(m.forest_normalize(&jac).unwrap().is_zero());
            let two = |t: Tree| ForestElement::from_term(ForestTerm::new(2, vec![(t, unit)]), q(1));
            let swapped = m.forest_normalize(&two(Tree::node(Tree::Leaf(1), Tree::Leaf(0)))).unwrap();
            // [x,y] = −(−1)^{x'y'}[y,x] with leaf parity n−1.
            let s = if m.n() % 2 == 0 { 1 } else { -1 };
            assert_eq!(swapped, two(Tree::node(Tree::Leaf(0), Tree::Leaf(1))).scale(&q(s)));
            let single = ForestElement::from_term(ForestTerm::singletons(3, m.algebra()), q(1));
            assert_eq!(m.forest_normalize(&single).unwrap(), single);
        }
    }

    fn arb_tree(leaves: Vec<usize>) -> BoxedStrategy<Tree> {
        if leaves.len() == 1 {
            return Just(Tree::Leaf(leaves[0])).boxed();
        }
        (1..leaves.len())
            .prop_flat_map(move |cut| {
                let (a, b) = leaves.split_at(cut);
                (arb_tree(a.to_vec()), arb_tree(b.to_vec())).prop_map(|(x, y)| Tree::node(x, y))
            })
            .boxed()
    }

    /// A random forest on `0..k`: shuffled labels cut into random trees.
    fn arb_forest(k: usize) -> impl Strategy<Value = Vec<Tree>> {
        (Just((0..k).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), k)).prop_flat_map(
            |(labels, cuts)| {
                let mut groups: Vec<Vec<usize>> = Vec::new();
                for (i, v) in labels.into_iter().enumerate() {
                    if i == 0 || cuts[i] {
                        groups.push(vec![v]);
                    } else {
                        groups.last_mut().unwrap().push(v);
                    }
                }
                groups.into_iter().map(arb_tree).collect::<Vec<_>>()
            },
        )
    }

    proptest! {
        #[test]
        fn forest_normalize_is_idempotent(n in 2i64..4, trees in arb_forest(4)) {
            let m = model(PDAlgebra::sphere(n));
            let unit = m.algebra().unit();
            let f = ForestElement::from_term(ForestTerm::new(4, trees.into_iter().map(|t| (t, unit)).collect()), q(1));
            let once = m.forest_normalize(&f).unwrap();
            prop_assert!(once.terms().keys().all(|t| t.trees.iter().all(|(x, _)| x.is_tall())));
            prop_assert_eq!(m.forest_normalize(&once).unwrap(), once);
        }

        #[test]
        fn normalize_is_idempotent(n in 2i64..4, raw in prop::collection::vec((0usize..4, 0usize..4), 0..4)) {
            let m = model(PDAlgebra::sphere(n));
            let factors: Vec<Generator> =
                raw.into_iter().filter(|(a, b)| a != b).map(|(a, b)| Generator::Omega(a, b)).collect();
            let x = m.normalize_word(&LSWord::new(4, factors, q(1))).unwrap();
            let mut again = LSElement::zero(4);
            for (g, c) in x.terms() {
                again = again.add(&m.normalize_word(&g.to_word(m.algebra(), c.clone())).unwrap());
            }
            prop_assert_eq!(again, x);
        }

        /// Pairing a raw tree-shaped word equals pairing its normal form, and
        /// likewise on the forest side.
        #[test]
        fn pairing_respects_relations(n in 2i64..4, trees in arb_forest(4), raw in prop::collection::vec((0usize..4, 0usize..4), 0..4)) {
            let m = model(PDAlgebra::sphere(n));
            let unit = m.algebra().unit();
            let f = ForestTerm::new(4, trees.into_iter().map(|t| (t, unit)).collect());
            let fnorm = m.forest_normalize(&ForestElement::from_term(f.clone(), q(1))).unwrap();
            let edges: Vec<(usize, usize)> = raw.into_iter().filter(|(a, b)| a != b).collect();
            let word = LSWord::new(4, edges.iter().map(|&(a, b)| Generator::Omega(a, b)).collect(), q(1));
            let direct = m.pair_edges_forest(4, &edges, &f).unwrap();
            let gnorm = m.normalize_word(&word).unwrap();
            let mut via_graph = Q::zero();
            for (g, c) in gnorm.terms() {
                via_graph += c * m.pair_edges_forest(4, &g.edges(), &f).unwrap();
            }
            let mut via_forest = Q::zero();
            for (t, c) in fnorm.terms() {
                via_forest += c * m.pair_edges_forest(4, &edges, t).unwrap();
            }
            prop_assert_eq!(&via_graph, &direct);
            prop_assert_eq!(&via_forest, &direct);
        }

        #[test]
        fn inclusion_respects_relations(n in 2i64..4, trees in arb_forest(4)) {
            let alg = Arc::new(PDAlgebra::sphere(n));
            let m = LSModel::new(alg.clone());
            let gc = GraphComplex::new(alg.clone());
            let f = ForestElement::from_term(ForestTerm::new(4, trees.into_iter().map(|t| (t, alg.unit())).collect()), q(1));
            let fnorm = m.forest_normalize(&f).unwrap();
            prop_assert_eq!(m.include_forest_into_graphs(&gc, &f).unwrap(), m.include_forest_into_graphs(&gc, &fnorm).unwrap());
        }
    }

    #[test]
    fn pairing_examples() {
        for n in [2i64, 3] {
            let m = model(PDAlgebra::sphere(n));
            let unit = m.algebra().unit();
            let bracket = ForestTerm::new(2, vec![(Tree::node(Tree::Leaf(0), Tree::Leaf(1)), unit)]);
            assert_eq!(m.pair_graph_forest(&w(&m, 2, &["w12"], 1), &bracket).unwrap().clone() * m.pair_graph_forest(&w(&m, 2, &["w12"], 1), &bracket).unwrap(), q(1));
            let apart = ForestTerm::singletons(2, m.algebra());
            assert_eq!(m.pair_graph_forest(&w(&m, 2, &["w12"], 1), &apart).unwrap(), q(0));
            assert!(m.pair_graph_forest(&w(&m, 3, &["w12"], 1), &apart).is_err());
        }
    }

    #[test]
    fn pairing_is_perfect() {
        for n in [2i64, 3] {
            let m = model(PDAlgebra::sphere(n));
            for k in 1..=4 {
                let graphs = m.undecorated_basis(k);
                let forests = m.tall_forest_basis(k);
                assert_eq!(graphs.len(), species_count(k));
                assert_eq!(forests.len(), graphs.len());
                let mat: Vec<Vec<Q>> = graphs
                    .iter()
                    .map(|g| forests.iter().map(|f| m.pair_edges_forest(k, &g.edges(), f).unwrap()).collect())
                    .collect();
                assert!(!det(&mat).is_zero(), "n = {n}, k = {k}");
            }
        }
    }

    #[test]
    fn inclusion_examples() {
        let alg = Arc::new(PDAlgebra::sphere(2));
        let m = LSModel::new(alg.clone());
        let gc = GraphComplex::new(alg.clone());
        let unit = alg.unit();
        let edge = ForestElement::from_term(ForestTerm::new(2, vec![(Tree::node(Tree::Leaf(0), Tree::Leaf(1)), unit)]), q(1));
        assert_eq!(
            m.include_forest_into_graphs(&gc, &edge).unwrap(),
            gc.sum_of(&Graph::new(2, 0, vec![(0, 1)], vec![]), q(1)).unwrap()
        );
        let apart = ForestElement::from_term(ForestTerm::singletons(2, &alg), q(1));
        assert_eq!(m.include_forest_into_graphs(&gc, &apart).unwrap(), gc.sum_of(&Graph::empty(2), q(1)).unwrap());
        // [[1,2],3] against operadic composition of edge graphs.
        let t = Tree::node(Tree::node(Tree::Leaf(0), Tree::Leaf(1)), Tree::Leaf(2));
        let got = m.include_forest_into_graphs(&gc, &ForestElement::from_term(ForestTerm::new(3, vec![(t, unit)]), q(1))).unwrap();
        let e = Graph::new(2, 0, vec![(0, 1)], vec![]);
        let composed: GraphSum = gc.insert(&e, 1, &e).unwrap();
        // Composition lists the outer edge first; ι lists it after the left subtree.
        assert_eq!(got.len(), 2);
        assert_eq!(got, composed.scale(&q(-1)));
    }

    #[test]
    fn json_roundtrip() {
        let m = model(PDAlgebra::torus());
        let x = norm(&m, 3, &[w(&m, 3, &["w21", "a3:a", "w13"], 2)]);
        assert_eq!(m.element_from_json(3, &m.element_to_json(&x)).unwrap(), x);
        let (f, c) = m.forest_from_json(&json!([["1:a", "2"], "3"])).unwrap();
        assert_eq!(f.trees[0].1, m.algebra().index_of("a").unwrap());
        let back = m.forest_from_json(&m.forest_to_json(&f, &c)).unwrap();
        assert_eq!(back, (f, c));
        assert!(m.forest_from_json(&json!([["1:a", "2:b"], "3"])).is_err());
        assert!(m.parse_generator("w1").is_err());
    }
}
