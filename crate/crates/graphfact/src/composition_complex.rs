//! The layered complex `D = Graphs_M ∘ Com*[n] ∘ Lie*[1] ∘ Com ∘ V`.
//!
//! A tree is a graph `Γ` whose external vertex `j` carries a Com* node; a Com*
//! node is an unordered collection of Lie* blocks; a Lie* block is a bar word
//! of monomials of `O = Com ∘ V`, taken modulo graded shuffles.
//!
//! Signs follow one flat token word
//! `Γ | C C̄ Λ Λ̄f … C̄ Λ Λ̄g … | C …` with `C`, `C̄` of parity `n`, `Λ`, `Λ̄` odd
//! and a letter `f` of parity `|f|`. Hence a letter has parity `|f|+1`, a
//! block `n + 1 + Σ(|f|+1)` and a node `n + Σ blocks`.
//!
//! Counters: `c = Σ_nodes (k−1)` with `k` blocks, `l = Σ_blocks (m−1)` with
//! `m` letters, `deg_O` = number of variables. These are the cogenerator
//! counts of the two cooperads and the weight grading of `O`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval_map::EvalMap;
use crate::graded_poly::VariableSet;
use crate::graph_complex::{Graph, GraphComplex, GraphSum};
use crate::ls_model::{ForestElement, ForestTerm, LSModel, Tree};
use crate::pd_algebra::PDAlgebra;
use crate::poly::{normalize_word, Monomial, Poly, VarTable};
use crate::scalars::{q, qf, Q};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LieWord {
    pub letters: Vec<Monomial>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComNode {
    pub lie: Vec<LieWord>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompositionTree {
    pub graph: Graph,
    pub com: Vec<ComNode>,
}

impl LieWord {
    pub fn new(letters: Vec<Monomial>) -> Self {
        LieWord { letters }
    }
}

impl ComNode {
    pub fn new(lie: Vec<LieWord>) -> Self {
        ComNode { lie }
    }

    /// One block per letter.
    pub fn singletons(letters: Vec<Monomial>) -> Self {
        ComNode { lie: letters.into_iter().map(|m| LieWord::new(vec![m])).collect() }
    }
}

impl CompositionTree {
    pub fn new(graph: Graph, com: Vec<ComNode>) -> Self {
        CompositionTree { graph, com }
    }

    /// Every node has one block and every block one letter.
    pub fn is_trivial(&self) -> bool {
        self.com.iter().all(|c| c.lie.len() == 1 && c.lie[0].letters.len() == 1)
    }

    pub fn letter_count(&self) -> usize {
        self.com.iter().flat_map(|c| &c.lie).map(|b| b.letters.len()).sum()
    }
}

/// Linear combination of canonical trees.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TreeSum {
    terms: BTreeMap<CompositionTree, Q>,
}

impl TreeSum {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &BTreeMap<CompositionTree, Q> {
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

    pub fn coefficient(&self, t: &CompositionTree) -> Q {
        self.terms.get(t).cloned().unwrap_or_else(Q::zero)
    }

    /// Adds `c·t` for a tree already in canonical form.
    pub fn add_canonical(&mut self, t: CompositionTree, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(t);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_canonical(t.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&q(-1))
    }

    pub fn scale(&self, s: &Q) -> Self {
        let mut out = TreeSum::zero();
        for (t, c) in &self.terms {
            out.add_canonical(t.clone(), c * s);
        }
        out
    }

    pub fn filter(&self, keep: impl Fn(&CompositionTree) -> bool) -> Self {
        TreeSum { terms: self.terms.iter().filter(|(t, _)| keep(t)).map(|(t, c)| (t.clone(), c.clone())).collect() }
    }
}

/// `(−1)^k` as a boolean flip.
fn odd(k: i64) -> bool {
    k.rem_euclid(2) == 1
}

fn signed(c: &Q, negative: bool) -> Q {
    if negative {
        -c
    } else {
        c.clone()
    }
}

/// Koszul sign of listing `items[order[0]], items[order[1]], …` given parities.
pub(crate) fn koszul_reorder(order: &[usize], parity: &[bool]) -> bool {
    let mut neg = false;
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            if order[a] > order[b] && parity[order[a]] && parity[order[b]] {
                neg = !neg;
            }
        }
    }
    neg
}

/// Calls `f` on every permutation of `items` (Heap's algorithm).
fn permutations(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Raw node data: blocks of letters, not yet normalized.
pub(crate) type RawNode = Vec<Vec<Monomial>>;

/// The complex `D` for a fixed algebra, `N` and partition function.
#[derive(Clone, Debug)]
pub struct CompositionComplex {
    eval: EvalMap,
    z: GraphSum,
}

impl CompositionComplex {
    pub fn new(big_n: usize, alg: Arc<PDAlgebra>) -> Result<Self> {
        Ok(CompositionComplex { eval: EvalMap::new(big_n, alg)?, z: GraphSum::zero() })
    }

    /// Sets `z` in `δ^z = −(leaf terms of δ_split) + {z, ·}`. The leaf terms
    /// are the bracket with the one-vertex part of the partition function
    /// (a vertex with the unit or one class after pairing), so `z` must not
    /// contain edgeless one-vertex graphs with at most two decorations.
    pub fn with_partition_function(mut self, z: GraphSum) -> Result<Self> {
        if let Some(g) = z.terms().keys().find(|g| g.r != 0) {
            return Err(Error::Arity { expected: 0, got: g.r });
        }
        if z.terms().keys().any(|g| g.s == 1 && g.edges.is_empty() && g.decorations.len() <= 2) {
            return Err(Error::InvalidGraph("the one-vertex part of z is built into δ^z".into()));
        }
        self.z = z;
        Ok(self)
    }

    pub fn partition_function(&self) -> &GraphSum {
        &self.z
    }

    pub fn eval_map(&self) -> &EvalMap {
        &self.eval
    }

    pub fn graphs(&self) -> &GraphComplex {
        self.eval.graphs()
    }

    pub fn vars(&self) -> &VariableSet {
        self.eval.vars()
    }

    pub fn n(&self) -> i64 {
        self.vars().n()
    }

    fn table(&self) -> &Arc<VarTable> {
        self.vars().table()
    }

    fn n_odd(&self) -> bool {
        odd(self.n())
    }

    pub(crate) fn monomial_degree(&self, m: &[u32]) -> i64 {
        self.table().word_degree(m)
    }

    /// Parity of a letter in the bar word: `|f| + 1`.
    pub(crate) fn letter_odd(&self, m: &[u32]) -> bool {
        odd(self.monomial_degree(m) + 1)
    }

    fn block_odd(&self, b: &[Monomial]) -> bool {
        b.iter().fold(!self.n_odd(), |acc, m| acc ^ self.letter_odd(m))
    }

    fn node_odd(&self, blocks: &[Vec<Monomial>]) -> bool {
        blocks.iter().fold(self.n_odd(), |acc, b| acc ^ self.block_odd(b))
    }

    fn graph_odd(&self, g: &Graph) -> bool {
        self.graphs().is_odd(g)
    }

    /// Graded shuffle product of bar words, with Koszul signs.
    fn shuffle(&self, pieces: &[&[Monomial]]) -> Vec<(Vec<Monomial>, bool)> {
        let mut acc: Vec<(Vec<Monomial>, bool)> = vec![(Vec::new(), false)];
        for piece in pieces {
            let mut next = Vec::new();
            for (w, neg) in &acc {
                shuffle_two(w, piece, &|m| self.letter_odd(m), *neg, &mut next);
            }
            acc = next;
        }
        acc
    }

    /// The Eulerian idempotent `Σ_k (−1)^{k+1}/k · μ^{(k)} Δ^{(k)}`: a canonical
    /// representative of a word modulo nontrivial shuffle products.
    pub fn lie_normal_form(&self, word: &[Monomial]) -> BTreeMap<Vec<Monomial>, Q> {
        let m = word.len();
        let mut out: BTreeMap<Vec<Monomial>, Q> = BTreeMap::new();
        if m == 0 {
            return out;
        }
        for mask in 0u32..(1 << (m - 1)) {
            let mut pieces: Vec<&[Monomial]> = Vec::new();
            let mut start = 0;
            for i in 1..m {
                if mask & (1 << (i - 1)) != 0 {
                    pieces.push(&word[start..i]);
                    start = i;
                }
            }
            pieces.push(&word[start..]);
            let k = pieces.len() as i64;
            let coeff = if k % 2 == 1 { qf(1, k) } else { qf(-1, k) };
            for (w, neg) in self.shuffle(&pieces) {
                *out.entry(w).or_insert_with(Q::zero) += signed(&coeff, neg);
            }
        }
        out.retain(|_, c| !c.is_zero());
        out
    }

    /// Adds `c·(graph, nodes)` in canonical form; `graph` must be canonical.
    pub(crate) fn add_raw(&self, out: &mut TreeSum, graph: &Graph, nodes: &[RawNode], c: Q) {
        if c.is_zero() {
            return;
        }
        // Expand every block into its normal form.
        let mut expanded: Vec<(Vec<RawNode>, Q)> = vec![(Vec::new(), c)];
        for node in nodes {
            let mut node_choices: Vec<(RawNode, Q)> = vec![(Vec::new(), Q::one())];
            for block in node {
                let nf = self.lie_normal_form(block);
                let mut next = Vec::with_capacity(node_choices.len() * nf.len());
                for (partial, pc) in &node_choices {
                    for (w, wc) in &nf {
                        let mut p = partial.clone();
                        p.push(w.clone());
                        next.push((p, pc * wc));
                    }
                }
                node_choices = next;
            }
            let mut next = Vec::with_capacity(expanded.len() * node_choices.len());
            for (partial, pc) in &expanded {
                for (nd, nc) in &node_choices {
                    let mut p = partial.clone();
                    p.push(nd.clone());
                    next.push((p, pc * nc));
                }
            }
            expanded = next;
        }
        for (nodes, c) in expanded {
            self.add_expanded(out, graph, nodes, c);
        }
    }

    /// Sorts blocks within nodes, then nodes together with the external
    /// labels of the graph. Blocks must already be in normal form.
    fn add_expanded(&self, out: &mut TreeSum, graph: &Graph, mut nodes: Vec<RawNode>, c: Q) {
        let mut negative = false;
        for node in nodes.iter_mut() {
            let parity: Vec<bool> = node.iter().map(|b| self.block_odd(b)).collect();
            let mut order: Vec<usize> = (0..node.len()).collect();
            order.sort_by(|&a, &b| node[a].cmp(&node[b]));
            for w in order.windows(2) {
                if node[w[0]] == node[w[1]] && parity[w[0]] {
                    return;
                }
            }
            negative ^= koszul_reorder(&order, &parity);
            *node = order.iter().map(|&i| node[i].clone()).collect();
        }
        let parity: Vec<bool> = nodes.iter().map(|nd| self.node_odd(nd)).collect();
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        // Tie groups of equal nodes may be permuted freely; pick the least graph.
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || nodes[order[i]] != nodes[order[start]] {
                if i - start > 1 {
                    groups.push((start, i));
                }
                start = i;
            }
        }
        let mut best: Option<(Graph, bool)> = None;
        let mut odd_symmetry = false;
        let mut consider = |order: &[usize]| {
            let mut perm = vec![0usize; order.len()];
            for (p, &old) in order.iter().enumerate() {
                perm[old] = p;
            }
            let Some((h, neg)) = self.graphs().relabel_external(graph, &perm) else {
                odd_symmetry = true;
                return;
            };
            let neg = neg ^ koszul_reorder(order, &parity);
            match &best {
                None => best = Some((h, neg)),
                Some((b, bneg)) => {
                    if h < *b {
                        best = Some((h, neg));
                    } else if h == *b && neg != *bneg {
                        odd_symmetry = true;
                    }
                }
            }
        };
        for_each_group_permutation(&mut order, &groups, 0, &mut consider);
        if odd_symmetry {
            return;
        }
        let Some((h, neg)) = best else { return };
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let com: Vec<ComNode> = order
            .iter()
            .map(|&i| ComNode { lie: nodes[i].iter().map(|b| LieWord { letters: b.clone() }).collect() })
            .collect();
        out.add_canonical(CompositionTree { graph: h, com }, signed(&c, negative ^ neg));
    }
}

/// Visits `order` with every combination of permutations inside the groups.
fn for_each_group_permutation(order: &mut Vec<usize>, groups: &[(usize, usize)], g: usize, f: &mut impl FnMut(&[usize])) {
    if g == groups.len() {
        f(order);
        return;
    }
    let (a, b) = groups[g];
    let base: Vec<usize> = order[a..b].to_vec();
    permutations(b - a, |p| {
        for (k, &pi) in p.iter().enumerate() {
            order[a + k] = base[pi];
        }
        for_each_group_permutation(order, groups, g + 1, f);
    });
    order[a..b].copy_from_slice(&base);
}

/// All interleavings of `a` and `b`, with the Koszul sign of moving letters of
/// `b` past letters of `a`.
fn shuffle_two(
    a: &[Monomial],
    b: &[Monomial],
    is_odd: &impl Fn(&Monomial) -> bool,
    neg: bool,
    out: &mut Vec<(Vec<Monomial>, bool)>,
) {
    fn rec(
        a: &[Monomial],
        b: &[Monomial],
        is_odd: &impl Fn(&Monomial) -> bool,
        acc: &mut Vec<Monomial>,
        neg: bool,
        out: &mut Vec<(Vec<Monomial>, bool)>,
    ) {
        if a.is_empty() || b.is_empty() {
            let mut w = acc.clone();
            w.extend_from_slice(a);
            w.extend_from_slice(b);
            out.push((w, neg));
            return;
        }
        acc.push(a[0].clone());
        rec(&a[1..], b, is_odd, acc, neg, out);
        acc.pop();
        // b[0] jumps over the remaining letters of a.
        let flip = is_odd(&b[0]) && a.iter().filter(|m| is_odd(m)).count() % 2 == 1;
        acc.push(b[0].clone());
        rec(a, &b[1..], is_odd, acc, neg ^ flip, out);
        acc.pop();
    }
    let mut acc = Vec::new();
    rec(a, b, is_odd, &mut acc, neg, out);
}

/// Counters of a tree and the four filtration degrees built from them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DegreeVector {
    /// Letters (polynomial slots).
    pub r: i64,
    /// Lie* cogenerators `Σ (m−1)`.
    pub l: i64,
    /// Com* cogenerators `Σ (k−1)`.
    pub c: i64,
    pub s: i64,
    pub e: i64,
    /// Vertices of `Γ`, external and internal.
    pub v: i64,
    /// Number of variables in all letters.
    pub deg_o: i64,
    /// Degree of `Γ` with decorations counted positively.
    pub deg: i64,
}

impl DegreeVector {
    pub fn deg1(&self) -> i64 {
        self.r - self.l - self.deg_o
    }

    pub fn deg2(&self) -> i64 {
        self.e - self.v
    }

    pub fn deg3(&self, n: i64) -> i64 {
        self.s + (n - 1) * self.c - self.deg
    }

    pub fn deg4(&self) -> i64 {
        -self.c
    }

    pub fn filtration(&self, n: i64) -> [i64; 4] {
        [self.deg1(), self.deg2(), self.deg3(n), self.deg4()]
    }
}

/// Which summand of `∂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    DeltaSplit,
    DeltaPair,
    DeltaZ,
    ComMod,
    ComAlg,
    LieMod,
    LieAlg,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::DeltaSplit,
        Component::DeltaPair,
        Component::DeltaZ,
        Component::ComMod,
        Component::ComAlg,
        Component::LieMod,
        Component::LieAlg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::DeltaSplit => "delta_split",
            Component::DeltaPair => "delta_pair",
            Component::DeltaZ => "delta_z",
            Component::ComMod => "d_com_mod",
            Component::ComAlg => "d_com_alg",
            Component::LieMod => "d_lie_mod",
            Component::LieAlg => "d_lie_alg",
        }
    }
}

fn raw_nodes(t: &CompositionTree) -> Vec<RawNode> {
    t.com.iter().map(|nd| nd.lie.iter().map(|b| b.letters.clone()).collect()).collect()
}

impl CompositionComplex {
    /// Canonical form of `Γ` with the given nodes; letters must be nonvanishing
    /// normalized monomials.
    pub fn tree(&self, graph: &Graph, com: Vec<ComNode>) -> Result<TreeSum> {
        if graph.r != com.len() {
            return Err(Error::Arity { expected: graph.r, got: com.len() });
        }
        for nd in &com {
            if nd.lie.is_empty() {
                return Err(Error::InvalidGraph("Com* node without blocks".into()));
            }
            for b in &nd.lie {
                if b.letters.is_empty() {
                    return Err(Error::InvalidGraph("Lie* block without letters".into()));
                }
                for m in &b.letters {
                    if m.iter().any(|&v| v as usize >= self.table().len()) {
                        return Err(Error::Index(format!("variable in {m:?}")));
                    }
                    match normalize_word(self.table(), m) {
                        Some((w, false)) if w == *m => {}
                        _ => return Err(Error::InvalidGraph(format!("letter {m:?} is not a normalized monomial"))),
                    }
                }
            }
        }
        let nodes: Vec<RawNode> = com.iter().map(|nd| nd.lie.iter().map(|b| b.letters.clone()).collect()).collect();
        let mut out = TreeSum::zero();
        for (g, c) in self.graphs().sum_of(graph, Q::one())?.terms() {
            self.add_raw(&mut out, g, &nodes, c.clone());
        }
        Ok(out)
    }

    /// Total degree: `Γ` in homological grading, `−n` per Com* cogenerator,
    /// `−1` per Lie* cogenerator, minus the letter degrees. Letters are counted
    /// homologically like decorations, so the bracket lowers degree by `n − 1`
    /// as an edge does and every component of `∂` has degree `+1`.
    pub fn degree(&self, t: &CompositionTree) -> i64 {
        let dv = self.degree_vector(t);
        let letters: i64 = t.com.iter().flat_map(|c| &c.lie).flat_map(|b| &b.letters).map(|m| self.monomial_degree(m)).sum();
        self.graphs().homological_degree(&t.graph) - self.n() * dv.c - dv.l - letters
    }

    pub fn degree_vector(&self, t: &CompositionTree) -> DegreeVector {
        let blocks = t.com.iter().flat_map(|c| &c.lie);
        let r = blocks.clone().map(|b| b.letters.len() as i64).sum();
        let l = blocks.clone().map(|b| b.letters.len() as i64 - 1).sum();
        let deg_o = blocks.flat_map(|b| &b.letters).map(|m| m.len() as i64).sum();
        let c = t.com.iter().map(|nd| nd.lie.len() as i64 - 1).sum();
        let g = &t.graph;
        DegreeVector {
            r,
            l,
            c,
            s: g.s as i64,
            e: g.edges.len() as i64,
            v: g.vertex_count() as i64,
            deg_o,
            deg: self.graphs().degree(g),
        }
    }

    /// Parity of `Γ` and the nodes before `j`.
    fn prefix_odd(&self, t: &CompositionTree, nodes: &[RawNode], j: usize) -> bool {
        nodes[..j].iter().fold(self.graph_odd(&t.graph), |acc, nd| acc ^ self.node_odd(nd))
    }

    fn linear(&self, x: &TreeSum, f: impl Fn(&CompositionTree, &mut TreeSum)) -> TreeSum {
        let mut out = TreeSum::zero();
        for (t, c) in x.terms() {
            let mut part = TreeSum::zero();
            f(t, &mut part);
            for (u, d) in part.terms {
                out.add_canonical(u, d * c);
            }
        }
        out
    }

    /// Adds `c · (Σ_g a_g g, nodes)` for a graph combination.
    fn add_graphs(&self, out: &mut TreeSum, graphs: &GraphSum, nodes: &[RawNode], c: &Q) {
        for (g, a) in graphs.terms() {
            self.add_raw(out, g, nodes, a * c);
        }
    }

    /// Harrison differential: merge adjacent letters of one block.
    pub fn d_lie_alg_tree(&self, t: &CompositionTree, out: &mut TreeSum) {
        let nodes = raw_nodes(t);
        for j in 0..nodes.len() {
            let mut p = self.prefix_odd(t, &nodes, j) ^ self.n_odd();
            for b in 0..nodes[j].len() {
                let block = &nodes[j][b];
                let mut pi = p ^ self.n_odd() ^ true;
                for i in 0..block.len().saturating_sub(1) {
                    let (f, g) = (&block[i], &block[i + 1]);
                    let mut word = f.clone();
                    word.extend_from_slice(g);
                    if let Some((m, neg)) = normalize_word(self.table(), &word) {
                        let mut new_nodes = nodes.clone();
                        let nb = &mut new_nodes[j][b];
                        nb.splice(i..i + 2, [m]);
                        let sign = pi ^ odd(self.monomial_degree(f)) ^ neg;
                        self.add_raw(out, &t.graph, &new_nodes, signed(&Q::one(), sign));
                    }
                    pi ^= self.letter_odd(f);
                }
                p ^= self.block_odd(block);
            }
        }
    }

    /// A one-letter block acts by `{f, ·}` on every letter of another block
    /// of the same node.
    pub fn d_com_alg_tree(&self, t: &CompositionTree, out: &mut TreeSum) {
        let nodes = raw_nodes(t);
        for j in 0..nodes.len() {
            let node = &nodes[j];
            let k = node.len();
            let p = self.prefix_odd(t, &nodes, j) ^ self.n_odd();
            let parity: Vec<bool> = node.iter().map(|b| self.block_odd(b)).collect();
            for a in 0..k {
                if node[a].len() != 1 {
                    continue;
                }
                for b in 0..k {
                    // A pair of one-letter blocks contributes once.
                    if b == a || (node[b].len() == 1 && b < a) {
                        continue;
                    }
                    let mut order = vec![a, b];
                    order.extend((0..k).filter(|&x| x != a && x != b));
                    let sigma = koszul_reorder(&order, &parity);
                    let f = &node[a][0];
                    let f_poly = Poly::term(self.table(), f, Q::one());
                    let mover = odd(self.n() + 1 + self.monomial_degree(f));
                    let mut y = self.n_odd();
                    for i in 0..node[b].len() {
                        let g = &node[b][i];
                        let g_poly = Poly::term(self.table(), g, Q::one());
                        let bracket = self.vars().poisson_bracket(&f_poly, &g_poly).expect("same variable table");
                        // The overall (−1)^{n+1} makes π∘(d^com_mod + d^com_alg) vanish.
                        let sign = sigma ^ p ^ (mover && y) ^ !self.n_odd();
                        for (m, c) in bracket.terms() {
                            let mut target = node[b].clone();
                            target[i] = m.clone();
                            let mut new_node = vec![target];
                            new_node.extend(order[2..].iter().map(|&x| node[x].clone()));
                            let mut new_nodes = nodes.clone();
                            new_nodes[j] = new_node;
                            self.add_raw(out, &t.graph, &new_nodes, signed(c, sign));
                        }
                        y ^= self.letter_odd(g);
                    }
                }
            }
        }
    }

    /// Splits a node into two nonempty groups of blocks joined by an edge.
    pub fn d_com_mod_tree(&self, t: &CompositionTree, out: &mut TreeSum) {
        let nodes = raw_nodes(t);
        let edge = Graph::new(2, 0, vec![(0, 1)], Vec::new());
        let half = qf(1, 2);
        for j in 0..nodes.len() {
            let node = &nodes[j];
            let k = node.len();
            if k < 2 {
                continue;
            }
            let Ok(graphs) = self.graphs().insert::<Q>(&t.graph, j + 1, &edge) else { continue };
            let before = nodes[..j].iter().fold(false, |acc, nd| acc ^ self.node_odd(nd));
            let parity: Vec<bool> = node.iter().map(|b| self.block_odd(b)).collect();
            for mask in 1u32..(1 << k) - 1 {
                let a: Vec<usize> = (0..k).filter(|&x| mask & (1 << x) != 0).collect();
                let b: Vec<usize> = (0..k).filter(|&x| mask & (1 << x) == 0).collect();
                let order: Vec<usize> = a.iter().chain(&b).copied().collect();
                let xa = a.iter().fold(false, |acc, &x| acc ^ parity[x]);
                let sign = koszul_reorder(&order, &parity)
                    ^ self.graph_odd(&t.graph)
                    ^ (self.n_odd() && (before ^ self.n_odd() ^ xa));
                let mut new_nodes: Vec<RawNode> = nodes[..j].to_vec();
                new_nodes.push(a.iter().map(|&x| node[x].clone()).collect());
                new_nodes.push(b.iter().map(|&x| node[x].clone()).collect());
                new_nodes.extend_from_slice(&nodes[j + 1..]);
                self.add_graphs(out, &graphs, &new_nodes, &signed(&half, sign));
            }
        }
    }

    /// Deconcatenates one block `u|v`; the other blocks of the node go with
    /// either half, and the vertex splits into two unconnected vertices.
    pub fn d_lie_mod_tree(&self, t: &CompositionTree, out: &mut TreeSum) {
        let nodes = raw_nodes(t);
        let pair = Graph::empty(2);
        for j in 0..nodes.len() {
            let node = &nodes[j];
            let k = node.len();
            let Ok(graphs) = self.graphs().insert::<Q>(&t.graph, j + 1, &pair) else { continue };
            let before = self.prefix_odd(t, &nodes, j);
            let parity: Vec<bool> = node.iter().map(|b| self.block_odd(b)).collect();
            for a in 0..k {
                let block = &node[a];
                let others: Vec<usize> = (0..k).filter(|&x| x != a).collect();
                for cut in 1..block.len() {
                    let (u, v) = block.split_at(cut);
                    let pu = u.iter().fold(false, |acc, m| acc ^ self.letter_odd(m));
                    let pv = v.iter().fold(false, |acc, m| acc ^ self.letter_odd(m));
                    for mask in 0u32..(1 << others.len()) {
                        let g1: Vec<usize> = (0..others.len()).filter(|&x| mask & (1 << x) != 0).map(|x| others[x]).collect();
                        let g2: Vec<usize> = (0..others.len()).filter(|&x| mask & (1 << x) == 0).map(|x| others[x]).collect();
                        let mut order = vec![a];
                        order.extend(&g1);
                        order.extend(&g2);
                        let p1 = g1.iter().fold(false, |acc, &x| acc ^ parity[x]);
                        let sign = koszul_reorder(&order, &parity) ^ before ^ true ^ pu ^ (!pv && p1);
                        let mut first: RawNode = vec![u.to_vec()];
                        first.extend(g1.iter().map(|&x| node[x].clone()));
                        let mut second: RawNode = vec![v.to_vec()];
                        second.extend(g2.iter().map(|&x| node[x].clone()));
                        let mut new_nodes: Vec<RawNode> = nodes[..j].to_vec();
                        new_nodes.push(first);
                        new_nodes.push(second);
                        new_nodes.extend_from_slice(&nodes[j + 1..]);
                        self.add_graphs(out, &graphs, &new_nodes, &signed(&Q::one(), sign));
                    }
                }
            }
        }
    }

    fn graph_part(&self, t: &CompositionTree, out: &mut TreeSum, op: impl Fn(&GraphSum) -> GraphSum) {
        let single = self.graphs().sum_of(&t.graph, Q::one()).expect("canonical graph");
        self.add_graphs(out, &op(&single), &raw_nodes(t), &Q::one());
    }

    /// `δ_split` with its one-edge-one-vertex leaf terms removed.
    pub fn delta_split_reduced(&self, x: &TreeSum) -> TreeSum {
        let gc = self.graphs();
        self.linear(x, |t, out| self.graph_part(t, out, |g| gc.delta_split_reduced(g)))
    }

    pub fn component_tree(&self, which: Component, t: &CompositionTree, out: &mut TreeSum) {
        let gc = self.graphs();
        match which {
            Component::DeltaSplit => self.graph_part(t, out, |x| gc.delta_split(x)),
            Component::DeltaPair => self.graph_part(t, out, |x| gc.delta_pair(x)),
            Component::DeltaZ => self.graph_part(t, out, |x| gc.bracket(&self.z, x).sub(&gc.leaves(x))),
            Component::ComMod => self.d_com_mod_tree(t, out),
            Component::ComAlg => self.d_com_alg_tree(t, out),
            Component::LieMod => self.d_lie_mod_tree(t, out),
            Component::LieAlg => self.d_lie_alg_tree(t, out),
        }
    }

    pub fn component(&self, which: Component, x: &TreeSum) -> TreeSum {
        self.linear(x, |t, out| self.component_tree(which, t, out))
    }

    pub fn delta_split(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::DeltaSplit, x)
    }

    pub fn delta_pair(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::DeltaPair, x)
    }

    pub fn delta_z(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::DeltaZ, x)
    }

    pub fn d_com_mod(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::ComMod, x)
    }

    pub fn d_com_alg(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::ComAlg, x)
    }

    pub fn d_lie_mod(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::LieMod, x)
    }

    pub fn d_lie_alg(&self, x: &TreeSum) -> TreeSum {
        self.component(Component::LieAlg, x)
    }

    /// `∂ = δ_split + δ_pair + δ^z + d^com_mod + d^com_alg + d^lie_mod + d^lie_alg`.
    pub fn full_differential(&self, x: &TreeSum) -> TreeSum {
        self.linear(x, |t, out| {
            for which in Component::ALL {
                self.component_tree(which, t, out);
            }
        })
    }
}

/// Generators of one sector of `D`: fixed number of nodes and letters, letters
/// of positive weight with bounded total weight, and bounded graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeSector {
    pub nodes: usize,
    pub letters: usize,
    pub max_weight: usize,
    pub max_internal: usize,
    pub max_edges: usize,
    pub max_decorations: usize,
}

/// Compositions of `total` into `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// All compositions of `total` into any number of positive parts.
fn all_compositions(total: usize) -> Vec<Vec<usize>> {
    (1..=total).flat_map(|p| compositions(total, p)).collect()
}

impl CompositionComplex {
    /// Nonvanishing normalized monomials with exactly `w` variables.
    pub fn monomials(&self, w: usize) -> Vec<Monomial> {
        let nv = self.table().len() as u32;
        let mut out = Vec::new();
        let mut cur: Vec<u32> = Vec::new();
        fn rec(tab: &VarTable, nv: u32, w: usize, start: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
            if cur.len() == w {
                if let Some((m, false)) = normalize_word(tab, cur) {
                    if m == *cur {
                        out.push(m);
                    }
                }
                return;
            }
            for v in start..nv {
                cur.push(v);
                rec(tab, nv, w, v, cur, out);
                cur.pop();
            }
        }
        rec(self.table(), nv, w, 0, &mut cur, &mut out);
        out
    }

    /// Letter sequences of length `r` with total weight at most `max_weight`.
    fn letter_sequences(&self, r: usize, max_weight: usize) -> Vec<Vec<Monomial>> {
        let by_weight: Vec<Vec<Monomial>> = (0..=max_weight).map(|w| self.monomials(w)).collect();
        let mut out = Vec::new();
        let mut cur: Vec<Monomial> = Vec::new();
        fn rec(by_weight: &[Vec<Monomial>], r: usize, budget: usize, cur: &mut Vec<Monomial>, out: &mut Vec<Vec<Monomial>>) {
            if cur.len() == r {
                out.push(cur.clone());
                return;
            }
            for w in 1..=budget {
                for m in &by_weight[w] {
                    cur.push(m.clone());
                    rec(by_weight, r, budget - w, cur, out);
                    cur.pop();
                }
            }
        }
        rec(&by_weight, r, max_weight, &mut cur, &mut out);
        out
    }

    /// Canonical generators of a sector. They span it but are words in the
    /// tensor coalgebra, so ranks must be taken in these coordinates.
    pub fn sector_trees(&self, sector: &TreeSector) -> Vec<TreeSum> {
        let graphs = self.graphs().enumerate(sector.nodes, sector.max_internal, sector.max_edges, sector.max_decorations);
        let sequences = self.letter_sequences(sector.letters, sector.max_weight);
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for node_sizes in compositions(sector.letters, sector.nodes) {
            let block_shapes: Vec<Vec<Vec<usize>>> = node_sizes.iter().map(|&s| all_compositions(s)).collect();
            let mut shapes: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
            for choices in &block_shapes {
                shapes = shapes
                    .into_iter()
                    .flat_map(|p| {
                        choices.iter().map(move |c| {
                            let mut p = p.clone();
                            p.push(c.clone());
                            p
                        })
                    })
                    .collect();
            }
            for shape in &shapes {
                for seq in &sequences {
                    let mut it = seq.iter();
                    let nodes: Vec<RawNode> = shape
                        .iter()
                        .map(|blocks| blocks.iter().map(|&len| it.by_ref().take(len).cloned().collect()).collect())
                        .collect();
                    for g in &graphs {
                        let mut x = TreeSum::zero();
                        self.add_raw(&mut x, g, &nodes, Q::one());
                        if x.is_zero() {
                            continue;
                        }
                        let key: Vec<(CompositionTree, Q)> = x.terms().iter().map(|(t, c)| (t.clone(), c.clone())).collect();
                        if seen.insert(key) {
                            out.push(x);
                        }
                    }
                }
            }
        }
        out
    }

    /// Counit of the bar-cobar resolution followed by `φ`: trivial trees go
    /// to `φ(Γ ⊗ f₁ ⊗ … ⊗ f_r)`, all others to zero.
    pub fn project_tree(&self, t: &CompositionTree) -> Result<Poly<Q>> {
        let s = self.eval.s_algebra();
        if !t.is_trivial() {
            return Ok(s.zero());
        }
        let letters: Vec<Poly<Q>> = t.com.iter().map(|nd| Poly::term(self.table(), &nd.lie[0].letters[0], Q::one())).collect();
        self.eval.phi(&t.graph, &letters)
    }

    pub fn project_to_codomain(&self, x: &TreeSum) -> Result<Poly<Q>> {
        let mut out = self.eval.s_algebra().zero();
        for (t, c) in x.terms() {
            out = out.add(&self.project_tree(t)?.scale(c))?;
        }
        Ok(out)
    }

    /// `{Γ⊗f_I, Σ⊗f_J} = {Γ,Σ}_G ⊗ f_I f_J`, Koszul sign for moving `Σ` past `f_I`.
    pub fn bracket(&self, x: &TreeSum, y: &TreeSum) -> TreeSum {
        let gc = self.graphs();
        let mut out = TreeSum::zero();
        for (a, ca) in x.terms() {
            let na = raw_nodes(a);
            let pa = na.iter().fold(false, |acc, nd| acc ^ self.node_odd(nd));
            let ga = gc.sum_of(&a.graph, Q::one()).expect("canonical graph");
            for (b, cb) in y.terms() {
                let nb = raw_nodes(b);
                let gb = gc.sum_of(&b.graph, Q::one()).expect("canonical graph");
                let mut nodes = na.clone();
                nodes.extend(nb);
                let sign = pa && self.graph_odd(&b.graph);
                self.add_graphs(&mut out, &gc.bracket(&ga, &gb), &nodes, &signed(&(ca * cb), sign));
            }
        }
        out
    }

    fn render_monomial(&self, m: &[u32]) -> String {
        if m.is_empty() {
            "1".into()
        } else {
            m.iter().map(|&v| self.table().name(v)).collect::<Vec<_>>().join("*")
        }
    }

    pub fn tree_to_json(&self, t: &CompositionTree) -> Value {
        let com: Vec<Value> = t
            .com
            .iter()
            .map(|nd| {
                let lie: Vec<Value> = nd
                    .lie
                    .iter()
                    .map(|b| json!({"polys": b.letters.iter().map(|m| self.render_monomial(m)).collect::<Vec<_>>()}))
                    .collect();
                json!({ "lie_nodes": lie })
            })
            .collect();
        json!({"graph": self.graphs().graph_to_json(&t.graph), "com_nodes": com})
    }

    /// Reads a tree; each entry of `polys` may be any polynomial and is
    /// expanded multilinearly.
    pub fn tree_from_json(&self, v: &Value) -> Result<TreeSum> {
        let err = |m: &str| Error::Parse(format!("tree JSON: {m}"));
        let (graph, neg) = self.graphs().graph_from_json(v.get("graph").ok_or_else(|| err("missing graph"))?)?;
        let nodes_json = v.get("com_nodes").and_then(Value::as_array).ok_or_else(|| err("missing com_nodes"))?;
        if nodes_json.len() != graph.r {
            return Err(Error::Arity { expected: graph.r, got: nodes_json.len() });
        }
        // Each node expands into a combination of raw nodes.
        let mut expansions: Vec<(Vec<RawNode>, Q)> = vec![(Vec::new(), signed(&Q::one(), neg))];
        for nd in nodes_json {
            let blocks = nd.get("lie_nodes").and_then(Value::as_array).ok_or_else(|| err("missing lie_nodes"))?;
            if blocks.is_empty() {
                return Err(err("Com* node without blocks"));
            }
            let mut node_exp: Vec<(RawNode, Q)> = vec![(Vec::new(), Q::one())];
            for b in blocks {
                let polys = b.get("polys").and_then(Value::as_array).ok_or_else(|| err("missing polys"))?;
                if polys.is_empty() {
                    return Err(err("Lie* block without letters"));
                }
                let mut block_exp: Vec<(Vec<Monomial>, Q)> = vec![(Vec::new(), Q::one())];
                for p in polys {
                    let text = p.as_str().ok_or_else(|| err("polynomial must be a string"))?;
                    let poly: Poly<Q> = Poly::parse(self.table(), text)?;
                    let mut next = Vec::new();
                    for (w, c) in &block_exp {
                        for (m, d) in poly.terms() {
                            let mut w = w.clone();
                            w.push(m.clone());
                            next.push((w, c * d));
                        }
                    }
                    block_exp = next;
                }
                let mut next = Vec::new();
                for (nd, c) in &node_exp {
                    for (w, d) in &block_exp {
                        let mut nd = nd.clone();
                        nd.push(w.clone());
                        next.push((nd, c * d));
                    }
                }
                node_exp = next;
            }
            let mut next = Vec::new();
            for (ns, c) in &expansions {
                for (nd, d) in &node_exp {
                    let mut ns = ns.clone();
                    ns.push(nd.clone());
                    next.push((ns, c * d));
                }
            }
            expansions = next;
        }
        let mut out = TreeSum::zero();
        for (g, gcoef) in self.graphs().sum_of(&graph, Q::one())?.terms() {
            for (nodes, c) in &expansions {
                self.add_raw(&mut out, g, nodes, c * gcoef);
            }
        }
        Ok(out)
    }

    pub fn sum_to_json(&self, x: &TreeSum) -> Value {
        Value::Array(
            x.terms()
                .iter()
                .map(|(t, c)| json!({"coefficient": crate::scalars::format_q(c), "tree": self.tree_to_json(t)}))
                .collect(),
        )
    }
}

/// One generated term of one component of `∂` and how it moves the degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct Displacement {
    pub component: Component,
    pub term: CompositionTree,
    pub coefficient: Q,
    /// Change of `(deg¹, deg², deg³, deg⁴)`.
    pub shift: [i64; 4],
    /// Change of the total degree.
    pub degree: i64,
}

impl CompositionComplex {
    /// Every term of every component of `∂t`, with its degree displacement.
    pub fn displacements(&self, t: &CompositionTree) -> Vec<Displacement> {
        let n = self.n();
        let before = self.degree_vector(t).filtration(n);
        let deg = self.degree(t);
        let mut out = Vec::new();
        for which in Component::ALL {
            let mut image = TreeSum::zero();
            self.component_tree(which, t, &mut image);
            for (u, c) in image.terms {
                let after = self.degree_vector(&u).filtration(n);
                out.push(Displacement {
                    component: which,
                    shift: [0, 1, 2, 3].map(|i| after[i] - before[i]),
                    degree: self.degree(&u) - deg,
                    term: u,
                    coefficient: c,
                });
            }
        }
        out
    }
}

/// `t` with leaf `j` replaced by `[j, j+1]` and later leaves shifted up.
fn graft_bracket(t: &Tree, j: usize) -> Tree {
    match t {
        Tree::Leaf(x) if *x == j => Tree::node(Tree::Leaf(j), Tree::Leaf(j + 1)),
        Tree::Leaf(x) if *x > j => Tree::Leaf(x + 1),
        Tree::Leaf(x) => Tree::Leaf(*x),
        Tree::Node(a, b) => Tree::node(graft_bracket(a, j), graft_bracket(b, j)),
    }
}

/// Branch points of `t` preceding leaf `j` in infix order, or `None` if `j` is absent.
fn brackets_before(t: &Tree, j: usize) -> Option<usize> {
    fn rec(t: &Tree, j: usize, seen: &mut usize) -> bool {
        match t {
            Tree::Leaf(x) => *x == j,
            Tree::Node(a, b) => {
                if rec(a, j, seen) {
                    return true;
                }
                *seen += 1;
                rec(b, j, seen)
            }
        }
    }
    let mut seen = 0;
    rec(t, j, &mut seen).then_some(seen)
}

impl CompositionComplex {
    /// `ι ∘ id` on an undecorated forest whose leaf `j` carries the letters `nodes[j]`.
    pub fn include_forest(&self, ls: &LSModel, f: &ForestTerm, nodes: &[Vec<Monomial>]) -> Result<TreeSum> {
        if nodes.len() != f.k {
            return Err(Error::Arity { expected: f.k, got: nodes.len() });
        }
        let unit = self.graphs().algebra().unit();
        if f.trees.iter().any(|&(_, cls)| cls != unit) {
            return Err(Error::InvalidGraph("the Koszul-twisted complex uses undecorated forests".into()));
        }
        let graphs = ls.include_forest_into_graphs(self.graphs(), &ForestElement::from_term(f.clone(), Q::one()))?;
        let raw: Vec<RawNode> = nodes.iter().map(|nd| nd.iter().map(|m| vec![m.clone()]).collect()).collect();
        let mut out = TreeSum::zero();
        self.add_graphs(&mut out, &graphs, &raw, &Q::one());
        Ok(out)
    }

    /// The twisting differential `d_κ` on `F ∘ Com*[n] ∘ V`: split one node and
    /// compose the forest with the bracket `[j, j+1]` at that leaf. The new
    /// bracket sits at the leaf's infix position, which is the Koszul sign of
    /// the operadic composition in `Lie[n−1]`.
    pub fn d_kappa(&self, f: &ForestTerm, nodes: &[Vec<Monomial>]) -> Vec<(ForestTerm, Vec<Vec<Monomial>>, Q)> {
        let bracket_odd = !self.n_odd();
        let blocks = |nd: &[Monomial]| -> Vec<Vec<Monomial>> { nd.iter().map(|m| vec![m.clone()]).collect() };
        let mut out = Vec::new();
        let half = qf(1, 2);
        for j in 0..nodes.len() {
            let node = &nodes[j];
            let k = node.len();
            if k < 2 {
                continue;
            }
            let mut before = 0usize;
            let mut tree_index = None;
            for (ti, (t, _)) in f.trees.iter().enumerate() {
                if let Some(b) = brackets_before(t, j) {
                    before += b;
                    tree_index = Some(ti);
                    break;
                }
                before += t.node_count();
            }
            if tree_index.is_none() {
                continue;
            }
            let trees: Vec<(Tree, usize)> = f.trees.iter().map(|(t, c)| (graft_bracket(t, j), *c)).collect();
            let forest = ForestTerm::new(f.k + 1, trees);
            let earlier = nodes[..j].iter().fold(false, |acc, nd| acc ^ self.node_odd(&blocks(nd)));
            let parity: Vec<bool> = node.iter().map(|m| self.block_odd(std::slice::from_ref(m))).collect();
            for mask in 1u32..(1 << k) - 1 {
                let a: Vec<usize> = (0..k).filter(|&x| mask & (1 << x) != 0).collect();
                let b: Vec<usize> = (0..k).filter(|&x| mask & (1 << x) == 0).collect();
                let order: Vec<usize> = a.iter().chain(&b).copied().collect();
                let xa = a.iter().fold(false, |acc, &x| acc ^ parity[x]);
                let sign = koszul_reorder(&order, &parity)
                    ^ (bracket_odd && before % 2 == 1)
                    ^ (self.n_odd() && (earlier ^ self.n_odd() ^ xa));
                let mut new_nodes: Vec<Vec<Monomial>> = nodes[..j].to_vec();
                new_nodes.push(a.iter().map(|&x| node[x].clone()).collect());
                new_nodes.push(b.iter().map(|&x| node[x].clone()).collect());
                new_nodes.extend_from_slice(&nodes[j + 1..]);
                out.push((forest.clone(), new_nodes, signed(&half, sign)));
            }
        }
        out
    }

    /// Both sides of `(ι∘id) d_κ = d^com_mod (ι∘id)`.
    pub fn isomod_sides(&self, ls: &LSModel, f: &ForestTerm, nodes: &[Vec<Monomial>]) -> Result<(TreeSum, TreeSum)> {
        let mut lhs = TreeSum::zero();
        for (g, nd, c) in self.d_kappa(f, nodes) {
            lhs = lhs.add(&self.include_forest(ls, &g, &nd)?.scale(&c));
        }
        let rhs = self.d_com_mod(&self.include_forest(ls, f, nodes)?);
        Ok((lhs, rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn sphere(n: i64, big_n: usize) -> CompositionComplex {
        CompositionComplex::new(big_n, Arc::new(PDAlgebra::sphere(n))).unwrap()
    }

    fn torus() -> CompositionComplex {
        CompositionComplex::new(1, Arc::new(PDAlgebra::torus())).unwrap()
    }

    fn x(d: &CompositionComplex, i: usize) -> Monomial {
        vec![d.vars().x(i)]
    }

    fn p(d: &CompositionComplex, i: usize) -> Monomial {
        vec![d.vars().p(i)]
    }

    fn edge() -> Graph {
        Graph::new(2, 0, vec![(0, 1)], Vec::new())
    }

    fn tree(d: &CompositionComplex, g: &Graph, nodes: Vec<Vec<Vec<Monomial>>>) -> TreeSum {
        let com = nodes.into_iter().map(|nd| ComNode::new(nd.into_iter().map(LieWord::new).collect())).collect();
        d.tree(g, com).unwrap()
    }

    /// No vertex carries two decorations that pair nontrivially.
    fn clean(d: &CompositionComplex, g: &Graph) -> bool {
        let alg = d.graphs().algebra();
        g.decorations
            .iter()
            .enumerate()
            .all(|(i, &(u, a))| g.decorations[..i].iter().all(|&(v, b)| v != u || alg.pair(b, a).is_zero()))
    }

    struct Fixture {
        complexes: Vec<CompositionComplex>,
        generators: Vec<Vec<TreeSum>>,
    }

    /// S² with N = 2, S³ and T² with N = 1; small sectors, T² restricted to clean trees.
    fn fixture() -> &'static Fixture {
        static FX: OnceLock<Fixture> = OnceLock::new();
        FX.get_or_init(|| {
            let complexes = vec![sphere(2, 2), sphere(3, 1), torus()];
            let generators = complexes
                .iter()
                .map(|d| {
                    let weight = if d.vars().big_n() == 2 { 2 } else { 3 };
                    let mut all = Vec::new();
                    for nodes in 0..=2 {
                        for letters in nodes.max(1)..=3 {
                            if nodes == 0 && letters > 0 {
                                continue;
                            }
                            let sector = TreeSector {
                                nodes,
                                letters,
                                max_weight: weight,
                                max_internal: 1,
                                max_edges: 2,
                                max_decorations: 2,
                            };
                            all.extend(d.sector_trees(&sector));
                        }
                    }
                    all.retain(|x| x.terms().keys().all(|t| clean(d, &t.graph)));
                    all
                })
                .collect();
            Fixture { complexes, generators }
        })
    }

    #[test]
    fn degree_vector_examples() {
        let d = sphere(2, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)]]]);
        let dv = d.degree_vector(t.terms().keys().next().unwrap());
        assert_eq!((dv.r, dv.l, dv.deg_o, dv.deg1()), (1, 0, 1, 0));
        let t = tree(&d, &edge(), vec![vec![vec![x(&d, 1)]], vec![vec![p(&d, 1)]]]);
        let dv = d.degree_vector(t.terms().keys().next().unwrap());
        assert_eq!(dv.deg2(), 1 - 2);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)], vec![p(&d, 1)], vec![x(&d, 1), x(&d, 1)]]]);
        let dv = d.degree_vector(t.terms().keys().next().unwrap());
        assert_eq!((dv.c, dv.deg4()), (2, -2));
    }

    #[test]
    fn lie_normal_form_is_a_projection_killing_shuffles() {
        for d in [sphere(2, 1), sphere(3, 1)] {
            let letters = [x(&d, 1), p(&d, 1), vec![d.vars().x(1), d.vars().p(1)]];
            for a in &letters {
                for b in &letters {
                    for c in &letters {
                        let w = vec![a.clone(), b.clone(), c.clone()];
                        let e = d.lie_normal_form(&w);
                        let mut again: BTreeMap<Vec<Monomial>, Q> = BTreeMap::new();
                        for (u, cu) in &e {
                            for (v, cv) in d.lie_normal_form(u) {
                                *again.entry(v).or_insert_with(Q::zero) += cu * cv;
                            }
                        }
                        again.retain(|_, c| !c.is_zero());
                        assert_eq!(again, e);
                        // a ш (b|c) is a nontrivial shuffle.
                        let mut sh: BTreeMap<Vec<Monomial>, Q> = BTreeMap::new();
                        for (u, neg) in d.shuffle(&[&w[..1], &w[1..]]) {
                            for (v, cv) in d.lie_normal_form(&u) {
                                *sh.entry(v).or_insert_with(Q::zero) += signed(&cv, neg);
                            }
                        }
                        assert!(sh.values().all(|c| c.is_zero()));
                    }
                }
            }
        }
    }

    #[test]
    fn d_lie_alg_merges_adjacent_letters() {
        // n = 3: [x|p] ≡ ½[x|p] + ½[p|x]; both merges carry the sign of the
        // odd prefix C C̄ Λ, so the image is −(x p).
        let d = sphere(3, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1), p(&d, 1)]]]);
        let want = tree(&d, &Graph::empty(1), vec![vec![vec![vec![d.vars().x(1), d.vars().p(1)]]]]).neg();
        assert_eq!(d.d_lie_alg(&t), want);
        let one = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)]]]);
        assert!(d.d_lie_alg(&one).is_zero());
    }

    #[test]
    fn d_com_mod_splits_a_node_along_an_edge() {
        let d = sphere(2, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)], vec![p(&d, 1)]]]);
        let want = tree(&d, &edge(), vec![vec![vec![x(&d, 1)]], vec![vec![p(&d, 1)]]]);
        assert_eq!(d.d_com_mod(&t), want);
        let one = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1), p(&d, 1)]]]);
        assert!(d.d_com_mod(&one).is_zero());
    }

    #[test]
    fn d_com_alg_brackets_and_raises_deg1() {
        // n = 2: {x, p} = 1 and the overall sign is −1.
        let d = sphere(2, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)], vec![p(&d, 1)]]]);
        let want = tree(&d, &Graph::empty(1), vec![vec![vec![Vec::new()]]]).neg();
        assert_eq!(d.d_com_alg(&t), want);
        let t0 = t.terms().keys().next().unwrap();
        for dsp in d.displacements(t0).iter().filter(|x| x.component == Component::ComAlg) {
            assert_eq!(dsp.shift[0], 1);
        }
    }

    #[test]
    fn d_lie_mod_deconcatenates_and_raises_deg1() {
        let d = sphere(3, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1), p(&d, 1)]]]);
        let want = tree(&d, &Graph::empty(2), vec![vec![vec![x(&d, 1)]], vec![vec![p(&d, 1)]]]);
        assert_eq!(d.d_lie_mod(&t), want);
        let t0 = t.terms().keys().next().unwrap();
        let moved: Vec<_> = d.displacements(t0).into_iter().filter(|x| x.component == Component::LieMod).collect();
        assert!(!moved.is_empty() && moved.iter().all(|x| x.shift[0] == 1));
    }

    #[test]
    fn twisting_terms_vanish_without_splittable_nodes() {
        let d = sphere(2, 1);
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)]]]);
        for c in [Component::ComMod, Component::ComAlg, Component::LieMod, Component::LieAlg] {
            assert!(d.component(c, &t).is_zero());
        }
        let empty = tree(&d, &Graph::empty(0), Vec::new());
        assert_eq!(empty.len(), 1);
        assert!(d.full_differential(&empty).is_zero());
    }

    #[test]
    fn components_anticommute() {
        let fx = fixture();
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            for x in gens {
                let images: Vec<TreeSum> = Component::ALL.iter().map(|&c| d.component(c, x)).collect();
                for (i, &a) in Component::ALL.iter().enumerate() {
                    for (j, &b) in Component::ALL.iter().enumerate().skip(i) {
                        let ab = d.component(a, &images[j]);
                        let v = if i == j { ab } else { ab.add(&d.component(b, &images[i])) };
                        // δ_split and the leaf part of δ^z only cancel together.
                        let split_pair = matches!((a, b), (Component::DeltaSplit, Component::DeltaZ) | (Component::DeltaZ, Component::DeltaZ));
                        assert!(split_pair || v.is_zero(), "{} {} on {}", a.name(), b.name(), d.sum_to_json(x));
                    }
                }
            }
        }
    }

    #[test]
    fn differential_squares_to_zero() {
        let fx = fixture();
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            assert!(gens.len() > 100);
            for x in gens {
                let dx = d.full_differential(x);
                assert!(d.full_differential(&dx).is_zero(), "{}", d.sum_to_json(x));
                assert!(dx.terms().keys().all(|t| clean(d, &t.graph)));
            }
        }
    }

    #[test]
    fn torus_defect_sits_on_pairable_vertices() {
        let d = torus();
        let sector = TreeSector { nodes: 1, letters: 2, max_weight: 2, max_internal: 1, max_edges: 2, max_decorations: 2 };
        let bad: Vec<TreeSum> =
            d.sector_trees(&sector).into_iter().filter(|x| !d.full_differential(&d.full_differential(x)).is_zero()).collect();
        assert!(!bad.is_empty());
        assert!(bad.iter().all(|x| x.terms().keys().any(|t| !clean(&d, &t.graph))));
    }

    #[test]
    fn displacement_audit() {
        use Component::*;
        let fx = fixture();
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            for x in gens {
                for t in x.terms().keys() {
                    for m in d.displacements(t) {
                        let [d1, d2, d3, d4] = m.shift;
                        assert_eq!(m.degree, 1, "{:?}", m.component);
                        assert_eq!(d1, i64::from(matches!(m.component, ComAlg | LieMod)), "{:?}", m.component);
                        if d1 != 0 {
                            continue;
                        }
                        assert!(d2 >= 0);
                        if m.component == DeltaPair {
                            assert!(d2 > 0);
                        }
                        if d2 != 0 {
                            continue;
                        }
                        assert!(d3 >= 0);
                        if matches!(m.component, DeltaSplit | ComMod | LieAlg | DeltaZ) {
                            assert_eq!(d3, 0, "{:?}", m.component);
                        }
                        if d3 != 0 {
                            continue;
                        }
                        assert!(d4 >= 0);
                        match m.component {
                            DeltaSplit | LieAlg => assert_eq!(d4, 0),
                            ComMod => assert_eq!(d4, 1),
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn leaf_terms_of_split_and_z_cancel() {
        let fx = fixture();
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            let gc = d.graphs();
            for x in gens {
                for t in x.terms().keys() {
                    let both = d.delta_split(&d.tree(&t.graph, t.com.clone()).unwrap()).add(&d.delta_z(&d.tree(&t.graph, t.com.clone()).unwrap()));
                    let mut reduced = TreeSum::zero();
                    let single = gc.sum_of(&t.graph, Q::one()).unwrap();
                    d.add_graphs(&mut reduced, &gc.delta_split_reduced(&single), &raw_nodes(t), &Q::one());
                    assert_eq!(both, reduced);
                }
            }
        }
    }

    #[test]
    fn operators_are_well_defined_on_shuffle_classes() {
        for d in [sphere(2, 1), sphere(3, 1)] {
            let (xm, pm) = (x(&d, 1), p(&d, 1));
            let xp = vec![d.vars().x(1), d.vars().p(1)];
            let words = [vec![xm.clone(), pm.clone()], vec![pm.clone(), xp.clone(), xm.clone()], vec![xm.clone(), xm.clone(), pm.clone()]];
            for w in &words {
                for g in [Graph::empty(1), Graph::new(1, 1, vec![(0, 1)], Vec::new())] {
                    let raw = CompositionTree::new(g.clone(), vec![ComNode::new(vec![LieWord::new(w.clone()), LieWord::new(vec![pm.clone()])])]);
                    let canon = d.tree(&raw.graph, raw.com.clone()).unwrap();
                    for c in Component::ALL {
                        let mut direct = TreeSum::zero();
                        d.component_tree(c, &raw, &mut direct);
                        assert_eq!(direct, d.component(c, &canon), "{}", c.name());
                    }
                }
            }
        }
    }

    #[test]
    fn canonical_form_is_invariant_under_relabeling() {
        let d = sphere(3, 1);
        let (xm, pm) = (x(&d, 1), p(&d, 1));
        let g = Graph::new(2, 1, vec![(0, 2), (2, 1)], vec![(0, 1)]);
        let nodes: Vec<RawNode> = vec![vec![vec![xm.clone(), pm.clone()]], vec![vec![pm.clone()], vec![xm.clone()]]];
        let canon_g = d.graphs().sum_of(&g, Q::one()).unwrap();
        let mut a = TreeSum::zero();
        d.add_graphs(&mut a, &canon_g, &nodes, &Q::one());
        // Swap the two external vertices together with their nodes.
        let (h, neg) = d.graphs().relabel_external(canon_g.terms().keys().next().unwrap(), &[1, 0]).unwrap();
        let sign = neg ^ (d.node_odd(&nodes[0]) && d.node_odd(&nodes[1]));
        let c = signed(canon_g.terms().values().next().unwrap(), sign);
        let mut b = TreeSum::zero();
        d.add_raw(&mut b, &h, &[nodes[1].clone(), nodes[0].clone()], c);
        assert_eq!(a, b);
    }

    #[test]
    fn projection_is_a_chain_map() {
        let fx = fixture();
        let mut checked = 0;
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            for x in gens {
                if !x.terms().keys().all(|t| d.eval_map().in_chain_map_domain(&t.graph)) {
                    continue;
                }
                let lhs = d.project_to_codomain(&d.full_differential(x)).unwrap();
                let rhs = d.eval_map().s_algebra().delta(&d.project_to_codomain(x).unwrap()).unwrap();
                assert_eq!(lhs, rhs, "{}", d.sum_to_json(x));
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn projection_examples() {
        let d = sphere(2, 1);
        let t = tree(&d, &edge(), vec![vec![vec![x(&d, 1)]], vec![vec![p(&d, 1)]]]);
        let f = [Poly::var(d.table(), d.vars().x(1)), Poly::var(d.table(), d.vars().p(1))];
        assert_eq!(d.project_to_codomain(&t).unwrap(), d.eval_map().phi(&edge(), &f).unwrap());
        let t = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)], vec![p(&d, 1)]]]);
        assert!(d.project_to_codomain(&t).unwrap().is_zero());
    }

    #[test]
    fn bracket_is_respected_by_projection() {
        for d in [sphere(2, 1), sphere(3, 1), torus()] {
            let letters = [x(&d, 1), p(&d, 1), vec![d.vars().x(1), d.vars().p(1)]];
            let graphs: Vec<Graph> = (1..=2)
                .flat_map(|r| d.graphs().enumerate(r, 0, 1, 1))
                .filter(|g| d.eval_map().in_chain_map_domain(g))
                .collect();
            for a in &graphs {
                for b in &graphs {
                    let na: Vec<Vec<Vec<Monomial>>> = (0..a.r).map(|i| vec![vec![letters[i % 3].clone()]]).collect();
                    let nb: Vec<Vec<Vec<Monomial>>> = (0..b.r).map(|i| vec![vec![letters[(i + 1) % 3].clone()]]).collect();
                    let (ta, tb) = (tree(&d, a, na), tree(&d, b, nb));
                    let lhs = d.project_to_codomain(&d.bracket(&ta, &tb)).unwrap();
                    let (fa, fb) = (d.project_to_codomain(&ta).unwrap(), d.project_to_codomain(&tb).unwrap());
                    assert_eq!(lhs, d.eval_map().s_algebra().bracket(&fa, &fb).unwrap());
                }
            }
        }
    }

    #[test]
    fn isomod_identity_at_small_arity() {
        for n in [2, 3] {
            let alg = Arc::new(PDAlgebra::sphere(n));
            let d = CompositionComplex::new(2, alg.clone()).unwrap();
            let ls = LSModel::new(alg.clone());
            let u = alg.unit();
            let leaf = Tree::Leaf;
            let forests = vec![
                ForestTerm::singletons(2, &alg),
                ForestTerm::new(2, vec![(Tree::node(leaf(0), leaf(1)), u)]),
                ForestTerm::singletons(3, &alg),
                ForestTerm::new(3, vec![(Tree::node(Tree::node(leaf(0), leaf(1)), leaf(2)), u)]),
                ForestTerm::new(3, vec![(Tree::node(leaf(0), Tree::node(leaf(1), leaf(2))), u)]),
                ForestTerm::new(3, vec![(leaf(0), u), (Tree::node(leaf(1), leaf(2)), u)]),
                ForestTerm::new(3, vec![(Tree::node(leaf(0), leaf(2)), u), (leaf(1), u)]),
            ];
            let v = [x(&d, 1), p(&d, 1), x(&d, 2), p(&d, 2)];
            let mut nonzero = 0;
            for f in &forests {
                for j in 0..f.k {
                    for split in [vec![0, 1], vec![1, 2], vec![0, 2, 3]] {
                        let mut nodes: Vec<Vec<Monomial>> = (0..f.k).map(|i| vec![v[(i + 1) % 4].clone()]).collect();
                        nodes[j] = split.iter().map(|&s| v[s].clone()).collect();
                        let (lhs, rhs) = d.isomod_sides(&ls, f, &nodes).unwrap();
                        assert_eq!(lhs, rhs, "n={n} {f:?} j={j}");
                        nonzero += usize::from(!lhs.is_zero());
                    }
                }
            }
            assert!(nonzero > 20);
        }
    }

    #[test]
    fn json_round_trip_and_polynomial_expansion() {
        let fx = fixture();
        for (d, gens) in fx.complexes.iter().zip(&fx.generators) {
            for x in gens.iter().take(200) {
                // Single word-coordinate terms are not shuffle-class representatives;
                // the whole sum is, and reading it back must reproduce it.
                let mut back = TreeSum::zero();
                for (t, c) in x.terms() {
                    back = back.add(&d.tree_from_json(&d.tree_to_json(t)).unwrap().scale(c));
                }
                assert_eq!(&back, x);
            }
        }
        let d = sphere(2, 1);
        let v = json!({"graph": {"arity": 1}, "com_nodes": [{"lie_nodes": [{"polys": ["x1 + 2*p1"]}]}]});
        let want = tree(&d, &Graph::empty(1), vec![vec![vec![x(&d, 1)]]])
            .add(&tree(&d, &Graph::empty(1), vec![vec![vec![p(&d, 1)]]]).scale(&q(2)));
        assert_eq!(d.tree_from_json(&v).unwrap(), want);
    }

    #[test]
    fn invalid_trees_are_rejected() {
        let d = sphere(2, 1);
        assert!(matches!(d.tree(&Graph::empty(2), vec![ComNode::singletons(vec![x(&d, 1)])]), Err(Error::Arity { .. })));
        assert!(d.tree(&Graph::empty(1), vec![ComNode::new(Vec::new())]).is_err());
        assert!(d.tree(&Graph::empty(1), vec![ComNode::new(vec![LieWord::new(Vec::new())])]).is_err());
        let unsorted = vec![d.vars().p(1), d.vars().x(1)];
        assert!(d.tree(&Graph::empty(1), vec![ComNode::singletons(vec![unsorted])]).is_err());
        let z = d.graphs().sum_of(&Graph::new(0, 1, Vec::new(), vec![(0, 1)]), Q::one()).unwrap();
        assert!(sphere(2, 1).with_partition_function(z).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_trees_square_to_zero(which in 0usize..3, pick in any::<prop::sample::Index>()) {
            let fx = fixture();
            let (d, gens) = (&fx.complexes[which], &fx.generators[which]);
            let x = pick.get(gens);
            prop_assert!(d.full_differential(&d.full_differential(x)).is_zero());
        }

        #[test]
        fn degree_is_raised_by_one(which in 0usize..3, pick in any::<prop::sample::Index>()) {
            let fx = fixture();
            let (d, gens) = (&fx.complexes[which], &fx.generators[which]);
            for t in pick.get(gens).terms().keys() {
                let deg = d.degree(t);
                for u in d.full_differential(&d.tree(&t.graph, t.com.clone()).unwrap()).terms().keys() {
                    prop_assert_eq!(d.degree(u), deg + 1);
                }
            }
        }

        #[test]
        fn degree_vector_is_stable_under_canonicalization(which in 0usize..3, pick in any::<prop::sample::Index>()) {
            let fx = fixture();
            let (d, gens) = (&fx.complexes[which], &fx.generators[which]);
            for t in pick.get(gens).terms().keys() {
                for u in d.tree(&t.graph, t.com.clone()).unwrap().terms().keys() {
                    prop_assert_eq!(d.degree_vector(u), d.degree_vector(t));
                    prop_assert_eq!(d.degree(u), d.degree(t));
                }
            }
        }
    }
}
