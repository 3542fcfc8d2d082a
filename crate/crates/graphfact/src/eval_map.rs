//! The algebra `S = Sym(H ⊗ V)` of decorated polynomials, its BV operator
//! `Δ`, and the evaluation map `φ` from decorated graphs tensored with
//! polynomials into `S`.
//!
//! `S` has one variable `α⊗y` for every basis class `α` of `H` and every
//! coordinate `y ∈ {x_i, p_i}`, of degree `|α| + |y|`. An undecorated
//! coordinate `y` of a polynomial is read as `1⊗y`.
//!
//! A graph acts on a tensor `f₁ ⊗ … ⊗ f_r` through its word, rightmost token
//! first. An edge `E(u,v)` acts by `Σ_k {y_k, ỹ_k} ∂_{y_k,(u)} ∂_{ỹ_k,(v)}`,
//! which makes `μ ∘ E(1,2)` the Poisson bracket of `O`. A decoration
//! `D(u,α)` differentiates the factor at `u` by a coordinate `z` and puts
//! `α⊗z̃` (n odd) or `α⊗z` (n even) in front; the operator then has the same
//! parity as the token.

use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::graded_poly::VariableSet;
use crate::graph_complex::{Graph, GraphComplex, GraphSum, SectorBound};
use crate::pd_algebra::PDAlgebra;
use crate::poly::{normalize_word, Monomial, Poly, VarTable};
use crate::scalars::{q, qf, Coeff, Q};

pub type DecoratedPolynomial<C = Q> = Poly<C>;

/// `S` together with `Δ` and the bracket `{,}_S` derived from it.
#[derive(Clone, Debug)]
pub struct SAlgebra {
    vars: VariableSet,
    alg: Arc<PDAlgebra>,
    table: Arc<VarTable>,
}

impl SAlgebra {
    pub fn new(vars: VariableSet, alg: Arc<PDAlgebra>) -> Result<Self> {
        if vars.n() != alg.n() {
            return Err(Error::InvalidAlgebra(format!(
                "polynomial dimension n = {} but algebra has n = {}",
                vars.n(),
                alg.n()
            )));
        }
        let base = vars.table();
        let mut names = Vec::new();
        let mut degrees = Vec::new();
        for a in 0..alg.dim() {
            for y in 0..base.len() as u32 {
                names.push(format!("{}[{}]", base.name(y), alg.name(a)));
                degrees.push(base.degree(y) + alg.degree(a));
            }
        }
        Ok(SAlgebra { table: VarTable::new(names, degrees), vars, alg })
    }

    pub fn vars(&self) -> &VariableSet {
        &self.vars
    }

    pub fn algebra(&self) -> &Arc<PDAlgebra> {
        &self.alg
    }

    pub fn table(&self) -> &Arc<VarTable> {
        &self.table
    }

    fn width(&self) -> u32 {
        2 * self.vars.big_n() as u32
    }

    /// Id of `α⊗y`.
    pub fn variable(&self, class: usize, y: u32) -> u32 {
        class as u32 * self.width() + y
    }

    /// `(class, coordinate)` of an `S` variable.
    pub fn split(&self, v: u32) -> (usize, u32) {
        ((v / self.width()) as usize, v % self.width())
    }

    pub fn zero<C: Coeff>(&self) -> Poly<C> {
        Poly::zero(&self.table)
    }

    pub fn parse<C: Coeff>(&self, text: &str) -> Result<Poly<C>> {
        Poly::parse(&self.table, text)
    }

    fn owns<C: Coeff>(&self, f: &Poly<C>) -> Result<()> {
        if **f.vars() == *self.table {
            Ok(())
        } else {
            Err(Error::VariableMismatch)
        }
    }

    /// `y ↦ 1⊗y`.
    pub fn embed<C: Coeff>(&self, f: &Poly<C>) -> Result<Poly<C>> {
        if **f.vars() != **self.vars.table() {
            return Err(Error::VariableMismatch);
        }
        let unit = self.alg.unit();
        let mut out = self.zero();
        for (m, c) in f.terms() {
            let word: Monomial = m.iter().map(|&y| self.variable(unit, y)).collect();
            out = out.add(&Poly::term(&self.table, &word, c.clone()))?;
        }
        Ok(out)
    }

    /// `Δ = Σ_j Σ_{γ,δ} ⟨δ,γ⟩ ∂⃗_{γ⊗p_j} ∂⃗_{δ⊗x_j}`: the derivative along
    /// `ω*⊗x_j` is read as the derivation `δ⊗x_j ↦ ⟨δ,ω⟩`.
    pub fn delta<C: Coeff>(&self, f: &Poly<C>) -> Result<Poly<C>> {
        self.owns(f)?;
        let mut out = self.zero();
        let dim = self.alg.dim();
        for j in 1..=self.vars.big_n() {
            let (x, p) = (self.vars.x(j), self.vars.p(j));
            for d in 0..dim {
                let fx = f.left_derivative(self.variable(d, x))?;
                if fx.is_zero() {
                    continue;
                }
                for g in 0..dim {
                    let c = self.alg.pair(d, g);
                    if c.is_zero() {
                        continue;
                    }
                    let t = fx.left_derivative(self.variable(g, p))?;
                    out = out.add(&t.scale(c))?;
                }
            }
        }
        Ok(out)
    }

    /// `{F,G}_S = Δ(FG) − Δ(F)G − (−1)^{|F|} FΔ(G)`, per homogeneous part of `F`.
    pub fn bracket<C: Coeff>(&self, f: &Poly<C>, g: &Poly<C>) -> Result<Poly<C>> {
        self.owns(f)?;
        self.owns(g)?;
        let dg = self.delta(g)?;
        let mut out = self.zero();
        for (deg, part) in f.homogeneous_parts() {
            let whole = self.delta(&part.mul(g)?)?;
            let left = self.delta(&part)?.mul(g)?;
            let mut right = part.mul(&dg)?;
            if deg.rem_euclid(2) == 1 {
                right = right.neg();
            }
            out = out.add(&whole.sub(&left)?.sub(&right)?)?;
        }
        Ok(out)
    }

    /// `ΔZ + ½{Z,Z}_S`.
    pub fn mc_defect<C: Coeff>(&self, z: &Poly<C>) -> Result<Poly<C>> {
        self.delta(z)?.add(&self.bracket(z, z)?.scale(&qf(1, 2)))
    }

    pub fn is_maurer_cartan<C: Coeff>(&self, z: &Poly<C>) -> Result<bool> {
        Ok(self.mc_defect(z)?.is_zero())
    }

    /// `Δ^Z F = ΔF + {Z,F}_S`.
    pub fn twisted_delta<C: Coeff>(&self, z: &Poly<C>, f: &Poly<C>) -> Result<Poly<C>> {
        self.delta(f)?.add(&self.bracket(z, f)?)
    }
}

/// One summand while a graph word acts: `c · prefix ⊗ slot₁ ⊗ … ⊗ slot_k`,
/// the prefix an unsorted word in `S`, the slots monomials of `O`.
#[derive(Clone, Debug)]
struct State<C: Coeff> {
    c: C,
    prefix: Vec<u32>,
    slots: Vec<Monomial>,
}

/// The evaluation map `φ` and its twisted version `φ_m`.
#[derive(Clone, Debug)]
pub struct EvalMap {
    s: SAlgebra,
    gc: GraphComplex,
}

impl EvalMap {
    pub fn new(big_n: usize, alg: Arc<PDAlgebra>) -> Result<Self> {
        let vars = VariableSet::new(big_n, alg.n())?;
        let s = SAlgebra::new(vars, alg.clone())?;
        Ok(EvalMap { s, gc: GraphComplex::new(alg) })
    }

    pub fn s_algebra(&self) -> &SAlgebra {
        &self.s
    }

    pub fn vars(&self) -> &VariableSet {
        &self.s.vars
    }

    pub fn graphs(&self) -> &GraphComplex {
        &self.gc
    }

    fn n_odd(&self) -> bool {
        self.s.vars.n().rem_euclid(2) == 1
    }

    /// Left derivative by `y` on one slot, passing the prefix and earlier slots.
    fn diff<C: Coeff>(&self, st: &State<C>, slot: usize, y: u32) -> Option<State<C>> {
        let base = self.s.vars.table();
        let m = &st.slots[slot];
        let pos = m.iter().position(|&v| v == y)?;
        let count = m.iter().filter(|&&v| v == y).count() as i64;
        let mut c = st.c.scale(&q(count));
        if base.is_odd(y) {
            let odd_prefix = st.prefix.iter().filter(|&&v| self.s.table.is_odd(v)).count();
            let odd_slots: usize =
                st.slots[..slot].iter().map(|w| w.iter().filter(|&&v| base.is_odd(v)).count()).sum();
            let odd_inner = m[..pos].iter().filter(|&&v| base.is_odd(v)).count();
            if (odd_prefix + odd_slots + odd_inner) % 2 == 1 {
                c = c.negated();
            }
        }
        let mut next = st.clone();
        next.slots[slot].remove(pos);
        next.c = c;
        Some(next)
    }

    fn distinct(m: &Monomial) -> Vec<u32> {
        let mut v = m.clone();
        v.dedup();
        v
    }

    /// `Σ_k {y_k, ỹ_k} ∂_{y_k,(u)} ∂_{ỹ_k,(v)}`.
    fn edge_operator<C: Coeff>(&self, st: &State<C>, u: usize, v: usize, out: &mut Vec<State<C>>) {
        let vars = &self.s.vars;
        for z in Self::distinct(&st.slots[v]) {
            let Some(s1) = self.diff(st, v, z) else { continue };
            let y = vars.conjugate(z);
            let Some(mut s2) = self.diff(&s1, u, y) else { continue };
            // {p, x} = 1 and {x, p} = (−1)ⁿ.
            if (y as usize) < vars.big_n() && self.n_odd() {
                s2.c = s2.c.negated();
            }
            out.push(s2);
        }
    }

    fn decoration_operator<C: Coeff>(&self, st: &State<C>, u: usize, a: usize, out: &mut Vec<State<C>>) {
        for z in Self::distinct(&st.slots[u]) {
            let Some(mut s1) = self.diff(st, u, z) else { continue };
            let target = if self.n_odd() { self.s.vars.conjugate(z) } else { z };
            s1.prefix.insert(0, self.s.variable(a, target));
            out.push(s1);
        }
    }

    /// Applies the edge and decoration tokens of `g` to the slot polynomials
    /// and multiplies out. Internal vertices must already have a slot.
    fn act<C: Coeff>(&self, g: &Graph, slots: &[&Poly<C>]) -> Result<Poly<C>> {
        for f in slots {
            if **f.vars() != **self.s.vars.table() {
                return Err(Error::VariableMismatch);
            }
        }
        let mut states = vec![State { c: C::one_value(), prefix: Vec::new(), slots: Vec::new() }];
        for f in slots {
            let mut next = Vec::new();
            for st in &states {
                for (m, c) in f.terms() {
                    let mut s = st.clone();
                    s.c = s.c.times(c);
                    s.slots.push(m.clone());
                    next.push(s);
                }
            }
            states = next;
        }
        for &(v, a) in g.decorations.iter().rev() {
            let mut next = Vec::new();
            for st in &states {
                self.decoration_operator(st, v, a, &mut next);
            }
            states = next;
        }
        for &(u, v) in g.edges.iter().rev() {
            let mut next = Vec::new();
            for st in &states {
                self.edge_operator(st, u, v, &mut next);
            }
            states = next;
        }
        let unit = self.s.alg.unit();
        let mut out = self.s.zero();
        for st in states {
            let mut word = st.prefix;
            for m in &st.slots {
                word.extend(m.iter().map(|&y| self.s.variable(unit, y)));
            }
            if let Some((m, neg)) = normalize_word(&self.s.table, &word) {
                out.add_term(m, if neg { st.c.negated() } else { st.c });
            }
        }
        Ok(out)
    }
}

impl EvalMap {
    fn check_arity<C: Coeff>(g: &Graph, f: &[Poly<C>]) -> Result<()> {
        if g.r == f.len() {
            Ok(())
        } else {
            Err(Error::Arity { expected: g.r, got: f.len() })
        }
    }

    /// Graphs on which `φ δ_pair = Δ φ` holds: no internal vertices, no
    /// top-degree decoration (`Δ` would pair it with an implicit unit), and no
    /// two decorations on one vertex that pair nontrivially (`Δ` would produce
    /// a self-loop, which graphs exclude).
    pub fn in_chain_map_domain(&self, g: &Graph) -> bool {
        let alg = &self.s.alg;
        g.s == 0
            && g.decorations.iter().all(|&(_, a)| alg.degree(a) != alg.n())
            && g.decorations.iter().enumerate().all(|(i, &(u, a))| {
                g.decorations[..i].iter().all(|&(v, b)| v != u || alg.pair(b, a).is_zero())
            })
    }

    /// `φ(Γ ⊗ f₁ ⊗ … ⊗ f_r)`; zero when `Γ` has internal vertices.
    pub fn phi<C: Coeff>(&self, g: &Graph, f: &[Poly<C>]) -> Result<Poly<C>> {
        Self::check_arity(g, f)?;
        if g.s > 0 {
            return Ok(self.s.zero());
        }
        self.act(g, &f.iter().collect::<Vec<_>>())
    }

    pub fn phi_sum<C: Coeff>(&self, x: &GraphSum<C>, f: &[Poly<C>]) -> Result<Poly<C>> {
        let mut out = self.s.zero();
        for (g, c) in x.terms() {
            out = out.add(&self.phi(g, f)?.scale_by(c))?;
        }
        Ok(out)
    }

    /// `φ_m`: every internal vertex carries a copy of `m` in a slot after the
    /// external ones. When `m` has odd shifted degree the pair (internal
    /// vertex, `m`) is even, so the slot order costs no sign.
    pub fn phi_m<C: Coeff>(&self, m: &Poly<C>, g: &Graph, f: &[Poly<C>]) -> Result<Poly<C>> {
        self.require_mc(m)?;
        self.phi_m_unchecked(m, g, f)
    }

    fn require_mc<C: Coeff>(&self, m: &Poly<C>) -> Result<()> {
        if self.s.vars.is_maurer_cartan(m)? {
            Ok(())
        } else {
            Err(Error::NotMaurerCartan(format!("{{m, m}} ≠ 0 for m = {}", m.render())))
        }
    }

    fn phi_m_unchecked<C: Coeff>(&self, m: &Poly<C>, g: &Graph, f: &[Poly<C>]) -> Result<Poly<C>> {
        Self::check_arity(g, f)?;
        let mut slots: Vec<&Poly<C>> = f.iter().collect();
        slots.extend(std::iter::repeat_n(m, g.s));
        self.act(g, &slots)
    }

    pub fn phi_m_sum<C: Coeff>(&self, m: &Poly<C>, x: &GraphSum<C>, f: &[Poly<C>]) -> Result<Poly<C>> {
        self.require_mc(m)?;
        let mut out = self.s.zero();
        for (g, c) in x.terms() {
            out = out.add(&self.phi_m_unchecked(m, g, f)?.scale_by(c))?;
        }
        Ok(out)
    }

    /// `Z^m = φ_m(z)` for a partition function `z` that is Maurer–Cartan
    /// within `bound`. The bracket is odd, so `z` must be even.
    pub fn z_m<C: Coeff>(&self, z: &GraphSum<C>, m: &Poly<C>, bound: SectorBound) -> Result<Poly<C>> {
        if let Some(g) = z.terms().keys().find(|g| self.gc.is_odd(g)) {
            return Err(Error::NotMaurerCartan(format!("partition function term of odd degree {}", self.gc.degree(g))));
        }
        if !self.gc.check_mc_graph(z, bound)? {
            return Err(Error::NotMaurerCartan("δz + ½{z,z} ≠ 0 within the sector".into()));
        }
        self.phi_m_sum(m, z, &[])
    }

    /// `Δ^m F = ΔF + {Z^m, F}_S`.
    pub fn delta_m<C: Coeff>(&self, z_m: &Poly<C>, f: &Poly<C>) -> Result<Poly<C>> {
        self.s.twisted_delta(z_m, f)
    }

    /// Descent along the structure maps of `O` at slot 1:
    /// `φ(Γ ⊗ ab ⊗ …) = φ(Γ∘₁(∘ ∘) ⊗ a ⊗ b ⊗ …)` and
    /// `φ(Γ ⊗ {a,b} ⊗ …) = φ(Γ∘₁(∘−∘) ⊗ a ⊗ b ⊗ …)`.
    pub fn check_module_descent<C: Coeff>(&self, g: &Graph, a: &Poly<C>, b: &Poly<C>, rest: &[Poly<C>]) -> Result<bool> {
        if g.r != rest.len() + 1 {
            return Err(Error::Arity { expected: g.r, got: rest.len() + 1 });
        }
        let vars = &self.s.vars;
        let split = |x: Poly<C>| {
            let mut v = vec![x];
            v.extend(rest.iter().cloned());
            v
        };
        let pair = |x: &Poly<C>, y: &Poly<C>| {
            let mut v = vec![x.clone(), y.clone()];
            v.extend(rest.iter().cloned());
            v
        };
        let product = self.phi(g, &split(vars.multiply(a, b)?))?;
        let joined: GraphSum<C> = self.gc.insert(g, 1, &Graph::empty(2))?;
        if product != self.phi_sum(&joined, &pair(a, b))? {
            return Ok(false);
        }
        let bracket = self.phi(g, &split(vars.poisson_bracket(a, b)?))?;
        let edge: GraphSum<C> = self.gc.insert(g, 1, &Graph::new(2, 0, vec![(0, 1)], Vec::new()))?;
        Ok(bracket == self.phi_sum(&edge, &pair(a, b))?)
    }
}

impl EvalMap {
    /// Both sides of `(δ_split Γ) ∘_m f = (−1)^{|Γ|+1} Γ ∘_m d^m f`, where
    /// `d^m` acts on the tensor `f` as an odd derivation.
    pub fn lemma_ds_sides<C: Coeff>(&self, m: &Poly<C>, g: &Graph, f: &[Poly<C>]) -> Result<(Poly<C>, Poly<C>)> {
        let d = self.s.vars.twist_differential(m)?;
        Self::check_arity(g, f)?;
        let split = self.gc.delta_split(&self.gc.sum_of(g, C::one_value())?);
        let lhs = self.phi_m_sum(m, &split, f)?;
        let mut rhs = self.s.zero();
        // Split each factor by parity so the Koszul signs are well defined.
        let parts: Vec<[Poly<C>; 2]> = f.iter().map(|x| parity_parts(x)).collect();
        for i in 0..f.len() {
            let mut choices = vec![0usize; i];
            loop {
                let mut tensor: Vec<Poly<C>> = Vec::with_capacity(f.len());
                let mut odd = false;
                for (j, &c) in choices.iter().enumerate() {
                    tensor.push(parts[j][c].clone());
                    odd ^= c == 1;
                }
                tensor.push(d.apply(&f[i])?);
                tensor.extend(f[i + 1..].iter().cloned());
                let term = self.phi_m_unchecked(m, g, &tensor)?;
                rhs = if odd { rhs.sub(&term)? } else { rhs.add(&term)? };
                let Some(pos) = choices.iter().position(|&c| c == 0) else { break };
                for c in &mut choices[..pos] {
                    *c = 0;
                }
                choices[pos] = 1;
            }
        }
        if !self.gc.is_odd(g) {
            rhs = rhs.neg();
        }
        Ok((lhs, rhs))
    }

    pub fn lemma_ds_check<C: Coeff>(&self, m: &Poly<C>, g: &Graph, f: &[Poly<C>]) -> Result<bool> {
        let (lhs, rhs) = self.lemma_ds_sides(m, g, f)?;
        Ok(lhs == rhs)
    }
}

/// Even and odd parts.
fn parity_parts<C: Coeff>(f: &Poly<C>) -> [Poly<C>; 2] {
    let even = f.filter_terms(|m| f.vars().word_degree(m).rem_euclid(2) == 0);
    let odd = f.filter_terms(|m| f.vars().word_degree(m).rem_euclid(2) == 1);
    [even, odd]
}
