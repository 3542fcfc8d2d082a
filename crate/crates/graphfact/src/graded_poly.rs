//! The polynomial algebra `O = O(T*[1−n]ℝᴺ)` with its Poisson bracket and
//! Maurer–Cartan twisting.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::poly::{Poly, VarTable};
use crate::scalars::{Coeff, HbarSeries, Q};

pub type Polynomial<C = Q> = Poly<C>;
pub type HbarPolynomial = Poly<HbarSeries>;

/// Coordinates `x₁..x_N` (degree 0) followed by `p₁..p_N` (degree `1−n`).
#[derive(Clone, Debug)]
pub struct VariableSet {
    big_n: usize,
    n: i64,
    table: Arc<VarTable>,
}

impl PartialEq for VariableSet {
    fn eq(&self, other: &Self) -> bool {
        self.big_n == other.big_n && self.n == other.n
    }
}

impl VariableSet {
    pub fn new(big_n: usize, n: i64) -> Result<Self> {
        if big_n == 0 || n <= 0 {
            return Err(Error::Parse(format!("need N ≥ 1 and n ≥ 1, got N={big_n}, n={n}")));
        }
        let mut names = Vec::with_capacity(2 * big_n);
        let mut degrees = Vec::with_capacity(2 * big_n);
        for i in 1..=big_n {
            names.push(format!("x{i}"));
            degrees.push(0);
        }
        for i in 1..=big_n {
            names.push(format!("p{i}"));
            degrees.push(1 - n);
        }
        Ok(VariableSet { big_n, n, table: VarTable::new(names, degrees) })
    }

    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn table(&self) -> &Arc<VarTable> {
        &self.table
    }

    /// Id of `x_i`, 1-based.
    pub fn x(&self, i: usize) -> u32 {
        assert!((1..=self.big_n).contains(&i));
        (i - 1) as u32
    }

    /// Id of `p_i`, 1-based.
    pub fn p(&self, i: usize) -> u32 {
        assert!((1..=self.big_n).contains(&i));
        (self.big_n + i - 1) as u32
    }

    /// Ids `y₁..y₂N` in order `x₁..x_N, p₁..p_N`.
    pub fn y(&self, k: usize) -> u32 {
        assert!((1..=2 * self.big_n).contains(&k));
        (k - 1) as u32
    }

    /// Conjugate coordinate: `x_i ↔ p_i`.
    pub fn conjugate(&self, v: u32) -> u32 {
        let n = self.big_n as u32;
        if v < n {
            v + n
        } else {
            v - n
        }
    }

    pub fn zero<C: Coeff>(&self) -> Poly<C> {
        Poly::zero(&self.table)
    }

    pub fn one<C: Coeff>(&self) -> Poly<C> {
        Poly::one(&self.table)
    }

    pub fn var<C: Coeff>(&self, v: u32) -> Poly<C> {
        Poly::var(&self.table, v)
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

    pub fn multiply<C: Coeff>(&self, f: &Poly<C>, g: &Poly<C>) -> Result<Poly<C>> {
        self.owns(f)?;
        f.mul(g)
    }

    /// Graded left derivative `∂f/∂y`.
    pub fn partial_derivative<C: Coeff>(&self, f: &Poly<C>, y: u32) -> Result<Poly<C>> {
        self.owns(f)?;
        f.left_derivative(y)
    }

    /// `{f,g} = ε(f) Σ_i (f∂⃖_{p_i})(∂⃗_{x_i} g) − (f∂⃖_{x_i})(∂⃗_{p_i} g)` with
    /// `ε(f) = (−1)^{(n+1)(|f|+1)}` applied per homogeneous part of `f`.
    ///
    /// The sign twist makes `{p_i, x_j} = δ_ij` and the symmetry
    /// `{f,g} = (−1)^{n+|f||g|}{g,f}` hold for both parities of `n`.
    pub fn poisson_bracket<C: Coeff>(&self, f: &Poly<C>, g: &Poly<C>) -> Result<Poly<C>> {
        self.owns(f)?;
        self.owns(g)?;
        let mut out = self.zero();
        for (deg, part) in f.homogeneous_parts() {
            let mut acc = self.zero::<C>();
            for i in 1..=self.big_n {
                let (x, p) = (self.x(i), self.p(i));
                let fp = part.right_derivative(p)?;
                if !fp.is_zero() {
                    acc = acc.add(&fp.mul(&g.left_derivative(x)?)?)?;
                }
                let fx = part.right_derivative(x)?;
                if !fx.is_zero() {
                    acc = acc.sub(&fx.mul(&g.left_derivative(p)?)?)?;
                }
            }
            if ((self.n + 1) * (deg + 1)).rem_euclid(2) == 1 {
                acc = acc.neg();
            }
            out = out.add(&acc)?;
        }
        Ok(out)
    }

    /// `{m, m} = 0`, order by order in `ħ` for series coefficients.
    pub fn is_maurer_cartan<C: Coeff>(&self, m: &Poly<C>) -> Result<bool> {
        Ok(self.poisson_bracket(m, m)?.is_zero())
    }

    /// `d^m = −{m, ·}`. Besides `{m,m} = 0` this requires every homogeneous part
    /// of `m` to have odd shifted degree `|m| + n − 1`; otherwise `d^m` is an
    /// even derivation and need not square to zero.
    pub fn twist_differential<C: Coeff>(&self, m: &Poly<C>) -> Result<TwistDifferential<C>> {
        self.owns(m)?;
        if !self.is_maurer_cartan(m)? {
            return Err(Error::NotMaurerCartan(format!("{{m, m}} ≠ 0 for m = {}", m.render())));
        }
        if let Some(d) = m.homogeneous_parts().keys().find(|&&d| (d + self.n - 1).rem_euclid(2) == 0) {
            return Err(Error::NotMaurerCartan(format!(
                "component of degree {d} has even shifted degree; d^m would be even"
            )));
        }
        Ok(TwistDifferential { vars: self.clone(), m: m.clone() })
    }
}

/// The differential `d^m = −{m, ·}` for a Maurer–Cartan element `m`.
#[derive(Clone, Debug)]
pub struct TwistDifferential<C: Coeff> {
    vars: VariableSet,
    m: Poly<C>,
}

impl<C: Coeff> TwistDifferential<C> {
    pub fn element(&self) -> &Poly<C> {
        &self.m
    }

    pub fn apply(&self, f: &Poly<C>) -> Result<Poly<C>> {
        Ok(self.vars.poisson_bracket(&self.m, f)?.neg())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::q;
    use proptest::prelude::*;

    fn vs(n: i64) -> VariableSet {
        VariableSet::new(2, n).unwrap()
    }

    #[test]
    fn multiplication_examples() {
        let v = vs(2);
        let f: Polynomial = v.parse("x2*x1").unwrap();
        assert_eq!(f, v.parse("x1*x2").unwrap());
        let p12: Polynomial = v.multiply(&v.var(v.p(1)), &v.var(v.p(2))).unwrap();
        let p21: Polynomial = v.multiply(&v.var(v.p(2)), &v.var(v.p(1))).unwrap();
        assert_eq!(p12, p21.neg());
        assert!(v.multiply(&v.var::<Q>(v.p(1)), &v.var(v.p(1))).unwrap().is_zero());
        // For n odd the p's are even and may repeat.
        let w = vs(3);
        assert!(!w.multiply(&w.var::<Q>(w.p(1)), &w.var(w.p(1))).unwrap().is_zero());
        let other = VariableSet::new(3, 2).unwrap();
        assert!(matches!(v.multiply(&f, &other.var(0)), Err(Error::VariableMismatch)));
    }

    /// Oracle: expand the monomial as an ordered word, move `y` to the front by
    /// adjacent transpositions and count the odd-odd swaps.
    fn oracle_left_derivative(v: &VariableSet, word: &[u32], y: u32) -> Polynomial {
        let t = v.table();
        let mut out = v.zero();
        for pos in 0..word.len() {
            if word[pos] != y {
                continue;
            }
            let swaps = word[..pos].iter().filter(|&&w| t.is_odd(w) && t.is_odd(y)).count();
            let mut rest = word.to_vec();
            rest.remove(pos);
            let c = if swaps % 2 == 0 { q(1) } else { q(-1) };
            out = out.add(&Poly::term(t, &rest, c)).unwrap();
        }
        out
    }

    #[test]
    fn derivative_examples() {
        let v = vs(2);
        let x1x2: Polynomial = v.parse("x1*x2").unwrap();
        assert_eq!(v.partial_derivative(&x1x2, v.x(1)).unwrap(), v.var(v.x(2)));
        let p1p2: Polynomial = v.parse("p1*p2").unwrap();
        let d = v.partial_derivative(&p1p2, v.p(2)).unwrap();
        assert_eq!(d, v.var::<Q>(v.p(1)).neg());
        assert_eq!(d, oracle_left_derivative(&v, &[v.p(1), v.p(2)], v.p(2)));
        assert!(v.partial_derivative(&v.var::<Q>(v.x(1)), v.p(1)).unwrap().is_zero());
        assert!(matches!(v.partial_derivative(&x1x2, 99), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn bracket_generator_relations() {
        for n in [2, 3, 4] {
            let v = vs(n);
            for i in 1..=2 {
                for j in 1..=2 {
                    let (pi, xj) = (v.var::<Q>(v.p(i)), v.var::<Q>(v.x(j)));
                    let expect = if i == j { v.one() } else { v.zero() };
                    assert_eq!(v.poisson_bracket(&pi, &xj).unwrap(), expect);
                    assert!(v.poisson_bracket(&v.var::<Q>(v.x(i)), &xj).unwrap().is_zero());
                    assert!(v.poisson_bracket(&pi, &v.var::<Q>(v.p(j))).unwrap().is_zero());
                }
            }
        }
    }

    /// Oracle: `{p₁x₁, x₁}` reduced to generator brackets by the biderivation rule.
    #[test]
    fn bracket_biderivation_example() {
        for n in [2, 3] {
            let v = vs(n);
            let f: Polynomial = v.parse("p1*x1").unwrap();
            let x1 = v.var::<Q>(v.x(1));
            // x₁ has degree 0 so it commutes with everything; {p₁x₁, x₁} = x₁{p₁, x₁} + p₁{x₁, x₁}.
            let by_rule = x1.mul(&v.poisson_bracket(&v.var(v.p(1)), &x1).unwrap()).unwrap();
            assert_eq!(v.poisson_bracket(&f, &x1).unwrap(), by_rule);
            assert_eq!(by_rule, x1);
        }
    }

    #[test]
    fn maurer_cartan_examples() {
        let v = vs(2);
        assert!(v.is_maurer_cartan(&v.zero::<Q>()).unwrap());
        let m: Polynomial = v.parse("x1*x2").unwrap();
        assert!(v.is_maurer_cartan(&m).unwrap());
        // {ħp₁x₁, ħp₁x₁} expands to ±2ħ²p₁x₁ for n = 2 (p₁ odd, so symmetry does not kill it).
        let mh: HbarPolynomial = v.parse("hbar*p1*x1").unwrap();
        let b = v.poisson_bracket(&mh, &mh).unwrap();
        let f: Polynomial = v.parse("p1*x1").unwrap();
        let plain = v.poisson_bracket(&f, &f).unwrap();
        assert_eq!(b.is_zero(), plain.is_zero());
        assert_eq!(v.is_maurer_cartan(&mh).unwrap(), plain.is_zero());
    }

    #[test]
    fn twist_examples() {
        let v = vs(2);
        let m: Polynomial = v.parse("x1*x2").unwrap();
        let d = v.twist_differential(&m).unwrap();
        // −{x₁x₂, p₁} = −(−1)^{n}{p₁, x₁x₂} = −x₂ for n = 2.
        assert_eq!(d.apply(&v.var(v.p(1))).unwrap(), v.var::<Q>(v.x(2)).neg());
        assert!(d.apply(&v.one()).unwrap().is_zero());
        let d0 = v.twist_differential(&v.zero::<Q>()).unwrap();
        assert!(d0.apply(&v.parse("p1*x2 + x1").unwrap()).unwrap().is_zero());
        let bad: Polynomial = v.parse("p1*x2 + p2*x1*x1").unwrap();
        if !v.is_maurer_cartan(&bad).unwrap() {
            assert!(matches!(v.twist_differential(&bad), Err(Error::NotMaurerCartan(_))));
        }
        // n = 3, m = x₁: {m,m} = 0 but d^m d^m (p₁²) = 2, so the parity rule rejects it.
        let w = vs(3);
        let x1 = w.var::<Q>(w.x(1));
        assert!(w.is_maurer_cartan(&x1).unwrap());
        let p11: Polynomial = w.parse("p1^2").unwrap();
        let once = w.poisson_bracket(&x1, &p11).unwrap().neg();
        let twice = w.poisson_bracket(&x1, &once).unwrap().neg();
        assert_eq!(twice, w.one::<Q>().scale(&q(2)));
        assert!(w.twist_differential(&x1).is_err());
    }

    #[test]
    fn hbar_twist() {
        let v = vs(2);
        let m: HbarPolynomial = v.parse("hbar*x1*x2 + hbar^2*x1").unwrap();
        let d = v.twist_differential(&m).unwrap();
        let f: HbarPolynomial = v.parse("p1*p2").unwrap();
        assert!(d.apply(&d.apply(&f).unwrap()).unwrap().is_zero());
    }

    fn arb_poly(v: VariableSet, max_terms: usize) -> impl Strategy<Value = Polynomial> {
        let nv = 2 * v.big_n() as u32;
        prop::collection::vec((prop::collection::vec(0..nv, 0..4), -3i64..4), 0..max_terms).prop_map(move |ts| {
            let mut p = v.zero();
            for (w, c) in ts {
                p = p.add(&Poly::term(v.table(), &w, q(c))).unwrap();
            }
            p
        })
    }

    /// Random homogeneous polynomial: keep the part of the lowest degree.
    fn arb_homog(v: VariableSet) -> impl Strategy<Value = Polynomial> {
        arb_poly(v, 4).prop_map(|p| p.homogeneous_parts().into_values().next().unwrap_or(p))
    }

    fn deg(p: &Polynomial) -> i64 {
        p.degree().unwrap().unwrap_or(0)
    }

    fn sgn(p: Polynomial, odd: bool) -> Polynomial {
        if odd {
            p.neg()
        } else {
            p
        }
    }

    fn arb_n() -> impl Strategy<Value = i64> {
        2i64..5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn symmetry((n, f, g) in arb_n().prop_flat_map(|n| (Just(n), arb_homog(vs(n)), arb_homog(vs(n))))) {
            let v = vs(n);
            let l = v.poisson_bracket(&f, &g).unwrap();
            let r = v.poisson_bracket(&g, &f).unwrap();
            prop_assert_eq!(l, sgn(r, (n + deg(&f) * deg(&g)).rem_euclid(2) == 1));
        }

        #[test]
        fn degree_shift((n, f, g) in arb_n().prop_flat_map(|n| (Just(n), arb_homog(vs(n)), arb_homog(vs(n))))) {
            let v = vs(n);
            let b = v.poisson_bracket(&f, &g).unwrap();
            if let Some(d) = b.degree().unwrap() {
                prop_assert_eq!(d, deg(&f) + deg(&g) + n - 1);
            }
        }

        #[test]
        fn leibniz((n, f, g, h) in arb_n().prop_flat_map(|n| (Just(n), arb_homog(vs(n)), arb_homog(vs(n)), arb_homog(vs(n))))) {
            let v = vs(n);
            // {f, gh} = {f,g}h + (−1)^{(|f|+n−1)|g|} g{f,h}
            let lhs = v.poisson_bracket(&f, &g.mul(&h).unwrap()).unwrap();
            let a = v.poisson_bracket(&f, &g).unwrap().mul(&h).unwrap();
            let b = g.mul(&v.poisson_bracket(&f, &h).unwrap()).unwrap();
            let b = sgn(b, ((deg(&f) + n - 1) * deg(&g)).rem_euclid(2) == 1);
            prop_assert_eq!(lhs, a.add(&b).unwrap());
        }

        #[test]
        fn jacobi((n, f, g, h) in arb_n().prop_flat_map(|n| (Just(n), arb_homog(vs(n)), arb_homog(vs(n)), arb_homog(vs(n))))) {
            let v = vs(n);
            // {f,{g,h}} = ε(f){{f,g},h} + (−1)^{(|f|+n−1)(|g|+n−1)} {g,{f,h}}, ε(f) = (−1)^{(n+1)(|f|+1)}
            let lhs = v.poisson_bracket(&f, &v.poisson_bracket(&g, &h).unwrap()).unwrap();
            let a = v.poisson_bracket(&v.poisson_bracket(&f, &g).unwrap(), &h).unwrap();
            let a = sgn(a, ((n + 1) * (deg(&f) + 1)).rem_euclid(2) == 1);
            let b = v.poisson_bracket(&g, &v.poisson_bracket(&f, &h).unwrap()).unwrap();
            let b = sgn(b, ((deg(&f) + n - 1) * (deg(&g) + n - 1)).rem_euclid(2) == 1);
            prop_assert_eq!(lhs, a.add(&b).unwrap());
        }

        #[test]
        fn twist_squares_to_zero_and_is_derivation(
            (m, f, g) in (arb_poly(vs(2), 3), arb_homog(vs(2)), arb_homog(vs(2)))
        ) {
            let v = vs(2);
            // Even-degree parts of any x-only or degree-0 polynomial: keep the degree-0 part, which is MC iff its bracket vanishes.
            let m0 = m.homogeneous_parts().remove(&0).unwrap_or_else(|| v.zero());
            if let Ok(d) = v.twist_differential(&m0) {
                prop_assert!(d.apply(&d.apply(&f).unwrap()).unwrap().is_zero());
                // d^m has degree +1, so d(fg) = d(f)g + (−1)^{|f|} f d(g).
                let lhs = d.apply(&f.mul(&g).unwrap()).unwrap();
                let a = d.apply(&f).unwrap().mul(&g).unwrap();
                let b = sgn(f.mul(&d.apply(&g).unwrap()).unwrap(), deg(&f).rem_euclid(2) == 1);
                prop_assert_eq!(lhs, a.add(&b).unwrap());
            }
        }

        #[test]
        fn x_only_elements_are_maurer_cartan(w in prop::collection::vec(0u32..2, 0..4)) {
            let v = vs(2);
            let m = Poly::term(v.table(), &w, q(1));
            prop_assert!(v.is_maurer_cartan(&m).unwrap());
        }
    }
}
