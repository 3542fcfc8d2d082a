//! Finite-dimensional graded Poincaré duality algebras standing in for the
//! cohomology ring of a closed oriented manifold.
//!
//! The manifold is also assumed to have trivialized tangent bundle; nothing
//! here can check that, so it is a documented hypothesis on the input.

use std::collections::HashMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalars::{format_q, parse_q, q, sign_q, Q};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisElement {
    pub name: String,
    pub degree: i64,
}

/// Validated Poincaré duality algebra with a distinguished basis.
#[derive(Clone, Debug)]
pub struct PDAlgebra {
    n: i64,
    basis: Vec<BasisElement>,
    unit: usize,
    /// `table[i][j]` is the coordinate vector of `e_i · e_j`.
    table: Vec<Vec<Vec<Q>>>,
    integration: Vec<Q>,
    /// `pairing_matrix[i][j] = ⟨e_i, e_j⟩`.
    pairing_matrix: Vec<Vec<Q>>,
    /// `dual[j]` is the coordinate vector of `e^{*j}`.
    dual: Vec<Vec<Q>>,
}

/// Coordinate vector over the basis.
pub type PDElement = Vec<Q>;

impl PDAlgebra {
    /// Builds and validates an algebra from raw data. Products with the unit
    /// that are left unspecified default to the unit law; all other unspecified
    /// products are zero.
    pub fn new(
        n: i64,
        basis: Vec<BasisElement>,
        unit: usize,
        products: Vec<(usize, usize, Vec<Q>)>,
        integration: Vec<Q>,
    ) -> Result<Self> {
        let d = basis.len();
        let bad = |m: String| Err(Error::InvalidAlgebra(m));
        if d == 0 {
            return bad("empty basis".into());
        }
        if unit >= d {
            return bad("missing unit".into());
        }
        if basis[unit].degree != 0 {
            return bad("unit must have degree 0".into());
        }
        if integration.len() != d {
            return bad("integration functional has wrong length".into());
        }
        let mut seen = HashMap::new();
        for (i, b) in basis.iter().enumerate() {
            if seen.insert(b.name.clone(), i).is_some() {
                return bad(format!("duplicate basis name {}", b.name));
            }
        }
        let zero = vec![Q::zero(); d];
        let mut table: Vec<Vec<Option<Vec<Q>>>> = vec![vec![None; d]; d];
        for (i, j, c) in products {
            if i >= d || j >= d || c.len() != d {
                return bad(format!("malformed product entry ({i}, {j})"));
            }
            table[i][j] = Some(c);
        }
        let e = |k: usize| {
            let mut v = vec![Q::zero(); d];
            v[k] = Q::one();
            v
        };
        for k in 0..d {
            if table[unit][k].is_none() {
                table[unit][k] = Some(e(k));
            }
            if table[k][unit].is_none() {
                table[k][unit] = Some(e(k));
            }
        }
        let table: Vec<Vec<Vec<Q>>> = table
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.unwrap_or_else(|| zero.clone())).collect())
            .collect();
        for (k, c) in integration.iter().enumerate() {
            if !c.is_zero() && basis[k].degree != n {
                return bad(format!("integration nonzero on {} outside degree {n}", basis[k].name));
            }
        }
        let mut alg = PDAlgebra {
            n,
            basis,
            unit,
            table,
            integration,
            pairing_matrix: Vec::new(),
            dual: Vec::new(),
        };
        alg.validate_products()?;
        alg.pairing_matrix = (0..d)
            .map(|i| (0..d).map(|j| alg.pairing_basis(i, j)).collect())
            .collect();
        let inv = linalg::inverse(&alg.pairing_matrix)
            .ok_or_else(|| Error::InvalidAlgebra("degenerate pairing".into()))?;
        // ⟨e_i, Σ_k X_kj e_k⟩ = (P X)_ij = δ_ij.
        alg.dual = (0..d).map(|j| (0..d).map(|k| inv[k][j].clone()).collect()).collect();
        Ok(alg)
    }

    fn validate_products(&self) -> Result<()> {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let prod = &self.table[i][j];
                let target = self.degree(i) + self.degree(j);
                for (k, c) in prod.iter().enumerate() {
                    if !c.is_zero() && self.degree(k) != target {
                        return Err(Error::InvalidAlgebra(format!(
                            "{}·{} has a component of the wrong degree",
                            self.basis[i].name, self.basis[j].name
                        )));
                    }
                }
                let s = sign_q(self.degree(i) * self.degree(j));
                let swapped: Vec<Q> = self.table[j][i].iter().map(|c| c * &s).collect();
                if *prod != swapped {
                    return Err(Error::InvalidAlgebra(format!(
                        "product not graded commutative on ({}, {})",
                        self.basis[i].name, self.basis[j].name
                    )));
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let left = self.mul(&self.mul(&self.basis_vec(i), &self.basis_vec(j)), &self.basis_vec(k));
                    let right = self.mul(&self.basis_vec(i), &self.mul(&self.basis_vec(j), &self.basis_vec(k)));
                    if left != right {
                        return Err(Error::InvalidAlgebra(format!(
                            "non-associative product on ({}, {}, {})",
                            self.basis[i].name, self.basis[j].name, self.basis[k].name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Cohomology of the n-sphere: basis `1`, `v` with `v² = 0`, `∫v = 1`.
    pub fn sphere(n: i64) -> Self {
        let basis = vec![
            BasisElement { name: "1".into(), degree: 0 },
            BasisElement { name: "v".into(), degree: n },
        ];
        PDAlgebra::new(n, basis, 0, vec![(1, 1, vec![q(0), q(0)])], vec![q(0), q(1)])
            .expect("sphere algebra is valid")
    }

    /// Cohomology of the 2-torus: basis `1, a, b, ab` with `ab = −ba`, `∫ab = 1`.
    pub fn torus() -> Self {
        let z = || vec![q(0); 4];
        let ab = vec![q(0), q(0), q(0), q(1)];
        let ba = vec![q(0), q(0), q(0), q(-1)];
        let basis = ["1", "a", "b", "ab"]
            .iter()
            .zip([0, 1, 1, 2])
            .map(|(nm, d)| BasisElement { name: nm.to_string(), degree: d })
            .collect();
        let products = vec![
            (1, 1, z()),
            (2, 2, z()),
            (1, 2, ab),
            (2, 1, ba),
            (1, 3, z()),
            (3, 1, z()),
            (2, 3, z()),
            (3, 2, z()),
            (3, 3, z()),
        ];
        PDAlgebra::new(2, basis, 0, products, vec![q(0), q(0), q(0), q(1)]).expect("torus algebra is valid")
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let err = |m: &str| Error::Parse(format!("algebra JSON: {m}"));
        let n = v.get("dimension").and_then(Value::as_i64).ok_or_else(|| err("missing dimension"))?;
        let basis: Vec<BasisElement> =
            serde_json::from_value(v.get("basis").cloned().ok_or_else(|| err("missing basis"))?)?;
        let index = |x: &Value| -> Result<usize> {
            if let Some(i) = x.as_u64() {
                return Ok(i as usize);
            }
            let s = x.as_str().ok_or_else(|| err("basis reference must be index or name"))?;
            basis.iter().position(|b| b.name == s).ok_or_else(|| err(&format!("unknown basis element {s}")))
        };
        let unit = index(v.get("unit").ok_or_else(|| err("missing unit"))?)?;
        let coeffs = |x: &Value| -> Result<Vec<Q>> {
            x.as_array().ok_or_else(|| err("coefficient list expected"))?.iter().map(json_q).collect()
        };
        let mut products = Vec::new();
        if let Some(ps) = v.get("products").and_then(Value::as_array) {
            for p in ps {
                let a = p.as_array().filter(|a| a.len() == 3).ok_or_else(|| err("product entry must be [i, j, coeffs]"))?;
                products.push((index(&a[0])?, index(&a[1])?, coeffs(&a[2])?));
            }
        }
        let integration = coeffs(v.get("integration").ok_or_else(|| err("missing integration"))?)?;
        PDAlgebra::new(n, basis, unit, products, integration)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(s)?)
    }

    pub fn to_json_value(&self) -> Value {
        let d = self.dim();
        let mut products = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if self.table[i][j].iter().any(|c| !c.is_zero()) {
                    products.push(serde_json::json!([i, j, self.table[i][j].iter().map(format_q).collect::<Vec<_>>()]));
                }
            }
        }
        serde_json::json!({
            "dimension": self.n,
            "basis": self.basis,
            "unit": self.basis[self.unit].name,
            "products": products,
            "integration": self.integration.iter().map(format_q).collect::<Vec<_>>(),
        })
    }

    // ========================================================================
    // Accessors
    // ========================================================================

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn degree(&self, i: usize) -> i64 {
        self.basis[i].degree
    }

    pub fn is_odd(&self, i: usize) -> bool {
        self.degree(i).rem_euclid(2) == 1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.basis[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.basis.iter().position(|b| b.name == name)
    }

    /// Basis indices of the reduced part (everything but the unit).
    pub fn reduced(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| i != self.unit).collect()
    }

    pub fn is_reduced(&self, i: usize) -> bool {
        i != self.unit
    }

    pub fn basis_vec(&self, i: usize) -> PDElement {
        let mut v = vec![Q::zero(); self.dim()];
        v[i] = Q::one();
        v
    }

    pub fn product_coeffs(&self, i: usize, j: usize) -> &[Q] {
        &self.table[i][j]
    }

    pub fn integration(&self) -> &[Q] {
        &self.integration
    }

    // ========================================================================
    // Operations
    // ========================================================================

    pub fn mul(&self, a: &PDElement, b: &PDElement) -> PDElement {
        let d = self.dim();
        let mut out = vec![Q::zero(); d];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                if y.is_zero() {
                    continue;
                }
                let xy = x * y;
                for (k, c) in self.table[i][j].iter().enumerate() {
                    if !c.is_zero() {
                        out[k] += &xy * c;
                    }
                }
            }
        }
        out
    }

    pub fn integrate(&self, a: &PDElement) -> Q {
        a.iter().zip(&self.integration).fold(Q::zero(), |acc, (x, y)| acc + x * y)
    }

    /// Degree of a homogeneous element; `None` for zero, error when inhomogeneous.
    pub fn element_degree(&self, a: &PDElement) -> Result<Option<i64>> {
        let mut deg = None;
        for (i, c) in a.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            match deg {
                None => deg = Some(self.degree(i)),
                Some(d) if d != self.degree(i) => return Err(Error::Inhomogeneous),
                _ => {}
            }
        }
        Ok(deg)
    }

    /// `⟨a, b⟩ = (−1)^{|a|} ∫ a·b`, zero unless `|a| + |b| = n`.
    pub fn pairing(&self, a: &PDElement, b: &PDElement) -> Result<Q> {
        let (Some(da), Some(db)) = (self.element_degree(a)?, self.element_degree(b)?) else {
            return Ok(Q::zero());
        };
        if da + db != self.n {
            return Ok(Q::zero());
        }
        Ok(sign_q(da) * self.integrate(&self.mul(a, b)))
    }

    fn pairing_basis(&self, i: usize, j: usize) -> Q {
        if self.degree(i) + self.degree(j) != self.n {
            return Q::zero();
        }
        sign_q(self.degree(i)) * self.integrate(&self.table[i][j])
    }

    /// `⟨e_i, e_j⟩` from the cached matrix.
    pub fn pair(&self, i: usize, j: usize) -> &Q {
        &self.pairing_matrix[i][j]
    }

    pub fn pairing_matrix(&self) -> &[Vec<Q>] {
        &self.pairing_matrix
    }

    /// Dual basis `e^{*j}` characterised by `⟨e_i, e^{*j}⟩ = δ_ij`.
    pub fn dual_basis(&self) -> &[PDElement] {
        &self.dual
    }

    pub fn dual_of(&self, j: usize) -> &PDElement {
        &self.dual[j]
    }
}

fn json_q(v: &Value) -> Result<Q> {
    match v {
        Value::String(s) => parse_q(s),
        Value::Number(n) => n
            .as_i64()
            .map(q)
            .ok_or_else(|| Error::Parse(format!("non-integer number {n}; use \"p/q\""))),
        _ => Err(Error::Parse(format!("expected rational, got {v}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_pairing_examples() {
        let s = PDAlgebra::sphere(3);
        assert_eq!(s.pairing(&s.basis_vec(0), &s.basis_vec(1)).unwrap(), q(1));
        assert_eq!(s.pairing(&s.basis_vec(1), &s.basis_vec(1)).unwrap(), q(0));
        // ⟨v, 1⟩ = (−1)^3 ∫v.
        assert_eq!(s.pairing(&s.basis_vec(1), &s.basis_vec(0)).unwrap(), q(-1));
    }

    #[test]
    fn sphere_dual_basis_solves_two_by_two_system() {
        for n in [2, 3] {
            let s = PDAlgebra::sphere(n);
            // Oracle: ⟨1, x v⟩ = x and ⟨v, y 1⟩ = (−1)^n y, so x = 1, y = (−1)^n.
            assert_eq!(s.dual_of(0), &vec![q(0), q(1)]);
            assert_eq!(s.dual_of(1), &vec![sign_q(n), q(0)]);
        }
    }

    #[test]
    fn torus_pairing_and_duals() {
        let t = PDAlgebra::torus();
        let (a, b) = (t.basis_vec(1), t.basis_vec(2));
        // ⟨a, b⟩ = (−1)^1 ∫ab = −1 and ⟨b, a⟩ = (−1)^1 ∫ba = 1.
        assert_eq!(t.pairing(&a, &b).unwrap(), q(-1));
        assert_eq!(t.pairing(&b, &a).unwrap(), q(1));
        // Pairing matrix is invertible by exact determinant.
        assert!(!linalg::det(&t.pairing_matrix().to_vec()).is_zero());
        // Dual of a is proportional to b.
        let da = t.dual_of(1);
        assert!(da[0].is_zero() && da[1].is_zero() && da[3].is_zero() && !da[2].is_zero());
        assert_eq!(t.pairing(&t.basis_vec(0), t.dual_of(0)).unwrap(), q(1));
    }

    #[test]
    fn duals_satisfy_kronecker_delta() {
        for alg in [PDAlgebra::sphere(2), PDAlgebra::sphere(3), PDAlgebra::torus()] {
            for i in 0..alg.dim() {
                for j in 0..alg.dim() {
                    let expect = if i == j { q(1) } else { q(0) };
                    assert_eq!(alg.pairing(&alg.basis_vec(i), alg.dual_of(j)).unwrap(), expect);
                }
            }
        }
    }

    #[test]
    fn graded_commutativity_and_degree_support() {
        for alg in [PDAlgebra::sphere(2), PDAlgebra::sphere(3), PDAlgebra::torus()] {
            for i in 0..alg.dim() {
                for j in 0..alg.dim() {
                    let ab = alg.mul(&alg.basis_vec(i), &alg.basis_vec(j));
                    let ba = alg.mul(&alg.basis_vec(j), &alg.basis_vec(i));
                    let s = sign_q(alg.degree(i) * alg.degree(j));
                    assert_eq!(ab, ba.iter().map(|c| c * &s).collect::<Vec<_>>());
                    if alg.degree(i) + alg.degree(j) != alg.n() {
                        assert!(alg.pair(i, j).is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_sphere_is_rejected() {
        let basis = vec![
            BasisElement { name: "1".into(), degree: 0 },
            BasisElement { name: "v".into(), degree: 2 },
        ];
        let r = PDAlgebra::new(2, basis, 0, vec![], vec![q(0), q(0)]);
        assert!(matches!(r, Err(Error::InvalidAlgebra(m)) if m.contains("degenerate")));
    }

    #[test]
    fn non_commutative_product_is_rejected() {
        let basis = ["1", "a", "b", "ab"]
            .iter()
            .zip([0, 1, 1, 2])
            .map(|(nm, d)| BasisElement { name: nm.to_string(), degree: d })
            .collect();
        let ab = vec![q(0), q(0), q(0), q(1)];
        let r = PDAlgebra::new(2, basis, 0, vec![(1, 2, ab.clone()), (2, 1, ab)], vec![q(0), q(0), q(0), q(1)]);
        assert!(matches!(r, Err(Error::InvalidAlgebra(m)) if m.contains("commutative")));
    }

    #[test]
    fn inhomogeneous_pairing_errors() {
        let s = PDAlgebra::sphere(2);
        assert!(matches!(s.pairing(&vec![q(1), q(1)], &s.basis_vec(0)), Err(Error::Inhomogeneous)));
    }

    #[test]
    fn json_roundtrip() {
        let t = PDAlgebra::torus();
        let back = PDAlgebra::from_json_value(&t.to_json_value()).unwrap();
        assert_eq!(back.pairing_matrix(), t.pairing_matrix());
        let js = r#"{"dimension":2,"basis":[{"name":"1","degree":0},{"name":"v","degree":2}],
                     "unit":"1","products":[],"integration":[0,"1"]}"#;
        let s = PDAlgebra::from_json_str(js).unwrap();
        assert_eq!(s.dual_of(0), &vec![q(0), q(1)]);
    }
}
