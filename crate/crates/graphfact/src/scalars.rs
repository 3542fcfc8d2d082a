//! Exact scalars: arbitrary-precision rationals and truncated series in a
//! formal parameter `ħ`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact rational number, always kept in lowest terms with positive denominator.
pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// `(-1)^k` as a rational.
pub fn sign_q(k: i64) -> Q {
    if k.rem_euclid(2) == 0 {
        <Q as One>::one()
    } else {
        -<Q as One>::one()
    }
}

pub fn add(a: &Q, b: &Q) -> Q {
    a + b
}

pub fn mul(a: &Q, b: &Q) -> Q {
    a * b
}

pub fn neg(a: &Q) -> Q {
    -a
}

pub fn inv(a: &Q) -> Result<Q> {
    if Zero::is_zero(a) {
        return Err(Error::DivisionByZero);
    }
    Ok(a.recip())
}

/// Renders as `p/q`, or `p` when the denominator is one.
pub fn format_q(a: &Q) -> String {
    if a.denom().is_one() {
        a.numer().to_string()
    } else {
        format!("{}/{}", a.numer(), a.denom())
    }
}

pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if Zero::is_zero(&d) {
                return Err(Error::DivisionByZero);
            }
            Ok(Q::new(n, d))
        }
        None => Ok(Q::from_integer(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

/// Serde adapter that stores a rational as the string `"p/q"`.
pub mod q_string {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_q(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

// ============================================================================
// Coefficient rings
// ============================================================================

/// A commutative ring of coefficients that contains the rationals.
pub trait Coeff: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero_value() -> Self;
    fn one_value() -> Self;
    fn vanishes(&self) -> bool;
    fn plus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn negated(&self) -> Self;
    fn scale(&self, c: &Q) -> Self;
    fn from_q(c: Q) -> Self;
    fn render(&self) -> String;
    /// `c ħ^k`; rings without `ħ` reject `k > 0`.
    fn hbar_term(c: Q, k: usize) -> Result<Self>;
    fn to_json(&self) -> serde_json::Value;
    fn from_json(v: &serde_json::Value) -> Result<Self>;
}

impl Coeff for Q {
    fn zero_value() -> Self {
        Zero::zero()
    }
    fn one_value() -> Self {
        One::one()
    }
    fn vanishes(&self) -> bool {
        Zero::is_zero(self)
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn negated(&self) -> Self {
        -self
    }
    fn scale(&self, c: &Q) -> Self {
        self * c
    }
    fn from_q(c: Q) -> Self {
        c
    }
    fn render(&self) -> String {
        format_q(self)
    }
    fn hbar_term(c: Q, k: usize) -> Result<Self> {
        if k == 0 {
            Ok(c)
        } else {
            Err(Error::Parse("ħ is not available over plain rationals".into()))
        }
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_q(self))
    }
    fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => parse_q(s),
            serde_json::Value::Number(n) => {
                n.as_i64().map(q).ok_or_else(|| Error::Parse(format!("non-integer number {n}")))
            }
            _ => Err(Error::Parse(format!("expected rational, got {v}"))),
        }
    }
}

/// Truncated power series `Σ_{k ≤ T} c_k ħ^k`.
///
/// `order == None` marks an exact (untruncated) value; such values arise from
/// embedding rationals and adopt the order of whatever they meet.
#[derive(Clone, Debug)]
pub struct HbarSeries {
    coeffs: Vec<Q>,
    order: Option<usize>,
}

impl HbarSeries {
    pub fn new(mut coeffs: Vec<Q>, order: usize) -> Self {
        coeffs.truncate(order + 1);
        let mut s = HbarSeries { coeffs, order: Some(order) };
        s.trim();
        s
    }

    pub fn constant(c: Q) -> Self {
        let mut s = HbarSeries { coeffs: vec![c], order: None };
        s.trim();
        s
    }

    /// `ħ^k` truncated at `order` (zero when `k > order`).
    pub fn hbar_power(k: usize, order: usize) -> Self {
        let mut coeffs = vec![<Q as Zero>::zero(); k + 1];
        coeffs[k] = <Q as One>::one();
        HbarSeries::new(coeffs, order)
    }

    pub fn order(&self) -> Option<usize> {
        self.order
    }

    pub fn coeff(&self, k: usize) -> Q {
        self.coeffs.get(k).cloned().unwrap_or_else(<Q as Zero>::zero)
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    /// Highest power with a possibly nonzero coefficient.
    pub fn max_power(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = self.order.map_or(order, |o| o.min(order));
        HbarSeries::new(self.coeffs.clone(), order)
    }

    /// Value at `ħ = 0`.
    pub fn constant_term(&self) -> Q {
        self.coeff(0)
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
    }

    fn joint_order(a: Option<usize>, b: Option<usize>) -> Option<usize> {
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, None) => x,
            (None, y) => y,
        }
    }

    fn build(mut coeffs: Vec<Q>, order: Option<usize>) -> Self {
        if let Some(o) = order {
            coeffs.truncate(o + 1);
        }
        let mut s = HbarSeries { coeffs, order };
        s.trim();
        s
    }
}

impl PartialEq for HbarSeries {
    fn eq(&self, other: &Self) -> bool {
        let o = Self::joint_order(self.order, other.order);
        let len = self.coeffs.len().max(other.coeffs.len());
        let len = o.map_or(len, |o| len.min(o + 1));
        (0..len).all(|k| self.coeff(k) == other.coeff(k))
    }
}

impl Coeff for HbarSeries {
    fn zero_value() -> Self {
        HbarSeries { coeffs: Vec::new(), order: None }
    }
    fn one_value() -> Self {
        HbarSeries::constant(<Q as One>::one())
    }
    fn vanishes(&self) -> bool {
        self.coeffs.is_empty()
    }
    fn plus(&self, other: &Self) -> Self {
        let order = Self::joint_order(self.order, other.order);
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len).map(|k| self.coeff(k) + other.coeff(k)).collect();
        Self::build(coeffs, order)
    }
    fn times(&self, other: &Self) -> Self {
        let order = Self::joint_order(self.order, other.order);
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return HbarSeries { coeffs: Vec::new(), order };
        }
        let mut len = self.coeffs.len() + other.coeffs.len() - 1;
        if let Some(o) = order {
            len = len.min(o + 1);
        }
        let mut coeffs = vec![<Q as Zero>::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j < len {
                    coeffs[i + j] += a * b;
                }
            }
        }
        Self::build(coeffs, order)
    }
    fn negated(&self) -> Self {
        HbarSeries { coeffs: self.coeffs.iter().map(|c| -c).collect(), order: self.order }
    }
    fn scale(&self, c: &Q) -> Self {
        Self::build(self.coeffs.iter().map(|x| x * c).collect(), self.order)
    }
    fn from_q(c: Q) -> Self {
        HbarSeries::constant(c)
    }
    fn render(&self) -> String {
        let mut parts = Vec::new();
        for (k, c) in self.coeffs.iter().enumerate() {
            if Zero::is_zero(c) {
                continue;
            }
            parts.push(match k {
                0 => format_q(c),
                1 => format!("{}ħ", format_q(c)),
                _ => format!("{}ħ^{k}", format_q(c)),
            });
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
    fn hbar_term(c: Q, k: usize) -> Result<Self> {
        let mut coeffs = vec![<Q as Zero>::zero(); k + 1];
        coeffs[k] = c;
        Ok(Self::build(coeffs, None))
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("series serializes")
    }
    fn from_json(v: &serde_json::Value) -> Result<Self> {
        if v.is_object() {
            return Ok(serde_json::from_value(v.clone())?);
        }
        Q::from_json(v).map(HbarSeries::constant)
    }
}

impl fmt::Display for HbarSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Serialize, Deserialize)]
struct HbarWire {
    order: Option<usize>,
    coefficients: Vec<String>,
}

impl Serialize for HbarSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HbarWire { order: self.order, coefficients: self.coeffs.iter().map(format_q).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HbarSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = HbarWire::deserialize(d)?;
        let coeffs = w
            .coefficients
            .iter()
            .map(|c| parse_q(c))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(HbarSeries::build(coeffs, w.order))
    }
}

/// `|a|` for rationals, used by pivoting heuristics.
pub fn abs_q(a: &Q) -> Q {
    a.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rational_examples() {
        assert_eq!(add(&qf(1, 2), &qf(1, 3)), qf(5, 6));
        assert!(matches!(inv(&q(0)), Err(Error::DivisionByZero)));
        assert_eq!(format_q(&qf(2, 4)), "1/2");
        assert_eq!(parse_q("-6/4").unwrap(), qf(-3, 2));
        assert_eq!(parse_q("7").unwrap(), q(7));
        assert!(parse_q("1/0").is_err());
    }

    fn series(c: &[i64], t: usize) -> HbarSeries {
        HbarSeries::new(c.iter().map(|&x| q(x)).collect(), t)
    }

    #[test]
    fn hbar_examples() {
        assert_eq!(series(&[1, 1], 1).times(&series(&[1, -1], 1)), series(&[1], 1));
        assert!(series(&[0, 1], 1).times(&series(&[0, 1], 1)).vanishes());
        assert_eq!(series(&[1, 1], 2).times(&series(&[1, 1], 2)), series(&[1, 2, 1], 2));
    }

    #[test]
    fn mixed_orders_truncate_to_minimum() {
        let p = series(&[1, 1, 1], 2).times(&series(&[1, 1], 1));
        assert_eq!(p.order(), Some(1));
        assert_eq!(p, series(&[1, 2], 1));
    }

    #[test]
    fn series_json_roundtrip() {
        let s = HbarSeries::new(vec![qf(1, 2), q(0), qf(-3, 7)], 3);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"order":3,"coefficients":["1/2","0","-3/7"]}"#);
        let back: HbarSeries = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    fn arb_q() -> impl Strategy<Value = Q> {
        (-20i64..20, 1i64..9).prop_map(|(n, d)| qf(n, d))
    }

    fn arb_series() -> impl Strategy<Value = HbarSeries> {
        prop::collection::vec(arb_q(), 0..4).prop_map(|c| HbarSeries::new(c, 3))
    }

    proptest! {
        #[test]
        fn rational_field_axioms(a in arb_q(), b in arb_q(), c in arb_q()) {
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            if !Zero::is_zero(&a) {
                prop_assert_eq!(&a * &inv(&a).unwrap(), q(1));
            }
        }

        #[test]
        fn series_ring_axioms(a in arb_series(), b in arb_series(), c in arb_series()) {
            prop_assert_eq!(a.times(&b).times(&c), a.times(&b.times(&c)));
            prop_assert_eq!(a.times(&b), b.times(&a));
            prop_assert_eq!(a.times(&b.plus(&c)), a.times(&b).plus(&a.times(&c)));
            prop_assert_eq!(a.plus(&b).plus(&c), a.plus(&b.plus(&c)));
        }

        #[test]
        fn truncation_is_multiplicative(a in arb_series(), b in arb_series(), t in 0usize..3) {
            prop_assert_eq!(a.truncate(t).times(&b.truncate(t)), a.times(&b).truncate(t));
        }
    }
}
