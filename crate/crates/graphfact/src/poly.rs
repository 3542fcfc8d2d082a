//! Free graded-commutative polynomial algebra over a finite table of graded
//! variables. Shared engine behind `O` and the decorated algebra `S`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalars::{Coeff, Q};

/// Variable names and degrees. Identity of a variable is its index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarTable {
    names: Vec<String>,
    degrees: Vec<i64>,
}

impl VarTable {
    pub fn new(names: Vec<String>, degrees: Vec<i64>) -> Arc<Self> {
        assert_eq!(names.len(), degrees.len());
        Arc::new(VarTable { names, degrees })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn degree(&self, v: u32) -> i64 {
        self.degrees[v as usize]
    }

    pub fn is_odd(&self, v: u32) -> bool {
        self.degrees[v as usize].rem_euclid(2) == 1
    }

    pub fn name(&self, v: u32) -> &str {
        &self.names[v as usize]
    }

    pub fn lookup(&self, name: &str) -> Result<u32> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as u32)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn word_degree(&self, word: &[u32]) -> i64 {
        word.iter().map(|&v| self.degree(v)).sum()
    }
}

/// Sorted multiset of variable ids; odd ids appear at most once.
pub type Monomial = Vec<u32>;

/// Sorts an ordered word of variables. Returns the Koszul sign of the
/// permutation, or `None` when an odd variable repeats.
pub fn normalize_word(vars: &VarTable, word: &[u32]) -> Option<(Monomial, bool)> {
    let mut w = word.to_vec();
    let mut negative = false;
    // Insertion sort: each adjacent swap of two odd variables flips the sign.
    for i in 1..w.len() {
        let mut j = i;
        while j > 0 && w[j - 1] > w[j] {
            if vars.is_odd(w[j - 1]) && vars.is_odd(w[j]) {
                negative = !negative;
            }
            w.swap(j - 1, j);
            j -= 1;
        }
    }
    if w.windows(2).any(|p| p[0] == p[1] && vars.is_odd(p[0])) {
        return None;
    }
    Some((w, negative))
}

/// Product of two normalized monomials with its Koszul sign.
fn merge(vars: &VarTable, a: &[u32], b: &[u32]) -> Option<(Monomial, bool)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut negative = false;
    // Odd variables of `a` not yet emitted; passing an odd `b` variable over
    // them costs one sign each.
    let mut odd_left: usize = a.iter().filter(|&&v| vars.is_odd(v)).count();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i] <= b[j]);
        if take_a {
            if j < b.len() && a[i] == b[j] && vars.is_odd(a[i]) {
                return None;
            }
            if vars.is_odd(a[i]) {
                odd_left -= 1;
            }
            out.push(a[i]);
            i += 1;
        } else {
            if vars.is_odd(b[j]) && odd_left % 2 == 1 {
                negative = !negative;
            }
            out.push(b[j]);
            j += 1;
        }
    }
    Some((out, negative))
}

/// Element of the polynomial algebra with coefficients in `C`.
#[derive(Clone, Debug)]
pub struct Poly<C: Coeff> {
    vars: Arc<VarTable>,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> PartialEq for Poly<C> {
    fn eq(&self, other: &Self) -> bool {
        *self.vars == *other.vars && self.terms == other.terms
    }
}

impl<C: Coeff> Poly<C> {
    pub fn zero(vars: &Arc<VarTable>) -> Self {
        Poly { vars: vars.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &Arc<VarTable>, c: C) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Vec::new(), c);
        p
    }

    pub fn one(vars: &Arc<VarTable>) -> Self {
        Self::constant(vars, C::one_value())
    }

    pub fn var(vars: &Arc<VarTable>, v: u32) -> Self {
        Self::term(vars, &[v], C::one_value())
    }

    /// `c · w₁ w₂ … w_k` for an arbitrary ordered word.
    pub fn term(vars: &Arc<VarTable>, word: &[u32], c: C) -> Self {
        let mut p = Self::zero(vars);
        if let Some((m, neg)) = normalize_word(vars, word) {
            p.add_term(m, if neg { c.negated() } else { c });
        }
        p
    }

    pub fn vars(&self) -> &Arc<VarTable> {
        &self.vars
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    pub fn into_terms(self) -> BTreeMap<Monomial, C> {
        self.terms
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

    pub fn coefficient(&self, m: &[u32]) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero_value)
    }

    /// Adds `c · m` where `m` is already normalized.
    pub fn add_term(&mut self, m: Monomial, c: C) {
        if c.vanishes() {
            return;
        }
        match self.terms.entry(m) {
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

    fn check(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.vars, &other.vars) || *self.vars == *other.vars {
            Ok(())
        } else {
            Err(Error::VariableMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
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
        let mut out = Self::zero(&self.vars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(&self.vars);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                if let Some((m, neg)) = merge(&self.vars, a, b) {
                    let c = ca.times(cb);
                    out.add_term(m, if neg { c.negated() } else { c });
                }
            }
        }
        Ok(out)
    }

    /// Degree of a homogeneous element; `None` for zero.
    pub fn degree(&self) -> Result<Option<i64>> {
        let mut deg = None;
        for m in self.terms.keys() {
            let d = self.vars.word_degree(m);
            match deg {
                None => deg = Some(d),
                Some(e) if e != d => return Err(Error::Inhomogeneous),
                _ => {}
            }
        }
        Ok(deg)
    }

    /// Splits into homogeneous components keyed by degree.
    pub fn homogeneous_parts(&self) -> BTreeMap<i64, Self> {
        let mut out: BTreeMap<i64, Self> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(self.vars.word_degree(m))
                .or_insert_with(|| Self::zero(&self.vars))
                .add_term(m.clone(), c.clone());
        }
        out
    }

    fn check_var(&self, y: u32) -> Result<()> {
        if (y as usize) < self.vars.len() {
            Ok(())
        } else {
            Err(Error::UnknownVariable(format!("#{y}")))
        }
    }

    /// Left derivation `∂⃗/∂y`: moving `y` to the front costs `(−1)^{|y|·(degrees passed)}`.
    pub fn left_derivative(&self, y: u32) -> Result<Self> {
        self.derivative(y, true)
    }

    /// Right derivation `f ∂⃖/∂y`: moving `y` to the back.
    pub fn right_derivative(&self, y: u32) -> Result<Self> {
        self.derivative(y, false)
    }

    fn derivative(&self, y: u32, left: bool) -> Result<Self> {
        self.check_var(y)?;
        let odd_y = self.vars.is_odd(y);
        let mut out = Self::zero(&self.vars);
        for (m, c) in &self.terms {
            let Some(pos) = m.iter().position(|&v| v == y) else { continue };
            let mult = m.iter().filter(|&&v| v == y).count() as i64;
            let mut rest = m.clone();
            rest.remove(pos);
            let mut coeff = c.scale(&Q::from_integer(mult.into()));
            if odd_y {
                // Odd y appears once; count odd variables passed on the relevant side.
                let passed = if left { &m[..pos] } else { &m[pos + 1..] };
                if passed.iter().filter(|&&v| self.vars.is_odd(v)).count() % 2 == 1 {
                    coeff = coeff.negated();
                }
            }
            out.add_term(rest, coeff);
        }
        Ok(out)
    }

    /// Drops every term whose coefficient is killed by `f`.
    pub fn filter_terms(&self, keep: impl Fn(&Monomial) -> bool) -> Self {
        let mut out = Self::zero(&self.vars);
        for (m, c) in &self.terms {
            if keep(m) {
                out.add_term(m.clone(), c.clone());
            }
        }
        out
    }

    /// Human-readable rendering; variables joined by `*`.
    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let coeff = c.render();
                let coeff = if coeff.contains(' ') { format!("({coeff})") } else { coeff };
                if m.is_empty() {
                    coeff
                } else {
                    let w: Vec<&str> = m.iter().map(|&v| self.vars.name(v)).collect();
                    format!("{coeff}*{}", w.join("*"))
                }
            })
            .collect();
        parts.join(" + ")
    }

    /// `[{ "monomial": [names], "coefficient": c }, …]` in canonical order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.terms
                .iter()
                .map(|(m, c)| {
                    serde_json::json!({
                        "monomial": m.iter().map(|&v| self.vars.name(v)).collect::<Vec<_>>(),
                        "coefficient": c.to_json(),
                    })
                })
                .collect(),
        )
    }

    pub fn from_json(vars: &Arc<VarTable>, v: &serde_json::Value) -> Result<Self> {
        let arr = v.as_array().ok_or_else(|| Error::Parse("polynomial must be a list of terms".into()))?;
        let mut out = Self::zero(vars);
        for t in arr {
            let names = t
                .get("monomial")
                .and_then(|m| m.as_array())
                .ok_or_else(|| Error::Parse("term without monomial".into()))?;
            let word = names
                .iter()
                .map(|n| n.as_str().ok_or_else(|| Error::Parse("variable name must be a string".into())).and_then(|s| vars.lookup(s)))
                .collect::<Result<Vec<_>>>()?;
            let c = C::from_json(t.get("coefficient").ok_or_else(|| Error::Parse("term without coefficient".into()))?)?;
            out = out.add(&Self::term(vars, &word, c))?;
        }
        Ok(out)
    }

    /// Parses expressions such as `3/2*x1*p2 - hbar^2*x1 + 1`.
    pub fn parse(vars: &Arc<VarTable>, text: &str) -> Result<Self> {
        let mut out = Self::zero(vars);
        for (sign, body) in split_terms(text)? {
            let mut c = Q::from_integer(sign.into());
            let mut hbar = 0usize;
            let mut word = Vec::new();
            for factor in body.split('*').map(str::trim) {
                if factor.is_empty() {
                    return Err(Error::Parse(format!("empty factor in '{body}'")));
                }
                if let Some(rest) = factor.strip_prefix("hbar").or_else(|| factor.strip_prefix("ħ")) {
                    hbar += match rest.strip_prefix('^') {
                        Some(k) => k.parse::<usize>().map_err(|_| Error::Parse(format!("bad ħ power '{factor}'")))?,
                        None if rest.is_empty() => 1,
                        None => return Err(Error::Parse(format!("bad factor '{factor}'"))),
                    };
                } else if factor.starts_with(|ch: char| ch.is_ascii_digit() || ch == '(') {
                    c *= crate::scalars::parse_q(factor.trim_matches(|ch| ch == '(' || ch == ')'))?;
                } else {
                    let (name, pow) = match factor.split_once('^') {
                        Some((nm, k)) => (nm, k.parse::<usize>().map_err(|_| Error::Parse(format!("bad power '{factor}'")))?),
                        None => (factor, 1),
                    };
                    let v = vars.lookup(name)?;
                    word.extend(std::iter::repeat_n(v, pow));
                }
            }
            out = out.add(&Self::term(vars, &word, C::hbar_term(c, hbar)?))?;
        }
        Ok(out)
    }
}

/// Splits on top-level `+`/`-` signs.
fn split_terms(text: &str) -> Result<Vec<(i64, String)>> {
    let mut out = Vec::new();
    let mut sign = 1i64;
    let mut cur = String::new();
    let mut prev_sig: Option<char> = None;
    for ch in text.chars() {
        match ch {
            '+' | '-' if !matches!(prev_sig, Some('^') | Some('*') | Some('/')) && !cur.trim().is_empty() => {
                out.push((sign, cur.trim().to_string()));
                cur.clear();
                sign = if ch == '-' { -1 } else { 1 };
            }
            '+' | '-' if cur.trim().is_empty() => {
                if ch == '-' {
                    sign = -sign;
                }
            }
            c if c.is_whitespace() => {
                cur.push(c);
                continue;
            }
            _ => cur.push(ch),
        }
        prev_sig = Some(ch);
    }
    if cur.trim().is_empty() {
        if out.is_empty() {
            return Err(Error::Parse("empty expression".into()));
        }
        return Err(Error::Parse("trailing sign".into()));
    }
    out.push((sign, cur.trim().to_string()));
    Ok(out)
}
