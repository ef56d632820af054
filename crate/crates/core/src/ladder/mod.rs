//! Symbolic algebra of bosonic ladder operators.
//!
//! Operators are unit-normalised discrete modes with `[b_j, b†_k] = δ_jk`.
//! A [`LadderPolynomial`] may hold arbitrary (not yet ordered) products;
//! [`normal_order`] rewrites it into the canonical form where every creation
//! operator stands left of every annihilation operator and each block is
//! sorted by mode.

mod compile;

pub use compile::{
    compile_hierarchy, compile_rhs, CoefficientStore, ContractionProgram, ContractionTerm,
    IndexLabel, Kernel, KernelEntry, ProgramSet,
};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients whose magnitude falls below this after merging are dropped.
pub const DEDUP_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Create,
    Annihilate,
}

/// A single `b†_mode` or `b_mode`.
///
/// The derived ordering compares `kind` first (creation before annihilation)
/// and then `mode`, which is exactly the canonical normal-form order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LadderOp {
    pub kind: OpKind,
    pub mode: usize,
}

impl LadderOp {
    pub fn create(mode: usize) -> Self {
        LadderOp {
            kind: OpKind::Create,
            mode,
        }
    }

    pub fn annihilate(mode: usize) -> Self {
        LadderOp {
            kind: OpKind::Annihilate,
            mode,
        }
    }

    pub fn is_create(&self) -> bool {
        self.kind == OpKind::Create
    }

    pub fn adjoint(&self) -> Self {
        match self.kind {
            OpKind::Create => LadderOp::annihilate(self.mode),
            OpKind::Annihilate => LadderOp::create(self.mode),
        }
    }
}

impl fmt::Display for LadderOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::Create => write!(f, "b†_{}", self.mode),
            OpKind::Annihilate => write!(f, "b_{}", self.mode),
        }
    }
}

/// Parses the compact config notation `c<mode>` / `a<mode>`.
impl FromStr for LadderOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("ladder operator {s:?}; expected c<mode> or a<mode>"));
        let (head, tail) = s.split_at(s.char_indices().nth(1).map(|(i, _)| i).ok_or_else(bad)?);
        let mode: usize = tail.parse().map_err(|_| bad())?;
        match head {
            "c" => Ok(LadderOp::create(mode)),
            "a" => Ok(LadderOp::annihilate(mode)),
            _ => Err(bad()),
        }
    }
}

/// One product of ladder operators with a complex coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: Complex64,
    pub factors: Vec<LadderOp>,
}

impl Monomial {
    pub fn is_normal_ordered(&self) -> bool {
        self.factors.windows(2).all(|w| w[0] <= w[1])
    }
}

/// A finite sum of monomials keyed by their factor sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LadderPolynomial {
    terms: BTreeMap<Vec<LadderOp>, Complex64>,
}

impl LadderPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        Self::monomial(c, Vec::new())
    }

    pub fn monomial(c: impl Into<Complex64>, factors: Vec<LadderOp>) -> Self {
        let mut p = Self::zero();
        p.add_term(c, factors);
        p
    }

    pub fn create(mode: usize) -> Self {
        Self::monomial(1.0, vec![LadderOp::create(mode)])
    }

    pub fn annihilate(mode: usize) -> Self {
        Self::monomial(1.0, vec![LadderOp::annihilate(mode)])
    }

    /// `Σ_k b†_k b_k` over `n_modes` modes.
    pub fn number_operator(n_modes: usize) -> Self {
        let mut p = Self::zero();
        for k in 0..n_modes {
            p.add_term(1.0, vec![LadderOp::create(k), LadderOp::annihilate(k)]);
        }
        p
    }

    /// Adds `c · factors`, merging with an existing identical factor sequence.
    pub fn add_term(&mut self, c: impl Into<Complex64>, factors: Vec<LadderOp>) {
        let c = c.into();
        let entry = self.terms.entry(factors).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[LadderOp], Complex64)> + '_ {
        self.terms.iter().map(|(f, c)| (f.as_slice(), *c))
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(f, c)| Monomial {
                coefficient: *c,
                factors: f.clone(),
            })
            .collect()
    }

    pub fn coefficient(&self, factors: &[LadderOp]) -> Complex64 {
        self.terms.get(factors).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.norm() < DEDUP_THRESHOLD)
    }

    /// Maximum factor count over all terms; zero for scalars and the empty sum.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_normal_ordered(&self) -> bool {
        self.terms.keys().all(|f| f.windows(2).all(|w| w[0] <= w[1]))
    }

    pub fn max_mode(&self) -> Option<usize> {
        self.terms.keys().flatten().map(|op| op.mode).max()
    }

    pub fn check_modes(&self, n_modes: usize) -> Result<()> {
        match self.max_mode() {
            Some(mode) if mode >= n_modes => Err(Error::InvalidModel(format!(
                "mode index {mode} out of range for {n_modes} modes"
            ))),
            _ => Ok(()),
        }
    }

    pub fn scale(&self, s: impl Into<Complex64>) -> Self {
        let s = s.into();
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= s);
        out.prune()
    }

    /// Hermitian adjoint, term by term: factors reversed and flipped, coefficient conjugated.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (f, c) in &self.terms {
            out.add_term(c.conj(), f.iter().rev().map(LadderOp::adjoint).collect());
        }
        out
    }

    /// The coefficient criterion on the normal form: each term `c·F` is
    /// matched by `conj(c)` on its reversed-and-conjugated factor sequence.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let normal = normal_order(self);
        normal.terms.iter().all(|(f, c)| {
            let mut partner: Vec<LadderOp> = f.iter().rev().map(LadderOp::adjoint).collect();
            partner.sort_unstable();
            (normal.coefficient(&partner) - c.conj()).norm() <= tol
        })
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() >= DEDUP_THRESHOLD);
        self
    }
}

impl fmt::Display for LadderPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (factors, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "({}{:+}i)", c.re, c.im)?;
            }
            for op in factors {
                write!(f, " {op}")?;
            }
        }
        Ok(())
    }
}

impl Add for &LadderPolynomial {
    type Output = LadderPolynomial;

    fn add(self, rhs: &LadderPolynomial) -> LadderPolynomial {
        let mut out = self.clone();
        for (f, c) in &rhs.terms {
            out.add_term(*c, f.clone());
        }
        out.prune()
    }
}

impl Sub for &LadderPolynomial {
    type Output = LadderPolynomial;

    fn sub(self, rhs: &LadderPolynomial) -> LadderPolynomial {
        let mut out = self.clone();
        for (f, c) in &rhs.terms {
            out.add_term(-*c, f.clone());
        }
        out.prune()
    }
}

impl Neg for &LadderPolynomial {
    type Output = LadderPolynomial;

    fn neg(self) -> LadderPolynomial {
        self.scale(-1.0)
    }
}

/// Raw operator product (concatenation of factor sequences, no reordering).
impl Mul for &LadderPolynomial {
    type Output = LadderPolynomial;

    fn mul(self, rhs: &LadderPolynomial) -> LadderPolynomial {
        let mut out = LadderPolynomial::zero();
        for (fa, ca) in &self.terms {
            for (fb, cb) in &rhs.terms {
                let mut f = fa.clone();
                f.extend_from_slice(fb);
                out.add_term(ca * cb, f);
            }
        }
        out.prune()
    }
}

/// Multiplies a normal-ordered monomial on the right by one operator and
/// accumulates the normal-ordered result into `out`.
fn push_right(out: &mut BTreeMap<Vec<LadderOp>, Complex64>, key: &[LadderOp], c: Complex64, op: LadderOp) {
    let insert_sorted = |key: &[LadderOp], op: LadderOp| {
        let mut k = key.to_vec();
        let pos = k.partition_point(|x| *x <= op);
        k.insert(pos, op);
        k
    };
    *out.entry(insert_sorted(key, op)).or_default() += c;
    if op.is_create() {
        // b_k^r b†_k = b†_k b_k^r + r b_k^(r-1); other annihilators commute.
        let target = LadderOp::annihilate(op.mode);
        let count = key.iter().filter(|x| **x == target).count();
        if count > 0 {
            let pos = key.iter().position(|x| *x == target).unwrap();
            let mut reduced = key.to_vec();
            reduced.remove(pos);
            *out.entry(reduced).or_default() += c * count as f64;
        }
    }
}

/// Rewrites `poly` into normal form with the canonical commutator.
///
/// The result equals the input as an operator and its degree never exceeds the input degree.
pub fn normal_order(poly: &LadderPolynomial) -> LadderPolynomial {
    let mut result: BTreeMap<Vec<LadderOp>, Complex64> = BTreeMap::new();
    for (factors, coeff) in &poly.terms {
        let mut current: BTreeMap<Vec<LadderOp>, Complex64> = BTreeMap::new();
        current.insert(Vec::new(), *coeff);
        for &op in factors {
            let mut next = BTreeMap::new();
            for (key, c) in &current {
                push_right(&mut next, key, *c, op);
            }
            current = next;
        }
        for (key, c) in current {
            *result.entry(key).or_default() += c;
        }
    }
    LadderPolynomial { terms: result }.prune()
}

/// Normal-ordered product `a · b`.
pub fn product(a: &LadderPolynomial, b: &LadderPolynomial) -> LadderPolynomial {
    normal_order(&(a * b))
}

/// The plain commutator `[a, b] = ab − ba`, normal ordered.
pub fn commutator(a: &LadderPolynomial, b: &LadderPolynomial) -> LadderPolynomial {
    &product(a, b) - &product(b, a)
}

/// Maximum factor count of a normal-ordered polynomial.
pub fn canonical_degree(poly: &LadderPolynomial) -> usize {
    poly.degree()
}
