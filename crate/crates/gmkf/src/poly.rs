//! Sparse multivariate polynomials over `f64` and the graded monomial basis.
//!
//! Every matrix index in the relaxation machinery derives from one monomial
//! ordering: graded lexicographic with `x1` ranked highest. For `n = 2`,
//! `r = 2` the basis reads `[1, x1, x2, x1^2, x1*x2, x2^2]`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients with absolute value below this are pruned after arithmetic.
pub const COEFF_PRUNE_EPS: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("variable count mismatch: expected {expected}, got {got}")]
    VarMismatch { expected: usize, got: usize },
    #[error("point dimension mismatch: polynomial has {expected} variables, point has {got}")]
    PointMismatch { expected: usize, got: usize },
    #[error("binomial overflow computing basis size for r={r}, n={n}")]
    BasisOverflow { r: u32, n: usize },
    #[error("empty polynomial vector")]
    EmptyVector,
    #[error("substitution range {start}..{end} out of bounds for {n_vars} variables")]
    BadSubstitution { start: usize, end: usize, n_vars: usize },
}

/// Exponent tuple of a monomial, one entry per variable.
///
/// Ordered graded-lexicographically: lower total degree first, and within a
/// degree the tuple with the larger leading exponents first (so `x1^2`
/// precedes `x1*x2` precedes `x2^2`).
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exponent(pub Vec<u32>);

impl Exponent {
    pub fn zero(n: usize) -> Self {
        Exponent(vec![0; n])
    }

    /// Unit exponent for variable `i` among `n` variables.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Exponent(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Componentwise sum.
    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.len(), other.len());
        Exponent(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Componentwise difference, `None` if any entry would go negative.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<u32>>>()
            .map(Exponent)
    }

    /// Evaluate the monomial `x^alpha` at a point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.len(), x.len());
        self.0
            .iter()
            .zip(x.iter())
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    /// Embed into a larger variable set, placing this tuple at `offset`.
    pub fn embed(&self, n_total: usize, offset: usize) -> Exponent {
        let mut e = vec![0; n_total];
        e[offset..offset + self.len()].copy_from_slice(&self.0);
        Exponent(e)
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // within a degree: descending plain-lex, so x1-heavy tuples first
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if a == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, a)?;
            }
        }
        Ok(())
    }
}

/// Number of monomials in `n` variables of total degree at most `r`,
/// i.e. `C(n + r, n)`.
pub fn basis_size(r: u32, n: usize) -> Result<usize, PolyError> {
    let mut acc: u128 = 1;
    for k in 1..=n as u128 {
        acc = acc
            .checked_mul(r as u128 + k)
            .ok_or(PolyError::BasisOverflow { r, n })?
            / k;
    }
    usize::try_from(acc).map_err(|_| PolyError::BasisOverflow { r, n })
}

/// All exponent tuples with total degree at most `r`, in graded order.
///
/// The first entry is always the constant monomial; the tuples of each degree
/// follow with `x1`-heavy tuples first.
pub fn enumerate_basis(r: u32, n: usize) -> Vec<Exponent> {
    let mut out = Vec::with_capacity(basis_size(r, n).unwrap_or(0));
    let mut current = vec![0u32; n];
    for d in 0..=r {
        push_compositions(d, 0, &mut current, &mut out);
    }
    out
}

fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Exponent>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(Exponent(current.clone()));
        current[pos] = 0;
        return;
    }
    // assign the leading variable its largest share first to get graded order
    for a in (0..=remaining).rev() {
        current[pos] = a;
        push_compositions(remaining - a, pos + 1, current, out);
        current[pos] = 0;
    }
}

/// Evaluate the monomial vector `phi_r(x)` (all monomials of degree 1..=r,
/// constant excluded) at a numeric point.
pub fn phi_eval(r: u32, x: &[f64]) -> DVector<f64> {
    let basis = enumerate_basis(r, x.len());
    DVector::from_iterator(basis.len() - 1, basis.iter().skip(1).map(|e| e.eval(x)))
}

/// Evaluate the full lifted vector `v_r(x) = [1; phi_r(x)]`.
pub fn v_eval(r: u32, x: &[f64]) -> DVector<f64> {
    let basis = enumerate_basis(r, x.len());
    DVector::from_iterator(basis.len(), basis.iter().map(|e| e.eval(x)))
}

/// Sparse multivariate polynomial with `f64` coefficients.
///
/// Terms are kept in graded monomial order; coefficients with absolute value
/// below [`COEFF_PRUNE_EPS`] are dropped after every arithmetic operation.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(Exponent::zero(n_vars), c);
        p
    }

    /// The monomial `x_{i+1}` (0-based variable index) among `n_vars` variables.
    pub fn var(n_vars: usize, i: usize) -> Self {
        assert!(i < n_vars, "variable index out of range");
        let mut p = Polynomial::zero(n_vars);
        p.add_term(Exponent::unit(n_vars, i), 1.0);
        p
    }

    pub fn from_terms(
        n_vars: usize,
        terms: impl IntoIterator<Item = (Exponent, f64)>,
    ) -> Result<Self, PolyError> {
        let mut p = Polynomial::zero(n_vars);
        for (e, c) in terms {
            if e.len() != n_vars {
                return Err(PolyError::VarMismatch {
                    expected: n_vars,
                    got: e.len(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Terms in graded monomial order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    /// Total degree; zero polynomial reports degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    fn add_term(&mut self, e: Exponent, c: f64) {
        debug_assert_eq!(e.len(), self.n_vars);
        let entry = self.terms.entry(e.clone()).or_insert(0.0);
        *entry += c;
        if entry.abs() < COEFF_PRUNE_EPS {
            self.terms.remove(&e);
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_PRUNE_EPS);
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        if self.n_vars != other.n_vars {
            return Err(PolyError::VarMismatch {
                expected: self.n_vars,
                got: other.n_vars,
            });
        }
        let mut out = self.clone();
        for (e, c) in other.terms.iter() {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n_vars);
        for (e, c) in self.terms.iter() {
            let v = c * s;
            if v.abs() >= COEFF_PRUNE_EPS {
                out.terms.insert(e.clone(), v);
            }
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        if self.n_vars != other.n_vars {
            return Err(PolyError::VarMismatch {
                expected: self.n_vars,
                got: other.n_vars,
            });
        }
        let mut out = Polynomial::zero(self.n_vars);
        for (ea, ca) in self.terms.iter() {
            for (eb, cb) in other.terms.iter() {
                *out.terms.entry(ea.add(eb)).or_insert(0.0) += ca * cb;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Multiply by a single monomial `x^mu`.
    pub fn mul_monomial(&self, mu: &Exponent) -> Polynomial {
        let mut out = Polynomial::zero(self.n_vars);
        for (e, c) in self.terms.iter() {
            out.terms.insert(e.add(mu), *c);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.n_vars, 1.0);
        for _ in 0..k {
            out = out.mul(self).expect("same variable set");
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n_vars {
            return Err(PolyError::PointMismatch {
                expected: self.n_vars,
                got: x.len(),
            });
        }
        Ok(self.terms.iter().map(|(e, c)| c * e.eval(x)).sum())
    }

    /// Substitute numeric values for the variable range `start..start+values.len()`
    /// and reindex the remaining variables in order.
    pub fn substitute_range(&self, start: usize, values: &[f64]) -> Result<Polynomial, PolyError> {
        let end = start + values.len();
        if end > self.n_vars {
            return Err(PolyError::BadSubstitution {
                start,
                end,
                n_vars: self.n_vars,
            });
        }
        let n_out = self.n_vars - values.len();
        let mut out = Polynomial::zero(n_out);
        for (e, c) in self.terms.iter() {
            let mut factor = *c;
            for (k, &v) in values.iter().enumerate() {
                factor *= v.powi(e.0[start + k] as i32);
            }
            let mut rest: Vec<u32> = Vec::with_capacity(n_out);
            rest.extend_from_slice(&e.0[..start]);
            rest.extend_from_slice(&e.0[end..]);
            *out.terms.entry(Exponent(rest)).or_insert(0.0) += factor;
        }
        out.prune();
        Ok(out)
    }

    /// Re-express over `n_total` variables with this polynomial's variables
    /// mapped to `offset..offset+n_vars`.
    pub fn embed(&self, n_total: usize, offset: usize) -> Polynomial {
        assert!(offset + self.n_vars <= n_total);
        let mut out = Polynomial::zero(n_total);
        for (e, c) in self.terms.iter() {
            out.terms.insert(e.embed(n_total, offset), *c);
        }
        out
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter() {
            if first {
                write!(f, "{c}")?;
                first = false;
            } else if *c >= 0.0 {
                write!(f, " + {c}")?;
            } else {
                write!(f, " - {}", -c)?;
            }
            if !e.is_constant() {
                write!(f, "*{e}")?;
            }
        }
        Ok(())
    }
}

/// JSON schema: `{"n": <vars>, "terms": [{"alpha": [..], "c": <coeff>}, ..]}`.
#[derive(Serialize, Deserialize)]
struct PolyRepr {
    n: usize,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    alpha: Vec<u32>,
    c: f64,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        PolyRepr {
            n: self.n_vars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| TermRepr {
                    alpha: e.0.clone(),
                    c: *c,
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(de)?;
        Polynomial::from_terms(
            repr.n,
            repr.terms.into_iter().map(|t| (Exponent(t.alpha), t.c)),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Fixed-length vector of polynomials over a shared variable set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyVector {
    n_vars: usize,
    entries: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(n_vars: usize, entries: Vec<Polynomial>) -> Result<Self, PolyError> {
        if entries.is_empty() {
            return Err(PolyError::EmptyVector);
        }
        for p in &entries {
            if p.n_vars() != n_vars {
                return Err(PolyError::VarMismatch {
                    expected: n_vars,
                    got: p.n_vars(),
                });
            }
        }
        Ok(PolyVector { n_vars, entries })
    }

    /// The identity vector `(x1, .., xn)`.
    pub fn identity(n_vars: usize) -> Self {
        PolyVector {
            n_vars,
            entries: (0..n_vars).map(|i| Polynomial::var(n_vars, i)).collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> &Polynomial {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>, PolyError> {
        let mut out = DVector::zeros(self.len());
        for (i, p) in self.entries.iter().enumerate() {
            out[i] = p.eval(x)?;
        }
        Ok(out)
    }

    pub fn substitute_range(&self, start: usize, values: &[f64]) -> Result<PolyVector, PolyError> {
        let entries = self
            .entries
            .iter()
            .map(|p| p.substitute_range(start, values))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyVector {
            n_vars: self.n_vars - values.len(),
            entries,
        })
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(Polynomial::degree).max().unwrap_or(0)
    }
}

/// Compose the monomial vector with a polynomial map: `phi_r(v(x))`.
///
/// Entry `j` is the product `prod_i v_i(x)^{alpha_i}` for the `j`-th
/// non-constant basis exponent of `enumerate_basis(r, v.len())`.
pub fn lift_phi(r: u32, v: &PolyVector) -> Result<PolyVector, PolyError> {
    let basis = enumerate_basis(r, v.len());
    // cache powers of each entry up to r
    let mut powers: Vec<Vec<Polynomial>> = Vec::with_capacity(v.len());
    for p in v.entries() {
        let mut row = Vec::with_capacity(r as usize + 1);
        row.push(Polynomial::constant(v.n_vars(), 1.0));
        for k in 1..=r as usize {
            let prev = &row[k - 1];
            row.push(prev.mul(p)?);
        }
        powers.push(row);
    }
    let mut entries = Vec::with_capacity(basis.len() - 1);
    for alpha in basis.iter().skip(1) {
        let mut prod = Polynomial::constant(v.n_vars(), 1.0);
        for (i, &a) in alpha.0.iter().enumerate() {
            if a > 0 {
                prod = prod.mul(&powers[i][a as usize])?;
            }
        }
        entries.push(prod);
    }
    PolyVector::new(v.n_vars(), entries)
}
