//! Moment-relaxation assembly: auxiliary basis matrices, moment (redundancy)
//! constraints, localizing constraints, and the resulting SDP data.
//!
//! For the lifted vector `v_r(x) = [1; phi_r(x)]` the moment matrix
//! `M_r(x) = v_r(x) v_r(x)^T` has entry `x^(alpha+beta)` at `(alpha, beta)`.
//! Each monomial `x^gamma` with `|gamma| <= 2r` therefore appears at every
//! index pair decomposing `gamma`; the machinery here encodes that redundancy:
//!
//! - `B[gamma]` averages the decomposition slots so that
//!   `<B[gamma], M_r(x)> = x^gamma`,
//! - `Bperp[gamma, alpha]` differences two decomposition slots so that
//!   `<Bperp, M_r(x)> = 0` identically; together the two families form an
//!   orthogonal basis of the symmetric matrices,
//! - a localizing matrix `G[g, mu]` reads `g(x) * x^mu` out of `M_r(x)`,
//!   turning an equality constraint `g(x) = 0` into linear trace constraints.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::poly::{enumerate_basis, Exponent, PolyError, Polynomial};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("polynomial has {got} variables but the relaxation is over {expected}")]
    VarMismatch { expected: usize, got: usize },
    #[error("degree {deg} exceeds the relaxation degree bound 2r = {max}")]
    DegreeTooHigh { deg: u32, max: u32 },
    #[error("constraint polynomial is constant; it cannot define a feasible set")]
    ConstantConstraint,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Symmetric matrix stored as upper-triangle triplets `(i, j, v)` with
/// `i <= j`; the value applies to both `(i, j)` and `(j, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSparse {
    dim: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SymSparse {
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for (i, j, v) in triplets {
            debug_assert!(i < dim && j < dim);
            let key = if i <= j {
                (i as u32, j as u32)
            } else {
                (j as u32, i as u32)
            };
            *map.entry(key).or_insert(0.0) += v;
        }
        let mut entries: Vec<(u32, u32, f64)> = map
            .into_iter()
            .filter(|(_, v)| v.abs() >= 1e-14)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        SymSparse { dim, entries }
    }

    pub fn from_dense(m: &DMatrix<f64>, prune: f64) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                if v.abs() >= prune {
                    entries.push((i as u32, j as u32, v));
                }
            }
        }
        SymSparse {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn triplets(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i as usize, j as usize)] = v;
            m[(j as usize, i as usize)] = v;
        }
        m
    }

    /// Frobenius inner product with a symmetric dense matrix.
    pub fn inner(&self, t: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            let tij = t[(i as usize, j as usize)];
            acc += if i == j { v * tij } else { 2.0 * v * tij };
        }
        acc
    }

    /// Frobenius inner product with another symmetric sparse matrix.
    pub fn inner_sparse(&self, other: &SymSparse) -> f64 {
        let (mut a, mut b) = (self.entries.iter(), other.entries.iter());
        let (mut na, mut nb) = (a.next(), b.next());
        let mut acc = 0.0;
        while let (Some(&(i1, j1, v1)), Some(&(i2, j2, v2))) = (na, nb) {
            match (i1, j1).cmp(&(i2, j2)) {
                std::cmp::Ordering::Less => na = a.next(),
                std::cmp::Ordering::Greater => nb = b.next(),
                std::cmp::Ordering::Equal => {
                    acc += if i1 == j1 { v1 * v2 } else { 2.0 * v1 * v2 };
                    na = a.next();
                    nb = b.next();
                }
            }
        }
        acc
    }

    /// `out += s * M` over both triangles.
    pub fn add_scaled_to(&self, out: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            out[(i as usize, j as usize)] += s * v;
            if i != j {
                out[(j as usize, i as usize)] += s * v;
            }
        }
    }

    /// Quadratic form `v^T M v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for &(i, j, c) in &self.entries {
            let prod = c * v[i as usize] * v[j as usize];
            acc += if i == j { prod } else { 2.0 * prod };
        }
        acc
    }

    /// First column of the dense matrix (column index 0).
    pub fn column0(&self) -> DVector<f64> {
        let mut col = DVector::zeros(self.dim);
        for &(i, j, v) in &self.entries {
            if i == 0 {
                col[j as usize] = v;
            }
            if j == 0 {
                col[i as usize] = v;
            }
        }
        col
    }

    /// `out = W * M * W` for symmetric `W`, written as rank-1 updates with
    /// the columns of `W`; `out` is overwritten.
    pub fn waw_into(&self, w: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let s = self.dim;
        for &(i, j, v) in &self.entries {
            let wi = w.column(i as usize);
            let wj = w.column(j as usize);
            if i == j {
                // out += v * wi wi^T
                for c in 0..s {
                    let f = v * wi[c];
                    if f != 0.0 {
                        let mut col = out.column_mut(c);
                        col.axpy(f, &wi, 1.0);
                    }
                }
            } else {
                // out += v * (wi wj^T + wj wi^T)
                for c in 0..s {
                    let fi = v * wj[c];
                    let fj = v * wi[c];
                    let mut col = out.column_mut(c);
                    col.axpy(fi, &wi, 1.0);
                    col.axpy(fj, &wj, 1.0);
                }
            }
        }
    }
}

/// One moment (redundancy) constraint matrix `Bperp[gamma, alpha]`.
///
/// With `(abar, bbar)` the canonical decomposition of `gamma` (the one whose
/// smaller half is lexicographically smallest) and `(alpha, beta)` another
/// decomposition, the matrix is `E[abar, bbar] - E[alpha, beta]` where
/// `E[a, b] = e_a e_b^T + e_b e_a^T`.
#[derive(Clone, Debug)]
pub struct BperpMatrix {
    pub gamma: Exponent,
    pub alpha: Exponent,
    pub mat: SymSparse,
}

/// Auxiliary matrices for lift order `r` in `n` variables.
#[derive(Clone, Debug)]
pub struct BasisMatrices {
    pub r: u32,
    pub n: usize,
    /// Monomial basis of `v_r`, graded order, length `s`.
    pub basis: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
    /// All exponents of degree `<= 2r`, graded order.
    pub gammas: Vec<Exponent>,
    gamma_index: HashMap<Exponent, usize>,
    /// Ordered decomposition count `C[gamma]` per entry of `gammas`.
    pub c_gamma: Vec<f64>,
    /// `B[gamma]` per entry of `gammas`, normalized so `<B, M_r(x)> = x^gamma`.
    pub b_mats: Vec<SymSparse>,
    /// Orthogonal complement family, one matrix per redundant decomposition.
    pub bperp: Vec<BperpMatrix>,
}

impl BasisMatrices {
    pub fn build(r: u32, n: usize) -> Self {
        let basis = enumerate_basis(r, n);
        let s = basis.len();
        let index: HashMap<Exponent, usize> =
            basis.iter().cloned().zip(0..).collect();
        let gammas = enumerate_basis(2 * r, n);
        let gamma_index: HashMap<Exponent, usize> =
            gammas.iter().cloned().zip(0..).collect();

        // collect decomposition slots (i <= j) per gamma
        let mut decomps: Vec<Vec<(usize, usize)>> = vec![Vec::new(); gammas.len()];
        for i in 0..s {
            for j in i..s {
                let gamma = basis[i].add(&basis[j]);
                let g = gamma_index[&gamma];
                decomps[g].push((i, j));
            }
        }

        let mut c_gamma = Vec::with_capacity(gammas.len());
        let mut b_mats = Vec::with_capacity(gammas.len());
        let mut bperp = Vec::new();
        for (g, slots) in decomps.iter().enumerate() {
            debug_assert!(!slots.is_empty(), "every gamma has a decomposition");
            let count: f64 = slots
                .iter()
                .map(|&(i, j)| if i == j { 1.0 } else { 2.0 })
                .sum();
            c_gamma.push(count);
            b_mats.push(SymSparse::from_triplets(
                s,
                slots.iter().map(|&(i, j)| (i, j, 1.0 / count)),
            ));

            if slots.len() < 2 {
                continue;
            }
            // canonical slot: the pair whose smaller exponent is smallest in
            // plain lexicographic order (for (i, j) with i <= j in graded
            // order, basis[i] is the smaller half)
            let canon = *slots
                .iter()
                .min_by(|&&(i1, _), &&(i2, _)| basis[i1].0.cmp(&basis[i2].0))
                .expect("nonempty");
            for &(i, j) in slots {
                if (i, j) == canon {
                    continue;
                }
                // alpha is the larger half of the pair in plain lex order
                let alpha = if basis[i].0 >= basis[j].0 {
                    basis[i].clone()
                } else {
                    basis[j].clone()
                };
                let mat = SymSparse::from_triplets(
                    s,
                    [
                        (canon.0, canon.1, if canon.0 == canon.1 { 2.0 } else { 1.0 }),
                        (i, j, if i == j { -2.0 } else { -1.0 }),
                    ],
                );
                bperp.push(BperpMatrix {
                    gamma: gammas[g].clone(),
                    alpha,
                    mat,
                });
            }
        }

        BasisMatrices {
            r,
            n,
            basis,
            index,
            gammas,
            gamma_index,
            c_gamma,
            b_mats,
            bperp,
        }
    }

    /// Lifted dimension `s = C(n + r, n)`.
    pub fn s(&self) -> usize {
        self.basis.len()
    }

    pub fn basis_index(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn gamma_position(&self, e: &Exponent) -> Option<usize> {
        self.gamma_index.get(e).copied()
    }

    /// The moment matrix `v_r(x) v_r(x)^T` at a numeric point.
    pub fn moment_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let v = crate::poly::v_eval(self.r, x);
        &v * v.transpose()
    }

    /// Reconstruction `sum_gamma C[gamma] x^gamma B[gamma]`; equals
    /// [`Self::moment_matrix`] for every `x`.
    pub fn reconstruct_moment_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.s(), self.s());
        for (g, gamma) in self.gammas.iter().enumerate() {
            let scale = self.c_gamma[g] * gamma.eval(x);
            self.b_mats[g].add_scaled_to(&mut m, scale);
        }
        m
    }

    /// Assemble `sum_gamma coeff(p)[gamma] B[gamma]`, the symmetric matrix
    /// with `<C, M_r(x)> = p(x)`.
    pub fn cost_from_polynomial(&self, p: &Polynomial) -> Result<DMatrix<f64>, RelaxError> {
        self.check_poly(p)?;
        let mut m = DMatrix::zeros(self.s(), self.s());
        for (e, c) in p.terms() {
            let g = self.gamma_index[e];
            self.b_mats[g].add_scaled_to(&mut m, c);
        }
        Ok(m)
    }

    /// Sparse variant of [`Self::cost_from_polynomial`].
    pub fn sparse_from_polynomial(&self, p: &Polynomial) -> Result<SymSparse, RelaxError> {
        self.check_poly(p)?;
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (e, c) in p.terms() {
            let g = self.gamma_index[e];
            for &(i, j, v) in self.b_mats[g].triplets() {
                triplets.push((i as usize, j as usize, c * v));
            }
        }
        Ok(SymSparse::from_triplets(self.s(), triplets))
    }

    fn check_poly(&self, p: &Polynomial) -> Result<(), RelaxError> {
        if p.n_vars() != self.n {
            return Err(RelaxError::VarMismatch {
                expected: self.n,
                got: p.n_vars(),
            });
        }
        if p.degree() > 2 * self.r {
            return Err(RelaxError::DegreeTooHigh {
                deg: p.degree(),
                max: 2 * self.r,
            });
        }
        Ok(())
    }

    /// Localizing matrices for the equality constraint `g(x) = 0`: one matrix
    /// per multiplier monomial `x^mu` with `|mu| + deg(g) <= 2r`, satisfying
    /// `<G[g, mu], M_r(x)> = g(x) * x^mu`.
    pub fn localizing(&self, g: &Polynomial) -> Result<Vec<LocalizingMatrix>, RelaxError> {
        self.check_poly(g)?;
        if g.degree() == 0 {
            return Err(RelaxError::ConstantConstraint);
        }
        let max_mu = 2 * self.r - g.degree();
        let mut out = Vec::new();
        for mu in enumerate_basis(max_mu, self.n) {
            let shifted = g.mul_monomial(&mu);
            out.push(LocalizingMatrix {
                mu,
                mat: self.sparse_from_polynomial(&shifted)?,
            });
        }
        Ok(out)
    }
}

/// One localizing matrix for a constraint polynomial and multiplier monomial.
#[derive(Clone, Debug)]
pub struct LocalizingMatrix {
    pub mu: Exponent,
    pub mat: SymSparse,
}

/// Provenance of a linear trace constraint in the assembled SDP.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    /// `X[0,0] = 1`.
    Normalization,
    /// `<Bperp[gamma, alpha], X> = 0`.
    Moment { gamma: Exponent, alpha: Exponent },
    /// `<G[g_j, mu], X> = 0` for the `j`-th constraint polynomial.
    Localizing { constraint: usize, mu: Exponent },
}

#[derive(Clone, Debug)]
pub struct LinearConstraint {
    pub mat: SymSparse,
    pub rhs: f64,
    pub kind: ConstraintKind,
}

/// Equality-constrained SDP in primal standard form:
/// `min <cost, X>  s.t.  <A_i, X> = b_i,  X >= 0`.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub dim: usize,
    pub cost: DMatrix<f64>,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn new(cost: DMatrix<f64>, constraints: Vec<LinearConstraint>) -> Self {
        let dim = cost.nrows();
        debug_assert_eq!(cost.nrows(), cost.ncols());
        debug_assert!(constraints.iter().all(|c| c.mat.dim() == dim));
        SdpProblem {
            dim,
            cost,
            constraints,
        }
    }

    /// Sparse triplet text dump (one line per nonzero) for cross-checking the
    /// problem data against an external solver.
    pub fn dump_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", self.dim);
        let cost = SymSparse::from_dense(&self.cost, 0.0);
        for &(i, j, v) in cost.triplets() {
            let _ = writeln!(out, "c {i} {j} {v:.17e}");
        }
        for (k, con) in self.constraints.iter().enumerate() {
            for &(i, j, v) in con.mat.triplets() {
                let _ = writeln!(out, "a{k} {i} {j} {v:.17e}");
            }
            let _ = writeln!(out, "b{k} {:.17e}", con.rhs);
        }
        out
    }
}

/// Normalization + moment + localizing constraints for lift order `r` over
/// the feasible set `{x : g_j(x) = 0}`.
///
/// Numerically identical constraint matrices are emitted once (first
/// provenance wins); the normalization row always comes first.
pub fn constraint_set(
    bm: &BasisMatrices,
    k_polys: &[Polynomial],
) -> Result<Vec<LinearConstraint>, RelaxError> {
    let s = bm.s();
    let mut out = Vec::new();
    out.push(LinearConstraint {
        mat: SymSparse::from_triplets(s, [(0, 0, 1.0)]),
        rhs: 1.0,
        kind: ConstraintKind::Normalization,
    });
    for bp in &bm.bperp {
        out.push(LinearConstraint {
            mat: bp.mat.clone(),
            rhs: 0.0,
            kind: ConstraintKind::Moment {
                gamma: bp.gamma.clone(),
                alpha: bp.alpha.clone(),
            },
        });
    }
    for (j, g) in k_polys.iter().enumerate() {
        for loc in bm.localizing(g)? {
            out.push(LinearConstraint {
                mat: loc.mat,
                rhs: 0.0,
                kind: ConstraintKind::Localizing {
                    constraint: j,
                    mu: loc.mu,
                },
            });
        }
    }
    dedup_constraints(&mut out);
    Ok(out)
}

fn dedup_constraints(constraints: &mut Vec<LinearConstraint>) {
    let mut seen: HashMap<Vec<(u32, u32, u64)>, f64> = HashMap::new();
    constraints.retain(|c| {
        let key: Vec<(u32, u32, u64)> = c
            .mat
            .triplets()
            .iter()
            .map(|&(i, j, v)| (i, j, v.to_bits()))
            .collect();
        match seen.get(&key) {
            Some(_) => false,
            None => {
                seen.insert(key, c.rhs);
                true
            }
        }
    });
}

/// Assemble the order-`r` moment relaxation of
/// `min p(x)  s.t.  g_j(x) = 0 for all j`.
pub fn assemble_relaxation(
    p: &Polynomial,
    k_polys: &[Polynomial],
    r: u32,
) -> Result<(SdpProblem, BasisMatrices), RelaxError> {
    let bm = BasisMatrices::build(r, p.n_vars());
    let cost = bm.cost_from_polynomial(p)?;
    let constraints = constraint_set(&bm, k_polys)?;
    Ok((SdpProblem::new(cost, constraints), bm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{basis_size, v_eval};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn e(v: &[u32]) -> Exponent {
        Exponent(v.to_vec())
    }

    fn random_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn symsparse_matches_dense_ops() {
        let m = SymSparse::from_triplets(3, [(0, 1, 2.0), (2, 2, -1.0), (1, 0, 0.5)]);
        let d = m.to_dense();
        assert_relative_eq!(d[(0, 1)], 2.5);
        assert_relative_eq!(d[(1, 0)], 2.5);
        assert_relative_eq!(d[(2, 2)], -1.0);
        let t = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 5., 6., 3., 6., 9.]);
        assert_relative_eq!(m.inner(&t), (d.transpose() * &t).trace(), epsilon = 1e-12);
        let v = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        assert_relative_eq!(m.quad_form(&v), (v.transpose() * &d * &v)[(0, 0)], epsilon = 1e-12);

        let w = DMatrix::from_row_slice(3, 3, &[2., 1., 0., 1., 3., 1., 0., 1., 4.]);
        let mut out = DMatrix::zeros(3, 3);
        m.waw_into(&w, &mut out);
        let expect = &w * &d * &w;
        assert_relative_eq!((out - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn b_matrix_for_x1_squared_matches_printed_pattern() {
        // n = 2, r = 2: the monomial x1^2 decomposes as 1*x1^2 (twice, by
        // symmetry) and x1*x1, so C = 3 and the three slots carry 1/3.
        let bm = BasisMatrices::build(2, 2);
        let g = bm.gamma_position(&e(&[2, 0])).unwrap();
        assert_relative_eq!(bm.c_gamma[g], 3.0);
        let d = bm.b_mats[g].to_dense();
        let third = 1.0 / 3.0;
        assert_relative_eq!(d[(0, 3)], third);
        assert_relative_eq!(d[(3, 0)], third);
        assert_relative_eq!(d[(1, 1)], third);
        assert_relative_eq!(d.sum(), 1.0, epsilon = 1e-12);
        assert_eq!(bm.b_mats[g].nnz(), 2);
    }

    #[test]
    fn decomposition_counts_match_brute_force() {
        for (r, n) in [(1usize, 1usize), (2, 2), (3, 2), (2, 3)] {
            let bm = BasisMatrices::build(r as u32, n);
            let basis = enumerate_basis(r as u32, n);
            for (g, gamma) in bm.gammas.iter().enumerate() {
                // independent count over all ordered pairs
                let mut count = 0usize;
                for a in &basis {
                    for b in &basis {
                        if a.add(b) == *gamma {
                            count += 1;
                        }
                    }
                }
                assert_eq!(bm.c_gamma[g] as usize, count, "gamma {gamma:?}");
            }
        }
    }

    #[test]
    fn bperp_for_x1_squared_matches_printed_pattern() {
        // canonical decomposition (0, x1^2) gets +1, the slot x1*x1 gets -2
        let bm = BasisMatrices::build(2, 2);
        let bp = bm
            .bperp
            .iter()
            .find(|bp| bp.gamma == e(&[2, 0]))
            .expect("x1^2 has a redundant decomposition");
        assert_eq!(bp.alpha, e(&[1, 0]));
        let d = bp.mat.to_dense();
        assert_relative_eq!(d[(0, 3)], 1.0);
        assert_relative_eq!(d[(3, 0)], 1.0);
        assert_relative_eq!(d[(1, 1)], -2.0);
        assert_relative_eq!(d.abs().sum(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn bperp_counts_complete_the_symmetric_dimension() {
        for (r, n) in [(1u32, 1usize), (1, 3), (2, 1), (2, 2), (3, 2), (2, 3)] {
            let bm = BasisMatrices::build(r, n);
            let s = bm.s();
            let expected = s * (s + 1) / 2 - basis_size(2 * r, n).unwrap();
            assert_eq!(bm.bperp.len(), expected, "r={r} n={n}");
        }
        // no redundancy at r = 1: every product of two degree<=1 monomials
        // has a unique unordered decomposition
        assert!(BasisMatrices::build(1, 4).bperp.is_empty());
    }

    #[test]
    fn b_and_bperp_families_are_orthogonal_and_independent() {
        for (r, n) in [(2u32, 1usize), (2, 2), (3, 2)] {
            let bm = BasisMatrices::build(r, n);
            for b in &bm.b_mats {
                for bp in &bm.bperp {
                    assert_relative_eq!(b.inner_sparse(&bp.mat), 0.0, epsilon = 1e-12);
                }
            }
            // Gram matrix of the combined family must be nonsingular
            let all: Vec<&SymSparse> = bm
                .b_mats
                .iter()
                .chain(bm.bperp.iter().map(|bp| &bp.mat))
                .collect();
            let m = all.len();
            assert_eq!(m, bm.s() * (bm.s() + 1) / 2);
            let mut gram = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = all[i].inner_sparse(all[j]);
                    gram[(i, j)] = v;
                    gram[(j, i)] = v;
                }
            }
            let eig = gram.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 1e-10, "family must be linearly independent, min eig {min}");
        }
    }

    #[test]
    fn moment_matrix_reconstruction_and_annihilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (r, n) in [(1u32, 2usize), (2, 2), (3, 2), (2, 4)] {
            let bm = BasisMatrices::build(r, n);
            for _ in 0..5 {
                let x = random_point(n, &mut rng);
                let m = bm.moment_matrix(&x);
                let rec = bm.reconstruct_moment_matrix(&x);
                assert_relative_eq!((&m - &rec).norm(), 0.0, epsilon = 1e-9 * (1.0 + m.norm()));
                // <B[gamma], M> reads the monomial, <Bperp, M> vanishes
                for (g, gamma) in bm.gammas.iter().enumerate() {
                    assert_relative_eq!(
                        bm.b_mats[g].inner(&m),
                        gamma.eval(&x),
                        epsilon = 1e-9 * (1.0 + gamma.eval(&x).abs())
                    );
                }
                for bp in &bm.bperp {
                    assert_relative_eq!(bp.mat.inner(&m), 0.0, epsilon = 1e-9 * (1.0 + m.norm()));
                }
            }
        }
    }

    #[test]
    fn cost_matrix_evaluates_the_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bm = BasisMatrices::build(2, 2);
        // p = 3 + x1^2 x2^2 - 2 x1 x2
        let p = Polynomial::from_terms(
            2,
            [(e(&[0, 0]), 3.0), (e(&[2, 2]), 1.0), (e(&[1, 1]), -2.0)],
        )
        .unwrap();
        let c = bm.cost_from_polynomial(&p).unwrap();
        for _ in 0..10 {
            let x = random_point(2, &mut rng);
            let v = v_eval(2, &x);
            let got = (v.transpose() * &c * &v)[(0, 0)];
            assert_relative_eq!(got, p.eval(&x).unwrap(), epsilon = 1e-9 * (1.0 + got.abs()));
        }
        // degree beyond 2r is rejected
        let too_big = Polynomial::from_terms(2, [(e(&[3, 2]), 1.0)]).unwrap();
        assert!(matches!(
            bm.cost_from_polynomial(&too_big),
            Err(RelaxError::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn localizing_matrices_read_constraint_times_monomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let bm = BasisMatrices::build(2, 2);
        // g = x1^2 + x2^2 - 1 (unit circle)
        let g = Polynomial::from_terms(
            2,
            [(e(&[2, 0]), 1.0), (e(&[0, 2]), 1.0), (e(&[0, 0]), -1.0)],
        )
        .unwrap();
        let locs = bm.localizing(&g).unwrap();
        // multipliers of degree <= 2r - deg g = 2 over two variables
        assert_eq!(locs.len(), 6);
        assert_eq!(locs[0].mu, e(&[0, 0]));
        for loc in &locs {
            for _ in 0..5 {
                let x = random_point(2, &mut rng);
                let m = bm.moment_matrix(&x);
                let expect = g.eval(&x).unwrap() * loc.mu.eval(&x);
                assert_relative_eq!(
                    loc.mat.inner(&m),
                    expect,
                    epsilon = 1e-9 * (1.0 + expect.abs())
                );
            }
        }
        // on-circle points satisfy every localizing constraint
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let m = bm.moment_matrix(&[theta.cos(), theta.sin()]);
        for loc in &locs {
            assert_relative_eq!(loc.mat.inner(&m), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn assemble_orders_and_dedups_constraints() {
        let p = Polynomial::from_terms(2, [(e(&[2, 0]), 1.0), (e(&[0, 2]), 1.0)]).unwrap();
        let g = Polynomial::from_terms(
            2,
            [(e(&[2, 0]), 1.0), (e(&[0, 2]), 1.0), (e(&[0, 0]), -1.0)],
        )
        .unwrap();
        let (prob, bm) = assemble_relaxation(&p, &[g.clone(), g.clone()], 2).unwrap();
        assert_eq!(prob.dim, 6);
        assert_eq!(prob.constraints[0].kind, ConstraintKind::Normalization);
        assert_relative_eq!(prob.constraints[0].rhs, 1.0);
        let n_moment = prob
            .constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::Moment { .. }))
            .count();
        assert_eq!(n_moment, bm.bperp.len());
        // the duplicated circle constraint contributes its 6 localizing rows once
        let n_loc = prob
            .constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::Localizing { .. }))
            .count();
        assert_eq!(n_loc, 6);
        assert_eq!(prob.constraints.len(), 1 + n_moment + n_loc);

        let dump = prob.dump_triplets();
        assert!(dump.starts_with("dim 6\n"));
        assert!(dump.contains("a0 0 0"));
    }
}
