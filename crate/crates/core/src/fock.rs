//! Exact dynamics on a truncated bosonic Fock space.
//!
//! This is the reference the hierarchy is checked against: density matrices
//! are evolved spectrally, `ρ(t) = U ρ₀ U†` with `U = exp(−iHt)` from Hermitian
//! eigendecompositions of the blocks `H` couples, and reduced density matrices are traced out
//! directly.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::{stored_orders, unflatten, GammaTensor, HierarchyState};
use crate::ladder::{commutator, LadderOp, LadderPolynomial, OpKind};

pub type CMatrix = DMatrix<Complex64>;

/// Boundary weight above which a truncated run is rejected.
pub const CUTOFF_WEIGHT_LIMIT: f64 = 1e-8;

/// Occupation-number basis with a per-mode cutoff and an optional total cap.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    modes: usize,
    n_max: usize,
    total_cap: Option<usize>,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    pub fn new(modes: usize, n_max: usize, total_cap: Option<usize>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidInput("Fock basis needs at least one mode".into()));
        }
        if n_max > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("n_max {n_max} exceeds {}", u8::MAX)));
        }
        fn fill(k: usize, budget: usize, n_max: usize, occ: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if k == occ.len() {
                out.push(occ.clone());
                return;
            }
            for n in 0..=n_max.min(budget) {
                occ[k] = n as u8;
                fill(k + 1, budget - n, n_max, occ, out);
            }
            occ[k] = 0;
        }
        // lexicographic, last mode fastest; the cap prunes whole subtrees
        let mut states = Vec::new();
        let budget = total_cap.unwrap_or(n_max.saturating_mul(modes));
        fill(0, budget, n_max, &mut vec![0u8; modes], &mut states);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FockBasis {
            modes,
            n_max,
            total_cap,
            states,
            index,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn total_cap(&self) -> Option<usize> {
        self.total_cap
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    fn admits(&self, occ: &[u8]) -> bool {
        occ.iter().all(|&n| (n as usize) <= self.n_max)
            && self
                .total_cap
                .is_none_or(|cap| occ.iter().map(|&x| x as usize).sum::<usize>() <= cap)
    }

    fn on_mode_boundary(&self, occ: &[u8]) -> bool {
        occ.iter().any(|&n| n as usize == self.n_max)
    }

    fn on_total_boundary(&self, occ: &[u8]) -> bool {
        self.total_cap
            .is_some_and(|cap| occ.iter().map(|&x| x as usize).sum::<usize>() == cap)
    }

    /// Applies `factors` (rightmost first) to basis state `col`.
    /// `None` when the result vanishes or leaves the truncated space.
    fn apply(&self, factors: &[LadderOp], col: usize, scratch: &mut Vec<u8>) -> Option<(usize, f64)> {
        scratch.clear();
        scratch.extend_from_slice(&self.states[col]);
        let mut amp = 1.0;
        for op in factors.iter().rev() {
            let n = scratch[op.mode] as usize;
            match op.kind {
                OpKind::Annihilate => {
                    if n == 0 {
                        return None;
                    }
                    amp *= (n as f64).sqrt();
                    scratch[op.mode] -= 1;
                }
                OpKind::Create => {
                    if n >= self.n_max {
                        return None;
                    }
                    amp *= ((n + 1) as f64).sqrt();
                    scratch[op.mode] += 1;
                }
            }
        }
        if !self.admits(scratch) {
            return None;
        }
        Some((self.index[scratch.as_slice()], amp))
    }
}

/// Matrix of a polynomial on the truncated space: each ladder factor is the
/// cutoff-restricted matrix, and products multiply those restrictions.
pub fn matrix_of(poly: &LadderPolynomial, basis: &FockBasis) -> CMatrix {
    let dim = basis.dim();
    let columns: Vec<Vec<(usize, Complex64)>> = (0..dim)
        .into_par_iter()
        .map(|col| {
            let mut scratch = Vec::with_capacity(basis.modes);
            let mut out = Vec::new();
            for (factors, c) in poly.terms() {
                if factors.iter().any(|op| op.mode >= basis.modes) {
                    continue;
                }
                if let Some((row, amp)) = basis.apply(factors, col, &mut scratch) {
                    out.push((row, c * amp));
                }
            }
            out
        })
        .collect();
    let mut m = CMatrix::zeros(dim, dim);
    for (col, entries) in columns.into_iter().enumerate() {
        for (row, v) in entries {
            m[(row, col)] += v;
        }
    }
    m
}

fn is_psd_hermitian(rho: &CMatrix, tol: f64) -> Result<f64> {
    let eig = SymmetricEigen::try_new(rho.clone(), 1e-14, 0)
        .ok_or_else(|| Error::NumericalBreakdown("eigendecomposition did not converge".into()))?;
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::InvalidInput(format!("density matrix has eigenvalue {min:e}")));
    }
    Ok(min)
}

/// A normalised, Hermitian, positive-semidefinite density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    basis: FockBasis,
    rho: CMatrix,
}

impl FockDensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and positivity (−1e-10).
    pub fn new(basis: FockBasis, rho: CMatrix) -> Result<Self> {
        let dim = basis.dim();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::InvalidInput(format!("density matrix must be {dim}×{dim}")));
        }
        let herm = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::InvalidInput(format!("density matrix not hermitian (residual {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidInput(format!("density matrix trace {tr} ≠ 1")));
        }
        is_psd_hermitian(&rho, 1e-10)?;
        Ok(FockDensityMatrix { basis, rho })
    }

    /// `|ψ⟩⟨ψ|` after normalising `psi`.
    pub fn pure(basis: FockBasis, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::InvalidInput("state vector length does not match basis".into()));
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("state vector has zero norm".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm));
        let rho = &v * v.adjoint();
        Ok(FockDensityMatrix { basis, rho })
    }

    pub fn vacuum(basis: FockBasis) -> Result<Self> {
        let modes = basis.modes();
        Self::fock(basis, &vec![0; modes])
    }

    pub fn fock(basis: FockBasis, occupations: &[usize]) -> Result<Self> {
        let occ: Vec<u8> = occupations.iter().map(|&n| n.min(255) as u8).collect();
        let idx = (occupations.len() == basis.modes())
            .then(|| basis.index_of(&occ))
            .flatten()
            .filter(|_| occupations.iter().all(|&n| n <= basis.n_max()))
            .ok_or_else(|| Error::InvalidInput(format!("occupation {occupations:?} outside the truncated basis")))?;
        let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
        psi[idx] = Complex64::new(1.0, 0.0);
        Self::pure(basis, &psi)
    }

    /// `e^{Σ α_k b†_k}|0⟩` truncated to the basis and renormalised.
    pub fn coherent(basis: FockBasis, alpha: &[Complex64]) -> Result<Self> {
        if alpha.len() != basis.modes() {
            return Err(Error::InvalidInput("α length does not match mode count".into()));
        }
        let psi: Vec<Complex64> = basis
            .states()
            .iter()
            .map(|occ| {
                occ.iter().zip(alpha).fold(Complex64::new(1.0, 0.0), |acc, (&n, a)| {
                    let fact: f64 = (1..=n as u32).map(f64::from).product();
                    acc * a.powu(n as u32) / fact.sqrt()
                })
            })
            .collect();
        Self::pure(basis, &psi)
    }

    /// Product of single-mode thermal states with mean occupations `n_k`,
    /// renormalised on the basis. Diagonal in the occupation basis.
    pub fn thermal(basis: FockBasis, occupations: &[f64]) -> Result<Self> {
        if occupations.len() != basis.modes() {
            return Err(Error::InvalidInput("occupation list length does not match mode count".into()));
        }
        if occupations.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::InvalidInput("occupations must be ≥ 0".into()));
        }
        let weights: Vec<f64> = basis
            .states()
            .iter()
            .map(|occ| {
                occ.iter()
                    .zip(occupations)
                    .map(|(&k, &nbar)| (nbar / (1.0 + nbar)).powi(k as i32))
                    .product()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        let rho = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            weights.len(),
            weights.iter().map(|w| Complex64::new(w / z, 0.0)),
        ));
        Ok(FockDensityMatrix { basis, rho })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        is_psd_hermitian(&self.rho, f64::INFINITY)
    }

    /// `Tr(ρ A)` for the polynomial's truncated matrix.
    pub fn expectation(&self, poly: &LadderPolynomial) -> Complex64 {
        let mut scratch = Vec::with_capacity(self.basis.modes);
        poly.terms()
            .filter(|(factors, _)| factors.iter().all(|op| op.mode < self.basis.modes))
            .map(|(factors, c)| c * self.trace_with(factors, &mut scratch))
            .sum()
    }

    /// Probability on basis states at the per-mode cutoff (and, if
    /// `include_total`, at the total-particle cap).
    pub fn boundary_weight(&self, include_total: bool) -> f64 {
        self.basis
            .states()
            .iter()
            .enumerate()
            .filter(|(_, occ)| {
                self.basis.on_mode_boundary(occ) || (include_total && self.basis.on_total_boundary(occ))
            })
            .map(|(i, _)| self.rho[(i, i)].re)
            .sum()
    }

    fn trace_with(&self, factors: &[LadderOp], scratch: &mut Vec<u8>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for col in 0..self.basis.dim() {
            if let Some((row, amp)) = self.basis.apply(factors, col, scratch) {
                acc += self.rho[(col, row)] * amp;
            }
        }
        acc
    }
}

fn monomial_factors(m: usize, n: usize, slots: &[usize]) -> Vec<LadderOp> {
    slots[m..m + n]
        .iter()
        .map(|&p| LadderOp::create(p))
        .chain(slots[..m].iter().map(|&p| LadderOp::annihilate(p)))
        .collect()
}

/// `Γ^(m,n)(p;p') = Tr(ρ b†_{p'_1}…b†_{p'_n} b_{p_1}…b_{p_m})`.
pub fn reduced_density(rho: &FockDensityMatrix, m: usize, n: usize) -> GammaTensor {
    let modes = rho.basis.modes();
    let len = modes.pow((m + n) as u32);
    let data: Vec<Complex64> = (0..len)
        .into_par_iter()
        .map(|flat| {
            let mut slots = vec![0; m + n];
            unflatten(flat, modes, &mut slots);
            let mut scratch = Vec::with_capacity(modes);
            rho.trace_with(&monomial_factors(m, n, &slots), &mut scratch)
        })
        .collect();
    GammaTensor::from_data(m, n, modes, data).expect("shape matches by construction")
}

/// Every stored `Γ^(m,n)` of order `K` traced out of `rho`.
pub fn hierarchy_from_oracle(rho: &FockDensityMatrix, order: usize) -> Result<HierarchyState> {
    let mut state = HierarchyState::vacuum(rho.basis.modes(), order);
    for (m, n) in stored_orders(order) {
        if m + n == 0 {
            continue;
        }
        state.set_gamma(reduced_density(rho, m, n))?;
    }
    Ok(state)
}

/// Eigendecomposition of `H` restricted to one set of basis states it couples.
#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl Block {
    /// `e^{−iHt}` on this block.
    fn propagator(&self, t: f64) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, e) in self.eigenvalues.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -e * t);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
        scaled * v.adjoint()
    }
}

/// Basis states grouped into the connected components of `H`'s nonzero pattern.
fn coupled_blocks(hm: &CMatrix) -> Vec<Vec<usize>> {
    let dim = hm.nrows();
    let mut parent: Vec<usize> = (0..dim).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..dim {
        for i in 0..j {
            if hm[(i, j)] != Complex64::new(0.0, 0.0) || hm[(j, i)] != Complex64::new(0.0, 0.0) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..dim {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
    blocks.sort_by_key(|b| b[0]);
    blocks
}

/// Spectral propagator for a fixed Hamiltonian on a fixed basis.
///
/// `H` is split into the blocks of basis states it couples, so number- or
/// occupation-conserving Hamiltonians are diagonalised sector by sector.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    blocks: Vec<Block>,
    conserves_number: bool,
}

impl SpectralPropagator {
    pub fn new(h: &LadderPolynomial, basis: &FockBasis) -> Result<Self> {
        h.check_modes(basis.modes())?;
        if !h.is_hermitian(1e-12) {
            return Err(Error::InvalidModel("Hamiltonian is not hermitian".into()));
        }
        let hm = matrix_of(h, basis);
        let blocks = coupled_blocks(&hm)
            .into_par_iter()
            .map(|indices| {
                let sub = CMatrix::from_fn(indices.len(), indices.len(), |i, j| hm[(indices[i], indices[j])]);
                let eig = SymmetricEigen::try_new(sub, 1e-15, 0)
                    .ok_or_else(|| Error::NumericalBreakdown("Hamiltonian eigendecomposition did not converge".into()))?;
                if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NumericalBreakdown("non-finite Hamiltonian eigenvalue".into()));
                }
                Ok(Block {
                    indices,
                    eigenvalues: eig.eigenvalues.iter().copied().collect(),
                    eigenvectors: eig.eigenvectors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let conserves_number = commutator(h, &LadderPolynomial::number_operator(basis.modes())).is_empty();
        Ok(SpectralPropagator { blocks, conserves_number })
    }

    pub fn evolve(&self, rho0: &FockDensityMatrix, t: f64) -> FockDensityMatrix {
        let dim = rho0.rho.nrows();
        let us: Vec<CMatrix> = self.blocks.par_iter().map(|b| b.propagator(t)).collect();
        // ρ_ab(t) = U_a ρ_ab U_b† for every pair of blocks
        let pieces: Vec<(usize, usize, CMatrix)> = (0..self.blocks.len())
            .into_par_iter()
            .flat_map_iter(|a| {
                let us = &us;
                (0..self.blocks.len()).filter_map(move |b| {
                    let (ia, ib) = (&self.blocks[a].indices, &self.blocks[b].indices);
                    let sub = CMatrix::from_fn(ia.len(), ib.len(), |i, j| rho0.rho[(ia[i], ib[j])]);
                    if sub.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                        return None;
                    }
                    Some((a, b, &us[a] * sub * us[b].adjoint()))
                })
            })
            .collect();
        let mut rho = CMatrix::zeros(dim, dim);
        for (a, b, m) in pieces {
            let (ia, ib) = (&self.blocks[a].indices, &self.blocks[b].indices);
            for (i, &r) in ia.iter().enumerate() {
                for (j, &c) in ib.iter().enumerate() {
                    rho[(r, c)] = m[(i, j)];
                }
            }
        }
        // restore exact Hermiticity lost to rounding
        let adj = rho.adjoint();
        rho = (rho + adj) * Complex64::new(0.5, 0.0);
        FockDensityMatrix {
            basis: rho0.basis.clone(),
            rho,
        }
    }

    /// Total-cap states count as boundary only when number is not conserved.
    pub fn check_cutoff(&self, rho: &FockDensityMatrix, time: f64) -> Result<f64> {
        let weight = rho.boundary_weight(!self.conserves_number);
        if weight > CUTOFF_WEIGHT_LIMIT {
            return Err(Error::CutoffInsufficient {
                time,
                weight,
                limit: CUTOFF_WEIGHT_LIMIT,
            });
        }
        Ok(weight)
    }
}

/// `ρ(t) = e^{−iHt} ρ₀ e^{iHt}` on each time, rejecting runs whose cutoff
/// boundary carries more than [`CUTOFF_WEIGHT_LIMIT`] probability.
pub fn evolve_density(rho0: &FockDensityMatrix, h: &LadderPolynomial, times: &[f64]) -> Result<Vec<FockDensityMatrix>> {
    let prop = SpectralPropagator::new(h, rho0.basis())?;
    times
        .iter()
        .map(|&t| {
            let rho = prop.evolve(rho0, t);
            prop.check_cutoff(&rho, t)?;
            Ok(rho)
        })
        .collect()
}

/// Smallest per-mode cutoff whose dropped coherent-state tail is below `tol` for every mode.
pub fn coherent_cutoff(alpha: &[Complex64], tol: f64) -> usize {
    alpha
        .iter()
        .map(|a| {
            let x = a.norm_sqr();
            let mut p = (-x).exp();
            let mut cumulative = p;
            let mut n = 0usize;
            while 1.0 - cumulative >= tol && n < 200 {
                n += 1;
                p *= x / n as f64;
                cumulative += p;
            }
            n.max(1)
        })
        .max()
        .unwrap_or(1)
}
