//! Discretised scalar field theory on a uniform momentum lattice.
//!
//! Modes are flattened as `mode = grid_point × n_species + species`. With
//! unit-normalised modes every continuum measure `∫ d³q / ((2π)³ 2E_q)`
//! becomes a plain sum over modes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{CoefficientStore, Kernel, LadderOp, LadderPolynomial};

pub const DISPERSION_KERNEL: &str = "dispersion";
pub const PAIR_KERNEL: &str = "pair";

/// `E_p = sqrt(|p|² + m²)`.
pub fn dispersion(p: &[f64], mass: f64) -> f64 {
    (p.iter().map(|x| x * x).sum::<f64>() + mass * mass).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeGrid {
    pub dims: usize,
    pub points_per_dim: usize,
    pub p_max: f64,
    #[serde(default = "one")]
    pub n_species: usize,
}

fn one() -> usize {
    1
}

impl ModeGrid {
    pub fn new(dims: usize, points_per_dim: usize, p_max: f64, n_species: usize) -> Result<Self> {
        let g = ModeGrid {
            dims,
            points_per_dim,
            p_max,
            n_species,
        };
        g.validate()?;
        Ok(g)
    }

    /// One spatial dimension with `points` grid points and a single species.
    pub fn line(points: usize, p_max: f64) -> Result<Self> {
        Self::new(1, points, p_max, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::InvalidModel(format!("dims must be 1, 2 or 3, got {}", self.dims)));
        }
        if self.points_per_dim == 0 || self.n_species == 0 {
            return Err(Error::InvalidModel("grid needs at least one point and one species".into()));
        }
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(Error::InvalidModel(format!("p_max must be positive, got {}", self.p_max)));
        }
        Ok(())
    }

    pub fn grid_points(&self) -> usize {
        self.points_per_dim.pow(self.dims as u32)
    }

    pub fn n_modes(&self) -> usize {
        self.grid_points() * self.n_species
    }

    /// Lattice spacing `Δp`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.p_max / self.points_per_dim as f64
    }

    /// Momentum-cell volume `Δp^dims`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    pub fn grid_point_of(&self, mode: usize) -> usize {
        mode / self.n_species
    }

    pub fn species_of(&self, mode: usize) -> usize {
        mode % self.n_species
    }

    /// Integer lattice coordinates of a grid point, first dimension slowest.
    pub fn lattice_coords(&self, grid_point: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims];
        let mut g = grid_point;
        for c in out.iter_mut().rev() {
            *c = g % self.points_per_dim;
            g /= self.points_per_dim;
        }
        out
    }

    /// Momentum vector of a mode: `p = −p_max + (j + ½) Δp` per component.
    pub fn momentum(&self, mode: usize) -> Vec<f64> {
        let dp = self.spacing();
        self.lattice_coords(self.grid_point_of(mode))
            .into_iter()
            .map(|j| -self.p_max + (j as f64 + 0.5) * dp)
            .collect()
    }

    pub fn momenta(&self) -> Vec<Vec<f64>> {
        (0..self.n_modes()).map(|k| self.momentum(k)).collect()
    }

    /// Mode carrying momentum `−p` and the same species.
    pub fn reflected_mode(&self, mode: usize) -> usize {
        let coords = self.lattice_coords(self.grid_point_of(mode));
        let grid_point = coords
            .iter()
            .fold(0, |acc, &j| acc * self.points_per_dim + (self.points_per_dim - 1 - j));
        grid_point * self.n_species + self.species_of(mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InteractionKernel {
    /// `h_jk = value`
    Constant { value: f64 },
    /// `h_jk = f_j f_k`
    Separable { f: Vec<f64> },
    /// Full mode-by-mode table.
    Tabulated { table: Vec<Vec<f64>> },
}

impl InteractionKernel {
    /// Dense real `M×M` matrix `h_jk`; rejects asymmetric or mis-sized tables.
    pub fn matrix(&self, n_modes: usize) -> Result<Vec<Vec<f64>>> {
        let h = match self {
            InteractionKernel::Constant { value } => vec![vec![*value; n_modes]; n_modes],
            InteractionKernel::Separable { f } => {
                if f.len() != n_modes {
                    return Err(Error::InvalidModel(format!(
                        "separable kernel has {} values for {n_modes} modes",
                        f.len()
                    )));
                }
                f.iter().map(|a| f.iter().map(|b| a * b).collect()).collect()
            }
            InteractionKernel::Tabulated { table } => {
                if table.len() != n_modes || table.iter().any(|row| row.len() != n_modes) {
                    return Err(Error::InvalidModel(format!("kernel table must be {n_modes}×{n_modes}")));
                }
                for j in 0..n_modes {
                    for k in 0..j {
                        let (a, b) = (table[j][k], table[k][j]);
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                            return Err(Error::InvalidModel(format!(
                                "kernel table is not symmetric: h[{j}][{k}] = {a} but h[{k}][{j}] = {b}"
                            )));
                        }
                    }
                }
                table.clone()
            }
        };
        if h.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("kernel contains non-finite values".into()));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub grid: ModeGrid,
    pub mass: f64,
    #[serde(default)]
    pub kernel: Option<InteractionKernel>,
    #[serde(default)]
    pub coupling: f64,
}

impl ModelSpec {
    pub fn free(grid: ModeGrid, mass: f64) -> Self {
        ModelSpec {
            grid,
            mass,
            kernel: None,
            coupling: 0.0,
        }
    }

    pub fn with_interaction(mut self, kernel: InteractionKernel, coupling: f64) -> Self {
        self.kernel = Some(kernel);
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidModel(format!("mass must be ≥ 0, got {}", self.mass)));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidModel("coupling must be finite".into()));
        }
        if let Some(k) = &self.kernel {
            k.matrix(self.n_modes())?;
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes()
    }

    pub fn energy(&self, mode: usize) -> f64 {
        dispersion(&self.grid.momentum(mode), self.mass)
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|k| self.energy(k)).collect()
    }

    fn interacting(&self) -> bool {
        self.kernel.is_some() && self.coupling != 0.0
    }

    /// Continuum-restoration factors for run metadata.
    pub fn continuum_weights(&self) -> ContinuumWeights {
        let d = self.grid.dims as i32;
        ContinuumWeights {
            cell_volume: self.grid.cell_volume(),
            two_pi_power: (2.0 * PI).powi(d),
            two_energy: self.energies().iter().map(|e| 2.0 * e).collect(),
            momenta: self.grid.momenta(),
        }
    }

    /// The Hamiltonian's coefficient tensors: `dispersion` (`E_k δ`) and,
    /// when interacting, `pair` (`½ g h_jk`).
    pub fn coefficient_store(&self) -> Result<CoefficientStore> {
        self.validate()?;
        let modes = self.n_modes();
        let mut store = CoefficientStore::new(modes);
        let mut free = Kernel::new(1, 1);
        for (k, e) in self.energies().into_iter().enumerate() {
            if e != 0.0 {
                free.push(vec![k, k], e);
            }
        }
        store.insert(DISPERSION_KERNEL, free);
        if self.interacting() {
            let h = self.kernel.as_ref().unwrap().matrix(modes)?;
            let mut pair = Kernel::new(2, 2);
            for j in 0..modes {
                for k in 0..modes {
                    let v = 0.5 * self.coupling * h[j][k];
                    if v != 0.0 {
                        pair.push(vec![j, k, j, k], v);
                    }
                }
            }
            store.insert(PAIR_KERNEL, pair);
        }
        Ok(store)
    }
}

/// Factors relating unit-normalised modes to continuum operators:
/// `a_p = b_k · sqrt((2π)^d 2E_k / Δp^d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumWeights {
    pub cell_volume: f64,
    pub two_pi_power: f64,
    pub two_energy: Vec<f64>,
    pub momenta: Vec<Vec<f64>>,
}

/// `H_free = Σ_k E_k b†_k b_k`.
pub fn build_free_hamiltonian(model: &ModelSpec) -> Result<LadderPolynomial> {
    model.validate()?;
    let mut h = LadderPolynomial::zero();
    for (k, e) in model.energies().into_iter().enumerate() {
        h.add_term(e, vec![LadderOp::create(k), LadderOp::annihilate(k)]);
    }
    Ok(h.scale(1.0))
}

/// `H_int = (g/2) Σ_{j,k} h_jk b†_j b†_k b_j b_k`, normal ordered.
pub fn build_two_body_hamiltonian(model: &ModelSpec) -> Result<LadderPolynomial> {
    model.validate()?;
    let modes = model.n_modes();
    let Some(kernel) = &model.kernel else {
        return Ok(LadderPolynomial::zero());
    };
    let h = kernel.matrix(modes)?;
    let mut out = LadderPolynomial::zero();
    for j in 0..modes {
        for k in 0..modes {
            let mut factors = vec![
                LadderOp::create(j),
                LadderOp::create(k),
                LadderOp::annihilate(j),
                LadderOp::annihilate(k),
            ];
            factors.sort_unstable();
            out.add_term(0.5 * model.coupling * h[j][k], factors);
        }
    }
    Ok(out.scale(1.0))
}

/// Graded pieces `H_2 … H_5`; piece `H_i` has degree `i − 1` or is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedHamiltonian {
    pieces: [LadderPolynomial; 4],
}

impl GradedHamiltonian {
    /// Sorts the terms of a polynomial into the grading. Constant terms are
    /// discarded since they have no dynamical effect.
    pub fn from_polynomial(poly: &LadderPolynomial) -> Result<Self> {
        let normal = crate::ladder::normal_order(poly);
        let mut pieces: [LadderPolynomial; 4] = Default::default();
        for (factors, c) in normal.terms() {
            match factors.len() {
                0 => {}
                d @ 1..=4 => pieces[d - 1].add_term(c, factors.to_vec()),
                d => return Err(Error::UnsupportedInteraction { degree: d }),
            }
        }
        Ok(GradedHamiltonian { pieces })
    }

    /// `H_i` for `i ∈ 2..=5`.
    pub fn piece(&self, i: usize) -> &LadderPolynomial {
        assert!((2..=5).contains(&i), "graded pieces are H_2 … H_5");
        &self.pieces[i - 2]
    }

    pub fn total(&self) -> LadderPolynomial {
        self.pieces.iter().fold(LadderPolynomial::zero(), |acc, p| &acc + p)
    }
}

pub fn assemble_hamiltonian(model: &ModelSpec) -> Result<GradedHamiltonian> {
    let free = build_free_hamiltonian(model)?;
    let total = if model.interacting() {
        &free + &build_two_body_hamiltonian(model)?
    } else {
        free
    };
    GradedHamiltonian::from_polynomial(&total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::commutator;
    use num_complex::Complex64;

    fn c(m: usize) -> LadderOp {
        LadderOp::create(m)
    }
    fn a(m: usize) -> LadderOp {
        LadderOp::annihilate(m)
    }

    /// Two modes at p = ±p_max/2.
    fn two_mode_model(mass: f64, p_max: f64) -> ModelSpec {
        ModelSpec::free(ModeGrid::line(2, p_max).unwrap(), mass)
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(&[0.0], 1.0), 1.0);
        assert_eq!(dispersion(&[3.0], 4.0), 5.0);
        assert!((dispersion(&[1.0, 1.0, 1.0], 0.0) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_geometry() {
        let g = ModeGrid::new(2, 4, 2.0, 2).unwrap();
        assert_eq!(g.n_modes(), 32);
        assert_eq!(g.cell_volume(), 1.0);
        assert_eq!(g.momentum(0), vec![-1.5, -1.5]);
        assert_eq!(g.momentum(1), vec![-1.5, -1.5]);
        assert_eq!(g.species_of(1), 1);
        for k in 0..g.n_modes() {
            let r = g.reflected_mode(k);
            let (p, q) = (g.momentum(k), g.momentum(r));
            assert!(p.iter().zip(&q).all(|(x, y)| (x + y).abs() < 1e-15));
            assert_eq!(g.species_of(r), g.species_of(k));
        }
        assert!(ModeGrid::new(4, 2, 1.0, 1).is_err());
    }

    #[test]
    fn free_hamiltonian_examples() {
        let single = ModelSpec::free(ModeGrid::line(1, 1.0).unwrap(), 1.0);
        assert_eq!(
            build_free_hamiltonian(&single).unwrap(),
            LadderPolynomial::monomial(1.0, vec![c(0), a(0)])
        );

        // p = ±1, massless
        let h = build_free_hamiltonian(&two_mode_model(0.0, 2.0)).unwrap();
        assert_eq!(h, &LadderPolynomial::monomial(1.0, vec![c(0), a(0)]) + &LadderPolynomial::monomial(1.0, vec![c(1), a(1)]));
        assert!(h.is_hermitian(0.0));
        assert_eq!(h.degree(), 2);
    }

    #[test]
    fn free_hamiltonian_with_rest_and_moving_modes() {
        // three points with Δp = 3: p ∈ {−3, 0, 3}
        let model = ModelSpec::free(ModeGrid::line(3, 4.5).unwrap(), 4.0);
        assert_eq!(model.energies(), vec![5.0, 4.0, 5.0]);
        let h = build_free_hamiltonian(&model).unwrap();
        assert_eq!(h.coefficient(&[c(1), a(1)]), Complex64::new(4.0, 0.0));
        assert_eq!(h.coefficient(&[c(2), a(2)]), Complex64::new(5.0, 0.0));
    }

    #[test]
    fn two_body_examples() {
        let single = ModelSpec::free(ModeGrid::line(1, 1.0).unwrap(), 1.0)
            .with_interaction(InteractionKernel::Constant { value: 1.0 }, 2.0);
        assert_eq!(
            build_two_body_hamiltonian(&single).unwrap(),
            LadderPolynomial::monomial(1.0, vec![c(0), c(0), a(0), a(0)])
        );

        let pair = two_mode_model(1.0, 1.0).with_interaction(InteractionKernel::Constant { value: 1.0 }, 1.0);
        let h = build_two_body_hamiltonian(&pair).unwrap();
        let mut expected = LadderPolynomial::zero();
        expected.add_term(0.5, vec![c(0), c(0), a(0), a(0)]);
        expected.add_term(1.0, vec![c(0), c(1), a(0), a(1)]);
        expected.add_term(0.5, vec![c(1), c(1), a(1), a(1)]);
        assert_eq!(h, expected);
        assert!(h.is_hermitian(0.0));
    }

    #[test]
    fn two_body_conserves_number() {
        let table = vec![vec![1.0, -0.3, 0.2], vec![-0.3, 0.7, 0.9], vec![0.2, 0.9, -1.1]];
        let model = ModelSpec::free(ModeGrid::line(3, 1.0).unwrap(), 1.0)
            .with_interaction(InteractionKernel::Tabulated { table }, 0.8);
        let h = build_two_body_hamiltonian(&model).unwrap();
        assert!(commutator(&h, &LadderPolynomial::number_operator(3)).is_empty());
    }

    #[test]
    fn asymmetric_table_is_rejected() {
        let model = two_mode_model(1.0, 1.0)
            .with_interaction(InteractionKernel::Tabulated { table: vec![vec![1.0, 0.5], vec![0.4, 1.0]] }, 1.0);
        assert!(matches!(build_two_body_hamiltonian(&model), Err(Error::InvalidModel(_))));
        assert!(matches!(
            ModelSpec::free(ModeGrid::line(1, 1.0).unwrap(), -1.0).validate(),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn assembled_grading() {
        let free = two_mode_model(1.0, 1.0);
        let g = assemble_hamiltonian(&free).unwrap();
        assert_eq!(g.piece(3), &build_free_hamiltonian(&free).unwrap());
        for i in [2, 4, 5] {
            assert!(g.piece(i).is_empty());
        }

        let inter = free.clone().with_interaction(InteractionKernel::Separable { f: vec![0.5, 1.5] }, 0.3);
        let g = assemble_hamiltonian(&inter).unwrap();
        assert_eq!(g.piece(5), &build_two_body_hamiltonian(&inter).unwrap());
        for i in 2..=5 {
            assert!(g.piece(i).is_hermitian(1e-14));
            assert!(g.piece(i).is_empty() || g.piece(i).degree() == i - 1);
        }

        let zero = free.with_interaction(InteractionKernel::Constant { value: 1.0 }, 0.0);
        assert_eq!(assemble_hamiltonian(&zero).unwrap(), assemble_hamiltonian(&two_mode_model(1.0, 1.0)).unwrap());
    }

    #[test]
    fn store_matches_polynomials() {
        let model = two_mode_model(1.0, 1.0).with_interaction(InteractionKernel::Constant { value: 0.7 }, 0.4);
        let store = model.coefficient_store().unwrap();
        assert_eq!(store.to_polynomial(), assemble_hamiltonian(&model).unwrap().total());
    }
}
