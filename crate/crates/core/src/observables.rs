//! Continuum-normalised observables: momentum, number and energy densities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{GammaTensor, HierarchyState};
use crate::model::{ModeGrid, ModelSpec};

/// Uniform position lattice with cell-midpoint sampling on `[−x_max, x_max]^dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub dims: usize,
    pub points_per_dim: usize,
    pub x_max: f64,
}

impl SpatialGrid {
    pub fn new(dims: usize, points_per_dim: usize, x_max: f64) -> Result<Self> {
        let g = SpatialGrid {
            dims,
            points_per_dim,
            x_max,
        };
        g.validate()?;
        Ok(g)
    }

    /// The lattice dual to `grid`: `Δx = 2π/(P Δp)`, on which plane waves of
    /// distinct grid momenta are exactly orthogonal.
    pub fn dual(grid: &ModeGrid) -> Self {
        SpatialGrid {
            dims: grid.dims,
            points_per_dim: grid.points_per_dim,
            x_max: PI / grid.spacing(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) || self.points_per_dim == 0 {
            return Err(Error::InvalidInput(format!(
                "spatial grid needs dims in 1..=3 and at least one point, got dims={} points={}",
                self.dims, self.points_per_dim
            )));
        }
        if !(self.x_max > 0.0) || !self.x_max.is_finite() {
            return Err(Error::InvalidInput(format!("x_max must be positive, got {}", self.x_max)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.x_max / self.points_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of point `i`, first dimension slowest.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let dx = self.spacing();
        let mut out = vec![0.0; self.dims];
        let mut g = i;
        for c in out.iter_mut().rev() {
            *c = -self.x_max + ((g % self.points_per_dim) as f64 + 0.5) * dx;
            g /= self.points_per_dim;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

fn stored<'a>(state: &'a HierarchyState, m: usize, n: usize, what: &str) -> Result<&'a GammaTensor> {
    state
        .stored(m, n)
        .ok_or_else(|| Error::InsufficientOrder(format!("{what} needs Γ^({m},{n}), state order is {}", state.order())))
}

fn check_modes(state: &HierarchyState, grid: &ModeGrid) -> Result<()> {
    if state.modes() != grid.n_modes() {
        return Err(Error::IncompatibleStates(format!(
            "state has {} modes, grid {}",
            state.modes(),
            grid.n_modes()
        )));
    }
    Ok(())
}

fn check_dims(grid: &ModeGrid, xs: &SpatialGrid) -> Result<()> {
    xs.validate()?;
    if grid.dims != xs.dims {
        return Err(Error::InvalidInput(format!(
            "spatial grid has {} dimensions, momentum grid {}",
            xs.dims, grid.dims
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_k Γ^(1,1)(k;k)`.
pub fn total_number(state: &HierarchyState) -> Result<f64> {
    let g = stored(state, 1, 1, "total number")?;
    Ok((0..state.modes()).map(|k| g.get(&[k, k]).re).sum())
}

/// `D(p_k) = Γ^(1,1)(k;k) / Δp^dims`.
pub fn momentum_density(state: &HierarchyState, grid: &ModeGrid) -> Result<Vec<f64>> {
    check_modes(state, grid)?;
    let g = stored(state, 1, 1, "momentum density")?;
    let dv = grid.cell_volume();
    Ok((0..state.modes()).map(|k| g.get(&[k, k]).re / dv).collect())
}

/// `N(x) = Σ_{k,p} (Δp^d/(2π)^d) e^{−ix·(k−p)} Γ^(1,1)(p;k)`, summed within each species.
pub fn number_density(state: &HierarchyState, grid: &ModeGrid, xs: &SpatialGrid) -> Result<Vec<f64>> {
    Ok(number_density_complex(state, grid, xs)?.into_iter().map(|z| z.re).collect())
}

pub fn number_density_complex(state: &HierarchyState, grid: &ModeGrid, xs: &SpatialGrid) -> Result<Vec<Complex64>> {
    check_modes(state, grid)?;
    check_dims(grid, xs)?;
    let g11 = stored(state, 1, 1, "number density")?;
    let modes = state.modes();
    let weight = grid.cell_volume() / (2.0 * PI).powi(grid.dims as i32);
    let momenta = grid.momenta();
    Ok((0..xs.len())
        .into_par_iter()
        .map(|i| {
            let x = xs.point(i);
            let phase: Vec<Complex64> = momenta.iter().map(|k| Complex64::from_polar(1.0, dot(&x, k))).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..modes {
                for p in 0..modes {
                    if grid.species_of(k) == grid.species_of(p) {
                        acc += phase[k].conj() * phase[p] * g11.get(&[p, k]);
                    }
                }
            }
            acc * weight
        })
        .collect())
}

/// Free-field energy density.
///
/// `E(x) = Σ w_k w_p (m² + E_pE_k + p·k) e^{−ix·(k−p)} Γ^(1,1)(p;k)
///       + Σ w_k w_p ½(m² − E_pE_k − p·k) [e^{ix·(k+p)} Γ^(2,0)(k,p) + c.c.]`
/// with `w_k = sqrt(Δp^d / ((2π)^d 2E_k))`, summed within each species.
pub fn energy_density(state: &HierarchyState, model: &ModelSpec, xs: &SpatialGrid) -> Result<Vec<f64>> {
    Ok(energy_density_complex(state, model, xs)?.into_iter().map(|z| z.re).collect())
}

/// [`energy_density`] before the (rounding-level) imaginary part is dropped.
pub fn energy_density_complex(state: &HierarchyState, model: &ModelSpec, xs: &SpatialGrid) -> Result<Vec<Complex64>> {
    let grid = &model.grid;
    check_modes(state, grid)?;
    check_dims(grid, xs)?;
    let g11 = stored(state, 1, 1, "energy density")?;
    let g20 = stored(state, 2, 0, "energy density")?;
    let modes = state.modes();
    let energies = model.energies();
    if let Some(k) = energies.iter().position(|&e| e <= 0.0) {
        return Err(Error::InvalidModel(format!("energy density is undefined for mode {k} with E = 0")));
    }
    let base = grid.cell_volume() / (2.0 * PI).powi(grid.dims as i32);
    let w: Vec<f64> = energies.iter().map(|e| (base / (2.0 * e)).sqrt()).collect();
    let momenta = grid.momenta();
    let m2 = model.mass * model.mass;
    Ok((0..xs.len())
        .into_par_iter()
        .map(|i| {
            let x = xs.point(i);
            let phase: Vec<Complex64> = momenta.iter().map(|k| Complex64::from_polar(1.0, dot(&x, k))).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..modes {
                for p in 0..modes {
                    if grid.species_of(k) != grid.species_of(p) {
                        continue;
                    }
                    let ww = w[k] * w[p];
                    let ee = energies[k] * energies[p];
                    let pk = dot(&momenta[k], &momenta[p]);
                    acc += ww * (m2 + ee + pk) * phase[k].conj() * phase[p] * g11.get(&[p, k]);
                    let anomalous = phase[k] * phase[p] * g20.get(&[k, p]);
                    acc += ww * 0.5 * (m2 - ee - pk) * (anomalous + anomalous.conj());
                }
            }
            acc
        })
        .collect())
}

/// `Σ_x f(x) ΔV`.
pub fn integrate(field: &[f64], xs: &SpatialGrid) -> f64 {
    field.iter().sum::<f64>() * xs.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{hierarchy_from_oracle, FockBasis, FockDensityMatrix};
    use crate::ladder::{LadderOp, LadderPolynomial};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dual_lattice_geometry() {
        let grid = ModeGrid::line(4, 2.0).unwrap();
        let xs = SpatialGrid::dual(&grid);
        assert!((xs.spacing() - 2.0 * PI / 4.0).abs() < 1e-15);
        assert!((xs.cell_volume() * xs.len() as f64 * grid.cell_volume() - 2.0 * PI).abs() < 1e-12);
        assert!((xs.point(0)[0] + xs.point(3)[0]).abs() < 1e-15);
    }

    #[test]
    fn vacuum_is_empty() {
        let model = ModelSpec::free(ModeGrid::line(3, 1.5).unwrap(), 1.0);
        let xs = SpatialGrid::dual(&model.grid);
        let s = HierarchyState::vacuum(3, 3);
        assert!(momentum_density(&s, &model.grid).unwrap().iter().all(|&d| d == 0.0));
        assert!(number_density(&s, &model.grid, &xs).unwrap().iter().all(|&d| d == 0.0));
        assert!(energy_density(&s, &model, &xs).unwrap().iter().all(|&d| d == 0.0));
        assert_eq!(total_number(&s).unwrap(), 0.0);
    }

    #[test]
    fn momentum_density_examples() {
        // two points with p_max = 1 give Δp = 1
        let grid = ModeGrid::line(2, 1.0).unwrap();
        let s = HierarchyState::coherent(&[c(2.0, 0.0), c(0.0, 0.0)], 3).unwrap();
        let d = momentum_density(&s, &grid).unwrap();
        assert!((d[0] - 4.0).abs() < 1e-14 && d[1] == 0.0);

        let grid = ModeGrid::line(2, 3.0).unwrap();
        let rho = FockDensityMatrix::fock(FockBasis::new(2, 2, None).unwrap(), &[1, 1]).unwrap();
        let s = hierarchy_from_oracle(&rho, 3).unwrap();
        let d = momentum_density(&s, &grid).unwrap();
        let dv = grid.cell_volume();
        assert!(d.iter().all(|&x| (x - 1.0 / dv).abs() < 1e-14));
        assert!((d.iter().sum::<f64>() * dv - 2.0).abs() < 1e-14);
        assert!((total_number(&s).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_rest_particle() {
        let model = ModelSpec::free(ModeGrid::line(1, 0.5).unwrap(), 1.3);
        assert_eq!(model.grid.momentum(0), vec![0.0]);
        let rho = FockDensityMatrix::fock(FockBasis::new(1, 2, None).unwrap(), &[1]).unwrap();
        let s = hierarchy_from_oracle(&rho, 3).unwrap();
        let xs = SpatialGrid::new(1, 5, 4.0).unwrap();
        let n = number_density(&s, &model.grid, &xs).unwrap();
        let e = energy_density(&s, &model, &xs).unwrap();
        assert!(n.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
        assert!(e.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
        // a single mode is orthogonal to itself on any lattice of length 2π/Δp
        let xs = SpatialGrid::dual(&model.grid);
        assert!((integrate(&number_density(&s, &model.grid, &xs).unwrap(), &xs) - 1.0).abs() < 1e-12);
        assert!((integrate(&energy_density(&s, &model, &xs).unwrap(), &xs) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn interference_fringes_match_operator_expectation() {
        let p0 = 0.75;
        let model = ModelSpec::free(ModeGrid::line(2, 2.0 * p0).unwrap(), 1.0);
        assert!((model.grid.momentum(0)[0] + p0).abs() < 1e-15);
        let basis = FockBasis::new(2, 1, None).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // order: |0,0⟩ |0,1⟩ |1,0⟩ |1,1⟩
        let psi = [c(0.0, 0.0), c(r, 0.0), c(0.0, r), c(0.0, 0.0)];
        let rho = FockDensityMatrix::pure(basis, &psi).unwrap();
        let s = hierarchy_from_oracle(&rho, 3).unwrap();
        let xs = SpatialGrid::new(1, 9, 3.0).unwrap();
        let field = number_density(&s, &model.grid, &xs).unwrap();
        let weight = model.grid.cell_volume() / (2.0 * PI);
        for (i, x) in xs.points().iter().enumerate() {
            // density operator Σ_{k,p} u_k u_p e^{−ix(k−p)} b†_k b_p
            let mut op = LadderPolynomial::zero();
            for k in 0..2 {
                for p in 0..2 {
                    let ph = Complex64::from_polar(weight, -x[0] * (model.grid.momentum(k)[0] - model.grid.momentum(p)[0]));
                    op.add_term(ph, vec![LadderOp::create(k), LadderOp::annihilate(p)]);
                }
            }
            let expected = rho.expectation(&op);
            assert!(expected.im.abs() < 1e-14);
            assert!((field[i] - expected.re).abs() < 1e-14);
            // the relative phase of the superposition shifts the fringe by π/2
            let fringe = weight * (1.0 + (2.0 * p0 * x[0] - PI / 2.0).cos());
            assert!((field[i] - fringe).abs() < 1e-14, "{} {}", field[i], fringe);
        }
        let xs = SpatialGrid::dual(&model.grid);
        assert!((integrate(&number_density(&s, &model.grid, &xs).unwrap(), &xs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anomalous_terms_integrate_to_free_energy() {
        let model = ModelSpec::free(ModeGrid::new(2, 3, 1.2, 1).unwrap(), 0.8);
        let alpha: Vec<Complex64> = (0..9).map(|k| c(0.1 * k as f64 - 0.3, 0.05 * (k * k) as f64 - 0.2)).collect();
        let s = HierarchyState::coherent(&alpha, 3).unwrap();
        let xs = SpatialGrid::dual(&model.grid);
        let e = energy_density_complex(&s, &model, &xs).unwrap();
        assert!(e.iter().all(|z| z.im.abs() < 1e-12));
        let total = integrate(&e.iter().map(|z| z.re).collect::<Vec<_>>(), &xs);
        let free: f64 = model.energies().iter().zip(&alpha).map(|(e, a)| e * a.norm_sqr()).sum();
        assert!((total - free).abs() < 1e-12, "{total} {free}");
    }

    #[test]
    fn species_do_not_interfere() {
        let grid = ModeGrid::new(1, 2, 1.0, 2).unwrap();
        let s = HierarchyState::coherent(&[c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.0), c(0.0, 0.0)], 3).unwrap();
        let xs = SpatialGrid::dual(&grid);
        let n = number_density(&s, &grid, &xs).unwrap();
        assert!((integrate(&n, &xs) - total_number(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn missing_orders_are_reported() {
        let model = ModelSpec::free(ModeGrid::line(2, 1.0).unwrap(), 1.0);
        let s = HierarchyState::vacuum(2, 2);
        assert!(matches!(total_number(&s), Err(Error::InsufficientOrder(_))));
        assert!(matches!(energy_density(&s, &model, &SpatialGrid::dual(&model.grid)), Err(Error::InsufficientOrder(_))));
    }

    #[test]
    fn massless_zero_mode_is_rejected() {
        let model = ModelSpec::free(ModeGrid::line(1, 0.5).unwrap(), 0.0);
        let s = HierarchyState::vacuum(1, 3);
        assert!(matches!(energy_density(&s, &model, &SpatialGrid::dual(&model.grid)), Err(Error::InvalidModel(_))));
    }
}
