//! Spatial number and energy densities of a two-mode superposition.

use qbbgky::fock::{hierarchy_from_oracle, FockBasis, FockDensityMatrix};
use qbbgky::model::{ModeGrid, ModelSpec};
use qbbgky::observables::{energy_density, integrate, momentum_density, number_density, total_number, SpatialGrid};
use qbbgky::Complex64;

/// `(Σ N ΔV, Σ E ΔV)` on the dual lattice.
pub fn run_example() -> qbbgky::Result<(f64, f64)> {
    let model = ModelSpec::free(ModeGrid::line(4, 2.0)?, 1.0);
    let basis = FockBasis::new(4, 1, Some(1))?;
    // one particle shared between the p = -1/2 and p = +1/2 modes
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
    psi[basis.index_of(&[0, 1, 0, 0]).expect("in basis")] = Complex64::new(1.0, 0.0);
    psi[basis.index_of(&[0, 0, 1, 0]).expect("in basis")] = Complex64::new(0.0, 1.0);
    let state = hierarchy_from_oracle(&FockDensityMatrix::pure(basis, &psi)?, 3)?;

    let xs = SpatialGrid::dual(&model.grid);
    let n = number_density(&state, &model.grid, &xs)?;
    let e = energy_density(&state, &model, &xs)?;
    for (i, x) in xs.points().iter().enumerate() {
        println!("x = {:+.3}  N = {:.6}  E = {:.6}", x[0], n[i], e[i]);
    }
    println!("D(p) = {:?}", momentum_density(&state, &model.grid)?);
    let (nt, et) = (integrate(&n, &xs), integrate(&e, &xs));
    println!("Σ N ΔV = {nt:.12} (Tr Γ11 = {:.12})", total_number(&state)?);
    println!("Σ E ΔV = {et:.12} (E_p = {:.12})", model.energy(1));
    Ok((nt, et))
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
