//! A state with at most two particles closes exactly at K = 6 and the
//! hierarchy reproduces the exact Fock-space evolution.

use qbbgky::evolution::{ClosureSpec, HierarchySystem, IntegratorSpec};
use qbbgky::fock::{evolve_density, hierarchy_from_oracle, FockBasis, FockDensityMatrix};
use qbbgky::model::{assemble_hamiltonian, InteractionKernel, ModeGrid, ModelSpec};

/// Largest distance between hierarchy and oracle over the run.
pub fn run_example() -> qbbgky::Result<f64> {
    let model = ModelSpec::free(ModeGrid::line(2, 1.0)?, 1.0)
        .with_interaction(InteractionKernel::Tabulated { table: vec![vec![1.0, 0.3], vec![0.3, 2.0]] }, 0.5);
    let rho0 = FockDensityMatrix::fock(FockBasis::new(2, 4, None)?, &[2, 0])?;
    let spec = IntegratorSpec::new(1e-3, 1.0, 200);

    let sys = HierarchySystem::from_model(&model, ClosureSpec::truncate(6))?;
    let traj = sys.integrate(&hierarchy_from_oracle(&rho0, 6)?, &spec)?;
    let h = assemble_hamiltonian(&model)?.total();
    let exact = evolve_density(&rho0, &h, &spec.sample_times())?;

    let mut worst = 0.0f64;
    for (s, rho) in traj.samples.iter().zip(&exact) {
        let d = s.distance(&hierarchy_from_oracle(rho, 6)?, 6)?;
        println!("t = {:.1}  distance {d:.2e}", s.time);
        worst = worst.max(d);
    }
    Ok(worst)
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
