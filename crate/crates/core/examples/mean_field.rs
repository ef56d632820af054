//! Cluster closure at N=2: Hartree dynamics of a coherent state.
//!
//! The density-density kernel only shifts each mode's frequency by
//! `g Σ_q h_pq |α_q|²`, so `|Γ^(1,0)|` stays put while the phase winds faster.

use qbbgky::evolution::{ClosureSpec, HierarchySystem, IntegratorSpec};
use qbbgky::hierarchy::HierarchyState;
use qbbgky::model::{InteractionKernel, ModeGrid, ModelSpec};
use qbbgky::Complex64;

/// Measured angular frequency of each mode.
pub fn run_example() -> qbbgky::Result<Vec<f64>> {
    let g = 0.4;
    let table = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
    let model = ModelSpec::free(ModeGrid::line(2, 1.0)?, 1.0).with_interaction(InteractionKernel::Tabulated { table: table.clone() }, g);
    let alpha = [Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.5)];
    let t = 0.5;
    let sys = HierarchySystem::from_model(&model, ClosureSpec::cluster(2))?;
    let traj = sys.integrate(&HierarchyState::coherent(&alpha, 2)?, &IntegratorSpec::new(1e-3, t, 500))?;
    let last = traj.samples.last().expect("at least one sample");

    let mut omegas = Vec::new();
    for p in 0..2 {
        let measured = -(last.entry(1, 0, &[p])? / alpha[p]).arg() / t;
        let predicted = model.energy(p) + g * (0..2).map(|q| table[p][q] * alpha[q].norm_sqr()).sum::<f64>();
        println!("mode {p}: ω = {measured:.10} (Hartree {predicted:.10}, free {:.10})", model.energy(p));
        omegas.push(measured);
    }
    Ok(omegas)
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
