//! Free evolution of a coherent state: every mode picks up the phase e^{-iE_p t}.

use qbbgky::evolution::{ClosureSpec, HierarchySystem, IntegratorSpec};
use qbbgky::hierarchy::HierarchyState;
use qbbgky::model::{ModeGrid, ModelSpec};
use qbbgky::Complex64;

/// Largest deviation of `Γ^(1,0)` from the analytic phase over the run.
pub fn run_example() -> qbbgky::Result<f64> {
    let model = ModelSpec::free(ModeGrid::line(4, 2.0)?, 1.0);
    let alpha = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4), Complex64::new(0.5, -0.3), Complex64::new(0.1, 0.2)];
    let sys = HierarchySystem::from_model(&model, ClosureSpec::truncate(3))?;
    let traj = sys.integrate(&HierarchyState::coherent(&alpha, 3)?, &IntegratorSpec::new(1e-3, 1.0, 250))?;

    let e = model.energies();
    let mut worst = 0.0f64;
    for s in &traj.samples {
        for (p, a) in alpha.iter().enumerate() {
            let exact = Complex64::from_polar(1.0, -e[p] * s.time) * a;
            worst = worst.max((s.entry(1, 0, &[p])? - exact).norm());
        }
        println!("t = {:.2}  N = {:.12}", s.time, sys.one_body_matrix(s).trace().re);
    }
    println!("max phase error {worst:.2e}");
    Ok(worst)
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
