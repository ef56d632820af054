use qbbgky::evolution::{ClosureSpec, HierarchySystem, IntegratorSpec};
use qbbgky::fock::{evolve_density, hierarchy_from_oracle, FockBasis, FockDensityMatrix};
use qbbgky::hierarchy::HierarchyState;
use qbbgky::model::{assemble_hamiltonian, InteractionKernel, ModeGrid, ModelSpec};
use qbbgky::observables::momentum_density;
use qbbgky::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn oracle_at(model: &ModelSpec, rho0: &FockDensityMatrix, times: &[f64], order: usize) -> Vec<HierarchyState> {
    let h = assemble_hamiltonian(model).unwrap().total();
    evolve_density(rho0, &h, times)
        .unwrap()
        .iter()
        .map(|rho| hierarchy_from_oracle(rho, order).unwrap())
        .collect()
}

fn tabulated(g: f64) -> ModelSpec {
    ModelSpec::free(ModeGrid::line(2, 1.0).unwrap(), 1.0)
        .with_interaction(InteractionKernel::Tabulated { table: vec![vec![1.0, 0.3], vec![0.3, 2.0]] }, g)
}

#[test]
fn exact_closure_for_mixed_particle_sectors() {
    // superposition of 0, 1 and 2 particles: every Γ with m > 2 or n > 2 vanishes
    let model = tabulated(0.5);
    let basis = FockBasis::new(2, 4, None).unwrap();
    let mut psi = vec![c(0.0, 0.0); basis.dim()];
    for (occ, amp) in [([0u8, 0u8], c(0.3, 0.0)), ([1, 0], c(0.2, 0.4)), ([2, 0], c(0.5, -0.1)), ([1, 1], c(-0.3, 0.3)), ([0, 2], c(0.1, 0.6))] {
        psi[basis.index_of(&occ).unwrap()] = amp;
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|z| *z /= norm);
    let rho0 = FockDensityMatrix::pure(basis, &psi).unwrap();

    let spec = IntegratorSpec::new(1e-3, 1.0, 250);
    let sys = HierarchySystem::from_model(&model, ClosureSpec::truncate(6)).unwrap();
    let traj = sys.integrate(&hierarchy_from_oracle(&rho0, 6).unwrap(), &spec).unwrap();
    let oracle = oracle_at(&model, &rho0, &spec.sample_times(), 6);
    for (h, o) in traj.samples.iter().zip(&oracle) {
        let d = h.distance(o, 6).unwrap();
        assert!(d <= 1e-6, "t = {}: {d}", h.time);
    }
    // the dynamics are not trivial
    let moved = traj.samples[0].distance(traj.samples.last().unwrap(), 6).unwrap();
    assert!(moved > 0.1, "{moved}");
}

#[test]
fn mean_field_phase_rotation() {
    // cluster N=2: |Γ^(1,0)| is constant and each mode rotates at E_p + g Σ_q h_pq |α_q|²
    let g = 0.4;
    let model = tabulated(g);
    let alpha = [c(0.6, 0.2), c(-0.3, 0.5)];
    let sys = HierarchySystem::from_model(&model, ClosureSpec::cluster(2)).unwrap();
    let traj = sys
        .integrate(&HierarchyState::coherent(&alpha, 2).unwrap(), &IntegratorSpec::new(1e-3, 2.0, 500))
        .unwrap();
    let h = [[1.0, 0.3], [0.3, 2.0]];
    let e = model.energies();
    for s in &traj.samples {
        for p in 0..2 {
            let omega = e[p] + g * (0..2).map(|q| h[p][q] * alpha[q].norm_sqr()).sum::<f64>();
            let exact = Complex64::from_polar(1.0, -omega * s.time) * alpha[p];
            assert!((s.entry(1, 0, &[p]).unwrap() - exact).norm() < 1e-10);
        }
    }
}

#[test]
fn gaussian_free_evolution_is_exact_under_cumulant_closure() {
    let model = ModelSpec::free(ModeGrid::line(2, 1.0).unwrap(), 0.5);
    let n = [0.2, 0.1];
    let spec = IntegratorSpec::new(1e-3, 1.0, 500);
    let sys = HierarchySystem::from_model(&model, ClosureSpec::cluster(3)).unwrap();
    let traj = sys.integrate(&HierarchyState::gaussian(&n, 3).unwrap(), &spec).unwrap();
    let rho0 = FockDensityMatrix::thermal(FockBasis::new(2, 22, None).unwrap(), &n).unwrap();
    let oracle = oracle_at(&model, &rho0, &spec.sample_times(), 3);
    for (h, o) in traj.samples.iter().zip(&oracle) {
        assert!(h.distance(o, 3).unwrap() < 1e-9);
    }
}

#[test]
fn coherent_free_evolution_is_exact_under_truncation() {
    let model = ModelSpec::free(ModeGrid::line(3, 1.5).unwrap(), 1.0);
    let alpha = [c(0.2, 0.1), c(0.0, -0.3), c(0.25, 0.0)];
    let spec = IntegratorSpec::new(1e-3, 1.0, 1000);
    let sys = HierarchySystem::from_model(&model, ClosureSpec::truncate(4)).unwrap();
    let traj = sys.integrate(&HierarchyState::coherent(&alpha, 4).unwrap(), &spec).unwrap();
    let rho0 = FockDensityMatrix::coherent(FockBasis::new(3, 8, None).unwrap(), &alpha).unwrap();
    let oracle = oracle_at(&model, &rho0, &[1.0], 4);
    assert!(traj.samples.last().unwrap().distance(&oracle[0], 4).unwrap() < 1e-8);
    // momentum occupation is a constant of the free flow
    let d0 = momentum_density(&traj.samples[0], &model.grid).unwrap();
    let d1 = momentum_density(traj.samples.last().unwrap(), &model.grid).unwrap();
    assert!(d0.iter().zip(&d1).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn conserved_quantities_under_interacting_closures() {
    let model = tabulated(0.3);
    let alpha = [c(0.5, 0.0), c(0.2, 0.3)];
    for closure in [ClosureSpec::cluster(3), ClosureSpec::truncate(4)] {
        let sys = HierarchySystem::from_model(&model, closure).unwrap();
        let traj = sys
            .integrate(&HierarchyState::coherent(&alpha, closure.order).unwrap(), &IntegratorSpec::new(1e-3, 1.0, 100))
            .unwrap();
        // the density-density kernel commutes with every b†_k b_k
        assert!(traj.report.max_number_drift() < 1e-10, "{closure:?}");
        assert!(traj.report.rows.iter().all(|r| r.herm_residual <= 1e-12 && r.min_eig_gamma11 >= -1e-10));
    }
}
