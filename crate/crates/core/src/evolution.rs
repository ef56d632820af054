//! Closed hierarchy equations and their time integration.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{stored_orders, GammaTensor, HierarchyState};
use crate::ladder::{compile_hierarchy, CoefficientStore, ProgramSet};
use crate::model::ModelSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureKind {
    /// Every out-of-range tensor is zero.
    Truncate,
    /// Out-of-range tensors are rebuilt from the retained cumulants.
    Cluster,
}

/// Closure rule and order `N`: tensors with `m + n ≥ N` are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureSpec {
    #[serde(rename = "type")]
    pub kind: ClosureKind,
    pub order: usize,
}

impl ClosureSpec {
    pub fn truncate(order: usize) -> Self {
        ClosureSpec {
            kind: ClosureKind::Truncate,
            order,
        }
    }

    pub fn cluster(order: usize) -> Self {
        ClosureSpec {
            kind: ClosureKind::Cluster,
            order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Configuration(format!("closure order must be ≥ 2, got {}", self.order)));
        }
        if self.kind == ClosureKind::Cluster && !(2..=3).contains(&self.order) {
            return Err(Error::Configuration(format!(
                "cluster closure is implemented for orders 2 and 3, got {}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn closes(&self, m: usize, n: usize) -> bool {
        m + n >= self.order
    }

    /// Value of the closed `Γ^(m,n)` at one index tuple (annihilation slots first).
    pub fn closed_entry(&self, state: &HierarchyState, m: usize, n: usize, slots: &[usize]) -> Complex64 {
        match (self.kind, self.order) {
            (ClosureKind::Truncate, _) => ZERO,
            (ClosureKind::Cluster, 2) => {
                let g1 = state.stored(1, 0).expect("cluster closure needs Γ^(1,0)");
                let ann: Complex64 = slots[..m].iter().map(|&p| g1.data[p]).product();
                let cre: Complex64 = slots[m..m + n].iter().map(|&p| g1.data[p].conj()).product();
                ann * cre
            }
            (ClosureKind::Cluster, _) => {
                let legs: Vec<Leg> = slots[..m]
                    .iter()
                    .map(|&p| Leg::Ann(p))
                    .chain(slots[m..m + n].iter().map(|&p| Leg::Cre(p)))
                    .collect();
                let cumulants = Cumulants::new(state);
                gaussian_expansion(&legs, &cumulants)
            }
        }
    }

    /// Materialises the closed tensor; only defined for out-of-range orders.
    pub fn close(&self, state: &HierarchyState, m: usize, n: usize) -> Result<GammaTensor> {
        if !self.closes(m, n) {
            return Err(Error::ClosureMisuse { m, n, order: self.order });
        }
        self.check_state(state)?;
        Ok(GammaTensor::from_fn(m, n, state.modes(), |slots| self.closed_entry(state, m, n, slots)))
    }

    /// A state of order `order` whose stored tensors hold either the retained
    /// data or the closure's reconstruction.
    pub fn extend(&self, state: &HierarchyState, order: usize) -> Result<HierarchyState> {
        self.check_state(state)?;
        let mut out = HierarchyState::vacuum(state.modes(), order);
        out.time = state.time;
        for (m, n) in stored_orders(order) {
            if m + n == 0 {
                continue;
            }
            let t = if state.in_range(m, n) {
                state.get_gamma(m, n)?
            } else {
                self.close(state, m, n)?
            };
            out.set_gamma(t)?;
        }
        Ok(out)
    }

    fn check_state(&self, state: &HierarchyState) -> Result<()> {
        self.validate()?;
        if state.order() != self.order {
            return Err(Error::Configuration(format!(
                "state order K = {} must equal closure order N = {}",
                state.order(),
                self.order
            )));
        }
        Ok(())
    }

    /// `Γ^(m,n)(slots)` from stored data when in range, otherwise from the closure.
    pub fn lookup(&self, state: &HierarchyState, m: usize, n: usize, slots: &[usize]) -> Complex64 {
        if state.in_range(m, n) {
            state.entry_unchecked(m, n, slots)
        } else {
            self.closed_entry(state, m, n, slots)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Leg {
    Ann(usize),
    Cre(usize),
}

/// First and second normal-ordered cumulants of a state with `K ≥ 3`.
struct Cumulants<'a> {
    g10: &'a GammaTensor,
    g20: &'a GammaTensor,
    g11: &'a GammaTensor,
}

impl<'a> Cumulants<'a> {
    fn new(state: &'a HierarchyState) -> Self {
        Cumulants {
            g10: state.stored(1, 0).expect("Γ^(1,0) stored"),
            g20: state.stored(2, 0).expect("Γ^(2,0) stored"),
            g11: state.stored(1, 1).expect("Γ^(1,1) stored"),
        }
    }

    fn single(&self, leg: Leg) -> Complex64 {
        match leg {
            Leg::Ann(p) => self.g10.data[p],
            Leg::Cre(p) => self.g10.data[p].conj(),
        }
    }

    fn pair(&self, a: Leg, b: Leg) -> Complex64 {
        match (a, b) {
            (Leg::Ann(p), Leg::Ann(q)) => self.g20.get(&[p, q]) - self.single(a) * self.single(b),
            (Leg::Cre(p), Leg::Cre(q)) => (self.g20.get(&[p, q]) - self.single(Leg::Ann(p)) * self.single(Leg::Ann(q))).conj(),
            (Leg::Ann(p), Leg::Cre(q)) | (Leg::Cre(q), Leg::Ann(p)) => {
                self.g11.get(&[p, q]) - self.single(Leg::Ann(p)) * self.single(Leg::Cre(q))
            }
        }
    }
}

/// Sum over all partitions of `legs` into blocks of size one or two of the
/// product of block cumulants.
fn gaussian_expansion(legs: &[Leg], k: &Cumulants) -> Complex64 {
    fn go(remaining: &mut Vec<Leg>, k: &Cumulants) -> Complex64 {
        let Some(first) = remaining.pop() else {
            return Complex64::new(1.0, 0.0);
        };
        let mut total = k.single(first) * go(remaining, k);
        for i in 0..remaining.len() {
            let partner = remaining.remove(i);
            total += k.pair(first, partner) * go(remaining, k);
            remaining.insert(i, partner);
        }
        remaining.push(first);
        total
    }
    go(&mut legs.to_vec(), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec {
            dt: 1e-3,
            t_final: 1.0,
            sample_every: 100,
        }
    }
}

impl IntegratorSpec {
    pub fn new(dt: f64, t_final: f64, sample_every: usize) -> Self {
        IntegratorSpec { dt, t_final, sample_every }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Configuration(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::Configuration(format!("t_final must be ≥ 0, got {}", self.t_final)));
        }
        if self.sample_every == 0 {
            return Err(Error::Configuration("sample_every must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        if self.t_final == 0.0 {
            0
        } else {
            (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }

    /// Times of the stored samples: step 0, every `sample_every` steps, and the final step.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.n_steps();
        (0..=n)
            .filter(|&i| i % self.sample_every == 0 || i == n)
            .map(|i| self.time_at(i))
            .collect()
    }

    fn time_at(&self, step: usize) -> f64 {
        if step == self.n_steps() {
            self.t_final
        } else {
            step as f64 * self.dt
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub t: f64,
    pub trace: f64,
    pub number: f64,
    pub energy: f64,
    pub herm_residual: f64,
    pub symmetry_residual: f64,
    pub min_eig_gamma11: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub rows: Vec<ConservationRow>,
}

impl ConservationReport {
    pub fn max_number_drift(&self) -> f64 {
        self.drift(|r| r.number)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.drift(|r| r.energy)
    }

    fn drift(&self, f: impl Fn(&ConservationRow) -> f64) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let x0 = f(first);
        self.rows.iter().map(|r| (f(r) - x0).abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `t, trace, number, energy, herm_residual, min_eig_gamma11`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "trace", "number", "energy", "herm_residual", "min_eig_gamma11"])?;
        for r in &self.rows {
            wtr.write_record([r.t, r.trace, r.number, r.energy, r.herm_residual, r.min_eig_gamma11].map(crate::cli_io::format_number))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<HierarchyState>,
    pub report: ConservationReport,
}

/// Integration stopped early; `partial` holds everything sampled before the failure.
#[derive(Debug)]
pub struct IntegrationError {
    pub error: Error,
    pub partial: Trajectory,
}

impl From<IntegrationError> for Error {
    fn from(e: IntegrationError) -> Self {
        e.error
    }
}

/// A compiled, closed hierarchy ready to be integrated.
#[derive(Debug, Clone)]
pub struct HierarchySystem {
    store: CoefficientStore,
    programs: ProgramSet,
    closure: ClosureSpec,
}

impl HierarchySystem {
    /// Compiles programs for every order retained by `closure` (state order `K = N`).
    pub fn new(store: CoefficientStore, closure: ClosureSpec) -> Result<Self> {
        closure.validate()?;
        let programs = compile_hierarchy(&store, closure.order)?;
        Ok(HierarchySystem { store, programs, closure })
    }

    pub fn from_model(model: &ModelSpec, closure: ClosureSpec) -> Result<Self> {
        Self::new(model.coefficient_store()?, closure)
    }

    /// Uses externally supplied programs; every stored order must have one.
    pub fn with_programs(store: CoefficientStore, programs: ProgramSet, closure: ClosureSpec) -> Result<Self> {
        closure.validate()?;
        for (m, n) in stored_orders(closure.order) {
            if m + n > 0 && programs.get(m, n).is_none() {
                return Err(Error::Configuration(format!("missing contraction program for Γ^({m},{n})")));
            }
        }
        Ok(HierarchySystem { store, programs, closure })
    }

    pub fn closure(&self) -> ClosureSpec {
        self.closure
    }

    pub fn programs(&self) -> &ProgramSet {
        &self.programs
    }

    pub fn store(&self) -> &CoefficientStore {
        &self.store
    }

    fn check_state(&self, state: &HierarchyState) -> Result<()> {
        if state.modes() != self.store.n_modes {
            return Err(Error::IncompatibleStates(format!(
                "state has {} modes, Hamiltonian {}",
                state.modes(),
                self.store.n_modes
            )));
        }
        self.closure.check_state(state)
    }

    /// Time derivative of every stored tensor (`(0,0)` included and zero),
    /// symmetrised, in [`stored_orders`] order.
    pub fn rhs(&self, state: &HierarchyState) -> Result<Vec<GammaTensor>> {
        self.check_state(state)?;
        let orders = stored_orders(state.order());
        orders
            .par_iter()
            .map(|&(m, n)| {
                if m + n == 0 {
                    return Ok(GammaTensor::zeros(0, 0, state.modes()));
                }
                let program = self
                    .programs
                    .get(m, n)
                    .ok_or_else(|| Error::Configuration(format!("missing contraction program for Γ^({m},{n})")))?;
                let data = program.evaluate(&self.store, |sm, sn, slots| self.closure.lookup(state, sm, sn, slots))?;
                let t = GammaTensor::from_data(m, n, state.modes(), data)?;
                Ok(t.symmetrize().hermitize())
            })
            .collect()
    }

    /// One classical RK4 step of size `dt`.
    pub fn step(&self, state: &HierarchyState, dt: f64) -> Result<HierarchyState> {
        let stage = |s: &HierarchyState, k: &[GammaTensor], h: f64| {
            let mut next = s.axpy(h, k);
            next.enforce_symmetry();
            next
        };
        let k1 = self.rhs(state)?;
        let k2 = self.rhs(&stage(state, &k1, dt / 2.0))?;
        let k3 = self.rhs(&stage(state, &k2, dt / 2.0))?;
        let k4 = self.rhs(&stage(state, &k3, dt))?;
        let mut next = state.clone();
        for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
            next = next.axpy(w * dt / 6.0, k);
        }
        next.enforce_symmetry();
        next.time = state.time + dt;
        for t in next.stored_tensors() {
            if !t.is_finite() {
                return Err(Error::Divergence {
                    time: next.time,
                    m: t.m,
                    n: t.n,
                });
            }
        }
        Ok(next)
    }

    /// Integrates from `initial`, sampling per `integrator`.
    pub fn integrate(&self, initial: &HierarchyState, integrator: &IntegratorSpec) -> std::result::Result<Trajectory, IntegrationError> {
        let mut traj = Trajectory {
            samples: Vec::new(),
            report: ConservationReport::default(),
        };
        let fail = |error: Error, partial: Trajectory| IntegrationError { error, partial };
        if let Err(e) = integrator.validate().and_then(|_| self.check_state(initial)) {
            return Err(fail(e, traj));
        }
        let n_steps = integrator.n_steps();
        let mut state = initial.clone();
        state.time = 0.0;
        let record = |traj: &mut Trajectory, s: &HierarchyState| -> Result<()> {
            traj.report.rows.push(self.diagnostics(s)?);
            traj.samples.push(s.clone());
            Ok(())
        };
        if let Err(e) = record(&mut traj, &state) {
            return Err(fail(e, traj));
        }
        for i in 1..=n_steps {
            let t_prev = integrator.time_at(i - 1);
            let t_next = integrator.time_at(i);
            match self.step(&state, t_next - t_prev) {
                Ok(mut s) => {
                    s.time = t_next;
                    state = s;
                }
                Err(e) => return Err(fail(e, traj)),
            }
            if i % integrator.sample_every == 0 || i == n_steps {
                if let Err(e) = record(&mut traj, &state) {
                    return Err(fail(e, traj));
                }
            }
        }
        Ok(traj)
    }

    /// `⟨H⟩` from the in-range tensors, with the closure supplying the rest.
    pub fn energy(&self, state: &HierarchyState) -> f64 {
        let mut e = ZERO;
        let mut slots = Vec::new();
        for (_, kernel) in self.store.kernels() {
            let (nc, na) = (kernel.creators, kernel.annihilators);
            for entry in &kernel.entries {
                slots.clear();
                slots.extend_from_slice(&entry.indices[nc..]);
                slots.extend_from_slice(&entry.indices[..nc]);
                e += entry.value * self.closure.lookup(state, na, nc, &slots);
            }
        }
        e.re
    }

    pub fn one_body_matrix(&self, state: &HierarchyState) -> DMatrix<Complex64> {
        let modes = state.modes();
        DMatrix::from_fn(modes, modes, |p, q| self.closure.lookup(state, 1, 1, &[p, q]))
    }

    pub fn diagnostics(&self, state: &HierarchyState) -> Result<ConservationRow> {
        let g11 = self.one_body_matrix(state);
        let number = g11.trace().re;
        let eig = SymmetricEigen::try_new(g11, 1e-14, 0)
            .ok_or_else(|| Error::NumericalBreakdown("Γ^(1,1) eigendecomposition did not converge".into()))?;
        let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ConservationRow {
            t: state.time,
            trace: state.trace().re,
            number,
            energy: self.energy(state),
            herm_residual: state.hermiticity_residual(),
            symmetry_residual: state.symmetry_residual(),
            min_eig_gamma11: min_eig,
        })
    }
}
