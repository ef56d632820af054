//! Run configuration, orchestration of the command line pipelines, and output files.
//!
//! Output directory layout:
//!
//! ```text
//! config.normalized.json   every default resolved
//! metadata.json            status, mode map and continuum weights
//! programs.json            compiled equations (derive)
//! equations.txt            the same, human readable (derive)
//! snapshots/               hierarchy states, one JSON file per sample (run)
//! conservation.csv         t, trace, number, energy, herm_residual, min_eig_gamma11 (run)
//! momentum_density.csv     t, mode, species, p_0.., D (run, observe)
//! fields.csv               t, x_0.., E, N (run, observe)
//! oracle_snapshots/        oracle states reduced to the hierarchy (oracle)
//! oracle.csv               t, trace, purity, number, energy, boundary_weight (oracle)
//! comparison.csv           t, distance, err_m_n.. (compare)
//! comparison_summary.json  max error overall and per order (compare)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evolution::{ClosureSpec, HierarchySystem, IntegratorSpec, Trajectory};
use crate::fock::{coherent_cutoff, hierarchy_from_oracle, FockBasis, FockDensityMatrix, SpectralPropagator};
use crate::hierarchy::{stored_orders, HierarchyState, Snapshot};
use crate::ladder::{compile_hierarchy, ContractionProgram, LadderPolynomial};
use crate::model::{assemble_hamiltonian, ContinuumWeights, ModelSpec};
use crate::observables::{energy_density, momentum_density, number_density, SpatialGrid};

/// Largest Fock-space dimension the oracle will diagonalise.
pub const MAX_ORACLE_DIM: u128 = 6000;

/// Complex numbers are written as `[re, im]`; a bare number is read as real.
mod complex_list {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Value {
        Real(f64),
        Pair([f64; 2]),
    }

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<Value>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|v| match v {
                Value::Real(re) => Complex64::new(re, 0.0),
                Value::Pair([re, im]) => Complex64::new(re, im),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Vacuum,
    Coherent {
        #[serde(with = "complex_list")]
        alpha: Vec<Complex64>,
    },
    Gaussian {
        n: Vec<f64>,
    },
    Fock {
        occupations: Vec<usize>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    #[serde(default = "yes")]
    pub momentum_density: bool,
    #[serde(default = "yes")]
    pub number_density: bool,
    #[serde(default = "yes")]
    pub energy_density: bool,
    /// Defaults to the dual lattice of the momentum grid.
    #[serde(default)]
    pub spatial_grid: Option<SpatialGrid>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            momentum_density: true,
            number_density: true,
            energy_density: true,
            spatial_grid: None,
        }
    }
}

impl ObservablesConfig {
    fn any(&self) -> bool {
        self.momentum_density || self.number_density || self.energy_density
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Per-mode occupation cutoff; defaults depend on the initial state.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub total_cap: Option<usize>,
    /// Orders compared against the oracle, `m + n ≤ order_cap − 1`; defaults to the closure order.
    #[serde(default)]
    pub order_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub initial_state: InitialState,
    pub closure: ClosureSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Parses, validates and resolves every default of a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate_and_resolve()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::config("$", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Configuration with every default filled in, as written next to outputs.
pub fn normalized_config(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("run configuration serialises")
}

impl RunConfig {
    fn validate_and_resolve(&mut self) -> Result<()> {
        self.model.validate()?;
        let modes = self.model.n_modes();
        self.closure
            .validate()
            .map_err(|e| Error::config("closure", strip(&e)))?;
        self.integrator
            .validate()
            .map_err(|e| Error::config("integrator", strip(&e)))?;

        match &self.initial_state {
            InitialState::Vacuum => {}
            InitialState::Coherent { alpha } => {
                if alpha.len() != modes {
                    return Err(Error::config("initial_state.alpha", format!("expected {modes} values, got {}", alpha.len())));
                }
                if alpha.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
                    return Err(Error::config("initial_state.alpha", "values must be finite"));
                }
            }
            InitialState::Gaussian { n } => {
                if n.len() != modes {
                    return Err(Error::config("initial_state.n", format!("expected {modes} values, got {}", n.len())));
                }
                if n.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(Error::config("initial_state.n", "occupations must be finite and ≥ 0"));
                }
            }
            InitialState::Fock { occupations } => {
                if occupations.len() != modes {
                    return Err(Error::config(
                        "initial_state.occupations",
                        format!("expected {modes} values, got {}", occupations.len()),
                    ));
                }
                let (n_max, cap) = fock_basis_shape(occupations);
                if basis_dimension(modes, n_max, Some(cap)) > MAX_ORACLE_DIM {
                    return Err(Error::config("initial_state.occupations", "Fock state is too large to construct"));
                }
            }
        }

        let grid = self
            .observables
            .spatial_grid
            .get_or_insert_with(|| SpatialGrid::dual(&self.model.grid));
        grid.validate()
            .map_err(|e| Error::config("observables.spatial_grid", strip(&e)))?;
        if grid.dims != self.model.grid.dims {
            return Err(Error::config(
                "observables.spatial_grid.dims",
                format!("must equal model.grid.dims = {}", self.model.grid.dims),
            ));
        }
        if self.observables.energy_density && self.model.energies().iter().any(|&e| e <= 0.0) {
            return Err(Error::config(
                "observables.energy_density",
                "energy density needs E_k > 0 on every mode (massless zero mode present)",
            ));
        }

        let oracle = &mut self.oracle;
        if oracle.n_max.is_none() {
            oracle.n_max = Some(default_cutoff(&self.initial_state));
        }
        if oracle.n_max == Some(0) {
            return Err(Error::config("oracle.n_max", "must be ≥ 1"));
        }
        let cap = *oracle.order_cap.get_or_insert(self.closure.order);
        if cap < 1 {
            return Err(Error::config("oracle.order_cap", "must be ≥ 1"));
        }
        if oracle.enabled && basis_dimension(modes, oracle.n_max.unwrap(), oracle.total_cap) > MAX_ORACLE_DIM {
            return Err(Error::config(
                "oracle.n_max",
                format!("Fock space exceeds the oracle limit of {MAX_ORACLE_DIM} states"),
            ));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn spatial_grid(&self) -> SpatialGrid {
        self.observables
            .spatial_grid
            .clone()
            .unwrap_or_else(|| SpatialGrid::dual(&self.model.grid))
    }

    /// Hierarchy initial data at the closure order.
    pub fn initial_hierarchy(&self) -> Result<HierarchyState> {
        let order = self.closure.order;
        match &self.initial_state {
            InitialState::Vacuum => Ok(HierarchyState::vacuum(self.n_modes(), order)),
            InitialState::Coherent { alpha } => HierarchyState::coherent(alpha, order),
            InitialState::Gaussian { n } => HierarchyState::gaussian(n, order),
            InitialState::Fock { occupations } => {
                let (n_max, cap) = fock_basis_shape(occupations);
                let basis = FockBasis::new(self.n_modes(), n_max, Some(cap))?;
                hierarchy_from_oracle(&FockDensityMatrix::fock(basis, occupations)?, order)
            }
        }
    }

    pub fn oracle_basis(&self) -> Result<FockBasis> {
        let n_max = self.oracle.n_max.unwrap_or_else(|| default_cutoff(&self.initial_state));
        FockBasis::new(self.n_modes(), n_max, self.oracle.total_cap)
    }

    /// Oracle initial density matrix on [`Self::oracle_basis`].
    pub fn initial_density(&self) -> Result<FockDensityMatrix> {
        let basis = self.oracle_basis()?;
        match &self.initial_state {
            InitialState::Vacuum => FockDensityMatrix::vacuum(basis),
            InitialState::Coherent { alpha } => FockDensityMatrix::coherent(basis, alpha),
            InitialState::Gaussian { n } => FockDensityMatrix::thermal(basis, n),
            InitialState::Fock { occupations } => FockDensityMatrix::fock(basis, occupations),
        }
    }

    pub fn order_cap(&self) -> usize {
        self.oracle.order_cap.unwrap_or(self.closure.order)
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Configuration(m) | Error::InvalidInput(m) => m.clone(),
        other => other.to_string(),
    }
}

fn fock_basis_shape(occupations: &[usize]) -> (usize, usize) {
    let total: usize = occupations.iter().sum();
    (total.max(1), total.max(1))
}

fn default_cutoff(initial: &InitialState) -> usize {
    match initial {
        InitialState::Vacuum => 1,
        InitialState::Coherent { alpha } => coherent_cutoff(alpha, 1e-12) + 2,
        InitialState::Gaussian { n } => n
            .iter()
            .map(|&nbar| {
                if nbar == 0.0 {
                    1
                } else {
                    // geometric tail (n/(1+n))^(k+1) below 1e-12
                    let q = nbar / (1.0 + nbar);
                    ((1e-12f64).ln() / q.ln()).ceil() as usize
                }
            })
            .max()
            .unwrap_or(1),
        InitialState::Fock { occupations } => fock_basis_shape(occupations).0,
    }
}

/// Number of occupation vectors with every entry ≤ `n_max` and total ≤ `cap`, saturating.
fn basis_dimension(modes: usize, n_max: usize, cap: Option<usize>) -> u128 {
    let Some(cap) = cap else {
        return (n_max as u128 + 1).saturating_pow(modes as u32);
    };
    // ways[s] = vectors over the modes so far with total s
    let mut ways = vec![0u128; cap + 1];
    ways[0] = 1;
    for _ in 0..modes {
        let mut next = vec![0u128; cap + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for k in 0..=n_max.min(cap - s) {
                next[s + k] = next[s + k].saturating_add(w);
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub n_modes: usize,
    pub energies: Vec<f64>,
    pub continuum_weights: ContinuumWeights,
    pub closure: ClosureSpec,
    pub n_steps: usize,
    pub samples_written: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_number_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_energy_drift: Option<f64>,
}

impl RunMetadata {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        RunMetadata {
            command: command.to_string(),
            status: RunStatus::Complete,
            error: None,
            n_modes: cfg.n_modes(),
            energies: cfg.model.energies(),
            continuum_weights: cfg.model.continuum_weights(),
            closure: cfg.closure,
            n_steps: cfg.integrator.n_steps(),
            samples_written: 0,
            max_number_drift: None,
            max_energy_drift: None,
        }
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.normalized.json"), &normalized_config(cfg))
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_snapshots(dir: &Path, states: &[HierarchyState]) -> Result<()> {
    fresh_dir(dir)?;
    for (i, s) in states.iter().enumerate() {
        write_json(&dir.join(format!("sample_{i:06}.json")), &s.to_snapshot())?;
    }
    Ok(())
}

/// Reads `sample_*.json` files of a snapshot directory in sample order.
pub fn read_snapshots(dir: &Path) -> Result<Vec<HierarchyState>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("sample_"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let snap: Snapshot = serde_json::from_str(&fs::read_to_string(p)?)?;
            HierarchyState::from_snapshot(&snap)
        })
        .collect()
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn num(x: f64) -> String {
    format_number(x)
}

/// Writes `momentum_density.csv` and `fields.csv` for each sample.
pub fn write_observables(out: &Path, cfg: &RunConfig, samples: &[HierarchyState]) -> Result<()> {
    let obs = &cfg.observables;
    if !obs.any() {
        return Ok(());
    }
    let grid = &cfg.model.grid;
    let xs = cfg.spatial_grid();
    let mut md = csv::Writer::from_path(out.join("momentum_density.csv"))?;
    let mut header = vec!["t".to_string(), "mode".into(), "species".into()];
    header.extend((0..grid.dims).map(|d| format!("p_{d}")));
    header.push("D".into());
    md.write_record(&header)?;
    let mut fields = csv::Writer::from_path(out.join("fields.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..xs.dims).map(|d| format!("x_{d}")));
    header.extend(["E".into(), "N".into()]);
    fields.write_record(&header)?;

    let points = xs.points();
    for s in samples {
        // observables need Γ^(1,1) and Γ^(2,0)
        let full = if s.order() >= 3 { s.clone() } else { cfg.closure.extend(s, 3)? };
        if obs.momentum_density {
            for (k, d) in momentum_density(&full, grid)?.into_iter().enumerate() {
                let mut row = vec![num(s.time), k.to_string(), grid.species_of(k).to_string()];
                row.extend(grid.momentum(k).into_iter().map(num));
                row.push(num(d));
                md.write_record(&row)?;
            }
        }
        if obs.number_density || obs.energy_density {
            let e = if obs.energy_density { Some(energy_density(&full, &cfg.model, &xs)?) } else { None };
            let n = if obs.number_density { Some(number_density(&full, grid, &xs)?) } else { None };
            for (i, x) in points.iter().enumerate() {
                let mut row = vec![num(s.time)];
                row.extend(x.iter().copied().map(num));
                row.push(e.as_ref().map_or(String::new(), |e| num(e[i])));
                row.push(n.as_ref().map_or(String::new(), |n| num(n[i])));
                fields.write_record(&row)?;
            }
        }
    }
    md.flush()?;
    fields.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveReport {
    pub programs: usize,
    pub terms: usize,
}

/// Human-readable form of one compiled equation.
pub fn describe_program(p: &ContractionProgram) -> String {
    let (m, n) = p.target;
    let mut out = format!("d/dt Γ^({m},{n}) =");
    if p.terms.is_empty() {
        out.push_str(" 0\n");
        return out;
    }
    out.push('\n');
    for t in &p.terms {
        let join = |v: &[crate::ladder::IndexLabel]| v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
        let (sm, _) = t.source;
        let gamma = format!("Γ^({},{})({};{})", t.source.0, t.source.1, join(&t.gamma_slots[..sm]), join(&t.gamma_slots[sm..]));
        out.push_str(&format!(
            "  ({:+} {:+}i) · {}[{}] · {}\n",
            t.weight.re,
            t.weight.im,
            t.kernel,
            join(&t.kernel_axes),
            gamma
        ));
    }
    out
}

/// Compiles the hierarchy equations for the configured model and closure order.
pub fn derive(cfg: &RunConfig, out: &Path) -> Result<DeriveReport> {
    prepare(out, cfg)?;
    let store = cfg.model.coefficient_store()?;
    let programs = compile_hierarchy(&store, cfg.closure.order)?;
    write_json(&out.join("programs.json"), &programs.to_json())?;
    let h: LadderPolynomial = store.to_polynomial();
    let mut text = format!("H = {h}\n\n");
    for p in programs.iter() {
        text.push_str(&describe_program(p));
        text.push('\n');
    }
    fs::write(out.join("equations.txt"), text)?;
    let meta = RunMetadata::new("derive", cfg);
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(DeriveReport {
        programs: programs.len(),
        terms: programs.iter().map(|p| p.terms.len()).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub samples: usize,
    pub final_time: f64,
    pub max_number_drift: f64,
    pub max_energy_drift: f64,
}

/// Integrates the hierarchy and returns the trajectory together with the error that
/// stopped it early, if any.
pub fn integrate_config(cfg: &RunConfig) -> Result<(Trajectory, Option<Error>)> {
    let system = HierarchySystem::from_model(&cfg.model, cfg.closure)?;
    let initial = cfg.initial_hierarchy()?;
    Ok(match system.integrate(&initial, &cfg.integrator) {
        Ok(t) => (t, None),
        Err(e) => (e.partial, Some(e.error)),
    })
}

/// Full hierarchy pipeline: integrate, then write snapshots, conservation and observables.
/// On divergence the partial outputs are written, flagged in `metadata.json`, and the error returned.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    prepare(out, cfg)?;
    let (traj, failure) = integrate_config(cfg)?;
    write_snapshots(&out.join("snapshots"), &traj.samples)?;
    traj.report
        .write_csv(fs::File::create(out.join("conservation.csv"))?)?;
    let mut meta = RunMetadata::new("run", cfg);
    meta.samples_written = traj.samples.len();
    meta.max_number_drift = Some(traj.report.max_number_drift());
    meta.max_energy_drift = Some(traj.report.max_energy_drift());
    let obs = write_observables(out, cfg, &traj.samples);
    let failure = failure.or(obs.err());
    if let Some(e) = &failure {
        meta.status = RunStatus::Partial;
        meta.error = Some(e.to_string());
    }
    write_json(&out.join("metadata.json"), &meta)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunReport {
        samples: traj.samples.len(),
        final_time: traj.samples.last().map_or(0.0, |s| s.time),
        max_number_drift: traj.report.max_number_drift(),
        max_energy_drift: traj.report.max_energy_drift(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub states: Vec<HierarchyState>,
    pub rows: Vec<OracleRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleRow {
    pub t: f64,
    pub trace: f64,
    pub purity: f64,
    pub number: f64,
    pub energy: f64,
    pub boundary_weight: f64,
}

/// Exact evolution on the configured Fock space, reduced to hierarchy states of order `order`.
/// A cutoff failure returns the samples computed so far alongside the error.
pub fn oracle_trajectory(cfg: &RunConfig, order: usize) -> Result<(OracleRun, Option<Error>)> {
    let rho0 = cfg.initial_density()?;
    let h = assemble_hamiltonian(&cfg.model)?.total();
    let number = LadderPolynomial::number_operator(cfg.n_modes());
    let prop = SpectralPropagator::new(&h, rho0.basis())?;
    let mut run = OracleRun {
        times: Vec::new(),
        states: Vec::new(),
        rows: Vec::new(),
    };
    for t in cfg.integrator.sample_times() {
        let rho = prop.evolve(&rho0, t);
        let weight = match prop.check_cutoff(&rho, t) {
            Ok(w) => w,
            Err(e) => return Ok((run, Some(e))),
        };
        let mut state = hierarchy_from_oracle(&rho, order)?;
        state.time = t;
        run.rows.push(OracleRow {
            t,
            trace: rho.trace().re,
            purity: rho.purity(),
            number: rho.expectation(&number).re,
            energy: rho.expectation(&h).re,
            boundary_weight: weight,
        });
        run.times.push(t);
        run.states.push(state);
    }
    Ok((run, None))
}

fn require_oracle(cfg: &RunConfig) -> Result<()> {
    if !cfg.oracle.enabled {
        return Err(Error::config("oracle.enabled", "the oracle section must be enabled"));
    }
    Ok(())
}

/// Exact truncated-Fock-space reference pipeline.
pub fn oracle(cfg: &RunConfig, out: &Path) -> Result<OracleRun> {
    require_oracle(cfg)?;
    prepare(out, cfg)?;
    let (run, failure) = oracle_trajectory(cfg, cfg.closure.order)?;
    write_snapshots(&out.join("oracle_snapshots"), &run.states)?;
    let mut w = csv::Writer::from_path(out.join("oracle.csv"))?;
    w.write_record(["t", "trace", "purity", "number", "energy", "boundary_weight"])?;
    for r in &run.rows {
        w.write_record([r.t, r.trace, r.purity, r.number, r.energy, r.boundary_weight].map(num))?;
    }
    w.flush()?;
    let mut meta = RunMetadata::new("oracle", cfg);
    meta.samples_written = run.states.len();
    if let Some(e) = &failure {
        meta.status = RunStatus::Partial;
        meta.error = Some(e.to_string());
    }
    write_json(&out.join("metadata.json"), &meta)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    pub distance: f64,
    pub by_order: BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub order_cap: usize,
    pub max_error: f64,
    pub final_error: f64,
    pub max_error_by_order: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

/// Distances between a hierarchy trajectory and oracle states sampled at the same times.
pub fn compare_trajectories(
    closure: &ClosureSpec,
    hierarchy: &[HierarchyState],
    oracle: &[HierarchyState],
    order_cap: usize,
) -> Result<ComparisonReport> {
    let mut rows = Vec::new();
    for (h, o) in hierarchy.iter().zip(oracle) {
        let h = if h.order() >= order_cap { h.clone() } else { closure.extend(h, order_cap)? };
        let by_order = h.distance_by_order(o, order_cap)?;
        let distance = by_order.values().copied().fold(0.0, f64::max);
        rows.push(ComparisonRow { t: h.time, distance, by_order });
    }
    let mut max_by: BTreeMap<String, f64> = BTreeMap::new();
    for r in &rows {
        for (&(m, n), &v) in &r.by_order {
            let e = max_by.entry(format!("{m},{n}")).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let summary = ComparisonSummary {
        order_cap,
        max_error: rows.iter().map(|r| r.distance).fold(0.0, f64::max),
        final_error: rows.last().map_or(0.0, |r| r.distance),
        max_error_by_order: max_by,
    };
    Ok(ComparisonReport { rows, summary })
}

/// Runs the hierarchy and the oracle on a shared time grid and reports their distance.
pub fn compare(cfg: &RunConfig, out: &Path) -> Result<ComparisonReport> {
    require_oracle(cfg)?;
    prepare(out, cfg)?;
    let cap = cfg.order_cap();
    let (traj, failure) = integrate_config(cfg)?;
    let (orc, oracle_failure) = oracle_trajectory(cfg, cap.max(1))?;
    let n = traj.samples.len().min(orc.states.len());
    let report = compare_trajectories(&cfg.closure, &traj.samples[..n], &orc.states[..n], cap)?;

    let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
    let orders: Vec<(usize, usize)> = stored_orders(cap);
    let mut header = vec!["t".to_string(), "distance".into()];
    header.extend(orders.iter().map(|(m, n)| format!("err_{m}_{n}")));
    w.write_record(&header)?;
    for r in &report.rows {
        let mut row = vec![num(r.t), num(r.distance)];
        row.extend(orders.iter().map(|o| num(r.by_order.get(o).copied().unwrap_or(0.0))));
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(&out.join("comparison_summary.json"), &report.summary)?;

    let failure = oracle_failure.or(failure);
    let mut meta = RunMetadata::new("compare", cfg);
    meta.samples_written = report.rows.len();
    if let Some(e) = &failure {
        meta.status = RunStatus::Partial;
        meta.error = Some(e.to_string());
    }
    write_json(&out.join("metadata.json"), &meta)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Observable tables from the snapshots in `out/snapshots`, integrating first when none exist.
pub fn observe(cfg: &RunConfig, out: &Path) -> Result<usize> {
    prepare(out, cfg)?;
    let dir = out.join("snapshots");
    let samples = match read_snapshots(&dir) {
        Ok(s) if !s.is_empty() => s,
        _ => {
            let (traj, failure) = integrate_config(cfg)?;
            if let Some(e) = failure {
                return Err(e);
            }
            traj.samples
        }
    };
    if let Some(s) = samples.iter().find(|s| s.modes() != cfg.n_modes()) {
        return Err(Error::IncompatibleStates(format!(
            "snapshot at t = {} has {} modes, config {}",
            s.time,
            s.modes(),
            cfg.n_modes()
        )));
    }
    write_observables(out, cfg, &samples)?;
    Ok(samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"grid": {"dims": 1, "points_per_dim": 4, "p_max": 2.0}, "mass": 1.0},
        "initial_state": {"type": "vacuum"},
        "closure": {"type": "truncate", "order": 3}
    }"#;

    fn with(patch: &str) -> String {
        let mut base: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let patch: serde_json::Value = serde_json::from_str(patch).unwrap();
        merge(&mut base, patch);
        base.to_string()
    }

    fn merge(a: &mut serde_json::Value, b: serde_json::Value) {
        match (a, b) {
            (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                for (k, v) in b {
                    merge(a.entry(k).or_insert(serde_json::Value::Null), v);
                }
            }
            (a, b) => *a = b,
        }
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.integrator.dt, 1e-3);
        assert_eq!(cfg.integrator.t_final, 1.0);
        assert_eq!(cfg.observables.spatial_grid, Some(SpatialGrid::dual(&cfg.model.grid)));
        assert_eq!(cfg.oracle.order_cap, Some(3));
        assert_eq!(cfg.n_modes(), 4);
    }

    #[test]
    fn wrong_alpha_length_names_the_path() {
        let text = with(r#"{"initial_state": {"type": "coherent", "alpha": [[0.1, 0.0], 0.2]}}"#);
        match parse_config(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "initial_state.alpha"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_path() {
        let text = with(r#"{"integrator": {"dt": "fast"}}"#);
        match parse_config(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "integrator.dt"),
            other => panic!("{other:?}"),
        }
        let text = with(r#"{"closure": {"type": "truncate", "order": 3, "extra": 1}}"#);
        assert!(matches!(parse_config(&text), Err(Error::Config { .. })));
        assert!(matches!(parse_config("{"), Err(Error::Config { .. })));
    }

    #[test]
    fn physics_violations_are_model_errors() {
        let text = with(
            r#"{"model": {"grid": {"points_per_dim": 2}, "coupling": 0.1,
                "kernel": {"type": "tabulated", "table": [[1.0, 0.5], [0.4, 1.0]]}}}"#,
        );
        assert!(matches!(parse_config(&text), Err(Error::InvalidModel(_))));
        let text = with(r#"{"model": {"mass": -1.0}}"#);
        assert!(matches!(parse_config(&text), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn closure_and_integrator_checks() {
        assert!(matches!(parse_config(&with(r#"{"closure": {"type": "cluster", "order": 5}}"#)), Err(Error::Config { .. })));
        assert!(matches!(parse_config(&with(r#"{"integrator": {"dt": 0.0}}"#)), Err(Error::Config { .. })));
        assert!(matches!(
            parse_config(&with(r#"{"oracle": {"enabled": true, "n_max": 40}}"#)),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn echo_round_trips() {
        let text = with(r#"{"initial_state": {"type": "coherent", "alpha": [0.1, [0.0, 0.2], 0.3, -0.1]}}"#);
        let cfg = parse_config(&text).unwrap();
        let echo = normalized_config(&cfg).to_string();
        assert_eq!(parse_config(&echo).unwrap(), cfg);
    }

    #[test]
    fn basis_dimension_counts() {
        assert_eq!(basis_dimension(2, 3, None), 16);
        assert_eq!(basis_dimension(3, 2, Some(2)), 10);
        assert_eq!(basis_dimension(2, 2, Some(2)), FockBasis::new(2, 2, Some(2)).unwrap().dim() as u128);
    }

    #[test]
    fn fock_initial_state() {
        let text = with(r#"{"model": {"grid": {"points_per_dim": 2}}, "initial_state": {"type": "fock", "occupations": [1, 1]}}"#);
        let cfg = parse_config(&text).unwrap();
        let s = cfg.initial_hierarchy().unwrap();
        assert!((s.entry(1, 1, &[0, 0]).unwrap().re - 1.0).abs() < 1e-15);
        assert_eq!(s.entry(2, 0, &[0, 1]).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(cfg.oracle.n_max, Some(2));
    }

    #[test]
    fn describe_lists_terms() {
        let cfg = parse_config(MINIMAL).unwrap();
        let store = cfg.model.coefficient_store().unwrap();
        let p = crate::ladder::compile_rhs(&store, 1, 0).unwrap();
        let text = describe_program(&p);
        assert!(text.starts_with("d/dt Γ^(1,0) ="));
        assert!(text.contains("dispersion"));
    }
}
