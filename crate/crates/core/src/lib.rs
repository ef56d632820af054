//! Correlation-function hierarchy for bosonic fields on a momentum grid.
//!
//! Operators are discrete unit-normalised modes with `[b_j, b†_k] = δ_jk`.
//! A state is the tower of normal-ordered moments
//! `Γ^(m,n)(p1..pm; p'1..p'n) = ⟨b†_{p'1}…b†_{p'n} b_{p1}…b_{pm}⟩`,
//! truncated at `m + n < K` and closed either by truncation or by the
//! cluster expansion. A truncated Fock space provides the reference dynamics.

pub mod cli_io;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod hierarchy;
pub mod ladder;
pub mod model;
pub mod observables;

pub use error::{Error, Result};
pub use evolution::{ClosureKind, ClosureSpec, ConservationReport, ConservationRow, HierarchySystem, IntegratorSpec, Trajectory};
pub use fock::{FockBasis, FockDensityMatrix, SpectralPropagator};
pub use hierarchy::{GammaTensor, HierarchyState};
pub use ladder::{commutator, compile_rhs, normal_order, CoefficientStore, ContractionProgram, LadderOp, LadderPolynomial, ProgramSet};
pub use model::{InteractionKernel, ModeGrid, ModelSpec};
pub use observables::SpatialGrid;

pub use num_complex::Complex64;
