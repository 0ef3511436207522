//! Anytime ellipsoidal over-approximation of forward reach sets for
//! uncertain linear time-varying systems.
//!
//! The pipeline propagates a family of direction-parameterized outer
//! ellipsoids for the reach set of `ẋ = A(t)x + B(t)u + G(t)w` under
//! ellipsoidal uncertainty in the initial state, control, and disturbance,
//! fuses the family into a single minimum-volume-style outer ellipsoid via a
//! max-det S-procedure relaxation, and adapts the family size to the
//! processor time available at each prediction step.
//!
//! Modules follow the pipeline order:
//!
//! * [`linalg`] — dense symmetric kernels (Jacobi eigensolver, PSD square
//!   root, Cholesky, polynomial least squares).
//! * [`ellipsoid`] — ellipsoid representations, conversions, geometry
//!   queries, projection, and sampling.
//! * [`model`] — LTV system and ellipsoidal uncertainty descriptions plus a
//!   trajectory-sampling oracle.
//! * [`propagation`] — the center IVP and the direction-parameterized
//!   shape-matrix IVPs.
//! * [`fusion`] — max-det fusion of a common-center family and LMI
//!   certificate checking.
//! * [`anytime`] — timing measurement, quartic regression, deadline-driven
//!   family-size selection, and the per-horizon supervisory loop.
//! * [`quadrotor`] — a 12-state closed-loop LQ tracking case study.
//! * [`cli`] — configuration ingestion and the `reachset` subcommands.

pub mod anytime;
pub mod cli;
pub mod ellipsoid;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod model;
pub mod propagation;
pub mod quadrotor;

pub use error::{Error, Result};
pub use linalg::{EigDecomposition, SymMatrix};

pub use ellipsoid::{Ellipsoid, QuadraticForm};
pub use model::{LtvSystem, TimeGrid, UncertainSet, UncertaintySpec};
