//! Propagation of the reach-set over-approximation family: the center IVP
//! `ẋ_c = A x_c + B u_c + G w_c` and, per unit direction ℓ_i0, the coupled
//! adjoint/shape IVPs
//!
//! ```text
//! ℓ̇_i = -A(t)ᵀ ℓ_i
//! Ẋ_i = A X_i + X_i Aᵀ + π_i X_i + (1/π_i) B U Bᵀ
//!       - X_i^{1/2} S_i G W Gᵀ - G W Gᵀ S_iᵀ X_i^{1/2}
//! ```
//!
//! with `π_i = sqrt(ℓᵀBUBᵀℓ / ℓᵀX_iℓ)` and `S_i` the orthogonal matrix
//! aligning the unit vectors `v̂_2i = GWGᵀℓ/‖·‖` to `v̂_1i = X^{1/2}ℓ/‖·‖`.
//! Every `E(x_c(t), X_i(t))` contains the reach set and is tight along
//! ℓ_i(t); intersecting more of them tightens the approximation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{rk4_step, LtvSystem, TimeGrid, UncertaintySpec};

/// Relative threshold under which the control contribution ℓᵀBUBᵀℓ counts
/// as degenerate and the π terms are dropped (the U → 0 limit).
const CONTROL_DEGENERACY_REL: f64 = 1e-14;
/// Absolute norm threshold under which GWGᵀℓ counts as degenerate and the
/// disturbance terms are dropped.
const DISTURBANCE_DEGENERACY_ABS: f64 = 1e-14;
/// Eigenvalues below this fraction of the trace are lifted to the floor
/// after every integration step.
const CLAMP_FLOOR_REL: f64 = 1e-12;
/// Lifting an eigenvalue by more than this fraction of the trace aborts
/// (the step size is too large to keep the shape matrices PD).
const CLAMP_ABORT_REL: f64 = 1e-6;

/// A propagated direction: the initial unit vector and its adjoint value.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionState {
    pub initial: DVector<f64>,
    pub current: DVector<f64>,
}

impl DirectionState {
    pub fn new(initial: DVector<f64>) -> Result<Self> {
        validate_unit(&initial, 1e-12)?;
        Ok(Self {
            current: initial.clone(),
            initial,
        })
    }
}

fn validate_unit(v: &DVector<f64>, tol: f64) -> Result<()> {
    if (v.norm() - 1.0).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "expected a unit vector, got norm {}",
            v.norm()
        )));
    }
    Ok(())
}

/// The per-evaluation ingredients of the shape-matrix ODE right-hand side.
#[derive(Debug, Clone)]
pub struct ShapeOdeTerms {
    pub pi: f64,
    pub control_degenerate: bool,
    pub disturbance_degenerate: bool,
    /// X^{1/2}ℓ normalized; present only when the disturbance is active.
    pub v1: Option<DVector<f64>>,
    /// GWGᵀℓ normalized; present only when the disturbance is active.
    pub v2: Option<DVector<f64>>,
    /// Orthogonal matrix with S·v̂2 = v̂1; identity when the disturbance is
    /// degenerate.
    pub aligner: DMatrix<f64>,
}

/// One time-snapshot of the propagated family.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSnapshot {
    pub t: f64,
    pub center: DVector<f64>,
    pub shapes: Vec<SymMatrix>,
    pub directions: Vec<DVector<f64>>,
}

impl ReachSnapshot {
    pub fn family_size(&self) -> usize {
        self.shapes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.center.len()
    }
}

impl Serialize for ReachSnapshot {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("ReachSnapshot", 4)?;
        s.serialize_field("t", &self.t)?;
        s.serialize_field("center", &self.center.as_slice())?;
        s.serialize_field("shapes", &self.shapes)?;
        let dirs: Vec<&[f64]> = self.directions.iter().map(|d| d.as_slice()).collect();
        s.serialize_field("directions", &dirs)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for ReachSnapshot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            t: f64,
            center: Vec<f64>,
            shapes: Vec<SymMatrix>,
            #[serde(default)]
            directions: Vec<Vec<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let n = raw.center.len();
        if raw.shapes.is_empty() {
            return Err(D::Error::custom("snapshot must carry at least one shape"));
        }
        if raw.shapes.iter().any(|s| s.order() != n)
            || raw.directions.iter().any(|d| d.len() != n)
        {
            return Err(D::Error::custom(
                "snapshot shapes/directions must match the center dimension",
            ));
        }
        Ok(ReachSnapshot {
            t: raw.t,
            center: DVector::from_row_slice(&raw.center),
            shapes: raw.shapes,
            directions: raw
                .directions
                .into_iter()
                .map(|d| DVector::from_row_slice(&d))
                .collect(),
        })
    }
}

/// Integrate the center IVP, returning x_c at the grid's snapshot times.
pub fn propagate_center(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    unc.validate_dims(sys)?;
    let mut x = unc.initial.center().clone();
    let mut out = Vec::with_capacity(grid.snapshot_steps().len());
    if grid.snapshot_steps().contains(&0) {
        out.push(x.clone());
    }
    for k in 0..grid.num_steps() {
        let t = grid.node(k);
        x = center_step(sys, unc, t, &x, grid.step())?;
        if grid.snapshot_steps().contains(&(k + 1)) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

fn center_step(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    t: f64,
    x: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let mut err = None;
    let mut f = |tau: f64, y: &DVector<f64>| -> DVector<f64> {
        match center_rhs(sys, unc, tau, y) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                DVector::zeros(y.len())
            }
        }
    };
    let next = rk4_step(&mut f, t, x, h);
    match err {
        Some(e) => Err(e),
        None => Ok(next),
    }
}

fn center_rhs(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let a = sys.a_at(t)?;
    let b = sys.b_at(t)?;
    let g = sys.g_at(t)?;
    let uc = unc.control.center_at(t)?;
    let wc = unc.disturbance.center_at(t)?;
    Ok(a * x + b * uc + g * wc)
}

/// Integrate the adjoint direction ODE ℓ̇ = -A(t)ᵀℓ from a unit ℓ0,
/// returning ℓ at every grid node. For constant A this equals exp(-Aᵀt)ℓ0.
pub fn adjoint_direction(
    sys: &LtvSystem,
    ell0: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    validate_unit(ell0, 1e-12)?;
    if ell0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "direction length {} vs state dim {}",
            ell0.len(),
            sys.state_dim()
        )));
    }
    let mut ell = ell0.clone();
    let mut out = Vec::with_capacity(grid.num_steps() + 1);
    out.push(ell.clone());
    for k in 0..grid.num_steps() {
        let t = grid.node(k);
        let mut err = None;
        let mut f = |tau: f64, y: &DVector<f64>| -> DVector<f64> {
            match sys.a_at(tau) {
                Ok(a) => -(a.transpose() * y),
                Err(e) => {
                    err = Some(e);
                    DVector::zeros(y.len())
                }
            }
        };
        ell = rk4_step(&mut f, t, &ell, grid.step());
        if let Some(e) = err {
            return Err(e);
        }
        out.push(ell.clone());
    }
    Ok(out)
}

/// The coefficient π_i = sqrt(ℓᵀ B U Bᵀ ℓ / ℓᵀ X ℓ) of the shape ODE, with
/// a degeneracy flag raised when the numerator vanishes relative to its
/// scale (π is then reported as 0 and the control terms are dropped).
pub fn pi_coefficient(
    ell: &DVector<f64>,
    b: &DMatrix<f64>,
    u_shape: &SymMatrix,
    x: &SymMatrix,
) -> Result<(f64, bool)> {
    let bt_ell = b.transpose() * ell;
    let numerator = u_shape.quadratic_form(&bt_ell).max(0.0);
    let denominator = x.quadratic_form(ell);
    if denominator <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "shape quadratic form ℓᵀXℓ = {denominator:e}"
        )));
    }
    let scale = u_shape.frobenius_norm() * bt_ell.norm_squared();
    if numerator <= CONTROL_DEGENERACY_REL * scale {
        return Ok((0.0, true));
    }
    Ok(((numerator / denominator).sqrt(), false))
}

/// An orthogonal matrix S with S·v̂2 = v̂1, built as the Householder
/// reflection across the hyperplane normal to w = v̂2 - v̂1 (identity when
/// the vectors already coincide). O(n²) work.
pub fn orthogonal_aligner(v2: &DVector<f64>, v1: &DVector<f64>) -> Result<DMatrix<f64>> {
    if v1.len() != v2.len() {
        return Err(Error::DimensionMismatch(format!(
            "aligner vectors of lengths {} and {}",
            v2.len(),
            v1.len()
        )));
    }
    validate_unit(v1, 1e-8)?;
    validate_unit(v2, 1e-8)?;
    let n = v1.len();
    let w = v2 - v1;
    let ww = w.norm_squared();
    if ww <= 1e-24 {
        return Ok(DMatrix::identity(n, n));
    }
    let mut s = DMatrix::identity(n, n);
    // S = I - 2 w wᵀ / ‖w‖².
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] -= 2.0 * w[i] * w[j] / ww;
        }
    }
    Ok(s)
}

/// Assemble the π, v̂, and aligner ingredients of the shape ODE at (t, X, ℓ).
pub fn shape_ode_terms(
    t: f64,
    x: &SymMatrix,
    ell: &DVector<f64>,
    sys: &LtvSystem,
    unc: &UncertaintySpec,
) -> Result<ShapeOdeTerms> {
    let b = sys.b_at(t)?;
    let u_shape = unc.control.shape_at(t)?;
    let (pi, control_degenerate) = pi_coefficient(ell, &b, &u_shape, x)?;

    let g = sys.g_at(t)?;
    let w_shape = unc.disturbance.shape_at(t)?;
    let gwg = &g * w_shape.as_matrix() * g.transpose();
    let gwg_ell = &gwg * ell;
    let disturbance_degenerate = gwg_ell.norm() < DISTURBANCE_DEGENERACY_ABS;
    let n = sys.state_dim();
    if disturbance_degenerate {
        return Ok(ShapeOdeTerms {
            pi,
            control_degenerate,
            disturbance_degenerate,
            v1: None,
            v2: None,
            aligner: DMatrix::identity(n, n),
        });
    }
    let sqrt_x = linalg::sqrt_psd(x)?;
    let x_ell = sqrt_x.mul_vec(ell);
    let v1 = &x_ell / x_ell.norm();
    let v2 = &gwg_ell / gwg_ell.norm();
    let aligner = orthogonal_aligner(&v2, &v1)?;
    Ok(ShapeOdeTerms {
        pi,
        control_degenerate,
        disturbance_degenerate,
        v1: Some(v1),
        v2: Some(v2),
        aligner,
    })
}

/// The shape-matrix ODE right-hand side at (t, X, ℓ).
pub fn shape_rhs(
    t: f64,
    x: &SymMatrix,
    ell: &DVector<f64>,
    sys: &LtvSystem,
    unc: &UncertaintySpec,
) -> Result<SymMatrix> {
    let a = sys.a_at(t)?;
    let terms = shape_ode_terms(t, x, ell, sys, unc)?;

    let ax = &a * x.as_matrix();
    let mut rhs = &ax + ax.transpose();

    if !terms.control_degenerate {
        let b = sys.b_at(t)?;
        let u_shape = unc.control.shape_at(t)?;
        let bub = &b * u_shape.as_matrix() * b.transpose();
        rhs += x.as_matrix() * terms.pi;
        rhs += bub / terms.pi;
    }

    if !terms.disturbance_degenerate {
        let g = sys.g_at(t)?;
        let w_shape = unc.disturbance.shape_at(t)?;
        let gwg = &g * w_shape.as_matrix() * g.transpose();
        let sqrt_x = linalg::sqrt_psd(x)?;
        let m = sqrt_x.as_matrix() * &terms.aligner * gwg;
        rhs -= &m + m.transpose();
    }

    SymMatrix::from_matrix(&rhs)
}

/// Symmetrize and clamp a post-step shape matrix: eigenvalues below
/// 1e-12·trace are lifted to that floor; lifting by more than 1e-6·trace
/// aborts with a diagnostic (the step size cannot maintain PD).
fn clamp_pd(x: SymMatrix, t: f64) -> Result<SymMatrix> {
    let tr = x.trace();
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::PositivityLoss {
            t,
            detail: format!("trace {tr:e}"),
        });
    }
    let floor = CLAMP_FLOOR_REL * tr;
    // Fast path: X - floor·I positive definite means nothing to clamp.
    let mut shifted = x.as_matrix().clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= floor;
    }
    if linalg::cholesky(&SymMatrix::from_matrix(&shifted)?).is_ok() {
        return Ok(x);
    }
    let eig = linalg::sym_eig(&x)?;
    let min = eig.min_eigenvalue();
    if floor - min > CLAMP_ABORT_REL * tr {
        return Err(Error::PositivityLoss {
            t,
            detail: format!(
                "min eigenvalue {min:e} below the clamp floor {floor:e} by more than {CLAMP_ABORT_REL:e} of the trace; reduce the integration step"
            ),
        });
    }
    let clamped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    let lam = DMatrix::from_diagonal(&DVector::from_row_slice(&clamped));
    let rebuilt = &eig.eigenvectors * lam * eig.eigenvectors.transpose();
    SymMatrix::from_matrix(&rebuilt)
}

/// Integrate the coupled (ℓ, X) pair for one direction, recording values at
/// the snapshot steps.
fn propagate_one_direction(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    grid: &TimeGrid,
    x0: &SymMatrix,
    ell0: &DVector<f64>,
) -> Result<Vec<(SymMatrix, DVector<f64>)>> {
    let h = grid.step();
    let mut x = x0.clone();
    let mut ell = ell0.clone();
    let mut out = Vec::with_capacity(grid.snapshot_steps().len());
    if grid.snapshot_steps().contains(&0) {
        out.push((x.clone(), ell.clone()));
    }
    for k in 0..grid.num_steps() {
        let t = grid.node(k);

        let stage = |tau: f64,
                     xs: &SymMatrix,
                     ls: &DVector<f64>|
         -> Result<(SymMatrix, DVector<f64>)> {
            let a = sys.a_at(tau)?;
            let dl = -(a.transpose() * ls);
            let dx = shape_rhs(tau, xs, ls, sys, unc)?;
            Ok((dx, dl))
        };

        let (k1x, k1l) = stage(t, &x, &ell)?;
        let x1 = &x + &k1x.scaled(0.5 * h);
        let l1 = &ell + &k1l * (0.5 * h);
        let (k2x, k2l) = stage(t + 0.5 * h, &x1, &l1)?;
        let x2 = &x + &k2x.scaled(0.5 * h);
        let l2 = &ell + &k2l * (0.5 * h);
        let (k3x, k3l) = stage(t + 0.5 * h, &x2, &l2)?;
        let x3 = &x + &k3x.scaled(h);
        let l3 = &ell + &k3l * h;
        let (k4x, k4l) = stage(t + h, &x3, &l3)?;

        let dx = &(&k1x + &k4x) + &(&k2x + &k3x).scaled(2.0);
        x = clamp_pd(&x + &dx.scaled(h / 6.0), t + h)?;
        ell += (k1l + k4l + (k2l + k3l) * 2.0) * (h / 6.0);

        if grid.snapshot_steps().contains(&(k + 1)) {
            out.push((x.clone(), ell.clone()));
        }
    }
    Ok(out)
}

/// Propagate the center and the N direction-parameterized shape IVPs,
/// producing one [`ReachSnapshot`] per snapshot time.
///
/// The N shape IVPs are independent; with `workers > 1` they run on a
/// dedicated thread pool (the center as one more task). Results are
/// gathered by direction index, so the output is identical for any worker
/// count.
pub fn propagate_family(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    directions: &[DVector<f64>],
    grid: &TimeGrid,
    workers: usize,
) -> Result<Vec<ReachSnapshot>> {
    unc.validate_dims(sys)?;
    if directions.is_empty() {
        return Err(Error::InvalidInput("need at least one direction".into()));
    }
    for (i, d) in directions.iter().enumerate() {
        if d.len() != sys.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "direction {i} has length {}, state dim is {}",
                d.len(),
                sys.state_dim()
            )));
        }
        validate_unit(d, 1e-12)?;
        for other in &directions[..i] {
            if (d - other).norm() <= 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "directions must be pairwise distinct (index {i})"
                )));
            }
        }
    }
    // The family needs a nondegenerate initial shape.
    let x0 = unc
        .initial
        .to_ellipsoid()
        .map_err(|_| Error::InvalidInput("initial set must be a nondegenerate ellipsoid".into()))?
        .shape()
        .clone();

    let (centers, families) = if workers <= 1 {
        let centers = propagate_center(sys, unc, grid)?;
        let mut families = Vec::with_capacity(directions.len());
        for d in directions {
            families.push(propagate_one_direction(sys, unc, grid, &x0, d)?);
        }
        (centers, families)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
        let (centers, families) = pool.install(|| {
            rayon::join(
                || propagate_center(sys, unc, grid),
                || {
                    directions
                        .par_iter()
                        .map(|d| propagate_one_direction(sys, unc, grid, &x0, d))
                        .collect::<Result<Vec<_>>>()
                },
            )
        });
        (centers?, families?)
    };

    let times = grid.snapshot_times();
    let mut snapshots = Vec::with_capacity(times.len());
    for (s, &t) in times.iter().enumerate() {
        snapshots.push(ReachSnapshot {
            t,
            center: centers[s].clone(),
            shapes: families.iter().map(|f| f[s].0.clone()).collect(),
            directions: families.iter().map(|f| f[s].1.clone()).collect(),
        });
    }
    Ok(snapshots)
}

/// Integrate a single direction's shape IVP (used by the timing benchmark).
pub fn propagate_single_shape(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    direction: &DVector<f64>,
    grid: &TimeGrid,
) -> Result<Vec<(SymMatrix, DVector<f64>)>> {
    unc.validate_dims(sys)?;
    validate_unit(direction, 1e-12)?;
    let x0 = unc
        .initial
        .to_ellipsoid()
        .map_err(|_| Error::InvalidInput("initial set must be a nondegenerate ellipsoid".into()))?
        .shape()
        .clone();
    propagate_one_direction(sys, unc, grid, &x0, direction)
}

/// Deterministic direction family: the first min(count, n) coordinate axes,
/// then normalized pseudorandom vectors rejected while nearly parallel
/// (|cos| ≥ 0.999) to any earlier member.
pub fn default_directions(n: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidInput(
            "need a positive dimension and direction count".into(),
        ));
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(count);
    for i in 0..count.min(n) {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        out.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0usize;
    while out.len() < count {
        let mut v: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let norm = v.norm();
        if norm < 1e-9 {
            continue;
        }
        v /= norm;
        let nearly_parallel = out.iter().any(|u| u.dot(&v).abs() >= 0.999);
        // In very low dimensions bounded pairwise angles are impossible;
        // after enough rejections accept anything still distinct.
        if nearly_parallel && rejections < 200 {
            rejections += 1;
            continue;
        }
        if out.iter().all(|u| (u - &v).norm() > 1e-9) {
            out.push(v);
            rejections = 0;
        } else if rejections > 10_000 {
            return Err(Error::InvalidInput(format!(
                "cannot generate {count} distinct directions in dimension {n}"
            )));
        } else {
            rejections += 1;
        }
    }
    Ok(out)
}
