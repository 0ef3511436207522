//! Linear time-varying system and ellipsoidal uncertainty descriptions,
//! plus a trajectory-sampling oracle realizing the reach-set definition
//! (admissible initial state, control, and disturbance draws integrated by
//! fixed-step RK4).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};

/// Tolerance for points to count as lying on a degenerate set's affine hull.
const NULL_DIRECTION_TOL: f64 = 1e-9;

fn interp_weight(times: &[f64], t: f64) -> Result<(usize, usize, f64)> {
    let (start, end) = (times[0], times[times.len() - 1]);
    let span = (end - start).abs().max(1.0);
    if t < start - 1e-9 * span || t > end + 1e-9 * span {
        return Err(Error::OutOfRange { t, start, end });
    }
    if t <= start {
        return Ok((0, 0, 0.0));
    }
    if t >= end {
        let k = times.len() - 1;
        return Ok((k, k, 0.0));
    }
    // partition_point returns the first index with times[i] > t.
    let hi = times.partition_point(|&x| x <= t).min(times.len() - 1);
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    Ok((lo, hi, w))
}

fn validate_grid_times(times: &[f64], count: usize) -> Result<()> {
    if times.len() < 2 || times.len() != count {
        return Err(Error::InvalidInput(format!(
            "time grid needs at least 2 nodes and matching values ({} times, {count} values)",
            times.len()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "interpolation grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// A matrix-valued function of time: a constant, a dense grid with linear
/// interpolation, or a closed-form closure.
#[derive(Clone)]
pub enum TimeMatrix {
    Constant(DMatrix<f64>),
    Grid {
        times: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
    Closure {
        f: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
        rows: usize,
        cols: usize,
    },
}

impl TimeMatrix {
    pub fn grid(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        validate_grid_times(&times, values.len())?;
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::DimensionMismatch(
                "grid matrix values must share one shape".into(),
            ));
        }
        Ok(TimeMatrix::Grid { times, values })
    }

    pub fn closure(
        rows: usize,
        cols: usize,
        f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        TimeMatrix::Closure {
            f: Arc::new(f),
            rows,
            cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TimeMatrix::Constant(m) => m.shape(),
            TimeMatrix::Grid { values, .. } => values[0].shape(),
            TimeMatrix::Closure { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        match self {
            TimeMatrix::Constant(m) => Ok(m.clone()),
            TimeMatrix::Grid { times, values } => {
                let (lo, hi, w) = interp_weight(times, t)?;
                Ok(if lo == hi {
                    values[lo].clone()
                } else {
                    &values[lo] * (1.0 - w) + &values[hi] * w
                })
            }
            TimeMatrix::Closure { f, rows, cols } => {
                let m = f(t);
                if m.shape() != (*rows, *cols) {
                    return Err(Error::DimensionMismatch(format!(
                        "closure returned {:?}, declared ({rows}, {cols})",
                        m.shape()
                    )));
                }
                Ok(m)
            }
        }
    }
}

impl fmt::Debug for TimeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeMatrix::Constant(m) => write!(f, "TimeMatrix::Constant({:?})", m.shape()),
            TimeMatrix::Grid { times, values } => write!(
                f,
                "TimeMatrix::Grid({} nodes, {:?})",
                times.len(),
                values[0].shape()
            ),
            TimeMatrix::Closure { rows, cols, .. } => {
                write!(f, "TimeMatrix::Closure(({rows}, {cols}))")
            }
        }
    }
}

/// A vector-valued function of time (same three representations).
#[derive(Clone)]
pub enum TimeVector {
    Constant(DVector<f64>),
    Grid {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
    Closure {
        f: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
        dim: usize,
    },
}

impl TimeVector {
    pub fn grid(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        validate_grid_times(&times, values.len())?;
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(
                "grid vector values must share one length".into(),
            ));
        }
        Ok(TimeVector::Grid { times, values })
    }

    pub fn closure(dim: usize, f: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Self {
        TimeVector::Closure {
            f: Arc::new(f),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeVector::Constant(v) => v.len(),
            TimeVector::Grid { values, .. } => values[0].len(),
            TimeVector::Closure { dim, .. } => *dim,
        }
    }

    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        match self {
            TimeVector::Constant(v) => Ok(v.clone()),
            TimeVector::Grid { times, values } => {
                let (lo, hi, w) = interp_weight(times, t)?;
                Ok(if lo == hi {
                    values[lo].clone()
                } else {
                    &values[lo] * (1.0 - w) + &values[hi] * w
                })
            }
            TimeVector::Closure { f, dim } => {
                let v = f(t);
                if v.len() != *dim {
                    return Err(Error::DimensionMismatch(format!(
                        "closure returned length {}, declared {dim}",
                        v.len()
                    )));
                }
                Ok(v)
            }
        }
    }
}

impl fmt::Debug for TimeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeVector::Constant(v) => write!(f, "TimeVector::Constant(len {})", v.len()),
            TimeVector::Grid { times, values } => write!(
                f,
                "TimeVector::Grid({} nodes, len {})",
                times.len(),
                values[0].len()
            ),
            TimeVector::Closure { dim, .. } => write!(f, "TimeVector::Closure(len {dim})"),
        }
    }
}

/// A symmetric-matrix-valued function of time. Linear interpolation of PSD
/// grid nodes stays PSD by convexity, so grids are validated node-wise once.
#[derive(Clone)]
pub enum TimeSymMatrix {
    Constant(SymMatrix),
    Grid {
        times: Vec<f64>,
        values: Vec<SymMatrix>,
    },
    Closure {
        f: Arc<dyn Fn(f64) -> SymMatrix + Send + Sync>,
        order: usize,
    },
}

impl TimeSymMatrix {
    pub fn grid(times: Vec<f64>, values: Vec<SymMatrix>) -> Result<Self> {
        validate_grid_times(&times, values.len())?;
        let order = values[0].order();
        if values.iter().any(|v| v.order() != order) {
            return Err(Error::DimensionMismatch(
                "grid shape values must share one order".into(),
            ));
        }
        Ok(TimeSymMatrix::Grid { times, values })
    }

    pub fn closure(order: usize, f: impl Fn(f64) -> SymMatrix + Send + Sync + 'static) -> Self {
        TimeSymMatrix::Closure {
            f: Arc::new(f),
            order,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            TimeSymMatrix::Constant(m) => m.order(),
            TimeSymMatrix::Grid { values, .. } => values[0].order(),
            TimeSymMatrix::Closure { order, .. } => *order,
        }
    }

    pub fn at(&self, t: f64) -> Result<SymMatrix> {
        match self {
            TimeSymMatrix::Constant(m) => Ok(m.clone()),
            TimeSymMatrix::Grid { times, values } => {
                let (lo, hi, w) = interp_weight(times, t)?;
                Ok(if lo == hi {
                    values[lo].clone()
                } else {
                    &values[lo].scaled(1.0 - w) + &values[hi].scaled(w)
                })
            }
            TimeSymMatrix::Closure { f, order } => {
                let m = f(t);
                if m.order() != *order {
                    return Err(Error::DimensionMismatch(format!(
                        "closure returned order {}, declared {order}",
                        m.order()
                    )));
                }
                Ok(m)
            }
        }
    }
}

impl fmt::Debug for TimeSymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSymMatrix::Constant(m) => write!(f, "TimeSymMatrix::Constant(order {})", m.order()),
            TimeSymMatrix::Grid { times, values } => write!(
                f,
                "TimeSymMatrix::Grid({} nodes, order {})",
                times.len(),
                values[0].order()
            ),
            TimeSymMatrix::Closure { order, .. } => {
                write!(f, "TimeSymMatrix::Closure(order {order})")
            }
        }
    }
}

/// An ellipsoidal set `{c + Q^(1/2) z : ‖z‖ ≤ 1}` whose shape matrix may be
/// positive semidefinite (degenerate sets, including single points, are
/// allowed). Strictly PD sets are interchangeable with [`Ellipsoid`].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainSet {
    center: DVector<f64>,
    shape: SymMatrix,
}

impl UncertainSet {
    pub fn new(center: DVector<f64>, shape: SymMatrix) -> Result<Self> {
        if center.len() != shape.order() {
            return Err(Error::DimensionMismatch(format!(
                "center length {} vs shape order {}",
                center.len(),
                shape.order()
            )));
        }
        let eig = linalg::sym_eig(&shape)?;
        let spectral = eig.max_eigenvalue().abs().max(eig.min_eigenvalue().abs());
        if eig.min_eigenvalue() < -1e-12 * spectral {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: eig.min_eigenvalue(),
            });
        }
        Ok(Self { center, shape })
    }

    /// A single point (zero shape matrix).
    pub fn point(center: DVector<f64>) -> Self {
        let d = center.len();
        Self {
            center,
            shape: SymMatrix::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &SymMatrix {
        &self.shape
    }

    pub fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        if dir.norm() == 0.0 {
            return Err(Error::ZeroDirection);
        }
        Ok(dir.dot(&self.center) + self.shape.quadratic_form(dir).max(0.0).sqrt())
    }

    pub fn sqrt_shape(&self) -> Result<SymMatrix> {
        linalg::sqrt_psd(&self.shape)
    }

    /// Membership with PSD shapes: components along near-null eigenvectors
    /// must vanish (within a fixed affine-hull tolerance), the rest must
    /// satisfy the quadratic form within `tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point length {} vs dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let eig = linalg::sym_eig(&self.shape)?;
        let spectral = eig.max_eigenvalue().max(0.0);
        let floor = 1e-12 * spectral;
        let null_tol = NULL_DIRECTION_TOL * (1.0 + spectral.sqrt() + self.center.norm());
        let diff = x - &self.center;
        let mut form = 0.0;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let coord = eig.eigenvectors.column(k).dot(&diff);
            if lam > floor {
                form += coord * coord / lam;
            } else if coord.abs() > null_tol {
                return Ok(false);
            }
        }
        Ok(form <= 1.0 + tol)
    }

    /// Uniform-in-volume draw (restricted to the affine hull when the shape
    /// is rank-deficient).
    pub fn sample_with(&self, sqrt_shape: &SymMatrix, rng: &mut impl Rng) -> DVector<f64> {
        let d = self.dim();
        let mut u: DVector<f64>;
        loop {
            u = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            let norm = u.norm();
            if norm > 1e-12 {
                u /= norm;
                break;
            }
        }
        let r = rng.random_range(0.0..1.0f64).powf(1.0 / d as f64);
        &self.center + sqrt_shape.mul_vec(&(u * r))
    }

    /// Strictly PD sets convert to an [`Ellipsoid`].
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::new(self.center.clone(), self.shape.clone())
    }
}

impl From<&Ellipsoid> for UncertainSet {
    fn from(e: &Ellipsoid) -> Self {
        Self {
            center: e.center().clone(),
            shape: e.shape().clone(),
        }
    }
}

/// A time-varying ellipsoidal set `E(c(t), S(t))`.
#[derive(Debug, Clone)]
pub struct TimeSet {
    center: TimeVector,
    shape: TimeSymMatrix,
}

impl TimeSet {
    pub fn new(center: TimeVector, shape: TimeSymMatrix) -> Result<Self> {
        if center.dim() != shape.order() {
            return Err(Error::DimensionMismatch(format!(
                "set center dim {} vs shape order {}",
                center.dim(),
                shape.order()
            )));
        }
        // Grid nodes are validated once; interpolants stay PSD by convexity.
        if let TimeSymMatrix::Grid { values, .. } = &shape {
            for v in values {
                UncertainSet::new(DVector::zeros(v.order()), v.clone())?;
            }
        }
        Ok(Self { center, shape })
    }

    pub fn constant(set: UncertainSet) -> Self {
        Self {
            center: TimeVector::Constant(set.center),
            shape: TimeSymMatrix::Constant(set.shape),
        }
    }

    /// The zero set {0} in `dim` dimensions, for absent channels.
    pub fn zero(dim: usize) -> Self {
        Self::constant(UncertainSet::point(DVector::zeros(dim)))
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn at(&self, t: f64) -> Result<UncertainSet> {
        Ok(UncertainSet {
            center: self.center.at(t)?,
            shape: self.shape.at(t)?,
        })
    }

    pub fn center_at(&self, t: f64) -> Result<DVector<f64>> {
        self.center.at(t)
    }

    pub fn shape_at(&self, t: f64) -> Result<SymMatrix> {
        self.shape.at(t)
    }
}

/// The system `ẋ = A(t)x + B(t)u + G(t)w` with continuous (constant, grid-
/// interpolated, or closed-form) coefficient matrices.
#[derive(Debug, Clone)]
pub struct LtvSystem {
    state_dim: usize,
    input_dim: usize,
    disturbance_dim: usize,
    a: TimeMatrix,
    b: TimeMatrix,
    g: TimeMatrix,
}

impl LtvSystem {
    pub fn new(a: TimeMatrix, b: TimeMatrix, g: TimeMatrix) -> Result<Self> {
        let (n, na) = a.shape();
        if n != na {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {n}x{na}"
            )));
        }
        let (nb, m) = b.shape();
        let (ng, p) = g.shape();
        if nb != n || ng != n {
            return Err(Error::DimensionMismatch(format!(
                "B and G must have {n} rows, got {nb} and {ng}"
            )));
        }
        Ok(Self {
            state_dim: n,
            input_dim: m,
            disturbance_dim: p,
            a,
            b,
            g,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_dim
    }

    pub fn a_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.a.at(t)
    }

    pub fn b_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.b.at(t)
    }

    pub fn g_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.g.at(t)
    }
}

/// Evaluate the coefficient triple (A, B, G) at time `t`.
pub fn evaluate_system(sys: &LtvSystem, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    Ok((sys.a.at(t)?, sys.b.at(t)?, sys.g.at(t)?))
}

/// Ellipsoidal-valued uncertainty: the initial-state set (possibly
/// degenerate), the control set `U(t)`, and the disturbance set `W(t)`.
#[derive(Debug, Clone)]
pub struct UncertaintySpec {
    pub initial: UncertainSet,
    pub control: TimeSet,
    pub disturbance: TimeSet,
}

impl UncertaintySpec {
    pub fn new(initial: UncertainSet, control: TimeSet, disturbance: TimeSet) -> Self {
        Self {
            initial,
            control,
            disturbance,
        }
    }

    pub fn validate_dims(&self, sys: &LtvSystem) -> Result<()> {
        if self.initial.dim() != sys.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial set dim {} vs state dim {}",
                self.initial.dim(),
                sys.state_dim()
            )));
        }
        if self.control.dim() != sys.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "control set dim {} vs input dim {}",
                self.control.dim(),
                sys.input_dim()
            )));
        }
        if self.disturbance.dim() != sys.disturbance_dim() {
            return Err(Error::DimensionMismatch(format!(
                "disturbance set dim {} vs disturbance dim {}",
                self.disturbance.dim(),
                sys.disturbance_dim()
            )));
        }
        Ok(())
    }
}

/// A uniform integration grid over one prediction span, with designated
/// snapshot times (always including both endpoints, snapped to grid nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    h: f64,
    num_steps: usize,
    snapshot_steps: Vec<usize>,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, h: f64, snapshot_times: &[f64]) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("step h must be positive, got {h}")));
        }
        if !(t_end > t_start) {
            return Err(Error::InvalidInput(format!(
                "empty time span [{t_start}, {t_end}]"
            )));
        }
        let ratio = (t_end - t_start) / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::InvalidInput(format!(
                "step {h} does not divide the span [{t_start}, {t_end}]"
            )));
        }
        let num_steps = steps as usize;
        let mut snapshot_steps = vec![0usize, num_steps];
        for &t in snapshot_times {
            if t < t_start - 1e-9 || t > t_end + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "snapshot time {t} outside [{t_start}, {t_end}]"
                )));
            }
            snapshot_steps.push((((t - t_start) / h).round() as usize).min(num_steps));
        }
        snapshot_steps.sort_unstable();
        snapshot_steps.dedup();
        Ok(Self {
            t_start,
            t_end,
            h,
            num_steps,
            snapshot_steps,
        })
    }

    /// `count` equispaced snapshots across the span (endpoints included),
    /// with `steps_per_interval` integration steps between consecutive ones.
    pub fn equispaced(
        t_start: f64,
        t_end: f64,
        count: usize,
        steps_per_interval: usize,
    ) -> Result<Self> {
        if count < 2 || steps_per_interval == 0 {
            return Err(Error::InvalidInput(
                "need at least 2 snapshots and 1 step per interval".into(),
            ));
        }
        let h = (t_end - t_start) / ((count - 1) * steps_per_interval) as f64;
        let times: Vec<f64> = (0..count)
            .map(|k| t_start + (t_end - t_start) * k as f64 / (count - 1) as f64)
            .collect();
        Self::new(t_start, t_end, h, &times)
    }

    /// A grid whose only snapshots are the endpoints.
    pub fn span(t_start: f64, t_end: f64, num_steps: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidInput("need at least one step".into()));
        }
        let h = (t_end - t_start) / num_steps as f64;
        Self::new(t_start, t_end, h, &[])
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.num_steps {
            self.t_end
        } else {
            self.t_start + self.h * i as f64
        }
    }

    pub fn snapshot_steps(&self) -> &[usize] {
        &self.snapshot_steps
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&i| self.node(i)).collect()
    }
}

/// One classical RK4 step for a vector ODE.
pub(crate) fn rk4_step<F>(f: &mut F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// A sampled admissible trajectory, reported at the grid's snapshot times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Per integration step: the held (u, w) draw.
    pub inputs: Vec<(DVector<f64>, DVector<f64>)>,
}

/// Precomputed stage data for repeated trajectory draws on one grid.
pub struct TrajectorySampler<'a> {
    sys: &'a LtvSystem,
    unc: &'a UncertaintySpec,
    grid: &'a TimeGrid,
    /// A, B, G at every half-node (2*num_steps + 1 entries).
    stages: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
    /// Control/disturbance sets and shape square roots at each step start.
    step_sets: Vec<(UncertainSet, SymMatrix, UncertainSet, SymMatrix)>,
    initial_sqrt: SymMatrix,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(sys: &'a LtvSystem, unc: &'a UncertaintySpec, grid: &'a TimeGrid) -> Result<Self> {
        unc.validate_dims(sys)?;
        let s = grid.num_steps();
        let mut stages = Vec::with_capacity(2 * s + 1);
        for k in 0..=(2 * s) {
            let t = grid.t_start() + 0.5 * grid.step() * k as f64;
            stages.push(evaluate_system(sys, t.min(grid.t_end()))?);
        }
        let mut step_sets = Vec::with_capacity(s);
        for k in 0..s {
            let t = grid.node(k);
            let u = unc.control.at(t)?;
            let w = unc.disturbance.at(t)?;
            let su = u.sqrt_shape()?;
            let sw = w.sqrt_shape()?;
            step_sets.push((u, su, w, sw));
        }
        let initial_sqrt = unc.initial.sqrt_shape()?;
        Ok(Self {
            sys,
            unc,
            grid,
            stages,
            step_sets,
            initial_sqrt,
        })
    }

    /// Draw one admissible trajectory, deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.unc.initial.sample_with(&self.initial_sqrt, &mut rng);
        let h = self.grid.step();
        let snapshot_steps = self.grid.snapshot_steps();
        let mut states = Vec::with_capacity(snapshot_steps.len());
        let mut inputs = Vec::with_capacity(self.grid.num_steps());
        if snapshot_steps.contains(&0) {
            states.push(x.clone());
        }
        for k in 0..self.grid.num_steps() {
            let (uset, usqrt, wset, wsqrt) = &self.step_sets[k];
            let u = uset.sample_with(usqrt, &mut rng);
            let w = wset.sample_with(wsqrt, &mut rng);

            let (a0, b0, g0) = &self.stages[2 * k];
            let (am, bm, gm) = &self.stages[2 * k + 1];
            let (a1, b1, g1) = &self.stages[2 * k + 2];
            let f0 = a0 * &x + b0 * &u + g0 * &w;
            let x1 = &x + &f0 * (0.5 * h);
            let f1 = am * &x1 + bm * &u + gm * &w;
            let x2 = &x + &f1 * (0.5 * h);
            let f2 = am * &x2 + bm * &u + gm * &w;
            let x3 = &x + &f2 * h;
            let f3 = a1 * &x3 + b1 * &u + g1 * &w;
            x += (f0 + f1 * 2.0 + f2 * 2.0 + f3) * (h / 6.0);

            inputs.push((u, w));
            if snapshot_steps.contains(&(k + 1)) {
                states.push(x.clone());
            }
        }
        debug_assert_eq!(self.sys.state_dim(), x.len());
        Trajectory {
            times: self.grid.snapshot_times(),
            states,
            inputs,
        }
    }
}

/// Sample one admissible trajectory of the uncertain system: a random
/// initial state in the initial set and piecewise-constant-per-step control
/// and disturbance draws, integrated by fixed-step RK4. The state path is
/// reported at the grid's snapshot times; deterministic per seed.
pub fn sample_trajectory(
    sys: &LtvSystem,
    unc: &UncertaintySpec,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Trajectory> {
    Ok(TrajectorySampler::new(sys, unc, grid)?.sample(seed))
}
