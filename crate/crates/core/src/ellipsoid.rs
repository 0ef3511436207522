//! Ellipsoid representations, conversions between the center/shape and
//! quadratic-form parameterizations, geometry queries, axis-aligned
//! projection, and deterministic sampling oracles.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};

/// Default containment tolerance; ODE-propagated sets carry integration
/// error, so membership tests are run with slack.
pub const DEFAULT_CONTAINMENT_TOL: f64 = 1e-9;

/// Shape matrices with an eigenvalue below this fraction of the trace are
/// rejected as degenerate at construction.
const DEGENERACY_REL: f64 = 1e-12;

/// A nondegenerate ellipsoid `{y : (y - q)ᵀ Q⁻¹ (y - q) ≤ 1}` with center
/// `q` and positive definite shape matrix `Q`.
///
/// Serializes as `{"center": [...], "shape": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: SymMatrix,
}

impl Serialize for Ellipsoid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Ellipsoid", 2)?;
        s.serialize_field("center", &self.center.as_slice())?;
        s.serialize_field("shape", &self.shape)?;
        s.end()
    }
}

impl Ellipsoid {
    /// Validates that the shape matrix order matches the center length and
    /// that the shape is positive definite and not numerically degenerate
    /// (minimum eigenvalue at least 1e-12 of the trace).
    pub fn new(center: DVector<f64>, shape: SymMatrix) -> Result<Self> {
        if center.len() != shape.order() {
            return Err(Error::DimensionMismatch(format!(
                "center length {} vs shape order {}",
                center.len(),
                shape.order()
            )));
        }
        if center.len() == 0 {
            return Err(Error::InvalidInput("ellipsoid dimension is zero".into()));
        }
        let eig = linalg::sym_eig(&shape)?;
        let tr = shape.trace();
        if !(eig.min_eigenvalue() >= DEGENERACY_REL * tr) || tr <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "shape matrix degenerate: min eigenvalue {:e}, trace {:e}",
                eig.min_eigenvalue(),
                tr
            )));
        }
        Ok(Self { center, shape })
    }

    pub fn unit_ball(d: usize) -> Self {
        Self {
            center: DVector::zeros(d),
            shape: SymMatrix::identity(d),
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

    /// Quadratic form value (x - q)ᵀ Q⁻¹ (x - q).
    pub fn form_value(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point length {} vs dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let diff = x - &self.center;
        let sol = linalg::solve_spd(&self.shape, &diff)?;
        Ok(diff.dot(&sol))
    }
}

/// The quadratic-form parameterization `(A0, b0, c0)` of an ellipsoid,
/// related to `(q, Q)` by `A0 = Q⁻¹`, `b0 = -Q⁻¹ q`, `c0 = qᵀ Q⁻¹ q - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub a0: SymMatrix,
    pub b0: DVector<f64>,
    pub c0: f64,
}

impl QuadraticForm {
    /// Requires `A0` positive definite and the represented set nonempty,
    /// i.e. `b0ᵀ A0⁻¹ b0 - c0 + 1 > 0`.
    pub fn new(a0: SymMatrix, b0: DVector<f64>, c0: f64) -> Result<Self> {
        if b0.len() != a0.order() {
            return Err(Error::DimensionMismatch(format!(
                "b0 length {} vs A0 order {}",
                b0.len(),
                a0.order()
            )));
        }
        let sol = linalg::solve_spd(&a0, &b0)?;
        if !(b0.dot(&sol) - c0 + 1.0 > 0.0) {
            return Err(Error::InvalidInput(
                "quadratic form describes an empty set".into(),
            ));
        }
        Ok(Self { a0, b0, c0 })
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }
}

/// Convert `(q, Q)` to `(A0, b0, c0)`: `A0 = Q⁻¹`, `b0 = -Q⁻¹q`,
/// `c0 = qᵀQ⁻¹q - 1`.
pub fn to_quadratic_form(e: &Ellipsoid) -> Result<QuadraticForm> {
    let a0 = linalg::inverse_spd(&e.shape)?;
    let qinv_q = linalg::solve_spd(&e.shape, &e.center)?;
    let b0 = -&qinv_q;
    let c0 = e.center.dot(&qinv_q) - 1.0;
    Ok(QuadraticForm { a0, b0, c0 })
}

/// Convert `(A0, b0, c0)` back to `(q, Q)`: `Q = A0⁻¹`, `q = -Q b0`.
pub fn from_quadratic_form(f: &QuadraticForm) -> Result<Ellipsoid> {
    let shape = linalg::inverse_spd(&f.a0)?;
    let center = -linalg::solve_spd(&f.a0, &f.b0)?;
    Ellipsoid::new(center, shape)
}

/// Support function value `ρ(dir) = dirᵀq + sqrt(dirᵀ Q dir)`.
pub fn support(e: &Ellipsoid, dir: &DVector<f64>) -> Result<f64> {
    if dir.len() != e.dim() {
        return Err(Error::DimensionMismatch(format!(
            "direction length {} vs dimension {}",
            dir.len(),
            e.dim()
        )));
    }
    if dir.norm() == 0.0 {
        return Err(Error::ZeroDirection);
    }
    Ok(dir.dot(&e.center) + e.shape.quadratic_form(dir).max(0.0).sqrt())
}

/// Membership test `(x - q)ᵀ Q⁻¹ (x - q) ≤ 1 + tol`.
pub fn contains(e: &Ellipsoid, x: &DVector<f64>, tol: f64) -> Result<bool> {
    Ok(e.form_value(x)? <= 1.0 + tol)
}

/// Axis-aligned projection: extract the center subvector and principal
/// shape submatrix on `coords`.
pub fn project(e: &Ellipsoid, coords: &[usize]) -> Result<Ellipsoid> {
    let shape = e.shape.principal_submatrix(coords)?;
    let center = DVector::from_fn(coords.len(), |i, _| e.center[coords[i]]);
    Ellipsoid::new(center, shape)
}

/// Lebesgue volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} · 2π/d.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Lebesgue volume: unit-ball volume of dimension d times sqrt(det Q).
pub fn volume(e: &Ellipsoid) -> Result<f64> {
    let logdet = linalg::logdet_spd(&e.shape)?;
    Ok(unit_ball_volume(e.dim()) * (0.5 * logdet).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Interior,
    Boundary,
}

/// Draw `n` deterministic samples from the ellipsoid.
///
/// Directions are uniform on the sphere (normalized Gaussian draws); the
/// interior mode scales the radius by u^(1/d) for uniform-in-volume samples,
/// then both modes map by Q^(1/2). The generator is counter-based
/// (ChaCha8) and seeded per call, so concurrent callers never share state.
pub fn sample(e: &Ellipsoid, n: usize, mode: SampleMode, seed: u64) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let sqrt_shape = linalg::sqrt_psd(&e.shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = e.dim();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(sample_one(e, &sqrt_shape, d, mode, &mut rng));
    }
    Ok(out)
}

fn sample_one(
    e: &Ellipsoid,
    sqrt_shape: &SymMatrix,
    d: usize,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let mut u: DVector<f64>;
    loop {
        u = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let norm = u.norm();
        if norm > 1e-12 {
            u /= norm;
            break;
        }
    }
    let r = match mode {
        SampleMode::Boundary => 1.0,
        SampleMode::Interior => rng.random_range(0.0..1.0f64).powf(1.0 / d as f64),
    };
    &e.center + sqrt_shape.mul_vec(&(u * r))
}

impl<'de> Deserialize<'de> for Ellipsoid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            center: Vec<f64>,
            shape: SymMatrix,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ellipsoid::new(DVector::from_row_slice(&raw.center), raw.shape).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ellipsoid(d: usize, rng: &mut impl Rng) -> Ellipsoid {
        let r = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let shape =
            SymMatrix::from_matrix(&(&r * r.transpose() + nalgebra::DMatrix::identity(d, d) * 0.2))
                .unwrap();
        let center = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        Ellipsoid::new(center, shape).unwrap()
    }

    #[test]
    fn unit_ball_quadratic_form() {
        let e = Ellipsoid::unit_ball(3);
        let f = to_quadratic_form(&e).unwrap();
        assert!((f.a0.as_matrix() - nalgebra::DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        assert!(f.b0.norm() < 1e-14);
        assert!((f.c0 + 1.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_axis_aligned_quadratic_form() {
        let e = Ellipsoid::new(
            DVector::from_row_slice(&[1.0, 0.0]),
            SymMatrix::from_diagonal(&[4.0, 1.0]),
        )
        .unwrap();
        let f = to_quadratic_form(&e).unwrap();
        assert!((f.a0.get(0, 0) - 0.25).abs() < 1e-14);
        assert!((f.a0.get(1, 1) - 1.0).abs() < 1e-14);
        assert!((f.b0[0] + 0.25).abs() < 1e-14);
        assert!(f.b0[1].abs() < 1e-14);
        assert!((f.c0 + 0.75).abs() < 1e-14);

        let back = from_quadratic_form(&f).unwrap();
        assert!((back.center() - e.center()).norm() < 1e-12);
        assert!((back.shape().as_matrix() - e.shape().as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn conversion_round_trips_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let d = rng.random_range(1..=12);
            let e = random_ellipsoid(d, &mut rng);
            let back = from_quadratic_form(&to_quadratic_form(&e).unwrap()).unwrap();
            let scale = e.shape().as_matrix().norm();
            assert!((back.center() - e.center()).norm() <= 1e-10 * scale.max(1.0));
            assert!(
                (back.shape().as_matrix() - e.shape().as_matrix()).norm() <= 1e-10 * scale.max(1.0)
            );
        }
    }

    #[test]
    fn support_on_unit_and_shifted_balls() {
        let e1 = DVector::from_row_slice(&[1.0, 0.0]);
        assert!((support(&Ellipsoid::unit_ball(2), &e1).unwrap() - 1.0).abs() < 1e-14);

        let shifted = Ellipsoid::new(e1.clone(), SymMatrix::identity(2)).unwrap();
        assert!((support(&shifted, &e1).unwrap() - 2.0).abs() < 1e-14);

        assert!(matches!(
            support(&Ellipsoid::unit_ball(2), &DVector::zeros(2)),
            Err(Error::ZeroDirection)
        ));
    }

    #[test]
    fn support_dominates_boundary_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = random_ellipsoid(4, &mut rng);
        let dir = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let rho = support(&e, &dir).unwrap();
        let pts = sample(&e, 10_000, SampleMode::Boundary, 77).unwrap();
        let best = pts
            .iter()
            .map(|p| dir.dot(p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best <= rho + 1e-9);
    }

    #[test]
    fn support_positive_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let e = random_ellipsoid(5, &mut rng);
        let dir = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        for alpha in [0.5, 2.0, 7.25] {
            let lhs = support(&e, &(dir.clone() * alpha)).unwrap();
            let rhs = alpha * support(&e, &dir).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn containment_thresholds() {
        let ball = Ellipsoid::unit_ball(2);
        assert!(contains(&ball, &DVector::zeros(2), 0.0).unwrap());
        let x = DVector::from_row_slice(&[1.001, 0.0]);
        assert!(!contains(&ball, &x, 0.0).unwrap());
        assert!(contains(&ball, &x, 1e-2).unwrap());
    }

    #[test]
    fn projection_trivial_cases() {
        let p = project(&Ellipsoid::unit_ball(3), &[0, 1]).unwrap();
        assert_eq!(p.dim(), 2);
        assert!((p.shape().as_matrix() - nalgebra::DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);

        let e = Ellipsoid::new(
            DVector::zeros(3),
            SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]),
        )
        .unwrap();
        let p = project(&e, &[0, 2]).unwrap();
        assert!((p.shape().get(0, 0) - 1.0).abs() < 1e-14);
        assert!((p.shape().get(1, 1) - 3.0).abs() < 1e-14);

        assert!(matches!(
            project(&e, &[]),
            Err(Error::InvalidIndex(_))
        ));
        assert!(matches!(project(&e, &[3]), Err(Error::InvalidIndex(_))));
    }

    #[test]
    fn projected_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let e = random_ellipsoid(12, &mut rng);
        let coords = [0usize, 1, 2];
        let p = project(&e, &coords).unwrap();
        for x in sample(&e, 500, SampleMode::Interior, 5).unwrap() {
            let xs = DVector::from_fn(3, |i, _| x[coords[i]]);
            assert!(contains(&p, &xs, 1e-12).unwrap());
        }
    }

    #[test]
    fn projection_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = random_ellipsoid(6, &mut rng);
        // Project to {0,2,4}, then take {0,2} of that = original coords {0,4}.
        let first = project(&e, &[0, 2, 4]).unwrap();
        let nested = project(&first, &[0, 2]).unwrap();
        let direct = project(&e, &[0, 4]).unwrap();
        assert!((nested.center() - direct.center()).norm() < 1e-14);
        assert!((nested.shape().as_matrix() - direct.shape().as_matrix()).norm() < 1e-14);
    }

    #[test]
    fn volumes_of_reference_shapes() {
        let pi = std::f64::consts::PI;
        assert!((volume(&Ellipsoid::unit_ball(2)).unwrap() - pi).abs() < 1e-12);
        assert!((volume(&Ellipsoid::unit_ball(3)).unwrap() - 4.0 * pi / 3.0).abs() < 1e-12);
        let e = Ellipsoid::new(DVector::zeros(2), SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((volume(&e).unwrap() - 6.0 * pi).abs() < 1e-10);
    }

    #[test]
    fn boundary_samples_have_unit_norm() {
        let ball = Ellipsoid::unit_ball(4);
        for p in sample(&ball, 200, SampleMode::Boundary, 1).unwrap() {
            assert!((p.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let e = random_ellipsoid(5, &mut rng);
        let a = sample(&e, 64, SampleMode::Interior, 123).unwrap();
        let b = sample(&e, 64, SampleMode::Interior, 123).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(contains(&e, p, 1e-12).unwrap());
        }
    }

    #[test]
    fn boundary_sampling_attains_support() {
        let e = Ellipsoid::new(DVector::zeros(2), SymMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        let pts = sample(&e, 100_000, SampleMode::Boundary, 999).unwrap();
        let max_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!((max_x - 2.0).abs() < 0.02, "empirical max {max_x}");
    }

    #[test]
    fn degenerate_shape_rejected() {
        let shape = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(Ellipsoid::new(DVector::zeros(2), shape).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = random_ellipsoid(3, &mut rng);
        let s = serde_json::to_string(&e).unwrap();
        let back: Ellipsoid = serde_json::from_str(&s).unwrap();
        assert_eq!(e, back);
    }
}
