//! Dense symmetric linear-algebra kernels sized for small state dimensions
//! (n up to ~16): Jacobi eigendecomposition, PSD square root, Cholesky,
//! SPD solves, log-determinant, and polynomial least squares.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius threshold for Jacobi convergence.
const JACOBI_TOL: f64 = 1e-12;
/// Iteration cap for the cyclic Jacobi sweep loop.
const JACOBI_MAX_SWEEPS: usize = 100;
/// Eigenvalues in [-PSD_CLAMP_REL * spectral_norm, 0) are clamped to zero
/// before taking square roots; anything more negative is an error.
const PSD_CLAMP_REL: f64 = 1e-12;

/// A real symmetric matrix. Symmetry is enforced exactly on construction by
/// averaging mirrored entries, so `get(i, j) == get(j, i)` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrize an arbitrary square matrix: (M + Mᵀ) / 2.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        let mut data = DMatrix::zeros(d, d);
        for i in 0..d {
            data[(i, i)] = m[(i, i)];
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Ok(Self { data })
    }

    /// Build from nested rows (row-major), symmetrizing.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(
                "rows of a symmetric matrix must all have the matrix order as length".into(),
            ));
        }
        let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        Self::from_matrix(&m)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            data: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            data: DMatrix::zeros(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: &self.data * s,
        }
    }

    /// xᵀ M x.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        (&self.data * x).dot(x)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.data * x
    }

    /// Congruence transform T M Tᵀ (symmetric for symmetric M).
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.ncols() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "congruence: T has {} columns, matrix order is {}",
                t.ncols(),
                self.order()
            )));
        }
        Self::from_matrix(&(t * &self.data * t.transpose()))
    }

    /// Principal submatrix on the given (distinct, in-range) indices.
    pub fn principal_submatrix(&self, coords: &[usize]) -> Result<Self> {
        let d = self.order();
        validate_index_set(coords, d)?;
        let k = coords.len();
        let m = DMatrix::from_fn(k, k, |i, j| self.data[(coords[i], coords[j])]);
        Ok(Self { data: m })
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.order())
            .map(|i| (0..self.order()).map(|j| self.data[(i, j)]).collect())
            .collect()
    }
}

impl std::ops::Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data + &rhs.data,
        }
    }
}

impl std::ops::Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data - &rhs.data,
        }
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

pub(crate) fn validate_index_set(coords: &[usize], d: usize) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::InvalidIndex("index set is empty".into()));
    }
    for (k, &c) in coords.iter().enumerate() {
        if c >= d {
            return Err(Error::InvalidIndex(format!(
                "index {c} out of range for dimension {d}"
            )));
        }
        if coords[..k].contains(&c) {
            return Err(Error::InvalidIndex(format!("duplicate index {c}")));
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix: M = V diag(λ) Vᵀ with
/// eigenvalues sorted descending and eigenvector columns paired to them.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigDecomposition {
    /// V diag(λ) Vᵀ.
    pub fn reconstruct(&self) -> SymMatrix {
        let lam = DMatrix::from_diagonal(&DVector::from_row_slice(&self.eigenvalues));
        let m = &self.eigenvectors * lam * self.eigenvectors.transpose();
        SymMatrix::from_matrix(&m).expect("square by construction")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

fn offdiag_frobenius(a: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps annihilate each off-diagonal entry in turn until the off-diagonal
/// Frobenius norm falls below `JACOBI_TOL` relative to the matrix norm.
pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomposition> {
    let d = m.order();
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    if d == 0 {
        return Ok(EigDecomposition {
            eigenvalues: vec![],
            eigenvectors: v,
        });
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);

    let mut converged = offdiag_frobenius(&a) <= JACOBI_TOL * scale;
    let mut sweeps = 0;
    while !converged {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::EigNonConvergence { sweeps });
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                // Smaller-magnitude rotation root for stability.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = offdiag_frobenius(&a) <= JACOBI_TOL * scale;
    }

    let mut pairs: Vec<(f64, usize)> = (0..d).map(|i| (a[(i, i)], i)).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("eigenvalues are finite"));
    let eigenvalues: Vec<f64> = pairs.iter().map(|&(lam, _)| lam).collect();
    let eigenvectors = DMatrix::from_fn(d, d, |i, j| v[(i, pairs[j].1)]);
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric PSD square root: R with R·R == M.
///
/// Eigenvalues in [-1e-12·‖M‖, 0) are clamped to zero (integration drift);
/// anything more negative is rejected.
pub fn sqrt_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let spectral = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let floor = -PSD_CLAMP_REL * spectral;
    let mut sqrt_vals = Vec::with_capacity(eig.eigenvalues.len());
    for &lam in &eig.eigenvalues {
        if lam < floor {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: lam,
            });
        }
        sqrt_vals.push(lam.max(0.0).sqrt());
    }
    let lam = DMatrix::from_diagonal(&DVector::from_row_slice(&sqrt_vals));
    let r = &eig.eigenvectors * lam * eig.eigenvectors.transpose();
    SymMatrix::from_matrix(&r)
}

/// Lower-triangular Cholesky factor L with L·Lᵀ == M.
pub fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    let d = m.order();
    let a = m.as_matrix();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {diag:e} at column {j}"
            )));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// log det M for symmetric positive definite M, via the Cholesky diagonal.
pub fn logdet_spd(m: &SymMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * (0..m.order()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

pub(crate) fn forward_substitute(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = l.nrows();
    let mut y = DVector::zeros(d);
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

pub(crate) fn back_substitute_transposed(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let d = l.nrows();
    let mut x = DVector::zeros(d);
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve M x = b for SPD M via Cholesky.
pub fn solve_spd(m: &SymMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != m.order() {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd: rhs length {} vs order {}",
            rhs.len(),
            m.order()
        )));
    }
    let l = cholesky(m)?;
    Ok(back_substitute_transposed(
        &l,
        &forward_substitute(&l, rhs),
    ))
}

/// Solve M X = B column-by-column for SPD M.
pub fn solve_spd_matrix(m: &SymMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != m.order() {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd_matrix: rhs has {} rows, order {}",
            rhs.nrows(),
            m.order()
        )));
    }
    let l = cholesky(m)?;
    let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    for j in 0..rhs.ncols() {
        let b = DVector::from_iterator(rhs.nrows(), rhs.column(j).iter().copied());
        let x = back_substitute_transposed(&l, &forward_substitute(&l, &b));
        out.set_column(j, &x);
    }
    Ok(out)
}

/// Inverse of an SPD matrix (symmetrized).
pub fn inverse_spd(m: &SymMatrix) -> Result<SymMatrix> {
    let inv = solve_spd_matrix(m, &DMatrix::identity(m.order(), m.order()))?;
    SymMatrix::from_matrix(&inv)
}

/// Least-squares polynomial fit, coefficients in ascending powers.
///
/// Solves min Σ (p(x_k) - y_k)² by QR of the Vandermonde matrix (modified
/// Gram-Schmidt) rather than normal equations; exact interpolation when
/// len(xs) == degree + 1.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let k = xs.len();
    if ys.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "polyfit: {} abscissae vs {} ordinates",
            k,
            ys.len()
        )));
    }
    if k < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "polyfit: need at least {} points for degree {degree}, got {k}",
            degree + 1
        )));
    }
    for i in 0..k {
        for j in 0..i {
            if xs[i] == xs[j] {
                return Err(Error::RankDeficient(format!(
                    "duplicate abscissa {}",
                    xs[i]
                )));
            }
        }
    }

    let cols = degree + 1;
    // Vandermonde columns, orthogonalized in place.
    let mut q: Vec<DVector<f64>> = (0..cols)
        .map(|j| DVector::from_fn(k, |i, _| xs[i].powi(j as i32)))
        .collect();
    let mut r = DMatrix::<f64>::zeros(cols, cols);
    for j in 0..cols {
        let norm0 = q[j].norm();
        for i in 0..j {
            let rij = q[i].dot(&q[j]);
            r[(i, j)] = rij;
            let qi = q[i].clone();
            q[j] -= qi * rij;
        }
        let rjj = q[j].norm();
        if rjj <= 1e-13 * norm0.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient(format!(
                "Vandermonde column {j} is numerically dependent"
            )));
        }
        r[(j, j)] = rjj;
        q[j] /= rjj;
    }

    let y = DVector::from_row_slice(ys);
    let z = DVector::from_fn(cols, |i, _| q[i].dot(&y));
    // Back substitution on the upper-triangular R.
    let mut c = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = z[i];
        for j in (i + 1)..cols {
            s -= r[(i, j)] * c[j];
        }
        c[i] = s / r[(i, i)];
    }
    Ok(c)
}

/// Horner evaluation of a polynomial given in ascending powers.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_symmetric(d: usize, rng: &mut impl Rng) -> SymMatrix {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::from_matrix(&m).unwrap()
    }

    pub(crate) fn random_spd(d: usize, rng: &mut impl Rng) -> SymMatrix {
        let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let m = &r * r.transpose() + DMatrix::<f64>::identity(d, d) * 0.1;
        SymMatrix::from_matrix(&m).unwrap()
    }

    fn rel_frobenius_err(a: &SymMatrix, b: &SymMatrix) -> f64 {
        (a.as_matrix() - b.as_matrix()).norm() / b.as_matrix().norm().max(1e-300)
    }

    #[test]
    fn sym_eig_diagonal() {
        let m = SymMatrix::from_diagonal(&[3.0, 1.0]);
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 1.0]);
        assert!((e.eigenvectors[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((e.eigenvectors[(1, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_two_by_two() {
        // Characteristic roots of [[2,1],[1,2]] are 3 and 1.
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
        let s = 1.0 / 2.0f64.sqrt();
        let v0 = (e.eigenvectors[(0, 0)].abs() - s).abs();
        let v1 = (e.eigenvectors[(1, 0)].abs() - s).abs();
        assert!(v0 < 1e-12 && v1 < 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs_random_12x12() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_symmetric(12, &mut rng);
        let e = sym_eig(&m).unwrap();
        assert!(rel_frobenius_err(&e.reconstruct(), &m) < 1e-10);
        // Orthogonality VᵀV = I.
        let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
        let id = DMatrix::<f64>::identity(12, 12);
        assert!((vtv - id).norm() < 1e-10);
    }

    #[test]
    fn sqrt_psd_identity_and_diagonal() {
        let i3 = SymMatrix::identity(3);
        assert!(rel_frobenius_err(&sqrt_psd(&i3).unwrap(), &i3) < 1e-14);
        let m = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let r = sqrt_psd(&m).unwrap();
        let expected = SymMatrix::from_diagonal(&[2.0, 3.0]);
        assert!(rel_frobenius_err(&r, &expected) < 1e-12);
    }

    #[test]
    fn sqrt_psd_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 5, 9] {
            let m = random_spd(d, &mut rng);
            let r = sqrt_psd(&m).unwrap();
            let rr = SymMatrix::from_matrix(&(r.as_matrix() * r.as_matrix())).unwrap();
            assert!(rel_frobenius_err(&rr, &m) < 1e-9);
        }
    }

    #[test]
    fn sqrt_psd_rejects_indefinite() {
        let m = SymMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(
            sqrt_psd(&m),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn cholesky_identity_and_known_factor() {
        let i2 = SymMatrix::identity(2);
        let l = cholesky(&i2).unwrap();
        assert!((l - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);

        // [[4,2],[2,3]] factors as [[2,0],[1,sqrt(2)]] (verified by L·Lᵀ).
        let m = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 2.0f64.sqrt()).abs() < 1e-12);
        let back = SymMatrix::from_matrix(&(&l * l.transpose())).unwrap();
        assert!(rel_frobenius_err(&back, &m) < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        // Eigenvalues 3 and -1.
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&m), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn logdet_trivial_values() {
        assert!(logdet_spd(&SymMatrix::identity(4)).unwrap().abs() < 1e-14);
        let e = std::f64::consts::E;
        let m = SymMatrix::from_diagonal(&[e, e]);
        assert!((logdet_spd(&m).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logdet_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2usize, 4, 8] {
            let m = random_spd(d, &mut rng);
            let ld = logdet_spd(&m).unwrap();
            let prod: f64 = sym_eig(&m).unwrap().eigenvalues.iter().product();
            assert!(
                (ld.exp() - prod).abs() <= 1e-8 * prod.abs(),
                "exp(logdet) {} vs eigenvalue product {}",
                ld.exp(),
                prod
            );
        }
    }

    #[test]
    fn solve_spd_trivial_and_residual() {
        let b = DVector::from_row_slice(&[1.0, -2.0, 3.0]);
        let x = solve_spd(&SymMatrix::identity(3), &b).unwrap();
        assert!((x - &b).norm() < 1e-14);

        let m = SymMatrix::from_diagonal(&[2.0, 4.0]);
        let x = solve_spd(&m, &DVector::from_row_slice(&[2.0, 4.0])).unwrap();
        assert!((x - DVector::from_row_slice(&[1.0, 1.0])).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_spd(6, &mut rng);
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_spd(&m, &b).unwrap();
        let residual = (m.as_matrix() * &x - &b).norm() / b.norm();
        assert!(residual < 1e-9);
    }

    #[test]
    fn polyfit_constant_and_exact_quadratic() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [5.0; 5];
        let c = polyfit(&xs, &ys, 3).unwrap();
        assert!((c[0] - 5.0).abs() < 1e-10);
        for &ci in &c[1..] {
            assert!(ci.abs() < 1e-10);
        }

        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let c = polyfit(&xs, &ys, 2).unwrap();
        assert!(c[0].abs() < 1e-10 && c[1].abs() < 1e-10 && (c[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn polyfit_matches_normal_equation_oracle() {
        // Independent least-squares route: solve VᵀV c = Vᵀ y through the
        // full eigendecomposition of VᵀV.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<f64> = (1..=12).map(|k| k as f64).collect();
        let truth = [0.3, -1.2, 0.05, 0.4, -0.01];
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| poly_eval(&truth, x) + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        let c = polyfit(&xs, &ys, 4).unwrap();

        let v = DMatrix::from_fn(xs.len(), 5, |i, j| xs[i].powi(j as i32));
        let vtv = SymMatrix::from_matrix(&(v.transpose() * &v)).unwrap();
        let vty = v.transpose() * DVector::from_row_slice(&ys);
        let eig = sym_eig(&vtv).unwrap();
        let mut oracle = DVector::zeros(5);
        for k in 0..5 {
            let vk = eig.eigenvectors.column(k);
            oracle += vk.into_owned() * (vk.dot(&vty) / eig.eigenvalues[k]);
        }
        let fitted = DVector::from_row_slice(&c);
        let residual_fit = (&v * &fitted - DVector::from_row_slice(&ys)).norm();
        let residual_oracle = (&v * &oracle - DVector::from_row_slice(&ys)).norm();
        assert!((residual_fit - residual_oracle).abs() < 1e-6);
    }

    #[test]
    fn polyfit_rejects_duplicate_abscissae() {
        let r = polyfit(&[1.0, 2.0, 2.0, 3.0, 4.0], &[0.0; 5], 2);
        assert!(matches!(r, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn polyfit_residual_beats_perturbed_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<f64> = (0..10).map(|k| k as f64 * 0.5).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 1.0 + 0.2 * x - 0.3 * x * x + rng.random_range(-0.05..0.05))
            .collect();
        let c = polyfit(&xs, &ys, 2).unwrap();
        let residual = |coeffs: &[f64]| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(&x, &y)| (poly_eval(coeffs, x) - y).powi(2))
                .sum()
        };
        let best = residual(&c);
        for _ in 0..100 {
            let perturbed: Vec<f64> = c
                .iter()
                .map(|&ci| ci + rng.random_range(-0.02..0.02))
                .collect();
            assert!(best <= residual(&perturbed) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sqrt_psd_squares_back(seed in 0u64..500, d in 1usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let m = SymMatrix::from_matrix(&(&r * r.transpose())).unwrap();
            let root = sqrt_psd(&m).unwrap();
            let sq = root.as_matrix() * root.as_matrix();
            let err = (&sq - m.as_matrix()).norm();
            prop_assert!(err <= 1e-9 * m.as_matrix().norm().max(1.0));
        }

        #[test]
        fn logdet_exp_matches_eig_product(seed in 0u64..200, d in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_spd(d, &mut rng);
            let ld = logdet_spd(&m).unwrap();
            let prod: f64 = sym_eig(&m).unwrap().eigenvalues.iter().product();
            prop_assert!((ld.exp() - prod).abs() <= 1e-8 * prod.abs());
        }
    }
}
