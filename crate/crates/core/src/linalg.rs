//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative tolerance used when deciding symmetry and semidefiniteness.
const SHAPE_TOL: f64 = 1e-10;

pub(crate) fn ensure_len(v: &Vector, n: usize, context: &'static str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::dim(context, n, v.len()))
    }
}

pub(crate) fn ensure_shape(m: &Matrix, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::dim(context, rows, m.nrows()));
    }
    if m.ncols() != cols {
        return Err(Error::dim(context, cols, m.ncols()));
    }
    Ok(())
}

pub(crate) fn ensure_square(m: &Matrix, context: &'static str) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::dim(context, m.nrows(), m.ncols()))
    }
}

/// Build a matrix from row vectors; all rows must have equal length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dim("matrix row", ncols, bad.len()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Inverse of [`matrix_from_rows`].
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SHAPE_TOL * scale
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn is_psd(m: &Matrix) -> bool {
    if !is_symmetric(m) {
        return false;
    }
    let scale = m.amax().max(1.0);
    symmetric_eigenvalues(m).first().is_none_or(|&l| l >= -SHAPE_TOL * scale)
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    is_symmetric(m) && m.nrows() > 0 && symmetrize(m).cholesky().is_some()
}

/// A factor `L` with `L Lᵀ = cov` for a symmetric PSD matrix.
///
/// Cholesky is used when it succeeds; otherwise the eigen-decomposition with
/// negative round-off eigenvalues clamped to zero.
pub fn psd_factor(cov: &Matrix) -> Result<Matrix> {
    let sym = symmetrize(cov);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    if !is_psd(cov) {
        return Err(Error::NotPositiveDefinite("covariance is not positive semidefinite"));
    }
    let eig = SymmetricEigen::new(sym);
    let mut factor = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = libm::sqrt(l.max(0.0));
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

/// `δᵀ Σ⁺ δ`, with a range check when `Σ` is singular.
///
/// Returns [`Error::KlUndefined`] when `δ` has a component outside the range
/// of a singular `Σ`.
pub fn quad_form_inv(delta: &Vector, cov: &Matrix) -> Result<f64> {
    let n = ensure_square(cov, "covariance")?;
    ensure_len(delta, n, "quadratic form vector")?;
    if n == 0 {
        return Ok(0.0);
    }
    if let Some(ch) = symmetrize(cov).cholesky() {
        let z = ch.l().solve_lower_triangular(delta).ok_or(Error::Numerical("triangular solve"))?;
        return Ok(z.norm_squared());
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    let lmax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let dnorm = delta.norm();
    let mut total = 0.0;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let proj = eig.eigenvectors.column(j).dot(delta);
        if l <= SHAPE_TOL * lmax {
            if libm::fabs(proj) > 1e-12 * dnorm.max(1.0) {
                return Err(Error::KlUndefined);
            }
        } else {
            total += proj * proj / l;
        }
    }
    Ok(total)
}

/// `λ_max(Σ⁻¹) = 1 / λ_min(Σ)` for a positive definite `Σ`.
pub fn lambda_max_of_inverse(cov: &Matrix) -> Result<f64> {
    ensure_square(cov, "covariance")?;
    if !is_positive_definite(cov) {
        return Err(Error::KlUndefined);
    }
    let lmin = symmetric_eigenvalues(cov)[0];
    Ok(1.0 / lmin)
}

/// All eigenvalues of a real square matrix.
/// `|z|` without requiring std.
pub fn modulus(z: &Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    let n = ensure_square(m, "eigenvalue matrix")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::Numerical("Schur decomposition did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(modulus).fold(0.0, f64::max))
}

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `P = Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`, by fixed-point iteration.
pub fn dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "Riccati A")?;
    let m = b.ncols();
    ensure_shape(b, n, m, "Riccati B")?;
    ensure_shape(q, n, n, "Riccati Q")?;
    ensure_shape(r, m, m, "Riccati R")?;
    let mut p = q.clone();
    for _ in 0..200_000 {
        let bt_p = b.transpose() * &p;
        let s = r + &bt_p * b;
        let ch = symmetrize(&s).cholesky().ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
        let gain = ch.solve(&(&bt_p * a));
        let next = symmetrize(&(q + a.transpose() * &p * a - a.transpose() * p.transpose() * b * gain));
        let delta = (&next - &p).amax();
        let scale = next.amax().max(1.0);
        if !delta.is_finite() || scale > 1e200 {
            break;
        }
        p = next;
        if delta <= 1e-13 * scale {
            return Ok(p);
        }
    }
    Err(Error::Numerical("Riccati iteration did not converge"))
}

/// Discrete LQR gain `K` so that `u = −Kx` minimizes `Σ xᵀQx + uᵀRu`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let p = dare(a, b, q, r)?;
    let bt_p = b.transpose() * &p;
    let s = r + &bt_p * b;
    let ch = symmetrize(&s).cholesky().ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
    Ok(ch.solve(&(bt_p * a)))
}

/// Steady-state Kalman filter for `x' = Ax + w`, `y = Cx + v`.
///
/// Returns the predicted error covariance and the measurement-update gain
/// `L = P Cᵀ (C P Cᵀ + R)⁻¹`.
pub fn steady_state_kalman(a: &Matrix, c: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let p = dare(&a.transpose(), &c.transpose(), q, r)?;
    let s = c * &p * c.transpose() + r;
    let ch = symmetrize(&s).cholesky().ok_or(Error::SingularInnovation)?;
    let gain = ch.solve(&(c * &p)).transpose();
    Ok((p, gain))
}

/// Canonical sign: the largest-magnitude component is made positive.
pub fn canonical_sign(mut v: Vector) -> Vector {
    if let Some((i, _)) = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        if v[i] < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Reduced row-echelon form of the rows of `m` (partial pivoting); zero rows dropped.
fn rref_rows(mut m: Matrix, tol: f64) -> Vec<Vector> {
    let (rows, cols) = m.shape();
    let mut lead = 0;
    let mut r = 0;
    while r < rows && lead < cols {
        let (piv, val) = (r..rows)
            .map(|i| (i, m[(i, lead)].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((r, 0.0));
        if val <= tol {
            lead += 1;
            continue;
        }
        m.swap_rows(r, piv);
        let p = m[(r, lead)];
        for j in 0..cols {
            m[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[(i, lead)];
                if f != 0.0 {
                    for j in 0..cols {
                        let v = m[(r, j)];
                        m[(i, j)] -= f * v;
                    }
                }
            }
        }
        r += 1;
        lead += 1;
    }
    (0..r)
        .map(|i| {
            let mut v = m.row(i).transpose();
            for x in v.iter_mut() {
                if x.abs() <= tol {
                    *x = 0.0;
                }
            }
            v
        })
        .collect()
}

/// Real directions spanning the eigenspace of `a` for eigenvalue `lambda`.
///
/// Complex eigenvectors contribute their real and imaginary parts. When the
/// eigenspace has dimension above one, the basis is brought to reduced
/// row-echelon form so that sparse directions are exposed.
pub fn eigen_directions(a: &Matrix, lambda: Complex<f64>) -> Result<Vec<Vector>> {
    let n = ensure_square(a, "eigenvector matrix")?;
    let shifted = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let v = Complex::new(a[(i, j)], 0.0);
        if i == j {
            v - lambda
        } else {
            v
        }
    });
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Numerical("SVD without right singular vectors"))?;
    let smax = svd.singular_values.amax();
    let tol = 1e-8 * smax.max(1.0) * (n as f64);
    let mut basis: Vec<DVector<Complex<f64>>> = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            basis.push(v_t.row(k).adjoint());
        }
    }
    if basis.is_empty() {
        // Fall back to the smallest singular value's direction.
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .ok_or(Error::Numerical("empty SVD"))?;
        basis.push(v_t.row(k).adjoint());
    }
    let mut real = Vec::new();
    for v in basis {
        // Rotate the phase so that the largest component is real and positive.
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| modulus(a.1).total_cmp(&modulus(b.1)))
            .ok_or(Error::Numerical("empty eigenvector"))?;
        let phase = v[imax] / Complex::new(modulus(&v[imax]), 0.0);
        let v = v.map(|z| z / phase);
        let re = v.map(|z| z.re);
        let im = v.map(|z| z.im);
        for part in [re, im] {
            let norm = part.norm();
            if norm > 1e-9 {
                real.push(part / norm);
            }
        }
    }
    if real.len() > 1 {
        let m = Matrix::from_fn(real.len(), n, |i, j| real[i][j]);
        real = rref_rows(m, 1e-9)
            .into_iter()
            .map(|v| {
                let norm = v.norm();
                canonical_sign(v / norm)
            })
            .collect();
    } else {
        real = real.into_iter().map(canonical_sign).collect();
    }
    Ok(real)
}

/// Distinct eigenvalues (conjugate pairs represented once, with `im ≥ 0`).
pub fn distinct_eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    let mut out: Vec<Complex<f64>> = Vec::new();
    for z in eigenvalues(a)? {
        let z = if z.im < 0.0 { z.conj() } else { z };
        if !out.iter().any(|w| modulus(&(w - z)) <= 1e-7 * modulus(&z).max(1.0)) {
            out.push(z);
        }
    }
    Ok(out)
}

/// Real eigen-directions for every eigenvalue of modulus strictly above `1 + 1e-9`.
pub fn unstable_directions(a: &Matrix) -> Result<Vec<Vector>> {
    let mut dirs = Vec::new();
    for z in distinct_eigenvalues(a)? {
        if modulus(&z) > 1.0 + 1e-9 {
            dirs.extend(eigen_directions(a, z)?);
        }
    }
    Ok(dirs)
}

/// Unit direction of the eigenvector of the largest-modulus eigenvalue.
pub fn dominant_direction(a: &Matrix) -> Result<Vector> {
    let z = distinct_eigenvalues(a)?
        .into_iter()
        .max_by(|a, b| modulus(a).total_cmp(&modulus(b)))
        .ok_or(Error::Numerical("empty matrix has no dominant direction"))?;
    eigen_directions(a, z)?
        .into_iter()
        .next()
        .ok_or(Error::Numerical("no eigen-direction found"))
}
