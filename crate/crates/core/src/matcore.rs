//! Dense real-matrix kernels: Kronecker products, Lyapunov and Riccati
//! solvers, symmetric and general eigenvalues, least squares, and the
//! definiteness / stability tests used throughout the design pipeline.
//!
//! Every routine is a pure function over `nalgebra::DMatrix<f64>`.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Numerical tolerances shared by the solvers. `Default` carries the values
/// the design pipeline was validated with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalues must satisfy `Re λ < -hurwitz_margin`.
    pub hurwitz_margin: f64,
    /// Lyapunov residual bound, relative to `1 + ‖W‖_F`.
    pub lyapunov_rel: f64,
    /// Riccati residual bound, relative to `1 + ‖Q‖_F`.
    pub care_rel: f64,
    /// Hamiltonian eigenvalues with `|Re λ| < imag_axis_rel * (1 + ‖H‖_F)`
    /// count as lying on the imaginary axis.
    pub imag_axis_rel: f64,
    /// Accepted relative asymmetry for "symmetric" inputs.
    pub symmetry_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hurwitz_margin: 0.0,
            lyapunov_rel: 1e-9,
            care_rel: 1e-8,
            imag_axis_rel: 1e-8,
            symmetry_rel: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    /// Frobenius norm of the defining equation's residual.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc))
                .copy_from(&(b * aij));
        }
    }
    out
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn trace(m: &Matrix) -> f64 {
    m.diagonal().sum()
}

pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn column(values: &[f64]) -> Matrix {
    Matrix::from_column_slice(values.len(), 1, values)
}

/// Assemble a dense matrix from a grid of blocks. Every block in a block-row
/// must share its row count and every block in a block-column its column
/// count.
pub fn block(grid: &[Vec<Matrix>]) -> Result<Matrix> {
    let heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = grid
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty block grid".into()))?
        .iter()
        .map(Matrix::ncols)
        .collect();
    let mut out = Matrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (bi, row) in grid.iter().enumerate() {
        if row.len() != widths.len() {
            return Err(Error::DimensionMismatch(format!(
                "block row {bi} has {} blocks, expected {}",
                row.len(),
                widths.len()
            )));
        }
        let mut c0 = 0;
        for (bj, blk) in row.iter().enumerate() {
            if blk.nrows() != heights[bi] || blk.ncols() != widths[bj] {
                return Err(Error::DimensionMismatch(format!(
                    "block ({bi},{bj}) is {}x{}, expected {}x{}",
                    blk.nrows(),
                    blk.ncols(),
                    heights[bi],
                    widths[bj]
                )));
            }
            out.view_mut((r0, c0), blk.shape()).copy_from(blk);
            c0 += widths[bj];
        }
        r0 += heights[bi];
    }
    Ok(out)
}

pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.iter().map(Matrix::nrows).sum();
    let cols = blocks.iter().map(Matrix::ncols).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        0.0
    } else {
        (m - m.transpose()).norm() / scale
    }
}

fn ensure_symmetric(m: &Matrix, tol: f64) -> Result<()> {
    let asymmetry = relative_asymmetry(m);
    if asymmetry > tol {
        Err(Error::NotSymmetric { asymmetry })
    } else {
        Ok(())
    }
}

/// Real Schur form `a = H·(Z T Zᵀ)·H`, where `H` is either absent (identity)
/// or a Householder reflector. The QR iteration can stall when deflation
/// requires subdiagonals at machine precision, so the deflation threshold
/// is relaxed step by step up to `1e-10` relative; if that still fails, the
/// iteration is rerun on a few fixed orthogonal similarity transforms.
fn schur(a: &Matrix) -> Result<(Option<Matrix>, Schur<f64, nalgebra::Dyn>)> {
    const EPS: [f64; 6] = [f64::EPSILON, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10];
    let attempt = |m: &Matrix| EPS.iter().find_map(|&eps| Schur::try_new(m.clone(), eps, 10_000));
    if let Some(s) = attempt(a) {
        return Ok((None, s));
    }
    let n = a.nrows();
    for k in 1..=4 {
        let v = nalgebra::DVector::from_fn(n, |i, _| ((i + 1) as f64 * k as f64 * 0.618_033_988_749_895).sin() + 1.5);
        let v = &v / v.norm();
        let h = identity(n) - &v * v.transpose() * 2.0;
        if let Some(s) = attempt(&(&h * a * &h)) {
            return Ok((Some(h), s));
        }
    }
    Err(Error::IllConditioned("real Schur decomposition did not converge".into()))
}

fn real_schur(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (h, s) = schur(a)?;
    let (z, t) = s.unpack();
    Ok((h.map_or(z.clone(), |h| h * z), t))
}

/// All eigenvalues of a square real matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(a, "eigenvalue input")?;
    Ok(schur(a)?.1.complex_eigenvalues().iter().copied().collect())
}

pub fn max_real_part(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// True iff every eigenvalue of `a` has real part below `-margin`.
pub fn is_hurwitz(a: &Matrix, margin: f64) -> bool {
    match max_real_part(a) {
        Ok(m) => m < -margin,
        Err(_) => false,
    }
}

/// Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix.
pub fn eig_sym(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    ensure_square(m, "symmetric eigenproblem input")?;
    ensure_symmetric(m, Tolerances::default().symmetry_rel)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn min_eigenvalue_sym(m: &Matrix) -> Result<f64> {
    Ok(eig_sym(m)?.0[0])
}

pub fn max_eigenvalue_sym(m: &Matrix) -> Result<f64> {
    let (values, _) = eig_sym(m)?;
    Ok(values[values.len() - 1])
}

pub fn is_positive_definite(m: &Matrix, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue_sym(m)? > tol)
}

/// Minimum-norm least-squares solution of `coef · x = rhs` (any number of
/// right-hand-side columns) and the Frobenius norm of the residual.
pub fn solve_lsq(coef: &Matrix, rhs: &Matrix) -> Result<(Matrix, f64)> {
    if coef.nrows() != rhs.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "least squares: coefficient has {} rows, rhs has {}",
            coef.nrows(),
            rhs.nrows()
        )));
    }
    let svd = coef.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * f64::EPSILON * coef.nrows().max(coef.ncols()) as f64;
    let x = svd
        .solve(rhs, cutoff)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let residual = (coef * &x - rhs).norm();
    Ok((x, residual))
}

pub fn lyapunov_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
    (a * x + x * a.transpose() + w).norm()
}

/// Solves `A X + X Aᵀ + W = 0` for Hurwitz `A` with default tolerances.
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<(Matrix, SolverReport)> {
    solve_lyapunov_with(a, w, &Tolerances::default())
}

/// Bartels–Stewart on the real Schur form of `A`, followed by up to two
/// residual-correction sweeps reusing the same factorization.
pub fn solve_lyapunov_with(a: &Matrix, w: &Matrix, tol: &Tolerances) -> Result<(Matrix, SolverReport)> {
    ensure_square(a, "Lyapunov A")?;
    if w.shape() != a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov W is {}x{}, A is {}x{}",
            w.nrows(),
            w.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "Lyapunov A")?;
    ensure_finite(w, "Lyapunov W")?;
    let max_real = max_real_part(a)?;
    if max_real >= -tol.hurwitz_margin {
        return Err(Error::NotHurwitz { max_real });
    }
    let (u, t) = real_schur(a)?;
    let bound = tol.lyapunov_rel * (1.0 + w.norm());

    let mut x = Matrix::zeros(a.nrows(), a.ncols());
    let mut rhs = -w.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..3 {
        iterations += 1;
        let c = u.transpose() * &rhs * &u;
        let y = quasi_triangular_sylvester(&t, &c)?;
        x += &u * y * u.transpose();
        x = symmetrize(&x);
        residual = lyapunov_residual(a, &x, w);
        if residual <= bound {
            break;
        }
        rhs = -(a * &x + &x * a.transpose() + w);
    }
    if !residual.is_finite() || residual > bound {
        return Err(Error::IllConditioned(format!(
            "Lyapunov residual {residual:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok((
        x,
        SolverReport {
            residual_norm: residual,
            iterations,
            converged: true,
        },
    ))
}

/// Solves `T Y + Y Tᵀ = C` for quasi-upper-triangular `T`, sweeping the
/// columns of `Y` from last to first.
fn quasi_triangular_sylvester(t: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = t.nrows();
    let scale = t.norm().max(1.0);
    let mut y = Matrix::zeros(n, n);
    let mut j = n;
    while j > 0 {
        let col = j - 1;
        let paired = col > 0 && t[(col, col - 1)].abs() > 1e-15 * scale;
        if paired {
            let (j0, j1) = (col - 1, col);
            let mut r0 = c.column(j0).clone_owned();
            let mut r1 = c.column(j1).clone_owned();
            for k in (j1 + 1)..n {
                r0 -= y.column(k) * t[(j0, k)];
                r1 -= y.column(k) * t[(j1, k)];
            }
            let eye = Matrix::identity(n, n);
            let sys = block(&[
                vec![t + &eye * t[(j0, j0)], &eye * t[(j0, j1)]],
                vec![&eye * t[(j1, j0)], t + &eye * t[(j1, j1)]],
            ])?;
            let mut rhs = DVector::zeros(2 * n);
            rhs.rows_mut(0, n).copy_from(&r0);
            rhs.rows_mut(n, n).copy_from(&r1);
            let sol = sys
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::IllConditioned("singular 2x2-block Lyapunov step".into()))?;
            y.column_mut(j0).copy_from(&sol.rows(0, n));
            y.column_mut(j1).copy_from(&sol.rows(n, n));
            j -= 2;
        } else {
            let mut r = c.column(col).clone_owned();
            for k in (col + 1)..n {
                r -= y.column(k) * t[(col, k)];
            }
            let sys = t + Matrix::identity(n, n) * t[(col, col)];
            let sol = sys
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::IllConditioned("singular Lyapunov step".into()))?;
            y.column_mut(col).copy_from(&sol);
            j -= 1;
        }
    }
    Ok(y)
}

/// Direct solve of `(I ⊗ A + A ⊗ I) vec(X) = -vec(W)`. Cost grows as n⁶, so
/// this is only meant for small systems and as a cross-check.
pub fn solve_lyapunov_vectorized(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    ensure_square(a, "Lyapunov A")?;
    let n = a.nrows();
    let eye = identity(n);
    let op = kron(&eye, a) + kron(a, &eye);
    let rhs = DVector::from_column_slice(w.as_slice()) * -1.0;
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned("singular Kronecker Lyapunov operator".into()))?;
    Ok(Matrix::from_column_slice(n, n, sol.as_slice()))
}

pub fn care_residual(a: &Matrix, s: &Matrix, q: &Matrix, x: &Matrix) -> f64 {
    (a.transpose() * x + x * a - x * s * x + q).norm()
}

/// Stabilizing solution of `Aᵀ X + X A − X S X + Q = 0` with default
/// tolerances.
pub fn solve_care(a: &Matrix, s: &Matrix, q: &Matrix) -> Result<(Matrix, SolverReport)> {
    solve_care_with(a, s, q, &Tolerances::default())
}

/// The stable invariant subspace of the Hamiltonian
/// `H = [[A, −S], [−Q, −Aᵀ]]` is extracted with the scaled Newton iteration
/// for the matrix sign function, then polished with Newton–Kleinman steps.
pub fn solve_care_with(
    a: &Matrix,
    s: &Matrix,
    q: &Matrix,
    tol: &Tolerances,
) -> Result<(Matrix, SolverReport)> {
    ensure_square(a, "Riccati A")?;
    let n = a.nrows();
    for (m, name) in [(s, "Riccati S"), (q, "Riccati Q")] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_finite(m, name)?;
        ensure_symmetric(m, 1e-8)?;
    }
    ensure_finite(a, "Riccati A")?;
    let s = symmetrize(s);
    let q = symmetrize(q);

    let h = block(&[
        vec![a.clone(), -s.clone()],
        vec![-q.clone(), -a.transpose()],
    ])?;
    let axis_tol = tol.imag_axis_rel * (1.0 + h.norm());
    let closest = eigenvalues(&h)?
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if closest < axis_tol {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian eigenvalue within {closest:.3e} of the imaginary axis"
        )));
    }

    let (sign, mut iterations) = matrix_sign(&h)?;
    let eye = identity(n);
    let w11 = sign.view((0, 0), (n, n)).clone_owned();
    let w12 = sign.view((0, n), (n, n)).clone_owned();
    let w21 = sign.view((n, 0), (n, n)).clone_owned();
    let w22 = sign.view((n, n), (n, n)).clone_owned();
    let lhs = block(&[vec![w12], vec![w22 + &eye]])?;
    let rhs = -block(&[vec![w11 + &eye], vec![w21]])?;
    let (x0, _) = solve_lsq(&lhs, &rhs)?;
    let mut x = symmetrize(&x0);

    let bound = tol.care_rel * (1.0 + q.norm());
    let mut residual = care_residual(a, &s, &q, &x);
    // Newton–Kleinman: (A − S X)ᵀ X⁺ + X⁺ (A − S X) + X S X + Q = 0.
    for step in 0..8 {
        if step > 0 && residual <= bound * 1e-3 {
            break;
        }
        let closed = a - &s * &x;
        if !is_hurwitz(&closed, 0.0) {
            break;
        }
        let w = &x * &s * &x + &q;
        let Ok((next, _)) = solve_lyapunov(&closed.transpose(), &w) else {
            break;
        };
        let next_residual = care_residual(a, &s, &q, &next);
        iterations += 1;
        if next_residual > residual && residual <= bound {
            break;
        }
        x = next;
        residual = next_residual;
    }

    let closed = a - &s * &x;
    let max_real = max_real_part(&closed)?;
    if max_real >= -tol.hurwitz_margin {
        return Err(Error::NoStabilizingSolution(format!(
            "closed loop A − S X has eigenvalue with real part {max_real:.3e}"
        )));
    }
    if !residual.is_finite() || residual > bound {
        return Err(Error::IllConditioned(format!(
            "Riccati residual {residual:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok((
        x,
        SolverReport {
            residual_norm: residual,
            iterations,
            converged: true,
        },
    ))
}

/// Newton iteration `Z ← (c Z + (c Z)⁻¹) / 2` with determinant scaling.
fn matrix_sign(h: &Matrix) -> Result<(Matrix, usize)> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    for k in 1..=200 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::NoStabilizingSolution("singular Hamiltonian iterate".into()))?;
        let c = if k <= 20 && det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            break;
        }
        if change <= 1e-13 * size {
            return Ok((z, k));
        }
    }
    Err(Error::IllConditioned(
        "matrix sign iteration did not converge".into(),
    ))
}

fn pbh_full_rank(a: &Matrix, other: &Matrix, stack_rows: bool, unstable_only: bool) -> Result<bool> {
    let n = a.nrows();
    let scale = 1.0 + a.norm() + other.norm();
    for lam in eigenvalues(a)? {
        if unstable_only && lam.re < -1e-9 * scale {
            continue;
        }
        let shifted = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
            let v = Complex::new(a[(i, j)], 0.0);
            if i == j {
                v - lam
            } else {
                v
            }
        });
        let other_c = other.map(|v| Complex::new(v, 0.0));
        let test = if stack_rows {
            let mut m = DMatrix::zeros(n + other.nrows(), n);
            m.view_mut((0, 0), (n, n)).copy_from(&shifted);
            m.view_mut((n, 0), other.shape()).copy_from(&other_c);
            m
        } else {
            let mut m = DMatrix::zeros(n, n + other.ncols());
            m.view_mut((0, 0), (n, n)).copy_from(&shifted);
            m.view_mut((0, n), other.shape()).copy_from(&other_c);
            m
        };
        let sv = test.svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-9 * scale).count();
        if rank < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH test: `[A − λI, B]` has full row rank for every `Re λ ≥ 0`.
pub fn is_stabilizable(a: &Matrix, b: &Matrix) -> Result<bool> {
    ensure_square(a, "A")?;
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch("B rows must match A".into()));
    }
    pbh_full_rank(a, b, false, true)
}

/// PBH test: `[A − λI; C]` has full column rank for every `Re λ ≥ 0`.
pub fn is_detectable(c: &Matrix, a: &Matrix) -> Result<bool> {
    ensure_square(a, "A")?;
    if c.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch("C columns must match A".into()));
    }
    pbh_full_rank(a, c, true, true)
}

pub fn is_observable(c: &Matrix, a: &Matrix) -> Result<bool> {
    ensure_square(a, "A")?;
    if c.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch("C columns must match A".into()));
    }
    pbh_full_rank(a, c, true, false)
}
