//! Dense real-matrix numerics shared by every other module.
//!
//! Everything here is a pure function of its inputs. Matrices are
//! `nalgebra::DMatrix<f64>`; symmetric matrices are plain matrices that are
//! checked (and symmetrized) at the boundaries where it matters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// Convergence tolerance and iteration cap for the Riccati doubling iteration.
pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 10_000;

pub fn ensure_square(m: &Matrix, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(
            context,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

pub fn ensure_shape(m: &Matrix, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn ensure_finite(m: &Matrix, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix) -> bool {
    m.is_square() && (m - m.transpose()).norm() <= 1e-10 * (1.0 + m.norm())
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vector {
    let mut ev = symmetrize(m).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    sym_eigenvalues(m)[0]
}

pub fn max_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1]
}

pub fn is_psd(m: &Matrix) -> bool {
    is_symmetric(m) && min_sym_eigenvalue(m) >= -1e-10 * (1.0 + m.norm())
}

pub fn ensure_psd(m: &Matrix, context: &'static str) -> Result<()> {
    ensure_finite(m, context)?;
    ensure_square(m, context)?;
    if is_psd(m) {
        Ok(())
    } else {
        Err(Error::NotPositiveSemiDefinite(context))
    }
}

/// Largest eigenvalue modulus, from the real Schur form so complex pairs are
/// handled.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    ensure_square(m, "spectral_radius")?;
    ensure_finite(m, "spectral_radius")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur = m
        .clone()
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(Error::NotConverged {
            what: "real Schur decomposition",
            iterations: SCHUR_MAX_ITER,
        })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn matrix_power(m: &Matrix, k: usize) -> Matrix {
    let n = m.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `exp(M)` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(m: &Matrix) -> Result<Matrix> {
    ensure_square(m, "matrix_exponential")?;
    ensure_finite(m, "matrix_exponential")?;
    if m.is_empty() {
        return Ok(m.clone());
    }
    let e = m.exp();
    ensure_finite(&e, "matrix_exponential result")?;
    Ok(e)
}

/// Squared Smith iteration for `X = F X Fᵀ + W`; each pass doubles the
/// number of series terms accumulated.
fn smith_doubling(f: &Matrix, w: &Matrix) -> Result<Matrix> {
    let mut x = w.clone();
    let mut fk = f.clone();
    for _ in 0..128 {
        let inc = &fk * &x * fk.transpose();
        x += &inc;
        fk = &fk * &fk;
        let fk_norm = fk.norm();
        if !fk_norm.is_finite() || !x.iter().all(|v| v.is_finite()) {
            break;
        }
        if fk_norm < 1e-18 || inc.norm() <= 1e-17 * (1.0 + x.norm()) && fk_norm < 1e-8 {
            return Ok(x);
        }
    }
    Err(Error::NotConverged {
        what: "discrete Lyapunov doubling",
        iterations: 128,
    })
}

/// Solves `X = F X Fᵀ + W` for stable `F`.
pub fn solve_discrete_lyapunov(f: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = ensure_square(f, "solve_discrete_lyapunov: F")?;
    ensure_shape(w, n, n, "solve_discrete_lyapunov: W")?;
    ensure_finite(f, "solve_discrete_lyapunov: F")?;
    ensure_finite(w, "solve_discrete_lyapunov: W")?;
    if !is_symmetric(w) {
        return Err(Error::NotPositiveSemiDefinite("solve_discrete_lyapunov: W"));
    }
    let rho = spectral_radius(f)?;
    if rho >= 1.0 {
        return Err(Error::Unstable {
            context: "discrete Lyapunov equation",
            radius: rho,
        });
    }
    let w = symmetrize(w);
    let mut x = smith_doubling(f, &w)?;
    let scale = 1.0 + w.norm();
    for _ in 0..3 {
        let residual = &w + f * &x * f.transpose() - &x;
        if residual.norm() <= 1e-14 * scale {
            break;
        }
        x += smith_doubling(f, &symmetrize(&residual))?;
    }
    Ok(symmetrize(&x))
}

/// Stabilizing solution of
/// `P = AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q`
/// via the structure-preserving doubling algorithm.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "solve_dare: A")?;
    if b.nrows() != n {
        return Err(Error::dim("solve_dare: B", format!("{n} rows"), b.nrows()));
    }
    let m = b.ncols();
    ensure_shape(q, n, n, "solve_dare: Q")?;
    ensure_shape(r, m, m, "solve_dare: R")?;
    for (mat, ctx) in [(a, "solve_dare: A"), (b, "solve_dare: B"), (q, "solve_dare: Q"), (r, "solve_dare: R")] {
        ensure_finite(mat, ctx)?;
    }
    ensure_psd(q, "solve_dare: Q")?;
    if !is_symmetric(r) {
        return Err(Error::NotPositiveDefinite("solve_dare: R"));
    }
    let r_chol = nalgebra::Cholesky::new(symmetrize(r))
        .ok_or(Error::NotPositiveDefinite("solve_dare: R"))?;
    let r_inv = r_chol.inverse();

    let ident = Matrix::identity(n, n);
    let mut ak = a.clone();
    let mut g = symmetrize(&(b * &r_inv * b.transpose()));
    let mut h = symmetrize(q);
    let mut converged = false;
    for _ in 0..DARE_MAX_ITER {
        let w = &ident + &g * &h;
        let w_inv = match w.try_inverse() {
            Some(inv) => inv,
            None => break,
        };
        let a_w = &ak * &w_inv;
        let a_next = &a_w * &ak;
        let g_next = symmetrize(&(&g + &a_w * &g * ak.transpose()));
        let h_next = symmetrize(&(&h + ak.transpose() * &h * &w_inv * &ak));
        if !h_next.iter().all(|v| v.is_finite()) || !a_next.iter().all(|v| v.is_finite()) {
            break;
        }
        let delta = (&h_next - &h).norm();
        ak = a_next;
        g = g_next;
        h = h_next;
        if delta <= DARE_TOL * (1.0 + h.norm()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "Riccati doubling iteration",
            iterations: DARE_MAX_ITER,
        });
    }

    let p = h;
    let closed = dare_closed_loop(a, b, r, &p)?;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizable(format!(
            "Riccati solution leaves closed-loop spectral radius {rho}"
        )));
    }
    let residual = dare_residual(a, b, q, r, &p)?;
    if residual > 1e-8 * (1.0 + p.norm()) {
        return Err(Error::NotConverged {
            what: "Riccati residual check",
            iterations: DARE_MAX_ITER,
        });
    }
    Ok(p)
}

/// `A − B (R + BᵀPB)⁻¹ BᵀPA`
pub fn dare_closed_loop(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let s = r + b.transpose() * p * b;
    let rhs = b.transpose() * p * a;
    let gain = s
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
    Ok(a - b * gain)
}

/// Frobenius norm of the Riccati fixed-point residual.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    let s = r + b.transpose() * p * b;
    let bpa = b.transpose() * p * a;
    let sol = s
        .lu()
        .solve(&bpa)
        .ok_or(Error::NotPositiveDefinite("R + BᵀPB"))?;
    let rhs = a.transpose() * p * a - bpa.transpose() * sol + q;
    Ok((rhs - p).norm())
}

/// Symmetric square root `S` with `S Sᵀ = M` for PSD `M` (negative
/// eigenvalues from rounding are clamped to zero).
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    if m.is_empty() {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}
