//! Dense complex helpers shared by the optimizer modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Exact eigensolves are used up to this dimension, power iteration above.
pub const EXACT_EIG_MAX_DIM: usize = 64;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 500;

/// `h · v` for a row channel `h` stored as a column vector of its entries.
#[inline]
pub fn row_dot(h: &CVec, v: &CVec) -> C64 {
    h.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// `a^H v`.
#[inline]
pub fn herm_dot(a: &CVec, v: &CVec) -> C64 {
    a.dotc(v)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= tol))
}

/// Hermitian part `(M + M^H)/2`, removes round-off asymmetry before eigensolves.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max(m: &CMat) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= EXACT_EIG_MAX_DIM {
        SymmetricEigen::new(hermitian_part(m))
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        power_iteration(m)
    }
}

/// Smallest eigenvalue of a Hermitian matrix (exact eigensolve).
pub fn lambda_min(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Dominant eigenvalue of a Hermitian PSD matrix by power iteration.
pub fn power_iteration(m: &CMat) -> f64 {
    let n = m.nrows();
    // deterministic, non-degenerate start
    let mut v = CVec::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
    v /= C64::from(v.norm());
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dotc(&w).re;
        v = w / C64::from(nw);
        if (next - lambda).abs() <= POWER_TOL * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Outer product `u v^H`.
pub fn outer(u: &CVec, v: &CVec) -> CMat {
    u * v.adjoint()
}


/// Inverse-free upper bound of `x^H D x` anchored at `z`:
/// `κ x^H x + 2 Re{x^H (D - κI) z} + z^H (κI - D) z`, valid for `κ >= λ_max(D)`
/// and tight at `x = z`.
pub fn quadratic_majorant(d: &CMat, kappa: f64, x: &CVec, z: &CVec) -> f64 {
    let dz = d * z;
    let cross = x.dotc(&dz) - x.dotc(z) * kappa;
    kappa * x.norm_squared() + 2.0 * cross.re + kappa * z.norm_squared() - z.dotc(&dz).re
}

/// `x^H D x` (real part).
pub fn quadratic_form(d: &CMat, x: &CVec) -> f64 {
    x.dotc(&(d * x)).re
}
