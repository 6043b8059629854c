//! Orthogonal projector onto the null space of the stacked user channels.

use nalgebra::Cholesky;

use crate::error::{IsacError, Result};
use crate::linalg::{hermitian_part, is_hermitian, CMat, CVec};

/// Relative singular-value threshold below which `H` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NullProjector {
    /// `I - H^H (H H^H)^{-1} H`.
    pub matrix: CMat,
    pub source_rank: usize,
}

impl NullProjector {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        &self.matrix * v
    }
}

/// Builds `P⊥ = I - H^H (H H^H)^{-1} H` through a Cholesky factorization of the
/// K x K Gram matrix.
pub fn null_projector(channels: &CMat) -> Result<NullProjector> {
    let (k, n) = channels.shape();
    if k > n {
        return Err(IsacError::Domain(format!("{k} users exceed {n} transmit antennas")));
    }
    let sv = channels.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > RANK_TOL) {
        return Err(IsacError::RankDeficient { ratio });
    }
    let gram = channels * channels.adjoint();
    let chol = Cholesky::new(hermitian_part(&gram)).ok_or(IsacError::RankDeficient { ratio })?;
    let solved = chol.solve(channels);
    let p = CMat::identity(n, n) - channels.adjoint() * solved;
    Ok(NullProjector { matrix: hermitian_part(&p), source_rank: k })
}

/// `n_eff = P⊥ n`.
pub fn effective_noise(projector: &NullProjector, raw: &CVec) -> Result<CVec> {
    if raw.len() != projector.dim() {
        return Err(IsacError::Domain(format!(
            "AN vector has length {}, projector is {}x{}",
            raw.len(),
            projector.dim(),
            projector.dim()
        )));
    }
    Ok(projector.apply(raw))
}

/// `P⊥ R (P⊥)^H`.
pub fn effective_covariance(projector: &NullProjector, raw_cov: &CMat) -> Result<CMat> {
    if raw_cov.shape() != projector.matrix.shape() {
        return Err(IsacError::Domain("covariance dimension mismatch".into()));
    }
    let scale = raw_cov.norm().max(1.0);
    if !is_hermitian(raw_cov, 1e-10 * scale) {
        return Err(IsacError::Domain("covariance is not Hermitian".into()));
    }
    let p = &projector.matrix;
    Ok(hermitian_part(&(p * raw_cov * p.adjoint())))
}
