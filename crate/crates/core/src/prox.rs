//! Closed-form proximal maps and Euclidean projections used by the splitting
//! solver.
//!
//! `prox_g(v) = argmin_z g(z) + 1/2 ||z - v||^2`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("constraint matrix has rank {rank} < {rows} rows; the plant is not controllable on this grid")]
    RankDeficient { rank: usize, rows: usize },
    #[error("constraint matrix is {rows}x{cols} but right-hand side has {rhs} entries")]
    Dimension { rows: usize, cols: usize, rhs: usize },
}

#[inline]
fn soft(x: f64, kappa: f64) -> f64 {
    let mag = x.abs() - kappa;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

pub(crate) fn prox_l1_in_place(v: &mut [f64], kappa: f64) {
    for x in v.iter_mut() {
        *x = soft(*x, kappa);
    }
}

pub(crate) fn prox_en_in_place(v: &mut [f64], kappa1: f64, kappa2: f64) {
    let shrink = 1.0 / (1.0 + 2.0 * kappa2);
    for x in v.iter_mut() {
        *x = soft(*x, kappa1) * shrink;
    }
}

pub(crate) fn prox_clot_in_place(v: &mut [f64], kappa1: f64, kappa2: f64) {
    prox_l1_in_place(v, kappa1);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > kappa2 { 1.0 - kappa2 / norm } else { 0.0 };
    for x in v.iter_mut() {
        *x *= scale;
    }
}

pub(crate) fn project_box_in_place(v: &mut [f64], bound: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(-bound, bound);
    }
}

/// Soft threshold, the prox of `kappa ||.||_1`. Inputs exactly at the kink
/// map to zero.
pub fn prox_l1(v: &DVector<f64>, kappa: f64) -> DVector<f64> {
    let mut out = v.clone();
    prox_l1_in_place(out.as_mut_slice(), kappa);
    out
}

/// Prox of `kappa1 ||.||_1 + kappa2 ||.||_2^2`.
pub fn prox_en(v: &DVector<f64>, kappa1: f64, kappa2: f64) -> DVector<f64> {
    let mut out = v.clone();
    prox_en_in_place(out.as_mut_slice(), kappa1, kappa2);
    out
}

/// Prox of `kappa1 ||.||_1 + kappa2 ||.||_2`: soft threshold followed by
/// block shrinkage of the whole vector.
pub fn prox_clot(v: &DVector<f64>, kappa1: f64, kappa2: f64) -> DVector<f64> {
    let mut out = v.clone();
    prox_clot_in_place(out.as_mut_slice(), kappa1, kappa2);
    out
}

/// Componentwise clamp to `[-bound, bound]`.
pub fn project_box(v: &DVector<f64>, bound: f64) -> DVector<f64> {
    let mut out = v.clone();
    project_box_in_place(out.as_mut_slice(), bound);
    out
}

/// Projection onto `{z : Phi z = b}` for a wide, full-row-rank `Phi`.
///
/// Stores a thin orthonormal basis `Q` of the row space (from the QR
/// factorization `Phi^T = Q R`) and `c = R^{-T} b`, so that the constraint
/// reads `Q^T z = c` and the projection is `v - Q (Q^T v - c)`.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    q: DMatrix<f64>,
    c: DVector<f64>,
    rank: usize,
}

impl AffineProjector {
    pub fn new(phi: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self, ProjectionError> {
        let (rows, cols) = phi.shape();
        if b.len() != rows {
            return Err(ProjectionError::Dimension { rows, cols, rhs: b.len() });
        }
        if rows > cols {
            return Err(ProjectionError::RankDeficient { rank: cols, rows });
        }
        let qr = phi.transpose().qr();
        let r = qr.r();
        let sv = r.singular_values();
        let smax = sv.max();
        let tol = rows.max(cols) as f64 * f64::EPSILON * smax;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < rows || smax == 0.0 {
            return Err(ProjectionError::RankDeficient { rank, rows });
        }
        let c = r
            .transpose()
            .solve_lower_triangular(b)
            .ok_or(ProjectionError::RankDeficient { rank, rows })?;
        Ok(AffineProjector { q: qr.q(), c, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.project_in_place(out.as_mut_slice());
        out
    }

    pub(crate) fn project_in_place(&self, v: &mut [f64]) {
        let n = self.q.ncols();
        let mut coef = [0.0f64; 16];
        let mut heap;
        let w: &mut [f64] = if n <= coef.len() {
            &mut coef[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for (j, wj) in w.iter_mut().enumerate() {
            let col = self.q.column(j);
            let dot: f64 = col.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            *wj = dot - self.c[j];
        }
        for (j, &wj) in w.iter().enumerate() {
            let col = self.q.column(j);
            for (x, q) in v.iter_mut().zip(col.iter()) {
                *x -= q * wj;
            }
        }
    }
}

/// Projection onto `{z : Phi z = b}`. Factorizes on every call; hold an
/// [`AffineProjector`] to reuse the factorization.
pub fn project_affine(
    v: &DVector<f64>,
    phi: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>, ProjectionError> {
    Ok(AffineProjector::new(phi, b)?.project(v))
}
