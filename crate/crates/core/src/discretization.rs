//! Zero-order-hold discretization of the reachability constraint.
//!
//! With the input held constant over each step of length `h = T / N`, the
//! terminal state is `x[N] = A_d^N xi + Phi u`, where column `m` of `Phi`
//! is `A_d^{N-1-m} B_d`. Feasible controls satisfy `Phi u = b` with
//! `b = -A_d^N xi`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expm::matrix_exponential;
use crate::plant::{InitialValueProblem, StateSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("step length must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("number of steps must be at least 1")]
    NoSteps,
}

/// `x[m+1] = A_d x[m] + B_d u[m]` on a grid of `steps` intervals of length `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub ad: DMatrix<f64>,
    pub bd: DVector<f64>,
    pub h: f64,
    pub steps: usize,
}

impl DiscreteSystem {
    pub fn dim(&self) -> usize {
        self.ad.nrows()
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }
}

/// Equality/box data of the discretized feasible set
/// `{u : Phi u = b, |u_m| <= u_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    pub system: DiscreteSystem,
    pub xi: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub b: DVector<f64>,
    pub u_max: f64,
    /// Euclidean norm of each row of `phi`; a conditioning diagnostic.
    pub row_scale: DVector<f64>,
}

impl DiscreteProblem {
    pub fn steps(&self) -> usize {
        self.phi.ncols()
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn h(&self) -> f64 {
        self.system.h
    }

    /// Ratio of the largest to the smallest row norm of `phi`.
    pub fn row_scale_ratio(&self) -> f64 {
        let max = self.row_scale.max();
        let min = self.row_scale.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// `A_d^N xi + Phi u`, the terminal state reached under `u`.
    pub fn terminal_state(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.phi * u - &self.b
    }

    /// Same problem with `phi` and `b` multiplied by `factor`; the feasible
    /// set is unchanged for any nonzero factor.
    pub fn scaled(&self, factor: f64) -> DiscreteProblem {
        let mut out = self.clone();
        out.phi *= factor;
        out.b *= factor;
        out.row_scale *= factor.abs();
        out
    }
}

/// Exact ZOH pair from the exponential of the augmented matrix
/// `[[A, B], [0, 0]] h`, whose top blocks are `(A_d, B_d)`. Works for
/// singular `A`.
pub fn zoh_discretize(ss: &StateSpace, h: f64) -> Result<DiscreteSystem, DiscretizationError> {
    zoh_with_steps(ss, h, 1)
}

fn zoh_with_steps(
    ss: &StateSpace,
    h: f64,
    steps: usize,
) -> Result<DiscreteSystem, DiscretizationError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DiscretizationError::BadStep(h));
    }
    if steps == 0 {
        return Err(DiscretizationError::NoSteps);
    }
    let n = ss.dim();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ss.a() * h));
    aug.view_mut((0, n), (n, 1)).copy_from(&(ss.b() * h));
    let e = matrix_exponential(&aug)?;
    Ok(DiscreteSystem {
        ad: e.view((0, 0), (n, n)).into_owned(),
        bd: e.view((0, n), (n, 1)).column(0).into_owned(),
        h,
        steps,
    })
}

/// Discretize `ivp` on `steps` equal intervals and assemble `(Phi, b)`.
pub fn build_problem(
    ivp: &InitialValueProblem,
    steps: usize,
) -> Result<DiscreteProblem, DiscretizationError> {
    if steps == 0 {
        return Err(DiscretizationError::NoSteps);
    }
    let h = ivp.horizon / steps as f64;
    let system = zoh_with_steps(&ivp.ss, h, steps)?;
    let n = system.dim();

    let mut phi = DMatrix::zeros(n, steps);
    let mut col = system.bd.clone();
    for m in (0..steps).rev() {
        phi.set_column(m, &col);
        if m > 0 {
            col = &system.ad * col;
        }
    }

    let mut free = ivp.xi.clone();
    for _ in 0..steps {
        free = &system.ad * free;
    }
    let b = -free;

    let row_scale = DVector::from_iterator(n, phi.row_iter().map(|r| r.norm()));
    Ok(DiscreteProblem { system, xi: ivp.xi.clone(), phi, b, u_max: ivp.u_max, row_scale })
}
