//! Forward simulation of the sampled system under a piecewise-constant input.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::discretization::{zoh_discretize, DiscreteSystem, DiscretizationError};
use crate::plant::StateSpace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("control has {got} samples, system expects {expected}")]
    ControlLength { expected: usize, got: usize },
    #[error("initial state has {got} entries, system has dimension {expected}")]
    StateLength { expected: usize, got: usize },
}

/// States at the grid points `t_m = m h`, `m = 0..=N`, and the input held on
/// each interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row `m` is `x[m]`.
    pub states: DMatrix<f64>,
    pub control: DVector<f64>,
    /// `||x[N]||_2`.
    pub terminal_residual: f64,
}

impl Trajectory {
    pub fn terminal_state(&self) -> DVector<f64> {
        self.states.row(self.states.nrows() - 1).transpose()
    }

    /// `||x[m]||_2` for every grid point.
    pub fn state_norms(&self) -> Vec<f64> {
        self.states.row_iter().map(|r| r.norm()).collect()
    }
}

pub fn simulate(
    sys: &DiscreteSystem,
    xi: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Trajectory, TrajectoryError> {
    let n = sys.dim();
    if xi.len() != n {
        return Err(TrajectoryError::StateLength { expected: n, got: xi.len() });
    }
    if u.len() != sys.steps {
        return Err(TrajectoryError::ControlLength { expected: sys.steps, got: u.len() });
    }
    let steps = sys.steps;
    let mut states = DMatrix::zeros(steps + 1, n);
    states.set_row(0, &xi.transpose());
    let mut x = xi.clone();
    for (m, &um) in u.iter().enumerate() {
        x = &sys.ad * &x + &sys.bd * um;
        states.set_row(m + 1, &x.transpose());
    }
    let times = (0..=steps).map(|m| m as f64 * sys.h).collect();
    Ok(Trajectory { times, states, control: u.clone(), terminal_residual: x.norm() })
}

/// Terminal state when each input sample is held over `substeps` exact
/// sub-intervals of the original step. Agreement with the coarse recursion
/// checks the sampled model against the continuous plant.
pub fn refined_terminal_state(
    ss: &StateSpace,
    xi: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    substeps: usize,
) -> Result<DVector<f64>, DiscretizationError> {
    if substeps == 0 {
        return Err(DiscretizationError::NoSteps);
    }
    let fine = zoh_discretize(ss, h / substeps as f64)?;
    let mut x = xi.clone();
    for &um in u.iter() {
        for _ in 0..substeps {
            x = &fine.ad * &x + &fine.bd * um;
        }
    }
    Ok(x)
}
