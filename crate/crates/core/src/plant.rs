//! SISO plants described by poles and zeros, and their state-space realizations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two roots are treated as a conjugate pair when they agree to this
/// tolerance (scaled by `1 + |r|`).
const CONJUGATE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("complex root {re}{im:+}j has no conjugate partner")]
    UnpairedRoot { re: f64, im: f64 },
    #[error("plant has no poles; the state space would be empty")]
    NoPoles,
    #[error("plant is not strictly proper: {zeros} zeros for {poles} poles")]
    NotStrictlyProper { zeros: usize, poles: usize },
    #[error("non-finite root {0}")]
    NonFinite(Complex64),
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
}

/// Transfer function `P(s) = gain * prod(s - z_i) / prod(s - p_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub poles: Vec<Complex64>,
    #[serde(default)]
    pub zeros: Vec<Complex64>,
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl PlantSpec {
    pub fn new(poles: Vec<Complex64>, zeros: Vec<Complex64>) -> Self {
        PlantSpec { poles, zeros, gain: 1.0 }
    }

    /// Number of states of any minimal-order realization.
    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.poles.is_empty() {
            return Err(PlantError::NoPoles);
        }
        if self.zeros.len() >= self.poles.len() {
            return Err(PlantError::NotStrictlyProper {
                zeros: self.zeros.len(),
                poles: self.poles.len(),
            });
        }
        if !self.gain.is_finite() {
            return Err(PlantError::Invalid(format!("gain {} is not finite", self.gain)));
        }
        poly_from_roots(&self.poles)?;
        poly_from_roots(&self.zeros)?;
        Ok(())
    }

    pub fn denominator(&self) -> Result<Vec<f64>, PlantError> {
        poly_from_roots(&self.poles)
    }

    pub fn numerator(&self) -> Result<Vec<f64>, PlantError> {
        Ok(poly_from_roots(&self.zeros)?
            .into_iter()
            .map(|c| c * self.gain)
            .collect())
    }
}

/// Continuous-time single-input pair `dx/dt = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PlantError> {
        if !a.is_square() {
            return Err(PlantError::Dimension(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(PlantError::Dimension("empty state space".into()));
        }
        if b.len() != a.nrows() {
            return Err(PlantError::Dimension(format!(
                "B has {} rows but A is {}x{}",
                b.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(PlantError::Invalid("non-finite entry in (A, B)".into()));
        }
        Ok(StateSpace { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Drive `x(0) = xi` to the origin at time `horizon` with `|u| <= u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialValueProblem {
    pub ss: StateSpace,
    pub xi: DVector<f64>,
    pub horizon: f64,
    pub u_max: f64,
}

impl InitialValueProblem {
    pub fn new(
        ss: StateSpace,
        xi: DVector<f64>,
        horizon: f64,
        u_max: f64,
    ) -> Result<Self, PlantError> {
        if xi.len() != ss.dim() {
            return Err(PlantError::Dimension(format!(
                "initial state has {} entries, plant has {} states",
                xi.len(),
                ss.dim()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PlantError::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(PlantError::Invalid(format!("control bound must be positive, got {u_max}")));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Invalid("non-finite initial state".into()));
        }
        Ok(InitialValueProblem { ss, xi, horizon, u_max })
    }
}

/// Monic real coefficients of `prod(s - r_i)`, highest power first.
///
/// Complex roots are matched with their conjugates and expanded as real
/// quadratics `s^2 - 2 Re(r) s + |r|^2`, so no imaginary round-off enters
/// the product.
pub fn poly_from_roots(roots: &[Complex64]) -> Result<Vec<f64>, PlantError> {
    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(roots.len());
    let mut pending: Vec<Complex64> = Vec::new();

    for &r in roots {
        if !(r.re.is_finite() && r.im.is_finite()) {
            return Err(PlantError::NonFinite(r));
        }
        if r.im.abs() <= CONJUGATE_TOL * (1.0 + r.norm()) {
            factors.push(vec![1.0, -r.re]);
            continue;
        }
        // pair with the closest outstanding conjugate, if any
        let partner = pending
            .iter()
            .enumerate()
            .filter(|(_, p)| (**p - r.conj()).norm() <= CONJUGATE_TOL * (1.0 + r.norm()))
            .min_by(|(_, p), (_, q)| {
                (**p - r.conj()).norm().total_cmp(&(**q - r.conj()).norm())
            })
            .map(|(i, _)| i);
        match partner {
            Some(i) => {
                let p = pending.swap_remove(i);
                let re = 0.5 * (r.re + p.re);
                let im = 0.5 * (r.im.abs() + p.im.abs());
                factors.push(vec![1.0, -2.0 * re, re * re + im * im]);
            }
            None => pending.push(r),
        }
    }
    if let Some(r) = pending.first() {
        return Err(PlantError::UnpairedRoot { re: r.re, im: r.im });
    }

    Ok(factors.iter().fold(vec![1.0], |acc, f| poly_mul(&acc, f)))
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

/// Controllable canonical realization of the plant denominator.
///
/// First row of `A` holds `-a_1 .. -a_n`, the subdiagonal is one, and
/// `B = e_1`. Zeros only shape the output map, which is not modelled, so two
/// plants with equal poles have identical realizations.
pub fn realize(spec: &PlantSpec) -> Result<StateSpace, PlantError> {
    spec.validate()?;
    let den = spec.denominator()?;
    let n = den.len() - 1;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = -den[j + 1];
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    StateSpace::new(a, b)
}

/// State coordinates used for a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    /// First-row companion form; zeros do not enter `(A, B)`.
    #[default]
    Companion,
    /// Companion form followed by power-of-two diagonal balancing of the
    /// system matrix `[[A, B], [C, 0]]` over the state indices, the way
    /// numerical toolboxes condition realizations built from factored
    /// transfer functions. Zeros enter through `C`.
    Balanced,
}

pub fn realize_with(spec: &PlantSpec, form: Realization) -> Result<StateSpace, PlantError> {
    let ss = realize(spec)?;
    if form == Realization::Companion {
        return Ok(ss);
    }
    let n = ss.dim();
    let num = spec.numerator()?;
    let mut sys = DMatrix::zeros(n + 1, n + 1);
    sys.view_mut((0, 0), (n, n)).copy_from(ss.a());
    sys.view_mut((0, n), (n, 1)).copy_from(ss.b());
    // numerator coefficients, lowest power in the last state
    for (k, c) in num.iter().rev().enumerate() {
        sys[(n, n - 1 - k)] = *c;
    }
    balance_states(&mut sys, n);
    StateSpace::new(sys.view((0, 0), (n, n)).into_owned(), sys.view((0, n), (n, 1)).column(0).into_owned())
}

/// Diagonal similarity `D^-1 S D` on the first `k` indices with power-of-two
/// entries, equalizing row and column 2-norms (diagonal included).
fn balance_states(s: &mut DMatrix<f64>, k: usize) {
    const RADIX: f64 = 2.0;
    let size = s.nrows();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..k {
            let mut c = s.column(i).norm();
            let mut r = s.row(i).norm();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                f *= RADIX;
                c *= RADIX;
                r /= RADIX;
            }
            while c / RADIX >= r {
                f /= RADIX;
                c /= RADIX;
                r *= RADIX;
            }
            if c + r < 0.95 * total {
                changed = true;
                for j in 0..size {
                    s[(i, j)] /= f;
                    s[(j, i)] *= f;
                }
            }
        }
    }
}

/// Krylov matrix `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(ss: &StateSpace) -> DMatrix<f64> {
    let n = ss.dim();
    let mut k = DMatrix::zeros(n, n);
    let mut col = ss.b().clone();
    for j in 0..n {
        k.set_column(j, &col);
        col = ss.a() * col;
    }
    k
}

/// Numerical rank of the controllability matrix, tolerance `n * eps * sigma_max`.
pub fn controllability_rank(ss: &StateSpace) -> usize {
    numerical_rank(&controllability_matrix(ss))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Controllable with nonsingular `A`.
pub fn is_normal(ss: &StateSpace) -> bool {
    let n = ss.dim();
    controllability_rank(ss) == n && numerical_rank(ss.a()) == n
}
