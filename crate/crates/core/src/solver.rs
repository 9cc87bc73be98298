//! Consensus ADMM for the discretized sparse control problems
//!
//! ```text
//! minimize    w1 ||u||_1 + w2 r(u)
//! subject to  Phi u = b,  |u_m| <= u_max
//! ```
//!
//! with `r = 0` (L1), `r = ||.||_2^2` (elastic net) or `r = ||.||_2` (CLOT).
//! Three copies of `u` carry the regularizer, the box and the affine
//! constraint; each is updated by its exact prox/projection and the copies are
//! reconciled by averaging.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::DiscreteProblem;
use crate::prox::{
    project_box_in_place, prox_clot_in_place, prox_en_in_place, prox_l1_in_place,
    AffineProjector, ProjectionError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lasso,
    En,
    Clot,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lasso, Method::En, Method::Clot];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::En => "en",
            Method::Clot => "clot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" | "l1" => Ok(Method::Lasso),
            "en" | "elastic-net" | "elasticnet" => Ok(Method::En),
            "clot" => Ok(Method::Clot),
            other => Err(format!("unknown method '{other}' (expected lasso, en or clot)")),
        }
    }
}

/// Discrete cost weights for one method on a grid of step `h`.
///
/// * L1: `h ||u||_1`
/// * EN: `h ||u||_1 + lambda h ||u||_2^2`
/// * CLOT: `h ||u||_1 + lambda sqrt(h) ||u||_2`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub method: Method,
    pub lambda: f64,
    pub h: f64,
}

impl Regularizer {
    pub fn new(method: Method, lambda: f64, h: f64) -> Result<Self, SolveError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SolveError::Invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SolveError::Invalid(format!("step must be positive, got {h}")));
        }
        Ok(Regularizer { method, lambda, h })
    }

    pub fn l1_weight(&self) -> f64 {
        self.h
    }

    pub fn l2_weight(&self) -> f64 {
        match self.method {
            Method::Lasso => 0.0,
            Method::En => self.lambda * self.h,
            Method::Clot => self.lambda * self.h.sqrt(),
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let l1: f64 = u.iter().map(|x| x.abs()).sum();
        let sq: f64 = u.iter().map(|x| x * x).sum();
        let l2_term = match self.method {
            Method::Lasso => 0.0,
            Method::En => sq,
            Method::Clot => sq.sqrt(),
        };
        self.l1_weight() * l1 + self.l2_weight() * l2_term
    }

    /// Prox of `self / rho`, in place.
    fn prox_in_place(&self, v: &mut [f64], rho: f64) {
        let k1 = self.l1_weight() / rho;
        let k2 = self.l2_weight() / rho;
        match self.method {
            Method::Lasso => prox_l1_in_place(v, k1),
            Method::En => prox_en_in_place(v, k1, k2),
            Method::Clot => prox_clot_in_place(v, k1, k2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_feas: f64,
    pub over_relaxation: f64,
    /// Iterations between convergence checks.
    pub check_every: usize,
    /// Rebalance `rho` from the primal/dual residual ratio.
    pub adaptive_rho: bool,
    pub adapt_every: usize,
    /// Try to snap the l1 problem onto an exact vertex, accepted only with a
    /// duality-gap certificate.
    pub polish: bool,
    pub polish_every: usize,
    /// Relative duality gap accepted by the polish step.
    pub eps_gap: f64,
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rho: 1.0,
            max_iter: 200_000,
            eps_abs: 1e-8,
            eps_feas: 1e-9,
            over_relaxation: 1.0,
            check_every: 25,
            adaptive_rho: true,
            adapt_every: 100,
            polish: true,
            polish_every: 500,
            eps_gap: 1e-9,
            warm_start: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(SolveError::Invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_abs > 0.0 && self.eps_feas > 0.0 && self.eps_gap > 0.0) {
            return Err(SolveError::Invalid("tolerances must be positive".into()));
        }
        if !(1.0..=1.8).contains(&self.over_relaxation) {
            return Err(SolveError::Invalid(format!(
                "over-relaxation must lie in [1, 1.8], got {}",
                self.over_relaxation
            )));
        }
        if self.max_iter == 0 || self.check_every == 0 || self.adapt_every == 0 || self.polish_every == 0 {
            return Err(SolveError::Invalid("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub terminal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `||Phi u - b||_2` of the returned control.
    pub terminal_residual: f64,
    pub converged: bool,
    /// Certified primal-dual gap when the polish step produced `u`.
    pub duality_gap: Option<f64>,
    pub history: Vec<ResidualSample>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("problem is infeasible: box and terminal constraint do not intersect (gap {gap:.3e} after {iterations} iterations)")]
    Infeasible { iterations: usize, gap: f64, history: Vec<ResidualSample> },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("invalid solver input: {0}")]
    Invalid(String),
}

/// Working buffers of one ADMM run.
struct Iterates {
    u: Vec<f64>,
    u_prev: Vec<f64>,
    z: [Vec<f64>; 3],
    y: [Vec<f64>; 3],
}

impl Iterates {
    fn new(start: Vec<f64>) -> Self {
        let n = start.len();
        Iterates {
            u_prev: start.clone(),
            u: start,
            z: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            y: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    fn primal_residual(&self) -> f64 {
        self.z
            .iter()
            .map(|z| z.iter().zip(&self.u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn step_norm(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.u_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn rescale_duals(&mut self, factor: f64) {
        for y in self.y.iter_mut() {
            y.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub fn solve(
    problem: &DiscreteProblem,
    reg: &Regularizer,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    opts.validate()?;
    let projector = AffineProjector::new(&problem.phi, &problem.b)?;
    let n = problem.steps();
    let bound = problem.u_max;
    let alpha = opts.over_relaxation;
    let feas_tol = opts.eps_feas * (1.0 + problem.b.norm());
    let res_tol = opts.eps_abs * (n as f64).sqrt();

    let start = match &opts.warm_start {
        Some(w) if w.len() == n => w.as_slice().to_vec(),
        Some(w) => {
            return Err(SolveError::Invalid(format!(
                "warm start has {} entries, expected {n}",
                w.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut it = Iterates::new(start);
    let mut rho = opts.rho;
    let mut history = Vec::new();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut iter = 0;

    while iter < opts.max_iter {
        iter += 1;
        let Iterates { u, u_prev, z, y } = &mut it;
        u_prev.copy_from_slice(u);

        for k in 0..3 {
            let zk = &mut z[k];
            for ((zi, ui), yi) in zk.iter_mut().zip(u.iter()).zip(y[k].iter()) {
                *zi = ui - yi;
            }
            match k {
                0 => reg.prox_in_place(zk, rho),
                1 => project_box_in_place(zk, bound),
                _ => projector.project_in_place(zk),
            }
            if alpha != 1.0 {
                for (zi, pi) in zk.iter_mut().zip(u_prev.iter()) {
                    *zi = alpha * *zi + (1.0 - alpha) * pi;
                }
            }
        }

        for m in 0..n {
            u[m] = (z[0][m] + y[0][m] + z[1][m] + y[1][m] + z[2][m] + y[2][m]) / 3.0;
        }
        for k in 0..3 {
            for ((yi, zi), ui) in y[k].iter_mut().zip(z[k].iter()).zip(u.iter()) {
                *yi += zi - ui;
            }
        }

        if iter % opts.check_every != 0 && iter != opts.max_iter {
            continue;
        }

        primal = it.primal_residual();
        dual = rho * 3f64.sqrt() * it.step_norm();
        let candidate = finalize(&it.z[1], &projector, bound);
        let terminal = terminal_residual(problem, &candidate);
        history.push(ResidualSample { iteration: iter, primal, dual, terminal });

        if primal.max(dual) <= res_tol && terminal <= feas_tol {
            return Ok(Solution {
                objective: reg.value(&candidate),
                u: DVector::from_vec(candidate),
                iterations: iter,
                primal_residual: primal,
                dual_residual: dual,
                terminal_residual: terminal,
                converged: true,
                duality_gap: None,
                history,
            });
        }

        if let Some(gap) = infeasibility_certificate(&it.z[1], &projector, bound) {
            return Err(SolveError::Infeasible { iterations: iter, gap, history });
        }

        if opts.polish && reg.method == Method::Lasso && iter % opts.polish_every == 0 {
            let target = opts.eps_gap * (1.0 + reg.value(&candidate).abs());
            let polished = [1e-3, 1e-5, 1e-7].iter().find_map(|&tol| {
                polish_l1(problem, reg.h, &it.z[1], &it.y[2], rho, tol * bound, feas_tol, target)
            });
            if let Some((u, gap)) = polished {
                let terminal = terminal_residual(problem, u.as_slice());
                return Ok(Solution {
                    objective: reg.value(u.as_slice()),
                    u,
                    iterations: iter,
                    primal_residual: primal,
                    dual_residual: dual,
                    terminal_residual: terminal,
                    converged: true,
                    duality_gap: Some(gap),
                    history,
                });
            }
        }

        if opts.adaptive_rho && iter % opts.adapt_every == 0 && primal > 0.0 && dual > 0.0 {
            // residual balancing; scaled duals follow rho inversely
            let ratio = (primal / dual).sqrt();
            if !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(opts.rho * 1e-6, opts.rho * 1e6);
                it.rescale_duals(rho / new_rho);
                rho = new_rho;
            }
        }
    }

    // last chance: refine the box copy toward the closest pair of the two
    // constraint sets and look for a separating hyperplane
    let mut p = it.z[1].clone();
    for _ in 0..opts.max_iter.min(20_000) / 50 {
        for _ in 0..50 {
            projector.project_in_place(&mut p);
            project_box_in_place(&mut p, bound);
        }
        if let Some(gap) = infeasibility_certificate(&p, &projector, bound) {
            return Err(SolveError::Infeasible { iterations: iter, gap, history });
        }
    }

    let candidate = finalize(&it.z[1], &projector, bound);
    let terminal = terminal_residual(problem, &candidate);
    Ok(Solution {
        objective: reg.value(&candidate),
        u: DVector::from_vec(candidate),
        iterations: iter,
        primal_residual: primal,
        dual_residual: dual,
        terminal_residual: terminal,
        converged: false,
        duality_gap: None,
        history,
    })
}

fn terminal_residual(problem: &DiscreteProblem, u: &[f64]) -> f64 {
    let n = problem.dim();
    (0..n)
        .map(|i| {
            let row = problem.phi.row(i);
            let v: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() - problem.b[i];
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Affine correction of the box copy followed by a clamp, so the reported
/// control always respects the bound exactly.
fn finalize(box_copy: &[f64], projector: &AffineProjector, bound: f64) -> Vec<f64> {
    let mut u = box_copy.to_vec();
    projector.project_in_place(&mut u);
    project_box_in_place(&mut u, bound);
    u
}

/// `b.y - bound * sum_m max(0, |(Phi^T y)_m| - h)`, the l1 dual function.
fn dual_value(problem: &DiscreteProblem, h: f64, y: &DVector<f64>) -> f64 {
    let c = problem.phi.tr_mul(y);
    problem.b.dot(y) - problem.u_max * c.iter().map(|v| (v.abs() - h).max(0.0)).sum::<f64>()
}

/// Local improvement of a dual estimate. A dual optimum is a vertex where
/// `|(Phi^T y)_m| = h` for `n` independent samples; the samples closest to
/// that condition at `y` are tried as bases, a few rounds in a row.
fn refine_dual(problem: &DiscreteProblem, h: f64, start: DVector<f64>) -> (DVector<f64>, f64) {
    let n = problem.dim();
    let mut y = start;
    let mut value = dual_value(problem, h, &y);
    let pool = (n + 2).min(problem.steps());
    for _ in 0..4 {
        let c = problem.phi.tr_mul(&y);
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| (c[a].abs() - h).abs().total_cmp(&(c[b].abs() - h).abs()));
        order.truncate(pool);
        let mut improved = false;
        for subset in combinations(&order, n) {
            let basis = problem.phi.select_columns(&subset).transpose();
            let rhs = DVector::from_iterator(n, subset.iter().map(|&m| h * c[m].signum()));
            let Some(cand) = basis.lu().solve(&rhs) else { continue };
            let v = dual_value(problem, h, &cand);
            if v > value {
                value = v;
                y = cand;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (y, value)
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Separating-hyperplane test between the box and the affine set.
///
/// With `p` in the box and `q` its projection onto `{Phi z = b}`, the
/// direction `g = q - p` lies in the row space of `Phi`, so `g.z = g.q` for
/// every affine point while `g.z <= bound ||g||_1` on the box. A positive
/// `g.q - bound ||g||_1` therefore proves the sets are disjoint. Returns the
/// certified gap `(g.q - bound ||g||_1) / ||g||_2`, a lower bound on their
/// distance.
fn infeasibility_certificate(p: &[f64], projector: &AffineProjector, bound: f64) -> Option<f64> {
    let mut q = p.to_vec();
    projector.project_in_place(&mut q);
    let mut gq = 0.0;
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    let mut scale = 0.0f64;
    for (qi, pi) in q.iter().zip(p) {
        let g = qi - pi;
        gq += g * qi;
        g1 += g.abs();
        g2 += g * g;
        scale = scale.max(qi.abs());
    }
    let g2 = g2.sqrt();
    if g2 == 0.0 {
        return None;
    }
    let margin = gq - bound * g1;
    // rounding in g.q is of order eps * ||g||_1 * max|q|
    let noise = 1e3 * f64::EPSILON * g1 * (scale + bound);
    (margin > noise).then(|| margin / g2)
}

/// Vertex polish for `min h ||u||_1` over the box and the affine set.
///
/// A dual point `y` is estimated from the affine copy's multiplier and
/// sharpened by [`refine_dual`]; its value bounds the optimum from below.
/// Two primal candidates are tried against it: the iterate with its interior
/// entries corrected onto `Phi u = b`, and the control read off `y` by
/// complementary slackness. A candidate is returned only when it is
/// feasible and its objective is within `target` of the dual bound.
#[allow(clippy::too_many_arguments)]
fn polish_l1(
    problem: &DiscreteProblem,
    h: f64,
    iterate: &[f64],
    affine_dual: &[f64],
    rho: f64,
    tol: f64,
    feas_tol: f64,
    target: f64,
) -> Option<(DVector<f64>, f64)> {
    let bound = problem.u_max;
    let phi = &problem.phi;

    let mut fixed = DVector::zeros(iterate.len());
    let mut free = Vec::new();
    for (m, &v) in iterate.iter().enumerate() {
        if v.abs() >= bound - tol {
            fixed[m] = bound.copysign(v);
        } else if v.abs() > tol {
            free.push(m);
        }
    }
    let signs: Vec<f64> = free.iter().map(|&m| iterate[m].signum()).collect();
    let from_iterate = complete_free(problem, fixed, &free, &signs, Some(iterate), feas_tol);

    let base = phi
        .transpose()
        .svd(true, true)
        .solve(&(DVector::from_column_slice(affine_dual) * rho), 1e-14)
        .ok()?;
    let (mut y, mut dual) = (base.clone(), f64::NEG_INFINITY);
    for sign in [1.0, -1.0] {
        let mut start = &base * sign;
        if !free.is_empty() {
            let phi_ft = phi.select_columns(&free).transpose();
            let want = DVector::from_iterator(free.len(), signs.iter().map(|s| h * s));
            if let Ok(fix) = phi_ft.clone().svd(true, true).solve(&(want - &phi_ft * &start), 1e-14) {
                start += fix;
            }
        }
        let (cand, value) = refine_dual(problem, h, start);
        if value > dual {
            y = cand;
            dual = value;
        }
    }

    // complementary slackness: |c_m| > h saturates, |c_m| < h vanishes
    let c = phi.tr_mul(&y);
    let mut fixed = DVector::zeros(c.len());
    let mut kinks = Vec::new();
    for (m, &cm) in c.iter().enumerate() {
        let excess = cm.abs() - h;
        if excess.abs() <= 1e-9 * h {
            kinks.push(m);
        } else if excess > 0.0 {
            fixed[m] = bound.copysign(cm);
        }
    }
    let kink_signs: Vec<f64> = kinks.iter().map(|&m| c[m].signum()).collect();
    let from_dual = complete_free(problem, fixed, &kinks, &kink_signs, None, feas_tol);

    [from_iterate, from_dual]
        .into_iter()
        .flatten()
        .map(|u| {
            let primal = h * u.iter().map(|v| v.abs()).sum::<f64>();
            (u, primal - dual)
        })
        .filter(|(_, gap)| *gap <= target)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(u, gap)| (u, gap.max(0.0)))
}

/// Fill the `free` entries of `fixed` so that `Phi u = b`, moving the
/// starting values (zero without `start`) by the smallest correction.
/// Fails if an entry leaves the box or flips against its sign.
fn complete_free(
    problem: &DiscreteProblem,
    mut u: DVector<f64>,
    free: &[usize],
    signs: &[f64],
    start: Option<&[f64]>,
    feas_tol: f64,
) -> Option<DVector<f64>> {
    let bound = problem.u_max;
    let phi = &problem.phi;
    if !free.is_empty() {
        let phi_f = phi.select_columns(free);
        let w = DVector::from_iterator(free.len(), free.iter().map(|&m| start.map_or(0.0, |s| s[m])));
        let rhs = &problem.b - phi * &u - &phi_f * &w;
        let step = phi_f.svd(true, true).solve(&rhs, 1e-14).ok()?;
        for (k, &m) in free.iter().enumerate() {
            let v = w[k] + step[k];
            if v.abs() > bound * (1.0 + 1e-12) || v * signs[k] < -1e-12 * bound {
                return None;
            }
            u[m] = v.clamp(-bound, bound);
        }
    }
    ((phi * &u - &problem.b).norm() <= feas_tol).then_some(u)
}
