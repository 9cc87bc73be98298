//! Brute-force reference computations shared by the integration tests and
//! the acceptance suite. None of them reuse the closed forms under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use handsoff::discretization::{build_problem, DiscreteProblem};
use handsoff::plant::{InitialValueProblem, StateSpace};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizer of a convex function on `[lo, hi]` by golden-section search.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// `argmin k1 |z| + k2 z^2 + (z - v)^2 / 2 + q z^2 / 2` for a scalar.
fn scalar_prox(v: f64, k1: f64, k2: f64, q: f64) -> f64 {
    let f = |z: f64| k1 * z.abs() + k2 * z * z + 0.5 * (z - v).powi(2) + 0.5 * q * z * z;
    let r = v.abs() + 1.0;
    golden_min(f, -r, r, 1e-12)
}

pub fn oracle_prox_l1(v: &[f64], k: f64) -> Vec<f64> {
    v.iter().map(|&x| scalar_prox(x, k, 0.0, 0.0)).collect()
}

pub fn oracle_prox_en(v: &[f64], k1: f64, k2: f64) -> Vec<f64> {
    v.iter().map(|&x| scalar_prox(x, k1, k2, 0.0)).collect()
}

pub fn clot_objective(z: &[f64], v: &[f64], k1: f64, k2: f64) -> f64 {
    let l1: f64 = z.iter().map(|x| x.abs()).sum();
    let l2 = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    k1 * l1 + k2 * l2 + 0.5 * d
}

/// Minimizer of `k1 ||z||_1 + k2 ||z||_2 + ||z - v||^2 / 2`, using
/// `k2 ||z|| = min_{eta > 0} ||z||^2 / (2 eta) + k2^2 eta / 2`: for fixed
/// `eta` the problem separates into scalar problems, and the partial minimum
/// is convex in `eta`, so both levels are golden-section searches.
pub fn oracle_prox_clot(v: &[f64], k1: f64, k2: f64) -> Vec<f64> {
    if k2 == 0.0 {
        return oracle_prox_l1(v, k1);
    }
    let inner = |eta: f64| -> Vec<f64> { v.iter().map(|&x| scalar_prox(x, k1, 0.0, 1.0 / eta)).collect() };
    let value = |eta: f64| {
        let z = inner(eta);
        let sq: f64 = z.iter().map(|x| x * x).sum();
        let l1: f64 = z.iter().map(|x| x.abs()).sum();
        let d: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        k1 * l1 + sq / (2.0 * eta) + k2 * k2 * eta / 2.0 + 0.5 * d
    };
    // the optimal eta equals ||z|| / k2 <= ||v|| / k2
    let top = v.iter().map(|x| x * x).sum::<f64>().sqrt() / k2 + 1.0;
    let eta = golden_min(value, 0.0, top, 1e-12);
    let z = if eta > 0.0 { inner(eta) } else { vec![0.0; v.len()] };
    let zero = vec![0.0; v.len()];
    if clot_objective(&zero, v, k1, k2) <= clot_objective(&z, v, k1, k2) {
        zero
    } else {
        z
    }
}

/// Discretized problem for `dx/dt = a x + u`.
pub fn scalar_problem(a: f64, xi: f64, horizon: f64, steps: usize, u_max: f64) -> DiscreteProblem {
    let ss = StateSpace::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, 1.0)).unwrap();
    let ivp = InitialValueProblem::new(ss, DVector::from_element(1, xi), horizon, u_max).unwrap();
    build_problem(&ivp, steps).unwrap()
}

/// Minimum of a convex `cost` over `{|u_m| <= U, phi . u = b}` for a single
/// constraint row, by shrinking grid search in the coordinates other than
/// the one with the largest `|phi_k|`, which is solved from the constraint.
pub fn brute_force_min(problem: &DiscreteProblem, cost: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(problem.dim(), 1, "brute force handles one constraint row");
    let n = problem.steps();
    let bound = problem.u_max;
    let phi: Vec<f64> = problem.phi.row(0).iter().copied().collect();
    let b = problem.b[0];
    let k = (0..n).max_by(|&i, &j| phi[i].abs().partial_cmp(&phi[j].abs()).unwrap()).unwrap();
    let free: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let dims = free.len();
    let per_dim: usize = match dims {
        0 => 1,
        1 => 401,
        2 => 101,
        3 => 31,
        4 => 15,
        _ => 9,
    };

    let complete = |w: &[f64]| -> Option<Vec<f64>> {
        let mut u = vec![0.0; n];
        let mut rest = b;
        for (i, &m) in free.iter().enumerate() {
            u[m] = w[i];
            rest -= phi[m] * w[i];
        }
        let uk = rest / phi[k];
        if uk.abs() > bound * (1.0 + 1e-12) {
            return None;
        }
        u[k] = uk.clamp(-bound, bound);
        Some(u)
    };

    let mut center = vec![0.0; dims];
    let mut radius = bound;
    let mut best = f64::INFINITY;
    for _ in 0..200 {
        let mut improved_center = center.clone();
        let mut idx = vec![0usize; dims];
        loop {
            let w: Vec<f64> = (0..dims)
                .map(|i| {
                    let t = if per_dim == 1 { 0.0 } else { idx[i] as f64 / (per_dim - 1) as f64 * 2.0 - 1.0 };
                    (center[i] + t * radius).clamp(-bound, bound)
                })
                .collect();
            if let Some(u) = complete(&w) {
                let c = cost(&u);
                if c < best {
                    best = c;
                    improved_center = w;
                }
            }
            // odometer over the grid
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        center = improved_center;
        radius *= 0.7;
        if radius < 1e-10 * bound {
            break;
        }
    }
    best
}
