//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree selection follows the Higham (2005) thresholds on the 1-norm: the
//! lowest degree in {3, 5, 7, 9, 13} whose theta bound covers `||M||_1` is
//! used directly, otherwise `M` is scaled by `2^-s` so that the degree-13
//! approximant applies and the result is squared `s` times.

use nalgebra::DMatrix;

use crate::discretization::DiscretizationError;

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120., 60., 12., 1.],
        5 => &[30240., 15120., 3360., 420., 30., 1.],
        7 => &[17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.],
        9 => &[
            17643225600.,
            8821612800.,
            2075673600.,
            302702400.,
            30270240.,
            2162160.,
            110880.,
            3960.,
            90.,
            1.,
        ],
        13 => &[
            64764752532480000.,
            32382376266240000.,
            7771770303897600.,
            1187353796428800.,
            129060195264000.,
            10559470521600.,
            670442572800.,
            33522128640.,
            1323241920.,
            40840800.,
            960960.,
            16380.,
            182.,
            1.,
        ],
        _ => unreachable!("unsupported Padé degree {m}"),
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M)` for a square real matrix.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>, DiscretizationError> {
    if !m.is_square() {
        return Err(DiscretizationError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DiscretizationError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = norm1(m);
    for &(deg, theta) in &THETA[..4] {
        if norm <= theta {
            return Ok(pade(m, deg));
        }
    }
    let theta13 = THETA[4].1;
    let s = if norm > theta13 { (norm / theta13).log2().ceil() as i32 } else { 0 };
    let scaled = m * 2f64.powi(-s);
    let mut e = pade(&scaled, 13);
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

/// Diagonal `[deg/deg]` Padé approximant `(V - U)^{-1} (V + U)`, where `U`
/// collects the odd and `V` the even terms of the numerator.
fn pade(m: &DMatrix<f64>, deg: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let c = pade_coefficients(deg);
    let ident = DMatrix::<f64>::identity(n, n);
    let m2 = m * m;

    // even powers I, M^2, M^4, ...
    let mut even = vec![ident.clone()];
    while even.len() <= deg / 2 {
        let next = even.last().unwrap() * &m2;
        even.push(next);
    }

    let mut u_inner = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for (k, p) in even.iter().enumerate() {
        v += p * c[2 * k];
        if 2 * k < deg {
            u_inner += p * c[2 * k + 1];
        }
    }
    let u = m * u_inner;
    let num = &v + &u;
    let den = &v - &u;
    den.lu().solve(&num).expect("Padé denominator is nonsingular within theta bounds")
}
