//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants (Higham 2005).

use nalgebra::{ComplexField, DMatrix};

use crate::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn norm1<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.clone().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, s: f64) -> DMatrix<T> {
    a.map(|z| z * T::from_real(s))
}

fn low_order<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, b: &[f64]) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = scaled(&DMatrix::identity(n, n), b[1]);
    let mut v = scaled(&DMatrix::identity(n, n), b[0]);
    let mut p = DMatrix::<T>::identity(n, n);
    for j in (2..b.len()).step_by(2) {
        p = &p * &a2;
        v += scaled(&p, b[j]);
        if j + 1 < b.len() {
            u += scaled(&p, b[j + 1]);
        }
    }
    (a * u, v)
}

fn pade13<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.nrows();
    let b = &B13;
    let id = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]));
    let u = a * (inner_u + scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]) + scaled(&id, b[1]));
    let inner_v = &a6 * (scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]));
    let v = inner_v + scaled(&a6, b[6]) + scaled(&a4, b[4]) + scaled(&a2, b[2]) + scaled(&id, b[0]);
    (u, v)
}

fn solve<T: ComplexField<RealField = f64>>(u: DMatrix<T>, v: DMatrix<T>) -> Result<DMatrix<T>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::numerical("singular Padé denominator"))
}

/// `e^A`.
pub fn expm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(Error::Shape(format!("expm of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|z| !z.clone().is_finite()) {
        return Err(Error::numerical("non-finite entry in matrix exponential input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let nrm = norm1(a);
    for (deg, theta) in THETA {
        if nrm <= theta {
            let b: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = low_order(a, b);
            return finite(solve(u, v)?);
        }
    }
    let s = (nrm / THETA_13).log2().ceil().max(0.0) as i32;
    let a_s = scaled(a, 2f64.powi(-s));
    let (u, v) = pade13(&a_s);
    let mut x = solve(u, v)?;
    for _ in 0..s {
        x = &x * &x;
    }
    finite(x)
}

fn finite<T: ComplexField<RealField = f64>>(x: DMatrix<T>) -> Result<DMatrix<T>> {
    if x.iter().all(|z| z.clone().is_finite()) {
        Ok(x)
    } else {
        Err(Error::numerical("matrix exponential overflowed"))
    }
}
