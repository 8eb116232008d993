//! Multivariate polynomials with complex coefficients, stored densely over all
//! monomials up to a fixed total degree.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::{Error, Result};

/// Default cap on the total degree of stored polynomials.
pub const DEFAULT_MAX_DEGREE: usize = 6;

/// A polynomial in `x_1 .. x_dim`.
///
/// Coefficients are indexed by the graded enumeration of exponent vectors with
/// total degree `<= max_degree`.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    max_degree: usize,
    exps: Vec<Vec<u32>>,
    coeffs: Vec<Complex64>,
}

fn enumerate(dim: usize, max_degree: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, max_degree as u32, &mut Vec::with_capacity(dim), &mut out);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

impl Polynomial {
    pub fn zero(dim: usize, max_degree: usize) -> Self {
        let exps = enumerate(dim, max_degree);
        let coeffs = vec![Complex64::new(0.0, 0.0); exps.len()];
        Self {
            dim,
            max_degree,
            exps,
            coeffs,
        }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Self::zero(dim, DEFAULT_MAX_DEGREE);
        p.coeffs[0] = c;
        p
    }

    /// Build from `(exponents, coefficient)` terms; repeated exponents accumulate.
    pub fn from_terms(
        dim: usize,
        max_degree: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
    ) -> Result<Self> {
        let mut p = Self::zero(dim, max_degree);
        for (e, c) in terms {
            if e.len() != dim {
                return Err(Error::Shape(format!(
                    "monomial {e:?} has {} exponents, expected {dim}",
                    e.len()
                )));
            }
            let deg = e.iter().sum::<u32>() as usize;
            if deg > max_degree {
                return Err(Error::Capacity {
                    degree: deg,
                    capacity: max_degree,
                });
            }
            let idx = p.index_of(&e).expect("enumerated");
            p.coeffs[idx] += c;
        }
        Ok(p)
    }

    /// The coordinate function `x_axis`.
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self::from_terms(dim, DEFAULT_MAX_DEGREE, [(e, Complex64::new(1.0, 0.0))])
            .expect("degree 1 fits")
    }

    fn index_of(&self, e: &[u32]) -> Option<usize> {
        self.exps.iter().position(|x| x.as_slice() == e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Nonzero terms in enumeration order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> + '_ {
        self.exps
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn coefficient(&self, e: &[u32]) -> Complex64 {
        self.index_of(e)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm_sqr() == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms().all(|(e, _)| e.iter().all(|&a| a == 0))
    }

    pub fn total_degree(&self) -> usize {
        self.terms()
            .map(|(e, _)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Highest exponent of `x_axis` among nonzero terms.
    pub fn degree_in(&self, axis: usize) -> usize {
        self.terms().map(|(e, _)| e[axis] as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&a, &xi)| xi.powi(a as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero(self.dim, self.max_degree);
        for (e, c) in self.terms() {
            if e[axis] == 0 {
                continue;
            }
            let mut f = e.to_vec();
            f[axis] -= 1;
            let idx = out.index_of(&f).expect("lower degree");
            out.coeffs[idx] += c * e[axis] as f64;
        }
        out
    }

    pub fn map_coeffs(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = f(*c));
        out
    }

    /// Entrywise real part of the coefficients.
    pub fn re(&self) -> Self {
        self.map_coeffs(|c| Complex64::new(c.re, 0.0))
    }

    pub fn conj(&self) -> Self {
        self.map_coeffs(|c| c.conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map_coeffs(|c| c * s)
    }

    pub fn max_imag(&self) -> f64 {
        self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// Upper bound of `|p(x)|` over the box `lo <= x <= hi` from the
    /// coefficient moduli.
    pub fn bound_on_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.terms()
            .map(|(e, c)| {
                c.norm()
                    * e.iter()
                        .enumerate()
                        .map(|(i, &a)| lo[i].abs().max(hi[i].abs()).powi(a as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Product of two polynomials; the result keeps the larger degree cap or
    /// grows it to fit.
    pub fn mul_poly(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let deg = (self.total_degree() + other.total_degree())
            .max(self.max_degree)
            .max(other.max_degree);
        let mut out = Self::zero(self.dim, deg);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let idx = out.index_of(&e).expect("fits");
                out.coeffs[idx] += ca * cb;
            }
        }
        out
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.dim, other.dim, "polynomial dimensions differ");
        let deg = self.max_degree.max(other.max_degree);
        let mut out = Self::zero(self.dim, deg);
        for (e, c) in out.exps.iter().zip(out.coeffs.iter_mut()) {
            *c = f(self.coefficient(e), other.coefficient(e));
        }
        out
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({}{:+}i)", c.re, c.im)?;
            for (i, &a) in e.iter().enumerate() {
                if a > 0 {
                    write!(f, "·x{}^{}", i + 1, a)?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Self) -> Polynomial {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Self) -> Polynomial {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.map_coeffs(|c| -c)
    }
}

impl Mul<Complex64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Complex64) -> Polynomial {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// −(x1² − 1)(x2² − 1)x3 expanded.
    fn sample() -> Polynomial {
        Polynomial::from_terms(
            3,
            DEFAULT_MAX_DEGREE,
            [
                (vec![2, 2, 1], c(-1.0)),
                (vec![2, 0, 1], c(1.0)),
                (vec![0, 2, 1], c(1.0)),
                (vec![0, 0, 1], c(-1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluates_expanded_product() {
        let p = sample();
        assert_eq!(p.eval(&[0.0, 0.0, 0.0]), c(0.0));
        assert!((p.eval(&[0.0, 0.0, 0.5]) - c(-0.5)).norm() < 1e-15);
        let x = [0.3, -0.7, 0.2];
        let direct = -(x[0] * x[0] - 1.0) * (x[1] * x[1] - 1.0) * x[2];
        assert!((p.eval(&x).re - direct).abs() < 1e-15);
        assert_eq!(p.total_degree(), 5);
        assert_eq!(p.degree_in(0), 2);
        assert_eq!(p.degree_in(2), 1);
    }

    #[test]
    fn degree_above_cap_is_rejected() {
        let err = Polynomial::from_terms(2, 3, [(vec![2, 2], c(1.0))]).unwrap_err();
        assert!(matches!(err, Error::Capacity { degree: 4, capacity: 3 }));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = sample();
        let x = [0.2, 0.4, -0.3];
        for axis in 0..3 {
            let dp = p.derivative(axis).eval(&x);
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
            assert!((dp - fd).norm() < 1e-8);
        }
    }

    #[test]
    fn bound_dominates_values() {
        let p = sample();
        let b = p.bound_on_box(&[-1.0; 3], &[1.0; 3]);
        assert_eq!(b, 4.0);
        for &x in &[[0.0, 0.0, 1.0], [0.5, -0.5, -1.0]] {
            assert!(p.eval(&x).norm() <= b);
        }
    }

    #[test]
    fn product_and_sums() {
        let x1 = Polynomial::coordinate(2, 0);
        let x2 = Polynomial::coordinate(2, 1);
        let p = x1.mul_poly(&x2);
        assert_eq!(p.eval(&[2.0, 3.0]), c(6.0));
        let q = &(&p + &x1) - &x2;
        assert_eq!(q.eval(&[2.0, 3.0]), c(5.0));
        assert_eq!((-&q).eval(&[2.0, 3.0]), c(-5.0));
    }
}
