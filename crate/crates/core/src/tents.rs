//! Piecewise polynomials, tent test functions and exact tensor quadrature.

use nalgebra::DMatrix;

use crate::coefficient::{BoxDomain, CellField};
use crate::poly::Polynomial;
use crate::quadrature::{self, DEFAULT_ORDER};
use crate::{Error, Result, C64};

const MERGE_TOL: f64 = 1e-14;
const CONTINUITY_TOL: f64 = 1e-12;

/// Polynomial in one variable, ascending coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly1(pub Vec<f64>);

impl Poly1 {
    pub fn constant(c: f64) -> Self {
        Poly1(vec![c])
    }

    /// `a + b t`
    pub fn linear(a: f64, b: f64) -> Self {
        Poly1(vec![a, b])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        Poly1(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly1::default();
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly1(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.0.len().max(other.0.len());
        Poly1(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Poly1(self.0.iter().map(|c| c * s).collect())
    }

    /// `t -> p((t - x0) / delta)`
    pub fn affine(&self, x0: f64, delta: f64) -> Self {
        let inner = Poly1::linear(-x0 / delta, 1.0 / delta);
        self.0
            .iter()
            .rev()
            .fold(Poly1::default(), |acc, &c| acc.mul(&inner).add(&Poly1::constant(c)))
    }
}

/// Compactly supported piecewise polynomial on `[breaks[0], breaks[n]]`, zero
/// outside. Piece `i` lives on `[breaks[i], breaks[i+1]]` and is written in
/// the global variable.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PiecewisePoly1D {
    breaks: Vec<f64>,
    pieces: Vec<Poly1>,
}

impl PiecewisePoly1D {
    /// Checked constructor: breakpoints increasing, continuity at interior
    /// breakpoints.
    pub fn new(breaks: Vec<f64>, pieces: Vec<Poly1>) -> Result<Self> {
        let f = Self::unchecked(breaks, pieces)?;
        for i in 1..f.pieces.len() {
            let t = f.breaks[i];
            let (l, r) = (f.pieces[i - 1].eval(t), f.pieces[i].eval(t));
            if (l - r).abs() > CONTINUITY_TOL * (1.0 + l.abs().max(r.abs())) {
                return Err(Error::Argument(format!(
                    "jump {l} -> {r} at breakpoint {t}"
                )));
            }
        }
        Ok(f)
    }

    fn unchecked(breaks: Vec<f64>, pieces: Vec<Poly1>) -> Result<Self> {
        if breaks.is_empty() && pieces.is_empty() {
            return Ok(Self::default());
        }
        if breaks.len() != pieces.len() + 1 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument(format!(
                "{} breakpoints for {} pieces, or not increasing",
                breaks.len(),
                pieces.len()
            )));
        }
        Ok(Self { breaks, pieces })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// A single piece `p` on `[a, b]`.
    pub fn on_interval(a: f64, b: f64, p: Poly1) -> Result<Self> {
        Self::unchecked(vec![a, b], vec![p])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Poly1] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.0.iter().all(|&c| c == 0.0))
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        Some((*self.breaks.first()?, *self.breaks.last()?))
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(Poly1::degree).max().unwrap_or(0)
    }

    fn piece_at(&self, t: f64) -> Option<&Poly1> {
        let (a, b) = self.support()?;
        if t < a || t > b {
            return None;
        }
        let i = self.breaks.partition_point(|&x| x <= t).saturating_sub(1);
        self.pieces.get(i.min(self.pieces.len() - 1))
    }

    /// Value at `t`; at a breakpoint the right piece is used.
    pub fn eval(&self, t: f64) -> f64 {
        self.piece_at(t).map_or(0.0, |p| p.eval(t))
    }

    /// Piecewise derivative (generally discontinuous).
    pub fn derivative(&self) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(Poly1::derivative).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(s)).collect(),
        }
    }

    /// `t -> f((t - x0) / delta)` for `delta > 0`.
    pub fn affine(&self, x0: f64, delta: f64) -> Self {
        Self {
            breaks: self.breaks.iter().map(|b| x0 + delta * b).collect(),
            pieces: self.pieces.iter().map(|p| p.affine(x0, delta)).collect(),
        }
    }

    /// Pointwise product on the intersection of the supports.
    pub fn product(&self, other: &Self) -> Self {
        let (Some((a1, b1)), Some((a2, b2))) = (self.support(), other.support()) else {
            return Self::zero();
        };
        let (a, b) = (a1.max(a2), b1.min(b2));
        if b - a <= MERGE_TOL * (1.0 + a.abs().max(b.abs())) {
            return Self::zero();
        }
        let breaks = merged_breaks(&[&self.breaks, &other.breaks], a, b);
        let pieces = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let p = self.piece_at(mid).expect("inside support");
                let q = other.piece_at(mid).expect("inside support");
                p.mul(q)
            })
            .collect();
        Self { breaks, pieces }
    }

    /// Sum of two functions over the union of the supports.
    pub fn sum(&self, other: &Self) -> Self {
        let (a, b) = match (self.support(), other.support()) {
            (None, _) => return other.clone(),
            (_, None) => return self.clone(),
            (Some((a1, b1)), Some((a2, b2))) => (a1.min(a2), b1.max(b2)),
        };
        let breaks = merged_breaks(&[&self.breaks, &other.breaks], a, b);
        let pieces = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let zero = Poly1::default();
                self.piece_at(mid)
                    .unwrap_or(&zero)
                    .add(other.piece_at(mid).unwrap_or(&zero))
            })
            .collect();
        Self { breaks, pieces }
    }

    /// `∫ f(t) t^power dt` over `[lo, hi]` by Gauss–Legendre per piece.
    pub fn integrate_monomial(&self, power: u32, lo: f64, hi: f64, order: usize) -> Result<f64> {
        let capacity = 2 * order - 1;
        let rule = quadrature::rule(order);
        let mut total = 0.0;
        for (w, p) in self.breaks.windows(2).zip(&self.pieces) {
            let (a, b) = (w[0].max(lo), w[1].min(hi));
            if a >= b {
                continue;
            }
            let degree = p.degree() + power as usize;
            if degree > capacity {
                return Err(Error::Capacity { degree, capacity });
            }
            total += rule.integrate(a, b, |t| p.eval(t) * t.powi(power as i32));
        }
        Ok(total)
    }

    pub fn integral(&self) -> f64 {
        self.integrate_monomial(0, f64::NEG_INFINITY, f64::INFINITY, DEFAULT_ORDER)
            .expect("piecewise degree within capacity")
    }
}

fn merged_breaks(lists: &[&[f64]], a: f64, b: f64) -> Vec<f64> {
    let mut all: Vec<f64> = lists
        .iter()
        .flat_map(|l| l.iter().copied())
        .filter(|&t| t > a && t < b)
        .chain([a, b])
        .collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match out.last() {
            Some(&last) if (t - last).abs() <= MERGE_TOL * (1.0 + t.abs()) => {}
            _ => out.push(t),
        }
    }
    // keep the exact endpoint
    if let Some(last) = out.last_mut() {
        *last = b;
    }
    out
}

/// `η(t) = (1 - |t|)^+`
pub fn hat() -> PiecewisePoly1D {
    PiecewisePoly1D::new(
        vec![-1.0, 0.0, 1.0],
        vec![Poly1::linear(1.0, 1.0), Poly1::linear(1.0, -1.0)],
    )
    .expect("continuous")
}

/// `ρ(t) = η(2(t - 1/2)) + η(2(t + 1/2))`
pub fn double_hat() -> PiecewisePoly1D {
    PiecewisePoly1D::new(
        vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        vec![
            Poly1::linear(2.0, 2.0),
            Poly1::linear(0.0, -2.0),
            Poly1::linear(0.0, 2.0),
            Poly1::linear(2.0, -2.0),
        ],
    )
    .expect("continuous")
}

/// `η(2(t - c))`, a half-width tent centred at `c`.
pub fn half_hat(c: f64) -> PiecewisePoly1D {
    hat().affine(c, 0.5)
}

/// `scale · Π_i factor_i((x_i - center_i) / delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTestFunction {
    pub scale: f64,
    pub factors: Vec<PiecewisePoly1D>,
    pub center: Vec<f64>,
    pub delta: f64,
}

impl TensorTestFunction {
    pub fn new(scale: f64, factors: Vec<PiecewisePoly1D>) -> Self {
        let d = factors.len();
        Self {
            scale,
            factors,
            center: vec![0.0; d],
            delta: 1.0,
        }
    }

    /// `x -> scale · Π_i factor_i(x_i)` with each factor given directly in the
    /// global variable (no dilation).
    pub fn global(scale: f64, factors: Vec<PiecewisePoly1D>) -> Self {
        Self::new(scale, factors)
    }

    pub fn zero(d: usize) -> Self {
        Self::new(0.0, vec![hat(); d])
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0 || self.factors.iter().any(PiecewisePoly1D::is_zero)
    }

    /// `x -> self((x - x0) / delta)`.
    pub fn dilate(&self, x0: &[f64], delta: f64) -> Self {
        Self {
            scale: self.scale,
            factors: self.factors.clone(),
            center: self
                .center
                .iter()
                .zip(x0)
                .map(|(c, x)| x + delta * c)
                .collect(),
            delta: self.delta * delta,
        }
    }

    /// Factor `i` as a function of `x_i`, differentiated if `deriv`, without
    /// the overall scale.
    pub fn factor_in_x(&self, i: usize, deriv: bool) -> PiecewisePoly1D {
        let f = if deriv {
            self.factors[i].derivative().scale(1.0 / self.delta)
        } else {
            self.factors[i].clone()
        };
        f.affine(self.center[i], self.delta)
    }

    pub fn support(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                let (a, b) = self.factors[i].support().unwrap_or((0.0, 0.0));
                (self.center[i] + self.delta * a, self.center[i] + self.delta * b)
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.scale
            * self
                .factors
                .iter()
                .enumerate()
                .map(|(i, f)| f.eval((x[i] - self.center[i]) / self.delta))
                .product::<f64>()
    }

    /// `∂_k` at `x`.
    pub fn partial(&self, k: usize, x: &[f64]) -> f64 {
        self.scale / self.delta
            * self
                .factors
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let t = (x[i] - self.center[i]) / self.delta;
                    if i == k {
                        f.derivative().eval(t)
                    } else {
                        f.eval(t)
                    }
                })
                .product::<f64>()
    }
}

/// One factor of an integrand: a test function, optionally differentiated
/// along one axis.
#[derive(Clone, Copy, Debug)]
pub struct Factor<'a> {
    pub f: &'a TensorTestFunction,
    pub deriv: Option<usize>,
}

impl<'a> Factor<'a> {
    pub fn value(f: &'a TensorTestFunction) -> Self {
        Self { f, deriv: None }
    }

    pub fn partial(f: &'a TensorTestFunction, k: usize) -> Self {
        Self { f, deriv: Some(k) }
    }
}

fn axis_product(factors: &[Factor], axis: usize) -> PiecewisePoly1D {
    let mut it = factors
        .iter()
        .map(|fa| fa.f.factor_in_x(axis, fa.deriv == Some(axis)));
    let first = it.next().expect("at least one factor");
    it.fold(first, |acc, g| acc.product(&g))
}

fn check_factors(factors: &[Factor]) -> Result<usize> {
    let d = factors
        .first()
        .ok_or_else(|| Error::Argument("empty integrand".into()))?
        .f
        .dim();
    if factors.iter().any(|fa| fa.f.dim() != d) {
        return Err(Error::Shape("test functions differ in dimension".into()));
    }
    Ok(d)
}

/// `∫ Π factors · p` over `region` (all of `R^d` when `None`), exact for
/// piecewise-polynomial integrands up to the rule capacity.
pub fn exact_integral(
    factors: &[Factor],
    coefficient: Option<&Polynomial>,
    region: Option<&BoxDomain>,
) -> Result<C64> {
    let d = check_factors(factors)?;
    let scale: f64 = factors.iter().map(|fa| fa.f.scale).product();
    if scale == 0.0 {
        return Ok(C64::default());
    }
    let axes: Vec<PiecewisePoly1D> = (0..d).map(|i| axis_product(factors, i)).collect();
    let bounds = |i: usize| match region {
        Some(r) => (r.lo[i], r.hi[i]),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let one = Polynomial::constant(d, C64::new(1.0, 0.0));
    let p = coefficient.unwrap_or(&one);
    if p.dim() != d {
        return Err(Error::Shape(format!(
            "coefficient in {} variables for {d}-dimensional test functions",
            p.dim()
        )));
    }
    let mut cache: Vec<Vec<Option<f64>>> = vec![Vec::new(); d];
    let mut total = C64::default();
    for (e, c) in p.terms() {
        let mut prod = 1.0;
        for i in 0..d {
            let k = e[i] as usize;
            if cache[i].len() <= k {
                cache[i].resize(k + 1, None);
            }
            let v = match cache[i][k] {
                Some(v) => v,
                None => {
                    let (lo, hi) = bounds(i);
                    let v = axes[i].integrate_monomial(e[i], lo, hi, DEFAULT_ORDER)?;
                    cache[i][k] = Some(v);
                    v
                }
            };
            prod *= v;
            if prod == 0.0 {
                break;
            }
        }
        total += c * prod;
    }
    Ok(total * scale)
}

/// `∫ Π factors · C` for a piecewise-constant scalar field given on cells of
/// `domain` (entry `(i, j)` of each cell matrix).
pub fn exact_integral_cells(
    factors: &[Factor],
    field: &CellField,
    entry: (usize, usize),
    domain: &BoxDomain,
) -> Result<C64> {
    let d = check_factors(factors)?;
    let scale: f64 = factors.iter().map(|fa| fa.f.scale).product();
    if scale == 0.0 {
        return Ok(C64::default());
    }
    let per_axis: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let axis = axis_product(factors, i);
            let n = field.cells[i];
            let h = domain.side(i) / n as f64;
            (0..n)
                .map(|c| {
                    let lo = domain.lo[i] + c as f64 * h;
                    axis.integrate_monomial(0, lo, lo + h, DEFAULT_ORDER)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut total = C64::default();
    for (idx, v) in field.values.iter().enumerate() {
        let mut rest = idx;
        let mut w = 1.0;
        for (i, &n) in field.cells.iter().enumerate() {
            w *= per_axis[i][rest % n];
            rest /= n;
        }
        if w != 0.0 {
            total += v[entry] * w;
        }
    }
    Ok(total * scale)
}

/// `G_kl = ∫ (∂_l φ)(∂_k ψ)`.
pub fn interaction_matrix(phi: &TensorTestFunction, psi: &TensorTestFunction) -> Result<DMatrix<f64>> {
    let d = phi.dim();
    let mut g = DMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            g[(k, l)] = exact_integral(&[Factor::partial(phi, l), Factor::partial(psi, k)], None, None)?.re;
        }
    }
    Ok(g)
}

/// Pair `(φ, ψ)` of nonnegative tents whose interaction matrix has `τ` in
/// positions `(k̃, l̃)` and `(l̃, k̃)` and zeros elsewhere.
#[derive(Clone, Debug)]
pub struct TestPair {
    pub phi: TensorTestFunction,
    pub psi: TensorTestFunction,
    pub tau: f64,
    pub ktilde: usize,
    pub ltilde: usize,
    pub case_id: u8,
}

impl TestPair {
    pub fn expected_interaction(&self) -> DMatrix<f64> {
        contract_matrix(self.tau, self.ktilde, self.ltilde, self.phi.dim())
    }

    pub fn dilate(&self, x0: &[f64], delta: f64) -> (TensorTestFunction, TensorTestFunction) {
        (self.phi.dilate(x0, delta), self.psi.dilate(x0, delta))
    }
}

pub fn contract_matrix(tau: f64, kt: usize, lt: usize, d: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    g[(kt, lt)] = tau;
    g[(lt, kt)] = tau;
    g
}

/// Build the tent pair for `(τ, k̃, l̃)` in dimension `d` (0-based indices)
/// and verify its interaction matrix by exact quadrature.
pub fn build_test_pair(tau: f64, kt: usize, lt: usize, d: usize) -> Result<TestPair> {
    if d == 0 || kt >= d || lt >= d {
        return Err(Error::Argument(format!(
            "indices ({kt}, {lt}) invalid for d = {d}"
        )));
    }
    if !tau.is_finite() {
        return Err(Error::Argument(format!("tau = {tau} is not finite")));
    }
    let (eta, rho) = (hat(), double_hat());
    let p2 = |e: i32| 2f64.powi(e);
    let de = d as i32;
    let a = tau.abs();
    let (case_id, phi, psi) = if tau == 0.0 {
        (5, TensorTestFunction::zero(d), TensorTestFunction::zero(d))
    } else if tau > 0.0 && kt == lt {
        let psi = (0..d).map(|k| if k == lt { eta.clone() } else { rho.clone() }).collect();
        (1, TensorTestFunction::new(p2(de - 2) * a, vec![eta.clone(); d]), TensorTestFunction::new(1.0, psi))
    } else if tau > 0.0 {
        let psi = (0..d)
            .map(|k| match k {
                _ if k == kt => half_hat(-0.5),
                _ if k == lt => half_hat(0.5),
                _ => rho.clone(),
            })
            .collect();
        (2, TensorTestFunction::new(p2(de) * a, vec![eta.clone(); d]), TensorTestFunction::new(1.0, psi))
    } else if kt == lt {
        let phi = (0..d).map(|k| if k == lt { half_hat(-0.5) } else { eta.clone() }).collect();
        let psi = (0..d).map(|k| if k == lt { half_hat(0.0) } else { rho.clone() }).collect();
        (3, TensorTestFunction::new(p2(de - 2) * a, phi), TensorTestFunction::new(1.0, psi))
    } else {
        let psi = (0..d)
            .map(|k| if k == kt || k == lt { half_hat(0.5) } else { rho.clone() })
            .collect();
        (4, TensorTestFunction::new(p2(de) * a, vec![eta.clone(); d]), TensorTestFunction::new(1.0, psi))
    };
    let pair = TestPair {
        phi,
        psi,
        tau,
        ktilde: kt,
        ltilde: lt,
        case_id,
    };
    let g = interaction_matrix(&pair.phi, &pair.psi)?;
    let err = (&g - pair.expected_interaction()).amax();
    if err > 1e-12 * (1.0 + a) {
        return Err(Error::ContractViolation(format!(
            "case {case_id} interaction matrix deviates by {err:e}"
        )));
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integral_of(f: &PiecewisePoly1D) -> f64 {
        f.integral()
    }

    #[test]
    fn hat_values_and_integrals() {
        let (eta, rho) = (hat(), double_hat());
        assert_eq!(eta.eval(0.0), 1.0);
        assert_eq!(eta.eval(1.0), 0.0);
        assert_eq!(eta.eval(-1.0), 0.0);
        assert_eq!(rho.eval(0.5), 1.0);
        assert_eq!(rho.eval(-0.5), 1.0);
        assert_eq!(rho.eval(0.0), 0.0);
        assert!((integral_of(&eta) - 1.0).abs() < 1e-15);
        assert!((integral_of(&eta.product(&rho)) - 0.5).abs() < 1e-15);
        assert!((integral_of(&eta.derivative().product(&eta.derivative())) - 2.0).abs() < 1e-15);
        assert!((integral_of(&eta.product(&eta)) - 2.0 / 3.0).abs() < 1e-15);
        for v in [
            eta.derivative().product(&rho),
            eta.product(&rho.derivative()),
            eta.derivative().product(&rho.derivative()),
        ] {
            assert!(integral_of(&v).abs() < 1e-15);
        }
    }

    #[test]
    fn discontinuous_pieces_are_rejected() {
        let r = PiecewisePoly1D::new(
            vec![0.0, 1.0, 2.0],
            vec![Poly1::constant(1.0), Poly1::constant(2.0)],
        );
        assert!(r.is_err());
        assert!(PiecewisePoly1D::new(vec![1.0, 0.0], vec![Poly1::constant(1.0)]).is_err());
    }

    #[test]
    fn sum_reassembles_double_hat() {
        let s = half_hat(0.5).sum(&half_hat(-0.5));
        for i in 0..=40 {
            let t = -1.0 + i as f64 / 20.0;
            assert!((s.eval(t) - double_hat().eval(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn interaction_examples() {
        let p = build_test_pair(1.0, 0, 1, 2).unwrap();
        assert_eq!(p.case_id, 2);
        let g = interaction_matrix(&p.phi, &p.psi).unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).amax() < 1e-14);

        let p = build_test_pair(2.0, 0, 0, 2).unwrap();
        let g = interaction_matrix(&p.phi, &p.psi).unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).amax() < 1e-14);

        let p = build_test_pair(0.0, 1, 0, 3).unwrap();
        assert_eq!(p.case_id, 5);
        assert!(p.phi.is_zero() && p.psi.is_zero());
        assert_eq!(interaction_matrix(&p.phi, &p.psi).unwrap().amax(), 0.0);
    }

    #[test]
    fn all_cases_meet_contract() {
        for d in 1..=4 {
            for kt in 0..d {
                for lt in 0..d {
                    for tau in [-3.0, -1.0, 0.0, 1.0, 2.0, 7.5] {
                        let p = build_test_pair(tau, kt, lt, d).unwrap();
                        let g = interaction_matrix(&p.phi, &p.psi).unwrap();
                        assert!((g - p.expected_interaction()).amax() < 1e-12);
                    }
                }
            }
        }
        assert!(build_test_pair(1.0, 2, 0, 2).is_err());
    }

    #[test]
    fn dilation_scales_interaction() {
        let p = build_test_pair(-1.0, 0, 2, 3).unwrap();
        let delta = 0.125;
        let (phi, psi) = p.dilate(&[0.3, -0.2, 0.1], delta);
        let g = interaction_matrix(&phi, &psi).unwrap();
        let expected = p.expected_interaction() * delta;
        assert!((g - expected).amax() < 1e-14);
    }

    #[test]
    fn example_integrals() {
        let dom = BoxDomain::cube(3, -1.0, 1.0);
        let c12 = Polynomial::from_terms(
            3,
            6,
            [
                (vec![2, 2, 1], C64::new(-1.0, 0.0)),
                (vec![2, 0, 1], C64::new(1.0, 0.0)),
                (vec![0, 2, 1], C64::new(1.0, 0.0)),
                (vec![0, 0, 1], C64::new(-1.0, 0.0)),
            ],
        )
        .unwrap();
        let one = PiecewisePoly1D::on_interval(-1.0, 1.0, Poly1::constant(1.0)).unwrap();
        let box_indicator = TensorTestFunction::global(1.0, vec![one; 3]);
        let v = exact_integral(&[Factor::value(&box_indicator)], Some(&c12), Some(&dom)).unwrap();
        assert!(v.norm() < 1e-15);

        let p = build_test_pair(1.0, 0, 2, 3).unwrap();
        assert_eq!(p.case_id, 2);
        let off = exact_integral(&[Factor::partial(&p.phi, 0), Factor::partial(&p.psi, 1)], None, None).unwrap();
        assert!(off.norm() < 1e-15);
    }

    #[test]
    fn capacity_is_enforced() {
        let p = Polynomial::from_terms(1, 20, [(vec![16], C64::new(1.0, 0.0))]).unwrap();
        let f = TensorTestFunction::new(1.0, vec![hat()]);
        assert!(matches!(
            exact_integral(&[Factor::value(&f)], Some(&p), None),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn cellwise_integral_matches_polynomial_for_constants() {
        let dom = BoxDomain::cube(2, -1.0, 1.0);
        let field = CellField::sample(&dom, vec![4, 4], |_| crate::CMat::from_element(1, 1, C64::new(2.0, 0.0))).unwrap();
        let f = TensorTestFunction::new(1.0, vec![hat(), hat()]);
        let v = exact_integral_cells(&[Factor::value(&f), Factor::value(&f)], &field, (0, 0), &dom).unwrap();
        assert!((v.re - 2.0 * (2.0f64 / 3.0).powi(2)).abs() < 1e-14);
    }
}
