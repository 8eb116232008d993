//! Coefficient fields and elliptic systems.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;
use crate::{CMat, Error, Result, C64};

const BOX_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Shape(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Argument(format!("degenerate box {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `(a, b)^d`.
    pub fn cube(d: usize, a: f64, b: f64) -> Self {
        Self::new(vec![a; d], vec![b; d]).expect("valid cube")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn min_side(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// Membership in the closed box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &xi)| {
                let tol = BOX_SLACK * (1.0 + self.side(i));
                xi >= self.lo[i] - tol && xi <= self.hi[i] + tol
            })
    }

    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| (xi - self.lo[i]).min(self.hi[i] - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Point with relative coordinates `t` in `[0, 1]^d`.
    pub fn at_relative(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .enumerate()
            .map(|(i, &ti)| self.lo[i] + ti * self.side(i))
            .collect()
    }

    /// Tensor grid with `n` points per axis including the faces.
    pub fn tensor_samples(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.max(2);
        let rel: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        tensor_points(self.dim(), &rel)
            .into_iter()
            .map(|t| self.at_relative(&t))
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: x.to_vec() })
        }
    }
}

/// All points of `values^d`, first coordinate varying fastest.
pub(crate) fn tensor_points(d: usize, values: &[f64]) -> Vec<Vec<f64>> {
    let n = values.len();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = values[idx % n];
                    idx /= n;
                    v
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    /// `V = H^1_0`
    Dirichlet,
    /// `V = H^1`
    Free,
}

impl std::fmt::Display for Bc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bc::Dirichlet => "dirichlet",
            Bc::Free => "free",
        })
    }
}

/// An `m x m` array of polynomials, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    m: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn new(m: usize, entries: Vec<Polynomial>) -> Result<Self> {
        if m == 0 || entries.len() != m * m {
            return Err(Error::Shape(format!(
                "polynomial matrix of order {m} needs {} entries, got {}",
                m * m,
                entries.len()
            )));
        }
        let dim = entries[0].dim();
        if entries.iter().any(|p| p.dim() != dim) {
            return Err(Error::Shape("polynomial entries differ in dimension".into()));
        }
        Ok(Self { m, entries })
    }

    pub fn zero(m: usize, dim: usize) -> Self {
        let z = Polynomial::zero(dim, crate::poly::DEFAULT_MAX_DEGREE);
        Self {
            m,
            entries: vec![z; m * m],
        }
    }

    pub fn from_constant(c: &CMat, dim: usize) -> Self {
        let m = c.nrows();
        let entries = (0..m * m)
            .map(|idx| Polynomial::constant(dim, c[(idx / m, idx % m)]))
            .collect();
        Self { m, entries }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dim()
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        self.entries[i * self.m + j] = p;
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.m, self.m, |i, j| self.get(i, j).eval(x))
    }

    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> Self {
        Self {
            m: self.m,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> Self {
        Self {
            m: self.m,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn total_degree(&self) -> usize {
        self.entries.iter().map(Polynomial::total_degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, axis: usize) -> usize {
        self.entries.iter().map(|p| p.degree_in(axis)).max().unwrap_or(0)
    }
}

/// Piecewise-constant field on a uniform cell grid over the domain box.
/// Cells are numbered with the first axis varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub cells: Vec<usize>,
    pub values: Vec<CMat>,
}

impl CellField {
    pub fn new(cells: Vec<usize>, values: Vec<CMat>) -> Result<Self> {
        let count: usize = cells.iter().product();
        if cells.is_empty() || cells.contains(&0) || values.len() != count {
            return Err(Error::Shape(format!(
                "cell grid {cells:?} needs {count} matrices, got {}",
                values.len()
            )));
        }
        let m = values[0].nrows();
        if values.iter().any(|v| v.nrows() != m || v.ncols() != m) {
            return Err(Error::Shape("cell matrices differ in size".into()));
        }
        Ok(Self { cells, values })
    }

    /// Sample `f` at the cell centres of `domain`.
    pub fn sample(
        domain: &BoxDomain,
        cells: Vec<usize>,
        f: impl Fn(&[f64]) -> CMat,
    ) -> Result<Self> {
        let count: usize = cells.iter().product();
        let values = (0..count)
            .map(|c| f(&cell_center(domain, &cells, c)))
            .collect();
        Self::new(cells, values)
    }

    /// Index of the cell containing `x`; points on a shared face go to the
    /// lower cell.
    pub fn locate(&self, domain: &BoxDomain, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &n) in self.cells.iter().enumerate() {
            let t = (x[i] - domain.lo[i]) / domain.side(i) * n as f64;
            let c = (t.ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
            idx += c * stride;
            stride *= n;
        }
        idx
    }

    pub fn centers(&self, domain: &BoxDomain) -> Vec<Vec<f64>> {
        (0..self.values.len())
            .map(|c| cell_center(domain, &self.cells, c))
            .collect()
    }
}

pub(crate) fn cell_center(domain: &BoxDomain, cells: &[usize], mut c: usize) -> Vec<f64> {
    cells
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let ci = c % n;
            c /= n;
            domain.lo[i] + (ci as f64 + 0.5) * domain.side(i) / n as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixField {
    Constant(CMat),
    Polynomial(PolyMatrix),
    GridSampled(CellField),
}

pub(crate) fn operator_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

impl MatrixField {
    pub fn zero(m: usize) -> Self {
        MatrixField::Constant(CMat::zeros(m, m))
    }

    pub fn scalar_identity(m: usize, s: f64) -> Self {
        MatrixField::Constant(CMat::identity(m, m) * C64::new(s, 0.0))
    }

    pub fn m(&self) -> usize {
        match self {
            MatrixField::Constant(c) => c.nrows(),
            MatrixField::Polynomial(p) => p.m(),
            MatrixField::GridSampled(g) => g.values[0].nrows(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MatrixField::Constant(_) => "constant",
            MatrixField::Polynomial(_) => "polynomial",
            MatrixField::GridSampled(_) => "grid",
        }
    }

    pub fn eval(&self, domain: &BoxDomain, x: &[f64]) -> Result<CMat> {
        domain.check(x)?;
        Ok(self.eval_unchecked(domain, x))
    }

    pub(crate) fn eval_unchecked(&self, domain: &BoxDomain, x: &[f64]) -> CMat {
        match self {
            MatrixField::Constant(c) => c.clone(),
            MatrixField::Polynomial(p) => p.eval(x),
            MatrixField::GridSampled(g) => g.values[g.locate(domain, x)].clone(),
        }
    }

    /// Uniform bound on the operator norm over the domain.
    pub fn bound(&self, domain: &BoxDomain) -> f64 {
        match self {
            MatrixField::Constant(c) => operator_norm(c),
            MatrixField::Polynomial(p) => p
                .entries()
                .iter()
                .map(|e| e.bound_on_box(&domain.lo, &domain.hi).powi(2))
                .sum::<f64>()
                .sqrt(),
            MatrixField::GridSampled(g) => {
                g.values.iter().map(operator_norm).fold(0.0, f64::max)
            }
        }
    }

    pub fn map_entries(&self, f: impl Fn(C64) -> C64) -> Self {
        match self {
            MatrixField::Constant(c) => MatrixField::Constant(c.map(&f)),
            MatrixField::Polynomial(p) => MatrixField::Polynomial(p.map(|e| e.map_coeffs(&f))),
            MatrixField::GridSampled(g) => MatrixField::GridSampled(CellField {
                cells: g.cells.clone(),
                values: g.values.iter().map(|v| v.map(&f)).collect(),
            }),
        }
    }

    /// The checked field `x -> C(x)ˇ`, which in the standard basis is the
    /// entrywise real part.
    pub fn checked(&self) -> Self {
        self.map_entries(|c| Complex64::new(c.re, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map_entries(|c| c * s)
    }

    fn combine(&self, other: &Self, domain: &BoxDomain, op: Op) -> Result<Self> {
        use MatrixField::*;
        if self.m() != other.m() {
            return Err(Error::Shape(format!(
                "fields of order {} and {} cannot be combined",
                self.m(),
                other.m()
            )));
        }
        let f = |a: C64, b: C64| match op {
            Op::Add => a + b,
            Op::Sub => a - b,
        };
        Ok(match (self, other) {
            (Constant(a), Constant(b)) => Constant(a.zip_map(b, f)),
            (GridSampled(g), GridSampled(h)) if g.cells != h.cells => {
                return Err(Error::Unsupported(
                    "combining grid fields with different resolutions".into(),
                ))
            }
            (GridSampled(g), _) | (_, GridSampled(g)) => {
                let values = g
                    .centers(domain)
                    .iter()
                    .map(|x| {
                        let a = self.eval_unchecked(domain, x);
                        let b = other.eval_unchecked(domain, x);
                        a.zip_map(&b, f)
                    })
                    .collect();
                GridSampled(CellField {
                    cells: g.cells.clone(),
                    values,
                })
            }
            (a, b) => {
                let d = domain.dim();
                let pa = a.as_poly(d).expect("not a grid field");
                let pb = b.as_poly(d).expect("not a grid field");
                Polynomial(pa.zip(&pb, |x, y| match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                }))
            }
        })
    }

    pub fn add(&self, other: &Self, domain: &BoxDomain) -> Result<Self> {
        self.combine(other, domain, Op::Add)
    }

    pub fn sub(&self, other: &Self, domain: &BoxDomain) -> Result<Self> {
        self.combine(other, domain, Op::Sub)
    }

    /// Polynomial view of a constant or polynomial field.
    pub fn as_poly(&self, dim: usize) -> Option<PolyMatrix> {
        match self {
            MatrixField::Constant(c) => Some(PolyMatrix::from_constant(c, dim)),
            MatrixField::Polynomial(p) => Some(p.clone()),
            MatrixField::GridSampled(_) => None,
        }
    }

    pub fn total_degree(&self) -> usize {
        match self {
            MatrixField::Polynomial(p) => p.total_degree(),
            _ => 0,
        }
    }

    pub fn degree_in(&self, axis: usize) -> usize {
        match self {
            MatrixField::Polynomial(p) => p.degree_in(axis),
            _ => 0,
        }
    }

    /// The `(i, j)` entry as a scalar field.
    pub fn entry(&self, i: usize, j: usize) -> MatrixField {
        let one = |v: C64| CMat::from_element(1, 1, v);
        match self {
            MatrixField::Constant(c) => MatrixField::Constant(one(c[(i, j)])),
            MatrixField::Polynomial(p) => {
                MatrixField::Polynomial(PolyMatrix::new(1, vec![p.get(i, j).clone()]).unwrap())
            }
            MatrixField::GridSampled(g) => MatrixField::GridSampled(CellField {
                cells: g.cells.clone(),
                values: g.values.iter().map(|v| one(v[(i, j)])).collect(),
            }),
        }
    }

    /// Zero all but the diagonal entries.
    pub fn diagonal_part(&self) -> MatrixField {
        let keep = |v: &CMat| CMat::from_fn(v.nrows(), v.ncols(), |i, j| if i == j { v[(i, j)] } else { C64::default() });
        match self {
            MatrixField::Constant(c) => MatrixField::Constant(keep(c)),
            MatrixField::Polynomial(p) => {
                let mut q = p.clone();
                let z = Polynomial::zero(p.dim(), p.get(0, 0).max_degree());
                for i in 0..p.m() {
                    for j in 0..p.m() {
                        if i != j {
                            q.set(i, j, z.clone());
                        }
                    }
                }
                MatrixField::Polynomial(q)
            }
            MatrixField::GridSampled(g) => MatrixField::GridSampled(CellField {
                cells: g.cells.clone(),
                values: g.values.iter().map(keep).collect(),
            }),
        }
    }

    pub fn max_abs_entry(&self, domain: &BoxDomain) -> f64 {
        match self {
            MatrixField::Constant(c) => c.iter().map(|z| z.norm()).fold(0.0, f64::max),
            MatrixField::Polynomial(p) => p
                .entries()
                .iter()
                .map(|e| e.bound_on_box(&domain.lo, &domain.hi))
                .fold(0.0, f64::max),
            MatrixField::GridSampled(g) => g
                .values
                .iter()
                .flat_map(|v| v.iter().map(|z| z.norm()))
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Copy)]
enum Op {
    Add,
    Sub,
}

/// Result of sampling the Hermitian part of the coefficient block matrix.
#[derive(Clone, Debug)]
pub struct EllipticityReport {
    pub lambda_min: f64,
    pub argmin: Vec<f64>,
    pub mu: f64,
    pub tol: f64,
    pub passed: bool,
    pub samples: Vec<(Vec<f64>, f64)>,
}

/// Data of the form `a(u, v) = sum_kl ∫ (C_kl ∂_l u, ∂_k v)`.
#[derive(Clone, Debug)]
pub struct EllipticSystem {
    pub domain: BoxDomain,
    pub m: usize,
    /// Row-major `d x d`, entry `k * d + l` holds `C_kl`.
    pub coeffs: Vec<MatrixField>,
    pub bc: Bc,
    pub mu: f64,
}

impl EllipticSystem {
    pub fn new(domain: BoxDomain, coeffs: Vec<MatrixField>, bc: Bc, mu: f64) -> Result<Self> {
        let d = domain.dim();
        if coeffs.len() != d * d {
            return Err(Error::Shape(format!(
                "{} coefficient fields given for d = {d}",
                coeffs.len()
            )));
        }
        let m = coeffs[0].m();
        if m == 0 || coeffs.iter().any(|c| c.m() != m) {
            return Err(Error::Shape("coefficient fields differ in channel count".into()));
        }
        for c in &coeffs {
            match c {
                MatrixField::Polynomial(p) if p.dim() != d => {
                    return Err(Error::Shape(format!(
                        "polynomial coefficient in {} variables on a {d}-dimensional box",
                        p.dim()
                    )))
                }
                MatrixField::GridSampled(g) if g.cells.len() != d => {
                    return Err(Error::Shape(format!(
                        "grid coefficient with {} axes on a {d}-dimensional box",
                        g.cells.len()
                    )))
                }
                _ => {}
            }
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Argument(format!("ellipticity constant {mu} must be >= 0")));
        }
        Ok(Self {
            domain,
            m,
            coeffs,
            bc,
            mu,
        })
    }

    pub fn d(&self) -> usize {
        self.domain.dim()
    }

    pub fn coeff(&self, k: usize, l: usize) -> &MatrixField {
        &self.coeffs[k * self.d() + l]
    }

    pub fn coeff_mut(&mut self, k: usize, l: usize) -> &mut MatrixField {
        let d = self.d();
        &mut self.coeffs[k * d + l]
    }

    /// `M` with `‖C_kl(x)‖ <= M` for all `k, l, x`.
    pub fn bound(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.bound(&self.domain))
            .fold(0.0, f64::max)
    }

    pub fn tol_eig(&self) -> f64 {
        1e-10 * self.bound().max(1.0)
    }

    pub fn has_grid_fields(&self) -> bool {
        self.coeffs
            .iter()
            .any(|c| matches!(c, MatrixField::GridSampled(_)))
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.iter().map(MatrixField::total_degree).max().unwrap_or(0)
    }

    pub fn eval(&self, k: usize, l: usize, x: &[f64]) -> Result<CMat> {
        self.coeff(k, l).eval(&self.domain, x)
    }

    /// The `(md) x (md)` block matrix with blocks `C_kl(x)`; row `k*m + i`.
    pub fn eval_block(&self, x: &[f64]) -> Result<CMat> {
        self.domain.check(x)?;
        let (d, m) = (self.d(), self.m);
        let mut b = CMat::zeros(d * m, d * m);
        for k in 0..d {
            for l in 0..d {
                let c = self.coeff(k, l).eval_unchecked(&self.domain, x);
                b.view_mut((k * m, l * m), (m, m)).copy_from(&c);
            }
        }
        Ok(b)
    }

    /// Smallest eigenvalue of the Hermitian part of the block matrix at `x`.
    pub fn hermitian_lambda_min(&self, x: &[f64]) -> Result<f64> {
        let b = self.eval_block(x)?;
        let h = (&b + b.adjoint()) * C64::new(0.5, 0.0);
        hermitian_min_eigenvalue(h).ok_or_else(|| Error::Numerical {
            message: "Hermitian eigensolver did not converge".into(),
            point: Some(x.to_vec()),
        })
    }

    /// Default sample set: cell centres of the first grid-sampled field, or a
    /// tensor grid of `density` points per axis.
    pub fn default_samples(&self, density: usize) -> Vec<Vec<f64>> {
        for c in &self.coeffs {
            if let MatrixField::GridSampled(g) = c {
                return g.centers(&self.domain);
            }
        }
        if self.coeffs.iter().all(|c| matches!(c, MatrixField::Constant(_))) {
            return vec![self.domain.center()];
        }
        self.domain.tensor_samples(density)
    }

    pub fn check_ellipticity(&self, samples: &[Vec<f64>]) -> Result<EllipticityReport> {
        let owned;
        let samples = if samples.is_empty() {
            owned = self.default_samples(5);
            &owned
        } else {
            samples
        };
        let mut rows = Vec::with_capacity(samples.len());
        for x in samples {
            rows.push((x.clone(), self.hermitian_lambda_min(x)?));
        }
        let (argmin, lambda_min) = rows
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("nonempty");
        let tol = self.tol_eig();
        Ok(EllipticityReport {
            lambda_min,
            argmin,
            mu: self.mu,
            tol,
            passed: lambda_min >= self.mu - tol,
            samples: rows,
        })
    }

    /// `C_kl(x) + C_lk(x)`.
    pub fn symmetrized(&self, k: usize, l: usize, x: &[f64]) -> Result<CMat> {
        if k >= self.d() || l >= self.d() {
            return Err(Error::Argument(format!(
                "index pair ({k}, {l}) out of range for d = {}",
                self.d()
            )));
        }
        Ok(self.eval(k, l, x)? + self.eval(l, k, x)?)
    }

    pub fn symmetrized_field(&self, k: usize, l: usize) -> Result<MatrixField> {
        self.coeff(k, l).add(self.coeff(l, k), &self.domain)
    }

    /// The system with every coefficient replaced by its entrywise real part.
    pub fn checked(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(MatrixField::checked).collect(),
            ..self.clone()
        }
    }

    /// Replace `(C_kl, C_lk)` by `(C_kl + cI, C_lk - cI)`.
    pub fn gauge(&self, k: usize, l: usize, c: C64) -> Result<Self> {
        let shift = MatrixField::Constant(CMat::identity(self.m, self.m) * c);
        let mut out = self.clone();
        *out.coeff_mut(k, l) = self.coeff(k, l).add(&shift, &self.domain)?;
        *out.coeff_mut(l, k) = self.coeff(l, k).sub(&shift, &self.domain)?;
        Ok(out)
    }

    /// The gauge representative whose antisymmetric scalar part
    /// `tr(C_kl - C_lk) / 2m` has zero mean over the default samples, for
    /// every `k < l`. Gauge-equivalent systems share this representative.
    pub fn gauge_normalized(&self) -> Result<Self> {
        let d = self.d();
        let samples = self.default_samples(5);
        let mut out = self.clone();
        for k in 0..d {
            for l in k + 1..d {
                let mut mean = C64::default();
                for x in &samples {
                    mean += (self.eval(k, l, x)? - self.eval(l, k, x)?).trace();
                }
                let c = mean / (2.0 * self.m as f64 * samples.len() as f64);
                if c != C64::default() {
                    out = out.gauge(k, l, -c)?;
                }
            }
        }
        Ok(out)
    }

    /// Replace every `C_kl` by `(C_kl + C_lk) / 2`.
    pub fn symmetric_part(&self) -> Result<Self> {
        let d = self.d();
        let mut out = self.clone();
        for k in 0..d {
            for l in 0..d {
                *out.coeff_mut(k, l) = self.symmetrized_field(k, l)?.scale(C64::new(0.5, 0.0));
            }
        }
        Ok(out)
    }

    /// Scalar system with coefficients `Re (C_kl e_n, e_n)`.
    pub fn channel_system(&self, n: usize) -> Result<Self> {
        if n >= self.m {
            return Err(Error::Argument(format!("channel {n} out of range for m = {}", self.m)));
        }
        let coeffs = self.coeffs.iter().map(|c| c.entry(n, n).checked()).collect();
        Self::new(self.domain.clone(), coeffs, self.bc, self.mu)
    }

    pub fn with_bc(&self, bc: Bc) -> Self {
        Self { bc, ..self.clone() }
    }

    /// Largest imaginary part over all coefficient entries (bound).
    pub fn max_imag(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| match c {
                MatrixField::Constant(a) => a.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
                MatrixField::Polynomial(p) => {
                    p.entries().iter().map(Polynomial::max_imag).fold(0.0, f64::max)
                }
                MatrixField::GridSampled(g) => g
                    .values
                    .iter()
                    .flat_map(|v| v.iter().map(|z| z.im.abs()))
                    .fold(0.0, f64::max),
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn hermitian_min_eigenvalue(h: CMat) -> Option<f64> {
    if h.nrows() == 0 {
        return None;
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)?;
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    min.is_finite().then_some(min)
}

/// Real `m x m` matrix from row-major data.
pub fn real_matrix(m: usize, data: &[f64]) -> CMat {
    DMatrix::from_row_iterator(m, m, data.iter().map(|&x| C64::new(x, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::DEFAULT_MAX_DEGREE;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn six() -> MatrixField {
        MatrixField::scalar_identity(2, 6.0)
    }

    fn ex13_offdiag(z: C64) -> CMat {
        let mut a = CMat::zeros(2, 2);
        a[(1, 0)] = z;
        a
    }

    fn ex13(z: C64) -> EllipticSystem {
        let c12 = ex13_offdiag(z);
        EllipticSystem::new(
            BoxDomain::cube(2, -4.0, 4.0),
            vec![
                six(),
                MatrixField::Constant(c12.clone()),
                MatrixField::Constant(-c12),
                six(),
            ],
            Bc::Dirichlet,
            3.0,
        )
        .unwrap()
    }

    fn witness() -> EllipticSystem {
        let r = MatrixField::Constant(ex13_offdiag(c(1.0, 0.0)));
        EllipticSystem::new(
            BoxDomain::cube(2, -1.0, 1.0),
            vec![six(), r.clone(), r, six()],
            Bc::Dirichlet,
            5.0,
        )
        .unwrap()
    }

    /// Independent oracle: eigenvalues of a 4x4 Hermitian matrix through the
    /// real 8x8 embedding, each eigenvalue appearing twice.
    fn lambda_min_real_embedding(h: &CMat) -> f64 {
        let n = h.nrows();
        let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = h[(i, j)];
                r[(i, j)] = z.re;
                r[(i + n, j + n)] = z.re;
                r[(i, j + n)] = -z.im;
                r[(i + n, j)] = z.im;
            }
        }
        r.symmetric_eigenvalues().min()
    }

    #[test]
    fn constant_field_evaluates_everywhere() {
        let dom = BoxDomain::cube(2, -4.0, 4.0);
        let v = six().eval(&dom, &[1.0, -3.0]).unwrap();
        assert_eq!(v, CMat::identity(2, 2) * c(6.0, 0.0));
        assert!(matches!(
            six().eval(&dom, &[5.0, 0.0]),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn polynomial_field_example_values() {
        let p = Polynomial::from_terms(
            3,
            DEFAULT_MAX_DEGREE,
            [
                (vec![2, 2, 1], c(-1.0, 0.0)),
                (vec![2, 0, 1], c(1.0, 0.0)),
                (vec![0, 2, 1], c(1.0, 0.0)),
                (vec![0, 0, 1], c(-1.0, 0.0)),
            ],
        )
        .unwrap();
        let f = MatrixField::Polynomial(PolyMatrix::new(1, vec![p]).unwrap());
        let dom = BoxDomain::cube(3, -1.0, 1.0);
        assert_eq!(f.eval(&dom, &[0.0, 0.0, 0.0]).unwrap()[(0, 0)], c(0.0, 0.0));
        assert!((f.eval(&dom, &[0.0, 0.0, 0.5]).unwrap()[(0, 0)] - c(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn grid_field_ties_go_to_lower_cell() {
        let dom = BoxDomain::cube(1, 0.0, 1.0);
        let vals = (0..4).map(|i| CMat::from_element(1, 1, c(i as f64, 0.0))).collect();
        let f = MatrixField::GridSampled(CellField::new(vec![4], vals).unwrap());
        let at = |x: f64| f.eval(&dom, &[x]).unwrap()[(0, 0)].re;
        assert_eq!(at(0.0), 0.0);
        assert_eq!(at(0.25), 0.0);
        assert_eq!(at(0.2500001), 1.0);
        assert_eq!(at(0.5), 1.0);
        assert_eq!(at(1.0), 3.0);
    }

    #[test]
    fn ellipticity_of_reference_systems() {
        let heat = EllipticSystem::new(
            BoxDomain::cube(2, 0.0, 1.0),
            vec![
                MatrixField::scalar_identity(1, 1.0),
                MatrixField::zero(1),
                MatrixField::zero(1),
                MatrixField::scalar_identity(1, 1.0),
            ],
            Bc::Dirichlet,
            1.0,
        )
        .unwrap();
        let r = heat.check_ellipticity(&[vec![0.3, 0.7], vec![0.0, 1.0]]).unwrap();
        assert!((r.lambda_min - 1.0).abs() < 1e-14 && r.passed);

        for (sys, expected) in [
            (ex13(c(3.0, 4.0)), 3.5),
            (ex13(c(1.0, 0.0)), 5.5),
            (witness(), 5.5),
        ] {
            let x = sys.domain.center();
            let b = sys.eval_block(&x).unwrap();
            let h = (&b + b.adjoint()) * c(0.5, 0.0);
            let oracle = lambda_min_real_embedding(&h);
            assert!((oracle - expected).abs() < 1e-12, "oracle {oracle}");
            let rep = sys.check_ellipticity(&[]).unwrap();
            assert!((rep.lambda_min - expected).abs() < 1e-12);
            assert!(rep.passed);
        }
        let mut strict = witness();
        strict.mu = 6.0;
        assert!(!strict.check_ellipticity(&[]).unwrap().passed);
    }

    #[test]
    fn checked_transform_examples() {
        let dom = BoxDomain::cube(1, 0.0, 1.0);
        let i = MatrixField::Constant(CMat::from_element(1, 1, c(0.0, 1.0)));
        assert_eq!(i.checked().eval(&dom, &[0.5]).unwrap()[(0, 0)], c(0.0, 0.0));
        let q = MatrixField::Constant(ex13_offdiag(c(3.0, 4.0)));
        assert_eq!(q.checked(), MatrixField::Constant(ex13_offdiag(c(3.0, 0.0))));
        let real = MatrixField::Constant(real_matrix(2, &[1.0, -2.0, 0.5, 3.0]));
        assert_eq!(real.checked(), real);
        assert_eq!(q.checked().checked(), q.checked());
    }

    #[test]
    fn symmetrized_examples() {
        let sys = ex13(c(3.0, 4.0));
        let x = [1.0, 2.0];
        assert_eq!(sys.symmetrized(0, 1, &x).unwrap(), CMat::zeros(2, 2));
        assert_eq!(
            sys.symmetrized(0, 0, &x).unwrap(),
            CMat::identity(2, 2) * c(12.0, 0.0)
        );
        assert_eq!(
            witness().symmetrized(0, 1, &[0.0, 0.0]).unwrap(),
            ex13_offdiag(c(2.0, 0.0))
        );
    }

    #[test]
    fn gauge_keeps_symmetrization() {
        let sys = witness();
        let g = sys.gauge(0, 1, c(2.0, 3.0)).unwrap();
        let x = [0.1, -0.2];
        assert_eq!(g.symmetrized(0, 1, &x).unwrap(), sys.symmetrized(0, 1, &x).unwrap());
        assert_ne!(g.eval(0, 1, &x).unwrap(), sys.eval(0, 1, &x).unwrap());
    }

    #[test]
    fn gauge_normalization_is_shared() {
        let sys = ex13(c(3.0, 4.0));
        let x = [0.7, -1.3];
        let base = sys.gauge_normalized().unwrap();
        for shift in [c(1.0, 0.0), c(2.0, 3.0), c(0.0, -5.0)] {
            let g = sys.gauge(0, 1, shift).unwrap().gauge_normalized().unwrap();
            for (k, l) in [(0, 1), (1, 0)] {
                let diff = g.eval(k, l, &x).unwrap() - base.eval(k, l, &x).unwrap();
                assert!(diff.iter().all(|z| z.norm() < 1e-12));
            }
        }
        assert!(!sys.gauge(0, 1, c(2.0, 3.0)).unwrap().check_ellipticity(&[]).unwrap().passed);
        assert!(base.check_ellipticity(&[]).unwrap().passed);
    }

    #[test]
    fn channel_system_reads_real_diagonal() {
        let sys = ex13(c(3.0, 4.0));
        let ch = sys.channel_system(1).unwrap();
        assert_eq!(ch.m, 1);
        assert_eq!(ch.eval(0, 0, &[0.0, 0.0]).unwrap()[(0, 0)], c(6.0, 0.0));
        assert_eq!(ch.eval(0, 1, &[0.0, 0.0]).unwrap()[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn bounds_dominate_operator_norm() {
        let sys = ex13(c(3.0, 4.0));
        assert!((sys.bound() - 6.0).abs() < 1e-12);
        let dom = BoxDomain::cube(2, -1.0, 1.0);
        let p = PolyMatrix::new(
            1,
            vec![Polynomial::from_terms(2, 6, [(vec![1, 1], c(2.0, 1.0))]).unwrap()],
        )
        .unwrap();
        let f = MatrixField::Polynomial(p);
        let m = f.bound(&dom);
        for x in dom.tensor_samples(7) {
            assert!(operator_norm(&f.eval(&dom, &x).unwrap()) <= m + 1e-14);
        }
    }

    #[test]
    fn mixed_kind_sums() {
        let dom = BoxDomain::cube(2, 0.0, 1.0);
        let x1 = MatrixField::Polynomial(
            PolyMatrix::new(1, vec![Polynomial::coordinate(2, 0)]).unwrap(),
        );
        let one = MatrixField::scalar_identity(1, 1.0);
        let s = x1.add(&one, &dom).unwrap();
        assert_eq!(s.eval(&dom, &[0.25, 0.0]).unwrap()[(0, 0)], c(1.25, 0.0));
        let d = one.sub(&x1, &dom).unwrap();
        assert_eq!(d.eval(&dom, &[0.25, 0.0]).unwrap()[(0, 0)], c(0.75, 0.0));
        let g = MatrixField::GridSampled(
            CellField::sample(&dom, vec![2, 2], |x| CMat::from_element(1, 1, c(x[0], 0.0))).unwrap(),
        );
        let gd = one.sub(&g, &dom).unwrap();
        assert_eq!(gd.eval(&dom, &[0.1, 0.1]).unwrap()[(0, 0)], c(0.75, 0.0));
    }
}
