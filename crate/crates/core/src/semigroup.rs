//! The discrete semigroup `S_t = e^{-tA}`, `A = M^{-1} K`, positivity scans
//! and channel factorization.

use std::sync::OnceLock;

use nalgebra::{ComplexField, DMatrix};
use rayon::prelude::*;

use crate::assembly::DiscreteForm;
use crate::expm::expm;
use crate::sparse::{CsrMatrix, Scalar};
use crate::{CMat, Error, Result, C64};

/// Above this size `expm_apply` switches to a truncated Taylor action.
pub const DENSE_LIMIT: usize = 4096;
/// Above this size positivity scans build `e^{-tA}` column by column.
pub const DENSE_SCAN_LIMIT: usize = 1024;
const REAL_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct Generator {
    a: CsrMatrix<C64>,
    real: Option<CsrMatrix<f64>>,
    norm1: f64,
    dense: OnceLock<CMat>,
}

impl Generator {
    pub fn from_form(form: &DiscreteForm) -> Self {
        let m = form.m;
        let trip = form
            .stiffness
            .iter()
            .map(|(r, c, v)| (r, c, v / form.mass[r / m]))
            .collect();
        let n = form.size();
        Self::from_csr(CsrMatrix::from_triplets(n, n, trip))
    }

    pub fn from_dense(a: &CMat) -> Self {
        let trip = a
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != C64::default())
            .map(|(idx, v)| (idx % a.nrows(), idx / a.nrows(), *v))
            .collect();
        Self::from_csr(CsrMatrix::from_triplets(a.nrows(), a.ncols(), trip))
    }

    pub fn from_real(a: &DMatrix<f64>) -> Self {
        Self::from_dense(&a.map(|x| C64::new(x, 0.0)))
    }

    fn from_csr(a: CsrMatrix<C64>) -> Self {
        let scale = a.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max);
        let imag = a.iter().map(|(_, _, v)| v.im.abs()).fold(0.0, f64::max);
        let real = (imag <= REAL_TOL * scale.max(f64::MIN_POSITIVE)).then(|| a.map(|z| z.re));
        let mut col = vec![0.0; a.ncols()];
        for (_, c, v) in a.iter() {
            col[c] += v.norm();
        }
        let norm1 = col.into_iter().fold(0.0, f64::max);
        Self {
            a,
            real,
            norm1,
            dense: OnceLock::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_real(&self) -> bool {
        self.real.is_some()
    }

    /// `‖A‖_1`, also an upper bound for the spectral radius.
    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn matrix(&self) -> &CsrMatrix<C64> {
        &self.a
    }

    pub fn dense(&self) -> &CMat {
        self.dense.get_or_init(|| self.a.to_dense())
    }

    /// Largest positive off-diagonal entry of `Re A` (zero if none).
    pub fn max_positive_offdiag(&self) -> f64 {
        self.a
            .iter()
            .filter(|(r, c, _)| r != c)
            .map(|(_, _, v)| v.re)
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.a.iter().map(|(_, _, v)| v.im.abs()).fold(0.0, f64::max)
    }

    /// Dense `e^{-tA}`.
    pub fn exp_dense(&self, t: f64) -> Result<CMat> {
        check_time(t)?;
        match &self.real {
            Some(r) => {
                let e = expm(&(r.to_dense() * -t))?;
                Ok(e.map(|x| C64::new(x, 0.0)))
            }
            None => expm(&(self.dense() * C64::new(-t, 0.0))),
        }
    }

    /// `e^{-tA} u`.
    pub fn expm_apply(&self, t: f64, u: &[C64]) -> Result<Vec<C64>> {
        check_time(t)?;
        if u.len() != self.size() {
            return Err(Error::Shape(format!(
                "state of length {} for a generator of size {}",
                u.len(),
                self.size()
            )));
        }
        if u.iter().any(|z| !z.is_finite()) {
            return Err(Error::numerical("non-finite state"));
        }
        let out = if self.size() <= DENSE_LIMIT {
            let e = self.exp_dense(t)?;
            let v = e * nalgebra::DVector::from_column_slice(u);
            v.as_slice().to_vec()
        } else {
            match &self.real {
                Some(r) => {
                    let ur: Vec<f64> = u.iter().map(|z| z.re).collect();
                    let ui: Vec<f64> = u.iter().map(|z| z.im).collect();
                    let vr = taylor_action(r, self.norm1, t, &ur)?;
                    let vi = taylor_action(r, self.norm1, t, &ui)?;
                    vr.into_iter().zip(vi).map(|(a, b)| C64::new(a, b)).collect()
                }
                None => taylor_action(&self.a, self.norm1, t, u)?,
            }
        };
        if out.iter().any(|z| !z.is_finite()) {
            return Err(Error::numerical("semigroup applied to state overflowed"));
        }
        Ok(out)
    }

    /// Column `j` of `e^{-tA}`.
    fn column(&self, t: f64, j: usize) -> Result<Vec<C64>> {
        match &self.real {
            Some(r) => {
                let mut e = vec![0.0; self.size()];
                e[j] = 1.0;
                Ok(taylor_action(r, self.norm1, t, &e)?
                    .into_iter()
                    .map(|x| C64::new(x, 0.0))
                    .collect())
            }
            None => {
                let mut e = vec![C64::default(); self.size()];
                e[j] = C64::new(1.0, 0.0);
                taylor_action(&self.a, self.norm1, t, &e)
            }
        }
    }

    /// Full `e^{-tA}`: dense Padé for small generators, parallel Taylor
    /// columns otherwise.
    pub fn exp_matrix(&self, t: f64) -> Result<CMat> {
        if self.size() <= DENSE_SCAN_LIMIT {
            return self.exp_dense(t);
        }
        let cols: Vec<Vec<C64>> = (0..self.size())
            .into_par_iter()
            .map(|j| self.column(t, j))
            .collect::<Result<_>>()?;
        let n = self.size();
        Ok(CMat::from_fn(n, n, |i, j| cols[j][i]))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("time {t} must be positive")))
    }
}

/// `e^{-tA} v` by `s` steps of a truncated Taylor series, each step of norm
/// at most one.
fn taylor_action<T>(a: &CsrMatrix<T>, norm1: f64, t: f64, v: &[T]) -> Result<Vec<T>>
where
    T: Scalar + ComplexField<RealField = f64>,
{
    let steps = (t * norm1).ceil().max(1.0) as usize;
    let h = -t / steps as f64;
    let inf = |x: &[T]| x.iter().map(|z| z.clone().abs()).fold(0.0, f64::max);
    let mut x = v.to_vec();
    for _ in 0..steps {
        let mut term = x.clone();
        let mut acc = x.clone();
        let base = inf(&x).max(f64::MIN_POSITIVE);
        for k in 1..=60 {
            term = a.matvec(&term);
            let f = T::from_real(h / k as f64);
            for z in term.iter_mut() {
                *z = *z * f;
            }
            for (s, z) in acc.iter_mut().zip(&term) {
                *s += *z;
            }
            if inf(&term) <= 1e-18 * base {
                break;
            }
        }
        x = acc;
    }
    if x.iter().any(|z| !z.clone().is_finite()) {
        return Err(Error::numerical("Taylor action overflowed"));
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum ScanVerdict {
    NegativeFound,
    SignPatternOk,
    SampledNonnegative,
}

impl std::fmt::Display for ScanVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScanVerdict::NegativeFound => "NEGATIVE-FOUND",
            ScanVerdict::SignPatternOk => "SIGN-PATTERN-OK",
            ScanVerdict::SampledNonnegative => "SAMPLED-NONNEGATIVE",
        })
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TimeSample {
    pub t: f64,
    pub min_entry: f64,
    pub max_abs: f64,
    /// `(row, col)` of the minimum entry.
    pub argmin: (usize, usize),
    pub max_imag: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Offender {
    pub t: f64,
    pub value: f64,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PositivityReport {
    pub samples: Vec<TimeSample>,
    pub min_entry: f64,
    pub offender: Option<Offender>,
    pub max_positive_offdiag: f64,
    pub max_imag_generator: f64,
    pub real: bool,
    pub tol: f64,
    pub verdict: ScanVerdict,
}

/// `{1e-2, 1e-1, 1} / ‖A‖`.
pub fn default_times(gen: &Generator) -> Vec<f64> {
    let s = if gen.norm1() > 0.0 { 1.0 / gen.norm1() } else { 1.0 };
    vec![1e-2 * s, 1e-1 * s, s]
}

/// Sample `e^{-tA}` at `times` and look for negative entries; `tol` is
/// relative to `max |e^{-tA}|`.
pub fn positivity_scan(gen: &Generator, times: &[f64], tol: f64) -> Result<PositivityReport> {
    if times.is_empty() {
        return Err(Error::Argument("no times to scan".into()));
    }
    let mut samples = Vec::with_capacity(times.len());
    let mut offender: Option<Offender> = None;
    for &t in times {
        let e = gen.exp_matrix(t)?;
        let max_abs = e.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let max_imag = e.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let (mut min_entry, mut argmin) = (f64::INFINITY, (0, 0));
        for j in 0..e.ncols() {
            for i in 0..e.nrows() {
                if e[(i, j)].re < min_entry {
                    min_entry = e[(i, j)].re;
                    argmin = (i, j);
                }
            }
        }
        if offender.is_none() && min_entry < -tol * max_abs {
            offender = Some(Offender {
                t,
                value: min_entry,
                row: argmin.0,
                col: argmin.1,
            });
        }
        samples.push(TimeSample {
            t,
            min_entry,
            max_abs,
            argmin,
            max_imag,
        });
    }
    let scale = gen.matrix().iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max);
    let max_positive_offdiag = gen.max_positive_offdiag();
    let verdict = if offender.is_some() {
        ScanVerdict::NegativeFound
    } else if gen.is_real() && max_positive_offdiag <= tol * scale {
        ScanVerdict::SignPatternOk
    } else {
        ScanVerdict::SampledNonnegative
    };
    Ok(PositivityReport {
        min_entry: samples.iter().map(|s| s.min_entry).fold(f64::INFINITY, f64::min),
        samples,
        offender,
        max_positive_offdiag,
        max_imag_generator: gen.max_imag(),
        real: gen.is_real(),
        tol,
        verdict,
    })
}

/// Channel generators of a block system whose stiffness does not couple
/// channels.
#[derive(Debug)]
pub struct Factorization {
    pub block: Generator,
    pub channels: Vec<Generator>,
    pub m: usize,
}

impl Factorization {
    /// Fails with a contract violation when `K` couples channels.
    pub fn new(block: &DiscreteForm, channels: &[DiscreteForm]) -> Result<Self> {
        let m = block.m;
        if channels.len() != m || channels.iter().any(|c| c.m != 1 || c.grid != block.grid) {
            return Err(Error::Shape(format!(
                "expected {m} scalar forms on the block grid"
            )));
        }
        let coupling = block.channel_coupling();
        if coupling > 1e-12 * block.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::ContractViolation(format!(
                "stiffness couples channels (max entry {coupling:e})"
            )));
        }
        Ok(Self {
            block: Generator::from_form(block),
            channels: channels.iter().map(Generator::from_form).collect(),
            m,
        })
    }

    /// `‖S_t u - (S^(n)_t u_n)_n‖ / ‖u‖`.
    pub fn residual(&self, t: f64, u: &[C64]) -> Result<f64> {
        Ok(self.residuals(t, std::slice::from_ref(&u.to_vec()))?[0])
    }

    /// `residual` for several states, sharing one exponential per generator
    /// when the generators are small enough to exponentiate densely.
    pub fn residuals(&self, t: f64, states: &[Vec<C64>]) -> Result<Vec<f64>> {
        let apply = |gen: &Generator, us: &[Vec<C64>]| -> Result<Vec<Vec<C64>>> {
            if gen.size() > DENSE_LIMIT {
                return us.iter().map(|u| gen.expm_apply(t, u)).collect();
            }
            let e = gen.exp_dense(t)?;
            us.iter()
                .map(|u| {
                    if u.len() != gen.size() {
                        return Err(Error::Shape(format!("state of length {} for size {}", u.len(), gen.size())));
                    }
                    Ok((&e * nalgebra::DVector::from_column_slice(u)).as_slice().to_vec())
                })
                .collect()
        };
        let m = self.m;
        let full = apply(&self.block, states)?;
        let mut diff = vec![0.0; states.len()];
        for (n, gen) in self.channels.iter().enumerate() {
            let parts: Vec<Vec<C64>> = states
                .iter()
                .map(|u| u.iter().skip(n).step_by(m).copied().collect())
                .collect();
            for (s, sn) in apply(gen, &parts)?.iter().enumerate() {
                for (p, v) in sn.iter().enumerate() {
                    diff[s] += (full[s][p * m + n] - v).norm_sqr();
                }
            }
        }
        Ok(states
            .iter()
            .zip(diff)
            .map(|(u, d)| {
                let nu: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if nu == 0.0 { 0.0 } else { d.sqrt() / nu }
            })
            .collect())
    }
}

pub fn factorization_residual(block: &DiscreteForm, channels: &[DiscreteForm], t: f64, u: &[C64]) -> Result<f64> {
    Factorization::new(block, channels)?.residual(t, u)
}
