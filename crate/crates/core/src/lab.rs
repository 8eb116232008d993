//! Coefficient probes, the decoupling decision and positivity witnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble, form_value, DiscreteForm, Grid};
use crate::coefficient::{
    hermitian_min_eigenvalue, tensor_points, Bc, BoxDomain, EllipticSystem, MatrixField,
};
use crate::multop::{find_witness, max_abs, MultWitness};
use crate::tents::{build_test_pair, PiecewisePoly1D, Poly1, TensorTestFunction, TestPair};
use crate::{CMat, Error, Result, C64};

/// Anything that evaluates `a(φ ⊗ f, ψ ⊗ g)` on elementary tensors.
pub trait FormEvaluator: Sync {
    fn domain(&self) -> &BoxDomain;
    fn channels(&self) -> usize;
    fn bc(&self) -> Bc;
    fn evaluate(&self, u: (&TensorTestFunction, &[C64]), v: (&TensorTestFunction, &[C64])) -> Result<C64>;

    fn dim(&self) -> usize {
        self.domain().dim()
    }
}

impl FormEvaluator for EllipticSystem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn channels(&self) -> usize {
        self.m
    }

    fn bc(&self) -> Bc {
        self.bc
    }

    fn evaluate(&self, u: (&TensorTestFunction, &[C64]), v: (&TensorTestFunction, &[C64])) -> Result<C64> {
        form_value(self, u, v)
    }
}

fn basis(m: usize, i: usize) -> Vec<C64> {
    let mut e = vec![C64::default(); m];
    e[i] = C64::new(1.0, 0.0);
    e
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    /// Largest half-width; defaults to `min(dist(x0, ∂Ω), min side / 16)`.
    pub delta_max: Option<f64>,
    /// Number of halvings after `delta_max` (schedule length is `levels + 1`).
    pub levels: usize,
    pub richardson: bool,
    /// Successive differences may not grow by more than this factor.
    pub growth_factor: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            delta_max: None,
            levels: 6,
            richardson: true,
            growth_factor: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub x0: Vec<f64>,
    pub ktilde: usize,
    pub ltilde: usize,
    pub deltas: Vec<f64>,
    /// Scaled pairings per delta; entry `(i, j)` is `((C_kl + C_lk) e_j, e_i)`.
    pub history: Vec<CMat>,
    pub estimate: CMat,
    /// Error order eliminated by the Richardson step, if one was taken.
    pub richardson_order: Option<u32>,
    pub converged: bool,
}

impl ProbeResult {
    /// Max-entry errors of each scheduled estimate against `exact`.
    pub fn errors(&self, exact: &CMat) -> Vec<f64> {
        self.history.iter().map(|h| max_abs(&(h - exact))).collect()
    }
}

pub fn default_delta_max(domain: &BoxDomain, x0: &[f64]) -> f64 {
    domain.distance_to_boundary(x0).min(domain.min_side() / 16.0)
}

/// Recover `C_kl(x0) + C_lk(x0)` from form values on dilated tent pairs.
pub fn probe<F: FormEvaluator + ?Sized>(
    form: &F,
    x0: &[f64],
    kt: usize,
    lt: usize,
    opts: &ProbeOptions,
) -> Result<ProbeResult> {
    let d = form.dim();
    let m = form.channels();
    let dom = form.domain();
    if x0.len() != d || kt >= d || lt >= d {
        return Err(Error::Argument(format!("probe at {x0:?} with indices ({kt}, {lt})")));
    }
    let room = dom.distance_to_boundary(x0);
    let delta_max = opts.delta_max.unwrap_or_else(|| default_delta_max(dom, x0));
    if !(delta_max > 0.0) || delta_max > room * (1.0 + 1e-12) {
        return Err(Error::Geometry {
            center: x0.to_vec(),
            delta: delta_max,
        });
    }
    let tau = if kt == lt { 2.0 } else { 1.0 };
    let pair = build_test_pair(tau, kt, lt, d)?;
    let deltas: Vec<f64> = (0..=opts.levels).map(|j| delta_max * 0.5f64.powi(j as i32)).collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut history = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let (phi, psi) = pair.dilate(x0, delta);
        let scale = delta.powi(2 - d as i32);
        let vals: Vec<C64> = pairs
            .par_iter()
            .map(|&(i, j)| Ok(form.evaluate((&phi, &basis(m, j)), (&psi, &basis(m, i)))? * scale))
            .collect::<Result<_>>()?;
        history.push(CMat::from_row_slice(m, m, &vals));
    }
    let diffs: Vec<f64> = history.windows(2).map(|w| max_abs(&(&w[1] - &w[0]))).collect();
    let floor = 1e-12 * (1.0 + history.last().map_or(0.0, |h| max_abs(&h)));
    let converged = diffs
        .windows(2)
        .all(|w| w[1] <= opts.growth_factor * w[0] + floor);
    let n = history.len();
    let richardson_order = (opts.richardson && n >= 2).then(|| leading_order(&diffs, floor));
    let estimate = match richardson_order {
        Some(p) => {
            let w = 2f64.powi(p as i32);
            (&history[n - 1] * C64::new(w, 0.0) - &history[n - 2]) / C64::new(w - 1.0, 0.0)
        }
        None => history[n - 1].clone(),
    };
    Ok(ProbeResult {
        x0: x0.to_vec(),
        ktilde: kt,
        ltilde: lt,
        deltas,
        history,
        estimate,
        richardson_order,
        converged,
    })
}

/// Integer order of the leading error term, read off the ratio of the last
/// two successive differences; 1 when they are at roundoff level.
fn leading_order(diffs: &[f64], floor: f64) -> u32 {
    match diffs {
        [.., a, b] if *b > floor && *a > floor => ((a / b).log2().round() as u32).clamp(1, 4),
        _ => 1,
    }
}

/// Least-squares slope of `log(error)` against `log(delta)`, skipping exact
/// zeros.
pub fn observed_order(deltas: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&d, &e)| (d.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `x -> x_axis` on the box, as a tensor function (constant in the other
/// coordinates).
fn coordinate_function(domain: &BoxDomain, axis: usize) -> TensorTestFunction {
    let factors = (0..domain.dim())
        .map(|i| {
            let p = if i == axis { Poly1::linear(0.0, 1.0) } else { Poly1::constant(1.0) };
            PiecewisePoly1D::on_interval(domain.lo[i], domain.hi[i], p).expect("nondegenerate box")
        })
        .collect();
    TensorTestFunction::global(1.0, factors)
}

#[derive(Clone, Debug)]
pub struct OffDiagRecovery {
    pub average_c12: CMat,
    pub average_c21: CMat,
    /// Domain average of `(C12 - C21) / 2`.
    pub antisymmetric: CMat,
    /// The antisymmetric part looked spatially constant.
    pub constant_antisymmetric: bool,
    /// Largest normalised antisymmetric difference seen in the constancy test.
    pub constancy_residual: f64,
}

impl OffDiagRecovery {
    /// `C12(x)` from the probed symmetrized part; exact when the antisymmetric
    /// part is constant.
    pub fn c12_at<F: FormEvaluator + ?Sized>(&self, form: &F, x: &[f64]) -> Result<CMat> {
        let s = probe(form, x, 0, 1, &ProbeOptions::default())?.estimate;
        Ok(s * C64::new(0.5, 0.0) + &self.antisymmetric)
    }
}

/// Recover the off-diagonal coefficient of a two-dimensional system with free
/// boundary from affine test functions.
pub fn extract_offdiag_2d<F: FormEvaluator + ?Sized>(form: &F, tol: f64) -> Result<OffDiagRecovery> {
    if form.dim() != 2 {
        return Err(Error::Unsupported("off-diagonal recovery needs d = 2".into()));
    }
    if form.bc() != Bc::Free {
        return Err(Error::Unsupported(
            "with Dirichlet conditions the antisymmetric part is invisible to the form".into(),
        ));
    }
    let m = form.channels();
    let dom = form.domain();
    let x1 = coordinate_function(dom, 0);
    let x2 = coordinate_function(dom, 1);
    let vol = dom.volume();
    let mut c12 = CMat::zeros(m, m);
    let mut c21 = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let (ej, ei) = (basis(m, j), basis(m, i));
            c12[(i, j)] = form.evaluate((&x2, &ej), (&x1, &ei))? / vol;
            c21[(i, j)] = form.evaluate((&x1, &ej), (&x2, &ei))? / vol;
        }
    }
    let antisymmetric = (&c12 - &c21) * C64::new(0.5, 0.0);

    // A constant antisymmetric part drops out of a(φ,ψ) - a(ψ,φ) for
    // compactly supported φ, ψ.
    let pair = build_test_pair(1.0, 0, 1, 2)?;
    let delta = dom.min_side() / 8.0;
    let mut residual: f64 = 0.0;
    for t in [[0.25, 0.25], [0.5, 0.5], [0.75, 0.25], [0.25, 0.75]] {
        let x0 = dom.at_relative(&t);
        let (phi, psi) = pair.dilate(&x0, delta);
        for i in 0..m {
            for j in 0..m {
                let (ej, ei) = (basis(m, j), basis(m, i));
                let a = form.evaluate((&phi, &ej), (&psi, &ei))?;
                let b = form.evaluate((&psi, &ej), (&phi, &ei))?;
                residual = residual.max((a - b).norm() / delta);
            }
        }
    }
    Ok(OffDiagRecovery {
        average_c12: c12,
        average_c21: c21,
        antisymmetric,
        constant_antisymmetric: residual <= tol,
        constancy_residual: residual,
    })
}

/// Relative coordinates `{1/4, 1/2, 3/4}^d`, or the cell centres of a
/// grid-sampled coefficient; sorted lexicographically.
pub fn default_probe_points(sys: &EllipticSystem) -> Vec<Vec<f64>> {
    let mut pts = if sys.has_grid_fields() {
        sys.default_samples(0)
    } else {
        tensor_points(sys.d(), &[0.25, 0.5, 0.75])
            .into_iter()
            .map(|t| sys.domain.at_relative(&t))
            .collect()
    };
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Decision {
    #[serde(rename = "POSITIVE-DECOUPLED")]
    PositiveDecoupled,
    #[serde(rename = "NOT-POSITIVE")]
    NotPositive,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::PositiveDecoupled => "POSITIVE-DECOUPLED",
            Decision::NotPositive => "NOT-POSITIVE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Read the symmetrized coefficients off the system.
    Direct,
    /// Recover them from form values with `probe`.
    Probe,
}

#[derive(Clone, Debug)]
pub struct DecisionOptions {
    /// Diagonal-real tolerance; `1e-8 max(1, M)` for direct reads and
    /// `1e-5 max(1, M)` for probes when unset.
    pub tol: Option<f64>,
    pub source: Source,
    pub points: Option<Vec<Vec<f64>>>,
    /// Cells per axis of the residual coupling check; `0` disables it.
    pub residual_cells: usize,
    pub witness_delta: Option<f64>,
    pub probe: ProbeOptions,
}

impl Default for DecisionOptions {
    fn default() -> Self {
        Self {
            tol: None,
            source: Source::Direct,
            points: None,
            residual_cells: 8,
            witness_delta: None,
            probe: ProbeOptions::default(),
        }
    }
}

/// Data of a positivity witness built from tent functions.
#[derive(Clone, Debug)]
pub struct LatticeWitness {
    pub x0: Vec<f64>,
    pub ktilde: usize,
    pub ltilde: usize,
    pub mult: MultWitness,
    pub tau: f64,
    pub pair: TestPair,
    pub delta: f64,
    /// `u+ = φ_δ ⊗ f`
    pub phi: TensorTestFunction,
    /// `u- = ψ_δ ⊗ 1_B`
    pub psi: TensorTestFunction,
    pub value: f64,
    /// Leading term `δ^{d-2} τ^2` (halved for diagonal pairs).
    pub main: f64,
    /// `δ^{d-2} τ^2 / 2`
    pub error_bound: f64,
    pub halvings: usize,
}

impl LatticeWitness {
    pub fn f(&self) -> Vec<C64> {
        self.mult.f.iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    pub fn indicator(&self) -> Vec<C64> {
        let mut g = vec![C64::default(); self.mult.f.len()];
        for &i in &self.mult.b {
            g[i] = C64::new(1.0, 0.0);
        }
        g
    }

    /// `Re a(u+, u-)` recomputed from scratch.
    pub fn reevaluate<F: FormEvaluator + ?Sized>(&self, form: &F) -> Result<f64> {
        Ok(form.evaluate((&self.phi, &self.f()), (&self.psi, &self.indicator()))?.re)
    }

    /// Nodal interpolants of `u+` and `u-`.
    pub fn state(&self, grid: &Grid) -> (Vec<C64>, Vec<C64>) {
        let (f, g) = (self.f(), self.indicator());
        let m = f.len();
        let plus = grid.interpolate(m, |x| f.iter().map(|v| v * self.phi.eval(x)).collect());
        let minus = grid.interpolate(m, |x| g.iter().map(|v| v * self.psi.eval(x)).collect());
        (plus, minus)
    }
}

#[derive(Clone, Debug)]
pub enum Witness {
    /// `a(u+, u-) > 0` for a tent pair around a point where the symmetrized
    /// coefficient is not diagonal.
    Lattice(Box<LatticeWitness>),
    /// The symmetrized coefficient has an imaginary entry, so real states are
    /// not mapped to real states.
    NonReal {
        point: Vec<f64>,
        k: usize,
        l: usize,
        entry: (usize, usize),
        value: C64,
    },
    /// The form couples two Q1 basis functions in different channels with a
    /// positive (or non-real) value.
    GridCoupling {
        cells: Vec<usize>,
        /// `u- = b_p ⊗ e_i`
        minus: (usize, usize),
        /// `u+ = b_q ⊗ e_j`
        plus: (usize, usize),
        minus_node: Vec<f64>,
        plus_node: Vec<f64>,
        value: C64,
    },
}

impl Witness {
    pub fn kind(&self) -> &'static str {
        match self {
            Witness::Lattice(_) => "lattice",
            Witness::NonReal { .. } => "non-real",
            Witness::GridCoupling { .. } => "grid-coupling",
        }
    }

    /// `a(u+, u-)` recomputed by exact quadrature, where that is meaningful.
    pub fn reevaluate(&self, sys: &EllipticSystem) -> Result<C64> {
        match self {
            Witness::Lattice(w) => Ok(C64::new(w.reevaluate(sys)?, 0.0)),
            Witness::NonReal { value, .. } => Ok(*value),
            Witness::GridCoupling { cells, minus, plus, .. } => {
                let grid = Grid::new(sys.domain.clone(), cells.clone(), sys.bc)?;
                let m = sys.m;
                form_value(sys, (&grid.basis(plus.0), &basis(m, plus.1)), (&grid.basis(minus.0), &basis(m, minus.1)))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientRow {
    pub point: Vec<f64>,
    pub channel: usize,
    pub k: usize,
    pub l: usize,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub decision: Decision,
    pub scalar_systems: Option<Vec<EllipticSystem>>,
    pub coefficients: Vec<CoefficientRow>,
    pub witness: Option<Witness>,
    pub tol: f64,
    pub bound: f64,
    pub points: Vec<Vec<f64>>,
    pub source: Source,
    /// `|c^(n)_kl| <= M` at every probe point.
    pub bounds_ok: bool,
    /// Smallest ellipticity constant of the scalar systems over the probe
    /// points.
    pub scalar_lambda_min: f64,
    pub ellipticity_ok: bool,
    pub residual_coupling: f64,
}

/// Build `u+ = φ_δ ⊗ f`, `u- = ψ_δ ⊗ 1_B` with `a(u+, u-) > 0` around `x0`.
#[allow(clippy::too_many_arguments)]
pub fn construct_witness<F: FormEvaluator + ?Sized>(
    form: &F,
    x0: &[f64],
    kt: usize,
    lt: usize,
    q: &CMat,
    delta: Option<f64>,
    tol: f64,
) -> Result<LatticeWitness> {
    let re_q = q.map(|z| C64::new(z.re, 0.0));
    let mult = find_witness(&re_q, tol).ok_or_else(|| {
        Error::ContractViolation("symmetrized coefficient is diagonal; no witness exists".into())
    })?;
    let d = form.dim();
    let dom = form.domain();
    let tau = mult.pairing.re;
    let pair = build_test_pair(tau, kt, lt, d)?;
    let room = dom.distance_to_boundary(x0);
    let mut delta = delta.unwrap_or_else(|| room.min(dom.min_side() / 4.0));
    if !(delta > 0.0) || delta > room * (1.0 + 1e-12) {
        return Err(Error::Geometry {
            center: x0.to_vec(),
            delta,
        });
    }
    let m = form.channels();
    let f: Vec<C64> = mult.f.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut g = vec![C64::default(); m];
    for &i in &mult.b {
        g[i] = C64::new(1.0, 0.0);
    }
    let share = if kt == lt { 0.5 } else { 1.0 };
    for halvings in 0..=40 {
        let (phi, psi) = pair.dilate(x0, delta);
        let value = form.evaluate((&phi, &f), (&psi, &g))?.re;
        let lead = delta.powi(d as i32 - 2) * tau * tau;
        let main = share * lead;
        let error_bound = 0.5 * lead;
        if (value - main).abs() < error_bound && value > 0.0 {
            return Ok(LatticeWitness {
                x0: x0.to_vec(),
                ktilde: kt,
                ltilde: lt,
                mult,
                tau,
                pair,
                delta,
                phi,
                psi,
                value,
                main,
                error_bound,
                halvings,
            });
        }
        delta *= 0.5;
    }
    Err(Error::WitnessNotLocalized {
        point: x0.to_vec(),
        steps: 40,
    })
}

struct PointCheck {
    k: usize,
    l: usize,
    q: CMat,
}

fn first_failure(q: &CMat, tol: f64) -> Option<(bool, (usize, usize))> {
    let m = q.nrows();
    for i in 0..m {
        for j in 0..m {
            if i != j && q[(i, j)].re.abs() > tol {
                return Some((true, (i, j)));
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if q[(i, j)].im.abs() > tol {
                return Some((false, (i, j)));
            }
        }
    }
    None
}

/// The remainder `C_kl - diag(Re C_kl)` assembled on a coarse grid.
fn residual_form(sys: &EllipticSystem, cells: usize) -> Result<Option<DiscreteForm>> {
    let mut coeffs = Vec::with_capacity(sys.coeffs.len());
    for c in &sys.coeffs {
        coeffs.push(c.sub(&c.checked().diagonal_part(), &sys.domain)?);
    }
    if coeffs.iter().all(|c| c.max_abs_entry(&sys.domain) == 0.0) {
        return Ok(None);
    }
    let n = sys
        .coeffs
        .iter()
        .find_map(|c| match c {
            MatrixField::GridSampled(g) => Some(g.cells.clone()),
            _ => None,
        })
        .unwrap_or_else(|| vec![cells; sys.d()]);
    let residual = EllipticSystem::new(sys.domain.clone(), coeffs, sys.bc, 0.0)?;
    let grid = Grid::new(sys.domain.clone(), n, sys.bc)?;
    Ok(Some(assemble(&residual, &grid)?))
}

pub fn decide_decoupling(sys: &EllipticSystem, opts: &DecisionOptions) -> Result<Verdict> {
    if !(sys.mu > 0.0) {
        return Err(Error::Argument(format!(
            "declared ellipticity constant {} must be positive",
            sys.mu
        )));
    }
    let mut ell = sys.check_ellipticity(&[])?;
    if !ell.passed && sys.bc == Bc::Dirichlet {
        let normal = sys.gauge_normalized()?.check_ellipticity(&[])?;
        if normal.passed {
            ell = normal;
        }
    }
    if !ell.passed {
        return Err(Error::NotElliptic {
            lambda_min: ell.lambda_min,
            mu: sys.mu,
        });
    }
    let bound = sys.bound();
    let tol = opts.tol.unwrap_or(match opts.source {
        Source::Direct => 1e-8 * bound.max(1.0),
        Source::Probe => 1e-5 * bound.max(1.0),
    });
    let points = opts.points.clone().unwrap_or_else(|| default_probe_points(sys));
    if points.is_empty() {
        return Err(Error::Argument("no probe points".into()));
    }
    let d = sys.d();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|k| (k..d).map(move |l| (k, l))).collect();

    let checks: Vec<Result<Option<Vec<PointCheck>>>> = points
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(pairs.len());
            for &(k, l) in &pairs {
                let q = match opts.source {
                    Source::Direct => sys.symmetrized(k, l, x)?,
                    Source::Probe => {
                        let r = probe(sys, x, k, l, &opts.probe)?;
                        if !r.converged {
                            return Ok(None);
                        }
                        r.estimate
                    }
                };
                out.push(PointCheck { k, l, q });
            }
            Ok(Some(out))
        })
        .collect();

    let mut usable = 0;
    for (x, res) in points.iter().zip(checks) {
        let Some(list) = res? else { continue };
        usable += 1;
        for pc in list {
            let Some((lattice, (i, j))) = first_failure(&pc.q, tol) else { continue };
            let witness = if lattice {
                let w = construct_witness(sys, x, pc.k, pc.l, &pc.q, opts.witness_delta, tol)?;
                Witness::Lattice(Box::new(w))
            } else {
                Witness::NonReal {
                    point: x.clone(),
                    k: pc.k,
                    l: pc.l,
                    entry: (i, j),
                    value: pc.q[(i, j)],
                }
            };
            return Ok(not_positive(witness, tol, bound, points, opts.source, 0.0));
        }
    }
    if usable == 0 {
        return Err(Error::Indeterminate { point: points[0].clone() });
    }

    let mut residual_coupling = 0.0;
    if opts.residual_cells > 0 {
        if let Some(res) = residual_form(sys, opts.residual_cells)? {
            let full = assemble(sys, &res.grid)?;
            let tol_k = 1e-10 * full.max_abs().max(f64::MIN_POSITIVE);
            let m = sys.m;
            residual_coupling = res.max_abs() / full.max_abs().max(f64::MIN_POSITIVE);
            let found = res.stiffness.iter().find(|&(r, c, v)| {
                (r % m != c % m && v.re > tol_k) || v.im.abs() > tol_k
            });
            if let Some((r, c, v)) = found {
                let witness = Witness::GridCoupling {
                    cells: res.grid.n.clone(),
                    minus: (r / m, r % m),
                    plus: (c / m, c % m),
                    minus_node: res.grid.node_coords(r / m),
                    plus_node: res.grid.node_coords(c / m),
                    value: v,
                };
                return Ok(not_positive(witness, tol, bound, points, opts.source, residual_coupling));
            }
        }
    }

    let m = sys.m;
    let scalar_systems: Vec<EllipticSystem> = (0..m).map(|n| sys.channel_system(n)).collect::<Result<_>>()?;
    let mut coefficients = Vec::with_capacity(points.len() * m * d * d);
    let mut bounds_ok = true;
    let mut scalar_lambda_min = f64::INFINITY;
    for x in &points {
        for (n, s) in scalar_systems.iter().enumerate() {
            let c = s.eval_block(x)?;
            for k in 0..d {
                for l in 0..d {
                    let value = c[(k, l)].re;
                    bounds_ok &= value.abs() <= bound * (1.0 + 1e-12);
                    coefficients.push(CoefficientRow {
                        point: x.clone(),
                        channel: n,
                        k,
                        l,
                        value,
                    });
                }
            }
            let h = (&c + c.adjoint()) * C64::new(0.5, 0.0);
            let lam = hermitian_min_eigenvalue(h).ok_or_else(|| Error::Numerical {
                message: "eigensolver failed on extracted coefficients".into(),
                point: Some(x.clone()),
            })?;
            scalar_lambda_min = scalar_lambda_min.min(lam);
        }
    }
    Ok(Verdict {
        decision: Decision::PositiveDecoupled,
        scalar_systems: Some(scalar_systems),
        coefficients,
        witness: None,
        tol,
        bound,
        points,
        source: opts.source,
        bounds_ok,
        ellipticity_ok: scalar_lambda_min >= sys.mu - sys.tol_eig(),
        scalar_lambda_min,
        residual_coupling,
    })
}

fn not_positive(
    witness: Witness,
    tol: f64,
    bound: f64,
    points: Vec<Vec<f64>>,
    source: Source,
    residual_coupling: f64,
) -> Verdict {
    Verdict {
        decision: Decision::NotPositive,
        scalar_systems: None,
        coefficients: Vec::new(),
        witness: Some(witness),
        tol,
        bound,
        points,
        source,
        bounds_ok: true,
        scalar_lambda_min: f64::NAN,
        ellipticity_ok: true,
        residual_coupling,
    }
}

/// `Re (u-)^H K u+`.
pub fn lattice_pairing(form: &DiscreteForm, plus: &[C64], minus: &[C64]) -> f64 {
    form.form(plus, minus).re
}

/// Maximum of `Re (u-)^H K u+` over `count` random real states split into
/// positive and negative parts.
pub fn form_criterion_sample(form: &DiscreteForm, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = form.size();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..count {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plus: Vec<C64> = u.iter().map(|&x| C64::new(x.max(0.0), 0.0)).collect();
        let minus: Vec<C64> = u.iter().map(|&x| C64::new((-x).max(0.0), 0.0)).collect();
        best = best.max(lattice_pairing(form, &plus, &minus));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{real_matrix, PolyMatrix};
    use crate::poly::Polynomial;

    fn off(z: C64) -> CMat {
        let mut a = CMat::zeros(2, 2);
        a[(1, 0)] = z;
        a
    }

    fn system(c12: CMat, c21: CMat, bc: Bc, lo: f64, hi: f64, mu: f64) -> EllipticSystem {
        let six = MatrixField::scalar_identity(2, 6.0);
        EllipticSystem::new(
            BoxDomain::cube(2, lo, hi),
            vec![six.clone(), MatrixField::Constant(c12), MatrixField::Constant(c21), six],
            bc,
            mu,
        )
        .unwrap()
    }

    fn witness_w() -> EllipticSystem {
        let r = off(C64::new(1.0, 0.0));
        system(r.clone(), r, Bc::Dirichlet, -1.0, 1.0, 5.0)
    }

    #[test]
    fn probe_reads_constant_coefficients() {
        let sys = witness_w();
        for (k, l) in [(0, 0), (0, 1), (1, 1)] {
            let r = probe(&sys, &[0.1, -0.2], k, l, &ProbeOptions::default()).unwrap();
            let exact = sys.symmetrized(k, l, &[0.1, -0.2]).unwrap();
            for h in &r.history {
                assert!(max_abs(&(h - &exact)) < 1e-10);
            }
            assert!(r.converged);
        }
    }

    #[test]
    fn probe_converges_at_first_order() {
        let x = Polynomial::coordinate(2, 0);
        let y = Polynomial::coordinate(2, 1);
        let quad = &x + &x.mul_poly(&x);
        let poly = |p: Polynomial| MatrixField::Polynomial(PolyMatrix::new(1, vec![p]).unwrap());
        let one = MatrixField::scalar_identity(1, 1.0);
        let sys = EllipticSystem::new(
            BoxDomain::cube(2, 0.0, 1.0),
            vec![poly(quad.clone()), poly(y), MatrixField::zero(1), one],
            Bc::Dirichlet,
            0.0,
        )
        .unwrap();
        let x0 = [0.3, 0.4];
        for (k, l) in [(0, 0), (0, 1)] {
            let r = probe(&sys, &x0, k, l, &ProbeOptions::default()).unwrap();
            let exact = sys.symmetrized(k, l, &x0).unwrap();
            let errs = r.errors(&exact);
            let order = observed_order(&r.deltas, &errs).unwrap();
            assert!(order > 0.9, "order {order} {errs:?}");
            assert!(r.converged);
            assert!(max_abs(&(&r.estimate - &exact)) < 1e-6, "{k}{l} {} {errs:?}", max_abs(&(&r.estimate - &exact)));
        }
    }

    #[test]
    fn probe_rejects_large_delta() {
        let sys = witness_w();
        let opts = ProbeOptions {
            delta_max: Some(0.5),
            ..Default::default()
        };
        assert!(matches!(
            probe(&sys, &[0.8, 0.0], 0, 1, &opts),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn witness_w_has_value_four() {
        let sys = witness_w();
        let q = sys.symmetrized(0, 1, &[0.0, 0.0]).unwrap();
        let w = construct_witness(&sys, &[0.0, 0.0], 0, 1, &q, Some(0.5), 1e-8).unwrap();
        assert_eq!(w.tau, 2.0);
        assert!((w.value - 4.0).abs() < 1e-10);
        assert_eq!(w.halvings, 0);
        assert!((w.reevaluate(&sys).unwrap() - 4.0).abs() < 1e-10);
        let diag = CMat::identity(2, 2);
        assert!(construct_witness(&sys, &[0.0, 0.0], 0, 1, &diag, None, 1e-8).is_err());
    }

    #[test]
    fn decisions_on_reference_systems() {
        let opts = DecisionOptions::default();
        let v = decide_decoupling(&witness_w(), &opts).unwrap();
        assert_eq!(v.decision, Decision::NotPositive);
        let Some(Witness::Lattice(w)) = &v.witness else { panic!("lattice witness expected") };
        assert_eq!(w.mult.pairing, C64::new(2.0, 0.0));

        let c12 = off(C64::new(3.0, 4.0));
        let ex13 = system(c12.clone(), -c12.clone(), Bc::Dirichlet, -4.0, 4.0, 3.0);
        let v = decide_decoupling(&ex13, &opts).unwrap();
        assert_eq!(v.decision, Decision::PositiveDecoupled);
        assert!(v.bounds_ok && v.ellipticity_ok);
        for row in &v.coefficients {
            let expected = if row.k == row.l { 6.0 } else { 0.0 };
            assert_eq!(row.value, expected);
        }

        let free = system(c12.clone(), -c12, Bc::Free, -4.0, 4.0, 3.0);
        let v = decide_decoupling(&free, &opts).unwrap();
        assert_eq!(v.decision, Decision::NotPositive);
        let w = v.witness.unwrap();
        assert_eq!(w.kind(), "grid-coupling");
        assert!(w.reevaluate(&free).unwrap().re > 0.0);
    }

    #[test]
    fn affine_tests_recover_offdiagonal_average() {
        let c12 = off(C64::new(3.0, 4.0));
        let free = system(c12.clone(), -c12.clone(), Bc::Free, -4.0, 4.0, 3.0);
        let r = extract_offdiag_2d(&free, 1e-8).unwrap();
        assert!(max_abs(&(&r.average_c12 - &c12)) < 1e-12);
        assert!(r.constant_antisymmetric);
        let c = r.c12_at(&free, &[0.5, 0.5]).unwrap();
        assert!(max_abs(&(c - &c12)) < 1e-12);

        let sym = system(real_matrix(2, &[0.0, 1.0, 1.0, 0.0]), real_matrix(2, &[0.0, 1.0, 1.0, 0.0]), Bc::Free, 0.0, 1.0, 1.0);
        assert!(max_abs(&extract_offdiag_2d(&sym, 1e-8).unwrap().antisymmetric) < 1e-13);
        assert!(extract_offdiag_2d(&free.with_bc(Bc::Dirichlet), 1e-8).is_err());
    }

    #[test]
    fn criterion_sample_on_heat() {
        let one = MatrixField::scalar_identity(1, 1.0);
        let sys = EllipticSystem::new(BoxDomain::cube(1, 0.0, 1.0), vec![one], Bc::Dirichlet, 1.0).unwrap();
        let form = assemble(&sys, &Grid::for_system(&sys, 16).unwrap()).unwrap();
        assert!(form_criterion_sample(&form, 50, 7) <= 1e-10);
    }

    #[test]
    fn witness_state_reproduces_value_on_aligned_grid() {
        let sys = witness_w();
        let q = sys.symmetrized(0, 1, &[-0.5, -0.5]).unwrap();
        let w = construct_witness(&sys, &[-0.5, -0.5], 0, 1, &q, Some(0.5), 1e-8).unwrap();
        let grid = Grid::for_system(&sys, 32).unwrap();
        let form = assemble(&sys, &grid).unwrap();
        let (plus, minus) = w.state(&grid);
        assert!((lattice_pairing(&form, &plus, &minus) - 4.0).abs() < 1e-10);
    }
}
