//! Q1 Galerkin assembly of `a(u, v) = Σ_kl ∫ (C_kl ∂_l u, ∂_k v)` on uniform
//! box grids, and exact evaluation of the form on tensor test functions.

use std::io::Write;

use rayon::prelude::*;

use crate::coefficient::{Bc, BoxDomain, EllipticSystem, MatrixField};
use crate::poly::Polynomial;
use crate::quadrature;
use crate::sparse::CsrMatrix;
use crate::tents::{exact_integral, exact_integral_cells, hat, Factor, TensorTestFunction};
use crate::{CMat, Error, Result, C64};

/// Uniform grid of `n[i]` cells along axis `i`. Nodes are numbered with the
/// first axis varying fastest; Dirichlet grids keep interior nodes only.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub domain: BoxDomain,
    pub n: Vec<usize>,
    pub bc: Bc,
}

impl Grid {
    pub fn new(domain: BoxDomain, n: Vec<usize>, bc: Bc) -> Result<Self> {
        if n.len() != domain.dim() || n.contains(&0) {
            return Err(Error::Shape(format!(
                "cell counts {n:?} for a {}-dimensional box",
                domain.dim()
            )));
        }
        Ok(Self { domain, n, bc })
    }

    pub fn uniform(domain: BoxDomain, n: usize, bc: Bc) -> Result<Self> {
        let d = domain.dim();
        Self::new(domain, vec![n; d], bc)
    }

    pub fn for_system(sys: &EllipticSystem, n: usize) -> Result<Self> {
        Self::uniform(sys.domain.clone(), n, sys.bc)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn h(&self, i: usize) -> f64 {
        self.domain.side(i) / self.n[i] as f64
    }

    fn first_node(&self) -> usize {
        match self.bc {
            Bc::Dirichlet => 1,
            Bc::Free => 0,
        }
    }

    /// Nodes per axis that carry unknowns.
    pub fn nodes_per_axis(&self, i: usize) -> usize {
        match self.bc {
            Bc::Dirichlet => self.n[i] - 1,
            Bc::Free => self.n[i] + 1,
        }
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim()).map(|i| self.nodes_per_axis(i)).product()
    }

    pub fn cell_count(&self) -> usize {
        self.n.iter().product()
    }

    /// Unknown index of the node with grid coordinates `idx`.
    pub fn node_index(&self, idx: &[usize]) -> Option<usize> {
        let mut out = 0;
        let mut stride = 1;
        for i in 0..self.dim() {
            let local = idx[i].checked_sub(self.first_node())?;
            if local >= self.nodes_per_axis(i) {
                return None;
            }
            out += local * stride;
            stride *= self.nodes_per_axis(i);
        }
        Some(out)
    }

    /// Grid coordinates of unknown `p`.
    pub fn node_multi(&self, mut p: usize) -> Vec<usize> {
        (0..self.dim())
            .map(|i| {
                let n = self.nodes_per_axis(i);
                let c = p % n;
                p /= n;
                c + self.first_node()
            })
            .collect()
    }

    pub fn node_coords(&self, p: usize) -> Vec<f64> {
        self.node_multi(p)
            .iter()
            .enumerate()
            .map(|(i, &c)| self.domain.lo[i] + c as f64 * self.h(i))
            .collect()
    }

    /// The Q1 basis function of unknown `p` as a tensor test function.
    pub fn basis(&self, p: usize) -> TensorTestFunction {
        let x = self.node_coords(p);
        let factors = (0..self.dim()).map(|i| hat().affine(x[i], self.h(i))).collect();
        TensorTestFunction::global(1.0, factors)
    }

    /// `∫ b_p` (lumped mass).
    pub fn lumped_mass(&self, p: usize) -> f64 {
        self.node_multi(p)
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let h = self.h(i);
                if c == 0 || c == self.n[i] {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    fn cell_multi(&self, mut c: usize) -> Vec<usize> {
        self.n
            .iter()
            .map(|&n| {
                let ci = c % n;
                c /= n;
                ci
            })
            .collect()
    }

    fn cell_lo(&self, cm: &[usize]) -> Vec<f64> {
        cm.iter()
            .enumerate()
            .map(|(i, &c)| self.domain.lo[i] + c as f64 * self.h(i))
            .collect()
    }

    /// Unknown indices of the `2^d` corners of cell `c` (bit `i` of the local
    /// index selects the upper node along axis `i`).
    fn cell_dofs(&self, c: usize) -> Vec<Option<usize>> {
        let cm = self.cell_multi(c);
        let d = self.dim();
        (0..1usize << d)
            .map(|a| {
                let idx: Vec<usize> = (0..d).map(|i| cm[i] + ((a >> i) & 1)).collect();
                self.node_index(&idx)
            })
            .collect()
    }

    /// Nodal interpolant of `f` in node-major, channel-minor layout.
    pub fn interpolate(&self, m: usize, f: impl Fn(&[f64]) -> Vec<C64>) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.node_count() * m);
        for p in 0..self.node_count() {
            let v = f(&self.node_coords(p));
            out.extend_from_slice(&v[..m]);
        }
        out
    }
}

/// Assembled stiffness `K` and lumped mass; unknown `(p, i)` sits at
/// `p * m + i`.
#[derive(Clone, Debug)]
pub struct DiscreteForm {
    pub grid: Grid,
    pub m: usize,
    pub stiffness: CsrMatrix<C64>,
    pub mass: Vec<f64>,
}

impl DiscreteForm {
    pub fn size(&self) -> usize {
        self.grid.node_count() * self.m
    }

    /// `v^H K u`, the discrete `a(u, v)`.
    pub fn form(&self, u: &[C64], v: &[C64]) -> C64 {
        self.stiffness
            .matvec(u)
            .iter()
            .zip(v)
            .map(|(ku, vi)| vi.conj() * ku)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.stiffness.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.stiffness.iter().map(|(_, _, v)| v.im.abs()).fold(0.0, f64::max)
    }

    /// Largest entry coupling different channels.
    pub fn channel_coupling(&self) -> f64 {
        let m = self.m;
        self.stiffness
            .iter()
            .filter(|(r, c, _)| r % m != c % m)
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Matrix Market coordinate export with 1-based indices.
    pub fn write_matrix_market(&self, out: &mut impl Write) -> std::io::Result<()> {
        write_matrix_market(&self.stiffness, out)
    }
}

pub fn write_matrix_market(k: &CsrMatrix<C64>, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(out, "{} {} {}", k.nrows(), k.ncols(), k.nnz())?;
    for (r, c, v) in k.iter() {
        writeln!(
            out,
            "{} {} {} {}",
            r + 1,
            c + 1,
            crate::fmt::g17(v.re),
            crate::fmt::g17(v.im)
        )?;
    }
    Ok(())
}

fn quad_points(sys: &EllipticSystem, axis: usize) -> usize {
    let deg = sys
        .coeffs
        .iter()
        .map(|c| c.degree_in(axis))
        .max()
        .unwrap_or(0);
    // integrand: coefficient × (basis or derivative) × (basis or derivative)
    (deg + 3).div_ceil(2).max(2)
}

/// Values and gradients of the `2^d` local basis functions at reference point
/// `t` of a cell with spacings `h`.
fn local_basis(t: &[f64], h: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = t.len();
    let nb = 1usize << d;
    let mut val = vec![1.0; nb];
    let mut grad = vec![vec![1.0; d]; nb];
    for a in 0..nb {
        for i in 0..d {
            let up = (a >> i) & 1 == 1;
            let v = if up { t[i] } else { 1.0 - t[i] };
            let dv = if up { 1.0 } else { -1.0 } / h[i];
            val[a] *= v;
            for (k, g) in grad[a].iter_mut().enumerate() {
                *g *= if k == i { dv } else { v };
            }
        }
    }
    (val, grad)
}

pub fn assemble(sys: &EllipticSystem, grid: &Grid) -> Result<DiscreteForm> {
    if grid.domain != sys.domain {
        return Err(Error::Shape("grid box differs from system box".into()));
    }
    let d = grid.dim();
    let m = sys.m;
    let h: Vec<f64> = (0..d).map(|i| grid.h(i)).collect();
    let nq: Vec<usize> = (0..d).map(|i| quad_points(sys, i)).collect();
    let rules: Vec<_> = nq.iter().map(|&n| quadrature::rule(n)).collect();
    let total_q: usize = nq.iter().product();
    let nb = 1usize << d;

    // reference quadrature points in [0,1]^d with weights
    let qpts: Vec<(Vec<f64>, f64)> = (0..total_q)
        .map(|mut q| {
            let mut t = Vec::with_capacity(d);
            let mut w = 1.0;
            for (i, r) in rules.iter().enumerate() {
                let j = q % nq[i];
                q /= nq[i];
                t.push(0.5 * (r.nodes[j] + 1.0));
                w *= 0.5 * r.weights[j] * h[i];
            }
            (t, w)
        })
        .collect();
    let basis: Vec<_> = qpts.iter().map(|(t, _)| local_basis(t, &h)).collect();

    let locals: Vec<Vec<(usize, usize, C64)>> = (0..grid.cell_count())
        .into_par_iter()
        .map(|c| {
            let dofs = grid.cell_dofs(c);
            let cm = grid.cell_multi(c);
            let lo = grid.cell_lo(&cm);
            let centre: Vec<f64> = (0..d).map(|i| lo[i] + 0.5 * h[i]).collect();
            let mut local = vec![C64::default(); nb * nb * m * m];
            for (q, (t, w)) in qpts.iter().enumerate() {
                let x: Vec<f64> = (0..d).map(|i| lo[i] + t[i] * h[i]).collect();
                let grads = &basis[q].1;
                for k in 0..d {
                    for l in 0..d {
                        let field = sys.coeff(k, l);
                        let cx = match field {
                            MatrixField::GridSampled(_) => field.eval_unchecked(&sys.domain, &centre),
                            _ => field.eval_unchecked(&sys.domain, &x),
                        };
                        if cx.iter().all(|z| *z == C64::default()) {
                            continue;
                        }
                        for a in 0..nb {
                            if dofs[a].is_none() {
                                continue;
                            }
                            let gk = grads[a][k];
                            for b in 0..nb {
                                if dofs[b].is_none() {
                                    continue;
                                }
                                let s = w * grads[b][l] * gk;
                                if s == 0.0 {
                                    continue;
                                }
                                for i in 0..m {
                                    for j in 0..m {
                                        local[((a * nb + b) * m + i) * m + j] += cx[(i, j)] * s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let mut trip = Vec::new();
            for a in 0..nb {
                let Some(p) = dofs[a] else { continue };
                for b in 0..nb {
                    let Some(qd) = dofs[b] else { continue };
                    for i in 0..m {
                        for j in 0..m {
                            let v = local[((a * nb + b) * m + i) * m + j];
                            if v != C64::default() {
                                trip.push((p * m + i, qd * m + j, v));
                            }
                        }
                    }
                }
            }
            trip
        })
        .collect();

    let n = grid.node_count() * m;
    let triplets = locals.into_iter().flatten().collect();
    let stiffness = CsrMatrix::from_triplets(n, n, triplets);
    let mass = (0..grid.node_count()).map(|p| grid.lumped_mass(p)).collect();
    Ok(DiscreteForm {
        grid: grid.clone(),
        m,
        stiffness,
        mass,
    })
}

/// Scalar field `x -> g^H C(x) f` of a constant or polynomial field.
fn paired_poly(field: &MatrixField, f: &[C64], g: &[C64], dim: usize) -> Option<Polynomial> {
    let pm = field.as_poly(dim)?;
    let m = pm.m();
    let mut acc = Polynomial::zero(dim, pm.get(0, 0).max_degree());
    for i in 0..m {
        if g[i] == C64::default() {
            continue;
        }
        for j in 0..m {
            let w = g[i].conj() * f[j];
            if w != C64::default() {
                acc = &acc + &pm.get(i, j).scale(w);
            }
        }
    }
    Some(acc)
}

/// Exact `a(φ ⊗ f, ψ ⊗ g)` over the system box.
pub fn form_value(
    sys: &EllipticSystem,
    u: (&TensorTestFunction, &[C64]),
    v: (&TensorTestFunction, &[C64]),
) -> Result<C64> {
    let (phi, f) = u;
    let (psi, g) = v;
    let d = sys.d();
    if phi.dim() != d || psi.dim() != d || f.len() != sys.m || g.len() != sys.m {
        return Err(Error::Shape("test function or channel vector does not match the system".into()));
    }
    let mut total = C64::default();
    for k in 0..d {
        for l in 0..d {
            let factors = [Factor::partial(phi, l), Factor::partial(psi, k)];
            let field = sys.coeff(k, l);
            match field {
                MatrixField::GridSampled(cells) => {
                    for i in 0..sys.m {
                        for j in 0..sys.m {
                            let w = g[i].conj() * f[j];
                            if w != C64::default() {
                                total += w * exact_integral_cells(&factors, cells, (i, j), &sys.domain)?;
                            }
                        }
                    }
                }
                _ => {
                    let p = paired_poly(field, f, g, d).expect("not a grid field");
                    if !p.is_zero() {
                        total += exact_integral(&factors, Some(&p), Some(&sys.domain))?;
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Scalar matrix `D[p, q] = ∫ ∂_l b_q ∂_k b_p`.
pub fn directional_stiffness(grid: &Grid, k: usize, l: usize) -> Result<CsrMatrix<f64>> {
    let d = grid.dim();
    if k >= d || l >= d {
        return Err(Error::Argument(format!("direction ({k}, {l}) out of range")));
    }
    let mut coeffs = vec![MatrixField::zero(1); d * d];
    coeffs[k * d + l] = MatrixField::scalar_identity(1, 1.0);
    let sys = EllipticSystem::new(grid.domain.clone(), coeffs, grid.bc, 0.0)?;
    Ok(assemble(&sys, grid)?.stiffness.map(|z| z.re))
}

/// `|∫ (B ∂_l u, ∂_k v) - ∫ (B ∂_k u, ∂_l v)|` for Q1 states on a Dirichlet
/// grid.
pub fn commutation_residual(grid: &Grid, b: &CMat, u: &[C64], v: &[C64], k: usize, l: usize) -> Result<f64> {
    if grid.bc != Bc::Dirichlet {
        return Err(Error::Unsupported(
            "the commutation identity holds only with Dirichlet conditions".into(),
        ));
    }
    let m = b.nrows();
    let n = grid.node_count();
    if u.len() != n * m || v.len() != n * m {
        return Err(Error::Shape("state length does not match grid and channels".into()));
    }
    let pairing = |dk: usize, dl: usize| -> Result<C64> {
        let dmat = directional_stiffness(grid, dk, dl)?;
        let mut acc = C64::default();
        for (p, q, w) in dmat.iter() {
            for i in 0..m {
                let vi = v[p * m + i].conj();
                if vi == C64::default() {
                    continue;
                }
                for j in 0..m {
                    acc += vi * b[(i, j)] * u[q * m + j] * w;
                }
            }
        }
        Ok(acc)
    };
    if k == l {
        return Ok(0.0);
    }
    Ok((pairing(k, l)? - pairing(l, k)?).norm())
}
