//! Named reference systems and seeded random generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coefficient::{Bc, BoxDomain, EllipticSystem, MatrixField, PolyMatrix};
use crate::poly::Polynomial;
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Expected {
    #[serde(rename = "POSITIVE-DECOUPLED")]
    PositiveDecoupled,
    #[serde(rename = "NOT-POSITIVE")]
    NotPositive,
    /// The form vanishes on all of H¹.
    #[serde(rename = "NULL-FORM")]
    NullForm,
}

impl std::fmt::Display for Expected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Expected::PositiveDecoupled => "POSITIVE-DECOUPLED",
            Expected::NotPositive => "NOT-POSITIVE",
            Expected::NullForm => "NULL-FORM",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: String,
    pub system: EllipticSystem,
    pub expected: Expected,
    pub notes: String,
    /// Cells per axis used when nothing else is requested.
    pub default_grid: usize,
}

pub const NAMES: [&str; 9] = [
    "ex1_3",
    "ex1_3_entry1",
    "ex1_3_free",
    "ex3_5_nullform",
    "ex5_5",
    "scalar_heat",
    "witness_W",
    "rand_decoupled",
    "rand_coupled",
];

/// Look up an entry; random generators take a seed as `name(7)` or `name:7`
/// (seed 0 when omitted).
pub fn get(name: &str) -> Result<CatalogEntry> {
    let name = name.trim();
    let (base, seed) = split_seed(name)?;
    let entry = match base {
        "ex1_3" => ex1_3(C64::new(3.0, 4.0), Bc::Dirichlet, "ex1_3"),
        "ex1_3_entry1" => ex1_3(C64::new(1.0, 0.0), Bc::Dirichlet, "ex1_3_entry1"),
        "ex1_3_free" => ex1_3(C64::new(3.0, 4.0), Bc::Free, "ex1_3_free"),
        "ex3_5_nullform" => ex3_5_nullform(),
        "ex5_5" => ex5_5(),
        "scalar_heat" => scalar_heat(),
        "witness_W" => witness_w(),
        "rand_decoupled" => rand_decoupled(seed.unwrap_or(0)),
        "rand_coupled" => rand_coupled(seed.unwrap_or(0)),
        _ => return Err(Error::UnknownEntry(name.to_string())),
    };
    if seed.is_some() && !base.starts_with("rand_") {
        return Err(Error::UnknownEntry(name.to_string()));
    }
    Ok(entry)
}

fn split_seed(name: &str) -> Result<(&str, Option<u64>)> {
    let bad = || Error::UnknownEntry(name.to_string());
    if let Some((base, rest)) = name.split_once('(') {
        let digits = rest.strip_suffix(')').ok_or_else(bad)?;
        return Ok((base, Some(digits.trim().parse().map_err(|_| bad())?)));
    }
    if let Some((base, digits)) = name.split_once(':') {
        return Ok((base, Some(digits.trim().parse().map_err(|_| bad())?)));
    }
    Ok((name, None))
}

/// Every named entry, with seed 0 for the generators.
pub fn list() -> Vec<CatalogEntry> {
    NAMES.iter().map(|n| get(n).expect("catalog names resolve")).collect()
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn system(domain: BoxDomain, coeffs: Vec<MatrixField>, bc: Bc, mu: f64) -> EllipticSystem {
    EllipticSystem::new(domain, coeffs, bc, mu).expect("catalog systems are well formed")
}

fn ex1_3(z: C64, bc: Bc, name: &str) -> CatalogEntry {
    let six = MatrixField::scalar_identity(2, 6.0);
    let mut c12 = CMat::zeros(2, 2);
    c12[(1, 0)] = z;
    let c21 = -c12.clone();
    let sys = system(
        BoxDomain::cube(2, -4.0, 4.0),
        vec![six.clone(), MatrixField::Constant(c12), MatrixField::Constant(c21), six],
        bc,
        3.0,
    );
    let (expected, notes) = match bc {
        Bc::Dirichlet => (
            Expected::PositiveDecoupled,
            format!(
                "two channels, C11 = C22 = 6I, C12 = -C21 maps channel 1 to channel 2 with factor {z}; \
                 the antisymmetric coupling is invisible on H1_0"
            ),
        ),
        Bc::Free => (
            Expected::NotPositive,
            format!("same coefficients as ex1_3 with factor {z}, but free boundary: the coupling acts through boundary terms"),
        ),
    };
    CatalogEntry {
        name: name.to_string(),
        system: sys,
        expected,
        notes,
        default_grid: 16,
    }
}

/// `x_i^2 - 1` in three variables.
fn bubble(i: usize) -> Polynomial {
    let mut e = vec![0; 3];
    e[i] = 2;
    Polynomial::from_terms(3, 2, [(e, c(1.0)), (vec![0; 3], c(-1.0))]).expect("degree 2")
}

/// The three antisymmetric coefficients `c12, c13, c23` on `(-1,1)^3`.
pub fn nullform_coefficients() -> [Polynomial; 3] {
    let x = |i| Polynomial::coordinate(3, i);
    let c12 = -&bubble(0).mul_poly(&bubble(1)).mul_poly(&x(2));
    let c13 = bubble(0).mul_poly(&bubble(2)).mul_poly(&x(1));
    let c23 = -&bubble(1).mul_poly(&bubble(2)).mul_poly(&x(0));
    [c12, c13, c23]
}

/// `c_kl` with `c_lk = -c_kl` and zero diagonal, 0-based.
pub fn nullform_entry(k: usize, l: usize) -> Polynomial {
    let [c12, c13, c23] = nullform_coefficients();
    match (k, l) {
        (0, 1) => c12,
        (0, 2) => c13,
        (1, 2) => c23,
        (1, 0) => -&c12,
        (2, 0) => -&c13,
        (2, 1) => -&c23,
        _ => Polynomial::zero(3, 0),
    }
}

fn ex3_5_nullform() -> CatalogEntry {
    let coeffs = (0..3)
        .flat_map(|k| (0..3).map(move |l| (k, l)))
        .map(|(k, l)| MatrixField::Polynomial(PolyMatrix::new(1, vec![nullform_entry(k, l)]).expect("1x1")))
        .collect();
    CatalogEntry {
        name: "ex3_5_nullform".into(),
        system: system(BoxDomain::cube(3, -1.0, 1.0), coeffs, Bc::Free, 0.0),
        expected: Expected::NullForm,
        notes: "scalar, zero diagonal, antisymmetric cubic coefficients vanishing on the faces; \
                the form is zero on H1((-1,1)^3)"
            .into(),
        default_grid: 8,
    }
}

fn ex5_5() -> CatalogEntry {
    let coeffs = (0..3)
        .flat_map(|k| (0..3).map(move |l| (k, l)))
        .map(|(k, l)| {
            if k == l {
                MatrixField::scalar_identity(2, 6.0)
            } else {
                let mut pm = PolyMatrix::zero(2, 3);
                pm.set(0, 1, nullform_entry(k, l));
                MatrixField::Polynomial(pm)
            }
        })
        .collect();
    CatalogEntry {
        name: "ex5_5".into(),
        system: system(BoxDomain::cube(3, -1.0, 1.0), coeffs, Bc::Free, 4.0),
        expected: Expected::PositiveDecoupled,
        notes: "two channels on (-1,1)^3, C_kk = 6I, C_kl sends channel 2 to channel 1 with the \
                null-form coefficient c_kl; the coupling never enters the form"
            .into(),
        default_grid: 4,
    }
}

fn scalar_heat() -> CatalogEntry {
    let one = MatrixField::scalar_identity(1, 1.0);
    let zero = MatrixField::zero(1);
    CatalogEntry {
        name: "scalar_heat".into(),
        system: system(BoxDomain::cube(2, 0.0, 1.0), vec![one.clone(), zero.clone(), zero, one], Bc::Dirichlet, 1.0),
        expected: Expected::PositiveDecoupled,
        notes: "the Dirichlet Laplacian on the unit square".into(),
        default_grid: 16,
    }
}

fn witness_w() -> CatalogEntry {
    let six = MatrixField::scalar_identity(2, 6.0);
    let mut r = CMat::zeros(2, 2);
    r[(1, 0)] = c(1.0);
    CatalogEntry {
        name: "witness_W".into(),
        system: system(
            BoxDomain::cube(2, -1.0, 1.0),
            vec![six.clone(), MatrixField::Constant(r.clone()), MatrixField::Constant(r), six],
            Bc::Dirichlet,
            5.0,
        ),
        expected: Expected::NotPositive,
        notes: "C11 = C22 = 6I, C12 = C21 = E21: a symmetric real coupling between the channels".into(),
        default_grid: 16,
    }
}

const RAND_MU: f64 = 1.0;
/// Bound on each random polynomial over the unit square.
const RAND_BOUND: f64 = 0.6;

/// Random real polynomial of total degree at most 2 in two variables with
/// `|p| <= RAND_BOUND` on the unit square.
fn random_quadratic(rng: &mut ChaCha8Rng) -> Polynomial {
    let exps = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
    let terms: Vec<(Vec<u32>, C64)> = exps
        .iter()
        .map(|e| (e.to_vec(), c(rng.random_range(-RAND_BOUND / 6.0..RAND_BOUND / 6.0))))
        .collect();
    Polynomial::from_terms(2, 2, terms).expect("degree 2")
}

/// Diagonal real polynomial coefficients on the unit square; the shift on the
/// diagonal keeps the system elliptic with constant 1 even after a coupling
/// of norm up to 0.5 is added.
fn random_diagonal(rng: &mut ChaCha8Rng) -> (usize, Vec<PolyMatrix>) {
    let d = 2;
    let m = rng.random_range(2..=3);
    let shift = RAND_MU + d as f64 * RAND_BOUND + 1.0;
    let coeffs = (0..d * d)
        .map(|kl| {
            let mut pm = PolyMatrix::zero(m, d);
            for n in 0..m {
                let mut p = random_quadratic(rng);
                if kl / d == kl % d {
                    p = &p + &Polynomial::constant(d, c(shift));
                }
                pm.set(n, n, p);
            }
            pm
        })
        .collect();
    (m, coeffs)
}

fn rand_decoupled(seed: u64) -> CatalogEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, coeffs) = random_diagonal(&mut rng);
    CatalogEntry {
        name: format!("rand_decoupled({seed})"),
        system: system(
            BoxDomain::cube(2, 0.0, 1.0),
            coeffs.into_iter().map(MatrixField::Polynomial).collect(),
            Bc::Dirichlet,
            RAND_MU,
        ),
        expected: Expected::PositiveDecoupled,
        notes: format!("{m} channels, diagonal real quadratic coefficients, Dirichlet unit square"),
        default_grid: 8,
    }
}

fn rand_coupled(seed: u64) -> CatalogEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let norm = rng.random_range(0.1..=0.5);
    rand_coupled_with_norm(seed, norm)
}

/// `rand_decoupled(seed)` plus a constant symmetric zero-diagonal real
/// matrix `P` with `||P||_2 = norm` added to both `C12` and `C21`.
pub fn rand_coupled_with_norm(seed: u64, norm: f64) -> CatalogEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, coeffs) = random_diagonal(&mut rng);
    let mut p = CMat::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = c(rng.random_range(-1.0..1.0));
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let s = crate::coefficient::operator_norm(&p);
    let p = if s > 0.0 { p * c(norm / s) } else { p };
    let coupling = PolyMatrix::from_constant(&p, 2);
    let coeffs: Vec<MatrixField> = coeffs
        .into_iter()
        .enumerate()
        .map(|(kl, pm)| {
            let pm = if kl == 1 || kl == 2 {
                let mut out = pm.clone();
                for i in 0..m {
                    for j in 0..m {
                        out.set(i, j, pm.get(i, j) + coupling.get(i, j));
                    }
                }
                out
            } else {
                pm
            };
            MatrixField::Polynomial(pm)
        })
        .collect();
    CatalogEntry {
        name: format!("rand_coupled({seed})"),
        system: system(BoxDomain::cube(2, 0.0, 1.0), coeffs, Bc::Dirichlet, RAND_MU),
        expected: Expected::NotPositive,
        notes: format!("rand_decoupled({seed}) plus a symmetric real channel coupling of norm {norm:.3} in C12 and C21"),
        default_grid: 8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, Grid};
    use crate::multop::is_multiplication;

    #[test]
    fn names_resolve_and_seeds_parse() {
        assert_eq!(list().len(), NAMES.len());
        let a = get("rand_coupled(3)").unwrap();
        let b = get("rand_coupled:3").unwrap();
        assert_eq!(a.name, b.name);
        assert_eq!(a.system.eval(0, 1, &[0.3, 0.2]).unwrap(), b.system.eval(0, 1, &[0.3, 0.2]).unwrap());
        assert!(matches!(get("nope"), Err(Error::UnknownEntry(_))));
        assert!(get("ex1_3(2)").is_err());
        assert!(get("rand_coupled(x)").is_err());
    }

    #[test]
    fn curl_identities_and_boundary_vanishing() {
        let [c12, c13, c23] = nullform_coefficients();
        assert_eq!(c12.derivative(1), -&c13.derivative(2));
        assert_eq!(c12.derivative(0), c23.derivative(2));
        assert_eq!(c13.derivative(0), -&c23.derivative(1));
        let pairs = [(0, 1, &c12), (0, 2, &c13), (1, 2, &c23)];
        let t = [-0.9, -0.3, 0.2, 0.7];
        for (k, l, p) in pairs {
            for face in [-1.0, 1.0] {
                for &a in &t {
                    for &b in &t {
                        for axis in [k, l] {
                            let mut x = [a, b, 0.5 * (a - b)];
                            x[axis] = face;
                            assert!(p.eval(&x).norm() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nullform_assembles_to_zero() {
        let e = get("ex3_5_nullform").unwrap();
        for n in [2, 4] {
            let form = assemble(&e.system, &Grid::for_system(&e.system, n).unwrap()).unwrap();
            assert!(form.max_abs() <= 1e-10, "{}", form.max_abs());
        }
    }

    #[test]
    fn ex5_5_coupling_is_not_multiplication() {
        let e = get("ex5_5").unwrap();
        for x in [[0.3, -0.2, 0.5], [-0.7, 0.1, 0.4]] {
            let c12 = e.system.eval(0, 1, &x).unwrap();
            assert!(c12[(0, 1)].norm() > 0.0);
            assert!(!is_multiplication(&c12, 1e-12));
            assert!(is_multiplication(&e.system.symmetrized(0, 1, &x).unwrap(), 1e-12));
        }
    }

    #[test]
    fn declared_constants_hold() {
        for e in list() {
            let r = e.system.check_ellipticity(&[]).unwrap();
            assert!(r.passed, "{}: {} < {}", e.name, r.lambda_min, e.system.mu);
        }
        for seed in 0..20 {
            for e in [get(&format!("rand_decoupled({seed})")).unwrap(), get(&format!("rand_coupled({seed})")).unwrap()] {
                assert!(e.system.check_ellipticity(&[]).unwrap().passed, "{}", e.name);
            }
        }
    }
}
