//! TOML run configuration and inline system definitions.
//!
//! Complex numbers are written as `[re, im]`; channel and direction indices
//! are 1-based.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{self, CatalogEntry};
use crate::coefficient::{Bc, BoxDomain, CellField, EllipticSystem, MatrixField, PolyMatrix};
use crate::poly::{Polynomial, DEFAULT_MAX_DEGREE};
use crate::{CMat, Error, Result, C64};

type Complex = [f64; 2];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<Bc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub channels: usize,
    pub bc: Bc,
    pub mu: f64,
    #[serde(default)]
    pub coefficients: Vec<CoefficientDef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Constant,
    Polynomial,
    Grid,
}

/// One `C_kl`. Constant fields use `matrix` (rows of `[re, im]`), polynomial
/// fields use `entries`, grid fields use `cells` and one matrix per cell in
/// `values` (first axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientDef {
    pub k: usize,
    pub l: usize,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<Complex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<PolyEntryDef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<Vec<Complex>>>>,
}

/// Matrix entry `(i, j)` as a list of `(exponents, [re, im])` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyEntryDef {
    pub i: usize,
    pub j: usize,
    pub terms: Vec<(Vec<u32>, Complex)>,
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn to_c(z: Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn from_c(z: C64) -> Complex {
    [z.re, z.im]
}

fn matrix_from_rows(rows: &[Vec<Complex>], m: usize, at: &str) -> Result<CMat> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(cfg(format!("{at}: expected a {m}x{m} matrix")));
    }
    Ok(CMat::from_fn(m, m, |i, j| to_c(rows[i][j])))
}

fn matrix_rows(a: &CMat) -> Vec<Vec<Complex>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| from_c(a[(i, j)])).collect())
        .collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| cfg(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => cfg(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.catalog.is_some() && self.system.is_some() {
            return Err(cfg("give either `catalog` or a `[system]` table, not both"));
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(cfg(format!("`{name}` must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("tol", self.tol)?;
        positive("delta_max", self.delta_max)?;
        if self.grid == Some(0) {
            return Err(cfg("`grid` must be at least 1"));
        }
        if let Some(ts) = &self.times {
            for &t in ts {
                positive("times", Some(t))?;
            }
        }
        Ok(())
    }

    /// The configured system with any `bc` override applied.
    pub fn resolve(&self) -> Result<(EllipticSystem, Option<CatalogEntry>)> {
        let (sys, entry) = match (&self.catalog, &self.system) {
            (Some(name), None) => {
                let e = catalog::get(name)?;
                (e.system.clone(), Some(e))
            }
            (None, Some(def)) => (def.build()?, None),
            _ => return Err(cfg("no system given: set `catalog` or a `[system]` table")),
        };
        Ok(match self.bc {
            Some(bc) => (sys.with_bc(bc), entry),
            None => (sys, entry),
        })
    }
}

impl SystemDef {
    pub fn from_system(sys: &EllipticSystem) -> Self {
        let d = sys.d();
        let mut coefficients = Vec::new();
        for k in 0..d {
            for l in 0..d {
                let (kind, matrix, entries, cells, values) = match sys.coeff(k, l) {
                    MatrixField::Constant(a) => {
                        if a.iter().all(|z| z.norm_sqr() == 0.0) {
                            continue;
                        }
                        (FieldKind::Constant, Some(matrix_rows(a)), None, None, None)
                    }
                    MatrixField::Polynomial(pm) => {
                        let m = pm.m();
                        let entries = (0..m)
                            .flat_map(|i| (0..m).map(move |j| (i, j)))
                            .filter(|&(i, j)| !pm.get(i, j).is_zero())
                            .map(|(i, j)| PolyEntryDef {
                                i: i + 1,
                                j: j + 1,
                                terms: pm.get(i, j).terms().map(|(e, c)| (e.to_vec(), from_c(c))).collect(),
                            })
                            .collect();
                        (FieldKind::Polynomial, None, Some(entries), None, None)
                    }
                    MatrixField::GridSampled(g) => (
                        FieldKind::Grid,
                        None,
                        None,
                        Some(g.cells.clone()),
                        Some(g.values.iter().map(matrix_rows).collect()),
                    ),
                };
                coefficients.push(CoefficientDef {
                    k: k + 1,
                    l: l + 1,
                    kind,
                    matrix,
                    entries,
                    cells,
                    values,
                });
            }
        }
        Self {
            lo: sys.domain.lo.clone(),
            hi: sys.domain.hi.clone(),
            channels: sys.m,
            bc: sys.bc,
            mu: sys.mu,
            coefficients,
        }
    }

    pub fn build(&self) -> Result<EllipticSystem> {
        let domain = BoxDomain::new(self.lo.clone(), self.hi.clone()).map_err(|e| cfg(format!("system: {e}")))?;
        let d = domain.dim();
        let m = self.channels;
        if m == 0 {
            return Err(cfg("system.channels must be at least 1"));
        }
        let mut coeffs: Vec<Option<MatrixField>> = vec![None; d * d];
        for (n, c) in self.coefficients.iter().enumerate() {
            let at = format!("system.coefficients[{n}]");
            if c.k == 0 || c.l == 0 || c.k > d || c.l > d {
                return Err(cfg(format!("{at}: (k, l) = ({}, {}) outside 1..={d}", c.k, c.l)));
            }
            let slot = &mut coeffs[(c.k - 1) * d + c.l - 1];
            if slot.is_some() {
                return Err(cfg(format!("{at}: C_{}{} given twice", c.k, c.l)));
            }
            let missing = |f: &str| cfg(format!("{at}: kind {:?} needs `{f}`", c.kind));
            *slot = Some(match c.kind {
                FieldKind::Constant => {
                    let rows = c.matrix.as_ref().ok_or_else(|| missing("matrix"))?;
                    MatrixField::Constant(matrix_from_rows(rows, m, &at)?)
                }
                FieldKind::Polynomial => {
                    let entries = c.entries.as_ref().ok_or_else(|| missing("entries"))?;
                    let mut pm = PolyMatrix::zero(m, d);
                    for (t, e) in entries.iter().enumerate() {
                        if e.i == 0 || e.j == 0 || e.i > m || e.j > m {
                            return Err(cfg(format!("{at}.entries[{t}]: (i, j) = ({}, {}) outside 1..={m}", e.i, e.j)));
                        }
                        let deg = e.terms.iter().map(|(x, _)| x.iter().sum::<u32>() as usize).max().unwrap_or(0);
                        let p = Polynomial::from_terms(
                            d,
                            deg.max(DEFAULT_MAX_DEGREE),
                            e.terms.iter().map(|(x, z)| (x.clone(), to_c(*z))),
                        )
                        .map_err(|err| cfg(format!("{at}.entries[{t}]: {err}")))?;
                        pm.set(e.i - 1, e.j - 1, &p + pm.get(e.i - 1, e.j - 1));
                    }
                    MatrixField::Polynomial(pm)
                }
                FieldKind::Grid => {
                    let cells = c.cells.clone().ok_or_else(|| missing("cells"))?;
                    let values = c.values.as_ref().ok_or_else(|| missing("values"))?;
                    if cells.len() != d {
                        return Err(cfg(format!("{at}: `cells` needs {d} entries")));
                    }
                    let mats = values
                        .iter()
                        .map(|rows| matrix_from_rows(rows, m, &at))
                        .collect::<Result<Vec<_>>>()?;
                    MatrixField::GridSampled(CellField::new(cells, mats).map_err(|e| cfg(format!("{at}: {e}")))?)
                }
            });
        }
        let coeffs = coeffs.into_iter().map(|c| c.unwrap_or_else(|| MatrixField::zero(m))).collect();
        EllipticSystem::new(domain, coeffs, self.bc, self.mu).map_err(|e| cfg(format!("system: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INLINE: &str = r#"
grid = 8

[system]
lo = [0.0, 0.0]
hi = [1.0, 2.0]
channels = 2
bc = "free"
mu = 0.5

[[system.coefficients]]
k = 1
l = 1
kind = "constant"
matrix = [[[2, 0], [0, 0]], [[0, 0], [1.5, 0]]]

[[system.coefficients]]
k = 1
l = 2
kind = "polynomial"
entries = [{ i = 2, j = 1, terms = [[[1, 0], [0.25, -0.5]], [[0, 2], [0.1, 0]]] }]

[[system.coefficients]]
k = 2
l = 2
kind = "grid"
cells = [2, 1]
values = [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]], [[[3, 0], [0, 0]], [[0, 0], [3, 0]]]]
"#;

    #[test]
    fn inline_system_builds_and_round_trips() {
        let c = RunConfig::from_toml(INLINE).unwrap();
        let (sys, entry) = c.resolve().unwrap();
        assert!(entry.is_none());
        assert_eq!(sys.m, 2);
        assert_eq!(sys.eval(0, 1, &[0.5, 1.0]).unwrap()[(1, 0)], C64::new(0.225, -0.25));
        assert_eq!(sys.eval(1, 1, &[0.75, 1.0]).unwrap()[(0, 0)], C64::new(3.0, 0.0));
        let def = SystemDef::from_system(&sys);
        let echoed = RunConfig {
            system: Some(def.clone()),
            ..Default::default()
        };
        let text = echoed.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, echoed);
        assert_eq!(SystemDef::from_system(&back.resolve().unwrap().0), def);
    }

    #[test]
    fn catalog_round_trips_losslessly() {
        for name in ["ex1_3", "ex5_5", "rand_coupled(5)"] {
            let sys = catalog::get(name).unwrap().system;
            let def = SystemDef::from_system(&sys);
            let text = RunConfig { system: Some(def.clone()), ..Default::default() }.to_toml().unwrap();
            let rebuilt = RunConfig::from_toml(&text).unwrap().resolve().unwrap().0;
            assert_eq!(SystemDef::from_system(&rebuilt), def, "{name}");
            let x = [0.123, 0.456, 0.789];
            assert_eq!(rebuilt.eval_block(&x[..sys.d()]).unwrap(), sys.eval_block(&x[..sys.d()]).unwrap());
        }
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_toml("grid = \"x\"").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        let bad = INLINE.replace("k = 2\nl = 2", "k = 3\nl = 2");
        let e = RunConfig::from_toml(&bad).unwrap().resolve().unwrap_err().to_string();
        assert!(e.contains("system.coefficients[2]"), "{e}");
        assert!(RunConfig::from_toml("tol = -1.0").is_err());
        assert!(RunConfig::from_toml("catalog = \"ex1_3\"\n[system]\nlo=[0.0]\nhi=[1.0]\nchannels=1\nbc=\"free\"\nmu=1.0").is_err());
    }
}
