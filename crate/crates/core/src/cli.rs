//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::assembly::{assemble, DiscreteForm, Grid};
use crate::catalog::{self, CatalogEntry};
use crate::coefficient::{Bc, EllipticSystem};
use crate::config::{RunConfig, SystemDef};
use crate::fmt::{g, g17};
use crate::lab::{
    construct_witness, decide_decoupling, lattice_pairing, observed_order, probe, DecisionOptions,
    LatticeWitness, ProbeOptions, Source, Verdict, Witness,
};
use crate::semigroup::{default_times, positivity_scan, Factorization, Generator, PositivityReport};
use crate::tents::{build_test_pair, interaction_matrix};
use crate::{CMat, Error, Result, C64};

const DEFAULT_OUT: &str = "poslab-out";

#[derive(Parser, Debug)]
#[command(name = "poslab", version, about = "Positivity analysis for elliptic systems with matrix coefficients")]
pub struct Cli {
    /// Output directory for report.txt and CSV files.
    #[arg(long, global = true, env = "POSLAB_OUT")]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write report.json and print it instead of the text report.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SystemArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog entry, e.g. `ex1_3` or `rand_coupled(4)`.
    #[arg(long)]
    pub catalog: Option<String>,
    /// Cells per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum)]
    pub bc: Option<BcArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BcArg {
    Dirichlet,
    Free,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SourceArg {
    Direct,
    Probe,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample the Hermitian part of the coefficient block matrix.
    CheckElliptic {
        #[command(flatten)]
        sys: SystemArgs,
        /// Sample points per axis.
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Assemble the Q1 stiffness matrix and write it in MatrixMarket format.
    Assemble {
        #[command(flatten)]
        sys: SystemArgs,
        /// Print the resolved system as an inline TOML definition.
        #[arg(long)]
        dump_config: bool,
    },
    /// Scan the discrete semigroup for negative entries.
    Positivity {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Decide whether the system decouples into real scalar systems.
    Decouple {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, value_enum, default_value = "direct")]
        source: SourceArg,
        #[arg(long)]
        tol: Option<f64>,
        /// Probe point `x1,x2,..`; repeatable.
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
    },
    /// Recover `C_kl + C_lk` at a point from form values.
    Probe {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        /// 1-based direction index.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// 1-based direction index; defaults to 2 (or 1 when d = 1).
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Build `u+`, `u-` with `a(u+, u-) > 0` around a point.
    Witness {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Ellipticity, decision, semigroup scan and factorization in one run.
    Analyze {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print and verify the interaction matrices of all tent pairs.
    SelftestTents {
        #[arg(long, default_value_t = 4)]
        max_dim: usize,
    },
    /// List catalog entries.
    Catalog,
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Argument(format!("--threads {n}: {e}"))),
        },
        None => execute(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("poslab: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    config: RunConfig,
    system: EllipticSystem,
    entry: Option<CatalogEntry>,
    grid: usize,
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad coordinate `{t}` in point `{s}`"))))
        .collect()
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn context(cli: &Cli, args: &SystemArgs) -> Result<Context> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &args.catalog {
        config.catalog = Some(name.clone());
        config.system = None;
    }
    if let Some(n) = args.grid {
        config.grid = Some(n);
    }
    if let Some(bc) = args.bc {
        config.bc = Some(match bc {
            BcArg::Dirichlet => Bc::Dirichlet,
            BcArg::Free => Bc::Free,
        });
    }
    if let Some(s) = args.seed {
        config.seed = Some(s);
    }
    config.validate()?;
    let (system, entry) = config.resolve()?;
    let grid = config
        .grid
        .or(entry.as_ref().map(|e| e.default_grid))
        .unwrap_or(16);
    let out = out_dir(cli, Some(&config));
    Ok(Context {
        config,
        system,
        entry,
        grid,
        out,
    })
}

/// Text and JSON views of one run, written together.
struct Report {
    text: String,
    json: Map<String, Value>,
}

impl Report {
    fn new(command: &str) -> Self {
        let mut json = Map::new();
        json.insert("command".into(), json!(command));
        Self {
            text: format!("poslab {command}\n"),
            json,
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    fn field(&mut self, key: &str, shown: impl std::fmt::Display, value: Value) {
        let _ = writeln!(self.text, "  {key}: {shown}");
        self.json.insert(key.into(), value);
    }

    fn set(&mut self, key: &str, value: Value) {
        self.json.insert(key.into(), value);
    }

    fn finish(self, out: &Path, as_json: bool) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.txt"), &self.text)?;
        if as_json {
            let s = serde_json::to_string_pretty(&Value::Object(self.json)).expect("json values serialize");
            std::fs::write(out.join("report.json"), format!("{s}\n"))?;
            emit(&format!("{s}\n"));
        } else {
            emit(&self.text);
        }
        Ok(())
    }
}

/// Print to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(std::io::Error::other)?;
    w.write_record(header).map_err(std::io::Error::other)?;
    for r in rows {
        w.write_record(&r).map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

fn coords_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| g(*v, 12)).collect();
    format!("({})", parts.join(", "))
}

fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        g(z.re, 12)
    } else {
        let sign = if z.im < 0.0 { '-' } else { '+' };
        format!("{}{sign}{}i", g(z.re, 12), g(z.im.abs(), 12))
    }
}

fn fmt_matrix(a: &CMat, indent: &str) -> String {
    let mut s = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:>18}", fmt_c(a[(i, j)]))).collect();
        let _ = writeln!(s, "{indent}[{} ]", row.join(""));
    }
    s
}

fn matrix_json(a: &CMat) -> Value {
    json!((0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn describe(r: &mut Report, ctx: &Context) {
    let s = &ctx.system;
    let name = ctx.entry.as_ref().map_or("inline".to_string(), |e| e.name.clone());
    r.field("system", &name, json!(name));
    r.field(
        "domain",
        format!("{} x {}", fmt_point(&s.domain.lo), fmt_point(&s.domain.hi)),
        json!({"lo": s.domain.lo, "hi": s.domain.hi}),
    );
    r.field("d", s.d(), json!(s.d()));
    r.field("channels", s.m, json!(s.m));
    r.field("bc", s.bc, json!(s.bc));
    r.field("mu", g17(s.mu), json!(s.mu));
    if let Some(e) = &ctx.entry {
        r.field("expected", e.expected, json!(e.expected));
        r.field("notes", &e.notes, json!(e.notes));
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::CheckElliptic { sys, samples } => cmd_check_elliptic(cli, sys, *samples),
        Command::Assemble { sys, dump_config } => cmd_assemble(cli, sys, *dump_config),
        Command::Positivity { sys, times, tol } => cmd_positivity(cli, sys, times.clone(), *tol),
        Command::Decouple { sys, source, tol, points } => cmd_decouple(cli, sys, *source, *tol, points),
        Command::Probe {
            sys,
            point,
            k,
            l,
            delta_max,
            levels,
        } => cmd_probe(cli, sys, point.as_deref(), *k, *l, *delta_max, *levels),
        Command::Witness {
            sys,
            point,
            k,
            l,
            delta,
            tol,
        } => cmd_witness(cli, sys, point.as_deref(), *k, *l, *delta, *tol),
        Command::Analyze { sys, times, tol } => cmd_analyze(cli, sys, times.clone(), *tol),
        Command::SelftestTents { max_dim } => cmd_selftest(cli, *max_dim),
        Command::Catalog => cmd_catalog(cli),
    }
}

fn ellipticity_section(r: &mut Report, ctx: &Context, samples: usize) -> Result<bool> {
    let pts = ctx.system.default_samples(samples.max(1));
    let rep = ctx.system.check_ellipticity(&pts)?;
    r.line("ellipticity");
    r.field("lambda_min", g17(rep.lambda_min), json!(rep.lambda_min));
    r.field("argmin", fmt_point(&rep.argmin), json!(rep.argmin));
    r.field("tolerance", g17(rep.tol), json!(rep.tol));
    r.field("passed", rep.passed, json!(rep.passed));
    let mut header = coords_header(ctx.system.d());
    header.push("lambda_min".into());
    write_csv(
        &ctx.out,
        "ellipticity.csv",
        &header,
        rep.samples.iter().map(|(x, lam)| {
            let mut row: Vec<String> = x.iter().map(|v| g17(*v)).collect();
            row.push(g17(*lam));
            row
        }),
    )?;
    Ok(rep.passed)
}

fn cmd_check_elliptic(cli: &Cli, args: &SystemArgs, samples: usize) -> Result<()> {
    let ctx = context(cli, args)?;
    let mut r = Report::new("check-elliptic");
    describe(&mut r, &ctx);
    ellipticity_section(&mut r, &ctx, samples)?;
    r.finish(&ctx.out, cli.json)
}

fn assemble_ctx(ctx: &Context) -> Result<DiscreteForm> {
    assemble(&ctx.system, &Grid::for_system(&ctx.system, ctx.grid)?)
}

fn form_section(r: &mut Report, form: &DiscreteForm) {
    r.line("assembly");
    r.field("cells", format!("{:?}", form.grid.n), json!(form.grid.n));
    r.field("unknowns", form.size(), json!(form.size()));
    r.field("nnz", form.stiffness.nnz(), json!(form.stiffness.nnz()));
    r.field("max_abs", g17(form.max_abs()), json!(form.max_abs()));
    r.field("max_imag", g17(form.max_imag()), json!(form.max_imag()));
    r.field("channel_coupling", g17(form.channel_coupling()), json!(form.channel_coupling()));
}

fn cmd_assemble(cli: &Cli, args: &SystemArgs, dump: bool) -> Result<()> {
    let ctx = context(cli, args)?;
    if dump {
        let echoed = RunConfig {
            grid: Some(ctx.grid),
            system: Some(SystemDef::from_system(&ctx.system)),
            ..Default::default()
        };
        let text = echoed.to_toml()?;
        std::fs::create_dir_all(&ctx.out)?;
        std::fs::write(ctx.out.join("config.toml"), &text)?;
        emit(&text);
        return Ok(());
    }
    let form = assemble_ctx(&ctx)?;
    let mut r = Report::new("assemble");
    describe(&mut r, &ctx);
    form_section(&mut r, &form);
    std::fs::create_dir_all(&ctx.out)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(ctx.out.join("stiffness.mtx"))?);
    form.write_matrix_market(&mut f)?;
    drop(f);
    r.finish(&ctx.out, cli.json)
}

fn positivity_section(r: &mut Report, ctx: &Context, form: &DiscreteForm, times: Option<Vec<f64>>, tol: f64) -> Result<PositivityReport> {
    let gen = Generator::from_form(form);
    let times = times.or(ctx.config.times.clone()).unwrap_or_else(|| default_times(&gen));
    let rep = positivity_scan(&gen, &times, tol)?;
    r.line("semigroup");
    r.field("verdict", rep.verdict, json!(rep.verdict));
    r.field("min_entry", g17(rep.min_entry), json!(rep.min_entry));
    r.field("generator_real", rep.real, json!(rep.real));
    r.field("max_positive_offdiag", g17(rep.max_positive_offdiag), json!(rep.max_positive_offdiag));
    if let Some(o) = &rep.offender {
        r.field(
            "offender",
            format!("t = {}, entry ({}, {}) = {}", g17(o.t), o.row + 1, o.col + 1, g17(o.value)),
            json!({"t": o.t, "row": o.row + 1, "col": o.col + 1, "value": o.value}),
        );
    }
    let header: Vec<String> = ["t", "min_entry", "max_abs", "argmin_row", "argmin_col", "max_imag"]
        .map(String::from)
        .to_vec();
    write_csv(
        &ctx.out,
        "positivity.csv",
        &header,
        rep.samples.iter().map(|s| {
            vec![
                g17(s.t),
                g17(s.min_entry),
                g17(s.max_abs),
                (s.argmin.0 + 1).to_string(),
                (s.argmin.1 + 1).to_string(),
                g17(s.max_imag),
            ]
        }),
    )?;
    Ok(rep)
}

fn cmd_positivity(cli: &Cli, args: &SystemArgs, times: Option<Vec<f64>>, tol: Option<f64>) -> Result<()> {
    let ctx = context(cli, args)?;
    let form = assemble_ctx(&ctx)?;
    let mut r = Report::new("positivity");
    describe(&mut r, &ctx);
    form_section(&mut r, &form);
    let tol = tol.or(ctx.config.tol).unwrap_or(1e-9);
    positivity_section(&mut r, &ctx, &form, times, tol)?;
    r.finish(&ctx.out, cli.json)
}

fn write_lattice_witness(ctx: &Context, w: &LatticeWitness) -> Result<f64> {
    let grid = Grid::for_system(&ctx.system, ctx.grid)?;
    let (plus, minus) = w.state(&grid);
    let m = ctx.system.m;
    let d = ctx.system.d();
    let mut header = vec!["role".to_string()];
    header.extend(coords_header(d));
    header.extend(["channel".to_string(), "value".to_string()]);
    let mut rows = Vec::new();
    for (role, u) in [("plus", &plus), ("minus", &minus)] {
        for (idx, z) in u.iter().enumerate() {
            if z.re != 0.0 {
                let mut row = vec![role.to_string()];
                row.extend(grid.node_coords(idx / m).iter().map(|v| g17(*v)));
                row.push((idx % m + 1).to_string());
                row.push(g17(z.re));
                rows.push(row);
            }
        }
    }
    write_csv(&ctx.out, "witness.csv", &header, rows)?;
    let form = assemble(&ctx.system, &grid)?;
    Ok(lattice_pairing(&form, &plus, &minus))
}

fn lattice_section(r: &mut Report, ctx: &Context, w: &LatticeWitness) -> Result<()> {
    r.field("kind", "lattice", json!("lattice"));
    r.field("point", fmt_point(&w.x0), json!(w.x0));
    r.field("directions", format!("({}, {})", w.ktilde + 1, w.ltilde + 1), json!([w.ktilde + 1, w.ltilde + 1]));
    let f: Vec<f64> = w.mult.f.clone();
    let b: Vec<usize> = w.mult.b.iter().map(|i| i + 1).collect();
    r.field("f", format!("{f:?}"), json!(f));
    r.field("B", format!("{b:?}"), json!(b));
    r.field("tau", g17(w.tau), json!(w.tau));
    r.field("case", w.pair.case_id, json!(w.pair.case_id));
    r.field("delta", g17(w.delta), json!(w.delta));
    r.field("a(u+,u-)", g17(w.value), json!(w.value));
    r.field("leading_term", g17(w.main), json!(w.main));
    r.field("margin", g17(w.error_bound), json!(w.error_bound));
    let again = w.reevaluate(&ctx.system)?;
    r.field("a(u+,u-) recomputed", g17(again), json!(again));
    let discrete = write_lattice_witness(ctx, w)?;
    r.field("discrete pairing on grid", g17(discrete), json!(discrete));
    Ok(())
}

fn witness_section(r: &mut Report, ctx: &Context, w: &Witness) -> Result<()> {
    r.line("witness");
    match w {
        Witness::Lattice(lw) => lattice_section(r, ctx, lw)?,
        Witness::NonReal {
            point,
            k,
            l,
            entry,
            value,
        } => {
            r.field("kind", "non-real", json!("non-real"));
            r.field("point", fmt_point(point), json!(point));
            r.field("directions", format!("({}, {})", k + 1, l + 1), json!([k + 1, l + 1]));
            r.field("entry", format!("({}, {})", entry.0 + 1, entry.1 + 1), json!([entry.0 + 1, entry.1 + 1]));
            r.field("value", fmt_c(*value), json!([value.re, value.im]));
            let mut header = coords_header(point.len());
            header.extend(["k", "l", "i", "j", "re", "im"].map(String::from));
            let mut row: Vec<String> = point.iter().map(|v| g17(*v)).collect();
            row.extend([k + 1, l + 1, entry.0 + 1, entry.1 + 1].map(|v| v.to_string()));
            row.extend([g17(value.re), g17(value.im)]);
            write_csv(&ctx.out, "witness.csv", &header, [row])?;
        }
        Witness::GridCoupling {
            cells,
            minus,
            plus,
            minus_node,
            plus_node,
            value,
        } => {
            r.field("kind", "grid-coupling", json!("grid-coupling"));
            r.field("cells", format!("{cells:?}"), json!(cells));
            r.field("u+", format!("node {} channel {}", fmt_point(plus_node), plus.1 + 1), json!({"node": plus_node, "channel": plus.1 + 1}));
            r.field("u-", format!("node {} channel {}", fmt_point(minus_node), minus.1 + 1), json!({"node": minus_node, "channel": minus.1 + 1}));
            r.field("a(u+,u-)", fmt_c(*value), json!([value.re, value.im]));
            let again = w.reevaluate(&ctx.system)?;
            r.field("a(u+,u-) recomputed", fmt_c(again), json!([again.re, again.im]));
            let mut header = vec!["role".to_string()];
            header.extend(coords_header(plus_node.len()));
            header.extend(["channel".to_string(), "value".to_string()]);
            let row = |role: &str, x: &[f64], ch: usize| {
                let mut v = vec![role.to_string()];
                v.extend(x.iter().map(|c| g17(*c)));
                v.push((ch + 1).to_string());
                v.push(g17(1.0));
                v
            };
            write_csv(&ctx.out, "witness.csv", &header, [row("plus", plus_node, plus.1), row("minus", minus_node, minus.1)])?;
        }
    }
    Ok(())
}

fn decision_section(r: &mut Report, ctx: &Context, v: &Verdict) -> Result<()> {
    r.line("decision");
    r.field("verdict", v.decision, json!(v.decision));
    r.field("source", format!("{:?}", v.source).to_lowercase(), json!(v.source));
    r.field("probe_points", v.points.len(), json!(v.points.len()));
    r.field("tolerance", g17(v.tol), json!(v.tol));
    r.field("bound", g17(v.bound), json!(v.bound));
    r.field("residual_coupling", g17(v.residual_coupling), json!(v.residual_coupling));
    if let Some(w) = &v.witness {
        return witness_section(r, ctx, w);
    }
    r.field("extracted_bounds_ok", v.bounds_ok, json!(v.bounds_ok));
    r.field("extracted_lambda_min", g17(v.scalar_lambda_min), json!(v.scalar_lambda_min));
    r.field("extracted_elliptic", v.ellipticity_ok, json!(v.ellipticity_ok));
    let d = ctx.system.d();
    let mut header = coords_header(d);
    header.extend(["k", "l", "c"].map(String::from));
    for n in 0..ctx.system.m {
        let rows = v.coefficients.iter().filter(|c| c.channel == n).map(|c| {
            let mut row: Vec<String> = c.point.iter().map(|x| g17(*x)).collect();
            row.extend([(c.k + 1).to_string(), (c.l + 1).to_string(), g17(c.value)]);
            row
        });
        write_csv(&ctx.out, &format!("coefficients_{}.csv", n + 1), &header, rows)?;
    }
    r.line(format!("  scalar coefficients written to coefficients_1.csv .. coefficients_{}.csv", ctx.system.m));
    Ok(())
}

fn decision_options(ctx: &Context, source: SourceArg, tol: Option<f64>, points: Option<Vec<Vec<f64>>>) -> DecisionOptions {
    DecisionOptions {
        tol: tol.or(ctx.config.tol),
        source: match source {
            SourceArg::Direct => Source::Direct,
            SourceArg::Probe => Source::Probe,
        },
        points: points.or(ctx.config.points.clone()),
        residual_cells: ctx.grid,
        witness_delta: ctx.config.delta_max,
        probe: probe_options(ctx, None, None),
    }
}

fn probe_options(ctx: &Context, delta_max: Option<f64>, levels: Option<usize>) -> ProbeOptions {
    let mut p = ProbeOptions::default();
    p.delta_max = delta_max.or(ctx.config.delta_max);
    if let Some(l) = levels.or(ctx.config.levels) {
        p.levels = l;
    }
    p
}

fn cmd_decouple(cli: &Cli, args: &SystemArgs, source: SourceArg, tol: Option<f64>, points: &[String]) -> Result<()> {
    let ctx = context(cli, args)?;
    let pts = if points.is_empty() {
        None
    } else {
        Some(points.iter().map(|p| parse_point(p)).collect::<Result<Vec<_>>>()?)
    };
    let v = decide_decoupling(&ctx.system, &decision_options(&ctx, source, tol, pts))?;
    let mut r = Report::new("decouple");
    describe(&mut r, &ctx);
    decision_section(&mut r, &ctx, &v)?;
    r.finish(&ctx.out, cli.json)
}

fn point_or_center(ctx: &Context, point: Option<&str>) -> Result<Vec<f64>> {
    let x = match point {
        Some(p) => parse_point(p)?,
        None => match ctx.config.points.as_ref().and_then(|p| p.first()) {
            Some(p) => p.clone(),
            None => ctx.system.domain.center(),
        },
    };
    if x.len() != ctx.system.d() {
        return Err(Error::Argument(format!("point has {} coordinates, expected {}", x.len(), ctx.system.d())));
    }
    Ok(x)
}

fn directions(ctx: &Context, k: usize, l: Option<usize>) -> Result<(usize, usize)> {
    let d = ctx.system.d();
    let l = l.unwrap_or(if d >= 2 { 2 } else { 1 });
    if k == 0 || l == 0 || k > d || l > d {
        return Err(Error::Argument(format!("directions ({k}, {l}) outside 1..={d}")));
    }
    Ok((k - 1, l - 1))
}

fn cmd_probe(
    cli: &Cli,
    args: &SystemArgs,
    point: Option<&str>,
    k: usize,
    l: Option<usize>,
    delta_max: Option<f64>,
    levels: Option<usize>,
) -> Result<()> {
    let ctx = context(cli, args)?;
    let x = point_or_center(&ctx, point)?;
    let (k, l) = directions(&ctx, k, l)?;
    let res = probe(&ctx.system, &x, k, l, &probe_options(&ctx, delta_max, levels))?;
    let exact = ctx.system.symmetrized(k, l, &x)?;
    let errors = res.errors(&exact);
    let order = observed_order(&res.deltas, &errors);
    let err = crate::multop::max_abs(&(&res.estimate - &exact));

    let mut r = Report::new("probe");
    describe(&mut r, &ctx);
    r.line("probe");
    r.field("point", fmt_point(&x), json!(x));
    r.field("directions", format!("({}, {})", k + 1, l + 1), json!([k + 1, l + 1]));
    r.field("deltas", res.deltas.len(), json!(res.deltas));
    r.field("converged", res.converged, json!(res.converged));
    r.field(
        "richardson_order",
        res.richardson_order.map_or("none".into(), |p| p.to_string()),
        json!(res.richardson_order),
    );
    r.field("observed_order", order.map_or("n/a".into(), g17), json!(order));
    r.field("estimate_error", g17(err), json!(err));
    r.line("  estimate of C_kl + C_lk:");
    r.line(fmt_matrix(&res.estimate, "    ").trim_end());
    r.set("estimate", matrix_json(&res.estimate));
    r.line("  coefficient value:");
    r.line(fmt_matrix(&exact, "    ").trim_end());
    r.set("exact", matrix_json(&exact));

    let m = ctx.system.m;
    let header: Vec<String> = ["stage", "delta", "i", "j", "re", "im"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut push = |stage: &str, delta: f64, a: &CMat| {
        for i in 0..m {
            for j in 0..m {
                rows.push(vec![
                    stage.to_string(),
                    g17(delta),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    g17(a[(i, j)].re),
                    g17(a[(i, j)].im),
                ]);
            }
        }
    };
    for (delta, h) in res.deltas.iter().zip(&res.history) {
        push("schedule", *delta, h);
    }
    let dmin = *res.deltas.last().expect("nonempty schedule");
    push("estimate", dmin, &res.estimate);
    push("exact", 0.0, &exact);
    write_csv(&ctx.out, "probe.csv", &header, rows)?;
    r.finish(&ctx.out, cli.json)
}

#[allow(clippy::too_many_arguments)]
fn cmd_witness(
    cli: &Cli,
    args: &SystemArgs,
    point: Option<&str>,
    k: usize,
    l: Option<usize>,
    delta: Option<f64>,
    tol: Option<f64>,
) -> Result<()> {
    let ctx = context(cli, args)?;
    let x = point_or_center(&ctx, point)?;
    let (k, l) = directions(&ctx, k, l)?;
    let q = ctx.system.symmetrized(k, l, &x)?;
    let tol = tol.or(ctx.config.tol).unwrap_or(1e-8 * ctx.system.bound().max(1.0));
    let w = construct_witness(&ctx.system, &x, k, l, &q, delta.or(ctx.config.delta_max), tol)?;
    let mut r = Report::new("witness");
    describe(&mut r, &ctx);
    r.line("witness");
    lattice_section(&mut r, &ctx, &w)?;
    r.finish(&ctx.out, cli.json)
}

fn cmd_analyze(cli: &Cli, args: &SystemArgs, times: Option<Vec<f64>>, tol: Option<f64>) -> Result<()> {
    let ctx = context(cli, args)?;
    let mut r = Report::new("analyze");
    describe(&mut r, &ctx);
    if !ellipticity_section(&mut r, &ctx, 5)? {
        return r.finish(&ctx.out, cli.json);
    }
    let v = decide_decoupling(&ctx.system, &decision_options(&ctx, SourceArg::Direct, None, None))?;
    decision_section(&mut r, &ctx, &v)?;
    let form = assemble_ctx(&ctx)?;
    form_section(&mut r, &form);
    let scan_tol = tol.unwrap_or(1e-9);
    let times_used = times.clone().or(ctx.config.times.clone());
    positivity_section(&mut r, &ctx, &form, times_used.clone(), scan_tol)?;
    if let Some(scalars) = &v.scalar_systems {
        let grid = Grid::for_system(&ctx.system, ctx.grid)?;
        let channels = scalars.iter().map(|s| assemble(s, &grid)).collect::<Result<Vec<_>>>()?;
        let fact = Factorization::new(&form, &channels)?;
        let times = times_used.unwrap_or_else(|| default_times(&fact.block));
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed.unwrap_or(0));
        let mut worst: f64 = 0.0;
        let states: Vec<Vec<C64>> = (0..4)
            .map(|_| (0..form.size()).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect())
            .collect();
        for &t in &times {
            for r in fact.residuals(t, &states)? {
                worst = worst.max(r);
            }
        }
        r.line("factorization");
        r.field("max_residual", g17(worst), json!(worst));
        for (n, ch) in fact.channels.iter().enumerate() {
            let rep = positivity_scan(ch, &times, scan_tol)?;
            r.field(&format!("channel_{}", n + 1), rep.verdict, json!(rep.verdict));
        }
    }
    r.finish(&ctx.out, cli.json)
}

fn cmd_selftest(cli: &Cli, max_dim: usize) -> Result<()> {
    if !(2..=6).contains(&max_dim) {
        return Err(Error::Argument(format!("--max-dim {max_dim} outside 2..=6")));
    }
    let out = out_dir(cli, None);
    let mut r = Report::new("selftest-tents");
    let mut cases = Vec::new();
    let mut worst: f64 = 0.0;
    for d in 2..=max_dim {
        for tau in [-3.0, -1.0, 0.0, 1.0, 2.0] {
            for kt in 0..d {
                for lt in 0..d {
                    let pair = build_test_pair(tau, kt, lt, d)?;
                    let gm = interaction_matrix(&pair.phi, &pair.psi)?;
                    let dev = (&gm - pair.expected_interaction()).amax();
                    worst = worst.max(dev);
                    let _ = writeln!(
                        r.text,
                        "d = {d}, tau = {tau}, (k, l) = ({}, {}), case {}, deviation {}",
                        kt + 1,
                        lt + 1,
                        pair.case_id,
                        g(dev, 3)
                    );
                    for i in 0..d {
                        let row: Vec<String> = (0..d).map(|j| format!("{:>6}", g(gm[(i, j)] + 0.0, 6))).collect();
                        let _ = writeln!(r.text, "    [{} ]", row.join(""));
                    }
                    cases.push(json!({"d": d, "tau": tau, "k": kt + 1, "l": lt + 1, "case": pair.case_id, "deviation": dev}));
                }
            }
        }
    }
    let ok = worst <= 1e-12;
    r.set("cases", json!(cases));
    r.field("max_deviation", g17(worst), json!(worst));
    r.field("passed", ok, json!(ok));
    r.finish(&out, cli.json)?;
    if ok {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!("interaction matrices deviate by {worst}")))
    }
}

fn cmd_catalog(cli: &Cli) -> Result<()> {
    let out = out_dir(cli, None);
    let mut r = Report::new("catalog");
    let mut items = Vec::new();
    for e in catalog::list() {
        let s = &e.system;
        let _ = writeln!(
            r.text,
            "  {:<18} {:<19} d={} m={} {:<9} {}",
            e.name, e.expected.to_string(), s.d(), s.m, s.bc.to_string(), e.notes
        );
        items.push(json!({
            "name": e.name, "expected": e.expected, "d": s.d(), "channels": s.m,
            "bc": s.bc, "notes": e.notes,
        }));
    }
    r.line("  generators accept a seed: rand_decoupled(7), rand_coupled:7");
    r.set("entries", json!(items));
    r.finish(&out, cli.json)
}
