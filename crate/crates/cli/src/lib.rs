//! Configuration, convergence-study orchestration, table output and field
//! export for the `mixedflow` command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;

use mixedflow::basis::Space;
use mixedflow::dofs::STRESS_PER_ELEMENT;
use mixedflow::prelude::*;
use mixedflow::solvers::run;
use mixedflow::tensor::SymTensor;

/// Largest admissible mesh level.
pub const MAX_LEVEL: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => bail!("unknown format `{other}` (expected csv or text)"),
        }
    }
}

fn parse_case(s: &str) -> Result<CaseId> {
    match s {
        "1" => Ok(CaseId::Case1),
        "2" => Ok(CaseId::Case2),
        other => bail!("unknown case `{other}` (expected 1 or 2)"),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm> {
    match s {
        "lions-mercier" => Ok(Algorithm::LionsMercier),
        "fixed-point" => Ok(Algorithm::FixedPoint),
        other => bail!("unknown algorithm `{other}` (expected lions-mercier or fixed-point)"),
    }
}

fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s.split_once("..").ok_or_else(|| anyhow!("levels must look like A..B, got `{s}`"))?;
    let a: u32 = a.trim().parse().with_context(|| format!("bad level `{a}`"))?;
    let b: u32 = b.trim().parse().with_context(|| format!("bad level `{b}`"))?;
    if a > b {
        bail!("empty level range {a}..{b}");
    }
    if a < 1 || b > MAX_LEVEL {
        bail!("levels must lie in 1..{MAX_LEVEL}, got {a}..{b}");
    }
    Ok((a, b))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("bad boolean `{other}`"),
    }
}

fn parse_real(key: &str, s: &str) -> Result<f64> {
    s.parse().with_context(|| format!("bad value `{s}` for {key}"))
}

#[derive(Debug, Parser, Default)]
#[command(name = "mixedflow", about = "Convergence studies for the mixed Q2/Q2/Q1 implicit-fluid solver")]
struct Args {
    /// Manufactured case: 1 (unit square) or 2 (L-shape)
    #[arg(long)]
    case: Option<String>,
    /// lions-mercier or fixed-point
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// Lions–Mercier pseudo-time step
    #[arg(long)]
    tau: Option<String>,
    /// Inclusive level range, e.g. 2..5
    #[arg(long)]
    levels: Option<String>,
    #[arg(long = "tol-outer")]
    tol_outer: Option<String>,
    #[arg(long = "tol-newton")]
    tol_newton: Option<String>,
    /// Output table path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or text
    #[arg(long)]
    format: Option<String>,
    /// Write VTK fields for every level
    #[arg(long = "export-fields")]
    export_fields: bool,
    /// Run levels concurrently
    #[arg(long)]
    parallel: bool,
    /// Print mesh statistics for every level before solving
    #[arg(long = "mesh-stats")]
    mesh_stats: bool,
    /// `key = value` configuration file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub case: CaseId,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub levels: (u32, u32),
    pub tol_outer: f64,
    pub tol_newton: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub export_fields: bool,
    pub parallel: bool,
    pub mesh_stats: bool,
}

impl StudyConfig {
    pub fn model(&self) -> Result<ConstitutiveModel> {
        Ok(ConstitutiveModel::new(self.alpha, self.gamma)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tau: self.tau,
            delta_outer: self.tol_outer,
            newton_tol: self.tol_newton,
            algorithm: self.algorithm,
            ..SolverConfig::default()
        }
    }
}

const KEYS: [&str; 13] = [
    "case",
    "algorithm",
    "alpha",
    "gamma",
    "tau",
    "levels",
    "tol_outer",
    "tol_newton",
    "out",
    "format",
    "export_fields",
    "parallel",
    "mesh_stats",
];

/// Reads `key = value` lines; `#` starts a comment.
fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), no + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            bail!("{}:{}: unknown key `{k}`", path.display(), no + 1);
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Parses command-line tokens (without the program name); flags override the
/// optional configuration file.
pub fn parse_config<I, S>(args: I) -> Result<StudyConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(std::iter::once("mixedflow".into()).chain(args.into_iter().map(Into::into)))?;
    let mut values: Vec<(String, String)> = match &args.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let flags = [
        ("case", args.case.clone()),
        ("algorithm", args.algorithm.clone()),
        ("alpha", args.alpha.clone()),
        ("gamma", args.gamma.clone()),
        ("tau", args.tau.clone()),
        ("levels", args.levels.clone()),
        ("tol_outer", args.tol_outer.clone()),
        ("tol_newton", args.tol_newton.clone()),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("format", args.format.clone()),
        ("export_fields", args.export_fields.then(|| "true".into())),
        ("parallel", args.parallel.then(|| "true".into())),
        ("mesh_stats", args.mesh_stats.then(|| "true".into())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            values.push((k.to_string(), v));
        }
    }
    // later entries (flags) win
    let get = |key: &str| values.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());

    let case = parse_case(get("case").ok_or_else(|| anyhow!("missing required key `case`"))?)?;
    let algorithm = parse_algorithm(get("algorithm").ok_or_else(|| anyhow!("missing required key `algorithm`"))?)?;
    let real = |key: &str, default: f64| get(key).map_or(Ok(default), |v| parse_real(key, v));
    let cfg = StudyConfig {
        case,
        algorithm,
        alpha: real("alpha", 1.0)?,
        gamma: real("gamma", 1.0)?,
        tau: real("tau", 0.5)?,
        levels: get("levels").map_or(Ok((2, 5)), parse_levels)?,
        tol_outer: real("tol_outer", 1e-5)?,
        tol_newton: real("tol_newton", 1e-6)?,
        out: get("out").map(PathBuf::from),
        format: get("format").map_or(Ok(Format::Text), str::parse)?,
        export_fields: get("export_fields").map_or(Ok(false), parse_bool)?,
        parallel: get("parallel").map_or(Ok(false), parse_bool)?,
        mesh_stats: get("mesh_stats").map_or(Ok(false), parse_bool)?,
    };
    cfg.model()?;
    if !(cfg.tau > 0.0) {
        bail!("tau must be positive");
    }
    if !(cfg.tol_outer > 0.0) || !(cfg.tol_newton > 0.0) {
        bail!("tolerances must be positive");
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n: u32,
    pub h: f64,
    /// `None` for a failed level.
    pub errors: Option<ErrorTriple>,
    pub iters: Option<usize>,
    pub seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<Row>,
}

pub fn mesh_stats(domain: Domain, level: u32) -> Result<String> {
    let mesh = build_mesh(MeshSpec::new(domain, level)?);
    let spaces = mixedflow::dofs::build_spaces(&mesh);
    Ok(format!(
        "level {level}: {} elements, {} vertices, h = {:.5e}, n_u = {} ({} free), n_p = {}, n_T = {}",
        mesh.num_elements(),
        mesh.num_vertices(),
        mesh.h,
        spaces.n_u,
        spaces.n_free(),
        spaces.n_p,
        spaces.n_t
    ))
}

/// Solves one level; failures are recorded in the row.
pub fn run_level(config: &StudyConfig, level: u32) -> Row {
    let start = Instant::now();
    let h = std::f64::consts::SQRT_2 / f64::from(1u32 << level);
    let result = (|| -> Result<(ErrorTriple, usize)> {
        let case = ManufacturedCase::new(config.case, config.model()?);
        let mesh = build_mesh(MeshSpec::new(case.domain(), level)?);
        let disc = Discretization::new(mesh)?;
        let problem = FlowProblem::manufactured(&disc, &case);
        let (state, trace) = run(&problem, &config.solver_config())?;
        let errors = compute_errors(&disc, &state, &case)?;
        if config.export_fields {
            let path = export_path(config, level);
            export_fields(&disc, &state, &path)?;
            log::info!("wrote {}", path.display());
        }
        Ok((errors, trace.iterations()))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok((errors, iters)) => Row { n: level, h, errors: Some(errors), iters: Some(iters), seconds, failure: None },
        Err(e) => {
            log::error!("level {level} failed: {e:#}");
            Row { n: level, h, errors: None, iters: None, seconds, failure: Some(format!("{e:#}")) }
        }
    }
}

fn export_path(config: &StudyConfig, level: u32) -> PathBuf {
    let dir = config.out.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_default();
    let case = match config.case {
        CaseId::Case1 => 1,
        CaseId::Case2 => 2,
    };
    let alg = match config.algorithm {
        Algorithm::LionsMercier => "lm",
        Algorithm::FixedPoint => "fp",
    };
    dir.join(format!("case{case}_{alg}_n{level}.vtk"))
}

/// Runs every level, handing each row to `on_row` as soon as it is ready.
pub fn run_study(config: &StudyConfig, mut on_row: impl FnMut(&Row)) -> ConvergenceTable {
    let levels: Vec<u32> = (config.levels.0..=config.levels.1).collect();
    let rows = if config.parallel {
        use rayon::prelude::*;
        let rows: Vec<Row> = levels.par_iter().map(|&n| run_level(config, n)).collect();
        rows.iter().for_each(&mut on_row);
        rows
    } else {
        levels
            .iter()
            .map(|&n| {
                let r = run_level(config, n);
                on_row(&r);
                r
            })
            .collect()
    };
    ConvergenceTable { rows }
}

pub const CSV_HEADER: &str = "n,h,err_T,err_u,err_p,iters,seconds";

pub fn csv_line(r: &Row) -> String {
    let (et, eu, ep) = r.errors.map_or(("nan".into(), "nan".into(), "nan".into()), |e| {
        (format!("{:.5e}", e.err_t), format!("{:.5e}", e.err_u), format!("{:.5e}", e.err_p))
    });
    let iters = r.iters.map_or("nan".into(), |i| i.to_string());
    format!("{},{:.5e},{et},{eu},{ep},{iters},{:.5e}", r.n, r.h, r.seconds)
}

fn rate(prev: Option<&Row>, cur: &Row, pick: fn(&ErrorTriple) -> f64) -> String {
    match (prev.and_then(|p| p.errors), cur.errors) {
        (Some(a), Some(b)) if pick(&a) > 0.0 && pick(&b) > 0.0 => format!("{:.2}", (pick(&a) / pick(&b)).log2()),
        _ => "-".into(),
    }
}

pub fn emit(table: &ConvergenceTable, format: Format) -> String {
    let mut s = String::new();
    match format {
        Format::Csv => {
            s.push_str(CSV_HEADER);
            s.push('\n');
            for r in &table.rows {
                s.push_str(&csv_line(r));
                s.push('\n');
            }
        }
        Format::Text => {
            let _ = writeln!(
                s,
                "{:>2} {:>7} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6} {:>6} {:>9}",
                "n", "h", "err_T", "rate", "err_u", "rate", "err_p", "rate", "iters", "seconds"
            );
            for (i, r) in table.rows.iter().enumerate() {
                let prev = i.checked_sub(1).map(|j| &table.rows[j]);
                let fmt = |v: Option<f64>| v.map_or("failed".to_string(), |v| format!("{v:.5e}"));
                let _ = writeln!(
                    s,
                    "{:>2} {:>7.3} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6} {:>6} {:>9.2}",
                    r.n,
                    r.h,
                    fmt(r.errors.map(|e| e.err_t)),
                    rate(prev, r, |e| e.err_t),
                    fmt(r.errors.map(|e| e.err_u)),
                    rate(prev, r, |e| e.err_u),
                    fmt(r.errors.map(|e| e.err_p)),
                    rate(prev, r, |e| e.err_p),
                    r.iters.map_or("-".into(), |i| i.to_string()),
                    r.seconds
                );
            }
        }
    }
    s
}

/// Inverse of the CSV form of [`emit`].
pub fn parse_csv(text: &str) -> Result<ConvergenceTable> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        bail!("missing CSV header");
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("expected 7 fields in `{line}`");
        }
        let num = |s: &str| -> Result<f64> { s.parse::<f64>().with_context(|| format!("bad number `{s}`")) };
        let errs = [num(f[2])?, num(f[3])?, num(f[4])?];
        let failed = errs.iter().any(|v| v.is_nan());
        rows.push(Row {
            n: f[0].parse()?,
            h: num(f[1])?,
            errors: (!failed).then_some(ErrorTriple { err_t: errs[0], err_u: errs[1], err_p: errs[2] }),
            iters: if f[5] == "nan" { None } else { Some(f[5].parse()?) },
            seconds: num(f[6])?,
            failure: failed.then(|| "failed".to_string()),
        });
    }
    Ok(ConvergenceTable { rows })
}

/// Legacy ASCII VTK with each element split into 4 quads through its Q2
/// nodes. Points are duplicated per element since the stress is
/// discontinuous.
pub fn export_fields(disc: &Discretization, state: &FlowState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = io::BufWriter::new(file);
    write_vtk(disc, state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_vtk(disc: &Discretization, state: &FlowState, w: &mut impl Write) -> io::Result<()> {
    let ne = disc.n_elements();
    let np = 9 * ne;
    let nodes = Space::Q2.nodes();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "mixedflow fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {np} double")?;
    for e in 0..ne {
        for xi in &nodes {
            let x = disc.mesh.map_point(e, *xi);
            writeln!(w, "{:.10e} {:.10e} 0", x[0], x[1])?;
        }
    }
    writeln!(w, "CELLS {} {}", 4 * ne, 4 * ne * 5)?;
    for e in 0..ne {
        let base = 9 * e;
        for j in 0..2 {
            for i in 0..2 {
                let a = base + 3 * j + i;
                writeln!(w, "4 {} {} {} {}", a, a + 1, a + 4, a + 3)?;
            }
        }
    }
    writeln!(w, "CELL_TYPES {}", 4 * ne)?;
    for _ in 0..4 * ne {
        writeln!(w, "9")?;
    }
    writeln!(w, "POINT_DATA {np}")?;
    writeln!(w, "VECTORS velocity double")?;
    for e in 0..ne {
        let ue = disc.element_velocity(&state.u, e);
        for k in 0..9 {
            writeln!(w, "{:.10e} {:.10e} 0", ue[2 * k], ue[2 * k + 1])?;
        }
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for e in 0..ne {
        let pe = disc.element_pressure(&state.p, e);
        for xi in &nodes {
            let v: f64 = (0..4).map(|i| Space::Q1.eval(i, *xi).0 * pe[i]).sum();
            writeln!(w, "{v:.10e}")?;
        }
    }
    let stress = |e: usize, c: usize, k: usize| state.t[STRESS_PER_ELEMENT * e + 9 * c + k];
    for (c, name) in ["T11", "T12", "T22"].iter().enumerate() {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for e in 0..ne {
            for k in 0..9 {
                writeln!(w, "{:.10e}", stress(e, c, k))?;
            }
        }
    }
    writeln!(w, "SCALARS T_norm double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for e in 0..ne {
        for k in 0..9 {
            let t = SymTensor::new(stress(e, 0, k), stress(e, 1, k), stress(e, 2, k));
            writeln!(w, "{:.10e}", t.norm())?;
        }
    }
    Ok(())
}
