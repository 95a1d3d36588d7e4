//! Command-line front end: argument parsing, resolved run configuration and
//! report rendering for the `bergman` binary.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bergman::{extension_index, SolverConfig};
use crate::bundle::curvature::{chern_curvature_fd, griffiths_lower_bound, DEFAULT_CURVATURE_STEP};
use crate::bundle::extension::{
    curvature_from_extension, flatness_test, vector_extension_index, DEFAULT_BASE_DIAMETER, DEFAULT_FIBER_SAMPLES,
    DEFAULT_LEVELS,
};
use crate::bundle::frame::{flat_frame, DEFAULT_ODE_TOL};
use crate::bundle::metric::{metric_from_spec, HermitianMetricField};
use crate::classify::{
    default_index_tol, disc_harmonicity_test, mean_value_psh_test, pluriharmonic_test, ClassificationReport, Verdict,
    DEFAULT_MEAN_VALUE_TOL,
};
use crate::error::{Error, Result};
use crate::geometry::HolomorphicCylinder;
use crate::linalg::{CMatrix, C64, I};
use crate::lp_iter::{guan_zhou_extend, DEFAULT_MAX_STEPS, DEFAULT_TOL};
use crate::weights::{catalog_from_spec, WeightFunction};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_GRID: usize = 3;
pub const DEFAULT_TRIALS: usize = 200;

const CSV_HELP: &str = "\
CSV columns:
  index      index,minimal_integral,p,degree,converged,iterations
  classify   center,r,s,statistic,threshold,note
  curvature  diameter,c_raw,cylinders,fibers
  flat       center,r,s,statistic,threshold,note
  lp         k,objective,bound
Centers are written as space-separated complex numbers `re+imi`.

Exit codes: 0 success, 2 validation error, 3 solver error, 4 non-flat evidence.
BERGMAN_THREADS caps the worker pool.";

#[derive(Debug, Parser)]
#[command(name = "bergman", version, about = "Weighted Bergman kernels, extension indices and curvature diagnostics")]
#[command(after_help = CSV_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// L^p extension index of a weight or metric on one cylinder.
    Index(IndexArgs),
    /// Pluriharmonic, mean-value or disc-harmonicity classification of a weight.
    Classify(ClassifyArgs),
    /// Curvature lower bound of a metric estimated from extension indices.
    Curvature(CurvatureArgs),
    /// Flatness test of a metric followed by flat frame synthesis.
    Flat(FlatArgs),
    /// Iterated L^2 extensions toward the L^p minimizer, with the bound trace.
    Lp(LpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Polynomial degree of the extension basis (default 10 for n=1, 6 for n=2).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Quadrature order (default 24 for n=1, 12 for n=2).
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CylinderArgs {
    /// Disc `r=R[,x=RE,y=IM]`.
    #[arg(long, conflicts_with = "cylinder")]
    pub disc: Option<String>,
    /// Bidisc `r=R,s=S[,rot=identity|mix][,x1=..,y1=..,x2=..,y2=..]`.
    #[arg(long)]
    pub cylinder: Option<String>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Weight `id[:key=val,...]`.
    #[arg(long, conflicts_with = "metric", required_unless_present = "metric")]
    pub weight: Option<String>,
    /// Metric `id[:key=val,...]`.
    #[arg(long)]
    pub metric: Option<String>,
    #[command(flatten)]
    pub cylinder: CylinderArgs,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Fiber vector for metrics, `re,im;re,im` (default e_1).
    #[arg(long)]
    pub fiber: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub weight: String,
    /// `box=H` or `disc=R`.
    #[arg(long, default_value = "box=1")]
    pub region: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Centers per real axis.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    /// Tolerance (default 1e-5 for p=2 and 1e-4 otherwise; 1e-8 for --mean-value).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Compare pi B on the unit disc against e^phi(0).
    #[arg(long, conflicts_with = "mean_value")]
    pub disc_harmonic: bool,
    /// Sub-mean-value test on random cylinders only.
    #[arg(long)]
    pub mean_value: bool,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CurvatureArgs {
    #[arg(long)]
    pub metric: String,
    /// Base point `re,im[;re,im]` (default origin).
    #[arg(long)]
    pub point: Option<String>,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    pub levels: usize,
    #[arg(long, default_value_t = DEFAULT_BASE_DIAMETER)]
    pub base_diameter: f64,
    /// Random fibers besides the basis vectors (rank 2 only).
    #[arg(long, default_value_t = DEFAULT_FIBER_SAMPLES)]
    pub fibers: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct FlatArgs {
    #[arg(long)]
    pub metric: String,
    #[arg(long, default_value = "box=1")]
    pub region: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Index tolerance (default 1e-5 for p=2 and 1e-4 otherwise).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Frame grid points per real axis (default 5 for n=1, 3 for n=2).
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ODE_TOL)]
    pub ode_tol: f64,
    #[command(flatten)]
    pub cylinder: CylinderArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct LpArgs {
    #[arg(long)]
    pub weight: String,
    #[command(flatten)]
    pub cylinder: CylinderArgs,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Index,
    Classify,
    Curvature,
    Flat,
    Lp,
}

/// Every input after defaults are applied. Embedded in each report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<HolomorphicCylinder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "serialize_opt_point")]
    pub point: Option<Vec<C64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub degree: usize,
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fibers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub res: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ode_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub seed: u64,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn serialize_opt_point<S: serde::Serializer>(v: &Option<Vec<C64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let pts: Option<Vec<[f64; 2]>> = v.as_ref().map(|p| p.iter().map(|c| [c.re, c.im]).collect());
    pts.serialize(s)
}

/// Rendered report and process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub code: i32,
    pub message: Option<String>,
}

fn parse_kv(spec: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) =
            part.split_once('=').ok_or_else(|| Error::InvalidParams(format!("expected key=value, got `{part}`")))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::InvalidParams(format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

fn take_f64(map: &mut BTreeMap<String, String>, key: &str, default: Option<f64>) -> Result<f64> {
    match map.remove(key) {
        Some(v) => v.parse().map_err(|_| Error::InvalidParams(format!("`{key}` is not a number: `{v}`"))),
        None => default.ok_or_else(|| Error::InvalidParams(format!("missing `{key}`"))),
    }
}

fn reject_leftovers(map: &BTreeMap<String, String>) -> Result<()> {
    match map.keys().next() {
        Some(k) => Err(Error::InvalidParams(format!("unknown key `{k}`"))),
        None => Ok(()),
    }
}

pub fn parse_disc(spec: &str) -> Result<HolomorphicCylinder> {
    let mut map = parse_kv(spec)?;
    let r = take_f64(&mut map, "r", None)?;
    let x = take_f64(&mut map, "x", Some(0.0))?;
    let y = take_f64(&mut map, "y", Some(0.0))?;
    reject_leftovers(&map)?;
    HolomorphicCylinder::disc(C64::new(x, y), r)
}

pub fn parse_cylinder(spec: &str) -> Result<HolomorphicCylinder> {
    let mut map = parse_kv(spec)?;
    let r = take_f64(&mut map, "r", None)?;
    let s = take_f64(&mut map, "s", None)?;
    let rotation = match map.remove("rot").as_deref() {
        None | Some("identity") => CMatrix::identity(2, 2),
        Some("mix") => {
            let k = FRAC_1_SQRT_2;
            CMatrix::from_row_slice(2, 2, &[C64::new(k, 0.0), I * k, I * k, C64::new(k, 0.0)])
        }
        Some(other) => return Err(Error::InvalidParams(format!("unknown rotation `{other}`"))),
    };
    let mut center = Vec::with_capacity(2);
    for j in 1..=2 {
        let x = take_f64(&mut map, &format!("x{j}"), Some(0.0))?;
        let y = take_f64(&mut map, &format!("y{j}"), Some(0.0))?;
        center.push(C64::new(x, y));
    }
    reject_leftovers(&map)?;
    HolomorphicCylinder::new(center, rotation, r, s, 2)
}

/// `re,im;re,im` into complex coordinates.
pub fn parse_point(spec: &str) -> Result<Vec<C64>> {
    spec.split(';')
        .map(|pair| {
            let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::InvalidParams(format!("expected re,im, got `{pair}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidParams(format!("not a number: `{s}`")));
            Ok(C64::new(num(parts[0])?, num(parts[1])?))
        })
        .collect()
}

fn resolve_cylinder(args: &CylinderArgs, n: usize) -> Result<HolomorphicCylinder> {
    let cyl = match (&args.disc, &args.cylinder) {
        (Some(d), _) => parse_disc(d)?,
        (None, Some(c)) => parse_cylinder(c)?,
        (None, None) if n == 1 => HolomorphicCylinder::disc(C64::new(0.0, 0.0), 1.0)?,
        (None, None) => HolomorphicCylinder::bidisc([C64::new(0.0, 0.0); 2], CMatrix::identity(2, 2), 1.0, 1.0)?,
    };
    if cyl.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cyl.dim() });
    }
    Ok(cyl)
}

fn solver_config(common: &CommonArgs) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(d) = common.degree {
        cfg = cfg.with_degree(d);
    }
    if let Some(o) = common.order {
        if o == 0 {
            return Err(Error::InvalidOrder(o));
        }
        cfg = cfg.with_order(o);
    }
    Ok(cfg)
}

fn base_config(kind: CommandKind, common: &CommonArgs, cfg: &SolverConfig, n: usize) -> RunConfig {
    RunConfig {
        command: kind,
        weight: None,
        metric: None,
        cylinder: None,
        region: None,
        point: None,
        mode: None,
        p: None,
        degree: cfg.degree_for(n),
        order: cfg.order_for(n),
        gamma: None,
        grid: None,
        tol: None,
        trials: None,
        levels: None,
        base_diameter: None,
        fibers: None,
        res: None,
        ode_tol: None,
        steps: None,
        seed: common.seed,
        format: common.format,
        out: common.out.clone(),
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRadius { name, value: v })
    }
}

struct Report {
    config: RunConfig,
    result: Value,
    csv: String,
    /// Set when the command found non-flat evidence.
    failure: Option<Error>,
}

fn fmt_point(p: &[C64]) -> String {
    p.iter().map(|c| format!("{}{:+}i", c.re, c.im)).collect::<Vec<_>>().join(" ")
}

fn evidence_csv(report: &ClassificationReport) -> String {
    let mut out = String::from("center,r,s,statistic,threshold,note\n");
    for e in &report.evidence {
        let note = e.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_point(&e.point),
            e.cylinder.r(),
            e.cylinder.s(),
            e.statistic,
            e.threshold,
            note
        ));
    }
    out
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidParams(format!("serialization failed: {e}")))
}

fn cmd_index(args: &IndexArgs) -> Result<Report> {
    let cfg = solver_config(&args.common)?;
    let (n, weight, metric): (usize, Option<WeightFunction>, Option<HermitianMetricField>) =
        match (&args.weight, &args.metric) {
            (Some(w), _) => {
                let w = catalog_from_spec(w)?;
                (w.dim(), Some(w), None)
            }
            (None, Some(m)) => {
                let h = metric_from_spec(m)?;
                (h.dim(), None, Some(h))
            }
            (None, None) => return Err(Error::InvalidParams("one of --weight or --metric is required".into())),
        };
    let cylinder = resolve_cylinder(&args.cylinder, n)?;
    let mut config = base_config(CommandKind::Index, &args.common, &cfg, n);
    config.weight = args.weight.clone();
    config.metric = args.metric.clone();
    config.cylinder = Some(cylinder.clone());
    config.p = Some(args.p);
    let solution = match (weight, metric) {
        (Some(w), _) => extension_index(&cylinder, &w, args.p, &cfg)?,
        (_, Some(h)) => {
            let v = match &args.fiber {
                Some(f) => parse_point(f)?,
                None => {
                    let mut e = vec![C64::new(0.0, 0.0); h.rank()];
                    e[0] = C64::new(1.0, 0.0);
                    e
                }
            };
            config.point = Some(v.clone());
            vector_extension_index(&h, &cylinder, &v, args.p, &cfg)?
        }
        _ => unreachable!(),
    };
    let csv = format!(
        "index,minimal_integral,p,degree,converged,iterations\n{},{},{},{},{},{}\n",
        solution.index, solution.minimal_integral, solution.p, solution.degree, solution.converged, solution.iterations
    );
    Ok(Report { config, result: to_value(&solution)?, csv, failure: None })
}

fn cmd_classify(args: &ClassifyArgs) -> Result<Report> {
    let cfg = solver_config(&args.common)?;
    let w = catalog_from_spec(&args.weight)?;
    let n = w.dim();
    let mut config = base_config(CommandKind::Classify, &args.common, &cfg, n);
    config.weight = Some(args.weight.clone());
    let report = if args.disc_harmonic {
        let tol = args.tol.unwrap_or(1e-5);
        config.mode = Some("disc-harmonic".into());
        config.tol = Some(tol);
        disc_harmonicity_test(&w, tol, args.common.seed, &cfg)?
    } else {
        let region = crate::classify::Region::parse(&args.region, n)?;
        config.region = Some(args.region.clone());
        if args.mean_value {
            let tol = args.tol.unwrap_or(DEFAULT_MEAN_VALUE_TOL);
            config.mode = Some("mean-value".into());
            config.tol = Some(tol);
            config.trials = Some(args.trials);
            mean_value_psh_test(&w, &region, args.trials, args.common.seed, tol)?
        } else {
            check_positive("gamma", args.gamma)?;
            let tol = args.tol.unwrap_or_else(|| default_index_tol(args.p));
            config.mode = Some("pluriharmonic".into());
            config.p = Some(args.p);
            config.gamma = Some(args.gamma);
            config.grid = Some(args.grid);
            config.tol = Some(tol);
            pluriharmonic_test(&w, &region, args.p, args.gamma, args.grid, tol, &cfg)?
        }
    };
    let csv = evidence_csv(&report);
    Ok(Report { config, result: to_value(&report)?, csv, failure: None })
}

fn cmd_curvature(args: &CurvatureArgs) -> Result<Report> {
    let cfg = solver_config(&args.common)?;
    let h = metric_from_spec(&args.metric)?;
    let n = h.dim();
    let x = match &args.point {
        Some(p) => parse_point(p)?,
        None => vec![C64::new(0.0, 0.0); n],
    };
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let mut config = base_config(CommandKind::Curvature, &args.common, &cfg, n);
    config.metric = Some(args.metric.clone());
    config.point = Some(x.clone());
    config.levels = Some(args.levels);
    config.base_diameter = Some(args.base_diameter);
    config.fibers = Some(args.fibers);
    let estimate =
        curvature_from_extension(&h, &x, args.levels, args.base_diameter, args.fibers, args.common.seed, &cfg)?;
    let tensor = chern_curvature_fd(&h, &x, DEFAULT_CURVATURE_STEP)?;
    let bound = griffiths_lower_bound(&tensor, &h.checked(&x)?)?;
    let mut csv = String::from("diameter,c_raw,cylinders,fibers\n");
    for row in &estimate.levels {
        csv.push_str(&format!("{},{},{},{}\n", row.diameter, row.c_raw, row.cylinders, row.fibers));
    }
    let mut result = to_value(&estimate)?;
    result["griffiths_lower_bound"] = json!(bound.value);
    Ok(Report { config, result, csv, failure: None })
}

fn cmd_flat(args: &FlatArgs) -> Result<Report> {
    let cfg = solver_config(&args.common)?;
    let h = metric_from_spec(&args.metric)?;
    let n = h.dim();
    check_positive("gamma", args.gamma)?;
    check_positive("ode tolerance", args.ode_tol)?;
    let region = crate::classify::Region::parse(&args.region, n)?;
    let tol = args.tol.unwrap_or_else(|| default_index_tol(args.p));
    let res = args.res.unwrap_or(if n == 1 { 5 } else { 3 });
    let cylinder = resolve_cylinder(&args.cylinder, n)?;
    let mut config = base_config(CommandKind::Flat, &args.common, &cfg, n);
    config.metric = Some(args.metric.clone());
    config.region = Some(args.region.clone());
    config.gamma = Some(args.gamma);
    config.grid = Some(args.grid);
    config.p = Some(args.p);
    config.tol = Some(tol);
    config.res = Some(res);
    config.ode_tol = Some(args.ode_tol);
    config.cylinder = Some(cylinder.clone());
    let report = flatness_test(&h, &region, args.p, args.gamma, args.grid, tol, &cfg)?;
    let csv = evidence_csv(&report);
    let mut result = json!({ "flatness": to_value(&report)? });
    let mut failure = None;
    match flat_frame(&h, &cylinder, res, args.ode_tol) {
        Ok(frame) => result["frame"] = to_value(&frame)?,
        Err(e @ Error::NonFlatEvidence { unitarity, path, tolerance }) => {
            result["non_flat_evidence"] = json!({ "unitarity": unitarity, "path": path, "tolerance": tolerance });
            failure = Some(e);
        }
        Err(e) => return Err(e),
    }
    if failure.is_none() && report.verdict != Verdict::Flat {
        result["note"] = json!("frame residuals passed but the index test did not return flat");
    }
    Ok(Report { config, result, csv, failure })
}

fn cmd_lp(args: &LpArgs) -> Result<Report> {
    let cfg = solver_config(&args.common)?;
    let w = catalog_from_spec(&args.weight)?;
    let n = w.dim();
    let cylinder = resolve_cylinder(&args.cylinder, n)?;
    let mut config = base_config(CommandKind::Lp, &args.common, &cfg, n);
    config.weight = Some(args.weight.clone());
    config.cylinder = Some(cylinder.clone());
    config.p = Some(args.p);
    config.steps = Some(args.steps);
    config.tol = Some(args.tol);
    let trace = guan_zhou_extend(&cylinder, &w, args.p, args.steps, args.tol, config.degree, config.order)?;
    Ok(Report { config, result: to_value(&trace)?, csv: trace.to_csv(), failure: None })
}

fn render_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn render(report: &Report) -> Result<String> {
    match report.config.format {
        Format::Json => {
            let doc = json!({
                "schema": SCHEMA_VERSION,
                "command": report.config.command,
                "config": to_value(&report.config)?,
                "result": report.result,
            });
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::InvalidParams(format!("serialization failed: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => Ok(report.csv.clone()),
        Format::Table => Ok(render_table(&report.csv)),
    }
}

/// Run a parsed command. Solver and validation errors become exit codes.
pub fn execute(cli: &Cli) -> Outcome {
    let report = match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Curvature(a) => cmd_curvature(a),
        Command::Flat(a) => cmd_flat(a),
        Command::Lp(a) => cmd_lp(a),
    };
    let result = report.and_then(|r| render(&r).map(|s| (s, r.failure)));
    match result {
        Ok((output, None)) => Outcome { output, code: 0, message: None },
        Ok((output, Some(e))) => Outcome { output, code: e.exit_code(), message: Some(e.to_string()) },
        Err(e) => Outcome { output: String::new(), code: e.exit_code(), message: Some(e.to_string()) },
    }
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                Outcome { output: rendered, code, message: None }
            } else {
                Outcome { output: String::new(), code, message: Some(rendered) }
            }
        }
    }
}

/// Destination path from the parsed arguments, if any.
pub fn output_path(cli: &Cli) -> Option<&str> {
    let common = match &cli.command {
        Command::Index(a) => &a.common,
        Command::Classify(a) => &a.common,
        Command::Curvature(a) => &a.common,
        Command::Flat(a) => &a.common,
        Command::Lp(a) => &a.common,
    };
    common.out.as_deref()
}
