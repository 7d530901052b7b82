//! Subcommand argument structs and handlers.
//!
//! Each argument struct derives both `clap::Args` and serde, so the same
//! shape works as CLI flags and as a JSON config document. `--config FILE`
//! supplies defaults; explicitly passed flags override the file's fields.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use subinf::ccgeometry::{self, CcOptions, CcOutcome};
use subinf::flow::{self, FlowOpts};
use subinf::grid::GridField;
use subinf::maps::AnalyticMap;
use subinf::operators;
use subinf::psolve::{self, MinimizeOpts};
use subinf::suite;
use subinf::variational::{self, Subdomain};
use subinf::{frames, maps};

use crate::config::{
    self, atomic_write, emit_report, load_config, parse_box, parse_points, parse_vec, RunReport,
};

/// CLI / config error with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<subinf::Error> for CliError {
    fn from(e: subinf::Error) -> Self {
        use subinf::Error::*;
        match e {
            DimensionMismatch { .. } | IndexOutOfRange { .. } | InvalidParameter(_)
            | UnknownName { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Evaluate the infinity- or p-Laplacian residual of a map on points or
    /// a grid of points.
    Residual(ResidualArgs),
    /// Approximate the Carnot-Caratheodory distance between two points.
    Ccdist(CcdistArgs),
    /// Integrate the horizontal gradient flow and report its invariants.
    Flow(FlowArgs),
    /// Run rank-one or vertical variation batches.
    Varcheck(VarcheckArgs),
    /// Compare interior and boundary extrema of |Xu|.
    Maxmin(MaxminArgs),
    /// Minimize discrete p-energies along a p-schedule.
    Psolve(PsolveArgs),
    /// Inspect a frame: coefficients, brackets, Hörmander rank.
    Frames(FramesArgs),
    /// Run the acceptance suite and print the pass/fail table.
    Suite(SuiteArgs),
}

pub fn run(command: Command) -> CliResult<i32> {
    match command {
        Command::Residual(a) => residual(a),
        Command::Ccdist(a) => ccdist(a),
        Command::Flow(a) => flow_cmd(a),
        Command::Varcheck(a) => varcheck(a),
        Command::Maxmin(a) => maxmin(a),
        Command::Psolve(a) => psolve_cmd(a),
        Command::Frames(a) => frames_cmd(a),
        Command::Suite(a) => suite_cmd(a),
    }
}

/// Overlay explicitly-set flags (non-null JSON fields) onto the config-file
/// defaults.
fn merge_with_config<T: Serialize + DeserializeOwned + Clone>(
    flags: &T,
    config_path: Option<&Path>,
) -> CliResult<T> {
    let Some(path) = config_path else {
        return Ok(flags.clone());
    };
    let base: serde_json::Value = load_config(path).map_err(validation)?;
    let mut merged = base;
    let overlay = serde_json::to_value(flags).map_err(|e| validation(e.to_string()))?;
    if let (Some(m), Some(o)) = (merged.as_object_mut(), overlay.as_object()) {
        for (k, v) in o {
            if !v.is_null() && k != "config" {
                m.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| validation(format!("config merge: {e}")))
}

fn resolve_map(name: &str, n_hint: Option<usize>) -> CliResult<AnalyticMap> {
    Ok(maps::by_name(name, n_hint)?)
}

fn resolve_frame(name: &str) -> CliResult<frames::Frame> {
    Ok(frames::by_name(name)?)
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> CliResult<()> {
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// residual

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResidualArgs {
    /// Map name (paper_exp, aronsson, gauss, coord:K, quad:ROWS, affine:ROWS|B).
    #[arg(long)]
    pub map: Option<String>,
    /// Frame name (euclidean:N, heisenberg1, grushin).
    #[arg(long)]
    pub frame: Option<String>,
    /// Explicit evaluation points "x,y;x,y;...".
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    /// Alternatively: sample a grid over this box "lo,hi;lo,hi".
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub box_spec: Option<String>,
    /// Grid nodes per axis when --box is given.
    #[arg(long)]
    pub grid: Option<usize>,
    /// "inf" for the infinity-Laplacian, or a finite p >= 2.
    #[arg(long)]
    pub p: Option<String>,
    /// Relative singular-value cutoff for the projectors.
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON config file with defaults for these fields.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Report path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResidualRecord {
    point: Vec<f64>,
    #[serde(flatten)]
    value: operators::OperatorValue,
}

fn residual(args: ResidualArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let map_name = args.map.as_deref().ok_or_else(|| validation("--map is required"))?;
    let frame_name = args
        .frame
        .as_deref()
        .ok_or_else(|| validation("--frame is required"))?;
    let frame = resolve_frame(frame_name)?;
    let map = resolve_map(map_name, Some(frame.dim()))?;

    let points: Vec<Vec<f64>> = match (&args.points, &args.box_spec) {
        (Some(spec), _) => parse_points(spec).map_err(validation)?,
        (None, Some(bspec)) => {
            let b = parse_box(bspec).map_err(validation)?;
            let nodes = args.grid.unwrap_or(21);
            let d = Subdomain::uniform(&b, nodes.max(2)).map_err(CliError::from)?;
            d.samples
        }
        (None, None) => return Err(validation("provide --points or --box")),
    };

    let tol = args.tol.unwrap_or(frames::RANK_TOL);
    let p_spec = args.p.clone().unwrap_or_else(|| "inf".to_string());
    let mut records = Vec::new();
    let mut finite_records = Vec::new();
    for point in &points {
        let jet = map.jet(point)?;
        let fmat = frame.eval(point)?;
        let dmat = frame.eval_dcoeff(point)?;
        if p_spec == "inf" {
            let value = operators::infinity_laplacian(&jet, &fmat, &dmat, tol)?;
            records.push(ResidualRecord {
                point: point.clone(),
                value,
            });
        } else {
            let p: f64 = p_spec
                .parse()
                .map_err(|_| validation(format!("bad p `{p_spec}`")))?;
            let r = operators::p_laplacian_expanded(&jet, &fmat, &dmat, p)?;
            finite_records.push(json!({
                "point": point,
                "p": p,
                "residual": r.as_slice(),
            }));
        }
    }

    let results = if p_spec == "inf" {
        json!({ "kind": "infinity_laplacian", "tol": tol, "records": records })
    } else {
        json!({ "kind": "p_laplacian_expanded", "records": finite_records })
    };
    let echo = Command::Residual(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// ccdist

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CcdistArgs {
    #[arg(long)]
    pub frame: Option<String>,
    /// Search box "lo,hi;lo,hi;..." containing both endpoints.
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub box_spec: Option<String>,
    /// Start point "x,y,...".
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// Target point "x,y,...".
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    /// Lattice cell size and Euler substep length.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Control directions sampled on the unit sphere of R^m.
    #[arg(long)]
    pub controls_per_step: Option<usize>,
    /// Euler substeps per long candidate move.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Per-axis multipliers on the cell size, e.g. "1,1,0.01" to refine a
    /// bracket-reachable axis.
    #[arg(long, allow_hyphen_values = true)]
    pub cell_scales: Option<String>,
    /// Seed for the direction menu when m >= 3.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optional CSV dump of the witness curve.
    #[arg(long)]
    pub witness_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn ccdist(args: CcdistArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let b = parse_box(
        args.box_spec
            .as_deref()
            .ok_or_else(|| validation("--box is required"))?,
    )
    .map_err(validation)?;
    let from = parse_vec(args.from.as_deref().ok_or_else(|| validation("--from is required"))?)
        .map_err(validation)?;
    let to = parse_vec(args.to.as_deref().ok_or_else(|| validation("--to is required"))?)
        .map_err(validation)?;
    let resolution = args.resolution.unwrap_or(0.04);
    let cps = args.controls_per_step.unwrap_or(16);
    let mut opts = CcOptions {
        direction_seed: args.seed.unwrap_or(0),
        ..CcOptions::default()
    };
    if let Some(s) = args.substeps {
        opts.substeps = s.max(1);
    }
    if let Some(spec) = &args.cell_scales {
        opts.cell_scales = Some(parse_vec(spec).map_err(validation)?);
    }

    let outcome = ccgeometry::cc_distance_with(&frame, &b, &from, &to, resolution, cps, &opts)?;
    let reached = matches!(outcome, CcOutcome::Reached(_));
    if let (CcOutcome::Reached(r), Some(csv)) = (&outcome, &args.witness_csv) {
        let n = frame.dim();
        let m = frame.size();
        let mut header = String::from("t");
        for a in 0..n {
            header.push_str(&format!(",r{a}"));
        }
        for i in 0..m {
            header.push_str(&format!(",a{i}"));
        }
        let rows: Vec<Vec<f64>> = r
            .curve
            .times
            .iter()
            .zip(&r.curve.points)
            .zip(&r.curve.controls)
            .map(|((t, p), c)| {
                let mut row = vec![*t];
                row.extend_from_slice(p);
                row.extend_from_slice(c);
                row
            })
            .collect();
        write_csv(csv, &header, &rows)?;
    }

    let echo = Command::Ccdist(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results: outcome,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(if reached { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// flow

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowArgs {
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub frame: Option<String>,
    /// Start point "x,y,...".
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Unit flow parameter in R^N, "xi1,xi2,...".
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration domain "lo,hi;lo,hi;...".
    #[arg(long = "domain", allow_hyphen_values = true)]
    #[serde(rename = "domain")]
    pub domain_spec: Option<String>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Optional CSV trace (t, r, |Xu|^2, xi.u).
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn flow_cmd(args: FlowArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let map = resolve_map(
        args.map.as_deref().ok_or_else(|| validation("--map is required"))?,
        Some(frame.dim()),
    )?;
    let x0 = parse_vec(args.x0.as_deref().ok_or_else(|| validation("--x0 is required"))?)
        .map_err(validation)?;
    let xi = DVector::from_vec(
        parse_vec(args.xi.as_deref().ok_or_else(|| validation("--xi is required"))?)
            .map_err(validation)?,
    );
    let xi = if xi.norm() > 0.0 { &xi / xi.norm() } else { xi };
    let domain = parse_box(
        args.domain_spec
            .as_deref()
            .ok_or_else(|| validation("--domain is required"))?,
    )
    .map_err(validation)?;
    let dt = args.dt.unwrap_or(0.01);
    let opts = FlowOpts {
        max_steps: args.max_steps.unwrap_or(10_000),
    };

    let traj = flow::integrate_flow(&map, &frame, &x0, &xi, dt, &domain, &opts)?;
    let report = flow::affinity_report(&traj)?;

    if let Some(csv) = &args.trace_csv {
        let n = frame.dim();
        let mut header = String::from("t");
        for a in 0..n {
            header.push_str(&format!(",r{a}"));
        }
        header.push_str(",hnorm_sq,projection");
        let rows: Vec<Vec<f64>> = traj
            .times
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut row = vec![*t];
                row.extend_from_slice(&traj.points[k]);
                row.push(traj.hnorms[k]);
                row.push(traj.projections[k]);
                row
            })
            .collect();
        write_csv(csv, &header, &rows)?;
    }

    let results = json!({
        "affinity": report,
        "steps": traj.times.len() - 1,
        "exit_time": traj.exit_time,
        "truncated": traj.truncated,
    });
    let echo = Command::Flow(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// varcheck

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VarcheckArgs {
    /// "rank-one" or "vertical".
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub frame: Option<String>,
    /// Subdomain box "lo,hi;lo,hi".
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub box_spec: Option<String>,
    /// Sampling cells per axis.
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nullspace basis index for vertical checks.
    #[arg(long)]
    pub basis_index: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn varcheck(args: VarcheckArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let map = resolve_map(
        args.map.as_deref().ok_or_else(|| validation("--map is required"))?,
        Some(frame.dim()),
    )?;
    let b = parse_box(
        args.box_spec
            .as_deref()
            .ok_or_else(|| validation("--box is required"))?,
    )
    .map_err(validation)?;
    let d = Subdomain::uniform(&b, args.cells.unwrap_or(9))?;
    let draws = args.draws.unwrap_or(50);
    let seed = args.seed.unwrap_or(0);
    let kind = args.kind.as_deref().unwrap_or("rank-one");

    let reports = match kind {
        "rank-one" => variational::rank_one_draws(&map, &frame, &d, draws, seed)?,
        "vertical" => {
            let field =
                variational::vertical_field(&map, &frame, &d, args.basis_index.unwrap_or(0))?;
            variational::vertical_draws(&map, &frame, &d, &field, draws, seed)?
        }
        other => return Err(validation(format!("unknown kind `{other}`"))),
    };

    let min_margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let results = json!({
        "kind": kind,
        "draws": reports.len(),
        "min_margin": min_margin,
        "reports": reports,
    });
    let echo = Command::Varcheck(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// maxmin

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MaxminArgs {
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub box_spec: Option<String>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn maxmin(args: MaxminArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let map = resolve_map(
        args.map.as_deref().ok_or_else(|| validation("--map is required"))?,
        Some(frame.dim()),
    )?;
    let b = parse_box(
        args.box_spec
            .as_deref()
            .ok_or_else(|| validation("--box is required"))?,
    )
    .map_err(validation)?;
    let d = Subdomain::uniform(&b, args.cells.unwrap_or(10))?;
    let report = variational::max_principle_check(&map, &frame, &d, args.tol.unwrap_or(1e-8))?;
    let pass = report.pass;

    let echo = Command::Maxmin(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results: report,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(if pass { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// psolve

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PsolveArgs {
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box")]
    pub box_spec: Option<String>,
    /// Grid nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Map providing the Dirichlet boundary data (interior starts at 0).
    #[arg(long)]
    pub boundary: Option<String>,
    /// Increasing p-schedule starting at 2, e.g. "2,4,8,16,32".
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub gtol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Optional CSV lattice dump of the final field (node coords + values).
    #[arg(long)]
    pub field_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn psolve_cmd(args: PsolveArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let b = parse_box(
        args.box_spec
            .as_deref()
            .ok_or_else(|| validation("--box is required"))?,
    )
    .map_err(validation)?;
    let boundary = resolve_map(
        args.boundary
            .as_deref()
            .ok_or_else(|| validation("--boundary is required"))?,
        Some(frame.dim()),
    )?;
    let nodes = args.nodes.unwrap_or(33);
    let schedule: Vec<f64> = match &args.schedule {
        Some(spec) => parse_vec(spec).map_err(validation)?,
        None => vec![2.0, 4.0, 8.0, 16.0, 32.0],
    };

    let mut field = GridField::sample(
        &b,
        &vec![nodes; frame.dim()],
        boundary.components(),
        |x| boundary.value(x).expect("boundary data evaluation"),
    )?;
    let zero = vec![0.0; boundary.components()];
    for idx in field.all_indices() {
        if !field.is_dirichlet(&idx) {
            field.set_value(&idx, &zero);
        }
    }

    let opts = MinimizeOpts {
        gtol: args.gtol.unwrap_or(1e-9),
        max_iters: args.max_iters.unwrap_or(4000),
        ..MinimizeOpts::default()
    };
    let cont = psolve::p_continuation(&field, &frame, &schedule, &opts)?;
    let failed = cont.failure.is_some();

    if let (Some(csv), Some(final_field)) = (&args.field_csv, cont.fields.last()) {
        let n = frame.dim();
        let mut header: String = (0..n).map(|a| format!("x{a},")).collect();
        header.push_str(
            &(0..final_field.components())
                .map(|c| format!("u{c}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        let rows: Vec<Vec<f64>> = final_field
            .all_indices()
            .into_iter()
            .map(|idx| {
                let mut row = final_field.node_coords(&idx);
                row.extend(final_field.value_at(&idx).iter().copied());
                row
            })
            .collect();
        write_csv(csv, &header, &rows)?;
    }

    let results = json!({
        "stages": cont.stages,
        "failure": cont.failure,
        "nodes_per_axis": vec![nodes; frame.dim()],
    });
    let echo = Command::Psolve(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(if failed { 2 } else { 0 })
}

// ---------------------------------------------------------------------------
// frames

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FramesArgs {
    /// "info", "bracket", or "rank".
    #[arg(long, default_value = "info")]
    #[serde(default = "default_action")]
    pub action: String,
    #[arg(long)]
    pub frame: Option<String>,
    /// Evaluation point "x,y,...".
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<String>,
    /// Bracket indices (1-based).
    #[arg(long)]
    pub i: Option<usize>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn default_action() -> String {
    "info".to_string()
}

fn frames_cmd(args: FramesArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let frame = resolve_frame(
        args.frame
            .as_deref()
            .ok_or_else(|| validation("--frame is required"))?,
    )?;
    let at = match &args.at {
        Some(spec) => parse_vec(spec).map_err(validation)?,
        None => vec![0.0; frame.dim()],
    };

    let results = match args.action.as_str() {
        "info" => {
            let coeff = frame.eval(&at)?;
            json!({
                "name": frame.name(),
                "ambient_dim": frame.dim(),
                "frame_size": frame.size(),
                "at": at,
                "coeff": coeff.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        }
        "bracket" => {
            let i = args.i.ok_or_else(|| validation("--i is required for bracket"))?;
            let j = args.j.ok_or_else(|| validation("--j is required for bracket"))?;
            let b = frame.lie_bracket(i, j, &at)?;
            json!({ "i": i, "j": j, "at": at, "vector": b.vector.as_slice(), "order": b.order })
        }
        "rank" => {
            let order = args.max_order.unwrap_or(2);
            let rank = frame.hormander_rank(&at, order)?;
            json!({
                "at": at,
                "max_order": order,
                "rank": rank,
                "spans_ambient": rank == frame.dim(),
            })
        }
        other => return Err(validation(format!("unknown frames action `{other}`"))),
    };

    let echo = Command::Frames(args.clone());
    emit_report(
        args.output.as_deref(),
        &RunReport {
            config_echo: echo,
            results,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// suite

#[derive(Args, Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SuiteArgs {
    /// Worker threads (default: the SUBINF_THREADS env var, else 1).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn suite_cmd(args: SuiteArgs) -> CliResult<i32> {
    let t0 = Instant::now();
    let args = merge_with_config(&args, args.config.as_deref())?;
    let threads = args
        .threads
        .or_else(|| {
            std::env::var("SUBINF_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);

    let reports = suite::run_all_threaded(threads).map_err(CliError::from)?;
    for r in &reports {
        println!("{}", r.line());
    }
    let all_pass = reports.iter().all(|r| r.pass);
    println!(
        "suite: {}/{} criteria passed",
        reports.iter().filter(|r| r.pass).count(),
        reports.len()
    );

    let echo = Command::Suite(args.clone());
    emit_report(
        args.output.as_deref().or(None),
        &RunReport {
            config_echo: echo,
            results: &reports,
            tool_version: config::tool_version(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    )
    .ok(); // table already printed; report file is best-effort only when requested
    Ok(if all_pass { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_round_trips_through_serde() {
        let cmd = Command::Residual(ResidualArgs {
            map: Some("paper_exp".into()),
            frame: Some("euclidean:2".into()),
            points: Some("0.3,0.1".into()),
            box_spec: None,
            grid: None,
            p: Some("inf".into()),
            tol: Some(1e-8),
            config: None,
            output: None,
        });
        let text = serde_json::to_string(&cmd).unwrap();
        let back: Command = serde_json::from_str(&text).unwrap();
        assert_eq!(cmd, back);
        assert!(text.contains("\"subcommand\":\"residual\""));
    }

    #[test]
    fn merge_prefers_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"map": "aronsson", "frame": "euclidean:2", "points": "1,1"}"#,
        )
        .unwrap();
        let flags = ResidualArgs {
            map: Some("paper_exp".into()),
            frame: None,
            points: None,
            box_spec: None,
            grid: None,
            p: None,
            tol: None,
            config: Some(path.clone()),
            output: None,
        };
        let merged = merge_with_config(&flags, Some(&path)).unwrap();
        assert_eq!(merged.map.as_deref(), Some("paper_exp")); // flag wins
        assert_eq!(merged.frame.as_deref(), Some("euclidean:2")); // from file
        assert_eq!(merged.points.as_deref(), Some("1,1"));
    }
}
