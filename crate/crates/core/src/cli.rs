//! The `pyramid` command line: one subcommand per experiment, JSON or CSV
//! records on stdout or `--out`, wall time on stderr.
//!
//! Exit codes: 0 pass, 1 usage error, 2 degenerate input handled by a
//! fallback, 3 gate failure. Partial results are written before a nonzero
//! exit.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::decomposition::{l2_exponent_report, partition_check, volume_scaling, Cutoffs};
use crate::error::Error;
use crate::multiplier::{
    decay_bound, decay_scan, multiplier_hybrid, multiplier_mc, multiplier_reduced, FrequencyTriple,
    MultiplierEstimate, ScanMethod, DEFAULT_SAMPLES,
};
use crate::operator::{domination_probe, norm_ratio_scan, GridSpec, TestFunction};
use crate::quadrature::{QuadratureSpec, DEFAULT_NODES};
use crate::region::{exclusion_check, query, ExponentPoint, HullLabel, Rational};
use crate::rng::RngStream;

pub const VERSION: &str = env!("PYRAMID_GIT_DESCRIBE");
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FALLBACK: i32 = 2;
pub const EXIT_GATE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScanRoute {
    Reduced,
    Hybrid,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OperatorCheck {
    Domination,
    Ratio,
}

#[derive(Debug, Parser)]
#[command(name = "pyramid", version = VERSION, about = "Multiplier, decomposition and exponent-region experiments for the pyramid operator")]
pub struct Cli {
    /// Ambient dimension.
    #[arg(long, global = true, default_value_t = 5)]
    pub d: usize,
    /// Seed for every random stream; required.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo budget; each command has its own default.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Gauss–Legendre nodes per axis before oscillation scaling.
    #[arg(long = "quad-nodes", global = true, default_value_t = DEFAULT_NODES)]
    pub quad_nodes: usize,
    /// Frequency triple (3d reals or `origin`/`random`) or exponent point
    /// (`1/2,1/2,1/2`), depending on the command.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Hull label: banach, thm1_S, sec10_S, sec10_Sprime.
    #[arg(long, global = true)]
    pub hull: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the multiplier by Monte Carlo, hybrid and reduced routes.
    Multiplier {
        /// Rotation samples for the hybrid route.
        #[arg(long, default_value_t = 20_000)]
        hybrid_samples: usize,
    },
    /// Decay of |m(λ·dir)| along random rays.
    DecayScan {
        #[arg(long, value_enum, default_value_t = ScanRoute::Reduced)]
        method: ScanRoute,
        #[arg(long, default_value_t = 5)]
        rays: usize,
        /// Comma-separated scales.
        #[arg(long, default_value = "1,2,4,8,16,32,64")]
        scales: String,
    },
    /// Partitions of unity, telescoping and support probes.
    PartitionCheck,
    /// Support-volume ratios across levels.
    SupportVolume,
    /// Exact hull membership of an exponent point.
    Region,
    /// L² exponent bookkeeping and its dimension threshold.
    L2Threshold {
        /// Largest dimension in the table.
        #[arg(long, default_value_t = 24)]
        max_d: u32,
    },
    /// Operator probes: pointwise domination or norm-ratio stability.
    Operator {
        #[arg(long, value_enum, default_value_t = OperatorCheck::Domination)]
        check: OperatorCheck,
        /// Evaluation points for the domination probe.
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Radial or per-axis grid nodes for the ratio probe.
        #[arg(long, default_value_t = 24)]
        grid_nodes: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Multiplier { .. } => "multiplier",
            Command::DecayScan { .. } => "decay-scan",
            Command::PartitionCheck => "partition-check",
            Command::SupportVolume => "support-volume",
            Command::Region => "region",
            Command::L2Threshold { .. } => "l2-threshold",
            Command::Operator { .. } => "operator",
        }
    }
}

/// A flat table for CSV output.
#[derive(Debug, Default)]
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Result of one command before serialization.
struct Outcome {
    result: Value,
    table: Table,
    gate: Gate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Gate {
    Pass,
    Fallback,
    Fail,
}

impl Gate {
    fn exit_code(self) -> i32 {
        match self {
            Gate::Pass => EXIT_PASS,
            Gate::Fallback => EXIT_FALLBACK,
            Gate::Fail => EXIT_GATE,
        }
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            Gate::Pass
        } else {
            Gate::Fail
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn parse_triple(s: &str, d: usize, stream: RngStream) -> Result<FrequencyTriple, Error> {
    match s {
        "origin" => Ok(FrequencyTriple::origin(d)),
        "random" => Ok(FrequencyTriple::random(d, 3.0, &mut stream.rng())),
        _ => {
            let vals: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| usage(format!("cannot parse point {s:?}")))?;
            if vals.len() != 3 * d {
                return Err(usage(format!(
                    "point needs 3d = {} values, got {}",
                    3 * d,
                    vals.len()
                )));
            }
            FrequencyTriple::from_flat(&vals)
        }
    }
}

fn estimate_json(e: &MultiplierEstimate) -> Value {
    json!({"re": e.value.re, "im": e.value.im, "stderr": e.stderr})
}

fn cmd_multiplier(cli: &Cli, seed: u64, hybrid_samples: usize) -> Result<Outcome, Error> {
    let d = cli.d;
    let point = parse_triple(
        cli.point.as_deref().unwrap_or("random"),
        d,
        RngStream::new(seed, 100),
    )?;
    let spec = QuadratureSpec::default().with_nodes(cli.quad_nodes);
    spec.validate()?;
    let mc = multiplier_mc(
        &point,
        cli.samples.unwrap_or(DEFAULT_SAMPLES),
        RngStream::new(seed, 0),
    )?;
    let reduced = multiplier_reduced(&point, &spec);
    let hybrid = multiplier_hybrid(&point, hybrid_samples, &spec, RngStream::new(seed, 1));
    let mut degenerate = false;
    let mut side = |r: &Result<MultiplierEstimate, Error>| match r {
        Ok(e) => (estimate_json(e), Some(e.agrees_with(&mc, 3.0))),
        Err(err) => {
            if matches!(err, Error::DegenerateFrame(_)) {
                degenerate = true;
            }
            (json!({"refused": err.to_string()}), None)
        }
    };
    let (reduced_json, reduced_ok) = side(&reduced);
    let (hybrid_json, hybrid_ok) = side(&hybrid);
    let agree = reduced_ok.unwrap_or(true) && hybrid_ok.unwrap_or(true);
    let bound = decay_bound(&point)?;
    let verdict = if agree { "PASS" } else { "FAIL" };
    let gate = if !agree {
        Gate::Fail
    } else if degenerate {
        Gate::Fallback
    } else {
        Gate::Pass
    };
    let mut table = Table::new(&["method", "re", "im", "stderr", "refused", "agrees_with_mc"]);
    table.push(vec![
        "mc".into(),
        num(mc.value.re),
        num(mc.value.im),
        num(mc.stderr),
        String::new(),
        String::new(),
    ]);
    for (name, r, ok) in [
        ("reduced", &reduced, reduced_ok),
        ("hybrid", &hybrid, hybrid_ok),
    ] {
        match r {
            Ok(e) => table.push(vec![
                name.into(),
                num(e.value.re),
                num(e.value.im),
                num(e.stderr),
                String::new(),
                ok.map(|b| b.to_string()).unwrap_or_default(),
            ]),
            Err(err) => table.push(vec![
                name.into(),
                String::new(),
                String::new(),
                String::new(),
                err.to_string(),
                String::new(),
            ]),
        }
    }
    Ok(Outcome {
        result: json!({
            "point": point.flat(),
            "norm": point.norm(),
            "mc": estimate_json(&mc),
            "reduced": reduced_json,
            "hybrid": hybrid_json,
            "decay_bound": bound,
            "verdict": verdict,
        }),
        table,
        gate,
    })
}

fn cmd_decay_scan(
    cli: &Cli,
    seed: u64,
    method: ScanRoute,
    rays: usize,
    scales: &str,
) -> Result<Outcome, Error> {
    let scales: Result<Vec<f64>, _> = scales.split(',').map(|x| x.trim().parse::<f64>()).collect();
    let scales = scales.map_err(|_| usage("cannot parse --scales"))?;
    let method = match method {
        ScanRoute::Reduced => ScanMethod::Reduced,
        ScanRoute::Hybrid => ScanMethod::Hybrid,
        ScanRoute::Mc => ScanMethod::Mc,
    };
    let spec = QuadratureSpec::default().with_nodes(cli.quad_nodes);
    spec.validate()?;
    let budget = cli.samples.unwrap_or(DEFAULT_SAMPLES);
    let mut rng = RngStream::new(seed, 200).rng();
    let mut table = Table::new(&["ray", "lambda", "modulus", "stderr", "bound", "ratio"]);
    let mut scans = Vec::with_capacity(rays);
    let mut pass = true;
    for ray in 0..rays {
        let dir = FrequencyTriple::random(cli.d, 1.0, &mut rng);
        let scan = decay_scan(
            &dir,
            &scales,
            method,
            budget,
            &spec,
            RngStream::new(seed, 300 + ray as u64),
        )?;
        for r in &scan.rows {
            table.push(vec![
                ray.to_string(),
                num(r.lambda),
                num(r.modulus),
                num(r.stderr),
                num(r.bound),
                num(r.ratio),
            ]);
        }
        pass &= scan.pass;
        scans.push(json!({"direction": dir.flat(), "scan": scan}));
    }
    Ok(Outcome {
        result: json!({"method": format!("{method:?}").to_lowercase(), "rays": scans}),
        table,
        gate: Gate::from_pass(pass),
    })
}

fn cmd_partition_check(cli: &Cli, seed: u64) -> Result<Outcome, Error> {
    let r = partition_check(
        cli.d,
        cli.samples.unwrap_or(1000),
        &Cutoffs::default(),
        RngStream::new(seed, 0),
    )?;
    let mut table = Table::new(&[
        "points",
        "phi_residual",
        "zeta_residual",
        "psi_residual",
        "rho_residual",
        "rho1_residual",
        "telescoping_residual",
        "band_violations",
        "upper_psi_violations",
        "pass",
    ]);
    table.push(vec![
        r.points.to_string(),
        num(r.phi_residual),
        num(r.zeta_residual),
        num(r.psi_residual),
        num(r.rho_residual),
        num(r.rho1_residual),
        num(r.telescoping_residual),
        r.band_violations.to_string(),
        r.upper_psi_violations.to_string(),
        r.pass.to_string(),
    ]);
    Ok(Outcome {
        gate: Gate::from_pass(r.pass),
        result: serde_json::to_value(&r).expect("report serializes"),
        table,
    })
}

fn cmd_support_volume(cli: &Cli, seed: u64) -> Result<Outcome, Error> {
    let r = volume_scaling(
        cli.d,
        cli.samples.unwrap_or(200_000),
        RngStream::new(seed, 0),
    )?;
    let mut table = Table::new(&[
        "i",
        "j",
        "k",
        "n",
        "volume",
        "stderr",
        "rel_stderr",
        "scale",
        "normalized",
    ]);
    for row in &r.rows {
        table.push(vec![
            row.index.i.to_string(),
            row.index.j.to_string(),
            row.index.k.to_string(),
            row.index.n.to_string(),
            num(row.volume.value),
            num(row.volume.stderr),
            num(row.volume.rel_stderr),
            num(row.scale),
            num(row.normalized),
        ]);
    }
    Ok(Outcome {
        gate: Gate::from_pass(r.pass),
        result: serde_json::to_value(&r).expect("report serializes"),
        table,
    })
}

fn cmd_region(cli: &Cli) -> Result<Outcome, Error> {
    let point: ExponentPoint = cli.point.as_deref().unwrap_or("1/2,1/2,1/2").parse()?;
    let label: HullLabel = cli.hull.as_deref().unwrap_or("sec10_S").parse()?;
    let d = u32::try_from(cli.d).map_err(|_| usage("--d out of range"))?;
    let q = query(label, d, point.clone())?;
    let centre = ExponentPoint::from_ints([(1, 2), (1, 2), (1, 2)])?;
    let exclusion = if label == HullLabel::Sec10S && point == centre && d >= 5 {
        Some(exclusion_check(d)?)
    } else {
        None
    };
    let verdict = if q.membership.is_inside() {
        "included"
    } else {
        "excluded"
    };
    let mut pass = q.certificate_valid;
    if let Some(e) = &exclusion {
        pass &= e.agree && e.lp_certificate_valid;
    }
    let mut table = Table::new(&["hull", "point", "verdict", "certificate_valid", "witness"]);
    table.push(vec![
        label.name().into(),
        point.to_string(),
        verdict.into(),
        q.certificate_valid.to_string(),
        exclusion
            .as_ref()
            .map(|e| show(&e.witness))
            .unwrap_or_default(),
    ]);
    Ok(Outcome {
        result: json!({
            "query": q,
            "verdict": verdict,
            "witness": exclusion.as_ref().map(|e| show(&e.witness)),
            "exclusion": exclusion,
        }),
        table,
        gate: Gate::from_pass(pass),
    })
}

fn show(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn cmd_l2_threshold(max_d: u32) -> Result<Outcome, Error> {
    if max_d < 4 {
        return Err(usage("--max-d must be at least 4"));
    }
    let mut table = Table::new(&["dim", "per_i_exponent", "summable", "joint_exponent"]);
    let mut reports = Vec::new();
    let mut matches_formula = true;
    for d in 4..=max_d {
        let r = l2_exponent_report(d)?;
        let formula = Rational::new(BigInt::from(-(d as i64)), BigInt::from(6))
            + Rational::new(BigInt::from(5), BigInt::from(2));
        matches_formula &= r.per_i_exponent == show(&formula);
        table.push(vec![
            d.to_string(),
            r.per_i_exponent.clone(),
            r.summable.to_string(),
            r.joint_exponent.clone(),
        ]);
        reports.push(r);
    }
    let threshold = reports[0].threshold;
    Ok(Outcome {
        result: json!({
            "threshold": threshold,
            "exponent": "-d/6+5/2",
            "matches_formula": matches_formula,
            "table": reports,
        }),
        table,
        gate: Gate::from_pass(matches_formula && threshold == 16),
    })
}

fn cmd_operator(
    cli: &Cli,
    seed: u64,
    check: OperatorCheck,
    points: usize,
    grid_nodes: usize,
) -> Result<Outcome, Error> {
    let d = cli.d;
    match check {
        OperatorCheck::Domination => {
            let n = cli.samples.unwrap_or(20_000);
            let mut rng = RngStream::new(seed, 400).rng();
            let mut table = Table::new(&[
                "x_index",
                "pyramid",
                "pyramid_stderr",
                "triangle",
                "triangle_stderr",
                "excess_z",
                "holds",
                "within_sup_bound",
            ]);
            let mut probes = Vec::with_capacity(points);
            let mut pass = true;
            for k in 0..points {
                let c: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
                let f = TestFunction::gaussian(c.clone(), 0.5 + rng.gen::<f64>())?;
                let g = TestFunction::ball_indicator(c, 0.8 + rng.gen::<f64>())?;
                let h = TestFunction::gaussian(vec![0.0; d], 1.0)?;
                let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
                let p = domination_probe(
                    &f,
                    &g,
                    &h,
                    &x,
                    n,
                    RngStream::new(seed, 1000 + k as u64),
                    3.0,
                )?;
                let sup_ok = p.pyramid.value.abs() <= f.sup_norm() * g.sup_norm() * h.sup_norm();
                pass &= p.holds && sup_ok;
                table.push(vec![
                    k.to_string(),
                    num(p.pyramid.value),
                    num(p.pyramid.stderr),
                    num(p.triangle.value),
                    num(p.triangle.stderr),
                    num(p.excess_z),
                    p.holds.to_string(),
                    sup_ok.to_string(),
                ]);
                probes.push(p);
            }
            Ok(Outcome {
                result: json!({"check": "domination", "samples": n, "probes": probes}),
                table,
                gate: Gate::from_pass(pass),
            })
        }
        OperatorCheck::Ratio => {
            let point: ExponentPoint = cli.point.as_deref().unwrap_or("1/2,1/2,1/2").parse()?;
            let f = TestFunction::gaussian(vec![0.0; d], 1.0)?;
            let r = norm_ratio_scan(
                &f,
                &f,
                &f,
                &point,
                GridSpec {
                    nodes: grid_nodes,
                    extent: None,
                },
                cli.samples.unwrap_or(4000),
                RngStream::new(seed, 0),
            )?;
            let mut table = Table::new(&[
                "lambda", "nodes", "t_norm", "f_norm", "g_norm", "h_norm", "ratio",
            ]);
            for row in std::iter::once(&r.base)
                .chain(std::iter::once(&r.refined))
                .chain(r.dilations.iter())
            {
                table.push(vec![
                    num(row.lambda),
                    row.nodes.to_string(),
                    num(row.t_norm),
                    num(row.f_norm),
                    num(row.g_norm),
                    num(row.h_norm),
                    num(row.ratio),
                ]);
            }
            Ok(Outcome {
                gate: Gate::from_pass(r.stable),
                result: serde_json::to_value(&r).expect("report serializes"),
                table,
            })
        }
    }
}

fn dispatch(cli: &Cli, seed: u64) -> Result<Outcome, Error> {
    if cli.d < 4 && !matches!(cli.command, Command::L2Threshold { .. }) {
        return Err(usage("--d must be at least 4"));
    }
    match &cli.command {
        Command::Multiplier { hybrid_samples } => cmd_multiplier(cli, seed, *hybrid_samples),
        Command::DecayScan {
            method,
            rays,
            scales,
        } => cmd_decay_scan(cli, seed, *method, *rays, scales),
        Command::PartitionCheck => cmd_partition_check(cli, seed),
        Command::SupportVolume => cmd_support_volume(cli, seed),
        Command::Region => cmd_region(cli),
        Command::L2Threshold { max_d } => cmd_l2_threshold(*max_d),
        Command::Operator {
            check,
            points,
            grid_nodes,
        } => cmd_operator(cli, seed, *check, *points, *grid_nodes),
    }
}

fn render(cli: &Cli, seed: u64, outcome: &Outcome) -> String {
    let command = cli.command.name();
    match cli.format {
        Format::Json => {
            let record = json!({
                "schema_version": SCHEMA_VERSION,
                "command": command,
                "version": VERSION,
                "seed": seed,
                "d": cli.d,
                "gate": outcome.gate,
                "result": outcome.result,
            });
            let mut s = serde_json::to_string_pretty(&record).expect("record serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["schema_version", "command", "version", "seed", "d"];
            header.extend(outcome.table.header.iter().map(String::as_str));
            w.write_record(&header).expect("in-memory write");
            let meta = [
                SCHEMA_VERSION.to_string(),
                command.to_string(),
                VERSION.to_string(),
                seed.to_string(),
                cli.d.to_string(),
            ];
            for row in &outcome.table.rows {
                w.write_record(meta.iter().chain(row.iter()))
                    .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
        }
    }
}

fn emit(cli: &Cli, text: &str) -> std::io::Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let Some(seed) = cli.seed else {
        eprintln!("error: --seed is required");
        return EXIT_USAGE;
    };
    let start = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = pool.install(|| dispatch(cli, seed));
    let code = match outcome {
        Ok(outcome) => {
            if let Err(e) = emit(cli, &render(cli, seed, &outcome)) {
                eprintln!("error: cannot write output: {e}");
                return EXIT_USAGE;
            }
            outcome.gate.exit_code()
        }
        Err(e @ Error::DegenerateFrame(_)) => {
            eprintln!("error: {e}");
            EXIT_FALLBACK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    };
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    code
}

/// Parses `args` (program name first) and runs. Help and version requests
/// exit 0, other parse failures 1.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            code
        }
    }
}
