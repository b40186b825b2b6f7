//! The `pcl` command line: JSON specs in, JSON reports and CSV tables out.
//!
//! Every file written through `--out` is paired with `<out>.manifest.json`,
//! from which `pcl replay` regenerates the file and compares digests.
//!
//! Exit codes: 0 success, 1 refuted or failed certification, 2 usage or
//! input error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::boosting::{alpha_sweep, BoostConfig};
use crate::composite::CompositeLoss;
use crate::convexity::{
    binary_iff_check, check_canonical, check_hessian_criterion, check_theorem5, default_resolution,
    find_modulus, region_boundary, region_check, ConvexityReport, Grid, Verdict, DEFAULT_MARGIN,
};
use crate::designer::{design_loss, DesignSpec, UFunction};
use crate::error::{Error, Result};
use crate::numerics::ToleranceConfig;
use crate::proper_loss::{binary_weight, WeightSpec};
use crate::simplex::{ProbVector, ProjectedProb};
use crate::spec::{round_json, CompositeSpec, LinkSpec, LossSpec};
use crate::verify::run_invariant_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REFUTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pcl",
    version,
    about = "Proper composite losses: evaluation, convexity certificates, design and boosting"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Grid resolution; defaults depend on the number of classes.
    #[arg(long, global = true)]
    pub grid_res: Option<usize>,
    #[arg(long, global = true, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    /// Tolerance block as inline JSON or a path to a JSON file.
    #[arg(long, global = true)]
    pub tolerances: Option<String>,
    #[arg(long, global = true)]
    pub fd_step: Option<f64>,
    #[arg(long, global = true)]
    pub psd_tol: Option<f64>,
    #[arg(long, global = true)]
    pub quad_tol: Option<f64>,
    #[arg(long, global = true)]
    pub root_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Partial losses, gradients and Hessians of a composite at given points.
    EvalLoss(EvalArgs),
    /// Certify or refute (strong) convexity on a grid.
    CheckConvexity(CheckArgs),
    /// Binary strong-convexity band for a normalized weight, as CSV.
    EmitRegion(RegionArgs),
    /// Build a binary loss of prescribed modulus from a slope function.
    DesignLoss(DesignArgs),
    /// Boosting sweep over link mixtures, as CSV.
    Boost(BoostArgs),
    /// Run the built-in invariant suite.
    Verify,
    /// Regenerate an output from its manifest and compare digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Composite spec, or a bare loss spec (identity link).
    #[arg(long)]
    pub spec: PathBuf,
    /// Prediction in internal coordinates, comma separated. Repeatable.
    #[arg(long = "v", allow_hyphen_values = true)]
    pub v: Vec<String>,
    /// Probability vector (full or projected), mapped through the link. Repeatable.
    #[arg(long = "p")]
    pub p: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Checker {
    Hessian,
    Theorem5,
    Canonical,
    BinaryIff,
    Region,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub modulus: f64,
    /// Bisect for the largest certified modulus instead.
    #[arg(long)]
    pub find_modulus: bool,
    #[arg(long, value_enum, default_value_t = Checker::Hessian)]
    pub checker: Checker,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegionArgs {
    #[arg(long)]
    pub modulus: f64,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DesignArgs {
    /// Slope function id: zero, constant, rational, log, upper_envelope, lower_envelope.
    #[arg(long)]
    pub u: String,
    /// Slope parameters as a JSON object, e.g. '{"value": 0.5}'.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub modulus: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoostArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub alpha_list: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 4800)]
    pub m_train: usize,
    #[arg(long, default_value_t = 1200)]
    pub m_test: usize,
    #[arg(long, default_value_t = 64)]
    pub thresholds: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to regenerate one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Resolved configuration with all defaults filled in.
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub output: FileDigest,
    pub version: String,
    pub seed: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Certification { .. } => EXIT_REFUTED,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::Misuse(_)
        | Error::Unsupported(_)
        | Error::Dimension { .. } => EXIT_USAGE,
        Error::Domain { .. }
        | Error::QuadratureAccuracy { .. }
        | Error::Convergence { .. }
        | Error::CurvatureSingularity { .. }
        | Error::Invariant(_) => EXIT_NUMERICAL,
    }
}

/// Parses `argv` (program name first) and runs it; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let recorded: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, Some(&recorded)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Everything a subcommand produced.
struct Outcome {
    /// Primary artifact, written to `--out` or stdout.
    body: String,
    /// Printed to stdout when the artifact goes to a file.
    summary: Option<String>,
    inputs: Vec<FileDigest>,
    config: Value,
    code: i32,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| Error::Invariant(format!("serialization failed: {e}")))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| Error::Invariant(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn read_input(path: &Path) -> Result<(String, FileDigest)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let digest = FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((text, digest))
}

/// A composite spec, or a bare loss spec paired with the identity link.
pub fn load_composite_spec(path: &Path) -> Result<(CompositeSpec, FileDigest)> {
    let (text, digest) = read_input(path)?;
    let parse_error = |e: serde_json::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(&text).map_err(parse_error)?;
    let spec = if value.get("loss").is_some() {
        serde_json::from_value::<CompositeSpec>(value).map_err(parse_error)?
    } else {
        let loss: LossSpec = serde_json::from_value(value).map_err(parse_error)?;
        let n = loss.n();
        CompositeSpec::new(loss, LinkSpec::Identity { n })
    };
    Ok((spec, digest))
}

/// Tolerances from `--tolerances` with individual flags applied on top.
pub fn resolve_tolerances(g: &GlobalArgs) -> Result<(ToleranceConfig, Vec<FileDigest>)> {
    let mut inputs = Vec::new();
    let mut cfg = match &g.tolerances {
        None => ToleranceConfig::default(),
        Some(s) if s.trim_start().starts_with('{') => {
            serde_json::from_str(s).map_err(|e| Error::Parse {
                path: "--tolerances".into(),
                message: e.to_string(),
            })?
        }
        Some(path) => {
            let (text, digest) = read_input(Path::new(path))?;
            inputs.push(digest);
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
    };
    if let Some(x) = g.fd_step {
        cfg.fd_step = x;
    }
    if let Some(x) = g.psd_tol {
        cfg.psd_tol = x;
    }
    if let Some(x) = g.quad_tol {
        cfg.quad_tol = x;
    }
    if let Some(x) = g.root_tol {
        cfg.root_tol = x;
    }
    if let Some(x) = g.max_iter {
        cfg.max_iter = x;
    }
    cfg.validate()?;
    Ok((cfg, inputs))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number {t:?} in {s:?}: {e}")))
        })
        .collect()
}

fn grid_for(g: &GlobalArgs, n: usize) -> Result<Grid> {
    Grid::new(
        n,
        g.grid_res.unwrap_or_else(|| default_resolution(n)),
        g.margin,
    )
}

fn execute(cli: &Cli, recorded: Option<&[String]>) -> Result<i32> {
    let g = &cli.global;
    let (cfg, tol_inputs) = resolve_tolerances(g)?;
    let mut outcome = match &cli.command {
        Command::EvalLoss(a) => eval_loss(a, &cfg)?,
        Command::CheckConvexity(a) => check_convexity(a, g, &cfg)?,
        Command::EmitRegion(a) => emit_region(a)?,
        Command::DesignLoss(a) => design(a, g, &cfg)?,
        Command::Boost(a) => boost(a, g, &cfg)?,
        Command::Verify => verify(g, &cfg)?,
        Command::Replay(a) => return replay(a),
    };
    outcome.inputs.extend(tol_inputs);
    let Some(out) = &g.out else {
        print!("{}", outcome.body);
        return Ok(outcome.code);
    };
    fs::write(out, &outcome.body)?;
    if let Some(summary) = &outcome.summary {
        print!("{summary}");
    }
    if let Some(argv) = recorded {
        let manifest = RunManifest {
            subcommand: subcommand_name(&cli.command).into(),
            argv: argv.to_vec(),
            config: json!({
                "global": {
                    "seed": g.seed,
                    "grid_res": g.grid_res,
                    "margin": g.margin,
                    "tolerances": cfg,
                },
                "command": outcome.config,
            }),
            inputs: outcome.inputs,
            output: FileDigest {
                path: out.display().to_string(),
                sha256: sha256_hex(outcome.body.as_bytes()),
            },
            version: env!("CARGO_PKG_VERSION").into(),
            seed: g.seed,
        };
        fs::write(manifest_path(out), to_json(&manifest)?)?;
    }
    Ok(outcome.code)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::EvalLoss(_) => "eval-loss",
        Command::CheckConvexity(_) => "check-convexity",
        Command::EmitRegion(_) => "emit-region",
        Command::DesignLoss(_) => "design-loss",
        Command::Boost(_) => "boost",
        Command::Verify => "verify",
        Command::Replay(_) => "replay",
    }
}

fn command_config<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

#[derive(Serialize)]
struct EvalRow {
    v: Vec<f64>,
    p: Vec<f64>,
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    hessians: Vec<Vec<Vec<f64>>>,
}

fn eval_loss(a: &EvalArgs, cfg: &ToleranceConfig) -> Result<Outcome> {
    let (spec, digest) = load_composite_spec(&a.spec)?;
    let cl: CompositeLoss = spec.build(cfg)?;
    let n = cl.n();
    let mut vs = Vec::new();
    for s in &a.v {
        vs.push(cl.link().internal(&parse_list(s)?)?);
    }
    for s in &a.p {
        let xs = parse_list(s)?;
        let p = if xs.len() == n {
            ProbVector::new(xs)?.project()
        } else {
            ProjectedProb::new(xs)?
        };
        vs.push(cl.predict(&p)?);
    }
    if vs.is_empty() {
        return Err(Error::Config("give at least one --v or --p".into()));
    }
    let mut rows = Vec::with_capacity(vs.len());
    for v in vs {
        let point = cl.eval_point(&v)?;
        let gradients = cl
            .gradients(&v)?
            .iter()
            .map(|g| g.as_slice().to_vec())
            .collect();
        let hessians = (0..n)
            .map(|i| {
                let h = cl.hessian(&v, i)?;
                let m = h.as_matrix();
                Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
            })
            .collect::<Result<_>>()?;
        rows.push(EvalRow {
            v: point.v,
            p: point.p.full_vec(),
            values: point.values,
            gradients,
            hessians,
        });
    }
    let body = to_json(&json!({ "composite": cl.name(), "spec": spec, "points": rows }))?;
    Ok(Outcome {
        body,
        summary: None,
        inputs: vec![digest],
        config: command_config(a),
        code: EXIT_OK,
    })
}

fn check_convexity(a: &CheckArgs, g: &GlobalArgs, cfg: &ToleranceConfig) -> Result<Outcome> {
    let (spec, digest) = load_composite_spec(&a.spec)?;
    let n = spec.loss.n();
    let grid = grid_for(g, n)?;
    let check: Box<dyn Fn(f64) -> Result<ConvexityReport>> = match a.checker {
        Checker::Hessian | Checker::Theorem5 => {
            let cl = spec.build(cfg)?;
            let theorem5 = a.checker == Checker::Theorem5;
            let grid = grid.clone();
            Box::new(move |c| {
                if theorem5 {
                    check_theorem5(&cl, c, &grid)
                } else {
                    check_hessian_criterion(&cl, c, &grid)
                }
            })
        }
        Checker::Canonical => {
            let loss = spec.loss.build(cfg)?;
            let (grid, cfg) = (grid.clone(), *cfg);
            Box::new(move |c| check_canonical(loss.as_ref(), c, &grid, &cfg))
        }
        Checker::BinaryIff | Checker::Region => {
            let w = binary_weight(spec.loss.build(cfg)?, cfg)?;
            let region = a.checker == Checker::Region;
            let (grid, cfg) = (grid.clone(), *cfg);
            Box::new(move |c| {
                if region {
                    region_check(&w, c, &grid, &cfg)
                } else {
                    binary_iff_check(&w, c, &grid, &cfg)
                }
            })
        }
    };
    let (body, code) = if a.find_modulus {
        let search = find_modulus(check)?;
        let code = if search.modulus.is_some() {
            EXIT_OK
        } else {
            EXIT_REFUTED
        };
        (to_json(&search)?, code)
    } else {
        let report = check(a.modulus)?;
        let code = match report.verdict {
            Verdict::CertifiedOnGrid | Verdict::PassedNecessary => EXIT_OK,
            Verdict::Refuted | Verdict::Inconclusive => EXIT_REFUTED,
        };
        (to_json(&report)?, code)
    };
    let mut config = command_config(a);
    config["grid"] = serde_json::to_value(grid.descriptor()).unwrap_or(Value::Null);
    Ok(Outcome {
        body,
        summary: None,
        inputs: vec![digest],
        config,
        code,
    })
}

fn emit_region(a: &RegionArgs) -> Result<Outcome> {
    let curve = region_boundary(a.modulus, a.resolution)?;
    Ok(Outcome {
        body: curve.to_csv(),
        summary: None,
        inputs: Vec::new(),
        config: command_config(a),
        code: EXIT_OK,
    })
}

fn design(a: &DesignArgs, g: &GlobalArgs, cfg: &ToleranceConfig) -> Result<Outcome> {
    let params: Value = match &a.params {
        Some(s) => serde_json::from_str(s).map_err(|e| Error::Parse {
            path: "--params".into(),
            message: e.to_string(),
        })?,
        None => Value::Null,
    };
    let tagged = match params {
        Value::Null => json!({ "kind": a.u }),
        p => json!({ "kind": a.u, "params": p }),
    };
    let u: UFunction =
        serde_json::from_value(tagged).map_err(|e| Error::Config(format!("slope {}: {e}", a.u)))?;
    let spec = DesignSpec::new(u.clone(), a.modulus, cfg.interior_margin)?;
    let grid = grid_for(g, 2)?;
    let d = design_loss(&spec, &grid, cfg)?;
    let loss_spec = LossSpec::FromWeight {
        n: 2,
        weight: WeightSpec::Designed {
            u,
            modulus: a.modulus,
        },
        epsilon: Some(cfg.interior_margin),
    };
    let report = to_json(&json!({
        "design": d.spec,
        "validation": d.validation,
        "certificate": d.report,
        "properness": d.properness,
    }))?;
    let mut config = command_config(a);
    config["grid"] = serde_json::to_value(grid.descriptor()).unwrap_or(Value::Null);
    Ok(Outcome {
        body: to_json(&loss_spec)?,
        summary: Some(report),
        inputs: Vec::new(),
        config,
        code: EXIT_OK,
    })
}

fn boost(a: &BoostArgs, g: &GlobalArgs, cfg: &ToleranceConfig) -> Result<Outcome> {
    let bc = BoostConfig {
        rounds: a.rounds,
        learning_rate: a.lr,
        seed: g.seed,
        alphas: a.alpha_list.clone(),
        m_train: a.m_train,
        m_test: a.m_test,
        thresholds: a.thresholds,
    };
    let table = alpha_sweep(&bc, cfg)?;
    for f in &table.failures {
        eprintln!("alpha {} failed: {}", f.alpha, f.error);
    }
    Ok(Outcome {
        body: table.to_csv(),
        summary: None,
        inputs: Vec::new(),
        config: serde_json::to_value(&bc).unwrap_or(Value::Null),
        code: if table.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_NUMERICAL
        },
    })
}

fn verify(g: &GlobalArgs, cfg: &ToleranceConfig) -> Result<Outcome> {
    let report = run_invariant_suite(cfg, g.seed);
    for c in &report.checks {
        eprintln!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(Outcome {
        body: to_json(&report)?,
        summary: None,
        inputs: Vec::new(),
        config: Value::Null,
        code: if report.passed { EXIT_OK } else { EXIT_REFUTED },
    })
}

/// Reruns the manifest's command into a scratch file beside the original
/// output and compares digests. Exit 0 when identical.
fn replay(a: &ReplayArgs) -> Result<i32> {
    let manifest: RunManifest = crate::spec::read_json(&a.manifest)?;
    let argv = std::iter::once("pcl".to_string()).chain(manifest.argv.iter().cloned());
    let mut cli = Cli::try_parse_from(argv).map_err(|e| Error::Parse {
        path: a.manifest.display().to_string(),
        message: e.to_string(),
    })?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Misuse(
            "a manifest cannot replay another replay".into(),
        ));
    }
    let scratch = PathBuf::from(format!("{}.replay", manifest.output.path));
    cli.global.out = Some(scratch.clone());
    let result = execute(&cli, None);
    let produced = fs::read(&scratch);
    let _ = fs::remove_file(&scratch);
    result?;
    let digest = sha256_hex(&produced?);
    let identical = digest == manifest.output.sha256;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "output": manifest.output.path,
            "expected": manifest.output.sha256,
            "replayed": digest,
            "identical": identical,
        }))
        .map_err(|e| Error::Invariant(e.to_string()))?
    );
    Ok(if identical { EXIT_OK } else { EXIT_REFUTED })
}
