//! `homf`: synthetic data generation, multi-structure segmentation and the
//! scale-estimation benchmark.

mod input;
mod manifest;

use std::fs;
use std::io::{self, Write};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homf::eval::{self, BenchConfig, Estimator, SyntheticSpec};
use homf::geometry::{Dataset, ModelKind};
use homf::hypergraph::AffinityMode;
use homf::pipeline::{self, FitError, HomfConfig};
use serde_json::json;
use thiserror::Error;

use manifest::{canonical, round_floats, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {msg}")]
    Input { line: u64, msg: String },
    #[error("fit failed: {0}")]
    Fit(String),
}

impl CliError {
    pub fn io(path: &str, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Input { .. } => 4,
            CliError::Fit(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "homf", version, about = "Robust multi-structure model fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-line synthetic dataset as `x,y,label` CSV.
    Gen(GenArgs),
    /// Segment a CSV of points or correspondences into structures.
    Segment(SegmentArgs),
    /// Compare inlier-scale estimators over a sweep of outlier ratios.
    ScaleBench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    total: usize,
    #[arg(long, default_value_t = 1000)]
    left: usize,
    #[arg(long, default_value_t = 100)]
    right: usize,
    /// Standard deviation of the inlier noise.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<String>,
    /// Replay the configuration recorded in a previous output.
    #[arg(long)]
    manifest: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Line,
    Homography,
    Fundamental,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Line => ModelKind::Line2D,
            ModelArg::Homography => ModelKind::Homography,
            ModelArg::Fundamental => ModelKind::Fundamental,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AffinityArg {
    Residual,
    Literal,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input CSV.
    input: String,
    #[arg(long, value_enum, required_unless_present = "manifest")]
    model: Option<ModelArg>,
    /// Number of structures.
    #[arg(long, required_unless_present = "manifest")]
    clusters: Option<usize>,
    /// Hypotheses to draw.
    #[arg(long, default_value_t = pipeline::DEFAULT_HYPOTHESES)]
    hyps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "residual")]
    affinity: AffinityArg,
    /// Size of the refit window as a fraction of the data.
    #[arg(long, default_value_t = homf::hypergraph::DEFAULT_Q_FRACTION)]
    q_frac: f64,
    /// Iteration cap for hyperedge optimization.
    #[arg(long, default_value_t = homf::hypergraph::DEFAULT_T_MAX)]
    tmax: usize,
    #[arg(long, default_value_t = homf::kde::DEFAULT_KAPPA)]
    kappa: usize,
    /// Sampling-mass update factor.
    #[arg(long, default_value_t = homf::sampling::DEFAULT_UPDATE_FACTOR)]
    factor: f64,
    /// Report wall time. Timed outputs are not byte-reproducible.
    #[arg(long)]
    timing: bool,
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long)]
    manifest: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    ratios: String,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value = "aie,med,mad,ikose")]
    estimators: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long)]
    manifest: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Segment(a) => cmd_segment(a),
        Command::ScaleBench(a) => cmd_scale_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_output(path: Option<&str>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => io::stdout().write_all(bytes).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let spec = match &a.manifest {
        Some(p) => RunManifest::load(p)?.config("gen")?,
        None => canonical(&SyntheticSpec::new(a.total, a.left, a.right, a.noise, a.seed)),
    };
    let set = eval::gen_two_lines(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let Dataset::Points(points) = &set.data else { unreachable!("the generator yields points") };

    let mut out = String::from("x,y,label\n");
    for (p, l) in points.iter().zip(&set.gt_labels) {
        out.push_str(&format!("{},{},{l}\n", eval::fmt_sig(p.x), eval::fmt_sig(p.y)));
    }
    out.push_str(&RunManifest::new("gen", spec.seed, None, &spec).csv_line());
    out.push('\n');
    write_output(a.output.as_deref(), out.as_bytes())?;
    if a.output.is_some() {
        println!(
            "{} points: {} left, {} right, {} outliers",
            spec.total_n,
            spec.left_n,
            spec.right_n,
            spec.outlier_n()
        );
    }
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> Result<(), CliError> {
    let bytes = fs::read(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let config = match &a.manifest {
        Some(p) => {
            let m = RunManifest::load(p)?;
            let digest = manifest::digest(&bytes);
            if m.input_digest.as_deref() != Some(digest.as_str()) {
                return Err(CliError::Usage(format!(
                    "{} does not match the manifest's input digest",
                    a.input
                )));
            }
            m.config::<HomfConfig>("segment")?
        }
        None => {
            let kind = a.model.expect("required by clap").into();
            let mut c = HomfConfig::new(kind, a.clusters.expect("required by clap")).with_seed(a.seed);
            c.m = a.hyps;
            c.q_fraction = a.q_frac;
            c.t_max = a.tmax;
            c.kappa = a.kappa;
            c.update_factor = a.factor;
            c.affinity_mode = match a.affinity {
                AffinityArg::Residual => AffinityMode::Residual,
                AffinityArg::Literal => AffinityMode::Literal,
            };
            canonical(&c)
        }
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let input = input::read(&bytes, config.kind)?;

    let start = Instant::now();
    let fit = pipeline::fit(&input.data, &config).map_err(|e| match e {
        FitError::InvalidConfig(m) => CliError::Usage(m),
        e => CliError::Fit(e.to_string()),
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    let manifest = RunManifest::new("segment", config.seed, Some(&bytes), &config);
    let models: Vec<_> = fit
        .models
        .iter()
        .zip(&fit.scales)
        .enumerate()
        .map(|(k, (m, s))| {
            json!({
                "kind": m.kind(),
                "params": m.params(),
                "scale": s.scale,
                "members": fit.labels.members(k as i32).len(),
            })
        })
        .collect();
    let mut result = json!({
        "manifest": manifest,
        "labels": fit.labels,
        "models": models,
        "stats": fit.stats,
        "failure": fit.failure.as_ref().map(ToString::to_string),
    });
    if let Some(gt) = &input.labels {
        let err = eval::misclassification(&fit.labels.labels, gt)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        result["misclassification"] = json!(err);
    }
    if a.timing {
        result["wall_time_secs"] = json!(elapsed);
    }
    round_floats(&mut result);
    let mut text = serde_json::to_string(&result).expect("result serializes");
    text.push('\n');
    write_output(a.output.as_deref(), text.as_bytes())?;
    match &fit.failure {
        Some(f) => Err(CliError::Fit(f.to_string())),
        None => Ok(()),
    }
}

fn parse_ratios(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid --ratios {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
        return eval::ratio_sweep(v[0], v[1], v[2]).map_err(|e| CliError::Usage(e.to_string()));
    }
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if v.is_empty() || v.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(bad());
    }
    Ok(v)
}

fn parse_estimators(s: &str) -> Result<Vec<Estimator>, CliError> {
    s.split(',')
        .map(|p| {
            Estimator::parse(p.trim())
                .ok_or_else(|| CliError::Usage(format!("unknown estimator {:?}", p.trim())))
        })
        .collect()
}

fn cmd_scale_bench(a: BenchArgs) -> Result<(), CliError> {
    let config = match &a.manifest {
        Some(p) => RunManifest::load(p)?.config("scale-bench")?,
        None => canonical(&BenchConfig::new(
            parse_ratios(&a.ratios)?,
            a.runs,
            parse_estimators(&a.estimators)?,
            a.seed,
        )),
    };
    let table = eval::scale_bench(&config).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut out = Vec::new();
    table.write_csv(&mut out).map_err(|e| CliError::io("<buffer>", e))?;
    out.extend_from_slice(RunManifest::new("scale-bench", config.seed, None, &config).csv_line().as_bytes());
    out.push(b'\n');
    write_output(a.output.as_deref(), &out)?;

    let mut summary = String::from("estimator    std       mean      med       max\n");
    for r in &table.aggregates {
        summary.push_str(&format!(
            "{:<12} {:<9} {:<9} {:<9} {:<9}\n",
            r.estimator.name(),
            eval::fmt_sig(r.std),
            eval::fmt_sig(r.mean),
            eval::fmt_sig(r.med),
            eval::fmt_sig(r.max)
        ));
    }
    if a.output.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}
