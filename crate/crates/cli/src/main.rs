//! `slogan` — audit a classifier for local group biases by clustering
//! instance embeddings, then report flagged clusters with SCR/SIR/|Bias|
//! metrics. Subcommands: `audit`, `tune`, `synth`, `compare`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use slogan_core::report::{
    clusters_to_csv, compare_to_markdown, grid_to_csv, report_to_json, report_to_markdown,
};
use slogan_core::{
    audit_clusters, bootstrap_thresholds, characterize, fit, grid_search, load_cohort,
    normalized_inertia, relabel_groups, save_cohort, AuditReport, BiasThresholds, Cohort,
    CohortFormat, GridSpec, Hyperparams, Method, SyntheticSpec,
};

/// Exit code when the audit ran cleanly but flagged no cluster.
const EXIT_NOTHING_FLAGGED: u8 = 2;

#[derive(Parser)]
#[command(name = "slogan", version, about = "Local group bias audits for classifier predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one clustering and write report.json / report.md / clusters.csv
    Audit(AuditArgs),
    /// Grid-search (lambda, gamma) and write grid.csv / best-report.json
    Tune(TuneArgs),
    /// Generate a synthetic cohort file from a mixture spec
    Synth(SynthArgs),
    /// Run kmeans/logan/slogan with a shared seed and write compare.md
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Cohort file (CSV or JSON-lines)
    #[arg(long)]
    input: PathBuf,
    /// Input format: csv or jsonl (default: from the file extension)
    #[arg(long)]
    format: Option<String>,
    /// Re-derive the A/B split from this attribute
    #[arg(long, requires = "a_values")]
    attribute: Option<String>,
    /// Comma-separated attribute values mapped to group A
    #[arg(long = "a-values", requires = "attribute")]
    a_values: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<Cohort> {
        let format = self.resolve_format()?;
        let cohort = load_cohort(&self.input, format)
            .with_context(|| format!("cannot load cohort from {}", self.input.display()))?;
        match (&self.attribute, &self.a_values) {
            (Some(attribute), Some(a_values)) => {
                let values: BTreeSet<String> = a_values
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                if values.is_empty() {
                    bail!("--a-values must list at least one value");
                }
                Ok(relabel_groups(&cohort, attribute, &values)?)
            }
            _ => Ok(cohort),
        }
    }

    fn resolve_format(&self) -> Result<CohortFormat> {
        match &self.format {
            Some(f) => Ok(f.parse()?),
            None => Ok(CohortFormat::from_path(&self.input)),
        }
    }

    fn format_name(&self) -> Result<&'static str> {
        Ok(match self.resolve_format()? {
            CohortFormat::Csv => "csv",
            CohortFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Number of clusters
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent restarts; the best objective wins
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

impl SolverArgs {
    fn hyperparams(&self, lambda: f64, gamma: f64) -> Hyperparams {
        Hyperparams {
            k: self.k,
            lambda,
            gamma,
            seed: self.seed,
            restarts: self.restarts,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Flagging thresholds: `ACC:SEV` (e.g. 0.1:0.8) or `bootstrap[:reps]`
    #[arg(long, default_value = "0.1:0.8")]
    thresholds: String,
}

enum ThresholdSpec {
    Explicit(BiasThresholds),
    Bootstrap { reps: usize },
}

impl ThresholdArgs {
    fn parse(&self) -> Result<ThresholdSpec> {
        let raw = self.thresholds.trim();
        if raw == "bootstrap" {
            return Ok(ThresholdSpec::Bootstrap { reps: 1000 });
        }
        if let Some(reps) = raw.strip_prefix("bootstrap:") {
            let reps: usize = reps
                .parse()
                .with_context(|| format!("bad bootstrap rep count `{reps}`"))?;
            return Ok(ThresholdSpec::Bootstrap { reps });
        }
        let (acc, sev) = raw
            .split_once(':')
            .context("--thresholds must be `ACC:SEV` or `bootstrap[:reps]`")?;
        let acc: f64 = acc.parse().with_context(|| format!("bad accuracy gap `{acc}`"))?;
        let sev: f64 = sev.parse().with_context(|| format!("bad severity gap `{sev}`"))?;
        Ok(ThresholdSpec::Explicit(BiasThresholds::new(acc, sev)?))
    }

    fn resolve(&self, cohort: &Cohort, seed: u64) -> Result<(BiasThresholds, Option<usize>)> {
        match self.parse()? {
            ThresholdSpec::Explicit(t) => Ok((t, None)),
            ThresholdSpec::Bootstrap { reps } => {
                Ok((bootstrap_thresholds(cohort, reps, seed)?, Some(reps)))
            }
        }
    }
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    input: InputArgs,
    /// kmeans, logan, or slogan
    #[arg(long, default_value = "slogan")]
    method: String,
    /// Bias-term weight (<= 0); ignored for kmeans
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Severity-term weight (>= 0); ignored for kmeans and logan
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Output directory
    #[arg(long, env = "SLOGAN_OUT", default_value = "slogan-out")]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Grid file: JSON object with `lambdas` and `gammas` arrays
    /// (default: lambda in -100..0, gamma in 0..100, step 10)
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Output directory
    #[arg(long, env = "SLOGAN_OUT", default_value = "slogan-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Mixture spec (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cohort file; format follows the extension unless --format is given
    #[arg(long)]
    out: PathBuf,
    /// Output format: csv or jsonl
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated subset of kmeans,logan,slogan
    #[arg(long, default_value = "kmeans,logan,slogan")]
    methods: String,
    /// Bias-term weight used by logan and slogan
    #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
    lambda: f64,
    /// Severity-term weight used by slogan
    #[arg(long, default_value_t = 50.0)]
    gamma: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Output directory
    #[arg(long, env = "SLOGAN_OUT", default_value = "slogan-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// `method=kmeans` forces lambda = gamma = 0 and `method=logan` forces
/// gamma = 0; explicitly passing a conflicting weight is an error.
fn resolve_weights(method: Method, lambda: Option<f64>, gamma: Option<f64>) -> Result<(f64, f64)> {
    match method {
        Method::Kmeans => {
            if let Some(l) = lambda.filter(|&l| l != 0.0) {
                bail!("--lambda {l} conflicts with --method kmeans; omit it or pass 0");
            }
            if let Some(g) = gamma.filter(|&g| g != 0.0) {
                bail!("--gamma {g} conflicts with --method kmeans; omit it or pass 0");
            }
            Ok((0.0, 0.0))
        }
        Method::Logan => {
            if let Some(g) = gamma.filter(|&g| g != 0.0) {
                bail!("--gamma {g} conflicts with --method logan; omit it or pass 0");
            }
            Ok((lambda.unwrap_or(-30.0), 0.0))
        }
        Method::Slogan => Ok((lambda.unwrap_or(-30.0), gamma.unwrap_or(50.0))),
    }
}

/// Per-method weights for `compare`: kmeans ignores both, logan gamma.
fn compare_weights(method: Method, lambda: f64, gamma: f64) -> (f64, f64) {
    match method {
        Method::Kmeans => (0.0, 0.0),
        Method::Logan => (lambda, 0.0),
        Method::Slogan => (lambda, gamma),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn write_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn manifest_json(fields: serde_json::Value) -> String {
    let mut root = serde_json::Map::new();
    root.insert(
        "tool_version".into(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    if let serde_json::Value::Object(map) = fields {
        root.extend(map);
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(root)).expect("manifest serializes")
        + "\n"
}

fn attach_characterization(
    report: &mut AuditReport,
    result: &slogan_core::ClusteringResult,
    cohort: &Cohort,
) {
    // needs two clusters with a defined score; skip quietly otherwise
    if let Ok(entries) = characterize(result, cohort, report) {
        report.characterization = Some(entries);
    }
}

fn cmd_audit(args: AuditArgs) -> Result<u8> {
    let cohort = args.input.load()?;
    let method: Method = args.method.parse()?;
    let (lambda, gamma) = resolve_weights(method, args.lambda, args.gamma)?;
    let (thresholds, bootstrap_reps) = args.thresholds.resolve(&cohort, args.solver.seed)?;

    let params = args.solver.hyperparams(lambda, gamma);
    let result = fit(&cohort, &params)?;
    let baseline = if lambda == 0.0 && gamma == 0.0 {
        result.clone()
    } else {
        fit(&cohort, &args.solver.hyperparams(0.0, 0.0))?
    };

    let mut report = audit_clusters(&result, &cohort, &thresholds)?;
    report.normalized_inertia = Some(normalized_inertia(&result, &baseline)?);
    attach_characterization(&mut report, &result, &cohort);

    let json = report_to_json(&report)?;
    let md = report_to_markdown(&report);
    let csv = clusters_to_csv(&report, cohort.len());
    let manifest = manifest_json(serde_json::json!({
        "command": "audit",
        "input": args.input.input.display().to_string(),
        "input_sha256": sha256_file(&args.input.input)?,
        "format": args.input.format_name()?,
        "attribute": args.input.attribute,
        "a_values": args.input.a_values,
        "method": method.to_string(),
        "k": params.k,
        "lambda": params.lambda,
        "gamma": params.gamma,
        "seed": params.seed,
        "restarts": params.restarts,
        "max_iter": params.max_iter,
        "thresholds": { "acc_gap_min": thresholds.acc_gap_min, "severity_gap_max": thresholds.severity_gap_max },
        "bootstrap_reps": bootstrap_reps,
        "outputs": ["report.json", "report.md", "clusters.csv"],
    }));

    write_outputs(
        &args.out,
        &[
            ("report.json", json.as_str()),
            ("report.md", md.as_str()),
            ("clusters.csv", csv.as_str()),
            ("manifest.json", manifest.as_str()),
        ],
    )?;

    let flagged = report.flagged_count();
    println!(
        "{}: {} of {} clusters flagged; reports in {}",
        method,
        flagged,
        params.k,
        args.out.display()
    );
    Ok(if flagged == 0 { EXIT_NOTHING_FLAGGED } else { 0 })
}

#[derive(serde::Deserialize)]
struct GridFile {
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
}

fn cmd_tune(args: TuneArgs) -> Result<u8> {
    let cohort = args.input.load()?;
    let (thresholds, bootstrap_reps) = args.thresholds.resolve(&cohort, args.solver.seed)?;

    let base = args.solver.hyperparams(0.0, 0.0);
    let grid = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read grid file {}", path.display()))?;
            let parsed: GridFile = serde_json::from_str(&text)
                .with_context(|| format!("malformed grid file {}", path.display()))?;
            GridSpec {
                lambdas: parsed.lambdas,
                gammas: parsed.gammas,
                base,
            }
        }
        None => GridSpec::default_grid(base),
    };

    let mut outcome = grid_search(&cohort, &grid, &thresholds)?;
    let winner_result = fit(&cohort, &outcome.winner)?;
    attach_characterization(&mut outcome.report, &winner_result, &cohort);

    let best_json = report_to_json(&outcome.report)?;
    let grid_csv = grid_to_csv(&outcome.table);
    let manifest = manifest_json(serde_json::json!({
        "command": "tune",
        "input": args.input.input.display().to_string(),
        "input_sha256": sha256_file(&args.input.input)?,
        "format": args.input.format_name()?,
        "attribute": args.input.attribute,
        "a_values": args.input.a_values,
        "k": base.k,
        "seed": base.seed,
        "restarts": base.restarts,
        "max_iter": base.max_iter,
        "grid_file": args.grid.as_ref().map(|p| p.display().to_string()),
        "lambdas": grid.lambdas,
        "gammas": grid.gammas,
        "thresholds": { "acc_gap_min": thresholds.acc_gap_min, "severity_gap_max": thresholds.severity_gap_max },
        "bootstrap_reps": bootstrap_reps,
        "winner": { "lambda": outcome.winner.lambda, "gamma": outcome.winner.gamma },
        "any_flagged": outcome.any_flagged,
        "outputs": ["grid.csv", "best-report.json"],
    }));

    write_outputs(
        &args.out,
        &[
            ("grid.csv", grid_csv.as_str()),
            ("best-report.json", best_json.as_str()),
            ("manifest.json", manifest.as_str()),
        ],
    )?;

    if outcome.any_flagged {
        println!(
            "winner: lambda = {}, gamma = {} (avg |bias| {:.4}); reports in {}",
            outcome.winner.lambda,
            outcome.winner.gamma,
            outcome.report.avg_abs_bias,
            args.out.display()
        );
        Ok(0)
    } else {
        println!(
            "no flagged clusters in any grid cell; best unflagged gap at lambda = {}, gamma = {}",
            outcome.winner.lambda, outcome.winner.gamma
        );
        Ok(EXIT_NOTHING_FLAGGED)
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read spec {}", args.spec.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)
        .with_context(|| format!("malformed spec {}", args.spec.display()))?;
    let (cohort, _truth) = slogan_core::generate(&spec, args.seed)?;

    let format = match &args.format {
        Some(f) => f.parse()?,
        None => CohortFormat::from_path(&args.out),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    save_cohort(&cohort, &args.out, format)?;

    let manifest = manifest_json(serde_json::json!({
        "command": "synth",
        "spec": args.spec.display().to_string(),
        "spec_sha256": sha256_file(&args.spec)?,
        "seed": args.seed,
        "n": cohort.len(),
        "dim": cohort.dim(),
        "output": args.out.display().to_string(),
        "output_sha256": sha256_file(&args.out)?,
    }));
    let manifest_path = args.out.with_extension("manifest.json");
    std::fs::write(&manifest_path, manifest)
        .with_context(|| format!("cannot write {}", manifest_path.display()))?;

    println!(
        "wrote {} instances (dim {}) to {}",
        cohort.len(),
        cohort.dim(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> Result<u8> {
    let cohort = args.input.load()?;
    let (thresholds, bootstrap_reps) = args.thresholds.resolve(&cohort, args.solver.seed)?;

    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<slogan_core::Result<_>>()?;
    if methods.is_empty() {
        bail!("--methods must list at least one method");
    }

    let baseline = fit(&cohort, &args.solver.hyperparams(0.0, 0.0))?;
    let mut reports = Vec::new();
    for method in &methods {
        let (lambda, gamma) = compare_weights(*method, args.lambda, args.gamma);
        let params = args.solver.hyperparams(lambda, gamma);
        let result = fit(&cohort, &params)?;
        let mut report = audit_clusters(&result, &cohort, &thresholds)?;
        report.normalized_inertia = Some(normalized_inertia(&result, &baseline)?);
        reports.push(report);
    }

    let md = compare_to_markdown(&reports.iter().collect::<Vec<_>>());
    let manifest = manifest_json(serde_json::json!({
        "command": "compare",
        "input": args.input.input.display().to_string(),
        "input_sha256": sha256_file(&args.input.input)?,
        "format": args.input.format_name()?,
        "attribute": args.input.attribute,
        "a_values": args.input.a_values,
        "methods": methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "k": args.solver.k,
        "lambda": args.lambda,
        "gamma": args.gamma,
        "seed": args.solver.seed,
        "restarts": args.solver.restarts,
        "thresholds": { "acc_gap_min": thresholds.acc_gap_min, "severity_gap_max": thresholds.severity_gap_max },
        "bootstrap_reps": bootstrap_reps,
        "outputs": ["compare.md"],
    }));

    write_outputs(
        &args.out,
        &[("compare.md", md.as_str()), ("manifest.json", manifest.as_str())],
    )?;
    print!("{md}");
    Ok(0)
}
