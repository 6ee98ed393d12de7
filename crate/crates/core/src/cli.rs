//! Command-line front end: `learn`, `sweep`, `eval` and `synth`.
//!
//! Exit codes: 0 on success, 2 for input errors, 3 for solver or generation
//! failures.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cubic::CubicMethod;
use crate::error::Error;
use crate::eval::{self, ModularityTarget, Partition, SweepSpec, DEFAULT_THRESHOLD};
use crate::graph::edge_pair;
use crate::io::{self, ConvergenceSummary, LearnedGraph};
use crate::objective::{HyperParams, ProblemData, DEFAULT_SCAD_A};
use crate::side_info::{pairwise_sq_dists, sigma2_heuristic, Sigma2Heuristic};
use crate::solver::{run_mm, SolverConfig};
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "graphfuse",
    version,
    about = "Learn sparse graphs from node signals and node metadata"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn one graph and write it as a graph document.
    Learn(LearnArgs),
    /// Run the solver over a grid of alpha (and lambda) values and score each result.
    Sweep(SweepArgs),
    /// Score a graph document against node labels.
    Eval(EvalArgs),
    /// Generate a synthetic instance.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Closing prices: node label, then one column per date.
    #[arg(long, conflicts_with = "signals")]
    pub prices: Option<PathBuf>,
    /// Signals used as is: node label, then one column per sample.
    #[arg(long)]
    pub signals: Option<PathBuf>,
    /// Node embeddings: node label, then one column per component.
    #[arg(long, conflicts_with = "distances")]
    pub embeddings: Option<PathBuf>,
    /// Square matrix of squared distances with labeled rows and columns.
    #[arg(long)]
    pub distances: Option<PathBuf>,
    /// Subtract each node's mean before forming the sample covariance.
    #[arg(long)]
    pub center: bool,
    /// Kernel width: a positive number, `median` or `mean` of the distances.
    #[arg(long, default_value = "median")]
    pub sigma2: Sigma2Arg,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub maxiter: usize,
    #[arg(long, default_value_t = DEFAULT_SCAD_A)]
    pub scad_a: f64,
    /// `companion` or `bisection`.
    #[arg(long, default_value = "companion")]
    pub cubic: CubicMethod,
    /// Edges at or below this fraction of the largest weight count as absent.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub lambda: f64,
    /// Graph document to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the edges as `source,target,weight` CSV.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Write one JSON line per iteration.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `start:stop:step`, `lin:a:b:n`, `log:a:b:n` or a comma list.
    #[arg(long, default_value = "0:1:0.1")]
    pub alpha_grid: Grid,
    /// Same syntax as `--alpha-grid`.
    #[arg(long, conflicts_with = "lambda")]
    pub lambda_grid: Option<Grid>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Node label, cluster label.
    #[arg(long)]
    pub labels: PathBuf,
    /// Partition scored by modularity: `truth` or `detected`.
    #[arg(long, default_value = "truth")]
    pub modularity: ModularityTarget,
    /// Report CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Add a wall-time column to the report.
    #[arg(long)]
    pub timings: bool,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "truth")]
    pub modularity: ModularityTarget,
    /// Print a JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().p_intra)]
    pub p_intra: f64,
    #[arg(long, default_value_t = SynthConfig::default().p_inter)]
    pub p_inter: f64,
    /// Edge probability between the second and third clusters; ignored below 3 clusters.
    #[arg(long, default_value_t = SynthConfig::default().p_confusable)]
    pub p_confusable: f64,
    #[arg(long, default_value_t = SynthConfig::default().d_in)]
    pub d_in: f64,
    #[arg(long, default_value_t = SynthConfig::default().d_out)]
    pub d_out: f64,
    #[arg(long, default_value_t = SynthConfig::default().metadata_noise)]
    pub noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().embedding_dim)]
    pub dim: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma2Arg {
    Value(f64),
    Heuristic(Sigma2Heuristic),
}

impl std::str::FromStr for Sigma2Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(Self::Heuristic(Sigma2Heuristic::Median)),
            "mean" => Ok(Self::Heuristic(Sigma2Heuristic::Mean)),
            _ => match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Value(v)),
                _ => Err(format!(
                    "{s:?} is not a positive number, `median` or `mean`"
                )),
            },
        }
    }
}

/// A parsed grid of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grid(s).map(Grid)
    }
}

fn num(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{s:?} is not a number"))
}

fn count(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("{s:?} is not a positive count")),
    }
}

/// Rounds away the float noise of `start + i * step`.
fn snap(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        ["log", a, b, n] => {
            let (a, b, n) = (num(a)?, num(b)?, count(n)?);
            if !(a > 0.0 && b > 0.0) {
                return Err("log grid bounds must be positive".into());
            }
            if n == 1 {
                vec![a]
            } else {
                (0..n)
                    .map(|i| match i {
                        0 => a,
                        _ if i == n - 1 => b,
                        _ => a * (b / a).powf(i as f64 / (n - 1) as f64),
                    })
                    .collect()
            }
        }
        ["lin", a, b, n] => {
            let (a, b, n) = (num(a)?, num(b)?, count(n)?);
            if n == 1 {
                vec![a]
            } else {
                (0..n)
                    .map(|i| snap(a + (b - a) * i as f64 / (n - 1) as f64))
                    .collect()
            }
        }
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(format!(
                    "grid {s:?} needs start <= stop and a positive step"
                ));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| snap(a + step * i as f64)).collect()
        }
        [single] => single.split(',').map(num).collect::<Result<_, _>>()?,
        _ => return Err(format!("cannot parse grid {s:?}")),
    };
    if values.is_empty() {
        return Err(format!("grid {s:?} is empty"));
    }
    Ok(values)
}

/// Inputs, resolved settings and outputs of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub settings: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub elapsed_millis: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    fn new(command: &str, arguments: &[String]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            arguments: arguments.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            settings: serde_json::Map::new(),
            seed: None,
            elapsed_millis: 0.0,
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn set<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.settings.insert(key.into(), v);
    }

    fn write(&mut self, path: &Path, start: Instant) -> Result<(), CliError> {
        self.elapsed_millis = start.elapsed().as_secs_f64() * 1e3;
        let out = create(path)?;
        serde_json::to_writer_pretty(out, self)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn from_error(e: Error, context: &str) -> Self {
        Self {
            code: if e.is_solver_error() {
                EXIT_SOLVER
            } else {
                EXIT_INPUT
            },
            message: format!("{context}: {e}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn in_file(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::from_error(e, &path.display().to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn manifest_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    })
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = match cli.command {
        Command::Learn(a) => cmd_learn(&a, &argv),
        Command::Sweep(a) => cmd_sweep(&a, &argv),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a, &argv),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

struct Loaded {
    labels: Vec<String>,
    data: ProblemData,
    sigma2: f64,
    sigma2_source: &'static str,
}

fn load_inputs(
    input: &InputArgs,
    need_signals: bool,
    need_metadata: bool,
    manifest: &mut RunManifest,
) -> Result<Loaded, CliError> {
    let signals: Option<(Vec<String>, DMatrix<f64>)> = if let Some(path) = &input.prices {
        manifest.input("prices", path)?;
        let panel = io::read_prices(path).map_err(in_file(path))?;
        let x = io::log_returns(&panel).map_err(in_file(path))?;
        Some((panel.labels, x))
    } else if let Some(path) = &input.signals {
        manifest.input("signals", path)?;
        let t = io::read_table(path).map_err(in_file(path))?;
        Some((t.labels, t.values))
    } else {
        None
    };
    if need_signals && signals.is_none() {
        return Err(CliError::input(
            "--prices or --signals is required when alpha > 0",
        ));
    }
    let order = signals.as_ref().map(|(l, _)| l.as_slice());
    let metadata: Option<(Vec<String>, Vec<f64>)> = if let Some(path) = &input.embeddings {
        manifest.input("embeddings", path)?;
        let mut emb = io::read_embeddings(path).map_err(in_file(path))?;
        if let Some(order) = order {
            emb = emb.aligned_to(order).map_err(in_file(path))?;
        }
        let z = pairwise_sq_dists(&emb);
        Some((emb.labels().to_vec(), z))
    } else if let Some(path) = &input.distances {
        manifest.input("distances", path)?;
        Some(io::read_distance_matrix(path, order).map_err(in_file(path))?)
    } else {
        None
    };
    if need_metadata && metadata.is_none() {
        return Err(CliError::input(
            "--embeddings or --distances is required when alpha < 1 (metadata enters the objective with weight 1 - alpha)",
        ));
    }
    let (labels, data) = match (signals, metadata) {
        (Some((labels, x)), Some((_, z))) => {
            let s = io::sample_covariance(&x, input.center);
            (labels, ProblemData::new(s, z))
        }
        (Some((labels, x)), None) => {
            let s = io::sample_covariance(&x, input.center);
            (labels, ProblemData::signals_only(s))
        }
        (None, Some((labels, z))) => {
            let p = labels.len();
            (labels, ProblemData::metadata_only(p, z))
        }
        (None, None) => return Err(CliError::input("no input data given")),
    };
    let data = data.map_err(|e| CliError::from_error(e, "inputs"))?;
    if labels.len() < 2 {
        return Err(CliError::input(format!(
            "need at least 2 nodes, found {}",
            labels.len()
        )));
    }
    let (sigma2, sigma2_source) = match input.sigma2 {
        Sigma2Arg::Value(v) => (v, "value"),
        Sigma2Arg::Heuristic(h) => {
            let name = match h {
                Sigma2Heuristic::Median => "median",
                Sigma2Heuristic::Mean => "mean",
            };
            match sigma2_heuristic(data.distances(), h) {
                Ok(v) => (v, name),
                Err(e) if need_metadata => return Err(CliError::from_error(e, "metadata")),
                // metadata does not enter the objective
                Err(_) => (1.0, "unused"),
            }
        }
    };
    Ok(Loaded {
        labels,
        data,
        sigma2,
        sigma2_source,
    })
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig, CliError> {
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        maxiter: args.maxiter,
        cubic_method: args.cubic,
        ..SolverConfig::default()
    };
    cfg.validate()
        .map_err(|e| CliError::from_error(e, "solver settings"))?;
    if !(args.threshold >= 0.0) {
        return Err(CliError::input(format!(
            "--threshold {} must be nonnegative",
            args.threshold
        )));
    }
    Ok(cfg)
}

fn record_common(
    m: &mut RunManifest,
    input: &InputArgs,
    solver: &SolverArgs,
    cfg: &SolverConfig,
    loaded: &Loaded,
) {
    m.set("center", input.center);
    m.set("sigma2", loaded.sigma2);
    m.set("sigma2_source", loaded.sigma2_source);
    m.set("scad_a", solver.scad_a);
    m.set("threshold", solver.threshold);
    m.set("threshold_mode", "relative to max weight");
    m.set("solver", cfg);
    m.set("w_init", "ones");
    m.set("nodes", loaded.labels.len());
}

fn describe_solver_error(e: Error, labels: &[String]) -> CliError {
    let context = match &e {
        Error::InfeasibleUpdate { edge, .. } => match edge_pair(*edge, labels.len()) {
            Ok((i, j)) => format!("solver (edge {} -- {})", labels[i - 1], labels[j - 1]),
            Err(_) => "solver".to_string(),
        },
        _ => "solver".to_string(),
    };
    CliError::from_error(e, &context)
}

fn cmd_learn(args: &LearnArgs, argv: &[String]) -> Result<(), CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("learn", argv);
    let hp = HyperParams::new(args.alpha, 1.0, args.lambda)
        .and_then(|h| h.with_scad_a(args.solver.scad_a))
        .map_err(|e| CliError::from_error(e, "hyperparameters"))?;
    let cfg = solver_config(&args.solver)?;
    let loaded = load_inputs(
        &args.input,
        args.alpha > 0.0,
        args.alpha < 1.0,
        &mut manifest,
    )?;
    let hp = HyperParams {
        sigma2: loaded.sigma2,
        ..hp
    };
    record_common(&mut manifest, &args.input, &args.solver, &cfg, &loaded);
    manifest.set("hyperparameters", hp);

    let (w, trace) =
        run_mm(&loaded.data, &hp, &cfg).map_err(|e| describe_solver_error(e, &loaded.labels))?;
    let mut graph =
        LearnedGraph::from_weights(loaded.labels.clone(), &w, args.solver.threshold * w.max())
            .map_err(|e| CliError::from_error(e, "graph"))?;
    graph.hyperparameters = Some(hp);
    graph.convergence = Some(ConvergenceSummary::from(&trace));
    graph
        .metadata
        .insert("sigma2_source".into(), loaded.sigma2_source.into());
    graph
        .metadata
        .insert("center".into(), args.input.center.to_string());
    graph.metadata.insert(
        "threshold".into(),
        format!("{} (relative)", args.solver.threshold),
    );

    io::export_graph(&graph, &args.out).map_err(in_file(&args.out))?;
    manifest.outputs.push(args.out.display().to_string());
    if let Some(path) = &args.edges {
        io::write_edge_csv(&graph, create(path)?).map_err(in_file(path))?;
        manifest.outputs.push(path.display().to_string());
    }
    if let Some(path) = &args.trace {
        trace.write_jsonl(create(path)?).map_err(in_file(path))?;
        manifest.outputs.push(path.display().to_string());
    }
    manifest.set("termination", trace.termination);
    manifest.set("iterations", trace.iterations());
    manifest.write(&manifest_path(&args.out, &args.manifest), start)?;
    println!(
        "{} edges, {} iterations ({}), objective {:.12e}",
        graph.edges.len(),
        trace.iterations(),
        trace.termination,
        trace.final_objective()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, argv: &[String]) -> Result<(), CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("sweep", argv);
    let alphas = &args.alpha_grid.0;
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(CliError::input(format!(
            "alpha grid value {a} is outside [0, 1]"
        )));
    }
    let lambdas = match (&args.lambda_grid, args.lambda) {
        (Some(g), _) => g.0.clone(),
        (None, Some(l)) => vec![l],
        (None, None) => return Err(CliError::input("--lambda or --lambda-grid is required")),
    };
    let cfg = solver_config(&args.solver)?;
    let need_signals = alphas.iter().any(|&a| a > 0.0);
    let need_metadata = alphas.iter().any(|&a| a < 1.0);
    let loaded = load_inputs(&args.input, need_signals, need_metadata, &mut manifest)?;
    manifest.input("labels", &args.labels)?;
    let rows = io::read_labels(&args.labels).map_err(in_file(&args.labels))?;
    let truth = Partition::from_labels(&rows, &loaded.labels).map_err(in_file(&args.labels))?;

    record_common(&mut manifest, &args.input, &args.solver, &cfg, &loaded);
    manifest.set("alphas", alphas);
    manifest.set("lambdas", &lambdas);
    manifest.set("modularity_partition", args.modularity);
    manifest.set("jobs", args.jobs);

    let template = HyperParams {
        alpha: 0.0,
        sigma2: loaded.sigma2,
        lambda: 0.0,
        scad_a: args.solver.scad_a,
    };
    let spec = SweepSpec {
        data: &loaded.data,
        template,
        alphas,
        lambdas: &lambdas,
        config: &cfg,
        truth: &truth,
        threshold: args.solver.threshold,
        target: args.modularity,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::input(format!("--jobs {}: {e}", args.jobs)))?;
    let report = pool.install(|| eval::sweep(&spec));

    eval::write_report(&report, args.timings, create(&args.out)?).map_err(in_file(&args.out))?;
    manifest.outputs.push(args.out.display().to_string());
    manifest.write(&manifest_path(&args.out, &args.manifest), start)?;

    let mut failed = 0;
    for row in &report {
        match &row.outcome {
            Ok(o) => println!(
                "alpha {:<6} lambda {:<10.4} F {:.4}  MOD {}  iters {:>4}  {}",
                row.alpha,
                row.lambda,
                o.scores.f_score,
                o.scores
                    .modularity
                    .map_or("n/a".into(), |q| format!("{q:.4}")),
                o.iterations,
                o.termination
            ),
            Err(msg) => {
                failed += 1;
                println!(
                    "alpha {:<6} lambda {:<10.4} failed: {msg}",
                    row.alpha, row.lambda
                )
            }
        }
    }
    if failed > 0 {
        eprintln!("warning: {failed} of {} grid points failed", report.len());
    }
    Ok(())
}

/// Metrics printed by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f_score: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub modularity: Option<f64>,
    pub modularity_partition: ModularityTarget,
    pub clusters: usize,
    pub threshold: f64,
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let graph = io::import_graph(&args.graph).map_err(in_file(&args.graph))?;
    let rows = io::read_labels(&args.labels).map_err(in_file(&args.labels))?;
    let truth = Partition::from_labels(&rows, &graph.nodes).map_err(in_file(&args.labels))?;
    let w = graph.weights().map_err(in_file(&args.graph))?;
    if !(args.threshold >= 0.0) {
        return Err(CliError::input(format!(
            "--threshold {} must be nonnegative",
            args.threshold
        )));
    }
    let s =
        eval::score(&w, &truth, args.threshold, args.modularity).map_err(in_file(&args.graph))?;
    let report = EvalReport {
        f_score: s.f_score,
        tp: s.counts.tp,
        fp: s.counts.fp,
        fn_: s.counts.fn_,
        modularity: s.modularity,
        modularity_partition: args.modularity,
        clusters: s.clusters,
        threshold: args.threshold,
    };
    if args.json {
        let text = serde_json::to_string(&report).map_err(|e| CliError::input(e.to_string()))?;
        println!("{text}");
    } else {
        println!("f_score     {}", report.f_score);
        println!("tp fp fn    {} {} {}", report.tp, report.fp, report.fn_);
        match report.modularity {
            Some(q) => println!(
                "modularity  {q} ({:?} partition)",
                report.modularity_partition
            ),
            None => println!("modularity  undefined (graph has no weight)"),
        }
        println!("components  {}", report.clusters);
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, argv: &[String]) -> Result<(), CliError> {
    let start = Instant::now();
    if args.p < 2 {
        return Err(CliError::input(format!(
            "--p {} is too small: need at least 2 nodes",
            args.p
        )));
    }
    let sizes = SynthConfig::equal_clusters(args.p, args.clusters)
        .map_err(|e| CliError::from_error(e, "--clusters"))?;
    let cfg = SynthConfig {
        cluster_sizes: sizes,
        p_intra: args.p_intra,
        p_inter: args.p_inter,
        confusable: (args.clusters >= 3).then_some((1, 2)),
        p_confusable: args.p_confusable,
        n: args.n,
        embedding_dim: args.dim,
        d_in: args.d_in,
        d_out: args.d_out,
        metadata_noise: args.noise,
        seed: args.seed,
        ..SynthConfig::default()
    };
    cfg.validate()
        .map_err(|e| CliError::from_error(e, "synth settings"))?;
    let inst = synth::generate_instance(&cfg).map_err(|e| CliError::from_error(e, "synth"))?;
    synth::write_instance(&inst, &args.out_dir).map_err(in_file(&args.out_dir))?;

    let mut manifest = RunManifest::new("synth", argv);
    manifest.seed = Some(args.seed);
    manifest.set("config", &cfg);
    manifest.set("rng", synth::RNG_NAME);
    manifest.outputs = synth::INSTANCE_FILES
        .iter()
        .map(|f| args.out_dir.join(f).display().to_string())
        .collect();
    manifest.write(&args.out_dir.join("manifest.json"), start)?;
    println!(
        "wrote {} nodes, {} truth edges, {} samples to {}",
        cfg.p(),
        inst.truth.as_slice().iter().filter(|&&x| x > 0.0).count(),
        cfg.n,
        args.out_dir.display()
    );
    Ok(())
}
