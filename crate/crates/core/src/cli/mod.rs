//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numeric failure.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::acot::{acot_solve, AcotConfig, AcotScheme};
use crate::caot::{caot_pass, CaotConfig};
use crate::data::{dataset_hash, dataset_stats, gen_synthetic_er, load_tudataset, write_tudataset, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Scores};
use crate::ndmath::Mat;
use crate::ot::{marginal_residual, sinkhorn_uniform, OtConfig};
use crate::trainer::{fit, histogram, TrainConfig};

pub use config::RunConfig;

/// Name and version embedded in every JSON output.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "udgc", version, about = "Deep graph clustering with optimal-transport pseudo labels")]
struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and cluster a dataset over one or more seeds.
    Cluster(Box<ClusterArgs>),
    /// Standalone transport solvers.
    #[command(subcommand)]
    Ot(OtCommand),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic Erdős–Rényi dataset in TUDataset layout.
    Synth(SynthArgs),
    /// Print dataset statistics.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    /// Synthetic preset: er2 or er4.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Run seeds on separate threads.
    #[arg(long)]
    parallel: bool,
    /// Consensus weight of the coupled transport.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    /// Entropy weight of centers discovery.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    /// Entropy weight of agent-center matching.
    #[arg(long, allow_hyphen_values = true)]
    eta1: Option<String>,
    /// Center-loss weight; a comma list runs a sweep.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Parameter perturbation scale of the second view.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lr: Option<String>,
    /// Number of clusters, or `auto` for the number of classes.
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    estep_count: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    /// auto, node-labels or degree.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    degree_cap: Option<String>,
    /// encoder or all.
    #[arg(long)]
    perturb_scope: Option<String>,
    /// Keep the positive pair in the contrastive denominator.
    #[arg(long)]
    include_positive: bool,
    /// exact or proximal.
    #[arg(long)]
    acot_scheme: Option<String>,
    #[arg(long)]
    acot_outer_iters: Option<String>,
}

impl ClusterArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs = [
            ("dataset", &self.dataset),
            ("name", &self.name),
            ("synthetic", &self.synthetic),
            ("data_seed", &self.data_seed),
            ("out", &self.out),
            ("seeds", &self.seeds),
            ("seed", &self.seed),
            ("epsilon", &self.epsilon),
            ("eta", &self.eta),
            ("eta1", &self.eta1),
            ("lambda", &self.lambda),
            ("tau", &self.tau),
            ("sigma", &self.sigma),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.lr),
            ("clusters", &self.clusters),
            ("estep_count", &self.estep_count),
            ("layers", &self.layers),
            ("hidden_dim", &self.hidden_dim),
            ("features", &self.features),
            ("degree_cap", &self.degree_cap),
            ("perturb_scope", &self.perturb_scope),
            ("acot_scheme", &self.acot_scheme),
            ("acot_outer_iters", &self.acot_outer_iters),
        ];
        let mut out: Vec<(&'static str, String)> =
            pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))).collect();
        if self.parallel {
            out.push(("parallel", "true".into()));
        }
        if self.include_positive {
            out.push(("include_positive_in_denominator", "true".into()));
        }
        out
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for (k, v) in self.overrides() {
            cfg.set(k, &v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("--{}: {msg}", k.replace('_', "-"))),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum OtCommand {
    /// Entropic transport with uniform marginals.
    Solve(SolveArgs),
    /// Coupled two-view transport.
    Acot(AcotArgs),
    /// Centers discovery and agent-center matching.
    Caot(CaotArgs),
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    reg: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AcotArgs {
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    cost_prime: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Exact)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 50)]
    outer_iters: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SchemeArg {
    Exact,
    Proximal,
}

#[derive(Debug, Args, Serialize)]
struct CaotArgs {
    /// Representations, one row per instance.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    clusters: usize,
    /// Agents, one row per cluster; random unit rows from --seed when absent.
    #[arg(long)]
    agents: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    /// First row of the farthest-point initialization.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Predicted labels, one integer per line.
    pred: PathBuf,
    /// Ground-truth labels, one integer per line.
    truth: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// er2 or er4; otherwise --p gives one edge probability per class.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    min_nodes: usize,
    #[arg(long, default_value_t = 30)]
    max_nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "SYNTH")]
    name: String,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    dir: PathBuf,
    /// File prefix; defaults to the directory name.
    #[arg(long)]
    name: Option<String>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Input(_) | Error::Shape { .. } | Error::Index(_) | Error::Contract(_) => 3,
        Error::NonFinite(_) | Error::DegenerateRow { .. } => 4,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let outcome = match cli.command {
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Ot(OtCommand::Solve(a)) => cmd_ot_solve(&a),
        Command::Ot(OtCommand::Acot(a)) => cmd_ot_acot(&a),
        Command::Ot(OtCommand::Caot(a)) => cmd_ot_caot(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("udgc: {e}");
            exit_code(&e)
        }
    }
}

fn to_json_string(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `body` (with version and config echo added) to `path` and stdout.
fn emit(path: Option<&Path>, config: Value, body: Value) -> Result<()> {
    let mut doc = json!({ "version": VERSION, "config": config });
    if let (Value::Object(doc), Value::Object(body)) = (&mut doc, body) {
        doc.extend(body);
    }
    let text = to_json_string(&doc);
    if let Some(path) = path {
        write_file(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn echo<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn labels_text(labels: &[usize]) -> String {
    labels.iter().fold(String::new(), |mut s, l| {
        let _ = writeln!(s, "{l}");
        s
    })
}

/// Reads one non-negative integer per line; blank lines are skipped.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Format {
                file: path.display().to_string(),
                line: i + 1,
                msg: format!("expected a non-negative integer, got '{}'", l.trim()),
            })
        })
        .collect()
}

fn load_dataset(dir: &Path, name: Option<&str>) -> Result<Dataset> {
    let name = match name {
        Some(n) => n.to_string(),
        None => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Input(format!("cannot infer a dataset name from {}", dir.display())))?,
    };
    load_tudataset(dir, &name)
}

fn synthetic_preset(name: &str, seed: u64) -> Result<SyntheticSpec> {
    match name {
        "er2" => Ok(SyntheticSpec::two_class(100, seed)),
        "er4" => Ok(SyntheticSpec::four_class(50, seed)),
        other => Err(Error::Config(format!("synthetic: unknown preset '{other}', expected er2 or er4"))),
    }
}

#[derive(Debug, Serialize)]
struct RunOutcome {
    seed: u64,
    lambda: f64,
    labels_file: String,
    log_file: String,
    histogram: Vec<usize>,
    final_loss: f64,
    metrics: Option<Scores>,
}

#[derive(Debug, Default, Serialize)]
struct MeanScores {
    acc: f64,
    nmi: f64,
    ari: f64,
}

fn mean_scores<'a>(runs: impl Iterator<Item = &'a RunOutcome>) -> Option<MeanScores> {
    let scores: Vec<&Scores> = runs.map(|r| r.metrics.as_ref()).collect::<Option<_>>()?;
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some(MeanScores {
        acc: scores.iter().map(|s| s.acc).sum::<f64>() / n,
        nmi: scores.iter().map(|s| s.nmi).sum::<f64>() / n,
        ari: scores.iter().map(|s| s.ari).sum::<f64>() / n,
    })
}

fn one_run(ds: &Dataset, base: &TrainConfig, seed: u64, lambda: f64, out: &Path) -> Result<RunOutcome> {
    let cfg = TrainConfig { seed, lambda, ..base.clone() };
    log::info!("fitting seed {seed}, lambda {lambda}");
    let fitted = fit(ds, &cfg)?;
    let labels = &fitted.assignment.labels;
    let stem = format!("seed{seed}-lambda{lambda}");
    let labels_file = format!("labels-{stem}.txt");
    let log_file = format!("log-{stem}.jsonl");
    write_file(&out.join(&labels_file), &labels_text(labels))?;
    write_file(&out.join(&log_file), &fitted.log_jsonl())?;
    let metrics = ds.labels().map(|truth| evaluate(labels, &truth)).transpose()?;
    Ok(RunOutcome {
        seed,
        lambda,
        labels_file,
        log_file,
        histogram: histogram(labels, fitted.assignment.soft.cols()),
        final_loss: fitted.final_loss,
        metrics,
    })
}

fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let ds = match (&cfg.dataset, &cfg.synthetic) {
        (Some(dir), _) => load_dataset(dir, cfg.name.as_deref())?,
        (None, Some(preset)) => gen_synthetic_er(&synthetic_preset(preset, cfg.data_seed)?)?,
        (None, None) => unreachable!("validated"),
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    let echo_text = cfg.to_text();
    write_file(&out.join("config.txt"), &echo_text)?;

    let jobs: Vec<(u64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| (0..cfg.seeds as u64).map(move |k| (k, l)))
        .map(|(k, l)| (cfg.train.seed + k, l))
        .collect();
    let runs: Vec<RunOutcome> = if cfg.parallel {
        std::thread::scope(|s| {
            let (ds, train, out) = (&ds, &cfg.train, &out);
            let handles: Vec<_> =
                jobs.iter().map(|&(seed, l)| s.spawn(move || one_run(ds, train, seed, l, out))).collect();
            handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect::<Result<Vec<_>>>()
        })?
    } else {
        jobs.iter().map(|&(seed, l)| one_run(&ds, &cfg.train, seed, l, &out)).collect::<Result<_>>()?
    };

    let mut sweep = String::from("lambda,runs,acc,nmi,ari,final_loss\n");
    let mut per_lambda = Vec::new();
    for &l in &cfg.lambdas {
        let group: Vec<&RunOutcome> = runs.iter().filter(|r| r.lambda == l).collect();
        let mean = mean_scores(group.iter().copied());
        let loss = group.iter().map(|r| r.final_loss).sum::<f64>() / group.len() as f64;
        let m = mean.as_ref();
        let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            sweep,
            "{l},{},{},{},{},{loss}",
            group.len(),
            cell(m.map(|m| m.acc)),
            cell(m.map(|m| m.nmi)),
            cell(m.map(|m| m.ari))
        );
        per_lambda.push(json!({ "lambda": l, "mean": mean }));
    }
    write_file(&out.join("sweep.csv"), &sweep)?;

    let stats = dataset_stats(&ds);
    let body = json!({
        "dataset": { "name": ds.name, "hash": dataset_hash(&ds), "stats": stats },
        "runs": runs,
        "sweep": per_lambda,
        "mean": mean_scores(runs.iter()),
    });
    emit(Some(&out.join("metrics.json")), Value::String(echo_text), body)
}

fn cmd_ot_solve(args: &SolveArgs) -> Result<()> {
    let cost = Mat::read_csv(&args.cost)?;
    let cfg = OtConfig { reg: args.reg, max_iters: args.max_iters, tol: args.tol };
    let plan = sinkhorn_uniform(&cost, &cfg)?;
    let (row_err, col_err) = marginal_residual(&plan.plan);
    create_dir(&args.out)?;
    plan.plan.write_csv(args.out.join("plan.csv"), false)?;
    let body = json!({
        "value": plan.transport_cost(&cost),
        "iterations": plan.iterations_used,
        "converged": plan.converged,
        "row_err": row_err,
        "col_err": col_err,
    });
    emit(Some(&args.out.join("solve.json")), echo(args), body)
}

fn cmd_ot_acot(args: &AcotArgs) -> Result<()> {
    let m = Mat::read_csv(&args.cost)?;
    let m_prime = Mat::read_csv(&args.cost_prime)?;
    let scheme = match args.scheme {
        SchemeArg::Exact => AcotScheme::Exact,
        SchemeArg::Proximal => AcotScheme::Proximal,
    };
    let cfg = AcotConfig { outer_iters: args.outer_iters, scheme, ..AcotConfig::with_epsilon(args.epsilon) };
    let state = acot_solve(&m, &m_prime, &cfg)?;
    create_dir(&args.out)?;
    state.pi.write_csv(args.out.join("pi.csv"), false)?;
    state.pi_prime.write_csv(args.out.join("pi_prime.csv"), false)?;
    let (r, c) = marginal_residual(&state.pi);
    let (rp, cp) = marginal_residual(&state.pi_prime);
    let body = json!({
        "objective": state.objective,
        "kl_pi_piprime": state.kl_pi_pi_prime(),
        "iterations": state.iterations_used,
        "converged": state.converged,
        "residuals": { "pi_row": r, "pi_col": c, "pi_prime_row": rp, "pi_prime_col": cp },
        "labels": state.labels(),
    });
    emit(Some(&args.out.join("acot.json")), echo(args), body)
}

fn cmd_ot_caot(args: &CaotArgs) -> Result<()> {
    let x = Mat::read_csv(&args.points)?;
    let w_hat = match &args.agents {
        Some(path) => Mat::read_csv(path)?.l2_normalize_rows()?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            Mat::random_normal(args.clusters, x.cols(), 1.0, &mut rng).l2_normalize_rows()?
        }
    };
    if w_hat.shape() != (args.clusters, x.cols()) {
        return Err(Error::shape(
            "ot caot",
            format!("agents are {:?}, expected {} x {}", w_hat.shape(), args.clusters, x.cols()),
        ));
    }
    if args.start >= x.rows() {
        return Err(Error::Index(format!("start row {} outside {} points", args.start, x.rows())));
    }
    let cfg = CaotConfig { eta: args.eta, eta1: args.eta1, ..CaotConfig::default() };
    cfg.validate()?;
    let (centers, _, align) = caot_pass(&x, &w_hat, &cfg, args.start)?;
    create_dir(&args.out)?;
    centers.mu.write_csv(args.out.join("centers.csv"), false)?;
    align.psi.write_csv(args.out.join("psi.csv"), false)?;
    let (xr, xc) = marginal_residual(&centers.xi);
    let (pr, pc) = marginal_residual(&align.psi);
    let body = json!({
        "center_loss": align.center_loss_value,
        "matching": align.matching(),
        "discovery_iterations": centers.iterations_used,
        "discovery_objective": centers.objectives.last(),
        "residuals": { "xi_row": xr, "xi_col": xc, "psi_row": pr, "psi_col": pc },
    });
    emit(Some(&args.out.join("caot.json")), echo(args), body)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    let scores = evaluate(&pred, &truth)?;
    emit(None, echo(args), echo(&scores))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.preset {
        Some(p) if !args.p.is_empty() => {
            return Err(Error::Config(format!("--preset {p} and --p are mutually exclusive")));
        }
        Some(p) => SyntheticSpec { per_class: args.per_class, ..synthetic_preset(p, args.seed)? },
        None => SyntheticSpec {
            per_class: args.per_class,
            p: args.p.clone(),
            min_nodes: args.min_nodes,
            max_nodes: args.max_nodes,
            seed: args.seed,
        },
    };
    let ds = gen_synthetic_er(&spec)?;
    write_tudataset(&ds, &args.out, &args.name)?;
    let body = json!({ "stats": dataset_stats(&ds), "dataset_hash": dataset_hash(&ds) });
    emit(None, echo(args), body)
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let ds = load_dataset(&args.dir, args.name.as_deref())?;
    let mut body = echo(&dataset_stats(&ds));
    if let Value::Object(map) = &mut body {
        map.insert("name".into(), Value::String(ds.name.clone()));
        map.insert("dataset_hash".into(), Value::String(dataset_hash(&ds)));
    }
    emit(None, echo(args), body)
}
