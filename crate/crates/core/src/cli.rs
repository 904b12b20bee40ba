//! Command-line front end: `generate`, `train`, `predict`, `evaluate` and
//! `benchmark`. Every command writes its artifacts plus a `manifest.json`
//! into `--out-dir`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::{ser_f64, ser_opt_f64, sig17, to_json};
use crate::loss::{leaf_loss, normalized_loss, tuple_of};
use crate::metrics::{concordance_counts, censoring_km, integrated_brier, normalized_ib, proportional_curve, EvalWindow};
use crate::model::{fit_baseline, BaselineHazard, Dataset, SurvivalTree};
use crate::preprocess::{fit_binarizer, BinarizationMap};
use crate::solver::{Solver, SolverConfig};
use crate::synth::{generate, GenConfig, DEFAULT_TEST_SIZE};
use crate::table::{read_schema, write_csv, RawTable};
use crate::tune::{cross_validate, refit, write_score_table, NodeBudgets, TuneConfig, TuneGrid};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_TIMEOUT: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "surtree", version, about = "Optimal survival trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic train and test sets from a random ground-truth tree.
    Generate(GenerateArgs),
    /// Binarize a CSV, fit the baseline and solve (optionally tuning budgets).
    Train(TrainArgs),
    /// Risk scores for the rows of a CSV under a trained model.
    Predict(PredictArgs),
    /// Harrell's C and the integrated Brier score on a test CSV.
    Evaluate(PredictArgs),
    /// Depth sweep with the depth-two routine on and off.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    pub test_size: usize,
    /// Twice the raw features.
    #[arg(long)]
    pub doubled: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, default_value_t = 3)]
    pub depth: u32,
    /// Branching-node budget; defaults to the full `2^depth − 1`.
    #[arg(long)]
    pub nodes: Option<u32>,
    /// Seconds allowed for the final solve.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub no_depth2: bool,
    #[arg(long, default_value_t = 1)]
    pub min_leaf_size: usize,
    /// JSON array of column schemas overriding the inferred kinds.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Select depth and node budget by cross-validation, up to `--depth`
    /// (and `--nodes` when given).
    #[arg(long)]
    pub tune: bool,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    /// Dataset to sweep; generated in-run from `--n`, `--c`, `--seed` when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub doubled: bool,
    /// Largest depth of the sweep.
    #[arg(long, default_value_t = 4)]
    pub depth: u32,
    /// Per-cell time limit in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf_size: usize,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Exit status for an error: usage, data or timeout.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::TimeLimit(_) => EXIT_TIMEOUT,
        _ => EXIT_DATA,
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seed: Option<u64>,
    inputs: IndexMap<String, String>,
    outputs: Vec<String>,
    timings: IndexMap<&'static str, Timing>,
}

#[derive(Serialize)]
struct Timing(#[serde(serialize_with = "ser_f64")] f64);

struct Run<'a> {
    command: &'a str,
    out_dir: &'a Path,
    inputs: IndexMap<String, String>,
    outputs: Vec<String>,
    timings: IndexMap<&'static str, Timing>,
    clock: Instant,
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn parse_time_limit(seconds: Option<f64>) -> Result<Option<Duration>> {
    seconds
        .map(|s| Duration::try_from_secs_f64(s).map_err(|_| Error::Config(format!("invalid time limit {s}"))))
        .transpose()
}

impl<'a> Run<'a> {
    fn new(command: &'a str, out_dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Self { command, out_dir, inputs: IndexMap::new(), outputs: Vec::new(), timings: IndexMap::new(), clock: Instant::now() })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), digest(path)?);
        Ok(())
    }

    fn lap(&mut self, phase: &'static str) {
        self.timings.insert(phase, Timing(self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        fs::write(self.out_dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = to_json(value)?;
        self.write(name, text.as_bytes())
    }

    fn finish<C: Serialize>(mut self, config: &C, seed: Option<u64>) -> Result<()> {
        self.outputs.push("manifest.json".into());
        let manifest = Manifest {
            command: self.command,
            config,
            seed,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
            timings: std::mem::take(&mut self.timings),
        };
        fs::write(self.out_dir.join("manifest.json"), to_json(&manifest)?)?;
        Ok(())
    }
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut run = Run::new("generate", &args.out_dir)?;
    let config = GenConfig { n: args.n, c: args.c, seed: args.seed, test_size: args.test_size, doubled: args.doubled };
    let data = generate(&config)?;
    run.lap("generate");
    let mut buf = Vec::new();
    write_csv(&data.train, &mut buf)?;
    run.write("train.csv", &buf)?;
    buf.clear();
    write_csv(&data.test, &mut buf)?;
    run.write("test.csv", &buf)?;
    run.write_json("ground_truth.json", &data.truth)?;
    run.lap("write");
    let censored = data.train.events.iter().filter(|e| !**e).count();
    println!("train rows {} (censored {}), test rows {}", data.train.len(), censored, data.test.len());
    run.finish(args, Some(args.seed))
}

/// A binarized training set with its baseline attached.
struct Prepared {
    map: BinarizationMap,
    baseline: BaselineHazard,
    data: Dataset,
}

fn prepare(input: &Path, schema: Option<&Path>) -> Result<Prepared> {
    let table = RawTable::from_path(input)?;
    let overrides = schema.map(read_schema).transpose()?.unwrap_or_default();
    let schema = table.resolve_schema(&overrides)?;
    let map = fit_binarizer(&table, &schema)?;
    let data = map.apply(&table)?;
    let baseline = fit_baseline(&data)?;
    let data = data.with_baseline(&baseline);
    Ok(Prepared { map, baseline, data })
}

fn solver_config(args: &SolveArgs) -> Result<SolverConfig> {
    Ok(SolverConfig {
        max_depth: args.depth,
        max_nodes: args.nodes.unwrap_or(u32::MAX),
        min_leaf_size: args.min_leaf_size,
        use_depth2: !args.no_depth2,
        use_bounds: true,
        time_limit: parse_time_limit(args.time_limit)?,
    })
}

#[derive(Serialize)]
struct TrainReport {
    depth: u32,
    nodes: u32,
    #[serde(serialize_with = "ser_f64")]
    loss: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    normalized_loss: Option<f64>,
    optimal: bool,
    leaves: usize,
    instances: usize,
    predicates: Vec<String>,
    tuned: Option<TunedReport>,
}

#[derive(Serialize)]
struct TunedReport {
    folds: usize,
    best_depth: u32,
    best_nodes: u32,
    zero_hazard_holdout: usize,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut run = Run::new("train", &args.out_dir)?;
    run.input(&args.input)?;
    if let Some(s) = &args.solve.schema {
        run.input(s)?;
    }
    let prepared = prepare(&args.input, args.solve.schema.as_deref())?;
    run.lap("preprocess");
    let mut config = solver_config(&args.solve)?;
    let mut tuned = None;
    if args.tune {
        let grid = TuneGrid {
            depths: (0..=args.solve.depth).collect(),
            node_budgets: match args.solve.nodes {
                Some(cap) => NodeBudgets::Explicit((0..=cap.min((1u32 << args.solve.depth.min(31)) - 1)).collect()),
                None => NodeBudgets::All,
            },
            folds: args.folds,
        };
        let tune = TuneConfig { solver: SolverConfig { time_limit: None, ..config.clone() }, ..TuneConfig::new(grid, args.seed) };
        let result = cross_validate(&prepared.data, &tune)?;
        let mut buf = Vec::new();
        write_score_table(&result.rows, &mut buf)?;
        run.write("scores.csv", &buf)?;
        config.max_depth = result.best_depth;
        config.max_nodes = result.best_nodes;
        tuned = Some(TunedReport {
            folds: args.folds,
            best_depth: result.best_depth,
            best_nodes: result.best_nodes,
            zero_hazard_holdout: result.zero_hazard,
        });
        run.lap("tune");
    }
    let (depth, nodes) = config.normalized_budgets();
    let (tree, loss, optimal, timeout) = match refit(&prepared.data, depth, nodes, &config) {
        Ok((tree, loss)) => (tree, loss, true, None),
        Err(Error::TimeLimit(inc)) => {
            let inc_clone = (*inc).clone();
            (inc_clone.tree, inc_clone.loss, false, Some(Error::TimeLimit(inc)))
        }
        Err(e) => return Err(e),
    };
    run.lap("solve");
    let root = leaf_loss(&tuple_of(&prepared.data)?);
    let normalized = normalized_loss(loss, root).ok();
    let report = TrainReport {
        depth,
        nodes,
        loss,
        normalized_loss: normalized,
        optimal,
        leaves: tree.leaf_count(),
        instances: prepared.data.len(),
        predicates: prepared.map.predicate_names(),
        tuned,
    };
    run.write_json("tree.json", &tree)?;
    run.write_json("binarizer.json", &prepared.map)?;
    run.write_json("baseline.json", &prepared.baseline)?;
    run.write_json("train_report.json", &report)?;
    if let Some(t) = &report.tuned {
        println!("selected depth {} nodes {} by {}-fold cross-validation", t.best_depth, t.best_nodes, t.folds);
    }
    println!(
        "training loss {}  normalized loss {}{}",
        sig17(loss),
        normalized.map(sig17).unwrap_or_else(|| "undefined".into()),
        if optimal { "" } else { "  (time limit reached; incumbent is not proven optimal)" }
    );
    run.finish(args, Some(args.seed))?;
    match timeout {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

struct Model {
    tree: SurvivalTree,
    map: BinarizationMap,
    baseline: BaselineHazard,
}

fn load_model(run: &mut Run, dir: &Path) -> Result<Model> {
    let read = |run: &mut Run, name: &str| -> Result<String> {
        let path = dir.join(name);
        run.input(&path)?;
        Ok(fs::read_to_string(path)?)
    };
    Ok(Model {
        tree: serde_json::from_str(&read(run, "tree.json")?)?,
        map: serde_json::from_str(&read(run, "binarizer.json")?)?,
        baseline: serde_json::from_str(&read(run, "baseline.json")?)?,
    })
}

fn load_rows(model: &Model, input: &Path) -> Result<(Dataset, Vec<f64>, Vec<usize>)> {
    let table = RawTable::from_path(input)?;
    let data = model.map.apply(&table)?;
    let mut thetas = Vec::with_capacity(data.len());
    let mut leaves = Vec::with_capacity(data.len());
    for inst in data.instances() {
        leaves.push(model.tree.leaf_index(inst.features())?);
        thetas.push(model.tree.predict_theta(inst.features())?);
    }
    Ok((data, thetas, leaves))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let mut run = Run::new("predict", &args.out_dir)?;
    let model = load_model(&mut run, &args.model_dir)?;
    run.input(&args.input)?;
    let (_, thetas, leaves) = load_rows(&model, &args.input)?;
    run.lap("predict");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "leaf", "theta"])?;
    for (i, (leaf, theta)) in leaves.iter().zip(&thetas).enumerate() {
        w.write_record([i.to_string(), leaf.to_string(), sig17(*theta)])?;
    }
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("predictions.csv", &buf)?;
    println!("{} predictions written", thetas.len());
    run.finish(args, None)
}

#[derive(Serialize)]
struct MetricValue {
    #[serde(serialize_with = "ser_opt_f64")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl From<Result<f64>> for MetricValue {
    fn from(result: Result<f64>) -> Self {
        match result {
            Ok(v) => Self { value: Some(v), reason: None },
            Err(e) => Self { value: None, reason: Some(e.to_string()) },
        }
    }
}

#[derive(Serialize)]
struct ConcordanceReport {
    #[serde(serialize_with = "ser_opt_f64")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    concordant: u64,
    discordant: u64,
    tied: u64,
    comparable: u64,
}

#[derive(Serialize)]
struct MetricsReport {
    instances: usize,
    harrell_c: ConcordanceReport,
    integrated_brier: MetricValue,
    integrated_brier_km: MetricValue,
    normalized_ib: MetricValue,
    window: Option<EvalWindow>,
}

fn cmd_evaluate(args: &PredictArgs) -> Result<()> {
    let mut run = Run::new("evaluate", &args.out_dir)?;
    let model = load_model(&mut run, &args.model_dir)?;
    run.input(&args.input)?;
    let (data, thetas, leaves) = load_rows(&model, &args.input)?;
    let times = data.times();
    let events = data.events();

    let counts = concordance_counts(&times, &events, &thetas)?;
    let c = MetricValue::from(counts.index());
    let harrell = ConcordanceReport {
        value: c.value,
        reason: c.reason,
        concordant: counts.concordant,
        discordant: counts.discordant,
        tied: counts.tied,
        comparable: counts.comparable(),
    };

    let window = EvalWindow::from_times(&times);
    let (ib, ib0) = match &window {
        Ok(w) => {
            let g = censoring_km(&times, &events)?;
            let curves: Vec<_> = model.tree.thetas().iter().map(|&t| proportional_curve(&model.baseline, t)).collect();
            let per_row: Vec<_> = leaves.iter().map(|&l| &curves[l]).collect();
            let km = model.baseline.survival_curve();
            let km_rows = vec![&km; data.len()];
            (integrated_brier(&times, &events, &per_row, w, &g), integrated_brier(&times, &events, &km_rows, w, &g))
        }
        Err(e) => (Err(Error::UndefinedMetric("integrated Brier score", e.to_string())), Err(Error::UndefinedMetric("integrated Brier score", e.to_string()))),
    };
    let normalized = match (&ib, &ib0) {
        (Ok(ib), Ok(ib0)) => normalized_ib(*ib, *ib0),
        _ => Err(Error::UndefinedMetric("normalized integrated Brier score", "integrated Brier score unavailable".into())),
    };
    run.lap("evaluate");
    let report = MetricsReport {
        instances: data.len(),
        harrell_c: harrell,
        integrated_brier: ib.into(),
        integrated_brier_km: ib0.into(),
        normalized_ib: normalized.into(),
        window: window.ok(),
    };
    run.write_json("metrics.json", &report)?;
    let show = |v: Option<f64>| v.map(sig17).unwrap_or_else(|| "undefined".into());
    println!(
        "harrell_c {}  integrated_brier {}  normalized_ib {}",
        show(report.harrell_c.value),
        show(report.integrated_brier.value),
        show(report.normalized_ib.value)
    );
    run.finish(args, None)
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let mut run = Run::new("benchmark", &args.out_dir)?;
    let input = match &args.input {
        Some(path) => path.clone(),
        None => {
            let config = GenConfig { n: args.n, c: args.c, seed: args.seed, test_size: 0, doubled: args.doubled };
            let data = generate(&config)?;
            let mut buf = Vec::new();
            write_csv(&data.train, &mut buf)?;
            run.write("train.csv", &buf)?;
            args.out_dir.join("train.csv")
        }
    };
    run.input(&input)?;
    if let Some(s) = &args.schema {
        run.input(s)?;
    }
    let prepared = prepare(&input, args.schema.as_deref())?;
    run.lap("prepare");
    let root = leaf_loss(&tuple_of(&prepared.data)?);
    let limit = parse_time_limit(args.time_limit)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["depth", "nodes", "depth2", "status", "runtime_seconds", "train_loss", "normalized_loss"])?;
    for depth in 0..=args.depth {
        for depth2 in [true, false] {
            let config = SolverConfig {
                min_leaf_size: args.min_leaf_size,
                use_depth2: depth2,
                time_limit: limit,
                ..SolverConfig::full(depth)
            };
            let (_, nodes) = config.normalized_budgets();
            let start = Instant::now();
            let (status, loss) = match Solver::new(&prepared.data, config)?.solve() {
                Ok((_, loss)) => ("optimal", loss),
                Err(Error::TimeLimit(inc)) => ("timeout", inc.loss),
                Err(e) => return Err(e),
            };
            let seconds = start.elapsed().as_secs_f64();
            let normalized = normalized_loss(loss, root).map(sig17).unwrap_or_default();
            w.write_record([
                depth.to_string(),
                nodes.to_string(),
                depth2.to_string(),
                status.to_string(),
                sig17(seconds),
                sig17(loss),
                normalized.clone(),
            ])?;
            println!("depth {depth} nodes {nodes} depth2 {depth2}: {status}, {seconds:.3}s, normalized loss {normalized}");
        }
    }
    run.lap("sweep");
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("benchmark.csv", &buf)?;
    run.finish(args, Some(args.seed))
}
