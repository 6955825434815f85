// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use hybridplan::catalog::{self, tasks_for};
use hybridplan::compare::{compare, write_compare_csv, CompareSettings};
use hybridplan::config::{load_config, resolve_profile, EngineConfig};
use hybridplan::dynamics::{
    run_retrain, ModelHandle, RetrainMonitor, RetrainPolicy, RetrainSettings, WorkerCommand,
};
use hybridplan::forest::{augment, load_model, train, ForestHyper, ModelStore};
use hybridplan::history::HistoryStore;
use hybridplan::planner::{PlanRequest, Planner};
use hybridplan::service::Server;
use hybridplan::sim::{simulate, sweep, write_sweep_csv, Policy, QuerySpec};
use hybridplan::similarity::Registry;
use hybridplan::{FleetConfig, ProviderProfile, QueryFeatures};

/// Plans serverless/VM fleets for analytics queries.
#[derive(Parser)]
#[command(name = "hybridplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulator-labelled trace of random fleets per query class.
    Gen(GenArgs),
    /// Augment a trace, train a forest and save it as the current model.
    Train(TrainArgs),
    /// Choose a fleet for one query.
    Plan(PlanArgs),
    /// Simulate one query on one fleet.
    Simulate(SimulateArgs),
    /// Simulate every fleet up to the bounds and write CSV.
    Sweep(SweepArgs),
    /// Compare RF+BO, RF-exhaustive and BO-on-simulator by PC ratio.
    Compare(CompareArgs),
    /// Serve plan requests as JSON lines over TCP.
    Serve(ServeArgs),
    /// Run one retrain for a serving process and exit.
    #[command(hide = true)]
    RetrainWorker(WorkerArgs),
}

#[derive(Args)]
struct ProfileArg {
    /// Bundled profile name (aws-sim, gcp-sim) or a properties file.
    #[arg(long)]
    profile: Option<String>,
    /// Engine properties file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ProfileArg {
    fn engine_config(&self) -> Result<EngineConfig> {
        match &self.config {
            Some(path) => load_config(path).with_context(|| format!("loading {}", path.display())),
            None => Ok(EngineConfig::default()),
        }
    }

    fn load(&self) -> Result<(EngineConfig, ProviderProfile)> {
        let config = self.engine_config()?;
        let name = self.profile.as_deref().unwrap_or(&config.compute_provider);
        let profile = resolve_profile(name).with_context(|| format!("loading profile `{name}`"))?;
        Ok((config, profile))
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    profile: ProfileArg,
    /// Comma-separated query class ids; all built-in classes by default.
    #[arg(long, value_delimiter = ',')]
    queries: Vec<String>,
    #[arg(long, default_value_t = 20)]
    fleets_per_class: usize,
    /// Defaults to the profile's bound.
    #[arg(long)]
    max_vm: Option<u32>,
    #[arg(long)]
    max_sl: Option<u32>,
    #[arg(long, default_value = "HYBRID_RELAY")]
    policy: Policy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    augment_factor: usize,
    #[arg(long, default_value_t = 0.05)]
    jitter: f64,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Zero means unlimited.
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunDir {
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    history: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    run: RunDir,
    #[command(flatten)]
    profile: ProfileArg,
    #[arg(
        long,
        conflicts_with = "query_text",
        required_unless_present = "query_text"
    )]
    query_id: Option<String>,
    /// SQL text of a query that may not be registered.
    #[arg(long)]
    query_text: Option<String>,
    /// Defaults to the class's nominal size for built-in ids.
    #[arg(long)]
    input_size: Option<u64>,
    /// Defaults to one task per 128 MiB of input.
    #[arg(long)]
    map_tasks: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    relay: Option<bool>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate the plan afterwards and record it in the history.
    #[arg(long)]
    execute: bool,
    /// Per-task service time for --execute; defaults to the matched class's.
    #[arg(long)]
    service_s: Option<f64>,
    /// Print the plan as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    tasks: u32,
    #[arg(long, default_value_t = 2.0)]
    service_s: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    n_vm: u32,
    #[arg(long)]
    n_sl: u32,
    #[arg(long, default_value = "HYBRID_RELAY")]
    policy: Policy,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    profile: ProfileArg,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    max_vm: Option<u32>,
    #[arg(long)]
    max_sl: Option<u32>,
    #[arg(long, default_value = "HYBRID_RELAY")]
    policy: Policy,
    /// Output file; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunDir,
    #[command(flatten)]
    profile: ProfileArg,
    #[arg(long)]
    query_id: String,
    #[arg(long)]
    input_size: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    rf_call_latency_s: f64,
    #[arg(long, default_value_t = 0.05)]
    surrogate_step_s: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    run: RunDir,
    #[command(flatten)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 7070)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away (e.g. `| head`); nothing left to report.
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<io::Error>()
                    .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hybridplan: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Serve(a) => cmd_serve(a),
        Command::RetrainWorker(a) => cmd_retrain_worker(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let (_, profile) = a.profile.load()?;
    let classes = if a.queries.is_empty() {
        catalog::classes().to_vec()
    } else {
        a.queries
            .iter()
            .map(|id| catalog::class(id).copied())
            .collect::<Result<_, _>>()?
    };
    let samples = catalog::generate(
        &classes,
        &profile,
        a.policy,
        a.fleets_per_class,
        a.max_vm.unwrap_or(profile.max_vm),
        a.max_sl.unwrap_or(profile.max_sl),
        a.seed,
    )?;
    if a.out.exists() {
        std::fs::remove_file(&a.out).with_context(|| format!("replacing {}", a.out.display()))?;
    }
    HistoryStore::open(&a.out).append_all(&samples)?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let trace = HistoryStore::open(&a.history).read_all()?;
    if trace.is_empty() {
        bail!("{} holds no samples", a.history.display());
    }
    let augmented = augment(&trace.samples, a.augment_factor, a.jitter, a.seed)?;
    let hyper = ForestHyper {
        n_trees: a.trees,
        max_depth: (a.max_depth > 0).then_some(a.max_depth),
        min_leaf: a.min_leaf,
        seed: a.seed,
        ..ForestHyper::default()
    };
    let (model, report) = train(&augmented, a.split, &hyper)?;
    let store = ModelStore::new(&a.model_dir);
    let version = store.current_version().map(|v| v + 1).unwrap_or(1);
    let mut model = model.with_known_queries(registry_for(&trace.samples));
    model.version = version;
    let path = store.save(&model)?;
    println!("samples {} augmented {}", trace.len(), augmented.len());
    println!("train {} test {}", report.n_train, report.n_test);
    println!("rmse {:.3} s", report.rmse);
    println!(
        "within {:.0} s accuracy {:.4}",
        report.window_s, report.within_window_accuracy
    );
    println!("model v{version} -> {}", path.display());
    Ok(())
}

/// Signatures of the built-in classes that appear in the trace.
fn registry_for(samples: &[hybridplan::WorkloadSample]) -> Registry {
    let all = catalog::registry();
    let mut out = Registry::new();
    for s in samples {
        let id = &s.features.query_id;
        match all.get(id) {
            Some(sig) => {
                out.insert(id.clone(), *sig);
            }
            None if !out.contains_key(id) => {
                log::warn!("no signature for `{id}`; it cannot be matched by similarity")
            }
            None => {}
        }
    }
    out
}

fn open_planner(
    run: &RunDir,
    profile: &ProfileArg,
    seed: u64,
) -> Result<(Planner, ModelStore, Arc<HistoryStore>, EngineConfig)> {
    let (config, profile) = profile.load()?;
    let store = ModelStore::new(&run.model_dir);
    let model = store
        .load_current()
        .with_context(|| format!("loading model from {}", run.model_dir.display()))?;
    let history = Arc::new(HistoryStore::open(&run.history));
    let planner = Planner::new(
        Arc::new(ModelHandle::new(model)),
        Arc::clone(&history),
        config.clone(),
        profile,
    )?
    .with_seed(seed);
    Ok((planner, store, history, config))
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let (planner, ..) = open_planner(&a.run, &a.profile, a.seed)?;
    let input_size_bytes = match (a.input_size, &a.query_id) {
        (Some(n), _) => n,
        (None, Some(id)) => catalog::class(id)
            .map(|c| c.input_size_bytes)
            .context("--input-size is required for this query")?,
        (None, None) => bail!("--input-size is required with --query-text"),
    };
    let request = PlanRequest {
        query_text: a.query_text.clone(),
        query_id: a.query_id.clone(),
        n_map_tasks: a.map_tasks.unwrap_or_else(|| tasks_for(input_size_bytes)),
        input_size_bytes,
        epsilon: a.epsilon,
        relay: a.relay,
    };
    let plan = planner.plan(&request)?;
    let mut out = io::stdout().lock();
    if a.json {
        writeln!(out, "{}", serde_json::to_string(&plan)?)?;
    } else {
        writeln!(
            out,
            "query          {} (similarity {:.4})",
            plan.matched_query_id, plan.similarity_score
        )?;
        writeln!(
            out,
            "fleet          n_vm={} n_sl={}",
            plan.fleet.n_vm, plan.fleet.n_sl
        )?;
        writeln!(out, "T_best         {:.3} s", plan.best_time_s)?;
        writeln!(out, "T_est          {:.3} s", plan.predicted_time_s)?;
        writeln!(out, "C_best         {}", plan.best_cost)?;
        writeln!(out, "est_cost       {}", plan.estimated_cost)?;
        writeln!(out, "epsilon        {}", plan.epsilon)?;
        writeln!(out, "evaluations    {}", plan.search_evaluations)?;
        writeln!(out, "terminated_by  {}", plan.terminated_by)?;
        writeln!(out, "model_version  {}", plan.model_version)?;
    }
    if a.execute {
        let service_s = match a.service_s {
            Some(s) => s,
            None => catalog::class(&plan.matched_query_id)
                .map(|c| c.task_service_s)
                .context("--service-s is required to execute this query")?,
        };
        let query = QuerySpec::new(tasks_for(input_size_bytes), service_s);
        let record = planner.execute_and_record(&plan, &query)?;
        writeln!(out, "actual         {:.3} s", record.outcome.completion_s)?;
        writeln!(out, "actual_cost    {}", record.outcome.cost.total)?;
        writeln!(
            out,
            "abs_error      {:.3} s (triggered: {})",
            record.drift.abs_error_s, record.drift.triggered
        )?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let (_, profile) = a.profile.load()?;
    let query = QuerySpec::new(a.query.tasks, a.query.service_s);
    let outcome = simulate(&query, FleetConfig::new(a.n_vm, a.n_sl), a.policy, &profile)?;
    let c = &outcome.cost;
    let mut out = io::stdout().lock();
    writeln!(out, "policy         {}", a.policy.name())?;
    writeln!(out, "completion     {:.3} s", outcome.completion_s)?;
    writeln!(
        out,
        "tasks          vm={} sl={}",
        outcome.tasks_on_vm, outcome.tasks_on_sl
    )?;
    writeln!(out, "sl_busy        {:.3} s", outcome.sl_busy_seconds)?;
    writeln!(out, "vm_billed      {:.3} s", outcome.vm_billed_seconds)?;
    writeln!(out, "cost           {}", c.total)?;
    writeln!(
        out,
        "  vm_compute {} vm_storage {} burstable {} sl_compute {} external_store {}",
        c.vm_compute, c.vm_storage, c.burstable, c.sl_compute, c.external_store
    )?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let (_, profile) = a.profile.load()?;
    let query = QuerySpec::new(a.query.tasks, a.query.service_s);
    let rows = sweep(
        &query,
        &profile,
        a.policy,
        a.max_vm.unwrap_or(profile.max_vm),
        a.max_sl.unwrap_or(profile.max_sl),
    )?;
    let mut out = output(a.out.as_deref())?;
    write_sweep_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let (config, profile) = a.profile.load()?;
    let model = ModelStore::new(&a.run.model_dir).load_current()?;
    let class = catalog::class(&a.query_id)?;
    let input = a.input_size.unwrap_or(class.input_size_bytes);
    let base = base_features(&HistoryStore::open(&a.run.history), class, input, a.seed)?;
    let settings = CompareSettings {
        rf_call_latency_s: a.rf_call_latency_s,
        surrogate_step_s: a.surrogate_step_s,
        seed: a.seed,
        relay: config.compute_relay,
    };
    let rows = compare(
        &model,
        &base,
        &class.query_spec_for(input),
        &profile,
        &settings,
    )?;
    let mut out = output(a.out.as_deref())?;
    write_compare_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

/// Latest recorded cluster state for the class, or a seeded random one.
fn base_features(
    history: &HistoryStore,
    class: &catalog::QueryClass,
    input: u64,
    seed: u64,
) -> Result<QueryFeatures> {
    let mut features = match history.latest_features_for(class.id, 1)?.into_iter().next() {
        Some(s) => s.features,
        None => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            catalog::random_features(class, FleetConfig::new(1, 1), &mut rng)
        }
    };
    features.input_size_bytes = input;
    Ok(features)
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let (planner, store, history, config) = open_planner(&a.run, &a.profile, a.seed)?;
    let settings = RetrainSettings {
        policy: RetrainPolicy {
            seed: a.seed,
            ..RetrainPolicy::default()
        },
        worker: Some(WorkerCommand {
            program: std::env::current_exe().context("locating the retrain worker")?,
            args: vec!["retrain-worker".into()],
        }),
        placement: None,
    };
    let monitor = RetrainMonitor::spawn(
        Arc::clone(planner.handle()),
        store,
        history,
        config,
        settings,
    )?;
    let planner = Arc::new(planner.with_monitor(monitor));
    let server = Server::bind((a.host.as_str(), a.port), planner)?;
    // Scripts read this line to learn the bound port.
    println!("listening on {}", server.local_addr()?);
    io::stdout().flush()?;
    server.run()?;
    Ok(())
}

fn cmd_retrain_worker(a: WorkerArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let history = HistoryStore::open(&a.history).read_all()?;
    let config = load_config(&a.config)?;
    let policy = RetrainPolicy {
        seed: a.seed,
        ..RetrainPolicy::default()
    };
    let next = run_retrain(&model, &history, &config, &policy)?;
    let tmp = a.out.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(&next)?)
        .with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
