//! `crowdrl`: command-line driver for the recruitment toolkit.
//!
//! Exit status is 0 on success, 1 when inputs are unreadable or rejected,
//! and 2 for usage errors.

mod manifest;
mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crowdrl_core::allocation::{allocate_models, filter_candidates, greedy_select};
use crowdrl_core::ledger::{log_digest, read_log, replay, write_log};
use crowdrl_core::metaheuristics::{
    aco_select, cpu_select, ga_select, pso_select, random_select, reputation_select,
    OptimizerConfig,
};
use crowdrl_core::model::{ModelRecord, TaskType};
use crowdrl_core::sim::{
    generate_population, generate_task_stream, read_rows_csv, run_baseline_benchmark,
    run_lifecycle, run_optimizer_benchmark, summarize, BenchResults, BenchmarkSpec,
    LifecycleConfig, Population, PopulationSpec, TaskStreamSpec,
};
use crowdrl_core::{
    AllocationConfig, BlobStore, ContentId, FsStore, SelectionReport, TaskSpec, WorkerProfile,
};

use manifest::RunRecorder;

#[derive(Debug, Parser)]
#[command(
    name = "crowdrl",
    version,
    about = "Worker recruitment for a crowdsourced DRL marketplace",
    after_help = "Exit status: 0 on success, 1 on data errors (unreadable, malformed or \
                  rejected inputs), 2 on usage errors.\n\
                  Config file formats: docs/schemas/*.json. Full reference: docs/cli.md."
)]
struct Cli {
    /// Run directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Worker threads for benchmark grids (0 uses every core).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic worker population.
    GenPop(GenPopArgs),
    /// Recruit a group for one task and print the selection report.
    Recruit(RecruitArgs),
    /// Compare greedy with GA, PSO and ACO across group sizes.
    BenchOptimizers(BenchArgs),
    /// Compare greedy with the reputation, CPU and random baselines.
    BenchBaselines(BenchArgs),
    /// Run a task stream through the ledger and record the event log.
    Simulate(SimulateArgs),
    /// Content-addressed blob store.
    #[command(subcommand)]
    Store(StoreCommand),
    /// Inspect ledger event logs.
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Render benchmark CSVs as markdown summary tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenPopArgs {
    /// Population spec JSON; fields left out take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of workers (overrides the spec).
    #[arg(long = "n")]
    n: Option<usize>,
    /// Population seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecruitMethod {
    Greedy,
    Ga,
    Pso,
    Aco,
    Reputation,
    Cpu,
    Random,
}

#[derive(Debug, Args)]
struct RecruitArgs {
    /// Task JSON.
    #[arg(long)]
    task: PathBuf,
    /// Population JSON from `gen-pop`, or a plain array of worker profiles.
    #[arg(long)]
    pop: PathBuf,
    /// Model records JSON (array); required for model-sharing tasks.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Recruit config JSON with `allocation` and `optimizer` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "greedy")]
    method: RecruitMethod,
    /// Seed for the stochastic methods (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Population JSON; a default population is generated when absent.
    #[arg(long)]
    pop: Option<PathBuf>,
    /// Benchmark spec JSON; fields left out take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repetitions per group size (overrides the spec).
    #[arg(long)]
    reps: Option<u32>,
    /// Base seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated group sizes (overrides the spec).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u32>>,
    /// Report wall time as 0 so outputs are byte-stable.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct RecruitConfig {
    allocation: AllocationConfig,
    optimizer: OptimizerConfig,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    population: PopulationSpec,
    stream: TaskStreamSpec,
    lifecycle: LifecycleConfig,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation config JSON with `population`, `stream` and `lifecycle`
    /// sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this population file instead of generating one.
    #[arg(long)]
    pop: Option<PathBuf>,
    /// Number of task ticks (overrides the config).
    #[arg(long)]
    ticks: Option<u64>,
    /// Lifecycle seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum StoreCommand {
    /// Store a file and print its content id.
    Put {
        file: PathBuf,
        /// Store root directory.
        #[arg(long, default_value = "store")]
        store: PathBuf,
    },
    /// Write a blob to stdout or to a file.
    Get {
        cid: String,
        #[arg(long, default_value = "store")]
        store: PathBuf,
        /// Output file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Replay a log and print the resulting state digest.
    Replay {
        log: PathBuf,
        /// Fail unless the state digest equals this value.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Print the digest of a log's records.
    Digest { log: PathBuf },
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Benchmark CSV files.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
}

/// The lifecycle's digests, written next to its log.
#[derive(Debug, Serialize, Deserialize)]
struct Digests {
    events: usize,
    log_digest: String,
    state_digest: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PopulationFile {
    Full(Population),
    Workers(Vec<WorkerProfile>),
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    Ok(text)
}

fn read_workers(path: &Path) -> Result<Vec<WorkerProfile>> {
    Ok(match read_json(path)? {
        PopulationFile::Full(p) => p.workers,
        PopulationFile::Workers(w) => w,
    })
}

fn read_population(path: Option<&Path>) -> Result<Population> {
    match path {
        None => Ok(generate_population(&PopulationSpec::default())?),
        Some(p) => match read_json(p)? {
            PopulationFile::Full(pop) => Ok(pop),
            PopulationFile::Workers(_) => bail!(
                "{} holds bare worker profiles; benchmarks need a population file from gen-pop",
                p.display()
            ),
        },
    }
}

fn gen_pop(args: &GenPopArgs, mut run: RunRecorder) -> Result<()> {
    run.config(args.config.as_deref())?;
    let mut spec: PopulationSpec = read_config(args.config.as_deref())?;
    if let Some(n) = args.n {
        spec.n_workers = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    run.seed(spec.seed);
    let pop = generate_population(&spec)?;
    let path = run.output("population.json", &pretty(&pop)?)?;
    run.finish()?;
    println!("{} workers -> {}", pop.len(), path.display());
    Ok(())
}

fn recruit(args: &RecruitArgs, mut run: RunRecorder) -> Result<()> {
    run.config(args.config.as_deref())?;
    run.input(&args.task)?;
    run.input(&args.pop)?;
    let mut config: RecruitConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.optimizer.seed = seed;
    }
    run.seed(config.optimizer.seed);
    let task: TaskSpec = read_json(&args.task)?;
    task.validate()?;
    let workers = read_workers(&args.pop)?;

    let report: SelectionReport = match task.kind {
        TaskType::ModelSharing => {
            let Some(models_path) = &args.models else {
                bail!("model-sharing tasks need --models");
            };
            run.input(models_path)?;
            let models: Vec<ModelRecord> = read_json(models_path)?;
            allocate_models(&task, &models, &workers, &config.allocation)?
        }
        TaskType::Training => {
            let filtered = filter_candidates(&task, &workers, &config.allocation)?;
            let eligible = filtered.eligible;
            let opt = &config.optimizer;
            let mut report = match args.method {
                RecruitMethod::Greedy => greedy_select(&task, &eligible),
                RecruitMethod::Ga => ga_select(&task, &eligible, opt)?.report,
                RecruitMethod::Pso => pso_select(&task, &eligible, opt)?.report,
                RecruitMethod::Aco => aco_select(&task, &eligible, opt)?.report,
                RecruitMethod::Reputation => reputation_select(&task, &eligible),
                RecruitMethod::Cpu => cpu_select(&task, &eligible),
                RecruitMethod::Random => random_select(&task, &eligible, opt.seed),
            };
            report.rejected = filtered.rejected;
            report
        }
    };
    let json = pretty(&report)?;
    run.output("selection.json", &json)?;
    run.output("selection.csv", &{
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        buf
    })?;
    run.finish()?;
    io::stdout().write_all(&json)?;
    Ok(())
}

fn bench(args: &BenchArgs, baselines: bool, jobs: usize, mut run: RunRecorder) -> Result<()> {
    run.config(args.config.as_deref())?;
    if let Some(p) = &args.pop {
        run.input(p)?;
    }
    let mut spec: BenchmarkSpec = read_config(args.config.as_deref())?;
    if let Some(r) = args.reps {
        spec.repetitions = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(sizes) = &args.sizes {
        spec.group_sizes = sizes.clone();
    }
    if args.no_timing {
        spec.record_timing = false;
    }
    run.seed(spec.seed);
    let pop = read_population(args.pop.as_deref())?;
    let results: BenchResults = if baselines {
        run_baseline_benchmark(&pop, &spec, Some(jobs))?
    } else {
        run_optimizer_benchmark(&pop, &spec, Some(jobs))?
    };
    let stem = if baselines { "baselines" } else { "optimizers" };
    let mut csv = Vec::new();
    results.write_csv(&mut csv)?;
    run.output(&format!("{stem}.csv"), &csv)?;
    run.output(&format!("{stem}.json"), &pretty(&results)?)?;
    let table = report::render(stem, &results.rows);
    run.output(&format!("{stem}.md"), table.as_bytes())?;
    run.finish()?;
    println!(
        "eligible pool {} (mean qos {:.5})\n\n{table}",
        results.eligible, results.pool_mean_qos
    );
    Ok(())
}

fn simulate(args: &SimulateArgs, mut run: RunRecorder) -> Result<()> {
    run.config(args.config.as_deref())?;
    let mut config: SimulateConfig = read_config(args.config.as_deref())?;
    if let Some(t) = args.ticks {
        config.stream.ticks = t;
    }
    if let Some(s) = args.seed {
        config.lifecycle.seed = s;
    }
    run.seed(config.lifecycle.seed);
    let pop = match &args.pop {
        Some(p) => {
            run.input(p)?;
            read_population(Some(p))?
        }
        None => generate_population(&config.population)?,
    };
    let stream = generate_task_stream(&config.stream)?;
    let store = Arc::new(FsStore::open(run.out_dir().join("store"))?);
    let result = run_lifecycle(&pop, &stream, &config.lifecycle, store)?;

    let log_path = run.out_dir().join("ledger.log");
    write_log(&log_path, &result.header, &result.events)
        .with_context(|| format!("writing {}", log_path.display()))?;
    run.existing_output("ledger.log")?;
    let digests = Digests {
        events: result.events.len(),
        log_digest: result.log_digest(),
        state_digest: result.state_digest(),
    };
    run.output("digests.json", &pretty(&digests)?)?;
    let mut metrics = Vec::new();
    result.write_metrics_csv(&mut metrics)?;
    run.output("metrics.csv", &metrics)?;
    let mut traces = Vec::new();
    result.write_traces_csv(&mut traces)?;
    run.output("traces.csv", &traces)?;
    run.finish()?;
    println!(
        "{} events, {} rejected\nlog digest   {}\nstate digest {}",
        digests.events,
        result.state.rejections.len(),
        digests.log_digest,
        digests.state_digest
    );
    Ok(())
}

fn store(cmd: &StoreCommand) -> Result<()> {
    match cmd {
        StoreCommand::Put { file, store } => {
            let bytes = fs::read(file).with_context(|| format!("reading {}", file.display()))?;
            let receipt = FsStore::open(store)?.put_blob(&bytes)?;
            if receipt.empty {
                eprintln!("warning: stored an empty blob");
            }
            println!("{}", receipt.cid);
        }
        StoreCommand::Get { cid, store, output } => {
            let cid = ContentId::from_str(cid)?;
            let bytes = FsStore::open(store)?.get(&cid)?;
            match output {
                Some(path) => {
                    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?
                }
                None => io::stdout().write_all(&bytes)?,
            }
        }
    }
    Ok(())
}

fn ledger(cmd: &LedgerCommand) -> Result<()> {
    match cmd {
        LedgerCommand::Replay { log, expect } => {
            let (header, events) = read_log(log)?;
            let state = replay(header.config, &events)?;
            let digest = state.digest();
            println!("{digest}");
            if let Some(want) = expect {
                if *want != digest {
                    bail!("state digest {digest} does not match expected {want}");
                }
            }
        }
        LedgerCommand::Digest { log } => {
            let (header, events) = read_log(log)?;
            println!("{}", log_digest(&header, &events));
        }
    }
    Ok(())
}

fn report_cmd(args: &ReportArgs, mut run: RunRecorder) -> Result<()> {
    let mut text = String::new();
    for path in &args.csv {
        run.input(path)?;
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows = read_rows_csv(file).with_context(|| format!("parsing {}", path.display()))?;
        if summarize(&rows).is_empty() {
            bail!("{} has no benchmark rows", path.display());
        }
        let title = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        text.push_str(&report::render(&title, &rows));
        text.push('\n');
    }
    run.output("report.md", text.as_bytes())?;
    run.finish()?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let recorder = |name: &str| RunRecorder::new(name, args.clone(), &cli.out);
    match &cli.command {
        Command::GenPop(a) => gen_pop(a, recorder("gen-pop")?),
        Command::Recruit(a) => recruit(a, recorder("recruit")?),
        Command::BenchOptimizers(a) => bench(a, false, cli.jobs, recorder("bench-optimizers")?),
        Command::BenchBaselines(a) => bench(a, true, cli.jobs, recorder("bench-baselines")?),
        Command::Simulate(a) => simulate(a, recorder("simulate")?),
        Command::Store(c) => store(c),
        Command::Ledger(c) => ledger(c),
        Command::Report(a) => report_cmd(a, recorder("report")?),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
