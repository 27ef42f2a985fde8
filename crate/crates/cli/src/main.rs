//! `seqmem` command-line harness.
//!
//! Every command takes a TOML run config. Outputs go to `--out-dir`
//! (default from `SEQMEM_OUT_DIR`, else `./out`): the resolved config echo,
//! per-step JSONL records and a summary JSON. Exit status is 0 on success,
//! 2 for configuration errors and 3 for data errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use seqmem::config::{RunConfig, TaskKind};
use seqmem::exec::Exec;
use seqmem::metrics::mean_sd;
use seqmem::tasklab::{self, Run, StepRecord, Summary};
use seqmem::taxi;

#[derive(Parser)]
#[command(name = "seqmem", version, about = "Streaming sequence memory experiments")]
struct Cli {
    /// Directory for run outputs.
    #[arg(long, global = true, env = "SEQMEM_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config field, e.g. `--set tm.activation_threshold=12`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset (discrete) or the input series (taxi) a config uses.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run an experiment.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Independent seeded replicas, run concurrently and aggregated.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Also write a model checkpoint at the end of the run.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Score the previous-value and seasonal baselines on a taxi series.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the first `steps` elements and write a checkpoint.
    Save {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        model: PathBuf,
    },
    /// Resume from a checkpoint and continue the run.
    Load {
        #[arg(long)]
        model: PathBuf,
        /// Stop after this many more elements instead of at the end.
        #[arg(long)]
        steps: Option<usize>,
        /// Write a new checkpoint when done.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Apply the config's perturbation to a CSV series.
    Perturb {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// A failure and the exit status it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<seqmem::Error> for Failure {
    fn from(e: seqmem::Error) -> Self {
        Failure { code: if e.is_config() { 2 } else { 3 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl Failure {
    fn context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

fn config_error(path: &str, message: impl Into<String>) -> Failure {
    Failure { code: 2, message: format!("config error at `{path}`: {}", message.into()) }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| config_error(&args.config.display().to_string(), e.to_string()))?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error("<file>", e.to_string()))?;
    for o in &args.overrides {
        let (path, raw) = o.split_once('=').ok_or_else(|| config_error(o, "expected PATH=VALUE"))?;
        set_path(&mut table, path.trim(), parse_value(raw.trim()))?;
    }
    if let Some(seed) = args.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    Ok(RunConfig::from_toml_str(&table.to_string())?)
}

/// A TOML literal if it parses as one, else a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> CliResult<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| config_error(path, "empty field path"))?;
    let mut cur = table;
    for k in keys {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| config_error(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::best()
    }
}

/// Per-step JSONL writer. The first line carries the resolved config; each
/// record is flushed as soon as it is written.
struct Jsonl {
    out: BufWriter<File>,
}

impl Jsonl {
    fn create(path: &Path, cfg: &RunConfig, resumed_at: Option<usize>) -> CliResult<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header = json!({ "config": cfg, "seed": cfg.seed });
        if let Some(at) = resumed_at {
            header["resumed_at"] = json!(at);
        }
        serde_json::to_writer(&mut out, &json!({ "header": header }))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(Jsonl { out })
    }

    fn push(&mut self, rec: &StepRecord) -> seqmem::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a series as CSV plus a `.json` sidecar holding the config, since
/// the CSV itself has nowhere to put it.
fn write_series(path: &Path, rows: &[taxi::TaxiRow], cfg: &RunConfig) -> CliResult<()> {
    taxi::write_csv(rows, BufWriter::new(File::create(path)?))?;
    let meta = json!({ "config": cfg, "seed": cfg.seed, "rows": rows.len() });
    write_json(&path.with_extension("csv.json"), &meta)
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

/// Runs one config to the end, writing records, summary and an optional
/// checkpoint into `dir`.
fn run_one(cfg: &RunConfig, dir: &Path, exec: Exec, save: Option<&Path>) -> CliResult<Summary> {
    echo_config(dir, cfg)?;
    let mut jsonl = Jsonl::create(&dir.join("steps.jsonl"), cfg, None)?;
    let mut run = Run::new(cfg)?;
    while !run.is_done() {
        jsonl.push(&run.step()?)?;
    }
    finish(&run, dir, exec, save)
}

fn finish(run: &Run, dir: &Path, exec: Exec, save: Option<&Path>) -> CliResult<Summary> {
    let summary = run.summary(exec)?;
    write_json(&dir.join("summary.json"), &json!({ "config": run.config(), "summary": summary }))?;
    if let Some(path) = save {
        run.save(path)?;
    }
    Ok(summary)
}

/// Headline numbers of a summary, for aggregation across replicas.
fn headline(s: &Summary) -> Vec<(&'static str, Option<f64>)> {
    match s {
        Summary::Discrete(d) => vec![
            ("accuracy_ma100", Some(d.accuracy_ma100)),
            ("elements_to_threshold", d.elements_to_threshold.map(|v| v as f64)),
            ("sequences_to_threshold", d.sequences_to_threshold.map(|v| v as f64)),
        ],
        Summary::Taxi(t) => vec![
            ("mape", t.mape),
            ("nll", t.nll),
            ("naive_mape", t.naive.mape),
            ("seasonal_mape", t.seasonal.mape),
        ],
    }
}

fn aggregate(summaries: &[Summary]) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for (i, (name, _)) in headline(&summaries[0]).into_iter().enumerate() {
        let vals: Vec<f64> = summaries.iter().filter_map(|s| headline(s)[i].1).collect();
        let (mean, sd) = mean_sd(&vals);
        out.insert(
            name.into(),
            json!({ "mean": (!vals.is_empty()).then_some(mean), "sd": (!vals.is_empty()).then_some(sd), "n": vals.len() }),
        );
    }
    serde_json::Value::Object(out)
}

fn cmd_run(cli: &Cli, args: &ConfigArgs, replicas: usize, save: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(args)?;
    if replicas == 0 {
        return Err(config_error("--replicas", "must be at least 1"));
    }
    let ex = exec(cli);
    if replicas == 1 {
        let summary = run_one(&cfg, &cli.out_dir, ex, save)?;
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    if save.is_some() {
        return Err(config_error("--save", "not supported with --replicas"));
    }
    echo_config(&cli.out_dir, &cfg)?;
    let results = ex.map_range(replicas, |i| {
        let dir = cli.out_dir.join(format!("replica-{i}"));
        run_one(&cfg.replica(i), &dir, Exec::Sequential, None)
    });
    let summaries = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let agg = aggregate(&summaries);
    write_json(
        &cli.out_dir.join("summary.json"),
        &json!({ "config": cfg, "replicas": replicas, "aggregate": agg, "runs": summaries }),
    )?;
    println!("{}", serde_json::to_string_pretty(&agg)?);
    Ok(())
}

fn cmd_gen(cli: &Cli, args: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    echo_config(&cli.out_dir, &cfg)?;
    match cfg.task {
        TaskKind::Discrete => {
            let ds = tasklab::discrete::dataset_for(&cfg)?;
            let path = cli.out_dir.join("dataset.json");
            write_json(&path, &json!({ "config": cfg, "dataset": ds }))?;
            println!("{} sequences written to {}", ds.len(), path.display());
        }
        TaskKind::Taxi => {
            let (rows, _) = tasklab::series_for(&cfg)?;
            let path = cli.out_dir.join("series.csv");
            write_series(&path, &rows, &cfg)?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn cmd_baseline(cli: &Cli, args: &ConfigArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    if cfg.task != TaskKind::Taxi {
        return Err(config_error("task", "baselines apply to the taxi task"));
    }
    echo_config(&cli.out_dir, &cfg)?;
    let run = tasklab::TaxiRun::new(&cfg)?;
    let (naive, seasonal) = run.baselines()?;
    let out = json!({ "naive": naive, "seasonal": seasonal });
    write_json(&cli.out_dir.join("baseline.json"), &json!({ "config": cfg, "baseline": out }))?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_save(cli: &Cli, args: &ConfigArgs, steps: usize, model: &Path) -> CliResult<()> {
    let cfg = load_config(args)?;
    echo_config(&cli.out_dir, &cfg)?;
    let mut jsonl = Jsonl::create(&cli.out_dir.join("steps.jsonl"), &cfg, None)?;
    let mut run = Run::new(&cfg)?;
    while run.position() < steps && !run.is_done() {
        jsonl.push(&run.step()?)?;
    }
    run.save(model)?;
    println!("saved after {} elements to {}", run.position(), model.display());
    Ok(())
}

fn cmd_load(cli: &Cli, model: &Path, steps: Option<usize>, save: Option<&Path>) -> CliResult<()> {
    let mut run = Run::load(model).map_err(|e| Failure::from(e).context(model))?;
    let cfg = run.config().clone();
    echo_config(&cli.out_dir, &cfg)?;
    let start = run.position();
    let mut jsonl = Jsonl::create(&cli.out_dir.join("steps.jsonl"), &cfg, Some(start))?;
    let stop = steps.map_or(usize::MAX, |n| start + n);
    while run.position() < stop && !run.is_done() {
        jsonl.push(&run.step()?)?;
    }
    let summary = finish(&run, &cli.out_dir, exec(cli), save)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_perturb(args: &ConfigArgs, input: &Path, output: &Path) -> CliResult<()> {
    let cfg = load_config(args)?;
    let p = cfg.taxi.perturbation.as_ref().ok_or_else(|| config_error("taxi.perturbation", "missing"))?;
    let t = &cfg.taxi;
    let ing = taxi::ingest_csv(input, &t.timestamp_column, &t.value_column)?;
    if ing.skipped > 0 {
        log::warn!("skipped {} malformed rows", ing.skipped);
    }
    let rows = taxi::perturb(&ing.rows, p)?;
    write_series(output, &rows, &cfg)?;
    println!("{} rows written to {}", rows.len(), output.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen { cfg } => cmd_gen(cli, cfg),
        Command::Run { cfg, replicas, save } => cmd_run(cli, cfg, *replicas, save.as_deref()),
        Command::Baseline { cfg } => cmd_baseline(cli, cfg),
        Command::Save { cfg, steps, model } => cmd_save(cli, cfg, *steps, model),
        Command::Load { model, steps, save } => cmd_load(cli, model, *steps, save.as_deref()),
        Command::Perturb { cfg, input, output } => cmd_perturb(cfg, input, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = fs::create_dir_all(&cli.out_dir) {
        eprintln!("error: cannot create {}: {e}", cli.out_dir.display());
        return ExitCode::from(3);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
