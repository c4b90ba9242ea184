use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use smagdi::agents::{
    default_roster, synthesize_script, AgentBackend, HttpBackend, HttpBackendConfig, MockBackend, MockScript,
    SyntheticProfile, BACKEND_URL_ENV,
};
use smagdi::debate::calibrate;
use smagdi::distill::{load_trained, save_trained};
use smagdi::graph::{read_graphs, write_graphs};
use smagdi::harness::pipeline::{debate_stage, distill_stage, eval_stage, infer_stage, make_embedder};
use smagdi::harness::{compare_mas_sas, load_dataset, split, SmagdiConfig};
use smagdi::record::{DatasetKind, QuestionRecord};
use smagdi::scot::InferenceTrace;

#[derive(Parser)]
#[command(name = "smagdi", version, about = "Debate graphs distilled into a small Socratic student")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum Dataset {
    Strategyqa,
    Mmlu,
}

impl From<Dataset> for DatasetKind {
    fn from(d: Dataset) -> Self {
        match d {
            Dataset::Strategyqa => DatasetKind::StrategyQa,
            Dataset::Mmlu => DatasetKind::Mmlu,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    /// Dataset file (or MMLU directory).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct BackendArgs {
    /// Replay a mock script instead of calling a model service.
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic mock script for a dataset.
    MockScript {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Debate the training split and write transcripts, weights and graphs.
    Debate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the student and GCN on debate graphs.
    Distill {
        #[arg(long)]
        graphs: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Output directory for the model, history and checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the last checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Run zero-shot Socratic inference on the test split.
    Infer {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score inference traces against the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the weighted debate against a single zero-shot agent on the test split.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        writeln!(f, "{}", serde_json::to_string(item)?)?;
    }
    f.flush()?;
    Ok(())
}

fn read_traces(path: &Path) -> Result<Vec<InferenceTrace>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

fn load_config(cli: &Cli) -> Result<SmagdiConfig> {
    let mut config = match &cli.config {
        Some(p) => SmagdiConfig::load(p)?,
        None => SmagdiConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn load_split(data: &DataArgs, config: &SmagdiConfig) -> Result<(Vec<QuestionRecord>, Vec<QuestionRecord>)> {
    let records = load_dataset(data.dataset.into(), &data.data)?;
    Ok(split(&records, &config.split)?)
}

/// Script file, then the HTTP service, then a synthetic script over `records`.
fn make_backend(args: &BackendArgs, records: &[QuestionRecord], seed: u64) -> Result<Box<dyn AgentBackend>> {
    if let Some(path) = &args.script {
        return Ok(Box::new(MockBackend::from_file(path)?));
    }
    if let Some(config) = HttpBackendConfig::from_env() {
        log::info!("using model service at {}", config.url);
        return Ok(Box::new(HttpBackend::new(config)));
    }
    log::warn!("no --script and {BACKEND_URL_ENV} unset; replaying a synthetic mock panel");
    Ok(Box::new(MockBackend::new(synthetic(records, seed))))
}

fn synthetic(records: &[QuestionRecord], seed: u64) -> MockScript {
    synthesize_script(records, &default_roster(), &SyntheticProfile::default(), seed)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let seed = config.seed();
    match &cli.command {
        Command::MockScript { data, out } => {
            let records = load_dataset(data.dataset.into(), &data.data)?;
            let script = synthetic(&records, seed);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            script.save(out)?;
            println!("wrote {} scripted responses to {}", script.responses.len(), out.display());
        }
        Command::Debate { data, backend, out } => {
            let (train, _) = load_split(data, &config)?;
            let backend = make_backend(backend, &train, seed)?;
            let embedder = make_embedder(&config)?;
            let artifacts = debate_stage(&train, &default_roster(), backend.as_ref(), embedder.as_ref(), &config)?;
            fs::create_dir_all(out)?;
            write_json(&out.join("weights.json"), &artifacts.weights)?;
            write_jsonl(&out.join("transcripts.jsonl"), &artifacts.transcripts)?;
            write_graphs(&out.join("graphs.jsonl"), &artifacts.graphs)?;
            println!(
                "debated {} questions ({} skipped); graphs in {}",
                artifacts.graphs.len(),
                artifacts.skipped.len(),
                out.join("graphs.jsonl").display()
            );
        }
        Command::Distill { graphs, backend, out, resume } => {
            let graphs = read_graphs(graphs)?;
            if graphs.is_empty() {
                bail!("no graphs to distill");
            }
            let questions: Vec<QuestionRecord> = graphs.iter().map(graph_question).collect();
            let backend = make_backend(backend, &questions, seed)?;
            let mut config = config.clone();
            if config.train.checkpoint_dir.is_none() {
                config.train.checkpoint_dir = Some(out.join("checkpoints"));
            }
            fs::create_dir_all(out)?;
            let outcome = distill_stage(&graphs, backend.as_ref(), &config, *resume)?;
            save_trained(&out.join("model.json"), &outcome.student, &outcome.gcn)?;
            write_json(&out.join("history.json"), &outcome.history)?;
            let last = outcome.history.final_train().map_or(f64::NAN, |b| b.total);
            println!(
                "trained {} epochs: total loss {:.4} -> {:.4}; model in {}",
                outcome.history.epochs.len(),
                outcome.history.initial.total,
                last,
                out.join("model.json").display()
            );
        }
        Command::Infer { data, model, out } => {
            let (_, test) = load_split(data, &config)?;
            let (student, _) = load_trained(model)?;
            let traces = infer_stage(&student, &test, &config);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_jsonl(out, &traces)?;
            println!("wrote {} traces to {}", traces.len(), out.display());
        }
        Command::Eval { data, traces, out } => {
            let (_, test) = load_split(data, &config)?;
            let metrics = eval_stage(&test, &read_traces(traces)?)?;
            write_json(out, &metrics)?;
            println!("accuracy {:.4} over {} questions", metrics.accuracy, metrics.n);
        }
        Command::Compare { data, backend, out } => {
            let (train, test) = load_split(data, &config)?;
            let all: Vec<QuestionRecord> = train.iter().chain(&test).cloned().collect();
            let backend = make_backend(backend, &all, seed)?;
            let roster = default_roster();
            let sample = &train[..config.debate.calibration_size.min(train.len())];
            let weights = calibrate(&roster, backend.as_ref(), sample, &config.debate)?;
            let report = compare_mas_sas(&test, &roster, backend.as_ref(), &weights, &config.debate)?;
            write_json(out, &report)?;
            println!("MAS {:.4} vs SAS {:.4} over {} questions", report.mas.accuracy, report.sas.accuracy, report.mas.n);
        }
    }
    Ok(())
}

fn graph_question(g: &smagdi::graph::InteractionGraph) -> QuestionRecord {
    QuestionRecord {
        question_id: g.question_id.clone(),
        text: g.question_text().to_string(),
        answer_space: g.answer_space.clone(),
        gold: g.gold_answer.clone(),
        subject: None,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
