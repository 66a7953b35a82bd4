//! `fedfuse`: file-based stages of the fusion pipeline plus a one-shot `run`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fedfuse_core::checkpoint;
use fedfuse_core::data::synthetic::{self, SyntheticProfile};
use fedfuse_core::data::{ingest, render_stats_markdown, stats, write_dataset_dir, Adapter};
use fedfuse_core::eval::{
    evaluate_ensemble, evaluate_model, write_report, Approach, EvaluationReport, F1Report, ReportBuilder, RowKey,
};
use fedfuse_core::pipeline::{fixture_datasets, report_notes, run_pipeline, RunConfig};
use fedfuse_core::train::{finetune_fused, train_local};
use fedfuse_core::{elementwise_mean, Error, LabeledInstance, ModelState, Result};

#[derive(Parser)]
#[command(name = "fedfuse", version, about = "Federated learning by model fusion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON, or TOML by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed for `run`; training seed for the stage commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for `run`.
    #[arg(long, global = true, env = "FEDFUSE_OUT")]
    out: Option<PathBuf>,
    /// Use synthetic corpora instead of dataset files.
    #[arg(long, global = true)]
    fixtures: bool,
    /// Use the published training hyperparameters.
    #[arg(long, global = true)]
    paper_faithful: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a native dataset to canonical TSV and print its statistics.
    Ingest {
        /// File or directory in the adapter's layout; omit with --fixtures.
        path: Option<PathBuf>,
        #[arg(long)]
        adapter: Adapter,
        /// Directory for train.tsv and test.tsv.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a client model from the base on local data.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Start from this checkpoint instead of a fresh base.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Average checkpoints elementwise.
    Fuse {
        #[arg(required = true, num_args = 2..)]
        checkpoints: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Finetune a fused checkpoint on a stratified subsample of local data.
    Finetune {
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score the max-probability ensemble of several checkpoints.
    Ensemble {
        #[arg(required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Test rows: canonical TSV, or a dataset directory's test split.
        #[arg(long)]
        test: PathBuf,
        /// Write one prediction record per line here.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        record: RecordArgs,
    },
    /// Score one checkpoint on test rows.
    Evaluate {
        checkpoint: PathBuf,
        /// Canonical TSV, or a dataset directory's test split.
        test: PathBuf,
        #[command(flatten)]
        record: RecordArgs,
    },
    /// Render summary.md and grid.md from results.json or recorded scores.
    Report {
        /// A results.json written by `run` or by this command.
        results: Option<PathBuf>,
        /// Scores appended by `evaluate`/`ensemble --append-scores`.
        #[arg(long, conflicts_with = "results")]
        scores: Option<PathBuf>,
        /// Output directory; defaults to the directory of `results`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// The whole pipeline from one configuration.
    Run,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file or directory; omit with --fixtures.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "canonical")]
    adapter: Adapter,
}

#[derive(Args)]
struct RecordArgs {
    /// Append the score to this JSON-lines file for `report --scores`.
    #[arg(long, requires_all = ["approach", "models", "test_name"])]
    append_scores: Option<PathBuf>,
    #[arg(long)]
    approach: Option<Approach>,
    /// Client ids joined with `+`.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    finetune: Option<String>,
    #[arg(long)]
    test_name: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    key: RowKey,
    score: F1Report,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if g.paper_faithful {
        cfg.make_paper_faithful();
    }
    if g.fixtures {
        cfg.fixtures = true;
        if cfg.datasets.is_empty() {
            cfg.datasets = fixture_datasets();
        }
    }
    if let Some(j) = g.jobs {
        cfg.workers = j;
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Training rows: a directory's train split, or every row of a file.
fn load_rows(args: &DataArgs, cfg: &RunConfig, fixtures: bool) -> Result<Vec<LabeledInstance>> {
    if fixtures {
        let profile = SyntheticProfile::for_adapter(args.adapter)?;
        let ds = synthetic::generate(&profile, cfg.fixture.train_size, cfg.fixture.test_size, cfg.fixture.seed)?;
        return Ok(ds.train);
    }
    let path = args
        .data
        .as_ref()
        .ok_or_else(|| config_error("--data is required without --fixtures"))?;
    Ok(ingest(path, args.adapter)?.train)
}

/// Test rows: a directory's test split, or every row of a canonical file.
fn load_test_rows(path: &Path) -> Result<Vec<LabeledInstance>> {
    let ds = ingest(path, Adapter::Canonical)?;
    Ok(if path.is_dir() { ds.test } else { ds.train })
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<ModelState> {
    let params = checkpoint::load(path)?;
    let arch = cfg.architecture.clone();
    if params.arch_hash() != arch.hash() {
        return Err(config_error(format!(
            "{}: checkpoint architecture {} does not match configured architecture {}",
            path.display(),
            params.arch_hash(),
            arch.hash()
        )));
    }
    ModelState::from_params(arch, params)
}

fn save_with_log(model: &ModelState, log_jsonl: &str, output: &Path) -> Result<()> {
    checkpoint::save(model.params(), output)?;
    let log_path = output.with_extension("trainlog.jsonl");
    fs::write(&log_path, log_jsonl).map_err(|e| runtime_io(&log_path, e))
}

fn runtime_io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn print_score(score: &F1Report) {
    println!("macro_f1 {}", score.macro_f1);
    for label in fedfuse_core::Label::ALL {
        let c = score.class(label);
        println!("{label} precision {} recall {} f1 {}", c.precision, c.recall, c.f1);
    }
}

fn record_score(args: &RecordArgs, score: &F1Report) -> Result<()> {
    let Some(path) = &args.append_scores else {
        return Ok(());
    };
    let models: Vec<String> = args.models.iter().flat_map(|m| m.split('+')).map(str::to_string).collect();
    let key = RowKey::new(
        args.approach.expect("clap enforces --approach"),
        &models,
        args.finetune.as_deref(),
        args.test_name.as_deref().expect("clap enforces --test-name"),
    );
    let line = serde_json::to_string(&ScoreLine { key, score: *score })?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| runtime_io(path, e))?;
    writeln!(f, "{line}").map_err(|e| runtime_io(path, e))
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let seed = g.seed.unwrap_or(cfg.training.seed);
    match cli.command {
        Command::Ingest { path, adapter, output } => {
            let ds = if g.fixtures {
                let profile = SyntheticProfile::for_adapter(adapter)?;
                synthetic::generate(&profile, cfg.fixture.train_size, cfg.fixture.test_size, cfg.fixture.seed)?
            } else {
                let path = path.ok_or_else(|| config_error("a dataset path is required without --fixtures"))?;
                ingest(path, adapter)?
            };
            write_dataset_dir(&ds, &output)?;
            print!("{}", render_stats_markdown(&[(stats(&ds), adapter.data_sources())]));
        }
        Command::Train { data, base, output } => {
            let rows = load_rows(&data, &cfg, g.fixtures)?;
            let base = match base {
                Some(p) => load_model(&p, &cfg)?,
                None => ModelState::init(cfg.architecture.clone(), seed)?,
            };
            let (model, log) = train_local(&base, &rows, &cfg.training.with_seed(seed))?;
            save_with_log(&model, &log.to_jsonl(), &output)?;
        }
        Command::Fuse { checkpoints, output } => {
            let sets = checkpoints
                .iter()
                .map(checkpoint::load)
                .collect::<Result<Vec<_>>>()?;
            checkpoint::save(&elementwise_mean(&sets)?, &output)?;
        }
        Command::Finetune { checkpoint, data, output } => {
            let fused = load_model(&checkpoint, &cfg)?;
            let rows = load_rows(&data, &cfg, g.fixtures)?;
            let (model, log) = finetune_fused(&fused, &rows, &cfg.training.with_seed(seed))?;
            save_with_log(&model, &log.to_jsonl(), &output)?;
        }
        Command::Ensemble {
            checkpoints,
            test,
            predictions,
            record,
        } => {
            let models = checkpoints
                .iter()
                .map(|p| load_model(p, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let rows = load_test_rows(&test)?;
            let (score, preds) = evaluate_ensemble(&models, &rows)?;
            if let Some(path) = predictions {
                let body: String = preds
                    .iter()
                    .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
                    .collect::<std::result::Result<_, _>>()?;
                fs::write(&path, body).map_err(|e| runtime_io(&path, e))?;
            }
            print_score(&score);
            record_score(&record, &score)?;
        }
        Command::Evaluate {
            checkpoint,
            test,
            record,
        } => {
            let model = load_model(&checkpoint, &cfg)?;
            let score = evaluate_model(&model, &load_test_rows(&test)?)?;
            print_score(&score);
            record_score(&record, &score)?;
        }
        Command::Report { results, scores, output } => {
            let (report, default_dir) = match (results, scores) {
                (Some(path), None) => {
                    let text = fs::read_to_string(&path).map_err(|e| runtime_io(&path, e))?;
                    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                    (EvaluationReport::from_json(&text)?, dir)
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path).map_err(|e| runtime_io(&path, e))?;
                    let mut builder = ReportBuilder::default();
                    for note in report_notes(&cfg) {
                        builder.note(note);
                    }
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        let s: ScoreLine = serde_json::from_str(line)?;
                        builder.add(s.key, s.score);
                    }
                    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                    (builder.build(), dir)
                }
                _ => return Err(config_error("pass a results.json or --scores")),
            };
            let dir = output.unwrap_or(default_dir);
            write_report(&report, &dir)?;
            println!("{}", dir.display());
        }
        Command::Run => {
            let mut cfg = cfg;
            if let Some(s) = g.seed {
                cfg.master_seed = s;
            }
            run_pipeline(&cfg)?;
            println!("{}", cfg.report_dir().display());
        }
    }
    Ok(())
}

fn one_line(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("fedfuse: error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedfuse: error: {}", one_line(&e));
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
