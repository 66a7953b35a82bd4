//! End-to-end orchestration: ingest, train one client per dataset from a
//! shared base, fuse, finetune, evaluate every requested approach on every
//! test set, repeat over seeded runs and write reports.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! runs/<r>/base/init.<arch8>.ckpt
//! runs/<r>/<client>/local.<arch8>.ckpt
//! runs/<r>/<client>/local.trainlog.jsonl
//! runs/<r>/<a+b>/fused.<arch8>.ckpt
//! runs/<r>/<a+b>/finetuned-<client>.<arch8>.ckpt
//! runs/<r>/audit.jsonl
//! reports/<run-id>/{summary.md,grid.md,results.json,manifest.json}
//! ```
//!
//! `<arch8>` is the first eight hex digits of the architecture hash and
//! `<run-id>` a digest of the configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::data::synthetic::{self, SyntheticProfile};
use crate::data::{ingest, Adapter, CanonicalDataset, LabeledInstance};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_ensemble, evaluate_model, write_report, Approach, EvaluationReport, F1Report, ReportBuilder, RowKey,
};
use crate::fusion::{enumerate_fusion_jobs, Client, Coordinator, FinetuneSite, FusionJob};
use crate::model::{ModelArchitecture, ModelState};
use crate::tensor::ParameterSet;
use crate::train::{TrainLog, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Client id; also the test-set name in reports.
    pub name: String,
    pub adapter: Adapter,
    /// File or directory; unused with fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JobsSpec {
    /// The string `"all"`.
    All(AllJobs),
    Explicit(Vec<Vec<String>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllJobs {
    All,
}

impl Default for JobsSpec {
    fn default() -> Self {
        JobsSpec::All(AllJobs::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            train_size: 1600,
            test_size: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetSpec>,
    pub architecture: ModelArchitecture,
    pub training: TrainingConfig,
    pub jobs: JobsSpec,
    pub approaches: Vec<Approach>,
    pub runs: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Replace every dataset with its synthetic stand-in.
    pub fixtures: bool,
    pub fixture: FixtureConfig,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            architecture: ModelArchitecture::default(),
            training: TrainingConfig::default(),
            jobs: JobsSpec::default(),
            approaches: Approach::ALL.to_vec(),
            runs: 1,
            output_dir: PathBuf::from("fedfuse-out"),
            master_seed: 0,
            fixtures: false,
            fixture: FixtureConfig::default(),
            workers: 0,
        }
    }
}

/// The four English corpora as synthetic fixtures.
pub fn fixture_datasets() -> Vec<DatasetSpec> {
    [Adapter::Ahsd, Adapter::Olid, Adapter::Hasoc, Adapter::HateXplain]
        .into_iter()
        .map(|adapter| DatasetSpec {
            name: adapter.tag().to_string(),
            adapter,
            path: None,
        })
        .collect()
}

impl RunConfig {
    /// Parses TOML when the extension is `.toml`, JSON otherwise.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg: RunConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Swaps in the published training hyperparameters, keeping the seed.
    pub fn make_paper_faithful(&mut self) {
        self.training = TrainingConfig {
            seed: self.training.seed,
            ..TrainingConfig::paper_faithful()
        };
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        if self.approaches.is_empty() {
            return bad("no approaches selected".into());
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || d.name.contains(['/', '\\', '+']) || d.name.starts_with('.') {
                return bad(format!("invalid dataset name `{}`", d.name));
            }
            if !names.insert(d.name.as_str()) {
                return bad(format!("dataset name `{}` is used twice", d.name));
            }
            if self.fixtures {
                if d.adapter == Adapter::Canonical {
                    return bad(format!("dataset `{}`: canonical data has no synthetic fixture", d.name));
                }
            } else if d.path.is_none() {
                return bad(format!("dataset `{}` has no path; pass a path or use fixtures", d.name));
            }
        }
        self.architecture.validate()?;
        self.training.validate()?;
        if let JobsSpec::Explicit(jobs) = &self.jobs {
            for job in jobs {
                let distinct: BTreeSet<_> = job.iter().collect();
                if distinct.len() < 2 || distinct.len() != job.len() {
                    return bad(format!("fusion job {job:?} needs at least two distinct datasets"));
                }
                if let Some(unknown) = job.iter().find(|c| !names.contains(c.as_str())) {
                    return bad(format!("fusion job refers to unknown dataset `{unknown}`"));
                }
            }
        }
        let needs_jobs = self.approaches.iter().any(|a| *a != Approach::NonFused);
        if needs_jobs && matches!(self.jobs, JobsSpec::All(_)) && self.datasets.len() < 2 {
            return bad("fusion and ensembles need at least two datasets".into());
        }
        Ok(())
    }

    /// Digest of everything that affects results.
    pub fn run_id(&self) -> String {
        let mut cfg = self.clone();
        cfg.output_dir = PathBuf::new();
        cfg.workers = 0;
        let digest = Sha256::digest(cfg.to_json().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("reports").join(self.run_id())
    }

    fn wants(&self, a: Approach) -> bool {
        self.approaches.contains(&a)
    }

    fn resolve_jobs(&self, seed: u64) -> Result<Vec<FusionJob>> {
        match &self.jobs {
            JobsSpec::All(_) => {
                let ids: Vec<String> = self.datasets.iter().map(|d| d.name.clone()).collect();
                enumerate_fusion_jobs(&ids, seed)
            }
            JobsSpec::Explicit(jobs) => Ok(jobs
                .iter()
                .map(|j| {
                    let mut clients = j.clone();
                    clients.sort();
                    FusionJob {
                        clients,
                        finetune: None,
                        seed,
                    }
                })
                .collect()),
        }
    }
}

/// Seed of 1-based run `r`.
pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    master_seed.wrapping_add(run as u64)
}

/// Report footers describing how the numbers were produced.
pub fn report_notes(cfg: &RunConfig) -> Vec<String> {
    let mut notes = vec![format!(
        "Macro F1 mean±std over {} run(s); std is the population standard deviation (divide by n).",
        cfg.runs
    )];
    let published = TrainingConfig::paper_faithful();
    let t = &cfg.training;
    let mut overrides = Vec::new();
    if t.learning_rate != published.learning_rate {
        overrides.push(format!("learning_rate={} (published {})", t.learning_rate, published.learning_rate));
    }
    for (name, ours, theirs) in [
        ("batch_size", t.batch_size, published.batch_size),
        ("epochs", t.epochs, published.epochs),
        ("patience", t.patience, published.patience),
    ] {
        if ours != theirs {
            overrides.push(format!("{name}={ours} (published {theirs})"));
        }
    }
    for (name, ours, theirs) in [
        ("warmup_fraction", t.warmup_fraction, published.warmup_fraction),
        ("eval_split_fraction", t.eval_split_fraction, published.eval_split_fraction),
        ("finetune_fraction", t.finetune_fraction, published.finetune_fraction),
    ] {
        if ours != theirs {
            overrides.push(format!("{name}={ours} (published {theirs})"));
        }
    }
    let a = &cfg.architecture;
    notes.push(format!(
        "Encoder trained from scratch: d={}, heads={}, layers={}, vocab={}, max_seq_len={}; not a pretrained large model.",
        a.embed_dim, a.num_heads, a.num_encoder_layers, a.vocab_size, a.max_seq_len
    ));
    if overrides.is_empty() {
        notes.push("Training hyperparameters match the published settings.".into());
    } else {
        notes.push(format!("Desk-scale overrides, not paper-faithful: {}.", overrides.join(", ")));
    }
    if cfg.fixtures {
        notes.push(format!(
            "Datasets are synthetic fixtures ({} train / {} test rows each).",
            cfg.fixture.train_size, cfg.fixture.test_size
        ));
    }
    if matches!(cfg.jobs, JobsSpec::All(_)) && cfg.datasets.len() == 4 {
        notes.push(
            "Fusion jobs cover every subset of two or more clients: 11 for four clients. \
             The figure of seven combinations quoted for this setup does not match that count."
                .into(),
        );
    }
    notes
}

pub fn load_dataset(spec: &DatasetSpec, cfg: &RunConfig) -> Result<CanonicalDataset> {
    let mut ds = if cfg.fixtures {
        let profile = SyntheticProfile::for_adapter(spec.adapter)?;
        synthetic::generate(&profile, cfg.fixture.train_size, cfg.fixture.test_size, cfg.fixture.seed)?
    } else {
        let path = spec
            .path
            .as_ref()
            .ok_or_else(|| Error::Config(format!("dataset `{}` has no path", spec.name)))?;
        ingest(path, spec.adapter)?
    };
    ds.name = spec.name.clone();
    Ok(ds)
}

pub fn arch_prefix(arch: &ModelArchitecture) -> String {
    arch.hash()[..8].to_string()
}

/// `runs/<run>/<entity>/<stage>.<arch8>.ckpt` under `out`.
pub fn checkpoint_path(out: &Path, run: usize, entity: &str, stage: &str, arch: &ModelArchitecture) -> PathBuf {
    out.join("runs")
        .join(run.to_string())
        .join(entity)
        .join(format!("{stage}.{}.ckpt", arch_prefix(arch)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub run_id: String,
    pub runs_completed: usize,
    pub checkpoints: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Artifacts<'a> {
    out: &'a Path,
    manifest: Manifest,
}

impl Artifacts<'_> {
    fn checkpoint(&mut self, params: &ParameterSet, path: PathBuf) -> Result<()> {
        checkpoint::save(params, &path)?;
        self.manifest
            .checkpoints
            .push(path.strip_prefix(self.out).unwrap_or(&path).to_path_buf());
        Ok(())
    }

    fn text(&self, path: &Path, body: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Scores `model` on every test set.
fn score_everywhere(model: &ModelState, tests: &[(String, Vec<LabeledInstance>)]) -> Result<Vec<(String, F1Report)>> {
    tests
        .par_iter()
        .map(|(name, rows)| Ok((name.clone(), evaluate_model(model, rows)?)))
        .collect()
}

fn run_once(
    cfg: &RunConfig,
    run: usize,
    datasets: &[CanonicalDataset],
    builder: &mut ReportBuilder,
    art: &mut Artifacts<'_>,
) -> Result<()> {
    let seed = run_seed(cfg.master_seed, run);
    let arch = &cfg.architecture;
    let out = art.out;
    let base = ModelState::init(arch.clone(), seed)?;
    art.checkpoint(base.params(), checkpoint_path(out, run, "base", "init", arch))?;

    let clients: Vec<Client> = datasets
        .iter()
        .map(|ds| Client::new(ds.name.clone(), ds.clone(), cfg.training.clone()))
        .collect();
    let tests: Vec<(String, Vec<LabeledInstance>)> = clients
        .iter()
        .map(|c| (c.id().to_string(), c.test_rows().to_vec()))
        .collect();

    let trained: Vec<(ModelState, TrainLog)> = clients
        .par_iter()
        .map(|c| c.train(&base, seed))
        .collect::<Result<_>>()?;
    let mut coordinator = Coordinator::new(base.clone());
    for (client, (model, log)) in clients.iter().zip(&trained) {
        let ckpt = checkpoint_path(out, run, client.id(), "local", arch);
        let log_path = ckpt.with_file_name("local.trainlog.jsonl");
        art.checkpoint(model.params(), ckpt)?;
        art.text(&log_path, &log.to_jsonl())?;
        let log_ref = log_path.strip_prefix(out).unwrap_or(&log_path).display().to_string();
        coordinator.register(client.record(model, Some(log_ref)))?;
    }

    if cfg.wants(Approach::NonFused) {
        for (client, (model, _)) in clients.iter().zip(&trained) {
            for (test, score) in score_everywhere(model, &tests)? {
                let key = RowKey::new(Approach::NonFused, &[client.id().to_string()], None, &test);
                builder.add(key, score);
            }
        }
    }

    let jobs = if cfg.approaches.iter().any(|a| *a != Approach::NonFused) {
        cfg.resolve_jobs(seed)?
    } else {
        Vec::new()
    };
    let sites: Vec<&dyn FinetuneSite> = clients.iter().map(|c| c as &dyn FinetuneSite).collect();

    if cfg.wants(Approach::Fused) {
        let outcomes = coordinator.run_fusion_batch(&jobs, &sites)?;
        for (job, outcome) in jobs.iter().zip(&outcomes) {
            art.checkpoint(outcome.fused.params(), checkpoint_path(out, run, &job.label(), "fused", arch))?;
            for (test, score) in score_everywhere(&outcome.fused, &tests)? {
                builder.add(RowKey::new(Approach::Fused, &job.clients, None, &test), score);
            }
        }
    }

    if cfg.wants(Approach::FusedFt) {
        let ft_jobs: Vec<FusionJob> = jobs
            .iter()
            .flat_map(|j| j.clients.iter().map(move |c| j.with_finetune(c.clone())))
            .collect();
        let outcomes = coordinator.run_fusion_batch(&ft_jobs, &sites)?;
        for (job, outcome) in ft_jobs.iter().zip(&outcomes) {
            let target = job.finetune.as_deref().expect("finetune job");
            let (model, log) = outcome.finetuned.as_ref().expect("finetuned outcome");
            let ckpt = checkpoint_path(out, run, &job.label(), &format!("finetuned-{target}"), arch);
            let log_path = ckpt.with_file_name(format!("finetuned-{target}.trainlog.jsonl"));
            art.checkpoint(model.params(), ckpt)?;
            art.text(&log_path, &log.to_jsonl())?;
            for (test, score) in score_everywhere(model, &tests)? {
                builder.add(RowKey::new(Approach::FusedFt, &job.clients, Some(target), &test), score);
            }
        }
    }

    if cfg.wants(Approach::Ensemble) {
        for job in &jobs {
            let members = job
                .clients
                .iter()
                .map(|c| coordinator.model_of(c))
                .collect::<Result<Vec<_>>>()?;
            let scores: Vec<(String, F1Report)> = tests
                .par_iter()
                .map(|(name, rows)| Ok((name.clone(), evaluate_ensemble(&members, rows)?.0)))
                .collect::<Result<_>>()?;
            for (test, score) in scores {
                builder.add(RowKey::new(Approach::Ensemble, &job.clients, None, &test), score);
            }
        }
    }

    if coordinator.instances_transferred() != 0 {
        return Err(Error::Config("audit log records instance transfers".into()));
    }
    art.text(&out.join("runs").join(run.to_string()).join("audit.jsonl"), &coordinator.audit_jsonl())?;
    Ok(())
}

fn run_all(cfg: &RunConfig, art: &mut Artifacts<'_>) -> Result<EvaluationReport> {
    let datasets = cfg
        .datasets
        .iter()
        .map(|d| load_dataset(d, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut builder = ReportBuilder::default();
    for note in report_notes(cfg) {
        builder.note(note);
    }
    for run in 1..=cfg.runs {
        log::info!("run {run}/{} (seed {})", cfg.runs, run_seed(cfg.master_seed, run));
        run_once(cfg, run, &datasets, &mut builder, art)?;
        art.manifest.runs_completed = run;
    }
    let report = builder.build();
    let dir = cfg.report_dir();
    write_report(&report, &dir)?;
    for name in ["summary.md", "grid.md", "results.json"] {
        let path = dir.join(name);
        art.manifest
            .reports
            .push(path.strip_prefix(art.out).unwrap_or(&path).to_path_buf());
    }
    Ok(report)
}

/// Runs every configured run and writes reports. On failure a manifest
/// with `status: "failed"` lists what was written before the error.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let out = cfg.output_dir.as_path();
    let mut art = Artifacts {
        out,
        manifest: Manifest {
            run_id: cfg.run_id(),
            ..Manifest::default()
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let result = pool.install(|| run_all(cfg, &mut art));
    let manifest_path = cfg.report_dir().join("manifest.json");
    match &result {
        Ok(_) => art.manifest.status = "complete".into(),
        Err(e) => {
            art.manifest.status = "failed".into();
            art.manifest.error = Some(e.to_string());
        }
    }
    let body = serde_json::to_string_pretty(&art.manifest)? + "\n";
    art.text(&manifest_path, &body)?;
    result
}
