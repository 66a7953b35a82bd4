//! The federated coordinator.
//!
//! Clients own their data and hand the coordinator only parameter sets. The
//! coordinator validates lineage, fuses by elementwise mean and, when a job
//! asks for it, ships the fused parameters back to one client for further
//! finetuning. No type in this module carries a [`LabeledInstance`] across
//! that boundary: [`Client`] keeps its rows private and the coordinator
//! talks to it through [`FinetuneSite`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CanonicalDataset, LabeledInstance};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::{elementwise_mean, ParameterSet};
use crate::train::{finetune_fused, train_local, TrainLog, TrainingConfig};

/// A client's submission to the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub client_id: String,
    pub dataset: String,
    pub checkpoint: ParameterSet,
    /// Where the client keeps its training log, if anywhere.
    pub train_log: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FusionJob {
    pub clients: Vec<String>,
    pub finetune: Option<String>,
    pub seed: u64,
}

impl FusionJob {
    /// `clients` joined with `+`, e.g. `ahsd+olid`.
    pub fn label(&self) -> String {
        self.clients.join("+")
    }

    pub fn with_finetune(&self, client: impl Into<String>) -> Self {
        Self {
            finetune: Some(client.into()),
            ..self.clone()
        }
    }
}

/// Every subset of at least two clients, ordered by size and then
/// lexicographically by client id. There are `2^n - n - 1` of them.
pub fn enumerate_fusion_jobs(clients: &[String], seed: u64) -> Result<Vec<FusionJob>> {
    let mut ids = clients.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::TooFewClients(ids.len()));
    }
    if ids.len() >= usize::BITS as usize {
        return Err(Error::Config(format!("{} clients is too many to enumerate", ids.len())));
    }
    let mut subsets: Vec<Vec<String>> = (1usize..1 << ids.len())
        .filter(|mask| mask.count_ones() >= 2)
        .map(|mask| {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, id)| id.clone())
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subsets
        .into_iter()
        .map(|clients| FusionJob {
            clients,
            finetune: None,
            seed,
        })
        .collect())
}

/// The client side of the finetuning hand-off. Receives parameters, returns
/// parameters.
pub trait FinetuneSite: Sync {
    fn site_id(&self) -> &str;
    fn finetune(&self, fused: &ModelState, seed: u64) -> Result<(ModelState, TrainLog)>;
}

/// A data-holding participant.
#[derive(Debug, Clone)]
pub struct Client {
    id: String,
    dataset: CanonicalDataset,
    config: TrainingConfig,
}

impl Client {
    pub fn new(id: impl Into<String>, dataset: CanonicalDataset, config: TrainingConfig) -> Self {
        Self {
            id: id.into(),
            dataset,
            config,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset.name
    }

    /// The client's own test rows, for local evaluation.
    pub fn test_rows(&self) -> &[LabeledInstance] {
        &self.dataset.test
    }

    /// Trains from the shared base on local data.
    pub fn train(&self, base: &ModelState, seed: u64) -> Result<(ModelState, TrainLog)> {
        train_local(base, &self.dataset.train, &self.config.with_seed(seed))
    }

    pub fn record(&self, model: &ModelState, train_log: Option<String>) -> ClientRecord {
        ClientRecord {
            client_id: self.id.clone(),
            dataset: self.dataset.name.clone(),
            checkpoint: model.params().clone(),
            train_log,
        }
    }
}

impl FinetuneSite for Client {
    fn site_id(&self) -> &str {
        &self.id
    }

    fn finetune(&self, fused: &ModelState, seed: u64) -> Result<(ModelState, TrainLog)> {
        finetune_fused(fused, &self.dataset.train, &self.config.with_seed(seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Register,
    Fuse,
    DispatchForFinetune,
    ReceiveFinetuned,
}

/// One coordinator-boundary crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: usize,
    pub action: AuditAction,
    pub clients: Vec<String>,
    pub parameter_sets: usize,
    pub instances_transferred: usize,
}

/// Result of [`Coordinator::run_fusion`].
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub fused: ModelState,
    pub finetuned: Option<(ModelState, TrainLog)>,
}

impl FusionOutcome {
    /// The finetuned model when the job asked for one, else the fused model.
    pub fn model(&self) -> &ModelState {
        self.finetuned.as_ref().map_or(&self.fused, |(m, _)| m)
    }
}

#[derive(Debug, Clone)]
pub struct Coordinator {
    base: ModelState,
    registry: BTreeMap<String, ClientRecord>,
    audit: Vec<AuditEvent>,
}

impl Coordinator {
    pub fn new(base: ModelState) -> Self {
        Self {
            base,
            registry: BTreeMap::new(),
            audit: Vec::new(),
        }
    }

    pub fn base(&self) -> &ModelState {
        &self.base
    }

    pub fn registry(&self) -> &BTreeMap<String, ClientRecord> {
        &self.registry
    }

    fn log(&mut self, action: AuditAction, clients: Vec<String>, parameter_sets: usize) {
        self.audit.push(AuditEvent {
            seq: self.audit.len(),
            action,
            clients,
            parameter_sets,
            instances_transferred: 0,
        });
    }

    /// Accepts a client checkpoint after checking it descends from the base.
    /// A second registration under the same id replaces the first.
    pub fn register(&mut self, record: ClientRecord) -> Result<()> {
        self.base.params().check_compatible(&record.checkpoint)?;
        self.log(AuditAction::Register, vec![record.client_id.clone()], 1);
        self.registry.insert(record.client_id.clone(), record);
        Ok(())
    }

    pub fn model_of(&self, client_id: &str) -> Result<ModelState> {
        let rec = self
            .registry
            .get(client_id)
            .ok_or_else(|| Error::UnknownClient(client_id.to_string()))?;
        self.base.with_params(rec.checkpoint.clone())
    }

    /// Fuses the job's checkpoints and optionally finetunes the result at
    /// the client named by `job.finetune`, which must be in `sites`.
    pub fn run_fusion(&mut self, job: &FusionJob, sites: &[&dyn FinetuneSite]) -> Result<FusionOutcome> {
        let (outcome, events) = self.execute(job, sites)?;
        self.append(events);
        Ok(outcome)
    }

    /// [`Coordinator::run_fusion`] over many jobs in parallel. Audit events
    /// are appended in job order.
    pub fn run_fusion_batch(&mut self, jobs: &[FusionJob], sites: &[&dyn FinetuneSite]) -> Result<Vec<FusionOutcome>> {
        let results = jobs
            .par_iter()
            .map(|job| self.execute(job, sites))
            .collect::<Result<Vec<_>>>()?;
        Ok(results
            .into_iter()
            .map(|(outcome, events)| {
                self.append(events);
                outcome
            })
            .collect())
    }

    fn append(&mut self, events: Vec<(AuditAction, Vec<String>, usize)>) {
        for (action, clients, n) in events {
            self.log(action, clients, n);
        }
    }

    fn execute(
        &self,
        job: &FusionJob,
        sites: &[&dyn FinetuneSite],
    ) -> Result<(FusionOutcome, Vec<(AuditAction, Vec<String>, usize)>)> {
        if job.clients.len() < 2 {
            return Err(Error::TooFewClients(job.clients.len()));
        }
        let sets = job
            .clients
            .iter()
            .map(|id| {
                self.registry
                    .get(id)
                    .map(|r| r.checkpoint.clone())
                    .ok_or_else(|| Error::UnknownClient(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let fused = self.base.with_params(elementwise_mean(&sets)?)?;
        let mut events = vec![(AuditAction::Fuse, job.clients.clone(), sets.len())];

        let finetuned = match &job.finetune {
            None => None,
            Some(target) => {
                if !self.registry.contains_key(target) {
                    return Err(Error::UnknownClient(target.clone()));
                }
                let site = sites
                    .iter()
                    .find(|s| s.site_id() == target)
                    .ok_or_else(|| Error::UnknownClient(target.clone()))?;
                events.push((AuditAction::DispatchForFinetune, vec![target.clone()], 1));
                let (model, log) = site.finetune(&fused, job.seed)?;
                self.base.params().check_compatible(model.params())?;
                events.push((AuditAction::ReceiveFinetuned, vec![target.clone()], 1));
                Some((model, log))
            }
        };
        Ok((FusionOutcome { fused, finetuned }, events))
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit
    }

    pub fn instances_transferred(&self) -> usize {
        self.audit.iter().map(|e| e.instances_transferred).sum()
    }

    pub fn audit_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.audit {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("event serializes"));
        }
        out
    }
}
