//! Evaluation: Macro F1, the max-probability ensemble baseline, multi-run
//! aggregation and report rendering.

mod aggregate;
mod ensemble;
mod metrics;
mod report;

pub use aggregate::{aggregate_runs, Aggregate};
pub use ensemble::{arbitrate, ensemble_predict, ensemble_predict_batch, PredictionRecord};
pub use metrics::{macro_f1, ClassScores, F1Report};
pub use report::{
    render_report, write_report, Approach, EvaluationReport, RenderedReport, ReportBuilder, ReportRow, RowKey,
};

use crate::data::LabeledInstance;
use crate::error::Result;
use crate::label::Label;
use crate::model::ModelState;

/// Macro F1 of a single model's argmax predictions on `rows`.
pub fn evaluate_model(model: &ModelState, rows: &[LabeledInstance]) -> Result<F1Report> {
    let seqs: Vec<_> = rows.iter().map(|r| model.tokenize(&r.text)).collect();
    let pred: Vec<Label> = model.forward_batch(&seqs)?.iter().map(|p| p.argmax()).collect();
    let gold: Vec<Label> = rows.iter().map(|r| r.label).collect();
    macro_f1(&gold, &pred)
}

/// Macro F1 of the ensemble of `models` on `rows`.
pub fn evaluate_ensemble(models: &[ModelState], rows: &[LabeledInstance]) -> Result<(F1Report, Vec<PredictionRecord>)> {
    let first = models.first().ok_or(crate::error::Error::EmptyInput)?;
    let seqs: Vec<_> = rows.iter().map(|r| first.tokenize(&r.text)).collect();
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let preds = ensemble_predict_batch(models, &ids, &seqs)?;
    let gold: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let pred: Vec<Label> = preds.iter().map(|p| p.label).collect();
    Ok((macro_f1(&gold, &pred)?, preds))
}
