use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::{ModelState, Probs, TokenSequence};

/// One arbitrated ensemble prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// One `[p_NOT, p_OFF]` per model, in input order.
    pub probs: Vec<[f64; 2]>,
    pub label: Label,
    pub winning_model: usize,
    pub winning_prob: f64,
}

/// Picks the `(model, class)` pair with the highest probability. Ties go to
/// the lower model index, then to NOT.
pub fn arbitrate(id: impl Into<String>, probs: &[Probs]) -> Result<PredictionRecord> {
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = (0, Label::Not, f64::NEG_INFINITY);
    for (m, p) in probs.iter().enumerate() {
        for label in Label::ALL {
            let v = p.get(label);
            if v > best.2 {
                best = (m, label, v);
            }
        }
    }
    Ok(PredictionRecord {
        id: id.into(),
        probs: probs.iter().map(|p| p.0).collect(),
        label: best.1,
        winning_model: best.0,
        winning_prob: best.2,
    })
}

fn check_models(models: &[ModelState]) -> Result<()> {
    let first = models.first().ok_or(Error::EmptyInput)?;
    for m in &models[1..] {
        if m.arch() != first.arch() {
            return Err(Error::ShapeMismatch(format!(
                "ensemble members disagree on architecture: {} vs {}",
                first.arch().hash(),
                m.arch().hash()
            )));
        }
    }
    Ok(())
}

pub fn ensemble_predict(models: &[ModelState], id: &str, seq: &TokenSequence) -> Result<PredictionRecord> {
    check_models(models)?;
    let probs = models.iter().map(|m| m.forward(seq)).collect::<Result<Vec<_>>>()?;
    arbitrate(id, &probs)
}

/// [`ensemble_predict`] over many instances; `ids` and `seqs` pair up.
pub fn ensemble_predict_batch(
    models: &[ModelState],
    ids: &[String],
    seqs: &[TokenSequence],
) -> Result<Vec<PredictionRecord>> {
    check_models(models)?;
    if ids.len() != seqs.len() {
        return Err(Error::LengthMismatch(ids.len(), seqs.len()));
    }
    let per_model = models
        .iter()
        .map(|m| m.forward_batch(seqs))
        .collect::<Result<Vec<_>>>()?;
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let probs: Vec<Probs> = per_model.iter().map(|p| p[i]).collect();
            arbitrate(id.clone(), &probs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_probability_wins() {
        let r = arbitrate("x", &[Probs([0.6, 0.4]), Probs([0.1, 0.9])]).unwrap();
        assert_eq!(r.label, Label::Off);
        assert_eq!(r.winning_model, 1);
        assert_eq!(r.winning_prob, 0.9);
    }

    #[test]
    fn ties() {
        let r = arbitrate("x", &[Probs([0.5, 0.5])]).unwrap();
        assert_eq!(r.label, Label::Not);
        let r = arbitrate("x", &[Probs([0.2, 0.8]), Probs([0.8, 0.2])]).unwrap();
        assert_eq!((r.winning_model, r.label), (0, Label::Off));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(arbitrate("x", &[]).is_err());
        let seq = TokenSequence::new(vec![0], &crate::model::ModelArchitecture::default()).unwrap();
        assert!(ensemble_predict(&[], "x", &seq).is_err());
    }
}
