use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// Precision, recall and F1 for one class. Zero denominators give 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    /// Indexed by [`Label::index`].
    pub per_class: [ClassScores; 2],
}

impl F1Report {
    pub fn class(&self, label: Label) -> ClassScores {
        self.per_class[label.index()]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of the per-class F1 scores over NOT and OFF.
pub fn macro_f1(gold: &[Label], pred: &[Label]) -> Result<F1Report> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut confusion = [[0usize; 2]; 2];
    for (g, p) in gold.iter().zip(pred) {
        confusion[g.index()][p.index()] += 1;
    }
    let per_class = Label::ALL.map(|c| {
        let k = c.index();
        let tp = confusion[k][k];
        let predicted = confusion[0][k] + confusion[1][k];
        let actual = confusion[k][0] + confusion[k][1];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores { precision, recall, f1 }
    });
    Ok(F1Report {
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Not, Off};

    #[test]
    fn hand_computed_fixture() {
        let r = macro_f1(&[Off, Off, Not, Not], &[Off, Not, Not, Not]).unwrap();
        let off = r.class(Off);
        let not = r.class(Not);
        assert!((off.precision - 1.0).abs() < 1e-12);
        assert!((off.recall - 0.5).abs() < 1e-12);
        assert!((off.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((not.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((not.recall - 1.0).abs() < 1e-12);
        assert!((not.f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - 0.733_333_333_333_333_3).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_degenerate() {
        let gold = [Off, Not, Not, Off, Not];
        assert_eq!(macro_f1(&gold, &gold).unwrap().macro_f1, 1.0);
        // gold balanced, all OFF: OFF P=0.5 R=1 F1=2/3, NOT all zero
        let r = macro_f1(&[Off, Off, Not, Not], &[Off; 4]).unwrap();
        assert_eq!(r.class(Not), ClassScores::default());
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(macro_f1(&[Off], &[]), Err(Error::LengthMismatch(1, 0))));
        assert!(matches!(macro_f1(&[], &[]), Err(Error::EmptyInput)));
    }
}
