//! Labeled corpora harmonized to the binary OFF/NOT taxonomy.

mod adapters;
mod canonical;
mod split;
mod stats;
pub mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use adapters::{ingest, ingest_file, Adapter, LabelMapping};
pub use canonical::{read_canonical_tsv, to_canonical_tsv, write_canonical_tsv, write_dataset_dir};
pub use split::{stratified_split, stratified_subsample};
pub use stats::{render_stats_markdown, stats, DatasetStats};

use crate::error::{Error, Result};
use crate::label::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub source: String,
}

impl LabeledInstance {
    /// Trims the text; `None` when nothing is left.
    pub fn new(
        id: impl Into<String>,
        text: &str,
        label: Label,
        source: impl Into<String>,
    ) -> Option<Self> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        Some(Self {
            id: id.into(),
            text: text.to_string(),
            label,
            source: source.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalDataset {
    pub name: String,
    pub train: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

impl CanonicalDataset {
    /// Checks that ids are unique across both splits.
    pub fn new(
        name: impl Into<String>,
        train: Vec<LabeledInstance>,
        test: Vec<LabeledInstance>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in train.iter().chain(&test) {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            train,
            test,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.test.is_empty()
    }
}

pub fn label_counts(instances: &[LabeledInstance]) -> [usize; 2] {
    let mut counts = [0; 2];
    for i in instances {
        counts[i.label.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_text_is_rejected() {
        assert!(LabeledInstance::new("a", "  \t", Label::Off, "x").is_none());
        let i = LabeledInstance::new("a", "  hi  ", Label::Off, "x").unwrap();
        assert_eq!(i.text, "hi");
    }

    #[test]
    fn split_ids_must_be_disjoint() {
        let a = LabeledInstance::new("1", "x", Label::Not, "s").unwrap();
        assert!(matches!(
            CanonicalDataset::new("d", vec![a.clone()], vec![a]),
            Err(Error::DuplicateId(_))
        ));
    }
}
