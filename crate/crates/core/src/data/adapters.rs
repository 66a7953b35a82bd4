//! Readers for each corpus' native layout plus the label tables that map
//! every source taxonomy onto OFF/NOT.
//!
//! | adapter      | delimiter       | id column            | text column      | label column        | labels (→ OFF / → NOT)              |
//! |--------------|-----------------|----------------------|------------------|---------------------|-------------------------------------|
//! | `ahsd`       | `,`             | unnamed first column | `tweet`          | `class`             | hate (0), offensive (1) / neither (2) |
//! | `olid`       | tab             | `id`                 | `tweet`          | `subtask_a`         | OFF / NOT                           |
//! | `hasoc`      | `,` (tab for .tsv) | `tweet_id`, `text_id` | `text`        | `task1`, `task_1`   | HOF / NOT                           |
//! | `hatexplain` | `,`             | `post_id`            | `text`           | `label`             | hatespeech, offensive / normal      |
//! | `offendes`   | `,`             | `comment_id`, `id`   | `comment`        | `label`             | OFP, OFG, OFO, NOE / NO             |
//! | `canonical`  | tab             | `id`                 | `text`           | `label`             | OFF / NOT                           |
//!
//! A directory is read as `train.<ext>` plus an optional `test.<ext>`; a
//! single file is read as a training split with no test split.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::canonical::read_canonical_tsv;
use crate::data::{label_counts, CanonicalDataset, LabeledInstance};
use crate::error::{Error, Result};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adapter {
    Ahsd,
    Olid,
    Hasoc,
    HateXplain,
    OffendEs,
    Canonical,
}

/// Source label → OFF/NOT, total over the adapter's published taxonomy.
#[derive(Debug, Clone, Copy)]
pub struct LabelMapping {
    /// `(source label, aliases, target)`; matching ignores ASCII case.
    pub entries: &'static [(&'static str, &'static [&'static str], Label)],
}

impl LabelMapping {
    pub fn map(&self, raw: &str) -> Option<Label> {
        let raw = raw.trim();
        self.entries
            .iter()
            .find(|(name, aliases, _)| {
                name.eq_ignore_ascii_case(raw) || aliases.iter().any(|a| a.eq_ignore_ascii_case(raw))
            })
            .map(|(_, _, l)| *l)
    }

    pub fn taxonomy(&self) -> impl Iterator<Item = &'static str> {
        self.entries.iter().map(|(n, _, _)| *n)
    }
}

const AHSD_LABELS: LabelMapping = LabelMapping {
    entries: &[
        ("Hate", &["0", "hate speech", "hate_speech"], Label::Off),
        ("Offensive", &["1", "offensive language", "offensive_language"], Label::Off),
        ("Neither", &["2"], Label::Not),
    ],
};

const OLID_LABELS: LabelMapping = LabelMapping {
    entries: &[("OFF", &[], Label::Off), ("NOT", &[], Label::Not)],
};

const HASOC_LABELS: LabelMapping = LabelMapping {
    entries: &[("HOF", &[], Label::Off), ("NOT", &[], Label::Not)],
};

const HATEXPLAIN_LABELS: LabelMapping = LabelMapping {
    entries: &[
        ("hatespeech", &["hate speech", "hate_speech"], Label::Off),
        ("offensive", &[], Label::Off),
        ("normal", &[], Label::Not),
    ],
};

const OFFENDES_LABELS: LabelMapping = LabelMapping {
    entries: &[
        ("OFP", &[], Label::Off),
        ("OFG", &[], Label::Off),
        ("OFO", &[], Label::Off),
        ("NOE", &[], Label::Off),
        ("NO", &[], Label::Not),
    ],
};

struct Schema {
    delimiter: u8,
    id: &'static [&'static str],
    text: &'static [&'static str],
    label: &'static [&'static str],
}

impl Adapter {
    pub const ALL: [Adapter; 6] = [
        Adapter::Ahsd,
        Adapter::Olid,
        Adapter::Hasoc,
        Adapter::HateXplain,
        Adapter::OffendEs,
        Adapter::Canonical,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Adapter::Ahsd => "ahsd",
            Adapter::Olid => "olid",
            Adapter::Hasoc => "hasoc",
            Adapter::HateXplain => "hatexplain",
            Adapter::OffendEs => "offendes",
            Adapter::Canonical => "canonical",
        }
    }

    pub fn label_mapping(self) -> LabelMapping {
        match self {
            Adapter::Ahsd => AHSD_LABELS,
            Adapter::Olid => OLID_LABELS,
            Adapter::Hasoc => HASOC_LABELS,
            Adapter::HateXplain => HATEXPLAIN_LABELS,
            Adapter::OffendEs => OFFENDES_LABELS,
            Adapter::Canonical => OLID_LABELS,
        }
    }

    /// Platforms the original corpus was collected from.
    pub fn data_sources(self) -> &'static str {
        match self {
            Adapter::Ahsd | Adapter::Olid => "Twitter",
            Adapter::Hasoc => "Twitter, Facebook",
            Adapter::HateXplain => "Twitter, Gab",
            Adapter::OffendEs => "Instagram, Twitter, YouTube",
            Adapter::Canonical => "-",
        }
    }

    /// Delimiter for a file with extension `ext` (native files only).
    fn schema(self, ext: &str) -> Schema {
        let tab_if_tsv = if ext.eq_ignore_ascii_case("tsv") { b'\t' } else { b',' };
        match self {
            Adapter::Ahsd => Schema {
                delimiter: b',',
                id: &["", "id"],
                text: &["tweet"],
                label: &["class"],
            },
            Adapter::Olid => Schema {
                delimiter: b'\t',
                id: &["id"],
                text: &["tweet"],
                label: &["subtask_a"],
            },
            Adapter::Hasoc => Schema {
                delimiter: tab_if_tsv,
                id: &["tweet_id", "text_id", "id"],
                text: &["text"],
                label: &["task1", "task_1"],
            },
            Adapter::HateXplain => Schema {
                delimiter: b',',
                id: &["post_id", "id"],
                text: &["text"],
                label: &["label"],
            },
            Adapter::OffendEs => Schema {
                delimiter: b',',
                id: &["comment_id", "id"],
                text: &["comment", "text"],
                label: &["label"],
            },
            Adapter::Canonical => Schema {
                delimiter: b'\t',
                id: &["id"],
                text: &["text"],
                label: &["label"],
            },
        }
    }
}

impl fmt::Display for Adapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Adapter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Adapter::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownAdapter(s.to_string()))
    }
}

fn find_column(headers: &csv::StringRecord, aliases: &[&str]) -> Option<usize> {
    aliases.iter().find_map(|alias| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(alias))
    })
}

/// Reads one split file with `adapter`'s native layout.
pub fn ingest_file(path: &Path, adapter: Adapter, split: &str) -> Result<Vec<LabeledInstance>> {
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if adapter == Adapter::Canonical {
        return read_canonical_tsv(&contents);
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    parse_native(&contents, adapter, ext, split)
}

fn parse_native(contents: &str, adapter: Adapter, ext: &str, split: &str) -> Result<Vec<LabeledInstance>> {
    let schema = adapter.schema(ext);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .quoting(schema.delimiter != b'\t')
        .from_reader(contents.as_bytes());
    let headers = reader.headers()?.clone();
    let text_col = find_column(&headers, schema.text)
        .ok_or_else(|| Error::MissingColumn(schema.text[0].to_string()))?;
    let label_col = find_column(&headers, schema.label)
        .ok_or_else(|| Error::MissingColumn(schema.label[0].to_string()))?;
    let id_col = find_column(&headers, schema.id);
    let mapping = adapter.label_mapping();

    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(row + 2);
            Error::MalformedRow {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let field = |col: usize| {
            record.get(col).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("missing field {col}"),
            })
        };
        let raw_label = field(label_col)?;
        let label = mapping.map(raw_label).ok_or_else(|| Error::UnknownLabel {
            adapter: adapter.tag().to_string(),
            label: raw_label.to_string(),
        })?;
        let id = match id_col.map(field).transpose()?.map(str::trim) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("{}-{split}-{row}", adapter.tag()),
        };
        match LabeledInstance::new(id, field(text_col)?, label, adapter.tag()) {
            Some(inst) => out.push(inst),
            None => log::warn!("{} line {line}: empty text, row skipped", adapter.tag()),
        }
    }
    Ok(out)
}

fn find_split_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["tsv", "csv", "txt"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Reads a corpus and harmonizes its labels.
///
/// `path` is either a directory holding `train.*` and optionally `test.*`,
/// or a single file taken as the training split.
pub fn ingest(path: impl AsRef<Path>, adapter: Adapter) -> Result<CanonicalDataset> {
    let path = path.as_ref();
    let (train, test) = if path.is_dir() {
        let train_path = find_split_file(path, "train").ok_or_else(|| {
            Error::io(path.join("train.tsv"), std::io::ErrorKind::NotFound.into())
        })?;
        let train = ingest_file(&train_path, adapter, "train")?;
        let test = match find_split_file(path, "test") {
            Some(p) => ingest_file(&p, adapter, "test")?,
            None => Vec::new(),
        };
        (train, test)
    } else {
        (ingest_file(path, adapter, "train")?, Vec::new())
    };
    let ds = CanonicalDataset::new(adapter.tag(), train, test)?;
    let [tn, to] = label_counts(&ds.train);
    let [sn, so] = label_counts(&ds.test);
    log::info!(
        "ingested {}: train NOT={tn} OFF={to}, test NOT={sn} OFF={so}",
        path.display()
    );
    Ok(ds)
}
