//! Canonical interchange format: UTF-8 TSV with header
//! `id<TAB>text<TAB>label<TAB>source`, label in {NOT, OFF}.
//! Backslash, tab, CR and newline inside fields are escaped as
//! `\\`, `\t`, `\r` and `\n`.

use std::fs;
use std::path::Path;

use crate::data::{CanonicalDataset, LabeledInstance};
use crate::error::{Error, Result};

pub const HEADER: &str = "id\ttext\tlabel\tsource";

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("bad escape sequence `\\{}`", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

pub fn to_canonical_tsv(instances: &[LabeledInstance]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for i in instances {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            escape(&i.id),
            escape(&i.text),
            i.label,
            escape(&i.source)
        ));
    }
    out
}

pub fn write_canonical_tsv(instances: &[LabeledInstance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, to_canonical_tsv(instances)).map_err(|e| Error::io(path, e))
}

/// Writes `train.tsv` and `test.tsv` under `dir`.
pub fn write_dataset_dir(ds: &CanonicalDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_canonical_tsv(&ds.train, dir.join("train.tsv"))?;
    write_canonical_tsv(&ds.test, dir.join("test.tsv"))
}

/// Parses canonical TSV text. Blank-text rows are skipped with a warning.
pub fn read_canonical_tsv(contents: &str) -> Result<Vec<LabeledInstance>> {
    let mut lines = contents.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        Some(_) => return Err(Error::MissingColumn("canonical header `id text label source`".into())),
        None => return Ok(Vec::new()),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let label = fields[2].parse().map_err(|reason| Error::MalformedRow { line, reason })?;
        let id = unescape(fields[0], line)?;
        let text = unescape(fields[1], line)?;
        match LabeledInstance::new(id, &text, label, unescape(fields[3], line)?) {
            Some(inst) => out.push(inst),
            None => log::warn!("line {line}: empty text, row skipped"),
        }
    }
    Ok(out)
}
