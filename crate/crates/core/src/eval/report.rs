use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{aggregate_runs, Aggregate, ClassScores, F1Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "non-fused")]
    NonFused,
    #[serde(rename = "fused")]
    Fused,
    #[serde(rename = "fused+FT")]
    FusedFt,
    #[serde(rename = "ensemble")]
    Ensemble,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::NonFused, Approach::Fused, Approach::FusedFt, Approach::Ensemble];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::NonFused => "non-fused",
            Approach::Fused => "fused",
            Approach::FusedFt => "fused+FT",
            Approach::Ensemble => "ensemble",
        }
    }

    fn is_fused(self) -> bool {
        matches!(self, Approach::Fused | Approach::FusedFt)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown approach `{s}`")))
    }
}

/// Identifies one report row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub approach: Approach,
    /// Client ids joined with `+`.
    pub models: String,
    pub finetune: Option<String>,
    pub test: String,
}

impl RowKey {
    pub fn new(approach: Approach, models: &[String], finetune: Option<&str>, test: &str) -> Self {
        Self {
            approach,
            models: models.join("+"),
            finetune: finetune.map(str::to_string),
            test: test.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub runs: usize,
    pub macro_f1: f64,
    pub std: Option<f64>,
    pub per_run: Vec<f64>,
    /// Per-class means over runs, indexed NOT then OFF.
    pub per_class: [ClassScores; 2],
}

impl ReportRow {
    pub fn aggregate(&self) -> Aggregate {
        Aggregate {
            mean: self.macro_f1,
            std: self.std,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    /// Rendered as footers.
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn row(&self, key: &RowKey) -> Option<&ReportRow> {
        self.rows.iter().find(|r| &r.key == key)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Collects per-run scores and folds them into an [`EvaluationReport`].
#[derive(Debug, Clone, Default)]
pub struct ReportBuilder {
    scores: BTreeMap<RowKey, Vec<F1Report>>,
    notes: Vec<String>,
}

impl ReportBuilder {
    pub fn add(&mut self, key: RowKey, score: F1Report) {
        self.scores.entry(key).or_default().push(score);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn build(self) -> EvaluationReport {
        let rows = self
            .scores
            .into_iter()
            .map(|(key, runs)| {
                let per_run: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
                let agg = aggregate_runs(&per_run);
                let n = runs.len() as f64;
                let per_class = [0, 1].map(|k| {
                    let mean = |f: fn(&ClassScores) -> f64| runs.iter().map(|r| f(&r.per_class[k])).sum::<f64>() / n;
                    ClassScores {
                        precision: mean(|c| c.precision),
                        recall: mean(|c| c.recall),
                        f1: mean(|c| c.f1),
                    }
                });
                ReportRow {
                    key,
                    runs: runs.len(),
                    macro_f1: agg.mean,
                    std: agg.std,
                    per_run,
                    per_class,
                }
            })
            .collect();
        EvaluationReport { rows, notes: self.notes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub summary_md: String,
    pub grid_md: String,
    pub results_json: String,
}

fn footer(out: &mut String, notes: &[String]) {
    if notes.is_empty() {
        return;
    }
    out.push_str("\nNotes:\n\n");
    for n in notes {
        let _ = writeln!(out, "- {n}");
    }
}

fn finetune_cell(key: &RowKey) -> &str {
    key.finetune.as_deref().unwrap_or("-")
}

/// Best row per test set and approach, each block sorted by Macro F1.
fn render_summary(report: &EvaluationReport) -> String {
    let mut best: BTreeMap<(&str, Approach), &ReportRow> = BTreeMap::new();
    for row in &report.rows {
        let slot = best.entry((&row.key.test, row.key.approach)).or_insert(row);
        if row.macro_f1 > slot.macro_f1 {
            *slot = row;
        }
    }
    let mut rows: Vec<&ReportRow> = best.into_values().collect();
    rows.sort_by(|a, b| {
        a.key
            .test
            .cmp(&b.key.test)
            .then(b.macro_f1.total_cmp(&a.macro_f1))
            .then_with(|| a.key.cmp(&b.key))
    });

    let mut out = String::from("# Best result per test set and approach\n\n");
    out.push_str("| Test set | Approach | Models | Finetuned on | Macro F1 |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.key.test,
            r.key.approach,
            r.key.models,
            finetune_cell(&r.key),
            r.aggregate().render()
        );
    }
    footer(&mut out, &report.notes);
    out
}

struct GridLine<'a> {
    label: String,
    cells: BTreeMap<&'a str, &'a ReportRow>,
    fused: bool,
    baseline_of: Option<&'a str>,
}

fn render_block(out: &mut String, title: &str, tests: &[&str], lines: &[GridLine<'_>]) {
    let _ = writeln!(out, "\n## {title}\n");
    let _ = writeln!(out, "| Models | {} |", tests.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(tests.len()));
    let best: BTreeMap<&str, f64> = tests
        .iter()
        .filter_map(|t| {
            lines
                .iter()
                .filter(|l| l.fused)
                .filter_map(|l| l.cells.get(t).map(|r| r.macro_f1))
                .max_by(f64::total_cmp)
                .map(|m| (*t, m))
        })
        .collect();
    for line in lines {
        let cells: Vec<String> = tests
            .iter()
            .map(|t| match line.cells.get(t) {
                None => "-".to_string(),
                Some(r) => {
                    let text = r.aggregate().render();
                    if line.fused && best.get(t) == Some(&r.macro_f1) {
                        format!("**{text}**")
                    } else if line.baseline_of == Some(*t) {
                        format!("<u>{text}</u>")
                    } else {
                        text
                    }
                }
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", line.label, cells.join(" | "));
    }
}

/// Full grid: one block per finetune dataset, then fused without
/// finetuning, ensembles and non-fused models. The best fused cell per test
/// column and block is bold; a non-fused model on its own test set is
/// underlined.
fn render_grid<'a>(report: &'a EvaluationReport) -> String {
    let tests: Vec<&str> = report
        .rows
        .iter()
        .map(|r| r.key.test.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut by_line: BTreeMap<(Approach, Option<&'a str>, &'a str), BTreeMap<&'a str, &'a ReportRow>> = BTreeMap::new();
    for r in &report.rows {
        by_line
            .entry((r.key.approach, r.key.finetune.as_deref(), r.key.models.as_str()))
            .or_default()
            .insert(r.key.test.as_str(), r);
    }
    let line = |approach: Approach, ft: Option<&str>, models: &'a str| -> Option<GridLine<'a>> {
        by_line.get(&(approach, ft, models)).map(|cells| GridLine {
            label: models.to_string(),
            cells: cells.clone(),
            fused: approach.is_fused(),
            baseline_of: (approach == Approach::NonFused).then_some(models),
        })
    };

    let mut out = String::from("# Macro F1 by model and test set\n");
    let ft_sets: BTreeSet<&str> = by_line
        .keys()
        .filter(|(a, _, _)| *a == Approach::FusedFt)
        .filter_map(|(_, ft, _)| *ft)
        .collect();
    for ft in ft_sets {
        let mut lines: Vec<GridLine<'_>> = by_line
            .keys()
            .filter(|(a, f, _)| *a == Approach::FusedFt && *f == Some(ft))
            .filter_map(|(a, f, m)| line(*a, *f, m))
            .collect();
        if let Some(mut base) = line(Approach::NonFused, None, ft) {
            base.label = format!("non-fused {ft}");
            lines.push(base);
        }
        render_block(&mut out, &format!("Fused and finetuned on {ft}"), &tests, &lines);
    }
    for (approach, title) in [
        (Approach::Fused, "Fused without finetuning"),
        (Approach::Ensemble, "Ensemble"),
        (Approach::NonFused, "Non-fused"),
    ] {
        let lines: Vec<GridLine<'_>> = by_line
            .keys()
            .filter(|(a, _, _)| *a == approach)
            .filter_map(|(a, f, m)| line(*a, *f, m))
            .collect();
        if !lines.is_empty() {
            render_block(&mut out, title, &tests, &lines);
        }
    }
    footer(&mut out, &report.notes);
    out
}

pub fn render_report(report: &EvaluationReport) -> RenderedReport {
    RenderedReport {
        summary_md: render_summary(report),
        grid_md: render_grid(report),
        results_json: report.to_json(),
    }
}

/// Writes `summary.md`, `grid.md` and `results.json` into `dir`.
pub fn write_report(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<RenderedReport> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rendered = render_report(report);
    for (name, body) in [
        ("summary.md", &rendered.summary_md),
        ("grid.md", &rendered.grid_md),
        ("results.json", &rendered.results_json),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::macro_f1;
    use crate::label::Label::{Not, Off};

    fn score(v: f64) -> F1Report {
        F1Report {
            macro_f1: v,
            per_class: [ClassScores::default(); 2],
        }
    }

    fn key(a: Approach, models: &str, test: &str) -> RowKey {
        RowKey {
            approach: a,
            models: models.into(),
            finetune: None,
            test: test.into(),
        }
    }

    #[test]
    fn empty_report_is_headers_only() {
        let r = render_report(&EvaluationReport::default());
        assert_eq!(
            r.summary_md,
            "# Best result per test set and approach\n\n\
             | Test set | Approach | Models | Finetuned on | Macro F1 |\n|---|---|---|---|---|\n"
        );
        assert_eq!(r.grid_md, "# Macro F1 by model and test set\n");
    }

    #[test]
    fn summary_orders_by_score() {
        let mut b = ReportBuilder::default();
        b.add(key(Approach::NonFused, "a", "a"), score(0.7));
        b.add(key(Approach::Fused, "a+b", "a"), score(0.9));
        let s = render_report(&b.build()).summary_md;
        let fused = s.find("| a | fused |").unwrap();
        let plain = s.find("| a | non-fused |").unwrap();
        assert!(fused < plain);
    }

    #[test]
    fn aggregates_runs() {
        let mut b = ReportBuilder::default();
        let k = key(Approach::NonFused, "a", "a");
        b.add(k.clone(), macro_f1(&[Off, Not], &[Off, Not]).unwrap());
        b.add(k.clone(), macro_f1(&[Off, Not], &[Off, Off]).unwrap());
        let report = b.build();
        let row = report.row(&k).unwrap();
        assert_eq!(row.runs, 2);
        assert!((row.macro_f1 - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(row.std.is_some());
        assert_eq!(EvaluationReport::from_json(&report.to_json()).unwrap(), report);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut b = ReportBuilder::default();
        let k = key(Approach::Fused, "a+b", "a");
        b.add(k.clone(), score(0.86));
        b.add(k, score(0.88));
        let json = b.build().to_json();
        assert_eq!(EvaluationReport::from_json(&json).unwrap().to_json(), json);
    }

    #[test]
    fn grid_marks_best_fused_and_baseline() {
        let mut b = ReportBuilder::default();
        let ft = |m: &str, t: &str| RowKey { finetune: Some("a".into()), ..key(Approach::FusedFt, m, t) };
        b.add(ft("a+b", "a"), score(0.8));
        b.add(ft("a+b+c", "a"), score(0.6));
        b.add(key(Approach::NonFused, "a", "a"), score(0.9));
        let g = render_report(&b.build()).grid_md;
        assert!(g.contains("| a+b | **0.80** |"), "{g}");
        assert!(g.contains("| a+b+c | 0.60 |"));
        assert!(g.contains("| non-fused a | <u>0.90</u> |"));
    }

    #[test]
    fn approach_names_round_trip() {
        for a in Approach::ALL {
            assert_eq!(a.as_str().parse::<Approach>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
    }
}
