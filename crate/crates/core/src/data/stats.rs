use serde::Serialize;

use crate::data::{label_counts, CanonicalDataset, LabeledInstance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub train_count: usize,
    pub test_count: usize,
    /// OFF share of the training split, as a fraction in [0, 1].
    pub train_off_fraction: f64,
    pub test_off_fraction: f64,
    pub empty: bool,
}

impl DatasetStats {
    /// `(train, test)` OFF fractions rendered to two decimals.
    pub fn rounded_fractions(&self) -> (String, String) {
        (
            format!("{:.2}", self.train_off_fraction),
            format!("{:.2}", self.test_off_fraction),
        )
    }
}

fn off_fraction(split: &[LabeledInstance]) -> f64 {
    if split.is_empty() {
        return 0.0;
    }
    label_counts(split)[1] as f64 / split.len() as f64
}

pub fn stats(ds: &CanonicalDataset) -> DatasetStats {
    DatasetStats {
        name: ds.name.clone(),
        train_count: ds.train.len(),
        test_count: ds.test.len(),
        train_off_fraction: off_fraction(&ds.train),
        test_off_fraction: off_fraction(&ds.test),
        empty: ds.is_empty(),
    }
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Markdown table with one row per dataset: instance counts and OFF share
/// for both splits, plus the data source column.
pub fn render_stats_markdown(rows: &[(DatasetStats, &str)]) -> String {
    let mut out = String::from(
        "| Dataset | Train Inst. | Train OFF % | Test Inst. | Test OFF % | Data Sources |\n\
         |---|---:|---:|---:|---:|---|\n",
    );
    for (s, sources) in rows {
        let (tr, te) = s.rounded_fractions();
        let name = if s.empty {
            format!("{} (empty)", s.name)
        } else {
            s.name.clone()
        };
        out.push_str(&format!(
            "| {name} | {} | {tr} | {} | {te} | {sources} |\n",
            thousands(s.train_count),
            thousands(s.test_count),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;

    fn split(n: usize, off: usize, tag: &str) -> Vec<LabeledInstance> {
        (0..n)
            .map(|i| {
                let l = if i < off { Label::Off } else { Label::Not };
                LabeledInstance::new(format!("{tag}{i}"), "t", l, "x").unwrap()
            })
            .collect()
    }

    #[test]
    fn empty_dataset() {
        let s = stats(&CanonicalDataset::new("e", vec![], vec![]).unwrap());
        assert!(s.empty);
        assert_eq!((s.train_count, s.test_count), (0, 0));
        assert_eq!(s.rounded_fractions(), ("0.00".to_string(), "0.00".to_string()));
        assert!(render_stats_markdown(&[(s, "-")]).contains("| e (empty) | 0 | 0.00 | 0 | 0.00 | - |"));
    }

    #[test]
    fn olid_sized_counts() {
        // 4,400 / 13,240 = 0.332; 240 / 860 = 0.279
        let ds = CanonicalDataset::new("OLID", split(13_240, 4_400, "a"), split(860, 240, "b")).unwrap();
        let s = stats(&ds);
        assert_eq!(s.rounded_fractions(), ("0.33".to_string(), "0.28".to_string()));
        let md = render_stats_markdown(&[(s, "Twitter")]);
        assert!(md.contains("| OLID | 13,240 | 0.33 | 860 | 0.28 | Twitter |"), "{md}");
    }

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(19_822), "19,822");
        assert_eq!(thousands(1_234_567), "1,234,567");
    }
}
