use serde::{Deserialize, Serialize};

/// Mean and population standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Absent for a single run.
    pub std: Option<f64>,
}

impl Aggregate {
    /// `m±s` to two decimals, or just `m` without a spread.
    pub fn render(&self) -> String {
        match self.std {
            Some(s) => format!("{:.2}±{:.2}", self.mean, s),
            None => format!("{:.2}", self.mean),
        }
    }
}

/// # Panics
/// On an empty slice.
pub fn aggregate_runs(scores: &[f64]) -> Aggregate {
    assert!(!scores.is_empty(), "aggregate_runs needs at least one score");
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.len() > 1).then(|| {
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        var.sqrt()
    });
    Aggregate { mean, std }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors() {
        assert_eq!(aggregate_runs(&[0.8]), Aggregate { mean: 0.8, std: None });
        let a = aggregate_runs(&[0.7, 0.9]);
        assert!((a.mean - 0.8).abs() < 1e-12);
        assert!((a.std.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(a.render(), "0.80±0.10");
        assert_eq!(aggregate_runs(&[0.5, 0.5, 0.5]).std, Some(0.0));
    }
}
