/// Outcome of feeding one evaluation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Strictly below every previous loss.
    Improved,
    /// Not an improvement; training continues.
    NoImprovement { streak: usize },
    /// `patience` consecutive evaluations without improvement.
    Stop,
}

/// Patience counter over evaluation losses. Ties count as no improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    streak: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            patience,
            best: None,
            streak: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, loss: f64) -> Observation {
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.streak = 0;
            return Observation::Improved;
        }
        self.streak += 1;
        if self.streak >= self.patience {
            Observation::Stop
        } else {
            Observation::NoImprovement {
                streak: self.streak,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stop_index(losses: &[f64], patience: usize) -> Option<usize> {
        let mut es = EarlyStopping::new(patience);
        losses.iter().position(|&l| es.observe(l) == Observation::Stop)
    }

    #[test]
    fn rising_losses_stop_on_fourth() {
        assert_eq!(stop_index(&[1.0, 1.1, 1.2, 1.3], 3), Some(3));
    }

    #[test]
    fn improvement_resets_streak() {
        assert_eq!(stop_index(&[1.0, 1.1, 1.2, 0.9, 1.0, 1.0, 1.0], 3), Some(6));
        assert_eq!(stop_index(&[1.0, 1.1, 0.5, 0.6, 0.4], 2), None);
    }

    #[test]
    fn ties_do_not_improve() {
        assert_eq!(stop_index(&[1.0, 1.0], 1), Some(1));
    }

    #[test]
    fn never_before_patience_plus_one() {
        for patience in 1..6 {
            let flat = vec![2.0; 20];
            assert_eq!(stop_index(&flat, patience), Some(patience));
        }
    }
}
