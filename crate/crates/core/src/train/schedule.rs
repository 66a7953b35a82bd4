use serde::{Deserialize, Serialize};

/// What happens to the learning rate once warmup is over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrDecay {
    /// Hold at the base rate.
    #[default]
    Constant,
    /// Decay linearly to zero at the last step.
    Linear,
}

/// Number of warmup steps: `ceil(warmup_fraction * total_steps)`, at least 1.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    // slack absorbs products such as 0.1 * 30 = 3.0000000000000004
    ((warmup_fraction * total_steps as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Learning rate for 1-based `step` out of `total_steps`.
pub fn lr_at_step(
    step: usize,
    total_steps: usize,
    base_lr: f64,
    warmup_fraction: f64,
    decay: LrDecay,
) -> f64 {
    let w = warmup_steps(total_steps, warmup_fraction);
    if step <= w {
        return base_lr * (step as f64 / w as f64);
    }
    match decay {
        LrDecay::Constant => base_lr,
        LrDecay::Linear => {
            let left = total_steps.saturating_sub(step) as f64;
            let span = total_steps.saturating_sub(w).max(1) as f64;
            base_lr * left / span
        }
    }
}
