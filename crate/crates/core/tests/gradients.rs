mod common;

use common::*;

#[test]
fn analytic_gradients_match_central_differences() {
    let samples = finite_difference_samples(300, 7);
    let mut worst = 0.0f64;
    for s in &samples {
        worst = worst.max(s.rel_error());
        assert!(
            s.rel_error() <= 1e-3,
            "{}[{}]: analytic {} vs numeric {} (rel {})",
            s.name,
            s.index,
            s.analytic,
            s.numeric,
            s.rel_error()
        );
    }
    eprintln!("worst relative error over {} coords: {worst:.3e}", samples.len());
}
