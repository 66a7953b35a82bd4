use crate::error::Result;
use crate::tensor::ParameterSet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: ParameterSet,
    second: ParameterSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> Result<()> {
        params.check_compatible(grads)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let p = p.data_mut();
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                let gi = gi as f64;
                let mi = BETA1 * m[i] as f64 + (1.0 - BETA1) * gi;
                let vi = BETA2 * v[i] as f64 + (1.0 - BETA2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                if mi == 0.0 && vi == 0.0 {
                    continue;
                }
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
                p[i] = (p[i] as f64 - update) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar(v: f32) -> ParameterSet {
        let mut p = ParameterSet::new("b", "a");
        p.insert("x", Tensor::new(vec![1], vec![v]).unwrap());
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &scalar(0.5), 0.1).unwrap();
        assert!((p.get("x").unwrap().data()[0] - 0.9).abs() < 1e-6);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn minimizes_convex_probe() {
        // f(x) = (x - 3)^2
        let mut p = scalar(-2.0);
        let mut adam = AdamState::new(&p);
        let f = |x: f32| (x as f64 - 3.0).powi(2);
        let start = f(-2.0);
        for _ in 0..100 {
            let x = p.get("x").unwrap().data()[0];
            adam.update(&mut p, &scalar(2.0 * (x - 3.0)), 0.1).unwrap();
        }
        let end = f(p.get("x").unwrap().data()[0]);
        assert!(end < start * 0.5, "{start} -> {end}");
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &scalar(0.0), 0.1).unwrap();
        assert_eq!(p.get("x").unwrap().data()[0], 1.0);
    }
}
