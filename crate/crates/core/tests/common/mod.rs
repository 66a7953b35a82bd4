#![allow(dead_code)]

use fedfuse_core::label::Label;
use fedfuse_core::model::{ModelArchitecture, ModelState, TokenSequence};
use fedfuse_core::tensor::{ParameterSet, Tensor};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FD_EPS: f32 = 1e-3;
pub const REL_FLOOR: f64 = 1e-6;

pub fn pinned_arch() -> ModelArchitecture {
    ModelArchitecture {
        vocab_size: 40,
        embed_dim: 8,
        num_heads: 2,
        num_encoder_layers: 2,
        max_seq_len: 8,
        num_labels: 2,
    }
}

/// Tiny model with O(0.3) random parameters so every gradient path is active.
pub fn pinned_model() -> ModelState {
    let arch = pinned_arch();
    let base = ModelState::init(arch.clone(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let mut params = ParameterSet::new(base.params().base_id(), base.params().arch_hash());
    for (name, t) in base.params().iter() {
        let offset = if name.ends_with(".gamma") { 1.0 } else { 0.0 };
        let data = (0..t.len())
            .map(|_| offset + normal.sample(&mut rng) as f32)
            .collect();
        params.insert(name.clone(), Tensor::new(t.shape().to_vec(), data).unwrap());
    }
    ModelState::from_params(arch, params).unwrap()
}

pub fn pinned_batch(model: &ModelState) -> Vec<(TokenSequence, Label)> {
    let arch = model.arch();
    [
        (vec![0, 3, 17, 5, 9], Label::Off),
        (vec![0, 22, 3], Label::Not),
        (vec![0, 1, 2, 3, 4, 5, 6, 39], Label::Off),
        (vec![0, 30], Label::Not),
    ]
    .into_iter()
    .map(|(ids, l)| (TokenSequence::new(ids, arch).unwrap(), l))
    .collect()
}

pub struct FdSample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl FdSample {
    /// Relative error with the denominator floored at [`REL_FLOOR`], so
    /// coordinates whose true gradient is exactly zero (e.g. attention key
    /// biases) are judged on absolute error.
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(REL_FLOOR);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Central differences on `count` distinct random coordinates. Embedding coordinates
/// are drawn only from rows the batch touches.
pub fn finite_difference_samples(count: usize, seed: u64) -> Vec<FdSample> {
    let model = pinned_model();
    let batch = pinned_batch(&model);
    let (_, grads) = model.loss_and_gradients(&batch).unwrap();
    let d = model.arch().embed_dim;

    let mut used: Vec<u32> = batch.iter().flat_map(|(s, _)| s.ids().to_vec()).collect();
    used.sort();
    used.dedup();

    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, t) in model.params().iter() {
        if name == "embed.tokens" {
            for &id in &used {
                coords.extend((0..d).map(|j| (name.clone(), id as usize * d + j)));
            }
        } else {
            coords.extend((0..t.len()).map(|i| (name.clone(), i)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for (name, index) in coords.choose_multiple(&mut rng, count).cloned() {
        let original = model.params().get(&name).unwrap().data()[index];
        let loss_at = |v: f32| -> (f64, f32) {
            let mut p = model.params().clone();
            p.get_mut(&name).unwrap().data_mut()[index] = v;
            let m = model.with_params(p).unwrap();
            (m.mean_loss(&batch).unwrap(), v)
        };
        let (up, vp) = loss_at(original + FD_EPS);
        let (down, vm) = loss_at(original - FD_EPS);
        let numeric = (up - down) / (vp as f64 - vm as f64);
        let analytic = grads.get(&name).unwrap().data()[index] as f64;
        out.push(FdSample {
            name,
            index,
            analytic,
            numeric,
        });
    }
    out
}
