//! Tiny transformer-encoder text classifier.
//!
//! Text is tokenized into hashed word ids, embedded with fixed sinusoidal
//! positions, passed through post-norm encoder layers, and the hidden vector
//! at the CLS position feeds a two-way softmax head.

mod arch;
pub(crate) mod encoder;
mod tokenizer;

pub use arch::ModelArchitecture;
pub use tokenizer::{split_words, token_hash, token_id, tokenize, TokenSequence, CLS_ID, TOKEN_HASH_SEED};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng::rng_for;
use crate::tensor::{ParameterSet, Tensor};

pub const INIT_STD: f64 = 0.02;

/// Class probabilities `[p(NOT), p(OFF)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probs(pub [f64; 2]);

impl Probs {
    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    /// Most probable label; ties go to NOT.
    pub fn argmax(&self) -> Label {
        if self.0[1] > self.0[0] {
            Label::Off
        } else {
            Label::Not
        }
    }
}

/// An architecture together with a parameter set laid out for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: ModelArchitecture,
    params: ParameterSet,
}

impl ModelState {
    /// Base initialization: N(0, 0.02) weights and embeddings, zero biases,
    /// unit layer-norm gains. The seed is recorded in the base id.
    pub fn init(arch: ModelArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut rng = rng_for(seed, "model-init");
        let mut params = ParameterSet::new(base_id_for_seed(seed), arch.hash());
        for (name, shape) in arch.parameter_shapes() {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".gamma") {
                vec![1.0; n]
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                vec![0.0; n]
            } else {
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            };
            params.insert(name, Tensor::new(shape, data)?);
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: ModelArchitecture, params: ParameterSet) -> Result<Self> {
        arch.validate()?;
        check_layout(&arch, &params)?;
        if let Some(name) = params.find_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    /// Replace the parameters, keeping the architecture.
    pub fn with_params(&self, params: ParameterSet) -> Result<Self> {
        Self::from_params(self.arch.clone(), params)
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, &self.arch)
    }

    fn check_seq(&self, seq: &TokenSequence) -> Result<()> {
        TokenSequence::new(seq.ids().to_vec(), &self.arch).map(|_| ())
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<Probs> {
        Ok(self.forward_batch(std::slice::from_ref(seq))?[0])
    }

    pub fn forward_batch(&self, seqs: &[TokenSequence]) -> Result<Vec<Probs>> {
        let weights = encoder::Weights::new(&self.arch, &self.params)?;
        seqs.iter()
            .map(|s| {
                self.check_seq(s)?;
                Ok(Probs(encoder::forward(&weights, s).probs))
            })
            .collect()
    }

    /// Mean cross-entropy over `batch`.
    pub fn mean_loss(&self, batch: &[(TokenSequence, Label)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let weights = encoder::Weights::new(&self.arch, &self.params)?;
        let mut total = 0.0;
        for (seq, label) in batch {
            self.check_seq(seq)?;
            let cache = encoder::forward(&weights, seq);
            total -= cache.probs[label.index()].ln();
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[(TokenSequence, Label)]) -> Result<(f64, ParameterSet)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let weights = encoder::Weights::new(&self.arch, &self.params)?;
        let mut grads = encoder::Grads::zeros(&self.arch);
        let mut total = 0.0;
        for (seq, label) in batch {
            self.check_seq(seq)?;
            let cache = encoder::forward(&weights, seq);
            total -= cache.probs[label.index()].ln();
            encoder::backward(&weights, &cache, label.index(), &mut grads);
        }
        let n = batch.len() as f64;
        let grads = grads.into_parameter_set(&self.arch, &self.params, 1.0 / n);
        Ok((total / n, grads))
    }
}

pub fn base_id_for_seed(seed: u64) -> String {
    format!("tiny-encoder/init-seed={seed}")
}

fn check_layout(arch: &ModelArchitecture, params: &ParameterSet) -> Result<()> {
    if params.arch_hash() != arch.hash() {
        return Err(Error::ShapeMismatch(format!(
            "parameter set was built for architecture {}, not {}",
            params.arch_hash(),
            arch.hash()
        )));
    }
    let expected = arch.parameter_shapes();
    if expected.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} tensors, found {}",
            expected.len(),
            params.len()
        )));
    }
    for (name, shape) in expected {
        let t = params.require(&name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "`{name}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> ModelArchitecture {
        ModelArchitecture {
            vocab_size: 50,
            embed_dim: 8,
            num_heads: 2,
            num_encoder_layers: 1,
            max_seq_len: 10,
            num_labels: 2,
        }
    }

    fn set_head(state: &mut ModelState, bias: [f32; 2]) {
        let d = state.arch.embed_dim;
        let p = state.params_mut();
        *p.get_mut("head.weight").unwrap() = Tensor::zeros(&[2, d]);
        *p.get_mut("head.bias").unwrap() = Tensor::new(vec![2], bias.to_vec()).unwrap();
    }

    #[test]
    fn init_is_deterministic_and_labeled() {
        let a = ModelState::init(small_arch(), 3).unwrap();
        let b = ModelState::init(small_arch(), 3).unwrap();
        let c = ModelState::init(small_arch(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        assert_eq!(a.params().base_id(), "tiny-encoder/init-seed=3");
        assert!(a.params().get("encoder.0.ln1.gamma").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(a.params().get("head.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        let mut s = ModelState::init(small_arch(), 1).unwrap();
        set_head(&mut s, [0.0, 0.0]);
        for text in ["", "hello there", "a b c d e f g h i j k"] {
            let p = s.forward(&s.tokenize(text)).unwrap();
            assert_eq!(p.0, [0.5, 0.5]);
        }
    }

    #[test]
    fn bias_only_head() {
        let mut s = ModelState::init(small_arch(), 1).unwrap();
        set_head(&mut s, [0.0, 10.0]);
        let p = s.forward(&s.tokenize("whatever")).unwrap();
        let expected = 1.0 / (1.0 + 10f64.exp());
        assert!((p.0[0] - expected).abs() < 1e-12);
        assert!((p.0[0] - 4.5e-5).abs() < 1e-6);
        assert!((p.0[1] - (1.0 - expected)).abs() < 1e-12);
    }

    #[test]
    fn uniform_loss_is_ln2() {
        let mut s = ModelState::init(small_arch(), 1).unwrap();
        set_head(&mut s, [0.0, 0.0]);
        let (loss, _) = s.loss_and_gradients(&[(s.tokenize("x"), Label::Off)]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let s = ModelState::init(small_arch(), 9).unwrap();
        let ex = (s.tokenize("some words here"), Label::Off);
        let (l1, g1) = s.loss_and_gradients(&[ex.clone()]).unwrap();
        let (l2, g2) = s.loss_and_gradients(&[ex.clone(), ex]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for ((n1, t1), (_, t2)) in g1.iter().zip(g2.iter()) {
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert!((a - b).abs() <= 1e-7 * a.abs().max(1e-12), "{n1}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_mirror_parameter_layout() {
        let s = ModelState::init(small_arch(), 2).unwrap();
        let (_, g) = s.loss_and_gradients(&[(s.tokenize("a b"), Label::Not)]).unwrap();
        assert!(g.is_compatible(s.params()));
    }

    #[test]
    fn rejects_mismatched_params() {
        let s = ModelState::init(small_arch(), 2).unwrap();
        let mut other = small_arch();
        other.embed_dim = 4;
        assert!(matches!(
            ModelState::from_params(other, s.params().clone()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(s.loss_and_gradients(&[]).is_err());
    }
}
