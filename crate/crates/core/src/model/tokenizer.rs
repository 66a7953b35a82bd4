//! Hashed word-level tokenizer.
//!
//! Text is lowercased and split into maximal runs of alphanumeric characters;
//! every other non-whitespace character is a token of its own. Each token is
//! hashed (seeded FNV-1a followed by a splitmix64 finalizer) into
//! `[1, vocab_size)`. Id 0 is reserved for the CLS position.

use crate::error::{Error, Result};
use crate::model::ModelArchitecture;
use crate::rng::mix64;

pub const CLS_ID: u32 = 0;

/// Fixed forever; changing it invalidates every trained checkpoint.
pub const TOKEN_HASH_SEED: u64 = 0x4F4C_4944_4C56_4C41;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, arch: &ModelArchitecture) -> Result<Self> {
        if ids.first() != Some(&CLS_ID) {
            return Err(Error::ShapeMismatch(
                "token sequence must start with CLS".into(),
            ));
        }
        if ids.len() > arch.max_seq_len {
            return Err(Error::ShapeMismatch(format!(
                "sequence length {} exceeds max_seq_len {}",
                ids.len(),
                arch.max_seq_len
            )));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= arch.vocab_size) {
            return Err(Error::ShapeMismatch(format!(
                "token id {bad} outside vocabulary of {}",
                arch.vocab_size
            )));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn token_hash(token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ TOKEN_HASH_SEED;
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}

pub fn token_id(token: &str, vocab_size: usize) -> u32 {
    1 + (token_hash(token) % (vocab_size as u64 - 1)) as u32
}

/// Lowercased word and punctuation tokens, before hashing.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn tokenize(text: &str, arch: &ModelArchitecture) -> TokenSequence {
    let mut ids = Vec::with_capacity(arch.max_seq_len.min(64));
    ids.push(CLS_ID);
    for word in split_words(text) {
        if ids.len() >= arch.max_seq_len {
            break;
        }
        ids.push(token_id(&word, arch.vocab_size));
    }
    TokenSequence { ids }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_cls_only() {
        let arch = ModelArchitecture::default();
        assert_eq!(tokenize("", &arch).ids(), &[CLS_ID]);
        assert_eq!(tokenize("   \n\t", &arch).ids(), &[CLS_ID]);
    }

    #[test]
    fn case_folding() {
        let arch = ModelArchitecture::default();
        let ids = tokenize("A a", &arch);
        assert_eq!(ids.len(), 3);
        assert_eq!(ids.ids()[1], ids.ids()[2]);
    }

    #[test]
    fn truncates_to_max_len() {
        let arch = ModelArchitecture::default();
        let text = (0..200).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(tokenize(&text, &arch).len(), arch.max_seq_len);
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(
            split_words("@USER you're #1!!"),
            vec!["@", "user", "you", "'", "re", "#", "1", "!", "!"]
        );
    }

    #[test]
    fn ids_stay_in_range() {
        let arch = ModelArchitecture {
            vocab_size: 5,
            ..Default::default()
        };
        for w in split_words("the quick brown fox jumps over the lazy dog") {
            let id = token_id(&w, arch.vocab_size);
            assert!((1..5).contains(&id));
        }
    }

    // Published vectors; these must never change.
    #[test]
    fn hash_test_vectors() {
        assert_eq!(token_hash(""), 0x80ad_323f_f378_0d78);
        assert_eq!(token_id("offensive", 8192), 2400);
        assert_eq!(token_id("not", 8192), 5815);
        let arch = ModelArchitecture::default();
        assert_eq!(tokenize("You are NOT nice!", &arch).ids(), &[0, 4866, 6394, 5815, 3596, 6826]);
    }

    #[test]
    fn sequence_validation() {
        let arch = ModelArchitecture::default();
        assert!(TokenSequence::new(vec![0, 5], &arch).is_ok());
        assert!(TokenSequence::new(vec![5], &arch).is_err());
        assert!(TokenSequence::new(vec![0, 9000], &arch).is_err());
        assert!(TokenSequence::new(vec![0; 65], &arch).is_err());
    }
}
