use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Topology of the tiny encoder classifier.
///
/// The canonical JSON form (sorted keys, no whitespace) is what
/// [`ModelArchitecture::hash`] digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArchitecture {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_encoder_layers: usize,
    pub max_seq_len: usize,
    pub num_labels: usize,
}

impl Default for ModelArchitecture {
    fn default() -> Self {
        Self {
            vocab_size: 8192,
            embed_dim: 32,
            num_heads: 2,
            num_encoder_layers: 1,
            max_seq_len: 64,
            num_labels: 2,
        }
    }
}

impl ModelArchitecture {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_labels != 2 {
            return bad(format!("num_labels must be 2, got {}", self.num_labels));
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return bad(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.num_encoder_layers == 0 {
            return bad("num_encoder_layers must be at least 1".into());
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be at least 1".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Hidden width of the feed-forward block.
    pub fn ffn_dim(&self) -> usize {
        4 * self.embed_dim
    }

    pub fn canonical_json(&self) -> String {
        // serde_json::Value objects are BTreeMaps, so keys come out sorted.
        serde_json::to_value(self)
            .expect("architecture serializes")
            .to_string()
    }

    /// Hex SHA-256 of the canonical JSON bytes.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Expected `(name, shape)` of every parameter, in lexicographic order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let f = self.ffn_dim();
        let mut out = vec![
            ("embed.tokens".to_string(), vec![self.vocab_size, d]),
            ("head.bias".to_string(), vec![self.num_labels]),
            ("head.weight".to_string(), vec![self.num_labels, d]),
        ];
        for l in 0..self.num_encoder_layers {
            let p = |s: &str| format!("encoder.{l}.{s}");
            for proj in ["q", "k", "v", "o"] {
                out.push((p(&format!("attn.{proj}.weight")), vec![d, d]));
                out.push((p(&format!("attn.{proj}.bias")), vec![d]));
            }
            out.push((p("ffn.up.weight"), vec![d, f]));
            out.push((p("ffn.up.bias"), vec![f]));
            out.push((p("ffn.down.weight"), vec![f, d]));
            out.push((p("ffn.down.bias"), vec![d]));
            for ln in ["ln1", "ln2"] {
                out.push((p(&format!("{ln}.gamma")), vec![d]));
                out.push((p(&format!("{ln}.beta")), vec![d]));
            }
        }
        out.sort();
        out
    }
}
