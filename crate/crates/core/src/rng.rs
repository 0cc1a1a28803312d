//! Labeled random substreams.
//!
//! A stream is identified by a 64-bit seed and a `/`-separated label path.
//! The generator key is the SHA-256 of both, so sibling labels give
//! unrelated sequences and the same `(seed, label)` always replays.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub label: String,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            label: String::new(),
        }
    }

    pub fn with_label(seed: u64, label: &str) -> Self {
        RngStream {
            seed,
            label: label.to_string(),
        }
    }

    /// Substream `label/name`.
    pub fn child(&self, name: &str) -> RngStream {
        let label = if self.label.is_empty() {
            name.to_string()
        } else {
            format!("{}/{}", self.label, name)
        };
        RngStream { seed: self.seed, label }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}
