//! Deterministic offline embedding providers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{EmbeddingBackend, EncoderError, ProviderSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    /// Whole-string hash: unrelated texts get unrelated vectors.
    Opaque,
    /// Normalized sum of hashed vectors for every token and adjacent token
    /// pair, so shared words give correlated embeddings and negations such
    /// as "not seen" stay attached to what they negate.
    Lexical,
}

const SEPARATOR_TOKEN: &str = "[sep]";

/// Unit-norm vectors that are a pure function of `(seed, model_id, text)`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    model_id: String,
    dimension: usize,
    kind: MockKind,
}

impl MockBackend {
    pub fn new(spec: &ProviderSpec, kind: MockKind) -> Result<Self> {
        let seed = spec
            .seed
            .ok_or_else(|| EncoderError::Config("mock providers require a seed".into()))?;
        if spec.dimension == 0 {
            return Err(EncoderError::Config("dimension must be positive".into()));
        }
        Ok(Self {
            seed,
            model_id: spec.model_id.clone(),
            dimension: spec.dimension,
            kind,
        })
    }

    fn rng_for(&self, tag: &str, text: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [tag, self.model_id.as_str(), text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn accumulate(&self, tag: &str, key: &str, into: &mut [f64]) {
        let mut rng = self.rng_for(tag, key);
        for slot in into.iter_mut() {
            let draw: f64 = StandardNormal.sample(&mut rng);
            *slot += draw;
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut values = vec![0.0; self.dimension];
        match self.kind {
            MockKind::Opaque => self.accumulate("text", text, &mut values),
            MockKind::Lexical => {
                let lowered = text.to_lowercase();
                let segments: Vec<&str> = lowered.split(SEPARATOR_TOKEN).collect();
                let mut any = false;
                // Tokens are keyed by segment counted from the end, so the
                // final segment of a joined context embeds like bare text.
                for (k, segment) in segments.iter().rev().enumerate() {
                    let tag = if k == 0 { "token".to_string() } else { format!("token@{k}") };
                    let tokens: Vec<&str> = segment.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
                    for token in &tokens {
                        self.accumulate(&tag, token, &mut values);
                    }
                    let pair_tag = format!("{tag}:pair");
                    for pair in tokens.windows(2) {
                        self.accumulate(&pair_tag, &format!("{} {}", pair[0], pair[1]), &mut values);
                    }
                    any |= !tokens.is_empty();
                }
                if !any {
                    self.accumulate("text", text, &mut values);
                }
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        values
    }
}

impl EmbeddingBackend for MockBackend {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
