//! Embedding providers behind one interface, with a content-addressed cache.
//!
//! Every model consumes [`EmbeddingVector`]s through an [`Encoder`], which
//! consults its cache before calling the provider backend and persists what
//! it fetches. Backends: a deterministic offline mock (opaque or lexical) and
//! an HTTP client for `{model, input[]} -> {data[].embedding[]}` endpoints.

mod cache;
mod http;
mod mock;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::DiskCache;
pub use http::{HttpEmbeddingBackend, EMBED_KEY_ENV};
pub use mock::{MockBackend, MockKind};

/// Input width of the large embedding model.
pub const LARGE_DIMENSION: usize = 3072;
/// Toolkit default for the small model.
pub const SMALL_DIMENSION: usize = 1536;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot embed an empty string")]
    EmptyText,
    #[error("embed_batch requires at least one text")]
    EmptyBatch,
    #[error("provider unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("batch failed at indices {failed:?}: {source}")]
    Batch {
        failed: Vec<usize>,
        #[source]
        source: Box<EncoderError>,
    },
    #[error("cache i/o on {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("provider configuration: {0}")]
    Config(String),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

/// Identifies a provider and the shape of what it returns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderSpec {
    /// `mock`, `mock-lexical` or `http`.
    pub provider_id: String,
    pub model_id: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Required by mock providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProviderSpec {
    pub fn mock(model_id: &str, dimension: usize, seed: u64) -> Self {
        Self {
            provider_id: "mock".into(),
            model_id: model_id.into(),
            dimension,
            endpoint: None,
            seed: Some(seed),
        }
    }

    pub fn mock_large(seed: u64) -> Self {
        Self::mock("mock-large", LARGE_DIMENSION, seed)
    }

    pub fn mock_small(seed: u64) -> Self {
        Self::mock("mock-small", SMALL_DIMENSION, seed)
    }

    /// Bag-of-words mock: texts sharing tokens get correlated vectors.
    pub fn mock_lexical(dimension: usize, seed: u64) -> Self {
        Self {
            provider_id: "mock-lexical".into(),
            model_id: "mock-lexical".into(),
            dimension,
            endpoint: None,
            seed: Some(seed),
        }
    }

    pub fn http(model_id: &str, dimension: usize, endpoint: &str) -> Self {
        Self {
            provider_id: "http".into(),
            model_id: model_id.into(),
            dimension,
            endpoint: Some(endpoint.into()),
            seed: None,
        }
    }

    /// Named presets used by the CLI. HTTP presets need an endpoint.
    pub fn preset(name: &str, seed: u64, endpoint: Option<&str>) -> Result<Self> {
        let need_endpoint = || {
            endpoint.ok_or_else(|| EncoderError::Config(format!("provider '{name}' needs an endpoint")))
        };
        match name {
            "mock-large" => Ok(Self::mock_large(seed)),
            "mock-small" => Ok(Self::mock_small(seed)),
            "mock-lexical" => Ok(Self::mock_lexical(512, seed)),
            "text-embedding-3-large" => Ok(Self::http(name, LARGE_DIMENSION, need_endpoint()?)),
            "text-embedding-3-small" => Ok(Self::http(name, SMALL_DIMENSION, need_endpoint()?)),
            other => Err(EncoderError::Config(format!("unknown provider preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(EncoderError::Config("dimension must be positive".into()));
        }
        match self.provider_id.as_str() {
            "mock" | "mock-lexical" if self.seed.is_none() => {
                Err(EncoderError::Config("mock providers require a seed".into()))
            }
            "mock" | "mock-lexical" => Ok(()),
            "http" if self.endpoint.is_none() => Err(EncoderError::Config("http provider requires an endpoint".into())),
            "http" => Ok(()),
            other => Err(EncoderError::Config(format!("unknown provider id '{other}'"))),
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.provider_id, self.model_id)
    }
}

/// Hex SHA-256 over length-prefixed `(provider_id, model_id, text)`.
pub fn content_hash(provider_id: &str, model_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [provider_id, model_id, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub content_hash: String,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Something that turns texts into raw vectors. One call is one provider request.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Cached, retrying front end to an [`EmbeddingBackend`].
pub struct Encoder {
    spec: ProviderSpec,
    backend: Box<dyn EmbeddingBackend>,
    memory: Mutex<HashMap<String, Vec<f64>>>,
    disk: Option<DiskCache>,
    provider_calls: AtomicUsize,
    provider_requests: AtomicUsize,
    retry: RetryPolicy,
    max_in_flight: usize,
    request_batch: usize,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder")
            .field("spec", &self.spec)
            .field("disk", &self.disk)
            .field("provider_calls", &self.provider_calls())
            .finish()
    }
}

impl Encoder {
    pub fn new(spec: ProviderSpec, backend: Box<dyn EmbeddingBackend>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            backend,
            memory: Mutex::new(HashMap::new()),
            disk: None,
            provider_calls: AtomicUsize::new(0),
            provider_requests: AtomicUsize::new(0),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            request_batch: 64,
        })
    }

    /// Builds the backend the spec names. HTTP providers read their key from
    /// the `RATERLENS_EMBED_KEY` environment variable.
    pub fn from_spec(spec: ProviderSpec) -> Result<Self> {
        spec.validate()?;
        let backend: Box<dyn EmbeddingBackend> = match spec.provider_id.as_str() {
            "mock" => Box::new(MockBackend::new(&spec, MockKind::Opaque)?),
            "mock-lexical" => Box::new(MockBackend::new(&spec, MockKind::Lexical)?),
            "http" => Box::new(HttpEmbeddingBackend::from_env(&spec)?),
            other => return Err(EncoderError::Config(format!("unknown provider id '{other}'"))),
        };
        Self::new(spec, backend)
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        self.disk = Some(DiskCache::open(dir)?);
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_request_batch(mut self, n: usize) -> Self {
        self.request_batch = n.max(1);
        self
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    /// Number of texts sent to the backend so far (cache hits excluded).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    /// Number of backend requests issued, retries included.
    pub fn provider_requests(&self) -> usize {
        self.provider_requests.load(Ordering::SeqCst)
    }

    pub fn disk_cache(&self) -> Option<&DiskCache> {
        self.disk.as_ref()
    }

    pub fn hash_of(&self, text: &str) -> String {
        content_hash(&self.spec.provider_id, &self.spec.model_id, text)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(EncoderError::EmptyText);
        }
        let hash = self.hash_of(text);
        if let Some(v) = self.lookup(&hash)? {
            return Ok(v);
        }
        let mut values = self.fetch(&[text])?;
        let values = values.pop().expect("one vector per text");
        self.store(&hash, values.clone())?;
        Ok(EmbeddingVector {
            values,
            content_hash: hash,
        })
    }

    /// Order-preserving batch embed. Duplicate texts are fetched once; at most
    /// `max_in_flight` provider requests run concurrently. On failure the
    /// successfully fetched vectors stay cached and the error names every
    /// failed input index.
    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        let empty: Vec<usize> = texts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_ref().is_empty())
            .map(|(i, _)| i)
            .collect();
        if !empty.is_empty() {
            return Err(EncoderError::Batch {
                failed: empty,
                source: Box::new(EncoderError::EmptyText),
            });
        }

        let hashes: Vec<String> = texts.iter().map(|t| self.hash_of(t.as_ref())).collect();
        let mut resolved: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut misses: Vec<(&str, &str)> = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        for (text, hash) in texts.iter().zip(&hashes) {
            if !seen.insert(hash.as_str()) {
                continue;
            }
            match self.lookup(hash)? {
                Some(v) => {
                    resolved.insert(hash.as_str(), v.values);
                }
                None => misses.push((text.as_ref(), hash.as_str())),
            }
        }

        let chunks: Vec<&[(&str, &str)]> = misses.chunks(self.request_batch).collect();
        let outcomes = self.run_chunks(&chunks);

        let mut failed_hashes: HashSet<&str> = HashSet::new();
        let mut first_error = None;
        for (chunk, outcome) in chunks.iter().zip(outcomes) {
            match outcome {
                Ok(vectors) => {
                    for ((_, hash), values) in chunk.iter().zip(vectors) {
                        self.store(hash, values.clone())?;
                        resolved.insert(hash, values);
                    }
                }
                Err(e) => {
                    failed_hashes.extend(chunk.iter().map(|(_, h)| *h));
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(source) = first_error {
            let failed = hashes
                .iter()
                .enumerate()
                .filter(|(_, h)| failed_hashes.contains(&h.as_str()))
                .map(|(i, _)| i)
                .collect();
            return Err(EncoderError::Batch {
                failed,
                source: Box::new(source),
            });
        }

        Ok(hashes
            .iter()
            .map(|h| EmbeddingVector {
                values: resolved[h.as_str()].clone(),
                content_hash: h.clone(),
            })
            .collect())
    }

    fn run_chunks(&self, chunks: &[&[(&str, &str)]]) -> Vec<Result<Vec<Vec<f64>>>> {
        if chunks.len() <= 1 || self.max_in_flight == 1 {
            return chunks
                .iter()
                .map(|c| self.fetch(&c.iter().map(|(t, _)| *t).collect::<Vec<_>>()))
                .collect();
        }
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<Vec<Vec<f64>>>>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..self.max_in_flight.min(chunks.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let texts: Vec<&str> = chunks[i].iter().map(|(t, _)| *t).collect();
                    *results[i].lock().expect("result slot") = Some(self.fetch(&texts));
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().expect("result slot").expect("every chunk ran"))
            .collect()
    }

    fn lookup(&self, hash: &str) -> Result<Option<EmbeddingVector>> {
        if let Some(values) = self.memory.lock().expect("memory cache").get(hash) {
            return Ok(Some(EmbeddingVector {
                values: values.clone(),
                content_hash: hash.to_string(),
            }));
        }
        if let Some(disk) = &self.disk {
            if let Some(values) = disk.read(hash, &self.spec)? {
                self.memory
                    .lock()
                    .expect("memory cache")
                    .insert(hash.to_string(), values.clone());
                return Ok(Some(EmbeddingVector {
                    values,
                    content_hash: hash.to_string(),
                }));
            }
        }
        Ok(None)
    }

    fn store(&self, hash: &str, values: Vec<f64>) -> Result<()> {
        if let Some(disk) = &self.disk {
            disk.write(hash, &self.spec, &values)?;
        }
        self.memory.lock().expect("memory cache").insert(hash.to_string(), values);
        Ok(())
    }

    /// One logical provider call with retries on transport failure.
    fn fetch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            self.provider_requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.embed_texts(texts) {
                Ok(vectors) => {
                    self.provider_calls.fetch_add(texts.len(), Ordering::SeqCst);
                    self.check(texts.len(), &vectors)?;
                    return Ok(vectors);
                }
                Err(EncoderError::Transport { message, .. }) => {
                    last = message;
                    if attempt < attempts {
                        log::warn!("embedding request failed (attempt {attempt}/{attempts}): {last}");
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(EncoderError::Transport {
            attempts,
            message: last,
        })
    }

    fn check(&self, expected: usize, vectors: &[Vec<f64>]) -> Result<()> {
        if vectors.len() != expected {
            return Err(EncoderError::Integrity(format!(
                "provider returned {} vectors for {expected} inputs",
                vectors.len()
            )));
        }
        for v in vectors {
            if v.len() != self.spec.dimension {
                return Err(EncoderError::Integrity(format!(
                    "provider returned dimension {}, expected {}",
                    v.len(),
                    self.spec.dimension
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::Integrity("provider returned a non-finite value".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky {
        failures_left: Mutex<usize>,
        inner: MockBackend,
    }

    impl EmbeddingBackend for Flaky {
        fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            let mut left = self.failures_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(EncoderError::Transport {
                    attempts: 1,
                    message: "connection refused".into(),
                });
            }
            self.inner.embed_texts(texts)
        }
    }

    struct WrongDim;

    impl EmbeddingBackend for WrongDim {
        fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            Ok(texts.iter().map(|_| vec![0.5; 3]).collect())
        }
    }

    fn quick_retry() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(1),
        }
    }

    fn flaky(failures: usize) -> Encoder {
        let spec = ProviderSpec::mock("m", 8, 1);
        let inner = MockBackend::new(&spec, MockKind::Opaque).unwrap();
        Encoder::new(
            spec,
            Box::new(Flaky {
                failures_left: Mutex::new(failures),
                inner,
            }),
        )
        .unwrap()
        .with_retry(quick_retry())
    }

    #[test]
    fn cache_hit_skips_provider() {
        let enc = Encoder::from_spec(ProviderSpec::mock("m", 8, 1)).unwrap();
        let a = enc.embed("hello").unwrap();
        let b = enc.embed("hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(enc.provider_calls(), 1);
    }

    #[test]
    fn distinct_texts_distinct_vectors() {
        let enc = Encoder::from_spec(ProviderSpec::mock("m", 8, 1)).unwrap();
        assert_ne!(enc.embed("a").unwrap().values, enc.embed("b").unwrap().values);
    }

    #[test]
    fn empty_text_rejected() {
        let enc = Encoder::from_spec(ProviderSpec::mock("m", 8, 1)).unwrap();
        assert!(matches!(enc.embed(""), Err(EncoderError::EmptyText)));
        assert!(matches!(enc.embed_batch::<&str>(&[]), Err(EncoderError::EmptyBatch)));
    }

    #[test]
    fn transient_failures_are_retried() {
        let enc = flaky(2);
        assert!(enc.embed("x").is_ok());
        assert_eq!(enc.provider_requests(), 3);
    }

    #[test]
    fn persistent_failure_is_transport_error() {
        let enc = flaky(10);
        match enc.embed("x") {
            Err(EncoderError::Transport { attempts: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_dimension_is_integrity_error() {
        let enc = Encoder::new(ProviderSpec::mock("m", 8, 1), Box::new(WrongDim)).unwrap();
        assert!(matches!(enc.embed("x"), Err(EncoderError::Integrity(_))));
    }

    #[test]
    fn batch_deduplicates() {
        let enc = Encoder::from_spec(ProviderSpec::mock("m", 8, 1)).unwrap();
        let out = enc.embed_batch(&["same", "same", "other"]).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[1]);
        assert_eq!(enc.provider_calls(), 2);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ProviderSpec::mock("m", 8, 1);
        spec.seed = None;
        assert!(spec.validate().is_err());
        assert!(ProviderSpec::mock("m", 0, 1).validate().is_err());
        assert!(ProviderSpec::preset("text-embedding-3-large", 0, None).is_err());
        assert_eq!(
            ProviderSpec::preset("text-embedding-3-large", 0, Some("http://x")).unwrap().dimension,
            3072
        );
    }
}
