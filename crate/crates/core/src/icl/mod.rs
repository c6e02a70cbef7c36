//! Chat-model prompting: build the prompt pair, query a chat backend, parse
//! a rating out of the reply.

mod http;
mod parse;
mod ratelimit;
mod stub;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpChatBackend, CHAT_KEY_ENV};
pub use parse::parse_rating;
pub use ratelimit::TokenBucket;
pub use stub::ScriptedStub;

use crate::context::{render_context, AblationSpec, ContextError, ContextOptions};
use crate::corpus::{AnnotatorProfile, Demographics, Rating, RatingRecord};

pub const SYSTEM_PROMPT: &str = "You are a model that predicts the toxicity rating of text from 0 to 4, where 0 is the least toxic and 4 is the most toxic.";

/// Rating substituted for unparseable replies under [`FallbackPolicy::FallbackMid`].
pub const FALLBACK_RATING: usize = 2;

#[derive(Debug, Error)]
pub enum IclError {
    #[error("chat request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("malformed chat response: {0}")]
    Malformed(String),
    #[error("no rating in reply {reply:?}")]
    Parse { reply: String },
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("invalid chat configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatSpec {
    /// `http` or `stub`.
    pub provider_id: String,
    pub model_id: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    /// Extra attempts after the first on transport failures.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Requests per second across all workers; unlimited when absent.
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

fn default_retries() -> usize {
    2
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout() -> u64 {
    60
}
fn default_in_flight() -> usize {
    4
}

impl ChatSpec {
    pub fn stub(model_id: &str) -> Self {
        Self {
            provider_id: "stub".into(),
            model_id: model_id.into(),
            endpoint: None,
            temperature: 0.0,
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout(),
            max_in_flight: 1,
            requests_per_second: None,
        }
    }

    pub fn http(model_id: &str, endpoint: &str) -> Self {
        Self {
            provider_id: "http".into(),
            endpoint: Some(endpoint.into()),
            max_in_flight: default_in_flight(),
            ..Self::stub(model_id)
        }
    }

    pub fn validate(&self) -> Result<(), IclError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(IclError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(IclError::Config("max_in_flight must be at least 1".into()));
        }
        if let Some(r) = self.requests_per_second {
            if !(r > 0.0 && r.is_finite()) {
                return Err(IclError::Config(format!("requests_per_second {r} must be positive")));
            }
        }
        match self.provider_id.as_str() {
            "http" if self.endpoint.is_none() => Err(IclError::Config("http chat provider requires an endpoint".into())),
            "http" | "stub" => Ok(()),
            other => Err(IclError::Config(format!("unknown chat provider '{other}'"))),
        }
    }

    /// Reads a JSON spec, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, IclError> {
        let text = std::fs::read_to_string(path).map_err(|e| IclError::Config(format!("{}: {e}", path.display())))?;
        let spec: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| IclError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| IclError::Config(format!("{}: {e}", path.display())))?
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

/// The rendered context with the target rewritten as an instruction.
pub fn build_prompt(
    record: &RatingRecord,
    profile: &AnnotatorProfile,
    spec: &AblationSpec,
    predicted: Option<&Demographics>,
    options: &ContextOptions,
) -> Result<PromptPair, ContextError> {
    let ctx = render_context(record, profile, spec, predicted, options)?;
    let user = ctx.with_text(format!("Annotate this text: \"{}\"", record.text)).joined;
    Ok(PromptPair {
        system: SYSTEM_PROMPT.to_string(),
        user,
    })
}

/// A chat endpoint. `index` is the request's position within its batch.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, index: usize, pair: &PromptPair) -> Result<String, IclError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    Error,
    /// Unparseable replies become rating 2 and are flagged.
    FallbackMid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclPrediction {
    pub rating: Rating,
    /// Set when the rating is a fallback rather than parsed.
    pub flagged: bool,
    pub reply: String,
}

fn apply_policy(reply: String, policy: FallbackPolicy) -> Result<IclPrediction, IclError> {
    match (parse_rating(&reply), policy) {
        (Some(rating), _) => Ok(IclPrediction {
            rating,
            flagged: false,
            reply,
        }),
        (None, FallbackPolicy::FallbackMid) => Ok(IclPrediction {
            rating: Rating::from_index(FALLBACK_RATING),
            flagged: true,
            reply,
        }),
        (None, FallbackPolicy::Error) => Err(IclError::Parse { reply }),
    }
}

fn complete_with_retry(
    backend: &dyn ChatBackend,
    chat: &ChatSpec,
    index: usize,
    pair: &PromptPair,
    bucket: Option<&TokenBucket>,
) -> Result<String, IclError> {
    let attempts = chat.max_retries + 1;
    let mut backoff = Duration::from_millis(chat.retry_backoff_ms);
    let mut last = String::new();
    for attempt in 1..=attempts {
        if let Some(b) = bucket {
            b.acquire();
        }
        match backend.complete(index, pair) {
            Ok(reply) => return Ok(reply),
            Err(IclError::Transport { message, .. }) => {
                last = message;
                if attempt < attempts {
                    log::warn!("chat request {index} failed (attempt {attempt}/{attempts}): {last}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
            Err(other) => return Err(other),
        }
    }
    Err(IclError::Transport {
        attempts,
        message: last,
    })
}

/// One prediction with retries on transport failures.
pub fn icl_predict(
    backend: &dyn ChatBackend,
    chat: &ChatSpec,
    pair: &PromptPair,
    policy: FallbackPolicy,
) -> Result<IclPrediction, IclError> {
    let reply = complete_with_retry(backend, chat, 0, pair, None)?;
    apply_policy(reply, policy)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclRun {
    /// In request order.
    pub predictions: Vec<IclPrediction>,
    pub parse_failures: usize,
    pub fallbacks: usize,
}

impl IclRun {
    pub fn ratings(&self) -> Vec<Rating> {
        self.predictions.iter().map(|p| p.rating).collect()
    }
}

/// Runs many prompts with at most `chat.max_in_flight` concurrent requests
/// and an optional shared rate limit. Results come back in input order.
pub fn icl_run(
    backend: &dyn ChatBackend,
    chat: &ChatSpec,
    pairs: &[PromptPair],
    policy: FallbackPolicy,
) -> Result<IclRun, IclError> {
    chat.validate()?;
    let bucket = chat.requests_per_second.map(|r| TokenBucket::new(r, r.max(1.0)));
    let replies: Vec<Mutex<Option<Result<String, IclError>>>> = pairs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= pairs.len() {
            break;
        }
        let reply = complete_with_retry(backend, chat, i, &pairs[i], bucket.as_ref());
        *replies[i].lock().expect("reply slot") = Some(reply);
    };
    let workers = chat.max_in_flight.min(pairs.len());
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }

    let mut run = IclRun::default();
    for slot in replies {
        let reply = slot.into_inner().expect("reply slot").expect("every request ran")?;
        let prediction = apply_policy(reply, policy)?;
        if prediction.flagged {
            run.parse_failures += 1;
            run.fallbacks += 1;
        }
        run.predictions.push(prediction);
    }
    Ok(run)
}

/// Builds a backend from a spec; `stub_replies` is required for `stub`.
pub fn backend_from_spec(chat: &ChatSpec, stub_replies: Option<&Path>) -> Result<Box<dyn ChatBackend>, IclError> {
    chat.validate()?;
    match chat.provider_id.as_str() {
        "stub" => {
            let path = stub_replies.ok_or_else(|| IclError::Config("the stub provider needs a replies file".into()))?;
            Ok(Box::new(ScriptedStub::from_jsonl(path)?))
        }
        _ => Ok(Box::new(HttpChatBackend::from_env(chat)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn record(text: &str) -> RatingRecord {
        RatingRecord {
            text_id: "t9".into(),
            annotator_id: "a1".into(),
            text: text.into(),
            rating: Rating::from_index(1),
            split: Split::Test,
        }
    }

    struct Flaky {
        failures: AtomicUsize,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, _index: usize, _pair: &PromptPair) -> Result<String, IclError> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(IclError::Transport {
                    attempts: 1,
                    message: "connection reset".into(),
                })
            } else {
                Ok("1".into())
            }
        }
    }

    fn fast(mut chat: ChatSpec) -> ChatSpec {
        chat.retry_backoff_ms = 1;
        chat
    }

    #[test]
    fn text_only_prompt() {
        let pair = build_prompt(
            &record("you are wrong"),
            &AnnotatorProfile::bare("a1"),
            &AblationSpec::TEXT_ONLY,
            None,
            &ContextOptions::default(),
        )
        .unwrap();
        assert_eq!(pair.system, SYSTEM_PROMPT);
        assert_eq!(pair.user, "Annotate this text: \"you are wrong\"");
    }

    #[test]
    fn stub_and_fallback() {
        let pair = PromptPair {
            system: SYSTEM_PROMPT.into(),
            user: "x".into(),
        };
        let chat = ChatSpec::stub("s");
        let zero = icl_predict(&ScriptedStub::constant("0"), &chat, &pair, FallbackPolicy::Error).unwrap();
        assert_eq!((zero.rating.value(), zero.flagged), (0, false));
        let na = icl_predict(&ScriptedStub::constant("n/a"), &chat, &pair, FallbackPolicy::FallbackMid).unwrap();
        assert_eq!((na.rating.value(), na.flagged), (2, true));
        assert!(matches!(
            icl_predict(&ScriptedStub::constant("n/a"), &chat, &pair, FallbackPolicy::Error),
            Err(IclError::Parse { .. })
        ));
    }

    #[test]
    fn retries_then_succeeds_or_reports_attempts() {
        let pair = PromptPair {
            system: String::new(),
            user: String::new(),
        };
        let chat = fast(ChatSpec::stub("s"));
        let ok = Flaky {
            failures: AtomicUsize::new(2),
        };
        assert_eq!(icl_predict(&ok, &chat, &pair, FallbackPolicy::Error).unwrap().rating.value(), 1);
        let bad = Flaky {
            failures: AtomicUsize::new(10),
        };
        match icl_predict(&bad, &chat, &pair, FallbackPolicy::Error) {
            Err(IclError::Transport { attempts: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_keeps_order_and_counts() {
        let stub = ScriptedStub::new(vec!["4".into(), "hmm".into(), "rated 1".into()]).unwrap();
        let mut chat = ChatSpec::stub("s");
        chat.max_in_flight = 3;
        let pairs: Vec<PromptPair> = (0..6)
            .map(|i| PromptPair {
                system: SYSTEM_PROMPT.into(),
                user: format!("{i}"),
            })
            .collect();
        let run = icl_run(&stub, &chat, &pairs, FallbackPolicy::FallbackMid).unwrap();
        let got: Vec<u8> = run.ratings().iter().map(|r| r.value()).collect();
        assert_eq!(got, vec![4, 2, 1, 4, 2, 1]);
        assert_eq!((run.parse_failures, run.fallbacks), (2, 2));
    }

    #[test]
    fn stub_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replies.jsonl");
        std::fs::write(&path, "{\"reply\": \"3\"}\n\n{\"reply\": \"0\"}\n").unwrap();
        let stub = ScriptedStub::from_jsonl(&path).unwrap();
        let p = PromptPair {
            system: String::new(),
            user: String::new(),
        };
        assert_eq!(stub.complete(1, &p).unwrap(), "0");
        std::fs::write(&path, "{\"text\": \"3\"}\n").unwrap();
        assert!(ScriptedStub::from_jsonl(&path).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut chat = ChatSpec::http("m", "http://localhost:1/v1/chat");
        chat.validate().unwrap();
        chat.temperature = -0.1;
        assert!(chat.validate().is_err());
        let mut no_endpoint = ChatSpec::stub("m");
        no_endpoint.provider_id = "http".into();
        assert!(no_endpoint.validate().is_err());
    }
}
