use std::path::Path;

use serde::Deserialize;

use super::{ChatBackend, IclError, PromptPair};

/// Offline backend returning scripted replies. Request `i` receives reply
/// `i mod n`, so results do not depend on completion order.
#[derive(Debug, Clone)]
pub struct ScriptedStub {
    replies: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StubLine {
    reply: String,
}

impl ScriptedStub {
    pub fn new(replies: Vec<String>) -> Result<Self, IclError> {
        if replies.is_empty() {
            return Err(IclError::Config("a scripted stub needs at least one reply".into()));
        }
        Ok(Self { replies })
    }

    pub fn constant(reply: &str) -> Self {
        Self {
            replies: vec![reply.to_string()],
        }
    }

    /// Reads `{"reply": "..."}` lines; blank lines are skipped.
    pub fn from_jsonl(path: &Path) -> Result<Self, IclError> {
        let text = std::fs::read_to_string(path).map_err(|e| IclError::Config(format!("{}: {e}", path.display())))?;
        let mut replies = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StubLine = serde_json::from_str(line)
                .map_err(|e| IclError::Config(format!("{} line {}: {e}", path.display(), n + 1)))?;
            replies.push(parsed.reply);
        }
        Self::new(replies)
    }
}

impl ChatBackend for ScriptedStub {
    fn complete(&self, index: usize, _pair: &PromptPair) -> Result<String, IclError> {
        Ok(self.replies[index % self.replies.len()].clone())
    }
}
