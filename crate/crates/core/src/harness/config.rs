//! TOML configuration for the `ablate` command.
//!
//! ```toml
//! seed = 7
//! cache_dir = "cache"
//! rows = "canonical"            # or a list such as ["text", "text,history,survey,demo"]
//!
//! [corpus]
//! path = "corpus.jsonl"         # or a [corpus.synth] table
//!
//! [[predictors]]
//! kind = "embed_head"           # ncf | embed_head | icl
//! provider = "mock-small"
//! [predictors.train]
//! epochs = 10
//!
//! [demographics]
//! provider = "mock-small"
//! mode = "survey"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::runner::StandardImputer;
use super::spec::{canonical_ablations, ExperimentSpec, PredictorSpec};
use super::HarnessError;
use crate::context::AblationSpec;
use crate::demographics::InputMode;
use crate::corpus::{
    generate_corpus, load_corpus_with, Corpus, CorpusFormat, DemographicCoupling, LoadOptions, Split, SplitUnit, SynthConfig,
};
use crate::encoder::ProviderSpec;
use crate::icl::{ChatSpec, FallbackPolicy};
use crate::neural::TrainConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub rows: RowSelection,
    pub corpus: CorpusSection,
    pub predictors: Vec<PredictorEntry>,
    #[serde(default)]
    pub demographics: Option<DemographicsSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RowSelection {
    /// Only `"canonical"` is accepted.
    Named(String),
    List(Vec<String>),
}

impl Default for RowSelection {
    fn default() -> Self {
        RowSelection::Named("canonical".into())
    }
}

impl RowSelection {
    pub fn ablations(&self) -> Result<Vec<AblationSpec>, HarnessError> {
        match self {
            RowSelection::Named(n) if n == "canonical" => Ok(canonical_ablations().to_vec()),
            RowSelection::Named(other) => Err(HarnessError::Config(format!("unknown row set '{other}'"))),
            RowSelection::List(items) => items
                .iter()
                .map(|s| AblationSpec::parse_list(s).map_err(HarnessError::from))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Defaults to the path's extension.
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub seed: u64,
    pub n_texts: usize,
    pub raters_per_text: usize,
    pub ratings_per_annotator: usize,
    #[serde(default)]
    pub split: Option<[f64; 3]>,
    /// `record` or `annotator`.
    #[serde(default)]
    pub split_unit: Option<String>,
    /// `independent` or `survey_determined`.
    #[serde(default)]
    pub coupling: Option<String>,
}

impl SynthSection {
    pub fn to_config(&self) -> Result<SynthConfig, HarnessError> {
        let mut cfg = SynthConfig::new(self.seed, self.n_texts, self.raters_per_text, self.ratings_per_annotator);
        if let Some(s) = self.split {
            cfg.split_fractions = s;
        }
        cfg.split_unit = match self.split_unit.as_deref() {
            None | Some("record") => SplitUnit::Record,
            Some("annotator") => SplitUnit::Annotator,
            Some(other) => return Err(HarnessError::Config(format!("unknown split_unit '{other}'"))),
        };
        cfg.coupling = match self.coupling.as_deref() {
            None | Some("independent") => DemographicCoupling::Independent,
            Some("survey_determined") => DemographicCoupling::SurveyDetermined,
            Some(other) => return Err(HarnessError::Config(format!("unknown coupling '{other}'"))),
        };
        Ok(cfg)
    }
}

impl CorpusSection {
    /// Paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Corpus, HarnessError> {
        match (&self.path, &self.synth) {
            (Some(path), None) => {
                let path = base.join(path);
                let format = match self.format.as_deref() {
                    Some(f) => f.parse()?,
                    None if path.extension().is_some_and(|e| e == "csv") => CorpusFormat::Csv,
                    None => CorpusFormat::Jsonl,
                };
                let options = LoadOptions {
                    profiles: self.profiles.as_ref().map(|p| base.join(p)),
                    ..Default::default()
                };
                Ok(load_corpus_with(&path, format, &options)?.0)
            }
            (None, Some(synth)) => Ok(generate_corpus(&synth.to_config()?)?.corpus),
            _ => Err(HarnessError::Config("[corpus] needs exactly one of `path` or `synth`".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorEntry {
    pub kind: String,
    /// Report column; defaults to the predictor label.
    #[serde(default)]
    pub name: Option<String>,
    /// Embedding preset for `ncf` and `embed_head`.
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// `NcfConfig` or `EmbedHeadConfig` fields, by kind.
    #[serde(default)]
    pub config: Option<toml::Value>,
    /// Inline chat spec for `icl`.
    #[serde(default)]
    pub chat: Option<ChatSpec>,
    #[serde(default)]
    pub stub_replies: Option<PathBuf>,
    #[serde(default)]
    pub policy: Option<FallbackPolicy>,
}

fn typed<T: serde::de::DeserializeOwned + Default>(value: &Option<toml::Value>) -> Result<T, HarnessError> {
    match value {
        None => Ok(T::default()),
        Some(v) => v.clone().try_into().map_err(|e| HarnessError::Config(format!("predictor config: {e}"))),
    }
}

impl PredictorEntry {
    pub fn to_spec(&self, seed: u64, base: &Path) -> Result<PredictorSpec, HarnessError> {
        let provider = || -> Result<ProviderSpec, HarnessError> {
            let name = self
                .provider
                .as_deref()
                .ok_or_else(|| HarnessError::Config(format!("{} predictor needs a provider", self.kind)))?;
            Ok(ProviderSpec::preset(name, seed, self.endpoint.as_deref())?)
        };
        let train = self.train.clone().unwrap_or_default();
        match self.kind.as_str() {
            "ncf" => Ok(PredictorSpec::Ncf {
                provider: provider()?,
                config: typed(&self.config)?,
                train,
            }),
            "embed_head" => Ok(PredictorSpec::EmbedHead {
                provider: provider()?,
                config: typed(&self.config)?,
                train,
            }),
            "icl" => Ok(PredictorSpec::Icl {
                chat: self
                    .chat
                    .clone()
                    .ok_or_else(|| HarnessError::Config("icl predictor needs a [predictors.chat] table".into()))?,
                stub_replies: self.stub_replies.as_ref().map(|p| base.join(p)),
                policy: self.policy.unwrap_or(FallbackPolicy::FallbackMid),
            }),
            other => Err(HarnessError::Config(format!("unknown predictor kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicsSection {
    pub provider: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// `survey` or `survey+text`.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

impl AblateConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// One cell per (predictor, row) on the given evaluation split.
    pub fn experiments(&self, split: Split, base: &Path) -> Result<Vec<ExperimentSpec>, HarnessError> {
        if self.predictors.is_empty() {
            return Err(HarnessError::Config("no predictors configured".into()));
        }
        let rows = self.rows.ablations()?;
        let mut out = Vec::new();
        for p in &self.predictors {
            let predictor = p.to_spec(self.seed, base)?;
            for ablation in &rows {
                out.push(ExperimentSpec {
                    name: p.name.clone(),
                    predictor: predictor.clone(),
                    ablation: *ablation,
                    split,
                    seed: self.seed,
                });
            }
        }
        Ok(out)
    }

    pub fn imputer(&self, base: &Path) -> Result<Option<StandardImputer>, HarnessError> {
        let Some(d) = &self.demographics else { return Ok(None) };
        let mode = match d.mode.as_deref() {
            None => InputMode::SurveyOnly,
            Some(m) => m.parse().map_err(|e| HarnessError::Config(format!("{e}")))?,
        };
        Ok(Some(StandardImputer {
            provider: ProviderSpec::preset(&d.provider, self.seed, d.endpoint.as_deref())?,
            mode,
            train: d.train.clone().unwrap_or_default(),
            cache_dir: self.cache_dir.as_ref().map(|c| base.join(c)),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 3
rows = ["text", "text,history,survey,pdemo"]

[corpus.synth]
seed = 1
n_texts = 20
raters_per_text = 3
ratings_per_annotator = 6
coupling = "survey_determined"

[[predictors]]
kind = "ncf"
provider = "mock-lexical"
config = { embedding_dim = 8, fusion = "dot_product" }
train = { epochs = 2 }

[[predictors]]
kind = "icl"
name = "stub"
chat = { provider_id = "stub", model_id = "s" }
stub_replies = "replies.jsonl"

[demographics]
provider = "mock-small"
mode = "survey+text"
"#;

    #[test]
    fn example_expands() {
        let cfg = AblateConfig::parse(EXAMPLE).unwrap();
        let base = Path::new("/base");
        let cells = cfg.experiments(Split::Dev, base).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.seed == 3 && c.split == Split::Dev));
        assert!(cells[1].ablation.uses_predicted());
        match &cells[0].predictor {
            PredictorSpec::Ncf { config, train, provider } => {
                assert_eq!(config.embedding_dim, 8);
                assert_eq!(train.epochs, 2);
                assert_eq!(provider.provider_id, "mock-lexical");
            }
            other => panic!("{other:?}"),
        }
        match &cells[2].predictor {
            PredictorSpec::Icl { stub_replies, .. } => assert_eq!(stub_replies.as_deref(), Some(Path::new("/base/replies.jsonl"))),
            other => panic!("{other:?}"),
        }
        assert_eq!(cells[2].column(), "stub");
        assert!(cfg.imputer(base).unwrap().is_some());
        assert_eq!(cfg.corpus.load(base).unwrap().len(), 60);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AblateConfig::parse("predictors = []\n[corpus]\npath='x'\nbogus = 1").is_err());
        let cfg = AblateConfig::parse("rows = 'all'\npredictors = []\n[corpus]\npath = 'x'").unwrap();
        assert!(cfg.experiments(Split::Test, Path::new(".")).is_err());
        assert!(RowSelection::Named("all".into()).ablations().is_err());
    }
}
