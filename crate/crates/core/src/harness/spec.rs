use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::context::{AblationSpec, DemographicsSource};
use crate::corpus::Split;
use crate::embed_head::EmbedHeadConfig;
use crate::encoder::ProviderSpec;
use crate::icl::{ChatSpec, FallbackPolicy};
use crate::ncf::NcfConfig;
use crate::neural::TrainConfig;

/// The nine standard configurations in report order.
pub fn canonical_ablations() -> [AblationSpec; 9] {
    use DemographicsSource::{None as N, Predicted as P, TrueValues as D};
    [
        AblationSpec::new(false, false, N),
        AblationSpec::new(false, false, D),
        AblationSpec::new(true, false, D),
        AblationSpec::new(true, false, N),
        AblationSpec::new(false, true, N),
        AblationSpec::new(false, true, D),
        AblationSpec::new(true, true, N),
        AblationSpec::new(true, true, P),
        AblationSpec::new(true, true, D),
    ]
}

/// Position among [`canonical_ablations`], if any.
pub fn canonical_index(spec: &AblationSpec) -> Option<usize> {
    canonical_ablations().iter().position(|c| c == spec)
}

/// Row label: `Text only`, or `+ ` segments in the order demographics,
/// history, survey, e.g. `+ demo. + history + survey`.
pub fn row_label(spec: &AblationSpec) -> String {
    let mut parts = Vec::new();
    if spec.use_demographics {
        parts.push(match spec.demographics_source {
            DemographicsSource::Predicted => "predicted demo.",
            _ => "demo.",
        });
    }
    if spec.use_history {
        parts.push("history");
    }
    if spec.use_survey {
        parts.push("survey");
    }
    if parts.is_empty() {
        "Text only".to_string()
    } else {
        parts.iter().map(|p| format!("+ {p}")).collect::<Vec<_>>().join(" ")
    }
}

fn fallback_mid() -> FallbackPolicy {
    FallbackPolicy::FallbackMid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Ncf {
        provider: ProviderSpec,
        #[serde(default)]
        config: NcfConfig,
        #[serde(default)]
        train: TrainConfig,
    },
    EmbedHead {
        provider: ProviderSpec,
        #[serde(default)]
        config: EmbedHeadConfig,
        #[serde(default)]
        train: TrainConfig,
    },
    Icl {
        chat: ChatSpec,
        #[serde(default)]
        stub_replies: Option<PathBuf>,
        #[serde(default = "fallback_mid")]
        policy: FallbackPolicy,
    },
}

impl PredictorSpec {
    pub fn label(&self) -> String {
        match self {
            PredictorSpec::Ncf { provider, .. } => format!("ncf/{}", provider.model_id),
            PredictorSpec::EmbedHead { provider, .. } => format!("embed_head/{}", provider.model_id),
            PredictorSpec::Icl { chat, .. } => format!("icl/{}", chat.model_id),
        }
    }
}

/// One cell of an ablation matrix: one predictor, one context configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Report column; defaults to the predictor label.
    #[serde(default)]
    pub name: Option<String>,
    pub predictor: PredictorSpec,
    pub ablation: AblationSpec,
    /// Evaluation split; models always train on the train split.
    pub split: Split,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn column(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.predictor.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels() {
        let labels: Vec<String> = canonical_ablations().iter().map(row_label).collect();
        assert_eq!(
            labels,
            [
                "Text only",
                "+ demo.",
                "+ demo. + history",
                "+ history",
                "+ survey",
                "+ demo. + survey",
                "+ history + survey",
                "+ predicted demo. + history + survey",
                "+ demo. + history + survey",
            ]
        );
        for (i, spec) in canonical_ablations().iter().enumerate() {
            assert_eq!(canonical_index(spec), Some(i));
            spec.validate().unwrap();
        }
    }
}
