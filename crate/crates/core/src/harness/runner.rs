use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use super::report::{MatrixReport, MetricsRow};
use super::spec::{canonical_index, row_label, ExperimentSpec, PredictorSpec};
use super::{mae, HarnessError};
use crate::context::{ContextOptions, PredictedDemographics};
use crate::corpus::{Corpus, Rating, RatingRecord, DEFAULT_HISTORY_CAP};
use crate::demographics::{demo_train_all, impute, AttributeClassifier, InputMode};
use crate::embed_head::{embedhead_train, EmbedHeadConfig};
use crate::encoder::{Encoder, ProviderSpec};
use crate::icl::{backend_from_spec, build_prompt, icl_run};
use crate::ncf::{ncf_train, NcfConfig};
use crate::neural::TrainConfig;
use crate::ModelError;

/// Predictions for one cell, aligned with `corpus.records_in(spec.split)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellOutcome {
    pub predictions: Vec<Rating>,
    pub parse_failures: usize,
    pub fallbacks: usize,
}

pub trait CellRunner {
    fn run_cell(
        &mut self,
        corpus: &Corpus,
        spec: &ExperimentSpec,
        predicted: Option<&PredictedDemographics>,
    ) -> Result<CellOutcome, HarnessError>;
}

/// Produces predicted demographics for the whole corpus.
pub trait Imputer {
    fn impute(&mut self, corpus: &Corpus) -> Result<PredictedDemographics, HarnessError>;
}

/// Trains every model in f32 on the train split and shares one encoder per
/// provider, so contexts repeated across cells are embedded once.
#[derive(Debug, Default)]
pub struct StandardRunner {
    cache_dir: Option<PathBuf>,
    encoders: HashMap<ProviderSpec, Arc<Encoder>>,
}

impl StandardRunner {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        Self {
            cache_dir,
            encoders: HashMap::new(),
        }
    }

    pub fn encoder(&mut self, provider: &ProviderSpec) -> Result<Arc<Encoder>, HarnessError> {
        if let Some(e) = self.encoders.get(provider) {
            return Ok(Arc::clone(e));
        }
        let encoder = Arc::new(open_encoder(provider, self.cache_dir.as_ref())?);
        self.encoders.insert(provider.clone(), Arc::clone(&encoder));
        Ok(encoder)
    }
}

fn open_encoder(provider: &ProviderSpec, cache_dir: Option<&PathBuf>) -> Result<Encoder, HarnessError> {
    let mut encoder = Encoder::from_spec(provider.clone())?;
    if let Some(dir) = cache_dir {
        encoder = encoder.with_cache_dir(dir)?;
    }
    Ok(encoder)
}

fn seeded(train: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..train.clone()
    }
}

impl CellRunner for StandardRunner {
    fn run_cell(
        &mut self,
        corpus: &Corpus,
        spec: &ExperimentSpec,
        predicted: Option<&PredictedDemographics>,
    ) -> Result<CellOutcome, HarnessError> {
        let records: Vec<&RatingRecord> = corpus.records_in(spec.split).collect();
        match &spec.predictor {
            PredictorSpec::Ncf { provider, config, train } => {
                let encoder = self.encoder(provider)?;
                let cfg = NcfConfig {
                    ablation: spec.ablation,
                    ..config.clone()
                };
                let (model, _) = ncf_train::<f32>(corpus, &encoder, &cfg, &seeded(train, spec.seed), predicted)?;
                Ok(CellOutcome {
                    predictions: model.predict_records(&encoder, corpus, &records, predicted)?,
                    ..Default::default()
                })
            }
            PredictorSpec::EmbedHead { provider, config, train } => {
                let encoder = self.encoder(provider)?;
                let cfg = EmbedHeadConfig {
                    ablation: spec.ablation,
                    track_dev: false,
                    ..config.clone()
                };
                let (model, _) = embedhead_train::<f32>(corpus, &encoder, &cfg, &seeded(train, spec.seed), predicted)?;
                Ok(CellOutcome {
                    predictions: model.predict_records(&encoder, corpus, &records, predicted)?,
                    ..Default::default()
                })
            }
            PredictorSpec::Icl {
                chat,
                stub_replies,
                policy,
            } => {
                let backend = backend_from_spec(chat, stub_replies.as_deref())?;
                let options = ContextOptions::default();
                let pairs = records
                    .iter()
                    .map(|r| {
                        let profile = corpus
                            .profile(&r.annotator_id)
                            .ok_or_else(|| ModelError::MissingProfile(r.annotator_id.clone()))?;
                        let pd = predicted.and_then(|p| p.get(&r.annotator_id));
                        Ok(build_prompt(r, profile, &spec.ablation, pd, &options)?)
                    })
                    .collect::<Result<Vec<_>, HarnessError>>()?;
                let run = icl_run(backend.as_ref(), chat, &pairs, *policy)?;
                Ok(CellOutcome {
                    predictions: run.ratings(),
                    parse_failures: run.parse_failures,
                    fallbacks: run.fallbacks,
                })
            }
        }
    }
}

/// Trains the six attribute classifiers on the train split and imputes
/// every annotator with survey data.
#[derive(Debug, Clone)]
pub struct StandardImputer {
    pub provider: ProviderSpec,
    pub mode: InputMode,
    pub train: TrainConfig,
    pub cache_dir: Option<PathBuf>,
}

impl Imputer for StandardImputer {
    fn impute(&mut self, corpus: &Corpus) -> Result<PredictedDemographics, HarnessError> {
        let encoder = open_encoder(&self.provider, self.cache_dir.as_ref())?;
        let classifiers = demo_train_all::<f32>(corpus, self.mode, &encoder, &self.train)?;
        let bound: Vec<_> = classifiers.iter().map(|c| c.bind(&encoder)).collect();
        let refs: Vec<&dyn AttributeClassifier> = bound.iter().map(|b| b as &dyn AttributeClassifier).collect();
        Ok(impute(corpus, &refs, self.mode, DEFAULT_HISTORY_CAP)?.predicted())
    }
}

/// Runs every cell, isolating failures into error rows.
///
/// The imputer runs at most once, and only when some cell renders predicted
/// demographics. Rows are grouped by column in first-appearance order and
/// sorted by canonical position within a column.
pub fn run_ablation_matrix(
    corpus: &Corpus,
    specs: &[ExperimentSpec],
    runner: &mut dyn CellRunner,
    imputer: Option<&mut dyn Imputer>,
) -> MatrixReport {
    let predicted: Option<Result<PredictedDemographics, String>> = if specs.iter().any(|s| s.ablation.uses_predicted()) {
        Some(match imputer {
            Some(imp) => imp.impute(corpus).map_err(|e| format!("imputation failed: {e}")),
            None => Err("predicted demographics requested but no imputer configured".to_string()),
        })
    } else {
        None
    };

    let mut columns: Vec<String> = Vec::new();
    for s in specs {
        if !columns.contains(&s.column()) {
            columns.push(s.column());
        }
    }
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by_key(|&i| {
        let s = &specs[i];
        let col = columns.iter().position(|c| *c == s.column()).expect("column listed");
        (col, canonical_index(&s.ablation).unwrap_or(usize::MAX), i)
    });

    let mut report = MatrixReport::default();
    for i in order {
        let spec = &specs[i];
        let truths: Vec<Rating> = corpus.records_in(spec.split).map(|r| r.rating).collect();
        let outcome = match (&predicted, spec.ablation.uses_predicted()) {
            (Some(Err(msg)), true) => Err(msg.clone()),
            (Some(Ok(p)), true) => run_one(runner, corpus, spec, Some(p), &truths),
            _ => run_one(runner, corpus, spec, None, &truths),
        };
        let mut row = MetricsRow {
            column: spec.column(),
            label: row_label(&spec.ablation),
            ablation: spec.ablation,
            split: spec.split,
            n: truths.len(),
            mae: None,
            relative_improvement_vs_text_only: None,
            parse_failures: 0,
            fallbacks: 0,
            error: None,
        };
        match outcome {
            Ok((o, m)) => {
                row.mae = Some(m);
                row.parse_failures = o.parse_failures;
                row.fallbacks = o.fallbacks;
            }
            Err(e) => {
                log::error!("cell '{}' / '{}' failed: {e}", row.column, row.label);
                row.error = Some(e);
            }
        }
        report.rows.push(row);
    }
    report.compute_relative_improvements();
    report
}

fn run_one(
    runner: &mut dyn CellRunner,
    corpus: &Corpus,
    spec: &ExperimentSpec,
    predicted: Option<&PredictedDemographics>,
    truths: &[Rating],
) -> Result<(CellOutcome, f64), String> {
    log::info!("running {} / {} on {}", spec.column(), row_label(&spec.ablation), spec.split);
    let outcome = runner.run_cell(corpus, spec, predicted).map_err(|e| e.to_string())?;
    let m = mae(&outcome.predictions, truths).map_err(|e| e.to_string())?;
    Ok((outcome, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::AblationSpec;
    use crate::corpus::{generate_corpus, Split, SynthConfig};
    use crate::harness::canonical_ablations;
    use crate::icl::{ChatSpec, FallbackPolicy};

    struct Constant(u8);

    impl CellRunner for Constant {
        fn run_cell(&mut self, corpus: &Corpus, spec: &ExperimentSpec, _: Option<&PredictedDemographics>) -> Result<CellOutcome, HarnessError> {
            if spec.ablation.use_history {
                return Err(HarnessError::Config("no history here".into()));
            }
            Ok(CellOutcome {
                predictions: corpus.records_in(spec.split).map(|_| Rating::from_index(self.0 as usize)).collect(),
                ..Default::default()
            })
        }
    }

    fn spec(ablation: AblationSpec, name: &str) -> ExperimentSpec {
        ExperimentSpec {
            name: Some(name.into()),
            predictor: PredictorSpec::Icl {
                chat: ChatSpec::stub("s"),
                stub_replies: None,
                policy: FallbackPolicy::FallbackMid,
            },
            ablation,
            split: Split::Test,
            seed: 0,
        }
    }

    #[test]
    fn errors_are_isolated_and_rows_ordered() {
        let corpus = generate_corpus(&SynthConfig::new(1, 20, 3, 6)).unwrap().corpus;
        let mut specs: Vec<ExperimentSpec> = canonical_ablations().iter().rev().map(|a| spec(*a, "b")).collect();
        specs.insert(3, spec(AblationSpec::TEXT_ONLY, "a"));
        let report = run_ablation_matrix(&corpus, &specs, &mut Constant(2), None);
        assert_eq!(report.rows.len(), 10);
        assert_eq!(report.columns(), ["b", "a"]);
        let b_labels: Vec<&str> = report.rows[..9].iter().map(|r| r.label.as_str()).collect();
        let expected: Vec<String> = canonical_ablations().iter().map(row_label).collect();
        assert_eq!(b_labels, expected);
        for r in &report.rows {
            let should_fail = r.ablation.use_history;
            assert_eq!(r.failed(), should_fail, "{}", r.label);
        }
        // the predicted row fails for lack of an imputer, with the history error masked
        let pd = report.rows.iter().find(|r| r.ablation.uses_predicted()).unwrap();
        assert!(pd.error.as_ref().unwrap().contains("imputer"));
        let survey = report.rows.iter().find(|r| r.label == "+ survey").unwrap();
        assert_eq!(survey.relative_improvement_vs_text_only, Some(0.0));
        assert!(report.any_failed());
    }
}
