//! Checks that intercept every string sent to the encoder.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use raterlens::context::{render_records, AblationSpec, ContextOptions, DemographicsSource};
use raterlens::corpus::{generate_corpus, Corpus, DemographicCoupling, RatingRecord, Split, SynthConfig};
use raterlens::demographics::{demo_train_all, impute, AttributeClassifier, InputMode};
use raterlens::embed_head::{embedhead_train, EmbedHeadConfig};
use raterlens::encoder::{EmbeddingBackend, Encoder, MockBackend, MockKind, ProviderSpec, Result};
use raterlens::ncf::{ncf_train, NcfConfig};
use raterlens::neural::TrainConfig;

struct Recording {
    inner: MockBackend,
    seen: Arc<Mutex<Vec<String>>>,
}

impl EmbeddingBackend for Recording {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.seen.lock().unwrap().extend(texts.iter().map(|t| t.to_string()));
        self.inner.embed_texts(texts)
    }
}

fn recording_encoder(dim: usize) -> (Encoder, Arc<Mutex<Vec<String>>>) {
    let spec = ProviderSpec::mock("rec", dim, 3);
    let seen = Arc::new(Mutex::new(Vec::new()));
    let backend = Recording {
        inner: MockBackend::new(&spec, MockKind::Opaque).unwrap(),
        seen: Arc::clone(&seen),
    };
    (Encoder::new(spec, Box::new(backend)).unwrap(), seen)
}

fn corpus(coupling: DemographicCoupling) -> Corpus {
    let mut cfg = SynthConfig::new(11, 30, 3, 6);
    cfg.coupling = coupling;
    generate_corpus(&cfg).unwrap().corpus
}

fn contexts(corpus: &Corpus, split: Split, spec: &AblationSpec) -> BTreeSet<String> {
    let records: Vec<&RatingRecord> = corpus.records_in(split).collect();
    render_records(corpus, records, spec, None, &ContextOptions::default())
        .unwrap()
        .into_iter()
        .map(|c| c.joined)
        .collect()
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        ..Default::default()
    }
}

#[test]
fn ablation_changes_what_the_encoder_sees() {
    let corpus = corpus(DemographicCoupling::Independent);
    let mut seen_by_spec = Vec::new();
    for spec in [
        AblationSpec::TEXT_ONLY,
        AblationSpec::new(true, false, DemographicsSource::None),
        AblationSpec::new(false, true, DemographicsSource::None),
        AblationSpec::full(),
    ] {
        let (encoder, seen) = recording_encoder(8);
        let cfg = EmbedHeadConfig {
            ablation: spec,
            track_dev: false,
            ..Default::default()
        };
        embedhead_train::<f32>(&corpus, &encoder, &cfg, &quick(), None).unwrap();
        let inputs: BTreeSet<String> = seen.lock().unwrap().iter().cloned().collect();
        if spec == AblationSpec::TEXT_ONLY {
            assert!(inputs.iter().all(|t| !t.contains("[SEP]")));
        }
        seen_by_spec.push(inputs);
    }
    for i in 0..seen_by_spec.len() {
        for j in i + 1..seen_by_spec.len() {
            assert!(seen_by_spec[i].is_disjoint(&seen_by_spec[j]), "specs {i} and {j} share encoder inputs");
        }
    }
}

#[test]
fn training_never_embeds_held_out_contexts() {
    let corpus = corpus(DemographicCoupling::Independent);
    let spec = AblationSpec::full();
    let train = contexts(&corpus, Split::Train, &spec);
    let held_out: BTreeSet<String> = contexts(&corpus, Split::Test, &spec)
        .union(&contexts(&corpus, Split::Dev, &spec))
        .filter(|c| !train.contains(*c))
        .cloned()
        .collect();
    assert!(!held_out.is_empty());

    let (encoder, seen) = recording_encoder(8);
    let cfg = EmbedHeadConfig {
        ablation: spec,
        track_dev: false,
        ..Default::default()
    };
    embedhead_train::<f32>(&corpus, &encoder, &cfg, &quick(), None).unwrap();
    let ncf = NcfConfig {
        ablation: spec,
        embedding_dim: 8,
        ..Default::default()
    };
    ncf_train::<f32>(&corpus, &encoder, &ncf, &quick(), None).unwrap();
    let inputs = seen.lock().unwrap();
    assert!(!inputs.is_empty());
    assert!(inputs.iter().all(|t| !held_out.contains(t)));
}

#[test]
fn imputation_reads_only_survey_and_rated_texts() {
    let corpus = corpus(DemographicCoupling::SurveyDetermined);
    for mode in [InputMode::SurveyOnly, InputMode::SurveyPlusText] {
        let (encoder, seen) = recording_encoder(16);
        let classifiers = demo_train_all::<f32>(&corpus, mode, &encoder, &quick()).unwrap();
        let bound: Vec<_> = classifiers.iter().map(|c| c.bind(&encoder)).collect();
        let refs: Vec<&dyn AttributeClassifier> = bound.iter().map(|b| b as &dyn AttributeClassifier).collect();
        let imputation = impute(&corpus, &refs, mode, 20).unwrap();
        assert_eq!(imputation.predictions.len(), corpus.annotators().len());

        let inputs = seen.lock().unwrap();
        assert!(!inputs.is_empty());
        for input in inputs.iter() {
            assert!(input.starts_with("The reader uses") || input.starts_with("The reader does not use"), "{input}");
            assert!(!input.contains("The reader is a"), "demographics leaked: {input}");
            assert_eq!(input.contains("[SEP]"), mode == InputMode::SurveyPlusText, "{input}");
        }
    }
}
