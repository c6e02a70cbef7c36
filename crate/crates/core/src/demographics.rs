//! Demographic imputation from survey answers, optionally with the
//! annotator's rated texts.
//!
//! Classifier inputs are built from the survey rendering and history texts
//! only; true demographic fields are read solely as training labels and for
//! accuracy scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::context::{render_survey, PredictedDemographics, SEPARATOR};
use crate::corpus::{AnnotatorId, AnnotatorProfile, Category, Corpus, Demographics, Split, DEFAULT_HISTORY_CAP};
use crate::encoder::{Encoder, ProviderSpec};
use crate::error::ModelError;
use crate::neural::{argmax, softmax, train_with, Activation, DenseNet, TrainConfig};
use crate::scalar::Scalar;

type Result<T, E = ModelError> = std::result::Result<T, E>;

pub const DEMO_HIDDEN: usize = 256;

/// The imputable attributes. Parental status and age are rendered but not
/// imputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicAttribute {
    Race,
    Gender,
    ReligionImportance,
    LgbtStatus,
    Education,
    PoliticalStance,
}

impl DemographicAttribute {
    pub const ALL: [DemographicAttribute; 6] = [
        DemographicAttribute::Race,
        DemographicAttribute::Gender,
        DemographicAttribute::ReligionImportance,
        DemographicAttribute::LgbtStatus,
        DemographicAttribute::Education,
        DemographicAttribute::PoliticalStance,
    ];

    /// Column header used in reports.
    pub fn title(self) -> &'static str {
        match self {
            DemographicAttribute::Race => "Race",
            DemographicAttribute::Gender => "Gender",
            DemographicAttribute::ReligionImportance => "Importance of Religion",
            DemographicAttribute::LgbtStatus => "LGBT Status",
            DemographicAttribute::Education => "Education",
            DemographicAttribute::PoliticalStance => "Political Stance",
        }
    }

    pub fn value(self, d: &Demographics) -> Option<&Category> {
        match self {
            DemographicAttribute::Race => Some(&d.race),
            DemographicAttribute::Gender => Some(&d.gender),
            DemographicAttribute::ReligionImportance => Some(&d.religion_importance),
            DemographicAttribute::LgbtStatus => d.lgbt_status.as_ref(),
            DemographicAttribute::Education => Some(&d.education),
            DemographicAttribute::PoliticalStance => Some(&d.political_stance),
        }
    }

    /// The known label of this attribute for a profile, if any.
    pub fn label(self, profile: &AnnotatorProfile) -> Option<&str> {
        profile.demographics.as_ref().and_then(|d| self.value(d)).and_then(Category::label)
    }
}

impl fmt::Display for DemographicAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    SurveyOnly,
    SurveyPlusText,
}

impl FromStr for InputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "survey" | "survey_only" => Ok(InputMode::SurveyOnly),
            "survey+text" | "survey_plus_text" => Ok(InputMode::SurveyPlusText),
            other => Err(format!("unknown input mode '{other}' (expected survey or survey+text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicTask {
    pub attribute: DemographicAttribute,
    /// Sorted, unique, non-empty.
    pub classes: Vec<String>,
    pub input_mode: InputMode,
}

impl DemographicTask {
    pub fn new(attribute: DemographicAttribute, mut classes: Vec<String>, input_mode: InputMode) -> Result<Self> {
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(ModelError::Config(format!("{attribute} task has no classes")));
        }
        Ok(Self {
            attribute,
            classes,
            input_mode,
        })
    }

    /// Classes observed among train-split annotators.
    pub fn from_corpus(corpus: &Corpus, attribute: DemographicAttribute, input_mode: InputMode) -> Result<Self> {
        let classes = corpus
            .annotators_in(Split::Train)
            .into_iter()
            .filter_map(|p| attribute.label(p).map(str::to_string))
            .collect();
        Self::new(attribute, classes, input_mode).map_err(|_| {
            ModelError::Config(format!("{attribute} is undisclosed for every train-split annotator"))
        })
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }
}

/// The classifier input for one annotator; `None` without survey data.
pub fn classifier_input(profile: &AnnotatorProfile, mode: InputMode, history_cap: usize) -> Option<String> {
    let survey = render_survey(profile.survey.as_ref()?);
    if survey.is_empty() {
        return None;
    }
    match mode {
        InputMode::SurveyOnly => Some(survey),
        InputMode::SurveyPlusText => {
            let start = profile.history.len().saturating_sub(history_cap);
            let mut parts = vec![survey];
            parts.extend(profile.history[start..].iter().map(|h| h.text.clone()));
            Some(parts.join(&format!(" {SEPARATOR} ")))
        }
    }
}

/// Majority-class prediction and its accuracy on an evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub attribute: DemographicAttribute,
    pub class: String,
    /// Classes sharing the modal training count, in class order; the first
    /// is the prediction.
    pub tied: Vec<String>,
    pub accuracy: f64,
    /// Labeled annotators in the evaluation split.
    pub n: usize,
}

/// Predicts the modal train-split class; ties go to the lowest class in
/// sorted order. Accuracy is that class's frequency among labeled
/// annotators of `eval_split`.
pub fn majority_baseline(corpus: &Corpus, task: &DemographicTask, eval_split: Split) -> Result<MajorityBaseline> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in corpus.annotators_in(Split::Train) {
        if let Some(label) = task.attribute.label(p) {
            *counts.entry(label).or_default() += 1;
        }
    }
    let top = counts
        .values()
        .copied()
        .max()
        .ok_or_else(|| ModelError::Config(format!("no labeled train-split annotators for {}", task.attribute)))?;
    let tied: Vec<String> = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| l.to_string()).collect();
    let class = tied[0].clone();

    let labels: Vec<&str> = corpus
        .annotators_in(eval_split)
        .into_iter()
        .filter_map(|p| task.attribute.label(p))
        .collect();
    if labels.is_empty() {
        return Err(ModelError::Config(format!("no labeled {eval_split}-split annotators for {}", task.attribute)));
    }
    let hits = labels.iter().filter(|l| **l == class).count();
    Ok(MajorityBaseline {
        attribute: task.attribute,
        class,
        tied,
        accuracy: hits as f64 / labels.len() as f64,
        n: labels.len(),
    })
}

/// A predicted class with its softmax probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub class: String,
    pub confidence: f64,
}

/// Anything that maps classifier inputs to classes of one attribute.
pub trait AttributeClassifier {
    fn attribute(&self) -> DemographicAttribute;
    fn source_id(&self) -> String;
    fn classify(&self, inputs: &[String]) -> Result<Vec<ClassPrediction>>;
}

/// Provider embedding of the classifier input, then `dim -> 256 -> classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoClassifier<T> {
    pub task: DemographicTask,
    pub provider: ProviderSpec,
    pub head: DenseNet<T>,
    pub history_cap: usize,
}

impl<T: Scalar> DemoClassifier<T> {
    pub fn predict_inputs(&self, encoder: &Encoder, inputs: &[String]) -> Result<Vec<ClassPrediction>> {
        if encoder.spec() != &self.provider {
            return Err(ModelError::Config("encoder does not match the classifier's provider".into()));
        }
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let x = embed_inputs::<T>(encoder, inputs)?;
        let logits = self.head.forward_batch(x.view())?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| {
                let probs = softmax(&row.to_vec());
                let best = argmax(&probs);
                ClassPrediction {
                    class: self.task.classes[best].clone(),
                    confidence: probs[best].as_f64(),
                }
            })
            .collect())
    }

    /// Accuracy over labeled annotators of `split` that have survey data.
    pub fn accuracy(&self, encoder: &Encoder, corpus: &Corpus, split: Split) -> Result<(f64, usize)> {
        let mut inputs = Vec::new();
        let mut truth = Vec::new();
        for p in corpus.annotators_in(split) {
            if let (Some(label), Some(input)) =
                (self.task.attribute.label(p), classifier_input(p, self.task.input_mode, self.history_cap))
            {
                inputs.push(input);
                truth.push(label.to_string());
            }
        }
        if inputs.is_empty() {
            return Err(ModelError::Config(format!("no labeled {split}-split annotators for {}", self.task.attribute)));
        }
        let preds = self.predict_inputs(encoder, &inputs)?;
        let hits = preds.iter().zip(&truth).filter(|(p, t)| &p.class == *t).count();
        Ok((hits as f64 / truth.len() as f64, truth.len()))
    }

    pub fn bind<'a>(&'a self, encoder: &'a Encoder) -> BoundClassifier<'a, T> {
        BoundClassifier { model: self, encoder }
    }
}

/// A classifier paired with the encoder it needs.
pub struct BoundClassifier<'a, T> {
    model: &'a DemoClassifier<T>,
    encoder: &'a Encoder,
}

impl<T: Scalar> AttributeClassifier for BoundClassifier<'_, T> {
    fn attribute(&self) -> DemographicAttribute {
        self.model.task.attribute
    }

    fn source_id(&self) -> String {
        format!("demo-mlp/{}", self.model.provider.label())
    }

    fn classify(&self, inputs: &[String]) -> Result<Vec<ClassPrediction>> {
        self.model.predict_inputs(self.encoder, inputs)
    }
}

fn embed_inputs<T: Scalar>(encoder: &Encoder, inputs: &[String]) -> Result<Array2<T>> {
    let vectors = encoder.embed_batch(inputs)?;
    let mut x = Array2::zeros((inputs.len(), encoder.dimension()));
    for (mut row, v) in x.rows_mut().into_iter().zip(&vectors) {
        row.iter_mut().zip(&v.values).for_each(|(r, &f)| *r = T::lit(f));
    }
    Ok(x)
}

/// Fits one attribute classifier on train-split annotators with survey data
/// and a known label.
pub fn demo_train<T: Scalar>(
    corpus: &Corpus,
    task: &DemographicTask,
    encoder: &Encoder,
    cfg: &TrainConfig,
) -> Result<DemoClassifier<T>> {
    let history_cap = DEFAULT_HISTORY_CAP;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for p in corpus.annotators_in(Split::Train) {
        let Some(label) = task.attribute.label(p) else { continue };
        let Some(index) = task.class_index(label) else { continue };
        if let Some(input) = classifier_input(p, task.input_mode, history_cap) {
            inputs.push(input);
            labels.push(index);
        }
    }
    if inputs.is_empty() {
        return Err(ModelError::Config(format!(
            "no train-split annotator has both survey data and a disclosed {}",
            task.attribute
        )));
    }
    let x = embed_inputs::<T>(encoder, &inputs)?;
    let head = DenseNet::new(&[encoder.dimension(), DEMO_HIDDEN, task.classes.len()], Activation::Relu, cfg.seed)?;
    let (head, trace) = train_with(head, &x, &labels, cfg, |_, _, _| {})?;
    log::info!(
        "{} classifier: {} examples, final loss {:.4}",
        task.attribute,
        labels.len(),
        trace.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(DemoClassifier {
        task: task.clone(),
        provider: encoder.spec().clone(),
        head,
        history_cap,
    })
}

/// Trains all six attribute classifiers.
pub fn demo_train_all<T: Scalar>(
    corpus: &Corpus,
    mode: InputMode,
    encoder: &Encoder,
    cfg: &TrainConfig,
) -> Result<Vec<DemoClassifier<T>>> {
    DemographicAttribute::ALL
        .iter()
        .map(|&a| demo_train(corpus, &DemographicTask::from_corpus(corpus, a, mode)?, encoder, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedDemographics {
    pub annotator_id: AnnotatorId,
    pub attributes: BTreeMap<DemographicAttribute, ClassPrediction>,
    pub source_model: String,
}

impl ImputedDemographics {
    /// Demographics for rendering. Non-imputed slots are undisclosed.
    pub fn to_demographics(&self) -> Demographics {
        let get = |a| {
            self.attributes
                .get(&a)
                .map_or(Category::Undisclosed, |p: &ClassPrediction| Category::known(p.class.clone()))
        };
        Demographics {
            race: get(DemographicAttribute::Race),
            gender: get(DemographicAttribute::Gender),
            religion_importance: get(DemographicAttribute::ReligionImportance),
            lgbt_status: Some(get(DemographicAttribute::LgbtStatus)),
            education: get(DemographicAttribute::Education),
            parental_status: Category::Undisclosed,
            political_stance: get(DemographicAttribute::PoliticalStance),
            age_band: Category::Undisclosed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub predictions: BTreeMap<AnnotatorId, ImputedDemographics>,
    /// One entry per annotator skipped for lack of survey data.
    pub warnings: Vec<String>,
}

impl Imputation {
    pub fn predicted(&self) -> PredictedDemographics {
        self.predictions
            .iter()
            .map(|(id, p)| (id.clone(), p.to_demographics()))
            .collect()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in self.predictions.values() {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut predictions = BTreeMap::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let p: ImputedDemographics =
                serde_json::from_str(&line).map_err(|e| ModelError::Config(format!("predictions line {}: {e}", n + 1)))?;
            predictions.insert(p.annotator_id.clone(), p);
        }
        Ok(Self {
            predictions,
            warnings: Vec::new(),
        })
    }
}

/// Imputes the six attributes for every annotator with survey data.
pub fn impute(
    corpus: &Corpus,
    classifiers: &[&dyn AttributeClassifier],
    mode: InputMode,
    history_cap: usize,
) -> Result<Imputation> {
    for a in DemographicAttribute::ALL {
        let n = classifiers.iter().filter(|c| c.attribute() == a).count();
        if n != 1 {
            return Err(ModelError::Config(format!("imputation needs exactly one {a} classifier, got {n}")));
        }
    }
    if classifiers.len() != DemographicAttribute::ALL.len() {
        return Err(ModelError::Config("imputation takes exactly six classifiers".into()));
    }
    let mut out = Imputation::default();
    let mut ids = Vec::new();
    let mut inputs = Vec::new();
    for (id, profile) in corpus.annotators() {
        match classifier_input(profile, mode, history_cap) {
            Some(input) => {
                ids.push(id.clone());
                inputs.push(input);
            }
            None => {
                log::warn!("annotator {id} has no survey data; skipped");
                out.warnings.push(format!("annotator {id} has no survey data"));
            }
        }
    }
    let source_model = classifiers.first().map(|c| c.source_id()).unwrap_or_default();
    for id in &ids {
        out.predictions.insert(
            id.clone(),
            ImputedDemographics {
                annotator_id: id.clone(),
                attributes: BTreeMap::new(),
                source_model: source_model.clone(),
            },
        );
    }
    if inputs.is_empty() {
        return Ok(out);
    }
    for c in classifiers {
        let preds = c.classify(&inputs)?;
        if preds.len() != inputs.len() {
            return Err(ModelError::Config(format!("{} classifier returned {} predictions for {} inputs", c.attribute(), preds.len(), inputs.len())));
        }
        for (id, p) in ids.iter().zip(preds) {
            out.predictions.get_mut(id).expect("seeded above").attributes.insert(c.attribute(), p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::render_demographics;
    use crate::corpus::{generate_corpus, DemographicCoupling, SplitUnit, SynthConfig};

    struct Constant(DemographicAttribute, &'static str);

    impl AttributeClassifier for Constant {
        fn attribute(&self) -> DemographicAttribute {
            self.0
        }
        fn source_id(&self) -> String {
            "constant".into()
        }
        fn classify(&self, inputs: &[String]) -> Result<Vec<ClassPrediction>> {
            Ok(inputs
                .iter()
                .map(|_| ClassPrediction {
                    class: self.1.into(),
                    confidence: 1.0,
                })
                .collect())
        }
    }

    fn constants() -> Vec<Constant> {
        vec![
            Constant(DemographicAttribute::Race, "Asian"),
            Constant(DemographicAttribute::Gender, "female"),
            Constant(DemographicAttribute::ReligionImportance, "not important"),
            Constant(DemographicAttribute::LgbtStatus, "LGBTQ+"),
            Constant(DemographicAttribute::Education, "a graduate degree"),
            Constant(DemographicAttribute::PoliticalStance, "liberal"),
        ]
    }

    fn corpus(coupling: DemographicCoupling) -> Corpus {
        let mut cfg = SynthConfig::new(5, 60, 3, 6);
        cfg.coupling = coupling;
        cfg.split_unit = SplitUnit::Annotator;
        generate_corpus(&cfg).unwrap().corpus
    }

    #[test]
    fn constant_classifiers_impute_constants() {
        let c = corpus(DemographicCoupling::Independent);
        let cs = constants();
        let refs: Vec<&dyn AttributeClassifier> = cs.iter().map(|c| c as &dyn AttributeClassifier).collect();
        let out = impute(&c, &refs, InputMode::SurveyOnly, 20).unwrap();
        assert_eq!(out.predictions.len(), c.annotators().len());
        for p in out.predictions.values() {
            assert_eq!(p.attributes.len(), 6);
            assert_eq!(p.attributes[&DemographicAttribute::Race].class, "Asian");
            let rendered = render_demographics(&p.to_demographics());
            assert!(rendered.starts_with("The reader is a (age: prefers not to say) Asian female"), "{rendered}");
        }
        assert!(impute(&c, &refs[..5], InputMode::SurveyOnly, 20).is_err());
    }

    #[test]
    fn annotators_without_survey_are_skipped_with_warning() {
        let c = corpus(DemographicCoupling::Independent);
        let (records, mut profiles): (Vec<_>, Vec<_>) = (c.records().to_vec(), c.annotators().values().cloned().collect::<Vec<_>>());
        profiles[0].survey = None;
        let c = Corpus::new(records, profiles).unwrap();
        let cs = constants();
        let refs: Vec<&dyn AttributeClassifier> = cs.iter().map(|c| c as &dyn AttributeClassifier).collect();
        let out = impute(&c, &refs, InputMode::SurveyOnly, 20).unwrap();
        assert_eq!(out.predictions.len(), c.annotators().len() - 1);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn inputs_never_mention_demographics() {
        let c = corpus(DemographicCoupling::SurveyDetermined);
        for p in c.annotators().values() {
            for mode in [InputMode::SurveyOnly, InputMode::SurveyPlusText] {
                let input = classifier_input(p, mode, 20).unwrap();
                assert!(!input.contains("The reader is a"), "{input}");
            }
        }
    }

    #[test]
    fn single_class_labels_predict_that_class() {
        let c = corpus(DemographicCoupling::Independent);
        let task = DemographicTask::new(DemographicAttribute::Gender, vec!["female".into()], InputMode::SurveyOnly).unwrap();
        let profiles: Vec<AnnotatorProfile> = c
            .annotators()
            .values()
            .cloned()
            .map(|mut p| {
                p.demographics.as_mut().unwrap().gender = Category::known("female");
                p
            })
            .collect();
        let c = Corpus::new(c.records().to_vec(), profiles).unwrap();
        let encoder = Encoder::from_spec(ProviderSpec::mock_lexical(32, 0)).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..Default::default()
        };
        let clf = demo_train::<f32>(&c, &task, &encoder, &cfg).unwrap();
        let (acc, n) = clf.accuracy(&encoder, &c, Split::Train).unwrap();
        assert_eq!(acc, 1.0);
        assert!(n > 0);
    }

    #[test]
    fn undisclosed_attribute_is_an_error() {
        let c = corpus(DemographicCoupling::Independent);
        let profiles: Vec<AnnotatorProfile> = c
            .annotators()
            .values()
            .cloned()
            .map(|mut p| {
                p.demographics.as_mut().unwrap().race = Category::Undisclosed;
                p
            })
            .collect();
        let c = Corpus::new(c.records().to_vec(), profiles).unwrap();
        assert!(DemographicTask::from_corpus(&c, DemographicAttribute::Race, InputMode::SurveyOnly).is_err());
    }

    #[test]
    fn majority_uniform_tie() {
        let c = corpus(DemographicCoupling::Independent);
        let profiles: Vec<AnnotatorProfile> = c
            .annotators()
            .values()
            .cloned()
            .enumerate()
            .map(|(i, mut p)| {
                p.demographics.as_mut().unwrap().gender = Category::known(if i % 2 == 0 { "male" } else { "female" });
                p
            })
            .collect();
        let c = Corpus::new(c.records().to_vec(), profiles).unwrap();
        let c = c.resplit(|_, _| Split::Train);
        let task = DemographicTask::from_corpus(&c, DemographicAttribute::Gender, InputMode::SurveyOnly).unwrap();
        let m = majority_baseline(&c, &task, Split::Train).unwrap();
        assert_eq!(m.tied, vec!["female".to_string(), "male".to_string()]);
        assert_eq!(m.class, "female");
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn survey_signal_beats_majority() {
        let mut cfg = SynthConfig::new(5, 120, 3, 6);
        cfg.coupling = DemographicCoupling::SurveyDetermined;
        cfg.split_unit = SplitUnit::Annotator;
        cfg.split_fractions = [0.6, 0.4, 0.0];
        let c = generate_corpus(&cfg).unwrap().corpus;
        let encoder = Encoder::from_spec(ProviderSpec::mock_lexical(128, 0)).unwrap();
        let task = DemographicTask::from_corpus(&c, DemographicAttribute::Race, InputMode::SurveyOnly).unwrap();
        let train = TrainConfig {
            epochs: 60,
            learning_rate: 3e-3,
            batch_size: 8,
            ..Default::default()
        };
        let clf = demo_train::<f32>(&c, &task, &encoder, &train).unwrap();
        let (acc, _) = clf.accuracy(&encoder, &c, Split::Dev).unwrap();
        let base = majority_baseline(&c, &task, Split::Dev).unwrap();
        assert!(acc > base.accuracy, "{acc} vs {}", base.accuracy);
    }

    #[test]
    fn predictions_file_round_trip() {
        let c = corpus(DemographicCoupling::Independent);
        let cs = constants();
        let refs: Vec<&dyn AttributeClassifier> = cs.iter().map(|c| c as &dyn AttributeClassifier).collect();
        let out = impute(&c, &refs, InputMode::SurveyOnly, 20).unwrap();
        let mut buf = Vec::new();
        out.write_jsonl(&mut buf).unwrap();
        let back = Imputation::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.predictions, out.predictions);
    }
}
