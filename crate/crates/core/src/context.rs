//! Rendering of annotator context into the single string every model consumes.
//!
//! Segments appear in the fixed order history, survey, demographics, text and
//! are joined with `" [SEP] "`. Disabled or empty segments are omitted; the
//! text segment is always present.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    AnnotatorId, AnnotatorProfile, Category, Corpus, Demographics, HistoryEntry, RatingRecord, SurveyResponses, TechImpact,
    TextId, ToxicityProblem, YesNo, DEFAULT_HISTORY_CAP,
};

pub const SEPARATOR: &str = "[SEP]";

/// Imputed demographics keyed by annotator, consumed when an ablation asks
/// for predicted values.
pub type PredictedDemographics = BTreeMap<AnnotatorId, Demographics>;
pub const JOINER: &str = " [SEP] ";
const HISTORY_PREFIX: &str = "The annotator has annotated these texts: ";

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("ablation requests predicted demographics but none were supplied for annotator '{0}'")]
    MissingPrediction(AnnotatorId),
    #[error("no profile for annotator '{0}'")]
    MissingProfile(AnnotatorId),
    #[error("invalid ablation: {0}")]
    InvalidAblation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicsSource {
    TrueValues,
    Predicted,
    None,
}

/// Which context segments accompany the target text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationSpec {
    pub use_history: bool,
    pub use_survey: bool,
    pub use_demographics: bool,
    pub demographics_source: DemographicsSource,
}

impl AblationSpec {
    pub const TEXT_ONLY: AblationSpec = AblationSpec {
        use_history: false,
        use_survey: false,
        use_demographics: false,
        demographics_source: DemographicsSource::None,
    };

    pub fn new(history: bool, survey: bool, demographics: DemographicsSource) -> Self {
        Self {
            use_history: history,
            use_survey: survey,
            use_demographics: demographics != DemographicsSource::None,
            demographics_source: demographics,
        }
    }

    /// All segments with true demographics.
    pub fn full() -> Self {
        Self::new(true, true, DemographicsSource::TrueValues)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        let none = self.demographics_source == DemographicsSource::None;
        if none == self.use_demographics {
            return Err(ContextError::InvalidAblation(format!(
                "use_demographics={} conflicts with source {:?}",
                self.use_demographics, self.demographics_source
            )));
        }
        Ok(())
    }

    pub fn uses_predicted(&self) -> bool {
        self.use_demographics && self.demographics_source == DemographicsSource::Predicted
    }

    /// Parses a comma list such as `text,history,survey,demo`.
    ///
    /// Recognised items: `text` (implicit), `history`, `survey`, `demo`
    /// (true demographics), `pdemo` (predicted demographics).
    pub fn parse_list(list: &str) -> Result<Self, ContextError> {
        let mut history = false;
        let mut survey = false;
        let mut demo = DemographicsSource::None;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "text" => {}
                "history" => history = true,
                "survey" => survey = true,
                "demo" | "demographics" => {
                    if demo == DemographicsSource::Predicted {
                        return Err(ContextError::InvalidAblation("both demo and pdemo requested".into()));
                    }
                    demo = DemographicsSource::TrueValues
                }
                "pdemo" | "predicted-demo" => {
                    if demo == DemographicsSource::TrueValues {
                        return Err(ContextError::InvalidAblation("both demo and pdemo requested".into()));
                    }
                    demo = DemographicsSource::Predicted
                }
                other => return Err(ContextError::InvalidAblation(format!("unknown segment '{other}'"))),
            }
        }
        Ok(Self::new(history, survey, demo))
    }
}

impl fmt::Display for AblationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = vec!["text"];
        if self.use_history {
            parts.push("history");
        }
        if self.use_survey {
            parts.push("survey");
        }
        match self.demographics_source {
            DemographicsSource::TrueValues if self.use_demographics => parts.push("demo"),
            DemographicsSource::Predicted if self.use_demographics => parts.push("pdemo"),
            _ => {}
        }
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    History,
    Survey,
    Demographics,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedContext {
    pub segments: Vec<Segment>,
    pub joined: String,
}

impl RenderedContext {
    fn from_segments(segments: Vec<Segment>) -> Self {
        let joined = segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(JOINER);
        Self { segments, joined }
    }

    pub fn separator_count(&self) -> usize {
        self.joined.matches(SEPARATOR).count()
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&str> {
        self.segments.iter().find(|s| s.kind == kind).map(|s| s.text.as_str())
    }

    /// Rebuilds the joined string after replacing the text segment.
    pub fn with_text(&self, text: String) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| match s.kind {
                SegmentKind::Text => Segment {
                    kind: SegmentKind::Text,
                    text: text.clone(),
                },
                _ => s.clone(),
            })
            .collect();
        Self::from_segments(segments)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContextOptions {
    /// Most recent history items kept after leave-one-out exclusion.
    pub history_cap: usize,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }
}

/// "a", "a and b", "a, b, and c".
fn oxford_join(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn slot(value: &Category, name: &str, known: impl FnOnce(&str) -> String) -> String {
    match value {
        Category::Known(label) => known(label),
        Category::Undisclosed => format!("({name}: prefers not to say)"),
    }
}

pub fn render_demographics(d: &Demographics) -> String {
    let age = slot(&d.age_band, "age", |a| format!("{a} year old"));
    let race = slot(&d.race, "race", str::to_string);
    let gender = slot(&d.gender, "gender", str::to_string);
    let education = slot(&d.education, "education", str::to_string);
    let stance = slot(&d.political_stance, "political stance", str::to_string);
    let parental = slot(&d.parental_status, "parental status", |p| format!("is {p}"));
    let religion = slot(&d.religion_importance, "religion importance", str::to_string);

    let mut out = format!(
        "The reader is a {age} {race} {gender} who has {education}, is politically {stance}, {parental}, and thinks religion is {religion}."
    );
    if let Some(lgbt) = &d.lgbt_status {
        out.push_str(" The reader is ");
        out.push_str(&slot(lgbt, "LGBT status", str::to_string));
        out.push('.');
    }
    out
}

pub fn render_survey(s: &SurveyResponses) -> String {
    let mut sentences = Vec::new();

    let mut used: Vec<String> = Vec::new();
    if s.uses_social_media == Some(YesNo::Yes) {
        used.push("social media".into());
    }
    if let Some(forums) = &s.preferred_forums {
        used.extend(forums.iter().cloned());
    }
    match (used.is_empty(), s.uses_social_media) {
        (false, Some(YesNo::No)) => sentences.push(format!("The reader uses {} but not social media.", oxford_join(&used))),
        (false, _) => sentences.push(format!("The reader uses {}.", oxford_join(&used))),
        (true, Some(YesNo::No)) => sentences.push("The reader does not use social media.".into()),
        (true, _) => {}
    }

    let mut clauses: Vec<String> = Vec::new();
    match s.seen_toxic_content {
        Some(YesNo::Yes) => clauses.push("has seen toxic comments".into()),
        Some(YesNo::No) => clauses.push("has not seen toxic comments".into()),
        None => {}
    }
    match s.personally_targeted {
        Some(YesNo::Yes) => clauses.push("has been personally targeted by toxic comments".into()),
        Some(YesNo::No) => clauses.push("has not been personally targeted by toxic comments".into()),
        None => {}
    }
    if let Some(tech) = s.tech_impact_opinion {
        let word = match tech {
            TechImpact::Positive => "positive",
            TechImpact::Neutral => "neutral",
            TechImpact::Negative => "negative",
        };
        clauses.push(format!("thinks technology has a {word} impact on people's lives"));
    }
    match s.toxicity_is_problem {
        Some(ToxicityProblem::Serious) => clauses.push("thinks toxic comments are a serious problem".into()),
        Some(ToxicityProblem::Minor) => clauses.push("thinks toxic comments are a minor problem".into()),
        Some(ToxicityProblem::NotAProblem) => clauses.push("does not think toxic comments are a problem".into()),
        None => {}
    }
    if !clauses.is_empty() {
        sentences.push(format!("The reader {}.", oxford_join(&clauses)));
    }

    sentences.join(" ")
}

/// Renders the annotator's other ratings, excluding `exclude` and keeping the
/// `cap` most recent items. Returns `None` when nothing remains.
pub fn render_history(history: &[HistoryEntry], exclude: &TextId, cap: usize) -> Option<String> {
    let kept: Vec<&HistoryEntry> = history.iter().filter(|h| &h.text_id != exclude).collect();
    let start = kept.len().saturating_sub(cap);
    let items: Vec<String> = kept[start..]
        .iter()
        .map(|h| format!("\"{}\" is rated as {}", h.text, h.rating))
        .collect();
    if items.is_empty() {
        None
    } else {
        Some(format!("{HISTORY_PREFIX}{}", items.join(", ")))
    }
}

/// Renders the context for one record.
///
/// `predicted` supplies imputed demographics and is required when the
/// ablation asks for them. Enabled segments whose source data is missing from
/// the profile are omitted.
pub fn render_context(
    record: &RatingRecord,
    profile: &AnnotatorProfile,
    spec: &AblationSpec,
    predicted: Option<&Demographics>,
    options: &ContextOptions,
) -> Result<RenderedContext, ContextError> {
    spec.validate()?;
    let mut segments = Vec::with_capacity(4);

    if spec.use_history {
        if let Some(text) = render_history(&profile.history, &record.text_id, options.history_cap) {
            segments.push(Segment {
                kind: SegmentKind::History,
                text,
            });
        }
    }
    if spec.use_survey {
        if let Some(survey) = &profile.survey {
            let text = render_survey(survey);
            if !text.is_empty() {
                segments.push(Segment {
                    kind: SegmentKind::Survey,
                    text,
                });
            }
        }
    }
    if spec.use_demographics {
        let source = match spec.demographics_source {
            DemographicsSource::TrueValues => profile.demographics.as_ref(),
            DemographicsSource::Predicted => Some(
                predicted.ok_or_else(|| ContextError::MissingPrediction(profile.annotator_id.clone()))?,
            ),
            DemographicsSource::None => None,
        };
        if let Some(d) = source {
            segments.push(Segment {
                kind: SegmentKind::Demographics,
                text: render_demographics(d),
            });
        }
    }
    segments.push(Segment {
        kind: SegmentKind::Text,
        text: record.text.clone(),
    });

    Ok(RenderedContext::from_segments(segments))
}

/// Renders each record's context, looking profiles and predictions up by
/// annotator.
pub fn render_records<'a>(
    corpus: &Corpus,
    records: impl IntoIterator<Item = &'a RatingRecord>,
    spec: &AblationSpec,
    predicted: Option<&PredictedDemographics>,
    options: &ContextOptions,
) -> Result<Vec<RenderedContext>, ContextError> {
    records
        .into_iter()
        .map(|record| {
            let profile = corpus
                .profile(&record.annotator_id)
                .ok_or_else(|| ContextError::MissingProfile(record.annotator_id.clone()))?;
            let pred = predicted.and_then(|p| p.get(&record.annotator_id));
            render_context(record, profile, spec, pred, options)
        })
        .collect()
}
