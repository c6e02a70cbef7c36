use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CorpusError;

/// Highest rating on the toxicity scale; 0 is least toxic.
pub const MAX_RATING: u8 = 4;

/// Number of rating classes.
pub const NUM_RATINGS: usize = MAX_RATING as usize + 1;

/// Default cap on the number of history items kept per annotator.
pub const DEFAULT_HISTORY_CAP: usize = 20;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Identifier of a rated text.
    TextId
);
string_id!(
    /// Identifier of an annotator.
    AnnotatorId
);

/// A toxicity rating in `0..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Rating(u8);

impl Rating {
    pub fn new(value: i64) -> Result<Self, CorpusError> {
        if (0..=MAX_RATING as i64).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(CorpusError::RatingOutOfRange { value })
        }
    }

    /// Builds a rating from a class index; panics above 4.
    pub fn from_index(index: usize) -> Self {
        assert!(index <= MAX_RATING as usize, "rating index {index} out of range");
        Self(index as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn abs_diff(self, other: Rating) -> u8 {
        self.0.abs_diff(other.0)
    }
}

impl<'de> Deserialize<'de> for Rating {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(de)?;
        Rating::new(raw).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::Validation(format!("unknown split '{other}'"))),
        }
    }
}

/// A demographic value: a known category label or the explicit undisclosed marker.
///
/// Serialized as a plain string; the literal `"undisclosed"` maps to
/// [`Category::Undisclosed`]. Empty strings are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Known(String),
    Undisclosed,
}

impl Category {
    pub const UNDISCLOSED: &'static str = "undisclosed";

    pub fn known(label: impl Into<String>) -> Self {
        Category::Known(label.into())
    }

    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(CorpusError::Validation("empty category value".into()));
        }
        if trimmed == Self::UNDISCLOSED {
            Ok(Category::Undisclosed)
        } else {
            Ok(Category::Known(trimmed.to_string()))
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Category::Known(s) => Some(s),
            Category::Undisclosed => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Category::Known(s) => s,
            Category::Undisclosed => Self::UNDISCLOSED,
        }
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(de)?;
        Category::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Annotator demographics.
///
/// `lgbt_status` may be absent entirely (the attribute was not part of the
/// profile), in which case its sentence is left out of the rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographics {
    pub race: Category,
    pub gender: Category,
    pub religion_importance: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lgbt_status: Option<Category>,
    pub education: Category,
    pub parental_status: Category,
    pub political_stance: Category,
    pub age_band: Category,
}

impl Demographics {
    pub fn undisclosed() -> Self {
        Self {
            race: Category::Undisclosed,
            gender: Category::Undisclosed,
            religion_importance: Category::Undisclosed,
            lgbt_status: Some(Category::Undisclosed),
            education: Category::Undisclosed,
            parental_status: Category::Undisclosed,
            political_stance: Category::Undisclosed,
            age_band: Category::Undisclosed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TechImpact {
    Positive,
    Neutral,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToxicityProblem {
    Serious,
    Minor,
    NotAProblem,
}

/// Survey answers. Every field is optional but at least one must be present;
/// unknown fields are rejected when loading.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyResponses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_forums: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uses_social_media: Option<YesNo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_toxic_content: Option<YesNo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personally_targeted: Option<YesNo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toxicity_is_problem: Option<ToxicityProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_impact_opinion: Option<TechImpact>,
}

impl SurveyResponses {
    pub fn is_empty(&self) -> bool {
        self.preferred_forums.is_none()
            && self.uses_social_media.is_none()
            && self.seen_toxic_content.is_none()
            && self.personally_targeted.is_none()
            && self.toxicity_is_problem.is_none()
            && self.tech_impact_opinion.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub text_id: TextId,
    pub text: String,
    pub rating: Rating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorProfile {
    pub annotator_id: AnnotatorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<SurveyResponses>,
    /// Oldest first.
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
}

impl AnnotatorProfile {
    pub fn bare(annotator_id: impl Into<AnnotatorId>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            demographics: None,
            survey: None,
            history: Vec::new(),
        }
    }
}

impl From<String> for AnnotatorId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<String> for TextId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub text_id: TextId,
    pub annotator_id: AnnotatorId,
    pub text: String,
    pub rating: Rating,
    pub split: Split,
}

impl RatingRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            text_id: self.text_id.clone(),
            annotator_id: self.annotator_id.clone(),
        }
    }
}

/// `(text_id, annotator_id)`, unique within a corpus. Displayed as `text:annotator`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub text_id: TextId,
    pub annotator_id: AnnotatorId,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.text_id, self.annotator_id)
    }
}

impl std::str::FromStr for RecordKey {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, a) = s
            .split_once(':')
            .ok_or_else(|| CorpusError::Validation(format!("record key '{s}' is not TEXT_ID:ANNOTATOR_ID")))?;
        if t.is_empty() || a.is_empty() {
            return Err(CorpusError::Validation(format!("record key '{s}' has an empty part")));
        }
        Ok(RecordKey {
            text_id: TextId::new(t),
            annotator_id: AnnotatorId::new(a),
        })
    }
}
