//! Rating corpora: schema, validation, file I/O and the synthetic generator.

mod io;
mod schema;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use thiserror::Error;

pub use io::{
    load_corpus, load_corpus_with, read_corpus, save_corpus, write_corpus_csv, write_corpus_jsonl, CorpusFormat,
    LoadOptions,
};
pub use schema::{
    AnnotatorId, AnnotatorProfile, Category, Demographics, HistoryEntry, Rating, RatingRecord, RecordKey, Split,
    SurveyResponses, TechImpact, TextId, ToxicityProblem, YesNo, DEFAULT_HISTORY_CAP, MAX_RATING, NUM_RATINGS,
};
pub use synth::{generate_corpus, DemographicCoupling, SplitUnit, SynthConfig, SyntheticCorpus};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: malformed input: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("rating {value} is outside 0..=4")]
    RatingOutOfRange { value: i64 },
    #[error("row {row}: annotator '{annotator_id}' has no profile")]
    DanglingAnnotator { row: usize, annotator_id: AnnotatorId },
    #[error("row {row}: duplicate record {key}")]
    DuplicateRecord { row: usize, key: RecordKey },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("generator configuration: {0}")]
    Config(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A validated, immutable set of rating records plus annotator profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<RatingRecord>,
    annotators: BTreeMap<AnnotatorId, AnnotatorProfile>,
    index: HashMap<RecordKey, usize>,
}

impl Corpus {
    /// Validates and assembles a corpus using the default history cap.
    pub fn new(
        records: Vec<RatingRecord>,
        profiles: impl IntoIterator<Item = AnnotatorProfile>,
    ) -> Result<Self> {
        Self::with_history_cap(records, profiles, DEFAULT_HISTORY_CAP)
    }

    pub fn with_history_cap(
        records: Vec<RatingRecord>,
        profiles: impl IntoIterator<Item = AnnotatorProfile>,
        history_cap: usize,
    ) -> Result<Self> {
        let mut annotators = BTreeMap::new();
        for profile in profiles {
            validate_profile(&profile, history_cap)?;
            let id = profile.annotator_id.clone();
            if annotators.insert(id.clone(), profile).is_some() {
                return Err(CorpusError::Validation(format!("duplicate profile for annotator '{id}'")));
            }
        }

        let mut index = HashMap::with_capacity(records.len());
        for (row, record) in records.iter().enumerate() {
            if !annotators.contains_key(&record.annotator_id) {
                return Err(CorpusError::DanglingAnnotator {
                    row,
                    annotator_id: record.annotator_id.clone(),
                });
            }
            if record.text.is_empty() {
                return Err(CorpusError::InvalidRow {
                    row,
                    message: "empty text".into(),
                });
            }
            let key = record.key();
            if index.insert(key.clone(), row).is_some() {
                return Err(CorpusError::DuplicateRecord { row, key });
            }
        }

        Ok(Self {
            records,
            annotators,
            index,
        })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            annotators: BTreeMap::new(),
            index: HashMap::new(),
        }
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn annotators(&self) -> &BTreeMap<AnnotatorId, AnnotatorProfile> {
        &self.annotators
    }

    pub fn profile(&self, id: &AnnotatorId) -> Option<&AnnotatorProfile> {
        self.annotators.get(id)
    }

    pub fn record(&self, key: &RecordKey) -> Option<&RatingRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &RatingRecord> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Annotators with at least one record in `split`, in id order.
    pub fn annotators_in(&self, split: Split) -> Vec<&AnnotatorProfile> {
        let ids: std::collections::BTreeSet<&AnnotatorId> =
            self.records_in(split).map(|r| &r.annotator_id).collect();
        ids.into_iter().map(|id| &self.annotators[id]).collect()
    }

    /// Record counts per split; every split is present, counts sum to `len()`.
    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|&s| (s, 0)).collect();
        for record in &self.records {
            *counts.get_mut(&record.split).expect("all splits seeded") += 1;
        }
        counts
    }

    /// Per-annotator record counts, used for quota checks.
    pub fn ratings_per_annotator(&self) -> BTreeMap<&AnnotatorId, usize> {
        let mut counts: BTreeMap<&AnnotatorId, usize> = self.annotators.keys().map(|id| (id, 0)).collect();
        for record in &self.records {
            *counts.entry(&record.annotator_id).or_default() += 1;
        }
        counts
    }

    /// Returns a copy with the records' split tags replaced by `assign`.
    pub fn resplit(&self, mut assign: impl FnMut(usize, &RatingRecord) -> Split) -> Self {
        let mut out = self.clone();
        for (i, record) in out.records.iter_mut().enumerate() {
            let split = assign(i, record);
            record.split = split;
        }
        out
    }
}

fn validate_profile(profile: &AnnotatorProfile, history_cap: usize) -> Result<()> {
    let id = &profile.annotator_id;
    if id.as_str().is_empty() {
        return Err(CorpusError::Validation("empty annotator id".into()));
    }
    if profile.history.len() > history_cap {
        return Err(CorpusError::Validation(format!(
            "annotator '{id}' history has {} entries, cap is {history_cap}",
            profile.history.len()
        )));
    }
    if let Some(survey) = &profile.survey {
        if survey.is_empty() {
            return Err(CorpusError::Validation(format!(
                "annotator '{id}' has a survey block with no answers"
            )));
        }
        if let Some(forums) = &survey.preferred_forums {
            if forums.iter().any(|f| f.trim().is_empty()) {
                return Err(CorpusError::Validation(format!("annotator '{id}' lists an empty forum")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: &str, a: &str, rating: i64, split: Split) -> RatingRecord {
        RatingRecord {
            text_id: t.into(),
            annotator_id: a.into(),
            text: format!("text {t}"),
            rating: Rating::new(rating).unwrap(),
            split,
        }
    }

    #[test]
    fn empty_corpus_split_counts() {
        let counts = Corpus::empty().split_counts();
        assert_eq!(counts[&Split::Train], 0);
        assert_eq!(counts[&Split::Dev], 0);
        assert_eq!(counts[&Split::Test], 0);
    }

    #[test]
    fn dangling_annotator_rejected() {
        let err = Corpus::new(vec![record("t1", "ghost", 1, Split::Train)], Vec::new()).unwrap_err();
        assert!(matches!(err, CorpusError::DanglingAnnotator { row: 0, .. }));
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = Corpus::new(
            vec![record("t1", "a1", 1, Split::Train), record("t1", "a1", 2, Split::Dev)],
            vec![AnnotatorProfile::bare("a1")],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateRecord { row: 1, .. }));
    }

    #[test]
    fn history_cap_enforced() {
        let mut profile = AnnotatorProfile::bare("a1");
        profile.history = (0..3)
            .map(|i| HistoryEntry {
                text_id: TextId::new(format!("t{i}")),
                text: "x".into(),
                rating: Rating::new(0).unwrap(),
            })
            .collect();
        assert!(Corpus::with_history_cap(Vec::new(), vec![profile.clone()], 2).is_err());
        assert!(Corpus::with_history_cap(Vec::new(), vec![profile], 3).is_ok());
    }

    #[test]
    fn split_counts_partition_records() {
        let corpus = Corpus::new(
            vec![
                record("t1", "a1", 0, Split::Train),
                record("t2", "a1", 1, Split::Train),
                record("t3", "a1", 2, Split::Dev),
                record("t4", "a1", 3, Split::Test),
            ],
            vec![AnnotatorProfile::bare("a1")],
        )
        .unwrap();
        let counts = corpus.split_counts();
        assert_eq!(counts[&Split::Train], 2);
        assert_eq!(counts[&Split::Dev], 1);
        assert_eq!(counts[&Split::Test], 1);
        assert_eq!(counts.values().sum::<usize>(), corpus.len());
    }
}
