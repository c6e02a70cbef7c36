//! JSON-lines and CSV corpus files.
//!
//! JSONL: one object per line, discriminated by `"kind"`: `"profile"` lines
//! carry an [`AnnotatorProfile`], `"record"` lines a [`RatingRecord`]. Writers
//! emit profiles first (ordered by annotator id), then records in corpus order.
//!
//! CSV: records only, header `text_id,annotator_id,text,rating,split`.
//! Profiles for a CSV import come from a JSONL file of profile lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{AnnotatorProfile, HistoryEntry, Rating, RatingRecord};
use super::{Corpus, CorpusError, Demographics, Result, Split, SurveyResponses, DEFAULT_HISTORY_CAP};
use crate::corpus::{AnnotatorId, TextId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(CorpusError::Validation(format!("unknown corpus format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub history_cap: usize,
    /// Profiles for CSV imports (JSONL profile lines).
    pub profiles: Option<PathBuf>,
    /// When set, annotators whose record count differs produce a warning.
    pub expected_ratings_per_annotator: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            history_cap: DEFAULT_HISTORY_CAP,
            profiles: None,
            expected_ratings_per_annotator: None,
        }
    }
}

// Ratings are read as plain integers first so an out-of-range value becomes a
// validation error with its row number rather than a generic parse failure.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawLine {
    Record(RawRecord),
    Profile(RawProfile),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    text_id: TextId,
    annotator_id: AnnotatorId,
    text: String,
    rating: i64,
    split: Split,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    annotator_id: AnnotatorId,
    #[serde(default)]
    demographics: Option<Demographics>,
    #[serde(default)]
    survey: Option<SurveyResponses>,
    #[serde(default)]
    history: Vec<RawHistory>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHistory {
    text_id: TextId,
    text: String,
    rating: i64,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineRef<'a> {
    Profile(&'a AnnotatorProfile),
    Record(&'a RatingRecord),
}

fn rating_at(row: usize, value: i64) -> Result<Rating> {
    Rating::new(value).map_err(|_| CorpusError::InvalidRow {
        row,
        message: format!("rating {value} is outside 0..=4"),
    })
}

impl RawRecord {
    fn into_record(self, row: usize) -> Result<RatingRecord> {
        Ok(RatingRecord {
            text_id: self.text_id,
            annotator_id: self.annotator_id,
            text: self.text,
            rating: rating_at(row, self.rating)?,
            split: self.split,
        })
    }
}

impl RawProfile {
    fn into_profile(self, row: usize) -> Result<AnnotatorProfile> {
        let history = self
            .history
            .into_iter()
            .map(|h| {
                Ok(HistoryEntry {
                    text_id: h.text_id,
                    text: h.text,
                    rating: rating_at(row, h.rating)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnnotatorProfile {
            annotator_id: self.annotator_id,
            demographics: self.demographics,
            survey: self.survey,
            history,
        })
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses JSONL lines into records and profiles. Rows are 1-based line numbers.
fn parse_jsonl(reader: impl BufRead) -> Result<(Vec<RatingRecord>, Vec<AnnotatorProfile>)> {
    let mut records = Vec::new();
    let mut profiles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            row,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RawLine = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            row,
            message: e.to_string(),
        })?;
        match parsed {
            RawLine::Record(r) => records.push(r.into_record(row)?),
            RawLine::Profile(p) => profiles.push(p.into_profile(row)?),
        }
    }
    Ok((records, profiles))
}

#[derive(Deserialize)]
struct CsvRow {
    text_id: String,
    annotator_id: String,
    text: String,
    rating: i64,
    split: String,
}

fn parse_csv(reader: impl Read) -> Result<Vec<RatingRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let row_no = i + 2;
        let row = row.map_err(|e| CorpusError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let split = row.split.parse::<Split>().map_err(|e| CorpusError::InvalidRow {
            row: row_no,
            message: e.to_string(),
        })?;
        records.push(RatingRecord {
            text_id: TextId::new(row.text_id),
            annotator_id: AnnotatorId::new(row.annotator_id),
            text: row.text,
            rating: rating_at(row_no, row.rating)?,
            split,
        });
    }
    Ok(records)
}

/// Loads and validates a corpus with default options.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    load_corpus_with(path, format, &LoadOptions::default()).map(|(c, _)| c)
}

/// Loads and validates a corpus, returning any quota warnings alongside it.
pub fn load_corpus_with(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    options: &LoadOptions,
) -> Result<(Corpus, Vec<String>)> {
    let path = path.as_ref();
    let (records, profiles) = match format {
        CorpusFormat::Jsonl => parse_jsonl(BufReader::new(open(path)?))?,
        CorpusFormat::Csv => {
            let records = parse_csv(BufReader::new(open(path)?))?;
            let profiles = match &options.profiles {
                Some(p) => {
                    let (extra, profiles) = parse_jsonl(BufReader::new(open(p)?))?;
                    if !extra.is_empty() {
                        return Err(CorpusError::Validation(format!(
                            "profiles file {} contains {} record lines",
                            p.display(),
                            extra.len()
                        )));
                    }
                    profiles
                }
                None => Vec::new(),
            };
            (records, profiles)
        }
    };
    let corpus = Corpus::with_history_cap(records, profiles, options.history_cap)?;

    let mut warnings = Vec::new();
    if let Some(quota) = options.expected_ratings_per_annotator {
        for (id, n) in corpus.ratings_per_annotator() {
            if n != quota {
                let msg = format!("annotator '{id}' has {n} ratings, expected {quota}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok((corpus, warnings))
}

/// Reads a JSONL corpus from any reader.
pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let (records, profiles) = parse_jsonl(reader)?;
    Corpus::new(records, profiles)
}

pub fn write_corpus_jsonl(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    for profile in corpus.annotators().values() {
        serde_json::to_writer(&mut out, &LineRef::Profile(profile))?;
        out.write_all(b"\n")?;
    }
    for record in corpus.records() {
        serde_json::to_writer(&mut out, &LineRef::Record(record))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_corpus_csv(corpus: &Corpus, out: impl Write) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["text_id", "annotator_id", "text", "rating", "split"])?;
    for r in corpus.records() {
        wtr.write_record([
            r.text_id.as_str(),
            r.annotator_id.as_str(),
            r.text.as_str(),
            &r.rating.to_string(),
            r.split.as_str(),
        ])?;
    }
    wtr.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let out = BufWriter::new(file);
    match format {
        CorpusFormat::Jsonl => write_corpus_jsonl(corpus, out).map_err(io_err),
        CorpusFormat::Csv => write_corpus_csv(corpus, out).map_err(io_err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = concat!(
        r#"{"kind":"profile","annotator_id":"a1","history":[]}"#,
        "\n",
        r#"{"kind":"record","text_id":"t1","annotator_id":"a1","text":"hello","rating":0,"split":"train"}"#,
        "\n"
    );

    #[test]
    fn minimal_file_loads() {
        let corpus = read_corpus(MINIMAL.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.annotators().len(), 1);
    }

    #[test]
    fn out_of_range_rating_names_row() {
        let bad = MINIMAL.replace(r#""rating":0"#, r#""rating":5"#);
        match read_corpus(bad.as_bytes()) {
            Err(CorpusError::InvalidRow { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains('5'));
            }
            other => panic!("expected row validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_index() {
        let bad = format!("{MINIMAL}{{not json\n");
        assert!(matches!(read_corpus(bad.as_bytes()), Err(CorpusError::Parse { row: 3, .. })));
    }

    #[test]
    fn unknown_kind_is_parse_error() {
        let bad = r#"{"kind":"mystery","x":1}"#;
        assert!(matches!(read_corpus(bad.as_bytes()), Err(CorpusError::Parse { row: 1, .. })));
    }

    #[test]
    fn unknown_survey_field_rejected_at_load() {
        let bad = r#"{"kind":"profile","annotator_id":"a1","survey":{"shoe_size":"9"}}"#;
        assert!(matches!(read_corpus(bad.as_bytes()), Err(CorpusError::Parse { row: 1, .. })));
    }

    #[test]
    fn dangling_annotator_from_file() {
        let bad = r#"{"kind":"record","text_id":"t1","annotator_id":"zz","text":"hi","rating":1,"split":"dev"}"#;
        assert!(matches!(
            read_corpus(bad.as_bytes()),
            Err(CorpusError::DanglingAnnotator { .. })
        ));
    }

    #[test]
    fn jsonl_write_is_byte_stable() {
        let corpus = read_corpus(MINIMAL.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_corpus_jsonl(&corpus, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), MINIMAL);
    }

    #[test]
    fn csv_rating_out_of_range() {
        let csv = "text_id,annotator_id,text,rating,split\nt1,a1,hi,7,train\n";
        match parse_csv(csv.as_bytes()) {
            Err(CorpusError::InvalidRow { row: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
