//! Desk-scale synthetic corpora.
//!
//! Ratings follow a clamped additive latent model:
//! `rating = clamp(round(text_severity + annotator_bias + noise), 0, 4)`.
//! Each text receives exactly `raters_per_text` ratings from distinct
//! annotators and each annotator rates exactly `ratings_per_annotator` texts.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::schema::*;
use super::{Corpus, CorpusError, Result};

pub const RACES: [&str; 5] = ["white", "Black", "Asian", "Hispanic", "Native American"];
pub const GENDERS: [&str; 3] = ["female", "male", "nonbinary"];
pub const RELIGION_IMPORTANCE: [&str; 3] = ["not important", "somewhat important", "very important"];
pub const LGBT_STATUS: [&str; 2] = ["straight and cisgender", "LGBTQ+"];
pub const EDUCATION: [&str; 4] = [
    "a high school diploma",
    "some college education",
    "a bachelor's degree",
    "a graduate degree",
];
pub const PARENTAL_STATUS: [&str; 2] = ["a parent", "not a parent"];
pub const POLITICAL_STANCE: [&str; 3] = ["liberal", "independent", "conservative"];
pub const AGE_BANDS: [&str; 6] = ["18-24", "25-34", "35-44", "45-54", "55-64", "65-74"];
pub const FORUMS: [&str; 5] = [
    "news sites",
    "video sites",
    "gaming forums",
    "discussion boards",
    "messaging apps",
];

const VOCABULARY: [[&str; 6]; 5] = [
    ["thanks", "lovely", "helpful", "welcome", "great", "agreed"],
    ["unclear", "doubtful", "odd", "mistaken", "questionable", "unconvinced"],
    ["silly", "annoying", "pointless", "lazy", "clueless", "ridiculous"],
    ["idiot", "stupid", "pathetic", "clown", "moron", "loser"],
    ["disgusting", "worthless", "vile", "scum", "garbage", "subhuman"],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    /// Records are shuffled and cut into splits.
    Record,
    /// Whole annotators are assigned to a split.
    Annotator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemographicCoupling {
    /// Demographics and survey answers drawn independently.
    Independent,
    /// Each imputable demographic attribute is a deterministic function of one survey field.
    SurveyDetermined,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_texts: usize,
    pub raters_per_text: usize,
    pub ratings_per_annotator: usize,
    /// Train/dev/test fractions; must sum to 1.
    pub split_fractions: [f64; 3],
    pub split_unit: SplitUnit,
    pub coupling: DemographicCoupling,
    pub bias_scale: f64,
    pub noise_scale: f64,
    pub history_cap: usize,
}

impl SynthConfig {
    pub fn new(seed: u64, n_texts: usize, raters_per_text: usize, ratings_per_annotator: usize) -> Self {
        Self {
            seed,
            n_texts,
            raters_per_text,
            ratings_per_annotator,
            split_fractions: [0.8, 0.1, 0.1],
            split_unit: SplitUnit::Record,
            coupling: DemographicCoupling::Independent,
            bias_scale: 0.7,
            noise_scale: 0.25,
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }

    pub fn n_annotators(&self) -> Result<usize> {
        if self.n_texts == 0 || self.raters_per_text == 0 || self.ratings_per_annotator == 0 {
            return Err(CorpusError::Config("counts must be positive".into()));
        }
        let total = self.n_texts * self.raters_per_text;
        if total % self.ratings_per_annotator != 0 {
            return Err(CorpusError::Config(format!(
                "{} texts x {} raters = {total} ratings cannot be split into quotas of {}",
                self.n_texts, self.raters_per_text, self.ratings_per_annotator
            )));
        }
        let annotators = total / self.ratings_per_annotator;
        if annotators < self.raters_per_text {
            return Err(CorpusError::Config(format!(
                "{annotators} annotators cannot supply {} distinct raters per text",
                self.raters_per_text
            )));
        }
        Ok(annotators)
    }

    fn validate(&self) -> Result<usize> {
        let n = self.n_annotators()?;
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Config(format!(
                "split fractions {:?} must be in [0,1] and sum to 1",
                self.split_fractions
            )));
        }
        if !(self.bias_scale >= 0.0 && self.noise_scale >= 0.0) {
            return Err(CorpusError::Config("latent scales must be non-negative".into()));
        }
        Ok(n)
    }
}

/// A generated corpus together with the latent variables that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub text_severity: BTreeMap<TextId, f64>,
    pub annotator_bias: BTreeMap<AnnotatorId, f64>,
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SyntheticCorpus> {
    let n_annotators = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let annotator_width = digits(n_annotators);
    let text_width = digits(config.n_texts);
    let annotator_ids: Vec<AnnotatorId> = (0..n_annotators)
        .map(|i| AnnotatorId::new(format!("a{i:0annotator_width$}")))
        .collect();

    let bias_dist = Normal::new(0.0, config.bias_scale).expect("valid scale");
    let noise_dist = Normal::new(0.0, config.noise_scale).expect("valid scale");

    let mut annotator_bias = BTreeMap::new();
    let mut profiles: Vec<AnnotatorProfile> = Vec::with_capacity(n_annotators);
    for id in &annotator_ids {
        let bias = bias_dist.sample(&mut rng);
        annotator_bias.insert(id.clone(), bias);
        let (demographics, survey) = draw_annotator(&mut rng, config.coupling);
        profiles.push(AnnotatorProfile {
            annotator_id: id.clone(),
            demographics: Some(demographics),
            survey: Some(survey),
            history: Vec::new(),
        });
    }

    let mut text_severity = BTreeMap::new();
    let mut texts = Vec::with_capacity(config.n_texts);
    for t in 0..config.n_texts {
        let id = TextId::new(format!("t{t:0text_width$}"));
        let severity: f64 = rng.random_range(0.0..4.0);
        let text = synth_text(&mut rng, t, severity);
        text_severity.insert(id.clone(), severity);
        texts.push((id, text, severity));
    }

    // Slot k = t * r + j goes to annotator k mod A. Consecutive slots of one text
    // hit distinct annotators because r <= A.
    let mut records = Vec::with_capacity(config.n_texts * config.raters_per_text);
    let mut owners = Vec::with_capacity(records.capacity());
    for (t, (text_id, text, severity)) in texts.iter().enumerate() {
        for j in 0..config.raters_per_text {
            let a = (t * config.raters_per_text + j) % n_annotators;
            let annotator_id = &annotator_ids[a];
            let latent = severity + annotator_bias[annotator_id] + noise_dist.sample(&mut rng);
            let rating = Rating::from_index(latent.round().clamp(0.0, MAX_RATING as f64) as usize);
            records.push(RatingRecord {
                text_id: text_id.clone(),
                annotator_id: annotator_id.clone(),
                text: text.clone(),
                rating,
                split: Split::Train,
            });
            owners.push(a);
        }
    }

    assign_splits(&mut rng, config, &mut records, &owners, n_annotators);

    for (record, &a) in records.iter().zip(&owners) {
        profiles[a].history.push(HistoryEntry {
            text_id: record.text_id.clone(),
            text: record.text.clone(),
            rating: record.rating,
        });
    }
    for profile in &mut profiles {
        let excess = profile.history.len().saturating_sub(config.history_cap);
        profile.history.drain(..excess);
    }

    let corpus = Corpus::with_history_cap(records, profiles, config.history_cap)?;
    Ok(SyntheticCorpus {
        corpus,
        text_severity,
        annotator_bias,
    })
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let train = ((n as f64) * fractions[0]).round() as usize;
    let dev = (((n as f64) * fractions[1]).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    [train, dev, n - train - dev]
}

fn split_of(position: usize, sizes: [usize; 3]) -> Split {
    if position < sizes[0] {
        Split::Train
    } else if position < sizes[0] + sizes[1] {
        Split::Dev
    } else {
        Split::Test
    }
}

fn assign_splits(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    records: &mut [RatingRecord],
    owners: &[usize],
    n_annotators: usize,
) {
    match config.split_unit {
        SplitUnit::Record => {
            let sizes = split_sizes(records.len(), config.split_fractions);
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(rng);
            for (position, &i) in order.iter().enumerate() {
                records[i].split = split_of(position, sizes);
            }
        }
        SplitUnit::Annotator => {
            let sizes = split_sizes(n_annotators, config.split_fractions);
            let mut order: Vec<usize> = (0..n_annotators).collect();
            order.shuffle(rng);
            let mut split_for = vec![Split::Train; n_annotators];
            for (position, &a) in order.iter().enumerate() {
                split_for[a] = split_of(position, sizes);
            }
            for (record, &a) in records.iter_mut().zip(owners) {
                record.split = split_for[a];
            }
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).expect("non-empty options")
}

fn yes_no(rng: &mut ChaCha8Rng) -> YesNo {
    if rng.random_bool(0.5) {
        YesNo::Yes
    } else {
        YesNo::No
    }
}

fn draw_annotator(rng: &mut ChaCha8Rng, coupling: DemographicCoupling) -> (Demographics, SurveyResponses) {
    let uses_social_media = yes_no(rng);
    let seen = yes_no(rng);
    let targeted = yes_no(rng);
    let problem_idx = rng.random_range(0..3);
    let tech_idx = rng.random_range(0..3);
    let problem = [ToxicityProblem::Serious, ToxicityProblem::Minor, ToxicityProblem::NotAProblem][problem_idx];
    let tech = [TechImpact::Positive, TechImpact::Neutral, TechImpact::Negative][tech_idx];
    let age = pick(rng, &AGE_BANDS);
    let parental = pick(rng, &PARENTAL_STATUS);

    let (forums, demographics) = match coupling {
        DemographicCoupling::Independent => {
            let k = rng.random_range(1..=3);
            let mut forums: Vec<&str> = FORUMS.choose_multiple(rng, k).copied().collect();
            forums.sort_by_key(|f| FORUMS.iter().position(|x| x == f));
            let lgbt = if rng.random_bool(0.8) { LGBT_STATUS[0] } else { LGBT_STATUS[1] };
            let demographics = Demographics {
                race: Category::known(pick(rng, &RACES)),
                gender: Category::known(pick(rng, &GENDERS)),
                religion_importance: Category::known(pick(rng, &RELIGION_IMPORTANCE)),
                lgbt_status: Some(Category::known(lgbt)),
                education: Category::known(pick(rng, &EDUCATION)),
                parental_status: Category::known(parental),
                political_stance: Category::known(pick(rng, &POLITICAL_STANCE)),
                age_band: Category::known(age),
            };
            (forums, demographics)
        }
        DemographicCoupling::SurveyDetermined => {
            let forum_idx = rng.random_range(0..FORUMS.len());
            let yes = |v: YesNo| v == YesNo::Yes;
            let demographics = Demographics {
                race: Category::known(RACES[forum_idx]),
                gender: Category::known(if yes(uses_social_media) { "female" } else { "male" }),
                religion_importance: Category::known(if yes(seen) { "very important" } else { "not important" }),
                lgbt_status: Some(Category::known(LGBT_STATUS[usize::from(yes(targeted))])),
                education: Category::known(["a high school diploma", "a bachelor's degree", "a graduate degree"][problem_idx]),
                parental_status: Category::known(parental),
                political_stance: Category::known(POLITICAL_STANCE[tech_idx]),
                age_band: Category::known(age),
            };
            (vec![FORUMS[forum_idx]], demographics)
        }
    };

    let survey = SurveyResponses {
        preferred_forums: Some(forums.into_iter().map(String::from).collect()),
        uses_social_media: Some(uses_social_media),
        seen_toxic_content: Some(seen),
        personally_targeted: Some(targeted),
        toxicity_is_problem: Some(problem),
        tech_impact_opinion: Some(tech),
    };
    (demographics, survey)
}

fn synth_text(rng: &mut ChaCha8Rng, index: usize, severity: f64) -> String {
    let tier = severity.round().clamp(0.0, MAX_RATING as f64) as usize;
    let words: Vec<&str> = VOCABULARY[tier].choose_multiple(rng, 3).copied().collect();
    format!("comment {index} says {}", words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_corpus_jsonl;

    fn jsonl(c: &Corpus) -> Vec<u8> {
        let mut buf = Vec::new();
        write_corpus_jsonl(c, &mut buf).unwrap();
        buf
    }

    #[test]
    fn twenty_ratings_per_annotator_quota() {
        let synth = generate_corpus(&SynthConfig::new(7, 20, 5, 20)).unwrap();
        assert_eq!(synth.corpus.len(), 100);
        assert_eq!(synth.corpus.annotators().len(), 5);
        for (_, n) in synth.corpus.ratings_per_annotator() {
            assert_eq!(n, 20);
        }
        let mut per_text: BTreeMap<&TextId, Vec<&AnnotatorId>> = BTreeMap::new();
        for r in synth.corpus.records() {
            per_text.entry(&r.text_id).or_default().push(&r.annotator_id);
        }
        for raters in per_text.values() {
            assert_eq!(raters.len(), 5);
            let mut dedup = raters.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), 5);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SynthConfig::new(7, 20, 5, 20);
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(jsonl(&a.corpus), jsonl(&b.corpus));
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_corpus(&SynthConfig::new(7, 20, 5, 20)).unwrap();
        let b = generate_corpus(&SynthConfig::new(8, 20, 5, 20)).unwrap();
        let differing = a
            .corpus
            .records()
            .iter()
            .zip(b.corpus.records())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing >= 1);
    }

    #[test]
    fn ratings_track_latent_severity() {
        let synth = generate_corpus(&SynthConfig::new(7, 20, 5, 20)).unwrap();
        let total: f64 = synth
            .corpus
            .records()
            .iter()
            .map(|r| (r.rating.value() as f64 - synth.text_severity[&r.text_id].round()).abs())
            .sum();
        let mean = total / synth.corpus.len() as f64;
        assert!(mean <= 1.0, "mean deviation {mean}");
    }

    #[test]
    fn eighty_ten_ten_split() {
        let synth = generate_corpus(&SynthConfig::new(7, 20, 5, 20)).unwrap();
        let mut by_hand = BTreeMap::new();
        for r in synth.corpus.records() {
            *by_hand.entry(r.split).or_insert(0usize) += 1;
        }
        assert_eq!(by_hand[&Split::Train], 80);
        assert_eq!(by_hand[&Split::Dev], 10);
        assert_eq!(by_hand[&Split::Test], 10);
        assert_eq!(synth.corpus.split_counts(), by_hand);
    }

    #[test]
    fn infeasible_quota_is_config_error() {
        assert!(matches!(
            generate_corpus(&SynthConfig::new(1, 7, 3, 5)),
            Err(CorpusError::Config(_))
        ));
        // 2 annotators cannot give 3 distinct ratings per text
        assert!(matches!(
            generate_corpus(&SynthConfig::new(1, 4, 3, 6)),
            Err(CorpusError::Config(_))
        ));
    }

    #[test]
    fn history_cap_respected() {
        let mut cfg = SynthConfig::new(3, 40, 5, 40);
        cfg.history_cap = 20;
        let synth = generate_corpus(&cfg).unwrap();
        for p in synth.corpus.annotators().values() {
            assert_eq!(p.history.len(), 20);
        }
    }

    #[test]
    fn annotator_split_keeps_annotators_whole() {
        let mut cfg = SynthConfig::new(11, 40, 5, 20);
        cfg.split_unit = SplitUnit::Annotator;
        cfg.split_fractions = [0.5, 0.5, 0.0];
        let synth = generate_corpus(&cfg).unwrap();
        let mut seen: BTreeMap<&AnnotatorId, Split> = BTreeMap::new();
        for r in synth.corpus.records() {
            let prev = seen.insert(&r.annotator_id, r.split);
            assert!(prev.is_none() || prev == Some(r.split));
        }
    }
}
