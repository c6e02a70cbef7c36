use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use raterlens::context::{render_context, AblationSpec, ContextOptions, PredictedDemographics};
use raterlens::corpus::{
    generate_corpus, load_corpus_with, save_corpus, Corpus, CorpusFormat, DemographicCoupling, LoadOptions, RatingRecord, RecordKey,
    Split, SynthConfig,
};
use raterlens::demographics::{demo_train_all, impute, majority_baseline, AttributeClassifier, Imputation, InputMode};
use raterlens::embed_head::{embedhead_train, EmbedHeadConfig};
use raterlens::encoder::{Encoder, ProviderSpec};
use raterlens::harness::{mae, render_report, run_ablation_matrix, AblateConfig, Imputer, StandardRunner};
use raterlens::icl::{backend_from_spec, build_prompt, icl_run, ChatSpec, FallbackPolicy};
use raterlens::ncf::{ncf_train, FusionMode, NcfConfig};
use raterlens::neural::{gradcheck_shape, GradCheckConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "raterlens", version, about = "Per-annotator toxicity rating prediction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL or CSV corpus and write it back as JSONL or CSV.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// Profiles (JSONL) for CSV imports.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Warn about annotators with a different number of ratings.
        #[arg(long)]
        expect_ratings: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with known latent structure.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        texts: usize,
        #[arg(long, default_value_t = 5)]
        raters_per_text: usize,
        #[arg(long, default_value_t = 20)]
        ratings_per_annotator: usize,
        /// Make demographics a function of survey answers.
        #[arg(long)]
        survey_determined: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the joined context string for one record.
    Render {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "text")]
        ablation: String,
        /// TEXT_ID:ANNOTATOR_ID
        #[arg(long)]
        record: String,
        /// Predictions file from `impute-demo`, for `pdemo`.
        #[arg(long)]
        predicted: Option<PathBuf>,
    },
    /// Network utilities.
    Nets {
        #[command(subcommand)]
        command: NetsCommand,
    },
    /// Train the collaborative-filtering model on the train split.
    TrainNcf {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value = "concat")]
        fusion: FusionMode,
    },
    /// Train the embedding classifier on the train split.
    TrainEmbed {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Predict ratings with a chat model.
    IclPredict {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        chat_spec: PathBuf,
        /// Scripted replies (JSONL) for the stub provider.
        #[arg(long)]
        stub: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        ablation: String,
        #[arg(long, default_value = "dev")]
        split: Split,
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Substitute rating 2 for unparseable replies instead of failing.
        #[arg(long)]
        fallback_mid: bool,
        /// Predictions as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train attribute classifiers and impute demographics for every annotator.
    ImputeDemo {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "survey")]
        mode: InputMode,
        #[arg(long, default_value = "mock-small")]
        provider: String,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation matrix and write report.json and table.txt.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum NetsCommand {
    /// Finite-difference check of backpropagated gradients.
    Gradcheck {
        /// Comma-separated layer widths.
        #[arg(long, default_value = "3072,1024,1024,1024,5")]
        dims: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 24)]
        samples: usize,
    },
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Defaults to the file extension.
    #[arg(long)]
    corpus_format: Option<String>,
    #[arg(long)]
    profiles: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        let format = resolve_format(&self.corpus, self.corpus_format.as_deref())?;
        let options = LoadOptions {
            profiles: self.profiles.clone(),
            ..Default::default()
        };
        let (corpus, _) = load_corpus_with(&self.corpus, format, &options)
            .with_context(|| format!("loading {}", self.corpus.display()))?;
        Ok(corpus)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// mock-large, mock-small, mock-lexical, text-embedding-3-large or text-embedding-3-small.
    #[arg(long, default_value = "mock-large")]
    provider: String,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "text")]
    ablation: String,
    #[arg(long)]
    predicted: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ModelArgs {
    fn encoder(&self) -> Result<Encoder> {
        let spec = ProviderSpec::preset(&self.provider, self.train.seed, self.endpoint.as_deref())?;
        let mut encoder = Encoder::from_spec(spec)?;
        if let Some(dir) = &self.cache_dir {
            encoder = encoder.with_cache_dir(dir)?;
        }
        Ok(encoder)
    }
}

fn resolve_format(path: &Path, explicit: Option<&str>) -> Result<CorpusFormat> {
    Ok(match explicit {
        Some(f) => f.parse()?,
        None if path.extension().is_some_and(|e| e == "csv") => CorpusFormat::Csv,
        None => CorpusFormat::Jsonl,
    })
}

fn load_predicted(path: Option<&Path>) -> Result<Option<PredictedDemographics>> {
    let Some(path) = path else { return Ok(None) };
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Some(Imputation::read_jsonl(BufReader::new(file))?.predicted()))
}

fn parse_ablation(list: &str, predicted: &Option<PredictedDemographics>) -> Result<AblationSpec> {
    let spec = AblationSpec::parse_list(list)?;
    if spec.uses_predicted() && predicted.is_none() {
        bail!("ablation '{list}' uses predicted demographics; pass --predicted");
    }
    Ok(spec)
}

fn report_split_mae(label: &str, corpus: &Corpus, split: Split, predict: impl FnOnce(&[&RatingRecord]) -> Result<Vec<raterlens::corpus::Rating>>) -> Result<()> {
    let records: Vec<&RatingRecord> = corpus.records_in(split).collect();
    if records.is_empty() {
        return Ok(());
    }
    let predictions = predict(&records)?;
    let truths: Vec<_> = records.iter().map(|r| r.rating).collect();
    println!("{label} {split} MAE: {:.4} (n = {})", mae(&predictions, &truths)?, records.len());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest {
            input,
            format,
            profiles,
            expect_ratings,
            out,
        } => {
            let options = LoadOptions {
                profiles,
                expected_ratings_per_annotator: expect_ratings,
                ..Default::default()
            };
            let (corpus, warnings) = load_corpus_with(&input, format.parse()?, &options)?;
            let out_format = resolve_format(&out, None)?;
            save_corpus(&corpus, &out, out_format)?;
            let counts = corpus.split_counts();
            println!(
                "{} records, {} annotators, {} warnings; splits {:?}",
                corpus.len(),
                corpus.annotators().len(),
                warnings.len(),
                counts
            );
        }
        Command::Synth {
            seed,
            texts,
            raters_per_text,
            ratings_per_annotator,
            survey_determined,
            out,
        } => {
            let mut cfg = SynthConfig::new(seed, texts, raters_per_text, ratings_per_annotator);
            if survey_determined {
                cfg.coupling = DemographicCoupling::SurveyDetermined;
            }
            let synth = generate_corpus(&cfg)?;
            save_corpus(&synth.corpus, &out, resolve_format(&out, None)?)?;
            println!("{} records written to {}", synth.corpus.len(), out.display());
        }
        Command::Render {
            corpus,
            ablation,
            record,
            predicted,
        } => {
            let corpus = corpus.load()?;
            let predicted = load_predicted(predicted.as_deref())?;
            let spec = parse_ablation(&ablation, &predicted)?;
            let key: RecordKey = record.parse()?;
            let rec = corpus.record(&key).with_context(|| format!("no record {key}"))?;
            let profile = corpus.profile(&rec.annotator_id).context("record has no profile")?;
            let pd = predicted.as_ref().and_then(|p| p.get(&rec.annotator_id));
            println!("{}", render_context(rec, profile, &spec, pd, &ContextOptions::default())?.joined);
        }
        Command::Nets {
            command: NetsCommand::Gradcheck { dims, seeds, samples },
        } => {
            let dims: Vec<usize> = dims
                .split(',')
                .map(|d| d.trim().parse().with_context(|| format!("bad width '{d}'")))
                .collect::<Result<_>>()?;
            let mut ok = true;
            for seed in 0..seeds {
                let cfg = GradCheckConfig {
                    seed,
                    samples_per_tensor: samples,
                    ..Default::default()
                };
                let report = gradcheck_shape(&dims, &cfg)?;
                println!(
                    "seed {seed}: {} coordinates ({} skipped at relu kinks), max relative error {:.3e}, {}",
                    report.checked,
                    report.skipped_kinks,
                    report.max_relative_error,
                    if report.passed() { "PASS" } else { "FAIL" }
                );
                ok &= report.passed();
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::TrainNcf { corpus, model, dim, fusion } => {
            let corpus = corpus.load()?;
            let predicted = load_predicted(model.predicted.as_deref())?;
            let cfg = NcfConfig {
                embedding_dim: dim,
                fusion,
                ablation: parse_ablation(&model.ablation, &predicted)?,
                ..Default::default()
            };
            let encoder = model.encoder()?;
            let train = model.train.config();
            let (m, trace) = ncf_train::<f32>(&corpus, &encoder, &cfg, &train, predicted.as_ref())?;
            println!("final train loss {:.4}", trace.epoch_loss.last().copied().unwrap_or(f64::NAN));
            report_split_mae("ncf", &corpus, Split::Dev, |r| Ok(m.predict_records(&encoder, &corpus, r, predicted.as_ref())?))?;
            if let Some(out) = &model.out {
                m.save(out, &train)?;
                println!("checkpoint written to {}", out.display());
            }
        }
        Command::TrainEmbed { corpus, model } => {
            let corpus = corpus.load()?;
            let predicted = load_predicted(model.predicted.as_deref())?;
            let cfg = EmbedHeadConfig {
                ablation: parse_ablation(&model.ablation, &predicted)?,
                ..Default::default()
            };
            let encoder = model.encoder()?;
            let train = model.train.config();
            let (m, trace) = embedhead_train::<f32>(&corpus, &encoder, &cfg, &train, predicted.as_ref())?;
            println!("final train loss {:.4}", trace.epoch_loss.last().copied().unwrap_or(f64::NAN));
            if let Some(last) = trace.dev_mae.last() {
                println!("embed_head dev MAE: {last:.4}");
            }
            if let Some(out) = &model.out {
                m.save(out, &train)?;
                println!("checkpoint written to {}", out.display());
            }
        }
        Command::IclPredict {
            corpus,
            chat_spec,
            stub,
            ablation,
            split,
            predicted,
            fallback_mid,
            out,
        } => {
            let corpus = corpus.load()?;
            let predicted = load_predicted(predicted.as_deref())?;
            let spec = parse_ablation(&ablation, &predicted)?;
            let chat = ChatSpec::load(&chat_spec)?;
            let backend = backend_from_spec(&chat, stub.as_deref())?;
            let records: Vec<&RatingRecord> = corpus.records_in(split).collect();
            let pairs = records
                .iter()
                .map(|r| {
                    let profile = corpus.profile(&r.annotator_id).context("record has no profile")?;
                    let pd = predicted.as_ref().and_then(|p| p.get(&r.annotator_id));
                    Ok(build_prompt(r, profile, &spec, pd, &ContextOptions::default())?)
                })
                .collect::<Result<Vec<_>>>()?;
            let policy = if fallback_mid {
                FallbackPolicy::FallbackMid
            } else {
                FallbackPolicy::Error
            };
            let run = icl_run(backend.as_ref(), &chat, &pairs, policy)?;
            if !records.is_empty() {
                let truths: Vec<_> = records.iter().map(|r| r.rating).collect();
                println!(
                    "icl {split} MAE: {:.4} (n = {}, parse failures {}, fallbacks {})",
                    mae(&run.ratings(), &truths)?,
                    records.len(),
                    run.parse_failures,
                    run.fallbacks
                );
            }
            if let Some(out) = out {
                let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
                for (r, p) in records.iter().zip(&run.predictions) {
                    let line = serde_json::json!({
                        "text_id": r.text_id,
                        "annotator_id": r.annotator_id,
                        "rating": p.rating,
                        "flagged": p.flagged,
                        "reply": p.reply,
                    });
                    writeln!(w, "{line}")?;
                }
                w.flush()?;
            }
        }
        Command::ImputeDemo {
            corpus,
            mode,
            provider,
            endpoint,
            cache_dir,
            train,
            out,
        } => {
            let corpus = corpus.load()?;
            let mut encoder = Encoder::from_spec(ProviderSpec::preset(&provider, train.seed, endpoint.as_deref())?)?;
            if let Some(dir) = &cache_dir {
                encoder = encoder.with_cache_dir(dir)?;
            }
            let classifiers = demo_train_all::<f32>(&corpus, mode, &encoder, &train.config())?;
            for c in &classifiers {
                if let Ok((acc, n)) = c.accuracy(&encoder, &corpus, Split::Dev) {
                    let baseline = majority_baseline(&corpus, &c.task, Split::Dev)
                        .map(|b| format!("{:.3}", b.accuracy))
                        .unwrap_or_else(|_| "-".into());
                    println!("{}: dev accuracy {acc:.3}, majority baseline {baseline} (n = {n})", c.task.attribute.title());
                }
            }
            let bound: Vec<_> = classifiers.iter().map(|c| c.bind(&encoder)).collect();
            let refs: Vec<&dyn AttributeClassifier> = bound.iter().map(|b| b as &dyn AttributeClassifier).collect();
            let imputation = impute(&corpus, &refs, mode, raterlens::corpus::DEFAULT_HISTORY_CAP)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            imputation.write_jsonl(&mut w)?;
            w.flush()?;
            println!(
                "{} annotators imputed, {} skipped; written to {}",
                imputation.predictions.len(),
                imputation.warnings.len(),
                out.display()
            );
        }
        Command::Ablate { config, split, out } => {
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let cfg = AblateConfig::load(&config)?;
            let corpus = cfg.corpus.load(&base)?;
            let specs = cfg.experiments(split, &base)?;
            let mut runner = StandardRunner::new(cfg.cache_dir.as_ref().map(|c| base.join(c)));
            let mut imputer = cfg.imputer(&base)?;
            let report = run_ablation_matrix(&corpus, &specs, &mut runner, imputer.as_mut().map(|i| i as &mut dyn Imputer));
            render_report(&report, &out)?;
            print!("{}", report.render_table());
            if report.any_failed() {
                for r in report.rows.iter().filter(|r| r.failed()) {
                    eprintln!("error in {} / {}: {}", r.column, r.label, r.error.as_deref().unwrap_or_default());
                }
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
