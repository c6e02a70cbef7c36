//! Embedding classifier: embed the rendered context with a provider, then
//! classify with a fixed `dim -> 1024 -> 1024 -> 1024 -> 5` dense stack.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::context::{render_context, AblationSpec, ContextOptions, PredictedDemographics};
use crate::corpus::{AnnotatorProfile, Corpus, Demographics, Rating, RatingRecord, Split, DEFAULT_HISTORY_CAP, NUM_RATINGS};
use crate::encoder::{Encoder, ProviderSpec};
use crate::error::ModelError;
use crate::harness::mae;
use crate::ncf::embed_records;
use crate::neural::{decode_rating, train_with, Activation, Checkpoint, DecodeMode, DenseNet, TrainConfig};
use crate::scalar::Scalar;

type Result<T, E = ModelError> = std::result::Result<T, E>;

pub const HIDDEN_WIDTH: usize = 1024;
pub const EMBED_CHECKPOINT_KIND: &str = "embed_head";

/// Head widths for a provider of width `input_dim`.
pub fn embed_head_dims(input_dim: usize) -> Vec<usize> {
    vec![input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, HIDDEN_WIDTH, NUM_RATINGS]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedHeadConfig {
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    pub history_cap: usize,
    /// Evaluate the dev split after every epoch when it is non-empty.
    pub track_dev: bool,
}

impl Default for EmbedHeadConfig {
    fn default() -> Self {
        Self {
            ablation: AblationSpec::TEXT_ONLY,
            decode: DecodeMode::Argmax,
            history_cap: DEFAULT_HISTORY_CAP,
            track_dev: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedHeadModel<T> {
    pub provider: ProviderSpec,
    pub head: DenseNet<T>,
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    pub history_cap: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbedTrainTrace {
    pub epoch_loss: Vec<f64>,
    /// Dev MAE after each epoch; empty when not tracked.
    pub dev_mae: Vec<f64>,
}

impl<T: Scalar> EmbedHeadModel<T> {
    pub fn new(provider: ProviderSpec, cfg: &EmbedHeadConfig, seed: u64) -> Result<Self> {
        cfg.ablation.validate()?;
        let head = DenseNet::new(&embed_head_dims(provider.dimension), Activation::Relu, seed)?;
        Self::from_parts(provider, head, cfg.ablation, cfg.decode, cfg.history_cap)
    }

    pub fn from_parts(
        provider: ProviderSpec,
        head: DenseNet<T>,
        ablation: AblationSpec,
        decode: DecodeMode,
        history_cap: usize,
    ) -> Result<Self> {
        let dims = head.dims();
        if dims != embed_head_dims(provider.dimension) {
            return Err(ModelError::Config(format!(
                "head widths {dims:?} do not match {:?}",
                embed_head_dims(provider.dimension)
            )));
        }
        Ok(Self {
            provider,
            head,
            ablation,
            decode,
            history_cap,
        })
    }

    pub fn context_options(&self) -> ContextOptions {
        ContextOptions {
            history_cap: self.history_cap,
        }
    }

    fn check_encoder(&self, encoder: &Encoder) -> Result<()> {
        if encoder.spec() != &self.provider {
            return Err(ModelError::Config(format!(
                "model was trained with provider {} but the encoder is {}",
                self.provider.label(),
                encoder.spec().label()
            )));
        }
        Ok(())
    }

    pub fn predict_embedded(&self, embedding: &[T]) -> Result<Rating> {
        let logits = self.head.forward(embedding)?;
        Ok(decode_rating(&logits, self.decode)?)
    }

    pub fn embedhead_predict(
        &self,
        encoder: &Encoder,
        record: &RatingRecord,
        profile: &AnnotatorProfile,
        predicted: Option<&Demographics>,
    ) -> Result<Rating> {
        self.check_encoder(encoder)?;
        let ctx = render_context(record, profile, &self.ablation, predicted, &self.context_options())?;
        let e = encoder.embed(&ctx.joined)?;
        let x: Vec<T> = e.values.iter().map(|&v| T::lit(v)).collect();
        self.predict_embedded(&x)
    }

    pub fn predict_records(
        &self,
        encoder: &Encoder,
        corpus: &Corpus,
        records: &[&RatingRecord],
        predicted: Option<&PredictedDemographics>,
    ) -> Result<Vec<Rating>> {
        self.check_encoder(encoder)?;
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let x = embed_records::<T>(encoder, corpus, records, &self.ablation, predicted, &self.context_options())?;
        predict_matrix(&self.head, &x, self.decode)
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint<EmbedExtra> {
        let extra = EmbedExtra {
            provider: self.provider.clone(),
            ablation: self.ablation,
            decode: self.decode,
            history_cap: self.history_cap,
        };
        Checkpoint::new(EMBED_CHECKPOINT_KIND, &self.head, config, extra)
    }

    pub fn from_checkpoint(cp: &Checkpoint<EmbedExtra>) -> Result<Self> {
        let x = &cp.extra;
        Self::from_parts(x.provider.clone(), cp.net.restore()?, x.ablation, x.decode, x.history_cap)
    }

    pub fn save(&self, path: &Path, config: &TrainConfig) -> Result<()> {
        Ok(self.to_checkpoint(config).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, EMBED_CHECKPOINT_KIND)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedExtra {
    pub provider: ProviderSpec,
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    pub history_cap: usize,
}

fn predict_matrix<T: Scalar>(head: &DenseNet<T>, x: &Array2<T>, decode: DecodeMode) -> Result<Vec<Rating>> {
    let logits = head.forward_batch(x.view())?;
    logits
        .rows()
        .into_iter()
        .map(|row| Ok(decode_rating(&row.to_vec(), decode)?))
        .collect()
}

/// Trains on the train split only; dev contexts are embedded up front when
/// dev tracking is on, test contexts never are.
pub fn embedhead_train<T: Scalar>(
    corpus: &Corpus,
    encoder: &Encoder,
    cfg: &EmbedHeadConfig,
    train: &TrainConfig,
    predicted: Option<&PredictedDemographics>,
) -> Result<(EmbedHeadModel<T>, EmbedTrainTrace)> {
    train.validate()?;
    let model = EmbedHeadModel::<T>::new(encoder.spec().clone(), cfg, train.seed)?;
    let records: Vec<&RatingRecord> = corpus.records_in(Split::Train).collect();
    if records.is_empty() {
        return Err(ModelError::EmptySplit(Split::Train));
    }
    let options = model.context_options();
    let x = embed_records::<T>(encoder, corpus, &records, &cfg.ablation, predicted, &options)?;
    let labels: Vec<usize> = records.iter().map(|r| r.rating.index()).collect();

    let dev: Vec<&RatingRecord> = if cfg.track_dev {
        corpus.records_in(Split::Dev).collect()
    } else {
        Vec::new()
    };
    let dev_x = if dev.is_empty() {
        None
    } else {
        Some(embed_records::<T>(encoder, corpus, &dev, &cfg.ablation, predicted, &options)?)
    };
    let dev_truth: Vec<Rating> = dev.iter().map(|r| r.rating).collect();

    let mut dev_mae = Vec::new();
    let mut dev_error = None;
    let (head, trace) = train_with(model.head, &x, &labels, train, |epoch, net, loss| {
        if let Some(dx) = &dev_x {
            match predict_matrix(net, dx, cfg.decode).map(|p| mae(&p, &dev_truth)) {
                Ok(Ok(m)) => {
                    log::info!("embed head epoch {epoch}: loss {loss:.4}, dev MAE {m:.4}");
                    dev_mae.push(m);
                }
                Ok(Err(e)) => {
                    dev_error.get_or_insert(ModelError::Config(e.to_string()));
                }
                Err(e) => {
                    dev_error.get_or_insert(e);
                }
            }
        } else {
            log::info!("embed head epoch {epoch}: loss {loss:.4}");
        }
    })?;
    if let Some(e) = dev_error {
        return Err(e);
    }
    let model = EmbedHeadModel::from_parts(model.provider, head, cfg.ablation, cfg.decode, cfg.history_cap)?;
    Ok((
        model,
        EmbedTrainTrace {
            epoch_loss: trace.epoch_loss,
            dev_mae,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, SynthConfig};
    use crate::neural::DenseLayer;

    #[test]
    fn architecture_is_fixed() {
        let m = EmbedHeadModel::<f32>::new(ProviderSpec::mock_small(0), &EmbedHeadConfig::default(), 0).unwrap();
        assert_eq!(m.head.dims(), vec![1536, 1024, 1024, 1024, 5]);
        assert_eq!(m.head.layers()[3].activation, Activation::Identity);
        assert!(m.head.layers()[..3].iter().all(|l| l.activation == Activation::Relu));
        let wrong = DenseNet::<f32>::new(&[1536, 5], Activation::Relu, 0).unwrap();
        assert!(EmbedHeadModel::from_parts(ProviderSpec::mock_small(0), wrong, AblationSpec::TEXT_ONLY, DecodeMode::Argmax, 20).is_err());
    }

    #[test]
    fn zero_head_is_constant() {
        let spec = ProviderSpec::mock("m", 6, 0);
        let dims = embed_head_dims(6);
        let mut layers: Vec<DenseLayer<f64>> = (0..4)
            .map(|i| DenseLayer::zeros(dims[i], dims[i + 1], if i < 3 { Activation::Relu } else { Activation::Identity }))
            .collect();
        layers[3].bias[1] = 1.0;
        let model =
            EmbedHeadModel::from_parts(spec, DenseNet::from_layers(layers).unwrap(), AblationSpec::TEXT_ONLY, DecodeMode::Argmax, 20)
                .unwrap();
        for x in [[0.0; 6], [1.0, -2.0, 3.0, 0.5, 0.0, 9.0]] {
            assert_eq!(model.predict_embedded(&x).unwrap(), Rating::from_index(1));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = EmbedHeadModel::<f32>::new(ProviderSpec::mock("m", 8, 0), &EmbedHeadConfig::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.json");
        model.save(&path, &TrainConfig::default()).unwrap();
        assert_eq!(EmbedHeadModel::<f32>::load(&path).unwrap(), model);
    }

    #[test]
    fn dev_mae_tracked_per_epoch() {
        let corpus = generate_corpus(&SynthConfig::new(2, 20, 3, 6)).unwrap().corpus;
        let encoder = Encoder::from_spec(ProviderSpec::mock("m", 16, 0)).unwrap();
        let train = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let (_, trace) = embedhead_train::<f32>(&corpus, &encoder, &EmbedHeadConfig::default(), &train, None).unwrap();
        assert_eq!(trace.epoch_loss.len(), 3);
        assert_eq!(trace.dev_mae.len(), 3);
    }
}
