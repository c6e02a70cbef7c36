//! Collaborative-filtering head.
//!
//! Each annotator owns a trainable vector. A record's frozen text embedding
//! is fused with its annotator's vector and passed through a four-layer
//! dense head ending in five rating logits. Text embeddings come from an
//! [`Encoder`] and are never written back.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::context::{render_records, AblationSpec, ContextOptions, PredictedDemographics};
use crate::corpus::{AnnotatorId, Corpus, Demographics, AnnotatorProfile, Rating, RatingRecord, Split, DEFAULT_HISTORY_CAP, NUM_RATINGS};
use crate::encoder::{Encoder, ProviderSpec};
use crate::error::ModelError;
use crate::neural::{
    decode_rating, Activation, Checkpoint, DecodeMode, DenseNet, LossTrace, NeuralError, Optimizer, TrainConfig,
};
use crate::scalar::Scalar;

type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Supported annotator embedding sizes.
pub const EMBEDDING_DIM_PRESETS: [usize; 3] = [8, 512, 768];
pub const DEFAULT_EMBEDDING_DIM: usize = 768;
pub const DEFAULT_HIDDEN: [usize; 3] = [512, 256, 64];

const PROJECTION_GROUP: u64 = 1 << 31;
const TABLE_GROUP_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `[text, annotator]`.
    Concatenate,
    /// `[text, <P text, annotator>]`; `P` is learned and present only when the
    /// text and annotator widths differ.
    DotProduct,
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "concat" | "concatenate" => Ok(FusionMode::Concatenate),
            "dot" | "dot_product" => Ok(FusionMode::DotProduct),
            other => Err(format!("unknown fusion mode '{other}' (expected concat or dot)")),
        }
    }
}

impl FusionMode {
    pub fn fused_dim(self, text_dim: usize, embedding_dim: usize) -> usize {
        match self {
            FusionMode::Concatenate => text_dim + embedding_dim,
            FusionMode::DotProduct => text_dim + 1,
        }
    }
}

/// Per-annotator trainable vectors, stored in annotator-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorTable<T> {
    dim: usize,
    init_seed: u64,
    index: BTreeMap<AnnotatorId, usize>,
    vectors: Vec<Array1<T>>,
}

impl<T: Scalar> AnnotatorTable<T> {
    /// Standard-normal entries scaled by `1/sqrt(dim)`; a pure function of
    /// `(init_seed, id, dim)`.
    pub fn initial_vector(id: &AnnotatorId, dim: usize, init_seed: u64) -> Array1<T> {
        let mut h = Sha256::new();
        h.update(init_seed.to_le_bytes());
        h.update(id.as_str().as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&h.finalize());
        let mut rng = ChaCha8Rng::from_seed(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        Array1::from_shape_simple_fn(dim, || {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z * scale)
        })
    }

    pub fn new<'a>(ids: impl IntoIterator<Item = &'a AnnotatorId>, dim: usize, init_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(ModelError::Config("embedding dimension must be positive".into()));
        }
        let mut index = BTreeMap::new();
        for id in ids {
            index.entry(id.clone()).or_insert(0);
        }
        let mut vectors = Vec::with_capacity(index.len());
        for (i, (id, slot)) in index.iter_mut().enumerate() {
            *slot = i;
            vectors.push(Self::initial_vector(id, dim, init_seed));
        }
        Ok(Self {
            dim,
            init_seed,
            index,
            vectors,
        })
    }

    /// Builds a table from explicit vectors, which must share one width.
    pub fn from_vectors(vectors: BTreeMap<AnnotatorId, Vec<T>>, init_seed: u64) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        if dim == 0 {
            return Err(ModelError::Config("table vectors must be non-empty".into()));
        }
        let mut index = BTreeMap::new();
        let mut stored = Vec::with_capacity(vectors.len());
        for (i, (id, v)) in vectors.into_iter().enumerate() {
            if v.len() != dim {
                return Err(ModelError::Config(format!("vector for '{id}' has width {}, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Config(format!("vector for '{id}' is not finite")));
            }
            index.insert(id, i);
            stored.push(Array1::from(v));
        }
        Ok(Self {
            dim,
            init_seed,
            index,
            vectors: stored,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &AnnotatorId> {
        self.index.keys()
    }

    pub fn position(&self, id: &AnnotatorId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &AnnotatorId) -> Option<ArrayView1<'_, T>> {
        self.position(id).map(|i| self.vectors[i].view())
    }

    pub fn vector_at(&self, position: usize) -> ArrayView1<'_, T> {
        self.vectors[position].view()
    }

    /// Element-wise mean of all stored vectors.
    pub fn cold_start_vector(&self) -> Result<Array1<T>> {
        if self.vectors.is_empty() {
            return Err(ModelError::Config("cold start needs a non-empty annotator table".into()));
        }
        let mut sum = Array1::<f64>::zeros(self.dim);
        for v in &self.vectors {
            sum.zip_mut_with(v, |s, &x| *s += x.as_f64());
        }
        let n = self.vectors.len() as f64;
        Ok(sum.mapv(|s| T::lit(s / n)))
    }

    pub fn all_finite(&self) -> bool {
        self.vectors.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_map(&self) -> BTreeMap<AnnotatorId, Vec<T>> {
        self.index
            .iter()
            .map(|(id, &i)| (id.clone(), self.vectors[i].to_vec()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NcfConfig {
    pub embedding_dim: usize,
    pub fusion: FusionMode,
    /// Widths of the three hidden layers; the fourth layer emits the logits.
    pub hidden: [usize; 3],
    /// Context rendered into the text side. Text-only by default.
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    /// Unknown annotators use the table mean instead of failing.
    pub cold_start: bool,
    pub init_seed: u64,
    pub history_cap: usize,
}

impl Default for NcfConfig {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            fusion: FusionMode::Concatenate,
            hidden: DEFAULT_HIDDEN,
            ablation: AblationSpec::TEXT_ONLY,
            decode: DecodeMode::Argmax,
            cold_start: true,
            init_seed: 0,
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcfModel<T> {
    pub table: AnnotatorTable<T>,
    pub fusion: FusionMode,
    /// `embedding_dim x text_dim`, dot fusion with unequal widths only.
    pub projection: Option<Array2<T>>,
    pub head: DenseNet<T>,
    pub provider: ProviderSpec,
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    pub cold_start: bool,
    pub history_cap: usize,
}

/// Head widths `[fused, h1, h2, h3, 5]`.
pub fn ncf_head_dims(text_dim: usize, embedding_dim: usize, fusion: FusionMode, hidden: [usize; 3]) -> Vec<usize> {
    let mut dims = vec![fusion.fused_dim(text_dim, embedding_dim)];
    dims.extend(hidden);
    dims.push(NUM_RATINGS);
    dims
}

impl<T: Scalar> NcfModel<T> {
    /// A randomly initialized model with one table row per id in `annotators`.
    pub fn new<'a>(
        cfg: &NcfConfig,
        provider: ProviderSpec,
        annotators: impl IntoIterator<Item = &'a AnnotatorId>,
        seed: u64,
    ) -> Result<Self> {
        cfg.ablation.validate()?;
        let text_dim = provider.dimension;
        let table = AnnotatorTable::new(annotators, cfg.embedding_dim, cfg.init_seed)?;
        let head = DenseNet::new(&ncf_head_dims(text_dim, cfg.embedding_dim, cfg.fusion, cfg.hidden), Activation::Relu, seed)?;
        let projection = (cfg.fusion == FusionMode::DotProduct && text_dim != cfg.embedding_dim).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5052_4f4a);
            let bound = 1.0 / (text_dim as f64).sqrt();
            Array2::from_shape_simple_fn((cfg.embedding_dim, text_dim), || T::lit(rng.random_range(-bound..bound)))
        });
        let model = Self {
            table,
            fusion: cfg.fusion,
            projection,
            head,
            provider,
            ablation: cfg.ablation,
            decode: cfg.decode,
            cold_start: cfg.cold_start,
            history_cap: cfg.history_cap,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let text_dim = self.provider.dimension;
        let expected = self.fusion.fused_dim(text_dim, self.table.dim());
        if self.head.input_dim() != expected {
            return Err(ModelError::Config(format!(
                "head input width {} does not match fused width {expected}",
                self.head.input_dim()
            )));
        }
        if self.head.layers().len() != 4 || self.head.output_dim() != NUM_RATINGS {
            return Err(ModelError::Config(format!("expected a 4-layer head ending in {NUM_RATINGS}, got {:?}", self.head.dims())));
        }
        let needs_projection = self.fusion == FusionMode::DotProduct && text_dim != self.table.dim();
        match &self.projection {
            Some(p) if !needs_projection || p.dim() != (self.table.dim(), text_dim) => {
                Err(ModelError::Config("projection shape does not match the fusion widths".into()))
            }
            None if needs_projection => Err(ModelError::Config("dot fusion with unequal widths needs a projection".into())),
            _ => Ok(()),
        }
    }

    pub fn text_dim(&self) -> usize {
        self.provider.dimension
    }

    pub fn context_options(&self) -> ContextOptions {
        ContextOptions {
            history_cap: self.history_cap,
        }
    }

    /// The annotator's vector, or the table mean under cold start.
    pub fn annotator_vector(&self, id: &AnnotatorId) -> Result<Array1<T>> {
        match self.table.get(id) {
            Some(v) => Ok(v.to_owned()),
            None if self.cold_start => self.table.cold_start_vector(),
            None => Err(ModelError::UnknownAnnotator(id.clone())),
        }
    }

    fn project(&self, text: ArrayView1<T>) -> Array1<T> {
        match &self.projection {
            Some(p) => p.dot(&text),
            None => text.to_owned(),
        }
    }

    /// The head input for one (text embedding, annotator vector) pair.
    pub fn fuse(&self, text: ArrayView1<T>, annotator: ArrayView1<T>) -> Array1<T> {
        let mut out = Array1::zeros(self.fusion.fused_dim(text.len(), annotator.len()));
        out.slice_mut(s![..text.len()]).assign(&text);
        match self.fusion {
            FusionMode::Concatenate => out.slice_mut(s![text.len()..]).assign(&annotator),
            FusionMode::DotProduct => out[text.len()] = self.project(text).dot(&annotator),
        }
        out
    }

    fn fuse_rows(&self, texts: ArrayView2<T>, annotators: &[Array1<T>]) -> Array2<T> {
        let mut x = Array2::zeros((texts.nrows(), self.head.input_dim()));
        for (i, (mut row, a)) in x.rows_mut().into_iter().zip(annotators).enumerate() {
            row.assign(&self.fuse(texts.row(i), a.view()));
        }
        x
    }

    /// Prediction from an already embedded text.
    pub fn predict_embedded(&self, text: &[T], annotator: &AnnotatorId) -> Result<Rating> {
        if text.len() != self.text_dim() {
            return Err(NeuralError::Shape(format!("text embedding has width {}, expected {}", text.len(), self.text_dim())).into());
        }
        let a = self.annotator_vector(annotator)?;
        let fused = self.fuse(ArrayView1::from(text), a.view());
        let logits = self.head.forward(fused.as_slice().expect("contiguous"))?;
        Ok(decode_rating(&logits, self.decode)?)
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

    pub fn ncf_predict(
        &self,
        encoder: &Encoder,
        record: &RatingRecord,
        profile: &AnnotatorProfile,
        predicted: Option<&Demographics>,
    ) -> Result<Rating> {
        self.check_encoder(encoder)?;
        let ctx = crate::context::render_context(record, profile, &self.ablation, predicted, &self.context_options())?;
        let e = encoder.embed(&ctx.joined)?;
        let text: Vec<T> = e.values.iter().map(|&v| T::lit(v)).collect();
        self.predict_embedded(&text, &record.annotator_id)
    }

    /// Batch prediction in record order.
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
        let texts = embed_records(encoder, corpus, records, &self.ablation, predicted, &self.context_options())?;
        let annotators = records
            .iter()
            .map(|r| self.annotator_vector(&r.annotator_id))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.head.forward_batch(self.fuse_rows(texts.view(), &annotators).view())?;
        logits
            .rows()
            .into_iter()
            .map(|row| Ok(decode_rating(&row.to_vec(), self.decode)?))
            .collect()
    }

    /// One optimizer step on a batch. `positions` index table rows; only
    /// those rows, the projection and the head are updated.
    pub fn train_step(
        &mut self,
        optimizer: &mut Optimizer<T>,
        texts: ArrayView2<T>,
        positions: &[usize],
        labels: &[usize],
    ) -> Result<T> {
        let annotators: Vec<Array1<T>> = positions.iter().map(|&p| self.table.vectors[p].clone()).collect();
        let x = self.fuse_rows(texts, &annotators);
        let lg = self.head.loss_and_grad(x.view(), labels)?;
        let text_dim = self.text_dim();

        let mut table_grads: HashMap<usize, Array1<T>> = HashMap::new();
        let mut projection_grad = self.projection.as_ref().map(|p| Array2::<T>::zeros(p.raw_dim()));
        for (i, &p) in positions.iter().enumerate() {
            let g_row = lg.input_grad.row(i);
            let grad = table_grads.entry(p).or_insert_with(|| Array1::zeros(self.table.dim));
            match self.fusion {
                FusionMode::Concatenate => *grad += &g_row.slice(s![text_dim..]),
                FusionMode::DotProduct => {
                    let g_s = g_row[text_dim];
                    let text = texts.row(i);
                    grad.scaled_add(g_s, &self.project(text));
                    if let Some(pg) = projection_grad.as_mut() {
                        let a = annotators[i].view().insert_axis(Axis(1));
                        let e = text.insert_axis(Axis(0));
                        pg.scaled_add(g_s, &a.dot(&e));
                    }
                }
            }
        }

        optimizer.step_net(0, &mut self.head, &lg.grads);
        if let (Some(p), Some(g)) = (self.projection.as_mut(), projection_grad) {
            optimizer.step(PROJECTION_GROUP, p.as_slice_mut().expect("standard layout"), g.as_slice().expect("standard layout"));
        }
        let mut touched: Vec<_> = table_grads.into_iter().collect();
        touched.sort_unstable_by_key(|(p, _)| *p);
        for (p, g) in touched {
            let v = self.table.vectors[p].as_slice_mut().expect("contiguous");
            optimizer.step(TABLE_GROUP_BASE + p as u64, v, g.as_slice().expect("contiguous"));
        }
        Ok(lg.loss)
    }

    fn all_finite(&self) -> bool {
        self.head.all_finite()
            && self.table.all_finite()
            && self.projection.as_ref().is_none_or(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint<NcfExtra> {
        let extra = NcfExtra {
            table: self
                .table
                .to_map()
                .into_iter()
                .map(|(id, v)| (id, v.into_iter().map(Scalar::as_f64).collect()))
                .collect(),
            init_seed: self.table.init_seed(),
            fusion: self.fusion,
            projection: self.projection.as_ref().map(|p| p.iter().map(|v| v.as_f64()).collect()),
            provider: self.provider.clone(),
            ablation: self.ablation,
            decode: self.decode,
            cold_start: self.cold_start,
            history_cap: self.history_cap,
        };
        Checkpoint::new(NCF_CHECKPOINT_KIND, &self.head, config, extra)
    }

    pub fn from_checkpoint(cp: &Checkpoint<NcfExtra>) -> Result<Self> {
        let head = cp.net.restore::<T>()?;
        let x = &cp.extra;
        let vectors = x
            .table
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().map(|&f| T::lit(f)).collect()))
            .collect();
        let table = AnnotatorTable::from_vectors(vectors, x.init_seed)?;
        let projection = match &x.projection {
            Some(values) => Some(
                Array2::from_shape_vec((table.dim(), x.provider.dimension), values.iter().map(|&f| T::lit(f)).collect())
                    .map_err(|e| ModelError::Config(format!("projection: {e}")))?,
            ),
            None => None,
        };
        let model = Self {
            table,
            fusion: x.fusion,
            projection,
            head,
            provider: x.provider.clone(),
            ablation: x.ablation,
            decode: x.decode,
            cold_start: x.cold_start,
            history_cap: x.history_cap,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path, config: &TrainConfig) -> Result<()> {
        Ok(self.to_checkpoint(config).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, NCF_CHECKPOINT_KIND)?)
    }
}

pub const NCF_CHECKPOINT_KIND: &str = "ncf";

/// Model-specific checkpoint payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcfExtra {
    pub table: BTreeMap<AnnotatorId, Vec<f64>>,
    pub init_seed: u64,
    pub fusion: FusionMode,
    /// Row-major `embedding_dim x text_dim`.
    pub projection: Option<Vec<f64>>,
    pub provider: ProviderSpec,
    pub ablation: AblationSpec,
    pub decode: DecodeMode,
    pub cold_start: bool,
    pub history_cap: usize,
}

/// Renders and embeds records, one row per record.
pub(crate) fn embed_records<T: Scalar>(
    encoder: &Encoder,
    corpus: &Corpus,
    records: &[&RatingRecord],
    ablation: &AblationSpec,
    predicted: Option<&PredictedDemographics>,
    options: &ContextOptions,
) -> Result<Array2<T>> {
    let contexts = render_records(corpus, records.iter().copied(), ablation, predicted, options)?;
    let joined: Vec<&str> = contexts.iter().map(|c| c.joined.as_str()).collect();
    let vectors = encoder.embed_batch(&joined)?;
    let dim = encoder.dimension();
    let mut out = Array2::zeros((records.len(), dim));
    for (mut row, v) in out.rows_mut().into_iter().zip(&vectors) {
        if v.values.len() != dim {
            return Err(ModelError::Config(format!("provider returned width {}, expected {dim}", v.values.len())));
        }
        row.iter_mut().zip(&v.values).for_each(|(r, &x)| *r = T::lit(x));
    }
    Ok(out)
}

/// Trains a model on the train split. `on_epoch` receives the model after
/// each epoch with that epoch's mean loss.
pub fn ncf_train_with<T: Scalar>(
    corpus: &Corpus,
    encoder: &Encoder,
    cfg: &NcfConfig,
    train: &TrainConfig,
    predicted: Option<&PredictedDemographics>,
    mut on_epoch: impl FnMut(usize, &NcfModel<T>, f64),
) -> Result<(NcfModel<T>, LossTrace)> {
    train.validate()?;
    let records: Vec<&RatingRecord> = corpus.records_in(Split::Train).collect();
    if records.is_empty() {
        return Err(ModelError::EmptySplit(Split::Train));
    }
    let mut model = NcfModel::<T>::new(
        cfg,
        encoder.spec().clone(),
        records.iter().map(|r| &r.annotator_id),
        train.seed,
    )?;
    let texts = embed_records::<T>(encoder, corpus, &records, &cfg.ablation, predicted, &model.context_options())?;
    let positions: Vec<usize> = records
        .iter()
        .map(|r| model.table.position(&r.annotator_id).expect("table built from these records"))
        .collect();
    let labels: Vec<usize> = records.iter().map(|r| r.rating.index()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut optimizer = Optimizer::new(train);
    let mut trace = LossTrace::default();
    for epoch in 0..train.epochs {
        let mut total = 0.0;
        for batch in crate::neural::epoch_batches(&mut rng, records.len(), train.batch_size) {
            let x = texts.select(Axis(0), &batch);
            let p: Vec<usize> = batch.iter().map(|&i| positions[i]).collect();
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = model.train_step(&mut optimizer, x.view(), &p, &y)?.as_f64();
            if !loss.is_finite() {
                return Err(NeuralError::Diverged { epoch }.into());
            }
            total += loss * batch.len() as f64;
        }
        if !model.all_finite() {
            return Err(NeuralError::Diverged { epoch }.into());
        }
        let mean = total / records.len() as f64;
        trace.epoch_loss.push(mean);
        log::debug!("ncf epoch {epoch}: loss {mean:.4}");
        on_epoch(epoch, &model, mean);
    }
    Ok((model, trace))
}

pub fn ncf_train<T: Scalar>(
    corpus: &Corpus,
    encoder: &Encoder,
    cfg: &NcfConfig,
    train: &TrainConfig,
    predicted: Option<&PredictedDemographics>,
) -> Result<(NcfModel<T>, LossTrace)> {
    ncf_train_with(corpus, encoder, cfg, train, predicted, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, SynthConfig};
    use crate::neural::DenseLayer;

    fn ids(names: &[&str]) -> Vec<AnnotatorId> {
        names.iter().map(|n| AnnotatorId::from(*n)).collect()
    }

    fn small_cfg(dim: usize, fusion: FusionMode) -> NcfConfig {
        NcfConfig {
            embedding_dim: dim,
            fusion,
            hidden: [16, 12, 8],
            ..Default::default()
        }
    }

    #[test]
    fn table_is_seed_deterministic() {
        let a = AnnotatorTable::<f64>::new(&ids(&["x", "y"]), 16, 3).unwrap();
        let b = AnnotatorTable::<f64>::new(&ids(&["y", "x"]), 16, 3).unwrap();
        let c = AnnotatorTable::<f64>::new(&ids(&["x", "y"]), 16, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.to_map(), c.to_map());
    }

    #[test]
    fn cold_start_single_and_symmetric() {
        let one = AnnotatorTable::<f64>::new(&ids(&["solo"]), 8, 1).unwrap();
        assert_eq!(one.cold_start_vector().unwrap(), one.get(&"solo".into()).unwrap());

        let v = vec![0.5, -1.0, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let sym = AnnotatorTable::from_vectors(BTreeMap::from([("a".into(), v), ("b".into(), neg)]), 0).unwrap();
        assert_eq!(sym.cold_start_vector().unwrap().to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn cold_start_mean_of_three() {
        let table = AnnotatorTable::from_vectors(
            BTreeMap::from([
                ("a".into(), vec![1.0, 2.0]),
                ("b".into(), vec![4.0, -2.0]),
                ("c".into(), vec![1.0, 9.0]),
            ]),
            0,
        )
        .unwrap();
        assert_eq!(table.cold_start_vector().unwrap().to_vec(), vec![2.0, 3.0]);
    }

    #[test]
    fn empty_table_has_no_cold_start() {
        let t = AnnotatorTable::<f64>::new(&[], 4, 0).unwrap();
        assert!(t.cold_start_vector().is_err());
    }

    #[test]
    fn fused_widths() {
        let spec = ProviderSpec::mock("m", 10, 0);
        let concat = NcfModel::<f64>::new(&small_cfg(6, FusionMode::Concatenate), spec.clone(), &ids(&["a"]), 0).unwrap();
        assert_eq!(concat.head.input_dim(), 16);
        assert!(concat.projection.is_none());
        let dot = NcfModel::<f64>::new(&small_cfg(6, FusionMode::DotProduct), spec.clone(), &ids(&["a"]), 0).unwrap();
        assert_eq!(dot.head.input_dim(), 11);
        assert_eq!(dot.projection.as_ref().unwrap().dim(), (6, 10));
        let same = NcfModel::<f64>::new(&small_cfg(10, FusionMode::DotProduct), spec, &ids(&["a"]), 0).unwrap();
        assert!(same.projection.is_none());
        let text = Array1::from_vec((0..10).map(|i| i as f64).collect());
        let a = same.table.get(&"a".into()).unwrap();
        let fused = same.fuse(text.view(), a);
        assert_eq!(fused.len(), 11);
        assert!((fused[10] - text.dot(&a)).abs() < 1e-12);
    }

    #[test]
    fn zero_head_predicts_bias_decode_for_everyone() {
        let spec = ProviderSpec::mock("m", 4, 0);
        let mut model = NcfModel::<f64>::new(&small_cfg(3, FusionMode::Concatenate), spec, &ids(&["a", "b"]), 0).unwrap();
        let dims = model.head.dims();
        let mut layers: Vec<DenseLayer<f64>> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::zeros(w[0], w[1], if i + 1 < dims.len() - 1 { Activation::Relu } else { Activation::Identity }))
            .collect();
        layers.last_mut().unwrap().bias = Array1::from_vec(vec![0.0, 0.0, 0.0, 5.0, 0.0]);
        model.head = DenseNet::from_layers(layers).unwrap();
        for id in ["a", "b", "stranger"] {
            assert_eq!(model.predict_embedded(&[0.3, -1.0, 2.0, 0.1], &id.into()).unwrap(), Rating::from_index(3));
        }
    }

    #[test]
    fn unknown_annotator_without_cold_start_fails() {
        let cfg = NcfConfig {
            cold_start: false,
            ..small_cfg(3, FusionMode::Concatenate)
        };
        let model = NcfModel::<f64>::new(&cfg, ProviderSpec::mock("m", 4, 0), &ids(&["a"]), 0).unwrap();
        assert!(matches!(
            model.predict_embedded(&[0.0; 4], &"z".into()),
            Err(ModelError::UnknownAnnotator(_))
        ));
    }

    #[test]
    fn identical_vectors_identical_predictions() {
        let v = vec![0.2, -0.4, 0.9];
        let mut model =
            NcfModel::<f64>::new(&small_cfg(3, FusionMode::Concatenate), ProviderSpec::mock("m", 4, 0), &ids(&["a", "b"]), 5)
                .unwrap();
        model.table = AnnotatorTable::from_vectors(BTreeMap::from([("a".into(), v.clone()), ("b".into(), v)]), 0).unwrap();
        let text = [0.5, 0.1, -0.3, 0.8];
        assert_eq!(
            model.predict_embedded(&text, &"a".into()).unwrap(),
            model.predict_embedded(&text, &"b".into()).unwrap()
        );
    }

    #[test]
    fn one_step_moves_only_the_batch_annotator() {
        for fusion in [FusionMode::Concatenate, FusionMode::DotProduct] {
            let mut model =
                NcfModel::<f64>::new(&small_cfg(5, fusion), ProviderSpec::mock("m", 7, 0), &ids(&["a", "b", "c"]), 2).unwrap();
            let before = model.table.clone();
            let mut opt = Optimizer::new(&TrainConfig::default());
            let text = Array2::from_shape_fn((1, 7), |(_, j)| (j as f64 * 0.3).sin());
            let b = model.table.position(&"b".into()).unwrap();
            model.train_step(&mut opt, text.view(), &[b], &[4]).unwrap();
            assert_ne!(model.table.get(&"b".into()), before.get(&"b".into()), "{fusion:?}");
            assert_eq!(model.table.get(&"a".into()), before.get(&"a".into()));
            assert_eq!(model.table.get(&"c".into()), before.get(&"c".into()));
        }
    }

    #[test]
    fn annotator_gradient_matches_finite_differences() {
        for fusion in [FusionMode::Concatenate, FusionMode::DotProduct] {
            let model = NcfModel::<f64>::new(&small_cfg(4, fusion), ProviderSpec::mock("m", 6, 0), &ids(&["a"]), 3).unwrap();
            let text = Array1::from_shape_fn(6, |j| (j as f64 * 0.7).cos());
            let a = model.table.vector_at(0).to_owned();
            let loss = |a: &Array1<f64>| {
                let x = model.fuse(text.view(), a.view()).insert_axis(Axis(0));
                model.head.loss(x.view(), &[2]).unwrap()
            };
            let x = model.fuse(text.view(), a.view()).insert_axis(Axis(0));
            let g_in = model.head.loss_and_grad(x.view(), &[2]).unwrap().input_grad;
            let analytic: Array1<f64> = match fusion {
                FusionMode::Concatenate => g_in.row(0).slice(s![6..]).to_owned(),
                FusionMode::DotProduct => model.project(text.view()) * g_in[[0, 6]],
            };
            for k in 0..4 {
                let mut plus = a.clone();
                plus[k] += 1e-5;
                let mut minus = a.clone();
                minus[k] -= 1e-5;
                let numeric = (loss(&plus) - loss(&minus)) / 2e-5;
                assert!((numeric - analytic[k]).abs() < 1e-6, "{fusion:?} {k}: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn epochs_zero_matches_fresh_model_and_checkpoint_round_trips() {
        let corpus = generate_corpus(&SynthConfig::new(3, 6, 3, 3)).unwrap().corpus;
        let encoder = Encoder::from_spec(ProviderSpec::mock("m", 8, 1)).unwrap();
        let cfg = small_cfg(4, FusionMode::DotProduct);
        let train = TrainConfig {
            epochs: 0,
            seed: 5,
            ..Default::default()
        };
        let (model, trace) = ncf_train::<f64>(&corpus, &encoder, &cfg, &train, None).unwrap();
        assert!(trace.epoch_loss.is_empty());
        let fresh = NcfModel::<f64>::new(
            &cfg,
            encoder.spec().clone(),
            corpus.records_in(Split::Train).map(|r| &r.annotator_id),
            5,
        )
        .unwrap();
        assert_eq!(model, fresh);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ncf.json");
        model.save(&path, &train).unwrap();
        assert_eq!(NcfModel::<f64>::load(&path).unwrap(), model);
    }

    #[test]
    fn training_lowers_loss() {
        let corpus = generate_corpus(&SynthConfig::new(7, 20, 3, 6)).unwrap().corpus;
        let encoder = Encoder::from_spec(ProviderSpec::mock("m", 16, 1)).unwrap();
        let train = TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let (_, trace) = ncf_train::<f32>(&corpus, &encoder, &small_cfg(8, FusionMode::Concatenate), &train, None).unwrap();
        assert!(trace.epoch_loss.last().unwrap() < &trace.epoch_loss[0]);
    }
}
