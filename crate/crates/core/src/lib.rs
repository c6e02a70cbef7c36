//! Per-annotator toxicity rating prediction.
//!
//! Predictors see a target text together with optional annotator context
//! (rating history, survey responses, demographics). Three predictor families
//! share the corpus, context rendering and embedding layers: a
//! collaborative-filtering head ([`ncf`]), an embedding classifier
//! ([`embed_head`]) and chat-model prompting ([`icl`]). [`demographics`]
//! imputes missing demographics and [`harness`] runs ablation matrices.
//!
//! Trainable components are generic over [`Scalar`]; the aliases below fix
//! the common choices.

pub mod context;
pub mod corpus;
pub mod demographics;
pub mod embed_head;
pub mod encoder;
mod error;
pub mod harness;
pub mod icl;
pub mod ncf;
pub mod neural;
pub mod scalar;
mod transport;

pub use error::ModelError;
pub use scalar::Scalar;

pub type DenseNet32 = neural::DenseNet<f32>;
pub type DenseNet64 = neural::DenseNet<f64>;
pub type NcfModel32 = ncf::NcfModel<f32>;
pub type NcfModel64 = ncf::NcfModel<f64>;
pub type EmbedHead32 = embed_head::EmbedHeadModel<f32>;
pub type EmbedHead64 = embed_head::EmbedHeadModel<f64>;
