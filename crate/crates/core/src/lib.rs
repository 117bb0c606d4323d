//! Sample selection for video quality assessment.
//!
//! Given frame-level embeddings, a base quality model's predictions and
//! (where available) mean opinion scores, this crate
//!
//! * trains a pairwise failure predictor that scores how likely a video is to
//!   trip up the base model ([`ranker`]),
//! * greedily picks a labeling-budget subset that is both hard and varied in
//!   content ([`selection`], [`diversity`]),
//! * and evaluates selections with correlation metrics, a simulated
//!   fine-tuning loop ([`bench`]) and a gMAD competition ([`gmad`]).

pub mod bench;
pub mod diversity;
pub mod error;
pub mod gmad;
pub mod metrics;
pub mod ranker;
pub mod rng;
pub mod selection;
pub mod store;

pub use error::{Error, Result};
pub use store::{load_feature_store, FeatureStore, Pooling, ScoreMap, ScoreTable, VideoRecord};
