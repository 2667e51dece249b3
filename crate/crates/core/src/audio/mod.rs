//! Audio pipeline: PCM source, MFCC and prosody features, tree-ensemble
//! sentiment, tokenizer and speech adapter seams.

pub mod adapters;
pub mod chunk;
pub mod dsp;
pub mod model;
pub mod nodes;
pub mod synth;
pub mod tokenize;
pub mod trainer;

pub use chunk::{chunk_signal, AudioChunk};
pub use dsp::{extract_features, FeatureError, FeatureVector};
pub use model::{bundled_model, ModelError, Prediction, TreeEnsemble, LABELS};
pub use tokenize::tokenize;
pub use trainer::{train_forest, TrainConfig};
