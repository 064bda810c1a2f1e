//! Embedding datasets, synthetic generators and model persistence.

mod dataset;
mod model_io;
mod synth;

pub use dataset::{load_dataset, save_dataset, EmbeddingDataset, Record};
pub use model_io::{load_model, model_from_json, model_to_json, save_model};
pub use synth::{generate_synthetic, Generator, SynthSpec};
