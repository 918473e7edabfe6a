//! Synthetic speech-like corpora with hidden alignments, their on-disk
//! format, and padded batching.

mod batch;
mod format;
mod gen;

pub use batch::{batch, pad_batch, PaddedBatch};
pub use format::{load_dataset, save_dataset, Manifest, ManifestEntry, FEATURES_FILE, MANIFEST_FILE};
pub use gen::{generate, generate_split, Dataset, GenSpec, Split, Utterance};
